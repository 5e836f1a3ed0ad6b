//! Dialogue data model, tokenization, dataset ingestion and knowledge lexicons.

mod knowledge;
mod loader;
mod synthetic;
mod tokenize;

pub use knowledge::KnowledgeBase;
pub use loader::{load_empathetic_dialogues, load_split_csv, DatasetSplits};
pub use synthetic::{generate_synthetic_corpus, write_synthetic_corpus, SyntheticConfig};
pub use tokenize::tokenize;

use std::collections::HashMap;
use std::fmt;

/// Reserved token ids. These never move.
pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

/// Environment variable naming the default data root.
pub const DATA_DIR_ENV: &str = "INFEREM_DATA_DIR";

#[derive(Debug)]
pub enum CorpusError {
    Io(std::io::Error),
    /// A CSV row that cannot be used, with its 1-based line number.
    MalformedRow { path: String, line: u64, reason: String },
    /// Invalid generator or lexicon input.
    Invalid(String),
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusError::Io(e) => write!(f, "io error: {e}"),
            CorpusError::MalformedRow { path, line, reason } => {
                write!(f, "{path}:{line}: malformed row: {reason}")
            }
            CorpusError::Invalid(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CorpusError {}

impl From<std::io::Error> for CorpusError {
    fn from(e: std::io::Error) -> Self {
        CorpusError::Io(e)
    }
}

/// Who uttered a turn. Roles alternate within a dialogue, speaker first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Speaker,
    Listener,
}

impl Role {
    pub fn state_id(self) -> usize {
        match self {
            Role::Speaker => 0,
            Role::Listener => 1,
        }
    }

    fn for_position(i: usize) -> Role {
        if i.is_multiple_of(2) {
            Role::Speaker
        } else {
            Role::Listener
        }
    }
}

/// One turn: a role and a non-empty token sequence.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub role: Role,
    pub tokens: Vec<String>,
}

/// A dialogue history plus the gold response and emotion label.
///
/// `utterances` is the context (the last one being the speaker turn the
/// response reacts to); the gold response is held separately.
#[derive(Debug, Clone)]
pub struct Dialogue {
    pub utterances: Vec<Utterance>,
    pub gold_response: Vec<String>,
    pub emotion_label: usize,
}

impl Dialogue {
    /// Build a dialogue, assigning alternating roles starting at speaker.
    pub fn new(
        turns: Vec<Vec<String>>,
        gold_response: Vec<String>,
        emotion_label: usize,
    ) -> Result<Dialogue, CorpusError> {
        if turns.is_empty() {
            return Err(CorpusError::Invalid("dialogue needs at least one utterance".into()));
        }
        if gold_response.is_empty() {
            return Err(CorpusError::Invalid("gold response must be non-empty".into()));
        }
        let mut utterances = Vec::with_capacity(turns.len());
        for (i, tokens) in turns.into_iter().enumerate() {
            if tokens.is_empty() {
                return Err(CorpusError::Invalid(format!("utterance {i} is empty")));
            }
            utterances.push(Utterance {
                role: Role::for_position(i),
                tokens,
            });
        }
        Ok(Dialogue {
            utterances,
            gold_response,
            emotion_label,
        })
    }

    /// Number of context utterances.
    pub fn history_len(&self) -> usize {
        self.utterances.len()
    }

    /// True when the past-utterance prediction branch can run (needs a
    /// non-empty history before the last utterance).
    pub fn supports_prediction(&self) -> bool {
        self.utterances.len() >= 2
    }

    /// All context tokens in order, with their roles.
    pub fn history_tokens(&self) -> (Vec<&str>, Vec<Role>) {
        let mut toks = Vec::new();
        let mut roles = Vec::new();
        for u in &self.utterances {
            for t in &u.tokens {
                toks.push(t.as_str());
                roles.push(u.role);
            }
        }
        (toks, roles)
    }

    /// Context tokens excluding the last utterance.
    pub fn history_tokens_without_last(&self) -> (Vec<&str>, Vec<Role>) {
        let mut toks = Vec::new();
        let mut roles = Vec::new();
        for u in &self.utterances[..self.utterances.len() - 1] {
            for t in &u.tokens {
                toks.push(t.as_str());
                roles.push(u.role);
            }
        }
        (toks, roles)
    }

    pub fn last_utterance(&self) -> &Utterance {
        self.utterances.last().expect("dialogue is non-empty")
    }

    pub fn second_to_last_utterance(&self) -> Option<&Utterance> {
        let n = self.utterances.len();
        if n >= 2 {
            Some(&self.utterances[n - 2])
        } else {
            None
        }
    }
}

/// Token <-> id bijection with fixed reserved ids.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Vocabulary holding only the reserved tokens.
    pub fn new() -> Vocabulary {
        let mut v = Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        for t in ["<pad>", "<bos>", "<eos>", "<unk>"] {
            v.insert(t);
        }
        debug_assert_eq!(v.id_to_token[PAD], "<pad>");
        debug_assert_eq!(v.id_to_token[UNK], "<unk>");
        v
    }

    /// Insert a token if absent; returns its id either way.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.token_to_id.get(token) {
            return id;
        }
        let id = self.id_to_token.len();
        self.id_to_token.push(token.to_string());
        self.token_to_id.insert(token.to_string(), id);
        id
    }

    /// Build from an iterator of tokens, first-seen order.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Vocabulary {
        let mut v = Vocabulary::new();
        for t in tokens {
            v.insert(t);
        }
        v
    }

    /// Id for a token, UNK when absent.
    pub fn encode(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn encode_all(&self, tokens: &[impl AsRef<str>]) -> Vec<usize> {
        tokens.iter().map(|t| self.encode(t.as_ref())).collect()
    }

    /// Token string for an id.
    pub fn decode(&self, id: usize) -> &str {
        &self.id_to_token[id]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    /// Tokens in id order, for persistence.
    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Write one token per line, id = line index.
    pub fn save(&self, path: &std::path::Path) -> Result<(), CorpusError> {
        let mut out = String::new();
        for t in &self.id_to_token {
            out.push_str(t);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Read a vocabulary saved by `save`. The first four lines must be the
    /// reserved tokens.
    pub fn load(path: &std::path::Path) -> Result<Vocabulary, CorpusError> {
        let text = std::fs::read_to_string(path)?;
        let mut v = Vocabulary::new();
        for (i, line) in text.lines().enumerate() {
            if i < 4 {
                if v.id_to_token[i] != line {
                    return Err(CorpusError::Invalid(format!(
                        "{}: reserved token {i} is `{line}`, expected `{}`",
                        path.display(),
                        v.id_to_token[i]
                    )));
                }
                continue;
            }
            v.insert(line);
        }
        Ok(v)
    }
}

/// Build a vocabulary covering all dialogue tokens plus the concept words
/// the knowledge base can attach to them (concepts outside the vocabulary
/// would be silently dropped during enrichment).
pub fn build_vocabulary(dialogues: &[Dialogue], kb: &KnowledgeBase) -> Vocabulary {
    let mut v = Vocabulary::new();
    for d in dialogues {
        for u in &d.utterances {
            for t in &u.tokens {
                v.insert(t);
            }
        }
        for t in &d.gold_response {
            v.insert(t);
        }
    }
    // second pass so concept insertion order is independent of how concepts
    // interleave with dialogue text
    let words: Vec<String> = v.id_to_token[4..].to_vec();
    for w in words {
        for (concept, _) in kb.lookup_concepts(&w) {
            v.insert(&concept);
        }
    }
    v
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::new();
        assert_eq!(v.encode("<pad>"), PAD);
        assert_eq!(v.encode("<bos>"), BOS);
        assert_eq!(v.encode("<eos>"), EOS);
        assert_eq!(v.encode("<unk>"), UNK);
        assert_eq!(v.encode("anything-else"), UNK);
    }

    #[test]
    fn roles_alternate_starting_at_speaker() {
        let d = Dialogue::new(
            vec![
                vec!["hi".into()],
                vec!["hello".into()],
                vec!["bye".into()],
            ],
            vec!["see".into(), "you".into()],
            0,
        )
        .unwrap();
        assert_eq!(d.utterances[0].role, Role::Speaker);
        assert_eq!(d.utterances[1].role, Role::Listener);
        assert_eq!(d.utterances[2].role, Role::Speaker);
    }

    #[test]
    fn empty_utterance_is_rejected() {
        let err = Dialogue::new(vec![vec![]], vec!["x".into()], 0).unwrap_err();
        assert!(err.to_string().contains("empty"));
    }

    #[test]
    fn encode_decode_round_trip_for_known_tokens() {
        let mut v = Vocabulary::new();
        for t in ["i", "am", "sad", "."] {
            v.insert(t);
        }
        let text = "i am sad .";
        let ids = v.encode_all(&tokenize(text));
        let back: Vec<&str> = ids.iter().map(|&i| v.decode(i)).collect();
        assert_eq!(back.join(" "), text);
    }
}
