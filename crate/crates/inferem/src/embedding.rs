//! Token-sequence embedding: word + positional + state lookups, plus concept
//! attachment for knowledge-enriched encoding.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Parameter, Result, Tensor, TensorError};
use crate::corpus::{KnowledgeBase, Role, Vocabulary};
use crate::layers::uniform_values;

/// Word, positional and state (speaker/listener) embedding tables, all with
/// the same feature dimension.
pub struct EmbeddingTables {
    pub word: Parameter,
    pub positional: Parameter,
    pub state: Parameter,
    dim: usize,
    max_len: usize,
}

/// Concept neighbors of one position: embeddings stacked `(k, dim)` with
/// their relatedness scores.
pub struct ConceptNeighbors {
    pub embeddings: Tensor,
    pub scores: Vec<f64>,
}

/// A base embedding matrix with per-position concept neighbors and emotion
/// intensity values.
pub struct EnrichedSequence {
    pub base: Tensor,
    pub concepts: Vec<Option<ConceptNeighbors>>,
    pub eta: Vec<f64>,
}

impl EnrichedSequence {
    /// Wrap an already-embedded sequence with no knowledge attached.
    pub fn bare(base: Tensor) -> EnrichedSequence {
        let q = base.rows();
        EnrichedSequence {
            base,
            concepts: (0..q).map(|_| None).collect(),
            eta: vec![0.0; q],
        }
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }
}

impl EmbeddingTables {
    /// Fresh tables, uniform(-0.1, 0.1) initialized from the seed.
    pub fn new(vocab_size: usize, dim: usize, max_len: usize, seed: u64) -> EmbeddingTables {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = |name: &str, rows: usize| {
            Parameter::new(
                name,
                Tensor::from_shape(vec![rows, dim], uniform_values(&mut rng, rows * dim, 0.1))
                    .expect("static shape"),
            )
        };
        EmbeddingTables {
            word: table("embed.word", vocab_size),
            positional: table("embed.pos", max_len),
            state: table("embed.state", 2),
            dim,
            max_len,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn vocab_size(&self) -> usize {
        self.word.tensor().rows()
    }

    /// Elementwise sum of word, positional and state lookups: a `(q, dim)`
    /// matrix for `q` tokens.
    pub fn embed_sequence(&self, tokens: &[usize], roles: &[Role]) -> Result<Tensor> {
        if tokens.is_empty() {
            return Err(TensorError::InvalidInput {
                op: "embed_sequence",
                reason: "empty token sequence".into(),
            });
        }
        if tokens.len() != roles.len() {
            return Err(TensorError::InvalidInput {
                op: "embed_sequence",
                reason: format!("{} tokens but {} roles", tokens.len(), roles.len()),
            });
        }
        if tokens.len() > self.max_len {
            return Err(TensorError::InvalidInput {
                op: "embed_sequence",
                reason: format!("sequence length {} exceeds max_len {}", tokens.len(), self.max_len),
            });
        }
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let states: Vec<usize> = roles.iter().map(|r| r.state_id()).collect();
        let w = Tensor::embedding_lookup(self.word.tensor(), tokens)?;
        let p = Tensor::embedding_lookup(self.positional.tensor(), &positions)?;
        let s = Tensor::embedding_lookup(self.state.tensor(), &states)?;
        w.add(&p)?.add(&s)
    }

    /// Word-table rows only (no position/state), e.g. for decoder targets
    /// or concept tokens.
    pub fn word_rows(&self, tokens: &[usize]) -> Result<Tensor> {
        Tensor::embedding_lookup(self.word.tensor(), tokens)
    }

    /// Embed a sequence and attach emotion concepts and intensity values.
    ///
    /// Concepts come from the knowledge base, are encoded through the same
    /// word table, and keep their relatedness scores. Concepts missing from
    /// the vocabulary are dropped.
    pub fn enrich(
        &self,
        tokens: &[usize],
        roles: &[Role],
        kb: &KnowledgeBase,
        vocab: &Vocabulary,
    ) -> Result<EnrichedSequence> {
        let base = self.embed_sequence(tokens, roles)?;
        let mut concepts = Vec::with_capacity(tokens.len());
        let mut eta = Vec::with_capacity(tokens.len());
        for &tok in tokens {
            let word = vocab.decode(tok);
            eta.push(kb.intensity(word));
            let mut ids = Vec::new();
            let mut scores = Vec::new();
            for (concept, score) in kb.lookup_concepts(word) {
                if vocab.contains(&concept) {
                    ids.push(vocab.encode(&concept));
                    scores.push(score);
                }
            }
            if ids.is_empty() {
                concepts.push(None);
            } else {
                concepts.push(Some(ConceptNeighbors {
                    embeddings: self.word_rows(&ids)?,
                    scores,
                }));
            }
        }
        Ok(EnrichedSequence { base, concepts, eta })
    }

    /// Overwrite word-table rows from a text file of `word v1 ... v_dim`
    /// lines. Returns how many vocabulary words were covered.
    pub fn load_pretrained_vectors(&self, path: &Path, vocab: &Vocabulary) -> Result<usize> {
        let file = File::open(path).map_err(|e| TensorError::InvalidInput {
            op: "load_pretrained_vectors",
            reason: format!("{}: {e}", path.display()),
        })?;
        let mut values = self.word.tensor().values();
        let mut hits = 0usize;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| TensorError::InvalidInput {
                op: "load_pretrained_vectors",
                reason: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap_or("");
            let vector: Vec<f64> = parts.filter_map(|p| p.parse().ok()).collect();
            if vector.len() != self.dim {
                return Err(TensorError::InvalidInput {
                    op: "load_pretrained_vectors",
                    reason: format!(
                        "{}:{}: vector has {} dims, table has {}",
                        path.display(),
                        lineno + 1,
                        vector.len(),
                        self.dim
                    ),
                });
            }
            if vocab.contains(word) {
                let id = vocab.encode(word);
                values[id * self.dim..(id + 1) * self.dim].copy_from_slice(&vector);
                hits += 1;
            }
        }
        self.word.tensor().set_values(&values);
        Ok(hits)
    }

    pub fn collect(&self, out: &mut Vec<Parameter>) {
        out.push(self.word.clone());
        out.push(self.positional.clone());
        out.push(self.state.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn tables(vocab: usize, dim: usize) -> EmbeddingTables {
        EmbeddingTables::new(vocab, dim, 16, 5)
    }

    fn zeroed(t: &Parameter) {
        t.tensor().set_values(&vec![0.0; t.tensor().len()]);
    }

    #[test]
    fn zeroed_position_and_state_leave_word_rows() {
        let tb = tables(10, 4);
        zeroed(&tb.positional);
        zeroed(&tb.state);
        let out = tb
            .embed_sequence(&[3, 7], &[Role::Speaker, Role::Listener])
            .unwrap();
        let expect = tb.word_rows(&[3, 7]).unwrap();
        assert_eq!(out.values(), expect.values());
    }

    #[test]
    fn repeated_token_rows_differ_by_positional_rows() {
        let tb = tables(10, 4);
        let out = tb
            .embed_sequence(&[5, 5], &[Role::Speaker, Role::Speaker])
            .unwrap()
            .values();
        let pos = tb.positional.tensor().values();
        for j in 0..4 {
            let diff = out[4 + j] - out[j];
            let expect = pos[4 + j] - pos[j];
            assert!((diff - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn over_length_sequence_is_rejected() {
        let tb = tables(10, 4);
        let tokens = vec![1usize; 17];
        let roles = vec![Role::Speaker; 17];
        let err = tb.embed_sequence(&tokens, &roles).unwrap_err();
        assert!(err.to_string().contains("max_len"));
    }

    #[test]
    fn word_table_contribution_is_linear() {
        let tb = tables(10, 4);
        zeroed(&tb.positional);
        zeroed(&tb.state);
        let before = tb.embed_sequence(&[2], &[Role::Speaker]).unwrap().values();
        let doubled: Vec<f64> = tb.word.tensor().values().iter().map(|v| v * 2.0).collect();
        tb.word.tensor().set_values(&doubled);
        let after = tb.embed_sequence(&[2], &[Role::Speaker]).unwrap().values();
        for (a, b) in before.iter().zip(&after) {
            assert!((b - 2.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn role_flip_shifts_by_state_row_difference() {
        let tb = tables(10, 4);
        let speaker = tb.embed_sequence(&[1, 2], &[Role::Speaker, Role::Speaker]).unwrap().values();
        let listener = tb.embed_sequence(&[1, 2], &[Role::Listener, Role::Listener]).unwrap().values();
        let state = tb.state.tensor().values();
        for i in 0..2 {
            for j in 0..4 {
                let diff = listener[i * 4 + j] - speaker[i * 4 + j];
                let expect = state[4 + j] - state[j];
                assert!((diff - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_kb_enrichment_is_a_bare_wrapper() {
        let tb = tables(10, 4);
        let kb = KnowledgeBase::empty();
        let vocab = Vocabulary::from_tokens(["hello", "there"]);
        let enriched = tb
            .enrich(&[4, 5], &[Role::Speaker, Role::Speaker], &kb, &vocab)
            .unwrap();
        assert!(enriched.concepts.iter().all(|c| c.is_none()));
        assert_eq!(enriched.eta, vec![0.0, 0.0]);
        let plain = tb.embed_sequence(&[4, 5], &[Role::Speaker, Role::Speaker]).unwrap();
        assert_eq!(enriched.base.values(), plain.values());
    }

    #[test]
    fn neighbor_counts_match_kb_lookups() {
        let mut kb = KnowledgeBase::empty();
        kb.add_concept("sad", "unhappy", 0.9);
        kb.add_concept("sad", "down", 0.6);
        kb.set_intensity("sad", 0.7);
        let mut vocab = Vocabulary::new();
        for t in tokenize("i feel sad unhappy down today") {
            vocab.insert(&t);
        }
        let tb = tables(vocab.len(), 4);
        let tokens = vocab.encode_all(&tokenize("i feel sad today"));
        let roles = vec![Role::Speaker; 4];
        let enriched = tb.enrich(&tokens, &roles, &kb, &vocab).unwrap();
        for (i, tok) in tokens.iter().enumerate() {
            let expect = kb
                .lookup_concepts(vocab.decode(*tok))
                .iter()
                .filter(|(c, _)| vocab.contains(c))
                .count();
            let got = enriched.concepts[i].as_ref().map_or(0, |c| c.scores.len());
            assert_eq!(got, expect, "position {i}");
        }
        assert_eq!(enriched.eta[2], 0.7);
        let sad = enriched.concepts[2].as_ref().unwrap();
        assert_eq!(sad.embeddings.rows(), 2);
        assert_eq!(sad.scores, vec![0.9, 0.6]);
    }

    #[test]
    fn pretrained_vector_hits_count_intersection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.txt");
        std::fs::write(&path, "apple 1 2 3 4\nmissing 9 9 9 9\nbanana 5 6 7 8\n").unwrap();
        let vocab = Vocabulary::from_tokens(["apple", "banana", "cherry"]);
        let tb = tables(vocab.len(), 4);
        let before = tb.word.tensor().values();
        let hits = tb.load_pretrained_vectors(&path, &vocab).unwrap();
        assert_eq!(hits, 2);
        let after = tb.word.tensor().values();
        let apple = vocab.encode("apple");
        assert_eq!(&after[apple * 4..apple * 4 + 4], &[1.0, 2.0, 3.0, 4.0]);
        let cherry = vocab.encode("cherry");
        assert_eq!(
            &after[cherry * 4..cherry * 4 + 4],
            &before[cherry * 4..cherry * 4 + 4]
        );
    }

    #[test]
    fn pretrained_dimension_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.txt");
        std::fs::write(&path, "apple 1 2 3\n").unwrap();
        let vocab = Vocabulary::from_tokens(["apple"]);
        let tb = tables(vocab.len(), 4);
        assert!(tb.load_pretrained_vectors(&path, &vocab).is_err());
    }
}
