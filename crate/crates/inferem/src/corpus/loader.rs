//! Dataset ingestion from EMPATHETICDIALOGUES-layout CSV files.

use std::collections::HashMap;
use std::path::Path;

use super::{tokenize, CorpusError, Dialogue};

/// Train/valid/test dialogue lists with the emotion label table.
#[derive(Debug, Default)]
pub struct DatasetSplits {
    pub train: Vec<Dialogue>,
    pub valid: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
    /// Emotion label names, sorted; `Dialogue::emotion_label` indexes this.
    pub emotion_names: Vec<String>,
    /// Conversations dropped because they had no response turn.
    pub skipped: usize,
}

impl DatasetSplits {
    pub fn num_emotions(&self) -> usize {
        self.emotion_names.len()
    }

    /// Dialogues whose history is a single utterance; these run with the
    /// prediction branch disabled.
    pub fn single_turn_count(&self) -> usize {
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .filter(|d| !d.supports_prediction())
            .count()
    }
}

struct RawConversation {
    emotion: String,
    /// (utterance_idx, text) pairs as read; sorted before use.
    rows: Vec<(u64, String)>,
}

/// Parse one split CSV into ordered conversations.
///
/// Expected columns: `conv_id,utterance_idx,context_emotion,utterance,speaker_idx`.
fn read_conversations(path: &Path) -> Result<Vec<RawConversation>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| CorpusError::Invalid(format!("{}: {e}", path.display())))?;
    let mut order: Vec<String> = Vec::new();
    let mut convs: HashMap<String, RawConversation> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CorpusError::MalformedRow {
                path: path.display().to_string(),
                line,
                reason: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let malformed = |reason: &str| CorpusError::MalformedRow {
            path: path.display().to_string(),
            line,
            reason: reason.to_string(),
        };
        if record.len() != 5 {
            return Err(malformed(&format!("expected 5 columns, got {}", record.len())));
        }
        let conv_id = record.get(0).unwrap_or("").to_string();
        if conv_id.is_empty() {
            return Err(malformed("empty conv_id"));
        }
        let utt_idx: u64 = record
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| malformed("utterance_idx is not an integer"))?;
        let emotion = record.get(2).unwrap_or("").trim().to_string();
        if emotion.is_empty() {
            return Err(malformed("empty context_emotion"));
        }
        let utterance = record.get(3).unwrap_or("").to_string();
        if tokenize(&utterance).is_empty() {
            return Err(malformed("utterance tokenizes to nothing"));
        }
        let conv = convs.entry(conv_id.clone()).or_insert_with(|| {
            order.push(conv_id.clone());
            RawConversation {
                emotion,
                rows: Vec::new(),
            }
        });
        conv.rows.push((utt_idx, utterance));
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut conv = convs.remove(&id).expect("conv seen in order list");
        conv.rows.sort_by_key(|(idx, _)| *idx);
        out.push(conv);
    }
    Ok(out)
}

/// Turn conversations into dialogues: the final row is the listener's
/// response and becomes the gold response; everything before it is the
/// history, roles alternating from speaker. Single-row conversations are
/// skipped (counted).
fn to_dialogues(
    convs: Vec<RawConversation>,
    label_of: &HashMap<String, usize>,
    skipped: &mut usize,
) -> Result<Vec<Dialogue>, CorpusError> {
    let mut out = Vec::with_capacity(convs.len());
    for conv in convs {
        if conv.rows.len() < 2 {
            *skipped += 1;
            continue;
        }
        let turns: Vec<Vec<String>> = conv.rows[..conv.rows.len() - 1]
            .iter()
            .map(|(_, text)| tokenize(text))
            .collect();
        let gold = tokenize(&conv.rows.last().unwrap().1);
        let label = label_of[&conv.emotion];
        out.push(Dialogue::new(turns, gold, label)?);
    }
    Ok(out)
}

/// Load one split file into dialogues using an existing label table.
pub fn load_split_csv(
    path: &Path,
    emotion_names: &[String],
) -> Result<Vec<Dialogue>, CorpusError> {
    let convs = read_conversations(path)?;
    let label_of: HashMap<String, usize> = emotion_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    for conv in &convs {
        if !label_of.contains_key(&conv.emotion) {
            return Err(CorpusError::Invalid(format!(
                "unknown emotion label `{}` in {}",
                conv.emotion,
                path.display()
            )));
        }
    }
    let mut skipped = 0;
    to_dialogues(convs, &label_of, &mut skipped)
}

/// Load `train.csv`, `valid.csv` and `test.csv` from a data directory.
///
/// The emotion label table is collected over all three splits and sorted so
/// label indices are stable regardless of row order.
pub fn load_empathetic_dialogues(dir: &Path) -> Result<DatasetSplits, CorpusError> {
    let paths = ["train.csv", "valid.csv", "test.csv"].map(|f| dir.join(f));
    for p in &paths {
        if !p.exists() {
            return Err(CorpusError::Invalid(format!("missing dataset file {}", p.display())));
        }
    }
    let raw: Vec<Vec<RawConversation>> = paths
        .iter()
        .map(|p| read_conversations(p))
        .collect::<Result<_, _>>()?;
    let mut names: Vec<String> = raw
        .iter()
        .flatten()
        .map(|c| c.emotion.clone())
        .collect();
    names.sort();
    names.dedup();
    let label_of: HashMap<String, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    let mut skipped = 0;
    let mut it = raw.into_iter();
    let train = to_dialogues(it.next().unwrap(), &label_of, &mut skipped)?;
    let valid = to_dialogues(it.next().unwrap(), &label_of, &mut skipped)?;
    let test = to_dialogues(it.next().unwrap(), &label_of, &mut skipped)?;
    Ok(DatasetSplits {
        train,
        valid,
        test,
        emotion_names: names,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Role;

    fn write(path: &Path, content: &str) {
        std::fs::write(path, content).unwrap();
    }

    #[test]
    fn toy_csv_parses_with_roles() {
        let dir = tempfile::tempdir().unwrap();
        let header = "conv_id,utterance_idx,context_emotion,utterance,speaker_idx\n";
        // three rows: two history turns + the listener's response
        write(
            &dir.path().join("train.csv"),
            &format!(
                "{header}c1,1,joyful,I got the job!,0\nc1,2,joyful,\"Wow, congrats!\",1\nc1,3,joyful,Thanks so much.,0\n"
            ),
        );
        write(&dir.path().join("valid.csv"), header);
        write(&dir.path().join("test.csv"), header);
        let splits = load_empathetic_dialogues(dir.path()).unwrap();
        assert_eq!(splits.train.len(), 1);
        let d = &splits.train[0];
        assert_eq!(d.history_len(), 2);
        assert_eq!(d.utterances[0].role, Role::Speaker);
        assert_eq!(d.utterances[1].role, Role::Listener);
        assert_eq!(d.utterances[1].tokens, vec!["wow", ",", "congrats", "!"]);
        assert_eq!(d.gold_response, vec!["thanks", "so", "much", "."]);
        assert_eq!(splits.emotion_names, vec!["joyful"]);
        assert_eq!(d.emotion_label, 0);
    }

    #[test]
    fn single_row_conversation_is_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let header = "conv_id,utterance_idx,context_emotion,utterance,speaker_idx\n";
        write(
            &dir.path().join("train.csv"),
            &format!("{header}c1,1,sad,all alone here,0\nc2,1,sad,hello there,0\nc2,2,sad,hi!,1\n"),
        );
        write(&dir.path().join("valid.csv"), header);
        write(&dir.path().join("test.csv"), header);
        let splits = load_empathetic_dialogues(dir.path()).unwrap();
        assert_eq!(splits.train.len(), 1);
        assert_eq!(splits.skipped, 1);
        // two-row conversation gives a single-utterance history: response
        // training only, prediction branch disabled
        assert!(!splits.train[0].supports_prediction());
        assert_eq!(splits.single_turn_count(), 1);
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let header = "conv_id,utterance_idx,context_emotion,utterance,speaker_idx\n";
        write(
            &dir.path().join("train.csv"),
            &format!("{header}c1,1,sad,ok then,0\nc1,notanumber,sad,bad row,1\n"),
        );
        write(&dir.path().join("valid.csv"), header);
        write(&dir.path().join("test.csv"), header);
        let err = load_empathetic_dialogues(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":3:"), "line number missing from: {msg}");
    }

    #[test]
    fn missing_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_empathetic_dialogues(dir.path()).unwrap_err();
        assert!(err.to_string().contains("missing dataset file"));
    }

    /// Split sizes from the full public dataset. Runs only when
    /// `INFEREM_DATA_DIR` points at it.
    #[test]
    fn real_dataset_split_sizes() {
        let Ok(dir) = std::env::var(crate::corpus::DATA_DIR_ENV) else {
            eprintln!("skipping: INFEREM_DATA_DIR not set");
            return;
        };
        let p = Path::new(&dir);
        if !p.join("train.csv").exists() {
            eprintln!("skipping: no train.csv under {dir}");
            return;
        }
        let splits = load_empathetic_dialogues(p).unwrap();
        assert_eq!(
            (splits.train.len(), splits.valid.len(), splits.test.len()),
            (17802, 2628, 2494)
        );
    }
}
