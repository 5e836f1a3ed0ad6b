//! Word-level emotion knowledge: concept links and intensity values.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::CorpusError;

/// Default cap on concepts attached to one word.
pub const DEFAULT_K_MAX: usize = 5;

/// Word -> emotion-concept links and word -> intensity lookups.
///
/// Both lexicons are plain text files, so real NRC_VAD/ConceptNet exports and
/// synthetic fixtures share one code path. Read-only after load.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    concepts: HashMap<String, Vec<(String, f64)>>,
    intensity: HashMap<String, f64>,
    k_max: usize,
}

impl KnowledgeBase {
    /// Empty knowledge base with the default concept cap.
    pub fn empty() -> KnowledgeBase {
        KnowledgeBase {
            concepts: HashMap::new(),
            intensity: HashMap::new(),
            k_max: DEFAULT_K_MAX,
        }
    }

    pub fn with_k_max(mut self, k_max: usize) -> KnowledgeBase {
        self.k_max = k_max;
        self
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Register a concept link. Order of insertion does not matter; lookups
    /// sort by score with lexicographic tie-breaking.
    pub fn add_concept(&mut self, word: &str, concept: &str, score: f64) {
        self.concepts
            .entry(word.to_string())
            .or_default()
            .push((concept.to_string(), score));
    }

    pub fn set_intensity(&mut self, word: &str, eta: f64) {
        self.intensity.insert(word.to_string(), eta.clamp(0.0, 1.0));
    }

    /// Emotion intensity of a word; 0.0 for anything outside the lexicon, so
    /// out-of-lexicon words get minimal pooling weight.
    pub fn intensity(&self, word: &str) -> f64 {
        self.intensity.get(word).copied().unwrap_or(0.0)
    }

    /// Up to `k_max` concepts for a word, sorted by descending score, ties
    /// broken lexicographically. Unknown words give an empty list.
    pub fn lookup_concepts(&self, word: &str) -> Vec<(String, f64)> {
        let mut out = match self.concepts.get(word) {
            Some(links) => links.clone(),
            None => return Vec::new(),
        };
        out.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        out.truncate(self.k_max);
        out
    }

    /// Load `word<TAB>float` intensity lines from `path`.
    pub fn load_intensity_lexicon(&mut self, path: &Path) -> Result<usize, CorpusError> {
        let reader = BufReader::new(File::open(path)?);
        let mut count = 0;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let word = parts.next().unwrap_or("");
            let value = parts.next().and_then(|v| v.trim().parse::<f64>().ok());
            match value {
                Some(eta) if !word.is_empty() => {
                    self.set_intensity(word, eta);
                    count += 1;
                }
                _ => {
                    return Err(CorpusError::MalformedRow {
                        path: path.display().to_string(),
                        line: i as u64 + 1,
                        reason: "expected `word<TAB>float`".into(),
                    })
                }
            }
        }
        Ok(count)
    }

    /// Load `word<TAB>concept<TAB>float` lines from `path`.
    pub fn load_concept_lexicon(&mut self, path: &Path) -> Result<usize, CorpusError> {
        let reader = BufReader::new(File::open(path)?);
        let mut count = 0;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let parsed = match parts.as_slice() {
                [word, concept, score] => score
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .map(|s| (word.to_string(), concept.to_string(), s)),
                _ => None,
            };
            match parsed {
                Some((word, concept, score)) => {
                    self.add_concept(&word, &concept, score);
                    count += 1;
                }
                None => {
                    return Err(CorpusError::MalformedRow {
                        path: path.display().to_string(),
                        line: i as u64 + 1,
                        reason: "expected `word<TAB>concept<TAB>float`".into(),
                    })
                }
            }
        }
        Ok(count)
    }

    /// Load `intensity.tsv` and `concepts.tsv` from a data directory when
    /// they exist. Missing files are fine (empty lexicon).
    pub fn load_from_dir(dir: &Path, k_max: usize) -> Result<KnowledgeBase, CorpusError> {
        let mut kb = KnowledgeBase::empty().with_k_max(k_max);
        let intensity = dir.join("intensity.tsv");
        if intensity.exists() {
            kb.load_intensity_lexicon(&intensity)?;
        }
        let concepts = dir.join("concepts.tsv");
        if concepts.exists() {
            kb.load_concept_lexicon(&concepts)?;
        }
        Ok(kb)
    }

    /// Write both lexicons in deterministic (sorted) order.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), CorpusError> {
        let mut w = BufWriter::new(File::create(dir.join("intensity.tsv"))?);
        let mut entries: Vec<_> = self.intensity.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        for (word, eta) in entries {
            writeln!(w, "{word}\t{eta}")?;
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join("concepts.tsv"))?);
        let mut words: Vec<_> = self.concepts.keys().collect();
        words.sort();
        for word in words {
            let mut links = self.concepts[word].clone();
            links.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.0.cmp(&b.0))
            });
            for (concept, score) in links {
                writeln!(w, "{word}\t{concept}\t{score}")?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_word_has_zero_intensity_and_no_concepts() {
        let kb = KnowledgeBase::empty();
        assert_eq!(kb.intensity("xyzzy"), 0.0);
        assert_eq!(kb.intensity("."), 0.0);
        assert!(kb.lookup_concepts("xyzzy").is_empty());
    }

    #[test]
    fn intensity_is_lookup_identity() {
        let mut kb = KnowledgeBase::empty();
        kb.set_intensity("joy", 0.83);
        assert_eq!(kb.intensity("joy"), 0.83);
    }

    #[test]
    fn concepts_truncate_to_top_k_by_score() {
        let mut kb = KnowledgeBase::empty().with_k_max(5);
        for i in 0..10 {
            kb.add_concept("word", &format!("c{i}"), 0.1 * (i as f64 + 1.0));
        }
        let got = kb.lookup_concepts("word");
        assert_eq!(got.len(), 5);
        assert_eq!(got[0].0, "c9");
        assert!((got[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(got[4].0, "c5");
    }

    #[test]
    fn score_ties_break_lexicographically() {
        let mut kb = KnowledgeBase::empty().with_k_max(2);
        kb.add_concept("w", "zeta", 0.5);
        kb.add_concept("w", "alpha", 0.5);
        kb.add_concept("w", "mid", 0.5);
        let got = kb.lookup_concepts("w");
        assert_eq!(got[0].0, "alpha");
        assert_eq!(got[1].0, "mid");
    }

    #[test]
    fn fixture_self_link() {
        let mut kb = KnowledgeBase::empty();
        kb.add_concept("sad", "unhappy", 0.9);
        assert_eq!(kb.lookup_concepts("sad"), vec![("unhappy".to_string(), 0.9)]);
    }

    #[test]
    fn lexicon_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut kb = KnowledgeBase::empty();
        kb.set_intensity("joy", 0.83);
        kb.set_intensity("sad", 0.61);
        kb.add_concept("sad", "unhappy", 0.9);
        kb.add_concept("sad", "down", 0.7);
        kb.write_to_dir(dir.path()).unwrap();

        let loaded = KnowledgeBase::load_from_dir(dir.path(), 5).unwrap();
        assert_eq!(loaded.intensity("joy"), 0.83);
        assert_eq!(loaded.lookup_concepts("sad").len(), 2);
        assert_eq!(loaded.lookup_concepts("sad")[0].0, "unhappy");
    }

    #[test]
    fn malformed_lexicon_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("intensity.tsv");
        std::fs::write(&path, "joy\t0.83\nbroken line\n").unwrap();
        let mut kb = KnowledgeBase::empty();
        let err = kb.load_intensity_lexicon(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }
}
