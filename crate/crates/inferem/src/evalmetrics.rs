//! Automatic evaluation: emotion accuracy, perplexity and distinct-n.

use std::collections::HashSet;
use std::fmt;

use crate::corpus::{BOS, EOS, PAD};

#[derive(Debug, Clone, PartialEq)]
pub enum MetricError {
    LengthMismatch { predictions: usize, labels: usize },
    Empty(&'static str),
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::LengthMismatch { predictions, labels } => write!(
                f,
                "length mismatch: {predictions} predictions vs {labels} labels"
            ),
            MetricError::Empty(what) => write!(f, "no {what} to evaluate"),
        }
    }
}

impl std::error::Error for MetricError {}

/// How distinct-n pools n-grams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistinctMode {
    /// One global n-gram pool over all responses (matches the reported
    /// sub-percent magnitudes).
    #[default]
    Pooled,
    /// Mean of per-response ratios.
    Averaged,
}

/// Fraction of matching prediction/label pairs.
pub fn emotion_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64, MetricError> {
    if predictions.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricError::Empty("predictions"));
    }
    let matches = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(matches as f64 / predictions.len() as f64)
}

/// `exp` of the mean per-token negative log-likelihood over the corpus.
pub fn perplexity(per_token_nlls: &[f64]) -> Result<f64, MetricError> {
    if per_token_nlls.is_empty() {
        return Err(MetricError::Empty("token NLLs"));
    }
    let mean = per_token_nlls.iter().sum::<f64>() / per_token_nlls.len() as f64;
    Ok(mean.exp())
}

fn content_tokens(response: &[usize]) -> impl Iterator<Item = usize> + '_ {
    response
        .iter()
        .copied()
        .filter(|&t| t != PAD && t != BOS && t != EOS)
}

/// Percentage of unique n-grams among all n-grams of the responses.
pub fn distinct_n(responses: &[Vec<usize>], n: usize, mode: DistinctMode) -> Result<f64, MetricError> {
    if !(1..=2).contains(&n) {
        return Err(MetricError::Empty("supported n (1 or 2)"));
    }
    let grams_of = |response: &[usize]| -> Vec<Vec<usize>> {
        let toks: Vec<usize> = content_tokens(response).collect();
        if toks.len() < n {
            return Vec::new();
        }
        toks.windows(n).map(|w| w.to_vec()).collect()
    };
    match mode {
        DistinctMode::Pooled => {
            let mut total = 0usize;
            let mut unique = HashSet::new();
            for r in responses {
                for g in grams_of(r) {
                    total += 1;
                    unique.insert(g);
                }
            }
            if total == 0 {
                return Err(MetricError::Empty("n-grams"));
            }
            Ok(100.0 * unique.len() as f64 / total as f64)
        }
        DistinctMode::Averaged => {
            let mut ratios = Vec::new();
            for r in responses {
                let grams = grams_of(r);
                if grams.is_empty() {
                    continue;
                }
                let total = grams.len();
                let unique: HashSet<_> = grams.into_iter().collect();
                ratios.push(unique.len() as f64 / total as f64);
            }
            if ratios.is_empty() {
                return Err(MetricError::Empty("n-grams"));
            }
            Ok(100.0 * ratios.iter().sum::<f64>() / ratios.len() as f64)
        }
    }
}

/// One evaluation run: the four automatic metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub emotion_accuracy: f64,
    pub perplexity: f64,
    pub distinct1: f64,
    pub distinct2: f64,
}

impl EvalReport {
    /// Fixed-order console table.
    pub fn table(&self) -> String {
        format!(
            "{:<12} {:>10} {:>10} {:>10}\n{:<12} {:>10.4} {:>10.4} {:>10.4}\n",
            "Accuracy(%)",
            "Perplexity",
            "Distinct-1",
            "Distinct-2",
            format!("{:.2}", 100.0 * self.emotion_accuracy),
            self.perplexity,
            self.distinct1,
            self.distinct2,
        )
    }

    /// Structured `key = value` text, parseable by `from_text`.
    pub fn to_text(&self) -> String {
        format!(
            "emotion_accuracy = {}\nperplexity = {}\ndistinct1 = {}\ndistinct2 = {}\n",
            self.emotion_accuracy, self.perplexity, self.distinct1, self.distinct2
        )
    }

    pub fn from_text(text: &str) -> Option<EvalReport> {
        let mut vals = [None; 4];
        let keys = ["emotion_accuracy", "perplexity", "distinct1", "distinct2"];
        for line in text.lines() {
            let mut parts = line.splitn(2, '=');
            let key = parts.next()?.trim();
            let value: f64 = parts.next()?.trim().parse().ok()?;
            if let Some(i) = keys.iter().position(|k| *k == key) {
                vals[i] = Some(value);
            }
        }
        Some(EvalReport {
            emotion_accuracy: vals[0]?,
            perplexity: vals[1]?,
            distinct1: vals[2]?,
            distinct2: vals[3]?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_three_of_four() {
        let acc = emotion_accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap();
        assert_eq!(acc, 0.75);
        assert_eq!(emotion_accuracy(&[5, 5], &[5, 5]).unwrap(), 1.0);
        assert_eq!(emotion_accuracy(&[1, 1], &[2, 3]).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_rejects_length_mismatch() {
        assert!(emotion_accuracy(&[1], &[1, 2]).is_err());
        assert!(emotion_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn perplexity_of_constant_ln2_is_two() {
        let nlls = vec![2.0f64.ln(); 5];
        assert!((perplexity(&nlls).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn perplexity_analytic_mixture() {
        let got = perplexity(&[0.0, 4.0f64.ln()]).unwrap();
        assert!((got - 2.0).abs() < 1e-12);
    }

    #[test]
    fn perplexity_matches_scalar_loop_and_ignores_partition() {
        let nlls = [0.3, 1.7, 0.9, 2.2, 0.05, 1.1];
        let got = perplexity(&nlls).unwrap();
        let expect = (nlls.iter().sum::<f64>() / 6.0).exp();
        assert!((got - expect).abs() < 1e-10);
        // partition invariance: same pooled multiset, any grouping
        let mut pooled = Vec::new();
        for chunk in nlls.chunks(2) {
            pooled.extend_from_slice(chunk);
        }
        assert_eq!(perplexity(&pooled).unwrap(), got);
    }

    #[test]
    fn distinct1_counts_by_hand() {
        // ["i","am","i"]: 2 unique of 3 tokens
        let r = vec![vec![10usize, 11, 10]];
        let got = distinct_n(&r, 1, DistinctMode::Pooled).unwrap();
        assert!((got - 100.0 * 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn distinct1_all_identical() {
        let r = vec![vec![7usize; 5]];
        let got = distinct_n(&r, 1, DistinctMode::Pooled).unwrap();
        assert!((got - 100.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn distinct2_matches_brute_force_set_oracle() {
        let r = vec![vec![4usize, 5, 6, 4, 5], vec![5usize, 6, 7]];
        let got = distinct_n(&r, 2, DistinctMode::Pooled).unwrap();
        let mut grams = HashSet::new();
        let mut total = 0;
        for resp in &r {
            for w in resp.windows(2) {
                grams.insert(w.to_vec());
                total += 1;
            }
        }
        let expect = 100.0 * grams.len() as f64 / total as f64;
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn distinct_excludes_reserved_tokens() {
        let r = vec![vec![BOS, 9, 9, EOS, PAD]];
        let got = distinct_n(&r, 1, DistinctMode::Pooled).unwrap();
        assert!((got - 50.0).abs() < 1e-12);
    }

    #[test]
    fn distinct_unique_grams_give_100() {
        let r = vec![vec![4usize, 5], vec![6usize, 7]];
        assert_eq!(distinct_n(&r, 1, DistinctMode::Pooled).unwrap(), 100.0);
        assert_eq!(distinct_n(&r, 2, DistinctMode::Pooled).unwrap(), 100.0);
    }

    #[test]
    fn distinct_empty_is_error() {
        assert!(distinct_n(&[], 1, DistinctMode::Pooled).is_err());
        let short = vec![vec![4usize]];
        assert!(distinct_n(&short, 2, DistinctMode::Pooled).is_err());
    }

    #[test]
    fn averaged_mode_differs_from_pooled() {
        // two responses, each internally unique, but overlapping across
        let r = vec![vec![4usize, 5], vec![4usize, 5]];
        let pooled = distinct_n(&r, 1, DistinctMode::Pooled).unwrap();
        let averaged = distinct_n(&r, 1, DistinctMode::Averaged).unwrap();
        assert!((pooled - 50.0).abs() < 1e-12);
        assert!((averaged - 100.0).abs() < 1e-12);
    }

    #[test]
    fn report_round_trips_through_text() {
        let report = EvalReport {
            emotion_accuracy: 0.8125,
            perplexity: 13.7,
            distinct1: 42.0,
            distinct2: 88.8,
        };
        let parsed = EvalReport::from_text(&report.to_text()).unwrap();
        assert_eq!(parsed, report);
        assert!(report.table().contains("81.25"));
    }
}
