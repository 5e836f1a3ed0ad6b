//! Property tests over the library's core invariants.

use proptest::prelude::*;

use inferem::autograd::Tensor;
use inferem::corpus::{tokenize, Vocabulary};
use inferem::encoder::emotion_signal;
use inferem::evalmetrics::{distinct_n, emotion_accuracy, perplexity, DistinctMode};

proptest! {
    /// Encoding tokenized text through a vocabulary built from it and
    /// decoding again reproduces the token strings.
    #[test]
    fn vocabulary_round_trip(text in "[ -~]{0,60}") {
        let tokens = tokenize(&text);
        let vocab = Vocabulary::from_tokens(tokens.iter().map(|t| t.as_str()));
        let ids = vocab.encode_all(&tokens);
        let back: Vec<&str> = ids.iter().map(|&i| vocab.decode(i)).collect();
        prop_assert_eq!(tokens, back);
    }

    /// Tokens never contain whitespace or uppercase.
    #[test]
    fn tokens_are_lowercase_and_compact(text in "\\PC{0,60}") {
        for t in tokenize(&text) {
            prop_assert!(!t.is_empty());
            prop_assert!(!t.chars().any(char::is_whitespace));
            // every char is a fixed point of to_lowercase (chars like
            // U+1D507 are uppercase but have no lowercase mapping)
            for c in t.chars() {
                prop_assert!(c.to_lowercase().to_string() == c.to_string());
            }
        }
    }

    /// Softmax rows are probability distributions for any finite input.
    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..5,
        cols in 1usize..6,
        scale in -30.0f64..30.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        let y = Tensor::matrix(rows, cols, values).unwrap().softmax().values();
        for row in y.chunks(cols) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }

    /// Concatenation along either axis splits back into the originals.
    #[test]
    fn concat_split_identity(
        r1 in 1usize..4,
        r2 in 1usize..4,
        c in 1usize..5,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut mk = |r: usize, c: usize| {
            Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let a = mk(r1, c);
        let b = mk(r2, c);
        let cat = Tensor::concat(0, &[&a, &b]).unwrap();
        prop_assert_eq!(cat.slice_rows(0, r1).unwrap().values(), a.values());
        prop_assert_eq!(cat.slice_rows(r1, r2).unwrap().values(), b.values());

        let a2 = mk(r1, c);
        let b2 = mk(r1, c + 1);
        let cat = Tensor::concat(1, &[&a2, &b2]).unwrap();
        prop_assert_eq!(cat.slice_cols(0, c).unwrap().values(), a2.values());
        prop_assert_eq!(cat.slice_cols(c, c + 1).unwrap().values(), b2.values());
    }

    /// Pooled signals stay inside the per-column range of the encoded rows
    /// and ignore constant shifts of the intensity values.
    #[test]
    fn emotion_signal_convex_and_shift_invariant(
        q in 1usize..8,
        d in 1usize..5,
        shift in -50.0f64..50.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let s = Tensor::matrix(q, d, (0..q * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let eta: Vec<f64> = (0..q).map(|_| rng.gen_range(0.0..1.0)).collect();
        let e = emotion_signal(&s, &eta).unwrap().values();
        let sv = s.values();
        for j in 0..d {
            let col: Vec<f64> = (0..q).map(|i| sv[i * d + j]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(e[j] >= lo - 1e-12 && e[j] <= hi + 1e-12);
        }
        let shifted: Vec<f64> = eta.iter().map(|v| v + shift).collect();
        let e2 = emotion_signal(&s, &shifted).unwrap().values();
        for (a, b) in e.iter().zip(&e2) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    /// Perplexity depends only on the pooled multiset of per-token values.
    #[test]
    fn perplexity_ignores_partition(nlls in prop::collection::vec(0.0f64..6.0, 1..30)) {
        let whole = perplexity(&nlls).unwrap();
        let mut reversed = nlls.clone();
        reversed.reverse();
        // summation order may differ by an ulp
        let again = perplexity(&reversed).unwrap();
        prop_assert!((whole - again).abs() <= 1e-12 * whole.abs());
    }

    /// Accuracy is invariant under a consistent shuffle of the pairs.
    #[test]
    fn accuracy_is_permutation_invariant(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 1..30),
        seed in any::<u64>(),
    ) {
        use rand::{seq::SliceRandom, SeedableRng};
        let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let base = emotion_accuracy(&preds, &labels).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rng);
        let preds2: Vec<usize> = shuffled.iter().map(|p| p.0).collect();
        let labels2: Vec<usize> = shuffled.iter().map(|p| p.1).collect();
        prop_assert_eq!(base, emotion_accuracy(&preds2, &labels2).unwrap());
    }

    /// Every n-gram unique means distinct-n is exactly 100.
    #[test]
    fn distinct_is_100_when_unique(n_tokens in 1usize..20) {
        let response: Vec<usize> = (0..n_tokens).map(|i| i + 4).collect();
        let responses = vec![response];
        prop_assert_eq!(distinct_n(&responses, 1, DistinctMode::Pooled).unwrap(), 100.0);
        if n_tokens >= 2 {
            prop_assert_eq!(distinct_n(&responses, 2, DistinctMode::Pooled).unwrap(), 100.0);
        }
    }
}
