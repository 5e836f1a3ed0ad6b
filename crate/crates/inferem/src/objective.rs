//! The four training losses and their adaptive weighted combination.
//!
//! Sequence losses are token-summed negative log-likelihoods. The prediction
//! weight switches between a high and a low value depending on whether the
//! prediction loss still exceeds the response loss, so the prediction branch
//! trains fast early and yields once it has caught up.

use crate::autograd::{Result, Tensor, TensorError};

/// Trade-off weights. Defaults follow the reference configuration
/// 1.5 / 0.3 / 1.2 / 0.12.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha1_hi: f64,
    pub alpha1_lo: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha1_hi: 1.5,
            alpha1_lo: 0.3,
            alpha2: 1.2,
            alpha3: 0.12,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha1_hi, self.alpha1_lo, self.alpha2, self.alpha3];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(TensorError::InvalidInput {
                op: "loss_weights",
                reason: format!("weights must be finite and non-negative, got {self:?}"),
            });
        }
        if self.alpha1_hi < self.alpha1_lo {
            return Err(TensorError::InvalidInput {
                op: "loss_weights",
                reason: format!(
                    "alpha1_hi ({}) must be >= alpha1_lo ({})",
                    self.alpha1_hi, self.alpha1_lo
                ),
            });
        }
        Ok(())
    }
}

/// Scalar loss values of one step, with the weight actually used.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub prediction: f64,
    pub response: f64,
    pub emotion: f64,
    pub attention: f64,
    /// `None` when the prediction branch did not run (ablation or n = 1).
    pub alpha1_used: Option<f64>,
    pub total: f64,
}

/// Token-summed negative log-likelihood of `gold` under teacher-forced
/// `distributions` (row `j` scores `gold[j]`).
pub fn sequence_nll(distributions: &Tensor, gold: &[usize]) -> Result<Tensor> {
    if gold.is_empty() {
        return Err(TensorError::InvalidInput {
            op: "sequence_nll",
            reason: "empty gold sequence".into(),
        });
    }
    if distributions.rows() != gold.len() {
        return Err(TensorError::ShapeMismatch {
            op: "sequence_nll",
            lhs: distributions.shape().to_vec(),
            rhs: vec![gold.len()],
        });
    }
    Ok(distributions.gather_rows(gold)?.log().sum().scale(-1.0))
}

/// Per-token negative log-likelihoods (off the tape), for perplexity.
pub fn per_token_nll(distributions: &Tensor, gold: &[usize]) -> Result<Vec<f64>> {
    if distributions.rows() != gold.len() {
        return Err(TensorError::ShapeMismatch {
            op: "per_token_nll",
            lhs: distributions.shape().to_vec(),
            rhs: vec![gold.len()],
        });
    }
    Ok(distributions
        .gather_rows(gold)?
        .values()
        .iter()
        .map(|p| -p.ln())
        .collect())
}

/// Emotion classification loss: project the signal through `W_e` (shape
/// `(q, d)`), softmax, negative log-likelihood of the label. Also returns
/// the argmax class.
pub fn emotion_loss(signal: &Tensor, w_e: &Tensor, label: usize) -> Result<(Tensor, usize)> {
    let classes = w_e.rows();
    if label >= classes {
        return Err(TensorError::InvalidInput {
            op: "emotion_loss",
            reason: format!("label {label} out of 0..{classes}"),
        });
    }
    let d = signal.cols();
    let logits = w_e.matmul(&signal.reshape(vec![d, 1])?)?.reshape(vec![classes])?;
    let probs = logits.softmax();
    let predicted = {
        let v = probs.values();
        let mut best = 0;
        for (i, p) in v.iter().enumerate() {
            if *p > v[best] {
                best = i;
            }
        }
        best
    };
    let loss = probs.pick(label)?.log().scale(-1.0);
    Ok((loss, predicted))
}

/// Emotional attention regularizer: mean squared difference between word
/// intensities and averaged decoder cross-attention.
pub fn attention_loss(eta: &[f64], attention: &Tensor) -> Result<Tensor> {
    if eta.is_empty() || attention.shape() != [eta.len()] {
        return Err(TensorError::ShapeMismatch {
            op: "attention_loss",
            lhs: vec![eta.len()],
            rhs: attention.shape().to_vec(),
        });
    }
    let target = Tensor::vector(eta.to_vec())?;
    Ok(target.sub(attention)?.square().mean())
}

/// Weighted combination `L = L_r + a1 * L_p + a2 * L_e + a3 * L_a`.
///
/// The high/low switch compares `switch_cmp` when given (per-token means),
/// otherwise the raw summed values; the comparison is on detached scalars and
/// carries no gradient. Prediction loss `None` drops the term entirely.
pub fn combine(
    prediction: Option<&Tensor>,
    response: &Tensor,
    emotion: &Tensor,
    attention: &Tensor,
    weights: &LossWeights,
    switch_cmp: Option<(f64, f64)>,
) -> Result<(Tensor, LossReport)> {
    weights.validate()?;
    for (name, t) in [("response", response), ("emotion", emotion), ("attention", attention)] {
        if !t.shape().is_empty() {
            return Err(TensorError::InvalidInput {
                op: "combine",
                reason: format!("{name} loss must be scalar"),
            });
        }
        if !t.item().is_finite() {
            return Err(TensorError::NonFinite { op: "combine" });
        }
    }
    let mut total = response
        .add(&emotion.scale(weights.alpha2))?
        .add(&attention.scale(weights.alpha3))?;
    let mut report = LossReport {
        prediction: 0.0,
        response: response.item(),
        emotion: emotion.item(),
        attention: attention.item(),
        alpha1_used: None,
        total: 0.0,
    };
    if let Some(pred) = prediction {
        if !pred.item().is_finite() {
            return Err(TensorError::NonFinite { op: "combine" });
        }
        let (cmp_p, cmp_r) = switch_cmp.unwrap_or((pred.item(), response.item()));
        if !cmp_p.is_finite() || !cmp_r.is_finite() {
            return Err(TensorError::NonFinite { op: "combine" });
        }
        let alpha1 = if cmp_p > cmp_r {
            weights.alpha1_hi
        } else {
            weights.alpha1_lo
        };
        total = total.add(&pred.scale(alpha1))?;
        report.prediction = pred.item();
        report.alpha1_used = Some(alpha1);
    }
    report.total = total.item();
    Ok((total, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn certain_predictions_have_zero_nll() {
        let mut probs = vec![0.0; 3 * 4];
        probs[1] = 1.0; // row 0 scores token 1
        probs[4 + 2] = 1.0; // row 1 scores token 2
        probs[8] = 1.0; // row 2 scores token 0
        let d = Tensor::matrix(3, 4, probs).unwrap();
        let loss = sequence_nll(&d, &[1, 2, 0]).unwrap();
        assert_eq!(loss.item(), 0.0);
    }

    #[test]
    fn uniform_nll_is_t_log_v() {
        let d = Tensor::matrix(3, 10, vec![0.1; 30]).unwrap();
        let loss = sequence_nll(&d, &[0, 5, 9]).unwrap();
        assert!((loss.item() - 3.0 * 10.0f64.ln()).abs() < 1e-12);
        assert!((loss.item() - 6.907755278982137).abs() < 1e-12);
    }

    #[test]
    fn nll_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits: Vec<f64> = (0..4 * 6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let probs = Tensor::matrix(4, 6, logits).unwrap().softmax();
        let gold = [3usize, 0, 5, 2];
        let loss = sequence_nll(&probs, &gold).unwrap().item();
        let v = probs.values();
        let mut expect = 0.0;
        for (j, &g) in gold.iter().enumerate() {
            expect -= v[j * 6 + g].ln();
        }
        assert!((loss - expect).abs() < 1e-10);
    }

    #[test]
    fn empty_gold_is_rejected() {
        let d = Tensor::matrix(1, 4, vec![0.25; 4]).unwrap();
        assert!(sequence_nll(&d, &[]).is_err());
    }

    #[test]
    fn zero_logits_emotion_loss_is_ln_2() {
        let signal = Tensor::vector(vec![0.0; 3]).unwrap();
        let w_e = Tensor::zeros(2, 3);
        for label in 0..2 {
            let (loss, _) = emotion_loss(&signal, &w_e, label).unwrap();
            assert!((loss.item() - 2.0f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn confident_correct_class_has_near_zero_loss() {
        let signal = Tensor::vector(vec![100.0, 0.0]).unwrap();
        let w_e = Tensor::matrix(2, 2, vec![1.0, 0.0, -1.0, 0.0]).unwrap();
        let (loss, predicted) = emotion_loss(&signal, &w_e, 0).unwrap();
        assert!(loss.item() < 1e-12);
        assert_eq!(predicted, 0);
    }

    #[test]
    fn emotion_loss_label_out_of_range() {
        let signal = Tensor::vector(vec![0.0; 3]).unwrap();
        let w_e = Tensor::zeros(2, 3);
        assert!(emotion_loss(&signal, &w_e, 2).is_err());
    }

    #[test]
    fn emotion_loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let signal = Tensor::vector((0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let w_e = Tensor::matrix(3, 5, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        for point in [&w_e, &signal] {
            let err = crate::autograd::gradient_check_params(
                || emotion_loss(&signal, &w_e, 1).map(|(l, _)| l),
                point,
            )
            .unwrap();
            assert!(err < 1e-4, "emotion loss grad error {err}");
        }
    }

    #[test]
    fn attention_loss_zero_when_matched() {
        let eta = [0.2, 0.5, 0.3];
        let a = Tensor::vector(eta.to_vec()).unwrap();
        assert_eq!(attention_loss(&eta, &a).unwrap().item(), 0.0);
    }

    #[test]
    fn attention_loss_arithmetic() {
        let a = Tensor::vector(vec![0.0, 1.0]).unwrap();
        let loss = attention_loss(&[1.0, 0.0], &a).unwrap();
        assert!((loss.item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attention_loss_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let eta: Vec<f64> = (0..7).map(|_| rng.gen_range(0.0..1.0)).collect();
        let av: Vec<f64> = (0..7).map(|_| rng.gen_range(0.0..1.0)).collect();
        let a = Tensor::vector(av.clone()).unwrap();
        let got = attention_loss(&eta, &a).unwrap().item();
        let expect: f64 =
            eta.iter().zip(&av).map(|(e, a)| (e - a) * (e - a)).sum::<f64>() / 7.0;
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn attention_loss_length_mismatch() {
        let a = Tensor::vector(vec![0.5, 0.5]).unwrap();
        assert!(attention_loss(&[1.0, 0.0, 0.0], &a).is_err());
    }

    #[test]
    fn combine_picks_high_weight_when_prediction_dominates() {
        let w = LossWeights::default();
        let (total, report) = combine(
            Some(&Tensor::scalar(2.0)),
            &Tensor::scalar(1.0),
            &Tensor::scalar(0.0),
            &Tensor::scalar(0.0),
            &w,
            None,
        )
        .unwrap();
        assert_eq!(report.alpha1_used, Some(1.5));
        assert!((total.item() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn combine_tie_takes_low_branch() {
        let w = LossWeights::default();
        let (total, report) = combine(
            Some(&Tensor::scalar(1.0)),
            &Tensor::scalar(1.0),
            &Tensor::scalar(0.0),
            &Tensor::scalar(0.0),
            &w,
            None,
        )
        .unwrap();
        assert_eq!(report.alpha1_used, Some(0.3));
        assert!((total.item() - 1.3).abs() < 1e-9);
    }

    #[test]
    fn combine_hand_arithmetic_with_default_weights() {
        let w = LossWeights::default();
        let (total, report) = combine(
            Some(&Tensor::scalar(0.5)),
            &Tensor::scalar(1.0),
            &Tensor::scalar(2.0),
            &Tensor::scalar(0.25),
            &w,
            None,
        )
        .unwrap();
        assert_eq!(report.alpha1_used, Some(0.3));
        // 1 + 0.3*0.5 + 1.2*2 + 0.12*0.25 = 1 + 0.15 + 2.4 + 0.03 = 3.58
        assert!((total.item() - 3.58).abs() < 1e-9);
        assert!(
            (report.total
                - (report.response
                    + 0.3 * report.prediction
                    + 1.2 * report.emotion
                    + 0.12 * report.attention))
                .abs()
                < 1e-9
        );
    }

    #[test]
    fn combine_without_prediction_has_blank_alpha() {
        let w = LossWeights::default();
        let (total, report) = combine(
            None,
            &Tensor::scalar(1.0),
            &Tensor::scalar(1.0),
            &Tensor::scalar(1.0),
            &w,
            None,
        )
        .unwrap();
        assert_eq!(report.alpha1_used, None);
        assert!((total.item() - (1.0 + 1.2 + 0.12)).abs() < 1e-9);
    }

    #[test]
    fn combine_uses_normalized_comparison_when_given() {
        let w = LossWeights::default();
        // raw sums say prediction dominates, per-token means say otherwise
        let (_, report) = combine(
            Some(&Tensor::scalar(10.0)),
            &Tensor::scalar(4.0),
            &Tensor::scalar(0.0),
            &Tensor::scalar(0.0),
            &w,
            Some((0.5, 2.0)),
        )
        .unwrap();
        assert_eq!(report.alpha1_used, Some(0.3));
    }

    #[test]
    fn combine_rejects_nan() {
        let w = LossWeights::default();
        let err = combine(
            Some(&Tensor::scalar(f64::NAN)),
            &Tensor::scalar(1.0),
            &Tensor::scalar(0.0),
            &Tensor::scalar(0.0),
            &w,
            None,
        );
        assert!(err.is_err());
    }

    #[test]
    fn fixed_branch_gradient_is_alpha1() {
        let w = LossWeights::default();
        let lp = Tensor::scalar(2.0);
        let (total, _) = combine(
            Some(&lp),
            &Tensor::scalar(1.0),
            &Tensor::scalar(0.0),
            &Tensor::scalar(0.0),
            &w,
            None,
        )
        .unwrap();
        total.backward().unwrap();
        assert_eq!(lp.grad(), vec![1.5]);
    }

    #[test]
    fn invalid_weights_rejected() {
        let w = LossWeights {
            alpha1_hi: 0.1,
            alpha1_lo: 0.3,
            ..Default::default()
        };
        assert!(w.validate().is_err());
    }
}
