//! Training loop: batched multi-task steps with the adaptive loss switch,
//! Adam updates, per-epoch validation and early stopping.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{load_checkpoint, save_checkpoint, Parameter, Tensor};
use crate::corpus::{Dialogue, KnowledgeBase, Vocabulary};
use crate::evalmetrics::{distinct_n, DistinctMode, EvalReport};
use crate::objective::{combine, per_token_nll, sequence_nll, LossReport, LossWeights};

use super::{ModelParams, PipelineError, PipelineResult};

/// Everything the trainer needs besides the model.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Early-stopping patience on validation perplexity, in epochs.
    pub patience: usize,
    /// Skip the intention-perception fusion (memory = plain history encoding).
    pub disable_sip: bool,
    /// Skip the last-utterance prediction branch entirely.
    pub disable_lup: bool,
    /// Compare per-token means instead of raw sums in the loss switch.
    pub switch_normalized: bool,
    /// Cap on greedy decoding steps (virtual utterances and generation).
    pub decode_max_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            weights: LossWeights::default(),
            lr: 1e-4,
            batch_size: 16,
            epochs: 30,
            seed: 0,
            patience: 5,
            disable_sip: false,
            disable_lup: false,
            switch_normalized: true,
            decode_max_steps: crate::decoder::MAX_DECODE_STEPS,
        }
    }
}

/// Model plus optimizer state.
pub struct Trainer {
    pub model: ModelParams,
    pub config: TrainConfig,
    params: Vec<Parameter>,
    step: u64,
}

impl Trainer {
    pub fn new(model: ModelParams, config: TrainConfig) -> PipelineResult<Trainer> {
        if config.batch_size == 0 {
            return Err(PipelineError::Invalid("batch size must be at least 1".into()));
        }
        config.weights.validate()?;
        let params = model.parameters();
        Ok(Trainer {
            model,
            config,
            params,
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_step_count(&mut self, step: u64) {
        self.step = step;
    }

    /// One optimizer step over a batch: forward both branches per dialogue,
    /// combine the batch-mean losses, backpropagate, Adam-update.
    pub fn train_step(
        &mut self,
        batch: &[&Dialogue],
        kb: &KnowledgeBase,
        vocab: &Vocabulary,
    ) -> PipelineResult<LossReport> {
        if batch.is_empty() {
            return Err(PipelineError::Invalid("empty batch".into()));
        }
        let mut pred_losses: Vec<Tensor> = Vec::new();
        let mut pred_tokens = 0usize;
        let mut resp_losses: Vec<Tensor> = Vec::new();
        let mut resp_tokens = 0usize;
        let mut emo_losses: Vec<Tensor> = Vec::new();
        let mut attn_losses: Vec<Tensor> = Vec::new();
        for dialogue in batch {
            let run_prediction = !self.config.disable_lup && dialogue.supports_prediction();
            let virtual_tokens = if run_prediction {
                let predict = self.model.forward_predict(dialogue, kb, vocab)?;
                pred_tokens += predict.gold.len();
                pred_losses.push(sequence_nll(&predict.probs, &predict.gold)?);
                // the argmax severs gradients: only token ids cross over
                Some(self.model.predict_virtual(
                    dialogue,
                    kb,
                    vocab,
                    self.config.decode_max_steps,
                )?)
            } else {
                None
            };
            let respond = self.model.forward_respond(
                dialogue,
                virtual_tokens.as_deref(),
                kb,
                vocab,
                self.config.disable_sip,
            )?;
            resp_tokens += respond.gold.len();
            resp_losses.push(sequence_nll(&respond.probs, &respond.gold)?);
            let (emo, _) = self.model.classify(&respond, dialogue.emotion_label)?;
            emo_losses.push(emo);
            attn_losses.push(self.model.attention_regularizer(&respond)?);
        }
        let mean = |losses: &[Tensor]| -> PipelineResult<Tensor> {
            let mut acc = losses[0].clone();
            for l in &losses[1..] {
                acc = acc.add(l)?;
            }
            Ok(acc.scale(1.0 / losses.len() as f64))
        };
        let prediction = if pred_losses.is_empty() {
            None
        } else {
            Some(mean(&pred_losses)?)
        };
        let response = mean(&resp_losses)?;
        let emotion = mean(&emo_losses)?;
        let attention = mean(&attn_losses)?;
        let switch_cmp = if self.config.switch_normalized && prediction.is_some() {
            let total_pred: f64 = pred_losses.iter().map(|t| t.item()).sum();
            let total_resp: f64 = resp_losses.iter().map(|t| t.item()).sum();
            Some((total_pred / pred_tokens as f64, total_resp / resp_tokens as f64))
        } else {
            None
        };
        let (total, report) = combine(
            prediction.as_ref(),
            &response,
            &emotion,
            &attention,
            &self.config.weights,
            switch_cmp,
        )
        .map_err(|e| {
            PipelineError::Numerical(format!("loss combination failed at step {}: {e}", self.step))
        })?;
        if !report.total.is_finite() {
            return Err(PipelineError::Numerical(format!(
                "non-finite loss at step {}: {report:?}",
                self.step
            )));
        }
        total.backward()?;
        self.step += 1;
        for p in &self.params {
            p.adam_update(self.config.lr, 0.9, 0.999, 1e-8, self.step);
            p.zero_grad();
        }
        Ok(report)
    }
}

/// Per-epoch summary.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub validation_perplexity: f64,
    pub validation_accuracy: f64,
}

/// Outcome of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub best_validation_perplexity: f64,
    pub stopped_early: bool,
}

/// Teacher-forced validation: corpus perplexity and emotion accuracy.
pub fn validation_stats(
    model: &ModelParams,
    dialogues: &[Dialogue],
    kb: &KnowledgeBase,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> PipelineResult<(f64, f64)> {
    if dialogues.is_empty() {
        return Err(PipelineError::Invalid("no dialogues to validate on".into()));
    }
    let mut nlls = Vec::new();
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    for dialogue in dialogues {
        let virtual_tokens = if !config.disable_lup && dialogue.supports_prediction() {
            Some(model.predict_virtual(dialogue, kb, vocab, config.decode_max_steps)?)
        } else {
            None
        };
        let out = model.forward_respond(
            dialogue,
            virtual_tokens.as_deref(),
            kb,
            vocab,
            config.disable_sip,
        )?;
        nlls.extend(per_token_nll(&out.probs, &out.gold)?);
        let (_, predicted) = model.classify(&out, dialogue.emotion_label)?;
        predictions.push(predicted);
        labels.push(dialogue.emotion_label);
    }
    let ppl = crate::evalmetrics::perplexity(&nlls)
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let acc = crate::evalmetrics::emotion_accuracy(&predictions, &labels)
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    Ok((ppl, acc))
}

/// Full evaluation: validation stats plus greedy generation for distinct-n.
pub fn evaluate(
    model: &ModelParams,
    dialogues: &[Dialogue],
    kb: &KnowledgeBase,
    vocab: &Vocabulary,
    config: &TrainConfig,
    distinct_mode: DistinctMode,
) -> PipelineResult<EvalReport> {
    let (ppl, acc) = validation_stats(model, dialogues, kb, vocab, config)?;
    let mut responses = Vec::with_capacity(dialogues.len());
    for dialogue in dialogues {
        let virtual_tokens = if !config.disable_lup && dialogue.supports_prediction() {
            Some(model.predict_virtual(dialogue, kb, vocab, config.decode_max_steps)?)
        } else {
            None
        };
        responses.push(model.respond_greedy(
            dialogue,
            virtual_tokens.as_deref(),
            kb,
            vocab,
            config.disable_sip,
            config.decode_max_steps,
        )?);
    }
    let d1 = distinct_n(&responses, 1, distinct_mode)
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let d2 = distinct_n(&responses, 2, distinct_mode)
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    Ok(EvalReport {
        emotion_accuracy: acc,
        perplexity: ppl,
        distinct1: d1,
        distinct2: d2,
    })
}

/// Run the training loop. Writes one CSV record per step to `log`
/// (`epoch,step,L,Lp,Lr,Le,La,alpha1_used`; alpha1 blank when the prediction
/// branch is off). `stop` is polled after each epoch's validation and may
/// end the run early (on top of perplexity-patience early stopping).
pub fn train(
    trainer: &mut Trainer,
    train_set: &[Dialogue],
    valid_set: &[Dialogue],
    kb: &KnowledgeBase,
    vocab: &Vocabulary,
    log: &mut dyn Write,
    mut stop: impl FnMut(&EpochStats) -> bool,
) -> PipelineResult<TrainOutcome> {
    if train_set.is_empty() {
        return Err(PipelineError::Invalid("empty training set".into()));
    }
    writeln!(log, "epoch,step,L,Lp,Lr,Le,La,alpha1_used")?;
    let mut rng = ChaCha8Rng::seed_from_u64(trainer.config.seed ^ 0x0ddba11);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best_ppl = f64::INFINITY;
    let mut epochs_since_best = 0usize;
    let mut stopped_early = false;
    for epoch in 1..=trainer.config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(trainer.config.batch_size) {
            let batch: Vec<&Dialogue> = chunk.iter().map(|&i| &train_set[i]).collect();
            let report = trainer.train_step(&batch, kb, vocab)?;
            epoch_loss += report.total;
            batches += 1;
            writeln!(
                log,
                "{epoch},{},{},{},{},{},{},{}",
                trainer.step_count(),
                report.total,
                report.prediction,
                report.response,
                report.emotion,
                report.attention,
                report
                    .alpha1_used
                    .map(|a| a.to_string())
                    .unwrap_or_default()
            )?;
        }
        let (ppl, acc) = if valid_set.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            validation_stats(&trainer.model, valid_set, kb, vocab, &trainer.config)?
        };
        let stats = EpochStats {
            epoch,
            mean_train_loss: epoch_loss / batches.max(1) as f64,
            validation_perplexity: ppl,
            validation_accuracy: acc,
        };
        history.push(stats.clone());
        if ppl.is_finite() && ppl < best_ppl {
            best_ppl = ppl;
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
        }
        if stop(&stats) {
            stopped_early = true;
            break;
        }
        if !valid_set.is_empty() && epochs_since_best >= trainer.config.patience {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        history,
        best_validation_perplexity: best_ppl,
        stopped_early,
    })
}

/// Persist Adam state next to a checkpoint: first/second moments per
/// parameter plus the global step, in the checkpoint record format.
pub fn save_optimizer_state(
    params: &[Parameter],
    step: u64,
    path: &Path,
) -> PipelineResult<()> {
    let mut records = Vec::with_capacity(params.len() * 2 + 1);
    for p in params {
        let shape = p.tensor().shape().to_vec();
        records.push(Parameter::new(
            format!("m.{}", p.name()),
            Tensor::from_shape(shape.clone(), p.moment1())?,
        ));
        records.push(Parameter::new(
            format!("v.{}", p.name()),
            Tensor::from_shape(shape, p.moment2())?,
        ));
    }
    records.push(Parameter::new(
        "adam.step",
        Tensor::vector(vec![step as f64])?,
    ));
    save_checkpoint(&records, path)?;
    Ok(())
}

/// Restore Adam state saved by `save_optimizer_state`; returns the step.
pub fn load_optimizer_state(params: &[Parameter], path: &Path) -> PipelineResult<u64> {
    let mut records = Vec::with_capacity(params.len() * 2 + 1);
    for p in params {
        let shape = p.tensor().shape().to_vec();
        records.push(Parameter::new(
            format!("m.{}", p.name()),
            Tensor::from_shape(shape.clone(), vec![0.0; p.tensor().len()])?,
        ));
        records.push(Parameter::new(
            format!("v.{}", p.name()),
            Tensor::from_shape(shape, vec![0.0; p.tensor().len()])?,
        ));
    }
    let step_holder = Parameter::new("adam.step", Tensor::vector(vec![0.0])?);
    records.push(step_holder.clone());
    load_checkpoint(&records, path)?;
    for (i, p) in params.iter().enumerate() {
        p.set_moments(
            &records[2 * i].tensor().values(),
            &records[2 * i + 1].tensor().values(),
        );
    }
    Ok(step_holder.tensor().values()[0] as u64)
}
