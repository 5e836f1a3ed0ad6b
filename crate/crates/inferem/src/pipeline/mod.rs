//! End-to-end model: the prediction branch (guess the speaker's next
//! utterance from the earlier history), intention fusion, and response
//! generation, wired over shared embedding tables.

mod train;

pub use train::{
    evaluate, load_optimizer_state, save_optimizer_state, train, validation_stats, EpochStats,
    TrainConfig, TrainOutcome, Trainer,
};

use std::fmt;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{CheckpointError, Parameter, Tensor, TensorError};
use crate::corpus::{CorpusError, Dialogue, KnowledgeBase, Role, Vocabulary, BOS, EOS};
use crate::decoder::{average_cross_attention, AttentionRecord, EmotionDecoder};
use crate::embedding::EmbeddingTables;
use crate::encoder::{emotion_signal, EcEncoder};
use crate::fusion::{concat_intentions, MaifNet};

#[derive(Debug)]
pub enum PipelineError {
    Tensor(TensorError),
    Corpus(CorpusError),
    Checkpoint(CheckpointError),
    Io(std::io::Error),
    /// Loss went non-finite; carries a diagnostic of the offending step.
    Numerical(String),
    Invalid(String),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Tensor(e) => write!(f, "{e}"),
            PipelineError::Corpus(e) => write!(f, "{e}"),
            PipelineError::Checkpoint(e) => write!(f, "{e}"),
            PipelineError::Io(e) => write!(f, "{e}"),
            PipelineError::Numerical(m) => write!(f, "numerical failure: {m}"),
            PipelineError::Invalid(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for PipelineError {}

impl From<TensorError> for PipelineError {
    fn from(e: TensorError) -> Self {
        PipelineError::Tensor(e)
    }
}

impl From<CorpusError> for PipelineError {
    fn from(e: CorpusError) -> Self {
        PipelineError::Corpus(e)
    }
}

impl From<CheckpointError> for PipelineError {
    fn from(e: CheckpointError) -> Self {
        PipelineError::Checkpoint(e)
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Io(e)
    }
}

pub type PipelineResult<T> = std::result::Result<T, PipelineError>;

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub max_len: usize,
    pub tie_encoders: bool,
    pub vocab_size: usize,
    pub num_emotions: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 300,
            heads: 2,
            encoder_layers: 2,
            decoder_layers: 2,
            max_len: 512,
            tie_encoders: false,
            vocab_size: 4,
            num_emotions: 2,
            seed: 0,
        }
    }
}

/// All trainable state: embedding tables, the four emotion context encoders,
/// the plain encoder for the virtual utterance, two fusion blocks, two
/// decoders and the emotion classifier.
pub struct ModelParams {
    pub tables: EmbeddingTables,
    encoders: Vec<Rc<EcEncoder>>,
    pub plain_encoder: EcEncoder,
    pub fusion_pred: MaifNet,
    pub fusion_resp: MaifNet,
    pub decoder_pred: EmotionDecoder,
    pub decoder_resp: EmotionDecoder,
    pub classifier: Parameter,
    pub config: ModelConfig,
}

impl ModelParams {
    pub fn new(config: ModelConfig) -> PipelineResult<ModelParams> {
        if config.dim == 0 || config.heads == 0 || !config.dim.is_multiple_of(config.heads) {
            return Err(PipelineError::Invalid(format!(
                "model dim {} must be a positive multiple of heads {}",
                config.dim, config.heads
            )));
        }
        if config.vocab_size <= EOS {
            return Err(PipelineError::Invalid("vocabulary too small".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tables = EmbeddingTables::new(config.vocab_size, config.dim, config.max_len, config.seed ^ 0x5eed);
        let encoders: Vec<Rc<EcEncoder>> = if config.tie_encoders {
            let shared = Rc::new(EcEncoder::new(
                "ecenc",
                config.dim,
                config.heads,
                config.encoder_layers,
                &mut rng,
            ));
            (0..4).map(|_| Rc::clone(&shared)).collect()
        } else {
            (1..=4)
                .map(|i| {
                    Rc::new(EcEncoder::new(
                        &format!("ecenc{i}"),
                        config.dim,
                        config.heads,
                        config.encoder_layers,
                        &mut rng,
                    ))
                })
                .collect()
        };
        let plain_encoder = EcEncoder::new("plain", config.dim, config.heads, config.encoder_layers, &mut rng);
        let fusion_pred = MaifNet::new("fusion_pred", config.dim, config.heads, &mut rng);
        let fusion_resp = MaifNet::new("fusion_resp", config.dim, config.heads, &mut rng);
        let decoder_pred = EmotionDecoder::new(
            "pred_dec",
            config.dim,
            config.heads,
            config.decoder_layers,
            config.vocab_size,
            &mut rng,
        );
        let decoder_resp = EmotionDecoder::new(
            "resp_dec",
            config.dim,
            config.heads,
            config.decoder_layers,
            config.vocab_size,
            &mut rng,
        );
        let classifier = Parameter::new(
            "classifier.we",
            Tensor::from_shape(
                vec![config.num_emotions, config.dim],
                crate::layers::uniform_values(&mut rng, config.num_emotions * config.dim, 0.1),
            )
            .expect("static shape"),
        );
        let model = ModelParams {
            tables,
            encoders,
            plain_encoder,
            fusion_pred,
            fusion_resp,
            decoder_pred,
            decoder_resp,
            classifier,
            config,
        };
        model.assert_unique_names()?;
        Ok(model)
    }

    pub fn encoder(&self, which: usize) -> &EcEncoder {
        &self.encoders[which - 1]
    }

    /// Every parameter exactly once (tied encoders contribute one copy).
    pub fn parameters(&self) -> Vec<Parameter> {
        let mut out = Vec::new();
        self.tables.collect(&mut out);
        if self.config.tie_encoders {
            self.encoders[0].collect(&mut out);
        } else {
            for enc in &self.encoders {
                enc.collect(&mut out);
            }
        }
        self.plain_encoder.collect(&mut out);
        self.fusion_pred.collect(&mut out);
        self.fusion_resp.collect(&mut out);
        self.decoder_pred.collect(&mut out);
        self.decoder_resp.collect(&mut out);
        out.push(self.classifier.clone());
        out
    }

    fn assert_unique_names(&self) -> PipelineResult<()> {
        let params = self.parameters();
        let mut seen = std::collections::HashSet::new();
        for p in &params {
            if !seen.insert(p.name().to_string()) {
                return Err(PipelineError::Invalid(format!(
                    "duplicate parameter name `{}`",
                    p.name()
                )));
            }
        }
        Ok(())
    }

    /// Parameters grouped by the pipeline stage that owns them, for the
    /// gradient-isolation checks.
    pub fn parameters_of(&self, part: ModelPart) -> Vec<Parameter> {
        let mut out = Vec::new();
        match part {
            ModelPart::PredictionDecoder => self.decoder_pred.collect(&mut out),
            ModelPart::ResponseDecoder => self.decoder_resp.collect(&mut out),
            ModelPart::PredictionFusion => self.fusion_pred.collect(&mut out),
            ModelPart::ResponseFusion => self.fusion_resp.collect(&mut out),
            ModelPart::Encoder(i) => self.encoders[i - 1].collect(&mut out),
            ModelPart::PlainEncoder => self.plain_encoder.collect(&mut out),
            ModelPart::Classifier => out.push(self.classifier.clone()),
            ModelPart::Embeddings => self.tables.collect(&mut out),
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ModelPart {
    PredictionDecoder,
    ResponseDecoder,
    PredictionFusion,
    ResponseFusion,
    /// 1-based encoder index, matching the four pipeline slots.
    Encoder(usize),
    PlainEncoder,
    Classifier,
    Embeddings,
}

/// Prediction-branch forward output.
pub struct PredictOutput {
    /// Teacher-forced distributions over the real last utterance + EOS.
    pub probs: Tensor,
    /// The gold target (last utterance token ids plus EOS).
    pub gold: Vec<usize>,
    /// Fused memory the decoder attends over.
    pub memory: Tensor,
    /// Emotion signal of the earlier history.
    pub signal: Tensor,
}

/// Response-branch forward output.
pub struct RespondOutput {
    pub probs: Tensor,
    pub gold: Vec<usize>,
    pub signal: Tensor,
    pub record: AttentionRecord,
    /// Intensity values of the full history, aligned with the memory rows
    /// the attention record covers (only when fusion memory spans the
    /// history, which it always does here).
    pub eta: Vec<f64>,
}

fn encode_ids(vocab: &Vocabulary, tokens: &[&str]) -> Vec<usize> {
    tokens.iter().map(|t| vocab.encode(t)).collect()
}

impl ModelParams {
    /// Build the prediction-branch memory and signal: encode the history
    /// without its last utterance, encode that last-but-one utterance, fuse.
    /// Needs at least two history utterances.
    fn predict_context(
        &self,
        dialogue: &Dialogue,
        kb: &KnowledgeBase,
        vocab: &Vocabulary,
    ) -> PipelineResult<(Tensor, Tensor)> {
        if !dialogue.supports_prediction() {
            return Err(PipelineError::Invalid(
                "prediction branch needs at least 2 history utterances".into(),
            ));
        }
        let (toks, roles) = dialogue.history_tokens_without_last();
        let ids = encode_ids(vocab, &toks);
        let enriched = self.tables.enrich(&ids, &roles, kb, vocab)?;
        let encoded_history = self.encoder(1).encode(&enriched)?;

        let prev = dialogue.second_to_last_utterance().expect("n >= 2");
        let prev_ids = vocab.encode_all(&prev.tokens);
        let prev_roles = vec![prev.role; prev_ids.len()];
        let enriched_prev = self.tables.enrich(&prev_ids, &prev_roles, kb, vocab)?;
        let encoded_prev = self.encoder(2).encode(&enriched_prev)?;

        let memory = self.fusion_pred.fuse(&encoded_history.hidden, &encoded_prev.hidden)?;
        let signal = emotion_signal(&encoded_history.hidden, &encoded_history.eta)?;
        Ok((memory, signal))
    }

    /// Teacher-forced prediction of the last utterance from the earlier
    /// history (both encoders, fusion, decoder).
    pub fn forward_predict(
        &self,
        dialogue: &Dialogue,
        kb: &KnowledgeBase,
        vocab: &Vocabulary,
    ) -> PipelineResult<PredictOutput> {
        let (memory, signal) = self.predict_context(dialogue, kb, vocab)?;
        let mut gold = vocab.encode_all(&dialogue.last_utterance().tokens);
        gold.push(EOS);
        let mut prefix = vec![BOS];
        prefix.extend(&gold[..gold.len() - 1]);
        let (probs, _) = self
            .decoder_pred
            .decode_prefix(&signal, &memory, &prefix, &self.tables)?;
        Ok(PredictOutput {
            probs,
            gold,
            memory,
            signal,
        })
    }

    /// Greedy-decode a virtual last utterance. Token ids only; gradients do
    /// not propagate through the argmax.
    pub fn predict_virtual(
        &self,
        dialogue: &Dialogue,
        kb: &KnowledgeBase,
        vocab: &Vocabulary,
        max_steps: usize,
    ) -> PipelineResult<Vec<usize>> {
        let (memory, signal) = self.predict_context(dialogue, kb, vocab)?;
        Ok(self
            .decoder_pred
            .greedy_decode(&signal, &memory, &self.tables, max_steps)?)
    }

    /// Build the response-branch memory: encode the full history and the
    /// last utterance, append the virtual utterance encoding, fuse (unless
    /// the intention-perception ablation is on, which leaves the plain
    /// history encoding as memory).
    fn respond_context(
        &self,
        dialogue: &Dialogue,
        virtual_tokens: Option<&[usize]>,
        kb: &KnowledgeBase,
        vocab: &Vocabulary,
        disable_sip: bool,
    ) -> PipelineResult<(Tensor, Tensor, Vec<f64>)> {
        let (toks, roles) = dialogue.history_tokens();
        let ids = encode_ids(vocab, &toks);
        let enriched = self.tables.enrich(&ids, &roles, kb, vocab)?;
        let encoded_history = self.encoder(3).encode(&enriched)?;
        let signal = emotion_signal(&encoded_history.hidden, &encoded_history.eta)?;
        if disable_sip {
            return Ok((encoded_history.hidden, signal, encoded_history.eta));
        }

        let last = dialogue.last_utterance();
        let last_ids = vocab.encode_all(&last.tokens);
        let last_roles = vec![last.role; last_ids.len()];
        let enriched_last = self.tables.enrich(&last_ids, &last_roles, kb, vocab)?;
        let encoded_last = self.encoder(4).encode(&enriched_last)?;

        let virtual_enc = match virtual_tokens {
            Some(v) if !v.is_empty() => {
                let roles = vec![Role::Speaker; v.len()];
                let embedded = self.tables.embed_sequence(v, &roles)?;
                Some(self.plain_encoder.encode_plain(&embedded)?)
            }
            _ => None,
        };
        let intention = concat_intentions(&encoded_last.hidden, virtual_enc.as_ref())?;
        let memory = self.fusion_resp.fuse(&encoded_history.hidden, &intention)?;
        Ok((memory, signal, encoded_history.eta))
    }

    /// Teacher-forced response distribution over the gold response + EOS.
    pub fn forward_respond(
        &self,
        dialogue: &Dialogue,
        virtual_tokens: Option<&[usize]>,
        kb: &KnowledgeBase,
        vocab: &Vocabulary,
        disable_sip: bool,
    ) -> PipelineResult<RespondOutput> {
        let (memory, signal, eta) =
            self.respond_context(dialogue, virtual_tokens, kb, vocab, disable_sip)?;
        let mut gold = vocab.encode_all(&dialogue.gold_response);
        gold.push(EOS);
        let mut prefix = vec![BOS];
        prefix.extend(&gold[..gold.len() - 1]);
        let (probs, record) =
            self.decoder_resp
                .decode_prefix(&signal, &memory, &prefix, &self.tables)?;
        Ok(RespondOutput {
            probs,
            gold,
            signal,
            record,
            eta,
        })
    }

    /// Greedy response generation.
    pub fn respond_greedy(
        &self,
        dialogue: &Dialogue,
        virtual_tokens: Option<&[usize]>,
        kb: &KnowledgeBase,
        vocab: &Vocabulary,
        disable_sip: bool,
        max_steps: usize,
    ) -> PipelineResult<Vec<usize>> {
        let (memory, signal, _) =
            self.respond_context(dialogue, virtual_tokens, kb, vocab, disable_sip)?;
        Ok(self
            .decoder_resp
            .greedy_decode(&signal, &memory, &self.tables, max_steps)?)
    }

    /// Classify the dialogue emotion from a respond-branch signal.
    pub fn classify(&self, output: &RespondOutput, label: usize) -> PipelineResult<(Tensor, usize)> {
        Ok(crate::objective::emotion_loss(
            &output.signal,
            self.classifier.tensor(),
            label,
        )?)
    }

    /// Attention regularizer for a respond-branch output. The decoder memory
    /// has one row per history word (fusion preserves its query shape), so
    /// the averaged cross-attention aligns with the intensity values.
    pub fn attention_regularizer(&self, output: &RespondOutput) -> PipelineResult<Tensor> {
        let averaged = average_cross_attention(&output.record)?;
        Ok(crate::objective::attention_loss(&output.eta, &averaged)?)
    }
}
