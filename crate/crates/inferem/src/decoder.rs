//! Emotion-conditioned transformer decoder: causal self-attention,
//! cross-attention over the fused memory, greedy decoding, and extraction of
//! the cross-attention scores the attention regularizer needs.

use rand_chacha::ChaCha8Rng;

use crate::autograd::{Parameter, Result, Tensor, TensorError};
use crate::corpus::{BOS, EOS};
use crate::embedding::EmbeddingTables;
use crate::layers::{FeedForward, LayerNorm, Linear, MultiHeadAttention};

/// Default cap on decoding steps.
pub const MAX_DECODE_STEPS: usize = 30;

/// Cross-attention scores of the final decoder layer: one `(steps, memory)`
/// matrix per head. Rows are attention distributions (sum to 1).
pub struct AttentionRecord {
    pub per_head: Vec<Tensor>,
}

impl AttentionRecord {
    pub fn heads(&self) -> usize {
        self.per_head.len()
    }
}

struct DecoderLayer {
    self_attn: MultiHeadAttention,
    norm_self: LayerNorm,
    cross_attn: MultiHeadAttention,
    norm_cross: LayerNorm,
    ff: FeedForward,
    norm_ff: LayerNorm,
}

impl DecoderLayer {
    fn new(name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> DecoderLayer {
        DecoderLayer {
            self_attn: MultiHeadAttention::new(&format!("{name}.self"), dim, heads, rng),
            norm_self: LayerNorm::new(&format!("{name}.ln1"), dim),
            cross_attn: MultiHeadAttention::new(&format!("{name}.cross"), dim, heads, rng),
            norm_cross: LayerNorm::new(&format!("{name}.ln2"), dim),
            ff: FeedForward::new(&format!("{name}.ff"), dim, rng),
            norm_ff: LayerNorm::new(&format!("{name}.ln3"), dim),
        }
    }

    fn forward(
        &self,
        x: &Tensor,
        memory: &Tensor,
        probe: Option<&mut Vec<Tensor>>,
    ) -> Result<Tensor> {
        let normed = self.norm_self.forward(x)?;
        let attended = self.self_attn.forward(&normed, &normed, &normed, true, None)?;
        let x = x.add(&attended)?;
        let normed = self.norm_cross.forward(&x)?;
        let cross = self.cross_attn.forward(&normed, memory, memory, false, probe)?;
        let x = x.add(&cross)?;
        let out = self.ff.forward(&self.norm_ff.forward(&x)?)?;
        x.add(&out)
    }

    fn collect(&self, out: &mut Vec<Parameter>) {
        self.self_attn.collect(out);
        self.norm_self.collect(out);
        self.cross_attn.collect(out);
        self.norm_cross.collect(out);
        self.ff.collect(out);
        self.norm_ff.collect(out);
    }
}

/// Decoder producing next-token distributions conditioned on an emotion
/// signal vector and an encoded memory. The signal is projected and added to
/// every target-position embedding, which keeps the conditioning mechanism
/// isolated behind one function.
pub struct EmotionDecoder {
    signal_proj: Linear,
    layers: Vec<DecoderLayer>,
    out_proj: Linear,
    dim: usize,
}

impl EmotionDecoder {
    pub fn new(
        name: &str,
        dim: usize,
        heads: usize,
        layers: usize,
        vocab_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> EmotionDecoder {
        EmotionDecoder {
            signal_proj: Linear::new(&format!("{name}.signal"), dim, dim, rng),
            layers: (0..layers)
                .map(|i| DecoderLayer::new(&format!("{name}.layer{i}"), dim, heads, rng))
                .collect(),
            out_proj: Linear::new(&format!("{name}.out"), dim, vocab_size, rng),
            dim,
        }
    }

    /// Token distributions for every position of `prefix` (which must start
    /// with BOS), plus the final layer's cross-attention record. Row `j`
    /// depends only on `prefix[0..=j]` and the memory.
    pub fn decode_prefix(
        &self,
        signal: &Tensor,
        memory: &Tensor,
        prefix: &[usize],
        tables: &EmbeddingTables,
    ) -> Result<(Tensor, AttentionRecord)> {
        if prefix.is_empty() {
            return Err(TensorError::InvalidInput {
                op: "dec",
                reason: "empty target prefix (must start with BOS)".into(),
            });
        }
        if prefix[0] != BOS {
            return Err(TensorError::InvalidInput {
                op: "dec",
                reason: format!("prefix must start with BOS, got token {}", prefix[0]),
            });
        }
        if memory.rows() == 0 {
            return Err(TensorError::InvalidInput {
                op: "dec",
                reason: "empty memory".into(),
            });
        }
        if signal.shape() != [self.dim] {
            return Err(TensorError::ShapeMismatch {
                op: "dec",
                lhs: signal.shape().to_vec(),
                rhs: vec![self.dim],
            });
        }
        let t = prefix.len();
        let positions: Vec<usize> = (0..t).collect();
        let words = tables.word_rows(prefix)?;
        let pos = Tensor::embedding_lookup(tables.positional.tensor(), &positions)?;
        let projected = self.signal_proj.forward_vec(signal)?;
        let mut x = words.add(&pos)?.add_bias(&projected)?;
        let mut record = Vec::new();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let probe = if i == last { Some(&mut record) } else { None };
            x = layer.forward(&x, memory, probe)?;
        }
        let logits = self.out_proj.forward(&x)?;
        Ok((logits.softmax(), AttentionRecord { per_head: record }))
    }

    /// Greedy decoding: start from BOS, append the argmax token each step,
    /// stop at EOS or `max_steps`. Returns emitted tokens without BOS/EOS.
    pub fn greedy_decode(
        &self,
        signal: &Tensor,
        memory: &Tensor,
        tables: &EmbeddingTables,
        max_steps: usize,
    ) -> Result<Vec<usize>> {
        let mut prefix = vec![BOS];
        let mut out = Vec::new();
        for _ in 0..max_steps {
            let (probs, _) = self.decode_prefix(signal, memory, &prefix, tables)?;
            let row_start = (prefix.len() - 1) * probs.cols();
            let values = probs.values();
            let row = &values[row_start..row_start + probs.cols()];
            let next = argmax(row);
            if next == EOS {
                break;
            }
            out.push(next);
            prefix.push(next);
        }
        Ok(out)
    }

    pub fn collect(&self, out: &mut Vec<Parameter>) {
        self.signal_proj.collect(out);
        for layer in &self.layers {
            layer.collect(out);
        }
        self.out_proj.collect(out);
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean over heads, then over target steps, of the cross-attention weight on
/// each memory position. The result sums to 1 and stays on the tape so the
/// attention loss can push gradients into the decoder.
pub fn average_cross_attention(record: &AttentionRecord) -> Result<Tensor> {
    if record.per_head.is_empty() {
        return Err(TensorError::InvalidInput {
            op: "average_cross_attention",
            reason: "record has no heads".into(),
        });
    }
    let mut acc: Option<Tensor> = None;
    for head in &record.per_head {
        let per_position = head.mean_axis0()?;
        acc = Some(match acc {
            None => per_position,
            Some(a) => a.add(&per_position)?,
        });
    }
    Ok(acc.expect("at least one head").scale(1.0 / record.heads() as f64))
}
