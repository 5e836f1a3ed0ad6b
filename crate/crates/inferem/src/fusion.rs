//! Multi-head attention based intention fusion: cross attention from the
//! dialogue representation into the last-utterance representation, with the
//! post-norm residual structure `NM(x + Att(x, kv, kv))` then
//! `NM(x + FF(x))`, plus the sequence-axis concatenation that mixes real and
//! virtual last utterances.

use rand_chacha::ChaCha8Rng;

use crate::autograd::{Parameter, Result, Tensor, TensorError};
use crate::layers::{FeedForward, LayerNorm, MultiHeadAttention};

/// One cross-attention fusion block. Output shape always equals the query
/// shape, so it can drop into the pipeline wherever its query came from.
pub struct MaifNet {
    attn: MultiHeadAttention,
    norm_attn: LayerNorm,
    ff: FeedForward,
    norm_ff: LayerNorm,
}

impl MaifNet {
    pub fn new(name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> MaifNet {
        MaifNet {
            attn: MultiHeadAttention::new(&format!("{name}.att"), dim, heads, rng),
            norm_attn: LayerNorm::new(&format!("{name}.ln1"), dim),
            ff: FeedForward::new(&format!("{name}.ff"), dim, rng),
            norm_ff: LayerNorm::new(&format!("{name}.ln2"), dim),
        }
    }

    /// Fuse key/value context into the query sequence.
    pub fn fuse(&self, query: &Tensor, key_value: &Tensor) -> Result<Tensor> {
        self.fuse_probed(query, key_value, None)
    }

    /// As `fuse`, optionally collecting per-head attention weights.
    pub fn fuse_probed(
        &self,
        query: &Tensor,
        key_value: &Tensor,
        probe: Option<&mut Vec<Tensor>>,
    ) -> Result<Tensor> {
        if query.rows() == 0 || key_value.rows() == 0 {
            return Err(TensorError::InvalidInput {
                op: "maifnet",
                reason: "empty query or key/value sequence".into(),
            });
        }
        let attended = self.attn.forward(query, key_value, key_value, false, probe)?;
        let s1 = self.norm_attn.forward(&query.add(&attended)?)?;
        let ff_out = self.ff.forward(&s1)?;
        self.norm_ff.forward(&s1.add(&ff_out)?)
    }

    pub fn collect(&self, out: &mut Vec<Parameter>) {
        self.attn.collect(out);
        self.norm_attn.collect(out);
        self.ff.collect(out);
        self.norm_ff.collect(out);
    }

    #[cfg(test)]
    pub(crate) fn attn(&self) -> &MultiHeadAttention {
        &self.attn
    }
}

/// Sequence-axis concatenation of the real last-utterance encoding with the
/// virtual one (absent under the no-prediction ablation), real rows first.
pub fn concat_intentions(real: &Tensor, virtual_enc: Option<&Tensor>) -> Result<Tensor> {
    match virtual_enc {
        None => Ok(real.clone()),
        Some(v) => {
            if v.cols() != real.cols() {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_intentions",
                    lhs: real.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            Tensor::concat(0, &[real, v])
        }
    }
}
