//! Emotion context encoding: graph attention over concept neighbors followed
//! by transformer self-attention layers, plus intensity-weighted pooling of
//! the encoded sequence into a single emotion signal vector.

use rand_chacha::ChaCha8Rng;

use crate::autograd::{Parameter, Result, Tensor, TensorError};
use crate::embedding::EnrichedSequence;
use crate::layers::{FeedForward, LayerNorm, MultiHeadAttention};

/// One pre-norm transformer encoder layer: self-attention then feed-forward,
/// each applied to a normalized input inside a residual connection.
struct EncoderLayer {
    attn: MultiHeadAttention,
    norm_attn: LayerNorm,
    ff: FeedForward,
    norm_ff: LayerNorm,
}

impl EncoderLayer {
    fn new(name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> EncoderLayer {
        EncoderLayer {
            attn: MultiHeadAttention::new(&format!("{name}.attn"), dim, heads, rng),
            norm_attn: LayerNorm::new(&format!("{name}.ln1"), dim),
            ff: FeedForward::new(&format!("{name}.ff"), dim, rng),
            norm_ff: LayerNorm::new(&format!("{name}.ln2"), dim),
        }
    }

    fn forward(&self, x: &Tensor, probe: Option<&mut Vec<Tensor>>) -> Result<Tensor> {
        let normed = self.norm_attn.forward(x)?;
        let attended = self.attn.forward(&normed, &normed, &normed, false, probe)?;
        let x = x.add(&attended)?;
        let out = self.ff.forward(&self.norm_ff.forward(&x)?)?;
        x.add(&out)
    }

    fn collect(&self, out: &mut Vec<Parameter>) {
        self.attn.collect(out);
        self.norm_attn.collect(out);
        self.ff.collect(out);
        self.norm_ff.collect(out);
    }
}

/// An encoded token sequence with the intensity values carried alongside.
pub struct EncodedSequence {
    pub hidden: Tensor,
    pub eta: Vec<f64>,
}

/// Emotion context encoder: a parameter-free graph-attention aggregation of
/// concept neighbors into each position, followed by `layers` transformer
/// encoder layers. Also serves as the plain encoder when fed a bare sequence.
pub struct EcEncoder {
    layers: Vec<EncoderLayer>,
    dim: usize,
}

impl EcEncoder {
    pub fn new(name: &str, dim: usize, heads: usize, layers: usize, rng: &mut ChaCha8Rng) -> EcEncoder {
        EcEncoder {
            layers: (0..layers)
                .map(|i| EncoderLayer::new(&format!("{name}.layer{i}"), dim, heads, rng))
                .collect(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-position scaled dot-product attention over `{self} u neighbors`,
    /// neighbor logits pre-multiplied by their knowledge-base relatedness.
    /// Positions without neighbors pass through unchanged (softmax over a
    /// singleton puts weight 1 on self).
    fn graph_attention(&self, enriched: &EnrichedSequence) -> Result<Tensor> {
        if enriched.concepts.iter().all(|c| c.is_none()) {
            return Ok(enriched.base.clone());
        }
        let q = enriched.len();
        let scale = 1.0 / (self.dim as f64).sqrt();
        let mut rows = Vec::with_capacity(q);
        for i in 0..q {
            let row = enriched.base.slice_rows(i, 1)?;
            match &enriched.concepts[i] {
                None => rows.push(row),
                Some(neighbors) => {
                    let stacked = Tensor::concat(0, &[&row, &neighbors.embeddings])?;
                    let logits = stacked.matmul(&row.transpose()?)?.scale(scale);
                    let mut relatedness = vec![1.0];
                    relatedness.extend(&neighbors.scores);
                    let gate = Tensor::from_shape(vec![logits.rows(), 1], relatedness)?;
                    let weights = logits.mul(&gate)?.transpose()?.softmax();
                    rows.push(weights.matmul(&stacked)?);
                }
            }
        }
        let refs: Vec<&Tensor> = rows.iter().collect();
        Tensor::concat(0, &refs)
    }

    /// Full emotion-context encoding of an enriched sequence.
    pub fn encode(&self, enriched: &EnrichedSequence) -> Result<EncodedSequence> {
        if enriched.is_empty() {
            return Err(TensorError::InvalidInput {
                op: "ecenc",
                reason: "empty input sequence".into(),
            });
        }
        let mut hidden = self.graph_attention(enriched)?;
        for layer in &self.layers {
            hidden = layer.forward(&hidden, None)?;
        }
        Ok(EncodedSequence {
            hidden,
            eta: enriched.eta.clone(),
        })
    }

    /// Transformer encoding of an already-embedded sequence, no graph step.
    pub fn encode_plain(&self, embedded: &Tensor) -> Result<Tensor> {
        let mut hidden = embedded.clone();
        for layer in &self.layers {
            hidden = layer.forward(&hidden, None)?;
        }
        Ok(hidden)
    }

    /// As `encode_plain` but collecting every layer/head attention matrix.
    pub fn encode_plain_probed(&self, embedded: &Tensor, probe: &mut Vec<Tensor>) -> Result<Tensor> {
        let mut hidden = embedded.clone();
        for layer in &self.layers {
            hidden = layer.forward(&hidden, Some(probe))?;
        }
        Ok(hidden)
    }

    pub fn collect(&self, out: &mut Vec<Parameter>) {
        for layer in &self.layers {
            layer.collect(out);
        }
    }
}

/// Intensity-softmax pooling: `softmax(eta)^T x S`, a convex combination of
/// the rows of `S`.
pub fn emotion_signal(encoded: &Tensor, eta: &[f64]) -> Result<Tensor> {
    let q = encoded.rows();
    if eta.len() != q {
        return Err(TensorError::ShapeMismatch {
            op: "emotion_signal",
            lhs: encoded.shape().to_vec(),
            rhs: vec![eta.len()],
        });
    }
    let weights = Tensor::vector(eta.to_vec())?.softmax().reshape(vec![1, q])?;
    let pooled = weights.matmul(encoded)?;
    let d = pooled.cols();
    pooled.reshape(vec![d])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::ConceptNeighbors;
    use rand::{Rng, SeedableRng};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        let vals: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::matrix(r, c, vals).unwrap()
    }

    #[test]
    fn no_concepts_makes_graph_attention_identity() {
        let mut r = rng();
        let enc = EcEncoder::new("e", 4, 2, 0, &mut r);
        let base = random_matrix(&mut r, 3, 4);
        let enriched = EnrichedSequence::bare(base.clone());
        let out = enc.encode(&enriched).unwrap();
        assert_eq!(out.hidden.values(), base.values());
    }

    #[test]
    fn zero_depth_single_row_is_graph_aggregated_row() {
        let mut r = rng();
        let enc = EcEncoder::new("e", 4, 2, 0, &mut r);
        let base = random_matrix(&mut r, 1, 4);
        let neighbors = ConceptNeighbors {
            embeddings: random_matrix(&mut r, 1, 4),
            scores: vec![0.8],
        };
        let enriched = EnrichedSequence {
            base: base.clone(),
            concepts: vec![Some(neighbors)],
            eta: vec![0.3],
        };
        let out = enc.encode(&enriched).unwrap();
        assert_eq!(out.hidden.shape(), &[1, 4]);
        // output must be a convex combination of self and the neighbor
        let vals = out.hidden.values();
        assert!(vals.iter().all(|v| v.is_finite()));
        assert_ne!(vals, base.values());
    }

    #[test]
    fn output_shape_is_preserved() {
        let mut r = rng();
        let enc = EcEncoder::new("e", 8, 2, 2, &mut r);
        for q in [1usize, 2, 30] {
            let x = random_matrix(&mut r, q, 8);
            let out = enc.encode_plain(&x).unwrap();
            assert_eq!(out.shape(), &[q, 8]);
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        let mut r = rng();
        let enc = EcEncoder::new("e", 4, 2, 1, &mut r);
        let enriched = EnrichedSequence {
            base: Tensor::zeros(1, 4),
            concepts: vec![],
            eta: vec![],
        };
        assert!(enc.encode(&enriched).is_err());
    }

    /// Independent dense recomputation of the tiny-instance forward pass:
    /// graph attention with one concept at one position, then zero layers.
    #[test]
    fn tiny_instance_matches_brute_force() {
        let mut r = rng();
        let enc = EcEncoder::new("e", 4, 1, 0, &mut r);
        let base = random_matrix(&mut r, 3, 4);
        let concept = random_matrix(&mut r, 1, 4);
        let score = 0.6;
        let enriched = EnrichedSequence {
            base: base.clone(),
            concepts: vec![None, Some(ConceptNeighbors {
                embeddings: concept.clone(),
                scores: vec![score],
            }), None],
            eta: vec![0.0; 3],
        };
        let got = enc.encode(&enriched).unwrap().hidden.values();

        // scalar-loop oracle
        let b = base.values();
        let c = concept.values();
        let scale = 1.0 / 4.0f64.sqrt();
        let x1 = &b[4..8];
        let dot_self: f64 = x1.iter().map(|v| v * v).sum::<f64>() * scale;
        let dot_nb: f64 = x1.iter().zip(&c[..4]).map(|(a, b)| a * b).sum::<f64>() * scale * score;
        let m = dot_self.max(dot_nb);
        let (e0, e1) = ((dot_self - m).exp(), (dot_nb - m).exp());
        let (w0, w1) = (e0 / (e0 + e1), e1 / (e0 + e1));
        for j in 0..4 {
            let expect = w0 * x1[j] + w1 * c[j];
            assert!((got[4 + j] - expect).abs() < 1e-10, "col {j}");
        }
        assert_eq!(&got[0..4], &b[0..4]);
        assert_eq!(&got[8..12], &b[8..12]);
    }

    #[test]
    fn ecenc_equals_plain_under_empty_kb() {
        let mut r = rng();
        let enc = EcEncoder::new("e", 8, 2, 2, &mut r);
        let x = random_matrix(&mut r, 5, 8);
        let via_ecenc = enc.encode(&EnrichedSequence::bare(x.clone())).unwrap();
        let via_plain = enc.encode_plain(&x).unwrap();
        assert_eq!(via_ecenc.hidden.values(), via_plain.values());
    }

    #[test]
    fn self_attention_rows_sum_to_one_in_every_layer() {
        let mut r = rng();
        let enc = EcEncoder::new("e", 8, 2, 2, &mut r);
        let x = random_matrix(&mut r, 4, 8);
        let mut probe = Vec::new();
        enc.encode_plain_probed(&x, &mut probe).unwrap();
        assert_eq!(probe.len(), 4); // 2 layers x 2 heads
        for w in &probe {
            for row in w.values().chunks(w.cols()) {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn emotion_signal_uniform_eta_is_column_mean() {
        let mut r = rng();
        let s = random_matrix(&mut r, 4, 3);
        let e = emotion_signal(&s, &[0.5; 4]).unwrap();
        let vals = s.values();
        for j in 0..3 {
            let mean = (0..4).map(|i| vals[i * 3 + j]).sum::<f64>() / 4.0;
            assert!((e.values()[j] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn emotion_signal_single_row_is_that_row() {
        let s = Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let e = emotion_signal(&s, &[0.9]).unwrap();
        assert_eq!(e.values(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn emotion_signal_analytic_two_row_case() {
        let s = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let e = emotion_signal(&s, &[0.0, 3.0f64.ln()]).unwrap();
        let got = e.values();
        assert!((got[0] - 0.25).abs() < 1e-12);
        assert!((got[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn emotion_signal_is_shift_invariant_and_convex() {
        let mut r = rng();
        for _ in 0..20 {
            let q = r.gen_range(1..6);
            let d = r.gen_range(1..5);
            let s = random_matrix(&mut r, q, d);
            let eta: Vec<f64> = (0..q).map(|_| r.gen_range(0.0..1.0)).collect();
            let shifted: Vec<f64> = eta.iter().map(|v| v + 7.3).collect();
            let e1 = emotion_signal(&s, &eta).unwrap().values();
            let e2 = emotion_signal(&s, &shifted).unwrap().values();
            let sv = s.values();
            for j in 0..d {
                assert!((e1[j] - e2[j]).abs() < 1e-9, "shift invariance");
                let col: Vec<f64> = (0..q).map(|i| sv[i * d + j]).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(e1[j] >= lo - 1e-12 && e1[j] <= hi + 1e-12, "convexity");
            }
        }
    }

    #[test]
    fn ecenc_gradients_reach_input_and_parameters() {
        let mut r = rng();
        let enc = EcEncoder::new("e", 4, 2, 1, &mut r);
        let x = random_matrix(&mut r, 3, 4);
        let err = crate::autograd::gradient_check_params(
            || Ok(enc.encode_plain(&x)?.square().mean()),
            &x,
        )
        .unwrap();
        assert!(err < 1e-4, "ecenc grad error {err}");
        let mut params = Vec::new();
        enc.collect(&mut params);
        let w = params.iter().find(|p| p.name().ends_with("attn.q.w")).unwrap();
        let err = crate::autograd::gradient_check_params(
            || Ok(enc.encode_plain(&x)?.square().mean()),
            w.tensor(),
        )
        .unwrap();
        assert!(err < 1e-4, "ecenc param grad error {err}");
    }
}
