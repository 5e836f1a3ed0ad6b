//! Shared building blocks: linear maps, layer norm, feed-forward and
//! multi-head attention. Everything works on `(seq, dim)` matrices.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Parameter, Result, Tensor, TensorError};

/// Logit value used to disable masked attention slots. Large enough that the
/// softmax weight underflows to exactly zero in f64.
const MASK_LOGIT: f64 = -1e9;

pub(crate) fn uniform_values(rng: &mut ChaCha8Rng, len: usize, bound: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_shape(vec![rows, cols], uniform_values(rng, rows * cols, bound))
        .expect("static shape")
}

/// Fully connected layer `x W + b`.
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    pub fn new(name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Linear {
        Linear {
            weight: Parameter::new(format!("{name}.w"), xavier(rng, input, output)),
            bias: Parameter::new(
                format!("{name}.b"),
                Tensor::from_shape(vec![output], vec![0.0; output]).expect("static shape"),
            ),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(self.weight.tensor())?.add_bias(self.bias.tensor())
    }

    /// Apply to a single vector, returning a vector.
    pub fn forward_vec(&self, x: &Tensor) -> Result<Tensor> {
        let d = x.cols();
        let out = self.forward(&x.reshape(vec![1, d])?)?;
        let c = out.cols();
        out.reshape(vec![c])
    }

    pub fn collect(&self, out: &mut Vec<Parameter>) {
        out.push(self.weight.clone());
        out.push(self.bias.clone());
    }
}

/// Layer normalization over the feature axis with learnable gain and bias.
pub struct LayerNorm {
    pub gain: Parameter,
    pub bias: Parameter,
    eps: f64,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(name: &str, dim: usize) -> LayerNorm {
        LayerNorm {
            gain: Parameter::new(
                format!("{name}.gain"),
                Tensor::from_shape(vec![dim], vec![1.0; dim]).expect("static shape"),
            ),
            bias: Parameter::new(
                format!("{name}.bias"),
                Tensor::from_shape(vec![dim], vec![0.0; dim]).expect("static shape"),
            ),
            eps: Self::EPS,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.layer_norm(self.eps)?
            .mul_bias(self.gain.tensor())?
            .add_bias(self.bias.tensor())
    }

    pub fn collect(&self, out: &mut Vec<Parameter>) {
        out.push(self.gain.clone());
        out.push(self.bias.clone());
    }
}

/// Two fully connected layers with a ReLU in between, inner width `4 * dim`.
pub struct FeedForward {
    pub inner: Linear,
    pub output: Linear,
}

impl FeedForward {
    pub fn new(name: &str, dim: usize, rng: &mut ChaCha8Rng) -> FeedForward {
        FeedForward {
            inner: Linear::new(&format!("{name}.ff1"), dim, 4 * dim, rng),
            output: Linear::new(&format!("{name}.ff2"), 4 * dim, dim, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.output.forward(&self.inner.forward(x)?.relu())
    }

    pub fn collect(&self, out: &mut Vec<Parameter>) {
        self.inner.collect(out);
        self.output.collect(out);
    }
}

/// Scaled dot-product multi-head attention with query/key/value/output
/// projections. Scores scale by `1/sqrt(dim / heads)`.
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    heads: usize,
    dim: usize,
}

impl MultiHeadAttention {
    pub fn new(name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> MultiHeadAttention {
        assert!(heads > 0 && dim.is_multiple_of(heads), "dim {dim} must divide into {heads} heads");
        MultiHeadAttention {
            query: Linear::new(&format!("{name}.q"), dim, dim, rng),
            key: Linear::new(&format!("{name}.k"), dim, dim, rng),
            value: Linear::new(&format!("{name}.v"), dim, dim, rng),
            output: Linear::new(&format!("{name}.o"), dim, dim, rng),
            heads,
            dim,
        }
    }

    /// Attend `queries` (a x d) over `keys`/`values` (b x d). With `causal`
    /// set, position i only sees keys 0..=i (requires a == b). When `probe`
    /// is given, the per-head attention weight matrices (a x b) are pushed
    /// into it.
    pub fn forward(
        &self,
        queries: &Tensor,
        keys: &Tensor,
        values: &Tensor,
        causal: bool,
        mut probe: Option<&mut Vec<Tensor>>,
    ) -> Result<Tensor> {
        if keys.shape() != values.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "attention",
                lhs: keys.shape().to_vec(),
                rhs: values.shape().to_vec(),
            });
        }
        let a = queries.rows();
        let b = keys.rows();
        if causal && a != b {
            return Err(TensorError::InvalidInput {
                op: "attention",
                reason: format!("causal mask needs square attention, got {a}x{b}"),
            });
        }
        let q = self.query.forward(queries)?;
        let k = self.key.forward(keys)?;
        let v = self.value.forward(values)?;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let causal_mask: Vec<bool> = if causal {
            (0..a * b).map(|idx| idx % b > idx / b).collect()
        } else {
            Vec::new()
        };
        let mut head_outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.slice_cols(h * dh, dh)?;
            let kh = k.slice_cols(h * dh, dh)?;
            let vh = v.slice_cols(h * dh, dh)?;
            let mut scores = qh.matmul(&kh.transpose()?)?.scale(scale);
            if causal {
                scores = scores.masked_fill(&causal_mask, MASK_LOGIT)?;
            }
            let weights = scores.softmax();
            if let Some(probe) = probe.as_deref_mut() {
                probe.push(weights.clone());
            }
            head_outputs.push(weights.matmul(&vh)?);
        }
        let refs: Vec<&Tensor> = head_outputs.iter().collect();
        self.output.forward(&Tensor::concat(1, &refs)?)
    }

    pub fn collect(&self, out: &mut Vec<Parameter>) {
        self.query.collect(out);
        self.key.collect(out);
        self.value.collect(out);
        self.output.collect(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn linear_output_shape() {
        let mut r = rng();
        let lin = Linear::new("t", 3, 5, &mut r);
        let x = Tensor::zeros(2, 3);
        assert_eq!(lin.forward(&x).unwrap().shape(), &[2, 5]);
    }

    #[test]
    fn attention_weights_are_row_stochastic_per_head() {
        let mut r = rng();
        let mha = MultiHeadAttention::new("t", 8, 2, &mut r);
        let q = Tensor::from_shape(vec![3, 8], uniform_values(&mut r, 24, 1.0)).unwrap();
        let kv = Tensor::from_shape(vec![5, 8], uniform_values(&mut r, 40, 1.0)).unwrap();
        let mut probe = Vec::new();
        mha.forward(&q, &kv, &kv, false, Some(&mut probe)).unwrap();
        assert_eq!(probe.len(), 2);
        for w in &probe {
            assert_eq!(w.shape(), &[3, 5]);
            for row in w.values().chunks(5) {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn causal_mask_blocks_future_positions() {
        let mut r = rng();
        let mha = MultiHeadAttention::new("t", 4, 1, &mut r);
        let x = Tensor::from_shape(vec![4, 4], uniform_values(&mut r, 16, 1.0)).unwrap();
        let mut probe = Vec::new();
        mha.forward(&x, &x, &x, true, Some(&mut probe)).unwrap();
        let w = probe[0].values();
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_eq!(w[i * 4 + j], 0.0, "future weight at ({i},{j}) leaked");
            }
        }
    }

    #[test]
    fn attention_gradients_reach_queries_and_keys() {
        let mut r = rng();
        let mha = MultiHeadAttention::new("t", 4, 2, &mut r);
        let q = Tensor::from_shape(vec![2, 4], uniform_values(&mut r, 8, 1.0)).unwrap();
        let kv = Tensor::from_shape(vec![3, 4], uniform_values(&mut r, 12, 1.0)).unwrap();
        for point in [&q, &kv] {
            let err = crate::autograd::gradient_check_params(
                || Ok(mha.forward(&q, &kv, &kv, false, None)?.square().mean()),
                point,
            )
            .unwrap();
            assert!(err < 1e-4, "attention grad error {err}");
        }
    }
}
