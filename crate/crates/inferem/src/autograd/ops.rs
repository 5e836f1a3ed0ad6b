//! Tensor primitives: forward values plus recorded backward rules.

use super::{Op, Result, Tensor, TensorError};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Row-major matrix product via the dgemm kernel. `beta = 1.0` accumulates.
#[allow(clippy::too_many_arguments)]
fn dgemm_rowmajor(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tensor {
    /// Matrix product of a `(m, k)` and a `(k, n)` tensor.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = match self.shape() {
            [m, k] => (*m, *k),
            _ => {
                return Err(TensorError::InvalidInput {
                    op: "matmul",
                    reason: format!("lhs must be a matrix, got shape {:?}", self.shape()),
                })
            }
        };
        let (k2, n) = match other.shape() {
            [k2, n] => (*k2, *n),
            _ => {
                return Err(TensorError::InvalidInput {
                    op: "matmul",
                    reason: format!("rhs must be a matrix, got shape {:?}", other.shape()),
                })
            }
        };
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        {
            let a = self.node.values.borrow();
            let b = other.node.values.borrow();
            dgemm_rowmajor(m, k, n, &a, (k as isize, 1), &b, (n as isize, 1), 0.0, &mut out);
        }
        Ok(Tensor::new_node(
            vec![m, n],
            out,
            Some(Op {
                parents: vec![self.clone(), other.clone()],
                backward: Box::new(move |grad, parents| {
                    let (a, b) = (&parents[0], &parents[1]);
                    {
                        // dA += G x B^T
                        let bv = b.node.values.borrow();
                        let mut ga = a.node.grad.borrow_mut();
                        dgemm_rowmajor(m, n, k, grad, (n as isize, 1), &bv, (1, n as isize), 1.0, &mut ga);
                    }
                    {
                        // dB += A^T x G
                        let av = a.node.values.borrow();
                        let mut gb = b.node.grad.borrow_mut();
                        dgemm_rowmajor(k, m, n, &av, (1, k as isize), grad, (n as isize, 1), 1.0, &mut gb);
                    }
                }),
            }),
        ))
    }

    /// Elementwise sum of two same-shaped tensors.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let out = {
            let a = self.node.values.borrow();
            let b = other.node.values.borrow();
            a.iter().zip(b.iter()).map(|(x, y)| x + y).collect()
        };
        Ok(Tensor::new_node(
            self.shape().to_vec(),
            out,
            Some(Op {
                parents: vec![self.clone(), other.clone()],
                backward: Box::new(|grad, parents| {
                    parents[0].accumulate_grad(grad);
                    parents[1].accumulate_grad(grad);
                }),
            }),
        ))
    }

    /// Elementwise difference.
    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let out = {
            let a = self.node.values.borrow();
            let b = other.node.values.borrow();
            a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
        };
        Ok(Tensor::new_node(
            self.shape().to_vec(),
            out,
            Some(Op {
                parents: vec![self.clone(), other.clone()],
                backward: Box::new(|grad, parents| {
                    parents[0].accumulate_grad(grad);
                    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                    parents[1].accumulate_grad(&neg);
                }),
            }),
        ))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let out = {
            let a = self.node.values.borrow();
            let b = other.node.values.borrow();
            a.iter().zip(b.iter()).map(|(x, y)| x * y).collect()
        };
        Ok(Tensor::new_node(
            self.shape().to_vec(),
            out,
            Some(Op {
                parents: vec![self.clone(), other.clone()],
                backward: Box::new(|grad, parents| {
                    let (a, b) = (&parents[0], &parents[1]);
                    let da: Vec<f64> = {
                        let bv = b.node.values.borrow();
                        grad.iter().zip(bv.iter()).map(|(g, y)| g * y).collect()
                    };
                    let db: Vec<f64> = {
                        let av = a.node.values.borrow();
                        grad.iter().zip(av.iter()).map(|(g, x)| g * x).collect()
                    };
                    a.accumulate_grad(&da);
                    b.accumulate_grad(&db);
                }),
            }),
        ))
    }

    /// Multiply every element by a constant.
    pub fn scale(&self, factor: f64) -> Tensor {
        let out: Vec<f64> = self.node.values.borrow().iter().map(|x| x * factor).collect();
        Tensor::new_node(
            self.shape().to_vec(),
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(move |grad, parents| {
                    let scaled: Vec<f64> = grad.iter().map(|g| g * factor).collect();
                    parents[0].accumulate_grad(&scaled);
                }),
            }),
        )
    }

    /// Add a length-`cols` vector to every row of a matrix.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let (r, c) = self.matrix_dims("add_bias")?;
        if bias.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        let out = {
            let a = self.node.values.borrow();
            let b = bias.node.values.borrow();
            let mut out = Vec::with_capacity(r * c);
            for i in 0..r {
                for j in 0..c {
                    out.push(a[i * c + j] + b[j]);
                }
            }
            out
        };
        Ok(Tensor::new_node(
            vec![r, c],
            out,
            Some(Op {
                parents: vec![self.clone(), bias.clone()],
                backward: Box::new(move |grad, parents| {
                    parents[0].accumulate_grad(grad);
                    let mut db = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            db[j] += grad[i * c + j];
                        }
                    }
                    parents[1].accumulate_grad(&db);
                }),
            }),
        ))
    }

    /// Multiply every row of a matrix elementwise by a length-`cols` vector.
    pub fn mul_bias(&self, gain: &Tensor) -> Result<Tensor> {
        let (r, c) = self.matrix_dims("mul_bias")?;
        if gain.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "mul_bias",
                lhs: self.shape().to_vec(),
                rhs: gain.shape().to_vec(),
            });
        }
        let out = {
            let a = self.node.values.borrow();
            let g = gain.node.values.borrow();
            let mut out = Vec::with_capacity(r * c);
            for i in 0..r {
                for j in 0..c {
                    out.push(a[i * c + j] * g[j]);
                }
            }
            out
        };
        Ok(Tensor::new_node(
            vec![r, c],
            out,
            Some(Op {
                parents: vec![self.clone(), gain.clone()],
                backward: Box::new(move |grad, parents| {
                    let (mat, gain) = (&parents[0], &parents[1]);
                    let dmat: Vec<f64> = {
                        let gv = gain.node.values.borrow();
                        grad.iter()
                            .enumerate()
                            .map(|(idx, g)| g * gv[idx % c])
                            .collect()
                    };
                    let mut dgain = vec![0.0; c];
                    {
                        let mv = mat.node.values.borrow();
                        for i in 0..r {
                            for j in 0..c {
                                dgain[j] += grad[i * c + j] * mv[i * c + j];
                            }
                        }
                    }
                    mat.accumulate_grad(&dmat);
                    gain.accumulate_grad(&dgain);
                }),
            }),
        ))
    }

    fn matrix_dims(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::InvalidInput {
                op,
                reason: format!("expected a matrix, got shape {:?}", self.shape()),
            }),
        }
    }

    /// Concatenate along `axis` (0 = rows, 1 = columns). Vectors only axis 0.
    pub fn concat(axis: usize, parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(TensorError::InvalidInput {
                op: "concat",
                reason: "no tensors to concatenate".into(),
            });
        }
        let rank = parts[0].shape().len();
        if parts.iter().any(|p| p.shape().len() != rank) {
            return Err(TensorError::InvalidInput {
                op: "concat",
                reason: "mixed ranks".into(),
            });
        }
        match (rank, axis) {
            (1, 0) => {
                let mut out = Vec::new();
                let mut lens = Vec::with_capacity(parts.len());
                for p in parts {
                    out.extend_from_slice(&p.node.values.borrow());
                    lens.push(p.len());
                }
                Ok(Tensor::new_node(
                    vec![out.len()],
                    out,
                    Some(Op {
                        parents: parts.iter().map(|p| (*p).clone()).collect(),
                        backward: Box::new(move |grad, parents| {
                            let mut offset = 0;
                            for (p, len) in parents.iter().zip(&lens) {
                                p.accumulate_grad(&grad[offset..offset + len]);
                                offset += len;
                            }
                        }),
                    }),
                ))
            }
            (2, 0) => {
                let c = parts[0].cols();
                for p in parts {
                    if p.cols() != c {
                        return Err(TensorError::ShapeMismatch {
                            op: "concat",
                            lhs: parts[0].shape().to_vec(),
                            rhs: p.shape().to_vec(),
                        });
                    }
                }
                let mut out = Vec::new();
                let mut row_counts = Vec::with_capacity(parts.len());
                for p in parts {
                    out.extend_from_slice(&p.node.values.borrow());
                    row_counts.push(p.rows());
                }
                let total_rows: usize = row_counts.iter().sum();
                Ok(Tensor::new_node(
                    vec![total_rows, c],
                    out,
                    Some(Op {
                        parents: parts.iter().map(|p| (*p).clone()).collect(),
                        backward: Box::new(move |grad, parents| {
                            let mut offset = 0;
                            for (p, rc) in parents.iter().zip(&row_counts) {
                                let n = rc * c;
                                p.accumulate_grad(&grad[offset..offset + n]);
                                offset += n;
                            }
                        }),
                    }),
                ))
            }
            (2, 1) => {
                let r = parts[0].rows();
                for p in parts {
                    if p.rows() != r {
                        return Err(TensorError::ShapeMismatch {
                            op: "concat",
                            lhs: parts[0].shape().to_vec(),
                            rhs: p.shape().to_vec(),
                        });
                    }
                }
                let col_counts: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
                let total_cols: usize = col_counts.iter().sum();
                let mut out = vec![0.0; r * total_cols];
                {
                    let mut offset = 0;
                    for p in parts {
                        let pv = p.node.values.borrow();
                        let pc = p.cols();
                        for i in 0..r {
                            out[i * total_cols + offset..i * total_cols + offset + pc]
                                .copy_from_slice(&pv[i * pc..(i + 1) * pc]);
                        }
                        offset += pc;
                    }
                }
                Ok(Tensor::new_node(
                    vec![r, total_cols],
                    out,
                    Some(Op {
                        parents: parts.iter().map(|p| (*p).clone()).collect(),
                        backward: Box::new(move |grad, parents| {
                            let mut offset = 0;
                            for (p, pc) in parents.iter().zip(&col_counts) {
                                let mut dp = vec![0.0; r * pc];
                                for i in 0..r {
                                    dp[i * pc..(i + 1) * pc].copy_from_slice(
                                        &grad[i * total_cols + offset..i * total_cols + offset + pc],
                                    );
                                }
                                p.accumulate_grad(&dp);
                                offset += pc;
                            }
                        }),
                    }),
                ))
            }
            _ => Err(TensorError::InvalidInput {
                op: "concat",
                reason: format!("axis {axis} invalid for rank {rank}"),
            }),
        }
    }

    /// Contiguous row slice `[start, start + len)` of a matrix.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor> {
        let (r, c) = self.matrix_dims("slice_rows")?;
        if start + len > r || len == 0 {
            return Err(TensorError::InvalidInput {
                op: "slice_rows",
                reason: format!("rows [{start}, {}) out of 0..{r}", start + len),
            });
        }
        let out = self.node.values.borrow()[start * c..(start + len) * c].to_vec();
        Ok(Tensor::new_node(
            vec![len, c],
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(move |grad, parents| {
                    let p = &parents[0];
                    let mut g = p.node.grad.borrow_mut();
                    for (i, gi) in grad.iter().enumerate() {
                        g[start * c + i] += gi;
                    }
                }),
            }),
        ))
    }

    /// Contiguous column slice `[start, start + len)` of a matrix.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Tensor> {
        let (r, c) = self.matrix_dims("slice_cols")?;
        if start + len > c || len == 0 {
            return Err(TensorError::InvalidInput {
                op: "slice_cols",
                reason: format!("cols [{start}, {}) out of 0..{c}", start + len),
            });
        }
        let mut out = Vec::with_capacity(r * len);
        {
            let v = self.node.values.borrow();
            for i in 0..r {
                out.extend_from_slice(&v[i * c + start..i * c + start + len]);
            }
        }
        Ok(Tensor::new_node(
            vec![r, len],
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(move |grad, parents| {
                    let p = &parents[0];
                    let mut g = p.node.grad.borrow_mut();
                    for i in 0..r {
                        for j in 0..len {
                            g[i * c + start + j] += grad[i * len + j];
                        }
                    }
                }),
            }),
        ))
    }

    /// Softmax over the last axis (each row of a matrix, a vector as a whole).
    pub fn softmax(&self) -> Tensor {
        let (rows, cols) = match self.shape() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            _ => (1, 1),
        };
        let mut out = vec![0.0; rows * cols];
        {
            let v = self.node.values.borrow();
            for i in 0..rows {
                let row = &v[i * cols..(i + 1) * cols];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for j in 0..cols {
                    let e = (row[j] - max).exp();
                    out[i * cols + j] = e;
                    sum += e;
                }
                for j in 0..cols {
                    out[i * cols + j] /= sum;
                }
            }
        }
        let y = out.clone();
        Tensor::new_node(
            self.shape().to_vec(),
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(move |grad, parents| {
                    let mut dx = vec![0.0; y.len()];
                    for i in 0..rows {
                        let off = i * cols;
                        let dot: f64 = (0..cols).map(|j| grad[off + j] * y[off + j]).sum();
                        for j in 0..cols {
                            dx[off + j] = y[off + j] * (grad[off + j] - dot);
                        }
                    }
                    parents[0].accumulate_grad(&dx);
                }),
            }),
        )
    }

    /// Row-wise layer normalization over the feature (last) axis, before any
    /// learned gain/bias.
    pub fn layer_norm(&self, eps: f64) -> Result<Tensor> {
        let (rows, cols) = match self.shape() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            _ => {
                return Err(TensorError::InvalidInput {
                    op: "layer_norm",
                    reason: "rank must be 1 or 2".into(),
                })
            }
        };
        let mut out = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        {
            let v = self.node.values.borrow();
            for i in 0..rows {
                let row = &v[i * cols..(i + 1) * cols];
                let mean = row.iter().sum::<f64>() / cols as f64;
                let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
                let inv = 1.0 / (var + eps).sqrt();
                inv_std[i] = inv;
                for j in 0..cols {
                    out[i * cols + j] = (row[j] - mean) * inv;
                }
            }
        }
        let normalized = out.clone();
        Ok(Tensor::new_node(
            self.shape().to_vec(),
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(move |grad, parents| {
                    let n = cols as f64;
                    let mut dx = vec![0.0; normalized.len()];
                    #[allow(clippy::needless_range_loop)]
                    for i in 0..rows {
                        let off = i * cols;
                        let g = &grad[off..off + cols];
                        let xh = &normalized[off..off + cols];
                        let g_mean = g.iter().sum::<f64>() / n;
                        let gx_mean = g.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
                        for j in 0..cols {
                            dx[off + j] = inv_std[i] * (g[j] - g_mean - xh[j] * gx_mean);
                        }
                    }
                    parents[0].accumulate_grad(&dx);
                }),
            }),
        ))
    }

    /// Rectified linear unit.
    pub fn relu(&self) -> Tensor {
        let out: Vec<f64> = self
            .node
            .values
            .borrow()
            .iter()
            .map(|&x| if x > 0.0 { x } else { 0.0 })
            .collect();
        Tensor::new_node(
            self.shape().to_vec(),
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(|grad, parents| {
                    let dx: Vec<f64> = {
                        let v = parents[0].node.values.borrow();
                        grad.iter()
                            .zip(v.iter())
                            .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                            .collect()
                    };
                    parents[0].accumulate_grad(&dx);
                }),
            }),
        )
    }

    /// Gather rows of an embedding table; gradient scatters back into it.
    pub fn embedding_lookup(table: &Tensor, ids: &[usize]) -> Result<Tensor> {
        let (vocab, dim) = table.matrix_dims("embedding_lookup")?;
        if ids.is_empty() {
            return Err(TensorError::InvalidInput {
                op: "embedding_lookup",
                reason: "empty id sequence".into(),
            });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(TensorError::InvalidInput {
                op: "embedding_lookup",
                reason: format!("id {bad} out of vocabulary 0..{vocab}"),
            });
        }
        let mut out = Vec::with_capacity(ids.len() * dim);
        {
            let v = table.node.values.borrow();
            for &id in ids {
                out.extend_from_slice(&v[id * dim..(id + 1) * dim]);
            }
        }
        let ids = ids.to_vec();
        Ok(Tensor::new_node(
            vec![ids.len(), dim],
            out,
            Some(Op {
                parents: vec![table.clone()],
                backward: Box::new(move |grad, parents| {
                    let mut g = parents[0].node.grad.borrow_mut();
                    for (i, &id) in ids.iter().enumerate() {
                        for j in 0..dim {
                            g[id * dim + j] += grad[i * dim + j];
                        }
                    }
                }),
            }),
        ))
    }

    /// Replace elements where `mask` is true with `fill`; gradient is blocked
    /// there.
    pub fn masked_fill(&self, mask: &[bool], fill: f64) -> Result<Tensor> {
        if mask.len() != self.len() {
            return Err(TensorError::InvalidInput {
                op: "masked_fill",
                reason: format!("mask length {} != tensor length {}", mask.len(), self.len()),
            });
        }
        let out: Vec<f64> = self
            .node
            .values
            .borrow()
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m { fill } else { x })
            .collect();
        let mask = mask.to_vec();
        Ok(Tensor::new_node(
            self.shape().to_vec(),
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(move |grad, parents| {
                    let dx: Vec<f64> = grad
                        .iter()
                        .zip(&mask)
                        .map(|(g, &m)| if m { 0.0 } else { *g })
                        .collect();
                    parents[0].accumulate_grad(&dx);
                }),
            }),
        ))
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&self) -> Tensor {
        let n = self.len() as f64;
        let sum: f64 = self.node.values.borrow().iter().sum();
        Tensor::new_node(
            vec![],
            vec![sum / n],
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(move |grad, parents| {
                    let d = grad[0] / n;
                    let dx = vec![d; parents[0].len()];
                    parents[0].accumulate_grad(&dx);
                }),
            }),
        )
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self) -> Tensor {
        let sum: f64 = self.node.values.borrow().iter().sum();
        Tensor::new_node(
            vec![],
            vec![sum],
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(|grad, parents| {
                    let dx = vec![grad[0]; parents[0].len()];
                    parents[0].accumulate_grad(&dx);
                }),
            }),
        )
    }

    /// Column means of a matrix, as a vector of length `cols`.
    pub fn mean_axis0(&self) -> Result<Tensor> {
        let (r, c) = self.matrix_dims("mean_axis0")?;
        let mut out = vec![0.0; c];
        {
            let v = self.node.values.borrow();
            for i in 0..r {
                for j in 0..c {
                    out[j] += v[i * c + j];
                }
            }
            for o in out.iter_mut() {
                *o /= r as f64;
            }
        }
        Ok(Tensor::new_node(
            vec![c],
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(move |grad, parents| {
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] = grad[j] / r as f64;
                        }
                    }
                    parents[0].accumulate_grad(&dx);
                }),
            }),
        ))
    }

    /// Elementwise square.
    pub fn square(&self) -> Tensor {
        let out: Vec<f64> = self.node.values.borrow().iter().map(|x| x * x).collect();
        Tensor::new_node(
            self.shape().to_vec(),
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(|grad, parents| {
                    let dx: Vec<f64> = {
                        let v = parents[0].node.values.borrow();
                        grad.iter().zip(v.iter()).map(|(g, x)| 2.0 * x * g).collect()
                    };
                    parents[0].accumulate_grad(&dx);
                }),
            }),
        )
    }

    /// Elementwise natural logarithm.
    pub fn log(&self) -> Tensor {
        let out: Vec<f64> = self.node.values.borrow().iter().map(|x| x.ln()).collect();
        Tensor::new_node(
            self.shape().to_vec(),
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(|grad, parents| {
                    let dx: Vec<f64> = {
                        let v = parents[0].node.values.borrow();
                        grad.iter().zip(v.iter()).map(|(g, x)| g / x).collect()
                    };
                    parents[0].accumulate_grad(&dx);
                }),
            }),
        )
    }

    /// Matrix transpose.
    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.matrix_dims("transpose")?;
        let mut out = vec![0.0; r * c];
        {
            let v = self.node.values.borrow();
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = v[i * c + j];
                }
            }
        }
        Ok(Tensor::new_node(
            vec![c, r],
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(move |grad, parents| {
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] = grad[j * r + i];
                        }
                    }
                    parents[0].accumulate_grad(&dx);
                }),
            }),
        ))
    }

    /// View with a new shape holding the same number of elements.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::check_shape("reshape", &shape, self.len())?;
        let out = self.node.values.borrow().clone();
        Ok(Tensor::new_node(
            shape,
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(|grad, parents| {
                    parents[0].accumulate_grad(grad);
                }),
            }),
        ))
    }

    /// Per-row element pick: `out[i] = self[i, indices[i]]`.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let (r, c) = self.matrix_dims("gather_rows")?;
        if indices.len() != r {
            return Err(TensorError::InvalidInput {
                op: "gather_rows",
                reason: format!("{} indices for {r} rows", indices.len()),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= c) {
            return Err(TensorError::InvalidInput {
                op: "gather_rows",
                reason: format!("column index {bad} out of 0..{c}"),
            });
        }
        let out: Vec<f64> = {
            let v = self.node.values.borrow();
            indices.iter().enumerate().map(|(i, &j)| v[i * c + j]).collect()
        };
        let indices = indices.to_vec();
        Ok(Tensor::new_node(
            vec![r],
            out,
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(move |grad, parents| {
                    let mut g = parents[0].node.grad.borrow_mut();
                    for (i, &j) in indices.iter().enumerate() {
                        g[i * c + j] += grad[i];
                    }
                }),
            }),
        ))
    }

    /// Single element of a vector, as a scalar.
    pub fn pick(&self, index: usize) -> Result<Tensor> {
        match self.shape() {
            [n] if index < *n => {}
            [n] => {
                return Err(TensorError::InvalidInput {
                    op: "pick",
                    reason: format!("index {index} out of 0..{n}"),
                })
            }
            _ => {
                return Err(TensorError::InvalidInput {
                    op: "pick",
                    reason: format!("expected a vector, got shape {:?}", self.shape()),
                })
            }
        }
        let v = self.node.values.borrow()[index];
        Ok(Tensor::new_node(
            vec![],
            vec![v],
            Some(Op {
                parents: vec![self.clone()],
                backward: Box::new(move |grad, parents| {
                    parents[0].node.grad.borrow_mut()[index] += grad[0];
                }),
            }),
        ))
    }
}
