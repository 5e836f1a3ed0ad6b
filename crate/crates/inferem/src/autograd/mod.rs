//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The design is a classic dynamic tape: every operation allocates a node
//! holding its forward value, its parents and a backward closure. Calling
//! [`Tensor::backward`] on a scalar walks the reachable graph in reverse
//! creation order and accumulates gradients into every node, in particular
//! into the leaf tensors owned by [`Parameter`]s.
//!
//! Tensors are rank 0 (scalar), 1 (vector) or 2 (matrix). There is no
//! broadcasting beyond explicit row-wise bias/gain ops; shape mismatches are
//! reported with both shapes so they surface at the call site instead of as
//! silent numerical garbage.
//!
//! A tape is confined to one thread (`Rc`/`RefCell` interior). Independent
//! tapes may run in parallel as long as they do not share parameters.

mod check;
mod checkpoint;
mod ops;
mod param;

pub use check::{gradient_check, gradient_check_params, sabotaged_square};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use param::Parameter;

use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Errors raised by tensor construction and the tensor primitives.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Operand shapes are incompatible for the named operation.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Operation received an input it cannot work on (empty, wrong rank, ...).
    InvalidInput { op: &'static str, reason: String },
    /// `backward` was called on a non-scalar tensor.
    NotScalar { shape: Vec<usize> },
    /// A NaN or infinity was produced where a finite value is required.
    NonFinite { op: &'static str },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch between {lhs:?} and {rhs:?}")
            }
            TensorError::InvalidInput { op, reason } => write!(f, "{op}: {reason}"),
            TensorError::NotScalar { shape } => {
                write!(f, "backward requires a scalar root, got shape {shape:?}")
            }
            TensorError::NonFinite { op } => write!(f, "{op}: non-finite value encountered"),
        }
    }
}

impl std::error::Error for TensorError {}

pub type Result<T> = std::result::Result<T, TensorError>;

type BackwardFn = Box<dyn Fn(&[f64], &[Tensor])>;

struct Op {
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Node {
    id: u64,
    shape: Vec<usize>,
    values: RefCell<Vec<f64>>,
    grad: RefCell<Vec<f64>>,
    op: Option<Op>,
}

/// Dense floating-point array with shape and reverse-mode gradient support.
///
/// Cloning a `Tensor` is cheap: clones share the same node, so a cloned
/// parameter leaf keeps accumulating gradients wherever it is used.
#[derive(Clone)]
pub struct Tensor {
    node: Rc<Node>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("values", &self.node.values.borrow())
            .finish()
    }
}

impl Tensor {
    fn new_node(shape: Vec<usize>, values: Vec<f64>, op: Option<Op>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        let len = values.len();
        Tensor {
            node: Rc::new(Node {
                id: next_id(),
                shape,
                values: RefCell::new(values),
                grad: RefCell::new(vec![0.0; len]),
                op,
            }),
        }
    }

    fn check_shape(op: &'static str, shape: &[usize], len: usize) -> Result<()> {
        if shape.contains(&0) {
            return Err(TensorError::InvalidInput {
                op,
                reason: format!("zero-sized dimension in shape {shape:?}"),
            });
        }
        if shape.len() > 2 {
            return Err(TensorError::InvalidInput {
                op,
                reason: format!("rank {} > 2 not supported", shape.len()),
            });
        }
        let expect: usize = shape.iter().product();
        if expect != len {
            return Err(TensorError::InvalidInput {
                op,
                reason: format!("shape {shape:?} wants {expect} values, got {len}"),
            });
        }
        Ok(())
    }

    /// Leaf tensor with an explicit shape.
    pub fn from_shape(shape: Vec<usize>, values: Vec<f64>) -> Result<Tensor> {
        Self::check_shape("from_shape", &shape, values.len())?;
        Ok(Self::new_node(shape, values, None))
    }

    /// Leaf scalar.
    pub fn scalar(value: f64) -> Tensor {
        Self::new_node(vec![], vec![value], None)
    }

    /// Leaf vector.
    pub fn vector(values: Vec<f64>) -> Result<Tensor> {
        Self::from_shape(vec![values.len()], values)
    }

    /// Leaf matrix in row-major order.
    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Tensor> {
        Self::from_shape(vec![rows, cols], values)
    }

    /// Leaf matrix filled with zeros.
    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Self::new_node(vec![rows, cols], vec![0.0; rows * cols], None)
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn len(&self) -> usize {
        self.node.values.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of rows when viewed as a matrix (1 for vectors/scalars).
    pub fn rows(&self) -> usize {
        match self.node.shape.as_slice() {
            [r, _] => *r,
            _ => 1,
        }
    }

    /// Number of columns when viewed as a matrix (the length for vectors).
    pub fn cols(&self) -> usize {
        match self.node.shape.as_slice() {
            [_, c] => *c,
            [n] => *n,
            _ => 1,
        }
    }

    /// Copy of the forward values in row-major order.
    pub fn values(&self) -> Vec<f64> {
        self.node.values.borrow().clone()
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert!(
            self.node.shape.is_empty(),
            "item() on non-scalar tensor of shape {:?}",
            self.node.shape
        );
        self.node.values.borrow()[0]
    }

    /// Copy of the accumulated gradient.
    pub fn grad(&self) -> Vec<f64> {
        self.node.grad.borrow().clone()
    }

    /// Reset the gradient accumulator to zero.
    pub fn zero_grad(&self) {
        for g in self.node.grad.borrow_mut().iter_mut() {
            *g = 0.0;
        }
    }

    /// Overwrite the values of a leaf tensor (parameters, gradient-check probes).
    pub fn set_values(&self, values: &[f64]) {
        let mut v = self.node.values.borrow_mut();
        assert_eq!(v.len(), values.len(), "set_values length mismatch");
        v.copy_from_slice(values);
    }

    /// Overwrite a single coordinate of a leaf tensor.
    pub fn set_value_at(&self, idx: usize, value: f64) {
        self.node.values.borrow_mut()[idx] = value;
    }

    pub fn value_at(&self, idx: usize) -> f64 {
        self.node.values.borrow()[idx]
    }

    /// True when every stored value is finite.
    pub fn all_finite(&self) -> bool {
        self.node.values.borrow().iter().all(|v| v.is_finite())
    }

    fn accumulate_grad(&self, delta: &[f64]) {
        let mut g = self.node.grad.borrow_mut();
        debug_assert_eq!(g.len(), delta.len());
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    /// Reverse-mode sweep from a scalar root.
    ///
    /// Gradients accumulate into every reachable node; leaves kept alive by
    /// [`Parameter`]s retain theirs until `zero_grad`. Repeated calls without
    /// zeroing add up, which is what batch accumulation wants.
    pub fn backward(&self) -> Result<()> {
        if !self.node.shape.is_empty() {
            return Err(TensorError::NotScalar {
                shape: self.node.shape.clone(),
            });
        }
        // Collect the reachable subgraph; reverse creation order is a valid
        // topological order because parents always predate their children.
        let mut stack = vec![self.clone()];
        let mut seen: HashSet<u64> = HashSet::new();
        let mut nodes: Vec<Tensor> = Vec::new();
        while let Some(t) = stack.pop() {
            if !seen.insert(t.node.id) {
                continue;
            }
            if let Some(op) = &t.node.op {
                for p in &op.parents {
                    stack.push(p.clone());
                }
            }
            nodes.push(t);
        }
        nodes.sort_by_key(|t| std::cmp::Reverse(t.node.id));
        self.node.grad.borrow_mut()[0] += 1.0;
        for t in &nodes {
            if let Some(op) = &t.node.op {
                let out_grad = t.node.grad.borrow().clone();
                (op.backward)(&out_grad, &op.parents);
            }
        }
        Ok(())
    }
}
