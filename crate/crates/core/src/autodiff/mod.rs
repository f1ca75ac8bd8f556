//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Model code is written once against [`TensorOps`] and runs either on a
//! [`Tape`] (recording the graph for backward sweeps) or on [`Eager`]
//! (plain evaluation). Both backends share the same forward kernels, so the
//! values they produce are bit-identical.

mod ops;
mod tape;
mod tensor;

use thiserror::Error;

pub use ops::{Op, SparseMap};
pub use tape::{Adjoints, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("domain error at node {node} ({op}), element {element}: {detail}")]
    Domain {
        node: usize,
        op: &'static str,
        element: usize,
        detail: String,
    },
    #[error("non-finite result at node {node} ({op}), element {element}")]
    NonFinite {
        node: usize,
        op: &'static str,
        element: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("variable belongs to tape {found}, expected tape {expected}")]
    ForeignTape { expected: u64, found: u64 },
    #[error("gradient needs a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
}

impl AdError {
    /// Flat element index the error refers to, if any.
    pub fn element(&self) -> Option<usize> {
        match self {
            AdError::Domain { element, .. } | AdError::NonFinite { element, .. } => Some(*element),
            _ => None,
        }
    }
}

/// Backend-agnostic tensor arithmetic.
pub trait TensorOps {
    type Handle: Copy;

    fn constant(&mut self, value: Tensor) -> Self::Handle;
    fn apply(&mut self, op: Op, inputs: &[Self::Handle]) -> Result<Self::Handle, AdError>;
    fn value(&self, handle: Self::Handle) -> &Tensor;

    fn add(&mut self, a: Self::Handle, b: Self::Handle) -> Result<Self::Handle, AdError> {
        self.apply(Op::Add, &[a, b])
    }
    fn sub(&mut self, a: Self::Handle, b: Self::Handle) -> Result<Self::Handle, AdError> {
        self.apply(Op::Sub, &[a, b])
    }
    fn mul(&mut self, a: Self::Handle, b: Self::Handle) -> Result<Self::Handle, AdError> {
        self.apply(Op::Mul, &[a, b])
    }
    fn div(&mut self, a: Self::Handle, b: Self::Handle) -> Result<Self::Handle, AdError> {
        self.apply(Op::Div, &[a, b])
    }
    fn neg(&mut self, a: Self::Handle) -> Result<Self::Handle, AdError> {
        self.apply(Op::Neg, &[a])
    }
    fn exp(&mut self, a: Self::Handle) -> Result<Self::Handle, AdError> {
        self.apply(Op::Exp, &[a])
    }
    fn ln(&mut self, a: Self::Handle) -> Result<Self::Handle, AdError> {
        self.apply(Op::Log, &[a])
    }
    fn powf(&mut self, a: Self::Handle, exponents: Tensor) -> Result<Self::Handle, AdError> {
        self.apply(Op::Pow(exponents), &[a])
    }
    fn sum_axis(&mut self, a: Self::Handle, axis: usize) -> Result<Self::Handle, AdError> {
        self.apply(Op::SumAxis(axis), &[a])
    }
    fn matvec(&mut self, m: Self::Handle, v: Self::Handle) -> Result<Self::Handle, AdError> {
        self.apply(Op::MatVec, &[m, v])
    }
    fn broadcast(
        &mut self,
        a: Self::Handle,
        shape: &[usize],
        axes: &[usize],
    ) -> Result<Self::Handle, AdError> {
        self.apply(
            Op::Broadcast {
                shape: shape.to_vec(),
                axes: axes.to_vec(),
            },
            &[a],
        )
    }
    fn linear(&mut self, a: Self::Handle, map: SparseMap) -> Result<Self::Handle, AdError> {
        self.apply(Op::Linear(map), &[a])
    }
    fn concat(&mut self, parts: &[Self::Handle]) -> Result<Self::Handle, AdError> {
        self.apply(Op::Concat, parts)
    }
    fn reshape(&mut self, a: Self::Handle, shape: &[usize]) -> Result<Self::Handle, AdError> {
        self.apply(Op::Reshape(shape.to_vec()), &[a])
    }
    fn clamp_min(&mut self, a: Self::Handle, floor: f64) -> Result<Self::Handle, AdError> {
        self.apply(Op::ClampMin(floor), &[a])
    }
    /// Elementwise product with a constant tensor.
    fn scale(&mut self, a: Self::Handle, by: Tensor) -> Result<Self::Handle, AdError> {
        let c = self.constant(by);
        self.mul(a, c)
    }
    /// Elementwise sum with a constant tensor.
    fn shift(&mut self, a: Self::Handle, by: Tensor) -> Result<Self::Handle, AdError> {
        let c = self.constant(by);
        self.add(a, c)
    }
}

/// Direct evaluation without recording a graph.
#[derive(Debug, Default)]
pub struct Eager {
    values: Vec<Tensor>,
}

impl Eager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn take(&mut self, handle: usize) -> Tensor {
        std::mem::replace(&mut self.values[handle], Tensor::scalar(0.0))
    }
}

impl TensorOps for Eager {
    type Handle = usize;

    fn constant(&mut self, value: Tensor) -> usize {
        self.values.push(value);
        self.values.len() - 1
    }

    fn apply(&mut self, op: Op, inputs: &[usize]) -> Result<usize, AdError> {
        let index = self.values.len();
        let args: Vec<&Tensor> = inputs.iter().map(|&i| &self.values[i]).collect();
        let (value, _) = ops::forward(index, &op, &args)?;
        self.values.push(value);
        Ok(index)
    }

    fn value(&self, handle: usize) -> &Tensor {
        &self.values[handle]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy<B: TensorOps>(b: &mut B, x1: B::Handle, x2: B::Handle) -> Result<B::Handle, AdError> {
        let v1 = b.div(x1, x2)?;
        let v2 = b.mul(x1, x1)?;
        let v3 = b.exp(x2)?;
        let v4 = b.sub(v1, v3)?;
        let v5 = b.add(v2, v4)?;
        b.mul(v4, v5)
    }

    #[test]
    fn div_and_exp_values() {
        let mut tape = Tape::new();
        let x1 = tape.input(2.0.into());
        let x2 = tape.input(1.0.into());
        let q = tape.div(x1, x2).unwrap();
        let e = tape.exp(x2).unwrap();
        assert_eq!(tape.value(q).item(), 2.0);
        assert!((tape.value(e).item() - 2.718281828).abs() < 1e-9);
    }

    #[test]
    fn toy_graph_value_and_gradient() {
        let mut tape = Tape::new();
        let x1 = tape.input(2.0.into());
        let x2 = tape.input(1.0.into());
        let y = toy(&mut tape, x1, x2).unwrap();
        assert!((tape.value(y).item() + 2.357199).abs() < 1e-6);
        let g = tape.gradient(y, &[x1, x2]).unwrap();
        assert!((g[0].item() + 0.309691).abs() < 1e-6);
        assert!((g[1].item() + 12.09502).abs() < 1e-5);
    }

    #[test]
    fn eager_matches_tape_bitwise() {
        let mut tape = Tape::new();
        let a = tape.input(2.5.into());
        let b = tape.input(0.7.into());
        let y = toy(&mut tape, a, b).unwrap();
        let mut eager = Eager::new();
        let a = eager.constant(2.5.into());
        let b = eager.constant(0.7.into());
        let z = toy(&mut eager, a, b).unwrap();
        assert_eq!(tape.value(y), eager.value(z));
    }

    #[test]
    fn identity_gradient_is_one() {
        let mut tape = Tape::new();
        let x = tape.input(3.0.into());
        assert_eq!(tape.gradient(x, &[x]).unwrap()[0].item(), 1.0);
    }

    #[test]
    fn unreachable_input_gets_zero() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        let z = tape.input(Tensor::vector(vec![5.0, 6.0]));
        let s = tape.sum_axis(x, 0).unwrap();
        let g = tape.gradient(s, &[x, z]).unwrap();
        assert_eq!(g[0].data(), &[1.0, 1.0]);
        assert_eq!(g[1].data(), &[0.0, 0.0]);
    }

    #[test]
    fn vjp_selects_rows() {
        let mut tape = Tape::new();
        let x = tape.input(3.0.into());
        let sq = tape.mul(x, x).unwrap();
        let out = tape.concat(&[sq, x]).unwrap();
        assert_eq!(tape.vjp(out, &[1.0, 0.0], &[x]).unwrap()[0].item(), 6.0);
        assert_eq!(tape.vjp(out, &[0.0, 1.0], &[x]).unwrap()[0].item(), 1.0);
        assert!(matches!(tape.vjp(out, &[1.0], &[x]), Err(AdError::Shape(_))));
    }

    #[test]
    fn domain_errors_name_the_node() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![1.0, -1.0]));
        let err = tape.ln(x).unwrap_err();
        assert!(matches!(err, AdError::Domain { node: 1, op: "log", element: 1, .. }));
        let zero = tape.input(0.0.into());
        let one = tape.input(1.0.into());
        assert!(matches!(tape.div(one, zero), Err(AdError::Domain { op: "div", .. })));
        let neg = tape.input((-2.0).into());
        assert!(matches!(tape.powf(neg, 0.5.into()), Err(AdError::Domain { op: "pow", .. })));
    }

    #[test]
    fn foreign_tape_rejected() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let x = a.input(1.0.into());
        let y = b.input(1.0.into());
        assert!(matches!(b.gradient(y, &[x]), Err(AdError::ForeignTape { .. })));
        assert!(matches!(b.exp(x), Err(AdError::ForeignTape { .. })));
    }

    #[test]
    fn non_scalar_gradient_rejected() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.gradient(x, &[x]), Err(AdError::NonScalarOutput(_))));
    }

    #[test]
    fn backward_visits_every_node_once() {
        let mut tape = Tape::new();
        let x1 = tape.input(2.0.into());
        let x2 = tape.input(1.0.into());
        let y = toy(&mut tape, x1, x2).unwrap();
        let adj = tape.backward(y, &[1.0]).unwrap();
        assert_eq!(adj.visits, tape.len());
    }

    #[test]
    fn broadcast_and_sum_are_adjoint() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![2, 3], (0..6).map(f64::from).collect()).unwrap());
        let b = tape.broadcast(x, &[2, 4, 3], &[0, 2]).unwrap();
        assert_eq!(tape.value(b).shape(), &[2, 4, 3]);
        assert_eq!(tape.value(b).data()[3..6], [0.0, 1.0, 2.0]);
        let s0 = tape.sum_axis(b, 1).unwrap();
        let s1 = tape.sum_axis(s0, 1).unwrap();
        let s = tape.sum_axis(s1, 0).unwrap();
        let g = tape.gradient(s, &[x]).unwrap();
        assert!(g[0].data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn matvec_gradient() {
        let mut tape = Tape::new();
        let m = tape.input(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let v = tape.input(Tensor::vector(vec![5.0, 6.0]));
        let mv = tape.matvec(m, v).unwrap();
        assert_eq!(tape.value(mv).data(), &[17.0, 39.0]);
        let g = tape.vjp(mv, &[1.0, 1.0], &[m, v]).unwrap();
        assert_eq!(g[0].data(), &[5.0, 6.0, 5.0, 6.0]);
        assert_eq!(g[1].data(), &[4.0, 6.0]);
    }
}
