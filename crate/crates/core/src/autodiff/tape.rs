use std::sync::atomic::{AtomicU64, Ordering};

use super::ops::{self, Cache, Op};
use super::{AdError, Tensor, TensorOps};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Debug)]
struct Node {
    op: Option<Op>,
    parents: Vec<usize>,
    value: Tensor,
    cache: Cache,
}

/// Append-only reverse-mode computation graph. Parents always precede
/// children, so a single reverse sweep over the node list is a valid
/// topological order.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

/// Adjoints produced by one backward sweep.
#[derive(Debug)]
pub struct Adjoints {
    grads: Vec<Option<Vec<f64>>>,
    /// Number of nodes the sweep visited.
    pub visits: usize,
}

impl Adjoints {
    /// Adjoint of `var`, zero when `var` does not reach the swept output.
    pub fn get(&self, tape: &Tape, var: Var) -> Tensor {
        let shape = tape.value(var).shape().to_vec();
        match self.grads.get(var.index).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::new(shape, g.clone()).expect("adjoint has node shape"),
            None => Tensor::zeros(&shape),
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an independent variable (or a constant; the tape does not
    /// distinguish them).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            op: None,
            parents: Vec::new(),
            value,
            cache: Cache::None,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn check(&self, var: Var) -> Result<(), AdError> {
        if var.tape != self.id {
            return Err(AdError::ForeignTape {
                expected: self.id,
                found: var.tape,
            });
        }
        Ok(())
    }

    pub fn record(&mut self, op: Op, inputs: &[Var]) -> Result<Var, AdError> {
        for v in inputs {
            self.check(*v)?;
        }
        let index = self.nodes.len();
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.index].value).collect();
        let (value, cache) = ops::forward(index, &op, &values)?;
        self.nodes.push(Node {
            op: Some(op),
            parents: inputs.iter().map(|v| v.index).collect(),
            value,
            cache,
        });
        Ok(Var {
            tape: self.id,
            index,
        })
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.index].value
    }

    /// One reverse sweep from `output` seeded with `seed`.
    pub fn backward(&self, output: Var, seed: &[f64]) -> Result<Adjoints, AdError> {
        self.check(output)?;
        let out_len = self.value(output).len();
        if seed.len() != out_len {
            return Err(AdError::Shape(format!(
                "seed has {} entries, output has {}",
                seed.len(),
                out_len
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.index + 1];
        grads[output.index] = Some(seed.to_vec());
        let mut visits = 0;
        for index in (0..=output.index).rev() {
            visits += 1;
            let node = &self.nodes[index];
            let Some(op) = &node.op else { continue };
            let Some(bar) = grads[index].take() else { continue };
            let inputs: Vec<&Tensor> = node.parents.iter().map(|&p| &self.nodes[p].value).collect();
            let mut slots: Vec<Option<Vec<f64>>> = vec![None; node.parents.len()];
            ops::backward(op, &node.cache, &node.value, &inputs, &bar, &mut slots);
            for (&parent, slot) in node.parents.iter().zip(slots) {
                let Some(contrib) = slot else { continue };
                match &mut grads[parent] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                    empty => *empty = Some(contrib),
                }
            }
            grads[index] = Some(bar);
        }
        Ok(Adjoints { grads, visits })
    }

    /// Gradient of a scalar `output` with respect to each of `inputs`.
    pub fn gradient(&self, output: Var, inputs: &[Var]) -> Result<Vec<Tensor>, AdError> {
        let shape = self.value(output).shape();
        if self.value(output).len() != 1 {
            return Err(AdError::NonScalarOutput(shape.to_vec()));
        }
        self.vjp(output, &[1.0], inputs)
    }

    /// `seedᵀ · ∂output/∂input` for each input, without forming the Jacobian.
    pub fn vjp(&self, output: Var, seed: &[f64], inputs: &[Var]) -> Result<Vec<Tensor>, AdError> {
        for v in inputs {
            self.check(*v)?;
        }
        let adjoints = self.backward(output, seed)?;
        Ok(inputs.iter().map(|v| adjoints.get(self, *v)).collect())
    }
}

impl TensorOps for Tape {
    type Handle = Var;

    fn constant(&mut self, value: Tensor) -> Var {
        self.input(value)
    }

    fn apply(&mut self, op: Op, inputs: &[Var]) -> Result<Var, AdError> {
        self.record(op, inputs)
    }

    fn value(&self, handle: Var) -> &Tensor {
        Tape::value(self, handle)
    }
}
