//! Elementary operations: forward kernels and their reverse-mode adjoints.

use super::tensor::strides;
use super::{AdError, Tensor};

/// Sparse linear map `out[p] += coef * in[q]`, used for slicing, gathering
/// and scattering policy instruments into wedge tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMap {
    pub in_len: usize,
    pub out_shape: Vec<usize>,
    /// `(out_position, in_position, coefficient)` triples.
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMap {
    /// Selects the contiguous range `start..start + len` of a flat input and
    /// reshapes it to `out_shape`.
    pub fn slice(in_len: usize, start: usize, out_shape: Vec<usize>) -> Self {
        let len: usize = out_shape.iter().product();
        Self {
            in_len,
            out_shape,
            entries: (0..len).map(|p| (p, start + p, 1.0)).collect(),
        }
    }
}

/// The elementary operations a tape can record.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Add,
    Sub,
    /// Elementwise product.
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    /// Elementwise `x^c` with constant real exponents (same shape as `x` or a
    /// single value).
    Pow(Tensor),
    /// Sum over one axis; the axis is removed from the shape.
    SumAxis(usize),
    /// Matrix `[m, n]` times vector `[n]`.
    MatVec,
    /// Repeats the input along new axes. Input axis `k` becomes output axis
    /// `axes[k]`; `axes` must be strictly increasing.
    Broadcast { shape: Vec<usize>, axes: Vec<usize> },
    Linear(SparseMap),
    /// Flat concatenation of all inputs into a vector.
    Concat,
    Reshape(Vec<usize>),
    /// `max(x, floor)`; the partial is 1 where `x >= floor`, 0 otherwise.
    ClampMin(f64),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Pow(_) => "pow",
            Op::SumAxis(_) => "sum",
            Op::MatVec => "matvec",
            Op::Broadcast { .. } => "broadcast",
            Op::Linear(_) => "linear",
            Op::Concat => "concat",
            Op::Reshape(_) => "reshape",
            Op::ClampMin(_) => "clamp_min",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::MatVec => Some(2),
            Op::Concat => None,
            _ => Some(1),
        }
    }
}

/// Data kept from the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub(crate) enum Cache {
    None,
    /// Local elementwise partial d out / d in.
    Partials(Vec<f64>),
    /// Input position feeding each output position.
    Gather(Vec<usize>),
}

fn shape_err(op: &Op, detail: String) -> AdError {
    AdError::Shape(format!("{}: {}", op.name(), detail))
}

fn same_shape(op: &Op, a: &Tensor, b: &Tensor) -> Result<(), AdError> {
    if a.shape() != b.shape() {
        return Err(shape_err(
            op,
            format!("operand shapes {:?} and {:?} differ", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn broadcast_gather(in_shape: &[usize], shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let out_strides = strides(shape);
    let in_strides = strides(in_shape);
    let len: usize = shape.iter().product();
    (0..len)
        .map(|p| {
            axes.iter()
                .zip(&in_strides)
                .map(|(&axis, &stride)| (p / out_strides[axis]) % shape[axis] * stride)
                .sum()
        })
        .collect()
}

fn axis_blocks(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Evaluates `op` on `inputs`. `node` only labels errors.
pub(crate) fn forward(
    node: usize,
    op: &Op,
    inputs: &[&Tensor],
) -> Result<(Tensor, Cache), AdError> {
    if let Some(n) = op.arity() {
        if inputs.len() != n {
            return Err(shape_err(op, format!("expects {} inputs, got {}", n, inputs.len())));
        }
    }
    let domain = |element: usize, detail: String| AdError::Domain {
        node,
        op: op.name(),
        element,
        detail,
    };
    let (out, cache) = match op {
        Op::Add | Op::Sub | Op::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            same_shape(op, a, b)?;
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| match op {
                    Op::Add => x + y,
                    Op::Sub => x - y,
                    _ => x * y,
                })
                .collect();
            (Tensor::new(a.shape().to_vec(), data)?, Cache::None)
        }
        Op::Div => {
            let (a, b) = (inputs[0], inputs[1]);
            same_shape(op, a, b)?;
            let mut data = Vec::with_capacity(a.len());
            let mut recip = Vec::with_capacity(a.len());
            for (k, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
                if *y == 0.0 {
                    return Err(domain(k, "division by zero".into()));
                }
                let r = 1.0 / y;
                recip.push(r);
                data.push(x / y);
            }
            (Tensor::new(a.shape().to_vec(), data)?, Cache::Partials(recip))
        }
        Op::Neg => {
            let a = inputs[0];
            let data = a.data().iter().map(|x| -x).collect();
            (Tensor::new(a.shape().to_vec(), data)?, Cache::None)
        }
        Op::Exp => {
            let a = inputs[0];
            let data: Vec<f64> = a.data().iter().map(|x| x.exp()).collect();
            let cache = Cache::Partials(data.clone());
            (Tensor::new(a.shape().to_vec(), data)?, cache)
        }
        Op::Log => {
            let a = inputs[0];
            let mut data = Vec::with_capacity(a.len());
            for (k, x) in a.data().iter().enumerate() {
                if *x <= 0.0 {
                    return Err(domain(k, format!("log of non-positive value {x}")));
                }
                data.push(x.ln());
            }
            (Tensor::new(a.shape().to_vec(), data)?, Cache::None)
        }
        Op::Pow(exps) => {
            let a = inputs[0];
            if exps.len() != 1 && exps.shape() != a.shape() {
                return Err(shape_err(
                    op,
                    format!("exponent shape {:?} vs base {:?}", exps.shape(), a.shape()),
                ));
            }
            let mut data = Vec::with_capacity(a.len());
            let mut partial = Vec::with_capacity(a.len());
            for (k, x) in a.data().iter().enumerate() {
                let c = if exps.len() == 1 { exps.data()[0] } else { exps.data()[k] };
                if *x < 0.0 && c.fract() != 0.0 {
                    return Err(domain(k, format!("negative base {x} with real exponent {c}")));
                }
                if *x == 0.0 && c < 1.0 && c != 0.0 {
                    return Err(domain(k, format!("zero base with exponent {c}")));
                }
                data.push(x.powf(c));
                partial.push(if c == 0.0 { 0.0 } else { c * x.powf(c - 1.0) });
            }
            (Tensor::new(a.shape().to_vec(), data)?, Cache::Partials(partial))
        }
        Op::SumAxis(axis) => {
            let a = inputs[0];
            if *axis >= a.rank() {
                return Err(shape_err(op, format!("axis {axis} out of range for {:?}", a.shape())));
            }
            let (outer, n, inner) = axis_blocks(a.shape(), *axis);
            let mut data = vec![0.0; outer * inner];
            let src = a.data();
            for o in 0..outer {
                for k in 0..n {
                    let base = (o * n + k) * inner;
                    for i in 0..inner {
                        data[o * inner + i] += src[base + i];
                    }
                }
            }
            let mut shape = a.shape().to_vec();
            shape.remove(*axis);
            (Tensor::new(shape, data)?, Cache::None)
        }
        Op::MatVec => {
            let (m, v) = (inputs[0], inputs[1]);
            if m.rank() != 2 || v.rank() != 1 || m.shape()[1] != v.shape()[0] {
                return Err(shape_err(
                    op,
                    format!("cannot multiply {:?} by {:?}", m.shape(), v.shape()),
                ));
            }
            let (rows, cols) = (m.shape()[0], m.shape()[1]);
            let data = (0..rows)
                .map(|r| {
                    m.data()[r * cols..(r + 1) * cols]
                        .iter()
                        .zip(v.data())
                        .map(|(x, y)| x * y)
                        .sum()
                })
                .collect();
            (Tensor::vector(data), Cache::None)
        }
        Op::Broadcast { shape, axes } => {
            let a = inputs[0];
            let valid = axes.len() == a.rank()
                && axes.windows(2).all(|w| w[0] < w[1])
                && axes
                    .iter()
                    .zip(a.shape())
                    .all(|(&ax, &d)| ax < shape.len() && shape[ax] == d);
            if !valid {
                return Err(shape_err(
                    op,
                    format!("cannot map {:?} onto {:?} via axes {:?}", a.shape(), shape, axes),
                ));
            }
            let gather = broadcast_gather(a.shape(), shape, axes);
            let data = gather.iter().map(|&q| a.data()[q]).collect();
            (Tensor::new(shape.clone(), data)?, Cache::Gather(gather))
        }
        Op::Linear(map) => {
            let a = inputs[0];
            if a.len() != map.in_len {
                return Err(shape_err(
                    op,
                    format!("map expects {} inputs, got {}", map.in_len, a.len()),
                ));
            }
            let mut out = Tensor::zeros(&map.out_shape);
            let len = out.len();
            let data = out.data_mut();
            for &(p, q, coef) in &map.entries {
                if p >= len || q >= map.in_len {
                    return Err(shape_err(op, format!("entry ({p}, {q}) out of range")));
                }
                data[p] += coef * a.data()[q];
            }
            (out, Cache::None)
        }
        Op::Concat => {
            let data = inputs.iter().flat_map(|t| t.data().iter().copied()).collect();
            (Tensor::vector(data), Cache::None)
        }
        Op::Reshape(shape) => {
            let a = inputs[0];
            (Tensor::new(shape.clone(), a.data().to_vec())?, Cache::None)
        }
        Op::ClampMin(floor) => {
            let a = inputs[0];
            let data = a.data().iter().map(|x| x.max(*floor)).collect();
            let partial = a
                .data()
                .iter()
                .map(|x| if *x >= *floor { 1.0 } else { 0.0 })
                .collect();
            (Tensor::new(a.shape().to_vec(), data)?, Cache::Partials(partial))
        }
    };
    if let Some(k) = out.data().iter().position(|x| !x.is_finite()) {
        return Err(AdError::NonFinite {
            node,
            op: op.name(),
            element: k,
        });
    }
    Ok((out, cache))
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize, f: impl Fn(usize) -> f64) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    for (k, b) in buf.iter_mut().enumerate() {
        *b += f(k);
    }
}

/// Pushes the output adjoint `bar` back to the parents' adjoint slots.
pub(crate) fn backward(
    op: &Op,
    cache: &Cache,
    out: &Tensor,
    inputs: &[&Tensor],
    bar: &[f64],
    slots: &mut [Option<Vec<f64>>],
) {
    match op {
        Op::Add => {
            accumulate(&mut slots[0], bar.len(), |k| bar[k]);
            accumulate(&mut slots[1], bar.len(), |k| bar[k]);
        }
        Op::Sub => {
            accumulate(&mut slots[0], bar.len(), |k| bar[k]);
            accumulate(&mut slots[1], bar.len(), |k| -bar[k]);
        }
        Op::Mul => {
            let (a, b) = (inputs[0].data(), inputs[1].data());
            accumulate(&mut slots[0], bar.len(), |k| bar[k] * b[k]);
            accumulate(&mut slots[1], bar.len(), |k| bar[k] * a[k]);
        }
        Op::Div => {
            let Cache::Partials(recip) = cache else { unreachable!() };
            let y = out.data();
            accumulate(&mut slots[0], bar.len(), |k| bar[k] * recip[k]);
            accumulate(&mut slots[1], bar.len(), |k| -bar[k] * y[k] * recip[k]);
        }
        Op::Neg => accumulate(&mut slots[0], bar.len(), |k| -bar[k]),
        Op::Exp | Op::Pow(_) | Op::ClampMin(_) => {
            let Cache::Partials(p) = cache else { unreachable!() };
            accumulate(&mut slots[0], bar.len(), |k| bar[k] * p[k]);
        }
        Op::Log => {
            let x = inputs[0].data();
            accumulate(&mut slots[0], bar.len(), |k| bar[k] / x[k]);
        }
        Op::SumAxis(axis) => {
            let (outer, n, inner) = axis_blocks(inputs[0].shape(), *axis);
            accumulate(&mut slots[0], inputs[0].len(), |q| {
                let o = q / (n * inner);
                let i = q % inner;
                bar[o * inner + i]
            });
            debug_assert_eq!(outer * inner, bar.len());
        }
        Op::MatVec => {
            let (m, v) = (inputs[0], inputs[1]);
            let cols = m.shape()[1];
            let (md, vd) = (m.data(), v.data());
            accumulate(&mut slots[0], md.len(), |q| bar[q / cols] * vd[q % cols]);
            accumulate(&mut slots[1], cols, |c| {
                bar.iter()
                    .enumerate()
                    .map(|(r, b)| b * md[r * cols + c])
                    .sum()
            });
        }
        Op::Broadcast { .. } => {
            let Cache::Gather(gather) = cache else { unreachable!() };
            let buf = slots[0].get_or_insert_with(|| vec![0.0; inputs[0].len()]);
            for (p, &q) in gather.iter().enumerate() {
                buf[q] += bar[p];
            }
        }
        Op::Linear(map) => {
            let buf = slots[0].get_or_insert_with(|| vec![0.0; map.in_len]);
            for &(p, q, coef) in &map.entries {
                buf[q] += coef * bar[p];
            }
        }
        Op::Concat => {
            let mut offset = 0;
            for (slot, t) in slots.iter_mut().zip(inputs) {
                let len = t.len();
                accumulate(slot, len, |k| bar[offset + k]);
                offset += len;
            }
        }
        Op::Reshape(_) => accumulate(&mut slots[0], bar.len(), |k| bar[k]),
    }
}
