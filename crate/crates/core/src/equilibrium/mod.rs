//! Counterfactual equilibrium in proportional changes.
//!
//! [`hat_map`] applies the equilibrium system once; [`solve_fixed_point`]
//! iterates it to a fixed point with block damping, optionally finishing
//! with Newton-Kantorovich steps ([`newton_kantorovich_refine`]).

mod model;
mod newton;

use nalgebra::DMatrix;
use ndarray::{Array2, Array3};
use thiserror::Error;

use crate::autodiff::{AdError, Eager, Tape, Tensor, TensorOps};
use crate::economy::{Calibration, PolicyWedges, WedgeError};
use crate::linalg::LinalgError;
use crate::par;

pub use model::{record_map, MapNodes, ModelConstants, LABOR_FLOOR};
pub use newton::{newton_kantorovich, newton_kantorovich_refine, NewtonOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error("invalid wedges: {0}")]
    Wedges(#[from] WedgeError),
    #[error("non-finite intermediate in equilibrium map ({location}): {source}")]
    NonFinite { location: String, source: AdError },
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("residual grew for {window} consecutive iterations (iteration {iteration}, residual {residual:.3e})")]
    Diverged {
        iteration: usize,
        residual: f64,
        window: usize,
    },
    #[error("I - dG/dX is singular ({0}); fall back to damped contraction")]
    Singular(LinalgError),
    #[error("invalid solver options: {0}")]
    Options(String),
    #[error("state has wrong length {found}, expected {expected}")]
    StateLength { expected: usize, found: usize },
}

impl From<AdError> for EquilibriumError {
    fn from(source: AdError) -> Self {
        EquilibriumError::NonFinite {
            location: match source.element() {
                Some(k) => format!("flat element {k}"),
                None => "shape".into(),
            },
            source,
        }
    }
}

/// Core equilibrium unknowns `(ŵ, L̂, P̂, X̂)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HatState {
    pub wage: Vec<f64>,
    /// `[i][j]`
    pub labor: Array2<f64>,
    /// `[n][j]`
    pub price: Array2<f64>,
    /// `[n][j]`
    pub expenditure: Array2<f64>,
}

impl HatState {
    pub fn ones(n: usize, j: usize) -> Self {
        Self {
            wage: vec![1.0; n],
            labor: Array2::ones((n, j)),
            price: Array2::ones((n, j)),
            expenditure: Array2::ones((n, j)),
        }
    }

    /// Flattens as `ŵ | L̂ | P̂ | X̂`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.wage.clone();
        v.extend(self.labor.iter());
        v.extend(self.price.iter());
        v.extend(self.expenditure.iter());
        v
    }

    pub fn from_vector(n: usize, j: usize, v: &[f64]) -> Result<Self, EquilibriumError> {
        let expected = n + 3 * n * j;
        if v.len() != expected {
            return Err(EquilibriumError::StateLength {
                expected,
                found: v.len(),
            });
        }
        let block = |k: usize| {
            let start = n + k * n * j;
            Array2::from_shape_vec((n, j), v[start..start + n * j].to_vec()).expect("block shape")
        };
        Ok(Self {
            wage: v[..n].to_vec(),
            labor: block(0),
            price: block(1),
            expenditure: block(2),
        })
    }
}

/// A converged (or last-iterate) equilibrium with derived outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct HatEquilibrium {
    pub state: HatState,
    /// `[i][n][j]` trade share changes; one on routes with zero baseline flow.
    pub trade_share_change: Array3<f64>,
    /// `Ŷ_n`
    pub income_change: Vec<f64>,
    /// Aggregate consumer price index change `P̂_n`.
    pub price_index_change: Vec<f64>,
    /// `Ŵ_n = Ŷ_n / P̂_n`
    pub welfare: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm of `x - G(x)` at the returned state.
    pub residual: f64,
    pub tol: f64,
    pub residual_history: Vec<f64>,
}

impl HatEquilibrium {
    pub fn converged(&self) -> bool {
        self.residual < self.tol
    }

    pub fn welfare_pct(&self) -> Vec<f64> {
        self.welfare.iter().map(|w| 100.0 * (w - 1.0)).collect()
    }
}

/// `Ŷ_n / P̂_n` for `country`.
pub fn welfare_change(eq: &HatEquilibrium, country: usize) -> f64 {
    eq.income_change[country] / eq.price_index_change[country]
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Sup-norm tolerance on `x - G(x)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Damping on the wage and employment blocks.
    pub damping_wage_labor: f64,
    /// Damping on the price and expenditure blocks.
    pub damping_price_expenditure: f64,
    /// Abort after this many consecutive residual increases.
    pub divergence_window: usize,
    /// Switch to Newton-Kantorovich once the residual drops below the
    /// configured threshold.
    pub newton: Option<NewtonOptions>,
    pub record_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 5_000,
            damping_wage_labor: 0.5,
            damping_price_expenditure: 1.0,
            divergence_window: 50,
            newton: None,
            record_history: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), EquilibriumError> {
        let ok_damp = |d: f64| d > 0.0 && d <= 1.0;
        if !(self.tol > 0.0) {
            return Err(EquilibriumError::Options(format!("tol must be positive, got {}", self.tol)));
        }
        if !ok_damp(self.damping_wage_labor) || !ok_damp(self.damping_price_expenditure) {
            return Err(EquilibriumError::Options("damping must lie in (0, 1]".into()));
        }
        if self.max_iter == 0 {
            return Err(EquilibriumError::Options("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Tight solve used for finite-difference probes and oracles.
    pub fn precise(tol: f64) -> Self {
        Self {
            tol,
            max_iter: 20_000,
            newton: Some(NewtonOptions::default()),
            ..Self::default()
        }
    }
}

/// Output of one map evaluation.
#[derive(Clone, Debug)]
pub struct MapEvaluation {
    pub next: Vec<f64>,
    pub welfare: Vec<f64>,
    pub income: Vec<f64>,
    pub price_index: Vec<f64>,
    pub shares: Tensor,
}

fn check_wedges(cal: &Calibration, wedges: &PolicyWedges) -> Result<(), EquilibriumError> {
    wedges.validate(cal)?;
    Ok(())
}

fn route_tensor(a: &Array3<f64>) -> Tensor {
    let (x, y, z) = a.dim();
    Tensor::new(vec![x, y, z], a.iter().copied().collect()).expect("route shape")
}

/// Evaluates the map at the flat state `x` without recording a tape.
pub fn evaluate(
    consts: &ModelConstants,
    wedges: &PolicyWedges,
    x: &[f64],
) -> Result<MapEvaluation, EquilibriumError> {
    let mut b = Eager::new();
    let state = b.constant(Tensor::vector(x.to_vec()));
    let tariff = b.constant(route_tensor(&wedges.tariff));
    let wedge = b.constant(route_tensor(&wedges.export_wedge));
    let nodes = record_map(&mut b, consts, state, tariff, wedge)?;
    Ok(MapEvaluation {
        next: b.take(nodes.next).into_data(),
        welfare: b.take(nodes.welfare).into_data(),
        income: b.take(nodes.income).into_data(),
        price_index: b.take(nodes.price_index).into_data(),
        shares: b.take(nodes.shares),
    })
}

/// One application of the equilibrium map, renormalised to the numeraire.
pub fn hat_map(
    cal: &Calibration,
    wedges: &PolicyWedges,
    state: &HatState,
) -> Result<HatState, EquilibriumError> {
    check_wedges(cal, wedges)?;
    let consts = ModelConstants::new(cal);
    let out = evaluate(&consts, wedges, &state.to_vector())?;
    HatState::from_vector(cal.countries(), cal.sectors(), &out.next)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn finish(
    cal: &Calibration,
    x: Vec<f64>,
    eval: MapEvaluation,
    iterations: usize,
    residual: f64,
    tol: f64,
    residual_history: Vec<f64>,
) -> Result<HatEquilibrium, EquilibriumError> {
    let (n, j) = (cal.countries(), cal.sectors());
    let base = &cal.accounts().shares;
    let new = eval.shares.data();
    let trade_share_change =
        Array3::from_shape_fn((n, n, j), |(o, d, s)| {
            let p = base[[o, d, s]];
            if p > 0.0 {
                new[(o * n + d) * j + s] / p
            } else {
                1.0
            }
        });
    Ok(HatEquilibrium {
        state: HatState::from_vector(n, j, &x)?,
        trade_share_change,
        welfare: eval.welfare,
        income_change: eval.income,
        price_index_change: eval.price_index,
        iterations,
        residual,
        tol,
        residual_history,
    })
}

/// Solves `x = G(x, wedges)` by damped fixed-point iteration.
///
/// Starts from `warm_start` when given, otherwise from all-ones. The
/// returned state satisfies `‖x - G(x)‖_∞ < opts.tol`.
pub fn solve_fixed_point(
    cal: &Calibration,
    wedges: &PolicyWedges,
    opts: &SolverOptions,
    warm_start: Option<&HatState>,
) -> Result<HatEquilibrium, EquilibriumError> {
    opts.validate()?;
    check_wedges(cal, wedges)?;
    let consts = ModelConstants::new(cal);
    let (n, j) = (cal.countries(), cal.sectors());
    let mut x = match warm_start {
        Some(s) => s.to_vector(),
        None => HatState::ones(n, j).to_vector(),
    };
    if x.len() != consts.state_len() {
        return Err(EquilibriumError::StateLength {
            expected: consts.state_len(),
            found: x.len(),
        });
    }
    let mut history = Vec::new();
    let mut last = f64::INFINITY;
    let mut growth = 0;
    for iter in 1..=opts.max_iter {
        let eval = evaluate(&consts, wedges, &x)?;
        let residual = sup_diff(&x, &eval.next);
        if opts.record_history {
            history.push(residual);
        }
        if !residual.is_finite() {
            return Err(EquilibriumError::Diverged {
                iteration: iter,
                residual,
                window: 0,
            });
        }
        if residual < opts.tol {
            return finish(cal, x, eval, iter, residual, opts.tol, history);
        }
        if let Some(newton) = &opts.newton {
            if residual < newton.switch_residual {
                let mut eq = newton_kantorovich_refine(cal, wedges, &HatState::from_vector(n, j, &x)?, opts)?;
                eq.iterations += iter;
                if opts.record_history {
                    history.append(&mut eq.residual_history);
                    eq.residual_history = history;
                }
                return Ok(eq);
            }
        }
        growth = if residual > last { growth + 1 } else { 0 };
        if opts.divergence_window > 0 && growth >= opts.divergence_window {
            return Err(EquilibriumError::Diverged {
                iteration: iter,
                residual,
                window: opts.divergence_window,
            });
        }
        last = residual;
        let wl_end = n + n * j;
        for (k, (xi, gi)) in x.iter_mut().zip(&eval.next).enumerate() {
            let d = if k < wl_end {
                opts.damping_wage_labor
            } else {
                opts.damping_price_expenditure
            };
            *xi += d * (gi - *xi);
        }
    }
    let eval = evaluate(&consts, wedges, &x)?;
    Err(EquilibriumError::NonConvergence {
        iterations: opts.max_iter,
        residual: sup_diff(&x, &eval.next),
    })
}

/// Map value and state Jacobian `∂G/∂x` at `x`, from a recorded tape.
pub fn state_jacobian(
    consts: &ModelConstants,
    wedges: &PolicyWedges,
    x: &[f64],
) -> Result<(Vec<f64>, DMatrix<f64>), EquilibriumError> {
    let mut tape = Tape::new();
    let state = tape.input(Tensor::vector(x.to_vec()));
    let tariff = tape.input(route_tensor(&wedges.tariff));
    let wedge = tape.input(route_tensor(&wedges.export_wedge));
    let nodes = record_map(&mut tape, consts, state, tariff, wedge)?;
    let g = tape.value(nodes.next).data().to_vec();
    let rows = jacobian_rows(&tape, nodes.next, state, g.len())?;
    Ok((g, rows))
}

/// Full Jacobian of `output` with respect to `input`, one reverse sweep per
/// output row.
pub(crate) fn jacobian_rows(
    tape: &Tape,
    output: crate::autodiff::Var,
    input: crate::autodiff::Var,
    rows: usize,
) -> Result<DMatrix<f64>, AdError> {
    let cols = tape.value(input).len();
    let results = par::map_indexed(rows, |r| {
        let mut seed = vec![0.0; rows];
        seed[r] = 1.0;
        tape.vjp(output, &seed, &[input]).map(|mut v| v.remove(0).into_data())
    });
    let mut jac = DMatrix::zeros(rows, cols);
    for (r, row) in results.into_iter().enumerate() {
        let row = row?;
        for (c, v) in row.into_iter().enumerate() {
            jac[(r, c)] = v;
        }
    }
    Ok(jac)
}
