//! Gradients of welfare objectives with respect to policy instruments,
//! taken through the equilibrium fixed point.
//!
//! The production path is the adjoint form: one transposed solve
//! `(I - ∂G/∂x)ᵀ λ = ∂W/∂x` followed by `∂W/∂a + λᵀ ∂G/∂a` as a
//! vector-Jacobian product. [`literal_policy_gradient`] builds `∇_a x`
//! explicitly and exists for cross-checking; [`finite_difference_gradient`]
//! re-solves the equilibrium at perturbed policies.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::autodiff::{AdError, Tape, Tensor, Var};
use crate::economy::{Calibration, PolicyWedges};
use crate::equilibrium::{
    jacobian_rows, record_map, solve_fixed_point, EquilibriumError, HatEquilibrium, HatState,
    MapNodes, ModelConstants, SolverOptions,
};
use crate::game::instruments::{apply_values, read_values, Instrument, WedgeKind};
use crate::{linalg, par};

/// Scalar welfare objective.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    /// `Ŵ_n` of one country.
    Country(usize),
    /// `Σ_n ω_n Ŵ_n`.
    Weighted(Vec<f64>),
}

impl Objective {
    /// Income-weighted world welfare, `ω_n = Y_n / Σ_k Y_k`.
    pub fn income_weighted(cal: &Calibration) -> Self {
        Objective::Weighted(cal.income_weights())
    }

    pub fn weights(&self, countries: usize) -> Vec<f64> {
        match self {
            Objective::Country(n) => {
                let mut w = vec![0.0; countries];
                w[*n] = 1.0;
                w
            }
            Objective::Weighted(w) => w.clone(),
        }
    }

    /// Evaluates the objective on a solved equilibrium.
    pub fn value(&self, eq: &HatEquilibrium) -> f64 {
        self.weights(eq.welfare.len())
            .iter()
            .zip(&eq.welfare)
            .map(|(w, x)| w * x)
            .sum()
    }

    fn check(&self, countries: usize) -> Result<(), SensitivityError> {
        let ok = match self {
            Objective::Country(n) => *n < countries,
            Objective::Weighted(w) => w.len() == countries && w.iter().all(|x| x.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(SensitivityError::Objective(format!("{self:?} for {countries} countries")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMethod {
    Adjoint,
    Literal,
    FiniteDifference,
}

impl GradientMethod {
    pub fn name(self) -> &'static str {
        match self {
            GradientMethod::Adjoint => "adjoint",
            GradientMethod::Literal => "literal",
            GradientMethod::FiniteDifference => "finite-difference",
        }
    }
}

/// `∂W/∂a_k` over the requested instruments, in their order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector {
    pub values: Vec<f64>,
    pub method: GradientMethod,
    /// Dense linear solves performed.
    pub linear_solves: usize,
}

impl GradientVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error("equilibrium is not converged (residual {residual:.3e} >= tol {tol:.1e}); refusing to differentiate")]
    NotConverged { residual: f64, tol: f64 },
    #[error("I - dG/dX is singular at this equilibrium: {0}")]
    Singular(linalg::LinalgError),
    #[error("differentiation failed: {0}")]
    Ad(#[from] AdError),
    #[error("equilibrium failed: {0}")]
    Equilibrium(#[from] EquilibriumError),
    #[error("finite-difference probe for instrument {index} ({instrument}) failed: {source}")]
    Probe {
        index: usize,
        instrument: String,
        source: EquilibriumError,
    },
    #[error("invalid objective {0}")]
    Objective(String),
    #[error("finite-difference step must be positive, got {0}")]
    Step(f64),
}

fn route_tensor(a: &ndarray::Array3<f64>) -> Tensor {
    let (x, y, z) = a.dim();
    Tensor::new(vec![x, y, z], a.iter().copied().collect()).expect("route shape")
}

struct Recorded {
    tape: Tape,
    state: Var,
    tariff: Var,
    wedge: Var,
    nodes: MapNodes<Var>,
}

fn record_at(cal: &Calibration, wedges: &PolicyWedges, x: &[f64]) -> Result<Recorded, SensitivityError> {
    let consts = ModelConstants::new(cal);
    let mut tape = Tape::new();
    let state = tape.input(Tensor::vector(x.to_vec()));
    let tariff = tape.input(route_tensor(&wedges.tariff));
    let wedge = tape.input(route_tensor(&wedges.export_wedge));
    let nodes = record_map(&mut tape, &consts, state, tariff, wedge)?;
    Ok(Recorded {
        tape,
        state,
        tariff,
        wedge,
        nodes,
    })
}

fn check_converged(eq: &HatEquilibrium) -> Result<(), SensitivityError> {
    if eq.converged() {
        Ok(())
    } else {
        Err(SensitivityError::NotConverged {
            residual: eq.residual,
            tol: eq.tol,
        })
    }
}

/// Contracts gradients over the wedge tensors onto instruments.
fn to_instruments(instruments: &[Instrument], countries: usize, sectors: usize, tariff: &[f64], wedge: &[f64]) -> Vec<f64> {
    instruments
        .iter()
        .map(|inst| {
            inst.entries(countries)
                .into_iter()
                .map(|(kind, o, d, s, coef)| {
                    let k = (o * countries + d) * sectors + s;
                    coef * match kind {
                        WedgeKind::Tariff => tariff[k],
                        WedgeKind::ExportWedge => wedge[k],
                    }
                })
                .sum()
        })
        .collect()
}

/// Gradient of `objective` with respect to `instruments` at the converged
/// equilibrium `eq` of `wedges`, by one adjoint solve.
pub fn policy_gradient(
    cal: &Calibration,
    wedges: &PolicyWedges,
    objective: &Objective,
    instruments: &[Instrument],
    eq: &HatEquilibrium,
) -> Result<GradientVector, SensitivityError> {
    check_converged(eq)?;
    objective.check(cal.countries())?;
    if instruments.is_empty() {
        return Ok(GradientVector {
            values: Vec::new(),
            method: GradientMethod::Adjoint,
            linear_solves: 0,
        });
    }
    let x = eq.state.to_vector();
    let r = record_at(cal, wedges, &x)?;
    let omega = objective.weights(cal.countries());
    let direct = r.tape.vjp(r.nodes.welfare, &omega, &[r.state, r.tariff, r.wedge])?;
    let jac = jacobian_rows(&r.tape, r.nodes.next, r.state, x.len())?;
    let a = DMatrix::identity(x.len(), x.len()) - jac;
    let lambda = linalg::solve(&a, direct[0].data(), true).map_err(SensitivityError::Singular)?;
    let through = r.tape.vjp(r.nodes.next, &lambda, &[r.tariff, r.wedge])?;
    let add = |a: &Tensor, b: &Tensor| -> Vec<f64> { a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect() };
    let tariff = add(&direct[1], &through[0]);
    let wedge = add(&direct[2], &through[1]);
    Ok(GradientVector {
        values: to_instruments(instruments, cal.countries(), cal.sectors(), &tariff, &wedge),
        method: GradientMethod::Adjoint,
        linear_solves: 1,
    })
}

/// The same gradient via the explicit sensitivity matrix
/// `∇_a x = (I - ∂G/∂x)⁻¹ ∂G/∂a`, one solve per instrument.
pub fn literal_policy_gradient(
    cal: &Calibration,
    wedges: &PolicyWedges,
    objective: &Objective,
    instruments: &[Instrument],
    eq: &HatEquilibrium,
) -> Result<GradientVector, SensitivityError> {
    check_converged(eq)?;
    objective.check(cal.countries())?;
    let (n, j) = (cal.countries(), cal.sectors());
    let x = eq.state.to_vector();
    let k = x.len();
    let r = record_at(cal, wedges, &x)?;
    let omega = objective.weights(n);
    let direct = r.tape.vjp(r.nodes.welfare, &omega, &[r.state, r.tariff, r.wedge])?;
    let jx = jacobian_rows(&r.tape, r.nodes.next, r.state, k)?;
    let jt = jacobian_rows(&r.tape, r.nodes.next, r.tariff, k)?;
    let je = jacobian_rows(&r.tape, r.nodes.next, r.wedge, k)?;
    let a = DMatrix::identity(k, k) - jx;
    let direct_a = to_instruments(instruments, n, j, direct[1].data(), direct[2].data());
    let mut values = Vec::with_capacity(instruments.len());
    for (col, inst) in instruments.iter().enumerate() {
        // ∂G/∂a_k as a column
        let mut dg = vec![0.0; k];
        for (kind, o, d, s, coef) in inst.entries(n) {
            let idx = (o * n + d) * j + s;
            let m = match kind {
                WedgeKind::Tariff => &jt,
                WedgeKind::ExportWedge => &je,
            };
            for (row, v) in dg.iter_mut().enumerate() {
                *v += coef * m[(row, idx)];
            }
        }
        let dx = linalg::solve(&a, &dg, false).map_err(SensitivityError::Singular)?;
        let through: f64 = direct[0].data().iter().zip(&dx).map(|(w, v)| w * v).sum();
        values.push(direct_a[col] + through);
    }
    Ok(GradientVector {
        values,
        linear_solves: instruments.len(),
        method: GradientMethod::Literal,
    })
}

/// Central-difference gradient. Each probe re-solves the equilibrium to
/// `opts.tol / 10` with Newton refinement, warm-started from `warm_start`.
pub fn finite_difference_gradient(
    cal: &Calibration,
    wedges: &PolicyWedges,
    objective: &Objective,
    instruments: &[Instrument],
    step: f64,
    opts: &SolverOptions,
    warm_start: Option<&HatState>,
) -> Result<GradientVector, SensitivityError> {
    if !(step > 0.0) {
        return Err(SensitivityError::Step(step));
    }
    objective.check(cal.countries())?;
    let probe_opts = SolverOptions {
        tol: opts.tol / 10.0,
        newton: Some(opts.newton.clone().unwrap_or_default()),
        ..opts.clone()
    };
    let base = read_values(instruments, wedges);
    let results = par::map_indexed(instruments.len(), |k| {
        let probe = |h: f64| -> Result<f64, EquilibriumError> {
            let mut v = base.clone();
            v[k] += h;
            let w = apply_values(instruments, wedges, &v);
            let eq = solve_fixed_point(cal, &w, &probe_opts, warm_start)?;
            Ok(objective.value(&eq))
        };
        let up = probe(step)?;
        let down = probe(-step)?;
        Ok((up - down) / (2.0 * step))
    });
    let values = results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|source| SensitivityError::Probe {
                index,
                instrument: instruments[index].to_string(),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GradientVector {
        values,
        method: GradientMethod::FiniteDifference,
        linear_solves: 0,
    })
}

/// Largest entrywise relative error `|a - b| / max(|b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::{generate_synthetic, SyntheticOptions};
    use crate::game::instruments::{MaskOptions, ScenarioKind, ScenarioMask};

    fn setup(seed: u64, n: usize, j: usize) -> (Calibration, PolicyWedges, Vec<Instrument>, HatEquilibrium) {
        let c = generate_synthetic(seed, n, j, &SyntheticOptions::default()).unwrap();
        let mask = ScenarioMask::new(&c, ScenarioKind::Dual, &MaskOptions::default()).unwrap();
        let inst = mask.all_instruments();
        let mut w = PolicyWedges::uniform_tariff(&c, 0.15);
        w.set_subsidy(0, 0, 0.05);
        let eq = solve_fixed_point(&c, &w, &SolverOptions::precise(1e-13), None).unwrap();
        (c, w, inst, eq)
    }

    #[test]
    fn adjoint_matches_literal_form() {
        let (c, w, inst, eq) = setup(8, 2, 2);
        for obj in [Objective::Country(0), Objective::income_weighted(&c)] {
            let adj = policy_gradient(&c, &w, &obj, &inst, &eq).unwrap();
            let lit = literal_policy_gradient(&c, &w, &obj, &inst, &eq).unwrap();
            assert_eq!(adj.linear_solves, 1);
            assert_eq!(lit.linear_solves, inst.len());
            assert!(max_relative_error(&adj.values, &lit.values, 1e-12) < 1e-8);
        }
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let (c, w, inst, eq) = setup(9, 2, 1);
        let obj = Objective::Country(1);
        let adj = policy_gradient(&c, &w, &obj, &inst, &eq).unwrap();
        let fd = finite_difference_gradient(&c, &w, &obj, &inst, 1e-6, &SolverOptions::precise(1e-12), Some(&eq.state)).unwrap();
        let err = max_relative_error(&adj.values, &fd.values, 1e-6);
        assert!(err < 1e-4, "{err}: {:?} vs {:?}", adj.values, fd.values);
    }

    #[test]
    fn refuses_unconverged_and_empty_masks() {
        let (c, w, inst, mut eq) = setup(10, 2, 1);
        let g = policy_gradient(&c, &w, &Objective::Country(0), &[], &eq).unwrap();
        assert!(g.is_empty());
        eq.residual = 1.0;
        assert!(matches!(
            policy_gradient(&c, &w, &Objective::Country(0), &inst, &eq),
            Err(SensitivityError::NotConverged { .. })
        ));
        assert!(matches!(
            finite_difference_gradient(&c, &w, &Objective::Country(0), &inst, 0.0, &SolverOptions::default(), None),
            Err(SensitivityError::Step(_))
        ));
    }

    #[test]
    fn objective_weights() {
        assert_eq!(Objective::Country(1).weights(3), vec![0.0, 1.0, 0.0]);
        assert!(Objective::Country(3).check(3).is_err());
    }
}
