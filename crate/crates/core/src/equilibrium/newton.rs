//! Newton-Kantorovich refinement `x ← x − (I − ∂G/∂x)⁻¹ (x − G(x))`.

use nalgebra::DMatrix;

use super::{
    evaluate, finish, state_jacobian, sup_diff, EquilibriumError, HatEquilibrium, HatState,
    ModelConstants, SolverOptions,
};
use crate::economy::{Calibration, PolicyWedges};
use crate::linalg;

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Contraction residual below which the solver switches to Newton steps.
    pub switch_residual: f64,
    pub max_steps: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            switch_residual: 1e-4,
            max_steps: 20,
        }
    }
}

/// Result of the generic iteration: final point, steps taken, residual
/// history (one entry per evaluated point).
#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub steps: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Newton-Kantorovich iteration for `x = G(x)` where `map(x)` returns
/// `(G(x), ∂G/∂x)`. Steps are halved while they would leave the positive
/// orthant.
pub fn newton_kantorovich<F>(
    x0: &[f64],
    mut map: F,
    tol: f64,
    max_steps: usize,
) -> Result<NewtonOutcome, EquilibriumError>
where
    F: FnMut(&[f64]) -> Result<(Vec<f64>, DMatrix<f64>), EquilibriumError>,
{
    let mut x = x0.to_vec();
    let mut history = Vec::new();
    for step in 0..=max_steps {
        let (g, jac) = map(&x)?;
        let residual = sup_diff(&x, &g);
        history.push(residual);
        if residual < tol {
            return Ok(NewtonOutcome {
                x,
                steps: step,
                residual,
                history,
            });
        }
        if step == max_steps {
            return Err(EquilibriumError::NonConvergence {
                iterations: step,
                residual,
            });
        }
        let k = x.len();
        let a = DMatrix::identity(k, k) - jac;
        let f: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - gi).collect();
        let delta = linalg::solve(&a, &f, false).map_err(EquilibriumError::Singular)?;
        let mut scale = 1.0;
        for _ in 0..30 {
            if x.iter().zip(&delta).all(|(xi, di)| xi - scale * di > 0.0) {
                break;
            }
            scale *= 0.5;
        }
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi -= scale * di;
        }
    }
    unreachable!("loop returns on its final step")
}

/// Refines a near-fixed-point `state` with Newton-Kantorovich steps using the
/// tape Jacobian of the equilibrium map, to `opts.tol`.
pub fn newton_kantorovich_refine(
    cal: &Calibration,
    wedges: &PolicyWedges,
    state: &HatState,
    opts: &SolverOptions,
) -> Result<HatEquilibrium, EquilibriumError> {
    opts.validate()?;
    wedges.validate(cal)?;
    let consts = ModelConstants::new(cal);
    let max_steps = opts.newton.as_ref().map_or(NewtonOptions::default().max_steps, |n| n.max_steps);
    let out = newton_kantorovich(
        &state.to_vector(),
        |x| state_jacobian(&consts, wedges, x),
        opts.tol,
        max_steps,
    )?;
    let eval = evaluate(&consts, wedges, &out.x)?;
    let history = if opts.record_history { out.history } else { Vec::new() };
    finish(cal, out.x, eval, out.steps, out.residual, opts.tol, history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::{generate_synthetic, SyntheticOptions};
    use crate::equilibrium::solve_fixed_point;

    #[test]
    fn quadratic_convergence_from_loose_solution() {
        let c = generate_synthetic(21, 2, 1, &SyntheticOptions::default()).unwrap();
        let w = PolicyWedges::uniform_tariff(&c, 0.25);
        let loose = SolverOptions {
            tol: 1e-4,
            ..Default::default()
        };
        let start = solve_fixed_point(&c, &w, &loose, None).unwrap();
        assert!(start.residual < 1e-4);
        let tight = SolverOptions {
            tol: 1e-12,
            record_history: true,
            ..Default::default()
        };
        let eq = newton_kantorovich_refine(&c, &w, &start.state, &tight).unwrap();
        assert!(eq.residual < 1e-12);
        assert!(eq.iterations <= 3, "steps {}", eq.iterations);
    }

    #[test]
    fn fixed_point_is_unchanged() {
        let c = generate_synthetic(2, 2, 2, &SyntheticOptions::default()).unwrap();
        let w = PolicyWedges::baseline(&c);
        let ones = HatState::ones(2, 2);
        let eq = newton_kantorovich_refine(&c, &w, &ones, &SolverOptions::default()).unwrap();
        assert_eq!(eq.state, ones);
        assert_eq!(eq.iterations, 0);
    }

    #[test]
    fn singular_map_reports_fallback() {
        let err = newton_kantorovich(
            &[1.0, 2.0],
            |x| Ok((x.iter().map(|v| v + 1.0).collect(), DMatrix::identity(2, 2))),
            1e-12,
            5,
        )
        .unwrap_err();
        assert!(matches!(err, EquilibriumError::Singular(_)));
        assert!(err.to_string().contains("damped contraction"));
    }

    #[test]
    fn linear_map_solved_in_one_step() {
        // G(x) = 0.5 x + 1 has fixed point 2.
        let out = newton_kantorovich(
            &[1.0],
            |x| Ok((vec![0.5 * x[0] + 1.0], DMatrix::from_element(1, 1, 0.5))),
            1e-14,
            5,
        )
        .unwrap();
        assert_eq!(out.steps, 1);
        assert!((out.x[0] - 2.0).abs() < 1e-15);
    }
}
