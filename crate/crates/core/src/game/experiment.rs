//! Random perturbations of a player's subsidies around a policy profile.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GameError;
use crate::economy::{Calibration, PolicyWedges};
use crate::equilibrium::{solve_fixed_point, HatState, SolverOptions};
use crate::par;

/// One draw of the experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationDraw {
    pub index: usize,
    /// Drawn subsidy per tradable sector, in `sectors` order.
    pub subsidies: Vec<f64>,
    /// `Ŵ_player`, or the failure message.
    pub welfare: Result<f64, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationResult {
    pub player: usize,
    pub seed: u64,
    pub sectors: Vec<usize>,
    /// Subsidies `s*` in the reference profile.
    pub reference: Vec<f64>,
    /// `Ŵ_player` at the reference profile.
    pub reference_welfare: f64,
    pub draws: Vec<PerturbationDraw>,
}

impl PerturbationResult {
    /// Largest successful draw welfare.
    pub fn max_welfare(&self) -> Option<f64> {
        self.draws
            .iter()
            .filter_map(|d| d.welfare.as_ref().ok().copied())
            .fold(None, |m, w| Some(m.map_or(w, |m: f64| m.max(w))))
    }
}

/// Draws each of `player`'s tradable-sector subsidies uniformly from
/// `[0.1 s*, 1.9 s*]`, holding everything else at `profile`, and records the
/// player's welfare for each draw. Draws are generated sequentially from the
/// seed, then solved independently.
pub fn subsidy_perturbation_experiment(
    cal: &Calibration,
    profile: &PolicyWedges,
    player: usize,
    draws: usize,
    seed: u64,
    solver: &SolverOptions,
    warm: Option<&HatState>,
) -> Result<PerturbationResult, GameError> {
    if player >= cal.countries() {
        return Err(GameError::Options(format!("player {player} out of range")));
    }
    if draws == 0 {
        return Err(GameError::Options("draws must be at least 1".into()));
    }
    let sectors = cal.tradable_sectors();
    let reference: Vec<f64> = sectors.iter().map(|&j| profile.subsidy(player, j)).collect();
    let base = solve_fixed_point(cal, profile, solver, warm).map_err(|source| GameError::Equilibrium {
        point: "reference profile".into(),
        source,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<f64>> = (0..draws)
        .map(|_| {
            reference
                .iter()
                .map(|&s| {
                    let (lo, hi) = (0.1 * s, 1.9 * s);
                    if hi > lo {
                        rng.random_range(lo..hi)
                    } else {
                        s
                    }
                })
                .collect()
        })
        .collect();
    let results = par::map_slice(&samples, |s| {
        let mut w = profile.clone();
        for (&j, &v) in sectors.iter().zip(s) {
            w.set_subsidy(player, j, v);
        }
        solve_fixed_point(cal, &w, solver, Some(&base.state))
            .map(|eq| eq.welfare[player])
            .map_err(|e| e.to_string())
    });
    let draws = samples
        .into_iter()
        .zip(results)
        .enumerate()
        .map(|(index, (subsidies, welfare))| PerturbationDraw {
            index,
            subsidies,
            welfare,
        })
        .collect();
    Ok(PerturbationResult {
        player,
        seed,
        sectors,
        reference,
        reference_welfare: base.welfare[player],
        draws,
    })
}
