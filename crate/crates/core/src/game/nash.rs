//! Best-response dynamics and the cooperative planner.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ascend, instrument_bounds, solve_at, BestResponseOptions, GameError, ScenarioMask};
use crate::economy::{Calibration, PolicyWedges};
use crate::equilibrium::HatEquilibrium;
use crate::game::instruments::{apply_values, read_values, ScenarioKind};
use crate::optimizer::{project, AdamState};
use crate::sensitivity::Objective;

#[derive(Clone, Debug, PartialEq)]
pub struct NashOptions {
    /// Blend weight on the new best response.
    pub eta: f64,
    pub epochs: usize,
    /// Sup-norm of policy changes over a round that counts as converged.
    pub tol: f64,
    pub seed: u64,
    pub br: BestResponseOptions,
}

impl Default for NashOptions {
    fn default() -> Self {
        Self {
            eta: 1.0,
            epochs: 20,
            tol: 1e-5,
            seed: 0,
            br: BestResponseOptions::default(),
        }
    }
}

impl NashOptions {
    pub fn validate(&self) -> Result<(), GameError> {
        self.br.validate()?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(GameError::Options(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if self.epochs == 0 {
            return Err(GameError::Options("epochs must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(GameError::Options("outer tol must be positive".into()));
        }
        Ok(())
    }
}

/// Final state of one player.
#[derive(Clone, Debug, PartialEq)]
pub struct PlayerReport {
    pub player: usize,
    pub values: Vec<f64>,
    /// Projected gradient norm from the player's last ascent.
    pub stationarity: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct GameResult {
    pub scenario: ScenarioKind,
    pub profile: PolicyWedges,
    pub players: Vec<PlayerReport>,
    /// `Ŵ_n` for every country at `profile`.
    pub welfare: Vec<f64>,
    /// Objective value per player (Nash) or the planner's weighted welfare.
    pub objective: Vec<f64>,
    /// Sup-norm of policy changes in each round.
    pub round_norms: Vec<f64>,
    /// Playing order of each round.
    pub sequences: Vec<Vec<usize>>,
    pub seed: u64,
    pub epochs: usize,
    pub converged: bool,
    pub equilibrium: HatEquilibrium,
}

impl GameResult {
    pub fn welfare_pct(&self) -> Vec<f64> {
        self.welfare.iter().map(|w| 100.0 * (w - 1.0)).collect()
    }
}

fn sup_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Best-response dynamics with a seeded random-shuffle playing order.
///
/// Starts from `start` (baseline wedges when `None`). Each player keeps its
/// optimizer moments across rounds.
pub fn nash_solve(
    cal: &Calibration,
    mask: &ScenarioMask,
    opts: &NashOptions,
    start: Option<&PolicyWedges>,
) -> Result<GameResult, GameError> {
    opts.validate()?;
    if mask.kind.is_cooperative() {
        return Err(GameError::Options(format!(
            "{} is a cooperative scenario; use the planner",
            mask.kind
        )));
    }
    let mut profile = start.cloned().unwrap_or_else(|| PolicyWedges::baseline(cal));
    for (k, inst) in mask.instruments.iter().enumerate() {
        let bounds = instrument_bounds(inst, &opts.br.limits);
        let v = project(&read_values(inst, &profile), &bounds);
        profile = apply_values(&mask.instruments[k], &profile, &v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut states: Vec<AdamState> = mask.instruments.iter().map(|i| AdamState::new(i.len())).collect();
    let mut reports: Vec<PlayerReport> = mask
        .players
        .iter()
        .zip(&mask.instruments)
        .map(|(&p, i)| PlayerReport {
            player: p,
            values: read_values(i, &profile),
            stationarity: f64::NAN,
            warnings: Vec::new(),
        })
        .collect();
    let mut warm = None;
    let mut round_norms = Vec::new();
    let mut sequences = Vec::new();
    let mut converged = false;
    for epoch in 0..opts.epochs {
        let mut order: Vec<usize> = (0..mask.players.len()).collect();
        order.shuffle(&mut rng);
        sequences.push(order.iter().map(|&k| mask.players[k]).collect());
        let mut round = 0.0_f64;
        for &k in &order {
            let player = mask.players[k];
            let inst = &mask.instruments[k];
            let before = read_values(inst, &profile);
            let br = ascend(
                cal,
                &profile,
                &Objective::Country(player),
                inst,
                &mut states[k],
                &opts.br,
                warm.as_ref(),
            )?;
            let after: Vec<f64> = before
                .iter()
                .zip(&br.values)
                .map(|(a, b)| opts.eta * b + (1.0 - opts.eta) * a)
                .collect();
            round = round.max(sup_change(&before, &after));
            profile = apply_values(inst, &profile, &after);
            let report = &mut reports[k];
            report.values = after;
            report.stationarity = br.stationarity;
            report
                .warnings
                .extend(br.warnings.iter().map(|w| format!("epoch {epoch}: {w}")));
            warm = Some(br.equilibrium.state);
        }
        log::debug!("epoch {epoch}: max policy change {round:.3e}");
        round_norms.push(round);
        if round < opts.tol {
            converged = true;
            break;
        }
    }
    let (_, eq) = solve_at(cal, &profile, &[], &[], &opts.br.solver, warm.as_ref())?;
    let objective = mask.players.iter().map(|&p| eq.welfare[p]).collect();
    Ok(GameResult {
        scenario: mask.kind,
        profile,
        players: reports,
        welfare: eq.welfare.clone(),
        objective,
        epochs: round_norms.len(),
        round_norms,
        sequences,
        seed: opts.seed,
        converged,
        equilibrium: eq,
    })
}

/// Planner maximising income-weighted world welfare over the union of all
/// players' instruments. Runs `epochs` blocks of `br.iters` ascent steps on
/// a single optimizer state.
pub fn cooperative_solve(
    cal: &Calibration,
    mask: &ScenarioMask,
    opts: &NashOptions,
) -> Result<GameResult, GameError> {
    opts.validate()?;
    let instruments = mask.all_instruments();
    let objective = Objective::income_weighted(cal);
    let bounds = instrument_bounds(&instruments, &opts.br.limits);
    let start = PolicyWedges::baseline(cal);
    let mut profile = apply_values(&instruments, &start, &project(&read_values(&instruments, &start), &bounds));
    let mut state = AdamState::new(instruments.len());
    let mut warm = None;
    let mut round_norms = Vec::new();
    let mut converged = false;
    let mut last = None;
    for epoch in 0..opts.epochs {
        let before = read_values(&instruments, &profile);
        let run = ascend(cal, &profile, &objective, &instruments, &mut state, &opts.br, warm.as_ref())?;
        let change = sup_change(&before, &run.values);
        profile = apply_values(&instruments, &profile, &run.values);
        warm = Some(run.equilibrium.state.clone());
        log::debug!("planner block {epoch}: max policy change {change:.3e}");
        round_norms.push(change);
        last = Some(run);
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let run = last.expect("at least one epoch");
    let eq = run.equilibrium;
    let mut offset = 0;
    let players = mask
        .players
        .iter()
        .zip(&mask.instruments)
        .map(|(&p, inst)| {
            let values = run.values[offset..offset + inst.len()].to_vec();
            offset += inst.len();
            PlayerReport {
                player: p,
                values,
                stationarity: run.stationarity,
                warnings: run.warnings.clone(),
            }
        })
        .collect();
    Ok(GameResult {
        scenario: mask.kind,
        profile,
        players,
        welfare: eq.welfare.clone(),
        objective: vec![objective.value(&eq)],
        epochs: round_norms.len(),
        round_norms,
        sequences: Vec::new(),
        seed: opts.seed,
        converged,
        equilibrium: eq,
    })
}
