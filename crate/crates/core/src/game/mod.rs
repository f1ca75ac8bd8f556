//! Policy games on top of the equilibrium: unilateral best responses by
//! projected ADAM ascent, Nash equilibria by best-response dynamics with a
//! shuffled playing order, the cooperative planner, and verification
//! experiments.

pub mod experiment;
pub mod instruments;
mod nash;
pub mod oracle;

use thiserror::Error;

use crate::economy::{Calibration, PolicyWedges};
use crate::equilibrium::{solve_fixed_point, EquilibriumError, HatEquilibrium, HatState, SolverOptions};
use crate::optimizer::{adam_step, project, stationarity, AdamConfig, AdamState, Bounds};
use crate::sensitivity::{policy_gradient, Objective, SensitivityError};

pub use instruments::{
    apply_values, read_values, Instrument, InstrumentLimits, MaskOptions, ScenarioError, ScenarioKind,
    ScenarioMask,
};
pub use nash::{cooperative_solve, nash_solve, GameResult, NashOptions, PlayerReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("equilibrium failed at policy point {point}: {source}")]
    Equilibrium { point: String, source: EquilibriumError },
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
    #[error("invalid options: {0}")]
    Options(String),
}

/// Settings for one best-response (or planner) ascent.
#[derive(Clone, Debug, PartialEq)]
pub struct BestResponseOptions {
    pub adam: AdamConfig,
    /// Ascent steps per call.
    pub iters: usize,
    /// Stop early once the projected gradient norm falls below this.
    pub tol: f64,
    pub solver: SolverOptions,
    pub limits: InstrumentLimits,
    /// Steps over which an objective decrease is reported as a warning.
    pub decrease_window: usize,
    pub decrease_tol: f64,
}

impl Default for BestResponseOptions {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            iters: 50,
            tol: 1e-7,
            solver: SolverOptions::default(),
            limits: InstrumentLimits::default(),
            decrease_window: 10,
            decrease_tol: 1e-6,
        }
    }
}

impl BestResponseOptions {
    pub fn validate(&self) -> Result<(), GameError> {
        self.adam.validate().map_err(GameError::Options)?;
        self.limits.validate()?;
        self.solver
            .validate()
            .map_err(|e| GameError::Options(e.to_string()))?;
        if self.iters == 0 {
            return Err(GameError::Options("iters must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(GameError::Options("tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Outcome of one ascent run.
#[derive(Clone, Debug)]
pub struct BestResponse {
    /// Instrument values, in the order of the instrument list.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Projected gradient norm at the last evaluated iterate.
    pub stationarity: f64,
    /// Ascent steps taken.
    pub steps: usize,
    /// Equilibrium at `values`.
    pub equilibrium: HatEquilibrium,
    pub objective_history: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn instrument_bounds(instruments: &[Instrument], limits: &InstrumentLimits) -> Bounds {
    let (lo, hi) = instruments.iter().map(|i| i.bounds(limits)).unzip();
    Bounds::new(lo, hi)
}

fn describe(instruments: &[Instrument], values: &[f64]) -> String {
    let parts: Vec<String> = instruments
        .iter()
        .zip(values)
        .map(|(i, v)| format!("{i}={v:.6}"))
        .collect();
    if parts.is_empty() {
        "{}".into()
    } else {
        format!("{{{}}}", parts.join(", "))
    }
}

pub(crate) fn solve_at(
    cal: &Calibration,
    wedges: &PolicyWedges,
    instruments: &[Instrument],
    values: &[f64],
    solver: &SolverOptions,
    warm: Option<&HatState>,
) -> Result<(PolicyWedges, HatEquilibrium), GameError> {
    let w = apply_values(instruments, wedges, values);
    match solve_fixed_point(cal, &w, solver, warm) {
        Ok(eq) => Ok((w, eq)),
        Err(source) => Err(GameError::Equilibrium {
            point: describe(instruments, values),
            source,
        }),
    }
}

/// Projected ADAM ascent of `objective` over `instruments`, starting from
/// their values in `wedges`, all other entries held fixed. `state` carries
/// the moment estimates across calls.
pub fn ascend(
    cal: &Calibration,
    wedges: &PolicyWedges,
    objective: &Objective,
    instruments: &[Instrument],
    state: &mut AdamState,
    opts: &BestResponseOptions,
    warm: Option<&HatState>,
) -> Result<BestResponse, GameError> {
    opts.validate()?;
    if state.m.len() != instruments.len() {
        return Err(GameError::Options(format!(
            "optimizer state has {} entries for {} instruments",
            state.m.len(),
            instruments.len()
        )));
    }
    let bounds = instrument_bounds(instruments, &opts.limits);
    let mut values = project(&read_values(instruments, wedges), &bounds);
    let mut warm_state = warm.cloned();
    let mut history = Vec::with_capacity(opts.iters + 1);
    let mut warnings = Vec::new();
    let mut steps = 0;
    loop {
        let (w, eq) = solve_at(cal, wedges, instruments, &values, &opts.solver, warm_state.as_ref())?;
        let obj = objective.value(&eq);
        history.push(obj);
        let window = opts.decrease_window;
        if window > 0 && history.len() > window && warnings.is_empty() {
            let then = history[history.len() - 1 - window];
            if obj < then - opts.decrease_tol {
                warnings.push(format!(
                    "objective fell from {then:.8} to {obj:.8} over {window} steps (step {steps})"
                ));
            }
        }
        let g = policy_gradient(cal, &w, objective, instruments, &eq)?;
        let stat = stationarity(&values, &g.values, &bounds);
        if stat <= opts.tol || steps == opts.iters {
            return Ok(BestResponse {
                values,
                objective: obj,
                stationarity: stat,
                steps,
                equilibrium: eq,
                objective_history: history,
                warnings,
            });
        }
        values = project(&adam_step(state, &opts.adam, &values, &g.values), &bounds);
        warm_state = Some(eq.state);
        steps += 1;
    }
}

/// Best response of `player` over `instruments` with everyone else fixed at
/// `wedges`. Uses a fresh optimizer state.
pub fn best_response(
    cal: &Calibration,
    wedges: &PolicyWedges,
    player: usize,
    instruments: &[Instrument],
    opts: &BestResponseOptions,
) -> Result<BestResponse, GameError> {
    if player >= cal.countries() {
        return Err(ScenarioError::PlayerOutOfRange {
            player,
            countries: cal.countries(),
        }
        .into());
    }
    if let Some(i) = instruments.iter().find(|i| i.owner() != player) {
        return Err(GameError::Options(format!("{i} is not owned by player {player}")));
    }
    let mut state = AdamState::new(instruments.len());
    ascend(cal, wedges, &Objective::Country(player), instruments, &mut state, opts, None)
}
