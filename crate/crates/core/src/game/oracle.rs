//! Brute-force verification: welfare on instrument grids and single-instrument
//! deviations around a policy profile.

use super::{GameError, Instrument, InstrumentLimits, ScenarioMask};
use crate::economy::{Calibration, PolicyWedges};
use crate::equilibrium::{solve_fixed_point, SolverOptions};
use crate::game::instruments::{apply_values, read_values};
use crate::par;
use crate::sensitivity::Objective;

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub values: Vec<f64>,
    /// Objective value, or why the point was skipped or failed.
    pub welfare: Result<f64, String>,
}

/// Evenly spaced points from `lo` to `hi`; a single step yields `lo`.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..steps)
            .map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64)
            .collect(),
    }
}

/// Evaluates `objective` on the tensor grid spanned by one or two
/// instruments, all other entries fixed at `wedges`. Points outside the
/// instrument bounds are rejected with a reason rather than solved.
pub fn welfare_grid(
    cal: &Calibration,
    wedges: &PolicyWedges,
    objective: &Objective,
    instruments: &[Instrument],
    ranges: &[(f64, f64)],
    steps: usize,
    limits: &InstrumentLimits,
    solver: &SolverOptions,
) -> Result<Vec<GridPoint>, GameError> {
    if instruments.is_empty() || instruments.len() > 2 || ranges.len() != instruments.len() {
        return Err(GameError::Options("grid needs one or two instruments with one range each".into()));
    }
    if steps == 0 {
        return Err(GameError::Options("grid needs at least one step".into()));
    }
    let axes: Vec<Vec<f64>> = ranges.iter().map(|&(lo, hi)| linspace(lo, hi, steps)).collect();
    let points: Vec<Vec<f64>> = if axes.len() == 1 {
        axes[0].iter().map(|&v| vec![v]).collect()
    } else {
        axes[0]
            .iter()
            .flat_map(|&a| axes[1].iter().map(move |&b| vec![a, b]))
            .collect()
    };
    let base = solve_fixed_point(cal, wedges, solver, None).map_err(|source| GameError::Equilibrium {
        point: "grid base".into(),
        source,
    })?;
    let welfare = par::map_slice(&points, |values| {
        for (inst, &v) in instruments.iter().zip(values) {
            let (lo, hi) = inst.bounds(limits);
            if v < lo || v > hi {
                return Err(format!("{inst}={v} outside bounds [{lo}, {hi}]"));
            }
        }
        let w = apply_values(instruments, wedges, values);
        solve_fixed_point(cal, &w, solver, Some(&base.state))
            .map(|eq| objective.value(&eq))
            .map_err(|e| e.to_string())
    });
    Ok(points
        .into_iter()
        .zip(welfare)
        .map(|(values, welfare)| GridPoint { values, welfare })
        .collect())
}

/// Point with the largest successful objective value (first on ties).
pub fn grid_argmax(points: &[GridPoint]) -> Option<&GridPoint> {
    points
        .iter()
        .filter(|p| p.welfare.is_ok())
        .fold(None, |best: Option<&GridPoint>, p| match best {
            Some(b) if b.welfare.as_ref().unwrap() >= p.welfare.as_ref().unwrap() => Some(b),
            _ => Some(p),
        })
}

/// One unilateral deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct Deviation {
    pub player: usize,
    pub instrument: String,
    pub delta: f64,
    /// `Ŵ_player(deviated) - Ŵ_player(profile)`.
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviationReport {
    pub base_welfare: Vec<f64>,
    pub deviations: Vec<Deviation>,
    /// Deviations skipped because they leave the instrument bounds.
    pub skipped: usize,
}

impl DeviationReport {
    pub fn max_gain(&self) -> Option<&Deviation> {
        self.deviations
            .iter()
            .fold(None, |best: Option<&Deviation>, d| match best {
                Some(b) if b.gain >= d.gain => Some(b),
                _ => Some(d),
            })
    }
}

/// Shifts each instrument of each player by `±delta` (absolute, in rate
/// units) for every `delta`, re-solves, and records the player's welfare gain.
pub fn deviation_check(
    cal: &Calibration,
    profile: &PolicyWedges,
    mask: &ScenarioMask,
    deltas: &[f64],
    limits: &InstrumentLimits,
    solver: &SolverOptions,
) -> Result<DeviationReport, GameError> {
    let base = solve_fixed_point(cal, profile, solver, None).map_err(|source| GameError::Equilibrium {
        point: "deviation base".into(),
        source,
    })?;
    let mut jobs = Vec::new();
    let mut skipped = 0;
    for (k, inst) in mask.instruments.iter().enumerate() {
        let values = read_values(inst, profile);
        for (i, instrument) in inst.iter().enumerate() {
            let (lo, hi) = instrument.bounds(limits);
            for &d in deltas {
                for delta in [d, -d] {
                    let v = values[i] + delta;
                    if v < lo || v > hi {
                        skipped += 1;
                    } else {
                        jobs.push((k, instrument.clone(), delta, v));
                    }
                }
            }
        }
    }
    let gains = par::map_slice(&jobs, |(k, instrument, _, v)| {
        let player = mask.players[*k];
        let w = apply_values(std::slice::from_ref(instrument), profile, &[*v]);
        solve_fixed_point(cal, &w, solver, Some(&base.state)).map(|eq| eq.welfare[player] - base.welfare[player])
    });
    let mut deviations = Vec::with_capacity(jobs.len());
    for ((k, instrument, delta, v), gain) in jobs.into_iter().zip(gains) {
        let gain = gain.map_err(|source| GameError::Equilibrium {
            point: format!("{instrument}={v:.6}"),
            source,
        })?;
        deviations.push(Deviation {
            player: mask.players[k],
            instrument: instrument.to_string(),
            delta,
            gain,
        });
    }
    Ok(DeviationReport {
        base_welfare: base.welfare,
        deviations,
        skipped,
    })
}
