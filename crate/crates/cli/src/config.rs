//! Run configuration: a TOML file merged with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tradeopt::economy::{generate_synthetic, load_calibration, table_a1, SyntheticOptions};
use tradeopt::equilibrium::NewtonOptions;
use tradeopt::game::{BestResponseOptions, InstrumentLimits, MaskOptions, NashOptions, ScenarioKind};
use tradeopt::optimizer::AdamConfig;
use tradeopt::{Calibration, SolverOptions};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub scenario: Option<ScenarioKind>,
    pub players: Option<Vec<usize>>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub calibration: CalibrationSource,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub game: GameSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub limits: InstrumentLimits,
    #[serde(default)]
    pub mask: MaskSection,
}

/// Exactly one of `path` and `synthetic`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSource {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub countries: usize,
    pub sectors: usize,
    /// Generator seed; the run seed when absent.
    pub seed: Option<u64>,
    pub trade_openness: f64,
    pub io_intensity: f64,
    pub psi_range: (f64, f64),
    pub theta_range: (f64, f64),
    pub symmetric: bool,
    pub nontradable: usize,
    pub max_baseline_tariff: f64,
    /// Rows of the embedded elasticity table (0-based) to use as the
    /// tradable sectors' `(theta, psi)`, overriding the ranges.
    pub table_sectors: Option<Vec<usize>>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let o = SyntheticOptions::default();
        Self {
            countries: 3,
            sectors: 3,
            seed: None,
            trade_openness: o.trade_openness,
            io_intensity: o.io_intensity,
            psi_range: o.psi_range,
            theta_range: o.theta_range,
            symmetric: o.symmetric,
            nontradable: o.nontradable,
            max_baseline_tariff: o.max_baseline_tariff,
            table_sectors: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameSection {
    pub eta: f64,
    pub epochs: usize,
    /// Ascent steps per player per epoch.
    pub iters: usize,
    pub tol_outer: f64,
    /// Projected-gradient norm that ends a best response early.
    pub br_tol: f64,
    pub decrease_window: usize,
    pub decrease_tol: f64,
}

impl Default for GameSection {
    fn default() -> Self {
        let n = NashOptions::default();
        Self {
            eta: n.eta,
            epochs: n.epochs,
            iters: n.br.iters,
            tol_outer: n.tol,
            br_tol: n.br.tol,
            decrease_window: n.br.decrease_window,
            decrease_tol: n.br.decrease_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol_inner: f64,
    pub max_iter: usize,
    /// Damping on wages and employment.
    pub damping: f64,
    pub damping_price_expenditure: f64,
    pub divergence_window: usize,
    pub newton: bool,
    pub newton_switch: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            tol_inner: s.tol,
            max_iter: s.max_iter,
            damping: s.damping_wage_labor,
            damping_price_expenditure: s.damping_price_expenditure,
            divergence_window: s.divergence_window,
            newton: false,
            newton_switch: NewtonOptions::default().switch_residual,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSection {
    pub uniform_sectors: Option<Vec<usize>>,
    pub export_taxes: bool,
}

/// Command-line values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub scenario: Option<ScenarioKind>,
    pub players: Option<Vec<usize>>,
    pub calibration: Option<PathBuf>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub iters: Option<usize>,
    pub eta: Option<f64>,
    pub max_grad_norm: Option<f64>,
    pub no_clip: bool,
    pub tol_inner: Option<f64>,
    pub tol_outer: Option<f64>,
    pub damping: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = Some(v);
        }
        if let Some(v) = o.scenario {
            self.scenario = Some(v);
        }
        if let Some(v) = &o.players {
            self.players = Some(v.clone());
        }
        if let Some(v) = &o.calibration {
            self.calibration = CalibrationSource {
                path: Some(v.clone()),
                synthetic: None,
            };
        }
        if let Some(v) = o.lr {
            self.optimizer.lr = v;
        }
        if let Some(v) = o.epochs {
            self.game.epochs = v;
        }
        if let Some(v) = o.iters {
            self.game.iters = v;
        }
        if let Some(v) = o.eta {
            self.game.eta = v;
        }
        if let Some(v) = o.max_grad_norm {
            self.optimizer.max_grad_norm = v;
        }
        if o.no_clip {
            self.optimizer.clip = false;
        }
        if let Some(v) = o.tol_inner {
            self.solver.tol_inner = v;
        }
        if let Some(v) = o.tol_outer {
            self.game.tol_outer = v;
        }
        if let Some(v) = o.damping {
            self.solver.damping = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = Some(v.clone());
        }
    }

    /// Checks everything that does not need the calibration.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.seed.is_none() {
            return bad("a seed is required (set `seed` in the config or pass --seed)".into());
        }
        for (name, v) in [
            ("solver.tol_inner", self.solver.tol_inner),
            ("game.tol_outer", self.game.tol_outer),
            ("game.br_tol", self.game.br_tol),
            ("solver.newton_switch", self.solver.newton_switch),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        match (&self.calibration.path, &self.calibration.synthetic) {
            (Some(_), Some(_)) => return bad("calibration: set either `path` or `synthetic`, not both".into()),
            (None, None) => {
                return bad("no calibration: set calibration.path, a [calibration.synthetic] table, or --calibration".into())
            }
            _ => {}
        }
        self.optimizer.validate().map_err(CliError::Validation)?;
        self.nash_options().validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            tol: s.tol_inner,
            max_iter: s.max_iter,
            damping_wage_labor: s.damping,
            damping_price_expenditure: s.damping_price_expenditure,
            divergence_window: s.divergence_window,
            newton: s.newton.then(|| NewtonOptions {
                switch_residual: s.newton_switch,
                ..Default::default()
            }),
            record_history: false,
        }
    }

    pub fn br_options(&self) -> BestResponseOptions {
        BestResponseOptions {
            adam: self.optimizer.clone(),
            iters: self.game.iters,
            tol: self.game.br_tol,
            solver: self.solver_options(),
            limits: self.limits.clone(),
            decrease_window: self.game.decrease_window,
            decrease_tol: self.game.decrease_tol,
        }
    }

    pub fn nash_options(&self) -> NashOptions {
        NashOptions {
            eta: self.game.eta,
            epochs: self.game.epochs,
            tol: self.game.tol_outer,
            seed: self.seed.unwrap_or_default(),
            br: self.br_options(),
        }
    }

    pub fn mask_options(&self) -> MaskOptions {
        MaskOptions {
            players: self.players.clone(),
            uniform_sectors: self.mask.uniform_sectors.clone(),
            export_taxes: self.mask.export_taxes,
        }
    }

    pub fn calibration(&self) -> Result<Calibration, CliError> {
        if let Some(path) = &self.calibration.path {
            return load_calibration(path).map_err(|e| CliError::from_calibration(e, path));
        }
        let spec = self.calibration.synthetic.clone().unwrap_or_default();
        let elasticities = match &spec.table_sectors {
            None => None,
            Some(rows) => {
                let table = table_a1();
                let mut out = Vec::with_capacity(rows.len());
                for &r in rows {
                    let row = table.get(r).ok_or_else(|| {
                        CliError::Validation(format!("table_sectors: row {r} out of range 0..{}", table.len()))
                    })?;
                    out.push((row.theta, row.psi));
                }
                Some(out)
            }
        };
        let opts = SyntheticOptions {
            trade_openness: spec.trade_openness,
            io_intensity: spec.io_intensity,
            psi_range: spec.psi_range,
            theta_range: spec.theta_range,
            symmetric: spec.symmetric,
            nontradable: spec.nontradable,
            max_baseline_tariff: spec.max_baseline_tariff,
            elasticities,
        };
        let seed = spec.seed.unwrap_or(self.seed());
        generate_synthetic(seed, spec.countries, spec.sectors, &opts)
            .map_err(|e| CliError::Validation(format!("synthetic calibration: {e}")))
    }
}
