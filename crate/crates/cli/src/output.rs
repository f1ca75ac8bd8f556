//! Output files and their parsers.
//!
//! | file | columns |
//! |---|---|
//! | `policies.csv` | scenario, player, origin, destination, sector, tariff, subsidy |
//! | `welfare.csv` | scenario, country, welfare_change_pct |
//! | `hats.csv` | country, sector, wage, labor, price, expenditure |
//! | `perturb.csv` | kind, draw, s_<sector>..., welfare, welfare_change_pct, error |
//! | `gradient_check.csv` | instrument, adjoint, finite_difference, abs_error, rel_error |
//! | `grid.csv` | value_1, value_2, welfare, welfare_change_pct, error |
//! | `profile.json` | policy wedges, readable by `--wedges` |
//! | `metadata.json` | config echo, seed, diagnostics |
//!
//! In `policies.csv` a row with `origin != destination` carries the tariff
//! the player levies on that origin and leaves `subsidy` empty; the row with
//! `origin == destination == player` carries the player's subsidy.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tradeopt::equilibrium::HatEquilibrium;
use tradeopt::game::experiment::PerturbationResult;
use tradeopt::{Calibration, PolicyWedges};

use crate::error::CliError;

pub fn pct(w: f64) -> f64 {
    100.0 * (w - 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub scenario: String,
    pub player: usize,
    pub origin: usize,
    pub destination: usize,
    pub sector: usize,
    pub tariff: Option<f64>,
    pub subsidy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelfareRow {
    pub scenario: String,
    pub country: usize,
    pub welfare_change_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HatRow {
    pub country: usize,
    pub sector: usize,
    pub wage: f64,
    pub labor: f64,
    pub price: f64,
    pub expenditure: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientRow {
    pub instrument: String,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub value_1: f64,
    pub value_2: Option<f64>,
    pub welfare: Option<f64>,
    pub welfare_change_pct: Option<f64>,
    pub error: Option<String>,
}

/// One parsed row of `perturb.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbRow {
    /// `draw` or `baseline`.
    pub kind: String,
    pub draw: Option<usize>,
    pub subsidies: Vec<f64>,
    pub welfare: Option<f64>,
    pub welfare_change_pct: Option<f64>,
    pub error: Option<String>,
}

/// Writes into one output directory.
pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_rows<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e))?;
        for r in rows {
            w.serialize(r).map_err(|e| CliError::io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("json value serializes");
        self.write_text(name, &(text + "\n"))
    }

    pub fn write_perturbation(&self, cal: &Calibration, r: &PerturbationResult) -> Result<(), CliError> {
        let path = self.path("perturb.csv");
        let io = |e: csv::Error| CliError::io(&path, e);
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        let mut header = vec!["kind".to_string(), "draw".to_string()];
        header.extend(r.sectors.iter().map(|&j| format!("s_{}", cal.data().sectors[j])));
        header.extend(["welfare", "welfare_change_pct", "error"].map(String::from));
        w.write_record(&header).map_err(io)?;
        let row = |kind: &str, draw: String, subs: &[f64], welfare: Result<f64, String>| {
            let mut rec = vec![kind.to_string(), draw];
            rec.extend(subs.iter().map(|s| s.to_string()));
            match welfare {
                Ok(v) => rec.extend([v.to_string(), pct(v).to_string(), String::new()]),
                Err(e) => rec.extend([String::new(), String::new(), e]),
            }
            rec
        };
        for d in &r.draws {
            w.write_record(row("draw", d.index.to_string(), &d.subsidies, d.welfare.clone()))
                .map_err(io)?;
        }
        w.write_record(row("baseline", String::new(), &r.reference, Ok(r.reference_welfare)))
            .map_err(io)?;
        w.flush().map_err(|e| CliError::io(&path, e))
    }
}

pub fn policy_rows(scenario: &str, players: &[usize], cal: &Calibration, w: &PolicyWedges) -> Vec<PolicyRow> {
    let mut rows = Vec::new();
    for &p in players {
        for s in 0..cal.sectors() {
            for o in 0..cal.countries() {
                let own = o == p;
                rows.push(PolicyRow {
                    scenario: scenario.to_string(),
                    player: p,
                    origin: o,
                    destination: p,
                    sector: s,
                    tariff: (!own).then(|| w.tariff[[o, p, s]]),
                    subsidy: own.then(|| w.subsidy(p, s)),
                });
            }
        }
    }
    rows
}

pub fn welfare_rows(scenario: &str, eq: &HatEquilibrium) -> Vec<WelfareRow> {
    eq.welfare
        .iter()
        .enumerate()
        .map(|(country, &w)| WelfareRow {
            scenario: scenario.to_string(),
            country,
            welfare_change_pct: pct(w),
        })
        .collect()
}

pub fn hat_rows(eq: &HatEquilibrium) -> Vec<HatRow> {
    let s = &eq.state;
    let (n, j) = s.labor.dim();
    let mut rows = Vec::with_capacity(n * j);
    for i in 0..n {
        for k in 0..j {
            rows.push(HatRow {
                country: i,
                sector: k,
                wage: s.wage[i],
                labor: s.labor[[i, k]],
                price: s.price[[i, k]],
                expenditure: s.expenditure[[i, k]],
            });
        }
    }
    rows
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn read_perturbation(path: &Path) -> Result<Vec<PerturbRow>, CliError> {
    let bad = |m: String| CliError::Validation(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let width = header.len();
    if width < 5 || &header[0] != "kind" || &header[width - 1] != "error" {
        return Err(bad("unexpected header".into()));
    }
    let num = |s: &str| -> Result<Option<f64>, CliError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| bad(format!("{s:?}: {e}")))
        }
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let subsidies = (2..width - 3)
            .map(|k| num(&rec[k]).and_then(|v| v.ok_or_else(|| bad("missing subsidy".into()))))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(PerturbRow {
            kind: rec[0].to_string(),
            draw: if rec[1].is_empty() {
                None
            } else {
                Some(rec[1].parse().map_err(|e| bad(format!("draw: {e}")))?)
            },
            subsidies,
            welfare: num(&rec[width - 3])?,
            welfare_change_pct: num(&rec[width - 2])?,
            error: (!rec[width - 1].is_empty()).then(|| rec[width - 1].to_string()),
        });
    }
    Ok(rows)
}
