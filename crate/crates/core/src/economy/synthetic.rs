//! Synthetic baselines built from a random level parameterisation.
//!
//! Draws productivities, trade costs, labour endowments and shares, solves
//! the level equilibrium under the baseline wedges, and reads the flows off
//! the solution. The resulting calibration satisfies the baseline accounting
//! identities to solver precision. The level model is kept around so that
//! counterfactuals can be cross-checked against ratios of level solutions.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Calibration, CalibrationData, CalibrationError, NONTRADABLE_PSI, NONTRADABLE_THETA};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticOptions {
    /// In `(0, 1]`; higher means lower iceberg costs on foreign routes.
    pub trade_openness: f64,
    /// Mean intermediate-input share `1 - β`, in `[0, 0.95]`.
    pub io_intensity: f64,
    pub psi_range: (f64, f64),
    pub theta_range: (f64, f64),
    /// All countries share parameters and route costs are symmetric.
    pub symmetric: bool,
    /// Number of trailing non-tradable sectors.
    pub nontradable: usize,
    pub max_baseline_tariff: f64,
    /// Explicit `(theta, psi)` for each tradable sector, overriding the ranges.
    pub elasticities: Option<Vec<(f64, f64)>>,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self {
            trade_openness: 0.5,
            io_intensity: 0.5,
            psi_range: (0.05, 0.15),
            theta_range: (2.0, 6.0),
            symmetric: false,
            nontradable: 0,
            max_baseline_tariff: 0.05,
            elasticities: None,
        }
    }
}

impl SyntheticOptions {
    fn validate(&self, n: usize, j: usize) -> Result<(), CalibrationError> {
        let err = |m: String| Err(CalibrationError::Options(m));
        if n < 2 || j < 1 {
            return err(format!("need N >= 2 and J >= 1, got N={n}, J={j}"));
        }
        if !(self.trade_openness > 0.0 && self.trade_openness <= 1.0) {
            return err(format!("trade_openness {} outside (0, 1]", self.trade_openness));
        }
        if !(0.0..=0.95).contains(&self.io_intensity) {
            return err(format!("io_intensity {} outside [0, 0.95]", self.io_intensity));
        }
        let (plo, phi) = self.psi_range;
        if !(plo >= 0.0 && plo <= phi) {
            return err(format!("psi_range ({plo}, {phi}) must satisfy 0 <= lo <= hi"));
        }
        let (tlo, thi) = self.theta_range;
        if !(tlo > 0.0 && tlo <= thi) {
            return err(format!("theta_range ({tlo}, {thi}) must satisfy 0 < lo <= hi"));
        }
        if self.nontradable > j {
            return err(format!("{} non-tradable sectors but only {j} sectors", self.nontradable));
        }
        if !(self.max_baseline_tariff >= 0.0) {
            return err(format!("max_baseline_tariff {} is negative", self.max_baseline_tariff));
        }
        if let Some(e) = &self.elasticities {
            if e.len() != j - self.nontradable {
                return err(format!(
                    "{} elasticity pairs for {} tradable sectors",
                    e.len(),
                    j - self.nontradable
                ));
            }
            if e.iter().any(|&(t, p)| !(t > 0.0) || !(p >= 0.0)) {
                return err("elasticity pairs need theta > 0 and psi >= 0".into());
            }
        }
        Ok(())
    }
}

/// Level parameters of a synthetic world.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelEconomy {
    pub tradable: Vec<bool>,
    pub alpha: Array2<f64>,
    pub beta: Array2<f64>,
    pub gamma: Array3<f64>,
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub labor: Vec<f64>,
    /// `[i][j]` Fréchet location.
    pub productivity: Array2<f64>,
    /// `[origin][destination][sector]`, one on the diagonal.
    pub trade_cost: Array3<f64>,
}

/// Level equilibrium `(w, L, P, X)` plus bilateral flows.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelEquilibrium {
    pub wage: Vec<f64>,
    pub labor: Array2<f64>,
    pub price: Array2<f64>,
    /// `[n][j]` total sectoral expenditure.
    pub expenditure: Array2<f64>,
    /// `[origin][destination][sector]`
    pub flows: Array3<f64>,
    pub income: Vec<f64>,
    pub iterations: usize,
}

fn simplex(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..len).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|d| d / total).collect()
}

impl LevelEconomy {
    pub fn random(seed: u64, n: usize, j: usize, opts: &SyntheticOptions) -> Result<Self, CalibrationError> {
        opts.validate(n, j)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tradable: Vec<bool> = (0..j).map(|s| s < j - opts.nontradable).collect();
        let mut theta = vec![NONTRADABLE_THETA; j];
        let mut psi = vec![NONTRADABLE_PSI; j];
        for s in 0..j - opts.nontradable {
            let (t, p) = match &opts.elasticities {
                Some(e) => e[s],
                None => (
                    opts.theta_range.0 + (opts.theta_range.1 - opts.theta_range.0) * rng.random::<f64>(),
                    opts.psi_range.0 + (opts.psi_range.1 - opts.psi_range.0) * rng.random::<f64>(),
                ),
            };
            theta[s] = t;
            psi[s] = p;
        }

        let draw_country = |rng: &mut ChaCha8Rng| {
            let alpha = simplex(rng, j);
            let beta: Vec<f64> = (0..j)
                .map(|_| (1.0 - opts.io_intensity * (0.5 + rng.random::<f64>())).clamp(0.05, 1.0))
                .collect();
            let gamma: Vec<Vec<f64>> = (0..j).map(|_| simplex(rng, j)).collect();
            let productivity: Vec<f64> = (0..j).map(|_| 0.5 + rng.random::<f64>()).collect();
            let labor = 0.5 + 1.5 * rng.random::<f64>();
            (alpha, beta, gamma, productivity, labor)
        };
        let mut countries = Vec::with_capacity(n);
        if opts.symmetric {
            let mut c = draw_country(&mut rng);
            c.4 = 1.0;
            countries.resize(n, c);
        } else {
            for _ in 0..n {
                countries.push(draw_country(&mut rng));
            }
        }
        let mut alpha = Array2::zeros((n, j));
        let mut beta = Array2::zeros((n, j));
        let mut gamma = Array3::zeros((n, j, j));
        let mut productivity = Array2::zeros((n, j));
        let mut labor = vec![0.0; n];
        for (i, (a, b, g, t, l)) in countries.into_iter().enumerate() {
            for s in 0..j {
                alpha[[i, s]] = a[s];
                beta[[i, s]] = b[s];
                productivity[[i, s]] = t[s];
                for k in 0..j {
                    // g[s] is the input mix of sector s
                    gamma[[i, k, s]] = g[s][k];
                }
            }
            labor[i] = l;
        }

        let spread = 2.0 * (1.0 - opts.trade_openness) + 0.1;
        let mut trade_cost = Array3::from_elem((n, n, j), 1.0);
        for s in 0..j {
            if opts.symmetric {
                let tau = 1.0 + spread * (0.5 + rng.random::<f64>());
                for o in 0..n {
                    for d in 0..n {
                        if o != d {
                            trade_cost[[o, d, s]] = tau;
                        }
                    }
                }
            } else {
                for o in 0..n {
                    for d in 0..n {
                        if o != d {
                            trade_cost[[o, d, s]] = 1.0 + spread * (0.5 + rng.random::<f64>());
                        }
                    }
                }
            }
        }
        Ok(Self {
            tradable,
            alpha,
            beta,
            gamma,
            theta,
            psi,
            labor,
            productivity,
            trade_cost,
        })
    }

    pub fn countries(&self) -> usize {
        self.labor.len()
    }

    pub fn sectors(&self) -> usize {
        self.theta.len()
    }

    /// Solves the level equilibrium by damped fixed-point iteration. The
    /// world wage bill is normalised to `Σ_i L_i`.
    pub fn solve(
        &self,
        tariff: &Array3<f64>,
        export_wedge: &Array3<f64>,
        tol: f64,
        max_iter: usize,
    ) -> Result<LevelEquilibrium, CalibrationError> {
        let (n, j) = (self.countries(), self.sectors());
        let world_labor: f64 = self.labor.iter().sum();
        let mut wage = vec![1.0_f64; n];
        let mut labor = Array2::from_shape_fn((n, j), |(i, _)| self.labor[i] / j as f64);
        let mut price = Array2::from_elem((n, j), 1.0_f64);
        let mut expenditure = Array2::from_shape_fn((n, j), |(i, s)| 2.0 * self.alpha[[i, s]] * self.labor[i]);
        let mut flows = Array3::zeros((n, n, j));
        let mut income = vec![0.0; n];
        let damp = 0.5;

        for iter in 1..=max_iter {
            let mut cost = Array2::zeros((n, j));
            for i in 0..n {
                for s in 0..j {
                    let inputs: f64 = (0..j)
                        .map(|k| self.gamma[[i, k, s]] * price[[i, k]].ln())
                        .sum();
                    let b = self.beta[[i, s]];
                    cost[[i, s]] = (b * wage[i].ln() + (1.0 - b) * inputs
                        - self.psi[s] * labor[[i, s]].ln())
                    .exp();
                }
            }
            let mut new_price = Array2::zeros((n, j));
            let mut revenue = Array3::zeros((n, n, j));
            for d in 0..n {
                for s in 0..j {
                    let th = self.theta[s];
                    let terms: Vec<f64> = (0..n)
                        .map(|o| {
                            if o != d && !self.tradable[s] {
                                return 0.0;
                            }
                            let m = cost[[o, s]]
                                * self.trade_cost[[o, d, s]]
                                * (1.0 + tariff[[o, d, s]])
                                * (1.0 + export_wedge[[o, d, s]]);
                            self.productivity[[o, s]] * m.powf(-th)
                        })
                        .collect();
                    let total: f64 = terms.iter().sum();
                    new_price[[d, s]] = total.powf(-1.0 / th);
                    for o in 0..n {
                        let x = terms[o] / total * expenditure[[d, s]];
                        flows[[o, d, s]] = x;
                        revenue[[o, d, s]] =
                            x / ((1.0 + tariff[[o, d, s]]) * (1.0 + export_wedge[[o, d, s]]));
                    }
                }
            }
            let mut wage_bill = Array2::zeros((n, j));
            let mut new_wage = vec![0.0; n];
            for i in 0..n {
                for s in 0..j {
                    let r: f64 = (0..n).map(|d| revenue[[i, d, s]]).sum();
                    wage_bill[[i, s]] = self.beta[[i, s]] * r;
                }
                new_wage[i] = wage_bill.row(i).sum() / self.labor[i];
            }
            let norm = world_labor / (0..n).map(|i| new_wage[i] * self.labor[i]).sum::<f64>();
            let mut new_expenditure = Array2::zeros((n, j));
            for i in 0..n {
                let mut y = new_wage[i] * self.labor[i];
                for s in 0..j {
                    for k in 0..n {
                        let e = export_wedge[[i, k, s]];
                        y += e / (1.0 + e) * flows[[i, k, s]];
                        let t = tariff[[k, i, s]];
                        y += t / ((1.0 + t) * (1.0 + export_wedge[[k, i, s]])) * flows[[k, i, s]];
                    }
                }
                income[i] = y;
                for g in 0..j {
                    let inter: f64 = (0..j)
                        .map(|s| {
                            let r: f64 = (0..n).map(|d| revenue[[i, d, s]]).sum();
                            (1.0 - self.beta[[i, s]]) * self.gamma[[i, g, s]] * r
                        })
                        .sum();
                    new_expenditure[[i, g]] = self.alpha[[i, g]] * y + inter;
                }
            }
            let mut change: f64 = 0.0;
            let mut rel = |old: f64, new: f64| {
                change = change.max((new - old).abs() / old.abs().max(1e-300));
            };
            for i in 0..n {
                let w = norm * new_wage[i];
                rel(wage[i], w);
                wage[i] += damp * (w - wage[i]);
                for s in 0..j {
                    let l = wage_bill[[i, s]] / new_wage[i];
                    rel(labor[[i, s]], l);
                    labor[[i, s]] += damp * (l - labor[[i, s]]);
                    let p = norm * new_price[[i, s]];
                    rel(price[[i, s]], p);
                    price[[i, s]] = p;
                    let x = norm * new_expenditure[[i, s]];
                    rel(expenditure[[i, s]], x);
                    expenditure[[i, s]] = x;
                }
            }
            if !change.is_finite() {
                return Err(CalibrationError::LevelSolve(format!("non-finite state at iteration {iter}")));
            }
            if change < tol {
                // flows and income were computed from the accepted state
                return Ok(LevelEquilibrium {
                    wage,
                    labor,
                    price,
                    expenditure,
                    flows,
                    income,
                    iterations: iter,
                });
            }
        }
        Err(CalibrationError::LevelSolve(format!("no convergence in {max_iter} iterations")))
    }
}

/// A synthetic calibration together with the level model behind it.
#[derive(Clone, Debug)]
pub struct SyntheticEconomy {
    pub calibration: Calibration,
    pub levels: LevelEconomy,
    pub baseline: LevelEquilibrium,
}

pub const LEVEL_TOL: f64 = 1e-14;
/// Smallest sectoral employment share accepted in a generated baseline.
pub const MIN_LABOR_SHARE: f64 = 1e-6;
const LEVEL_MAX_ITER: usize = 200_000;

impl SyntheticEconomy {
    pub fn generate(seed: u64, n: usize, j: usize, opts: &SyntheticOptions) -> Result<Self, CalibrationError> {
        let levels = LevelEconomy::random(seed, n, j, opts)?;
        // tariffs come from a separate stream so adding options does not
        // shift the structural draws
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut tariff = Array3::zeros((n, n, j));
        for s in 0..j {
            if !levels.tradable[s] {
                continue;
            }
            for o in 0..n {
                for d in 0..n {
                    if o == d || (opts.symmetric && o > d) {
                        continue;
                    }
                    let t = opts.max_baseline_tariff * rng.random::<f64>();
                    tariff[[o, d, s]] = t;
                    if opts.symmetric {
                        tariff[[d, o, s]] = t;
                    }
                }
            }
        }
        let wedge = Array3::zeros((n, n, j));
        let baseline = levels.solve(&tariff, &wedge, LEVEL_TOL, LEVEL_MAX_ITER)?;
        for ((i, s), &l) in baseline.labor.indexed_iter() {
            let share = l / levels.labor[i];
            if !(share > MIN_LABOR_SHARE) {
                return Err(CalibrationError::LevelSolve(format!(
                    "baseline employment share of country {i} in sector {s} collapsed to {share:.3e}; \
                     scale effects too strong for these trade elasticities (lower psi_range)"
                )));
            }
        }
        let data = CalibrationData {
            countries: (1..=n).map(|i| format!("C{i}")).collect(),
            sectors: (1..=j).map(|s| format!("S{s}")).collect(),
            tradable: levels.tradable.clone(),
            alpha: levels.alpha.clone(),
            beta: levels.beta.clone(),
            gamma: levels.gamma.clone(),
            trade_flow: baseline.flows.clone(),
            theta: levels.theta.clone(),
            psi: levels.psi.clone(),
            baseline_tariff: tariff,
            baseline_export_wedge: wedge,
        };
        let calibration = Calibration::new(data)?;
        Ok(Self {
            calibration,
            levels,
            baseline,
        })
    }

    /// Solves the level model under `wedges`.
    pub fn solve_levels(&self, wedges: &super::PolicyWedges) -> Result<LevelEquilibrium, CalibrationError> {
        self.levels
            .solve(&wedges.tariff, &wedges.export_wedge, LEVEL_TOL, LEVEL_MAX_ITER)
    }
}

/// Deterministic synthetic calibration for `(seed, N, J, options)`.
pub fn generate_synthetic(
    seed: u64,
    n: usize,
    j: usize,
    opts: &SyntheticOptions,
) -> Result<Calibration, CalibrationError> {
    SyntheticEconomy::generate(seed, n, j, opts).map(|s| s.calibration)
}
