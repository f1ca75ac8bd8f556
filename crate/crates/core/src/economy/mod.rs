//! Baseline world economy: calibration data, validation, derived baseline
//! accounts and policy wedges.

mod elasticities;
mod io;
mod synthetic;

use ndarray::{Array2, Array3};
use thiserror::Error;

pub use elasticities::{
    manufacturing_sectors, table_a1, table_a1_elasticities, SectorElasticity, NONTRADABLE_PSI,
    NONTRADABLE_THETA,
};
pub use io::{
    calibration_from_json, calibration_to_json, load_calibration, load_wedges, wedges_from_json,
    wedges_to_json, write_calibration, write_wedges, CalibrationFile, WedgeFile,
};
pub use synthetic::{
    generate_synthetic, LevelEconomy, LevelEquilibrium, SyntheticEconomy, SyntheticOptions,
};

/// Relative residual accepted for the baseline expenditure identity.
pub const ACCOUNTING_TOL: f64 = 1e-6;
/// Tolerance on share row/column sums.
pub const SHARE_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("{identity} violated at {location}: {detail}")]
    Invariant {
        identity: &'static str,
        location: String,
        detail: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("infeasible generator options: {0}")]
    Options(String),
    #[error("baseline level solve failed: {0}")]
    LevelSolve(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CalibrationError {
    fn invariant(identity: &'static str, location: String, detail: String) -> Self {
        CalibrationError::Invariant {
            identity,
            location,
            detail,
        }
    }
}

/// Raw calibration inputs. Arrays are indexed as documented on each field.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationData {
    pub countries: Vec<String>,
    pub sectors: Vec<String>,
    pub tradable: Vec<bool>,
    /// `[i][j]` final-consumption share of sector `j` in country `i`.
    pub alpha: Array2<f64>,
    /// `[i][j]` value-added share.
    pub beta: Array2<f64>,
    /// `[i][s][j]` share of input `s` in sector `j`'s intermediate bundle.
    pub gamma: Array3<f64>,
    /// `[origin][destination][sector]` expenditure, valued at destination
    /// prices inclusive of tariffs and producer wedges.
    pub trade_flow: Array3<f64>,
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    /// `[origin][destination][sector]`
    pub baseline_tariff: Array3<f64>,
    /// `[origin][destination][sector]`
    pub baseline_export_wedge: Array3<f64>,
}

/// Quantities implied by the baseline flows.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineAccounts {
    /// `[n][j]` total expenditure of destination `n` on sector `j`.
    pub expenditure: Array2<f64>,
    /// `[i][n][j]` expenditure shares. Destinations with zero sectoral
    /// expenditure are assigned a home share of one.
    pub shares: Array3<f64>,
    /// `[i][n][j]` producer revenue net of both wedges.
    pub revenue: Array3<f64>,
    /// `[i][j]` sectoral wage bill `w_i L_i^j`.
    pub wage_bill: Array2<f64>,
    pub wage_bill_total: Vec<f64>,
    pub income: Vec<f64>,
    pub world_wage_bill: f64,
}

/// Validated, immutable baseline economy.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    data: CalibrationData,
    accounts: BaselineAccounts,
}

fn accounts_of(d: &CalibrationData) -> BaselineAccounts {
    let (n, j) = d.alpha.dim();
    let expenditure = d.trade_flow.sum_axis(ndarray::Axis(0));
    let mut shares = Array3::zeros((n, n, j));
    let mut revenue = Array3::zeros((n, n, j));
    for i in 0..n {
        for dst in 0..n {
            for s in 0..j {
                let x = d.trade_flow[[i, dst, s]];
                let total = expenditure[[dst, s]];
                shares[[i, dst, s]] = if total > 0.0 {
                    x / total
                } else if i == dst {
                    1.0
                } else {
                    0.0
                };
                revenue[[i, dst, s]] = x
                    / ((1.0 + d.baseline_tariff[[i, dst, s]])
                        * (1.0 + d.baseline_export_wedge[[i, dst, s]]));
            }
        }
    }
    let mut wage_bill = Array2::zeros((n, j));
    for i in 0..n {
        for s in 0..j {
            let r: f64 = (0..n).map(|dst| revenue[[i, dst, s]]).sum();
            wage_bill[[i, s]] = d.beta[[i, s]] * r;
        }
    }
    let wage_bill_total: Vec<f64> = (0..n).map(|i| wage_bill.row(i).sum()).collect();
    let income = (0..n)
        .map(|i| {
            let mut y = wage_bill_total[i];
            for s in 0..j {
                for k in 0..n {
                    let e = d.baseline_export_wedge[[i, k, s]];
                    y += e / (1.0 + e) * d.trade_flow[[i, k, s]];
                    let t = d.baseline_tariff[[k, i, s]];
                    y += t / ((1.0 + t) * (1.0 + d.baseline_export_wedge[[k, i, s]]))
                        * d.trade_flow[[k, i, s]];
                }
            }
            y
        })
        .collect();
    BaselineAccounts {
        expenditure,
        shares,
        revenue,
        wage_bill,
        world_wage_bill: wage_bill_total.iter().sum(),
        wage_bill_total,
        income,
    }
}

/// Maximum residual of each calibration identity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InvariantResiduals {
    pub alpha_row_sum: f64,
    pub gamma_column_sum: f64,
    /// Largest relative residual of the baseline expenditure identity.
    pub expenditure_accounting: f64,
    /// Largest relative residual of labour clearing at unit hats.
    pub labor_clearing: f64,
}

impl Calibration {
    pub fn new(data: CalibrationData) -> Result<Self, CalibrationError> {
        check_shapes(&data)?;
        check_pointwise(&data)?;
        let accounts = accounts_of(&data);
        let cal = Self { data, accounts };
        cal.check_accounting(ACCOUNTING_TOL)?;
        Ok(cal)
    }

    pub fn data(&self) -> &CalibrationData {
        &self.data
    }

    pub fn accounts(&self) -> &BaselineAccounts {
        &self.accounts
    }

    pub fn countries(&self) -> usize {
        self.data.alpha.nrows()
    }

    pub fn sectors(&self) -> usize {
        self.data.alpha.ncols()
    }

    /// Length of the equilibrium state vector `(ŵ | L̂ | P̂ | X̂)`.
    pub fn state_len(&self) -> usize {
        let (n, j) = (self.countries(), self.sectors());
        n + 3 * n * j
    }

    pub fn tradable_sectors(&self) -> Vec<usize> {
        (0..self.sectors()).filter(|&s| self.data.tradable[s]).collect()
    }

    /// Baseline income weights `Y_n / Σ_k Y_k`.
    pub fn income_weights(&self) -> Vec<f64> {
        let total: f64 = self.accounts.income.iter().sum();
        self.accounts.income.iter().map(|y| y / total).collect()
    }

    pub fn residuals(&self) -> InvariantResiduals {
        let d = &self.data;
        let (n, j) = (self.countries(), self.sectors());
        let mut out = InvariantResiduals::default();
        for i in 0..n {
            out.alpha_row_sum = out.alpha_row_sum.max((d.alpha.row(i).sum() - 1.0).abs());
            for s in 0..j {
                let col: f64 = (0..j).map(|k| d.gamma[[i, k, s]]).sum();
                out.gamma_column_sum = out.gamma_column_sum.max((col - 1.0).abs());
            }
        }
        out.expenditure_accounting = self.accounting_residuals().into_iter().fold(0.0, f64::max);
        for i in 0..n {
            let lhs: f64 = (0..j).map(|s| self.accounts.wage_bill[[i, s]]).sum();
            let rhs = self.accounts.wage_bill_total[i];
            let r = if rhs > 0.0 { (lhs - rhs).abs() / rhs } else { 0.0 };
            out.labor_clearing = out.labor_clearing.max(r);
        }
        out
    }

    /// Relative residual of the sectoral expenditure identity per `(i, j)`,
    /// in row-major order.
    fn accounting_residuals(&self) -> Vec<f64> {
        let d = &self.data;
        let a = &self.accounts;
        let (n, j) = (self.countries(), self.sectors());
        let mut out = Vec::with_capacity(n * j);
        for i in 0..n {
            let revenue: Vec<f64> = (0..j)
                .map(|s| (0..n).map(|dst| a.revenue[[i, dst, s]]).sum())
                .collect();
            for g in 0..j {
                let intermediate: f64 = (0..j)
                    .map(|s| (1.0 - d.beta[[i, s]]) * d.gamma[[i, g, s]] * revenue[s])
                    .sum();
                let rhs = d.alpha[[i, g]] * a.income[i] + intermediate;
                let lhs = a.expenditure[[i, g]];
                let scale = lhs.abs().max(rhs.abs());
                out.push(if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 });
            }
        }
        out
    }

    fn check_accounting(&self, tol: f64) -> Result<(), CalibrationError> {
        let j = self.sectors();
        for (k, r) in self.accounting_residuals().into_iter().enumerate() {
            if !(r < tol) {
                return Err(CalibrationError::invariant(
                    "expenditure accounting",
                    format!("country {}, sector {}", k / j, k % j),
                    format!("relative residual {r:.3e} exceeds {tol:.1e}"),
                ));
            }
        }
        for (i, y) in self.accounts.income.iter().enumerate() {
            if !(*y > 0.0) || !(self.accounts.wage_bill_total[i] > 0.0) {
                return Err(CalibrationError::invariant(
                    "positive income",
                    format!("country {i}"),
                    format!("income {y}, wage bill {}", self.accounts.wage_bill_total[i]),
                ));
            }
        }
        Ok(())
    }
}

fn check_shapes(d: &CalibrationData) -> Result<(), CalibrationError> {
    let n = d.countries.len();
    let j = d.sectors.len();
    let bad = |what: &str, got: String| {
        Err(CalibrationError::Schema(format!("{what} has shape {got}, expected N={n}, J={j}")))
    };
    if n < 1 || j < 1 {
        return Err(CalibrationError::Schema("need at least one country and one sector".into()));
    }
    for (name, arr) in [("alpha", &d.alpha), ("beta", &d.beta)] {
        if arr.dim() != (n, j) {
            return bad(name, format!("{:?}", arr.dim()));
        }
    }
    if d.gamma.dim() != (n, j, j) {
        return bad("gamma", format!("{:?}", d.gamma.dim()));
    }
    for (name, arr) in [
        ("trade_flow", &d.trade_flow),
        ("baseline_tariff", &d.baseline_tariff),
        ("baseline_export_wedge", &d.baseline_export_wedge),
    ] {
        if arr.dim() != (n, n, j) {
            return bad(name, format!("{:?}", arr.dim()));
        }
    }
    for (name, len) in [
        ("theta", d.theta.len()),
        ("psi", d.psi.len()),
        ("tradable_mask", d.tradable.len()),
    ] {
        if len != j {
            return bad(name, format!("[{len}]"));
        }
    }
    Ok(())
}

fn check_pointwise(d: &CalibrationData) -> Result<(), CalibrationError> {
    let (n, j) = d.alpha.dim();
    let fail = CalibrationError::invariant;
    for i in 0..n {
        let sum = d.alpha.row(i).sum();
        if !((sum - 1.0).abs() <= SHARE_SUM_TOL) {
            return Err(fail(
                "alpha row sum",
                format!("country {i}"),
                format!("sum is {sum}, off by {:.3e}", (sum - 1.0).abs()),
            ));
        }
        for s in 0..j {
            if !(d.alpha[[i, s]] >= 0.0) {
                return Err(fail("alpha nonnegative", format!("({i}, {s})"), format!("{}", d.alpha[[i, s]])));
            }
            let b = d.beta[[i, s]];
            if !(b > 0.0 && b <= 1.0) {
                return Err(fail("beta in (0, 1]", format!("({i}, {s})"), format!("{b}")));
            }
            let col: f64 = (0..j).map(|k| d.gamma[[i, k, s]]).sum();
            if !((col - 1.0).abs() <= SHARE_SUM_TOL) {
                return Err(fail(
                    "gamma column sum",
                    format!("country {i}, sector {s}"),
                    format!("sum is {col}, off by {:.3e}", (col - 1.0).abs()),
                ));
            }
            for k in 0..j {
                if !(d.gamma[[i, k, s]] >= 0.0) {
                    return Err(fail("gamma nonnegative", format!("({i}, {k}, {s})"), format!("{}", d.gamma[[i, k, s]])));
                }
            }
        }
    }
    for o in 0..n {
        for dst in 0..n {
            for s in 0..j {
                let loc = || format!("({o}, {dst}, {s})");
                let x = d.trade_flow[[o, dst, s]];
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(fail("trade flow nonnegative", loc(), format!("{x}")));
                }
                let t = d.baseline_tariff[[o, dst, s]];
                if o == dst && t != 0.0 {
                    return Err(fail("own tariff zero", loc(), format!("t_ii = {t}")));
                }
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(fail("baseline tariff nonnegative", loc(), format!("{t}")));
                }
                let e = d.baseline_export_wedge[[o, dst, s]];
                if !(e > -1.0 && e.is_finite()) {
                    return Err(fail("export wedge above -1", loc(), format!("{e}")));
                }
                if !d.tradable[s] && o != dst && x != 0.0 {
                    return Err(fail("non-tradable cross-border flow", loc(), format!("{x}")));
                }
            }
        }
    }
    for s in 0..j {
        if !(d.theta[s] > 0.0 && d.theta[s].is_finite()) {
            return Err(fail("theta positive", format!("sector {s}"), format!("{}", d.theta[s])));
        }
        if !(d.psi[s] >= 0.0 && d.psi[s].is_finite()) {
            return Err(fail("psi nonnegative", format!("sector {s}"), format!("{}", d.psi[s])));
        }
        if !d.tradable[s] && (d.theta[s] != NONTRADABLE_THETA || d.psi[s] != NONTRADABLE_PSI) {
            return Err(fail(
                "non-tradable elasticities",
                format!("sector {s}"),
                format!("theta {} psi {}, expected {NONTRADABLE_THETA} and {NONTRADABLE_PSI}", d.theta[s], d.psi[s]),
            ));
        }
    }
    Ok(())
}

/// Counterfactual policy wedges, indexed `[origin][destination][sector]`.
///
/// A production subsidy `s` of country `i` in sector `j` is stored as the
/// export wedge `-s` on every route leaving `i` in `j`, home included, so
/// that `1 + e = 1 - s`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyWedges {
    pub tariff: Array3<f64>,
    pub export_wedge: Array3<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WedgeError {
    #[error("wedge arrays have shape {found:?}, expected {expected:?}")]
    Shape {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("own tariff must be zero at ({0}, {0}, {1})")]
    OwnTariff(usize, usize),
    #[error("tariff must be nonnegative and finite at ({0}, {1}, {2})")]
    NegativeTariff(usize, usize, usize),
    #[error("export wedge must exceed -1 at ({0}, {1}, {2})")]
    ExportWedge(usize, usize, usize),
}

impl PolicyWedges {
    pub fn baseline(cal: &Calibration) -> Self {
        Self {
            tariff: cal.data.baseline_tariff.clone(),
            export_wedge: cal.data.baseline_export_wedge.clone(),
        }
    }

    pub fn validate(&self, cal: &Calibration) -> Result<(), WedgeError> {
        let (n, j) = (cal.countries(), cal.sectors());
        for arr in [&self.tariff, &self.export_wedge] {
            if arr.dim() != (n, n, j) {
                return Err(WedgeError::Shape {
                    expected: (n, n, j),
                    found: arr.dim(),
                });
            }
        }
        for ((o, d, s), &t) in self.tariff.indexed_iter() {
            if o == d && t != 0.0 {
                return Err(WedgeError::OwnTariff(o, s));
            }
            if !(t >= 0.0 && t.is_finite()) {
                return Err(WedgeError::NegativeTariff(o, d, s));
            }
        }
        for ((o, d, s), &e) in self.export_wedge.indexed_iter() {
            if !(e > -1.0 && e.is_finite()) {
                return Err(WedgeError::ExportWedge(o, d, s));
            }
        }
        Ok(())
    }

    /// Production subsidy of `country` in `sector`, read from the home route.
    pub fn subsidy(&self, country: usize, sector: usize) -> f64 {
        0.0 - self.export_wedge[[country, country, sector]]
    }

    pub fn set_subsidy(&mut self, country: usize, sector: usize, subsidy: f64) {
        let n = self.export_wedge.dim().1;
        for dst in 0..n {
            self.export_wedge[[country, dst, sector]] = -subsidy;
        }
    }

    /// Applies the same ad valorem tariff to every foreign route of every
    /// tradable sector.
    pub fn uniform_tariff(cal: &Calibration, rate: f64) -> Self {
        let mut w = Self::baseline(cal);
        for ((o, d, s), t) in w.tariff.indexed_iter_mut() {
            if o != d && cal.data.tradable[s] {
                *t = rate;
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Calibration {
        generate_synthetic(3, 2, 2, &SyntheticOptions::default()).unwrap()
    }

    #[test]
    fn alpha_row_sum_rejected() {
        let mut d = small().data().clone();
        d.alpha[[0, 0]] -= 0.1;
        let err = Calibration::new(d).unwrap_err();
        assert!(err.to_string().contains("alpha row sum"), "{err}");
    }

    #[test]
    fn own_tariff_rejected() {
        let mut d = small().data().clone();
        d.baseline_tariff[[1, 1, 0]] = 0.1;
        let err = Calibration::new(d).unwrap_err();
        assert!(err.to_string().contains("own tariff"), "{err}");
    }

    #[test]
    fn accounting_violation_reports_size() {
        let mut d = small().data().clone();
        d.trade_flow[[0, 1, 0]] *= 1.5;
        let err = Calibration::new(d).unwrap_err();
        assert!(err.to_string().contains("expenditure accounting"), "{err}");
        assert!(err.to_string().contains("relative residual"), "{err}");
    }

    #[test]
    fn nontradable_elasticities_enforced() {
        let mut d = small().data().clone();
        d.tradable[1] = false;
        let err = Calibration::new(d).unwrap_err();
        assert!(matches!(err, CalibrationError::Invariant { .. }));
    }

    #[test]
    fn income_weights_follow_income() {
        let cal = small();
        let w = cal.income_weights();
        let y = &cal.accounts().income;
        assert!((w[0] / w[1] - y[0] / y[1]).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subsidy_encoding_covers_all_destinations() {
        let cal = small();
        let mut w = PolicyWedges::baseline(&cal);
        w.set_subsidy(0, 1, 0.2);
        assert_eq!(w.subsidy(0, 1), 0.2);
        assert_eq!(w.export_wedge[[0, 1, 1]], -0.2);
        assert!(w.validate(&cal).is_ok());
        w.tariff[[0, 0, 0]] = 0.3;
        assert_eq!(w.validate(&cal), Err(WedgeError::OwnTariff(0, 0)));
    }
}
