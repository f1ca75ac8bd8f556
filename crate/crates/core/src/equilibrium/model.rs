//! The exact-hat equilibrium map `G(x, wedges)` written against
//! [`TensorOps`], so the same code evaluates eagerly or records a tape.
//!
//! State layout: `ŵ [N] | L̂ [N,J] | P̂ [N,J] | X̂ [N,J]`, row-major within
//! blocks. Route tensors are `[origin, destination, sector]`.

use crate::autodiff::{AdError, SparseMap, Tensor, TensorOps};
use crate::economy::Calibration;

/// Employment floor inside the scale-economy term.
pub const LABOR_FLOOR: f64 = 1e-8;

/// Calibration-derived constant tensors used by the map.
#[derive(Clone, Debug)]
pub struct ModelConstants {
    pub n: usize,
    pub j: usize,
    gamma: Tensor,
    beta: Tensor,
    one_minus_beta: Tensor,
    psi: Tensor,
    neg_theta: Tensor,
    inv_neg_theta: Tensor,
    shares: Tensor,
    neg_log_base_wedges: Tensor,
    ones_route: Tensor,
    expenditure: Tensor,
    expenditure_guard: Tensor,
    expenditure_safe: Tensor,
    wage_bill: Tensor,
    wage_bill_guard: Tensor,
    inv_wage_bill_total: Tensor,
    wage_bill_total: Tensor,
    inv_income: Tensor,
    alpha: Tensor,
    intermediate: Tensor,
    world_wage_bill: f64,
}

fn t(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).expect("constant shape")
}

impl ModelConstants {
    pub fn new(cal: &Calibration) -> Self {
        let d = cal.data();
        let a = cal.accounts();
        let (n, j) = (cal.countries(), cal.sectors());
        let nj = [n, j];
        let route = [n, n, j];
        let per_sector = |f: &dyn Fn(usize) -> f64, len: usize| -> Vec<f64> {
            (0..len).map(|k| f(k % j)).collect()
        };
        let mut neg_log_base = Vec::with_capacity(n * n * j);
        for ((o, dst, s), x) in d.baseline_tariff.indexed_iter() {
            neg_log_base.push(-((1.0 + x).ln() + (1.0 + d.baseline_export_wedge[[o, dst, s]]).ln()));
        }
        let expenditure: Vec<f64> = a.expenditure.iter().copied().collect();
        let exp_guard: Vec<f64> = expenditure.iter().map(|&x| if x > 0.0 { 0.0 } else { 1.0 }).collect();
        let wage_bill: Vec<f64> = a.wage_bill.iter().copied().collect();
        let wb_guard: Vec<f64> = wage_bill.iter().map(|&x| if x > 0.0 { 0.0 } else { 1.0 }).collect();
        let mut intermediate = Vec::with_capacity(n * j * j);
        for i in 0..n {
            for g in 0..j {
                for s in 0..j {
                    intermediate.push((1.0 - d.beta[[i, s]]) * d.gamma[[i, g, s]]);
                }
            }
        }
        Self {
            n,
            j,
            gamma: t(&[n, j, j], d.gamma.iter().copied().collect()),
            beta: t(&nj, d.beta.iter().copied().collect()),
            one_minus_beta: t(&nj, d.beta.iter().map(|b| 1.0 - b).collect()),
            psi: t(&nj, per_sector(&|s| d.psi[s], n * j)),
            neg_theta: t(&route, per_sector(&|s| -d.theta[s], n * n * j)),
            inv_neg_theta: t(&nj, per_sector(&|s| -1.0 / d.theta[s], n * j)),
            shares: t(&route, a.shares.iter().copied().collect()),
            neg_log_base_wedges: t(&route, neg_log_base),
            ones_route: Tensor::filled(&route, 1.0),
            expenditure_safe: t(&nj, expenditure.iter().zip(&exp_guard).map(|(x, g)| x + g).collect()),
            expenditure: t(&nj, expenditure),
            expenditure_guard: t(&nj, exp_guard),
            wage_bill: t(&nj, wage_bill),
            wage_bill_guard: t(&nj, wb_guard),
            inv_wage_bill_total: Tensor::vector(a.wage_bill_total.iter().map(|x| 1.0 / x).collect()),
            wage_bill_total: Tensor::vector(a.wage_bill_total.clone()),
            inv_income: Tensor::vector(a.income.iter().map(|y| 1.0 / y).collect()),
            alpha: t(&nj, d.alpha.iter().copied().collect()),
            intermediate: t(&[n, j, j], intermediate),
            world_wage_bill: a.world_wage_bill,
        }
    }

    pub fn state_len(&self) -> usize {
        self.n + 3 * self.n * self.j
    }
}

/// Handles produced by one evaluation of the map.
#[derive(Clone, Copy, Debug)]
pub struct MapNodes<H> {
    /// `G(x)`, normalised to the numeraire.
    pub next: H,
    /// `[N]` welfare change `Ŷ / P̂`.
    pub welfare: H,
    /// `[N]`
    pub income: H,
    /// `[N]` aggregate consumer price index change.
    pub price_index: H,
    /// `[N,N,J]` counterfactual expenditure shares `π'`.
    pub shares: H,
}

/// Records one application of the map. `tariff` and `export_wedge` are
/// `[N,N,J]` counterfactual wedges.
pub fn record_map<B: TensorOps>(
    b: &mut B,
    m: &ModelConstants,
    state: B::Handle,
    tariff: B::Handle,
    export_wedge: B::Handle,
) -> Result<MapNodes<B::Handle>, AdError> {
    let (n, j) = (m.n, m.j);
    let k = m.state_len();
    let nj = [n, j];
    let route = [n, n, j];

    let wage = b.linear(state, SparseMap::slice(k, 0, vec![n]))?;
    let labor = b.linear(state, SparseMap::slice(k, n, nj.to_vec()))?;
    let price = b.linear(state, SparseMap::slice(k, n + n * j, nj.to_vec()))?;
    let spend = b.linear(state, SparseMap::slice(k, n + 2 * n * j, nj.to_vec()))?;

    // unit cost change
    let log_wage = b.ln(wage)?;
    let log_wage = b.broadcast(log_wage, &nj, &[0])?;
    let wage_term = b.scale(log_wage, m.beta.clone())?;
    let log_price = b.ln(price)?;
    let log_price = b.broadcast(log_price, &[n, j, j], &[0, 1])?;
    let weighted = b.scale(log_price, m.gamma.clone())?;
    let inputs = b.sum_axis(weighted, 1)?;
    let input_term = b.scale(inputs, m.one_minus_beta.clone())?;
    let labor_floor = b.clamp_min(labor, LABOR_FLOOR)?;
    let log_labor = b.ln(labor_floor)?;
    let scale_term = b.scale(log_labor, m.psi.clone())?;
    let log_cost = b.add(wage_term, input_term)?;
    let log_cost = b.sub(log_cost, scale_term)?;

    // route multipliers and trade shares
    let log_cost = b.broadcast(log_cost, &route, &[0, 2])?;
    let gross_tariff = b.shift(tariff, m.ones_route.clone())?;
    let gross_wedge = b.shift(export_wedge, m.ones_route.clone())?;
    let log_gross_tariff = b.ln(gross_tariff)?;
    let log_gross_wedge = b.ln(gross_wedge)?;
    let log_route = b.add(log_cost, log_gross_tariff)?;
    let log_route = b.add(log_route, log_gross_wedge)?;
    let log_route = b.shift(log_route, m.neg_log_base_wedges.clone())?;
    let exponent = b.scale(log_route, m.neg_theta.clone())?;
    let kernel = b.exp(exponent)?;
    let weighted_kernel = b.scale(kernel, m.shares.clone())?;
    let denom = b.sum_axis(weighted_kernel, 0)?;
    let new_price = b.powf(denom, m.inv_neg_theta.clone())?;
    let denom = b.broadcast(denom, &route, &[1, 2])?;
    let shares = b.div(weighted_kernel, denom)?;

    // flows and producer revenue
    let spend_level = b.scale(spend, m.expenditure.clone())?;
    let spend_level = b.broadcast(spend_level, &route, &[1, 2])?;
    let flow = b.mul(shares, spend_level)?;
    let gross = b.mul(gross_tariff, gross_wedge)?;
    let revenue = b.div(flow, gross)?;
    let revenue_by_origin = b.sum_axis(revenue, 1)?;

    // wages and sectoral employment
    let wage_income = b.scale(revenue_by_origin, m.beta.clone())?;
    let wage_total = b.sum_axis(wage_income, 1)?;
    let new_wage = b.scale(wage_total, m.inv_wage_bill_total.clone())?;
    let new_wage_b = b.broadcast(new_wage, &nj, &[0])?;
    let labor_den = b.scale(new_wage_b, m.wage_bill.clone())?;
    let labor_den = b.shift(labor_den, m.wage_bill_guard.clone())?;
    let labor_num = b.shift(wage_income, m.wage_bill_guard.clone())?;
    let new_labor = b.div(labor_num, labor_den)?;

    // income: wages plus export-wedge and tariff revenue
    let wedge_share = b.div(export_wedge, gross_wedge)?;
    let wedge_rev = b.mul(wedge_share, flow)?;
    let wedge_rev = b.sum_axis(wedge_rev, 2)?;
    let wedge_rev = b.sum_axis(wedge_rev, 1)?;
    let tariff_share = b.div(tariff, gross)?;
    let tariff_rev = b.mul(tariff_share, flow)?;
    let tariff_rev = b.sum_axis(tariff_rev, 2)?;
    let tariff_rev = b.sum_axis(tariff_rev, 0)?;
    let wages = b.scale(new_wage, m.wage_bill_total.clone())?;
    let income = b.add(wages, wedge_rev)?;
    let income = b.add(income, tariff_rev)?;

    // sectoral expenditure
    let income_b = b.broadcast(income, &nj, &[0])?;
    let final_demand = b.scale(income_b, m.alpha.clone())?;
    let revenue_b = b.broadcast(revenue_by_origin, &[n, j, j], &[0, 2])?;
    let input_demand = b.scale(revenue_b, m.intermediate.clone())?;
    let input_demand = b.sum_axis(input_demand, 2)?;
    let total_spend = b.add(final_demand, input_demand)?;
    let total_spend = b.shift(total_spend, m.expenditure_guard.clone())?;
    let world = b.constant(m.expenditure_safe.clone());
    let new_spend = b.div(total_spend, world)?;

    // numeraire: world wage bill unchanged
    let world_wages = b.sum_axis(wages, 0)?;
    let target = b.constant(Tensor::scalar(m.world_wage_bill));
    let kappa = b.div(target, world_wages)?;
    let kappa_n = b.broadcast(kappa, &[n], &[])?;
    let kappa_nj = b.broadcast(kappa, &nj, &[])?;
    let wage_out = b.mul(new_wage, kappa_n)?;
    let price_out = b.mul(new_price, kappa_nj)?;
    let spend_out = b.mul(new_spend, kappa_nj)?;
    let next = b.concat(&[wage_out, new_labor, price_out, spend_out])?;

    // welfare
    let income_out = b.mul(income, kappa_n)?;
    let income_hat = b.scale(income_out, m.inv_income.clone())?;
    let log_price_out = b.ln(price_out)?;
    let log_agg = b.scale(log_price_out, m.alpha.clone())?;
    let log_agg = b.sum_axis(log_agg, 1)?;
    let price_index = b.exp(log_agg)?;
    let welfare = b.div(income_hat, price_index)?;

    Ok(MapNodes {
        next,
        welfare,
        income: income_hat,
        price_index,
        shares,
    })
}
