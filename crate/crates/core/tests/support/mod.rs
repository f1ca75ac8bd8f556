//! Shared test oracles: an independent loop transcription of the exact-hat
//! system and random wedge/state draws.
#![allow(dead_code)]

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tradeopt::equilibrium::HatState;
use tradeopt::{Calibration, PolicyWedges};

/// Straight-line transcription of the exact-hat system, loop by loop,
/// including the world-wage-bill numeraire. Returns the next state and
/// the welfare change.
pub fn transcribe(cal: &Calibration, w: &PolicyWedges, x: &HatState) -> (HatState, Vec<f64>) {
    let d = cal.data();
    let (n, j) = (cal.countries(), cal.sectors());
    let flows = &d.trade_flow;
    let (t0, e0) = (&d.baseline_tariff, &d.baseline_export_wedge);
    let (t1, e1) = (&w.tariff, &w.export_wedge);

    // baseline accounts
    let mut xdest = Array2::<f64>::zeros((n, j));
    let mut rev0 = Array2::<f64>::zeros((n, j));
    for o in 0..n {
        for dd in 0..n {
            for s in 0..j {
                xdest[[dd, s]] += flows[[o, dd, s]];
                rev0[[o, s]] += flows[[o, dd, s]] / ((1.0 + t0[[o, dd, s]]) * (1.0 + e0[[o, dd, s]]));
            }
        }
    }
    let wl = Array2::from_shape_fn((n, j), |(i, s)| d.beta[[i, s]] * rev0[[i, s]]);
    let wl_tot: Vec<f64> = (0..n).map(|i| (0..j).map(|s| wl[[i, s]]).sum()).collect();
    let mut y0 = wl_tot.clone();
    for i in 0..n {
        for k in 0..n {
            for s in 0..j {
                y0[i] += e0[[i, k, s]] / (1.0 + e0[[i, k, s]]) * flows[[i, k, s]];
                y0[i] += t0[[k, i, s]] / ((1.0 + t0[[k, i, s]]) * (1.0 + e0[[k, i, s]])) * flows[[k, i, s]];
            }
        }
    }

    // (1) unit costs
    let mut c = Array2::<f64>::zeros((n, j));
    for i in 0..n {
        for s in 0..j {
            let b = d.beta[[i, s]];
            let mut v = x.wage[i].powf(b) * x.labor[[i, s]].max(1e-8).powf(-d.psi[s]);
            for k in 0..j {
                v *= x.price[[i, k]].powf(d.gamma[[i, k, s]] * (1.0 - b));
            }
            c[[i, s]] = v;
        }
    }
    // (2)-(3) shares and sectoral prices
    let mut share = Array3::<f64>::zeros((n, n, j));
    let mut p_new = Array2::<f64>::zeros((n, j));
    for dd in 0..n {
        for s in 0..j {
            let mut total = 0.0;
            for o in 0..n {
                let pi = flows[[o, dd, s]] / xdest[[dd, s]];
                let m = c[[o, s]] * (1.0 + t1[[o, dd, s]]) / (1.0 + t0[[o, dd, s]]) * (1.0 + e1[[o, dd, s]])
                    / (1.0 + e0[[o, dd, s]]);
                share[[o, dd, s]] = pi * m.powf(-d.theta[s]);
                total += share[[o, dd, s]];
            }
            p_new[[dd, s]] = total.powf(-1.0 / d.theta[s]);
            for o in 0..n {
                share[[o, dd, s]] /= total;
            }
        }
    }
    // (4) counterfactual flows and revenue
    let mut flow1 = Array3::<f64>::zeros((n, n, j));
    let mut rev1 = Array2::<f64>::zeros((n, j));
    for o in 0..n {
        for dd in 0..n {
            for s in 0..j {
                flow1[[o, dd, s]] = share[[o, dd, s]] * x.expenditure[[dd, s]] * xdest[[dd, s]];
                rev1[[o, s]] += flow1[[o, dd, s]] / ((1.0 + t1[[o, dd, s]]) * (1.0 + e1[[o, dd, s]]));
            }
        }
    }
    // (5) wages and employment
    let mut w_new = Array1::<f64>::zeros(n);
    for i in 0..n {
        w_new[i] = (0..j).map(|s| d.beta[[i, s]] * rev1[[i, s]]).sum::<f64>() / wl_tot[i];
    }
    let l_new = Array2::from_shape_fn((n, j), |(i, s)| d.beta[[i, s]] * rev1[[i, s]] / (w_new[i] * wl[[i, s]]));
    // (6) income
    let mut y1: Vec<f64> = (0..n).map(|i| w_new[i] * wl_tot[i]).collect();
    for i in 0..n {
        for k in 0..n {
            for s in 0..j {
                y1[i] += e1[[i, k, s]] / (1.0 + e1[[i, k, s]]) * flow1[[i, k, s]];
                y1[i] += t1[[k, i, s]] / ((1.0 + t1[[k, i, s]]) * (1.0 + e1[[k, i, s]])) * flow1[[k, i, s]];
            }
        }
    }
    // (7) sectoral expenditure
    let mut x_new = Array2::<f64>::zeros((n, j));
    for i in 0..n {
        for s in 0..j {
            let mut v = d.alpha[[i, s]] * y1[i];
            for k in 0..j {
                v += (1.0 - d.beta[[i, k]]) * d.gamma[[i, s, k]] * rev1[[i, k]];
            }
            x_new[[i, s]] = v / xdest[[i, s]];
        }
    }
    // numeraire and (8) aggregate prices, welfare
    let world: f64 = wl_tot.iter().sum();
    let scaled: f64 = (0..n).map(|i| w_new[i] * wl_tot[i]).sum();
    let kappa = world / scaled;
    let mut welfare = vec![0.0; n];
    for i in 0..n {
        let mut p = 1.0;
        for s in 0..j {
            p *= (kappa * p_new[[i, s]]).powf(d.alpha[[i, s]]);
        }
        welfare[i] = kappa * y1[i] / y0[i] / p;
    }
    let next = HatState {
        wage: w_new.iter().map(|v| v * kappa).collect(),
        labor: l_new,
        price: p_new.mapv(|v| v * kappa),
        expenditure: x_new.mapv(|v| v * kappa),
    };
    (next, welfare)
}

pub fn random_wedges(cal: &Calibration, rng: &mut ChaCha8Rng) -> PolicyWedges {
    let mut w = PolicyWedges::baseline(cal);
    let n = cal.countries();
    for ((o, d, _), t) in w.tariff.indexed_iter_mut() {
        if o != d {
            *t = 0.5 * rng.random::<f64>();
        }
    }
    for c in 0..n {
        for s in 0..cal.sectors() {
            w.set_subsidy(c, s, 0.3 * rng.random::<f64>() - 0.1);
        }
    }
    for ((o, d, _), e) in w.export_wedge.indexed_iter_mut() {
        if o != d {
            *e += 0.1 * rng.random::<f64>();
        }
    }
    w
}

pub fn random_state(n: usize, j: usize, rng: &mut ChaCha8Rng) -> HatState {
    let mut s = HatState::ones(n, j);
    for v in s.wage.iter_mut() {
        *v = 0.8 + 0.4 * rng.random::<f64>();
    }
    for a in [&mut s.labor, &mut s.price, &mut s.expenditure] {
        a.mapv_inplace(|_| 0.8 + 0.4 * rng.random::<f64>());
    }
    s
}

pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-300))
        .fold(0.0, f64::max)
}
