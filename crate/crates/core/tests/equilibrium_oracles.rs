mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{max_rel, random_state, random_wedges, transcribe};
use tradeopt::economy::{generate_synthetic, SyntheticEconomy, SyntheticOptions};
use tradeopt::equilibrium::{hat_map, solve_fixed_point, HatState};
use tradeopt::{PolicyWedges, SolverOptions};
#[test]
fn hat_map_matches_transcription() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for seed in 0..5 {
        let cal = generate_synthetic(100 + seed, 3, 3, &SyntheticOptions::default()).unwrap();
        let w = random_wedges(&cal, &mut rng);
        let x = random_state(3, 3, &mut rng);
        let got = hat_map(&cal, &w, &x).unwrap();
        let (want, _) = transcribe(&cal, &w, &x);
        let err = max_rel(&got.to_vector(), &want.to_vector());
        assert!(err < 1e-12, "seed {seed}: {err:e}");
    }
}

#[test]
fn welfare_matches_transcription_at_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cal = generate_synthetic(31, 3, 3, &SyntheticOptions::default()).unwrap();
    let w = random_wedges(&cal, &mut rng);
    let eq = solve_fixed_point(&cal, &w, &SolverOptions::precise(1e-13), None).unwrap();
    let (_, welfare) = transcribe(&cal, &w, &eq.state);
    assert!(max_rel(&eq.welfare, &welfare) < 1e-12);
}

#[test]
fn fixed_point_reproduces_level_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in [3, 4, 5] {
        let econ = SyntheticEconomy::generate(seed, 3, 3, &SyntheticOptions::default()).unwrap();
        let cal = &econ.calibration;
        let mut w = PolicyWedges::baseline(cal);
        for ((o, d, _), t) in w.tariff.indexed_iter_mut() {
            if o != d {
                *t = 0.05 + 0.25 * rng.random::<f64>();
            }
        }
        w.set_subsidy(1, 2, 0.1);
        let eq = solve_fixed_point(cal, &w, &SolverOptions::precise(1e-12), None).unwrap();
        let lv = econ.solve_levels(&w).unwrap();
        let base = &econ.baseline;
        let (n, j) = (3, 3);
        let mut want = HatState::ones(n, j);
        for i in 0..n {
            want.wage[i] = lv.wage[i] / base.wage[i];
            for s in 0..j {
                want.labor[[i, s]] = lv.labor[[i, s]] / base.labor[[i, s]];
                want.price[[i, s]] = lv.price[[i, s]] / base.price[[i, s]];
                want.expenditure[[i, s]] = lv.expenditure[[i, s]] / base.expenditure[[i, s]];
            }
        }
        let err = max_rel(&eq.state.to_vector(), &want.to_vector());
        assert!(err < 1e-6, "seed {seed}: {err:e}");
        for i in 0..n {
            let p: f64 = (0..j)
                .map(|s| want.price[[i, s]].powf(cal.data().alpha[[i, s]]))
                .product();
            let welfare = lv.income[i] / base.income[i] / p;
            assert!((eq.welfare[i] - welfare).abs() < 1e-6 * welfare);
        }
    }
}

#[test]
fn only_composite_multipliers_and_revenue_factors_matter() {
    // Two encodings of the same route: swapping the tariff and export
    // factors keeps (1+t)(1+e) and every revenue divisor unchanged on
    // routes where both factors are equal, so outputs must agree exactly.
    let cal = generate_synthetic(12, 3, 2, &SyntheticOptions::default()).unwrap();
    let mut a = PolicyWedges::uniform_tariff(&cal, 0.2);
    let mut b = a.clone();
    a.export_wedge[[0, 1, 0]] = 0.2;
    b.export_wedge[[0, 1, 0]] = 0.2;
    b.tariff[[0, 1, 0]] = 0.2;
    let opts = SolverOptions::default();
    let ea = solve_fixed_point(&cal, &a, &opts, None).unwrap();
    let eb = solve_fixed_point(&cal, &b, &opts, None).unwrap();
    assert_eq!(ea.state, eb.state);
    assert_eq!(ea.welfare, eb.welfare);

    // Moving part of a tariff into the export wedge with the same
    // composite changes who collects the revenue, hence the solution.
    let mut c = PolicyWedges::uniform_tariff(&cal, 0.2);
    c.tariff[[0, 1, 0]] = 0.0;
    c.export_wedge[[0, 1, 0]] = 0.2;
    let ec = solve_fixed_point(&cal, &c, &opts, None).unwrap();
    let base = PolicyWedges::uniform_tariff(&cal, 0.2);
    let e0 = solve_fixed_point(&cal, &base, &opts, None).unwrap();
    assert!(max_rel(&ec.state.price.iter().copied().collect::<Vec<_>>(), &e0.state.price.iter().copied().collect::<Vec<_>>()) > 0.0);
    assert!(ec.welfare[0] != e0.welfare[0]);
}

#[test]
fn identity_on_many_calibrations() {
    for (seed, n, j) in [(1, 2, 1), (2, 2, 2), (3, 3, 3), (4, 4, 2)] {
        let cal = generate_synthetic(seed, n, j, &SyntheticOptions::default()).unwrap();
        let eq = solve_fixed_point(&cal, &PolicyWedges::baseline(&cal), &SolverOptions::default(), None).unwrap();
        assert!(eq.residual < 1e-12);
        assert!(eq.state.to_vector().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(eq.welfare_pct().iter().all(|w| w.abs() < 1e-10));
    }
}

#[test]
fn residual_decays_on_synthetic_economies() {
    let cal = generate_synthetic(8, 3, 3, &SyntheticOptions::default()).unwrap();
    let w = PolicyWedges::uniform_tariff(&cal, 0.3);
    let opts = SolverOptions {
        record_history: true,
        ..Default::default()
    };
    let eq = solve_fixed_point(&cal, &w, &opts, None).unwrap();
    let h = &eq.residual_history;
    assert!(h.len() > 3);
    // geometric decay: the tail is orders of magnitude below the start
    assert!(h[h.len() - 1] < 1e-6 * h[0]);
    // the sup-norm oscillates between blocks, so compare envelopes
    let peaks: Vec<f64> = h.chunks(10).map(|c| c.iter().copied().fold(0.0, f64::max)).collect();
    assert!(peaks.windows(2).all(|p| p[1] < p[0]), "{peaks:?}");
}
