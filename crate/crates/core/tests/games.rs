use tradeopt::economy::{generate_synthetic, SyntheticOptions};
use tradeopt::equilibrium::solve_fixed_point;
use tradeopt::game::experiment::subsidy_perturbation_experiment;
use tradeopt::game::oracle::{deviation_check, grid_argmax, welfare_grid};
use tradeopt::game::{
    best_response, cooperative_solve, nash_solve, BestResponseOptions, Instrument, InstrumentLimits, MaskOptions,
    NashOptions, ScenarioKind, ScenarioMask,
};
use tradeopt::optimizer::AdamConfig;
use tradeopt::sensitivity::Objective;
use tradeopt::{Calibration, PolicyWedges, SolverOptions};

fn br_opts(iters: usize) -> BestResponseOptions {
    BestResponseOptions {
        adam: AdamConfig {
            lr: 0.01,
            ..Default::default()
        },
        iters,
        solver: SolverOptions::precise(1e-12),
        ..Default::default()
    }
}

fn nash_opts() -> NashOptions {
    NashOptions {
        br: br_opts(200),
        ..Default::default()
    }
}

fn symmetric_no_scale(j: usize) -> Calibration {
    let opts = SyntheticOptions {
        symmetric: true,
        psi_range: (0.0, 0.0),
        ..Default::default()
    };
    generate_synthetic(1, 2, j, &opts).unwrap()
}

fn average_tariff(cal: &Calibration, w: &PolicyWedges) -> f64 {
    let (mut sum, mut count) = (0.0, 0.0);
    for ((o, d, s), t) in w.tariff.indexed_iter() {
        if o != d && cal.data().tradable[s] {
            sum += t;
            count += 1.0;
        }
    }
    sum / count
}

#[test]
fn best_response_matches_grid_argmax() {
    let cal = symmetric_no_scale(1);
    let w = PolicyWedges::baseline(&cal);
    let inst = vec![Instrument::Tariff {
        origin: 1,
        destination: 0,
        sector: 0,
    }];
    let br = best_response(&cal, &w, 0, &inst, &br_opts(3000)).unwrap();
    let grid = welfare_grid(
        &cal,
        &w,
        &Objective::Country(0),
        &inst,
        &[(0.0, 1.0)],
        1001,
        &InstrumentLimits::default(),
        &SolverOptions::precise(1e-12),
    )
    .unwrap();
    let best = grid_argmax(&grid).unwrap();
    let grid_max = *best.welfare.as_ref().unwrap();
    assert!(best.values[0] > 0.0 && best.values[0] < 1.0);
    assert!((br.values[0] - best.values[0]).abs() <= 1e-3, "{} vs {}", br.values[0], best.values[0]);
    assert!(br.objective >= grid_max - 1e-6, "{} vs {grid_max}", br.objective);
    // single-peaked: increasing up to the argmax, decreasing after
    let ws: Vec<f64> = grid.iter().map(|p| *p.welfare.as_ref().unwrap()).collect();
    let peak = ws.iter().position(|&x| x == grid_max).unwrap();
    assert!(ws[..=peak].windows(2).all(|p| p[1] >= p[0]));
    assert!(ws[peak..].windows(2).all(|p| p[1] <= p[0]));
}

#[test]
fn large_country_sets_positive_tariff() {
    let opts = SyntheticOptions {
        psi_range: (0.0, 0.0),
        ..Default::default()
    };
    let cal = generate_synthetic(11, 2, 1, &opts).unwrap();
    let y = &cal.accounts().income;
    let big = if y[0] > y[1] { 0 } else { 1 };
    let inst = vec![Instrument::Tariff {
        origin: 1 - big,
        destination: big,
        sector: 0,
    }];
    let br = best_response(&cal, &PolicyWedges::baseline(&cal), big, &inst, &br_opts(500)).unwrap();
    assert!(br.values[0] > 0.0);
    assert!(br.objective > br.objective_history[0]);
}

#[test]
fn symmetric_trade_war_is_a_prisoners_dilemma() {
    let cal = symmetric_no_scale(1);
    let mask = ScenarioMask::new(&cal, ScenarioKind::TradeWar, &MaskOptions::default()).unwrap();
    let r = nash_solve(&cal, &mask, &nash_opts(), None).unwrap();
    assert!(r.converged, "{:?}", r.round_norms);
    let (t0, t1) = (r.profile.tariff[[1, 0, 0]], r.profile.tariff[[0, 1, 0]]);
    assert!((t0 - t1).abs() < 1e-4, "{t0} vs {t1}");
    assert!(t0 > 0.0);
    assert!(r.welfare.iter().all(|&w| w < 1.0), "{:?}", r.welfare);
}

#[test]
fn cooperation_lowers_tariffs() {
    let cal = symmetric_no_scale(2);
    let nash_mask = ScenarioMask::new(&cal, ScenarioKind::TradeWar, &MaskOptions::default()).unwrap();
    let coop_mask = ScenarioMask::new(&cal, ScenarioKind::CooperativeTariff, &MaskOptions::default()).unwrap();
    let nash = nash_solve(&cal, &nash_mask, &nash_opts(), None).unwrap();
    let coop = cooperative_solve(&cal, &coop_mask, &nash_opts()).unwrap();
    let (tn, tc) = (average_tariff(&cal, &nash.profile), average_tariff(&cal, &coop.profile));
    assert!(tc < tn, "cooperative {tc} vs nash {tn}");
    let world = Objective::income_weighted(&cal);
    assert!(world.value(&coop.equilibrium) > world.value(&nash.equilibrium));
}

#[test]
fn nash_profile_is_self_consistent_and_unimprovable() {
    let cal = generate_synthetic(2, 2, 2, &SyntheticOptions::default()).unwrap();
    let mask = ScenarioMask::new(&cal, ScenarioKind::Dual, &MaskOptions::default()).unwrap();
    let r = nash_solve(&cal, &mask, &nash_opts(), None).unwrap();
    assert!(r.converged);
    assert!(r.epochs < 20);
    let eq = solve_fixed_point(&cal, &r.profile, &nash_opts().br.solver, None).unwrap();
    for (a, b) in eq.welfare.iter().zip(&r.welfare) {
        assert!((a - b).abs() < 1e-10);
    }
    for seq in &r.sequences {
        let mut s = seq.clone();
        s.sort_unstable();
        assert_eq!(s, vec![0, 1]);
    }
    let report = deviation_check(
        &cal,
        &r.profile,
        &mask,
        &[0.01, 0.05, 0.10],
        &InstrumentLimits::default(),
        &SolverOptions::precise(1e-12),
    )
    .unwrap();
    let worst = report.max_gain().unwrap();
    assert!(worst.gain <= 1e-5, "{worst:?}");
}

#[test]
fn perturbed_subsidies_never_beat_the_best_response() {
    let opts = SyntheticOptions {
        psi_range: (0.2, 0.3),
        theta_range: (2.0, 3.0),
        ..Default::default()
    };
    let cal = generate_synthetic(3, 2, 2, &opts).unwrap();
    let mask = ScenarioMask::new(&cal, ScenarioKind::SubsidyOnly, &MaskOptions::default()).unwrap();
    let r = nash_solve(&cal, &mask, &nash_opts(), None).unwrap();
    assert!(r.converged);
    let player = (0..2)
        .max_by(|&a, &b| r.players[a].values.iter().sum::<f64>().total_cmp(&r.players[b].values.iter().sum()))
        .unwrap();
    assert!(r.players[player].values.iter().any(|&s| s > 0.0));
    let solver = SolverOptions::precise(1e-12);
    let a = subsidy_perturbation_experiment(&cal, &r.profile, player, 200, 7, &solver, None).unwrap();
    let b = subsidy_perturbation_experiment(&cal, &r.profile, player, 200, 7, &solver, None).unwrap();
    assert_eq!(a, b);
    assert!(a.max_welfare().unwrap() <= a.reference_welfare + 1e-4);
    assert!((a.reference_welfare - r.welfare[player]).abs() < 1e-10);
}
