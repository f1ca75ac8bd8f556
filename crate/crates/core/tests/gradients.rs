use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tradeopt::economy::{generate_synthetic, SyntheticOptions};
use tradeopt::equilibrium::solve_fixed_point;
use tradeopt::game::{Instrument, MaskOptions, ScenarioKind, ScenarioMask};
use tradeopt::sensitivity::{
    finite_difference_gradient, literal_policy_gradient, max_relative_error, policy_gradient, Objective,
};
use tradeopt::{Calibration, PolicyWedges, SolverOptions};

/// Entries smaller than this (in absolute value) are compared absolutely.
const FLOOR: f64 = 1e-6;

fn random_point(cal: &Calibration, rng: &mut ChaCha8Rng) -> PolicyWedges {
    let mut w = PolicyWedges::baseline(cal);
    for ((o, d, s), t) in w.tariff.indexed_iter_mut() {
        if o != d && cal.data().tradable[s] {
            *t = 0.4 * rng.random::<f64>();
        }
    }
    for c in 0..cal.countries() {
        for s in cal.tradable_sectors() {
            w.set_subsidy(c, s, 0.2 * rng.random::<f64>());
        }
    }
    w
}

#[test]
fn adjoint_matches_finite_differences_on_random_economies() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let tight = SolverOptions::precise(1e-12);
    let mut worst = 0.0_f64;
    for (seed, n, j) in [(1, 2, 1), (2, 2, 2), (3, 3, 3)] {
        let cal = generate_synthetic(seed, n, j, &SyntheticOptions::default()).unwrap();
        let mask = ScenarioMask::new(&cal, ScenarioKind::Dual, &MaskOptions::default()).unwrap();
        for point in 0..10 {
            let w = random_point(&cal, &mut rng);
            let player = rng.random_range(0..n);
            let inst = mask.player_instruments(player).unwrap();
            let obj = Objective::Country(player);
            let eq = solve_fixed_point(&cal, &w, &tight, None).unwrap();
            let adj = policy_gradient(&cal, &w, &obj, inst, &eq).unwrap();
            assert_eq!(adj.linear_solves, 1);
            assert_eq!(adj.len(), inst.len());
            let fd = finite_difference_gradient(&cal, &w, &obj, inst, 1e-6, &tight, Some(&eq.state)).unwrap();
            let err = max_relative_error(&adj.values, &fd.values, FLOOR);
            worst = worst.max(err);
            assert!(err < 1e-4, "({n},{j}) point {point}: {err:e}\n{:?}\n{:?}", adj.values, fd.values);
        }
    }
    eprintln!("worst relative error {worst:e}");
}

#[test]
fn weighted_objective_gradient_matches() {
    let cal = generate_synthetic(5, 3, 2, &SyntheticOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = random_point(&cal, &mut rng);
    let mask = ScenarioMask::new(&cal, ScenarioKind::CooperativeDual, &MaskOptions::default()).unwrap();
    let inst = mask.all_instruments();
    let obj = Objective::income_weighted(&cal);
    let tight = SolverOptions::precise(1e-12);
    let eq = solve_fixed_point(&cal, &w, &tight, None).unwrap();
    let adj = policy_gradient(&cal, &w, &obj, &inst, &eq).unwrap();
    let lit = literal_policy_gradient(&cal, &w, &obj, &inst, &eq).unwrap();
    let fd = finite_difference_gradient(&cal, &w, &obj, &inst, 1e-6, &tight, Some(&eq.state)).unwrap();
    assert!(max_relative_error(&adj.values, &lit.values, 1e-12) < 1e-9);
    assert!(max_relative_error(&adj.values, &fd.values, FLOOR) < 1e-4);
    // one solve regardless of how many instruments
    assert_eq!(adj.linear_solves, 1);
    assert_eq!(lit.linear_solves, inst.len());
}

#[test]
fn zero_flow_route_has_zero_gradient() {
    let opts = SyntheticOptions {
        nontradable: 1,
        ..Default::default()
    };
    let cal = generate_synthetic(6, 2, 2, &opts).unwrap();
    assert_eq!(cal.data().trade_flow[[1, 0, 1]], 0.0);
    let mut w = PolicyWedges::uniform_tariff(&cal, 0.1);
    w.tariff[[1, 0, 1]] = 0.1;
    let inst = vec![
        Instrument::Tariff {
            origin: 1,
            destination: 0,
            sector: 1,
        },
        Instrument::Tariff {
            origin: 1,
            destination: 0,
            sector: 0,
        },
    ];
    let tight = SolverOptions::precise(1e-12);
    let eq = solve_fixed_point(&cal, &w, &tight, None).unwrap();
    let obj = Objective::Country(0);
    let adj = policy_gradient(&cal, &w, &obj, &inst, &eq).unwrap();
    assert_eq!(adj.values[0], 0.0);
    assert!(adj.values[1] != 0.0);
    let fd = finite_difference_gradient(&cal, &w, &obj, &inst, 1e-6, &tight, Some(&eq.state)).unwrap();
    assert!(fd.values[0].abs() < 1e-10);
}

#[test]
fn symmetric_pair_has_mirrored_gradients() {
    let opts = SyntheticOptions {
        symmetric: true,
        ..Default::default()
    };
    let cal = generate_synthetic(1, 2, 1, &opts).unwrap();
    let w = PolicyWedges::uniform_tariff(&cal, 0.2);
    let eq = solve_fixed_point(&cal, &w, &SolverOptions::precise(1e-13), None).unwrap();
    let t12 = Instrument::Tariff {
        origin: 1,
        destination: 0,
        sector: 0,
    };
    let t21 = Instrument::Tariff {
        origin: 0,
        destination: 1,
        sector: 0,
    };
    let g1 = policy_gradient(&cal, &w, &Objective::Country(0), &[t12], &eq).unwrap();
    let g2 = policy_gradient(&cal, &w, &Objective::Country(1), &[t21], &eq).unwrap();
    assert!((g1.values[0] - g2.values[0]).abs() < 1e-10 * g1.values[0].abs().max(1.0));
}

#[test]
fn step_halving_is_stable() {
    let cal = generate_synthetic(9, 2, 2, &SyntheticOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = random_point(&cal, &mut rng);
    let mask = ScenarioMask::new(&cal, ScenarioKind::Dual, &MaskOptions::default()).unwrap();
    let inst = mask.player_instruments(0).unwrap();
    let tight = SolverOptions::precise(1e-12);
    let obj = Objective::Country(0);
    let a = finite_difference_gradient(&cal, &w, &obj, inst, 1e-5, &tight, None).unwrap();
    let b = finite_difference_gradient(&cal, &w, &obj, inst, 1e-6, &tight, None).unwrap();
    assert!(max_relative_error(&a.values, &b.values, FLOOR) < 1e-5);
}
