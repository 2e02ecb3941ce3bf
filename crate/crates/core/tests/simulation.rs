use proptest::prelude::*;
use robdiv::fbp::{solve, FreeBoundarySolution, SolveOptions};
use robdiv::sim::{
    estimate_coupled, estimate_value, simulate_path_observed, simulate_paths, CoefficientTable, KernelKind, Measure,
    SimConfig,
};
use robdiv::SurplusModel;

fn baseline() -> SurplusModel {
    SurplusModel::ornstein_uhlenbeck(0.5, 3.0, 0.5, 0.05, 0.1, 1.5).unwrap()
}

fn solution() -> FreeBoundarySolution {
    solve(&baseline(), &SolveOptions::default()).unwrap().solution
}

fn worst_case(x0: f64, b: f64) -> SimConfig {
    SimConfig {
        x0,
        b,
        dt: 1e-2,
        t_max: 200.0,
        n_paths: 400,
        seed: 11,
        kernel: KernelKind::WorstCase,
        measure: Measure::DriftShift,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reflected_path_stays_in_band(seed in any::<u64>(), frac in 0.0f64..1.5, index in 0u64..1000) {
        let m = baseline();
        let sol = solution();
        let cfg = SimConfig { seed, x0: frac * sol.b_star, t_max: 20.0, ..worst_case(0.0, sol.b_star) };
        let table = CoefficientTable::new(&m, cfg.b, cfg.kernel, Some(&sol)).unwrap();
        let mut paid = 0.0;
        let rec = simulate_path_observed(&m, &cfg, &table, index, |_, x, d| {
            assert!((0.0..=cfg.b).contains(&x));
            assert!(d >= 0.0);
            paid += d;
        });
        prop_assert!(paid >= 0.0);
        prop_assert!(rec.tilt_integral >= 0.0);
    }
}

#[test]
fn tilt_vanishes_only_for_zero_kernel() {
    let m = baseline();
    let sol = solution();
    let cfg = worst_case(0.5, sol.b_star);
    let tilted = simulate_paths(&m, &cfg, Some(&sol)).unwrap();
    assert!(tilted.iter().filter(|r| r.ruin_time > 0.0).all(|r| r.tilt_integral != 0.0));
    let plain = simulate_paths(&m, &SimConfig { kernel: KernelKind::Zero, ..cfg }, None).unwrap();
    assert!(plain.iter().all(|r| r.tilt_integral == 0.0));
}

#[test]
fn likelihood_ratio_agrees_with_drift_shift() {
    let m = baseline();
    let sol = solution();
    let cfg = SimConfig {
        n_paths: 2000,
        ..worst_case(0.6, sol.b_star)
    };
    let shift = estimate_value(&m, &cfg, Some(&sol)).unwrap();
    let lr = estimate_value(
        &m,
        &SimConfig {
            measure: Measure::LikelihoodRatio,
            ..cfg
        },
        Some(&sol),
    )
    .unwrap();
    let tol = 4.0 * (shift.stderr.powi(2) + lr.stderr.powi(2)).sqrt();
    assert!((shift.mean - lr.mean).abs() <= tol, "{} vs {}", shift.mean, lr.mean);
}

#[test]
fn coarse_tilted_estimate_brackets_solved_value() {
    let m = baseline();
    let sol = solution();
    let x0 = sol.b_star;
    let est = estimate_coupled(&m, &worst_case(x0, sol.b_star), Some(&sol)).unwrap();
    let v = sol.eval(x0).unwrap().0;
    assert!((est.fine.mean - v).abs() <= 3.0 * est.fine.stderr + 5.0 * est.bias);
    assert!(est.fine.censoring_bound >= 0.0);
}

#[test]
fn classical_value_dominates_tilted_value() {
    let m = baseline();
    let sol = solution();
    let cfg = worst_case(0.4, sol.b_star);
    let tilted = estimate_value(&m, &cfg, Some(&sol)).unwrap();
    let k = estimate_value(&m, &SimConfig { kernel: KernelKind::Zero, ..cfg }, None).unwrap();
    assert!(k.mean >= tilted.mean - 3.0 * (k.stderr + tilted.stderr));
}
