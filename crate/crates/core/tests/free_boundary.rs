use proptest::prelude::*;
use robdiv::fbp::{self, integrate_g, shoot, value_at, FbpOptions, ShootOptions, SolveOptions};
use robdiv::{check_assumptions, ScanOptions, SurplusModel};

fn baseline() -> SurplusModel {
    SurplusModel::ornstein_uhlenbeck(0.5, 3.0, 0.5, 0.05, 0.1, 1.5).unwrap()
}

fn hump() -> SurplusModel {
    let x: Vec<f64> = (0..=60).map(|i| i as f64 * 0.1).collect();
    let mu: Vec<f64> = x.iter().map(|&v| 1.0 + 1.2 * v * (-(v / 1.5)).exp() - 0.3 * v).collect();
    let sigma = vec![0.4; x.len()];
    SurplusModel::tabulated(x, mu, sigma, 0.05, 0.05, 2.0).unwrap()
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..=n).map(move |i| if i == n { hi } else { lo + (hi - lo) * i as f64 / n as f64 })
}

// b* on the baseline for the default tolerances
const B_STAR: f64 = 0.8191688734085523;
// Riccati runs from barriers above about 0.83 blow up before reaching 0
const B_RUN_MAX: f64 = 0.825;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn riccati_solution_is_monotone_in_barrier(b1 in 0.05f64..0.82, gap in 0.001f64..0.3) {
        let m = baseline();
        let b2 = (b1 + gap).min(B_RUN_MAX);
        prop_assume!(b2 > b1);
        let opts = FbpOptions::default();
        let r1 = integrate_g(&m, b1, 0.0, &opts).unwrap();
        let r2 = integrate_g(&m, b2, 0.0, &opts).unwrap();
        for x in grid(1e-6, b1, 200) {
            let g1 = r1.state(x).unwrap().0[0];
            let g2 = r2.state(x).unwrap().0[0];
            prop_assert!(g1 <= g2 * (1.0 + 1e-9), "x = {x}: g_b1 = {g1}, g_b2 = {g2}");
        }
    }

    #[test]
    fn riccati_solution_dominates_inverse_root(b in 0.02f64..B_RUN_MAX) {
        // the baseline has b_lower = 0, so y*_b = 0
        let m = baseline();
        let run = integrate_g(&m, b, 0.0, &FbpOptions::default()).unwrap();
        for x in grid(0.0, b, 300) {
            let g = run.state(x).unwrap().0[0];
            let floor = 1.0 / m.psi_roots(x).unwrap().psi_plus;
            prop_assert!(g >= floor * (1.0 - 1e-9), "x = {x}: g = {g} < 1/psi+ = {floor}");
        }
    }

    #[test]
    fn value_above_payout_line_below_optimum(b in 0.05f64..B_STAR) {
        let m = baseline();
        let run = integrate_g(&m, b, 0.0, &FbpOptions::default()).unwrap();
        prop_assert!(value_at(&run, 0.0).unwrap() >= m.xi0());
        for x in grid(0.0, b, 200) {
            prop_assert!(value_at(&run, x).unwrap() >= x + m.xi0() - 1e-9);
        }
    }
}

#[test]
fn low_barrier_has_gradient_at_most_one() {
    let m = hump();
    let report = check_assumptions(
        &m,
        &ScanOptions {
            x_max: 6.0,
            n_points: 2001,
            b_lower_override: None,
        },
    )
    .unwrap();
    assert!(report.b_lower > 0.0);
    let b = 0.5 * report.b_lower;
    let run = integrate_g(&m, b, 0.0, &FbpOptions::default()).unwrap();
    for x in grid(1e-9, b, 400) {
        let (s, _) = run.state(x).unwrap();
        let v = value_at(&run, x).unwrap();
        assert!(s[0] * v <= 1.0 + 1e-9, "v'({x}) = {}", s[0] * v);
    }
}

#[test]
fn tighter_ode_tolerance_barely_moves_barrier() {
    let m = baseline();
    let report = check_assumptions(&m, &ScanOptions::for_model(&m)).unwrap();
    let coarse = shoot(&m, &report, &ShootOptions::default()).unwrap();
    let mut tight = ShootOptions::default();
    tight.ode.rtol *= 0.5;
    tight.ode.atol *= 0.5;
    let fine = shoot(&m, &report, &tight).unwrap();
    assert!((coarse.b_star - fine.b_star).abs() <= 10.0 * tight.tol_b);
}

#[test]
fn continuation_barriers_increase_toward_zero_discount_shift() {
    let m = baseline();
    let report = check_assumptions(&m, &ScanOptions::for_model(&m)).unwrap();
    let opts = ShootOptions {
        continuation: true,
        ..ShootOptions::default()
    };
    let res = shoot(&m, &report, &opts).unwrap();
    assert_eq!(res.continuation.len(), 3);
    assert_eq!(res.continuation_increasing, Some(true));
}

#[test]
fn classical_pipeline_matches_zero_aversion() {
    let m = baseline().with_r(0.0).unwrap();
    let a = fbp::classical_solve(&m, &SolveOptions::default()).unwrap();
    assert!(a.vi.passed);
    assert!(a.solution.b_star < B_STAR);
    assert!(fbp::classical_solve(&baseline(), &SolveOptions::default()).is_err());
}
