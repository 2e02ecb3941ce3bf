use proptest::prelude::*;
use robdiv::lattice::{build_lattice, g_ez, lipschitz_aggregator, solve, LatticeOptions};
use robdiv::SurplusModel;

const RHO: f64 = 0.05;

proptest! {
    #[test]
    fn aggregators_increase_in_n_toward_ez(n in 1u32..200, y in 1e-4f64..20.0, t in 0.0f64..50.0, r in 0.01f64..0.9) {
        let g_n = lipschitz_aggregator(n, t, y, RHO, r).unwrap();
        let g_next = lipschitz_aggregator(n + 1, t, y, RHO, r).unwrap();
        let g = g_ez(t, y, RHO, r);
        prop_assert!(g_n <= g_next * (1.0 + 1e-12));
        prop_assert!(g_next <= g * (1.0 + 1e-12));
    }

    #[test]
    fn aggregator_is_nonincreasing_and_lipschitz(
        n in 1u32..200, y1 in 0.0f64..10.0, dy in 0.0f64..5.0, t in 0.0f64..50.0, r in 0.01f64..0.9,
    ) {
        let y2 = y1 + dy;
        let a = lipschitz_aggregator(n, t, y1, RHO, r).unwrap();
        let b = lipschitz_aggregator(n, t, y2, RHO, r).unwrap();
        prop_assert!(b <= a);
        let modulus = n as f64 * r * (-RHO * t).exp();
        prop_assert!((a - b) <= modulus * dy * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn higher_payout_raises_every_ez_node(xi_lo in 1.05f64..3.0, bump in 0.01f64..2.0) {
        let lo = SurplusModel::ornstein_uhlenbeck(0.5, 3.0, 0.5, RHO, 0.1, xi_lo).unwrap();
        let hi = lo.with_xi0(xi_lo + bump).unwrap();
        let opts = LatticeOptions::default();
        let a = solve(&build_lattice(&lo, 0.8, 50, None, 10.0).unwrap(), &opts).unwrap();
        let b = solve(&build_lattice(&hi, 0.8, 50, None, 10.0).unwrap(), &opts).unwrap();
        for (x, y) in a.at_time_zero().v_ez.iter().zip(&b.at_time_zero().v_ez) {
            prop_assert!(y > x);
        }
    }
}

#[test]
fn ez_values_are_positive_and_sandwiched_on_every_snapshot() {
    let m = SurplusModel::ornstein_uhlenbeck(0.5, 3.0, 0.5, RHO, 0.1, 1.5).unwrap();
    let spec = build_lattice(&m, 0.8191688734085523, 80, None, 40.0).unwrap();
    let val = solve(&spec, &LatticeOptions::default()).unwrap();
    assert!(val.slices.len() > 1);
    for s in &val.slices {
        let payout = 1.5 * (-RHO * s.t).exp();
        assert_eq!(s.v_rob[0], payout);
        assert!((s.v_ez[0] - payout.powf(0.9)).abs() <= 1e-15);
        for i in 0..s.k.len() {
            assert!(s.v_ez[i] > 0.0);
            assert!(s.v_low[i] <= s.v_ez[i] * (1.0 + 1e-12));
            assert!(s.v_ez[i] <= s.k[i].powf(0.9) * (1.0 + 1e-12));
        }
    }
    assert_eq!(val.picard.bound_violations, 0);
    assert!(val.picard.max_iters <= 30);
}
