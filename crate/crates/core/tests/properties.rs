//! Property-based invariants of the kernel functions and sampling laws.

use proptest::prelude::*;

use cvqkd_core::channel::path_loss;
use cvqkd_core::receiver::{adaptive_z_cap, count_pmf_into, Z_HARD_CAP};
use cvqkd_core::source::SourceParams;
use cvqkd_core::specfun::{gauss_2f1_neg, gaussian_q, half_range_moment, integrate_finite, laguerre, tricomi_u, QuadratureSpec};

fn laguerre_recurrence(order: u32, x: f64) -> f64 {
    let mut lm1 = 1.0;
    if order == 0 {
        return 1.0;
    }
    let mut l = 1.0 - x;
    for k in 1..order {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * l - kf * lm1) / (kf + 1.0);
        lm1 = l;
        l = next;
    }
    l
}

proptest! {
    #[test]
    fn laguerre_negative_axis_matches_recurrence(order in 0u32..=30, u in 0.0f64..=50.0) {
        let sum = laguerre(order, -u);
        let rec = laguerre_recurrence(order, -u);
        prop_assert!((sum - rec).abs() <= 1e-10 * rec.abs().max(1.0), "{sum} vs {rec}");
    }

    #[test]
    fn gaussian_q_symmetry(u in -8.0f64..=8.0) {
        let s = gaussian_q(u) + gaussian_q(-u);
        prop_assert!((s - 1.0).abs() < 1e-14, "sum {s}");
    }

    #[test]
    fn gauss_2f1_bounded_and_monotone_on_negative_axis(
        a in 0.2f64..=6.0,
        b in 0.2f64..=6.0,
        extra in 0.1f64..=4.0,
        x in -50.0f64..=0.0,
    ) {
        let c = b + extra;
        let f = gauss_2f1_neg(a, b, c, x).unwrap();
        prop_assert!(f <= 1.0 + 1e-9, "f({x}) = {f}");
        prop_assert!(f > 0.0);
        // terms alternate: the function decreases away from the origin
        let closer = gauss_2f1_neg(a, b, c, x / 2.0).unwrap();
        prop_assert!(f <= closer + 1e-9, "{f} vs {closer}");
    }

    #[test]
    fn beer_lambert_is_multiplicative(
        c in 0.05f64..=0.4,
        d1 in 0.0f64..=30.0,
        d2 in 0.0f64..=30.0,
    ) {
        let joint = path_loss(c, d1 + d2).unwrap();
        let split = path_loss(c, d1).unwrap() * path_loss(c, d2).unwrap();
        prop_assert!((joint - split).abs() <= 1e-14 * joint, "{joint} vs {split}");
    }

    #[test]
    fn count_law_mean_is_energy_plus_thermal(s in 0.0f64..=30.0, n in 0.0f64..=2.0) {
        let cap = adaptive_z_cap(s, n, Z_HARD_CAP).max(32) * 2;
        let mut pmf = vec![0.0; cap + 1];
        count_pmf_into(s, n, &mut pmf);
        let mean: f64 = pmf.iter().enumerate().map(|(z, p)| z as f64 * p).sum();
        prop_assert!((mean - (s + n)).abs() <= 1e-8 * (s + n).max(1e-6), "mean {mean} vs {}", s + n);
    }

    #[test]
    fn count_law_mass_reaches_cutoff_target(s in 0.0f64..=50.0, n in 0.0f64..=2.0) {
        let cap = adaptive_z_cap(s, n, Z_HARD_CAP);
        let mut pmf = vec![0.0; cap + 1];
        count_pmf_into(s, n, &mut pmf);
        let mass: f64 = pmf.iter().sum();
        prop_assert!(mass >= 1.0 - 1e-10, "mass {mass} at cap {cap}");
        prop_assert!(pmf.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn filter_is_a_probability_and_density_respects_the_indicator(
        m in 0u32..=3,
        x in -8.0f64..=8.0,
        p in -8.0f64..=8.0,
    ) {
        let params = SourceParams::derive(0.95, 0.85, m).unwrap();
        let q = params.vps_filter(x, p);
        prop_assert!((0.0..=1.0).contains(&q), "Q_m = {q}");
        let wrong_bit = u8::from(x >= 0.0);
        prop_assert_eq!(params.accepted_density(x, p, wrong_bit), 0.0);
        let right_bit = u8::from(x < 0.0);
        prop_assert!(params.accepted_density(x, p, right_bit) >= 0.0);
    }
}

#[test]
fn tricomi_inverse_power_grid() {
    for a in [0.5, 1.0, 2.0, 5.0] {
        for psi in [0.1, 1.0, 10.0] {
            let u = tricomi_u(a, a + 1.0, psi).unwrap();
            let product = u * psi.powf(a);
            assert!((product - 1.0).abs() < 1e-8, "a={a} psi={psi}: {product}");
        }
    }
}

#[test]
fn half_range_moments_match_quadrature_to_twenty() {
    let spec = QuadratureSpec::with_rel_tol(1e-12);
    for q in 0..=20u32 {
        let direct = integrate_finite(
            |phi: f64| phi.cos().powi(q as i32),
            -std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            &spec,
        )
        .unwrap();
        let m = half_range_moment(q);
        assert!((m - direct).abs() <= 1e-10 * direct, "q={q}: {m} vs {direct}");
    }
}
