//! Cross-formula oracle checks: every analytic quantity against an
//! independent evaluation route at its stated tolerance.

use cvqkd_core::channel::{erlang_pdf, ChannelParams, TurbulenceModel, WaterType};
use cvqkd_core::detect::{hd_qber_analytic, qbar_e, qmld_qber_analytic, qmld_qber_region_form, qmsd_qber_analytic};
use cvqkd_core::likelihood::{
    cond_likelihood, csi_free_likelihood, qmsd_metric, CondMethod, CsiFreeMethod,
    LikelihoodTables, MetricMethod, TableOpts,
};
use cvqkd_core::receiver::ReceiverParams;
use cvqkd_core::source::SourceParams;
use cvqkd_core::specfun::{gaussian_q, integrate_semi_infinite, QuadratureSpec};
use cvqkd_core::LinkParams;

fn table1_link(m: u32, delta: f64, thermal: f64) -> LinkParams {
    LinkParams::new(
        SourceParams::derive(0.95, 0.85, m).unwrap(),
        ChannelParams::for_water(WaterType::Clear, 10.0, TurbulenceModel::erlang(3, 3.0).unwrap())
            .unwrap(),
        ReceiverParams::new(thermal, delta, 0.0, 0.5f64.sqrt()).unwrap(),
    )
}

#[test]
fn conditional_series_equals_polar_quadrature_on_the_grid() {
    let link = table1_link(1, 0.3, 0.001);
    for z in [0usize, 1, 2] {
        for bit in [0u8, 1] {
            for i_t in [0.5, 1.0, 2.0] {
                let quad = cond_likelihood(z, bit, i_t, &link, CondMethod::Quadrature).unwrap();
                let series = cond_likelihood(z, bit, i_t, &link, CondMethod::Series).unwrap();
                assert!(
                    (quad - series).abs() <= 1e-6 * quad,
                    "z={z} b={bit} i_t={i_t}: {quad} vs {series}"
                );
            }
        }
    }
}

#[test]
fn csi_free_semi_closed_equals_fading_quadrature() {
    let link = table1_link(1, 0.4, 0.001);
    for z in [0usize, 1, 2] {
        for bit in [0u8, 1] {
            let semi = csi_free_likelihood(z, bit, &link, CsiFreeMethod::SemiClosed).unwrap();
            let quad = csi_free_likelihood(z, bit, &link, CsiFreeMethod::Quadrature).unwrap();
            assert!(
                (semi - quad).abs() <= 1e-6 * quad,
                "z={z} b={bit}: {semi} vs {quad}"
            );
        }
    }
}

#[test]
fn block_metric_tricomi_equals_quadrature_for_pairs() {
    let link = table1_link(1, 0.3, 0.001);
    let tables = LikelihoodTables::build(&link, &TableOpts::fine()).unwrap();
    for (z_vec, b_vec) in [
        (vec![0u64, 1], vec![0u8, 1]),
        (vec![1, 2], vec![0, 0]),
        (vec![2, 0], vec![1, 0]),
        (vec![3, 1], vec![1, 1]),
    ] {
        let quad = qmsd_metric(&z_vec, &b_vec, &tables, MetricMethod::Quadrature).unwrap();
        let tri = qmsd_metric(&z_vec, &b_vec, &tables, MetricMethod::Tricomi).unwrap();
        assert!(
            (quad - tri).abs() <= 1e-6 * quad,
            "{z_vec:?}|{b_vec:?}: {quad} vs {tri}"
        );
    }
}

#[test]
fn fading_averaged_q_function_matches_craig_quadrature() {
    let spec = QuadratureSpec::with_rel_tol(1e-12);
    for &v in &[0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
        for &theta in &[1u32, 3, 10] {
            let lambda = theta as f64;
            // Craig form: (1/pi) int_0^{pi/2} (1 + beta / sin^2 phi)^(-theta)
            let beta = v * v / (2.0 * lambda);
            let craig = cvqkd_core::specfun::integrate_finite(
                |phi: f64| {
                    let s2 = phi.sin().powi(2);
                    if s2 == 0.0 {
                        0.0
                    } else {
                        (1.0 + beta / s2).powf(-(theta as f64))
                    }
                },
                0.0,
                std::f64::consts::FRAC_PI_2,
                &spec,
            )
            .unwrap()
                / std::f64::consts::PI;
            let closed = qbar_e(v, theta, lambda).unwrap();
            assert!(
                (closed - craig).abs() <= 1e-8 * craig,
                "v={v} theta={theta}: {closed} vs {craig}"
            );
        }
    }
}

#[test]
fn hd_qber_matches_triple_quadrature_with_subtraction() {
    // direct evaluation of the accepted-average error integral for m = 1,
    // with no hypergeometric shortcut anywhere on the oracle path
    let link = table1_link(1, 0.0, 0.001);
    let analytic = hd_qber_analytic(&link).unwrap().qber;

    let s = &link.source;
    let w = s.gauss_decay;
    let scale = link.channel.path_loss_ip.sqrt() * s.mu / link.receiver.sigma_h;
    let mut pref = 4.0 / (std::f64::consts::PI * (s.v_t + 1.0) * s.acceptance_probability());
    for k in 1..=s.subtracted {
        pref *= s.filter_rate / k as f64;
    }
    let spec = QuadratureSpec::with_rel_tol(1e-9);
    let inner_spec = QuadratureSpec::with_rel_tol(1e-10);
    let direct = pref
        * integrate_semi_infinite(
            |x| {
                let fade = integrate_semi_infinite(
                    |i_t| gaussian_q(scale * x * i_t.sqrt()) * erlang_pdf(i_t, 3, 3.0),
                    &inner_spec,
                )
                .unwrap();
                let radial = integrate_semi_infinite(
                    |p: f64| {
                        let r2 = x * x + p * p;
                        let lg = (s.subtracted as f64) * r2.ln() - w * r2;
                        if lg < -700.0 {
                            0.0
                        } else {
                            lg.exp()
                        }
                    },
                    &inner_spec,
                )
                .unwrap();
                fade * radial
            },
            &spec,
        )
        .unwrap();
    assert!(
        (analytic - direct).abs() <= 1e-6 * direct,
        "analytic {analytic} vs direct {direct}"
    );
}

#[test]
fn acceptance_probability_matches_plane_quadrature_high_orders() {
    let spec = QuadratureSpec::with_rel_tol(1e-11);
    for m in [2u32, 3] {
        let p = SourceParams::derive(0.95, 0.85, m).unwrap();
        let oracle = 4.0
            * integrate_semi_infinite(
                |x| {
                    integrate_semi_infinite(
                        |y| {
                            let prior = (-(x * x + y * y) / (p.v_t + 1.0)).exp()
                                / (std::f64::consts::PI * (p.v_t + 1.0));
                            p.vps_filter(x, y) * prior
                        },
                        &spec,
                    )
                    .unwrap()
                },
                &spec,
            )
            .unwrap();
        let closed = p.acceptance_probability();
        assert!(
            (closed - oracle).abs() <= 1e-8 * oracle,
            "m={m}: {closed} vs {oracle}"
        );
    }
}

#[test]
fn qmld_min_form_equals_region_form_identically() {
    for delta in [0.0, 0.3, 0.9] {
        let link = table1_link(1, delta, 0.001);
        let tables = LikelihoodTables::build(&link, &TableOpts::fine()).unwrap();
        let min_form = qmld_qber_analytic(&tables).qber;
        let region_form = qmld_qber_region_form(&tables);
        assert_eq!(min_form.to_bits(), region_form.to_bits(), "delta={delta}");
    }
}

#[test]
fn single_symbol_block_reduces_to_symbol_rule() {
    let link = table1_link(1, 0.5, 0.01);
    let tables = LikelihoodTables::build(&link, &TableOpts::fine()).unwrap();
    let qmld = qmld_qber_analytic(&tables).qber;
    let qmsd = qmsd_qber_analytic(&tables, 1).unwrap().qber;
    assert!(
        (qmsd - qmld).abs() <= 1e-9 * qmld,
        "L=1 {qmsd} vs qmld {qmld}"
    );
}

#[test]
fn displacement_search_properties() {
    // a weak link keeps the objective evaluations cheap
    let base = LinkParams::new(
        SourceParams::derive(0.95, 0.85, 1).unwrap(),
        ChannelParams::for_water(WaterType::Coastal, 30.0, TurbulenceModel::erlang(3, 3.0).unwrap())
            .unwrap(),
        ReceiverParams::new(0.001, 0.0, 0.0, 0.5f64.sqrt()).unwrap(),
    );
    let choice = cvqkd_core::detect::optimize_displacement(&base, &TableOpts::optimizer()).unwrap();
    assert!(!choice.flat);
    assert!(choice.delta_mag > 0.0);
    assert!(choice.qber < 0.5, "optimized {} not below the zero-displacement half", choice.qber);

    // grid-scan oracle at doubled density over the same search domain
    let eval = |delta: f64| -> f64 {
        let tables =
            LikelihoodTables::build(&base.with_delta(delta), &TableOpts::optimizer()).unwrap();
        qmld_qber_analytic(&tables).qber
    };
    let rms = base.channel.path_loss_ip.sqrt()
        * base.source.mu
        * (2.0 / base.source.gauss_decay).sqrt();
    let delta_hi = rms.max(std::f64::consts::FRAC_1_SQRT_2);
    let mut best = (0.0, f64::INFINITY);
    for i in 0..=32 {
        let d = delta_hi * i as f64 / 32.0;
        let q = eval(d);
        if q < best.1 {
            best = (d, q);
        }
    }
    assert!(
        (best.0 - choice.delta_mag).abs() <= delta_hi / 16.0,
        "dense-scan argmin {} far from the refined optimum {}",
        best.0,
        choice.delta_mag
    );
    assert!(
        choice.qber <= best.1 + 1e-5,
        "refined optimum {} worse than the dense scan {}",
        choice.qber,
        best.1
    );

    // flat objective: no signal reaches the receiver
    let mut dead = base;
    dead.channel.path_loss_ip = 1e-30;
    let flat = cvqkd_core::detect::optimize_displacement(&dead, &TableOpts::optimizer()).unwrap();
    assert!(flat.flat);
    assert_eq!(flat.delta_mag, 0.0);
    assert_eq!(flat.qber, 0.5);
}

#[test]
fn csi_free_normalizes_including_tail() {
    let link = table1_link(1, 0.5, 0.001);
    let tables = LikelihoodTables::build(&link, &TableOpts::fine()).unwrap();
    for bit in [0u8, 1] {
        let mass: f64 =
            (0..=tables.z_cap()).map(|z| tables.csi_free(z, bit)).sum::<f64>() + tables.tail_mass(bit);
        assert!((mass - 1.0).abs() < 1e-8, "bit={bit}: {mass}");
    }
}
