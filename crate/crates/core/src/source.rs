//! Prepare-and-measure equivalent of the photon-subtracted transmitter:
//! Gaussian prior over heterodyne outcomes, post-selection filter, acceptance
//! statistics, bit labeling, and accepted-sample generation.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Largest supported number of virtually subtracted photons. Acceptance rates
/// degenerate quickly beyond a few photons and factorial factors grow.
pub const MAX_SUBTRACTED: u32 = 10;

/// Transmitter constants. The `mu`, `v_t`, `filter_rate` (y) and
/// `gauss_decay` (w) fields are derived from `(T, zeta)` at construction and
/// always equal their defining formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    /// Beam-splitter transmittance T in (0, 1].
    pub transmittance: f64,
    /// Two-mode squeezed vacuum parameter in (0, 1).
    pub zeta: f64,
    /// Number of virtually subtracted photons m.
    pub subtracted: u32,
    /// Amplitude gain of the prepared coherent state, sqrt(2T) zeta / 2.
    pub mu: f64,
    /// Source variance V_T = (1 + zeta^2) / (1 - zeta^2).
    pub v_t: f64,
    /// Filter rate y = (1 - T) zeta^2 / 2.
    pub filter_rate: f64,
    /// Gaussian decay of the accepted ensemble, w = y + 1 / (V_T + 1).
    pub gauss_decay: f64,
}

/// One post-selection-accepted heterodyne outcome with its bit label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedSample {
    /// In-phase quadrature x_A.
    pub gamma_re: f64,
    /// Conjugate quadrature p_A.
    pub gamma_im: f64,
    /// Bit label: 0 iff x_A >= 0.
    pub bit: u8,
}

impl SourceParams {
    /// Derives the full constant set from `(T, zeta, m)`.
    pub fn derive(transmittance: f64, zeta: f64, subtracted: u32) -> Result<Self> {
        if !(transmittance > 0.0 && transmittance <= 1.0) {
            return Err(Error::domain(format!(
                "transmittance must be in (0, 1], got {transmittance}"
            )));
        }
        if !(zeta > 0.0 && zeta < 1.0) {
            return Err(Error::domain(format!("zeta must be in (0, 1), got {zeta}")));
        }
        if subtracted > MAX_SUBTRACTED {
            return Err(Error::domain(format!(
                "subtracted photon count {subtracted} exceeds the supported maximum {MAX_SUBTRACTED}"
            )));
        }
        let z2 = zeta * zeta;
        let v_t = (1.0 + z2) / (1.0 - z2);
        let filter_rate = (1.0 - transmittance) * z2 / 2.0;
        if filter_rate == 0.0 && subtracted > 0 {
            return Err(Error::domain(
                "T = 1 gives a zero filter rate; no photon can be subtracted".to_string(),
            ));
        }
        Ok(SourceParams {
            transmittance,
            zeta,
            subtracted,
            mu: (2.0 * transmittance).sqrt() * zeta / 2.0,
            v_t,
            filter_rate,
            gauss_decay: filter_rate + 1.0 / (v_t + 1.0),
        })
    }

    /// Post-selection filter value Q_m(gamma) = e^(-y|g|^2) (y|g|^2)^m / m!.
    pub fn vps_filter(&self, gamma_re: f64, gamma_im: f64) -> f64 {
        let u = self.filter_rate * (gamma_re * gamma_re + gamma_im * gamma_im);
        let mut value = (-u).exp();
        for k in 1..=self.subtracted {
            value *= u / k as f64;
        }
        value
    }

    /// Overall acceptance probability y^m / ((V_T + 1) w^(m+1)).
    pub fn acceptance_probability(&self) -> f64 {
        let mut p = 1.0 / ((self.v_t + 1.0) * self.gauss_decay);
        for _ in 0..self.subtracted {
            p *= self.filter_rate / self.gauss_decay;
        }
        p
    }

    /// Per-bit acceptance probability. The filter depends only on |gamma| and
    /// the prior is circularly symmetric, so each half-plane carries half the
    /// total acceptance mass.
    pub fn per_bit_acceptance(&self, _bit: u8) -> f64 {
        0.5 * self.acceptance_probability()
    }

    /// Accepted-only bit-conditioned density p_acc(gamma | b).
    pub fn accepted_density(&self, gamma_re: f64, gamma_im: f64, bit: u8) -> f64 {
        let sign_matches = if bit == 0 { gamma_re >= 0.0 } else { gamma_re < 0.0 };
        if !sign_matches {
            return 0.0;
        }
        let prior = (-(gamma_re * gamma_re + gamma_im * gamma_im) / (self.v_t + 1.0)).exp()
            / (std::f64::consts::PI * (self.v_t + 1.0));
        self.vps_filter(gamma_re, gamma_im) * prior / self.per_bit_acceptance(bit)
    }

    /// Draws one accepted sample by rejection: propose from the Gaussian prior
    /// and accept with probability Q_m. Expected attempts are 1 / P_acc.
    pub fn sample_accepted<R: Rng + ?Sized>(&self, rng: &mut R) -> AcceptedSample {
        let sigma = ((self.v_t + 1.0) / 2.0).sqrt();
        let normal = Normal::new(0.0, sigma).expect("valid sigma");
        loop {
            let x = normal.sample(rng);
            let p = normal.sample(rng);
            if rng.gen::<f64>() < self.vps_filter(x, p) {
                return AcceptedSample {
                    gamma_re: x,
                    gamma_im: p,
                    bit: if x >= 0.0 { 0 } else { 1 },
                };
            }
        }
    }

    /// CDF of |gamma|^2 under the accepted ensemble: |gamma|^2 is
    /// Gamma(m + 1, w)-distributed, so the CDF has the Poisson-sum closed form.
    pub fn accepted_radius_sq_cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let x = self.gauss_decay * u;
        let mut term = (-x).exp();
        let mut tail = term;
        for k in 1..=self.subtracted {
            term *= x / k as f64;
            tail += term;
        }
        1.0 - tail
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{integrate_semi_infinite, QuadratureSpec};
    use rand::SeedableRng;
    use rand_pcg::Pcg64Mcg;

    const T: f64 = 0.95;
    const ZETA: f64 = 0.85;

    /// 2-D quadrature of the acceptance integral over the complex plane,
    /// reduced to quarter-plane by the even symmetry in each quadrature.
    fn acceptance_oracle(p: &SourceParams) -> f64 {
        let spec = QuadratureSpec::with_rel_tol(1e-11);
        let p = *p;
        4.0 * integrate_semi_infinite(
            move |x| {
                integrate_semi_infinite(
                    move |y| {
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
        .unwrap()
    }

    #[test]
    fn derived_constants() {
        let p = SourceParams::derive(T, ZETA, 1).unwrap();
        assert!((p.mu - (2.0 * T).sqrt() * ZETA / 2.0).abs() < 1e-15);
        assert!((p.mu - 0.585822).abs() < 1e-6);
        assert!((p.v_t - 1.7225 / 0.2775).abs() < 1e-12);
        assert!((p.v_t - 6.207207).abs() < 1e-6);
        assert!((p.filter_rate - 0.0180625).abs() < 1e-15);
        assert!((p.gauss_decay - (p.filter_rate + 1.0 / (p.v_t + 1.0))).abs() < 1e-15);
        let full = SourceParams::derive(1.0, ZETA, 0).unwrap();
        assert_eq!(full.filter_rate, 0.0);
        assert!(SourceParams::derive(1.0, ZETA, 1).is_err());
        assert!(SourceParams::derive(0.0, ZETA, 0).is_err());
        assert!(SourceParams::derive(T, 1.0, 0).is_err());
        assert!(SourceParams::derive(T, ZETA, MAX_SUBTRACTED + 1).is_err());
    }

    #[test]
    fn filter_values() {
        let p0 = SourceParams::derive(T, ZETA, 0).unwrap();
        assert_eq!(p0.vps_filter(0.0, 0.0), 1.0);
        let p1 = SourceParams::derive(T, ZETA, 1).unwrap();
        assert_eq!(p1.vps_filter(0.0, 0.0), 0.0);
        // gamma = 3 + 4i, m = 1: y |gamma|^2 e^(-y |gamma|^2) with y = 0.0180625
        let u = p1.filter_rate * 25.0;
        let expect = u * (-u).exp();
        assert!((p1.vps_filter(3.0, 4.0) - expect).abs() < 1e-15);
        assert!((expect - 0.287479).abs() < 1e-6);
    }

    #[test]
    fn acceptance_probability_against_plane_integral() {
        for m in [0, 1] {
            let p = SourceParams::derive(T, ZETA, m).unwrap();
            let closed = p.acceptance_probability();
            let oracle = acceptance_oracle(&p);
            assert!(
                (closed - oracle).abs() < 1e-8 * oracle,
                "m={m}: closed {closed} vs oracle {oracle}"
            );
        }
        let p0 = SourceParams::derive(T, ZETA, 0).unwrap();
        assert!((p0.acceptance_probability() - 0.884815).abs() < 1e-6);
        let p1 = SourceParams::derive(T, ZETA, 1).unwrap();
        assert!((p1.acceptance_probability() - 0.101918).abs() < 1e-6);
        let full = SourceParams::derive(1.0, 0.5, 0).unwrap();
        assert_eq!(full.acceptance_probability(), 1.0);
    }

    #[test]
    fn acceptance_decreases_with_subtraction_order() {
        let mut prev = f64::INFINITY;
        for m in 0..=3 {
            let p = SourceParams::derive(T, ZETA, m).unwrap();
            let acc = p.acceptance_probability();
            assert!(acc < prev, "m={m}: {acc} !< {prev}");
            prev = acc;
        }
    }

    #[test]
    fn per_bit_acceptance_against_half_plane_integral() {
        let spec = QuadratureSpec::with_rel_tol(1e-11);
        let p = SourceParams::derive(T, ZETA, 1).unwrap();
        // Half-plane x < 0 (b = 1), reduced to a quarter plane by p-symmetry.
        let oracle = 2.0
            * integrate_semi_infinite(
                |x| {
                    integrate_semi_infinite(
                        |y| {
                            let prior = (-(x * x + y * y) / (p.v_t + 1.0)).exp()
                                / (std::f64::consts::PI * (p.v_t + 1.0));
                            p.vps_filter(-x, y) * prior
                        },
                        &spec,
                    )
                    .unwrap()
                },
                &spec,
            )
            .unwrap();
        let b1 = p.per_bit_acceptance(1);
        assert!((b1 - oracle).abs() < 1e-8 * oracle, "{b1} vs {oracle}");
        assert!((b1 - 0.050959).abs() < 1e-6);
        assert!((p.per_bit_acceptance(0) - p.per_bit_acceptance(1)).abs() < 1e-10);
        let full = SourceParams::derive(1.0, ZETA, 0).unwrap();
        assert_eq!(full.per_bit_acceptance(0), 0.5);
    }

    #[test]
    fn accepted_density_normalizes_and_respects_indicator() {
        let spec = QuadratureSpec::with_rel_tol(1e-9);
        for m in 0..=3 {
            let p = SourceParams::derive(T, ZETA, m).unwrap();
            // b = 0 half plane, p-symmetry halves the p-range.
            let mass = 2.0
                * integrate_semi_infinite(
                    |x| {
                        integrate_semi_infinite(|y| p.accepted_density(x, y, 0), &spec).unwrap()
                    },
                    &spec,
                )
                .unwrap();
            assert!((mass - 1.0).abs() < 1e-6, "m={m}: mass {mass}");
        }
        let p = SourceParams::derive(T, ZETA, 0).unwrap();
        assert_eq!(p.accepted_density(-0.3, 0.2, 0), 0.0);
        let full = SourceParams::derive(1.0, ZETA, 0).unwrap();
        let at_origin = full.accepted_density(0.0, 0.0, 0);
        let expect = 2.0 / (std::f64::consts::PI * (full.v_t + 1.0));
        assert!((at_origin - expect).abs() < 1e-15);
    }

    #[test]
    fn rejection_sampler_statistics() {
        let p = SourceParams::derive(T, ZETA, 1).unwrap();
        let mut rng = Pcg64Mcg::seed_from_u64(01_23);
        let attempts = 1_000_000u64;
        let sigma = ((p.v_t + 1.0) / 2.0).sqrt();
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut accepted = 0u64;
        let mut zero_bits = 0u64;
        for _ in 0..attempts {
            let x: f64 = normal.sample(&mut rng);
            let y: f64 = normal.sample(&mut rng);
            if rng.gen::<f64>() < p.vps_filter(x, y) {
                accepted += 1;
                if x >= 0.0 {
                    zero_bits += 1;
                }
            }
        }
        let p_acc = p.acceptance_probability();
        let rate = accepted as f64 / attempts as f64;
        let sd = (p_acc * (1.0 - p_acc) / attempts as f64).sqrt();
        assert!((rate - p_acc).abs() < 3.0 * sd, "rate {rate} vs {p_acc}");
        let frac0 = zero_bits as f64 / accepted as f64;
        let sd0 = (0.25 / accepted as f64).sqrt();
        assert!((frac0 - 0.5).abs() < 3.0 * sd0, "bit balance {frac0}");
    }

    #[test]
    fn radial_law_kolmogorov_smirnov() {
        for m in 0..=3 {
            let p = SourceParams::derive(T, ZETA, m).unwrap();
            let mut rng = Pcg64Mcg::seed_from_u64(7 + m as u64);
            let n = 100_000;
            let mut radii: Vec<f64> = (0..n)
                .map(|_| {
                    let s = p.sample_accepted(&mut rng);
                    s.gamma_re * s.gamma_re + s.gamma_im * s.gamma_im
                })
                .collect();
            radii.sort_by(|a, b| a.total_cmp(b));
            let mut ks: f64 = 0.0;
            for (i, u) in radii.iter().enumerate() {
                let cdf = p.accepted_radius_sq_cdf(*u);
                let emp_hi = (i + 1) as f64 / n as f64;
                let emp_lo = i as f64 / n as f64;
                ks = ks.max((cdf - emp_lo).abs()).max((emp_hi - cdf).abs());
            }
            assert!(ks < 0.01, "m={m}: KS statistic {ks}");
        }
    }

    #[test]
    fn full_transmittance_accepts_everything() {
        let p = SourceParams::derive(1.0, ZETA, 0).unwrap();
        let mut rng = Pcg64Mcg::seed_from_u64(5);
        for _ in 0..100 {
            let s = p.sample_accepted(&mut rng);
            assert_eq!(s.bit, if s.gamma_re >= 0.0 { 0 } else { 1 });
        }
        assert_eq!(p.vps_filter(2.0, -1.0), 1.0);
    }
}
