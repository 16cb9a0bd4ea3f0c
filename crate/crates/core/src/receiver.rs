//! Displaced photon-number-resolving detection: displaced energy, the exact
//! displaced-thermal count law, and a count sampler whose marginal is that law.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::link::LinkParams;
use crate::specfun::CompensatedSum;

/// Thermal occupation below which the count law switches to its Poisson
/// limit; the Laguerre argument divides by N and loses meaning near zero.
pub const N_FLOOR: f64 = 1e-9;

/// Hard ceiling for the adaptive count cutoff.
pub const Z_HARD_CAP: usize = 4096;

/// Tail mass left outside the adaptive count cutoff.
pub const Z_TAIL_EPS: f64 = 1e-10;

/// Receiver constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverParams {
    /// Mean thermal photon number N.
    pub thermal: f64,
    /// Displacement magnitude |delta|.
    pub delta_mag: f64,
    /// Displacement phase phi_delta in radians.
    pub delta_phase: f64,
    /// Homodyne noise standard deviation.
    pub sigma_h: f64,
    /// Hard cap on the adaptive count cutoff.
    pub z_hard_cap: usize,
}

impl ReceiverParams {
    pub fn new(thermal: f64, delta_mag: f64, delta_phase: f64, sigma_h: f64) -> Result<Self> {
        if !(thermal >= 0.0) || !thermal.is_finite() {
            return Err(Error::domain(format!("thermal N must be >= 0, got {thermal}")));
        }
        if !(delta_mag >= 0.0) || !delta_mag.is_finite() {
            return Err(Error::domain(format!("|delta| must be >= 0, got {delta_mag}")));
        }
        if !(sigma_h > 0.0) || !sigma_h.is_finite() {
            return Err(Error::domain(format!("sigma_h must be > 0, got {sigma_h}")));
        }
        if !delta_phase.is_finite() {
            return Err(Error::domain("delta_phase must be finite".to_string()));
        }
        Ok(ReceiverParams {
            thermal,
            delta_mag,
            delta_phase,
            sigma_h,
            z_hard_cap: Z_HARD_CAP,
        })
    }
}

/// Displaced energy S_delta = |sqrt(I_p I_t) mu gamma - delta|^2.
pub fn displaced_energy(gamma_re: f64, gamma_im: f64, i_t: f64, link: &LinkParams) -> f64 {
    let amp = (link.channel.path_loss_ip * i_t).sqrt() * link.source.mu;
    let (dre, dim) = (
        link.receiver.delta_mag * link.receiver.delta_phase.cos(),
        link.receiver.delta_mag * link.receiver.delta_phase.sin(),
    );
    let re = amp * gamma_re - dre;
    let im = amp * gamma_im - dim;
    re * re + im * im
}

/// Count probability Pr(z | S, N) of the displaced thermal law, evaluated in
/// log space so extreme (z, S/N) combinations stay representable.
pub fn pnr_pmf(z: usize, s_energy: f64, n_thermal: f64) -> f64 {
    debug_assert!(s_energy >= 0.0 && n_thermal >= 0.0);
    let zf = z as f64;
    if n_thermal <= N_FLOOR {
        // Poisson limit
        if s_energy == 0.0 {
            return if z == 0 { 1.0 } else { 0.0 };
        }
        return (-s_energy + zf * s_energy.ln() - libm::lgamma(zf + 1.0)).exp();
    }
    let n1 = n_thermal + 1.0;
    if s_energy == 0.0 {
        // geometric law N^z / (N+1)^(z+1)
        return (zf * n_thermal.ln() - (zf + 1.0) * n1.ln()).exp();
    }
    // ln L_z(-u) with u = S / (N (N+1)), via log-sum-exp over the binomial sum
    let u = s_energy / (n_thermal * n1);
    let ln_u = u.ln();
    let mut ln_term = 0.0f64; // k = 0 term: 1
    let mut ln_max = 0.0f64;
    let mut terms = Vec::with_capacity(z + 1);
    terms.push(0.0f64);
    for k in 0..z {
        let kf = k as f64;
        ln_term += ((zf - kf) / (kf + 1.0)).ln() + ln_u - (kf + 1.0).ln();
        terms.push(ln_term);
        if ln_term > ln_max {
            ln_max = ln_term;
        }
    }
    let sum: f64 = terms.iter().map(|t| (t - ln_max).exp()).sum();
    let ln_laguerre = ln_max + sum.ln();
    (zf * n_thermal.ln() - (zf + 1.0) * n1.ln() - s_energy / n1 + ln_laguerre).exp()
}

/// Fills `out[z] = Pr(z | S, N)` for `z = 0..out.len()` using the scaled
/// Laguerre recurrence; all intermediates stay below (N+1) e^(S/(N+1)).
pub fn count_pmf_into(s_energy: f64, n_thermal: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    if n_thermal <= N_FLOOR {
        let e = (-s_energy).exp();
        out[0] = e;
        let mut t = e;
        for z in 1..out.len() {
            t *= s_energy / z as f64;
            out[z] = t;
        }
        return;
    }
    let n1 = n_thermal + 1.0;
    let q = n_thermal / n1;
    let x = -s_energy / (n_thermal * n1);
    let ln_base = -s_energy / n1 - n1.ln();
    // scaled recurrence for q^z L_z(x); when the scaled polynomial outgrows
    // the f64 range the pair is renormalized and the lost magnitude moves
    // into the base exponent
    let mut offset = 0.0f64;
    let mut base = if ln_base < -745.0 { 0.0 } else { ln_base.exp() };
    let mut lm1 = 1.0;
    out[0] = base;
    if out.len() == 1 {
        return;
    }
    let mut l = q * (1.0 - x);
    out[1] = base * l;
    for z in 1..out.len() - 1 {
        let zf = z as f64;
        let next = (q * (2.0 * zf + 1.0 - x) * l - zf * q * q * lm1) / (zf + 1.0);
        lm1 = l;
        l = next;
        if l > 1e280 {
            lm1 *= 1e-280;
            l *= 1e-280;
            offset += 280.0 * std::f64::consts::LN_10;
            let ln = ln_base + offset;
            base = if ln < -745.0 { 0.0 } else { ln.exp() };
        }
        out[z + 1] = base * l;
    }
}

/// Smallest cutoff whose cumulative mass reaches `1 - Z_TAIL_EPS`, capped at
/// `hard_cap`.
pub fn adaptive_z_cap(s_energy: f64, n_thermal: f64, hard_cap: usize) -> usize {
    let mut cap = 8usize.max((s_energy + n_thermal + 10.0 * (s_energy + n_thermal + 1.0).sqrt()) as usize);
    let mut buf = Vec::new();
    loop {
        cap = cap.min(hard_cap);
        buf.resize(cap + 1, 0.0);
        count_pmf_into(s_energy, n_thermal, &mut buf);
        let mut acc = CompensatedSum::new();
        let mut reached = None;
        for (z, p) in buf.iter().enumerate() {
            acc.add(*p);
            if acc.value() >= 1.0 - Z_TAIL_EPS {
                reached = Some(z);
                break;
            }
        }
        match reached {
            Some(z) => return z.max(1),
            None if cap >= hard_cap => return hard_cap,
            None => cap = (cap * 2).max(cap + 16),
        }
    }
}

/// Draws a count from the displaced thermal law: the thermal part enters as a
/// complex Gaussian smear of the displaced amplitude (Gaussian
/// P-representation), then the count is Poisson in the smeared energy.
pub fn sample_count<R: Rng + ?Sized>(
    gamma_re: f64,
    gamma_im: f64,
    i_t: f64,
    link: &LinkParams,
    rng: &mut R,
) -> u32 {
    let amp = (link.channel.path_loss_ip * i_t).sqrt() * link.source.mu;
    let mut re = amp * gamma_re - link.receiver.delta_mag * link.receiver.delta_phase.cos();
    let mut im = amp * gamma_im - link.receiver.delta_mag * link.receiver.delta_phase.sin();
    if link.receiver.thermal > 0.0 {
        let smear = Normal::new(0.0, (link.receiver.thermal / 2.0).sqrt()).expect("valid sigma");
        re += smear.sample(rng);
        im += smear.sample(rng);
    }
    let energy = re * re + im * im;
    if energy <= 0.0 {
        return 0;
    }
    Poisson::new(energy).expect("positive mean").sample(rng) as u32
}
