//! Bit-conditioned and CSI-free count likelihoods and the multiple-symbol
//! block metric.
//!
//! Every quantity has two independent evaluation routes. The quadrature route
//! integrates the defining expressions directly (polar integral over the
//! accepted source, then a fading average on cached nodes) and is the
//! production path. The series route expands the Laguerre polynomial and the
//! angular exponential into half-range cosine moments; it exists to
//! cross-check the quadrature path and to feed the Tricomi-form block metric.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::rc::Rc;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::link::LinkParams;
use crate::receiver::{count_pmf_into, N_FLOOR};
use crate::specfun::quad::{integrate_vec_finite, k15_nodes};
use crate::specfun::{
    half_range_moment, integrate_semi_infinite, ln_tricomi_u, CompensatedSum, QuadratureSpec,
};

/// Truncation control for the angular-moment series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    /// Relative term cutoff for the j-series.
    pub eps_series: f64,
    /// Hard cap on the j-series length.
    pub j_max: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        SeriesControl { eps_series: 1e-12, j_max: 200 }
    }
}

impl SeriesControl {
    pub fn new(eps_series: f64, j_max: usize) -> Result<Self> {
        if !(eps_series > 0.0) {
            return Err(Error::domain("eps_series must be > 0".to_string()));
        }
        if j_max < 1 {
            return Err(Error::domain("j_max must be >= 1".to_string()));
        }
        Ok(SeriesControl { eps_series, j_max })
    }
}

/// Evaluation route for the conditional likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondMethod {
    Series,
    Quadrature,
}

/// Evaluation route for the CSI-free likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiFreeMethod {
    SemiClosed,
    Quadrature,
}

/// Evaluation route for the block metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricMethod {
    Quadrature,
    Tricomi,
}

/// Longest supported detection block.
pub const MAX_BLOCK_LEN: usize = 12;

/// Tricomi-route budget: beyond this the multi-index sum blows up.
pub const TRICOMI_MAX_BLOCK: usize = 4;
pub const TRICOMI_MAX_COUNT: usize = 6;

fn legendre_pd(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// 32-point Gauss–Legendre rule on [-1, 1], computed once by Newton iteration.
fn gauss_legendre_32() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 32usize;
        let mut xs = vec![0.0; n];
        let mut ws = vec![0.0; n];
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..60 {
                let (p, dp) = legendre_pd(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_pd(n, x);
            xs[i] = x;
            ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (xs, ws)
    })
}

/// Shared per-point constants of the likelihood integrands.
struct CondCtx {
    m: u32,
    w: f64,
    n_thermal: f64,
    n1: f64,
    mu: f64,
    i_p: f64,
    delta: f64,
    phi_delta: f64,
    /// y^m / (m! pi (V_T + 1) P_acc(b)); equal for both bits.
    pref: f64,
}

impl CondCtx {
    fn new(link: &LinkParams) -> Self {
        let s = &link.source;
        let mut pref = 1.0 / (PI * (s.v_t + 1.0) * s.per_bit_acceptance(0));
        for k in 1..=s.subtracted {
            pref *= s.filter_rate / k as f64;
        }
        CondCtx {
            m: s.subtracted,
            w: s.gauss_decay,
            n_thermal: link.receiver.thermal,
            n1: link.receiver.thermal + 1.0,
            mu: s.mu,
            i_p: link.channel.path_loss_ip,
            delta: link.receiver.delta_mag,
            phi_delta: link.receiver.delta_phase,
            pref,
        }
    }

    /// Angular average of the count pmf vector at radius `r`, over the
    /// half-plane of bit `b`. Fixed Gauss–Legendre order; the integrand is an
    /// entire function of phi with moderate frequency content.
    fn angular(&self, bit: u8, r: f64, i_t: f64, out: &mut [f64], buf: &mut [f64]) {
        let p_sig = self.i_p * i_t * self.mu * self.mu * r * r;
        let c_r = 2.0 * self.delta * self.mu * (self.i_p * i_t).sqrt() * r;
        let d2 = self.delta * self.delta;
        let (xs, ws) = gauss_legendre_32();
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.phi_delta == 0.0 {
            // symmetric halves: b=0 over [0, pi/2], b=1 over [pi/2, pi], each doubled
            let (lo, hi) = if bit == 0 { (0.0, FRAC_PI_2) } else { (FRAC_PI_2, PI) };
            let center = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            for (x, wgt) in xs.iter().zip(ws.iter()) {
                let phi = center + half * x;
                let s_energy = p_sig + d2 - c_r * phi.cos();
                count_pmf_into(s_energy.max(0.0), self.n_thermal, buf);
                let wq = 2.0 * wgt * half;
                for (o, v) in out.iter_mut().zip(buf.iter()) {
                    *o += wq * v;
                }
            }
        } else {
            let (lo, hi) = if bit == 0 {
                (-FRAC_PI_2, FRAC_PI_2)
            } else {
                (FRAC_PI_2, 3.0 * FRAC_PI_2)
            };
            let center = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            for (x, wgt) in xs.iter().zip(ws.iter()) {
                let phi = center + half * x;
                let s_energy = p_sig + d2 - c_r * (phi - self.phi_delta).cos();
                count_pmf_into(s_energy.max(0.0), self.n_thermal, buf);
                let wq = wgt * half;
                for (o, v) in out.iter_mut().zip(buf.iter()) {
                    *o += wq * v;
                }
            }
        }
    }
}

/// Pr(z | b, I_t) for z = 0..=z_cap by direct integration of the polar form:
/// radial adaptive quadrature of the accepted density times the angular
/// average of the count law.
fn cond_all_quadrature(
    link: &LinkParams,
    bit: u8,
    i_t: f64,
    z_cap: usize,
    rel_tol: f64,
) -> Result<Vec<f64>> {
    let ctx = CondCtx::new(link);
    let dim = z_cap + 1;
    let mut pmf_buf = vec![0.0; dim];
    let two_m1 = 2.0 * ctx.m as f64 + 1.0;
    let spec = QuadratureSpec { rel_tol, abs_tol: 1e-280, max_subdivisions: 2000 };
    let vq = integrate_vec_finite(
        |t, out| {
            let om = 1.0 - t;
            if om <= 0.0 {
                out.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            let r = t / om;
            let ln_rad = two_m1 * r.ln() - ctx.w * r * r;
            if !ln_rad.is_finite() || ln_rad < -700.0 {
                out.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            let scale = ctx.pref * ln_rad.exp() / (om * om);
            ctx.angular(bit, r, i_t, out, &mut pmf_buf);
            out.iter_mut().for_each(|v| *v *= scale);
        },
        0.0,
        1.0,
        dim,
        &spec,
    )?;
    Ok(vq.values)
}

/// Conditional count likelihood Pr(z | b, I_t, delta).
pub fn cond_likelihood(
    z: usize,
    bit: u8,
    i_t: f64,
    link: &LinkParams,
    method: CondMethod,
) -> Result<f64> {
    cond_likelihood_with(z, bit, i_t, link, method, &SeriesControl::default())
}

/// As [`cond_likelihood`] with explicit series truncation control.
pub fn cond_likelihood_with(
    z: usize,
    bit: u8,
    i_t: f64,
    link: &LinkParams,
    method: CondMethod,
    ctl: &SeriesControl,
) -> Result<f64> {
    if bit > 1 {
        return Err(Error::domain("bit must be 0 or 1".to_string()));
    }
    if !(i_t >= 0.0) || !i_t.is_finite() {
        return Err(Error::domain(format!("i_t must be finite and >= 0, got {i_t}")));
    }
    match method {
        CondMethod::Quadrature => {
            let all = cond_all_quadrature(link, bit, i_t, z, 1e-10)?;
            Ok(all[z])
        }
        CondMethod::Series => cond_series(z, bit, i_t, link, ctl),
    }
}

/// Half-range moments M_0..=M_qmax.
fn moment_table(q_max: usize) -> Vec<f64> {
    (0..=q_max as u32).map(half_range_moment).collect()
}

/// Binomial coefficient table rows 0..=n.
fn binom_rows(n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut row = vec![0.0; k + 1];
        row[0] = 1.0;
        for j in 1..=k {
            row[j] = row[j - 1] * (k - j + 1) as f64 / j as f64;
        }
        rows.push(row);
    }
    rows
}

/// Series route for the conditional likelihood: expand the Laguerre
/// polynomial (k-sum), the displaced-energy power (n-sum), and the angular
/// exponential (j-series over half-range moments), then integrate the radial
/// factor. Requires the displacement phase aligned with the in-phase axis.
fn cond_series(
    z: usize,
    bit: u8,
    i_t: f64,
    link: &LinkParams,
    ctl: &SeriesControl,
) -> Result<f64> {
    if link.receiver.delta_phase != 0.0 {
        return Err(Error::domain(
            "series path requires delta_phase = 0; use the quadrature path".to_string(),
        ));
    }
    let ctx = CondCtx::new(link);
    let poisson_limit = ctx.n_thermal <= N_FLOOR;
    let n1 = if poisson_limit { 1.0 } else { ctx.n1 };
    let zf = z as f64;

    // log-space k coefficients pair with the growing angular sums
    let ln_nn1 = if poisson_limit { 0.0 } else { (ctx.n_thermal * ctx.n1).ln() };
    let binom = binom_rows(z);
    let mut ln_coef = vec![f64::NEG_INFINITY; z + 1];
    if poisson_limit {
        ln_coef[z] = -libm::lgamma(zf + 1.0);
    } else {
        for k in 0..=z {
            let kf = k as f64;
            ln_coef[k] = zf * ctx.n_thermal.ln() - (zf + 1.0) * ctx.n1.ln() + binom[z][k].ln()
                - libm::lgamma(kf + 1.0)
                - kf * ln_nn1;
        }
    }

    let moments = moment_table(z + ctl.j_max + 1);
    let p_sig_unit = ctx.i_p * i_t * ctx.mu * ctx.mu;
    let c_unit = 2.0 * ctx.delta * ctx.mu * (ctx.i_p * i_t).sqrt();
    let d2 = ctx.delta * ctx.delta;
    let two_m1 = 2.0 * ctx.m as f64 + 1.0;
    let mut fail: Option<Error> = None;
    let mut a_pow = vec![0.0; z + 1];
    let mut c_pow = vec![0.0; z + 1];
    let mut bvals = vec![0.0; z + 1];

    let spec = QuadratureSpec { rel_tol: 1e-10, abs_tol: 1e-280, max_subdivisions: 2000 };
    let result = integrate_semi_infinite(
        |r| {
            if fail.is_some() {
                return 0.0;
            }
            let a = p_sig_unit * r * r + d2;
            let c = c_unit * r;
            let eta = c / n1;
            let ln_rad = two_m1 * r.ln() - ctx.w * r * r - a / n1;
            if !ln_rad.is_finite() || ln_rad < -700.0 {
                return 0.0;
            }

            // B_n^{(b)}(eta) for n = 0..=z via the shared j-series
            let mut acc: Vec<CompensatedSum> = vec![CompensatedSum::new(); z + 1];
            let mut t_j = 1.0f64; // eta^j / j!
            let mut max_term = 0.0f64;
            let mut converged = false;
            for j in 0..=ctl.j_max {
                if j > 0 {
                    t_j *= eta / j as f64;
                    if t_j == 0.0 {
                        converged = true;
                        break;
                    }
                }
                let s_parity = if bit == 1 && j % 2 == 1 { -1.0 } else { 1.0 };
                for n in 0..=z {
                    // S_b(n, j): 1 for b=0, (-1)^(n+j) for b=1
                    let sign = if bit == 1 && n % 2 == 1 { -s_parity } else { s_parity };
                    acc[n].add(sign * t_j * moments[n + j]);
                }
                let mag = t_j.abs() * moments[0];
                max_term = max_term.max(mag);
                if j as f64 > eta.abs() && mag < ctl.eps_series * max_term.max(f64::MIN_POSITIVE) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                fail = Some(Error::Numeric {
                    what: "angular j-series did not converge before j_max; use the quadrature path"
                        .to_string(),
                    best: f64::NAN,
                    bound: t_j.abs(),
                });
                return 0.0;
            }
            for n in 0..=z {
                bvals[n] = acc[n].value();
            }

            a_pow[0] = 1.0;
            c_pow[0] = 1.0;
            for idx in 1..=z {
                a_pow[idx] = a_pow[idx - 1] * a;
                c_pow[idx] = c_pow[idx - 1] * c;
            }

            let mut total = CompensatedSum::new();
            for k in 0..=z {
                if ln_coef[k] == f64::NEG_INFINITY {
                    continue;
                }
                let mut inner = CompensatedSum::new();
                for n in 0..=k {
                    let sign = if n % 2 == 1 { -1.0 } else { 1.0 };
                    inner.add(sign * binom[k][n] * a_pow[k - n] * c_pow[n] * bvals[n]);
                }
                let e = ln_coef[k] + ln_rad;
                if e > -700.0 {
                    total.add(e.exp() * inner.value());
                }
            }
            ctx.pref * total.value()
        },
        &spec,
    )?;
    if let Some(err) = fail {
        return Err(err);
    }
    // cancellation can leave a tiny negative residue near zero
    Ok(result.max(0.0))
}

/// Tolerances governing a [`LikelihoodTables`] build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableOpts {
    /// L1 tolerance of the fading-average quadrature.
    pub fading_rel_tol: f64,
    /// L1 tolerance of the radial quadrature inside each conditional.
    pub cond_rel_tol: f64,
    /// Probability mass allowed outside the count cutoff.
    pub z_mass_eps: f64,
}

impl TableOpts {
    /// Production accuracy for analytic QBER evaluation.
    pub fn fine() -> Self {
        TableOpts { fading_rel_tol: 1e-9, cond_rel_tol: 1e-10, z_mass_eps: 1e-9 }
    }

    /// Decision-grade accuracy for Monte Carlo detection metrics.
    pub fn coarse() -> Self {
        TableOpts { fading_rel_tol: 1e-6, cond_rel_tol: 1e-8, z_mass_eps: 1e-9 }
    }

    /// Cheap evaluations inside the displacement search.
    pub fn optimizer() -> Self {
        TableOpts { fading_rel_tol: 1e-7, cond_rel_tol: 1e-7, z_mass_eps: 1e-7 }
    }
}

/// Conditional likelihoods cached on the fading quadrature nodes, plus the
/// CSI-free marginals computed from the same nodes. The last cached row per
/// bit is the tail mass beyond the count cutoff, so block metrics remain
/// exact maximum-likelihood statistics for the coarsened event `z > z_cap`.
#[derive(Debug, Clone)]
pub struct LikelihoodTables {
    link: LinkParams,
    theta: u32,
    lambda: f64,
    z_cap: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    cond: [Vec<f64>; 2],
    marginal: [Vec<f64>; 2],
    tail: [f64; 2],
}

impl LikelihoodTables {
    pub fn build(link: &LinkParams, opts: &TableOpts) -> Result<Self> {
        let (theta, lambda) = link.erlang()?;

        // Cutoff estimate from the mean displaced energy of the accepted
        // ensemble; the build loop below verifies the captured mass and
        // extends the cutoff if the fading and radial tails need more.
        let s_mean = link.channel.path_loss_ip
            * link.source.mu
            * link.source.mu
            * (link.source.subtracted as f64 + 1.0)
            / link.source.gauss_decay
            + link.receiver.delta_mag * link.receiver.delta_mag;
        let scale = s_mean + link.receiver.thermal;
        let mut z_cap = ((scale + 12.0 * (scale + 1.0).sqrt()).ceil() as usize + 16)
            .min(link.receiver.z_hard_cap);

        let mut table = Self::build_with_cap(link, opts, theta, lambda, z_cap)?;
        for _round in 0..6 {
            let worst_tail = table.tail[0].max(table.tail[1]);
            if worst_tail <= opts.z_mass_eps || z_cap >= link.receiver.z_hard_cap {
                break;
            }
            z_cap = (z_cap * 3 / 2 + 8).min(link.receiver.z_hard_cap);
            table = Self::build_with_cap(link, opts, theta, lambda, z_cap)?;
        }
        let worst_tail = table.tail[0].max(table.tail[1]);
        if worst_tail > opts.z_mass_eps.max(1e-8) {
            return Err(Error::Numeric {
                what: "count cutoff did not capture the required probability mass".to_string(),
                best: z_cap as f64,
                bound: worst_tail,
            });
        }
        Ok(table)
    }

    fn build_with_cap(
        link: &LinkParams,
        opts: &TableOpts,
        theta: u32,
        lambda: f64,
        z_cap: usize,
    ) -> Result<Self> {
        let dim = z_cap + 1;
        let mut cache: HashMap<u64, Rc<(Vec<f64>, Vec<f64>)>> = HashMap::new();
        let mut fail: Option<Error> = None;

        let spec = QuadratureSpec {
            rel_tol: opts.fading_rel_tol,
            abs_tol: 1e-280,
            max_subdivisions: 2000,
        };
        let vq = integrate_vec_finite(
            |t, out| {
                let om = 1.0 - t;
                if om <= 0.0 {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
                let i_t = t / om;
                let pdf = crate::channel::erlang_pdf(i_t, theta, lambda);
                if pdf == 0.0 {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
                let jac = pdf / (om * om);
                let pair = eval_pair_cached(link, z_cap, opts.cond_rel_tol, i_t, &mut cache, &mut fail);
                for z in 0..dim {
                    out[z] = jac * pair.0[z];
                    out[dim + z] = jac * pair.1[z];
                }
            },
            0.0,
            1.0,
            2 * dim,
            &spec,
        )?;
        if let Some(e) = fail {
            return Err(e);
        }

        // Tabulate on the final partition; the cache already holds every node.
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (a, b) in &vq.partition {
            for (t, w_t) in k15_nodes(*a, *b) {
                let om = 1.0 - t;
                if om <= 0.0 {
                    continue;
                }
                let i_t = t / om;
                let pdf = crate::channel::erlang_pdf(i_t, theta, lambda);
                if pdf == 0.0 {
                    continue;
                }
                nodes.push(i_t);
                weights.push(w_t * pdf / (om * om));
            }
        }

        let n_nodes = nodes.len();
        let mut cond = [vec![0.0; (dim + 1) * n_nodes], vec![0.0; (dim + 1) * n_nodes]];
        for (i, i_t) in nodes.iter().enumerate() {
            let pair = eval_pair_cached(link, z_cap, opts.cond_rel_tol, *i_t, &mut cache, &mut fail);
            let mut mass = [CompensatedSum::new(), CompensatedSum::new()];
            for z in 0..dim {
                cond[0][z * n_nodes + i] = pair.0[z];
                cond[1][z * n_nodes + i] = pair.1[z];
                mass[0].add(pair.0[z]);
                mass[1].add(pair.1[z]);
            }
            cond[0][dim * n_nodes + i] = (1.0 - mass[0].value()).max(0.0);
            cond[1][dim * n_nodes + i] = (1.0 - mass[1].value()).max(0.0);
        }
        if let Some(e) = fail {
            return Err(e);
        }

        let mut marginal = [vec![0.0; dim], vec![0.0; dim]];
        let mut tail = [0.0; 2];
        for bit in 0..2usize {
            let mut mass = CompensatedSum::new();
            for z in 0..dim {
                let mut acc = CompensatedSum::new();
                for i in 0..n_nodes {
                    acc.add(weights[i] * cond[bit][z * n_nodes + i]);
                }
                marginal[bit][z] = acc.value().max(0.0);
                mass.add(marginal[bit][z]);
            }
            tail[bit] = (1.0 - mass.value()).max(0.0);
        }

        Ok(LikelihoodTables {
            link: *link,
            theta,
            lambda,
            z_cap,
            nodes,
            weights,
            cond,
            marginal,
            tail,
        })
    }

    pub fn link(&self) -> &LinkParams {
        &self.link
    }

    pub fn z_cap(&self) -> usize {
        self.z_cap
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn erlang(&self) -> (u32, f64) {
        (self.theta, self.lambda)
    }

    /// CSI-free marginal Pr(z | b, delta) from the cached fading nodes.
    pub fn csi_free(&self, z: usize, bit: u8) -> f64 {
        self.marginal[bit as usize][z]
    }

    /// Marginal probability mass beyond the count cutoff.
    pub fn tail_mass(&self, bit: u8) -> f64 {
        self.tail[bit as usize]
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row of conditional likelihood values over the fading nodes; row
    /// `z_cap + 1` is the per-node tail mass for the event `z > z_cap`.
    pub(crate) fn cond_row(&self, bit: u8, row: usize) -> &[f64] {
        let n = self.nodes.len();
        &self.cond[bit as usize][row * n..(row + 1) * n]
    }

    /// Row index for an observed count, folding overflow into the tail row.
    pub(crate) fn row_for_count(&self, z: u64) -> usize {
        (z as usize).min(self.z_cap + 1)
    }

    /// Known-fading symbol error bound: the QBER of a maximum-likelihood
    /// decision that sees the fading realization, averaged over fading. No
    /// CSI-free detector can beat it; the gap to the symbol-wise QBER is the
    /// room block detection can recover.
    pub fn genie_qber(&self) -> f64 {
        let n = self.nodes.len();
        let mut acc = CompensatedSum::new();
        for i in 0..n {
            let mut err = 0.0;
            for z in 0..=self.z_cap + 1 {
                err += self.cond[0][z * n + i].min(self.cond[1][z * n + i]);
            }
            acc.add(self.weights[i] * err);
        }
        (0.5 * acc.value()).min(0.5)
    }
}

/// Memoized pair of conditional vectors (bit 0, bit 1) at one fading node.
fn eval_pair_cached(
    link: &LinkParams,
    z_cap: usize,
    cond_rel_tol: f64,
    i_t: f64,
    cache: &mut HashMap<u64, Rc<(Vec<f64>, Vec<f64>)>>,
    fail: &mut Option<Error>,
) -> Rc<(Vec<f64>, Vec<f64>)> {
    if let Some(hit) = cache.get(&i_t.to_bits()) {
        return hit.clone();
    }
    let pair = match (
        cond_all_quadrature(link, 0, i_t, z_cap, cond_rel_tol),
        cond_all_quadrature(link, 1, i_t, z_cap, cond_rel_tol),
    ) {
        (Ok(c0), Ok(c1)) => Rc::new((c0, c1)),
        (Err(e), _) | (_, Err(e)) => {
            fail.get_or_insert(e);
            Rc::new((vec![0.0; z_cap + 1], vec![0.0; z_cap + 1]))
        }
    };
    cache.insert(i_t.to_bits(), pair.clone());
    pair
}

/// CSI-free likelihood Pr(z | b, delta).
pub fn csi_free_likelihood(
    z: usize,
    bit: u8,
    link: &LinkParams,
    method: CsiFreeMethod,
) -> Result<f64> {
    match method {
        CsiFreeMethod::Quadrature => {
            let tables = LikelihoodTables::build(link, &TableOpts::fine())?;
            if z > tables.z_cap() {
                return Ok(0.0);
            }
            Ok(tables.csi_free(z, bit))
        }
        CsiFreeMethod::SemiClosed => csi_free_semi_closed(z, bit, link, &SeriesControl::default()),
    }
}

/// Aggregated expansion coefficients for one (bit, count) pair.
///
/// Each elementary term of the four-fold expansion carries a fading power
/// `I_t^s` and a radial exponent `tau = s + m + 1` with `2s = 2i + n + j`, so
/// the tensor collapses to a vector indexed by `2s`. Entry `coef[2s]` sums
/// every term with that exponent, including the K-prefactor.
pub(crate) fn xi_coefficients(
    z: usize,
    bit: u8,
    link: &LinkParams,
    ctl: &SeriesControl,
) -> Result<Vec<f64>> {
    if link.receiver.delta_phase != 0.0 {
        return Err(Error::domain(
            "semi-closed forms require delta_phase = 0".to_string(),
        ));
    }
    let ctx = CondCtx::new(link);
    let poisson_limit = ctx.n_thermal <= N_FLOOR;
    let n1 = if poisson_limit { 1.0 } else { ctx.n1 };
    let omega = 2.0 * ctx.delta * ctx.mu * ctx.i_p.sqrt();
    let rho = omega / n1;
    let ip_mu2 = ctx.i_p * ctx.mu * ctx.mu;
    let d2 = ctx.delta * ctx.delta;
    let zf = z as f64;

    let binom = binom_rows(z);
    let moments = moment_table(z + ctl.j_max + 1);
    let base_pref = ctx.pref.ln() - d2 / n1;

    // growth proxy for the radial integral paired with exponent s: the
    // chi -> 0 bound (1/2) Gamma(theta+s) lambda^-(theta+s) Gamma(s+m+1) w^-(s+m+1),
    // an upper envelope, so truncation on coefficient * proxy is conservative
    let (theta, lambda) = link.erlang()?;
    let ln_w = link.source.gauss_decay.ln();
    let m_f = link.source.subtracted as f64;
    let radial_growth = move |s: f64| -> f64 {
        libm::lgamma(theta as f64 + s) - (theta as f64 + s) * lambda.ln()
            + libm::lgamma(s + m_f + 1.0)
            - (s + m_f + 1.0) * ln_w
    };

    let mut buckets: Vec<CompensatedSum> = Vec::new();
    let mut push = |idx: usize, val: f64| {
        if buckets.len() <= idx {
            buckets.resize(idx + 1, CompensatedSum::new());
        }
        buckets[idx].add(val);
    };

    let k_range: Vec<usize> = if poisson_limit { vec![z] } else { (0..=z).collect() };
    for &k in &k_range {
        let kf = k as f64;
        let ln_k = if poisson_limit {
            base_pref - libm::lgamma(zf + 1.0)
        } else {
            base_pref + zf * ctx.n_thermal.ln() - (zf + 1.0) * ctx.n1.ln() + binom[z][k].ln()
                - libm::lgamma(kf + 1.0)
                - kf * (ctx.n_thermal * ctx.n1).ln()
        };
        for n in 0..=k {
            if omega == 0.0 && n > 0 {
                break;
            }
            let ln_n = ln_k + binom[k][n].ln() + if n > 0 { n as f64 * omega.ln() } else { 0.0 };
            let sign_n = if n % 2 == 1 { -1.0 } else { 1.0 };
            for i in 0..=(k - n) {
                let pow_d = k - n - i;
                if d2 == 0.0 && pow_d > 0 {
                    continue;
                }
                if ip_mu2 == 0.0 && i > 0 {
                    continue;
                }
                let ln_i = ln_n
                    + binom[k - n][i].ln()
                    + if pow_d > 0 { pow_d as f64 * d2.ln() } else { 0.0 }
                    + if i > 0 { i as f64 * ip_mu2.ln() } else { 0.0 };
                // j-series; convergence is judged on the term's eventual
                // contribution, coefficient times the radial growth envelope
                let mut max_contrib = f64::NEG_INFINITY;
                let mut converged = false;
                for j in 0..=ctl.j_max {
                    let ln_j = ln_i
                        + if j > 0 { j as f64 * rho.ln() } else { 0.0 }
                        - libm::lgamma(j as f64 + 1.0)
                        + moments[n + j].ln();
                    let s_b = if bit == 1 && (n + j) % 2 == 1 { -1.0 } else { 1.0 };
                    push(2 * i + n + j, sign_n * s_b * ln_j.exp());
                    let s = i as f64 + (n + j) as f64 / 2.0;
                    let contrib = ln_j + radial_growth(s);
                    max_contrib = max_contrib.max(contrib);
                    if rho == 0.0 {
                        converged = true;
                        break;
                    }
                    if (j as f64) > rho && contrib < max_contrib + ctl.eps_series.ln() {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::Numeric {
                        what: "coefficient j-series did not converge before j_max".to_string(),
                        best: f64::NAN,
                        bound: f64::NAN,
                    });
                }
            }
        }
    }
    Ok(buckets.iter().map(|b| b.value()).collect())
}

/// Radial integral of the semi-closed CSI-free form, evaluated by adaptive
/// quadrature after the u = r^2 substitution:
/// `(1/2) Gamma(nu) int_0^inf u^(tau-1) e^(-w u) (lambda + chi u)^(-nu) du`
/// with `tau = m + i + (n+j)/2 + 1` and `nu = theta + i + (n+j)/2`.
pub fn radial_integral(_k: usize, n: usize, i: usize, j: usize, link: &LinkParams) -> Result<f64> {
    let (theta, lambda) = link.erlang()?;
    let s = i as f64 + (n + j) as f64 / 2.0;
    radial_integral_s(s, theta, lambda, link)
}

fn radial_integral_s(s: f64, theta: u32, lambda: f64, link: &LinkParams) -> Result<f64> {
    let tau = link.source.subtracted as f64 + s + 1.0;
    let nu = theta as f64 + s;
    let w = link.source.gauss_decay;
    let chi = link.chi();
    let spec = QuadratureSpec::with_rel_tol(1e-11);
    let integral = integrate_semi_infinite(
        |u: f64| {
            let lg = (tau - 1.0) * u.ln() - w * u - nu * (lambda + chi * u).ln();
            if !lg.is_finite() || lg < -700.0 {
                0.0
            } else {
                lg.exp()
            }
        },
        &spec,
    )?;
    Ok(0.5 * libm::lgamma(nu).exp() * integral)
}

/// Semi-closed CSI-free likelihood: aggregated expansion coefficients times
/// the radial integrals, summed with compensation.
fn csi_free_semi_closed(z: usize, bit: u8, link: &LinkParams, ctl: &SeriesControl) -> Result<f64> {
    let (theta, lambda) = link.erlang()?;
    let coefs = xi_coefficients(z, bit, link, ctl)?;
    let erlang_norm = (theta as f64 * lambda.ln() - libm::lgamma(theta as f64)).exp();
    let mut total = CompensatedSum::new();
    for (two_s, coef) in coefs.iter().enumerate() {
        if *coef == 0.0 {
            continue;
        }
        let s = two_s as f64 / 2.0;
        total.add(coef * erlang_norm * radial_integral_s(s, theta, lambda, link)?);
    }
    Ok(total.value().max(0.0))
}

/// Block-fading metric for a count sequence under a bit-sequence hypothesis.
pub fn qmsd_metric(
    z_vec: &[u64],
    b_vec: &[u8],
    tables: &LikelihoodTables,
    method: MetricMethod,
) -> Result<f64> {
    if z_vec.len() != b_vec.len() || z_vec.is_empty() {
        return Err(Error::domain("z and b sequences must have equal nonzero length".to_string()));
    }
    if z_vec.len() > MAX_BLOCK_LEN {
        return Err(Error::domain(format!(
            "block length {} exceeds the supported maximum {MAX_BLOCK_LEN}",
            z_vec.len()
        )));
    }
    match method {
        MetricMethod::Quadrature => {
            for &z in z_vec {
                if z as usize > tables.z_cap() {
                    return Err(Error::domain(format!(
                        "count {z} exceeds the table cutoff {}",
                        tables.z_cap()
                    )));
                }
            }
            let n = tables.n_nodes();
            let weights = tables.weights();
            let mut acc = CompensatedSum::new();
            for i in 0..n {
                let mut prod = weights[i];
                for (zl, bl) in z_vec.iter().zip(b_vec.iter()) {
                    prod *= tables.cond_row(*bl, *zl as usize)[i];
                }
                acc.add(prod);
            }
            Ok(acc.value().max(0.0))
        }
        MetricMethod::Tricomi => qmsd_metric_tricomi(z_vec, b_vec, tables),
    }
}

fn qmsd_metric_tricomi(z_vec: &[u64], b_vec: &[u8], tables: &LikelihoodTables) -> Result<f64> {
    let len = z_vec.len();
    if len > TRICOMI_MAX_BLOCK || z_vec.iter().any(|&z| z as usize > TRICOMI_MAX_COUNT) {
        return Err(Error::Refused(format!(
            "combinatorial blow-up: the Tricomi route supports L <= {TRICOMI_MAX_BLOCK} and \
             counts <= {TRICOMI_MAX_COUNT}; use the quadrature path"
        )));
    }
    let link = &tables.link;
    let chi = link.chi();
    if chi <= 0.0 {
        return Err(Error::domain(
            "Tricomi route requires a nonzero signal coupling chi; use the quadrature path"
                .to_string(),
        ));
    }
    let (theta, lambda) = (tables.theta, tables.lambda);
    let m = link.source.subtracted as f64;
    let ctl = SeriesControl::default();

    // per-symbol coefficient vectors including the Gamma(tau)/2 radial factor
    let mut per_symbol: Vec<Vec<f64>> = Vec::with_capacity(len);
    for (zl, bl) in z_vec.iter().zip(b_vec.iter()) {
        let mut coefs = xi_coefficients(*zl as usize, *bl, link, &ctl)?;
        for (two_s, c) in coefs.iter_mut().enumerate() {
            let tau = m + two_s as f64 / 2.0 + 1.0;
            *c *= (libm::lgamma(tau) - std::f64::consts::LN_2).exp();
        }
        per_symbol.push(coefs);
    }

    // L-fold convolution over the shared half-integer exponent grid
    let mut conv = per_symbol[0].clone();
    for sym in &per_symbol[1..] {
        let mut next = vec![0.0; conv.len() + sym.len() - 1];
        for (i, a) in conv.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in sym.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        conv = next;
    }

    let w = link.source.gauss_decay;
    let psi = lambda * w / chi;
    let sum_tau_offset = len as f64 * (m + 1.0);
    let norm = theta as f64 * lambda.ln() - libm::lgamma(theta as f64);
    let mut total = CompensatedSum::new();
    for (two_s, coef) in conv.iter().enumerate() {
        if *coef == 0.0 {
            continue;
        }
        let big_s = two_s as f64 / 2.0;
        let a = theta as f64 + big_s;
        let sum_tau = big_s + sum_tau_offset;
        let b = a + 1.0 - sum_tau;
        let ln_j = norm - a * chi.ln() + (a - sum_tau) * w.ln() + libm::lgamma(a)
            + ln_tricomi_u(a, b, psi)?;
        total.add(coef * ln_j.exp());
    }
    Ok(total.value().max(0.0))
}
