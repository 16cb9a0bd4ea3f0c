//! End-to-end Monte Carlo engine: accepted-symbol generation, fading blocks,
//! detector observations, decisions, and accepted-only QBER estimates.
//!
//! Trials are sharded into fixed-size chunks, each driven by its own
//! counter-derived random stream, and merged by exact integer summation, so
//! results are bit-identical for a given seed regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, Poisson};
use rand_pcg::Pcg64Mcg;

use crate::detect::{qmsd_block_argmax, BlockScratch, DecisionRegions};
use crate::error::{Error, Result};
use crate::likelihood::{LikelihoodTables, TableOpts, MAX_BLOCK_LEN};
use crate::link::LinkParams;
use crate::receiver::{count_pmf_into, pnr_pmf};
use crate::source::SourceParams;

/// How the fading realization is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Realization {
    /// One turbulence realization per L-symbol block (the block-fading model
    /// the sequence detector is built for).
    Block,
    /// A fresh realization per symbol; sensitivity mode.
    PerSymbol,
}

/// Which receiver chains to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchemeSet {
    pub hd: bool,
    pub qmld: bool,
    pub qmsd: bool,
}

impl SchemeSet {
    pub fn all() -> Self {
        SchemeSet { hd: true, qmld: true, qmsd: true }
    }

    fn pnr(&self) -> bool {
        self.qmld || self.qmsd
    }
}

/// Monte Carlo run configuration. `trials` counts accepted L-symbol blocks,
/// so the bit budget is `trials * block_len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub trials: u64,
    pub block_len: usize,
    pub seed: u64,
    pub schemes: SchemeSet,
    pub realization: Realization,
    /// Blocks per deterministic shard.
    pub shard_size: u64,
}

impl McConfig {
    pub fn new(trials: u64, block_len: usize, seed: u64) -> Result<Self> {
        if trials < 1 {
            return Err(Error::domain("trials must be >= 1".to_string()));
        }
        if block_len < 1 || block_len > MAX_BLOCK_LEN {
            return Err(Error::domain(format!(
                "block_len must be in 1..={MAX_BLOCK_LEN}, got {block_len}"
            )));
        }
        Ok(McConfig {
            trials,
            block_len,
            seed,
            schemes: SchemeSet::all(),
            realization: Realization::Block,
            shard_size: 4096,
        })
    }
}

/// Accepted-only QBER estimate with its uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QberEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_bits: u64,
    pub n_blocks: u64,
}

/// Per-scheme estimates of one run.
#[derive(Debug, Clone, Default)]
pub struct McRun {
    pub hd: Option<QberEstimate>,
    pub qmld: Option<QberEstimate>,
    pub qmsd: Option<QberEstimate>,
}

#[derive(Debug, Clone, Copy, Default)]
struct ErrAcc {
    err_bits: u64,
    /// Sum of squared per-block error counts, for the block-level variance.
    err_sq: u64,
}

impl ErrAcc {
    fn merge(&mut self, other: &ErrAcc) {
        self.err_bits += other.err_bits;
        self.err_sq += other.err_sq;
    }

    fn estimate(&self, cfg: &McConfig) -> QberEstimate {
        let n_blocks = cfg.trials;
        let block_len = cfg.block_len as f64;
        let n_bits = cfg.trials * cfg.block_len as u64;
        let mean = self.err_bits as f64 / n_bits as f64;
        let std_error = match cfg.realization {
            // bits within a block share a fading draw: estimate the spread of
            // per-block error fractions
            Realization::Block if n_blocks >= 2 => {
                let nf = n_blocks as f64;
                let sum_f = self.err_bits as f64 / block_len;
                let sum_f2 = self.err_sq as f64 / (block_len * block_len);
                let var = ((sum_f2 - sum_f * sum_f / nf) / (nf - 1.0)).max(0.0);
                (var / nf).sqrt()
            }
            _ => (mean * (1.0 - mean) / n_bits as f64).sqrt(),
        };
        QberEstimate { mean, std_error, n_bits, n_blocks }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn shard_rng(seed: u64, shard: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(splitmix64(seed ^ splitmix64(shard.wrapping_add(1))))
}

#[derive(Default, Clone)]
struct ShardOut {
    hd: ErrAcc,
    qmld: ErrAcc,
    qmsd: ErrAcc,
}

/// Runs the Monte Carlo QBER estimation for the configured schemes. Builds a
/// decision-grade likelihood table internally when a photon-counting scheme
/// is requested; pass one explicitly to amortize it across runs.
pub fn run_mc_qber(cfg: &McConfig, link: &LinkParams) -> Result<McRun> {
    let tables = if cfg.schemes.pnr() {
        Some(LikelihoodTables::build(link, &TableOpts::coarse())?)
    } else {
        None
    };
    run_mc_qber_with(cfg, link, tables.as_ref(), cfg!(feature = "parallel"))
}

/// As [`run_mc_qber`], with an explicit decision table and parallelism switch
/// (the switch affects speed only, never results).
pub fn run_mc_qber_with(
    cfg: &McConfig,
    link: &LinkParams,
    tables: Option<&LikelihoodTables>,
    parallel: bool,
) -> Result<McRun> {
    if cfg.trials < 1 || cfg.block_len < 1 || cfg.block_len > MAX_BLOCK_LEN {
        return Err(Error::domain("invalid Monte Carlo configuration".to_string()));
    }
    if cfg.schemes.pnr() && tables.is_none() {
        return Err(Error::domain(
            "photon-counting schemes need a likelihood table".to_string(),
        ));
    }
    let regions = tables.map(DecisionRegions::from_tables);

    let n_shards = cfg.trials.div_ceil(cfg.shard_size);
    let run_shard = |shard: u64| -> ShardOut {
        let blocks =
            (cfg.trials - shard * cfg.shard_size).min(cfg.shard_size);
        simulate_shard(cfg, link, tables, regions.as_ref(), shard, blocks)
    };

    let outs: Vec<ShardOut> = if parallel {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..n_shards).into_par_iter().map(run_shard).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n_shards).map(run_shard).collect()
        }
    } else {
        (0..n_shards).map(run_shard).collect()
    };

    let mut total = ShardOut::default();
    for o in &outs {
        total.hd.merge(&o.hd);
        total.qmld.merge(&o.qmld);
        total.qmsd.merge(&o.qmsd);
    }

    Ok(McRun {
        hd: cfg.schemes.hd.then(|| total.hd.estimate(cfg)),
        qmld: cfg.schemes.qmld.then(|| total.qmld.estimate(cfg)),
        qmsd: cfg.schemes.qmsd.then(|| total.qmsd.estimate(cfg)),
    })
}

fn simulate_shard(
    cfg: &McConfig,
    link: &LinkParams,
    tables: Option<&LikelihoodTables>,
    regions: Option<&DecisionRegions>,
    shard: u64,
    blocks: u64,
) -> ShardOut {
    let mut rng = shard_rng(cfg.seed, shard);
    let block_len = cfg.block_len;
    let mut out = ShardOut::default();
    let mut scratch = BlockScratch::default();
    let mut bits = vec![0u8; block_len];
    let mut rows = vec![0usize; block_len];
    let hd_noise = Normal::new(0.0, link.receiver.sigma_h).expect("valid sigma");
    let mu = link.source.mu;
    let i_p = link.channel.path_loss_ip;
    let pnr = cfg.schemes.pnr();

    for _ in 0..blocks {
        let i_t_block = match cfg.realization {
            Realization::Block => link.channel.turbulence.sample(&mut rng),
            Realization::PerSymbol => 0.0,
        };
        let mut hd_errs = 0u64;
        let mut qmld_errs = 0u64;
        for l in 0..block_len {
            let i_t = match cfg.realization {
                Realization::Block => i_t_block,
                Realization::PerSymbol => link.channel.turbulence.sample(&mut rng),
            };
            let sample = link.source.sample_accepted(&mut rng);
            bits[l] = sample.bit;
            if pnr {
                let z = crate::receiver::sample_count(
                    sample.gamma_re,
                    sample.gamma_im,
                    i_t,
                    link,
                    &mut rng,
                );
                let tab = tables.expect("checked above");
                rows[l] = tab.row_for_count(z as u64);
                if cfg.schemes.qmld {
                    let decided = regions.expect("built above").decide(z as u64);
                    qmld_errs += u64::from(decided != sample.bit);
                }
            }
            if cfg.schemes.hd {
                let y = (i_p * i_t).sqrt() * mu * sample.gamma_re + hd_noise.sample(&mut rng);
                hd_errs += u64::from(crate::detect::hd_decide(y) != sample.bit);
            }
        }
        if cfg.schemes.hd {
            out.hd.err_bits += hd_errs;
            out.hd.err_sq += hd_errs * hd_errs;
        }
        if cfg.schemes.qmld {
            out.qmld.err_bits += qmld_errs;
            out.qmld.err_sq += qmld_errs * qmld_errs;
        }
        if cfg.schemes.qmsd {
            let tab = tables.expect("checked above");
            let lex = qmsd_block_argmax(tab, &rows, &mut scratch, false);
            let mut d_h = 0u64;
            for (l, bit) in bits.iter().enumerate() {
                let decided = ((lex >> (block_len - 1 - l)) & 1) as u8;
                d_h += u64::from(decided != *bit);
            }
            out.qmsd.err_bits += d_h;
            out.qmsd.err_sq += d_h * d_h;
        }
    }
    out
}

/// Outcome of one distribution check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Report of the sampling-distribution validation gates.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, name: impl Into<String>, statistic: f64, threshold: f64) {
        let name = name.into();
        self.checks.push(CheckOutcome { pass: statistic < threshold, name, statistic, threshold });
    }
}

/// Draws one count directly from the displaced thermal law at a given energy.
fn sample_count_at<R: Rng + ?Sized>(s_energy: f64, n_thermal: f64, rng: &mut R) -> usize {
    let mut re = s_energy.sqrt();
    let mut im = 0.0;
    if n_thermal > 0.0 {
        let smear = Normal::new(0.0, (n_thermal / 2.0).sqrt()).expect("valid sigma");
        re += smear.sample(rng);
        im += smear.sample(rng);
    }
    let energy = re * re + im * im;
    if energy <= 0.0 {
        return 0;
    }
    Poisson::new(energy).expect("positive mean").sample(rng) as usize
}

/// Validates the count sampler against the analytic count law (total
/// variation over a small energy/noise grid), the accepted-source radial law
/// (Kolmogorov–Smirnov), and the empirical acceptance rate against its closed
/// form. Thresholds are relaxed threefold below 1e5 samples.
pub fn validate_pmf(link: &LinkParams, n_samples: u64, seed: u64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let relax = if n_samples < 100_000 { 3.0 } else { 1.0 };
    let mut rng = shard_rng(seed, 0xC0DE);

    // count-law TV on an (S, N) grid
    for (s_energy, n_thermal) in
        [(0.0, 1.0), (0.5, 0.001), (1.0, 0.5), (2.0, 0.5), (5.0, 1.0), (0.5, 1.0)]
    {
        let cap = crate::receiver::adaptive_z_cap(s_energy, n_thermal, 512) + 8;
        let mut hist = vec![0u64; cap + 1];
        let mut overflow = 0u64;
        for _ in 0..n_samples {
            let z = sample_count_at(s_energy, n_thermal, &mut rng);
            if z <= cap {
                hist[z] += 1;
            } else {
                overflow += 1;
            }
        }
        let mut pmf = vec![0.0; cap + 1];
        count_pmf_into(s_energy, n_thermal, &mut pmf);
        let mut tv: f64 = hist
            .iter()
            .zip(pmf.iter())
            .map(|(h, p)| (*h as f64 / n_samples as f64 - p).abs())
            .sum();
        let tail: f64 = 1.0 - pmf.iter().sum::<f64>();
        tv = 0.5 * (tv + (overflow as f64 / n_samples as f64 - tail.max(0.0)).abs());
        report.push(
            format!("count-law TV at S={s_energy}, N={n_thermal}"),
            tv,
            5e-3 * relax,
        );
    }

    // accepted-source radial KS
    let n_ks = n_samples.min(100_000) as usize;
    let mut radii: Vec<f64> = (0..n_ks)
        .map(|_| {
            let s = link.source.sample_accepted(&mut rng);
            s.gamma_re * s.gamma_re + s.gamma_im * s.gamma_im
        })
        .collect();
    radii.sort_by(|a, b| a.total_cmp(b));
    let mut ks: f64 = 0.0;
    for (i, u) in radii.iter().enumerate() {
        let cdf = link.source.accepted_radius_sq_cdf(*u);
        ks = ks
            .max((cdf - i as f64 / n_ks as f64).abs())
            .max(((i + 1) as f64 / n_ks as f64 - cdf).abs());
    }
    report.push(
        format!("accepted radial KS (m={})", link.source.subtracted),
        ks,
        0.01 * relax,
    );

    // acceptance rate against the closed form, in standard-error units
    let p_acc = link.source.acceptance_probability();
    let accepted = count_accepted(&link.source, n_samples, &mut rng);
    let rate = accepted as f64 / n_samples as f64;
    let sd = (p_acc * (1.0 - p_acc) / n_samples as f64).sqrt();
    report.push(
        format!("acceptance rate {rate:.6} vs {p_acc:.6} (sigma units)"),
        (rate - p_acc).abs() / sd,
        3.0,
    );

    report
}

fn count_accepted<R: Rng + ?Sized>(source: &SourceParams, attempts: u64, rng: &mut R) -> u64 {
    let sigma = ((source.v_t + 1.0) / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut accepted = 0u64;
    for _ in 0..attempts {
        let x: f64 = normal.sample(rng);
        let p: f64 = normal.sample(rng);
        if rng.gen::<f64>() < source.vps_filter(x, p) {
            accepted += 1;
        }
    }
    accepted
}

/// Scalar count pmf re-export used by the validation CLI.
pub fn count_pmf(z: usize, s_energy: f64, n_thermal: f64) -> f64 {
    pnr_pmf(z, s_energy, n_thermal)
}
