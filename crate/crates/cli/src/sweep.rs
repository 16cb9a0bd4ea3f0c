//! Parameter-sweep driver: expands the config grid, runs the analytic and
//! Monte Carlo paths per point, and collects rows for CSV and plotting.

use cvqkd_core::channel::{match_erlang, ChannelParams, TurbulenceModel};
use cvqkd_core::detect::{
    hd_qber_analytic, optimize_displacement, qmld_qber_analytic, qmsd_qber_analytic, Scheme,
};
use cvqkd_core::likelihood::{LikelihoodTables, TableOpts};
use cvqkd_core::mc::{run_mc_qber_with, McConfig, SchemeSet};
use cvqkd_core::receiver::ReceiverParams;
use cvqkd_core::source::SourceParams;
use cvqkd_core::{Error, LinkParams, Result};

use crate::config::{DeltaMode, ExperimentConfig, TurbulenceSpec};

/// One (scheme, grid-point) result. Either value may be absent, in which
/// case the paired reason says why.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub water: String,
    pub distance: f64,
    pub subtracted: u32,
    pub theta: Option<u32>,
    pub lambda: Option<f64>,
    pub block_len: usize,
    pub thermal: f64,
    pub delta: f64,
    pub p_acc: f64,
    pub analytic: Option<f64>,
    pub analytic_reason: Option<String>,
    pub mc: Option<(f64, f64)>,
    pub mc_reason: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone)]
struct GridPoint {
    water: (String, f64),
    distance: f64,
    subtracted: u32,
    turbulence: TurbulenceModel,
    erlang_label: Option<(u32, f64)>,
    thermal: f64,
    block_len: usize,
}

fn expand_grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let turb: Vec<(TurbulenceModel, Option<(u32, f64)>)> = match &cfg.turbulence {
        TurbulenceSpec::Erlang { theta, lambda } => theta
            .iter()
            .zip(lambda.iter())
            .map(|(t, l)| {
                (TurbulenceModel::Erlang { shape: *t, rate: *l }, Some((*t, *l)))
            })
            .collect(),
        TurbulenceSpec::LogNormal { sigma_x } => {
            vec![(TurbulenceModel::LogNormal { sigma_x: *sigma_x }, None)]
        }
    };
    let mut points = Vec::new();
    for water in &cfg.waters {
        for (model, label) in &turb {
            for n in &cfg.thermal {
                for m in &cfg.subtracted {
                    for l in &cfg.block_lens {
                        for d in &cfg.distances {
                            points.push(GridPoint {
                                water: water.clone(),
                                distance: *d,
                                subtracted: *m,
                                turbulence: *model,
                                erlang_label: *label,
                                thermal: *n,
                                block_len: *l,
                            });
                        }
                    }
                }
            }
        }
    }
    points
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn build_link(cfg: &ExperimentConfig, point: &GridPoint, delta: f64) -> Result<LinkParams> {
    let source = SourceParams::derive(cfg.transmittance, cfg.zeta, point.subtracted)?;
    let channel = ChannelParams::new(point.water.1, point.distance, point.turbulence)?;
    let receiver = ReceiverParams::new(point.thermal, delta, 0.0, cfg.sigma_h)?;
    Ok(LinkParams::new(source, channel, receiver))
}

/// Link whose turbulence is usable by the analytic paths: the Erlang model
/// itself, or the moment-matched Erlang stand-in for a log-normal channel.
fn analytic_link(link: &LinkParams) -> Result<LinkParams> {
    match link.channel.turbulence {
        TurbulenceModel::Erlang { .. } => Ok(*link),
        TurbulenceModel::LogNormal { sigma_x } => {
            let mut out = *link;
            out.channel.turbulence = match_erlang(sigma_x)?;
            Ok(out)
        }
    }
}

fn point_rows(cfg: &ExperimentConfig, point: &GridPoint, seed: u64) -> Vec<SweepRow> {
    let is_lognormal = matches!(point.turbulence, TurbulenceModel::LogNormal { .. });

    // displacement selection
    let needs_pnr = cfg.schemes.iter().any(|s| *s != Scheme::Hd);
    let (delta, delta_err) = match cfg.delta {
        DeltaMode::Fixed(d) => (d, None),
        DeltaMode::Optimize if !needs_pnr => (0.0, None),
        DeltaMode::Optimize => {
            let r = build_link(cfg, point, 0.0)
                .and_then(|l| analytic_link(&l))
                .and_then(|l| optimize_displacement(&l, &TableOpts::optimizer()));
            match r {
                Ok(choice) => (choice.delta_mag, None),
                Err(e) => (0.0, Some(e)),
            }
        }
    };

    let link = match build_link(cfg, point, delta) {
        Ok(l) => l,
        Err(e) => {
            return cfg
                .schemes
                .iter()
                .map(|s| failed_row(point, *s, delta, &e))
                .collect()
        }
    };
    let p_acc = link.source.acceptance_probability();

    // analytic values (Erlang path only)
    let mut fine: Option<LikelihoodTables> = None;
    let mut analytic_of = |scheme: Scheme| -> (Option<f64>, Option<String>) {
        if let Some(e) = &delta_err {
            return (None, Some(format!("displacement search failed: {e}")));
        }
        if is_lognormal {
            return (
                None,
                Some("log-normal turbulence: analytic path uses the Erlang model only".to_string()),
            );
        }
        match scheme {
            Scheme::Hd => match hd_qber_analytic(&link) {
                Ok(r) => (Some(r.qber), None),
                Err(e) => (None, Some(e.to_string())),
            },
            Scheme::Qmld | Scheme::Qmsd => {
                if fine.is_none() {
                    match LikelihoodTables::build(&link, &TableOpts::fine()) {
                        Ok(t) => fine = Some(t),
                        Err(e) => return (None, Some(e.to_string())),
                    }
                }
                let tables = fine.as_ref().expect("built above");
                match scheme {
                    Scheme::Qmld => (Some(qmld_qber_analytic(tables).qber), None),
                    _ => match qmsd_qber_analytic(tables, point.block_len) {
                        Ok(r) => (Some(r.qber), None),
                        Err(e) => (None, Some(e.to_string())),
                    },
                }
            }
        }
    };
    let analytic: Vec<(Option<f64>, Option<String>)> =
        cfg.schemes.iter().map(|s| analytic_of(*s)).collect();

    // Monte Carlo
    let mut mc: Vec<(Option<(f64, f64)>, Option<String>)> =
        vec![(None, None); cfg.schemes.len()];
    if cfg.trials == 0 {
        for slot in mc.iter_mut() {
            slot.1 = Some("trials = 0: analytic only".to_string());
        }
    } else {
        let scheme_set = SchemeSet {
            hd: cfg.schemes.contains(&Scheme::Hd),
            qmld: cfg.schemes.contains(&Scheme::Qmld),
            qmsd: cfg.schemes.contains(&Scheme::Qmsd),
        };
        let mc_cfg = McConfig {
            trials: cfg.trials,
            block_len: point.block_len,
            seed,
            schemes: scheme_set,
            realization: cfg.realization,
            shard_size: 4096,
        };
        let run = if scheme_set.qmld || scheme_set.qmsd {
            analytic_link(&link)
                .and_then(|al| LikelihoodTables::build(&al, &TableOpts::coarse()))
                .and_then(|t| run_mc_qber_with(&mc_cfg, &link, Some(&t), cfg!(feature = "parallel")))
        } else {
            run_mc_qber_with(&mc_cfg, &link, None, cfg!(feature = "parallel"))
        };
        match run {
            Ok(r) => {
                for (slot, scheme) in mc.iter_mut().zip(cfg.schemes.iter()) {
                    let est = match scheme {
                        Scheme::Hd => r.hd,
                        Scheme::Qmld => r.qmld,
                        Scheme::Qmsd => r.qmsd,
                    };
                    slot.0 = est.map(|e| (e.mean, e.std_error));
                }
            }
            Err(e) => {
                for slot in mc.iter_mut() {
                    slot.1 = Some(e.to_string());
                }
            }
        }
    }

    cfg.schemes
        .iter()
        .zip(analytic)
        .zip(mc)
        .map(|((scheme, (a, ar)), (m, mr))| SweepRow {
            scheme: *scheme,
            water: point.water.0.clone(),
            distance: point.distance,
            subtracted: point.subtracted,
            theta: point.erlang_label.map(|(t, _)| t),
            lambda: point.erlang_label.map(|(_, l)| l),
            block_len: point.block_len,
            thermal: point.thermal,
            delta,
            p_acc,
            analytic: a,
            analytic_reason: ar,
            mc: m,
            mc_reason: mr,
        })
        .collect()
}

fn failed_row(point: &GridPoint, scheme: Scheme, delta: f64, e: &Error) -> SweepRow {
    SweepRow {
        scheme,
        water: point.water.0.clone(),
        distance: point.distance,
        subtracted: point.subtracted,
        theta: point.erlang_label.map(|(t, _)| t),
        lambda: point.erlang_label.map(|(_, l)| l),
        block_len: point.block_len,
        thermal: point.thermal,
        delta,
        p_acc: f64::NAN,
        analytic: None,
        analytic_reason: Some(e.to_string()),
        mc: None,
        mc_reason: Some(e.to_string()),
    }
}

/// Runs every grid point; deterministic for a fixed config and seed,
/// independent of worker count.
pub fn run_sweep(cfg: &ExperimentConfig) -> SweepResult {
    let points = expand_grid(cfg);
    let indexed: Vec<(usize, GridPoint)> = points.into_iter().enumerate().collect();
    let run_point =
        |(idx, point): &(usize, GridPoint)| point_rows(cfg, point, splitmix64(cfg.seed ^ *idx as u64));

    #[cfg(feature = "parallel")]
    let per_point: Vec<Vec<SweepRow>> = {
        use rayon::prelude::*;
        indexed.par_iter().map(run_point).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_point: Vec<Vec<SweepRow>> = indexed.iter().map(run_point).collect();

    SweepResult { rows: per_point.into_iter().flatten().collect() }
}
