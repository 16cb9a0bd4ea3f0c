//! Command-line surface for the underwater CV-QKD link engine.
//!
//! Subcommands: `analytic` (one point, all schemes), `mc` (one point),
//! `sweep <config>`, `validate [config]`, `preset <name>`.
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure,
//! 4 validation-gate failure.

use std::path::{Path, PathBuf};

use cvqkd_core::channel::{ChannelParams, TurbulenceModel};
use cvqkd_core::mc::validate_pmf;
use cvqkd_core::receiver::ReceiverParams;
use cvqkd_core::source::SourceParams;
use cvqkd_core::LinkParams;

use cvqkd_cli::config::{parse_config, ExperimentConfig, OutputFormat, TurbulenceSpec};
use cvqkd_cli::sweep::{run_sweep, SweepResult};
use cvqkd_cli::{csvout, plot, presets};

const USAGE: &str = "\
usage: cvqkd <command> [args] [flags]

commands:
  analytic <config>   analytic QBER for a single-point config, all schemes
  mc <config>         Monte Carlo QBER for a single-point config
  sweep <config>      full parameter sweep: CSV (and SVG) into the output dir
  validate [config]   sampling-distribution gates (count law, radial law,
                      acceptance rate); exit 4 when a gate fails
  preset <name>       materialize and run a bundled figure-style sweep
                      (fig2a fig2b fig2c fig2d fig3 fig4 fig5)

flags:
  --seed <u64>     override the Monte Carlo seed
  --trials <n>     override the trial count (blocks per point; 0 = analytic only)
  --out <dir>      override the output directory
  --format <f>     csv | csv+svg
  --threads <n>    worker threads (affects speed only, never results)
";

struct Cli {
    command: String,
    arg: Option<String>,
    seed: Option<u64>,
    trials: Option<u64>,
    out: Option<String>,
    format: Option<OutputFormat>,
    threads: Option<usize>,
}

fn parse_args(args: &[String]) -> Result<Cli, String> {
    let mut cli = Cli {
        command: String::new(),
        arg: None,
        seed: None,
        trials: None,
        out: None,
        format: None,
        threads: None,
    };
    let mut positional = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--seed" | "--trials" | "--out" | "--format" | "--threads" => {
                let v = it.next().ok_or_else(|| format!("{a} needs a value"))?;
                match a.as_str() {
                    "--seed" => cli.seed = Some(v.parse().map_err(|_| format!("bad --seed {v}"))?),
                    "--trials" => {
                        cli.trials = Some(v.parse().map_err(|_| format!("bad --trials {v}"))?)
                    }
                    "--out" => cli.out = Some(v.clone()),
                    "--format" => {
                        cli.format = Some(match v.as_str() {
                            "csv" => OutputFormat::Csv,
                            "csv+svg" => OutputFormat::CsvSvg,
                            other => return Err(format!("bad --format {other}")),
                        })
                    }
                    _ => {
                        cli.threads =
                            Some(v.parse().map_err(|_| format!("bad --threads {v}"))?)
                    }
                }
            }
            flag if flag.starts_with("--") => return Err(format!("unknown flag {flag}")),
            _ => positional.push(a.clone()),
        }
    }
    let mut pos = positional.into_iter();
    cli.command = pos.next().ok_or_else(|| "missing command".to_string())?;
    cli.arg = pos.next();
    if let Some(extra) = pos.next() {
        return Err(format!("unexpected argument {extra}"));
    }
    Ok(cli)
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, i32> {
    let path = match &cli.arg {
        Some(p) => PathBuf::from(p),
        None => {
            eprintln!("error: this command needs a config file");
            return Err(2);
        }
    };
    let mut cfg = match parse_config(&path) {
        Ok(c) => c,
        Err(errors) => {
            eprintln!("config errors in {}:", path.display());
            for e in errors {
                eprintln!("  {e}");
            }
            return Err(2);
        }
    };
    apply_overrides(&mut cfg, cli);
    Ok(cfg)
}

fn apply_overrides(cfg: &mut ExperimentConfig, cli: &Cli) {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
}

fn require_single_point(cfg: &ExperimentConfig) -> Result<(), i32> {
    let turb_len = match &cfg.turbulence {
        TurbulenceSpec::Erlang { theta, .. } => theta.len(),
        TurbulenceSpec::LogNormal { .. } => 1,
    };
    let points = cfg.waters.len()
        * cfg.distances.len()
        * cfg.subtracted.len()
        * cfg.thermal.len()
        * cfg.block_lens.len()
        * turb_len;
    if points != 1 {
        eprintln!("error: this command needs a single-point config, got {points} grid points");
        return Err(2);
    }
    Ok(())
}

fn point_link(cfg: &ExperimentConfig) -> Result<LinkParams, i32> {
    let turbulence = match &cfg.turbulence {
        TurbulenceSpec::Erlang { theta, lambda } => {
            TurbulenceModel::Erlang { shape: theta[0], rate: lambda[0] }
        }
        TurbulenceSpec::LogNormal { sigma_x } => TurbulenceModel::LogNormal { sigma_x: *sigma_x },
    };
    let build = || -> cvqkd_core::Result<LinkParams> {
        Ok(LinkParams::new(
            SourceParams::derive(cfg.transmittance, cfg.zeta, cfg.subtracted[0])?,
            ChannelParams::new(cfg.waters[0].1, cfg.distances[0], turbulence)?,
            ReceiverParams::new(cfg.thermal[0], 0.0, 0.0, cfg.sigma_h)?,
        ))
    };
    build().map_err(|e| {
        eprintln!("error: {e}");
        2
    })
}

fn print_rows(result: &SweepResult) {
    print!("{}", csvout::to_csv(result));
    for row in &result.rows {
        if let Some(reason) = &row.analytic_reason {
            eprintln!("note: {} analytic unavailable: {reason}", row.scheme.name());
        }
        if let Some(reason) = &row.mc_reason {
            eprintln!("note: {} Monte Carlo unavailable: {reason}", row.scheme.name());
        }
    }
}

fn write_outputs(cfg: &ExperimentConfig, result: &SweepResult, stem: &str) -> Result<(), i32> {
    let dir = Path::new(&cfg.out_dir);
    if let Err(e) = std::fs::create_dir_all(dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return Err(3);
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    if let Err(e) = csvout::emit_csv(result, &csv_path) {
        eprintln!("error: {e}");
        return Err(3);
    }
    println!("wrote {}", csv_path.display());
    if cfg.format == OutputFormat::CsvSvg {
        let svg_path = dir.join(format!("{stem}.svg"));
        match plot::emit_plot(result, &svg_path) {
            Ok(()) => println!("wrote {}", svg_path.display()),
            Err(e) => {
                eprintln!("error: {e}");
                return Err(3);
            }
        }
    }
    Ok(())
}

/// Rows with every value missing signal a numeric failure somewhere inside.
fn sweep_exit_code(result: &SweepResult) -> i32 {
    let any_value = result
        .rows
        .iter()
        .any(|r| r.analytic.is_some() || r.mc.is_some());
    if any_value || result.rows.is_empty() {
        0
    } else {
        3
    }
}

fn cmd_sweep(cli: &Cli) -> i32 {
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let result = run_sweep(&cfg);
    if let Err(code) = write_outputs(&cfg, &result, "sweep") {
        return code;
    }
    sweep_exit_code(&result)
}

fn cmd_analytic(cli: &Cli) -> i32 {
    let mut cfg = match load_config(cli) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Err(code) = require_single_point(&cfg) {
        return code;
    }
    cfg.trials = 0;
    let result = run_sweep(&cfg);
    print_rows(&result);
    if result.rows.iter().all(|r| r.analytic.is_none()) {
        return 3;
    }
    0
}

fn cmd_mc(cli: &Cli) -> i32 {
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Err(code) = require_single_point(&cfg) {
        return code;
    }
    if cfg.trials == 0 {
        eprintln!("error: mc needs trials >= 1");
        return 2;
    }
    let result = run_sweep(&cfg);
    print_rows(&result);
    if result.rows.iter().all(|r| r.mc.is_none()) {
        return 3;
    }
    0
}

fn cmd_validate(cli: &Cli) -> i32 {
    let cfg = if cli.arg.is_some() {
        match load_config(cli) {
            Ok(c) => c,
            Err(code) => return code,
        }
    } else {
        let mut c = ExperimentConfig::default();
        apply_overrides(&mut c, cli);
        c
    };
    if let Err(code) = require_single_point(&cfg) {
        return code;
    }
    let link = match point_link(&cfg) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let samples = if cfg.trials > 0 { cfg.trials } else { 1_000_000 };
    let report = validate_pmf(&link, samples, cfg.seed);
    for check in &report.checks {
        println!(
            "{}: statistic {:.6} threshold {:.6} -> {}",
            check.name,
            check.statistic,
            check.threshold,
            if check.pass { "pass" } else { "FAIL" }
        );
    }
    if report.all_pass() {
        0
    } else {
        4
    }
}

fn cmd_preset(cli: &Cli) -> i32 {
    let name = match &cli.arg {
        Some(n) => n.clone(),
        None => {
            eprintln!("error: preset needs a name ({})", presets::PRESET_NAMES.join(" "));
            return 2;
        }
    };
    let mut cfg = match presets::preset(&name) {
        Some(c) => c,
        None => {
            eprintln!(
                "error: unknown preset {name:?} (expected one of {})",
                presets::PRESET_NAMES.join(" ")
            );
            return 2;
        }
    };
    apply_overrides(&mut cfg, cli);
    let dir = Path::new(&cfg.out_dir);
    if let Err(e) = std::fs::create_dir_all(dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return 3;
    }
    let cfg_path = dir.join(format!("{name}.cfg"));
    if let Err(e) = std::fs::write(&cfg_path, cfg.to_config_string()) {
        eprintln!("error: cannot write {}: {e}", cfg_path.display());
        return 3;
    }
    println!("wrote {}", cfg_path.display());
    let result = run_sweep(&cfg);
    if let Err(code) = write_outputs(&cfg, &result, &name) {
        return code;
    }
    sweep_exit_code(&result)
}

fn dispatch(cli: &Cli) -> i32 {
    match cli.command.as_str() {
        "analytic" => cmd_analytic(cli),
        "mc" => cmd_mc(cli),
        "sweep" => cmd_sweep(cli),
        "validate" => cmd_validate(cli),
        "preset" => cmd_preset(cli),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            0
        }
        other => {
            eprintln!("error: unknown command {other:?}\n{USAGE}");
            2
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match parse_args(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}\n{USAGE}");
            std::process::exit(2);
        }
    };
    let code = match cli.threads {
        Some(n) if n >= 1 => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build();
            match pool {
                Ok(pool) => pool.install(|| dispatch(&cli)),
                Err(e) => {
                    eprintln!("error: cannot build thread pool: {e}");
                    3
                }
            }
        }
        Some(_) => {
            eprintln!("error: --threads needs n >= 1");
            2
        }
        None => dispatch(&cli),
    };
    std::process::exit(code);
}
