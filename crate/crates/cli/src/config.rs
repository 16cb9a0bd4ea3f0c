//! Line-oriented experiment configuration: named sections of `key = value`
//! pairs. The parser reports every violation it finds, with line numbers,
//! rather than stopping at the first.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use cvqkd_core::channel::WaterType;
use cvqkd_core::detect::Scheme;
use cvqkd_core::mc::Realization;

/// Fading description requested by the config.
#[derive(Debug, Clone, PartialEq)]
pub enum TurbulenceSpec {
    /// Erlang shape/rate pairs, evaluated analytically and by Monte Carlo.
    Erlang { theta: Vec<u32>, lambda: Vec<f64> },
    /// Log-normal intensity; Monte Carlo only.
    LogNormal { sigma_x: f64 },
}

/// Displacement selection mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaMode {
    Fixed(f64),
    Optimize,
}

/// Parsed and validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    // source
    pub transmittance: f64,
    pub zeta: f64,
    pub subtracted: Vec<u32>,
    // channel
    pub waters: Vec<(String, f64)>,
    pub distances: Vec<f64>,
    pub turbulence: TurbulenceSpec,
    // receiver
    pub thermal: Vec<f64>,
    pub delta: DeltaMode,
    pub sigma_h: f64,
    // detection
    pub schemes: Vec<Scheme>,
    pub block_lens: Vec<usize>,
    // mc
    pub trials: u64,
    pub seed: u64,
    pub realization: Realization,
    // output
    pub out_dir: String,
    pub format: OutputFormat,
    /// Out-of-range parameters were explicitly allowed.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    CsvSvg,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            transmittance: 0.95,
            zeta: 0.85,
            subtracted: vec![1],
            waters: vec![("clear".to_string(), WaterType::Clear.extinction())],
            distances: vec![10.0],
            turbulence: TurbulenceSpec::Erlang { theta: vec![3], lambda: vec![3.0] },
            thermal: vec![0.001],
            delta: DeltaMode::Optimize,
            sigma_h: 0.5f64.sqrt(),
            schemes: vec![Scheme::Hd, Scheme::Qmld, Scheme::Qmsd],
            block_lens: vec![4],
            trials: 3000,
            seed: 1,
            realization: Realization::Block,
            out_dir: "out".to_string(),
            format: OutputFormat::CsvSvg,
            extrapolated: false,
        }
    }
}

struct RawEntry {
    line: usize,
    value: String,
    used: bool,
}

struct Raw {
    entries: BTreeMap<(String, String), RawEntry>,
    errors: Vec<String>,
}

impl Raw {
    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.entries
            .get_mut(&(section.to_string(), key.to_string()))
            .map(|e| {
                e.used = true;
                (e.line, e.value.clone())
            })
    }
}

fn parse_raw(text: &str) -> Raw {
    let mut entries = BTreeMap::new();
    let mut errors = Vec::new();
    let mut section = String::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            match name.strip_suffix(']') {
                Some(name) => section = name.trim().to_string(),
                None => errors.push(format!("line {line_no}: malformed section header {line:?}")),
            }
            continue;
        }
        match line.split_once('=') {
            Some((key, value)) => {
                let key = key.trim().to_string();
                if section.is_empty() {
                    errors.push(format!("line {line_no}: key {key:?} outside any section"));
                    continue;
                }
                let prev = entries.insert(
                    (section.clone(), key.clone()),
                    RawEntry { line: line_no, value: value.trim().to_string(), used: false },
                );
                if prev.is_some() {
                    errors.push(format!("line {line_no}: duplicate key [{section}] {key}"));
                }
            }
            None => errors.push(format!("line {line_no}: expected `key = value`, got {line:?}")),
        }
    }
    Raw { entries, errors }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| format!("cannot parse {s:?}")))
        .collect()
}

/// Parses and validates a configuration file, reporting all violations.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![format!("cannot read {}: {e}", path.display())])?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, Vec<String>> {
    let mut raw = parse_raw(text);
    let mut errors = std::mem::take(&mut raw.errors);
    let mut cfg = ExperimentConfig::default();

    let mut err = |line: usize, msg: String| {
        let e = if line > 0 { format!("line {line}: {msg}") } else { msg };
        errors.push(e);
    };

    if let Some((line, v)) = raw.take("source", "t") {
        match v.parse::<f64>() {
            Ok(t) if t > 0.0 && t <= 1.0 => cfg.transmittance = t,
            Ok(t) => err(line, format!("t must be in (0, 1], got {t}")),
            Err(_) => err(line, format!("cannot parse t = {v:?}")),
        }
    }
    if let Some((line, v)) = raw.take("source", "zeta") {
        match v.parse::<f64>() {
            Ok(z) if z > 0.0 && z < 1.0 => cfg.zeta = z,
            Ok(z) => err(line, format!("zeta must be in (0, 1), got {z}")),
            Err(_) => err(line, format!("cannot parse zeta = {v:?}")),
        }
    }
    if let Some((line, v)) = raw.take("source", "m") {
        match parse_list::<u32>(&v) {
            Ok(ms) if !ms.is_empty() => cfg.subtracted = ms,
            Ok(_) => err(line, "m list is empty".to_string()),
            Err(e) => err(line, format!("m: {e}")),
        }
    }

    let water = raw.take("channel", "water");
    let extinction = raw.take("channel", "extinction");
    match (water, extinction) {
        (Some((line, _)), Some(_)) => {
            err(line, "give either water presets or an explicit extinction, not both".to_string())
        }
        (Some((line, v)), None) => {
            let mut waters = Vec::new();
            for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match WaterType::from_name(name) {
                    Ok(w) => waters.push((name.to_string(), w.extinction())),
                    Err(e) => err(line, e.to_string()),
                }
            }
            if !waters.is_empty() {
                cfg.waters = waters;
            }
        }
        (None, Some((line, v))) => match v.parse::<f64>() {
            Ok(c) if c > 0.0 => cfg.waters = vec![(format!("custom:{c}"), c)],
            Ok(c) => err(line, format!("extinction must be > 0, got {c}")),
            Err(_) => err(line, format!("cannot parse extinction = {v:?}")),
        },
        (None, None) => {}
    }

    if let Some((line, v)) = raw.take("channel", "distances") {
        match parse_list::<f64>(&v) {
            Ok(ds) if !ds.is_empty() => {
                if ds.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
                    err(line, "distances must be finite and >= 0".to_string());
                } else if ds.windows(2).any(|w| w[0] >= w[1]) {
                    err(line, "distances must be strictly increasing".to_string());
                } else {
                    cfg.distances = ds;
                }
            }
            Ok(_) => err(line, "distances list is empty".to_string()),
            Err(e) => err(line, format!("distances: {e}")),
        }
    }

    let theta = raw.take("channel", "theta");
    let lambda = raw.take("channel", "lambda");
    let sigma_x = raw.take("channel", "sigma_x");
    match (theta, lambda, sigma_x) {
        (None, None, Some((line, v))) => match v.parse::<f64>() {
            Ok(s) if s > 0.0 => cfg.turbulence = TurbulenceSpec::LogNormal { sigma_x: s },
            Ok(s) => err(line, format!("sigma_x must be > 0, got {s}")),
            Err(_) => err(line, format!("cannot parse sigma_x = {v:?}")),
        },
        (Some((line, _)), _, Some(_)) | (_, Some((line, _)), Some(_)) => err(
            line,
            "give either Erlang (theta, lambda) or log-normal sigma_x, not both".to_string(),
        ),
        (theta, lambda, None) => {
            let mut thetas = vec![3u32];
            let mut lambdas = vec![3.0f64];
            if let Some((line, v)) = theta {
                match parse_list::<i64>(&v) {
                    Ok(ts) if ts.iter().all(|t| *t >= 1) => {
                        thetas = ts.iter().map(|t| *t as u32).collect()
                    }
                    Ok(_) => err(
                        line,
                        "theta must be a positive integer (the Erlang shape is integral)"
                            .to_string(),
                    ),
                    Err(e) => err(line, format!("theta: {e}")),
                }
            }
            if let Some((line, v)) = lambda {
                match parse_list::<f64>(&v) {
                    Ok(ls) if ls.iter().all(|l| *l > 0.0) => lambdas = ls,
                    Ok(_) => err(line, "lambda must be > 0".to_string()),
                    Err(e) => err(line, format!("lambda: {e}")),
                }
            }
            if lambdas.len() == 1 && thetas.len() > 1 {
                lambdas = vec![lambdas[0]; thetas.len()];
            }
            if thetas.len() == 1 && lambdas.len() > 1 {
                thetas = vec![thetas[0]; lambdas.len()];
            }
            if thetas.len() != lambdas.len() {
                err(0, format!(
                    "theta and lambda lists must have equal length, got {} and {}",
                    thetas.len(),
                    lambdas.len()
                ));
            } else {
                cfg.turbulence = TurbulenceSpec::Erlang { theta: thetas, lambda: lambdas };
            }
        }
    }

    if let Some((line, v)) = raw.take("receiver", "n") {
        match parse_list::<f64>(&v) {
            Ok(ns) if ns.iter().all(|n| *n >= 0.0) && !ns.is_empty() => cfg.thermal = ns,
            Ok(_) => err(line, "n must be >= 0".to_string()),
            Err(e) => err(line, format!("n: {e}")),
        }
    }
    if let Some((line, v)) = raw.take("receiver", "delta") {
        if v == "optimize" {
            cfg.delta = DeltaMode::Optimize;
        } else {
            match v.parse::<f64>() {
                Ok(d) if d >= 0.0 => cfg.delta = DeltaMode::Fixed(d),
                Ok(d) => err(line, format!("delta must be >= 0, got {d}")),
                Err(_) => err(line, format!("delta must be `optimize` or a number, got {v:?}")),
            }
        }
    }
    if let Some((line, v)) = raw.take("receiver", "sigma_h") {
        match v.parse::<f64>() {
            Ok(s) if s > 0.0 => cfg.sigma_h = s,
            Ok(s) => err(line, format!("sigma_h must be > 0, got {s}")),
            Err(_) => err(line, format!("cannot parse sigma_h = {v:?}")),
        }
    }

    if let Some((line, v)) = raw.take("detection", "schemes") {
        let mut schemes = Vec::new();
        for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match Scheme::from_name(name) {
                Ok(s) if !schemes.contains(&s) => schemes.push(s),
                Ok(_) => err(line, format!("scheme {name:?} listed twice")),
                Err(e) => err(line, e.to_string()),
            }
        }
        cfg.schemes = schemes;
    }
    if let Some((line, v)) = raw.take("detection", "block_len") {
        match parse_list::<usize>(&v) {
            Ok(ls) if ls.iter().all(|l| (1..=12).contains(l)) && !ls.is_empty() => {
                cfg.block_lens = ls
            }
            Ok(_) => err(line, "block_len values must be in 1..=12".to_string()),
            Err(e) => err(line, format!("block_len: {e}")),
        }
    }

    if let Some((line, v)) = raw.take("mc", "trials") {
        match v.parse::<u64>() {
            Ok(t) => cfg.trials = t,
            Err(_) => err(line, format!("cannot parse trials = {v:?}")),
        }
    }
    if let Some((line, v)) = raw.take("mc", "seed") {
        match v.parse::<u64>() {
            Ok(s) => cfg.seed = s,
            Err(_) => err(line, format!("cannot parse seed = {v:?}")),
        }
    }
    if let Some((line, v)) = raw.take("mc", "realization") {
        match v.as_str() {
            "block" => cfg.realization = Realization::Block,
            "per_symbol" => cfg.realization = Realization::PerSymbol,
            other => err(line, format!("realization must be block or per_symbol, got {other:?}")),
        }
    }

    if let Some((_, v)) = raw.take("output", "dir") {
        cfg.out_dir = v;
    }
    if let Some((line, v)) = raw.take("output", "format") {
        match v.as_str() {
            "csv" => cfg.format = OutputFormat::Csv,
            "csv+svg" => cfg.format = OutputFormat::CsvSvg,
            other => err(line, format!("format must be csv or csv+svg, got {other:?}")),
        }
    }
    if let Some((line, v)) = raw.take("output", "extrapolated") {
        match v.parse::<bool>() {
            Ok(b) => cfg.extrapolated = b,
            Err(_) => err(line, format!("cannot parse extrapolated = {v:?}")),
        }
    }

    for ((section, key), entry) in raw.entries.iter() {
        if !entry.used {
            errors.push(format!("line {}: unknown key [{section}] {key}", entry.line));
        }
    }

    // documented parameter ranges; out-of-range needs the extrapolated flag
    if !cfg.extrapolated {
        let mut range = |ok: bool, what: String| {
            if !ok {
                errors.push(format!(
                    "{what} is outside the documented range; set [output] extrapolated = true to allow"
                ));
            }
        };
        for n in &cfg.thermal {
            range((0.001..=1.0).contains(n), format!("thermal noise n = {n}"));
        }
        for m in &cfg.subtracted {
            range(*m <= 3, format!("subtracted photons m = {m}"));
        }
        if let TurbulenceSpec::Erlang { theta, lambda } = &cfg.turbulence {
            for t in theta {
                range((1..=12).contains(t), format!("theta = {t}"));
            }
            for l in lambda {
                range((1.0..=12.0).contains(l), format!("lambda = {l}"));
            }
        }
    }

    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

impl ExperimentConfig {
    /// Canonical textual form; parsing it reproduces the config.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[source]");
        let _ = writeln!(s, "t = {}", self.transmittance);
        let _ = writeln!(s, "zeta = {}", self.zeta);
        let _ = writeln!(s, "m = {}", join(&self.subtracted));
        let _ = writeln!(s, "\n[channel]");
        if self.waters.iter().all(|(name, _)| !name.starts_with("custom:")) {
            let names: Vec<&str> = self.waters.iter().map(|(n, _)| n.as_str()).collect();
            let _ = writeln!(s, "water = {}", names.join(","));
        } else {
            let _ = writeln!(s, "extinction = {}", self.waters[0].1);
        }
        let _ = writeln!(s, "distances = {}", join(&self.distances));
        match &self.turbulence {
            TurbulenceSpec::Erlang { theta, lambda } => {
                let _ = writeln!(s, "theta = {}", join(theta));
                let _ = writeln!(s, "lambda = {}", join(lambda));
            }
            TurbulenceSpec::LogNormal { sigma_x } => {
                let _ = writeln!(s, "sigma_x = {sigma_x}");
            }
        }
        let _ = writeln!(s, "\n[receiver]");
        let _ = writeln!(s, "n = {}", join(&self.thermal));
        match self.delta {
            DeltaMode::Optimize => {
                let _ = writeln!(s, "delta = optimize");
            }
            DeltaMode::Fixed(d) => {
                let _ = writeln!(s, "delta = {d}");
            }
        }
        let _ = writeln!(s, "sigma_h = {}", self.sigma_h);
        let _ = writeln!(s, "\n[detection]");
        let names: Vec<&str> = self.schemes.iter().map(|x| x.name()).collect();
        let _ = writeln!(s, "schemes = {}", names.join(","));
        let _ = writeln!(s, "block_len = {}", join(&self.block_lens));
        let _ = writeln!(s, "\n[mc]");
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(
            s,
            "realization = {}",
            match self.realization {
                Realization::Block => "block",
                Realization::PerSymbol => "per_symbol",
            }
        );
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.out_dir);
        let _ = writeln!(
            s,
            "format = {}",
            match self.format {
                OutputFormat::Csv => "csv",
                OutputFormat::CsvSvg => "csv+svg",
            }
        );
        if self.extrapolated {
            let _ = writeln!(s, "extrapolated = true");
        }
        s
    }
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
