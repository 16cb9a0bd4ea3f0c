//! Self-contained static SVG rendering of QBER-versus-distance sweeps:
//! distance on a linear x-axis, QBER on a log y-axis, one series per
//! (scheme, water, m, theta, N, L) combination, Monte Carlo points with
//! one-standard-error bars over the analytic lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::sweep::{SweepResult, SweepRow};

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 560.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 250.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 52.0;

/// Values below this floor are clamped before the log transform; the legend
/// carries a note when clamping happened.
pub const QBER_FLOOR: f64 = 1e-8;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
    "#bcbd22", "#7f7f7f",
];

fn series_key(row: &SweepRow) -> String {
    let turb = match (row.theta, row.lambda) {
        (Some(t), Some(l)) => format!("theta={t} lambda={l}"),
        _ => "lognormal".to_string(),
    };
    format!(
        "{} {} m={} L={} N={} {}",
        row.scheme.name(),
        row.water,
        row.subtracted,
        row.block_len,
        row.thermal,
        turb
    )
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders the sweep as SVG text. Errors when the rows do not share a
/// common distance axis to draw against.
pub fn render_svg(result: &SweepResult) -> Result<String, String> {
    if result.rows.is_empty() {
        return Err("nothing to plot: empty sweep".to_string());
    }
    let mut series: BTreeMap<String, Vec<&SweepRow>> = BTreeMap::new();
    for row in &result.rows {
        series.entry(series_key(row)).or_default().push(row);
    }
    for rows in series.values() {
        if rows.windows(2).any(|w| w[0].distance >= w[1].distance) {
            return Err("inconsistent axes: each series needs strictly increasing distances".to_string());
        }
    }

    let d_min = result.rows.iter().map(|r| r.distance).fold(f64::INFINITY, f64::min);
    let d_max = result.rows.iter().map(|r| r.distance).fold(f64::NEG_INFINITY, f64::max);
    let d_span = if d_max > d_min { d_max - d_min } else { 1.0 };

    let mut q_min: f64 = 1.0;
    let mut clamped = false;
    for r in &result.rows {
        for v in r.analytic.iter().chain(r.mc.iter().map(|(m, _)| m)) {
            if *v < QBER_FLOOR {
                clamped = true;
            }
            q_min = q_min.min(v.max(QBER_FLOOR));
        }
    }
    let dec_lo = q_min.log10().floor() as i32;
    let dec_hi = 0i32;
    let log_span = f64::from(dec_hi - dec_lo).max(1.0);

    let x_of = |d: f64| MARGIN_L + (d - d_min) / d_span * (WIDTH - MARGIN_L - MARGIN_R);
    let y_of = |q: f64| {
        let lq = q.max(QBER_FLOOR).log10();
        MARGIN_T + (f64::from(dec_hi) - lq) / log_span * (HEIGHT - MARGIN_T - MARGIN_B)
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");

    // frame and log-decade gridlines
    let _ = writeln!(
        svg,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(WIDTH - MARGIN_L - MARGIN_R),
        fmt(HEIGHT - MARGIN_T - MARGIN_B)
    );
    for dec in dec_lo..=dec_hi {
        let y = y_of(10f64.powi(dec));
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#cccccc\" stroke-dasharray=\"3,3\"/>",
            fmt(MARGIN_L),
            fmt(y),
            fmt(WIDTH - MARGIN_R),
            fmt(y)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">1e{dec}</text>",
            fmt(MARGIN_L - 6.0),
            fmt(y + 4.0)
        );
    }
    let mut dticks: Vec<f64> = result.rows.iter().map(|r| r.distance).collect();
    dticks.sort_by(|a, b| a.total_cmp(b));
    dticks.dedup();
    for d in &dticks {
        let x = x_of(*d);
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            fmt(x),
            fmt(HEIGHT - MARGIN_B),
            fmt(x),
            fmt(HEIGHT - MARGIN_B + 5.0)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{d}</text>",
            fmt(x),
            fmt(HEIGHT - MARGIN_B + 20.0)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">distance (m)</text>",
        fmt(MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0),
        fmt(HEIGHT - 12.0)
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">accepted-only QBER</text>",
        fmt(MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0),
        fmt(MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0)
    );

    // series
    for (idx, (key, rows)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let analytic: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| r.analytic.map(|q| (x_of(r.distance), y_of(q))))
            .collect();
        if analytic.len() >= 2 {
            let pts: Vec<String> =
                analytic.iter().map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y))).collect();
            let _ = writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
                pts.join(" ")
            );
        }
        for r in rows {
            if let Some((mean, se)) = r.mc {
                let x = x_of(r.distance);
                let y = y_of(mean);
                let y_lo = y_of((mean - se).max(QBER_FLOOR));
                let y_hi = y_of(mean + se);
                let _ = writeln!(
                    svg,
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\"/>",
                    fmt(x),
                    fmt(y_hi),
                    fmt(x),
                    fmt(y_lo)
                );
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>",
                    fmt(x),
                    fmt(y)
                );
            }
        }
        let ly = MARGIN_T + 14.0 + 16.0 * idx as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"3\"/>",
            fmt(WIDTH - MARGIN_R + 8.0),
            fmt(ly - 4.0),
            fmt(WIDTH - MARGIN_R + 28.0),
            fmt(ly - 4.0)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\">{key}</text>",
            fmt(WIDTH - MARGIN_R + 34.0),
            fmt(ly)
        );
    }
    let mut note_y = MARGIN_T + 14.0 + 16.0 * series.len() as f64 + 8.0;
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" fill=\"#555555\">lines: analytic; points: Monte Carlo +/- 1 s.e.</text>",
        fmt(WIDTH - MARGIN_R + 8.0),
        fmt(note_y)
    );
    if clamped {
        note_y += 16.0;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" fill=\"#555555\">values below 1e-8 clamped to the axis floor</text>",
            fmt(WIDTH - MARGIN_R + 8.0),
            fmt(note_y)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(result: &SweepResult, path: &Path) -> Result<(), String> {
    let svg = render_svg(result)?;
    std::fs::write(path, svg).map_err(|e| format!("cannot write {}: {e}", path.display()))
}
