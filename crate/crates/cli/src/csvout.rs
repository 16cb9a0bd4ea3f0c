//! CSV emission with a fixed header and round-trip float formatting.

use std::io::Write;
use std::path::Path;

use crate::sweep::SweepResult;

pub const CSV_HEADER: &str =
    "scheme,water,d_m,m,theta,lambda,L,N,delta,p_acc,qber_analytic,qber_mc,qber_mc_stderr";

fn opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v}")).unwrap_or_default()
}

/// Renders the result as CSV text (UNIX newlines, UTF-8).
pub fn to_csv(result: &SweepResult) -> String {
    let mut out = String::with_capacity(64 * (result.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        let line = [
            r.scheme.name().to_string(),
            r.water.clone(),
            format!("{}", r.distance),
            format!("{}", r.subtracted),
            r.theta.map(|t| t.to_string()).unwrap_or_default(),
            opt(r.lambda),
            format!("{}", r.block_len),
            format!("{}", r.thermal),
            format!("{}", r.delta),
            if r.p_acc.is_nan() { String::new() } else { format!("{}", r.p_acc) },
            opt(r.analytic),
            opt(r.mc.map(|(m, _)| m)),
            opt(r.mc.map(|(_, s)| s)),
        ]
        .join(",");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(to_csv(result).as_bytes())?;
    file.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::SweepRow;
    use cvqkd_core::detect::Scheme;

    fn sample_row() -> SweepRow {
        SweepRow {
            scheme: Scheme::Qmld,
            water: "clear".to_string(),
            distance: 10.0,
            subtracted: 1,
            theta: Some(3),
            lambda: Some(3.0),
            block_len: 4,
            thermal: 0.001,
            delta: 0.25,
            p_acc: 0.101917671655,
            analytic: Some(0.2413966192),
            mc: Some((0.24072, 0.00043)),
            analytic_reason: None,
            mc_reason: None,
        }
    }

    #[test]
    fn empty_result_is_header_only() {
        let text = to_csv(&SweepResult::default());
        assert_eq!(text, format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn one_row_gives_two_lines_and_roundtrip_floats() {
        let result = SweepResult { rows: vec![sample_row()] };
        let text = to_csv(&result);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), CSV_HEADER.split(',').count());
        // shortest round-trip decimal form parses back exactly
        assert_eq!(fields[9].parse::<f64>().unwrap(), 0.101917671655);
    }

    #[test]
    fn emission_is_deterministic() {
        let result = SweepResult { rows: vec![sample_row(), sample_row()] };
        assert_eq!(to_csv(&result), to_csv(&result));
    }

    #[test]
    fn missing_values_leave_empty_fields() {
        let mut row = sample_row();
        row.analytic = None;
        row.mc = None;
        let text = to_csv(&SweepResult { rows: vec![row] });
        assert!(text.lines().nth(1).unwrap().ends_with(",,,"));
    }
}
