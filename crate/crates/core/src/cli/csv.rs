//! Minimal CSV emission with a `#` header block, and point-cloud input.

use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::{SweepReport, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;

use super::config::SCHEMA_VERSION;

/// Shortest decimal string that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Header: schema version, seed, extra lines, then the config echo.
pub fn header(seed: Option<u64>, config_echo: Option<&str>, extra: &[String]) -> String {
    let mut out = format!("# constrained-law schema {SCHEMA_VERSION}\n");
    if let Some(seed) = seed {
        let _ = writeln!(out, "# seed: {seed}");
    }
    for line in extra {
        let _ = writeln!(out, "# {line}");
    }
    if let Some(echo) = config_echo {
        out.push_str("# config:\n");
        for line in echo.lines() {
            let _ = writeln!(out, "#   {line}");
        }
    }
    out
}

fn coordinate_columns(prefix: &str, d: usize) -> String {
    (0..d).map(|k| format!(",{prefix}_{k}")).collect()
}

pub fn trajectory(head: &str, rec: &TrajectoryRecord) -> String {
    let d = rec.states.first().map_or(0, |s| s.dim());
    let mut out = head.to_string();
    let _ = writeln!(out, "t,particle_id{}{}", coordinate_columns("x", d), coordinate_columns("dL", d));
    for ((t, state), dl) in rec.times.iter().zip(&rec.states).zip(&rec.penalization_increments) {
        for (i, x) in state.particles().enumerate() {
            out.push_str(&num(*t));
            let _ = write!(out, ",{i}");
            for v in x.iter().chain(&dl[i * d..(i + 1) * d]) {
                out.push(',');
                out.push_str(&num(*v));
            }
            out.push('\n');
        }
    }
    out
}

pub fn diagnostics(head: &str, rec: &TrajectoryRecord) -> String {
    let mut out = head.to_string();
    out.push_str("t,w2sq_to_K,second_moment,l_variation\n");
    for p in &rec.diagnostics {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            num(p.t),
            num(p.w2sq_to_k),
            num(p.second_moment),
            num(p.l_variation)
        );
    }
    out
}

pub fn sweep_summary(head: &str, rep: &SweepReport) -> String {
    let mut out = head.to_string();
    out.push_str("eps,sup_w2sq,integral_w2sq\n");
    for r in &rep.rows {
        let _ = writeln!(out, "{},{},{}", num(r.eps), num(r.sup_w2sq), num(r.integral_w2sq));
    }
    let slope = rep.slope.map_or_else(|| "NaN".to_string(), num);
    let _ = writeln!(out, "slope,{slope},");
    out
}

pub fn cloud(head: &str, mu: &EmpiricalMeasure) -> String {
    let mut out = head.to_string();
    let _ = writeln!(out, "particle_id{}", coordinate_columns("x", mu.dim()));
    for (i, x) in mu.particles().enumerate() {
        let _ = write!(out, "{i}");
        for v in x {
            out.push(',');
            out.push_str(&num(*v));
        }
        out.push('\n');
    }
    out
}

/// Reads one particle per row. `#` lines are skipped; a non-numeric first
/// row is a header, and a leading `particle_id` column is dropped.
pub fn read_cloud(path: &Path) -> Result<EmpiricalMeasure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("--input", format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut skip_first = false;
    let mut seen_header = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_header && rows.is_empty() && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            seen_header = true;
            skip_first = fields.first() == Some(&"particle_id");
            continue;
        }
        let start = usize::from(skip_first);
        let row = fields[start.min(fields.len())..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::config("--input", format!("{}:{}: not a number", path.display(), lineno + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::config("--input", format!("{} holds no particles", path.display())));
    }
    EmpiricalMeasure::from_rows(&rows).map_err(|e| Error::config("--input", e.to_string()))
}
