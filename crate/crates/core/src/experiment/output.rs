//! CSV rendering of sweep rows.

use std::io::Write;

use super::Row;

pub const CSV_COLUMNS: [&str; 16] = [
    "scenario",
    "strategy",
    "method",
    "sweep_var",
    "sweep_value",
    "mu_p",
    "mu_s",
    "pi_p0",
    "pi_s0",
    "d_p_total",
    "d_s_total",
    "min_relays",
    "status",
    "ci_half_width",
    "seed",
    "build",
];

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header plus one line per row. Floats use the shortest representation
/// that round-trips, so output is byte-stable for identical rows.
pub fn write_csv<W: Write>(w: W, rows: &[Row]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.scenario.clone(),
            r.strategy.to_string(),
            r.method.to_string(),
            cell(r.sweep_var.map(|v| v.name())),
            cell(r.sweep_value),
            cell(r.mu_p),
            cell(r.mu_s),
            cell(r.pi_p0),
            cell(r.pi_s0),
            cell(r.d_p_total),
            cell(r.d_s_total),
            cell(r.min_relays),
            r.status.clone(),
            cell(r.ci_half_width),
            r.seed.to_string(),
            r.build.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
