//! Plot-data files: `#` header lines, then one block per series.
//!
//! ```text
//! # figure pd_vs_snr
//! # x snr_db
//! # y pd
//! # series 2
//!
//! [DFF-AUD m=1]
//! 0.0 0.512300
//! 10.0 0.901000
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::FigureId;
use super::HarnessError;
use crate::metrics::{fmt_num, fmt_opt, MetricRow};

pub fn emit_plot_data(rows: &[MetricRow], figure: FigureId) -> Result<String, HarnessError> {
    let over_snr = figure.over_snr();
    let x_of = |r: &MetricRow| if over_snr { r.snr_db } else { r.m as f64 };
    let fixed_of = |r: &MetricRow| if over_snr { r.m as f64 } else { r.snr_db };
    let y_of = |r: &MetricRow| match figure {
        FigureId::PdVsSnr | FigureId::PdVsM => r.pd,
        FigureId::PpvVsSnr => r.ppv,
        FigureId::PmVsM => r.pm,
    };

    let mut xs: Vec<f64> = rows.iter().map(x_of).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        return Err(HarnessError::Coverage(format!(
            "{} needs at least two distinct {} values, results have {}",
            figure.name(),
            if over_snr { "SNR" } else { "m" },
            xs.len()
        )));
    }

    // keyed by the sortable bit pattern of the fixed coordinate
    let mut series: BTreeMap<(String, u64), Vec<(f64, Option<f64>)>> = BTreeMap::new();
    for r in rows {
        let fixed = fixed_of(r);
        let key = (r.method.clone(), order_bits(fixed));
        series.entry(key).or_default().push((x_of(r), y_of(r)));
    }

    let (x_name, y_name) = match figure {
        FigureId::PdVsSnr => ("snr_db", "pd"),
        FigureId::PpvVsSnr => ("snr_db", "ppv"),
        FigureId::PdVsM => ("m", "pd"),
        FigureId::PmVsM => ("m", "pm"),
    };
    let mut out = String::new();
    let _ = writeln!(out, "# figure {}", figure.name());
    let _ = writeln!(out, "# x {x_name}");
    let _ = writeln!(out, "# y {y_name}");
    let _ = writeln!(out, "# series {}", series.len());
    for ((method, bits), mut points) in series {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let fixed = from_order_bits(bits);
        let tag = if over_snr {
            format!("m={}", fixed as usize)
        } else {
            format!("snr={}", fmt_num(fixed))
        };
        let _ = writeln!(out, "\n[{method} {tag}]");
        for (x, y) in points {
            let x = if over_snr { fmt_num(x) } else { (x as usize).to_string() };
            let _ = writeln!(out, "{x} {}", fmt_opt(y));
        }
    }
    Ok(out)
}

/// Writes `fig_<id>.dat` into `dir`.
pub fn write_plot_data(rows: &[MetricRow], figure: FigureId, dir: &Path) -> Result<PathBuf, HarnessError> {
    let text = emit_plot_data(rows, figure)?;
    let path = dir.join(format!("fig_{}.dat", figure.name()));
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// Maps a float to bits whose unsigned order matches numeric order.
fn order_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_order_bits(b: u64) -> f64 {
    if b >> 63 == 1 {
        f64::from_bits(b & !(1 << 63))
    } else {
        f64::from_bits(!b)
    }
}
