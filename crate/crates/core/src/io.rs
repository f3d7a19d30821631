//! CSV, SVG and run-manifest output.
//!
//! Every float goes through [`fmt_f64`], so identical inputs give identical
//! bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::caustic::CausticPointSet;
use crate::error::{Error, Result};
use crate::lens::{CausticCurve, ExitRay};

/// Seventeen significant digits in scientific notation; `-0` prints as `0`.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x + 0.0)
}

/// Joins a header and rows of floats.
pub fn csv_table(header: &str, rows: &[Vec<f64>]) -> String {
    let mut s = format!("{header}\n");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| fmt_f64(*x)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub const EXIT_RAY_HEADER: &str = "h,r_e,z_e,alpha";

pub fn exit_rays_csv(rays: &[ExitRay]) -> String {
    let rows: Vec<Vec<f64>> = rays.iter().map(|r| vec![r.h, r.r_e, r.z_e, r.alpha]).collect();
    csv_table(EXIT_RAY_HEADER, &rows)
}

/// Brute-force cross-check for one caustic sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleColumns {
    pub r: f64,
    pub z: f64,
    /// Euclidean distance to the analytic caustic point.
    pub deviation: f64,
}

/// `h,t_c,r_caustic,z_caustic,valid`, with `valid` as 0/1 and, when given,
/// `oracle_r,oracle_z,oracle_dev` appended.
pub fn caustic_curve_csv(curve: &CausticCurve, oracle: Option<&[OracleColumns]>) -> String {
    let mut s = String::from(CausticCurve::CSV_HEADER);
    if oracle.is_some() {
        s.push_str(",oracle_r,oracle_z,oracle_dev");
    }
    s.push('\n');
    for (i, p) in curve.samples.iter().enumerate() {
        let _ = write!(
            s,
            "{},{},{},{},{}",
            fmt_f64(p.h),
            fmt_f64(p.t_c),
            fmt_f64(p.r_caustic),
            fmt_f64(p.z_caustic),
            u8::from(p.valid)
        );
        if let Some(o) = oracle {
            let o = o[i];
            let _ = write!(s, ",{},{},{}", fmt_f64(o.r), fmt_f64(o.z), fmt_f64(o.deviation));
        }
        s.push('\n');
    }
    s
}

pub fn caustic_points_csv(set: &CausticPointSet) -> String {
    let rows: Vec<Vec<f64>> =
        set.points.iter().map(|p| vec![p.s, p.t, p.q[0], p.q[1], p.q[2], p.res_env, p.res_det]).collect();
    csv_table(CausticPointSet::CSV_HEADER, &rows)
}

/// Plain SVG with one polyline per input curve, fitted to a 600×600 box.
/// Curves are given in plot coordinates `(horizontal, vertical)`.
pub fn svg_polylines(curves: &[Vec<(f64, f64)>]) -> String {
    let pts = curves.iter().flatten().filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let size = 600.0;
    let margin = 20.0;
    let span = (x1 - x0).max(y1 - y0);
    let scale = if span > 0.0 && span.is_finite() { (size - 2.0 * margin) / span } else { 1.0 };
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\">\n");
    for curve in curves {
        let coords: Vec<String> = curve
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.6},{:.6}", margin + (x - x0) * scale, size - margin - (y - y0) * scale))
            .collect();
        if coords.is_empty() {
            continue;
        }
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"black\" points=\"{}\"/>", coords.join(" "));
    }
    s.push_str("</svg>\n");
    s
}

/// Record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name.
    pub args: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// No command draws random numbers; kept for reproducibility tooling.
    pub seed: u64,
    pub version: String,
    pub duration_seconds: f64,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            args,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: 0,
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_seconds: 0.0,
            exit_code: 0,
        }
    }

    pub fn finish(&mut self, elapsed: Duration, exit_code: i32) {
        self.duration_seconds = elapsed.as_secs_f64();
        self.exit_code = exit_code;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(path)
}

pub fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
