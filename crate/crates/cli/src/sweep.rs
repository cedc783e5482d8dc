//! Grid sweeps over destination coordinates `(h, z_d)` and single-point
//! queries.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use uwcrb::crb::{crb_report, CrbReport, CrbTerms};
use uwcrb::numerics::QuadratureSpec;
use uwcrb::ray::{solve_k0_from_h, RayError, RayScenario};
use uwcrb::ssp::{build_sampling_matrix, SamplingMatrix};

use crate::config::SweepConfig;

/// Fixed header of the sweep CSV.
pub const CSV_HEADER: &str = "h,z_d,valid,k0,crb_tof,crb_depth_s,crb_depth_d,crb_ssp,crb_total";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("point ({h}, {z_d}) lies outside the environment")]
    OutsideEnvironment { h: f64, z_d: f64 },
    #[error("infeasible geometry at ({h}, {z_d}): {reason}")]
    InfeasibleGeometry { h: f64, z_d: f64, reason: String },
    #[error("malformed sweep CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
}

/// One grid cell. Invalid cells carry no bound values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub h: f64,
    pub z_d: f64,
    pub valid: bool,
    pub k0: Option<f64>,
    pub terms: Option<CrbTerms>,
}

impl SweepCell {
    fn invalid(h: f64, z_d: f64) -> Self {
        Self {
            h,
            z_d,
            valid: false,
            k0: None,
            terms: None,
        }
    }

    pub fn total(&self) -> Option<f64> {
        self.terms.map(|t| t.total())
    }

    /// Value of a named CSV column, `None` for empty fields.
    pub fn column(&self, name: &str) -> Option<f64> {
        match name {
            "h" => Some(self.h),
            "z_d" => Some(self.z_d),
            "k0" => self.k0,
            "crb_tof" => self.terms.map(|t| t.tof),
            "crb_depth_s" => self.terms.map(|t| t.depth_s),
            "crb_depth_d" => self.terms.map(|t| t.depth_d),
            "crb_ssp" => self.terms.map(|t| t.ssp),
            "crb_total" => self.total(),
            _ => None,
        }
    }
}

/// Cells in row-major order: `z_d` is the slow index, `h` the fast one.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub n_h: usize,
    pub n_z: usize,
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, i_h: usize, i_z: usize) -> &SweepCell {
        &self.cells[i_z * self.n_h + i_h]
    }

    pub fn valid_cells(&self) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(|c| c.valid)
    }
}

/// Solves the ray through `(h, z_d)` and evaluates the full report.
pub fn evaluate_point(config: &SweepConfig, sampling: &SamplingMatrix, h: f64, z_d: f64) -> Result<CrbReport, SweepError> {
    let infeasible = |reason: String| SweepError::InfeasibleGeometry { h, z_d, reason };
    if h <= 0.0 {
        return Err(infeasible("a vertical ray has no Snell constant to estimate".into()));
    }
    let quad = QuadratureSpec::default();
    let k0 = solve_k0_from_h(&config.profile, config.source_depth, z_d, h, &quad).map_err(|e| infeasible(e.to_string()))?;
    let s = RayScenario::new(&config.profile, config.source_depth, z_d, k0).map_err(|e: RayError| infeasible(e.to_string()))?;
    let report = crb_report(&s, &config.noise, sampling).map_err(|e| infeasible(e.to_string()))?;
    if !report.valid {
        return Err(infeasible("the ray does not cross each depth exactly once".into()));
    }
    Ok(report)
}

/// Evaluates every cell, keeping the full report for valid ones.
pub fn sweep_reports(config: &SweepConfig) -> Vec<(SweepCell, Option<CrbReport>)> {
    let sampling = build_sampling_matrix(&config.profile, &config.noise.sample_depths).expect("validated config");
    let hs = config.h_values();
    let zs = config.z_values();
    (0..config.n_h * config.n_z)
        .into_par_iter()
        .map(|idx| {
            let (h, z_d) = (hs[idx % config.n_h], zs[idx / config.n_h]);
            match evaluate_point(config, &sampling, h, z_d) {
                Ok(report) => (
                    SweepCell {
                        h,
                        z_d,
                        valid: true,
                        k0: Some(report.k0),
                        terms: Some(report.crb_d),
                    },
                    Some(report),
                ),
                Err(_) => (SweepCell::invalid(h, z_d), None),
            }
        })
        .collect()
}

pub fn compute_sweep(config: &SweepConfig) -> SweepGrid {
    SweepGrid {
        n_h: config.n_h,
        n_z: config.n_z,
        cells: sweep_reports(config).into_iter().map(|(c, _)| c).collect(),
    }
}

/// Computes the grid and writes it to the configured CSV path.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepGrid, SweepError> {
    let grid = compute_sweep(config);
    write_file(&config.output.sweep_csv, &grid_to_csv(&grid))?;
    Ok(grid)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn grid_to_csv(grid: &SweepGrid) -> String {
    let mut out = String::with_capacity(grid.cells.len() * 200);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for c in &grid.cells {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let t = c.terms;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(c.h),
            fmt_f64(c.z_d),
            c.valid,
            opt(c.k0),
            opt(t.map(|t| t.tof)),
            opt(t.map(|t| t.depth_s)),
            opt(t.map(|t| t.depth_d)),
            opt(t.map(|t| t.ssp)),
            opt(t.map(|t| t.total())),
        );
    }
    out
}

/// Parses a sweep CSV back into a grid. `crb_total` is not read back; it is
/// the sum of the four terms.
pub fn parse_sweep_csv(text: &str) -> Result<SweepGrid, SweepError> {
    let malformed = |line: usize, reason: &str| SweepError::MalformedCsv {
        line,
        reason: reason.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| malformed(1, &e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(malformed(1, "unexpected header"));
    }
    let mut cells = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| malformed(line, &e.to_string()))?;
        let num = |k: usize| -> Result<Option<f64>, SweepError> {
            let f = &record[k];
            if f.is_empty() {
                Ok(None)
            } else {
                f.parse::<f64>().map(Some).map_err(|_| malformed(line, &format!("bad number `{f}`")))
            }
        };
        let h = num(0)?.ok_or_else(|| malformed(line, "empty h"))?;
        let z_d = num(1)?.ok_or_else(|| malformed(line, "empty z_d"))?;
        let valid = match &record[2] {
            "true" => true,
            "false" => false,
            other => return Err(malformed(line, &format!("bad validity flag `{other}`"))),
        };
        let values = [num(3)?, num(4)?, num(5)?, num(6)?, num(7)?, num(8)?];
        let cell = if valid {
            let v: Option<Vec<f64>> = values.iter().copied().collect();
            let v = v.ok_or_else(|| malformed(line, "valid cell with empty values"))?;
            SweepCell {
                h,
                z_d,
                valid,
                k0: Some(v[0]),
                terms: Some(CrbTerms {
                    tof: v[1],
                    depth_s: v[2],
                    depth_d: v[3],
                    ssp: v[4],
                }),
            }
        } else {
            if values.iter().any(Option::is_some) {
                return Err(malformed(line, "invalid cell with values"));
            }
            SweepCell::invalid(h, z_d)
        };
        cells.push(cell);
    }
    let first = cells.first().ok_or_else(|| malformed(2, "no data rows"))?;
    let n_h = cells.iter().take_while(|c| c.z_d == first.z_d).count();
    if cells.len() % n_h != 0 {
        return Err(malformed(cells.len() + 1, "row count is not a multiple of the row length"));
    }
    let n_z = cells.len() / n_h;
    for (idx, c) in cells.iter().enumerate() {
        if c.h != cells[idx % n_h].h || c.z_d != cells[(idx / n_h) * n_h].z_d {
            return Err(malformed(idx + 2, "cells are not on a row-major grid"));
        }
    }
    Ok(SweepGrid { n_h, n_z, cells })
}

/// Machine-readable single-point record.
#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub h: f64,
    pub z_d: f64,
    pub z_s: f64,
    #[serde(flatten)]
    pub report: CrbReport,
    pub cross_check_delta: f64,
}

pub fn query_point(config: &SweepConfig, h: f64, z_d: f64) -> Result<PointRecord, SweepError> {
    if !(0.0..=config.horizontal_extent).contains(&h) || !(0.0..=config.depth).contains(&z_d) {
        return Err(SweepError::OutsideEnvironment { h, z_d });
    }
    let sampling = build_sampling_matrix(&config.profile, &config.noise.sample_depths).expect("validated config");
    let report = evaluate_point(config, &sampling, h, z_d)?;
    Ok(PointRecord {
        h,
        z_d,
        z_s: config.source_depth,
        cross_check_delta: report.cross_check_delta(),
        report,
    })
}

/// Multi-line text summary of a point query.
pub fn describe_point(p: &PointRecord) -> String {
    let r = &p.report;
    let g = &r.geometry;
    let mut s = String::new();
    let _ = writeln!(s, "destination h = {} m, z_d = {} m (source z_s = {} m)", p.h, p.z_d, p.z_s);
    let _ = writeln!(s, "k0 = {:.10e} s/m, ToF = {:.9} s, range = {:.3} m", r.k0, g.t, g.range);
    let _ = writeln!(
        s,
        "angles: source {:.4} deg, destination {:.4} deg, line of sight {:.4} deg",
        g.theta_s.to_degrees(),
        g.theta_d.to_degrees(),
        g.theta_0.to_degrees()
    );
    let _ = writeln!(s, "range bound terms (m^2):");
    for (name, v) in ["tof", "depth_s", "depth_d", "ssp"].iter().zip(r.crb_d.as_array()) {
        let _ = writeln!(s, "  {name:<8} {v:.6e}  ({:.2}%)", 100.0 * v / r.crb_d_total());
    }
    let _ = writeln!(s, "  total    {:.6e}", r.crb_d_total());
    let _ = writeln!(s, "horizontal bound total: {:.6e} m^2", r.crb_h_total());
    let pr = &r.projection;
    let _ = writeln!(
        s,
        "projection: value {:.6e}, riemann {}, upper bound {:.6e}",
        pr.value,
        pr.riemann_approx.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "n/a".into()),
        pr.upper_bound
    );
    let _ = writeln!(s, "transform cross-check: {:.6e} m^2, relative delta {:.3e}", r.crb_d_transform, p.cross_check_delta);
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), SweepError> {
    let io = |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)
}
