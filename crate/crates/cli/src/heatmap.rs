//! Binary PPM (P6) rendering of one sweep column.
//!
//! Pixel `(x, y)` shows cell `(i_h = x, i_z = y)`, so the surface is the top
//! row and range grows to the right. Valid cells map through
//! `t = (log10 v - lo) / (hi - lo)`, where `lo` and `hi` are the extreme
//! `log10` values over the valid, positive cells of the column (`t = 0` when
//! `hi == lo` or `v <= 0`). The colour is the piecewise-linear interpolation
//! of [`COLORMAP`] at `4t`: with `k = min(floor(4t), 3)` and `u = 4t - k`,
//! each channel is `round(c_k + u (c_{k+1} - c_k))`. Invalid cells are white.

use std::path::Path;

use thiserror::Error;

use crate::sweep::{parse_sweep_csv, SweepError, SweepGrid};

/// Five anchor colours at `t = 0, 0.25, 0.5, 0.75, 1`.
pub const COLORMAP: [[u8; 3]; 5] = [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];
pub const INVALID_COLOR: [u8; 3] = [255, 255, 255];
/// Columns that can be rendered.
pub const VALUE_COLUMNS: [&str; 6] = ["k0", "crb_tof", "crb_depth_s", "crb_depth_d", "crb_ssp", "crb_total"];

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("unknown column `{0}`; expected one of k0, crb_tof, crb_depth_s, crb_depth_d, crb_ssp, crb_total")]
    UnknownColumn(String),
    #[error("malformed sweep CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Scale of a rendered image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorScale {
    /// `log10` of the smallest and largest valid positive value.
    pub log10_min: f64,
    pub log10_max: f64,
    pub valid_cells: usize,
}

impl std::fmt::Display for ColorScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.valid_cells == 0 {
            write!(f, "no valid cells")
        } else {
            write!(
                f,
                "log10 scale [{:.6}, {:.6}] (values {:.6e} to {:.6e}), {} valid cells",
                self.log10_min,
                self.log10_max,
                10f64.powf(self.log10_min),
                10f64.powf(self.log10_max),
                self.valid_cells
            )
        }
    }
}

pub fn colormap(t: f64) -> [u8; 3] {
    let x = 4.0 * t.clamp(0.0, 1.0);
    let k = (x.floor() as usize).min(3);
    let u = x - k as f64;
    let (a, b) = (COLORMAP[k], COLORMAP[k + 1]);
    std::array::from_fn(|i| (a[i] as f64 + u * (b[i] as f64 - a[i] as f64)).round() as u8)
}

/// Renders a column of an in-memory grid to PPM bytes.
pub fn render_grid(grid: &SweepGrid, column: &str) -> Result<(Vec<u8>, ColorScale), HeatmapError> {
    if !VALUE_COLUMNS.contains(&column) {
        return Err(HeatmapError::UnknownColumn(column.to_string()));
    }
    let logs: Vec<f64> = grid
        .valid_cells()
        .filter_map(|c| c.column(column))
        .filter(|v| *v > 0.0)
        .map(f64::log10)
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = ColorScale {
        log10_min: lo,
        log10_max: hi,
        valid_cells: grid.valid_cells().count(),
    };
    let mut out = format!("P6\n{} {}\n255\n", grid.n_h, grid.n_z).into_bytes();
    for c in &grid.cells {
        let rgb = match (c.valid, c.column(column)) {
            (true, Some(v)) => {
                let t = if v > 0.0 && hi > lo { (v.log10() - lo) / (hi - lo) } else { 0.0 };
                colormap(t)
            }
            _ => INVALID_COLOR,
        };
        out.extend_from_slice(&rgb);
    }
    Ok((out, scale))
}

/// Reads a sweep CSV and writes the chosen column as a PPM image.
pub fn render_heatmap(csv_path: &Path, column: &str, out_path: &Path) -> Result<ColorScale, HeatmapError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HeatmapError::Io { path, source }
    };
    if !VALUE_COLUMNS.contains(&column) {
        return Err(HeatmapError::UnknownColumn(column.to_string()));
    }
    let text = std::fs::read_to_string(csv_path).map_err(io(csv_path))?;
    let grid = parse_sweep_csv(&text).map_err(|e| match e {
        SweepError::MalformedCsv { line, reason } => HeatmapError::MalformedCsv { line, reason },
        other => HeatmapError::MalformedCsv {
            line: 0,
            reason: other.to_string(),
        },
    })?;
    let (bytes, scale) = render_grid(&grid, column)?;
    std::fs::write(out_path, bytes).map_err(io(out_path))?;
    Ok(scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::SweepCell;
    use uwcrb::crb::CrbTerms;

    fn cell(h: f64, z_d: f64, total: Option<f64>) -> SweepCell {
        SweepCell {
            h,
            z_d,
            valid: total.is_some(),
            k0: total.map(|_| 1e-4),
            terms: total.map(|t| CrbTerms {
                tof: 0.0,
                depth_s: 0.0,
                depth_d: 0.0,
                ssp: t,
            }),
        }
    }

    #[test]
    fn colormap_anchors() {
        assert_eq!(colormap(0.0), COLORMAP[0]);
        assert_eq!(colormap(0.5), COLORMAP[2]);
        assert_eq!(colormap(1.0), COLORMAP[4]);
        assert_eq!(colormap(0.125), [64, 42, 112]);
    }

    #[test]
    fn all_invalid_grid_is_white() {
        let grid = SweepGrid {
            n_h: 3,
            n_z: 2,
            cells: (0..6).map(|i| cell(i as f64, 0.0, None)).collect(),
        };
        let (bytes, scale) = render_grid(&grid, "crb_total").unwrap();
        let header = b"P6\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert!(bytes[header.len()..].iter().all(|b| *b == 255));
        assert_eq!(bytes.len(), header.len() + 18);
        assert_eq!(scale.valid_cells, 0);
    }

    #[test]
    fn two_by_two_matches_formula() {
        // log10 values 0, 1, 2: t = 0, 0.5, 1, plus one invalid cell.
        let grid = SweepGrid {
            n_h: 2,
            n_z: 2,
            cells: vec![
                cell(0.0, 0.0, None),
                cell(1.0, 0.0, Some(1.0)),
                cell(0.0, 1.0, Some(10.0)),
                cell(1.0, 1.0, Some(100.0)),
            ],
        };
        let (bytes, scale) = render_grid(&grid, "crb_total").unwrap();
        assert_eq!((scale.log10_min, scale.log10_max), (0.0, 2.0));
        let px = &bytes[b"P6\n2 2\n255\n".len()..];
        assert_eq!(px, [255, 255, 255, 68, 1, 84, 33, 145, 140, 253, 231, 37]);
    }

    #[test]
    fn unknown_column() {
        let grid = SweepGrid {
            n_h: 2,
            n_z: 1,
            cells: vec![cell(0.0, 0.0, None), cell(1.0, 0.0, None)],
        };
        assert!(matches!(render_grid(&grid, "crb_magic"), Err(HeatmapError::UnknownColumn(_))));
    }
}
