//! Horizon-MAE computation and the tidy metrics file format
//! (`step,series,value`).

use std::collections::BTreeMap;
use std::path::Path;

use iphs::error::{Error, Result};

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Per-step mean absolute error curve of one named series. `start_step` is
/// the first horizon offset with a prediction (nonzero for lag models).
#[derive(Debug, Clone, PartialEq)]
pub struct MaeCurve {
    pub series: String,
    pub start_step: usize,
    pub values: Vec<f64>,
}

impl MaeCurve {
    pub fn steps(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(k, v)| (self.start_step + k, *v))
    }

    pub fn mean_over_horizon(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    pub fn end_of_horizon(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NAN)
    }

    pub fn last_step(&self) -> usize {
        self.start_step + self.values.len().saturating_sub(1)
    }
}

/// Accumulate |prediction - measurement| averaged over dimensions and
/// chunks, per horizon step. Each item pairs predicted rows (aligned so that
/// row k corresponds to measured row `start_step + k`) with the measured
/// rows of its chunk.
pub fn mae_curve(
    series: &str,
    start_step: usize,
    per_chunk: &[(Vec<Vec<f64>>, &[Vec<f64>])],
) -> Result<MaeCurve> {
    let horizon = per_chunk
        .iter()
        .map(|(p, _)| p.len())
        .min()
        .unwrap_or(0);
    let mut values = vec![0.0; horizon];
    for (pred, meas) in per_chunk {
        for k in 0..horizon {
            let m = &meas[start_step + k];
            let p = &pred[k];
            if p.len() != m.len() {
                return Err(Error::DimensionMismatch {
                    context: "mae rows",
                    expected: m.len(),
                    got: p.len(),
                });
            }
            let abs: f64 = p.iter().zip(m).map(|(a, b)| (a - b).abs()).sum();
            values[k] += abs / m.len() as f64;
        }
    }
    for v in &mut values {
        *v /= per_chunk.len().max(1) as f64;
    }
    Ok(MaeCurve {
        series: series.to_string(),
        start_step,
        values,
    })
}

/// Write curves as tidy CSV: `step,series,value`.
pub fn write_curves(path: &Path, curves: &[&MaeCurve]) -> Result<()> {
    let mut out = String::from("step,series,value\n");
    for curve in curves {
        for (step, v) in curve.steps() {
            out.push_str(&format!("{step},{},{}\n", curve.series, fmt17(v)));
        }
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Read a tidy metrics file back into per-series curves.
pub fn read_curves(path: &Path) -> Result<Vec<MaeCurve>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut by_series: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "step,series,value" {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: 1,
                    message: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: "expected step,series,value".into(),
            });
        }
        let step: usize = parts[0].parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: format!("bad step {:?}", parts[0]),
        })?;
        let value: f64 = parts[2].parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: format!("bad value {:?}", parts[2]),
        })?;
        by_series
            .entry(parts[1].to_string())
            .or_default()
            .push((step, value));
    }
    let mut curves = Vec::new();
    for (series, mut rows) in by_series {
        rows.sort_by_key(|(s, _)| *s);
        let start_step = rows.first().map(|(s, _)| *s).unwrap_or(0);
        for (offset, (s, _)) in rows.iter().enumerate() {
            if *s != start_step + offset {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: 0,
                    message: format!("series {series} has non-contiguous steps"),
                });
            }
        }
        curves.push(MaeCurve {
            series,
            start_step,
            values: rows.into_iter().map(|(_, v)| v).collect(),
        });
    }
    Ok(curves)
}

/// key,value summary file.
pub fn write_summary(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{k},{v}\n"));
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn fmt_float(v: f64) -> String {
    fmt17(v)
}
