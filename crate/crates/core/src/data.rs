//! Dataset generation, CSV interchange, chunking, and normalization.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};

/// Sidecar metadata stored next to every dataset CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub source: String,
    pub seed: Option<u64>,
    pub noise_factor: Option<f64>,
    pub state_dim: usize,
    pub input_dim: usize,
    pub step: f64,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub normalizer: Option<NormalizerStats>,
}

/// A sampled full-state trajectory: `L + 1` state rows, `L` input rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub metadata: Metadata,
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::Config("trajectory has no states".into()));
        }
        if self.times.len() != self.states.len() {
            return Err(Error::DimensionMismatch {
                context: "trajectory times",
                expected: self.states.len(),
                got: self.times.len(),
            });
        }
        if self.inputs.len() + 1 != self.states.len() {
            return Err(Error::DimensionMismatch {
                context: "trajectory inputs",
                expected: self.states.len() - 1,
                got: self.inputs.len(),
            });
        }
        let n = self.states[0].len();
        if self.states.iter().any(|row| row.len() != n) {
            return Err(Error::Config("ragged state rows".into()));
        }
        let m = self.inputs.first().map_or(0, Vec::len);
        if self.inputs.iter().any(|row| row.len() != m) {
            return Err(Error::Config("ragged input rows".into()));
        }
        let h = self.step();
        for w in self.times.windows(2) {
            let dt = w[1] - w[0];
            if dt <= 0.0 || (dt - h).abs() > 1e-9 * h.max(1.0) {
                return Err(Error::Config(format!(
                    "non-uniform time step: {dt} vs {h}"
                )));
            }
        }
        Ok(())
    }

    /// Number of state rows.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of transitions.
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn step(&self) -> f64 {
        if self.times.len() < 2 {
            self.metadata.step
        } else {
            self.times[1] - self.times[0]
        }
    }
}

/// Classic fixed-step fourth-order Runge-Kutta integration sampled every `h`.
///
/// Each sampling interval is integrated with `substeps` internal RK4 steps of
/// size `h / substeps`; the input function is evaluated at the exact stage
/// times. Aborts when the state norm exceeds 1e12.
pub fn rk4_generate<F>(
    model: &dyn DynamicsModel,
    x0: &[f64],
    input_fn: F,
    h: f64,
    steps: usize,
    substeps: usize,
) -> Result<Trajectory>
where
    F: Fn(f64) -> Vec<f64>,
{
    assert!(h > 0.0, "rk4 step must be positive");
    assert!(substeps >= 1);
    let n = model.state_dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "rk4 initial state",
            expected: n,
            got: x0.len(),
        });
    }
    let hs = h / substeps as f64;
    let mut x = x0.to_vec();
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    let mut times = Vec::with_capacity(steps + 1);
    states.push(x.clone());
    times.push(0.0);
    for i in 0..steps {
        let t0 = i as f64 * h;
        inputs.push(input_fn(t0));
        for s in 0..substeps {
            let t = t0 + s as f64 * hs;
            x = rk4_step(model, &x, t, hs, &input_fn).map_err(|e| e.at_step(i))?;
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > 1e12 {
            return Err(Error::Divergence { step: i, norm });
        }
        states.push(x.clone());
        times.push((i + 1) as f64 * h);
    }
    Ok(Trajectory {
        times,
        states,
        inputs,
        state_labels: model.state_labels(),
        input_labels: model.input_labels(),
        metadata: Metadata {
            source: "rk4".into(),
            state_dim: n,
            input_dim: model.input_dim(),
            step: h,
            ..Metadata::default()
        },
    })
}

fn rk4_step<F>(
    model: &dyn DynamicsModel,
    x: &[f64],
    t: f64,
    h: f64,
    input_fn: &F,
) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Vec<f64>,
{
    let eval = |x: &[f64], t: f64| model.rhs(x, &input_fn(t));
    let k1 = eval(x, t)?;
    let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
    let k2 = eval(&x2, t + 0.5 * h)?;
    let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
    let k3 = eval(&x3, t + 0.5 * h)?;
    let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
    let k4 = eval(&x4, t + h)?;
    Ok(x.iter()
        .enumerate()
        .map(|(d, a)| a + h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]))
        .collect())
}

/// Add zero-mean Gaussian noise to every state dimension, with standard
/// deviation `factor` times the sample standard deviation of that dimension.
/// Inputs and times are untouched; output is deterministic per seed.
pub fn add_noise(traj: &Trajectory, factor: f64, seed: u64) -> Trajectory {
    assert!(factor >= 0.0);
    let mut noisy = traj.clone();
    if factor == 0.0 || traj.states.len() < 2 {
        return noisy;
    }
    let stds = state_stds(&traj.states);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for row in &mut noisy.states {
        for (d, v) in row.iter_mut().enumerate() {
            if stds[d] > 0.0 {
                let dist = Normal::new(0.0, factor * stds[d]).expect("valid std");
                *v += dist.sample(&mut rng);
            }
        }
    }
    noisy.metadata.noise_factor = Some(factor);
    noisy.metadata.seed = Some(seed);
    noisy
}

/// Per-dimension sample standard deviation (n - 1 denominator).
pub fn state_stds(states: &[Vec<f64>]) -> Vec<f64> {
    let n = states.len();
    let dims = states.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; dims];
    for row in states {
        for (d, v) in row.iter().enumerate() {
            mean[d] += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; dims];
    for row in states {
        for (d, v) in row.iter().enumerate() {
            var[d] += (v - mean[d]) * (v - mean[d]);
        }
    }
    var.iter().map(|v| (v / (n - 1) as f64).sqrt()).collect()
}

/// Split into consecutive non-overlapping windows of `len` state rows each
/// (`len - 1` transitions per window). A trailing partial window is dropped;
/// a window longer than the trajectory yields an empty list.
pub fn chunk(traj: &Trajectory, len: usize) -> Result<Vec<Trajectory>> {
    if len < 2 {
        return Err(Error::Config(format!("chunk length {len} must be >= 2")));
    }
    let n_chunks = traj.len() / len;
    let mut out = Vec::with_capacity(n_chunks);
    for k in 0..n_chunks {
        let a = k * len;
        out.push(Trajectory {
            times: traj.times[a..a + len].to_vec(),
            states: traj.states[a..a + len].to_vec(),
            inputs: traj.inputs[a..a + len - 1].to_vec(),
            state_labels: traj.state_labels.clone(),
            input_labels: traj.input_labels.clone(),
            metadata: traj.metadata.clone(),
        });
    }
    Ok(out)
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.toml")
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write a trajectory as CSV (17 significant digits, lossless for f64) plus
/// a `<stem>.meta.toml` sidecar with the metadata. Input cells are empty on
/// the final row, which has no outgoing transition.
pub fn csv_write(path: &Path, traj: &Trajectory) -> Result<()> {
    traj.validate()?;
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["time[s]".to_string()];
    header.extend(traj.state_labels.iter().cloned());
    header.extend(traj.input_labels.iter().cloned());
    w.write_record(&header)
        .map_err(|e| csv_error(path, &e))?;
    let m = traj.input_dim();
    for (i, row) in traj.states.iter().enumerate() {
        let mut rec = vec![fmt17(traj.times[i])];
        rec.extend(row.iter().map(|v| fmt17(*v)));
        if i < traj.inputs.len() {
            rec.extend(traj.inputs[i].iter().map(|v| fmt17(*v)));
        } else {
            rec.extend(std::iter::repeat(String::new()).take(m));
        }
        w.write_record(&rec).map_err(|e| csv_error(path, &e))?;
    }
    w.flush().map_err(io_err(path))?;

    let mut meta = traj.metadata.clone();
    meta.state_dim = traj.state_dim();
    meta.input_dim = traj.input_dim();
    meta.step = traj.step();
    let text = toml::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?;
    let side = sidecar_path(path);
    let mut f = std::fs::File::create(&side).map_err(io_err(&side))?;
    f.write_all(text.as_bytes()).map_err(io_err(&side))?;
    Ok(())
}

fn csv_error(path: &Path, e: &csv::Error) -> Error {
    let line = match e.position() {
        Some(pos) => pos.line() as usize,
        None => 0,
    };
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: e.to_string(),
    }
}

/// Read a dataset written by [`csv_write`], using the sidecar for dimensions.
pub fn csv_read(path: &Path) -> Result<Trajectory> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(io_err(&side))?;
    let meta: Metadata = toml::from_str(&text).map_err(|e| Error::Parse {
        path: side.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    csv_read_with_dims(path, meta.state_dim, meta.input_dim, meta)
}

pub fn csv_read_with_dims(
    path: &Path,
    n: usize,
    m: usize,
    metadata: Metadata,
) -> Result<Trajectory> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let parse_fail = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };

    let header = rdr
        .headers()
        .map_err(|e| csv_error(path, &e))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    if header.len() != 1 + n + m {
        return Err(parse_fail(
            1,
            format!("expected {} columns, found {}", 1 + n + m, header.len()),
        ));
    }
    for (c, name) in header.iter().enumerate() {
        if !(name.contains('[') && name.ends_with(']')) {
            return Err(parse_fail(
                1,
                format!("column {c} ({name:?}) lacks a [unit] suffix"),
            ));
        }
    }

    let mut times = Vec::new();
    let mut states: Vec<Vec<f64>> = Vec::new();
    let mut inputs: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, &e))?;
        let line = rec
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(times.len() + 2);
        if rec.len() != 1 + n + m {
            return Err(parse_fail(
                line,
                format!("expected {} cells, found {}", 1 + n + m, rec.len()),
            ));
        }
        let cell = |c: usize| -> Result<f64> {
            rec[c].trim().parse::<f64>().map_err(|_| {
                parse_fail(line, format!("non-numeric cell {:?} in column {c}", &rec[c]))
            })
        };
        times.push(cell(0)?);
        let mut srow = Vec::with_capacity(n);
        for c in 0..n {
            srow.push(cell(1 + c)?);
        }
        states.push(srow);
        let input_cells: Vec<&str> = (0..m).map(|c| rec[1 + n + c].trim()).collect();
        if input_cells.iter().all(|c| c.is_empty()) {
            // final row carries no transition
            inputs.push(Vec::new());
        } else {
            let mut irow = Vec::with_capacity(m);
            for c in 0..m {
                irow.push(cell(1 + n + c)?);
            }
            inputs.push(irow);
        }
    }
    // Drop the trailing empty input marker; everything before it must be full.
    match inputs.pop() {
        Some(last) if last.is_empty() => {}
        Some(last) => inputs.push(last),
        None => {}
    }
    if m > 0 {
        if let Some(bad) = inputs.iter().position(Vec::is_empty) {
            return Err(parse_fail(
                bad + 2,
                "empty input cells before the final row".into(),
            ));
        }
    }
    if inputs.len() + 1 != states.len() {
        return Err(parse_fail(
            times.len() + 1,
            format!(
                "{} state rows require {} input rows, found {}",
                states.len(),
                states.len() - 1,
                inputs.len()
            ),
        ));
    }

    let traj = Trajectory {
        times,
        states,
        inputs,
        state_labels: header[1..1 + n].to_vec(),
        input_labels: header[1 + n..].to_vec(),
        metadata,
    };
    traj.validate()?;
    Ok(traj)
}

/// Per-dimension z-score statistics fitted on the training split only.
/// Degenerate dimensions (zero variance) are flagged and passed through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerStats {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub state_degenerate: Vec<bool>,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub input_degenerate: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub stats: NormalizerStats,
}

impl Normalizer {
    pub fn fit(trajs: &[&Trajectory]) -> Result<Self> {
        let state_rows: Vec<&[f64]> = trajs
            .iter()
            .flat_map(|t| t.states.iter().map(Vec::as_slice))
            .collect();
        let input_rows: Vec<&[f64]> = trajs
            .iter()
            .flat_map(|t| t.inputs.iter().map(Vec::as_slice))
            .collect();
        if state_rows.is_empty() {
            return Err(Error::Config("cannot fit normalizer on empty data".into()));
        }
        let (state_mean, state_std, state_degenerate) = moments(&state_rows);
        let (input_mean, input_std, input_degenerate) = moments(&input_rows);
        Ok(Self {
            stats: NormalizerStats {
                state_mean,
                state_std,
                state_degenerate,
                input_mean,
                input_std,
                input_degenerate,
            },
        })
    }

    pub fn from_stats(stats: NormalizerStats) -> Self {
        Self { stats }
    }

    pub fn normalize_state(&self, row: &[f64]) -> Result<Vec<f64>> {
        zscore(row, &self.stats.state_mean, &self.stats.state_std, false)
    }

    pub fn denormalize_state(&self, row: &[f64]) -> Result<Vec<f64>> {
        zscore(row, &self.stats.state_mean, &self.stats.state_std, true)
    }

    pub fn normalize_input(&self, row: &[f64]) -> Result<Vec<f64>> {
        zscore(row, &self.stats.input_mean, &self.stats.input_std, false)
    }

    pub fn normalize_trajectory(&self, traj: &Trajectory) -> Result<Trajectory> {
        let mut out = traj.clone();
        for row in &mut out.states {
            *row = self.normalize_state(row)?;
        }
        for row in &mut out.inputs {
            *row = self.normalize_input(row)?;
        }
        Ok(out)
    }

    pub fn denormalize_trajectory(&self, traj: &Trajectory) -> Result<Trajectory> {
        let mut out = traj.clone();
        for row in &mut out.states {
            *row = self.denormalize_state(row)?;
        }
        for row in &mut out.inputs {
            *row = zscore(row, &self.stats.input_mean, &self.stats.input_std, true)?;
        }
        Ok(out)
    }
}

fn moments(rows: &[&[f64]]) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let dims = rows.first().map_or(0, |r| r.len());
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; dims];
    for row in rows {
        for (d, v) in row.iter().enumerate() {
            mean[d] += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dims];
    for row in rows {
        for (d, v) in row.iter().enumerate() {
            var[d] += (v - mean[d]) * (v - mean[d]);
        }
    }
    let mut std = vec![0.0; dims];
    let mut degenerate = vec![false; dims];
    for d in 0..dims {
        let s = (var[d] / n).sqrt();
        if s > 0.0 {
            std[d] = s;
        } else {
            std[d] = 1.0;
            degenerate[d] = true;
            mean[d] = 0.0; // pass degenerate dimensions through unchanged
        }
    }
    (mean, std, degenerate)
}

fn zscore(row: &[f64], mean: &[f64], std: &[f64], inverse: bool) -> Result<Vec<f64>> {
    if row.len() != mean.len() {
        return Err(Error::DimensionMismatch {
            context: "normalizer",
            expected: mean.len(),
            got: row.len(),
        });
    }
    Ok(row
        .iter()
        .enumerate()
        .map(|(d, v)| {
            if inverse {
                v * std[d] + mean[d]
            } else {
                (v - mean[d]) / std[d]
            }
        })
        .collect())
}
