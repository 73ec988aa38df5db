//! Discretized training loop: Forward-Euler rollouts recorded on a tape,
//! squared-error loss with optional L1 penalty, Adam updates, checkpoints.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParameterVector, Tape, Var};
use crate::data::{NormalizerStats, Trajectory};
use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::parallel::maybe_par_map;

/// A model whose rhs can be recorded on a tape for backpropagation through
/// the rollout recurrence.
pub trait Trainable: DynamicsModel {
    fn params(&self) -> &ParameterVector;
    fn params_mut(&mut self) -> &mut ParameterVector;

    /// Record one rhs evaluation. `params` are leaf nodes wired positionally
    /// to the flat parameter vector; `x` the current on-tape state.
    fn record_rhs(&self, tape: &mut Tape, params: &[Var], x: &[Var], u: &[f64])
        -> Result<Vec<Var>>;

    /// Map a measured row into the model's state space (used for x0).
    fn ingest_state(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(z.to_vec())
    }

    /// Map an on-tape state into the space the loss is computed in.
    fn record_loss_output(&self, _tape: &mut Tape, x: &[Var]) -> Result<Vec<Var>> {
        Ok(x.to_vec())
    }

    /// Map a measured row into loss space (the counterpart of
    /// [`Trainable::record_loss_output`] for targets).
    fn target_row(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(z.to_vec())
    }

    /// Map a model-space state back into measured space, for metrics.
    fn measured_output(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }

    /// Effective (post-reparametrization) value of flat parameter `idx`.
    fn effective_value(&self, idx: usize) -> f64 {
        self.params().values()[idx]
    }

    /// On-tape counterpart of [`Trainable::effective_value`].
    fn record_effective(&self, _tape: &mut Tape, params: &[Var], idx: usize) -> Var {
        params[idx]
    }

    /// Segment names the L1 penalty applies to by default.
    fn l1_groups(&self) -> Vec<&'static str> {
        Vec::new()
    }
}

/// Sum of squared errors over all rows and dimensions.
pub fn loss(predicted: &[Vec<f64>], measured: &[Vec<f64>]) -> f64 {
    assert_eq!(predicted.len(), measured.len(), "loss row count mismatch");
    let mut acc = 0.0;
    for (p, z) in predicted.iter().zip(measured) {
        assert_eq!(p.len(), z.len(), "loss dim mismatch");
        for (a, b) in p.iter().zip(z) {
            let d = a - b;
            acc += d * d;
        }
    }
    acc
}

/// Sum of absolute effective parameter values over the named groups.
pub fn l1_penalty<M: Trainable>(model: &M, groups: &[&str]) -> f64 {
    let mut acc = 0.0;
    for name in groups {
        if let Some(range) = model.params().segment(name) {
            for idx in range {
                acc += model.effective_value(idx).abs();
            }
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSpace {
    State,
    Temperature,
}

impl LossSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            LossSpace::State => "state",
            LossSpace::Temperature => "temperature",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "state" => Ok(LossSpace::State),
            "temperature" => Ok(LossSpace::Temperature),
            other => Err(Error::Config(format!("unknown loss space {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l1_weight: f64,
    pub seed: u64,
    pub gradient_clip: Option<f64>,
    pub val_fraction: f64,
    /// When set, must match the dataset step.
    pub h: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-2,
            batch_size: 8,
            l1_weight: 0.0,
            seed: 0,
            gradient_clip: None,
            val_fraction: 0.2,
            h: None,
        }
    }
}

/// Loss and parameter gradient of one trajectory rollout, by taping the full
/// Forward-Euler recurrence and sweeping backwards. The loss sums squared
/// errors over steps 1..=L; the L1 term (if any) is recorded on the same
/// tape so its gradient flows through the reparametrization.
pub fn trajectory_gradient<M: Trainable>(
    model: &M,
    traj: &Trajectory,
    h: f64,
    l1_weight: f64,
    traj_id: usize,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let param_vars: Vec<Var> = model
        .params()
        .values()
        .iter()
        .map(|v| tape.leaf(*v))
        .collect();
    let x0 = model.ingest_state(&traj.states[0])?;
    let mut x_vars: Vec<Var> = x0.iter().map(|v| tape.constant(*v)).collect();
    let h_var = tape.constant(h);
    let mut loss_var = tape.constant(0.0);
    for i in 0..traj.steps() {
        let rhs = model.record_rhs(&mut tape, &param_vars, &x_vars, &traj.inputs[i])?;
        x_vars = x_vars
            .iter()
            .zip(&rhs)
            .map(|(&x, &r)| {
                let dr = tape.mul(r, h_var);
                tape.add(x, dr)
            })
            .collect();
        if x_vars.iter().any(|&v| !tape.value(v).is_finite()) {
            return Err(Error::NonFiniteLoss {
                trajectory: traj_id,
                step: i,
            });
        }
        let out = model.record_loss_output(&mut tape, &x_vars)?;
        let target = model.target_row(&traj.states[i + 1])?;
        for (d, &o) in out.iter().enumerate() {
            let t = tape.constant(target[d]);
            let diff = tape.sub(o, t);
            let sq = tape.mul(diff, diff);
            loss_var = tape.add(loss_var, sq);
        }
    }
    if l1_weight > 0.0 {
        for name in model.l1_groups() {
            if let Some(range) = model.params().segment(name) {
                for idx in range {
                    let eff = model.record_effective(&mut tape, &param_vars, idx);
                    let mag = tape.abs(eff);
                    let weighted = tape.scale(mag, l1_weight);
                    loss_var = tape.add(loss_var, weighted);
                }
            }
        }
    }
    let value = tape.value(loss_var);
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss {
            trajectory: traj_id,
            step: traj.steps(),
        });
    }
    let adj = tape.backward(loss_var);
    let grad = param_vars.iter().map(|v| adj[v.index()]).collect();
    Ok((value, grad))
}

/// Plain (tape-free) rollout loss of one trajectory, squared error only.
pub fn trajectory_loss<M: Trainable>(model: &M, traj: &Trajectory, h: f64) -> Result<f64> {
    let states = rollout_states(model, traj, h)?;
    let mut acc = 0.0;
    for i in 1..states.len() {
        let out = model.loss_output_plain(&states[i])?;
        let target = model.target_row(&traj.states[i])?;
        for (a, b) in out.iter().zip(&target) {
            let d = a - b;
            acc += d * d;
        }
    }
    Ok(acc)
}

/// Model-space Forward-Euler rollout of one trajectory from its first row.
pub fn rollout_states<M: Trainable>(
    model: &M,
    traj: &Trajectory,
    h: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut x = model.ingest_state(&traj.states[0])?;
    let mut states = Vec::with_capacity(traj.len());
    states.push(x.clone());
    for (i, u) in traj.inputs.iter().enumerate() {
        let dx = model.rhs(&x, u).map_err(|e| e.at_step(i))?;
        for (xd, dd) in x.iter_mut().zip(&dx) {
            *xd += *dd * h;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteRhs { state: x.clone() }.at_step(i));
        }
        states.push(x.clone());
    }
    Ok(states)
}

/// Measured-space multistep prediction for one trajectory.
pub fn predict_measured<M: Trainable>(
    model: &M,
    traj: &Trajectory,
    h: f64,
) -> Result<Vec<Vec<f64>>> {
    rollout_states(model, traj, h)?
        .iter()
        .map(|x| model.measured_output(x))
        .collect()
}

trait LossOutputPlain {
    fn loss_output_plain(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl<M: Trainable> LossOutputPlain for M {
    fn loss_output_plain(&self, x: &[f64]) -> Result<Vec<f64>> {
        // Mirror of record_loss_output through a scratch tape keeps the two
        // paths arithmetically identical.
        let mut tape = Tape::new();
        let vars: Vec<Var> = x.iter().map(|v| tape.constant(*v)).collect();
        let out = self.record_loss_output(&mut tape, &vars)?;
        Ok(out.iter().map(|&v| tape.value(v)).collect())
    }
}

/// Mean loss and gradient over a batch of trajectories. Per-trajectory work
/// fans out in parallel; the reduction is an ordered sum over the collected
/// results, so the outcome does not depend on thread scheduling.
pub fn bptt_gradient<M: Trainable>(
    model: &M,
    batch: &[&Trajectory],
    h: f64,
    l1_weight: f64,
) -> Result<(f64, Vec<f64>)> {
    let results = maybe_par_map(batch, |traj| {
        let id = batch
            .iter()
            .position(|t| std::ptr::eq(*t, *traj))
            .unwrap_or(0);
        trajectory_gradient(model, traj, h, l1_weight, id)
    });
    let mut total_loss = 0.0;
    let mut grad = vec![0.0; model.params().len()];
    let count = results.len().max(1) as f64;
    for r in results {
        let (l, g) = r?;
        total_loss += l;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    total_loss /= count;
    for g in &mut grad {
        *g /= count;
    }
    Ok((total_loss, grad))
}

/// Adam optimizer state (bias-corrected first/second moments).
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub best_params: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochRecord>,
    pub rng_word_pos: u128,
    pub diverged: bool,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Deterministic train/validation split by chunk index.
pub fn split_dataset(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let val_count = ((n as f64) * val_fraction).floor() as usize;
    let val_count = val_count.min(n.saturating_sub(1));
    let val = idx.split_off(n - val_count);
    if val.is_empty() {
        // Too little data for a held-out split; validate on the training set.
        (idx.clone(), idx)
    } else {
        (idx, val)
    }
}

/// Epoch loop over shuffled batches. Records train/val loss per epoch,
/// returns the parameters with the best validation loss, and leaves the
/// model holding them. Fully reproducible from the seed.
pub fn train<M: Trainable>(
    model: &mut M,
    chunks: &[Trajectory],
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainResult> {
    if chunks.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let h = chunks[0].step();
    if let Some(want) = cfg.h {
        if (want - h).abs() > 1e-9 * h.max(1.0) {
            return Err(Error::Config(format!(
                "configured step {want} does not match dataset step {h}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_idx, val_idx) = {
        let mut idx: Vec<usize> = (0..chunks.len()).collect();
        idx.shuffle(&mut rng);
        let val_count = ((chunks.len() as f64) * cfg.val_fraction).floor() as usize;
        let val_count = val_count.min(chunks.len().saturating_sub(1));
        let val = idx.split_off(chunks.len() - val_count);
        if val.is_empty() {
            (idx.clone(), idx)
        } else {
            (idx, val)
        }
    };
    let val_loss_of = |model: &M| -> Result<f64> {
        let losses = maybe_par_map(&val_idx, |&i| trajectory_loss(model, &chunks[i], h));
        let mut acc = 0.0;
        for l in losses {
            acc += l?;
        }
        Ok(acc / val_idx.len() as f64)
    };

    let initial_val = val_loss_of(model)?;
    let mut best_params = model.params().values().to_vec();
    let mut best_val = initial_val;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut adam = AdamState::new(model.params().len());
    let mut diverged = false;

    let mut order = train_idx.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch_idx in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&Trajectory> = batch_idx.iter().map(|&i| &chunks[i]).collect();
            let (l, mut grad) = bptt_gradient(model, &batch, h, cfg.l1_weight)?;
            if let Some(clip) = cfg.gradient_clip {
                let max = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
                if max > clip {
                    let s = clip / max;
                    for g in &mut grad {
                        *g *= s;
                    }
                }
            }
            model.params_mut().set_gradient(&grad)?;
            adam.step(model.params_mut().values_mut(), &grad, cfg.learning_rate);
            epoch_loss += l;
            batches += 1;
        }
        if model.params().values().iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDiverged {
                epoch,
                reason: "non-finite parameters after update".into(),
            });
        }
        let train_loss = epoch_loss / batches.max(1) as f64;
        let val_loss = match val_loss_of(model) {
            Ok(v) => v,
            Err(_) => f64::NAN,
        };
        let rec = EpochRecord {
            epoch,
            train_loss,
            val_loss,
        };
        history.push(rec);
        progress(&rec);
        if !val_loss.is_finite() || val_loss > 1e6 * initial_val.max(1e-300) {
            diverged = true;
            break;
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = model.params().values().to_vec();
        }
    }

    model.params_mut().set_values(&best_params)?;
    Ok(TrainResult {
        best_params,
        best_epoch,
        best_val_loss: best_val,
        history,
        rng_word_pos: rng.get_word_pos(),
        diverged,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}

/// Model kinds a checkpoint can describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Building,
    GasIphs,
    VanillaNode,
    Arx,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Building => "building",
            ModelKind::GasIphs => "gas-iphs",
            ModelKind::VanillaNode => "vanilla-node",
            ModelKind::Arx => "arx",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "building" => Ok(ModelKind::Building),
            "gas-iphs" => Ok(ModelKind::GasIphs),
            "vanilla-node" => Ok(ModelKind::VanillaNode),
            "arx" => Ok(ModelKind::Arx),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// On-disk training artifact: flat parameters with their segment table, the
/// loss history, a flat config echo, and the RNG state. Floats are written
/// with 17 significant digits so a reload reproduces forward losses
/// bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub params: Vec<f64>,
    pub segments: Vec<(String, Range<usize>)>,
    pub history: Vec<EpochRecord>,
    pub extras: BTreeMap<String, String>,
    pub normalizer: Option<NormalizerStats>,
    pub seed: u64,
    pub rng_word_pos: u128,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl Checkpoint {
    pub fn extra_f64(&self, key: &str) -> Result<f64> {
        self.extras
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Config(format!("checkpoint missing numeric extra {key:?}")))
    }

    pub fn extra_usize(&self, key: &str) -> Result<usize> {
        self.extras
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Config(format!("checkpoint missing integer extra {key:?}")))
    }

    pub fn extra_str(&self, key: &str) -> Result<&str> {
        self.extras
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("checkpoint missing extra {key:?}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("iphs-checkpoint 1\n");
        out.push_str(&format!("kind = {}\n", self.kind.as_str()));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("rng_word_pos = {}\n", self.rng_word_pos));
        out.push_str(&format!("best_epoch = {}\n", self.best_epoch));
        out.push_str(&format!("best_val_loss = {}\n", fmt17(self.best_val_loss)));
        for (k, v) in &self.extras {
            out.push_str(&format!("extra {k} = {v}\n"));
        }
        for (name, r) in &self.segments {
            out.push_str(&format!("segment {name} {} {}\n", r.start, r.end));
        }
        for p in &self.params {
            out.push_str(&format!("param {}\n", fmt17(*p)));
        }
        for rec in &self.history {
            out.push_str(&format!(
                "history {} {} {}\n",
                rec.epoch,
                fmt17(rec.train_loss),
                fmt17(rec.val_loss)
            ));
        }
        if let Some(n) = &self.normalizer {
            let join = |v: &[f64]| v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(" ");
            let joinb = |v: &[bool]| {
                v.iter()
                    .map(|b| if *b { "1" } else { "0" })
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            out.push_str(&format!("normalizer state_mean {}\n", join(&n.state_mean)));
            out.push_str(&format!("normalizer state_std {}\n", join(&n.state_std)));
            out.push_str(&format!(
                "normalizer state_degenerate {}\n",
                joinb(&n.state_degenerate)
            ));
            out.push_str(&format!("normalizer input_mean {}\n", join(&n.input_mean)));
            out.push_str(&format!("normalizer input_std {}\n", join(&n.input_std)));
            out.push_str(&format!(
                "normalizer input_degenerate {}\n",
                joinb(&n.input_degenerate)
            ));
        }
        out.push_str("end\n");
        let mut f = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        f.write_all(out.as_bytes()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let fail = |line: usize, message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "iphs-checkpoint 1")) => {}
            _ => return Err(fail(1, "not an iphs checkpoint".into())),
        }
        let mut kind = None;
        let mut seed = 0u64;
        let mut rng_word_pos = 0u128;
        let mut best_epoch = 0usize;
        let mut best_val_loss = f64::NAN;
        let mut extras = BTreeMap::new();
        let mut segments = Vec::new();
        let mut params = Vec::new();
        let mut history = Vec::new();
        let mut norm_fields: BTreeMap<String, String> = BTreeMap::new();
        let mut saw_end = false;
        for (i, raw) in lines {
            let lineno = i + 1;
            let line = raw.trim_end();
            if line == "end" {
                saw_end = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("kind = ") {
                kind = Some(ModelKind::parse(rest).map_err(|e| fail(lineno, e.to_string()))?);
            } else if let Some(rest) = line.strip_prefix("seed = ") {
                seed = rest
                    .parse()
                    .map_err(|_| fail(lineno, "bad seed".to_string()))?;
            } else if let Some(rest) = line.strip_prefix("rng_word_pos = ") {
                rng_word_pos = rest
                    .parse()
                    .map_err(|_| fail(lineno, "bad rng_word_pos".to_string()))?;
            } else if let Some(rest) = line.strip_prefix("best_epoch = ") {
                best_epoch = rest
                    .parse()
                    .map_err(|_| fail(lineno, "bad best_epoch".to_string()))?;
            } else if let Some(rest) = line.strip_prefix("best_val_loss = ") {
                best_val_loss = rest
                    .parse()
                    .map_err(|_| fail(lineno, "bad best_val_loss".to_string()))?;
            } else if let Some(rest) = line.strip_prefix("extra ") {
                let (k, v) = rest
                    .split_once(" = ")
                    .ok_or_else(|| fail(lineno, "malformed extra".to_string()))?;
                extras.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("segment ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(fail(lineno, "malformed segment".into()));
                }
                let start: usize = parts[1]
                    .parse()
                    .map_err(|_| fail(lineno, "bad segment start".to_string()))?;
                let end: usize = parts[2]
                    .parse()
                    .map_err(|_| fail(lineno, "bad segment end".to_string()))?;
                segments.push((parts[0].to_string(), start..end));
            } else if let Some(rest) = line.strip_prefix("param ") {
                params.push(
                    rest.parse::<f64>()
                        .map_err(|_| fail(lineno, "bad param".to_string()))?,
                );
            } else if let Some(rest) = line.strip_prefix("history ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(fail(lineno, "malformed history".into()));
                }
                history.push(EpochRecord {
                    epoch: parts[0]
                        .parse()
                        .map_err(|_| fail(lineno, "bad epoch".to_string()))?,
                    train_loss: parts[1]
                        .parse()
                        .map_err(|_| fail(lineno, "bad train loss".to_string()))?,
                    val_loss: parts[2]
                        .parse()
                        .map_err(|_| fail(lineno, "bad val loss".to_string()))?,
                });
            } else if let Some(rest) = line.strip_prefix("normalizer ") {
                let (k, v) = rest
                    .split_once(' ')
                    .ok_or_else(|| fail(lineno, "malformed normalizer line".to_string()))?;
                norm_fields.insert(k.to_string(), v.to_string());
            } else if !line.is_empty() {
                return Err(fail(lineno, format!("unrecognized line {line:?}")));
            }
        }
        if !saw_end {
            return Err(fail(0, "missing end marker (truncated checkpoint)".into()));
        }
        let normalizer = if norm_fields.is_empty() {
            None
        } else {
            let floats = |k: &str| -> Result<Vec<f64>> {
                norm_fields
                    .get(k)
                    .ok_or_else(|| fail(0, format!("missing normalizer field {k}")))?
                    .split_whitespace()
                    .map(|s| s.parse().map_err(|_| fail(0, format!("bad float in {k}"))))
                    .collect()
            };
            let bools = |k: &str| -> Result<Vec<bool>> {
                norm_fields
                    .get(k)
                    .ok_or_else(|| fail(0, format!("missing normalizer field {k}")))?
                    .split_whitespace()
                    .map(|s| Ok(s == "1"))
                    .collect()
            };
            Some(NormalizerStats {
                state_mean: floats("state_mean")?,
                state_std: floats("state_std")?,
                state_degenerate: bools("state_degenerate")?,
                input_mean: floats("input_mean")?,
                input_std: floats("input_std")?,
                input_degenerate: bools("input_degenerate")?,
            })
        };
        Ok(Checkpoint {
            kind: kind.ok_or_else(|| fail(0, "missing kind".into()))?,
            params,
            segments,
            history,
            extras,
            normalizer,
            seed,
            rng_word_pos,
            best_epoch,
            best_val_loss,
        })
    }
}
