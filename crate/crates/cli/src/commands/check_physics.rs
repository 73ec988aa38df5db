//! Run the physics-invariant checkers along the validation trajectories of
//! a checkpointed model. Violations of constructive guarantees exit nonzero;
//! models without such guarantees are reported informationally.

use std::fmt::Write as _;

use iphs::autodiff::softplus;
use iphs::building::BuildingInputs;
use iphs::data::{chunk, csv_read, Trajectory};
use iphs::error::{Error, Result};
use iphs::invariants::{check_energy_conservation, check_entropy_production, check_monotonicity};
use iphs::trainer::{rollout_states, split_dataset, Checkpoint, ModelKind, Trainable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assemble::{
    building_from_checkpoint, gas_from_checkpoint, normalizer_from_checkpoint,
    vanilla_from_checkpoint,
};
use crate::config::{ensure_out_dir, write_resolved, CheckPhysicsConfig};

const ENERGY_TOL: f64 = 1e-10;
const ENTROPY_TOL: f64 = -1e-12;

struct Report {
    lines: Vec<String>,
    violations: usize,
}

impl Report {
    fn new() -> Self {
        Self {
            lines: Vec::new(),
            violations: 0,
        }
    }

    fn pass(&mut self, msg: String) {
        self.lines.push(format!("pass  {msg}"));
    }

    fn fail(&mut self, msg: String) {
        self.violations += 1;
        self.lines.push(format!("FAIL  {msg}"));
    }

    fn info(&mut self, msg: String) {
        self.lines.push(format!("info  {msg}"));
    }
}

fn val_chunks(ckpt: &Checkpoint, dataset: &Trajectory) -> Result<Vec<Trajectory>> {
    let chunk_len = ckpt.extra_usize("chunk_len")?;
    let val_fraction = ckpt.extra_f64("val_fraction")?;
    let chunks = chunk(dataset, chunk_len)?;
    let (_, val_idx) = split_dataset(chunks.len(), val_fraction, ckpt.seed);
    Ok(val_idx.into_iter().map(|i| chunks[i].clone()).collect())
}

fn check_parameters(ckpt: &Checkpoint, report: &mut Report, reparametrized: bool) {
    let mut bad = Vec::new();
    for (name, range) in &ckpt.segments {
        for (k, idx) in range.clone().enumerate() {
            let raw = ckpt.params[idx];
            if !raw.is_finite() {
                bad.push(format!("{name}[{k}] raw value {raw} is not finite"));
            } else if reparametrized {
                let eff = softplus(raw);
                if !(eff > 0.0) {
                    bad.push(format!(
                        "{name}[{k}] effective value {eff:e} is not strictly positive"
                    ));
                }
            }
        }
    }
    if bad.is_empty() {
        report.pass(format!(
            "parameter validity: {} parameters finite{}",
            ckpt.params.len(),
            if reparametrized {
                ", all effective coefficients strictly positive"
            } else {
                ""
            }
        ));
    } else {
        for b in bad {
            report.fail(b);
        }
    }
}

fn check_building(
    ckpt: &Checkpoint,
    chunks: &[Trajectory],
    draws: usize,
    seed: u64,
    report: &mut Report,
) -> Result<()> {
    check_parameters(ckpt, report, true);
    let model = match building_from_checkpoint(ckpt) {
        Ok(m) => m,
        Err(e) => {
            report.fail(format!("model reconstruction failed: {e}"));
            return Ok(());
        }
    };
    let mut max_energy: f64 = 0.0;
    let mut min_entropy = f64::INFINITY;
    let mut states_checked = 0usize;
    for c in chunks {
        for row in &c.states {
            let s = model.ingest_state(row)?;
            max_energy = max_energy.max(check_energy_conservation(&model, &s)?);
            min_entropy = min_entropy.min(check_entropy_production(&model, &s)?);
            states_checked += 1;
        }
    }
    if max_energy <= ENERGY_TOL {
        report.pass(format!(
            "energy conservation: max relative residual {max_energy:.3e} over {states_checked} states (tol {ENERGY_TOL:.0e})"
        ));
    } else {
        report.fail(format!(
            "energy conservation: residual {max_energy:.3e} exceeds {ENERGY_TOL:.0e}"
        ));
    }
    if min_entropy >= ENTROPY_TOL {
        report.pass(format!(
            "entropy production: min rate {min_entropy:.3e} over {states_checked} states (tol {ENTROPY_TOL:.0e})"
        ));
    } else {
        report.fail(format!(
            "entropy production: rate {min_entropy:.3e} below {ENTROPY_TOL:.0e}"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n_zones();
    let mut mono_ok = true;
    for _ in 0..draws {
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(265.0..315.0)).collect();
        let s = iphs::building::entropy_from_temperature(&model, &t)?;
        let lo = BuildingInputs {
            t_e: rng.gen_range(255.0..300.0),
            q_s: (0..n).map(|_| rng.gen_range(-500.0..500.0)).collect(),
            q_h: (0..n).map(|_| rng.gen_range(-2000.0..2000.0)).collect(),
            q_c: (0..n).map(|_| rng.gen_range(-2000.0..2000.0)).collect(),
        };
        let mut hi = lo.clone();
        hi.t_e += rng.gen_range(0.0..20.0);
        for v in hi.q_s.iter_mut().chain(&mut hi.q_h).chain(&mut hi.q_c) {
            *v += rng.gen_range(0.0..500.0);
        }
        if !check_monotonicity(&model, &s, &lo.flatten(), &hi.flatten())? {
            mono_ok = false;
            break;
        }
    }
    if mono_ok {
        report.pass(format!("input monotonicity: {draws} random bound pairs"));
    } else {
        report.fail("input monotonicity violated".into());
    }
    Ok(())
}

fn count_entropy_decreases<M: Trainable>(model: &M, chunks: &[Trajectory], h: f64) -> Result<usize> {
    let mut count = 0;
    for c in chunks {
        let states = rollout_states(model, c, h)?;
        for w in states.windows(2) {
            if w[1][0] - w[0][0] < 0.0 {
                count += 1;
            }
        }
    }
    Ok(count)
}

fn check_gas(
    ckpt: &Checkpoint,
    chunks: &[Trajectory],
    draws: usize,
    seed: u64,
    report: &mut Report,
) -> Result<()> {
    check_parameters(ckpt, report, false);
    let model = gas_from_checkpoint(ckpt)?;
    let normalizer = normalizer_from_checkpoint(ckpt);
    let work: Vec<Trajectory> = match &normalizer {
        Some(n) => chunks
            .iter()
            .map(|c| n.normalize_trajectory(c))
            .collect::<Result<_>>()?,
        None => chunks.to_vec(),
    };
    let h = work.first().map(|c| c.step()).unwrap_or(0.0);

    let mut max_energy: f64 = 0.0;
    let mut min_entropy = f64::INFINITY;
    let mut states_checked = 0usize;
    for c in &work {
        for row in &c.states {
            max_energy = max_energy.max(check_energy_conservation(&model, row)?);
            min_entropy = min_entropy.min(check_entropy_production(&model, row)?);
            states_checked += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..draws {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        max_energy = max_energy.max(check_energy_conservation(&model, &x)?);
        min_entropy = min_entropy.min(check_entropy_production(&model, &x)?);
        states_checked += 1;
    }
    if max_energy <= ENERGY_TOL {
        report.pass(format!(
            "energy conservation: max relative residual {max_energy:.3e} over {states_checked} states (tol {ENERGY_TOL:.0e})"
        ));
    } else {
        report.fail(format!(
            "energy conservation: residual {max_energy:.3e} exceeds {ENERGY_TOL:.0e}"
        ));
    }
    if min_entropy >= 0.0 {
        report.pass(format!(
            "entropy production rate: min {min_entropy:.3e} >= 0 over {states_checked} states"
        ));
    } else {
        report.fail(format!("entropy production rate {min_entropy:.3e} < 0"));
    }
    let decreases = count_entropy_decreases(&model, &work, h)?;
    if decreases == 0 {
        report.pass(format!(
            "predicted entropy: 0 decrease steps across {} validation chunks",
            work.len()
        ));
    } else {
        report.fail(format!(
            "predicted entropy decreased on {decreases} steps across validation chunks"
        ));
    }
    Ok(())
}

fn check_vanilla(ckpt: &Checkpoint, chunks: &[Trajectory], report: &mut Report) -> Result<()> {
    check_parameters(ckpt, report, false);
    report.info("entropy monotonicity is not guaranteed by construction for this model".into());
    let has_entropy_state = chunks
        .first()
        .map(|c| c.state_labels.first().is_some_and(|l| l.starts_with("S[")))
        .unwrap_or(false);
    if !has_entropy_state {
        report.info("dataset has no entropy state column; skipping decrease count".into());
        return Ok(());
    }
    let model = vanilla_from_checkpoint(ckpt)?;
    let normalizer = normalizer_from_checkpoint(ckpt);
    let work: Vec<Trajectory> = match &normalizer {
        Some(n) => chunks
            .iter()
            .map(|c| n.normalize_trajectory(c))
            .collect::<Result<_>>()?,
        None => chunks.to_vec(),
    };
    let h = work.first().map(|c| c.step()).unwrap_or(0.0);
    let decreases = count_entropy_decreases(&model, &work, h)?;
    report.info(format!(
        "predicted entropy decreased on {decreases} steps across {} validation chunks (not gated)",
        work.len()
    ));
    Ok(())
}

pub fn run(cfg: &CheckPhysicsConfig) -> Result<()> {
    ensure_out_dir(&cfg.out)?;
    write_resolved(&cfg.out, cfg)?;
    let ckpt = Checkpoint::load(&cfg.checkpoint)?;
    let dataset = csv_read(&cfg.dataset)?;
    let chunks = val_chunks(&ckpt, &dataset)?;
    let mut report = Report::new();
    report
        .lines
        .push(format!("model: {}", ckpt.kind.as_str()));
    report
        .lines
        .push(format!("validation chunks: {}", chunks.len()));
    match ckpt.kind {
        ModelKind::Building => check_building(&ckpt, &chunks, cfg.draws, cfg.seed, &mut report)?,
        ModelKind::GasIphs => check_gas(&ckpt, &chunks, cfg.draws, cfg.seed, &mut report)?,
        ModelKind::VanillaNode => check_vanilla(&ckpt, &chunks, &mut report)?,
        ModelKind::Arx => {
            report.info("linear regression baseline carries no physics structure".into());
        }
    }

    let mut text = String::new();
    for line in &report.lines {
        let _ = writeln!(text, "{line}");
    }
    let verdict = if report.violations == 0 {
        "result: PASS"
    } else {
        "result: FAIL"
    };
    let _ = writeln!(text, "{verdict} ({} violations)", report.violations);
    let path = cfg.out.join("physics_report.txt");
    std::fs::write(&path, &text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    print!("{text}");
    if report.violations > 0 {
        return Err(Error::PhysicsViolation(format!(
            "{} violations; see {}",
            report.violations,
            path.display()
        )));
    }
    Ok(())
}
