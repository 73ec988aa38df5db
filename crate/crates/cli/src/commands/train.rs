//! Train a model on a chunked dataset and write the checkpoint, the loss
//! history, and the resolved config.

use std::collections::BTreeMap;
use std::path::Path;

use iphs::baselines::VanillaNode;
use iphs::building::{Adjacency, BuildingParams};
use iphs::data::{chunk, csv_read, Normalizer, Trajectory};
use iphs::error::{Error, Result};
use iphs::gas_piston::LearnedGasPiston;
use iphs::trainer::{
    split_dataset, train, Checkpoint, LossSpace, ModelKind, TrainConfig, Trainable,
};

use crate::assemble::{common_extras, format_float_list};
use crate::config::{ensure_out_dir, parse_edges, write_resolved, TrainFileConfig};

fn default_learning_rate(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::Building => 1e-2,
        _ => 1e-3,
    }
}

pub fn run(cfg: &TrainFileConfig) -> Result<()> {
    ensure_out_dir(&cfg.out)?;
    write_resolved(&cfg.out, cfg)?;
    let kind = ModelKind::parse(&cfg.model)?;
    if kind == ModelKind::Arx {
        return Err(Error::Config(
            "use the baseline-arx subcommand to fit ARX models".into(),
        ));
    }
    let traj = csv_read(&cfg.dataset)?;
    let chunks = chunk(&traj, cfg.chunk_len)?;
    if chunks.is_empty() {
        return Err(Error::Config(format!(
            "dataset of {} rows yields no chunks of {}",
            traj.len(),
            cfg.chunk_len
        )));
    }
    let h = chunks[0].step();
    let normalize = cfg.normalize.unwrap_or(kind != ModelKind::Building);

    let (work_chunks, normalizer) = if normalize {
        let (train_idx, _) = split_dataset(chunks.len(), cfg.val_fraction, cfg.seed);
        let train_refs: Vec<&Trajectory> = train_idx.iter().map(|&i| &chunks[i]).collect();
        let norm = Normalizer::fit(&train_refs)?;
        let normalized: Result<Vec<Trajectory>> = chunks
            .iter()
            .map(|c| norm.normalize_trajectory(c))
            .collect();
        (normalized?, Some(norm))
    } else {
        (chunks, None)
    };

    let tc = TrainConfig {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate.unwrap_or_else(|| default_learning_rate(kind)),
        batch_size: cfg.batch_size,
        l1_weight: cfg.l1_weight,
        seed: cfg.seed,
        gradient_clip: (cfg.gradient_clip > 0.0).then_some(cfg.gradient_clip),
        val_fraction: cfg.val_fraction,
        h: None,
    };

    let mut extras = BTreeMap::new();
    common_extras(&mut extras, &cfg.dataset, h, cfg.chunk_len, cfg.val_fraction);
    extras.insert("epochs".into(), cfg.epochs.to_string());
    extras.insert("learning_rate".into(), format!("{:.16e}", tc.learning_rate));
    extras.insert("batch_size".into(), cfg.batch_size.to_string());
    extras.insert("l1_weight".into(), format!("{:.16e}", cfg.l1_weight));
    extras.insert("gradient_clip".into(), format!("{:.16e}", cfg.gradient_clip));
    extras.insert("normalize".into(), normalize.to_string());

    match kind {
        ModelKind::Building => {
            let n = traj.state_dim();
            let edges = parse_edges(&cfg.edges)?;
            let adjacency = Adjacency::new(n, &edges)?;
            let t_ref = traj.states[0].clone();
            let mut model =
                BuildingParams::new(adjacency, vec![cfg.heat_capacity; n], t_ref.clone())?;
            let loss_space = match &cfg.loss_space {
                Some(s) => LossSpace::parse(s)?,
                None => LossSpace::Temperature,
            };
            model.set_loss_in_temperature(loss_space == LossSpace::Temperature);
            extras.insert("n_zones".into(), n.to_string());
            extras.insert("edges".into(), cfg.edges.clone());
            extras.insert(
                "heat_capacity".into(),
                format_float_list(model.heat_capacity()),
            );
            extras.insert("t_ref".into(), format_float_list(model.t_ref()));
            extras.insert("s_ref".into(), format_float_list(model.s_ref()));
            extras.insert("loss_space".into(), loss_space.as_str().into());
            run_training(model, &work_chunks, &tc, kind, extras, normalizer, &cfg.out)
        }
        ModelKind::GasIphs => {
            if traj.state_dim() != 4 {
                return Err(Error::Config(format!(
                    "gas-iphs expects 4 state dimensions, dataset has {}",
                    traj.state_dim()
                )));
            }
            let model = LearnedGasPiston::new(cfg.n_h, cfg.gamma_scale, cfg.seed);
            extras.insert("n_h".into(), cfg.n_h.to_string());
            extras.insert("gamma_scale".into(), format!("{:.16e}", cfg.gamma_scale));
            extras.insert("loss_space".into(), "state".into());
            run_training(model, &work_chunks, &tc, kind, extras, normalizer, &cfg.out)
        }
        ModelKind::VanillaNode => {
            let model = VanillaNode::new(traj.state_dim(), traj.input_dim(), cfg.hidden, cfg.seed);
            extras.insert("state_dim".into(), traj.state_dim().to_string());
            extras.insert("input_dim".into(), traj.input_dim().to_string());
            extras.insert("hidden".into(), cfg.hidden.to_string());
            extras.insert("loss_space".into(), "state".into());
            run_training(model, &work_chunks, &tc, kind, extras, normalizer, &cfg.out)
        }
        ModelKind::Arx => unreachable!(),
    }
}

fn run_training<M: Trainable>(
    mut model: M,
    chunks: &[Trajectory],
    tc: &TrainConfig,
    kind: ModelKind,
    extras: BTreeMap<String, String>,
    normalizer: Option<Normalizer>,
    out: &Path,
) -> Result<()> {
    let result = train(&mut model, chunks, tc, |rec| {
        println!(
            "epoch {:4}  train {:.6e}  val {:.6e}",
            rec.epoch, rec.train_loss, rec.val_loss
        );
    })?;
    if result.diverged {
        println!("validation loss diverged; keeping the best checkpoint seen");
    }
    let ckpt = Checkpoint {
        kind,
        params: result.best_params.clone(),
        segments: model
            .params()
            .segments()
            .map(|(n, r)| (n.to_string(), r))
            .collect(),
        history: result.history.clone(),
        extras,
        normalizer: normalizer.map(|n| n.stats),
        seed: tc.seed,
        rng_word_pos: result.rng_word_pos,
        best_epoch: result.best_epoch,
        best_val_loss: result.best_val_loss,
    };
    ckpt.save(&out.join("checkpoint.txt"))?;
    let mut hist = String::from("epoch,train_loss,val_loss\n");
    for rec in &result.history {
        hist.push_str(&format!(
            "{},{:.16e},{:.16e}\n",
            rec.epoch, rec.train_loss, rec.val_loss
        ));
    }
    let hist_path = out.join("loss_history.csv");
    std::fs::write(&hist_path, hist).map_err(|source| Error::Io {
        path: hist_path.display().to_string(),
        source,
    })?;
    println!(
        "best epoch {} with validation loss {:.6e}; checkpoint written to {}",
        result.best_epoch,
        result.best_val_loss,
        out.join("checkpoint.txt").display()
    );
    Ok(())
}
