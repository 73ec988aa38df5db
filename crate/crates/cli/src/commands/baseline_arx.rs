//! Fit the lagged linear baseline on the training chunks and write it in
//! the common checkpoint format.

use std::collections::BTreeMap;

use iphs::baselines::arx_fit;
use iphs::data::{chunk, csv_read, Trajectory};
use iphs::error::{Error, Result};
use iphs::trainer::{split_dataset, Checkpoint, ModelKind};

use crate::assemble::common_extras;
use crate::config::{ensure_out_dir, write_resolved, BaselineArxConfig};

pub fn run(cfg: &BaselineArxConfig) -> Result<()> {
    ensure_out_dir(&cfg.out)?;
    write_resolved(&cfg.out, cfg)?;
    let traj = csv_read(&cfg.dataset)?;
    let chunks = chunk(&traj, cfg.chunk_len)?;
    if chunks.is_empty() {
        return Err(Error::Config(format!(
            "dataset of {} rows yields no chunks of {}",
            traj.len(),
            cfg.chunk_len
        )));
    }
    let (train_idx, val_idx) = split_dataset(chunks.len(), cfg.val_fraction, cfg.seed);
    let train_refs: Vec<&Trajectory> = train_idx.iter().map(|&i| &chunks[i]).collect();
    let model = arx_fit(&train_refs, cfg.lags)?;
    if model.rank_deficient {
        println!("warning: rank-deficient regressor; minimum-norm solution returned");
    }

    let mut extras = BTreeMap::new();
    common_extras(
        &mut extras,
        &cfg.dataset,
        chunks[0].step(),
        cfg.chunk_len,
        cfg.val_fraction,
    );
    extras.insert("lags".into(), cfg.lags.to_string());
    extras.insert("ny".into(), model.ny.to_string());
    extras.insert("nu".into(), model.nu.to_string());
    extras.insert("rank_deficient".into(), model.rank_deficient.to_string());

    let ckpt = Checkpoint {
        kind: ModelKind::Arx,
        params: model.coefficients_row_major(),
        segments: vec![(
            "coefficients".to_string(),
            0..model.coefficients_row_major().len(),
        )],
        history: Vec::new(),
        extras,
        normalizer: None,
        seed: cfg.seed,
        rng_word_pos: 0,
        best_epoch: 0,
        best_val_loss: f64::NAN,
    };
    ckpt.save(&cfg.out.join("checkpoint.txt"))?;
    println!(
        "fitted {}-lag model on {} training chunks ({} held out); checkpoint written to {}",
        cfg.lags,
        train_idx.len(),
        val_idx.len(),
        cfg.out.join("checkpoint.txt").display()
    );
    Ok(())
}
