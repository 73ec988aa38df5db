//! Multistep-prediction metrics on the validation chunks of a dataset:
//! per-step MAE curve (tidy CSV), summary, and raw prediction dump.

use iphs::data::{chunk, csv_read, Trajectory};
use iphs::error::{Error, Result};
use iphs::trainer::{predict_measured, split_dataset, Checkpoint};

use crate::assemble::{assemble, normalizer_from_checkpoint, AssembledModel};
use crate::config::{ensure_out_dir, write_resolved, EvaluateConfig};
use crate::metrics::{fmt_float, mae_curve, read_curves, write_curves, write_summary, MaeCurve};

pub struct Evaluation {
    pub curve: MaeCurve,
    pub per_chunk: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
}

/// Measured-space predictions for every validation chunk of the dataset the
/// checkpoint was trained against.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    dataset: &Trajectory,
    series: &str,
) -> Result<Evaluation> {
    let chunk_len = ckpt.extra_usize("chunk_len")?;
    let val_fraction = ckpt.extra_f64("val_fraction")?;
    let chunks = chunk(dataset, chunk_len)?;
    if chunks.is_empty() {
        return Err(Error::Config(format!(
            "dataset of {} rows yields no chunks of {chunk_len}",
            dataset.len()
        )));
    }
    let (_, val_idx) = split_dataset(chunks.len(), val_fraction, ckpt.seed);
    let model = assemble(ckpt)?;
    let normalizer = normalizer_from_checkpoint(ckpt);
    let h = chunks[0].step();

    let start_step = match &model {
        AssembledModel::Arx(m) => m.lags,
        _ => 0,
    };
    let mut per_chunk = Vec::with_capacity(val_idx.len());
    for &i in &val_idx {
        let c = &chunks[i];
        let predictions = match &model {
            AssembledModel::Arx(m) => m.predict(
                &c.states[..m.lags],
                &c.inputs[..m.lags - 1],
                &c.inputs[m.lags - 1..],
                c.len() - m.lags,
            )?,
            AssembledModel::Building(m) => predict_measured(m, c, h)?,
            AssembledModel::Gas(m) => predict_normalized(m, c, h, &normalizer)?,
            AssembledModel::Vanilla(m) => predict_normalized(m, c, h, &normalizer)?,
        };
        per_chunk.push((predictions, c.states.clone()));
    }
    let borrowed: Vec<(Vec<Vec<f64>>, &[Vec<f64>])> = per_chunk
        .iter()
        .map(|(p, m)| (p.clone(), m.as_slice()))
        .collect();
    let curve = mae_curve(series, start_step, &borrowed)?;
    Ok(Evaluation { curve, per_chunk })
}

fn predict_normalized<M: iphs::trainer::Trainable>(
    model: &M,
    c: &Trajectory,
    h: f64,
    normalizer: &Option<iphs::data::Normalizer>,
) -> Result<Vec<Vec<f64>>> {
    match normalizer {
        Some(norm) => {
            let work = norm.normalize_trajectory(c)?;
            predict_measured(model, &work, h)?
                .iter()
                .map(|row| norm.denormalize_state(row))
                .collect()
        }
        None => predict_measured(model, c, h),
    }
}

pub fn run(cfg: &EvaluateConfig) -> Result<()> {
    ensure_out_dir(&cfg.out)?;
    write_resolved(&cfg.out, cfg)?;
    let ckpt = Checkpoint::load(&cfg.checkpoint)?;
    let dataset = csv_read(&cfg.dataset)?;
    let series = cfg
        .series
        .clone()
        .unwrap_or_else(|| ckpt.kind.as_str().to_string());
    let eval = evaluate_checkpoint(&ckpt, &dataset, &series)?;

    // raw prediction dump, for recomputing metrics independently
    let mut dump = String::from("chunk,step,dim,predicted,measured\n");
    let start = eval.curve.start_step;
    for (ci, (pred, meas)) in eval.per_chunk.iter().enumerate() {
        for (k, row) in pred.iter().enumerate() {
            for (d, v) in row.iter().enumerate() {
                dump.push_str(&format!(
                    "{ci},{},{d},{},{}\n",
                    start + k,
                    fmt_float(*v),
                    fmt_float(meas[start + k][d])
                ));
            }
        }
    }
    let dump_path = cfg.out.join("predictions.csv");
    std::fs::write(&dump_path, dump).map_err(|source| Error::Io {
        path: dump_path.display().to_string(),
        source,
    })?;

    let mut curves: Vec<MaeCurve> = vec![eval.curve.clone()];
    if let Some(other_path) = &cfg.compare_metrics {
        curves.extend(read_curves(other_path)?);
    }
    let curve_refs: Vec<&MaeCurve> = curves.iter().collect();
    write_curves(&cfg.out.join("mae_curve.csv"), &curve_refs)?;

    let mut summary = vec![
        ("series".to_string(), series.clone()),
        ("model".to_string(), ckpt.kind.as_str().to_string()),
        (
            "val_chunks".to_string(),
            eval.per_chunk.len().to_string(),
        ),
        ("start_step".to_string(), eval.curve.start_step.to_string()),
        ("end_step".to_string(), eval.curve.last_step().to_string()),
        (
            "mean_horizon_mae".to_string(),
            fmt_float(eval.curve.mean_over_horizon()),
        ),
        (
            "end_horizon_mae".to_string(),
            fmt_float(eval.curve.end_of_horizon()),
        ),
    ];
    for other in curves.iter().skip(1) {
        let pct = |ours: f64, theirs: f64| {
            if theirs == 0.0 {
                0.0
            } else {
                100.0 * (theirs - ours) / theirs
            }
        };
        summary.push((
            format!("improvement_mean_pct_vs_{}", other.series),
            fmt_float(pct(eval.curve.mean_over_horizon(), other.mean_over_horizon())),
        ));
        summary.push((
            format!("improvement_end_pct_vs_{}", other.series),
            fmt_float(pct(eval.curve.end_of_horizon(), other.end_of_horizon())),
        ));
    }
    write_summary(&cfg.out.join("summary.csv"), &summary)?;

    println!(
        "{}: {} validation chunks, mean MAE {:.6e}, end-of-horizon MAE {:.6e}",
        series,
        eval.per_chunk.len(),
        eval.curve.mean_over_horizon(),
        eval.curve.end_of_horizon()
    );
    Ok(())
}
