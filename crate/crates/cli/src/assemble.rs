//! Reconstruction of concrete models from checkpoints and the inverse
//! (packing trained models into checkpoints).

use std::collections::BTreeMap;

use iphs::baselines::{ArxModel, VanillaNode};
use iphs::building::{Adjacency, BuildingParams};
use iphs::data::Normalizer;
use iphs::error::{Error, Result};
use iphs::gas_piston::LearnedGasPiston;
use iphs::trainer::{Checkpoint, LossSpace, ModelKind, Trainable};

use crate::config::parse_edges;

fn parse_float_list(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad float {v:?} in checkpoint list")))
        })
        .collect()
}

pub fn format_float_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub enum AssembledModel {
    Building(BuildingParams),
    Gas(LearnedGasPiston),
    Vanilla(VanillaNode),
    Arx(ArxModel),
}

pub fn building_from_checkpoint(ckpt: &Checkpoint) -> Result<BuildingParams> {
    let n = ckpt.extra_usize("n_zones")?;
    let edges = parse_edges(ckpt.extra_str("edges")?)?;
    let heat_capacity = parse_float_list(ckpt.extra_str("heat_capacity")?)?;
    let t_ref = parse_float_list(ckpt.extra_str("t_ref")?)?;
    let s_ref = parse_float_list(ckpt.extra_str("s_ref")?)?;
    let loss_space = LossSpace::parse(ckpt.extra_str("loss_space")?)?;
    let adjacency = Adjacency::new(n, &edges)?;
    let mut model = BuildingParams::new(adjacency, heat_capacity, t_ref.clone())?;
    model.set_reference(t_ref, s_ref)?;
    model.set_loss_in_temperature(loss_space == LossSpace::Temperature);
    model.params_mut().set_values(&ckpt.params)?;
    Ok(model)
}

pub fn gas_from_checkpoint(ckpt: &Checkpoint) -> Result<LearnedGasPiston> {
    let n_h = ckpt.extra_usize("n_h")?;
    let gamma_scale = ckpt.extra_f64("gamma_scale")?;
    LearnedGasPiston::from_flat(n_h, gamma_scale, &ckpt.params)
}

pub fn vanilla_from_checkpoint(ckpt: &Checkpoint) -> Result<VanillaNode> {
    let n = ckpt.extra_usize("state_dim")?;
    let m = ckpt.extra_usize("input_dim")?;
    let hidden = ckpt.extra_usize("hidden")?;
    VanillaNode::from_flat(n, m, hidden, &ckpt.params)
}

pub fn arx_from_checkpoint(ckpt: &Checkpoint) -> Result<ArxModel> {
    let lags = ckpt.extra_usize("lags")?;
    let ny = ckpt.extra_usize("ny")?;
    let nu = ckpt.extra_usize("nu")?;
    let rank_deficient = ckpt
        .extra_str("rank_deficient")
        .map(|v| v == "true")
        .unwrap_or(false);
    ArxModel::from_flat(lags, ny, nu, &ckpt.params, rank_deficient)
}

pub fn assemble(ckpt: &Checkpoint) -> Result<AssembledModel> {
    Ok(match ckpt.kind {
        ModelKind::Building => AssembledModel::Building(building_from_checkpoint(ckpt)?),
        ModelKind::GasIphs => AssembledModel::Gas(gas_from_checkpoint(ckpt)?),
        ModelKind::VanillaNode => AssembledModel::Vanilla(vanilla_from_checkpoint(ckpt)?),
        ModelKind::Arx => AssembledModel::Arx(arx_from_checkpoint(ckpt)?),
    })
}

pub fn normalizer_from_checkpoint(ckpt: &Checkpoint) -> Option<Normalizer> {
    ckpt.normalizer.clone().map(Normalizer::from_stats)
}

/// Float-valued extras shared by every training checkpoint.
pub fn common_extras(
    extras: &mut BTreeMap<String, String>,
    dataset: &std::path::Path,
    h: f64,
    chunk_len: usize,
    val_fraction: f64,
) {
    extras.insert("dataset".into(), dataset.display().to_string());
    extras.insert("h".into(), format!("{h:.16e}"));
    extras.insert("chunk_len".into(), chunk_len.to_string());
    extras.insert("val_fraction".into(), format!("{val_fraction:.16e}"));
}
