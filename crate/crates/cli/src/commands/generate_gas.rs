//! Synthetic gas-piston dataset: forced and free-response variants, each
//! with a clean and a noisy copy plus metadata sidecars.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use iphs::data::{add_noise, csv_write, rk4_generate, Normalizer, Trajectory};
use iphs::error::Result;
use iphs::gas_piston::GasPistonTruth;

use crate::config::{ensure_out_dir, write_resolved, GenerateGasConfig};

fn constants(truth: &GasPistonTruth, cfg: &GenerateGasConfig) -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("piston_mass".into(), truth.piston_mass),
        ("piston_area".into(), truth.piston_area),
        ("coupling".into(), truth.coupling),
        ("friction".into(), truth.friction),
        ("spring".into(), truth.spring),
        ("n_mol".into(), truth.n_mol),
        ("c_v".into(), truth.c_v),
        ("m_gas".into(), truth.m_gas),
        ("r_gas".into(), iphs::gas_piston::R_GAS),
        ("t0".into(), truth.t0),
        ("s0".into(), truth.s0),
        ("v0".into(), truth.v0),
        ("p0".into(), cfg.p0),
        ("forcing_amplitude".into(), cfg.forcing_amplitude),
        ("forcing_freq_hz".into(), cfg.forcing_freq_hz),
        ("substeps".into(), cfg.substeps as f64),
    ])
}

fn finish(mut traj: Trajectory, source: &str, cfg: &GenerateGasConfig, truth: &GasPistonTruth) -> Result<Trajectory> {
    traj.metadata.source = source.into();
    traj.metadata.seed = Some(cfg.seed);
    traj.metadata.constants = constants(truth, cfg);
    traj.metadata.normalizer = Some(Normalizer::fit(&[&traj])?.stats);
    Ok(traj)
}

pub fn run(cfg: &GenerateGasConfig) -> Result<()> {
    ensure_out_dir(&cfg.out)?;
    write_resolved(&cfg.out, cfg)?;
    let truth = GasPistonTruth::from_initial_pressure(cfg.p0, cfg.t0, cfg.v0);
    let x0 = truth.initial_state();
    let steps = cfg.samples.saturating_sub(1);

    let amp = cfg.forcing_amplitude;
    let freq = cfg.forcing_freq_hz;
    let forced = rk4_generate(
        &truth,
        &x0,
        |t| vec![amp * (TAU * freq * t).sin()],
        cfg.h,
        steps,
        cfg.substeps,
    )?;
    let forced = finish(forced, "synthetic-gas-forced", cfg, &truth)?;
    csv_write(&cfg.out.join("gas_forced.csv"), &forced)?;
    let forced_noisy = add_noise(&forced, cfg.noise_factor, cfg.seed);
    csv_write(&cfg.out.join("gas_forced_noisy.csv"), &forced_noisy)?;

    let free = rk4_generate(&truth, &x0, |_| vec![0.0], cfg.h, steps, cfg.substeps)?;
    let free = finish(free, "synthetic-gas-free", cfg, &truth)?;
    csv_write(&cfg.out.join("gas_free.csv"), &free)?;
    let free_noisy = add_noise(&free, cfg.noise_factor, cfg.seed.wrapping_add(1));
    csv_write(&cfg.out.join("gas_free_noisy.csv"), &free_noisy)?;

    println!(
        "wrote {} rows x ({} states + 1 input) to {}",
        forced.len(),
        forced.state_dim(),
        cfg.out.display()
    );
    println!("variants: gas_forced, gas_forced_noisy, gas_free, gas_free_noisy");
    Ok(())
}
