//! Learning irreversible port-Hamiltonian dynamics from trajectory data.
//!
//! The crate couples a small reverse-mode tape with Forward-Euler rollouts
//! so that structured state-space models can be fitted by backpropagation
//! through time while conserving energy and producing entropy by
//! construction. Two concrete families are provided — a multi-zone building
//! thermal model in entropy coordinates and a gas-piston system with a
//! neural Hamiltonian — plus ARX and neural-ODE baselines, a dataset
//! pipeline, and physics-invariant checkers.
//!
//! Batch work (per-trajectory gradients, invariant sweeps) runs on rayon
//! when the default `parallel` feature is enabled; disabling it yields a
//! sequential build with bit-identical results.

pub mod autodiff;
pub mod baselines;
pub mod building;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod gas_piston;
pub mod invariants;
pub mod parallel;
pub mod state;
pub mod trainer;

pub use error::{Error, ErrorCategory, Result};
