//! Generic time-invariant state-space contract and Forward-Euler rollout.

use crate::error::{Error, Result};
use crate::state::{ensure_finite, InputVector, StateVector};

/// Continuous-time dynamics `dx/dt = f(x, u)` with optional structure
/// accessors. Time variation enters only through the input sequence.
///
/// Implementations are immutable after construction and safe to share
/// across threads; rollouts over distinct trajectories may run in parallel.
pub trait DynamicsModel: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>>;

    /// Total energy of the state, when the model has one.
    fn hamiltonian(&self, _x: &[f64]) -> Result<f64> {
        Err(Error::UnsupportedCapability {
            capability: "hamiltonian",
        })
    }

    /// Gradient of the Hamiltonian (co-states).
    fn hamiltonian_grad(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Err(Error::UnsupportedCapability {
            capability: "hamiltonian_grad",
        })
    }

    /// Entropy production rate with exogenous inputs zeroed.
    fn entropy_rate(&self, _x: &[f64]) -> Result<f64> {
        Err(Error::UnsupportedCapability {
            capability: "entropy_rate",
        })
    }

    /// The structure-preserving part of the rhs (interconnection acting on
    /// the co-states, no exogenous drive). Used by the energy checker.
    fn conservative_rhs(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Err(Error::UnsupportedCapability {
            capability: "conservative_rhs",
        })
    }

    /// Per-dimension `name[unit]` labels for the state, used by dataset files.
    fn state_labels(&self) -> Vec<String> {
        (0..self.state_dim()).map(|i| format!("x{i}[-]")).collect()
    }

    fn input_labels(&self) -> Vec<String> {
        (0..self.input_dim()).map(|i| format!("u{i}[-]")).collect()
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "state",
                expected: self.state_dim(),
                got: x.len(),
            });
        }
        if u.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "input",
                expected: self.input_dim(),
                got: u.len(),
            });
        }
        Ok(())
    }
}

/// One explicit-Euler step `x + h * rhs(x, u)`.
///
/// Fails fast on non-finite states or rhs values rather than propagating NaN.
pub fn fe_step(
    model: &dyn DynamicsModel,
    x: &StateVector,
    u: &InputVector,
    h: f64,
) -> Result<StateVector> {
    if !(h >= 0.0) {
        return Err(Error::NegativeStep { h });
    }
    model.check_dims(x.values(), u.values())?;
    let dx = model.rhs(x.values(), u.values())?;
    if dx.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "rhs output",
            expected: model.state_dim(),
            got: dx.len(),
        });
    }
    if dx.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteRhs {
            state: x.values().to_vec(),
        });
    }
    let next: Vec<f64> = x
        .values()
        .iter()
        .zip(&dx)
        .map(|(xi, di)| xi + h * di)
        .collect();
    ensure_finite(&next, "fe_step result").map_err(|_| Error::NonFiniteRhs {
        state: x.values().to_vec(),
    })?;
    StateVector::new(next, x.labels_arc())
}

/// Iterated [`fe_step`]: returns `L + 1` states, the first being `x0`.
/// Errors are annotated with the step index at which they occurred.
pub fn fe_rollout(
    model: &dyn DynamicsModel,
    x0: &StateVector,
    inputs: &[InputVector],
    h: f64,
) -> Result<Vec<StateVector>> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.clone());
    for (i, u) in inputs.iter().enumerate() {
        let next = fe_step(model, states.last().unwrap(), u, h).map_err(|e| e.at_step(i))?;
        states.push(next);
    }
    Ok(states)
}

#[cfg(test)]
pub(crate) mod test_models {
    use super::*;

    /// Scalar linear decay `dx/dt = -k x`, for integrator tests.
    pub struct LinearDecay {
        pub rate: f64,
    }

    impl DynamicsModel for LinearDecay {
        fn state_dim(&self) -> usize {
            1
        }
        fn input_dim(&self) -> usize {
            0
        }
        fn rhs(&self, x: &[f64], _u: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![-self.rate * x[0]])
        }
    }

    /// rhs that returns NaN, for failure-path tests.
    pub struct PoisonedModel;

    impl DynamicsModel for PoisonedModel {
        fn state_dim(&self) -> usize {
            1
        }
        fn input_dim(&self) -> usize {
            0
        }
        fn rhs(&self, _x: &[f64], _u: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![f64::NAN])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_models::{LinearDecay, PoisonedModel};
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn decay() -> LinearDecay {
        LinearDecay { rate: 1.0 }
    }

    #[test]
    fn zero_step_returns_state_unchanged() {
        let x = StateVector::unlabeled(vec![1.25]).unwrap();
        let next = fe_step(&decay(), &x, &InputVector::empty(), 0.0).unwrap();
        assert_eq!(next.values(), x.values());
    }

    #[test]
    fn analytic_euler_step() {
        let x = StateVector::unlabeled(vec![1.0]).unwrap();
        let next = fe_step(&decay(), &x, &InputVector::empty(), 0.1).unwrap();
        assert_relative_eq!(next.values()[0], 0.9, max_relative = 1e-15);
    }

    #[test]
    fn dimension_mismatch_names_offender() {
        let x = StateVector::unlabeled(vec![1.0, 2.0]).unwrap();
        let err = fe_step(&decay(), &x, &InputVector::empty(), 0.1).unwrap_err();
        match err {
            Error::DimensionMismatch { context, .. } => assert_eq!(context, "state"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn non_finite_rhs_carries_state() {
        let x = StateVector::unlabeled(vec![3.0]).unwrap();
        let err = fe_step(&PoisonedModel, &x, &InputVector::empty(), 0.1).unwrap_err();
        match err {
            Error::NonFiniteRhs { state } => assert_eq!(state, vec![3.0]),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn negative_step_rejected() {
        let x = StateVector::unlabeled(vec![1.0]).unwrap();
        assert!(matches!(
            fe_step(&decay(), &x, &InputVector::empty(), -0.1),
            Err(Error::NegativeStep { .. })
        ));
    }

    #[test]
    fn empty_rollout_is_initial_state() {
        let x0 = StateVector::unlabeled(vec![1.0]).unwrap();
        let states = fe_rollout(&decay(), &x0, &[], 0.1).unwrap();
        assert_eq!(states.len(), 1);
        assert_eq!(states[0].values(), x0.values());
    }

    #[test]
    fn analytic_two_step_rollout() {
        let x0 = StateVector::unlabeled(vec![1.0]).unwrap();
        let inputs = vec![InputVector::empty(), InputVector::empty()];
        let states = fe_rollout(&decay(), &x0, &inputs, 0.1).unwrap();
        let vals: Vec<f64> = states.iter().map(|s| s.values()[0]).collect();
        assert_relative_eq!(vals[0], 1.0);
        assert_relative_eq!(vals[1], 0.9, max_relative = 1e-15);
        assert_relative_eq!(vals[2], 0.81, max_relative = 1e-15);
    }

    #[test]
    fn rollout_matches_explicit_step_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let model = LinearDecay {
                rate: rng.gen_range(0.1..3.0),
            };
            let x0 = StateVector::unlabeled(vec![rng.gen_range(-2.0..2.0)]).unwrap();
            let h = rng.gen_range(0.01..0.2);
            let inputs = vec![InputVector::empty(); 17];
            let states = fe_rollout(&model, &x0, &inputs, h).unwrap();
            let mut x = x0.clone();
            for (i, u) in inputs.iter().enumerate() {
                x = fe_step(&model, &x, u, h).unwrap();
                assert_eq!(states[i + 1].values(), x.values());
            }
        }
    }

    #[test]
    fn rollout_error_carries_step_index() {
        let x0 = StateVector::unlabeled(vec![1.0]).unwrap();
        let inputs = vec![InputVector::empty(); 3];
        let err = fe_rollout(&PoisonedModel, &x0, &inputs, 0.1).unwrap_err();
        match err {
            Error::AtStep { index, .. } => assert_eq!(index, 0),
            other => panic!("unexpected error {other}"),
        }
    }

    // Order-1 convergence: halving h roughly halves the global error.
    #[test]
    fn fe_global_error_halves_with_step() {
        let model = decay();
        let horizon = 1.0;
        let exact = (-1.0f64).exp();
        let run = |h: f64| {
            let steps = (horizon / h).round() as usize;
            let x0 = StateVector::unlabeled(vec![1.0]).unwrap();
            let inputs = vec![InputVector::empty(); steps];
            let states = fe_rollout(&model, &x0, &inputs, h).unwrap();
            (states.last().unwrap().values()[0] - exact).abs()
        };
        let ratio = run(0.01) / run(0.005);
        assert!(
            (1.6..=2.4).contains(&ratio),
            "FE error ratio {ratio} outside [1.6, 2.4]"
        );
    }
}
