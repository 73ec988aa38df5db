//! Physics-invariant checkers shared by all concrete models.
//!
//! Checkers return residuals rather than booleans; tolerances live with the
//! caller so the same code serves every precision target.

use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};

/// Relative energy-balance residual `|dH^T . f_cons(x)|` of the conservative
/// part of the dynamics, normalized by the sum of absolute summands (the
/// natural cancellation scale). Exactly zero analytically for any skew
/// interconnection; the returned value is pure floating-point noise.
pub fn check_energy_conservation(model: &dyn DynamicsModel, x: &[f64]) -> Result<f64> {
    let grad = model.hamiltonian_grad(x)?;
    let cons = model.conservative_rhs(x)?;
    let mut signed = 0.0;
    let mut scale = 0.0;
    for (g, f) in grad.iter().zip(&cons) {
        let term = g * f;
        signed += term;
        scale += term.abs();
    }
    if scale == 0.0 {
        Ok(0.0)
    } else {
        Ok(signed.abs() / scale)
    }
}

/// Entropy production rate with exogenous inputs zeroed. Nonnegative (up to
/// rounding) for any admissible parameters of the concrete models.
pub fn check_entropy_production(model: &dyn DynamicsModel, x: &[f64]) -> Result<f64> {
    model.entropy_rate(x)
}

/// True iff `rhs(x, u_hi) >= rhs(x, u_lo)` elementwise.
pub fn check_monotonicity(
    model: &dyn DynamicsModel,
    x: &[f64],
    u_lo: &[f64],
    u_hi: &[f64],
) -> Result<bool> {
    if u_lo.len() != u_hi.len() {
        return Err(Error::DimensionMismatch {
            context: "monotonicity bounds",
            expected: u_lo.len(),
            got: u_hi.len(),
        });
    }
    if u_lo.iter().zip(u_hi).any(|(a, b)| a > b) {
        return Err(Error::Config(
            "monotonicity bounds must satisfy u_lo <= u_hi".into(),
        ));
    }
    let lo = model.rhs(x, u_lo)?;
    let hi = model.rhs(x, u_hi)?;
    Ok(lo.iter().zip(&hi).all(|(a, b)| b >= a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::building::{entropy_from_temperature, Adjacency, BuildingInputs, BuildingParams};
    use crate::state::SkewSymmetricMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_building(rng: &mut ChaCha8Rng) -> BuildingParams {
        BuildingParams::with_effective(
            Adjacency::chain(3),
            vec![1e6; 3],
            vec![293.15; 3],
            &[rng.gen_range(0.1..150.0), rng.gen_range(0.1..150.0)],
            &[
                rng.gen_range(0.1..30.0),
                rng.gen_range(0.1..30.0),
                rng.gen_range(0.1..30.0),
            ],
            &[rng.gen_range(1e-4..1e-2); 3],
            &[rng.gen_range(1e-4..1e-2); 3],
            &[rng.gen_range(1e-4..1e-2); 3],
        )
        .unwrap()
    }

    // Quadratic-form identity g^T (R J g) = 0 for any skew J, scalar R, and
    // vector g, quantified over random instances.
    #[test]
    fn energy_identity_random_quadratic_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..1000 {
            let dim = rng.gen_range(2..8);
            let mut j = SkewSymmetricMatrix::zeros(dim);
            for i in 0..dim {
                for c in (i + 1)..dim {
                    if rng.gen_bool(0.6) {
                        j.set_upper(i, c, rng.gen_range(-1e3..1e3)).unwrap();
                    }
                }
            }
            let r: f64 = rng.gen_range(-10.0..10.0);
            let g: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1e2..1e2)).collect();
            let jg = j.mat_vec(&g).unwrap();
            let mut signed = 0.0;
            let mut scale = 0.0;
            for (gi, f) in g.iter().zip(&jg) {
                signed += gi * (r * f);
                scale += (gi * (r * f)).abs();
            }
            let rel = if scale == 0.0 { 0.0 } else { signed.abs() / scale };
            assert!(rel <= 1e-12, "relative residual {rel}");
        }
    }

    #[test]
    fn unsupported_capability_is_reported() {
        use crate::dynamics::test_models::LinearDecay;
        let m = LinearDecay { rate: 1.0 };
        assert!(matches!(
            check_energy_conservation(&m, &[1.0]),
            Err(Error::UnsupportedCapability { .. })
        ));
        assert!(matches!(
            check_entropy_production(&m, &[1.0]),
            Err(Error::UnsupportedCapability { .. })
        ));
    }

    #[test]
    fn monotonicity_trivially_true_at_equal_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let p = random_building(&mut rng);
        let t = [290.0, 295.0, 285.0];
        let s = entropy_from_temperature(&p, &t).unwrap();
        let u = BuildingInputs::zero_gains(280.0, 3).flatten();
        assert!(check_monotonicity(&p, &s, &u, &u).unwrap());
    }

    #[test]
    fn monotonicity_rejects_misordered_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let p = random_building(&mut rng);
        let s = entropy_from_temperature(&p, &[290.0; 3]).unwrap();
        let lo = BuildingInputs::zero_gains(285.0, 3).flatten();
        let mut hi = lo.clone();
        hi[0] = 280.0; // below lo
        assert!(check_monotonicity(&p, &s, &lo, &hi).is_err());
    }

    #[test]
    fn building_monotone_over_random_input_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        for _ in 0..1000 {
            let p = random_building(&mut rng);
            let t: Vec<f64> = (0..3).map(|_| rng.gen_range(265.0..315.0)).collect();
            let s = entropy_from_temperature(&p, &t).unwrap();
            let lo = BuildingInputs {
                t_e: rng.gen_range(255.0..300.0),
                q_s: (0..3).map(|_| rng.gen_range(-500.0..500.0)).collect(),
                q_h: (0..3).map(|_| rng.gen_range(-2000.0..2000.0)).collect(),
                q_c: (0..3).map(|_| rng.gen_range(-2000.0..2000.0)).collect(),
            };
            let mut hi = lo.clone();
            hi.t_e += rng.gen_range(0.0..20.0);
            for v in hi.q_s.iter_mut().chain(&mut hi.q_h).chain(&mut hi.q_c) {
                *v += rng.gen_range(0.0..500.0);
            }
            assert!(check_monotonicity(&p, &s, &lo.flatten(), &hi.flatten()).unwrap());
        }
    }

    // A deliberately sign-flipped heating gain must break monotonicity; this
    // wrapper bypasses the positive-by-construction parametrization.
    struct NegatedHeatingGain<'a> {
        inner: &'a BuildingParams,
        zone: usize,
    }

    impl DynamicsModel for NegatedHeatingGain<'_> {
        fn state_dim(&self) -> usize {
            self.inner.state_dim()
        }
        fn input_dim(&self) -> usize {
            self.inner.input_dim()
        }
        fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
            let mut out = self.inner.rhs(x, u)?;
            let n = self.inner.n_zones();
            let q_h = u[1 + n + self.zone];
            // replace +b_h q_h with -b_h q_h in the tampered zone
            out[self.zone] -= 2.0 * self.inner.b_h(self.zone) * q_h;
            Ok(out)
        }
    }

    #[test]
    fn negated_gain_breaks_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let p = random_building(&mut rng);
        let tampered = NegatedHeatingGain { inner: &p, zone: 1 };
        let s = entropy_from_temperature(&p, &[290.0, 292.0, 288.0]).unwrap();
        let lo = BuildingInputs::zero_gains(285.0, 3);
        let mut hi = lo.clone();
        hi.q_h[1] = 1000.0;
        assert!(!check_monotonicity(&tampered, &s, &lo.flatten(), &hi.flatten()).unwrap());
        // the untampered model is monotone on the same pair
        assert!(check_monotonicity(&p, &s, &lo.flatten(), &hi.flatten()).unwrap());
    }
}
