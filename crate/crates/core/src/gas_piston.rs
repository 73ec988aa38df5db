//! Gas-piston system: analytic ground truth for data generation, and the
//! learnable variant with a log-cosh neural Hamiltonian and sigmoid-bounded
//! dissipation gain.
//!
//! State is `x = [S, V, q, p]`: gas entropy, gas volume, piston position,
//! piston momentum. Both variants share the rhs assembly
//! `(R J0 + J1) dH/dx + G u` with the fixed interconnection
//!
//! ```text
//! J0 = [[0 0 0 1] [0 0 0 0] [0 0 0 0] [-1 0 0 0]]
//! J1 = [[0 0 0 0] [0 0 0 a] [0 0 0 b] [0 -a -b 0]]
//! G  = [0, 0, 0, 1]^T
//! ```
//!
//! so the entropy row is `R * dH/dp`, which the truth closes with
//! `R = mu v / T` and the learned model with `R = gamma(.) dH/dp`,
//! making its entropy rate `gamma (dH/dp)^2 >= 0` for any weights.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{log_cosh, sigmoid, ParameterVector, Tape, Var};
use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::trainer::Trainable;

/// Molar gas constant, J/(mol K).
pub const R_GAS: f64 = 8.314;

/// Molar mass of air, kg/mol.
pub const MOLAR_MASS_AIR: f64 = 0.029;

/// `(R J0 + J1) grad_h + G u` for scalar dissipation factor `r` and
/// interconnection entries `(j1_alpha, j1_beta)`.
pub fn assemble_rhs(r: f64, j1_alpha: f64, j1_beta: f64, grad_h: &[f64], u: f64) -> Vec<f64> {
    vec![
        r * grad_h[3],
        j1_alpha * grad_h[3],
        j1_beta * grad_h[3],
        -r * grad_h[0] - j1_alpha * grad_h[1] - j1_beta * grad_h[2] + u,
    ]
}

/// Analytic gas-piston constants. The mechanical side comes from the
/// simulation setup (piston mass, area, coupling, friction, spring); the
/// gas side is anchored by the initial pressure: `n = P0 V0 / (R T0)`,
/// `m_gas = n * molar mass of air`, with c_v that of air.
#[derive(Debug, Clone, PartialEq)]
pub struct GasPistonTruth {
    pub piston_mass: f64,
    pub piston_area: f64,
    pub coupling: f64,
    pub friction: f64,
    pub spring: f64,
    pub n_mol: f64,
    pub c_v: f64,
    pub m_gas: f64,
    pub t0: f64,
    pub s0: f64,
    pub v0: f64,
}

impl GasPistonTruth {
    /// Derive the gas constants from a reference pressure at the initial
    /// temperature/volume.
    pub fn from_initial_pressure(p0: f64, t0: f64, v0: f64) -> Self {
        let n_mol = p0 * v0 / (R_GAS * t0);
        Self {
            piston_mass: 5.0,
            piston_area: 0.033,
            coupling: 1.0,
            friction: 1.0,
            spring: 10.0,
            n_mol,
            c_v: 718.0,
            m_gas: n_mol * MOLAR_MASS_AIR,
            t0,
            s0: 0.0,
            v0,
        }
    }

    /// Initial state `[S, V, q, p] = [0, 0.001, 0.3, 0]`.
    pub fn initial_state(&self) -> Vec<f64> {
        vec![self.s0, self.v0, 0.3, 0.0]
    }

    /// Exponent `n R / (m_gas c_v)` of the volume factor in `T(S, V)`.
    fn volume_exponent(&self) -> f64 {
        self.n_mol * R_GAS / (self.m_gas * self.c_v)
    }

    /// `T = T0 exp((S - S0)/(m_gas c_v)) (V / V0)^(-nR/(m_gas c_v))`.
    pub fn temperature(&self, s: f64, v: f64) -> Result<f64> {
        if v <= 0.0 {
            return Err(Error::PistonBottom { volume: v });
        }
        let t = self.t0
            * ((s - self.s0) / (self.m_gas * self.c_v)).exp()
            * (v / self.v0).powf(-self.volume_exponent());
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::NonFinite {
                context: format!("gas temperature at S={s}, V={v}"),
            });
        }
        Ok(t)
    }

    /// Ideal-gas pressure `P = n R T / V`.
    pub fn pressure(&self, t: f64, v: f64) -> f64 {
        self.n_mol * R_GAS * t / v
    }

    fn grad_h(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = self.temperature(x[0], x[1])?;
        let p = self.pressure(t, x[1]);
        Ok(vec![t, -p, self.spring * x[2], x[3] / self.piston_mass])
    }

    /// Total energy: gas internal energy plus spring and kinetic terms.
    /// Conserved exactly along the free response (`dH/dt = u v`).
    pub fn total_energy(&self, x: &[f64]) -> Result<f64> {
        let t = self.temperature(x[0], x[1])?;
        Ok(self.m_gas * self.c_v * t
            + 0.5 * self.spring * x[2] * x[2]
            + x[3] * x[3] / (2.0 * self.piston_mass))
    }
}

impl Default for GasPistonTruth {
    fn default() -> Self {
        Self::from_initial_pressure(101_325.0, 290.0, 0.001)
    }
}

/// Truth dynamics, expanded: `Sdot = mu v^2 / T`, `Vdot = alpha v`,
/// `qdot = beta v`, `pdot = -mu v + alpha P - beta K q + u`.
pub fn truth_rhs(params: &GasPistonTruth, x: &[f64], u: f64) -> Result<Vec<f64>> {
    let grad_h = params.grad_h(x)?;
    let t = grad_h[0];
    debug_assert!(t > 0.0);
    let v = grad_h[3];
    let r = params.friction * v / t;
    Ok(assemble_rhs(
        r,
        params.piston_area,
        params.coupling,
        &grad_h,
        u,
    ))
}

impl DynamicsModel for GasPistonTruth {
    fn state_dim(&self) -> usize {
        4
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        truth_rhs(self, x, u[0])
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        self.total_energy(x)
    }

    fn hamiltonian_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.grad_h(x)
    }

    fn entropy_rate(&self, x: &[f64]) -> Result<f64> {
        let t = self.temperature(x[0], x[1])?;
        let v = x[3] / self.piston_mass;
        Ok(self.friction * v * v / t)
    }

    fn conservative_rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        truth_rhs(self, x, 0.0)
    }

    fn state_labels(&self) -> Vec<String> {
        vec![
            "S[J/K]".into(),
            "V[m3]".into(),
            "q[m]".into(),
            "p[kg.m/s]".into(),
        ]
    }

    fn input_labels(&self) -> Vec<String> {
        vec!["u[N]".into()]
    }
}

const SEG_HW: &str = "h_weights";
const SEG_HB: &str = "h_bias";
const SEG_GW: &str = "gamma_w";
const SEG_GB: &str = "gamma_b";
const SEG_J1: &str = "j1";

/// Learnable gas-piston model: log-cosh Hamiltonian `H = 1^T log cosh(Kx+b)`
/// with closed-form gradient `K^T tanh(Kx+b)`, a single affine layer behind
/// a sigmoid for the dissipation gain, and the two free interconnection
/// entries of `J1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedGasPiston {
    raw: ParameterVector,
    n_h: usize,
    gamma_scale: f64,
}

pub const DEFAULT_HIDDEN: usize = 16;
pub const DEFAULT_GAMMA_SCALE: f64 = 10.0;

impl LearnedGasPiston {
    pub fn new(n_h: usize, gamma_scale: f64, seed: u64) -> Self {
        assert!(n_h >= 1 && gamma_scale > 0.0);
        let mut raw = ParameterVector::new(&[
            (SEG_HW, n_h * 4),
            (SEG_HB, n_h),
            (SEG_GW, 8),
            (SEG_GB, 1),
            (SEG_J1, 2),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        {
            let values = raw.values_mut();
            for v in values.iter_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
            // small positive start for the interconnection entries
            let base = values.len() - 2;
            values[base] = 0.1;
            values[base + 1] = 0.1;
        }
        Self {
            raw,
            n_h,
            gamma_scale,
        }
    }

    pub fn from_flat(n_h: usize, gamma_scale: f64, values: &[f64]) -> Result<Self> {
        let mut model = Self::new(n_h, gamma_scale, 0);
        model.raw.set_values(values)?;
        Ok(model)
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn gamma_scale(&self) -> f64 {
        self.gamma_scale
    }

    pub fn j1(&self) -> (f64, f64) {
        let j = self.raw.segment_values(SEG_J1).unwrap();
        (j[0], j[1])
    }

    fn preactivations(&self, x: &[f64]) -> Vec<f64> {
        let w = self.raw.segment_values(SEG_HW).unwrap();
        let b = self.raw.segment_values(SEG_HB).unwrap();
        (0..self.n_h)
            .map(|k| {
                let mut acc = b[k];
                for d in 0..4 {
                    acc += w[k * 4 + d] * x[d];
                }
                acc
            })
            .collect()
    }

    /// `H(x) = sum_k log cosh(K_k . x + b_k)`.
    pub fn hamiltonian_value(&self, x: &[f64]) -> f64 {
        self.preactivations(x).iter().map(|&z| log_cosh(z)).sum()
    }

    /// Closed-form gradient `K^T tanh(Kx + b)`.
    pub fn hamiltonian_gradient(&self, x: &[f64]) -> Vec<f64> {
        let w = self.raw.segment_values(SEG_HW).unwrap();
        let th: Vec<f64> = self.preactivations(x).iter().map(|z| z.tanh()).collect();
        (0..4)
            .map(|d| (0..self.n_h).map(|k| w[k * 4 + d] * th[k]).sum())
            .collect()
    }

    /// Dissipation gain on the concatenated `[x, dH/dx]` features; strictly
    /// inside `(0, gamma_scale)` for every weight setting.
    pub fn gamma_eval(&self, x: &[f64], grad_h: &[f64]) -> f64 {
        let w = self.raw.segment_values(SEG_GW).unwrap();
        let b = self.raw.segment_values(SEG_GB).unwrap()[0];
        let mut acc = b;
        for d in 0..4 {
            acc += w[d] * x[d];
        }
        for d in 0..4 {
            acc += w[4 + d] * grad_h[d];
        }
        self.gamma_scale * sigmoid(acc)
    }
}

/// Learned rhs `(gamma dH/dp J0 + J1) dH/dx + G u`.
pub fn learned_rhs(model: &LearnedGasPiston, x: &[f64], u: f64) -> Result<Vec<f64>> {
    if x.len() != 4 {
        return Err(Error::DimensionMismatch {
            context: "gas state",
            expected: 4,
            got: x.len(),
        });
    }
    let grad_h = model.hamiltonian_gradient(x);
    let gamma = model.gamma_eval(x, &grad_h);
    let (a, b) = model.j1();
    let r = gamma * grad_h[3];
    Ok(assemble_rhs(r, a, b, &grad_h, u))
}

impl DynamicsModel for LearnedGasPiston {
    fn state_dim(&self) -> usize {
        4
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        learned_rhs(self, x, u[0])
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        Ok(self.hamiltonian_value(x))
    }

    fn hamiltonian_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.hamiltonian_gradient(x))
    }

    fn entropy_rate(&self, x: &[f64]) -> Result<f64> {
        let grad_h = self.hamiltonian_gradient(x);
        Ok(self.gamma_eval(x, &grad_h) * grad_h[3] * grad_h[3])
    }

    fn conservative_rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        learned_rhs(self, x, 0.0)
    }

    fn state_labels(&self) -> Vec<String> {
        GasPistonTruth::default().state_labels()
    }

    fn input_labels(&self) -> Vec<String> {
        vec!["u[N]".into()]
    }
}

impl Trainable for LearnedGasPiston {
    fn params(&self) -> &ParameterVector {
        &self.raw
    }

    fn params_mut(&mut self) -> &mut ParameterVector {
        &mut self.raw
    }

    fn record_rhs(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: &[Var],
        u: &[f64],
    ) -> Result<Vec<Var>> {
        let hw = self.raw.segment(SEG_HW).unwrap();
        let hb = self.raw.segment(SEG_HB).unwrap();
        let gw = self.raw.segment(SEG_GW).unwrap();
        let gb = self.raw.segment(SEG_GB).unwrap();
        let j1 = self.raw.segment(SEG_J1).unwrap();

        // tanh(Kx + b) per hidden unit
        let mut th = Vec::with_capacity(self.n_h);
        for k in 0..self.n_h {
            let mut acc = params[hb.start + k];
            for d in 0..4 {
                let prod = tape.mul(params[hw.start + k * 4 + d], x[d]);
                acc = tape.add(acc, prod);
            }
            th.push(tape.tanh(acc));
        }
        // grad H = K^T tanh(.)
        let mut grad_h = Vec::with_capacity(4);
        for d in 0..4 {
            let mut acc = tape.constant(0.0);
            for k in 0..self.n_h {
                let prod = tape.mul(params[hw.start + k * 4 + d], th[k]);
                acc = tape.add(acc, prod);
            }
            grad_h.push(acc);
        }
        // gamma = scale * sigmoid(w . [x, grad H] + b)
        let mut pre = params[gb.start];
        for d in 0..4 {
            let prod = tape.mul(params[gw.start + d], x[d]);
            pre = tape.add(pre, prod);
        }
        for d in 0..4 {
            let prod = tape.mul(params[gw.start + 4 + d], grad_h[d]);
            pre = tape.add(pre, prod);
        }
        let sig = tape.sigmoid(pre);
        let gamma = tape.scale(sig, self.gamma_scale);

        let r = tape.mul(gamma, grad_h[3]);
        let alpha = params[j1.start];
        let beta = params[j1.start + 1];

        // rows of (R J0 + J1) grad H + G u
        let s_dot = tape.mul(r, grad_h[3]);
        let v_dot = tape.mul(alpha, grad_h[3]);
        let q_dot = tape.mul(beta, grad_h[3]);
        let rt = tape.mul(r, grad_h[0]);
        let ap = tape.mul(alpha, grad_h[1]);
        let bq = tape.mul(beta, grad_h[2]);
        let mut p_dot = tape.neg(rt);
        p_dot = tape.sub(p_dot, ap);
        p_dot = tape.sub(p_dot, bq);
        let u_node = tape.constant(u[0]);
        p_dot = tape.add(p_dot, u_node);
        Ok(vec![s_dot, v_dot, q_dot, p_dot])
    }

    fn l1_groups(&self) -> Vec<&'static str> {
        vec![SEG_J1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_gradient;
    use crate::data::rk4_generate;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn derived_gas_constants() {
        let g = GasPistonTruth::default();
        assert_relative_eq!(g.n_mol, 4.202508440271084e-2, max_relative = 1e-12);
        assert_relative_eq!(g.m_gas, 1.2187274476786144e-3, max_relative = 1e-12);
        assert_relative_eq!(g.volume_exponent(), 0.39928921333205264, max_relative = 1e-12);
        assert_relative_eq!(g.temperature(0.0, 0.001).unwrap(), 290.0, max_relative = 1e-14);
        assert_relative_eq!(g.pressure(290.0, 0.001), 101_325.0, max_relative = 1e-12);
    }

    #[test]
    fn rest_state_has_zero_flow() {
        let g = GasPistonTruth::default();
        let dx = truth_rhs(&g, &[0.05, 0.0012, -0.1, 0.0], 0.0).unwrap();
        assert_eq!(dx[0], 0.0);
        assert_eq!(dx[1], 0.0);
        assert_eq!(dx[2], 0.0);
    }

    #[test]
    fn initial_momentum_rate_matches_pressure_balance() {
        let g = GasPistonTruth::default();
        let dx = truth_rhs(&g, &g.initial_state(), 0.0).unwrap();
        // alpha P0 - K q0 = 0.033 * 101325 - 10 * 0.3
        assert_relative_eq!(dx[3], 3340.725, max_relative = 1e-12);
        // one FE step of h = 0.01 moves p by exactly h * pdot
        let p1 = 0.01 * dx[3];
        assert_relative_eq!(p1, 33.40725, max_relative = 1e-12);
    }

    #[test]
    fn piston_bottom_is_an_error() {
        let g = GasPistonTruth::default();
        assert!(matches!(
            truth_rhs(&g, &[0.0, -1e-9, 0.3, 0.0], 0.0),
            Err(Error::PistonBottom { .. })
        ));
    }

    #[test]
    fn truth_gradient_consistent_with_energy() {
        let g = GasPistonTruth::default();
        let x = [0.02, 0.0011, 0.25, 4.0];
        let grad = g.hamiltonian_grad(&x).unwrap();
        let fd = finite_diff_gradient(
            |xs| g.total_energy(xs),
            &x,
            1e-6,
        )
        .unwrap();
        for (a, b) in grad.iter().zip(&fd) {
            assert_relative_eq!(a, b, max_relative = 1e-5);
        }
    }

    #[test]
    fn free_response_conserves_total_energy() {
        // 10 s at the printed sampling step; the gas spring is stiff, so the
        // integrator takes 100 substeps per emitted sample.
        let g = GasPistonTruth::default();
        let traj = rk4_generate(&g, &g.initial_state(), |_| vec![0.0], 0.01, 1000, 100).unwrap();
        let h0 = g.total_energy(&traj.states[0]).unwrap();
        let mut max_drift: f64 = 0.0;
        for row in &traj.states {
            let e = g.total_energy(row).unwrap();
            max_drift = max_drift.max(((e - h0) / h0).abs());
        }
        assert!(max_drift <= 1e-6, "relative drift {max_drift}");
    }

    #[test]
    fn truth_entropy_never_decreases_along_trajectory() {
        let g = GasPistonTruth::default();
        let traj = rk4_generate(&g, &g.initial_state(), |_| vec![0.0], 0.01, 500, 100).unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1][0] >= w[0][0] - 1e-12);
        }
        for row in &traj.states {
            assert!(g.entropy_rate(row).unwrap() >= 0.0);
        }
    }

    #[test]
    fn hamiltonian_zero_weights_is_zero() {
        let model = LearnedGasPiston::from_flat(4, 10.0, &vec![0.0; 4 * 4 + 4 + 8 + 1 + 2]).unwrap();
        assert_eq!(model.hamiltonian_value(&[1.0, -2.0, 0.5, 3.0]), 0.0);
    }

    #[test]
    fn hamiltonian_single_unit_analytic() {
        // one unit selecting the first coordinate: H = log cosh(x0)
        let mut values = vec![0.0; 4 + 1 + 8 + 1 + 2];
        values[0] = 1.0;
        let model = LearnedGasPiston::from_flat(1, 10.0, &values).unwrap();
        for &w in &[0.0, 0.3, -1.7, 5.0] {
            let x = [w, 0.0, 0.0, 0.0];
            assert_relative_eq!(model.hamiltonian_value(&x), log_cosh(w), max_relative = 1e-15);
            let grad = model.hamiltonian_gradient(&x);
            assert_relative_eq!(grad[0], w.tanh(), max_relative = 1e-15);
            assert_eq!(grad[1], 0.0);
        }
    }

    #[test]
    fn hamiltonian_stable_for_large_preactivations() {
        // drive |Kx + b| up to ~500 where cosh alone would overflow
        let mut values = vec![0.0; 4 + 1 + 8 + 1 + 2];
        values[0] = 100.0;
        let model = LearnedGasPiston::from_flat(1, 10.0, &values).unwrap();
        let x = [5.0, 0.0, 0.0, 0.0];
        assert_relative_eq!(
            model.hamiltonian_value(&x),
            499.30685281944005,
            max_relative = 1e-14
        );
    }

    #[test]
    fn hamiltonian_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let model = LearnedGasPiston::new(8, 10.0, rng.gen());
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let grad = model.hamiltonian_gradient(&x);
            let fd = finite_diff_gradient(|xs| Ok(model.hamiltonian_value(xs)), &x, 1e-6).unwrap();
            for (a, b) in grad.iter().zip(&fd) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn gamma_zero_weights_is_half_scale() {
        let model = LearnedGasPiston::from_flat(2, 10.0, &vec![0.0; 2 * 4 + 2 + 8 + 1 + 2]).unwrap();
        assert_eq!(model.gamma_eval(&[1.0; 4], &[2.0; 4]), 5.0);
    }

    #[test]
    fn gamma_stays_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let model = LearnedGasPiston::new(8, 10.0, 3);
        for _ in 0..100_000 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let g: Vec<f64> = (0..4).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let v = model.gamma_eval(&x, &g);
            assert!((0.0..=10.0).contains(&v));
        }
    }

    #[test]
    fn gamma_monotone_in_preactivation() {
        let model = LearnedGasPiston::from_flat(
            2,
            10.0,
            &{
                let mut v = vec![0.0; 2 * 4 + 2 + 8 + 1 + 2];
                v[2 * 4 + 2] = 1.0; // gamma weight on x0
                v
            },
        )
        .unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..50 {
            let x0 = -5.0 + 0.2 * i as f64;
            let v = model.gamma_eval(&[x0, 0.0, 0.0, 0.0], &[0.0; 4]);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn learned_entropy_rate_zero_when_momentum_costate_vanishes() {
        // zero Hamiltonian weights make dH/dp = 0 identically
        let model = LearnedGasPiston::from_flat(4, 10.0, &vec![0.0; 4 * 4 + 4 + 8 + 1 + 2]).unwrap();
        let dx = learned_rhs(&model, &[0.4, 0.8, -0.3, 1.9], 0.0).unwrap();
        assert_eq!(dx[0], 0.0);
    }

    #[test]
    fn learned_entropy_component_nonnegative_for_any_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..1000 {
            let model = LearnedGasPiston::new(6, 10.0, trial);
            for _ in 0..100 {
                let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let dx = learned_rhs(&model, &x, rng.gen_range(-5.0..5.0)).unwrap();
                assert!(dx[0] >= 0.0, "entropy rate {} at {x:?}", dx[0]);
                assert!(model.entropy_rate(&x).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn plugging_truth_parts_into_assembly_recovers_truth_rhs() {
        // with R frozen to mu v / T and grad H frozen to [T, -P, K q, v],
        // the shared assembly reproduces the expanded truth expressions
        let g = GasPistonTruth::default();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..200 {
            let x = [
                rng.gen_range(-0.05..0.2),
                rng.gen_range(5e-4..2e-3),
                rng.gen_range(-0.2..0.5),
                rng.gen_range(-10.0..10.0),
            ];
            let u = rng.gen_range(-3.0..3.0);
            let t = g.temperature(x[0], x[1]).unwrap();
            let p = g.pressure(t, x[1]);
            let v = x[3] / g.piston_mass;
            let grad = [t, -p, g.spring * x[2], v];
            let assembled = assemble_rhs(g.friction * v / t, g.piston_area, g.coupling, &grad, u);
            let expanded = [
                g.friction * v * v / t,
                g.piston_area * v,
                g.coupling * v,
                -g.friction * v + g.piston_area * p - g.coupling * g.spring * x[2] + u,
            ];
            let direct = truth_rhs(&g, &x, u).unwrap();
            for d in 0..4 {
                assert_relative_eq!(assembled[d], expanded[d], max_relative = 1e-12);
                assert_relative_eq!(direct[d], expanded[d], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn tape_rhs_matches_plain_learned_rhs() {
        let model = LearnedGasPiston::new(16, 10.0, 5);
        let x = [0.3, -1.2, 0.8, 0.05];
        let u = [1.5];
        let plain = learned_rhs(&model, &x, u[0]).unwrap();
        let mut tape = Tape::new();
        let params: Vec<Var> = model.raw.values().iter().map(|v| tape.leaf(*v)).collect();
        let xv: Vec<Var> = x.iter().map(|v| tape.constant(*v)).collect();
        let rhs = model.record_rhs(&mut tape, &params, &xv, &u).unwrap();
        for (a, b) in rhs.iter().zip(&plain) {
            assert_eq!(tape.value(*a).to_bits(), b.to_bits());
        }
    }
}
