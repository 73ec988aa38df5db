//! Entropy-state thermal model of N connected zones.
//!
//! Each zone carries an entropy state; temperatures are recovered from the
//! reference state via `T_i = T_ref,i * exp((S_i - S_ref,i) / (m_i c_i))`
//! at constant zone volume. All trainable coefficients are strictly positive
//! through a softplus reparametrization, so energy conservation, entropy
//! production, and input monotonicity hold for every gradient iterate.

use crate::autodiff::{softplus, softplus_inv, ParameterVector, Tape, Var};
use crate::data::{Metadata, Trajectory};
use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::state::SkewSymmetricMatrix;
use crate::trainer::Trainable;

/// Undirected zone adjacency (shared walls).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n_zones: usize,
    edges: Vec<(usize, usize)>,
}

impl Adjacency {
    pub fn new(n_zones: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::Config(format!("self-loop on zone {a}")));
            }
            if a >= n_zones || b >= n_zones {
                return Err(Error::Config(format!(
                    "edge ({a}, {b}) out of range for {n_zones} zones"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        let before = normalized.len();
        normalized.dedup();
        if normalized.len() != before {
            return Err(Error::Config("duplicate adjacency edge".into()));
        }
        Ok(Self {
            n_zones,
            edges: normalized,
        })
    }

    /// Zones in a row: edges (0,1), (1,2), ...
    pub fn chain(n_zones: usize) -> Self {
        let edges: Vec<(usize, usize)> = (0..n_zones.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        Self { n_zones, edges }
    }

    pub fn n_zones(&self) -> usize {
        self.n_zones
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
}

/// Exogenous drive: ambient temperature plus per-zone solar, heating, and
/// cooling gains. Flattened input order is `[T_e, Q_s.., Q_h.., Q_c..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingInputs {
    pub t_e: f64,
    pub q_s: Vec<f64>,
    pub q_h: Vec<f64>,
    pub q_c: Vec<f64>,
}

impl BuildingInputs {
    pub fn zero_gains(t_e: f64, n: usize) -> Self {
        Self {
            t_e,
            q_s: vec![0.0; n],
            q_h: vec![0.0; n],
            q_c: vec![0.0; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.t_e <= 0.0 {
            return Err(Error::NonPositiveTemperature {
                zone: usize::MAX,
                value: self.t_e,
            });
        }
        for (name, v) in [("q_s", &self.q_s), ("q_h", &self.q_h), ("q_c", &self.q_c)] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    context: match name {
                        "q_s" => "building q_s",
                        "q_h" => "building q_h",
                        _ => "building q_c",
                    },
                    expected: n,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + 3 * self.q_s.len());
        out.push(self.t_e);
        out.extend_from_slice(&self.q_s);
        out.extend_from_slice(&self.q_h);
        out.extend_from_slice(&self.q_c);
        out
    }

    pub fn unflatten(u: &[f64], n: usize) -> Result<Self> {
        if u.len() != 1 + 3 * n {
            return Err(Error::DimensionMismatch {
                context: "building input",
                expected: 1 + 3 * n,
                got: u.len(),
            });
        }
        Ok(Self {
            t_e: u[0],
            q_s: u[1..1 + n].to_vec(),
            q_h: u[1 + n..1 + 2 * n].to_vec(),
            q_c: u[1 + 2 * n..1 + 3 * n].to_vec(),
        })
    }
}

const SEG_EDGE: &str = "lambda_edge";
const SEG_EXT: &str = "lambda_ext";
const SEG_BS: &str = "b_s";
const SEG_BH: &str = "b_h";
const SEG_BC: &str = "b_c";

/// Building model parameters: raw (unconstrained) coefficients, fixed zone
/// heat capacities, and the reference state anchoring the entropy scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingParams {
    adjacency: Adjacency,
    raw: ParameterVector,
    heat_capacity: Vec<f64>,
    t_ref: Vec<f64>,
    s_ref: Vec<f64>,
    loss_in_temperature: bool,
}

/// Default effective initialization: order-of-magnitude neutral.
pub const INIT_LAMBDA_EDGE: f64 = 1.0;
pub const INIT_LAMBDA_EXT: f64 = 0.5;
pub const INIT_GAIN: f64 = 1e-3;

/// Default zone heat capacity m_i c_i, J/K.
pub const DEFAULT_HEAT_CAPACITY: f64 = 1e6;

impl BuildingParams {
    /// New model with the documented default initialization.
    pub fn new(adjacency: Adjacency, heat_capacity: Vec<f64>, t_ref: Vec<f64>) -> Result<Self> {
        let n = adjacency.n_zones();
        let e = adjacency.edges().len();
        Self::with_effective(
            adjacency,
            heat_capacity,
            t_ref,
            &vec![INIT_LAMBDA_EDGE; e],
            &vec![INIT_LAMBDA_EXT; n],
            &vec![INIT_GAIN; n],
            &vec![INIT_GAIN; n],
            &vec![INIT_GAIN; n],
        )
    }

    /// Construct from effective (positive) coefficient values; raw values are
    /// their softplus preimages.
    #[allow(clippy::too_many_arguments)]
    pub fn with_effective(
        adjacency: Adjacency,
        heat_capacity: Vec<f64>,
        t_ref: Vec<f64>,
        lambda_edge: &[f64],
        lambda_ext: &[f64],
        b_s: &[f64],
        b_h: &[f64],
        b_c: &[f64],
    ) -> Result<Self> {
        let n = adjacency.n_zones();
        let e = adjacency.edges().len();
        if heat_capacity.len() != n || t_ref.len() != n {
            return Err(Error::DimensionMismatch {
                context: "building zone constants",
                expected: n,
                got: heat_capacity.len().min(t_ref.len()),
            });
        }
        if heat_capacity.iter().any(|&c| c <= 0.0) {
            return Err(Error::Config("zone heat capacity must be positive".into()));
        }
        if t_ref.iter().any(|&t| t <= 0.0) {
            return Err(Error::Config("reference temperature must be positive".into()));
        }
        if lambda_edge.len() != e {
            return Err(Error::DimensionMismatch {
                context: "lambda_edge",
                expected: e,
                got: lambda_edge.len(),
            });
        }
        for (name, vals, want) in [
            (SEG_EXT, lambda_ext, n),
            (SEG_BS, b_s, n),
            (SEG_BH, b_h, n),
            (SEG_BC, b_c, n),
        ] {
            if vals.len() != want {
                return Err(Error::Config(format!(
                    "{name} needs {want} entries, got {}",
                    vals.len()
                )));
            }
            if vals.iter().chain(lambda_edge).any(|&v| v <= 0.0) {
                return Err(Error::Config(format!(
                    "effective {name} values must be strictly positive"
                )));
            }
        }
        let mut raw = ParameterVector::new(&[
            (SEG_EDGE, e),
            (SEG_EXT, n),
            (SEG_BS, n),
            (SEG_BH, n),
            (SEG_BC, n),
        ]);
        {
            let values = raw.values_mut();
            let mut k = 0;
            for group in [lambda_edge, lambda_ext, b_s, b_h, b_c] {
                for &v in group {
                    values[k] = softplus_inv(v);
                    k += 1;
                }
            }
        }
        Ok(Self {
            adjacency,
            raw,
            heat_capacity,
            t_ref,
            s_ref: vec![0.0; n],
            loss_in_temperature: true,
        })
    }

    pub fn n_zones(&self) -> usize {
        self.adjacency.n_zones()
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn heat_capacity(&self) -> &[f64] {
        &self.heat_capacity
    }

    pub fn t_ref(&self) -> &[f64] {
        &self.t_ref
    }

    pub fn s_ref(&self) -> &[f64] {
        &self.s_ref
    }

    pub fn set_reference(&mut self, t_ref: Vec<f64>, s_ref: Vec<f64>) -> Result<()> {
        if t_ref.len() != self.n_zones() || s_ref.len() != self.n_zones() {
            return Err(Error::DimensionMismatch {
                context: "building reference state",
                expected: self.n_zones(),
                got: t_ref.len().min(s_ref.len()),
            });
        }
        if t_ref.iter().any(|&t| t <= 0.0) {
            return Err(Error::Config("reference temperature must be positive".into()));
        }
        self.t_ref = t_ref;
        self.s_ref = s_ref;
        Ok(())
    }

    pub fn loss_in_temperature(&self) -> bool {
        self.loss_in_temperature
    }

    pub fn set_loss_in_temperature(&mut self, flag: bool) {
        self.loss_in_temperature = flag;
    }

    pub fn lambda_edge(&self, k: usize) -> f64 {
        softplus(self.raw.segment_values(SEG_EDGE).unwrap()[k])
    }

    pub fn lambda_ext(&self, i: usize) -> f64 {
        softplus(self.raw.segment_values(SEG_EXT).unwrap()[i])
    }

    pub fn b_s(&self, i: usize) -> f64 {
        softplus(self.raw.segment_values(SEG_BS).unwrap()[i])
    }

    pub fn b_h(&self, i: usize) -> f64 {
        softplus(self.raw.segment_values(SEG_BH).unwrap()[i])
    }

    pub fn b_c(&self, i: usize) -> f64 {
        softplus(self.raw.segment_values(SEG_BC).unwrap()[i])
    }

    /// All effective coefficients as (name, zone-or-edge index, value).
    pub fn effective_lambdas(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (name, range) in self.raw.segments() {
            for (k, idx) in range.enumerate() {
                out.push((format!("{name}[{k}]"), softplus(self.raw.values()[idx])));
            }
        }
        out
    }
}

/// `T_i = T_ref,i * exp((S_i - S_ref,i) / (m_i c_i))`, constant volume.
pub fn temperature_from_entropy(params: &BuildingParams, s: &[f64]) -> Result<Vec<f64>> {
    let n = params.n_zones();
    if s.len() != n {
        return Err(Error::DimensionMismatch {
            context: "entropy state",
            expected: n,
            got: s.len(),
        });
    }
    let mut t = Vec::with_capacity(n);
    for i in 0..n {
        let arg = (s[i] - params.s_ref[i]) * (1.0 / params.heat_capacity[i]);
        if !arg.is_finite() || arg.abs() > 700.0 {
            return Err(Error::EntropyOverflow {
                zone: i,
                magnitude: arg.abs(),
            });
        }
        t.push(arg.exp() * params.t_ref[i]);
    }
    Ok(t)
}

/// `S_i = S_ref,i + m_i c_i * ln(T_i / T_ref,i)`; exact inverse of
/// [`temperature_from_entropy`].
pub fn entropy_from_temperature(params: &BuildingParams, t: &[f64]) -> Result<Vec<f64>> {
    let n = params.n_zones();
    if t.len() != n {
        return Err(Error::DimensionMismatch {
            context: "temperature state",
            expected: n,
            got: t.len(),
        });
    }
    let mut s = Vec::with_capacity(n);
    for i in 0..n {
        if t[i] <= 0.0 {
            return Err(Error::NonPositiveTemperature {
                zone: i,
                value: t[i],
            });
        }
        s.push(params.s_ref[i] + params.heat_capacity[i] * (t[i] / params.t_ref[i]).ln());
    }
    Ok(s)
}

/// Interconnection matrix: entry (i, j) is `lambda_ij (T_j - T_i)/(T_i T_j)`
/// on the adjacency, zero otherwise; antisymmetric by construction.
pub fn build_jtilde(params: &BuildingParams, t: &[f64]) -> Result<SkewSymmetricMatrix> {
    let n = params.n_zones();
    if t.len() != n {
        return Err(Error::DimensionMismatch {
            context: "temperature state",
            expected: n,
            got: t.len(),
        });
    }
    let mut m = SkewSymmetricMatrix::zeros(n);
    for (k, &(i, j)) in params.adjacency.edges().iter().enumerate() {
        let value = params.lambda_edge(k) * ((t[j] - t[i]) / (t[i] * t[j]));
        m.set_upper(i, j, value)?;
    }
    Ok(m)
}

/// Per-edge decomposition `Jtilde(T) = sum_k R_k(T) J_k` with constant
/// one-pair skeletons `J_k`; the summands are what make the entropy balance
/// a sum of squares.
pub fn decompose_jtilde(
    params: &BuildingParams,
    t: &[f64],
) -> Result<Vec<(f64, SkewSymmetricMatrix)>> {
    let n = params.n_zones();
    let mut terms = Vec::with_capacity(params.adjacency.edges().len());
    for (k, &(i, j)) in params.adjacency.edges().iter().enumerate() {
        let r = params.lambda_edge(k) * ((t[j] - t[i]) / (t[i] * t[j]));
        let mut skel = SkewSymmetricMatrix::zeros(n);
        skel.set_upper(i, j, 1.0)?;
        terms.push((r, skel));
    }
    Ok(terms)
}

/// Entropy balance `dS/dt`: inter-zone exchange, exterior losses, and gain
/// terms. The exterior coupling `B_e(T)_i T_e` is evaluated in its cancelled
/// form `lambda_ie (T_e - T_i)/T_i`, which is the same value for `T_e > 0`
/// and exactly affine in the input.
pub fn building_rhs(
    params: &BuildingParams,
    s: &[f64],
    inputs: &BuildingInputs,
) -> Result<Vec<f64>> {
    let n = params.n_zones();
    inputs.validate(n)?;
    let t = temperature_from_entropy(params, s)?;
    let mut out = vec![0.0; n];
    for (k, &(i, j)) in params.adjacency.edges().iter().enumerate() {
        let e = params.lambda_edge(k) * ((t[j] - t[i]) / (t[i] * t[j]));
        out[i] += e * t[j];
        out[j] -= e * t[i];
    }
    for i in 0..n {
        out[i] += params.lambda_ext(i) * ((inputs.t_e - t[i]) / t[i]);
    }
    for i in 0..n {
        out[i] += params.b_s(i) * inputs.q_s[i];
        out[i] += params.b_h(i) * inputs.q_h[i];
        out[i] += params.b_c(i) * inputs.q_c[i];
    }
    Ok(out)
}

impl DynamicsModel for BuildingParams {
    fn state_dim(&self) -> usize {
        self.n_zones()
    }

    fn input_dim(&self) -> usize {
        1 + 3 * self.n_zones()
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let inputs = BuildingInputs::unflatten(u, self.n_zones())?;
        building_rhs(self, x, &inputs)
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        let t = temperature_from_entropy(self, x)?;
        Ok(t.iter()
            .zip(&self.heat_capacity)
            .map(|(ti, mc)| mc * ti)
            .sum())
    }

    fn hamiltonian_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        temperature_from_entropy(self, x)
    }

    fn entropy_rate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.conservative_rhs(x)?.iter().sum())
    }

    fn conservative_rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = temperature_from_entropy(self, x)?;
        build_jtilde(self, &t)?.mat_vec(&t)
    }

    fn state_labels(&self) -> Vec<String> {
        (0..self.n_zones())
            .map(|i| format!("T_zone{}[K]", i + 1))
            .collect()
    }

    fn input_labels(&self) -> Vec<String> {
        let n = self.n_zones();
        let mut labels = vec!["T_e[K]".to_string()];
        for prefix in ["Q_s", "Q_h", "Q_c"] {
            for i in 0..n {
                labels.push(format!("{prefix}{}[W]", i + 1));
            }
        }
        labels
    }
}

impl Trainable for BuildingParams {
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
        let n = self.n_zones();
        let inputs = BuildingInputs::unflatten(u, n)?;
        inputs.validate(n)?;

        // temperatures, mirroring temperature_from_entropy
        let mut t = Vec::with_capacity(n);
        for i in 0..n {
            let sref = tape.constant(self.s_ref[i]);
            let ds = tape.sub(x[i], sref);
            let arg = tape.scale(ds, 1.0 / self.heat_capacity[i]);
            let v = tape.value(arg);
            if !v.is_finite() || v.abs() > 700.0 {
                return Err(Error::EntropyOverflow {
                    zone: i,
                    magnitude: v.abs(),
                });
            }
            let e = tape.exp(arg);
            t.push(tape.scale(e, self.t_ref[i]));
        }

        let zero = tape.constant(0.0);
        let mut out = vec![zero; n];
        let edge_range = self.raw.segment(SEG_EDGE).unwrap();
        for (k, &(i, j)) in self.adjacency.edges().iter().enumerate() {
            let lam = tape.softplus(params[edge_range.start + k]);
            let diff = tape.sub(t[j], t[i]);
            let prod = tape.mul(t[i], t[j]);
            let ratio = tape.div(diff, prod)?;
            let e = tape.mul(lam, ratio);
            let ci = tape.mul(e, t[j]);
            out[i] = tape.add(out[i], ci);
            let cj = tape.mul(e, t[i]);
            out[j] = tape.sub(out[j], cj);
        }
        let ext_range = self.raw.segment(SEG_EXT).unwrap();
        for i in 0..n {
            let lam = tape.softplus(params[ext_range.start + i]);
            let te = tape.constant(inputs.t_e);
            let diff = tape.sub(te, t[i]);
            let ratio = tape.div(diff, t[i])?;
            let term = tape.mul(lam, ratio);
            out[i] = tape.add(out[i], term);
        }
        for (seg, gains) in [
            (SEG_BS, &inputs.q_s),
            (SEG_BH, &inputs.q_h),
            (SEG_BC, &inputs.q_c),
        ] {
            let range = self.raw.segment(seg).unwrap();
            for i in 0..n {
                let lam = tape.softplus(params[range.start + i]);
                let q = tape.constant(gains[i]);
                let term = tape.mul(lam, q);
                out[i] = tape.add(out[i], term);
            }
        }
        Ok(out)
    }

    fn ingest_state(&self, z: &[f64]) -> Result<Vec<f64>> {
        entropy_from_temperature(self, z)
    }

    fn record_loss_output(&self, tape: &mut Tape, x: &[Var]) -> Result<Vec<Var>> {
        if !self.loss_in_temperature {
            return Ok(x.to_vec());
        }
        let mut t = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let sref = tape.constant(self.s_ref[i]);
            let ds = tape.sub(x[i], sref);
            let arg = tape.scale(ds, 1.0 / self.heat_capacity[i]);
            let v = tape.value(arg);
            if !v.is_finite() || v.abs() > 700.0 {
                return Err(Error::EntropyOverflow {
                    zone: i,
                    magnitude: v.abs(),
                });
            }
            let e = tape.exp(arg);
            t.push(tape.scale(e, self.t_ref[i]));
        }
        Ok(t)
    }

    fn target_row(&self, z: &[f64]) -> Result<Vec<f64>> {
        if self.loss_in_temperature {
            Ok(z.to_vec())
        } else {
            entropy_from_temperature(self, z)
        }
    }

    fn measured_output(&self, x: &[f64]) -> Result<Vec<f64>> {
        temperature_from_entropy(self, x)
    }

    fn effective_value(&self, idx: usize) -> f64 {
        softplus(self.raw.values()[idx])
    }

    fn record_effective(&self, tape: &mut Tape, params: &[Var], idx: usize) -> Var {
        tape.softplus(params[idx])
    }

    fn l1_groups(&self) -> Vec<&'static str> {
        vec![SEG_EDGE]
    }
}

/// Forward-Euler simulation of the truth model at `substeps` fine steps per
/// emitted sample, emitting zone temperatures as the measured state. Inputs
/// are held constant over each coarse step.
pub fn synth_building_generate(
    true_params: &BuildingParams,
    x0_temperatures: &[f64],
    inputs: &[BuildingInputs],
    h: f64,
    substeps: usize,
) -> Result<Trajectory> {
    assert!(h > 0.0 && substeps >= 1);
    let n = true_params.n_zones();
    let mut s = entropy_from_temperature(true_params, x0_temperatures)?;
    let hs = h / substeps as f64;
    let mut states = Vec::with_capacity(inputs.len() + 1);
    let mut input_rows = Vec::with_capacity(inputs.len());
    let mut times = Vec::with_capacity(inputs.len() + 1);
    states.push(x0_temperatures.to_vec());
    times.push(0.0);
    for (i, u) in inputs.iter().enumerate() {
        input_rows.push(u.flatten());
        for _ in 0..substeps {
            let ds = building_rhs(true_params, &s, u).map_err(|e| e.at_step(i))?;
            for (sd, dd) in s.iter_mut().zip(&ds) {
                *sd += hs * dd;
            }
        }
        let t = temperature_from_entropy(true_params, &s).map_err(|e| e.at_step(i))?;
        let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > 1e12 {
            return Err(Error::Divergence { step: i, norm });
        }
        states.push(t);
        times.push((i + 1) as f64 * h);
    }
    let mut constants = std::collections::BTreeMap::new();
    for (i, mc) in true_params.heat_capacity.iter().enumerate() {
        constants.insert(format!("heat_capacity_{i}"), *mc);
    }
    for (name, v) in true_params.effective_lambdas() {
        constants.insert(format!("true_{name}"), v);
    }
    Ok(Trajectory {
        times,
        states,
        inputs: input_rows,
        state_labels: true_params.state_labels(),
        input_labels: true_params.input_labels(),
        metadata: Metadata {
            source: "synthetic-building".into(),
            state_dim: n,
            input_dim: 1 + 3 * n,
            step: h,
            constants,
            ..Metadata::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariants::check_energy_conservation;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_zone(lambda: f64) -> BuildingParams {
        BuildingParams::with_effective(
            Adjacency::chain(2),
            vec![1e6; 2],
            vec![293.15; 2],
            &[lambda],
            &[1e-18; 2], // negligible exterior coupling for closed-system checks
            &[1e-3; 2],
            &[1e-3; 2],
            &[1e-3; 2],
        )
        .unwrap()
    }

    fn three_zone() -> BuildingParams {
        BuildingParams::with_effective(
            Adjacency::chain(3),
            vec![1e6; 3],
            vec![293.15; 3],
            &[1.7, 0.9],
            &[0.6, 0.4, 0.8],
            &[2e-3, 3e-3, 1e-3],
            &[4e-3, 2e-3, 3e-3],
            &[1e-3, 2e-3, 2e-3],
        )
        .unwrap()
    }

    #[test]
    fn adjacency_rejects_bad_edges() {
        assert!(Adjacency::new(3, &[(0, 0)]).is_err());
        assert!(Adjacency::new(3, &[(0, 3)]).is_err());
        assert!(Adjacency::new(3, &[(0, 1), (1, 0)]).is_err());
        let a = Adjacency::new(3, &[(2, 0), (0, 1)]).unwrap();
        assert_eq!(a.edges(), &[(0, 1), (0, 2)]);
    }

    #[test]
    fn temperature_at_reference_entropy() {
        let p = three_zone();
        let t = temperature_from_entropy(&p, &[0.0, 0.0, 0.0]).unwrap();
        for v in t {
            assert_eq!(v, 293.15);
        }
    }

    #[test]
    fn entropy_of_mc_ln2_doubles_temperature() {
        let p = three_zone();
        let ds = 1e6 * std::f64::consts::LN_2;
        let t = temperature_from_entropy(&p, &[ds, 0.0, 0.0]).unwrap();
        assert_relative_eq!(t[0], 2.0 * 293.15, max_relative = 1e-14);
        assert_eq!(t[1], 293.15);
    }

    #[test]
    fn conversion_overflow_names_zone() {
        let p = three_zone();
        match temperature_from_entropy(&p, &[0.0, 7.1e8, 0.0]) {
            Err(Error::EntropyOverflow { zone, .. }) => assert_eq!(zone, 1),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn non_positive_temperature_rejected() {
        let p = three_zone();
        assert!(matches!(
            entropy_from_temperature(&p, &[280.0, -1.0, 280.0]),
            Err(Error::NonPositiveTemperature { zone: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn temperature_entropy_round_trip(
            t in proptest::collection::vec(260.0f64..320.0, 3)
        ) {
            let p = three_zone();
            let s = entropy_from_temperature(&p, &t).unwrap();
            let back = temperature_from_entropy(&p, &s).unwrap();
            for (a, b) in back.iter().zip(&t) {
                prop_assert!((a - b).abs() <= 1e-12 * b);
            }
        }
    }

    #[test]
    fn jtilde_vanishes_at_equal_temperatures() {
        let p = three_zone();
        let j = build_jtilde(&p, &[295.0, 295.0, 295.0]).unwrap();
        for row in j.materialize() {
            for v in row {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn jtilde_two_zone_value() {
        let p = two_zone(1.0);
        let j = build_jtilde(&p, &[300.0, 290.0]).unwrap();
        assert_relative_eq!(j.get(0, 1), -10.0 / 87_000.0, max_relative = 1e-12);
        assert_relative_eq!(j.get(1, 0), 10.0 / 87_000.0, max_relative = 1e-12);
    }

    #[test]
    fn jtilde_zero_off_adjacency() {
        let p = three_zone(); // chain: no (0, 2) edge
        let j = build_jtilde(&p, &[301.0, 288.0, 296.5]).unwrap();
        assert_eq!(j.get(0, 2), 0.0);
        assert_eq!(j.get(2, 0), 0.0);
    }

    #[test]
    fn rhs_zero_at_equilibrium() {
        let p = three_zone();
        let t = [290.0; 3];
        let s = entropy_from_temperature(&p, &t).unwrap();
        let u = BuildingInputs::zero_gains(290.0, 3);
        let ds = building_rhs(&p, &s, &u).unwrap();
        assert_eq!(ds, vec![0.0; 3]);
    }

    #[test]
    fn two_zone_exchange_rates() {
        // conservative part: [-1/30, +10/290]; total = 10 (1/290 - 1/300)
        let p = two_zone(1.0);
        let s = entropy_from_temperature(&p, &[300.0, 290.0]).unwrap();
        let cons = p.conservative_rhs(&s).unwrap();
        assert_relative_eq!(cons[0], -1.0 / 30.0, max_relative = 1e-12);
        assert_relative_eq!(cons[1], 10.0 / 290.0, max_relative = 1e-12);
        let total = p.entropy_rate(&s).unwrap();
        assert_relative_eq!(total, 1.1494252873563218e-3, max_relative = 1e-12);
        // full rhs with negligible exterior coupling and zero gains agrees
        let u = BuildingInputs::zero_gains(295.0, 2);
        let ds = building_rhs(&p, &s, &u).unwrap();
        assert_relative_eq!(ds[0], -1.0 / 30.0, max_relative = 1e-9);
        assert_relative_eq!(ds[1], 10.0 / 290.0, max_relative = 1e-9);
    }

    #[test]
    fn exterior_term_matches_paper_product_form() {
        let p = three_zone();
        let t = [294.0, 291.0, 288.5];
        let s = entropy_from_temperature(&p, &t).unwrap();
        let t_e = 283.0;
        let u = BuildingInputs::zero_gains(t_e, 3);
        let ds = building_rhs(&p, &s, &u).unwrap();
        let cons = p.conservative_rhs(&s).unwrap();
        for i in 0..3 {
            let b_e = p.lambda_ext(i) * (t_e - t[i]) / (t[i] * t_e);
            assert_relative_eq!(ds[i] - cons[i], b_e * t_e, max_relative = 1e-12);
        }
    }

    #[test]
    fn heating_gain_is_local_and_positive() {
        let p = three_zone();
        let t = [292.0, 290.0, 291.0];
        let s = entropy_from_temperature(&p, &t).unwrap();
        let mut u = BuildingInputs::zero_gains(285.0, 3);
        let base = building_rhs(&p, &s, &u).unwrap();
        u.q_h[1] = 1500.0;
        let heated = building_rhs(&p, &s, &u).unwrap();
        assert!(heated[1] > base[1]);
        assert_eq!(heated[0], base[0]);
        assert_eq!(heated[2], base[2]);
    }

    #[test]
    fn decomposition_single_edge_equals_jtilde() {
        let p = two_zone(2.5);
        let t = [301.0, 289.0];
        let j = build_jtilde(&p, &t).unwrap();
        let terms = decompose_jtilde(&p, &t).unwrap();
        assert_eq!(terms.len(), 1);
        let (r, skel) = &terms[0];
        assert_eq!(r * skel.get(0, 1), j.get(0, 1));
    }

    proptest! {
        #[test]
        fn decomposition_sums_to_jtilde(
            t in proptest::collection::vec(265.0f64..315.0, 3)
        ) {
            let p = three_zone();
            let j = build_jtilde(&p, &t).unwrap();
            let terms = decompose_jtilde(&p, &t).unwrap();
            let n = p.n_zones();
            let mut sum = vec![vec![0.0; n]; n];
            for (r, skel) in &terms {
                let d = skel.materialize();
                for i in 0..n {
                    for c in 0..n {
                        sum[i][c] += r * d[i][c];
                    }
                }
            }
            let dense = j.materialize();
            for i in 0..n {
                for c in 0..n {
                    prop_assert!((sum[i][c] - dense[i][c]).abs() <= 1e-14);
                }
            }
            // each skeleton has exactly one +-1 pair
            for (_, skel) in &terms {
                let d = skel.materialize();
                let nonzero: usize = d.iter().flatten().filter(|v| **v != 0.0).count();
                prop_assert_eq!(nonzero, 2);
            }
        }

        #[test]
        fn decomposition_terms_are_entropy_squares(
            t in proptest::collection::vec(265.0f64..315.0, 3)
        ) {
            let p = three_zone();
            let terms = decompose_jtilde(&p, &t).unwrap();
            for (k, (r, skel)) in terms.iter().enumerate() {
                let jt = skel.mat_vec(&t).unwrap();
                let contribution: f64 = r * jt.iter().sum::<f64>();
                let (i, j) = p.adjacency().edges()[k];
                let expect = p.lambda_edge(k) / (t[i] * t[j]) * (t[j] - t[i]).powi(2);
                prop_assert!((contribution - expect).abs() <= 1e-12 * expect.abs().max(1e-12));
                prop_assert!(contribution >= 0.0);
            }
        }
    }

    #[test]
    fn first_law_over_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for _ in 0..1000 {
            let p = BuildingParams::with_effective(
                Adjacency::chain(3),
                vec![1e6; 3],
                vec![293.15; 3],
                &[rng.gen_range(0.05..200.0), rng.gen_range(0.05..200.0)],
                &[rng.gen_range(0.05..50.0); 3],
                &[rng.gen_range(1e-4..1e-2); 3],
                &[rng.gen_range(1e-4..1e-2); 3],
                &[rng.gen_range(1e-4..1e-2); 3],
            )
            .unwrap();
            let t: Vec<f64> = (0..3).map(|_| rng.gen_range(255.0..330.0)).collect();
            let s = entropy_from_temperature(&p, &t).unwrap();
            let residual = check_energy_conservation(&p, &s).unwrap();
            assert!(residual <= 1e-10, "relative residual {residual}");
        }
    }

    #[test]
    fn second_law_two_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        for _ in 0..1000 {
            let p = BuildingParams::with_effective(
                Adjacency::chain(3),
                vec![1e6; 3],
                vec![293.15; 3],
                &[rng.gen_range(0.05..200.0), rng.gen_range(0.05..200.0)],
                &[rng.gen_range(0.05..50.0); 3],
                &[1e-3; 3],
                &[1e-3; 3],
                &[1e-3; 3],
            )
            .unwrap();
            let t: Vec<f64> = (0..3).map(|_| rng.gen_range(255.0..330.0)).collect();
            let s = entropy_from_temperature(&p, &t).unwrap();
            let rate = p.entropy_rate(&s).unwrap();
            assert!(rate >= -1e-12, "entropy rate {rate}");
            let appendix_sum: f64 = p
                .adjacency()
                .edges()
                .iter()
                .enumerate()
                .map(|(k, &(i, j))| p.lambda_edge(k) / (t[i] * t[j]) * (t[j] - t[i]).powi(2))
                .sum();
            assert_relative_eq!(rate, appendix_sum, max_relative = 1e-9);
        }
    }

    #[test]
    fn tape_rhs_matches_plain_rhs_bitwise() {
        let p = three_zone();
        let t = [295.5, 289.0, 301.25];
        let s = entropy_from_temperature(&p, &t).unwrap();
        let u = BuildingInputs {
            t_e: 281.0,
            q_s: vec![120.0, 0.0, 340.0],
            q_h: vec![0.0, 900.0, 0.0],
            q_c: vec![-50.0, 0.0, -200.0],
        };
        let plain = building_rhs(&p, &s, &u).unwrap();
        let mut tape = Tape::new();
        let params: Vec<Var> = p.raw.values().iter().map(|v| tape.leaf(*v)).collect();
        let x: Vec<Var> = s.iter().map(|v| tape.constant(*v)).collect();
        let rhs = p.record_rhs(&mut tape, &params, &x, &u.flatten()).unwrap();
        for (a, b) in rhs.iter().zip(&plain) {
            assert_eq!(tape.value(*a).to_bits(), b.to_bits());
        }
    }

    #[test]
    fn synth_constant_when_in_equilibrium() {
        let p = three_zone();
        let inputs = vec![BuildingInputs::zero_gains(292.0, 3); 20];
        let traj = synth_building_generate(&p, &[292.0; 3], &inputs, 900.0, 10).unwrap();
        for row in &traj.states {
            for v in row {
                assert_abs_diff_eq!(*v, 292.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn synth_heating_is_monotone_nondecreasing() {
        let p = three_zone();
        let mut u = BuildingInputs::zero_gains(290.0, 3);
        u.q_h[0] = 2000.0;
        let inputs = vec![u; 96];
        let traj = synth_building_generate(&p, &[290.0; 3], &inputs, 900.0, 10).unwrap();
        for w in traj.states.windows(2) {
            for z in 0..3 {
                assert!(
                    w[1][z] >= w[0][z] - 1e-9,
                    "zone {z} decreased: {} -> {}",
                    w[0][z],
                    w[1][z]
                );
            }
        }
    }

    #[test]
    fn synth_states_conserve_energy_with_inputs_zeroed() {
        let p = three_zone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inputs: Vec<BuildingInputs> = (0..48)
            .map(|_| BuildingInputs {
                t_e: rng.gen_range(275.0..300.0),
                q_s: (0..3).map(|_| rng.gen_range(0.0..500.0)).collect(),
                q_h: (0..3).map(|_| rng.gen_range(0.0..2000.0)).collect(),
                q_c: (0..3).map(|_| rng.gen_range(-1000.0..0.0)).collect(),
            })
            .collect();
        let traj = synth_building_generate(&p, &[288.0, 293.0, 291.0], &inputs, 900.0, 10).unwrap();
        for row in &traj.states {
            let s = entropy_from_temperature(&p, row).unwrap();
            let residual = check_energy_conservation(&p, &s).unwrap();
            assert!(residual <= 1e-10, "residual {residual}");
        }
    }
}
