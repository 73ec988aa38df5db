//! Comparison models: a lagged linear ARX fitted by least squares, and an
//! unconstrained feed-forward neural ODE.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParameterVector, Tape, Var};
use crate::data::Trajectory;
use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::trainer::Trainable;

/// Multivariate ARX with exogenous inputs and a bias term: each output is a
/// linear function of the last `lags` outputs and `lags` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxModel {
    pub lags: usize,
    pub ny: usize,
    pub nu: usize,
    /// Row r holds the coefficients of output r over the regressor
    /// `[y_{t-1}, .., y_{t-lags}, u_{t-1}, .., u_{t-lags}, 1]`.
    pub coefficients: DMatrix<f64>,
    /// Set when the stacked regressor was rank deficient and the returned
    /// coefficients are the minimum-norm least-squares solution.
    pub rank_deficient: bool,
}

impl ArxModel {
    pub fn regressor_len(lags: usize, ny: usize, nu: usize) -> usize {
        lags * ny + lags * nu + 1
    }

    /// Rebuild from a row-major coefficient dump.
    pub fn from_flat(
        lags: usize,
        ny: usize,
        nu: usize,
        row_major: &[f64],
        rank_deficient: bool,
    ) -> Result<Self> {
        let p = Self::regressor_len(lags, ny, nu);
        if row_major.len() != ny * p {
            return Err(Error::DimensionMismatch {
                context: "arx coefficients",
                expected: ny * p,
                got: row_major.len(),
            });
        }
        Ok(Self {
            lags,
            ny,
            nu,
            coefficients: DMatrix::from_fn(ny, p, |r, c| row_major[r * p + c]),
            rank_deficient,
        })
    }

    pub fn coefficients_row_major(&self) -> Vec<f64> {
        let p = self.coefficients.ncols();
        let mut out = Vec::with_capacity(self.ny * p);
        for r in 0..self.ny {
            for c in 0..p {
                out.push(self.coefficients[(r, c)]);
            }
        }
        out
    }

    fn regressor(&self, ys: &[Vec<f64>], us: &[Vec<f64>], t: usize) -> Vec<f64> {
        let mut row = Vec::with_capacity(Self::regressor_len(self.lags, self.ny, self.nu));
        for l in 1..=self.lags {
            row.extend_from_slice(&ys[t - l]);
        }
        for l in 1..=self.lags {
            row.extend_from_slice(&us[t - l]);
        }
        row.push(1.0);
        row
    }

    /// One-step prediction from a regressor row.
    fn predict_row(&self, reg: &[f64]) -> Vec<f64> {
        (0..self.ny)
            .map(|r| {
                reg.iter()
                    .enumerate()
                    .map(|(c, v)| self.coefficients[(r, c)] * v)
                    .sum()
            })
            .collect()
    }

    /// Recursive multistep prediction. `history_y`/`history_u` provide at
    /// least `lags` rows of context; predicted outputs are fed back while
    /// `future_u[k]` supplies the exogenous input driving prediction k.
    pub fn predict(
        &self,
        history_y: &[Vec<f64>],
        history_u: &[Vec<f64>],
        future_u: &[Vec<f64>],
        steps: usize,
    ) -> Result<Vec<Vec<f64>>> {
        if history_y.len() < self.lags {
            return Err(Error::Config(format!(
                "prediction needs {} history rows, got {}",
                self.lags,
                history_y.len()
            )));
        }
        if history_u.len() + 1 != history_y.len() {
            return Err(Error::Config(format!(
                "{} history rows require {} history inputs, got {}",
                history_y.len(),
                history_y.len() - 1,
                history_u.len()
            )));
        }
        if future_u.len() < steps {
            return Err(Error::Config(format!(
                "prediction of {steps} steps needs {steps} future inputs, got {}",
                future_u.len()
            )));
        }
        let mut ys: Vec<Vec<f64>> = history_y.to_vec();
        let mut us: Vec<Vec<f64>> = history_u.to_vec();
        let mut out = Vec::with_capacity(steps);
        for k in 0..steps {
            us.push(future_u[k].clone());
            let t = ys.len();
            let reg = self.regressor(&ys, &us, t);
            let pred = self.predict_row(&reg);
            out.push(pred.clone());
            ys.push(pred);
        }
        Ok(out)
    }
}

/// Fit by stacking every admissible one-step regression row across the given
/// trajectories and solving the normal equations through an eigendecomposition
/// of `X^T X`, which yields the global minimizer of the least-squares problem.
/// On rank-deficient regressors the result is the minimum-norm solution and
/// the model is flagged.
pub fn arx_fit(trajs: &[&Trajectory], lags: usize) -> Result<ArxModel> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::Config("arx_fit needs at least one trajectory".into()))?;
    let ny = first.state_dim();
    let nu = first.input_dim();
    let p = ArxModel::regressor_len(lags, ny, nu);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<Vec<f64>> = Vec::new();
    let template = ArxModel {
        lags,
        ny,
        nu,
        coefficients: DMatrix::zeros(ny, p),
        rank_deficient: false,
    };
    for traj in trajs {
        if traj.len() <= lags {
            return Err(Error::Config(format!(
                "trajectory of {} rows is too short for {lags} lags",
                traj.len()
            )));
        }
        for t in lags..traj.len() {
            rows.push(template.regressor(&traj.states, &traj.inputs, t));
            targets.push(traj.states[t].clone());
        }
    }
    let nrows = rows.len();
    let x = DMatrix::from_fn(nrows, p, |r, c| rows[r][c]);
    let y = DMatrix::from_fn(nrows, ny, |r, c| targets[r][c]);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let eig = nalgebra::SymmetricEigen::new(xtx);
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-12 * lambda_max.max(f64::MIN_POSITIVE);
    let mut theta = DMatrix::zeros(p, ny);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            let coef = v.transpose() * &xty; // 1 x ny
            theta += v * (coef / lambda);
        }
    }
    Ok(ArxModel {
        lags,
        ny,
        nu,
        coefficients: theta.transpose(),
        rank_deficient: rank < p,
    })
}

/// Training residual (sum of squared one-step errors) of a coefficient
/// matrix on the stacked regression; used by the optimality probe.
pub fn arx_residual(model: &ArxModel, trajs: &[&Trajectory]) -> f64 {
    let mut acc = 0.0;
    for traj in trajs {
        for t in model.lags..traj.len() {
            let reg = model.regressor(&traj.states, &traj.inputs, t);
            let pred = model.predict_row(&reg);
            for (a, b) in pred.iter().zip(&traj.states[t]) {
                acc += (a - b) * (a - b);
            }
        }
    }
    acc
}

/// Unconstrained neural ODE baseline: `dx/dt = f_theta(x)` with two tanh
/// hidden layers of 32 units. The input signal is deliberately not an
/// argument of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct VanillaNode {
    raw: ParameterVector,
    n: usize,
    m: usize,
    hidden: usize,
}

const SEG_W1: &str = "w1";
const SEG_B1: &str = "b1";
const SEG_W2: &str = "w2";
const SEG_B2: &str = "b2";
const SEG_W3: &str = "w3";
const SEG_B3: &str = "b3";

impl VanillaNode {
    pub fn new(n: usize, m: usize, hidden: usize, seed: u64) -> Self {
        let mut raw = ParameterVector::new(&[
            (SEG_W1, hidden * n),
            (SEG_B1, hidden),
            (SEG_W2, hidden * hidden),
            (SEG_B2, hidden),
            (SEG_W3, n * hidden),
            (SEG_B3, n),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        {
            let bound1 = 1.0 / (n as f64).sqrt();
            let bound2 = 1.0 / (hidden as f64).sqrt();
            let values = raw.values_mut();
            let mut idx = 0;
            for _ in 0..hidden * n {
                values[idx] = rng.gen_range(-bound1..bound1);
                idx += 1;
            }
            idx += hidden; // biases stay zero
            for _ in 0..hidden * hidden {
                values[idx] = rng.gen_range(-bound2..bound2);
                idx += 1;
            }
            idx += hidden;
            for _ in 0..n * hidden {
                values[idx] = rng.gen_range(-bound2..bound2);
                idx += 1;
            }
        }
        Self { raw, n, m, hidden }
    }

    pub fn from_flat(n: usize, m: usize, hidden: usize, values: &[f64]) -> Result<Self> {
        let mut model = Self::new(n, m, hidden, 0);
        model.raw.set_values(values)?;
        Ok(model)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn layer(&self, seg_w: &str, seg_b: &str, rows: usize, input: &[f64]) -> Vec<f64> {
        let w = self.raw.segment_values(seg_w).unwrap();
        let b = self.raw.segment_values(seg_b).unwrap();
        let cols = input.len();
        (0..rows)
            .map(|r| {
                let mut acc = b[r];
                for c in 0..cols {
                    acc += w[r * cols + c] * input[c];
                }
                acc
            })
            .collect()
    }
}

impl DynamicsModel for VanillaNode {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn rhs(&self, x: &[f64], _u: &[f64]) -> Result<Vec<f64>> {
        let h1: Vec<f64> = self
            .layer(SEG_W1, SEG_B1, self.hidden, x)
            .iter()
            .map(|v| v.tanh())
            .collect();
        let h2: Vec<f64> = self
            .layer(SEG_W2, SEG_B2, self.hidden, &h1)
            .iter()
            .map(|v| v.tanh())
            .collect();
        Ok(self.layer(SEG_W3, SEG_B3, self.n, &h2))
    }
}

impl Trainable for VanillaNode {
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
        _u: &[f64],
    ) -> Result<Vec<Var>> {
        let record_layer = |tape: &mut Tape, seg_w: &str, seg_b: &str, rows: usize, input: &[Var], raw: &ParameterVector| {
            let w = raw.segment(seg_w).unwrap();
            let b = raw.segment(seg_b).unwrap();
            let cols = input.len();
            (0..rows)
                .map(|r| {
                    let mut acc = params[b.start + r];
                    for c in 0..cols {
                        let prod = tape.mul(params[w.start + r * cols + c], input[c]);
                        acc = tape.add(acc, prod);
                    }
                    acc
                })
                .collect::<Vec<Var>>()
        };
        let z1 = record_layer(tape, SEG_W1, SEG_B1, self.hidden, x, &self.raw);
        let h1: Vec<Var> = z1.iter().map(|&v| tape.tanh(v)).collect();
        let z2 = record_layer(tape, SEG_W2, SEG_B2, self.hidden, &h1, &self.raw);
        let h2: Vec<Var> = z2.iter().map(|&v| tape.tanh(v)).collect();
        Ok(record_layer(tape, SEG_W3, SEG_B3, self.n, &h2, &self.raw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_gradient;
    use crate::data::Metadata;
    use crate::trainer::trajectory_gradient;
    use approx::assert_relative_eq;

    fn make_traj(states: Vec<Vec<f64>>, inputs: Vec<Vec<f64>>) -> Trajectory {
        let rows = states.len();
        Trajectory {
            times: (0..rows).map(|i| i as f64).collect(),
            states,
            inputs,
            state_labels: vec!["y[-]".into()],
            input_labels: vec!["u[-]".into()],
            metadata: Metadata::default(),
        }
    }

    fn ar1_traj(a: f64, rows: usize) -> Trajectory {
        let mut states = vec![vec![1.0]];
        for _ in 1..rows {
            let prev = states.last().unwrap()[0];
            states.push(vec![a * prev]);
        }
        let inputs = vec![vec![0.0]; rows - 1];
        make_traj(states, inputs)
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let traj = ar1_traj(0.9, 60);
        let model = arx_fit(&[&traj], 1).unwrap();
        assert_relative_eq!(model.coefficients[(0, 0)], 0.9, epsilon = 1e-6);
        assert!(model.coefficients[(0, 2)].abs() < 1e-6); // bias
    }

    #[test]
    fn zero_output_data_gives_zero_coefficients() {
        let mut traj = ar1_traj(0.9, 40);
        for row in &mut traj.states {
            row[0] = 0.0;
        }
        for (i, row) in traj.inputs.iter_mut().enumerate() {
            row[0] = (i as f64 * 0.37).sin();
        }
        let model = arx_fit(&[&traj], 2).unwrap();
        assert!(model.rank_deficient); // zero output lags cannot be identified
        for c in 0..model.coefficients.ncols() {
            assert!(model.coefficients[(0, c)].abs() < 1e-8);
        }
    }

    #[test]
    fn fitted_residual_is_a_local_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut states = vec![vec![0.4], vec![-0.2]];
        let mut inputs = Vec::new();
        for i in 2..120 {
            let u: f64 = (0.11 * i as f64).sin();
            inputs.push(vec![u]);
            let prev = states[i - 1][0];
            let prev2 = states[i - 2][0];
            states.push(vec![
                0.6 * prev - 0.2 * prev2 + 0.3 * u + rng.gen_range(-0.01..0.01),
            ]);
        }
        inputs.push(vec![0.0]);
        let traj = make_traj(states, inputs);
        let model = arx_fit(&[&traj], 2).unwrap();
        let base = arx_residual(&model, &[&traj]);
        for _ in 0..20 {
            let mut perturbed = model.clone();
            let mut norm = 0.0;
            let delta: Vec<f64> = (0..perturbed.coefficients.len())
                .map(|_| {
                    let d: f64 = rng.gen_range(-1.0..1.0);
                    norm += d * d;
                    d
                })
                .collect();
            let norm = norm.sqrt();
            for (k, d) in delta.iter().enumerate() {
                perturbed.coefficients[k] += 1e-3 * d / norm;
            }
            assert!(arx_residual(&perturbed, &[&traj]) >= base);
        }
    }

    #[test]
    fn one_step_prediction_equals_regression_fit() {
        let traj = ar1_traj(0.7, 30);
        let model = arx_fit(&[&traj], 1).unwrap();
        for t in 1..traj.len() {
            let reg = model.regressor(&traj.states, &traj.inputs, t);
            let fit = model.predict_row(&reg);
            let pred = model
                .predict(
                    &traj.states[..t],
                    &traj.inputs[..t - 1],
                    &[traj.inputs[t - 1].clone()],
                    1,
                )
                .unwrap();
            assert_eq!(pred[0], fit);
        }
    }

    #[test]
    fn constant_system_predicts_constants() {
        let states = vec![vec![2.5]; 40];
        let inputs = vec![vec![0.0]; 39];
        let traj = make_traj(states, inputs);
        let model = arx_fit(&[&traj], 3).unwrap();
        let pred = model
            .predict(
                &traj.states[..3],
                &traj.inputs[..2],
                &vec![vec![0.0]; 20],
                20,
            )
            .unwrap();
        for row in pred {
            assert_relative_eq!(row[0], 2.5, max_relative = 1e-8);
        }
    }

    #[test]
    fn multistep_horizon_shape() {
        let traj = ar1_traj(0.95, 320);
        let model = arx_fit(&[&traj], 12).unwrap();
        let pred = model
            .predict(
                &traj.states[..12],
                &traj.inputs[..11],
                &traj.inputs[11..],
                288,
            )
            .unwrap();
        assert_eq!(pred.len(), 288);
        assert_eq!(pred[0].len(), 1);
    }

    #[test]
    fn history_shorter_than_lags_is_rejected() {
        let traj = ar1_traj(0.9, 30);
        let model = arx_fit(&[&traj], 4).unwrap();
        assert!(model
            .predict(
                &traj.states[..2],
                &traj.inputs[..1],
                &[traj.inputs[1].clone()],
                1
            )
            .is_err());
    }

    #[test]
    fn zero_weight_network_holds_state_constant() {
        let n = 3;
        let len = VanillaNode::new(n, 1, 8, 0).params().len();
        let node = VanillaNode::from_flat(n, 1, 8, &vec![0.0; len]).unwrap();
        let dx = node.rhs(&[0.4, -1.0, 2.0], &[5.0]).unwrap();
        assert_eq!(dx, vec![0.0; n]);
    }

    #[test]
    fn network_ignores_input_signal() {
        let node = VanillaNode::new(2, 1, 16, 4);
        let a = node.rhs(&[0.3, -0.4], &[0.0]).unwrap();
        let b = node.rhs(&[0.3, -0.4], &[99.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn node_gradient_matches_finite_differences() {
        let node = VanillaNode::new(2, 1, 4, 9);
        let states = vec![vec![0.5, -0.2], vec![0.45, -0.1], vec![0.4, 0.0]];
        let inputs = vec![vec![0.0]; 2];
        let traj = Trajectory {
            times: vec![0.0, 0.1, 0.2],
            states,
            inputs,
            state_labels: vec!["a[-]".into(), "b[-]".into()],
            input_labels: vec!["u[-]".into()],
            metadata: Metadata::default(),
        };
        let (_, grad) = trajectory_gradient(&node, &traj, 0.1, 0.0, 0).unwrap();
        let theta = node.params().values().to_vec();
        let fd = finite_diff_gradient(
            |th| {
                let m = VanillaNode::from_flat(2, 1, 4, th)?;
                trajectory_gradient(&m, &traj, 0.1, 0.0, 0).map(|(l, _)| l)
            },
            &theta,
            1e-6,
        )
        .unwrap();
        for (a, b) in grad.iter().zip(&fd) {
            let rel = (a - b).abs() / (b.abs() + 1e-8);
            assert!(rel < 1e-5, "rel {rel}");
        }
    }
}
