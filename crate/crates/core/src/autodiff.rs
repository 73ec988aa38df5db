//! Tape-based reverse-mode differentiation over scalar nodes.
//!
//! Each recorded node stores its operation kind, up to two parent indices,
//! and the local partial derivatives evaluated at record time, so the
//! backward sweep is a single reverse pass accumulating adjoints. Scalar
//! granularity is deliberate: the models here have at most a few hundred
//! parameters, and a Wengert list of scalars keeps the engine small and the
//! replay bit-reproducible.
//!
//! A tape is single-threaded; batch gradients are computed on one tape per
//! trajectory and reduced afterwards.

use crate::error::{Error, Result};

use std::f64::consts::LN_2;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Pow,
    Tanh,
    Sigmoid,
    Softplus,
    LogCosh,
    Abs,
}

impl OpKind {
    fn arity(self) -> usize {
        match self {
            OpKind::Leaf => 0,
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div | OpKind::Pow => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    value: f64,
    parents: [u32; 2],
    partials: [f64; 2],
    op: OpKind,
}

/// Append-only record of a scalar computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Numerically stable sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// softplus(x) = max(x, 0) + log1p(exp(-|x|)); overflow-safe.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`], for initializing raw parameters from a target
/// effective value y > 0.
pub fn softplus_inv(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    if y > 30.0 {
        // exp(-y) underflows the correction entirely
        y
    } else {
        y.exp_m1().ln()
    }
}

/// log(cosh(x)) = |x| + log1p(exp(-2|x|)) - ln 2; avoids cosh overflow.
pub fn log_cosh(x: f64) -> f64 {
    x.abs() + (-2.0 * x.abs()).exp().ln_1p() - LN_2
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.index()].value
    }

    /// Record an input node. Gradients of leaves are what [`Tape::backward`]
    /// reports; callers decide which leaves they care about.
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(Node {
            value,
            parents: [0, 0],
            partials: [0.0, 0.0],
            op: OpKind::Leaf,
        })
    }

    /// A leaf whose gradient the caller ignores.
    pub fn constant(&mut self, value: f64) -> Var {
        self.leaf(value)
    }

    fn push(&mut self, node: Node) -> Var {
        let id = self.nodes.len();
        assert!(id <= u32::MAX as usize, "tape exhausted");
        self.nodes.push(node);
        Var(id as u32)
    }

    fn unary(&mut self, op: OpKind, a: Var, value: f64, da: f64) -> Var {
        self.push(Node {
            value,
            parents: [a.0, 0],
            partials: [da, 0.0],
            op,
        })
    }

    fn binary(&mut self, op: OpKind, a: Var, b: Var, value: f64, da: f64, db: f64) -> Var {
        self.push(Node {
            value,
            parents: [a.0, b.0],
            partials: [da, db],
            op,
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.binary(OpKind::Add, a, b, v, 1.0, 1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.binary(OpKind::Sub, a, b, v, 1.0, -1.0)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        self.binary(OpKind::Mul, a, b, va * vb, vb, va)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if vb == 0.0 {
            return Err(Error::Tape {
                node: b.index(),
                message: "division by zero".into(),
            });
        }
        Ok(self.binary(OpKind::Div, a, b, va / vb, 1.0 / vb, -va / (vb * vb)))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.unary(OpKind::Neg, a, v, -1.0)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).exp();
        self.unary(OpKind::Exp, a, v, v)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va <= 0.0 {
            return Err(Error::Tape {
                node: a.index(),
                message: format!("log of non-positive value {va}"),
            });
        }
        Ok(self.unary(OpKind::Log, a, va.ln(), 1.0 / va))
    }

    /// `a^b` for recorded base > 0 (the derivative in `b` needs `ln a`).
    pub fn pow(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va <= 0.0 {
            return Err(Error::Tape {
                node: a.index(),
                message: format!("pow with non-positive base {va}"),
            });
        }
        let v = va.powf(vb);
        Ok(self.binary(OpKind::Pow, a, b, v, vb * va.powf(vb - 1.0), v * va.ln()))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).tanh();
        self.unary(OpKind::Tanh, a, v, 1.0 - v * v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = sigmoid(self.value(a));
        self.unary(OpKind::Sigmoid, a, v, v * (1.0 - v))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let va = self.value(a);
        self.unary(OpKind::Softplus, a, softplus(va), sigmoid(va))
    }

    pub fn log_cosh(&mut self, a: Var) -> Var {
        let va = self.value(a);
        self.unary(OpKind::LogCosh, a, log_cosh(va), va.tanh())
    }

    /// |a|, with subgradient 0 at the origin.
    pub fn abs(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let d = if va == 0.0 { 0.0 } else { va.signum() };
        self.unary(OpKind::Abs, a, va.abs(), d)
    }

    /// `c * a` via an explicit constant node.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let cv = self.constant(c);
        self.mul(a, cv)
    }

    /// Sum a slice of nodes left to right; empty sum is a 0 constant.
    pub fn sum(&mut self, vars: &[Var]) -> Var {
        match vars.split_first() {
            None => self.constant(0.0),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &v| self.add(acc, v)),
        }
    }

    /// Reverse accumulation from a scalar output. Returns the adjoint of
    /// every node; index by `Var::index` to read a leaf gradient.
    pub fn backward(&self, output: Var) -> Vec<f64> {
        let mut adj = vec![0.0; self.nodes.len()];
        adj[output.index()] = 1.0;
        for k in (0..self.nodes.len()).rev() {
            let bar = adj[k];
            if bar == 0.0 {
                continue;
            }
            let node = &self.nodes[k];
            for p in 0..node.op.arity() {
                adj[node.parents[p] as usize] += bar * node.partials[p];
            }
        }
        adj
    }

    /// Recompute every node value from its parents. Used to verify that the
    /// recorded forward pass is reproducible bit-for-bit.
    pub fn replay(&self) -> Vec<f64> {
        let mut vals = vec![0.0; self.nodes.len()];
        for (k, node) in self.nodes.iter().enumerate() {
            let a = || vals[node.parents[0] as usize];
            let b = || vals[node.parents[1] as usize];
            vals[k] = match node.op {
                OpKind::Leaf => node.value,
                OpKind::Add => a() + b(),
                OpKind::Sub => a() - b(),
                OpKind::Mul => a() * b(),
                OpKind::Div => a() / b(),
                OpKind::Neg => -a(),
                OpKind::Exp => a().exp(),
                OpKind::Log => a().ln(),
                OpKind::Pow => a().powf(b()),
                OpKind::Tanh => a().tanh(),
                OpKind::Sigmoid => sigmoid(a()),
                OpKind::Softplus => softplus(a()),
                OpKind::LogCosh => log_cosh(a()),
                OpKind::Abs => a().abs(),
            };
        }
        vals
    }
}

/// Flat trainable parameter vector with named, contiguous segments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    gradient: Vec<f64>,
    segments: Vec<(String, std::ops::Range<usize>)>,
}

impl ParameterVector {
    /// Build from `(group name, length)` pairs; values start at zero.
    pub fn new(groups: &[(&str, usize)]) -> Self {
        let mut segments = Vec::with_capacity(groups.len());
        let mut offset = 0;
        for (name, len) in groups {
            segments.push((name.to_string(), offset..offset + len));
            offset += len;
        }
        Self {
            values: vec![0.0; offset],
            gradient: vec![0.0; offset],
            segments,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.values.len(),
                got: values.len(),
            });
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub fn set_gradient(&mut self, grad: &[f64]) -> Result<()> {
        if grad.len() != self.gradient.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter gradient",
                expected: self.gradient.len(),
                got: grad.len(),
            });
        }
        self.gradient.copy_from_slice(grad);
        Ok(())
    }

    pub fn segments(&self) -> impl Iterator<Item = (&str, std::ops::Range<usize>)> {
        self.segments.iter().map(|(n, r)| (n.as_str(), r.clone()))
    }

    pub fn segment(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.segments
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }

    pub fn segment_values(&self, name: &str) -> Option<&[f64]> {
        self.segment(name).map(|r| &self.values[r])
    }
}

/// Central finite differences `(f(x + e_i eps) - f(x - e_i eps)) / (2 eps)`.
///
/// The verification oracle for every backward pass in this crate; it must
/// stay independent of [`Tape::backward`].
pub fn finite_diff_gradient<F>(f: F, theta: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    assert!(eps > 0.0, "finite-difference eps must be positive");
    let mut grad = vec![0.0; theta.len()];
    let mut work = theta.to_vec();
    for i in 0..theta.len() {
        work[i] = theta[i] + eps;
        let hi = f(&work)?;
        work[i] = theta[i] - eps;
        let lo = f(&work)?;
        work[i] = theta[i];
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::NonFiniteEval { coordinate: i });
        }
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    Ok(grad)
}
