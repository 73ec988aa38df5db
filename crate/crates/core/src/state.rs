//! State-space value types shared by all models.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A point in a model's state space, with per-dimension `name[unit]` labels.
///
/// Immutable after construction; all entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    values: Vec<f64>,
    labels: Arc<[String]>,
}

impl StateVector {
    pub fn new(values: Vec<f64>, labels: Arc<[String]>) -> Result<Self> {
        if !labels.is_empty() && labels.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "state labels",
                expected: values.len(),
                got: labels.len(),
            });
        }
        ensure_finite(&values, "state vector")?;
        Ok(Self { values, labels })
    }

    /// Construct without labels (generic test systems).
    pub fn unlabeled(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Arc::from(Vec::new()))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn labels_arc(&self) -> Arc<[String]> {
        Arc::clone(&self.labels)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Exogenous input sample. Same shape rules as [`StateVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct InputVector {
    values: Vec<f64>,
}

impl InputVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        ensure_finite(&values, "input vector")?;
        Ok(Self { values })
    }

    pub fn empty() -> Self {
        Self { values: Vec::new() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn ensure_finite(values: &[f64], context: &str) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!("{context} at index {i}"),
            });
        }
    }
    Ok(())
}

/// Skew-symmetric matrix stored as its strictly-upper entries.
///
/// Antisymmetry holds by construction: the lower triangle is materialized as
/// the exact negation of the stored upper value, and the diagonal is zero.
/// Unspecified pairs are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewSymmetricMatrix {
    dim: usize,
    upper: BTreeMap<(usize, usize), f64>,
}

impl SkewSymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            upper: BTreeMap::new(),
        }
    }

    /// Set entry (i, j) with i < j; the (j, i) entry is implicitly `-value`.
    pub fn set_upper(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if i >= j || j >= self.dim {
            return Err(Error::Config(format!(
                "skew entry ({i}, {j}) must satisfy i < j < {}",
                self.dim
            )));
        }
        self.upper.insert((i, j), value);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else if i < j {
            self.upper.get(&(i, j)).copied().unwrap_or(0.0)
        } else {
            -self.upper.get(&(j, i)).copied().unwrap_or(0.0)
        }
    }

    /// Iterate stored upper entries in deterministic (row, col) order.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.upper.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    /// Dense row-major materialization.
    pub fn materialize(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.dim]; self.dim];
        for (i, j, v) in self.upper_entries() {
            m[i][j] = v;
            m[j][i] = -v;
        }
        m
    }

    /// Matrix-vector product using only the stored entries.
    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "skew mat_vec",
                expected: self.dim,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.dim];
        for (i, j, w) in self.upper_entries() {
            out[i] += w * v[j];
            out[j] -= w * v[i];
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn state_vector_rejects_non_finite() {
        assert!(StateVector::unlabeled(vec![1.0, f64::NAN]).is_err());
        assert!(StateVector::unlabeled(vec![1.0, f64::INFINITY]).is_err());
        assert!(StateVector::unlabeled(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn state_vector_label_length_checked() {
        let labels: Arc<[String]> = Arc::from(vec!["a[K]".to_string()]);
        assert!(StateVector::new(vec![1.0, 2.0], labels).is_err());
    }

    #[test]
    fn skew_rejects_bad_indices() {
        let mut m = SkewSymmetricMatrix::zeros(3);
        assert!(m.set_upper(1, 1, 2.0).is_err());
        assert!(m.set_upper(2, 1, 2.0).is_err());
        assert!(m.set_upper(0, 3, 2.0).is_err());
        assert!(m.set_upper(0, 2, 2.0).is_ok());
    }

    #[test]
    fn skew_diagonal_is_zero() {
        let mut m = SkewSymmetricMatrix::zeros(4);
        m.set_upper(0, 3, 7.5).unwrap();
        let d = m.materialize();
        for i in 0..4 {
            assert_eq!(d[i][i], 0.0);
        }
    }

    proptest! {
        // Bit-level antisymmetry: M + M^T has every entry exactly +0.0.
        #[test]
        fn skew_antisymmetry_is_exact(entries in proptest::collection::vec((-1e12f64..1e12, 0usize..6, 0usize..6), 0..12)) {
            let dim = 6;
            let mut m = SkewSymmetricMatrix::zeros(dim);
            for (v, a, b) in entries {
                if a < b {
                    m.set_upper(a, b, v).unwrap();
                }
            }
            let d = m.materialize();
            for i in 0..dim {
                for j in 0..dim {
                    let s = d[i][j] + d[j][i];
                    prop_assert_eq!(s, 0.0);
                }
            }
        }
    }
}
