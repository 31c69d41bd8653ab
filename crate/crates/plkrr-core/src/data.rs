//! Grouped regression data.
//!
//! Observations follow the partially linear model Y = Xᵀβ + f(Z) + ε where
//! the linear coefficient β may differ across subpopulations while f is
//! shared. Data are stored flat with a group index so that per-group views
//! are cheap and the aggregate size N = Σ n_j is explicit.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// One subpopulation's observations, borrowed from a [`PLDataset`].
#[derive(Clone, Copy, Debug)]
pub struct GroupView<'a> {
    /// Linear covariates, n × p (row-major flattened).
    pub x: &'a [f64],
    /// Nonparametric inputs, length n.
    pub z: &'a [f64],
    /// Responses, length n.
    pub y: &'a [f64],
    /// Covariate dimension.
    pub p: usize,
}

impl<'a> GroupView<'a> {
    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// Dense n × p covariate matrix.
    pub fn x_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.p, self.x)
    }
}

/// Flat storage for s grouped samples sharing a covariate dimension p.
#[derive(Clone, Debug)]
pub struct PLDataset {
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    /// Exclusive prefix offsets, length s+1; group j occupies
    /// offsets[j]..offsets[j+1].
    offsets: Vec<usize>,
    p: usize,
}

impl PLDataset {
    /// Assembles a dataset from per-group columns. Each group must be
    /// non-empty with matching lengths and every value finite.
    pub fn from_groups(groups: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>, p: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidData("at least one group is required".into()));
        }
        if p == 0 {
            return Err(Error::InvalidData("covariate dimension p must be positive".into()));
        }
        let mut x = Vec::new();
        let mut z = Vec::new();
        let mut y = Vec::new();
        let mut offsets = vec![0usize];
        for (j, (gx, gz, gy)) in groups.into_iter().enumerate() {
            let n = gz.len();
            if n == 0 {
                return Err(Error::InvalidData(format!("group {j} is empty")));
            }
            if gy.len() != n || gx.len() != n * p {
                return Err(Error::InvalidData(format!(
                    "group {j}: expected {n} responses and {} covariate values, got {} and {}",
                    n * p,
                    gy.len(),
                    gx.len()
                )));
            }
            if gx.iter().chain(gz.iter()).chain(gy.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("group {j} contains a non-finite value")));
            }
            x.extend_from_slice(&gx);
            z.extend_from_slice(&gz);
            y.extend_from_slice(&gy);
            offsets.push(z.len());
        }
        Ok(PLDataset { x, z, y, offsets, p })
    }

    /// Number of groups s.
    pub fn n_groups(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Total sample size N = Σ n_j.
    pub fn n_total(&self) -> usize {
        self.z.len()
    }

    /// Sample size of group j.
    pub fn n_j(&self, j: usize) -> usize {
        self.offsets[j + 1] - self.offsets[j]
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Borrowed view of group j.
    pub fn group(&self, j: usize) -> GroupView<'_> {
        let lo = self.offsets[j];
        let hi = self.offsets[j + 1];
        GroupView {
            x: &self.x[lo * self.p..hi * self.p],
            z: &self.z[lo..hi],
            y: &self.y[lo..hi],
            p: self.p,
        }
    }

    /// All nonparametric inputs, pooled in storage order.
    pub fn z_all(&self) -> &[f64] {
        &self.z
    }

    /// All responses, pooled in storage order.
    pub fn y_all(&self) -> &[f64] {
        &self.y
    }

    /// All covariates, pooled, row-major n_total × p.
    pub fn x_all(&self) -> &[f64] {
        &self.x
    }
}
