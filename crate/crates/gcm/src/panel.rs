//! Return panels: labeled N×T matrices of asset returns.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::Scalar;

/// An N×T matrix of returns, rows indexed by asset and columns by time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel<T: Scalar> {
    values: DMatrix<T>,
    asset_ids: Vec<String>,
    timestamps: Vec<String>,
}

impl<T: Scalar> ReturnPanel<T> {
    /// Builds a panel, validating shape (N ≥ 2, T ≥ 2), label counts and
    /// that every entry is finite.
    pub fn new(
        values: DMatrix<T>,
        asset_ids: Vec<String>,
        timestamps: Vec<String>,
    ) -> Result<Self> {
        let (n, t) = values.shape();
        if n < 2 || t < 2 {
            return Err(Error::invalid(format!(
                "panel must be at least 2x2, got {n}x{t}"
            )));
        }
        if asset_ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: asset_ids.len(),
            });
        }
        if timestamps.len() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                got: timestamps.len(),
            });
        }
        if let Some((i, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "panel entry ({}, {}) is not finite",
                i % n,
                i / n
            )));
        }
        Ok(Self {
            values,
            asset_ids,
            timestamps,
        })
    }

    /// Builds a panel with synthetic `a####`/`t####` labels.
    pub fn from_matrix(values: DMatrix<T>) -> Result<Self> {
        let (n, t) = values.shape();
        Self::new(values, default_asset_ids(n), default_timestamps(t))
    }

    pub fn n_assets(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_obs(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    /// Copies row `i` into a `Vec`.
    pub fn row(&self, i: usize) -> Vec<T> {
        self.values.row(i).iter().copied().collect()
    }
}

pub(crate) fn default_asset_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("a{i:04}")).collect()
}

pub(crate) fn default_timestamps(t: usize) -> Vec<String> {
    (0..t).map(|j| format!("t{j:04}")).collect()
}
