//! Correlation-matrix estimation and cleaning for portfolio construction.
//!
//! The crate provides:
//!
//! - generalized correlation coefficients (GCCs) built from an odd kernel
//!   applied to pairwise observation differences, with the identity kernel
//!   recovering Pearson and the sign kernel recovering Kendall's tau
//!   ([`kernels`]);
//! - the cross-sectional standardization pipeline for return panels
//!   ([`preprocess`]);
//! - synthetic multivariate Student-t data generation from a ground-truth
//!   correlation matrix ([`datagen`]);
//! - eigenvalue cleaning schemes based on random matrix theory: clipping,
//!   rotationally invariant estimators and their variants ([`spectral`],
//!   [`cleaning`]);
//! - isotonic cross-validation covariance shrinkage with pluggable
//!   eigenvector sources ([`icvc`]);
//! - spectral comparison metrics such as the fraction of common modes
//!   ([`metrics`]);
//! - Markowitz mean-variance optimization and a rolling out-of-sample
//!   backtest engine ([`portfolio`]).
//!
//! All numerical code is generic over the scalar type through [`Scalar`];
//! `f64` is the default used by the CLI and the type aliases at the crate
//! root.

use std::fmt::Display;
use std::str::FromStr;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub mod cleaning;
pub mod datagen;
pub mod error;
pub mod icvc;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod panel;
pub mod portfolio;
pub mod preprocess;
pub mod spectral;

#[cfg(test)]
pub(crate) mod test_util;

pub use error::{Error, Result};

/// Floating-point scalar usable by every estimator and solver in the crate.
///
/// Implemented by `f32` and `f64`.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + FromStr + Send + Sync
{
}

impl<T> Scalar for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + Display + FromStr + Send + Sync
{
}

/// Converts an `f64` constant into the working scalar type.
///
/// Panics if the value is not representable, which cannot happen for the
/// finite constants used throughout the crate.
#[inline]
pub fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 constant not representable in scalar type")
}

/// Converts a count into the working scalar type.
#[inline]
pub fn cast_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("usize not representable in scalar type")
}

// f64 instantiations used by the CLI and most downstream code.
pub type ReturnPanel64 = panel::ReturnPanel<f64>;
pub type StandardizedPanel64 = preprocess::StandardizedPanel<f64>;
pub type CorrelationMatrix64 = kernels::CorrelationMatrix<f64>;
pub type SymmetricSpectrum64 = spectral::SymmetricSpectrum<f64>;
pub type CleanedCorrelation64 = cleaning::CleanedCorrelation<f64>;
pub type GroundTruth64 = datagen::GroundTruth<f64>;
pub type BacktestReport64 = portfolio::BacktestReport<f64>;
