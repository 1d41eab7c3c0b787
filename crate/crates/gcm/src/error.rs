//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by estimators, cleaners and the backtest engine.
///
/// Diagnostic magnitudes are reported as `f64` regardless of the working
/// scalar type.
#[derive(Debug, Error)]
pub enum Error {
    /// A series has no spread under the requested kernel (e.g. a constant
    /// row with the sign kernel), so the correlation denominator vanishes.
    #[error("degenerate series{}: zero denominator under the kernel", fmt_asset(.asset))]
    DegenerateSeries { asset: Option<String> },

    /// The cross-sectional volatility of a time column is zero.
    #[error("cross-sectional volatility is zero at time index {time_index}")]
    ZeroCrossSectionalVol { time_index: usize },

    /// An asset row is constant after volatility adjustment.
    #[error("asset {asset_index} is constant: zero standard deviation")]
    ConstantAsset { asset_index: usize },

    /// A matrix expected to be positive semidefinite has a clearly negative
    /// eigenvalue.
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    /// A matrix expected to be symmetric is not, beyond tolerance.
    #[error("matrix is not symmetric (max |a_ij - a_ji| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    /// The Stieltjes transform was evaluated on top of an eigenvalue.
    #[error("stieltjes transform evaluated at a pole (eigenvalue {eigenvalue})")]
    PoleHit { eigenvalue: f64 },

    /// Eigenvalue clipping found no bulk eigenvalues below the edge.
    #[error("eigenvalue clipping found no bulk below the spectral edge")]
    NoBulk,

    /// Trace-preserving clipping would need a negative bulk replacement.
    #[error("trace-preserving clip requires negative replacement value {zeta}")]
    NegativeZeta { zeta: f64 },

    /// Two inputs that must agree in dimension do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A cross-validation fold produced a degenerate estimator.
    #[error("fold {fold} is degenerate: {source}")]
    DegenerateFold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    /// The covariance matrix cannot be inverted reliably.
    #[error("singular covariance (condition number {condition:e})")]
    SingularCovariance { condition: f64 },

    /// The predictor vector is identically zero.
    #[error("predictor vector is zero")]
    ZeroPredictor,

    /// A strategy was asked to build a predictor without its required data.
    #[error("strategy {strategy} is missing required context: {needs}")]
    MissingContext {
        strategy: &'static str,
        needs: &'static str,
    },

    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {what}")]
    InvalidParameter { what: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A data file could not be parsed.
    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

fn fmt_asset(asset: &Option<String>) -> String {
    match asset {
        Some(id) => format!(" for asset {id}"),
        None => String::new(),
    }
}

impl Error {
    pub fn invalid(what: impl Into<String>) -> Self {
        Error::InvalidParameter { what: what.into() }
    }
}
