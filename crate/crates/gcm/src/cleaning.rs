//! Eigenvalue cleaning schemes.
//!
//! Every scheme keeps the eigenvectors of the input estimator and replaces
//! only its eigenvalues:
//!
//! - clipping: eigenvalues below the Marčenko–Pastur upper edge are replaced
//!   by a common constant that preserves the trace;
//! - RIE: the rotationally invariant (optimal shrinkage) estimator
//!   `ξ_k = λ_k / |1 − q + q·z_k·s(z_k)|²` with `z_k = λ_k − iη`;
//! - RIE Γ: RIE with the small-eigenvalue bias correction
//!   `ξ_k · max(1, Γ_k)`;
//! - RIE + Id: RIE plus the multiple of the identity that restores the
//!   trace, lifting the zero modes that appear for q > 1;
//! - Kendall clipping: clipping against the affinely mapped bulk edge that
//!   governs Kendall matrices of independent series.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::spectral::{kendall_mp_upper_edge, mp_upper_edge, stieltjes, SymmetricSpectrum};
use crate::{cast_usize, Scalar};

/// Which cleaning produced a [`CleanedCorrelation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CleaningScheme {
    Raw,
    Clipped,
    KendallClipped,
    Rie,
    RieGamma,
    RieId,
    Icvc,
    KendallIcvc,
    TanhIcvc,
}

impl CleaningScheme {
    pub fn label(&self) -> &'static str {
        match self {
            CleaningScheme::Raw => "raw",
            CleaningScheme::Clipped => "clipped",
            CleaningScheme::KendallClipped => "kendall_clipped",
            CleaningScheme::Rie => "rie",
            CleaningScheme::RieGamma => "rie_gamma",
            CleaningScheme::RieId => "rie_id",
            CleaningScheme::Icvc => "icvc",
            CleaningScheme::KendallIcvc => "kendall_icvc",
            CleaningScheme::TanhIcvc => "tanh_icvc",
        }
    }
}

/// A cleaned correlation matrix: the input estimator's eigenvectors with
/// modified eigenvalues.
#[derive(Debug, Clone)]
pub struct CleanedCorrelation<T: Scalar> {
    values: DMatrix<T>,
    scheme: CleaningScheme,
    eigenvalues: DVector<T>,
    base: SymmetricSpectrum<T>,
}

impl<T: Scalar> CleanedCorrelation<T> {
    fn from_eigenvalues(
        base: &SymmetricSpectrum<T>,
        eigenvalues: Vec<T>,
        scheme: CleaningScheme,
    ) -> Self {
        let values = base.with_eigenvalues(&eigenvalues);
        Self {
            values,
            scheme,
            eigenvalues: DVector::from_vec(eigenvalues),
            base: base.clone(),
        }
    }

    /// Wraps an uncleaned estimator so it can flow through the same
    /// covariance-reconstruction pipeline as the cleaned ones. `values` must
    /// be the matrix that `base` decomposes.
    pub fn raw(values: DMatrix<T>, base: SymmetricSpectrum<T>) -> Self {
        let eigenvalues = base.eigenvalues().clone();
        Self {
            values,
            scheme: CleaningScheme::Raw,
            eigenvalues,
            base,
        }
    }

    pub(crate) fn from_icvc(
        base: &SymmetricSpectrum<T>,
        eigenvalues: Vec<T>,
        scheme: CleaningScheme,
    ) -> Self {
        Self::from_eigenvalues(base, eigenvalues, scheme)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn scheme(&self) -> CleaningScheme {
        self.scheme
    }

    /// Cleaned eigenvalues, in the input estimator's ascending eigenvalue
    /// order.
    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    /// Eigenvectors of the input estimator, preserved unchanged.
    pub fn eigenvectors(&self) -> &DMatrix<T> {
        self.base.eigenvectors()
    }

    pub fn base_spectrum(&self) -> &SymmetricSpectrum<T> {
        &self.base
    }

    pub fn trace(&self) -> T {
        self.eigenvalues.iter().fold(T::zero(), |a, &v| a + v)
    }
}

/// Default spectral broadening `η = N^{-1/2}` for the RIE family.
pub fn default_eta<T: Scalar>(n: usize) -> T {
    T::one() / cast_usize::<T>(n).sqrt()
}

/// Eigenvalue clipping against the Marčenko–Pastur upper edge: eigenvalues
/// above the edge are kept, the rest are replaced by the constant that
/// preserves the trace at N.
pub fn clip<T: Scalar>(spec: &SymmetricSpectrum<T>, q: T) -> Result<CleanedCorrelation<T>> {
    clip_with_edge(spec, mp_upper_edge(q), CleaningScheme::Clipped)
}

/// Clipping for Kendall correlation matrices, using the affinely mapped
/// bulk edge `(2/3)(1+√q)² + 1/3`.
pub fn kendall_clip<T: Scalar>(spec: &SymmetricSpectrum<T>, q: T) -> Result<CleanedCorrelation<T>> {
    clip_with_edge(
        spec,
        kendall_mp_upper_edge(q),
        CleaningScheme::KendallClipped,
    )
}

fn clip_with_edge<T: Scalar>(
    spec: &SymmetricSpectrum<T>,
    edge: T,
    scheme: CleaningScheme,
) -> Result<CleanedCorrelation<T>> {
    let n = spec.n();
    let nf: T = cast_usize(n);
    let eigenvalues = spec.eigenvalues();
    let bulk_count = eigenvalues.iter().filter(|&&l| l <= edge).count();
    if bulk_count == 0 {
        return Err(Error::NoBulk);
    }
    let kept_sum = eigenvalues
        .iter()
        .filter(|&&l| l > edge)
        .fold(T::zero(), |a, &l| a + l);
    let zeta = (nf - kept_sum) / cast_usize::<T>(bulk_count);
    if zeta < T::zero() {
        return Err(Error::NegativeZeta {
            zeta: zeta.to_f64().unwrap_or(f64::NAN),
        });
    }
    let cleaned: Vec<T> = eigenvalues
        .iter()
        .map(|&l| if l <= edge { zeta } else { l })
        .collect();
    Ok(CleanedCorrelation::from_eigenvalues(spec, cleaned, scheme))
}

/// Rotationally invariant estimator. Zero eigenvalues stay at zero and the
/// trace is not renormalized; use [`rie_id`] when q > 1.
pub fn rie<T: Scalar>(spec: &SymmetricSpectrum<T>, q: T, eta: T) -> Result<CleanedCorrelation<T>> {
    let (xs, _) = rie_eigenvalues(spec, q, eta)?;
    Ok(CleanedCorrelation::from_eigenvalues(
        spec,
        xs,
        CleaningScheme::Rie,
    ))
}

/// RIE with the default small-eigenvalue regularization: eigenvalues inside
/// the Marčenko–Pastur bulk `[(1−√q)², (1+√q)²]` (unit noise variance for
/// correlation matrices) are lifted by `Γ_k = |1 − q + q·z_k·s(z_k)|²/λ_k`,
/// which cancels the finite-η downward bias there. Eigenvalues outside the
/// bulk — true structure, and the exact zero modes appearing for q > 1 —
/// are left at their RIE values.
pub fn rie_gamma<T: Scalar>(
    spec: &SymmetricSpectrum<T>,
    q: T,
    eta: T,
) -> Result<CleanedCorrelation<T>> {
    let sq = q.sqrt();
    let lower = (T::one() - sq) * (T::one() - sq);
    let upper = mp_upper_edge(q);
    rie_gamma_with(spec, q, eta, move |_, lambda, denom_sq| {
        if lambda > T::zero() && lambda >= lower && lambda <= upper {
            denom_sq / lambda
        } else {
            T::one()
        }
    })
}

/// RIE with a caller-supplied regularization factor
/// `gamma(k, λ_k, |1 − q + q·z_k·s(z_k)|²)`; the cleaned eigenvalue is
/// `ξ_k · max(1, Γ_k)`, never below plain RIE.
pub fn rie_gamma_with<T: Scalar>(
    spec: &SymmetricSpectrum<T>,
    q: T,
    eta: T,
    gamma: impl Fn(usize, T, T) -> T,
) -> Result<CleanedCorrelation<T>> {
    let (xs, denom_sq) = rie_eigenvalues(spec, q, eta)?;
    let cleaned: Vec<T> = xs
        .iter()
        .enumerate()
        .map(|(k, &xi)| {
            let g = gamma(k, spec.eigenvalues()[k], denom_sq[k]);
            xi * T::one().max(g)
        })
        .collect();
    Ok(CleanedCorrelation::from_eigenvalues(
        spec,
        cleaned,
        CleaningScheme::RieGamma,
    ))
}

/// RIE plus the multiple of the identity that restores the trace to N.
/// When the shift is negative, eigenvalues pushed below zero are clamped
/// and the trace renormalized once.
pub fn rie_id<T: Scalar>(
    spec: &SymmetricSpectrum<T>,
    q: T,
    eta: T,
) -> Result<CleanedCorrelation<T>> {
    let n = spec.n();
    let nf: T = cast_usize(n);
    let (xs, _) = rie_eigenvalues(spec, q, eta)?;
    let sum = xs.iter().fold(T::zero(), |a, &v| a + v);
    let alpha = (nf - sum) / nf;
    let mut shifted: Vec<T> = xs.iter().map(|&v| v + alpha).collect();
    if shifted.iter().any(|&v| v < T::zero()) {
        for v in shifted.iter_mut() {
            *v = v.max(T::zero());
        }
        let total = shifted.iter().fold(T::zero(), |a, &v| a + v);
        if total <= T::zero() {
            return Err(Error::invalid(
                "trace renormalization impossible: all cleaned eigenvalues vanish",
            ));
        }
        let scale = nf / total;
        for v in shifted.iter_mut() {
            *v *= scale;
        }
    }
    Ok(CleanedCorrelation::from_eigenvalues(
        spec,
        shifted,
        CleaningScheme::RieId,
    ))
}

/// Shared RIE core: returns the shrunk eigenvalues and the denominators
/// `|1 − q + q·z_k·s(z_k)|²`.
fn rie_eigenvalues<T: Scalar>(
    spec: &SymmetricSpectrum<T>,
    q: T,
    eta: T,
) -> Result<(Vec<T>, Vec<T>)> {
    if q <= T::zero() {
        return Err(Error::invalid(format!(
            "aspect ratio must be positive, got {q}"
        )));
    }
    if eta <= T::zero() {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    let one = Complex::new(T::one(), T::zero());
    let qc = Complex::new(q, T::zero());
    let mut xs = Vec::with_capacity(spec.n());
    let mut denoms = Vec::with_capacity(spec.n());
    for &lambda in spec.eigenvalues().iter() {
        let z = Complex::new(lambda, -eta);
        let s = stieltjes(spec, z)?;
        let denom_sq = (one - qc + qc * z * s).norm_sqr();
        let xi = (lambda / denom_sq).max(T::zero());
        xs.push(xi);
        denoms.push(denom_sq);
    }
    Ok((xs, denoms))
}
