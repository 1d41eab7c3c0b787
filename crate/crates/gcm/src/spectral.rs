//! Symmetric eigendecomposition, Marčenko–Pastur edges and the discrete
//! Stieltjes transform.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::{cast, cast_usize, Scalar};

/// Absolute tolerance for the symmetry check in [`eig_sym`], relative to the
/// largest entry magnitude (floored at 1).
const SYMMETRY_TOL: f64 = 1e-8;

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric
/// matrix; column `k` of `eigenvectors` pairs with `eigenvalues[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSpectrum<T: Scalar> {
    eigenvalues: DVector<T>,
    eigenvectors: DMatrix<T>,
}

impl<T: Scalar> SymmetricSpectrum<T> {
    /// Builds a spectrum from eigenvalue/eigenvector parts, checking the
    /// ascending order and orthonormality (1e-8).
    pub fn from_parts(eigenvalues: DVector<T>, eigenvectors: DMatrix<T>) -> Result<Self> {
        let n = eigenvalues.len();
        if eigenvectors.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: eigenvectors.nrows(),
            });
        }
        for k in 1..n {
            if eigenvalues[k] < eigenvalues[k - 1] {
                return Err(Error::invalid("eigenvalues must be ascending"));
            }
        }
        let gram = eigenvectors.transpose() * &eigenvectors;
        let mut max_dev = T::zero();
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { T::one() } else { T::zero() };
                max_dev = max_dev.max((gram[(i, j)] - target).abs());
            }
        }
        if max_dev > cast(1e-8) {
            return Err(Error::invalid(format!(
                "eigenvector columns are not orthonormal (deviation {max_dev})"
            )));
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<T> {
        &self.eigenvectors
    }

    pub fn trace(&self) -> T {
        self.eigenvalues.iter().fold(T::zero(), |acc, &l| acc + l)
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues[self.n() - 1]
    }

    /// Rebuilds `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<T> {
        self.with_eigenvalues(self.eigenvalues.as_slice())
    }

    /// Builds `V diag(vals) Vᵀ` with the stored eigenvectors.
    pub fn with_eigenvalues(&self, vals: &[T]) -> DMatrix<T> {
        assert_eq!(vals.len(), self.n(), "eigenvalue count mismatch");
        let mut scaled = self.eigenvectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= vals[k];
        }
        &scaled * self.eigenvectors.transpose()
    }

    /// Symmetric positive-semidefinite square root, clamping tiny negative
    /// eigenvalues to zero.
    pub fn psd_sqrt(&self) -> DMatrix<T> {
        let roots: Vec<T> = self
            .eigenvalues
            .iter()
            .map(|&l| if l > T::zero() { l.sqrt() } else { T::zero() })
            .collect();
        self.with_eigenvalues(&roots)
    }

    /// Count of eigenvalues above `rel_tol * max_eigenvalue`; the numerical
    /// rank of the decomposed matrix.
    pub fn numerical_rank(&self, rel_tol: T) -> usize {
        let cutoff = rel_tol * self.max_eigenvalue().abs();
        self.eigenvalues.iter().filter(|&&l| l > cutoff).count()
    }
}

/// Eigendecomposition of a symmetric matrix with a deterministic ordering
/// and sign convention: eigenvalues ascending, and each eigenvector flipped
/// so that its largest-magnitude component is positive.
pub fn eig_sym<T: Scalar>(m: &DMatrix<T>) -> Result<SymmetricSpectrum<T>> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: cols,
        });
    }
    let scale = m.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    let mut max_asym = T::zero();
    for i in 0..rows {
        for j in (i + 1)..rows {
            max_asym = max_asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if max_asym > cast::<T>(SYMMETRY_TOL) * scale {
        return Err(Error::NotSymmetric {
            max_asymmetry: max_asym.to_f64().unwrap_or(f64::NAN),
        });
    }

    // Force exact symmetry before decomposing.
    let half: T = cast(0.5);
    let sym = (m + m.transpose()) * half;
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("eigenvalues are finite")
    });

    let mut eigenvalues = DVector::zeros(rows);
    let mut eigenvectors = DMatrix::zeros(rows, rows);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = eig.eigenvalues[src];
        let col = eig.eigenvectors.column(src);
        let mut imax = 0;
        let mut vmax = T::zero();
        for (i, v) in col.iter().enumerate() {
            if v.abs() > vmax {
                vmax = v.abs();
                imax = i;
            }
        }
        let flip = col[imax] < T::zero();
        for i in 0..rows {
            eigenvectors[(i, dst)] = if flip { -col[i] } else { col[i] };
        }
    }

    Ok(SymmetricSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Upper edge `(1 + √q)²` of the Marčenko–Pastur bulk for aspect ratio
/// `q = N/T`.
pub fn mp_upper_edge<T: Scalar>(q: T) -> T {
    let s = T::one() + q.sqrt();
    s * s
}

/// Upper edge of an affine image `scale·x + shift` of the Marčenko–Pastur
/// bulk.
pub fn affine_mp_upper_edge<T: Scalar>(q: T, scale: T, shift: T) -> T {
    scale * mp_upper_edge(q) + shift
}

/// Upper spectral edge for Kendall correlation matrices of independent
/// series: the Marčenko–Pastur bulk mapped through `(2/3)x + 1/3`.
pub fn kendall_mp_upper_edge<T: Scalar>(q: T) -> T {
    let third = T::one() / cast::<T>(3.0);
    affine_mp_upper_edge(q, cast::<T>(2.0) * third, third)
}

/// Minimum allowed distance between `z` and any eigenvalue in [`stieltjes`].
const POLE_TOL: f64 = 1e-14;

/// Discrete Stieltjes transform `s(z) = N⁻¹ Σ_k 1/(z − λ_k)`.
pub fn stieltjes<T: Scalar>(spec: &SymmetricSpectrum<T>, z: Complex<T>) -> Result<Complex<T>> {
    let tol: T = cast(POLE_TOL);
    let mut sum = Complex::new(T::zero(), T::zero());
    for &l in spec.eigenvalues().iter() {
        let d = z - Complex::new(l, T::zero());
        if d.norm_sqr().sqrt() < tol {
            return Err(Error::PoleHit {
                eigenvalue: l.to_f64().unwrap_or(f64::NAN),
            });
        }
        sum += d.inv();
    }
    Ok(sum / Complex::new(cast_usize::<T>(spec.n()), T::zero()))
}
