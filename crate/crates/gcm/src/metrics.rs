//! Spectral comparison metrics between true and estimated correlation
//! matrices: fraction of common modes (FCM), duplicate-pair weight
//! concentration and eigenvalue comparison tables.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::CorrelationMatrix;
use crate::spectral::{eig_sym, SymmetricSpectrum};
use crate::{cast, cast_usize, Scalar};

/// Which end of the spectrum the eigenvector bases are ordered by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSide {
    /// Columns ordered by descending eigenvalue (market mode first).
    Large,
    /// Columns ordered by ascending eigenvalue (least risky modes first).
    Small,
}

impl ModeSide {
    pub fn label(&self) -> &'static str {
        match self {
            ModeSide::Large => "large",
            ModeSide::Small => "small",
        }
    }
}

/// Fraction of common modes as a function of the subspace dimension n:
/// the geometric mean of the singular values of the leading n×n block of
/// the eigenvector overlap matrix.
#[derive(Debug, Clone)]
pub struct FcmCurve<T: Scalar> {
    pub mode_side: ModeSide,
    pub values: Vec<T>,
}

impl<T: Scalar> FcmCurve<T> {
    pub fn n(&self) -> usize {
        self.values.len()
    }
}

/// FCM between the eigenbases of a true and an estimated spectrum.
///
/// Both bases are ordered by `mode_side`, the overlap `U = PᵀP̂` is formed,
/// and for every n the geometric mean of the singular values of the leading
/// n×n block is reported. A zero singular value sends the value to exactly
/// zero.
pub fn fcm<T: Scalar>(
    truth: &SymmetricSpectrum<T>,
    estimate: &SymmetricSpectrum<T>,
    mode_side: ModeSide,
) -> Result<FcmCurve<T>> {
    if truth.n() != estimate.n() {
        return Err(Error::DimensionMismatch {
            expected: truth.n(),
            got: estimate.n(),
        });
    }
    let p = ordered_basis(truth, mode_side);
    let p_hat = ordered_basis(estimate, mode_side);
    let overlap = p.transpose() * p_hat;
    Ok(FcmCurve {
        mode_side,
        values: fcm_values(&overlap),
    })
}

/// Orders the eigenvector columns by the requested mode side.
fn ordered_basis<T: Scalar>(spec: &SymmetricSpectrum<T>, mode_side: ModeSide) -> DMatrix<T> {
    match mode_side {
        ModeSide::Small => spec.eigenvectors().clone(),
        ModeSide::Large => {
            let n = spec.n();
            let mut out = DMatrix::zeros(n, n);
            for k in 0..n {
                out.set_column(k, &spec.eigenvectors().column(n - 1 - k));
            }
            out
        }
    }
}

/// Geometric means of leading-block singular values for n = 1..=N.
fn fcm_values<T: Scalar>(overlap: &DMatrix<T>) -> Vec<T> {
    let n = overlap.nrows();
    (1..=n)
        .map(|k| {
            let block = overlap.view((0, 0), (k, k)).into_owned();
            let svd = block.svd(false, false);
            let mut log_sum = T::zero();
            for &w in svd.singular_values.iter() {
                if w <= T::zero() {
                    return T::zero();
                }
                log_sum += w.ln();
            }
            (log_sum / cast_usize::<T>(k)).exp()
        })
        .collect()
}

/// Average FCM curve of Haar-random orthogonal bases against a fixed basis.
pub fn fcm_random_benchmark<T: Scalar>(n: usize, n_draws: usize, seed: u64) -> FcmCurve<T> {
    assert!(n >= 2, "benchmark needs at least 2 dimensions");
    assert!(n_draws >= 1, "benchmark needs at least one draw");
    let curves: Vec<Vec<T>> = (0..n_draws as u64)
        .into_par_iter()
        .map(|draw| {
            let q = haar_orthogonal::<T>(n, crate::datagen::derive_seed(seed, draw));
            fcm_values(&q)
        })
        .collect();
    let mut mean = vec![T::zero(); n];
    for curve in &curves {
        for (m, v) in mean.iter_mut().zip(curve.iter()) {
            *m += *v;
        }
    }
    let draws: T = cast_usize(n_draws);
    for m in mean.iter_mut() {
        *m /= draws;
    }
    FcmCurve {
        mode_side: ModeSide::Small,
        values: mean,
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the R
/// diagonal signs folded into Q.
fn haar_orthogonal<T: Scalar>(n: usize, seed: u64) -> DMatrix<T> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let g = DMatrix::<T>::from_fn(n, n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        cast(z)
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..n {
        if r[(k, k)] < T::zero() {
            let mut col = q.column_mut(k);
            col.neg_mut();
        }
    }
    q
}

/// Squared weight of the smallest-eigenvalue eigenvector on an asset pair.
pub fn duplicate_weight_sum<T: Scalar>(
    estimate: &CorrelationMatrix<T>,
    pair: (usize, usize),
) -> Result<T> {
    let n = estimate.n();
    if pair.0 >= n || pair.1 >= n {
        return Err(Error::invalid(format!(
            "pair ({}, {}) out of range for {n} assets",
            pair.0, pair.1
        )));
    }
    let spec = eig_sym(estimate.values())?;
    let u = spec.eigenvectors().column(0);
    Ok(u[pair.0] * u[pair.0] + u[pair.1] * u[pair.1])
}

/// Sorted true eigenvalues next to sorted estimated eigenvalues per method.
#[derive(Debug, Clone)]
pub struct EigenvalueTable<T: Scalar> {
    pub methods: Vec<String>,
    /// Ascending true eigenvalues.
    pub truth: Vec<T>,
    /// `estimates[m][k]` is the k-th ascending eigenvalue of method m.
    pub estimates: Vec<Vec<T>>,
}

impl<T: Scalar> EigenvalueTable<T> {
    pub fn n(&self) -> usize {
        self.truth.len()
    }
}

/// Pairs sorted true eigenvalues with sorted eigenvalues of each estimate.
pub fn eigenvalue_comparison<T: Scalar>(
    truth: &SymmetricSpectrum<T>,
    estimates: &[(String, SymmetricSpectrum<T>)],
) -> Result<EigenvalueTable<T>> {
    let n = truth.n();
    for (_, spec) in estimates {
        if spec.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: spec.n(),
            });
        }
    }
    Ok(EigenvalueTable {
        methods: estimates.iter().map(|(name, _)| name.clone()).collect(),
        truth: truth.eigenvalues().iter().copied().collect(),
        estimates: estimates
            .iter()
            .map(|(_, spec)| spec.eigenvalues().iter().copied().collect())
            .collect(),
    })
}
