//! Synthetic data generation: ground-truth correlation matrices and
//! multivariate Student-t return panels.
//!
//! Sampling is fully deterministic given a 64-bit seed: the generator is
//! Xoshiro256++ seeded through `seed_from_u64`, and for each time column the
//! draw order is fixed (N standard normals, then one chi-square variate for
//! finite degrees of freedom). Parallel experiments must derive distinct
//! seeds with [`derive_seed`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::kernels::{pearson_matrix, CorrelationMatrix, EstimatorKind};
use crate::panel::ReturnPanel;
use crate::preprocess::standardize;
use crate::spectral::{eig_sym, SymmetricSpectrum};
use crate::{cast, Scalar};

/// Absolute floor on eigenvalues of a ground-truth correlation matrix.
const TRUTH_PSD_TOL: f64 = 1e-10;

/// Maximum admissible duplicate correlation; beyond this the appended pair
/// is numerically singular.
const MAX_RHO_DUP: f64 = 1.0 - 1e-8;

/// A true correlation matrix together with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct GroundTruth<T: Scalar> {
    correlation: CorrelationMatrix<T>,
    spectrum: SymmetricSpectrum<T>,
}

impl<T: Scalar> GroundTruth<T> {
    /// Wraps a correlation matrix, checking positive semidefiniteness.
    pub fn new(correlation: CorrelationMatrix<T>) -> Result<Self> {
        let spectrum = eig_sym(correlation.values())?;
        if spectrum.min_eigenvalue() < -cast::<T>(TRUTH_PSD_TOL) {
            return Err(Error::NotPsd {
                min_eigenvalue: spectrum.min_eigenvalue().to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            correlation,
            spectrum,
        })
    }

    pub fn n(&self) -> usize {
        self.correlation.n()
    }

    pub fn correlation(&self) -> &CorrelationMatrix<T> {
        &self.correlation
    }

    pub fn spectrum(&self) -> &SymmetricSpectrum<T> {
        &self.spectrum
    }
}

/// Whether the sampled returns should have covariance C (the Student scale
/// matrix is then C·(ν−2)/ν) or scale matrix C directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleConvention {
    #[default]
    CovarianceIsC,
    ShapeIsC,
}

/// Sampling configuration for [`sample_student`].
#[derive(Debug, Clone, Copy)]
pub struct StudentConfig {
    /// Degrees of freedom; must exceed 2 so the covariance exists.
    /// `f64::INFINITY` selects the Gaussian limit.
    pub nu: f64,
    /// Number of time columns to draw.
    pub t: usize,
    pub seed: u64,
    pub scale: ScaleConvention,
}

impl StudentConfig {
    pub fn new(nu: f64, t: usize, seed: u64) -> Self {
        Self {
            nu,
            t,
            seed,
            scale: ScaleConvention::default(),
        }
    }
}

/// Draws T i.i.d. columns `L·z·sqrt(ν/χ²_ν)` where `L` is the symmetric
/// square root of the scale matrix.
pub fn sample_student<T: Scalar>(
    truth: &GroundTruth<T>,
    cfg: &StudentConfig,
) -> Result<ReturnPanel<T>> {
    if cfg.nu.is_nan() || cfg.nu <= 2.0 {
        return Err(Error::invalid(format!(
            "student degrees of freedom must exceed 2, got {}",
            cfg.nu
        )));
    }
    if cfg.t < 2 {
        return Err(Error::invalid("need at least 2 observations"));
    }
    if truth.spectrum.min_eigenvalue() < -cast::<T>(TRUTH_PSD_TOL) {
        return Err(Error::NotPsd {
            min_eigenvalue: truth.spectrum.min_eigenvalue().to_f64().unwrap_or(f64::NAN),
        });
    }

    let n = truth.n();
    let gaussian = cfg.nu.is_infinite();
    let scale_factor = match (cfg.scale, gaussian) {
        (ScaleConvention::CovarianceIsC, false) => (cfg.nu - 2.0) / cfg.nu,
        _ => 1.0,
    };
    let l = truth.spectrum.psd_sqrt() * cast::<T>(scale_factor.sqrt());

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let chi2 = if gaussian {
        None
    } else {
        Some(Gamma::new(cfg.nu / 2.0, 2.0).expect("valid chi-square parameters"))
    };

    let mut z = DVector::<T>::zeros(n);
    let mut values = DMatrix::<T>::zeros(n, cfg.t);
    for s in 0..cfg.t {
        for i in 0..n {
            let g: f64 = StandardNormal.sample(&mut rng);
            z[i] = cast(g);
        }
        let mut col = &l * &z;
        if let Some(chi2) = &chi2 {
            // reject the measure-zero chi-square draw of exactly 0
            let mut draw: f64 = chi2.sample(&mut rng);
            while draw == 0.0 {
                draw = chi2.sample(&mut rng);
            }
            col *= cast::<T>((cfg.nu / draw).sqrt());
        }
        values.set_column(s, &col);
    }

    ReturnPanel::from_matrix(values)
}

/// One-factor-plus-sector correlation matrix: every off-diagonal pair
/// correlates at `market_beta²`, lifted by `sector_rho·(1−market_beta²)`
/// within each of `n_sectors` contiguous equal blocks.
pub fn make_factor_truth<T: Scalar>(
    n: usize,
    market_beta: f64,
    n_sectors: usize,
    sector_rho: f64,
) -> Result<GroundTruth<T>> {
    if n < 2 {
        return Err(Error::invalid("factor truth needs at least 2 assets"));
    }
    if !(0.0..1.0).contains(&market_beta.abs()) {
        return Err(Error::invalid(format!(
            "market beta must satisfy |beta| < 1, got {market_beta}"
        )));
    }
    if n_sectors > 0 && !(0.0..=1.0).contains(&sector_rho) {
        return Err(Error::invalid(format!(
            "sector correlation must lie in [0, 1], got {sector_rho}"
        )));
    }
    let beta_sq = market_beta * market_beta;
    let sector_lift = sector_rho * (1.0 - beta_sq);
    let sector_of = |i: usize| if n_sectors == 0 { 0 } else { i * n_sectors / n };

    let values = DMatrix::<T>::from_fn(n, n, |i, j| {
        if i == j {
            T::one()
        } else {
            let mut c = beta_sq;
            if n_sectors > 0 && sector_of(i) == sector_of(j) {
                c += sector_lift;
            }
            cast(c)
        }
    });
    let corr = CorrelationMatrix::new(values, EstimatorKind::External("factor_truth".into()))?;
    GroundTruth::new(corr)
}

/// Appends a near-duplicate of `asset`: the clone correlates with its
/// original at `rho_dup` and with every other asset j at
/// `rho_dup·corr(asset, j)`, which keeps the matrix positive definite for
/// any `rho_dup < 1`.
pub fn inject_duplicate<T: Scalar>(
    truth: &GroundTruth<T>,
    asset: usize,
    rho_dup: f64,
) -> Result<GroundTruth<T>> {
    let n = truth.n();
    if asset >= n {
        return Err(Error::invalid(format!(
            "asset index {asset} out of range for {n} assets"
        )));
    }
    if !(0.0 < rho_dup && rho_dup <= MAX_RHO_DUP) {
        return Err(Error::invalid(format!(
            "duplicate correlation must lie in (0, {MAX_RHO_DUP}], got {rho_dup}"
        )));
    }
    let c = truth.correlation.values();
    let rho: T = cast(rho_dup);
    let mut out = DMatrix::<T>::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(c);
    for j in 0..n {
        let v = rho * c[(asset, j)];
        out[(n, j)] = v;
        out[(j, n)] = v;
    }
    out[(n, n)] = T::one();
    let corr = CorrelationMatrix::new(out, EstimatorKind::External("duplicate_truth".into()))?;
    GroundTruth::new(corr)
}

/// Ground truth with an empirical (fully spread) spectrum: samples a panel
/// from `base`, standardizes it and keeps its Pearson correlation as the new
/// truth. Mirrors studies where the true matrix is itself an estimated
/// correlation matrix of real returns.
pub fn empirical_truth<T: Scalar>(
    base: &GroundTruth<T>,
    t0: usize,
    nu: f64,
    seed: u64,
) -> Result<GroundTruth<T>> {
    let panel = sample_student(base, &StudentConfig::new(nu, t0, seed))?;
    let std_panel = standardize(&panel)?;
    let pearson = pearson_matrix(&std_panel.to_return_panel())?;
    let corr = CorrelationMatrix::new(
        pearson.values().clone(),
        EstimatorKind::External("empirical_truth".into()),
    )?;
    GroundTruth::new(corr)
}

/// Derives a decorrelated child seed for stream `stream` (SplitMix64
/// finalizer over the golden-ratio sequence).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::kendall_pair_fast;
    use approx::assert_abs_diff_eq;

    fn sample_covariance(panel: &ReturnPanel<f64>) -> DMatrix<f64> {
        let x = panel.values();
        let (n, t) = x.shape();
        let mut centered = x.clone();
        for i in 0..n {
            let mean = centered.row(i).sum() / t as f64;
            for s in 0..t {
                centered[(i, s)] -= mean;
            }
        }
        &centered * centered.transpose() / t as f64
    }

    #[test]
    fn same_seed_reproduces_bit_identical_panels() {
        let truth = make_factor_truth::<f64>(6, 0.5, 2, 0.3).unwrap();
        let cfg = StudentConfig::new(3.0, 64, 42);
        let a = sample_student(&truth, &cfg).unwrap();
        let b = sample_student(&truth, &cfg).unwrap();
        assert_eq!(a.values(), b.values());
        let c = sample_student(&truth, &StudentConfig::new(3.0, 64, 43)).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn gaussian_identity_truth_has_small_sample_correlation() {
        let truth = make_factor_truth::<f64>(2, 0.0, 0, 0.0).unwrap();
        let cfg = StudentConfig::new(f64::INFINITY, 100_000, 7);
        let panel = sample_student(&truth, &cfg).unwrap();
        let cov = sample_covariance(&panel);
        let r = cov[(0, 1)] / (cov[(0, 0)] * cov[(1, 1)]).sqrt();
        assert!(r.abs() < 0.02, "sample correlation {r}");
    }

    #[test]
    fn kendall_tau_matches_elliptical_relation() {
        // for Gaussian data with correlation rho, tau = (2/pi)·asin(rho)
        let values = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let corr = CorrelationMatrix::new(values, EstimatorKind::External("toy".into())).unwrap();
        let truth = GroundTruth::new(corr).unwrap();
        let cfg = StudentConfig::new(f64::INFINITY, 200_000, 11);
        let panel = sample_student(&truth, &cfg).unwrap();
        let tau = kendall_pair_fast(&panel.row(0), &panel.row(1)).unwrap();
        let expected = (2.0 / std::f64::consts::PI) * 0.5f64.asin();
        assert_abs_diff_eq!(expected, 1.0 / 3.0, epsilon = 1e-12);
        assert!((tau - expected).abs() < 0.005, "tau {tau} vs {expected}");
    }

    #[test]
    fn covariance_convention_recovers_c_and_shape_convention_inflates_it() {
        let truth = make_factor_truth::<f64>(4, 0.4, 0, 0.0).unwrap();
        let mut cfg = StudentConfig::new(6.0, 150_000, 3);
        let cov = sample_covariance(&sample_student(&truth, &cfg).unwrap());
        for i in 0..4 {
            assert!((cov[(i, i)] - 1.0).abs() < 0.05, "diag {}", cov[(i, i)]);
        }
        cfg.scale = ScaleConvention::ShapeIsC;
        let cov = sample_covariance(&sample_student(&truth, &cfg).unwrap());
        // covariance = C·ν/(ν−2) = 1.5·C
        for i in 0..4 {
            assert!((cov[(i, i)] - 1.5).abs() < 0.08, "diag {}", cov[(i, i)]);
        }
    }

    #[test]
    fn student_sample_covariance_converges_in_frobenius_norm() {
        let n = 20;
        let truth = make_factor_truth::<f64>(n, 0.5, 4, 0.2).unwrap();
        let t = 20_000;
        let cfg = StudentConfig::new(5.0, t, 19);
        let cov = sample_covariance(&sample_student(&truth, &cfg).unwrap());
        let err = (cov - truth.correlation().values()).norm();
        let bound = 5.0 * n as f64 / (t as f64).sqrt();
        assert!(err < bound, "frobenius error {err} vs bound {bound}");
    }

    #[test]
    fn invalid_nu_rejected() {
        let truth = make_factor_truth::<f64>(3, 0.0, 0, 0.0).unwrap();
        for nu in [1.0, 2.0, -3.0, f64::NAN] {
            assert!(sample_student(&truth, &StudentConfig::new(nu, 10, 0)).is_err());
        }
    }

    #[test]
    fn factor_truth_degenerate_cases() {
        let truth = make_factor_truth::<f64>(5, 0.0, 0, 0.0).unwrap();
        assert_eq!(
            truth.correlation().values(),
            &DMatrix::<f64>::identity(5, 5)
        );

        // uniform off-diagonal 0.3: spectrum {1 + 3·0.3, 0.7, 0.7, 0.7}
        let truth = make_factor_truth::<f64>(4, 0.3f64.sqrt(), 0, 0.0).unwrap();
        let eig = truth.spectrum().eigenvalues();
        assert_abs_diff_eq!(eig[3], 1.9, epsilon = 1e-12);
        for k in 0..3 {
            assert_abs_diff_eq!(eig[k], 0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn factor_truth_market_mode_is_uniform() {
        let n = 100;
        let truth = make_factor_truth::<f64>(n, 0.3f64.sqrt(), 0, 0.0).unwrap();
        let top = truth.spectrum().eigenvectors().column(n - 1);
        let uniform = DVector::<f64>::from_element(n, 1.0 / (n as f64).sqrt());
        assert!(top.dot(&uniform).abs() > 0.999);
    }

    #[test]
    fn duplicate_injection_shapes_the_smallest_mode() {
        let truth = make_factor_truth::<f64>(2, 0.0, 0, 0.0).unwrap();
        let dup = inject_duplicate(&truth, 0, 0.99).unwrap();
        assert_eq!(dup.n(), 3);
        let spec = dup.spectrum();
        assert_abs_diff_eq!(spec.min_eigenvalue(), 0.01, epsilon = 1e-12);
        let u = spec.eigenvectors().column(0);
        // smallest mode concentrates on the pair with opposite signs
        assert_abs_diff_eq!(u[0] * u[0] + u[2] * u[2], 1.0, epsilon = 1e-10);
        assert!((u[0] + u[2]).abs() < 1e-10, "antisymmetric weights");
    }

    #[test]
    fn duplicate_rho_guard() {
        let truth = make_factor_truth::<f64>(3, 0.2, 0, 0.0).unwrap();
        assert!(inject_duplicate(&truth, 0, 1.0).is_err());
        assert!(inject_duplicate(&truth, 0, 1.0 - 1e-9).is_err());
        assert!(inject_duplicate(&truth, 0, 0.999).is_ok());
        assert!(inject_duplicate(&truth, 5, 0.9).is_err());
    }

    #[test]
    fn empirical_truth_is_valid_and_spread() {
        let base = make_factor_truth::<f64>(20, 0.5, 4, 0.2).unwrap();
        let truth = empirical_truth(&base, 60, f64::INFINITY, 5).unwrap();
        truth.correlation().validate_psd().unwrap();
        // resampling spreads the degenerate bulk of the factor model
        let eig = truth.spectrum().eigenvalues();
        assert!(eig[0] < eig[10], "spectrum should be spread out");
    }

    #[test]
    fn derive_seed_decorrelates_streams() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, 0));
    }
}
