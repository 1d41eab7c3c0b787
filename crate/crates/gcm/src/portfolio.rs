//! Markowitz optimization, covariance reconstruction, predictor strategies
//! and the rolling out-of-sample backtest.
//!
//! The backtest walks the standardized history in consecutive non-overlapping
//! out-of-sample periods. In each window the trailing `t_in` columns of the
//! volatility-adjusted returns are standardized, the requested
//! estimator/cleaning pipeline produces a correlation matrix, the covariance
//! is rebuilt with the in-sample scales, and the minimum-risk portfolio for
//! each predictor strategy is evaluated on the held-out period.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

use crate::cleaning::{
    clip, default_eta, kendall_clip, rie, rie_gamma, rie_id, CleanedCorrelation,
};
use crate::datagen::derive_seed;
use crate::error::{Error, Result};
use crate::icvc::{icvc_on_matrix, FoldPlan, IcvcSource};
use crate::kernels::{gcc_gram_values, kendall_values, pearson_values, CorrelationMatrix, Kernel};
use crate::preprocess::{standardize_rows, StandardizedPanel};
use crate::spectral::{eig_sym, SymmetricSpectrum};
use crate::{cast, cast_usize, Scalar};

/// Condition-number ceiling beyond which a covariance is treated as
/// singular.
const MAX_CONDITION: f64 = 1e12;

/// Predictor strategies for the expected-gain constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Uniform predictor: the classic minimum variance portfolio.
    MinVariance,
    /// The realized return over the next out-of-sample period is known.
    Omniscient,
    /// Mean-reverts the previous day's return, rebalanced daily.
    MeanReversion,
    /// Standardized Gaussian random exposures.
    RandomLongShort,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::MinVariance => "min_variance",
            Strategy::Omniscient => "omniscient",
            Strategy::MeanReversion => "mean_reversion",
            Strategy::RandomLongShort => "random_long_short",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "min_variance" => Ok(Strategy::MinVariance),
            "omniscient" => Ok(Strategy::Omniscient),
            "mean_reversion" => Ok(Strategy::MeanReversion),
            "random_long_short" => Ok(Strategy::RandomLongShort),
            other => Err(Error::invalid(format!("unknown strategy '{other}'"))),
        }
    }

    pub const ALL: [Strategy; 4] = [
        Strategy::MinVariance,
        Strategy::Omniscient,
        Strategy::MeanReversion,
        Strategy::RandomLongShort,
    ];
}

/// A predictor vector rescaled to ‖g‖ = √N, so portfolio weights come out
/// O(1/N).
#[derive(Debug, Clone)]
pub struct Predictor<T: Scalar> {
    values: DVector<T>,
    strategy: Strategy,
    norm: T,
}

impl<T: Scalar> Predictor<T> {
    pub fn values(&self) -> &DVector<T> {
        &self.values
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// The normalization factor applied to the raw predictor.
    pub fn norm(&self) -> T {
        self.norm
    }
}

/// Data a strategy may need to build its predictor.
#[derive(Debug, Clone, Copy)]
pub struct PredictorContext<'a, T: Scalar> {
    pub n_assets: usize,
    /// Volatility-adjusted returns of the upcoming out-of-sample window
    /// (N × T_out); required by the omniscient strategy.
    pub future_window: Option<&'a DMatrix<T>>,
    /// Volatility-adjusted returns of the previous day; required by the
    /// mean-reversion strategy.
    pub previous_day: Option<&'a DVector<T>>,
    /// Seed for the random long-short strategy.
    pub seed: Option<u64>,
}

impl<T: Scalar> Default for PredictorContext<'_, T> {
    fn default() -> Self {
        Self {
            n_assets: 0,
            future_window: None,
            previous_day: None,
            seed: None,
        }
    }
}

/// Assembles the raw predictor for `strategy` and rescales it to ‖g‖ = √N.
pub fn build_predictor<T: Scalar>(
    strategy: Strategy,
    ctx: &PredictorContext<'_, T>,
) -> Result<Predictor<T>> {
    let n = ctx.n_assets;
    if n == 0 {
        return Err(Error::invalid("predictor needs at least one asset"));
    }
    let raw: DVector<T> = match strategy {
        Strategy::MinVariance => DVector::from_element(n, T::one()),
        Strategy::Omniscient => {
            let future = ctx.future_window.ok_or(Error::MissingContext {
                strategy: "omniscient",
                needs: "the out-of-sample return window",
            })?;
            DVector::from_fn(n, |i, _| {
                future.row(i).iter().fold(T::zero(), |a, &v| a + v)
            })
        }
        Strategy::MeanReversion => {
            let prev = ctx.previous_day.ok_or(Error::MissingContext {
                strategy: "mean_reversion",
                needs: "the previous day's returns",
            })?;
            -prev.clone()
        }
        Strategy::RandomLongShort => {
            let seed = ctx.seed.ok_or(Error::MissingContext {
                strategy: "random_long_short",
                needs: "a seed",
            })?;
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            DVector::from_fn(n, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                cast(z)
            })
        }
    };
    let nrm = raw.norm();
    if nrm == T::zero() {
        return Err(Error::ZeroPredictor);
    }
    let scale = cast_usize::<T>(n).sqrt() / nrm;
    Ok(Predictor {
        values: raw * scale,
        strategy,
        norm: scale,
    })
}

/// Solution of the linearly constrained quadratic risk minimization:
/// `w = G·Σ⁻¹g / (gᵀΣ⁻¹g)`.
#[derive(Debug, Clone)]
pub struct MarkowitzSolution<T: Scalar> {
    pub weights: DVector<T>,
    /// Spectral condition number of the covariance.
    pub condition: T,
}

/// Minimizes `wᵀΣw` subject to `wᵀg = gain`.
pub fn markowitz_weights<T: Scalar>(
    sigma: &DMatrix<T>,
    g: &DVector<T>,
    gain: T,
) -> Result<MarkowitzSolution<T>> {
    if g.nrows() != sigma.nrows() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            got: g.nrows(),
        });
    }
    let spec = eig_sym(sigma)?;
    let (weights, condition) = markowitz_from_spectrum(&spec, g, gain)?;
    Ok(MarkowitzSolution { weights, condition })
}

/// Solve through a precomputed covariance spectrum; used by the backtest to
/// amortize the decomposition across strategies and daily rebalances.
fn markowitz_from_spectrum<T: Scalar>(
    spec: &SymmetricSpectrum<T>,
    g: &DVector<T>,
    gain: T,
) -> Result<(DVector<T>, T)> {
    if g.norm() == T::zero() {
        return Err(Error::ZeroPredictor);
    }
    let lambda_min = spec.min_eigenvalue();
    let lambda_max = spec.max_eigenvalue();
    if lambda_min <= T::zero() {
        return Err(Error::SingularCovariance {
            condition: f64::INFINITY,
        });
    }
    let condition = lambda_max / lambda_min;
    if condition > cast(MAX_CONDITION) {
        return Err(Error::SingularCovariance {
            condition: condition.to_f64().unwrap_or(f64::INFINITY),
        });
    }
    let mut coeffs = spec.eigenvectors().transpose() * g;
    for (k, c) in coeffs.iter_mut().enumerate() {
        *c /= spec.eigenvalues()[k];
    }
    let sigma_inv_g = spec.eigenvectors() * coeffs;
    let denom = g.dot(&sigma_inv_g);
    Ok((sigma_inv_g * (gain / denom), condition))
}

/// Rescales a cleaned correlation into a covariance: `Σ = D Ξ D` with
/// `D = diag(sigma)`.
pub fn reconstruct_covariance<T: Scalar>(
    corr: &CleanedCorrelation<T>,
    sigma: &DVector<T>,
) -> DMatrix<T> {
    assert_eq!(sigma.nrows(), corr.n(), "scale vector length mismatch");
    assert!(
        sigma.iter().all(|&s| s > T::zero()),
        "asset scales must be positive"
    );
    let mut out = corr.values().clone();
    for i in 0..out.nrows() {
        for j in 0..out.ncols() {
            out[(i, j)] *= sigma[i] * sigma[j];
        }
    }
    out
}

/// Raw estimators usable directly or underneath a cleaning scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorChoice<T: Scalar> {
    Pearson,
    Spearman,
    ClippedPearson { quantile: T },
    Gcc { kernel: Kernel<T> },
}

/// An estimation pipeline: a raw estimator plus an optional cleaning or
/// cross-validation stage.
#[derive(Debug, Clone)]
pub enum Method<T: Scalar> {
    /// Raw estimator with no eigenvalue cleaning.
    Estimator(EstimatorChoice<T>),
    /// Pearson + Marčenko–Pastur clipping.
    Clipped,
    /// Pearson + rotationally invariant estimator.
    Rie,
    /// Pearson + regularized RIE.
    RieGamma,
    /// Pearson + RIE with identity shift restoring the trace.
    RieId,
    /// Pearson eigenvectors + cross-validated isotonic eigenvalues.
    Icvc,
    /// Kendall GCM + Kendall-edge clipping.
    KendallClipped,
    /// Kendall eigenvectors + cross-validated isotonic eigenvalues.
    KendallIcvc,
    /// Tanh-kernel GCM eigenvectors + cross-validated isotonic eigenvalues.
    TanhIcvc { beta: T },
    /// An externally supplied correlation matrix (e.g. the exact truth in
    /// synthetic studies).
    Oracle { corr: CorrelationMatrix<T> },
}

impl<T: Scalar> Method<T> {
    pub fn label(&self) -> String {
        match self {
            Method::Estimator(EstimatorChoice::Pearson) => "pearson".into(),
            Method::Estimator(EstimatorChoice::Spearman) => "spearman".into(),
            Method::Estimator(EstimatorChoice::ClippedPearson { .. }) => "clipped_pearson".into(),
            Method::Estimator(EstimatorChoice::Gcc { kernel }) => kernel.label(),
            Method::Clipped => "clipped".into(),
            Method::Rie => "rie".into(),
            Method::RieGamma => "rie_gamma".into(),
            Method::RieId => "rie_id".into(),
            Method::Icvc => "icvc".into(),
            Method::KendallClipped => "kendall_clipped".into(),
            Method::KendallIcvc => "kendall_icvc".into(),
            Method::TanhIcvc { .. } => "tanh_icvc".into(),
            Method::Oracle { .. } => "oracle".into(),
        }
    }

    /// Parses a method tag such as `pearson`, `kendall`, `gcc:sign`,
    /// `tanh:2.5`, `rie_id` or `kendall_icvc`.
    pub fn parse(s: &str) -> Result<Self> {
        let invalid = || Error::invalid(format!("unknown method '{s}'"));
        let parse_beta = |txt: &str| -> Result<T> {
            txt.parse::<T>()
                .map_err(|_| Error::invalid(format!("bad tanh beta in '{s}'")))
        };
        Ok(match s {
            "pearson" => Method::Estimator(EstimatorChoice::Pearson),
            "spearman" => Method::Estimator(EstimatorChoice::Spearman),
            "clipped_pearson" => Method::Estimator(EstimatorChoice::ClippedPearson {
                quantile: cast(0.95),
            }),
            "kendall" | "gcc:sign" => Method::Estimator(EstimatorChoice::Gcc {
                kernel: Kernel::Sign,
            }),
            "gcc:identity" | "gcc_identity" => Method::Estimator(EstimatorChoice::Gcc {
                kernel: Kernel::Identity,
            }),
            "tanh" | "gcc:tanh" => Method::Estimator(EstimatorChoice::Gcc {
                kernel: Kernel::default_tanh(),
            }),
            "clipped" => Method::Clipped,
            "rie" => Method::Rie,
            "rie_gamma" => Method::RieGamma,
            "rie_id" => Method::RieId,
            "icvc" => Method::Icvc,
            "kendall_clipped" => Method::KendallClipped,
            "kendall_icvc" => Method::KendallIcvc,
            "tanh_icvc" => Method::TanhIcvc { beta: T::one() },
            _ => {
                if let Some(q) = s.strip_prefix("clipped_pearson:") {
                    Method::Estimator(EstimatorChoice::ClippedPearson {
                        quantile: q
                            .parse::<T>()
                            .map_err(|_| Error::invalid(format!("bad quantile in '{s}'")))?,
                    })
                } else if let Some(b) = s.strip_prefix("tanh:") {
                    Method::Estimator(EstimatorChoice::Gcc {
                        kernel: Kernel::tanh(parse_beta(b)?)?,
                    })
                } else if let Some(b) = s.strip_prefix("gcc:tanh:") {
                    Method::Estimator(EstimatorChoice::Gcc {
                        kernel: Kernel::tanh(parse_beta(b)?)?,
                    })
                } else if let Some(b) = s.strip_prefix("tanh_icvc:") {
                    Method::TanhIcvc {
                        beta: parse_beta(b)?,
                    }
                } else {
                    return Err(invalid());
                }
            }
        })
    }

    /// Runs the pipeline on a standardized in-sample matrix.
    pub fn estimate(
        &self,
        x: &DMatrix<T>,
        params: &EstimateParams<T>,
    ) -> Result<CleanedCorrelation<T>> {
        let (n, t) = x.shape();
        let q = cast_usize::<T>(n) / cast_usize::<T>(t);
        let eta = params.eta.unwrap_or_else(|| default_eta(n));
        let raw_wrapped = |values: DMatrix<T>| -> Result<CleanedCorrelation<T>> {
            let spec = eig_sym(&values)?;
            Ok(CleanedCorrelation::raw(values, spec))
        };
        match self {
            Method::Estimator(choice) => raw_wrapped(estimator_values(choice, x)?),
            Method::Clipped => {
                let spec = eig_sym(&pearson_values(x, None)?)?;
                clip(&spec, q)
            }
            Method::Rie => {
                let spec = eig_sym(&pearson_values(x, None)?)?;
                rie(&spec, q, eta)
            }
            Method::RieGamma => {
                let spec = eig_sym(&pearson_values(x, None)?)?;
                rie_gamma(&spec, q, eta)
            }
            Method::RieId => {
                let spec = eig_sym(&pearson_values(x, None)?)?;
                rie_id(&spec, q, eta)
            }
            Method::Icvc => {
                let folds = FoldPlan::contiguous(t, params.n_folds)?;
                Ok(icvc_on_matrix(x, IcvcSource::Pearson, &folds)?.to_cleaned())
            }
            Method::KendallClipped => {
                let spec = eig_sym(&kendall_values(x, None)?)?;
                kendall_clip(&spec, q)
            }
            Method::KendallIcvc => {
                let folds = FoldPlan::contiguous(t, params.n_folds)?;
                Ok(icvc_on_matrix(x, IcvcSource::Kendall, &folds)?.to_cleaned())
            }
            Method::TanhIcvc { beta } => {
                let folds = FoldPlan::contiguous(t, params.n_folds)?;
                Ok(icvc_on_matrix(x, IcvcSource::TanhBeta(*beta), &folds)?.to_cleaned())
            }
            Method::Oracle { corr } => {
                if corr.n() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: corr.n(),
                    });
                }
                raw_wrapped(corr.values().clone())
            }
        }
    }
}

fn estimator_values<T: Scalar>(choice: &EstimatorChoice<T>, x: &DMatrix<T>) -> Result<DMatrix<T>> {
    match choice {
        EstimatorChoice::Pearson => pearson_values(x, None),
        EstimatorChoice::Spearman => {
            let (n, t) = x.shape();
            let mut ranks = DMatrix::<T>::zeros(n, t);
            let mut row = vec![T::zero(); t];
            for i in 0..n {
                for (s, v) in row.iter_mut().enumerate() {
                    *v = x[(i, s)];
                }
                let r = crate::kernels::average_ranks(&row);
                for s in 0..t {
                    ranks[(i, s)] = r[s];
                }
            }
            pearson_values(&ranks, None)
        }
        EstimatorChoice::ClippedPearson { quantile } => {
            let panel = crate::panel::ReturnPanel::from_matrix(x.clone())?;
            Ok(crate::kernels::clipped_pearson_matrix(&panel, *quantile)?.into_values())
        }
        EstimatorChoice::Gcc { kernel } => match kernel {
            Kernel::Sign => kendall_values(x, None),
            other => gcc_gram_values(x, other, None),
        },
    }
}

/// Pipeline parameters shared by all methods.
#[derive(Debug, Clone, Copy)]
pub struct EstimateParams<T: Scalar> {
    /// Spectral broadening for the RIE family; defaults to N^(-1/2).
    pub eta: Option<T>,
    /// Fold count for the cross-validated methods.
    pub n_folds: usize,
}

impl<T: Scalar> Default for EstimateParams<T> {
    fn default() -> Self {
        Self {
            eta: None,
            n_folds: 10,
        }
    }
}

/// Backtest protocol parameters.
#[derive(Debug, Clone, Copy)]
pub struct BacktestConfig<T: Scalar> {
    /// In-sample window length (columns).
    pub t_in: usize,
    /// Out-of-sample period length (columns).
    pub t_out: usize,
    /// Factor converting daily variance to annualized variance.
    pub annualization: T,
    /// Expected-gain constraint level.
    pub gain: T,
    /// Estimation parameters forwarded to every method.
    pub params: EstimateParams<T>,
    /// Base seed for the random long-short predictors.
    pub seed: u64,
}

impl<T: Scalar> BacktestConfig<T> {
    pub fn new(t_in: usize) -> Self {
        Self {
            t_in,
            t_out: 60,
            annualization: cast(252.0),
            gain: T::one(),
            params: EstimateParams::default(),
            seed: 0,
        }
    }
}

/// One realized (window, method, strategy) out-of-sample measurement.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WindowRecord<T: Scalar> {
    pub window: usize,
    pub method: String,
    pub strategy: String,
    /// Mean squared daily portfolio return over the window.
    pub risk: T,
    pub ann_vol: T,
}

/// Mean/std of the annualized volatility across windows for one
/// (method, strategy) cell.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SummaryRecord<T: Scalar> {
    pub method: String,
    pub strategy: String,
    pub n_windows: usize,
    pub mean_risk: T,
    pub mean_ann_vol: T,
    pub std_ann_vol: T,
}

/// A non-fatal per-window failure (singular covariance, degenerate
/// estimator, ...).
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FailureRecord {
    pub window: usize,
    pub method: String,
    pub strategy: Option<String>,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BacktestReport<T: Scalar> {
    pub t_in: usize,
    pub t_out: usize,
    pub n_windows: usize,
    pub records: Vec<WindowRecord<T>>,
    pub summaries: Vec<SummaryRecord<T>>,
    pub failures: Vec<FailureRecord>,
}

impl<T: Scalar> BacktestReport<T> {
    pub fn summary(&self, method: &str, strategy: Strategy) -> Option<&SummaryRecord<T>> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.strategy == strategy.label())
    }
}

struct WindowOutput<T: Scalar> {
    records: Vec<WindowRecord<T>>,
    failures: Vec<FailureRecord>,
}

/// Rolls the estimation/optimization/evaluation grid over the history.
///
/// The window count is `⌊(T_tot − t_in − 1)/t_out⌋`; window w trains on
/// columns `[w·t_out, w·t_out + t_in)` and is evaluated on the following
/// `t_out` columns. Failures are recorded per (window, method) and do not
/// abort the run.
pub fn run_backtest<T: Scalar>(
    panel: &StandardizedPanel<T>,
    cfg: &BacktestConfig<T>,
    methods: &[Method<T>],
    strategies: &[Strategy],
) -> Result<BacktestReport<T>> {
    let t_tot = panel.n_obs();
    if cfg.t_in < 2 || cfg.t_out < 1 {
        return Err(Error::invalid(
            "window lengths must satisfy t_in >= 2, t_out >= 1",
        ));
    }
    if t_tot < cfg.t_in + cfg.t_out + 1 {
        return Err(Error::invalid(format!(
            "history of {t_tot} columns too short for t_in={} plus t_out={}",
            cfg.t_in, cfg.t_out
        )));
    }
    if methods.is_empty() || strategies.is_empty() {
        return Err(Error::invalid("need at least one method and one strategy"));
    }
    let n_windows = (t_tot - cfg.t_in - 1) / cfg.t_out;
    let x_tilde = panel.vol_adjusted();

    let outputs: Vec<WindowOutput<T>> = (0..n_windows)
        .into_par_iter()
        .map(|w| run_window(w, &x_tilde, cfg, methods, strategies))
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for out in outputs {
        records.extend(out.records);
        failures.extend(out.failures);
    }
    let summaries = summarize(&records);
    Ok(BacktestReport {
        t_in: cfg.t_in,
        t_out: cfg.t_out,
        n_windows,
        records,
        summaries,
        failures,
    })
}

fn run_window<T: Scalar>(
    w: usize,
    x_tilde: &DMatrix<T>,
    cfg: &BacktestConfig<T>,
    methods: &[Method<T>],
    strategies: &[Strategy],
) -> WindowOutput<T> {
    let in_start = w * cfg.t_out;
    let out_start = in_start + cfg.t_in;
    let mut records = Vec::new();
    let mut failures = Vec::new();

    let in_window = x_tilde.columns(in_start, cfg.t_in).into_owned();
    let out_window = x_tilde.columns(out_start, cfg.t_out).into_owned();

    let (x_w, sigma_w) = match standardize_rows(in_window) {
        Ok(v) => v,
        Err(e) => {
            failures.push(FailureRecord {
                window: w,
                method: "(window standardization)".into(),
                strategy: None,
                error: e.to_string(),
            });
            return WindowOutput { records, failures };
        }
    };

    for method in methods {
        let label = method.label();
        let cleaned = match method.estimate(&x_w, &cfg.params) {
            Ok(c) => c,
            Err(e) => {
                failures.push(FailureRecord {
                    window: w,
                    method: label,
                    strategy: None,
                    error: e.to_string(),
                });
                continue;
            }
        };
        let sigma_cov = reconstruct_covariance(&cleaned, &sigma_w);
        let cov_spec = match eig_sym(&sigma_cov) {
            Ok(s) => s,
            Err(e) => {
                failures.push(FailureRecord {
                    window: w,
                    method: label,
                    strategy: None,
                    error: e.to_string(),
                });
                continue;
            }
        };

        for &strategy in strategies {
            match window_risk(w, strategy, &cov_spec, x_tilde, &out_window, out_start, cfg) {
                Ok(risk) => {
                    let ann_vol = (cfg.annualization * risk).sqrt();
                    records.push(WindowRecord {
                        window: w,
                        method: label.clone(),
                        strategy: strategy.label().into(),
                        risk,
                        ann_vol,
                    });
                }
                Err(e) => failures.push(FailureRecord {
                    window: w,
                    method: label.clone(),
                    strategy: Some(strategy.label().into()),
                    error: e.to_string(),
                }),
            }
        }
    }
    WindowOutput { records, failures }
}

/// Out-of-sample mean squared daily portfolio return for one strategy.
fn window_risk<T: Scalar>(
    w: usize,
    strategy: Strategy,
    cov_spec: &SymmetricSpectrum<T>,
    x_tilde: &DMatrix<T>,
    out_window: &DMatrix<T>,
    out_start: usize,
    cfg: &BacktestConfig<T>,
) -> Result<T> {
    let n_assets = x_tilde.nrows();
    let t_out: T = cast_usize(cfg.t_out);
    match strategy {
        Strategy::MeanReversion => {
            // daily rebalancing: predictor from the previous day, fixed
            // covariance within the window
            let mut sum_sq = T::zero();
            for tau in 0..cfg.t_out {
                let prev = x_tilde.column(out_start + tau - 1).into_owned();
                let ctx = PredictorContext {
                    n_assets,
                    previous_day: Some(&prev),
                    ..Default::default()
                };
                let g = build_predictor(strategy, &ctx)?;
                let (weights, _) = markowitz_from_spectrum(cov_spec, g.values(), cfg.gain)?;
                let r = out_window.column(tau).dot(&weights);
                sum_sq += r * r;
            }
            Ok(sum_sq / t_out)
        }
        _ => {
            let ctx = PredictorContext {
                n_assets,
                future_window: Some(out_window),
                seed: Some(derive_seed(cfg.seed, w as u64)),
                ..Default::default()
            };
            let g = build_predictor(strategy, &ctx)?;
            let (weights, _) = markowitz_from_spectrum(cov_spec, g.values(), cfg.gain)?;
            let mut sum_sq = T::zero();
            for tau in 0..cfg.t_out {
                let r = out_window.column(tau).dot(&weights);
                sum_sq += r * r;
            }
            Ok(sum_sq / t_out)
        }
    }
}

/// Per-(method, strategy) means and standard deviations across windows,
/// sorted by key for deterministic reports.
fn summarize<T: Scalar>(records: &[WindowRecord<T>]) -> Vec<SummaryRecord<T>> {
    let mut keys: Vec<(String, String)> = records
        .iter()
        .map(|r| (r.method.clone(), r.strategy.clone()))
        .collect();
    keys.sort();
    keys.dedup();

    keys.into_iter()
        .map(|(method, strategy)| {
            let cell: Vec<&WindowRecord<T>> = records
                .iter()
                .filter(|r| r.method == method && r.strategy == strategy)
                .collect();
            let count: T = cast_usize(cell.len());
            let mean_risk = cell.iter().fold(T::zero(), |a, r| a + r.risk) / count;
            let mean_vol = cell.iter().fold(T::zero(), |a, r| a + r.ann_vol) / count;
            let std_vol = if cell.len() > 1 {
                let ss = cell.iter().fold(T::zero(), |a, r| {
                    a + (r.ann_vol - mean_vol) * (r.ann_vol - mean_vol)
                });
                (ss / cast_usize::<T>(cell.len() - 1)).sqrt()
            } else {
                T::zero()
            };
            SummaryRecord {
                method,
                strategy,
                n_windows: cell.len(),
                mean_risk,
                mean_ann_vol: mean_vol,
                std_ann_vol: std_vol,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_factor_truth, sample_student, StudentConfig};
    use crate::kernels::EstimatorKind;
    use crate::preprocess::standardize;
    use crate::test_util::TestRng;
    use approx::assert_abs_diff_eq;

    fn random_psd(rng: &mut TestRng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.normal());
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    fn random_g(rng: &mut TestRng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.normal())
    }

    /// Equality-constrained QP oracle: solve the KKT system
    /// `[Σ  -g; gᵀ 0]·[w; λ] = [0; G]` directly.
    fn kkt_oracle(sigma: &DMatrix<f64>, g: &DVector<f64>, gain: f64) -> DVector<f64> {
        let n = sigma.nrows();
        let mut kkt = DMatrix::<f64>::zeros(n + 1, n + 1);
        kkt.view_mut((0, 0), (n, n)).copy_from(sigma);
        for i in 0..n {
            kkt[(i, n)] = -g[i];
            kkt[(n, i)] = g[i];
        }
        let mut rhs = DVector::<f64>::zeros(n + 1);
        rhs[n] = gain;
        let sol = kkt.lu().solve(&rhs).expect("KKT system solvable");
        sol.rows(0, n).into_owned()
    }

    #[test]
    fn uniform_predictor_on_identity_gives_equal_weights() {
        let sigma = DMatrix::<f64>::identity(5, 5);
        let g = DVector::from_element(5, 1.0);
        let sol = markowitz_weights(&sigma, &g, 1.0).unwrap();
        for &w in sol.weights.iter() {
            assert_abs_diff_eq!(w, 0.2, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(sol.condition, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hand_solved_two_asset_case() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let g = DVector::from_element(2, 1.0);
        let sol = markowitz_weights(&sigma, &g, 1.0).unwrap();
        assert_abs_diff_eq!(sol.weights[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.weights[1], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn constraint_and_kkt_oracle_agreement_on_random_instances() {
        let mut rng = TestRng::new(51);
        for _ in 0..50 {
            let n = 3 + (rng.next_u64() % 10) as usize;
            let sigma = random_psd(&mut rng, n);
            let g = random_g(&mut rng, n);
            let gain = 0.5 + rng.next_f64();
            let sol = markowitz_weights(&sigma, &g, gain).unwrap();
            assert_abs_diff_eq!(sol.weights.dot(&g), gain, epsilon = 1e-8);
            let oracle = kkt_oracle(&sigma, &g, gain);
            assert!((sol.weights - oracle).amax() < 1e-8);
        }
    }

    #[test]
    fn solution_minimizes_among_feasible_perturbations() {
        let mut rng = TestRng::new(52);
        let n = 8;
        let sigma = random_psd(&mut rng, n);
        let g = random_g(&mut rng, n);
        let sol = markowitz_weights(&sigma, &g, 1.0).unwrap();
        let base = (sigma.clone() * &sol.weights).dot(&sol.weights);
        for _ in 0..100 {
            let mut delta = random_g(&mut rng, n);
            // project onto the feasible directions deltaᵀg = 0
            let coeff = delta.dot(&g) / g.dot(&g);
            delta -= g.clone() * coeff;
            let candidate = &sol.weights + delta * 0.3;
            let value = (sigma.clone() * &candidate).dot(&candidate);
            assert!(value >= base - 1e-10);
        }
    }

    #[test]
    fn covariance_scaling_leaves_weights_unchanged() {
        let mut rng = TestRng::new(53);
        let n = 7;
        let sigma = random_psd(&mut rng, n);
        let g = random_g(&mut rng, n);
        let base = markowitz_weights(&sigma, &g, 1.0).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let scaled = markowitz_weights(&(sigma.clone() * c), &g, 1.0).unwrap();
            assert!(
                (&scaled.weights - &base.weights).amax() < 1e-12,
                "scale {c}"
            );
        }
    }

    #[test]
    fn singular_and_ill_conditioned_covariances_are_rejected() {
        let g = DVector::from_element(3, 1.0);
        let singular =
            DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            markowitz_weights(&singular, &g, 1.0),
            Err(Error::SingularCovariance { .. })
        ));
        let mut nearly = DMatrix::<f64>::identity(3, 3);
        nearly[(2, 2)] = 1e-14;
        assert!(matches!(
            markowitz_weights(&nearly, &g, 1.0),
            Err(Error::SingularCovariance { .. })
        ));
        assert!(matches!(
            markowitz_weights(&DMatrix::identity(3, 3), &DVector::zeros(3), 1.0),
            Err(Error::ZeroPredictor)
        ));
    }

    #[test]
    fn covariance_reconstruction_examples() {
        let values = DMatrix::<f64>::identity(2, 2);
        let spec = eig_sym(&values).unwrap();
        let cleaned = CleanedCorrelation::raw(values, spec);
        let sigma = DVector::from_vec(vec![2.0, 3.0]);
        let cov = reconstruct_covariance(&cleaned, &sigma);
        assert_abs_diff_eq!(cov[(0, 0)], 4.0);
        assert_abs_diff_eq!(cov[(1, 1)], 9.0);
        assert_abs_diff_eq!(cov[(0, 1)], 0.0);
        assert_abs_diff_eq!(cov.trace(), 13.0, epsilon = 1e-12);
    }

    #[test]
    fn predictor_construction() {
        let ctx = PredictorContext::<f64> {
            n_assets: 4,
            ..Default::default()
        };
        let g = build_predictor(Strategy::MinVariance, &ctx).unwrap();
        assert_eq!(g.values(), &DVector::from_element(4, 1.0));
        assert_abs_diff_eq!(g.values().norm(), 2.0, epsilon = 1e-12);

        let ctx = PredictorContext::<f64> {
            n_assets: 16,
            seed: Some(9),
            ..Default::default()
        };
        let a = build_predictor(Strategy::RandomLongShort, &ctx).unwrap();
        let b = build_predictor(Strategy::RandomLongShort, &ctx).unwrap();
        assert_eq!(a.values(), b.values());
        assert_abs_diff_eq!(a.values().norm(), 4.0, epsilon = 1e-8);

        // omniscient predictor is exactly proportional to the realized
        // window return vector
        let future = DMatrix::from_row_slice(3, 2, &[0.5, 0.5, -1.0, 0.0, 0.25, 0.25]);
        let ctx = PredictorContext::<f64> {
            n_assets: 3,
            future_window: Some(&future),
            ..Default::default()
        };
        let g = build_predictor(Strategy::Omniscient, &ctx).unwrap();
        let realized = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let cosine = g.values().dot(&realized) / (g.values().norm() * realized.norm());
        assert_abs_diff_eq!(cosine, 1.0, epsilon = 1e-12);

        // missing context errors
        assert!(matches!(
            build_predictor(
                Strategy::Omniscient,
                &PredictorContext::<f64> {
                    n_assets: 3,
                    ..Default::default()
                }
            ),
            Err(Error::MissingContext { .. })
        ));
        assert!(matches!(
            build_predictor(
                Strategy::MeanReversion,
                &PredictorContext::<f64> {
                    n_assets: 3,
                    ..Default::default()
                }
            ),
            Err(Error::MissingContext { .. })
        ));
    }

    #[test]
    fn identity_covariance_makes_weights_proportional_to_the_predictor() {
        let mut rng = TestRng::new(54);
        let n = 6;
        let g = random_g(&mut rng, n);
        let sol = markowitz_weights(&DMatrix::identity(n, n), &g, 1.0).unwrap();
        let expected = &g / g.norm_squared();
        assert!((&sol.weights - expected).amax() < 1e-12);
        // realized risk is the mean squared weighted return of the window
        let window = DMatrix::from_fn(n, 4, |_, _| rng.normal());
        let mut direct = 0.0;
        for tau in 0..4 {
            let r = sol.weights.dot(&window.column(tau).into_owned());
            direct += r * r;
        }
        direct /= 4.0;
        assert!(direct >= 0.0 && direct.is_finite());
    }

    #[test]
    fn method_parsing_round_trips() {
        for tag in [
            "pearson",
            "spearman",
            "clipped_pearson",
            "kendall",
            "gcc_identity",
            "tanh",
            "clipped",
            "rie",
            "rie_gamma",
            "rie_id",
            "icvc",
            "kendall_clipped",
            "kendall_icvc",
            "tanh_icvc",
        ] {
            let m = Method::<f64>::parse(tag).unwrap();
            assert_eq!(m.label(), tag);
        }
        assert_eq!(Method::<f64>::parse("gcc:sign").unwrap().label(), "kendall");
        assert!(matches!(
            Method::<f64>::parse("tanh:2.5").unwrap(),
            Method::Estimator(EstimatorChoice::Gcc {
                kernel: Kernel::Tanh { .. }
            })
        ));
        assert!(Method::<f64>::parse("nope").is_err());
        assert!(Method::<f64>::parse("tanh:-1").is_err());
    }

    fn oracle_backtest_panel(
        n: usize,
        t_tot: usize,
        seed: u64,
    ) -> (crate::datagen::GroundTruth<f64>, StandardizedPanel<f64>) {
        let truth = make_factor_truth::<f64>(n, 0.2, 0, 0.0).unwrap();
        let panel =
            sample_student(&truth, &StudentConfig::new(f64::INFINITY, t_tot, seed)).unwrap();
        (truth.clone(), standardize(&panel).unwrap())
    }

    #[test]
    fn window_count_follows_the_floor_formula() {
        let (truth, std_panel) = oracle_backtest_panel(4, 6300, 61);
        let mut cfg = BacktestConfig::<f64>::new(1000);
        cfg.t_out = 60;
        let methods = vec![Method::Oracle {
            corr: truth.correlation().clone(),
        }];
        let report = run_backtest(&std_panel, &cfg, &methods, &[Strategy::MinVariance]).unwrap();
        assert_eq!(report.n_windows, 88);
        assert_eq!(report.records.len(), 88);
        assert!(report.failures.is_empty());
    }

    #[test]
    fn oracle_min_variance_risk_matches_theory() {
        // independent assets with heterogeneous scales: the cross-sectional
        // volatility pass is exactly neutral for the correlation structure,
        // so the supplied truth is the correlation of the processed returns
        // and the realized risk must match the per-window model risk
        let n = 30;
        let t_in = 150;
        let t_out = 25;
        let n_target = 40;
        let t_tot = t_in + n_target * t_out + 1;
        let truth = make_factor_truth::<f64>(n, 0.0, 0, 0.0).unwrap();
        let raw = sample_student(&truth, &StudentConfig::new(f64::INFINITY, t_tot, 62)).unwrap();
        let mut scaled = raw.values().clone();
        for i in 0..n {
            let s = 0.5 + 1.5 * i as f64 / (n - 1) as f64;
            for t in 0..t_tot {
                scaled[(i, t)] *= s;
            }
        }
        let std_panel =
            standardize(&crate::panel::ReturnPanel::from_matrix(scaled).unwrap()).unwrap();
        let mut cfg = BacktestConfig::<f64>::new(t_in);
        cfg.t_out = t_out;
        let methods = vec![Method::Oracle {
            corr: truth.correlation().clone(),
        }];
        let report = run_backtest(&std_panel, &cfg, &methods, &[Strategy::MinVariance]).unwrap();
        assert_eq!(report.n_windows, n_target);
        let mean_realized = report
            .summary("oracle", Strategy::MinVariance)
            .unwrap()
            .mean_risk;

        // theoretical minimum per window: G² / (gᵀ Σ⁻¹ g) with the oracle
        // covariance of that window, averaged over windows
        let x_tilde = std_panel.vol_adjusted();
        let mut mean_theory = 0.0;
        for w in 0..n_target {
            let in_window = x_tilde.columns(w * t_out, t_in).into_owned();
            let (_, sigma_w) = standardize_rows(in_window).unwrap();
            let spec = eig_sym(truth.correlation().values()).unwrap();
            let cleaned = CleanedCorrelation::raw(truth.correlation().values().clone(), spec);
            let cov = reconstruct_covariance(&cleaned, &sigma_w);
            let g = DVector::from_element(n, 1.0);
            let sol = markowitz_weights(&cov, &g, 1.0).unwrap();
            mean_theory += (cov * &sol.weights).dot(&sol.weights);
        }
        mean_theory /= n_target as f64;
        let ratio = mean_realized / mean_theory;
        assert!(
            (ratio - 1.0).abs() < 0.10,
            "realized {mean_realized} vs theory {mean_theory} (ratio {ratio})"
        );
    }

    #[test]
    fn backtest_is_deterministic() {
        let (_, std_panel) = oracle_backtest_panel(6, 400, 63);
        let mut cfg = BacktestConfig::<f64>::new(120);
        cfg.t_out = 40;
        cfg.seed = 17;
        let methods = vec![
            Method::<f64>::parse("rie_id").unwrap(),
            Method::parse("kendall").unwrap(),
        ];
        let strategies = [
            Strategy::MinVariance,
            Strategy::RandomLongShort,
            Strategy::MeanReversion,
        ];
        let a = run_backtest(&std_panel, &cfg, &methods, &strategies).unwrap();
        let b = run_backtest(&std_panel, &cfg, &methods, &strategies).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.summaries, b.summaries);
    }

    #[test]
    fn singular_raw_pearson_is_recorded_not_fatal() {
        // q > 1: the raw sample matrix cannot be inverted, cleaned ones can
        let (_, std_panel) = oracle_backtest_panel(12, 100, 64);
        let mut cfg = BacktestConfig::<f64>::new(10);
        cfg.t_out = 20;
        cfg.params.n_folds = 5;
        let methods = vec![
            Method::<f64>::parse("pearson").unwrap(),
            Method::parse("rie_id").unwrap(),
        ];
        let report = run_backtest(&std_panel, &cfg, &methods, &[Strategy::MinVariance]).unwrap();
        assert!(!report.failures.is_empty());
        assert!(report
            .failures
            .iter()
            .all(|f| f.method == "pearson" && f.error.contains("singular")));
        let ok = report.summary("rie_id", Strategy::MinVariance).unwrap();
        assert_eq!(ok.n_windows, report.n_windows);
    }

    #[test]
    fn oracle_dimension_mismatch_is_an_estimation_failure() {
        let bad = CorrelationMatrix::new(
            DMatrix::<f64>::identity(3, 3),
            EstimatorKind::External("wrong size".into()),
        )
        .unwrap();
        let (_, std_panel) = oracle_backtest_panel(6, 200, 65);
        let cfg = BacktestConfig::<f64>::new(50);
        let report = run_backtest(
            &std_panel,
            &cfg,
            &[Method::Oracle { corr: bad }],
            &[Strategy::MinVariance],
        )
        .unwrap();
        assert_eq!(report.records.len(), 0);
        assert_eq!(report.failures.len(), report.n_windows);
    }
}
