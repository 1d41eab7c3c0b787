//! Correlation estimators: Pearson, clipped Pearson, Spearman, Kendall and
//! generic odd-kernel generalized correlation coefficients (GCCs).
//!
//! A GCC correlates kernel-transformed pairwise observation differences:
//! with T observations per series the transformed vectors live in a
//! T(T-1)/2-dimensional space, so the resulting N×N matrices only become
//! singular once N exceeds T(T-1)/2 — far later than the N > T threshold of
//! the sample Pearson matrix. The identity kernel recovers Pearson, the sign
//! kernel recovers Kendall's tau (tau-b under ties).

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::ReturnPanel;
use crate::spectral::eig_sym;
use crate::{cast, Scalar};

/// Entry tolerance for symmetry/diagonal/range checks on correlation
/// matrices.
const CORR_TOL: f64 = 1e-12;

/// Relative floor (times N) on the smallest eigenvalue in the PSD check.
const PSD_TOL: f64 = 1e-10;

/// Column block width used when materializing kernel-transformed pairwise
/// difference vectors; bounds memory at O(N·BLOCK).
const PAIR_BLOCK: usize = 4096;

/// Odd scalar kernel parameterizing a generalized correlation coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel<T: Scalar> {
    /// φ(x) = x, recovering the Pearson estimator.
    Identity,
    /// φ(x) = sign(x), recovering Kendall's tau.
    Sign,
    /// φ(x) = tanh(βx), bridging Pearson (β→0) and Kendall (β→∞).
    Tanh { beta: T },
}

impl<T: Scalar> Kernel<T> {
    /// Hyperbolic tangent kernel; `beta` must be positive.
    pub fn tanh(beta: T) -> Result<Self> {
        if beta <= T::zero() || !beta.is_finite() {
            return Err(Error::invalid(format!(
                "tanh kernel requires beta > 0, got {beta}"
            )));
        }
        Ok(Kernel::Tanh { beta })
    }

    /// Tanh kernel with β = 1, a reasonable default on standardized data.
    pub fn default_tanh() -> Self {
        Kernel::Tanh { beta: T::one() }
    }

    /// Evaluates the kernel; odd by construction.
    #[inline]
    pub fn apply(&self, x: T) -> T {
        match self {
            Kernel::Identity => x,
            Kernel::Sign => {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            }
            Kernel::Tanh { beta } => (*beta * x).tanh(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Kernel::Identity => "gcc_identity".into(),
            Kernel::Sign => "kendall".into(),
            Kernel::Tanh { .. } => "tanh".into(),
        }
    }
}

/// Provenance of a correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorKind<T: Scalar> {
    Pearson,
    Spearman,
    ClippedPearson {
        quantile: T,
    },
    Gcc {
        kernel: Kernel<T>,
    },
    /// Externally supplied (e.g. a ground truth loaded from disk).
    External(String),
}

impl<T: Scalar> EstimatorKind<T> {
    pub fn label(&self) -> String {
        match self {
            EstimatorKind::Pearson => "pearson".into(),
            EstimatorKind::Spearman => "spearman".into(),
            EstimatorKind::ClippedPearson { .. } => "clipped_pearson".into(),
            EstimatorKind::Gcc { kernel } => kernel.label(),
            EstimatorKind::External(s) => s.clone(),
        }
    }
}

/// N×N symmetric correlation matrix with unit diagonal, entries in [-1, 1]
/// and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix<T: Scalar> {
    values: DMatrix<T>,
    estimator: EstimatorKind<T>,
}

impl<T: Scalar> CorrelationMatrix<T> {
    /// Validates symmetry, unit diagonal and the [-1, 1] entry range (all
    /// within 1e-12). Positive semidefiniteness is checked separately by
    /// [`CorrelationMatrix::validate_psd`] since it requires an
    /// eigendecomposition.
    pub fn new(values: DMatrix<T>, estimator: EstimatorKind<T>) -> Result<Self> {
        let (n, m) = values.shape();
        if n != m {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m,
            });
        }
        let tol: T = cast(CORR_TOL);
        for i in 0..n {
            if (values[(i, i)] - T::one()).abs() > tol {
                return Err(Error::invalid(format!(
                    "diagonal entry {i} deviates from 1 by more than {CORR_TOL:e}"
                )));
            }
            for j in (i + 1)..n {
                if (values[(i, j)] - values[(j, i)]).abs() > tol {
                    return Err(Error::NotSymmetric {
                        max_asymmetry: (values[(i, j)] - values[(j, i)])
                            .abs()
                            .to_f64()
                            .unwrap_or(f64::NAN),
                    });
                }
                if values[(i, j)].abs() > T::one() + tol {
                    return Err(Error::invalid(format!(
                        "entry ({i}, {j}) is outside [-1, 1]"
                    )));
                }
            }
        }
        Ok(Self { values, estimator })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<T> {
        self.values
    }

    pub fn estimator(&self) -> &EstimatorKind<T> {
        &self.estimator
    }

    /// Checks the smallest eigenvalue against the `-1e-10·N` floor.
    pub fn validate_psd(&self) -> Result<()> {
        let spec = eig_sym(&self.values)?;
        let floor = -cast::<T>(PSD_TOL) * cast::<T>(self.n() as f64);
        if spec.min_eigenvalue() < floor {
            return Err(Error::NotPsd {
                min_eigenvalue: spec.min_eigenvalue().to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Pairwise estimators
// ---------------------------------------------------------------------------

/// Generalized correlation coefficient of two series under an odd kernel:
/// the kernel-transformed pairwise differences are correlated over all
/// observation pairs t < s.
pub fn gcc_pair<T: Scalar>(x: &[T], y: &[T], kernel: &Kernel<T>) -> Result<T> {
    check_pair_inputs(x, y)?;
    let n = x.len();
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for t in 0..n {
        for s in (t + 1)..n {
            let fx = kernel.apply(x[t] - x[s]);
            let fy = kernel.apply(y[t] - y[s]);
            sxy += fx * fy;
            sxx += fx * fx;
            syy += fy * fy;
        }
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::DegenerateSeries { asset: None });
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Kendall's tau in O(T log T) via sorting and merge-based inversion
/// counting, with tau-b tie corrections. Exactly equal to
/// `gcc_pair(x, y, Kernel::Sign)`.
pub fn kendall_pair_fast<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_pair_inputs(x, y)?;
    let sorted = SortedSeries::build(x);
    let y_ties = tie_pair_count_of(y);
    let mut v = Vec::new();
    let mut buf = Vec::new();
    kendall_from_sorted(&sorted, y, y_ties, &mut v, &mut buf, None, None)
}

fn check_pair_inputs<T: Scalar>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("series need at least 2 observations"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contain non-finite values"));
    }
    Ok(())
}

/// Per-series structures reused across Kendall pair evaluations: the sort
/// permutation, the ranges of tied values in sorted order and the number of
/// tied pairs.
struct SortedSeries {
    perm: Vec<u32>,
    tie_groups: Vec<(u32, u32)>,
    tie_pairs: i64,
}

impl SortedSeries {
    fn build<T: Scalar>(x: &[T]) -> Self {
        let mut perm: Vec<u32> = (0..x.len() as u32).collect();
        perm.sort_by(|&a, &b| {
            x[a as usize]
                .partial_cmp(&x[b as usize])
                .expect("finite values")
                .then(a.cmp(&b))
        });
        let mut tie_groups = Vec::new();
        let mut tie_pairs = 0i64;
        let mut start = 0usize;
        for k in 1..=perm.len() {
            if k == perm.len() || x[perm[k] as usize] != x[perm[start] as usize] {
                let len = (k - start) as i64;
                if len > 1 {
                    tie_groups.push((start as u32, k as u32));
                    tie_pairs += len * (len - 1) / 2;
                }
                start = k;
            }
        }
        Self {
            perm,
            tie_groups,
            tie_pairs,
        }
    }
}

fn tie_pair_count_of<T: Scalar>(y: &[T]) -> i64 {
    let mut sorted: Vec<T> = y.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut ties = 0i64;
    let mut run = 1i64;
    for k in 1..sorted.len() {
        if sorted[k] == sorted[k - 1] {
            run += 1;
        } else {
            ties += run * (run - 1) / 2;
            run = 1;
        }
    }
    ties + run * (run - 1) / 2
}

/// Core of the fast Kendall estimator given the first series pre-sorted.
///
/// Concordant-minus-discordant counting follows the standard identity
/// `C - D = n0 - n1 - n2 + n3 - 2·swaps` where n1/n2/n3 count pairs tied in
/// x, in y and in both, and `swaps` is the number of strict y-inversions
/// after sorting lexicographically by (x, y).
fn kendall_from_sorted<T: Scalar>(
    sorted_x: &SortedSeries,
    y: &[T],
    y_tie_pairs: i64,
    v: &mut Vec<T>,
    buf: &mut Vec<T>,
    asset_x: Option<&str>,
    asset_y: Option<&str>,
) -> Result<T> {
    let n = y.len() as i64;
    let n0 = n * (n - 1) / 2;

    v.clear();
    v.extend(sorted_x.perm.iter().map(|&k| y[k as usize]));

    // Within x-tie groups, order by y so tied-x pairs never count as
    // inversions; count pairs tied in both while scanning.
    let mut both_tied = 0i64;
    for &(start, end) in &sorted_x.tie_groups {
        let seg = &mut v[start as usize..end as usize];
        seg.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let mut run = 1i64;
        for k in 1..seg.len() {
            if seg[k] == seg[k - 1] {
                run += 1;
            } else {
                both_tied += run * (run - 1) / 2;
                run = 1;
            }
        }
        both_tied += run * (run - 1) / 2;
    }

    let swaps = count_inversions(v, buf);

    let dx = n0 - sorted_x.tie_pairs;
    let dy = n0 - y_tie_pairs;
    if dx == 0 {
        return Err(Error::DegenerateSeries {
            asset: asset_x.map(str::to_owned),
        });
    }
    if dy == 0 {
        return Err(Error::DegenerateSeries {
            asset: asset_y.map(str::to_owned),
        });
    }

    let num = n0 - sorted_x.tie_pairs - y_tie_pairs + both_tied - 2 * swaps;
    let numer: T = cast(num as f64);
    let sxx: T = cast(dx as f64);
    let syy: T = cast(dy as f64);
    Ok(numer / (sxx.sqrt() * syy.sqrt()))
}

/// Counts strict inversions (pairs k < l with v[k] > v[l]) with a bottom-up
/// merge sort; `v` is left sorted.
fn count_inversions<T: Scalar>(v: &mut [T], buf: &mut Vec<T>) -> i64 {
    let n = v.len();
    buf.clear();
    buf.resize(n, T::zero());
    let mut inversions = 0i64;
    let mut width = 1usize;
    while width < n {
        let mut lo = 0usize;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            if mid < hi {
                let (mut i, mut j, mut k) = (lo, mid, lo);
                while i < mid && j < hi {
                    if v[i] <= v[j] {
                        buf[k] = v[i];
                        i += 1;
                    } else {
                        buf[k] = v[j];
                        j += 1;
                        inversions += (mid - i) as i64;
                    }
                    k += 1;
                }
                while i < mid {
                    buf[k] = v[i];
                    i += 1;
                    k += 1;
                }
                while j < hi {
                    buf[k] = v[j];
                    j += 1;
                    k += 1;
                }
                v[lo..hi].copy_from_slice(&buf[lo..hi]);
            }
            lo = hi;
        }
        width *= 2;
    }
    inversions
}

// ---------------------------------------------------------------------------
// Matrix estimators
// ---------------------------------------------------------------------------

/// Generalized correlation matrix of all panel row pairs. The sign kernel
/// routes through the O(T log T) Kendall path; other kernels materialize the
/// kernel-transformed pairwise difference vectors in column blocks and
/// accumulate their Gram matrix.
pub fn gcc_matrix<T: Scalar>(
    panel: &ReturnPanel<T>,
    kernel: &Kernel<T>,
) -> Result<CorrelationMatrix<T>> {
    let values = match kernel {
        Kernel::Sign => kendall_values(panel.values(), Some(panel.asset_ids()))?,
        _ => gcc_gram_values(panel.values(), kernel, Some(panel.asset_ids()))?,
    };
    CorrelationMatrix::new(values, EstimatorKind::Gcc { kernel: *kernel })
}

/// Sample Pearson correlation of the panel rows.
pub fn pearson_matrix<T: Scalar>(panel: &ReturnPanel<T>) -> Result<CorrelationMatrix<T>> {
    let values = pearson_values(panel.values(), Some(panel.asset_ids()))?;
    CorrelationMatrix::new(values, EstimatorKind::Pearson)
}

/// Pearson correlation of per-row average ranks.
pub fn spearman_matrix<T: Scalar>(panel: &ReturnPanel<T>) -> Result<CorrelationMatrix<T>> {
    let x = panel.values();
    let (n, t) = x.shape();
    let mut ranks = DMatrix::<T>::zeros(n, t);
    let mut row = vec![T::zero(); t];
    for i in 0..n {
        for (s, v) in row.iter_mut().enumerate() {
            *v = x[(i, s)];
        }
        let r = average_ranks(&row);
        for s in 0..t {
            ranks[(i, s)] = r[s];
        }
    }
    let values = pearson_values(&ranks, Some(panel.asset_ids()))?;
    CorrelationMatrix::new(values, EstimatorKind::Spearman)
}

/// Pearson correlation after winsorizing each row at its empirical
/// `[1-q, q]` quantiles. `clip_quantile` must lie in (0.5, 1]; 1 disables
/// winsorization.
pub fn clipped_pearson_matrix<T: Scalar>(
    panel: &ReturnPanel<T>,
    clip_quantile: T,
) -> Result<CorrelationMatrix<T>> {
    let half: T = cast(0.5);
    if clip_quantile <= half || clip_quantile > T::one() {
        return Err(Error::invalid(format!(
            "clip quantile must lie in (0.5, 1], got {clip_quantile}"
        )));
    }
    let x = panel.values();
    let (n, t) = x.shape();
    let mut clipped = DMatrix::<T>::zeros(n, t);
    let mut row = vec![T::zero(); t];
    for i in 0..n {
        for (s, v) in row.iter_mut().enumerate() {
            *v = x[(i, s)];
        }
        let mut sorted = row.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let lo = quantile_type7(&sorted, T::one() - clip_quantile);
        let hi = quantile_type7(&sorted, clip_quantile);
        for s in 0..t {
            clipped[(i, s)] = row[s].max(lo).min(hi);
        }
    }
    let values = pearson_values(&clipped, Some(panel.asset_ids()))?;
    CorrelationMatrix::new(
        values,
        EstimatorKind::ClippedPearson {
            quantile: clip_quantile,
        },
    )
}

/// Matrix-level Pearson used internally by the fold machinery and the
/// backtest engine.
pub(crate) fn pearson_values<T: Scalar>(
    x: &DMatrix<T>,
    asset_ids: Option<&[String]>,
) -> Result<DMatrix<T>> {
    let (n, t) = x.shape();
    let tf: T = cast(t as f64);
    let mut centered = x.clone();
    for i in 0..n {
        let mean = centered.row(i).iter().fold(T::zero(), |a, &v| a + v) / tf;
        let mut norm_sq = T::zero();
        for s in 0..t {
            let v = centered[(i, s)] - mean;
            centered[(i, s)] = v;
            norm_sq += v * v;
        }
        if norm_sq == T::zero() {
            return Err(degenerate(i, asset_ids));
        }
        let inv_norm = T::one() / norm_sq.sqrt();
        for s in 0..t {
            centered[(i, s)] *= inv_norm;
        }
    }
    let mut g = &centered * centered.transpose();
    symmetrize_with_unit_diagonal(&mut g);
    Ok(g)
}

pub(crate) fn kendall_values<T: Scalar>(
    x: &DMatrix<T>,
    asset_ids: Option<&[String]>,
) -> Result<DMatrix<T>> {
    let (n, _) = x.shape();
    let rows: Vec<Vec<T>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let sorted: Vec<SortedSeries> = rows.par_iter().map(|r| SortedSeries::build(r)).collect();
    let tie_pairs: Vec<i64> = rows.iter().map(|r| tie_pair_count_of(r)).collect();

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let cells: Vec<Result<T>> = pairs
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(v, buf), &(i, j)| {
                kendall_from_sorted(
                    &sorted[i],
                    &rows[j],
                    tie_pairs[j],
                    v,
                    buf,
                    asset_ids.map(|ids| ids[i].as_str()),
                    asset_ids.map(|ids| ids[j].as_str()),
                )
            },
        )
        .collect();

    let mut g = DMatrix::<T>::identity(n, n);
    for (&(i, j), cell) in pairs.iter().zip(cells) {
        let c = cell?;
        g[(i, j)] = c;
        g[(j, i)] = c;
    }
    Ok(g)
}

pub(crate) fn gcc_gram_values<T: Scalar>(
    x: &DMatrix<T>,
    kernel: &Kernel<T>,
    asset_ids: Option<&[String]>,
) -> Result<DMatrix<T>> {
    let (n, t) = x.shape();
    let n_pairs = t * (t - 1) / 2;
    let block = PAIR_BLOCK.min(n_pairs);
    // phit holds kernel-transformed differences for a block of observation
    // pairs, laid out pairs×assets so the Gram update is a single gemm_tr.
    let mut phit = DMatrix::<T>::zeros(block, n);
    let mut g = DMatrix::<T>::zeros(n, n);
    let mut fill = 0usize;
    for s in 0..t {
        for u in (s + 1)..t {
            for i in 0..n {
                phit[(fill, i)] = kernel.apply(x[(i, s)] - x[(i, u)]);
            }
            fill += 1;
            if fill == block {
                g.gemm_tr(T::one(), &phit, &phit, T::one());
                fill = 0;
            }
        }
    }
    if fill > 0 {
        let part = phit.rows(0, fill);
        g.gemm_tr(T::one(), &part, &part, T::one());
    }

    let mut inv_norms = vec![T::zero(); n];
    for i in 0..n {
        if g[(i, i)] == T::zero() {
            return Err(degenerate(i, asset_ids));
        }
        inv_norms[i] = T::one() / g[(i, i)].sqrt();
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let c = g[(i, j)] * inv_norms[i] * inv_norms[j];
            g[(i, j)] = c;
            g[(j, i)] = c;
        }
        g[(i, i)] = T::one();
    }
    Ok(g)
}

fn degenerate(i: usize, asset_ids: Option<&[String]>) -> Error {
    Error::DegenerateSeries {
        asset: Some(
            asset_ids
                .map(|ids| ids[i].clone())
                .unwrap_or_else(|| format!("row {i}")),
        ),
    }
}

/// Forces exact symmetry by mirroring the upper triangle and pins the
/// diagonal to 1.
fn symmetrize_with_unit_diagonal<T: Scalar>(g: &mut DMatrix<T>) {
    let n = g.nrows();
    for i in 0..n {
        g[(i, i)] = T::one();
        for j in (i + 1)..n {
            let c = g[(i, j)];
            g[(j, i)] = c;
        }
    }
}

/// Average ranks (1-based) with ties sharing their mid-rank.
pub(crate) fn average_ranks<T: Scalar>(row: &[T]) -> Vec<T> {
    let n = row.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); n];
    let mut start = 0usize;
    for k in 1..=n {
        if k == n || row[idx[k]] != row[idx[start]] {
            // 1-based mid-rank of positions start..k
            let mid: T = cast((start + k + 1) as f64 / 2.0);
            for &pos in &idx[start..k] {
                ranks[pos] = mid;
            }
            start = k;
        }
    }
    ranks
}

/// Linear-interpolation empirical quantile on a pre-sorted slice.
pub(crate) fn quantile_type7<T: Scalar>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    debug_assert!(n > 0);
    let h = p * cast::<T>((n - 1) as f64);
    let lo = h.floor();
    let lo_idx = lo.to_usize().unwrap_or(0).min(n - 1);
    let frac = h - lo;
    if lo_idx + 1 >= n || frac == T::zero() {
        sorted[lo_idx]
    } else {
        sorted[lo_idx] + frac * (sorted[lo_idx + 1] - sorted[lo_idx])
    }
}
