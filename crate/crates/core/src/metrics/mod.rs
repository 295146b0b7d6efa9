//! Sample-quality metrics.
//!
//! Distances between empirical sample sets (transport, kernel, histogram)
//! plus the cost-quality front machinery used to compare samplers under a
//! shared evaluation budget. Every function here is pure: the only target
//! evaluations are the negative-log-density computations for the energy
//! metrics, billed to whatever handle the caller passes. Pass a
//! [`Target::fork`] when measurement must stay off a sampler's ledger.

pub mod assignment;
pub mod pareto;

pub use pareto::{
    bootstrap_front, front_value_at, hypervolume_ratios, pareto_front, BandedFront,
};

use crate::math::{median, squared_distance};
use crate::rng::derive_rng;
use crate::scalar::Scalar;
use crate::targets::Target;
use assignment::{min_cost_assignment, CostMatrix};
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Largest per-set size fed to the exact assignment solver; bigger sets are
/// thinned to this by a deterministic seeded subsample.
pub const MAX_EXACT_COUPLING: usize = 2048;

/// Largest pooled sample used for the median-bandwidth heuristic.
const MAX_BANDWIDTH_SAMPLE: usize = 1024;

/// Fixed seed for the internal subsampling draws, so repeated metric calls
/// on the same inputs agree exactly.
const SUBSAMPLE_SEED: u64 = 0x6d65_7472;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("sample dimensions differ: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("sample set must not be empty")]
    EmptySet,
    #[error("rows must share one positive dimension")]
    RaggedRows,
    #[error("non-finite entry in row {row}")]
    NonFiniteSample { row: usize },
    #[error("weights must be finite, non-negative, with positive sum")]
    InvalidWeights,
    #[error("{op} needs at least {need} samples per set, got {got}")]
    TooFewSamples {
        op: &'static str,
        need: usize,
        got: usize,
    },
    #[error("{op} is defined for unweighted sample sets")]
    WeightedUnsupported { op: &'static str },
    #[error("alignment needs coordinates in triples, got dimension {0}")]
    TripleDimensionRequired(usize),
    #[error("histogram needs at least 2 bins, got {0}")]
    BinsTooFew(usize),
    #[error("truth expectation is zero, relative error undefined")]
    ZeroTruthExpectation,
}

/// Empirical sample set: `n` points of a shared dimension, an optional
/// weight simplex, and a provenance tag naming the run that produced it.
#[derive(Debug, Clone)]
pub struct SampleSet<S> {
    points: Vec<Vec<S>>,
    weights: Option<Vec<S>>,
    provenance: String,
}

impl<S: Scalar> SampleSet<S> {
    /// Unweighted set. Rows must be non-empty, equal-length, and finite.
    pub fn from_rows(
        points: Vec<Vec<S>>,
        provenance: impl Into<String>,
    ) -> Result<Self, MetricsError> {
        let set = SampleSet {
            points,
            weights: None,
            provenance: provenance.into(),
        };
        set.validate_points()?;
        Ok(set)
    }

    /// Weighted set. Weights are normalized to sum to one.
    pub fn with_weights(
        points: Vec<Vec<S>>,
        weights: Vec<S>,
        provenance: impl Into<String>,
    ) -> Result<Self, MetricsError> {
        if weights.len() != points.len() {
            return Err(MetricsError::InvalidWeights);
        }
        if !weights.iter().all(|w| w.is_finite() && *w >= S::zero()) {
            return Err(MetricsError::InvalidWeights);
        }
        let total: S = weights.iter().cloned().sum();
        if !(total > S::zero()) {
            return Err(MetricsError::InvalidWeights);
        }
        let mut set = SampleSet {
            points,
            weights: Some(weights.into_iter().map(|w| w / total).collect()),
            provenance: provenance.into(),
        };
        set.validate_points()?;
        // renormalize defensively? no: the division above already sums to 1
        // within rounding, which is all downstream code assumes
        if let Some(w) = &mut set.weights {
            debug_assert!((w.iter().cloned().sum::<S>() - S::one()).abs() < S::lit(1e-9));
        }
        Ok(set)
    }

    fn validate_points(&self) -> Result<(), MetricsError> {
        if self.points.is_empty() {
            return Err(MetricsError::EmptySet);
        }
        let dim = self.points[0].len();
        if dim == 0 {
            return Err(MetricsError::RaggedRows);
        }
        for (row, p) in self.points.iter().enumerate() {
            if p.len() != dim {
                return Err(MetricsError::RaggedRows);
            }
            if !p.iter().all(|x| x.is_finite()) {
                return Err(MetricsError::NonFiniteSample { row });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, i: usize) -> &[S] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<S>] {
        &self.points
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    /// Weight of point `i`, uniform when the set is unweighted.
    pub fn weight(&self, i: usize) -> S {
        match &self.weights {
            Some(w) => w[i],
            None => S::one() / S::from_usize_exact(self.n()),
        }
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }
}

/// Negative log-density of every point, billed to `target`'s ledger.
pub fn negative_log_densities<S: Scalar>(target: &Target<S>, set: &SampleSet<S>) -> Vec<S> {
    set.points().iter().map(|x| -target.log_density(x)).collect()
}

fn require_same_dim<S: Scalar>(a: &SampleSet<S>, b: &SampleSet<S>) -> Result<(), MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::DimensionMismatch {
            a: a.dim(),
            b: b.dim(),
        });
    }
    Ok(())
}

fn require_unweighted<S: Scalar>(
    op: &'static str,
    a: &SampleSet<S>,
    b: &SampleSet<S>,
) -> Result<(), MetricsError> {
    if a.is_weighted() || b.is_weighted() {
        return Err(MetricsError::WeightedUnsupported { op });
    }
    Ok(())
}

/// `n` distinct row indices out of `len`, sorted. Deterministic: the draw
/// depends only on `(side, len, n)`.
fn coupling_indices(len: usize, n: usize, side: u64) -> Vec<usize> {
    if len == n {
        return (0..n).collect();
    }
    let mut rng = derive_rng(SUBSAMPLE_SEED, &[side, len as u64, n as u64]);
    let mut idx = rand::seq::index::sample(&mut rng, len, n).into_vec();
    idx.sort_unstable();
    idx
}

/// Exact 2-Wasserstein distance between two empirical measures.
///
/// Solves the optimal assignment on the squared-distance cost matrix and
/// returns the root mean squared matched distance. Both sets are thinned to
/// the smaller size (and to [`MAX_EXACT_COUPLING`]) by a fixed-seed
/// subsample, so the result is deterministic. With `align`, each pairwise
/// distance is computed after optimal rigid superposition of the two
/// configurations, which treats points as particle coordinate triples.
pub fn wasserstein2<S: Scalar>(
    a: &SampleSet<S>,
    b: &SampleSet<S>,
    align: bool,
) -> Result<S, MetricsError> {
    require_same_dim(a, b)?;
    require_unweighted("wasserstein2", a, b)?;
    if align && a.dim() % 3 != 0 {
        return Err(MetricsError::TripleDimensionRequired(a.dim()));
    }
    let n = a.n().min(b.n()).min(MAX_EXACT_COUPLING);
    let ia = coupling_indices(a.n(), n, 0);
    let ib = coupling_indices(b.n(), n, 1);
    let rows_a: Vec<Vec<f64>> = ia.iter().map(|&i| row_f64(a.point(i))).collect();
    let rows_b: Vec<Vec<f64>> = ib.iter().map(|&j| row_f64(b.point(j))).collect();
    let mut cost = CostMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let d2 = if align {
                kabsch_ssd(&rows_a[i], &rows_b[j])
            } else {
                squared_distance(&rows_a[i], &rows_b[j])
            };
            cost.set(i, j, d2);
        }
    }
    let total = min_cost_assignment(&cost).total;
    Ok(S::lit((total / n as f64).sqrt()))
}

fn row_f64<S: Scalar>(x: &[S]) -> Vec<f64> {
    x.iter().map(|v| v.to_f64_lossy()).collect()
}

/// Minimal Euclidean distance `min ‖Rx + t − y‖` over proper rotations
/// `R ∈ SO(3)` and translations, for particle configurations flattened as
/// coordinate triples. Mirror images of chiral configurations stay at
/// strictly positive distance because reflections are excluded.
pub fn kabsch_distance<S: Scalar>(x: &[S], y: &[S]) -> Result<S, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::DimensionMismatch {
            a: x.len(),
            b: y.len(),
        });
    }
    if x.is_empty() || x.len() % 3 != 0 {
        return Err(MetricsError::TripleDimensionRequired(x.len()));
    }
    Ok(S::lit(kabsch_ssd(&row_f64(x), &row_f64(y)).sqrt()))
}

/// Squared residual after optimal superposition, in `f64` (3x3 SVD).
fn kabsch_ssd(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() / 3;
    let inv_n = 1.0 / n as f64;
    let mut cx = Vector3::zeros();
    let mut cy = Vector3::zeros();
    for i in 0..n {
        cx += Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
        cy += Vector3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2]);
    }
    cx *= inv_n;
    cy *= inv_n;
    let mut h = Matrix3::zeros();
    let mut norm2 = 0.0;
    for i in 0..n {
        let p = Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]) - cx;
        let q = Vector3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2]) - cy;
        h += p * q.transpose();
        norm2 += p.norm_squared() + q.norm_squared();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("3x3 svd with u");
    let v_t = svd.v_t.expect("3x3 svd with v_t");
    // restrict to proper rotations: flip the smallest singular direction
    // when det(V Uᵀ) < 0
    let d = (v_t.transpose() * u.transpose()).determinant().signum();
    let s = svd.singular_values;
    let best_trace = s[0] + s[1] + d * s[2];
    (norm2 - 2.0 * best_trace).max(0.0)
}

/// Unbiased squared maximum mean discrepancy between the two sets'
/// negative-log-density values, Gaussian kernel with the median-pairwise-
/// distance bandwidth on the pooled values.
///
/// All three estimator terms exclude the diagonal when the sets have equal
/// size, so identical same-order sets give exactly zero; the estimate can
/// be slightly negative on nearby sets. Density evaluations are billed to
/// `target`, so pass a measurement fork when budget accounting matters.
pub fn mmd_energy<S: Scalar>(
    a: &SampleSet<S>,
    b: &SampleSet<S>,
    target: &Target<S>,
) -> Result<S, MetricsError> {
    require_same_dim(a, b)?;
    require_unweighted("mmd_energy", a, b)?;
    let (n, m) = (a.n(), b.n());
    for &size in &[n, m] {
        if size < 2 {
            return Err(MetricsError::TooFewSamples {
                op: "mmd_energy",
                need: 2,
                got: size,
            });
        }
    }
    let ea = negative_log_densities(target, a);
    let eb = negative_log_densities(target, b);
    let gamma = median_bandwidth(&ea, &eb);
    let k = |u: S, v: S| (-(u - v) * (u - v) / (S::lit(2.0) * gamma * gamma)).exp();
    let mut within_a = S::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                within_a += k(ea[i], ea[j]);
            }
        }
    }
    within_a /= S::from_usize_exact(n) * S::from_usize_exact(n - 1);
    let mut within_b = S::zero();
    for i in 0..m {
        for j in 0..m {
            if i != j {
                within_b += k(eb[i], eb[j]);
            }
        }
    }
    within_b /= S::from_usize_exact(m) * S::from_usize_exact(m - 1);
    let cross = if n == m {
        let mut acc = S::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += k(ea[i], eb[j]);
                }
            }
        }
        acc / (S::from_usize_exact(n) * S::from_usize_exact(n - 1))
    } else {
        let mut acc = S::zero();
        for &u in &ea {
            for &v in &eb {
                acc += k(u, v);
            }
        }
        acc / (S::from_usize_exact(n) * S::from_usize_exact(m))
    };
    Ok(within_a + within_b - S::lit(2.0) * cross)
}

/// Median pairwise distance over the pooled values, computed on a
/// deterministic subsample of at most [`MAX_BANDWIDTH_SAMPLE`] values.
/// Falls back to 1 when every value coincides.
fn median_bandwidth<S: Scalar>(ea: &[S], eb: &[S]) -> S {
    let pooled: Vec<S> = ea.iter().chain(eb.iter()).copied().collect();
    let kept: Vec<S> = if pooled.len() > MAX_BANDWIDTH_SAMPLE {
        coupling_indices(pooled.len(), MAX_BANDWIDTH_SAMPLE, 2)
            .into_iter()
            .map(|i| pooled[i])
            .collect()
    } else {
        pooled
    };
    let mut dists = Vec::with_capacity(kept.len() * (kept.len() - 1) / 2);
    for i in 0..kept.len() {
        for j in (i + 1)..kept.len() {
            dists.push((kept[i] - kept[j]).abs());
        }
    }
    let med = median(&dists);
    if med > S::zero() {
        med
    } else {
        S::one()
    }
}

/// Half the L1 distance between normalized histograms of the two sets'
/// negative log-densities, binned uniformly over the pooled value range.
/// Always in `[0, 1]`; weighted sets contribute their weights as counts.
/// Density evaluations are billed to `target`.
pub fn tv_histogram<S: Scalar>(
    a: &SampleSet<S>,
    b: &SampleSet<S>,
    target: &Target<S>,
    bins: usize,
) -> Result<S, MetricsError> {
    require_same_dim(a, b)?;
    if bins < 2 {
        return Err(MetricsError::BinsTooFew(bins));
    }
    let ea = negative_log_densities(target, a);
    let eb = negative_log_densities(target, b);
    let mut lo = S::infinity();
    let mut hi = S::neg_infinity();
    for &v in ea.iter().chain(eb.iter()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let hist = |values: &[S], set: &SampleSet<S>| -> Vec<S> {
        let mut h = vec![S::zero(); bins];
        for (i, &v) in values.iter().enumerate() {
            let slot = if hi > lo {
                let frac = (v - lo) / (hi - lo);
                ((frac * S::from_usize_exact(bins)).to_f64_lossy() as usize).min(bins - 1)
            } else {
                0
            };
            h[slot] += set.weight(i);
        }
        h
    };
    let ha = hist(&ea, a);
    let hb = hist(&eb, b);
    let l1: S = ha
        .iter()
        .zip(hb.iter())
        .map(|(&p, &q)| (p - q).abs())
        .sum();
    Ok(S::lit(0.5) * l1)
}

/// Relative error of a sample-mean observable against a ground-truth set:
/// `|E_a[f] − E_truth[f]| / |E_truth[f]|`. Weighted sets use their weighted
/// mean.
pub fn relative_mae<S: Scalar>(
    a: &SampleSet<S>,
    truth: &SampleSet<S>,
    observable: impl Fn(&[S]) -> S,
) -> Result<S, MetricsError> {
    require_same_dim(a, truth)?;
    let mean_of = |set: &SampleSet<S>| -> S {
        (0..set.n())
            .map(|i| set.weight(i) * observable(set.point(i)))
            .sum()
    };
    let truth_mean = mean_of(truth);
    if truth_mean == S::zero() {
        return Err(MetricsError::ZeroTruthExpectation);
    }
    Ok(((mean_of(a) - truth_mean) / truth_mean).abs())
}

/// [`relative_mae`] with the quadratic observable `f(x) = ‖x‖²`.
pub fn relative_mae_quadratic<S: Scalar>(
    a: &SampleSet<S>,
    truth: &SampleSet<S>,
) -> Result<S, MetricsError> {
    relative_mae(a, truth, |x| crate::math::squared_norm(x))
}
