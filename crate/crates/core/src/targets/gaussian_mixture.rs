//! Gaussian mixture densities with exact sampling.
//!
//! Mixtures here are normalized (weights sum to one, components carry their
//! normalizing constants), so quadrature and normalization checks can treat
//! the log-density as exact rather than up-to-a-constant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Eval, TargetError, UnnormalizedDensity};
use crate::math::log_sum_exp;
use crate::scalar::Scalar;

/// Per-component covariance. `Full` keeps the Cholesky factor for sampling
/// and the precision matrix for scores, both fixed at construction.
#[derive(Debug, Clone)]
pub enum Covariance<S> {
    /// Isotropic, stores the variance.
    Spherical(S),
    /// Axis-aligned, stores per-coordinate variances.
    Diagonal(Vec<S>),
    Full {
        /// Lower Cholesky factor of the covariance, row-major.
        chol: Vec<S>,
        /// Inverse covariance, row-major.
        precision: Vec<S>,
        log_det: S,
    },
}

impl<S: Scalar> Covariance<S> {
    /// Build a full covariance from a row-major symmetric matrix.
    pub fn full(matrix: &[S], dim: usize) -> Result<Self, TargetError> {
        if matrix.len() != dim * dim {
            return Err(TargetError::DimensionMismatch {
                expected: dim * dim,
                got: matrix.len(),
            });
        }
        let m = nalgebra::DMatrix::from_fn(dim, dim, |r, c| matrix[r * dim + c].to_f64_lossy());
        let asym = (&m - m.transpose()).abs().max();
        if asym > 1e-10 * (1.0 + m.abs().max()) {
            return Err(TargetError::NotPositiveDefinite);
        }
        let chol = m
            .clone()
            .cholesky()
            .ok_or(TargetError::NotPositiveDefinite)?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let precision = chol.inverse();
        let lift = |mat: &nalgebra::DMatrix<f64>| -> Vec<S> {
            (0..dim)
                .flat_map(|r| (0..dim).map(move |c| (r, c)))
                .map(|(r, c)| S::lit(mat[(r, c)]))
                .collect()
        };
        Ok(Covariance::Full {
            chol: lift(&chol.l().clone_owned()),
            precision: lift(&precision),
            log_det: S::lit(log_det),
        })
    }

    fn validate(&self, dim: usize) -> Result<(), TargetError> {
        match self {
            Covariance::Spherical(v) => {
                if *v <= S::zero() || !v.is_finite() {
                    return Err(TargetError::NotPositiveDefinite);
                }
            }
            Covariance::Diagonal(vs) => {
                if vs.len() != dim {
                    return Err(TargetError::DimensionMismatch {
                        expected: dim,
                        got: vs.len(),
                    });
                }
                if vs.iter().any(|v| *v <= S::zero() || !v.is_finite()) {
                    return Err(TargetError::NotPositiveDefinite);
                }
            }
            Covariance::Full { precision, .. } => {
                if precision.len() != dim * dim {
                    return Err(TargetError::DimensionMismatch {
                        expected: dim * dim,
                        got: precision.len(),
                    });
                }
            }
        }
        Ok(())
    }

    fn log_det(&self, dim: usize) -> S {
        match self {
            Covariance::Spherical(v) => S::from_usize_exact(dim) * v.ln(),
            Covariance::Diagonal(vs) => vs.iter().map(|v| v.ln()).sum(),
            Covariance::Full { log_det, .. } => *log_det,
        }
    }

    /// `precision * d` for a residual `d = x - mu`.
    fn apply_precision(&self, d: &[S]) -> Vec<S> {
        match self {
            Covariance::Spherical(v) => d.iter().map(|&di| di / *v).collect(),
            Covariance::Diagonal(vs) => d.iter().zip(vs).map(|(&di, &vi)| di / vi).collect(),
            Covariance::Full { precision, .. } => {
                let n = d.len();
                (0..n)
                    .map(|r| {
                        (0..n)
                            .map(|c| precision[r * n + c] * d[c])
                            .sum()
                    })
                    .collect()
            }
        }
    }

    /// `mu + L * xi` where `L L^T` is the covariance.
    fn push_noise(&self, mu: &[S], xi: &[S]) -> Vec<S> {
        match self {
            Covariance::Spherical(v) => {
                let s = v.sqrt();
                mu.iter().zip(xi).map(|(&m, &z)| m + s * z).collect()
            }
            Covariance::Diagonal(vs) => mu
                .iter()
                .zip(xi)
                .zip(vs)
                .map(|((&m, &z), &v)| m + v.sqrt() * z)
                .collect(),
            Covariance::Full { chol, .. } => {
                let n = mu.len();
                (0..n)
                    .map(|r| {
                        mu[r]
                            + (0..=r)
                                .map(|c| chol[r * n + c] * xi[c])
                                .sum::<S>()
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianMixture<S> {
    means: Vec<Vec<S>>,
    covariances: Vec<Covariance<S>>,
    log_weights: Vec<S>,
    weights: Vec<S>,
    dim: usize,
}

impl<S: Scalar> GaussianMixture<S> {
    pub fn new(
        means: Vec<Vec<S>>,
        covariances: Vec<Covariance<S>>,
        weights: Vec<S>,
    ) -> Result<Self, TargetError> {
        let k = means.len();
        if k == 0 || covariances.len() != k || weights.len() != k {
            return Err(TargetError::EmptyMixture);
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(TargetError::EmptyMixture);
        }
        for m in &means {
            if m.len() != dim {
                return Err(TargetError::DimensionMismatch {
                    expected: dim,
                    got: m.len(),
                });
            }
        }
        for c in &covariances {
            c.validate(dim)?;
        }
        if weights.iter().any(|w| *w <= S::zero() || !w.is_finite()) {
            return Err(TargetError::InvalidWeights);
        }
        let total: S = weights.iter().cloned().sum();
        if (total - S::one()).abs() > S::lit(1e-9) {
            return Err(TargetError::InvalidWeights);
        }
        let weights: Vec<S> = weights.iter().map(|&w| w / total).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(GaussianMixture {
            means,
            covariances,
            log_weights,
            weights,
            dim,
        })
    }

    /// Equal-weight unit-variance components at the given means.
    pub fn isotropic(means: Vec<Vec<S>>) -> Result<Self, TargetError> {
        let k = means.len();
        let covs = vec![Covariance::Spherical(S::one()); k];
        let w = S::one() / S::from_usize_exact(k.max(1));
        GaussianMixture::new(means, covs, vec![w; k])
    }

    pub fn n_components(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[Vec<S>] {
        &self.means
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// Exact ancestral sample: component by weight, then its Gaussian.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<S> {
        let u = S::unit_uniform(rng);
        let mut acc = S::zero();
        let mut k = self.means.len() - 1;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let xi: Vec<S> = (0..self.dim).map(|_| S::std_normal(rng)).collect();
        self.covariances[k].push_noise(&self.means[k], &xi)
    }

    fn component_log_density(&self, k: usize, x: &[S]) -> (S, Vec<S>) {
        let d: Vec<S> = x
            .iter()
            .zip(&self.means[k])
            .map(|(&xi, &mi)| xi - mi)
            .collect();
        let pd = self.covariances[k].apply_precision(&d);
        let quad: S = d.iter().zip(&pd).map(|(&a, &b)| a * b).sum();
        let half = S::lit(0.5);
        let log_norm = half
            * (S::from_usize_exact(self.dim) * S::lit(std::f64::consts::TAU).ln()
                + self.covariances[k].log_det(self.dim));
        (-log_norm - half * quad, pd)
    }

    pub fn to_layout(&self) -> GaussianMixtureLayout {
        GaussianMixtureLayout {
            means: self
                .means
                .iter()
                .map(|m| m.iter().map(|v| v.to_f64_lossy()).collect())
                .collect(),
            covariances: self
                .covariances
                .iter()
                .map(|c| match c {
                    Covariance::Spherical(v) => CovarianceLayout::Spherical(v.to_f64_lossy()),
                    Covariance::Diagonal(vs) => {
                        CovarianceLayout::Diagonal(vs.iter().map(|v| v.to_f64_lossy()).collect())
                    }
                    Covariance::Full { chol, .. } => {
                        let n = self.dim;
                        let mut cov = vec![vec![0.0; n]; n];
                        for (r, row) in cov.iter_mut().enumerate() {
                            for (c, entry) in row.iter_mut().enumerate() {
                                *entry = (0..n)
                                    .map(|k| {
                                        chol[r * n + k].to_f64_lossy()
                                            * chol[c * n + k].to_f64_lossy()
                                    })
                                    .sum();
                            }
                        }
                        CovarianceLayout::Full(cov)
                    }
                })
                .collect(),
            weights: self.weights.iter().map(|w| w.to_f64_lossy()).collect(),
        }
    }

    pub fn from_layout(layout: &GaussianMixtureLayout) -> Result<Self, TargetError> {
        let dim = layout.means.first().map_or(0, |m| m.len());
        let means = layout
            .means
            .iter()
            .map(|m| m.iter().map(|&v| S::lit(v)).collect())
            .collect();
        let covariances = layout
            .covariances
            .iter()
            .map(|c| match c {
                CovarianceLayout::Spherical(v) => Ok(Covariance::Spherical(S::lit(*v))),
                CovarianceLayout::Diagonal(vs) => Ok(Covariance::Diagonal(
                    vs.iter().map(|&v| S::lit(v)).collect(),
                )),
                CovarianceLayout::Full(rows) => {
                    let flat: Vec<S> = rows
                        .iter()
                        .flat_map(|r| r.iter().map(|&v| S::lit(v)))
                        .collect();
                    Covariance::full(&flat, dim)
                }
            })
            .collect::<Result<_, _>>()?;
        let weights = layout.weights.iter().map(|&w| S::lit(w)).collect();
        GaussianMixture::new(means, covariances, weights)
    }
}

impl<S: Scalar> UnnormalizedDensity<S> for GaussianMixture<S> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[S]) -> Eval<S> {
        let k = self.means.len();
        let mut terms = Vec::with_capacity(k);
        let mut pulls = Vec::with_capacity(k);
        for i in 0..k {
            let (lp, pd) = self.component_log_density(i, x);
            terms.push(self.log_weights[i] + lp);
            pulls.push(pd);
        }
        let log_density = log_sum_exp(&terms);
        let mut score = vec![S::zero(); self.dim];
        for i in 0..k {
            let resp = (terms[i] - log_density).exp();
            for (s, &p) in score.iter_mut().zip(&pulls[i]) {
                // precision * (x - mu) enters the score negated
                *s -= resp * p;
            }
        }
        Eval { log_density, score }
    }

    fn log_density(&self, x: &[S]) -> S {
        let terms: Vec<S> = (0..self.means.len())
            .map(|i| self.log_weights[i] + self.component_log_density(i, x).0)
            .collect();
        log_sum_exp(&terms)
    }
}

/// Plain-`f64` serialization mirror, so layouts round-trip through JSON
/// independent of the scalar the mixture is instantiated at.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GaussianMixtureLayout {
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<CovarianceLayout>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", content = "value")]
pub enum CovarianceLayout {
    Spherical(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use approx::assert_relative_eq;

    fn two_wells() -> GaussianMixture<f64> {
        GaussianMixture::isotropic(vec![vec![-2.0], vec![2.0]]).unwrap()
    }

    #[test]
    fn single_component_is_the_gaussian_logpdf() {
        let g = GaussianMixture::isotropic(vec![vec![0.0]]).unwrap();
        // scipy: multivariate_normal([0],[[1]]).logpdf([0.3])
        assert_relative_eq!(
            g.log_density(&[0.3]),
            -0.9639385332046727,
            max_relative = 1e-14
        );
        assert_relative_eq!(g.eval(&[0.3]).score[0], -0.3, max_relative = 1e-14);
    }

    #[test]
    fn two_component_values_match_frozen_oracle() {
        // scipy logsumexp + responsibility oracle, frozen:
        //   x=0: logp=-2.9189385332046727, score=0
        //   x=1: logp=-2.093935785846808, score=0.9280551601516337
        let g = two_wells();
        let at0 = g.eval(&[0.0]);
        assert_relative_eq!(at0.log_density, -2.9189385332046727, max_relative = 1e-14);
        assert_relative_eq!(at0.score[0], 0.0, epsilon = 1e-14);
        let at1 = g.eval(&[1.0]);
        assert_relative_eq!(at1.log_density, -2.093935785846808, max_relative = 1e-14);
        assert_relative_eq!(at1.score[0], 0.9280551601516337, max_relative = 1e-13);
    }

    #[test]
    fn diagonal_three_component_matches_frozen_oracle() {
        // scipy oracle at x=(0.3, 0.7), frozen:
        //   logp=-4.199174902318124, score=(0.03443282984418828, -0.609320139813453)
        let g = GaussianMixture::new(
            vec![vec![1.0, -1.0], vec![-2.0, 0.5], vec![0.0, 3.0]],
            vec![
                Covariance::Diagonal(vec![0.5, 2.0]),
                Covariance::Diagonal(vec![1.0, 1.0]),
                Covariance::Diagonal(vec![4.0, 0.25]),
            ],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let e = g.eval(&[0.3, 0.7]);
        assert_relative_eq!(e.log_density, -4.199174902318124, max_relative = 1e-14);
        assert_relative_eq!(e.score[0], 0.03443282984418828, max_relative = 1e-12);
        assert_relative_eq!(e.score[1], -0.609320139813453, max_relative = 1e-12);
    }

    #[test]
    fn full_covariance_matches_frozen_oracle() {
        // scipy oracle: mean (0.5,-0.25), cov [[2,.6],[.6,1]], x=(-0.8,0.4)
        let cov = Covariance::full(&[2.0, 0.6, 0.6, 1.0], 2).unwrap();
        let g = GaussianMixture::new(vec![vec![0.5, -0.25]], vec![cov], vec![1.0]).unwrap();
        let e = g.eval(&[-0.8, 0.4]);
        assert_relative_eq!(e.log_density, -3.1672373824493505, max_relative = 1e-13);
        assert_relative_eq!(e.score[0], 1.0304878048780488, max_relative = 1e-12);
        assert_relative_eq!(e.score[1], -1.2682926829268293, max_relative = 1e-12);
    }

    #[test]
    fn score_matches_central_differences() {
        let g = GaussianMixture::new(
            vec![vec![1.0, -1.0], vec![-2.0, 0.5]],
            vec![
                Covariance::Diagonal(vec![0.5, 2.0]),
                Covariance::Spherical(1.5),
            ],
            vec![0.4, 0.6],
        )
        .unwrap();
        let h = 1e-5;
        let mut rng = derive_rng(11, &[0]);
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| 4.0 * f64::std_normal(&mut rng)).collect();
            let score = g.eval(&x).score;
            for d in 0..2 {
                let mut lo = x.clone();
                let mut hi = x.clone();
                lo[d] -= h;
                hi[d] += h;
                let fd = (g.log_density(&hi) - g.log_density(&lo)) / (2.0 * h);
                assert_relative_eq!(score[d], fd, max_relative = 1e-4, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn sampler_reproduces_moments_and_weights() {
        let g = GaussianMixture::new(
            vec![vec![-2.0], vec![2.0]],
            vec![Covariance::Spherical(1.0), Covariance::Spherical(1.0)],
            vec![0.25, 0.75],
        )
        .unwrap();
        let mut rng = derive_rng(5, &[0]);
        let n = 200_000;
        let mut mean = 0.0;
        let mut right = 0usize;
        for _ in 0..n {
            let x = g.sample(&mut rng)[0];
            mean += x;
            if x > 0.0 {
                right += 1;
            }
        }
        mean /= n as f64;
        // E[x] = 0.25*(-2) + 0.75*2 = 1.0
        // P(x > 0) = 0.25 (1 - Phi(2)) + 0.75 Phi(2) = 0.7386249
        assert_relative_eq!(mean, 1.0, epsilon = 0.02);
        assert_relative_eq!(right as f64 / n as f64, 0.7386249, epsilon = 0.01);
    }

    #[test]
    fn layout_round_trips_through_json() {
        let cov = Covariance::full(&[2.0, 0.6, 0.6, 1.0], 2).unwrap();
        let g = GaussianMixture::new(
            vec![vec![0.5, -0.25], vec![1.0, 1.0]],
            vec![cov, Covariance::Diagonal(vec![1.0, 2.0])],
            vec![0.3, 0.7],
        )
        .unwrap();
        let layout = g.to_layout();
        let json = serde_json::to_string(&layout).unwrap();
        let back: GaussianMixtureLayout = serde_json::from_str(&json).unwrap();
        let g2: GaussianMixture<f64> = GaussianMixture::from_layout(&back).unwrap();
        let x = [0.1, -0.4];
        assert_relative_eq!(g.log_density(&x), g2.log_density(&x), max_relative = 1e-12);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(
            GaussianMixture::new(
                vec![vec![0.0]],
                vec![Covariance::Spherical(1.0)],
                vec![0.5]
            ),
            Err(TargetError::InvalidWeights)
        ));
        assert!(matches!(
            GaussianMixture::new(
                vec![vec![0.0]],
                vec![Covariance::Spherical(-1.0)],
                vec![1.0]
            ),
            Err(TargetError::NotPositiveDefinite)
        ));
        assert!(Covariance::<f64>::full(&[1.0, 2.0, 0.0, 1.0], 2).is_err());
        assert!(Covariance::<f64>::full(&[0.0, 0.0, 0.0, 0.0], 2).is_err());
    }

    #[test]
    fn works_in_f32_too() {
        let g: GaussianMixture<f32> =
            GaussianMixture::isotropic(vec![vec![-2.0f32], vec![2.0]]).unwrap();
        assert_relative_eq!(g.log_density(&[0.0f32]), -2.9189385, max_relative = 1e-6);
    }
}
