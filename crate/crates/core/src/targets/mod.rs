//! Target densities and the evaluation ledger.
//!
//! A [`Target`] wraps an [`UnnormalizedDensity`] and counts every evaluation.
//! The counting policy is uniform across all samplers: a fused value+score
//! evaluation costs 1, and so does a value-only or score-only call. Budgets
//! everywhere in this workspace are expressed in these units.

mod gaussian_mixture;
mod lennard_jones;
mod mode;
mod reference;

pub use gaussian_mixture::{Covariance, CovarianceLayout, GaussianMixture, GaussianMixtureLayout};
pub use lennard_jones::LennardJones;
pub use mode::{find_mode, ModeDiverged, ModeResult};
pub use reference::GaussianReference;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::scalar::Scalar;

/// One fused evaluation: log-density value and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Eval<S> {
    pub log_density: S,
    pub score: Vec<S>,
}

impl<S: Scalar> Eval<S> {
    pub fn zeros(dim: usize) -> Self {
        Eval {
            log_density: S::zero(),
            score: vec![S::zero(); dim],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.log_density.is_finite() && self.score.iter().all(|s| s.is_finite())
    }
}

/// A possibly unnormalized log-density with analytic gradient.
///
/// Implementations must compute the fused [`eval`](Self::eval) in one pass
/// where the math allows it; the ledger charges one unit either way.
pub trait UnnormalizedDensity<S: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    /// Log-density and score at `x` in one pass.
    fn eval(&self, x: &[S]) -> Eval<S>;

    /// Value-only path, overridden where it is genuinely cheaper.
    fn log_density(&self, x: &[S]) -> S {
        self.eval(x).log_density
    }
}

impl<S: Scalar, T: UnnormalizedDensity<S> + ?Sized> UnnormalizedDensity<S> for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, x: &[S]) -> Eval<S> {
        (**self).eval(x)
    }

    fn log_density(&self, x: &[S]) -> S {
        (**self).log_density(x)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TargetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mixture weights must be positive and sum to 1")]
    InvalidWeights,
    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("mixture needs at least one component with matching dimensions")]
    EmptyMixture,
    #[error("gradient ascent diverged after {iterations} iterations")]
    Diverged { iterations: usize },
    #[error("initial point has non-finite log-density")]
    NonFiniteInit,
}

/// Budgeted handle on a density. Cloning is not exposed; [`Target::fork`]
/// creates a handle on the same density with a fresh ledger, which is how
/// per-chain ledgers and separately-billed measurement passes are made.
pub struct Target<S: Scalar> {
    density: Arc<dyn UnnormalizedDensity<S>>,
    evals: AtomicU64,
}

impl<S: Scalar> Target<S> {
    pub fn new<D: UnnormalizedDensity<S> + 'static>(density: D) -> Self {
        Target {
            density: Arc::new(density),
            evals: AtomicU64::new(0),
        }
    }

    /// Same density, fresh zeroed ledger.
    pub fn fork(&self) -> Self {
        Target {
            density: Arc::clone(&self.density),
            evals: AtomicU64::new(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    /// Evaluations charged to this handle so far.
    pub fn evaluations(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    fn charge(&self) {
        self.evals.fetch_add(1, Ordering::Relaxed);
    }

    pub fn log_density(&self, x: &[S]) -> S {
        self.check_dim(x);
        self.charge();
        self.density.log_density(x)
    }

    pub fn score(&self, x: &[S]) -> Vec<S> {
        self.check_dim(x);
        self.charge();
        self.density.eval(x).score
    }

    /// Fused value+score, one ledger unit.
    pub fn eval(&self, x: &[S]) -> Eval<S> {
        self.check_dim(x);
        self.charge();
        self.density.eval(x)
    }

    fn check_dim(&self, x: &[S]) {
        assert_eq!(
            x.len(),
            self.dim(),
            "point dimension {} does not match target dimension {}",
            x.len(),
            self.dim()
        );
    }
}

impl<S: Scalar> UnnormalizedDensity<S> for Target<S> {
    fn dim(&self) -> usize {
        Target::dim(self)
    }

    fn eval(&self, x: &[S]) -> Eval<S> {
        Target::eval(self, x)
    }

    fn log_density(&self, x: &[S]) -> S {
        Target::log_density(self, x)
    }
}
