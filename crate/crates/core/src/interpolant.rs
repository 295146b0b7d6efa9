//! Conditional interpolation path.
//!
//! An interpolant `F_t` anchored at `z` carries the target density to a
//! family of contracted densities: at time `t` the path density is the
//! pushforward of the target under `F_t`, which for the linear map
//! `F_t(x) = (1 - t) z + t x` is
//!
//! ```text
//! log pi_t(y) = -D log t + log pi(F_t^{-1}(y)),   F_t^{-1}(y) = (y - (1 - t) z) / t
//! ```
//!
//! Scores pull back the same way, `grad log pi_t(y) = grad log pi(x) / t`,
//! so one fused target evaluation at the pullback point yields the path
//! density, its score, and the drift of the transport dynamics. Times below
//! [`MIN_TIME`] are rejected: the map degenerates at `t = 0`.

use crate::scalar::Scalar;
use crate::targets::{Eval, Target, UnnormalizedDensity};

/// Floor on path times. The contraction is singular at `t = 0`; everything
/// that takes a time validates against this.
pub const MIN_TIME: f64 = 1e-4;

pub fn min_time<S: Scalar>() -> S {
    S::lit(MIN_TIME)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum InterpolantError {
    #[error("time {t} is below the floor {floor}")]
    TimeBelowFloor { t: f64, floor: f64 },
    #[error("time {t} is above 1")]
    TimeAboveOne { t: f64 },
    #[error("anchor dimension {anchor} does not match target dimension {target}")]
    AnchorMismatch { anchor: usize, target: usize },
}

fn validate_time<S: Scalar>(t: S) -> Result<(), InterpolantError> {
    if !(t >= min_time::<S>()) {
        return Err(InterpolantError::TimeBelowFloor {
            t: t.to_f64_lossy(),
            floor: MIN_TIME,
        });
    }
    if t > S::one() {
        return Err(InterpolantError::TimeAboveOne {
            t: t.to_f64_lossy(),
        });
    }
    Ok(())
}

/// A time-indexed family of affine maps anchored at a point `z`.
///
/// The Jacobian must not depend on the state (affine in `x`), which is what
/// makes one-evaluation pullbacks possible. Only the linear interpolant is
/// shipped; the trait is the seam for stitching in other anchored families.
pub trait Interpolant<S: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    fn anchor(&self) -> &[S];

    /// `F_t(x)`; defined for `t` in `[0, 1]`.
    fn forward(&self, t: S, x: &[S]) -> Vec<S>;

    /// `F_t^{-1}(y)`; defined for `t` in `[MIN_TIME, 1]`.
    fn inverse(&self, t: S, y: &[S]) -> Vec<S>;

    /// Transport velocity at a path point: `u_t(y) = d/dt F_t` evaluated at
    /// the source of `y`.
    fn velocity(&self, t: S, y: &[S]) -> Vec<S>;

    /// `log |det dF_t/dx|`.
    fn log_det_jacobian(&self, t: S) -> S;

    /// Pushforward of a source-space score to the path point.
    fn pushforward_score(&self, t: S, source_score: &[S]) -> Vec<S>;

    /// Inverse of [`Interpolant::pushforward_score`]: recover the
    /// source-space score from a path-space one.
    fn pullback_score(&self, t: S, path_score: &[S]) -> Vec<S>;
}

/// `F_t(x) = (1 - t) z + t x`.
#[derive(Debug, Clone)]
pub struct LinearInterpolant<S> {
    z: Vec<S>,
}

impl<S: Scalar> LinearInterpolant<S> {
    pub fn new(z: Vec<S>) -> Self {
        assert!(!z.is_empty());
        LinearInterpolant { z }
    }
}

impl<S: Scalar> Interpolant<S> for LinearInterpolant<S> {
    fn dim(&self) -> usize {
        self.z.len()
    }

    fn anchor(&self) -> &[S] {
        &self.z
    }

    fn forward(&self, t: S, x: &[S]) -> Vec<S> {
        debug_assert!(t >= S::zero() && t <= S::one());
        let omt = S::one() - t;
        self.z
            .iter()
            .zip(x)
            .map(|(&zi, &xi)| omt * zi + t * xi)
            .collect()
    }

    fn inverse(&self, t: S, y: &[S]) -> Vec<S> {
        debug_assert!(t >= min_time::<S>());
        let omt = S::one() - t;
        self.z
            .iter()
            .zip(y)
            .map(|(&zi, &yi)| (yi - omt * zi) / t)
            .collect()
    }

    fn velocity(&self, t: S, y: &[S]) -> Vec<S> {
        // d/dt F_t = x - z = (y - z) / t
        self.z.iter().zip(y).map(|(&zi, &yi)| (yi - zi) / t).collect()
    }

    fn log_det_jacobian(&self, t: S) -> S {
        S::from_usize_exact(self.dim()) * t.ln()
    }

    fn pushforward_score(&self, t: S, source_score: &[S]) -> Vec<S> {
        source_score.iter().map(|&s| s / t).collect()
    }

    fn pullback_score(&self, t: S, path_score: &[S]) -> Vec<S> {
        path_score.iter().map(|&s| s * t).collect()
    }
}

/// The path density at a fixed time, bound to a budgeted target.
///
/// Implements [`UnnormalizedDensity`], so kernels can run on it directly;
/// each evaluation costs exactly one target evaluation.
pub struct ConditionalPath<'a, S: Scalar> {
    target: &'a Target<S>,
    interpolant: &'a dyn Interpolant<S>,
    t: S,
}

impl<'a, S: Scalar> ConditionalPath<'a, S> {
    pub fn new(
        target: &'a Target<S>,
        interpolant: &'a dyn Interpolant<S>,
        t: S,
    ) -> Result<Self, InterpolantError> {
        validate_time(t)?;
        if interpolant.dim() != target.dim() {
            return Err(InterpolantError::AnchorMismatch {
                anchor: interpolant.dim(),
                target: target.dim(),
            });
        }
        Ok(ConditionalPath {
            target,
            interpolant,
            t,
        })
    }

    pub fn t(&self) -> S {
        self.t
    }

    pub fn anchor(&self) -> &[S] {
        self.interpolant.anchor()
    }

    pub fn target(&self) -> &'a Target<S> {
        self.target
    }

    pub fn interpolant(&self) -> &'a dyn Interpolant<S> {
        self.interpolant
    }

    /// Fused path evaluation together with the raw target evaluation at the
    /// pullback point. One target evaluation; callers cache the source part
    /// to re-derive path values at other times without paying again.
    pub fn eval_with_source(&self, y: &[S]) -> (Eval<S>, Eval<S>) {
        let x = self.interpolant.inverse(self.t, y);
        let source = self.target.eval(&x);
        let path = Eval {
            log_density: source.log_density - self.interpolant.log_det_jacobian(self.t),
            score: self.interpolant.pushforward_score(self.t, &source.score),
        };
        (path, source)
    }

    /// Transport velocity; no target evaluation.
    pub fn velocity(&self, y: &[S]) -> Vec<S> {
        self.interpolant.velocity(self.t, y)
    }

    /// Drift of the transport SDE, `u_t(y) + (sigma^2 / 2) grad log pi_t(y)`,
    /// assembled from an already-cached path evaluation. No target evaluation.
    pub fn drift_from_cache(&self, y: &[S], sigma: S, path_eval: &Eval<S>) -> Vec<S> {
        let half_s2 = S::lit(0.5) * sigma * sigma;
        self.velocity(y)
            .iter()
            .zip(&path_eval.score)
            .map(|(&u, &s)| u + half_s2 * s)
            .collect()
    }

    /// Drift with a fresh evaluation (one target evaluation); returns the
    /// path evaluation so the caller can keep the cache warm.
    pub fn drift(&self, y: &[S], sigma: S) -> (Vec<S>, Eval<S>) {
        let (path, _) = self.eval_with_source(y);
        let d = self.drift_from_cache(y, sigma, &path);
        (d, path)
    }

    /// Re-derive the path evaluation at time `t_new` for the rescaled point
    /// `F_{t_new}(x)` from a cached source evaluation at `x`. No target
    /// evaluation; this is what makes online anchor-time updates free.
    pub fn rederive_at(
        interpolant: &dyn Interpolant<S>,
        t_new: S,
        source: &Eval<S>,
    ) -> Eval<S> {
        Eval {
            log_density: source.log_density - interpolant.log_det_jacobian(t_new),
            score: interpolant.pushforward_score(t_new, &source.score),
        }
    }
}

impl<'a, S: Scalar> UnnormalizedDensity<S> for ConditionalPath<'a, S> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn eval(&self, y: &[S]) -> Eval<S> {
        self.eval_with_source(y).0
    }

    fn log_density(&self, y: &[S]) -> S {
        let x = self.interpolant.inverse(self.t, y);
        self.target.log_density(&x) - self.interpolant.log_det_jacobian(self.t)
    }
}
