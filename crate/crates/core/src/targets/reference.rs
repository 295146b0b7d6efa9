//! Isotropic Gaussian reference distribution.

use rand::Rng;

use super::Eval;
use crate::math::squared_distance;
use crate::scalar::Scalar;

/// `N(mean, std^2 I)`, exactly normalized and exactly sampleable.
///
/// This is the anchor distribution the annealing path starts from; its
/// evaluations are free (only target evaluations are budgeted). The default
/// scale is `std = 1`.
#[derive(Debug, Clone)]
pub struct GaussianReference<S> {
    mean: Vec<S>,
    std: S,
}

impl<S: Scalar> GaussianReference<S> {
    pub fn new(mean: Vec<S>, std: S) -> Self {
        assert!(!mean.is_empty());
        assert!(std > S::zero() && std.is_finite());
        GaussianReference { mean, std }
    }

    pub fn unit(mean: Vec<S>) -> Self {
        GaussianReference::new(mean, S::one())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[S] {
        &self.mean
    }

    pub fn std(&self) -> S {
        self.std
    }

    pub fn log_density(&self, x: &[S]) -> S {
        debug_assert_eq!(x.len(), self.dim());
        let half = S::lit(0.5);
        let var = self.std * self.std;
        let d = S::from_usize_exact(self.dim());
        -half * d * (S::lit(std::f64::consts::TAU) * var).ln()
            - half * squared_distance(x, &self.mean) / var
    }

    pub fn score(&self, x: &[S]) -> Vec<S> {
        let var = self.std * self.std;
        x.iter()
            .zip(&self.mean)
            .map(|(&xi, &mi)| (mi - xi) / var)
            .collect()
    }

    pub fn eval(&self, x: &[S]) -> Eval<S> {
        Eval {
            log_density: self.log_density(x),
            score: self.score(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<S> {
        self.mean
            .iter()
            .map(|&m| m + self.std * S::std_normal(rng))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use approx::assert_relative_eq;

    #[test]
    fn matches_the_standard_normal_at_unit_scale() {
        let r = GaussianReference::unit(vec![0.0f64]);
        assert_relative_eq!(
            r.log_density(&[0.3]),
            -0.9639385332046727,
            max_relative = 1e-14
        );
        assert_relative_eq!(r.score(&[0.3])[0], -0.3, max_relative = 1e-14);
    }

    #[test]
    fn scale_and_shift_enter_correctly() {
        let r = GaussianReference::new(vec![1.0f64, -2.0], 0.5);
        // logp(x) = -log(2 pi 0.25) - |x-m|^2 / 0.5
        let x = [1.3, -1.6];
        let expect = -(std::f64::consts::TAU * 0.25).ln() - (0.09 + 0.16) / 0.5;
        assert_relative_eq!(r.log_density(&x), expect, max_relative = 1e-14);
        assert_relative_eq!(r.score(&x)[0], (1.0 - 1.3) / 0.25, max_relative = 1e-14);
    }

    #[test]
    fn samples_have_the_right_moments() {
        let r = GaussianReference::new(vec![2.0f64], 3.0);
        let mut rng = derive_rng(9, &[0]);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| r.sample(&mut rng)[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert_relative_eq!(mean, 2.0, epsilon = 0.05);
        assert_relative_eq!(var, 9.0, epsilon = 0.2);
    }
}
