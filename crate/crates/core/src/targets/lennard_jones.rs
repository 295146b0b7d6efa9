//! Lennard-Jones cluster in reduced units.
//!
//! The Boltzmann log-density is minus the cluster energy; the temperature
//! factor is absorbed into that convention. Coincident particles give
//! infinite energy, so the log-density is `-inf` there and the score may
//! carry non-finite entries, which the kernels treat as an auto-reject.

use super::{Eval, UnnormalizedDensity};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct LennardJones<S> {
    n_particles: usize,
    epsilon: S,
    sigma: S,
}

impl<S: Scalar> LennardJones<S> {
    pub fn new(n_particles: usize, epsilon: S, sigma: S) -> Self {
        assert!(n_particles >= 2, "a cluster needs at least two particles");
        assert!(epsilon > S::zero() && sigma > S::zero());
        LennardJones {
            n_particles,
            epsilon,
            sigma,
        }
    }

    /// Reduced units: epsilon = sigma = 1.
    pub fn reduced(n_particles: usize) -> Self {
        LennardJones::new(n_particles, S::one(), S::one())
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    /// Total pair energy at a flattened `(n_particles * 3)` configuration.
    pub fn energy(&self, x: &[S]) -> S {
        self.energy_and_force(x, None)
    }

    /// Energy, optionally accumulating the negated gradient into `force`.
    fn energy_and_force(&self, x: &[S], mut force: Option<&mut [S]>) -> S {
        let n = self.n_particles;
        debug_assert_eq!(x.len(), 3 * n);
        let sigma2 = self.sigma * self.sigma;
        let four_eps = S::lit(4.0) * self.epsilon;
        let mut energy = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                let (xi, xj) = (&x[3 * i..3 * i + 3], &x[3 * j..3 * j + 3]);
                let d = [xi[0] - xj[0], xi[1] - xj[1], xi[2] - xj[2]];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                if r2 == S::zero() {
                    return S::infinity();
                }
                let s2 = sigma2 / r2;
                let s6 = s2 * s2 * s2;
                let s12 = s6 * s6;
                energy += four_eps * (s12 - s6);
                if let Some(f) = force.as_deref_mut() {
                    // dE/dxi = 24 eps (s6 - 2 s12) / r2 * (xi - xj)
                    let g = S::lit(24.0) * self.epsilon * (s6 - (s12 + s12)) / r2;
                    for a in 0..3 {
                        f[3 * i + a] -= g * d[a];
                        f[3 * j + a] += g * d[a];
                    }
                }
            }
        }
        energy
    }
}

impl<S: Scalar> UnnormalizedDensity<S> for LennardJones<S> {
    fn dim(&self) -> usize {
        3 * self.n_particles
    }

    fn eval(&self, x: &[S]) -> Eval<S> {
        let mut score = vec![S::zero(); x.len()];
        let energy = self.energy_and_force(x, Some(&mut score));
        Eval {
            log_density: -energy,
            score,
        }
    }

    fn log_density(&self, x: &[S]) -> S {
        -self.energy(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use approx::assert_relative_eq;

    fn pair_at(r: f64) -> Vec<f64> {
        vec![0.0, 0.0, 0.0, r, 0.0, 0.0]
    }

    #[test]
    fn pair_energy_has_the_textbook_values() {
        let lj = LennardJones::<f64>::reduced(2);
        let r_min = 2f64.powf(1.0 / 6.0);
        assert_relative_eq!(lj.energy(&pair_at(r_min)), -1.0, max_relative = 1e-14);
        assert_relative_eq!(lj.energy(&pair_at(1.0)), 0.0, epsilon = 1e-14);
        // 4 * (2^-12 - 2^-6), exact in binary
        assert_relative_eq!(lj.energy(&pair_at(2.0)), -0.0615234375, max_relative = 1e-15);
        assert_eq!(lj.energy(&pair_at(0.0)), f64::INFINITY);
        assert_eq!(lj.log_density(&pair_at(0.0)), f64::NEG_INFINITY);
    }

    #[test]
    fn equilateral_triangle_sums_three_pair_minima() {
        let lj = LennardJones::<f64>::reduced(3);
        let r = 2f64.powf(1.0 / 6.0);
        let h = r * 3f64.sqrt() / 2.0;
        let x = vec![0.0, 0.0, 0.0, r, 0.0, 0.0, r / 2.0, h, 0.0];
        assert_relative_eq!(lj.energy(&x), -3.0, max_relative = 1e-12);
        // force vanishes at this stationary point
        let e = lj.eval(&x);
        for s in &e.score {
            assert_relative_eq!(*s, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn score_matches_central_differences() {
        let lj = LennardJones::<f64>::reduced(4);
        let mut rng = derive_rng(3, &[0]);
        // spread-out configurations keep the FD stencil well conditioned
        for _ in 0..20 {
            let x: Vec<f64> = (0..12).map(|_| 2.0 * f64::std_normal(&mut rng)).collect();
            if !lj.energy(&x).is_finite() {
                continue;
            }
            let e = lj.eval(&x);
            let h = 1e-6;
            for d in 0..12 {
                let mut lo = x.clone();
                let mut hi = x.clone();
                lo[d] -= h;
                hi[d] += h;
                let fd = (lj.log_density(&hi) - lj.log_density(&lo)) / (2.0 * h);
                assert_relative_eq!(e.score[d], fd, max_relative = 1e-4, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn energy_is_invariant_under_rigid_motions_and_relabeling() {
        let lj = LennardJones::<f64>::reduced(3);
        let x = vec![0.1, 0.2, -0.3, 1.2, 0.1, 0.4, -0.5, 1.1, 0.9];
        let e0 = lj.energy(&x);

        let shifted: Vec<f64> = x
            .chunks(3)
            .flat_map(|p| [p[0] + 3.0, p[1] - 1.0, p[2] + 0.5])
            .collect();
        assert_relative_eq!(lj.energy(&shifted), e0, max_relative = 1e-12);

        // rotation about z by 0.7 rad
        let (s, c) = 0.7f64.sin_cos();
        let rotated: Vec<f64> = x
            .chunks(3)
            .flat_map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])
            .collect();
        assert_relative_eq!(lj.energy(&rotated), e0, max_relative = 1e-12);

        let mut permuted = vec![0.0; 9];
        permuted[0..3].copy_from_slice(&x[6..9]);
        permuted[3..6].copy_from_slice(&x[0..3]);
        permuted[6..9].copy_from_slice(&x[3..6]);
        assert_relative_eq!(lj.energy(&permuted), e0, max_relative = 1e-12);
    }
}
