//! Local exploration kernels.
//!
//! All kernels step on a [`SplitTarget`]: a budgeted path density combined
//! with a free reference density through an annealing exponent `beta`. The
//! chain state caches both parts of the last evaluation separately, which is
//! what lets replica swaps and annealing-exponent changes reuse evaluations
//! instead of paying for new ones.
//!
//! Budget accounting per step (one fused unit each):
//! - MALA and random walk: exactly 1 evaluation,
//! - HMC with L leapfrog steps: exactly L evaluations (the gradient at the
//!   current point is cached from the previous step).
//!
//! Proposals with non-finite values are rejected and their evaluations still
//! count. The per-step RNG draw order is fixed (`dim` normals, then one
//! uniform) regardless of acceptance, so chains driven by the same stream
//! stay aligned draw-for-draw.

use rand::Rng;

use crate::math::{dot, squared_distance};
use crate::scalar::Scalar;
use crate::targets::{Eval, GaussianReference, UnnormalizedDensity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Mala,
    Hmc,
    RandomWalk,
}

#[derive(Debug, Clone)]
pub struct KernelConfig<S> {
    pub kind: KernelKind,
    /// Initial step size; adapted per chain when `adapt` is set.
    pub step_size: S,
    /// Leapfrog steps per proposal; HMC only.
    pub leapfrog_steps: usize,
    pub adapt: bool,
    pub target_acceptance: S,
}

impl<S: Scalar> KernelConfig<S> {
    pub fn mala(step_size: S) -> Self {
        KernelConfig {
            kind: KernelKind::Mala,
            step_size,
            leapfrog_steps: 1,
            adapt: true,
            target_acceptance: S::lit(0.574),
        }
    }

    pub fn hmc(step_size: S, leapfrog_steps: usize) -> Self {
        assert!(leapfrog_steps >= 1);
        KernelConfig {
            kind: KernelKind::Hmc,
            step_size,
            leapfrog_steps,
            adapt: true,
            target_acceptance: S::lit(0.651),
        }
    }

    pub fn random_walk(step_size: S) -> Self {
        KernelConfig {
            kind: KernelKind::RandomWalk,
            step_size,
            leapfrog_steps: 1,
            adapt: true,
            target_acceptance: S::lit(0.234),
        }
    }

    pub fn fixed(mut self) -> Self {
        self.adapt = false;
        self
    }

    /// Evaluations one step consumes, before any init.
    pub fn evals_per_step(&self) -> u64 {
        match self.kind {
            KernelKind::Hmc => self.leapfrog_steps as u64,
            _ => 1,
        }
    }
}

/// The stationary density a kernel targets: `(1 - beta) log r + beta log p`,
/// with `p` the budgeted path part and `r` a free Gaussian reference (absent
/// in flat-reference mode, where the first term is zero).
pub struct SplitTarget<'a, S: Scalar> {
    pub path: &'a dyn UnnormalizedDensity<S>,
    pub reference: Option<&'a GaussianReference<S>>,
    pub beta: S,
}

impl<'a, S: Scalar> SplitTarget<'a, S> {
    /// The path density itself (`beta = 1`, no reference).
    pub fn plain(path: &'a dyn UnnormalizedDensity<S>) -> Self {
        SplitTarget {
            path,
            reference: None,
            beta: S::one(),
        }
    }

    pub fn dim(&self) -> usize {
        self.path.dim()
    }

    /// Evaluate both parts at `x`. The path evaluation is always performed
    /// (and billed), even at `beta = 0`: the ensemble needs warm caches for
    /// zero-evaluation swaps.
    pub fn eval_parts(&self, x: &[S]) -> (Eval<S>, Eval<S>) {
        let r = match self.reference {
            Some(reference) => reference.eval(x),
            None => Eval::zeros(x.len()),
        };
        (r, self.path.eval(x))
    }
}

/// Position plus the cached split evaluation at that position.
#[derive(Debug, Clone)]
pub struct ChainState<S> {
    pub position: Vec<S>,
    pub ref_part: Eval<S>,
    pub path_part: Eval<S>,
    pub step_size: S,
    adapt_count: u64,
    pub proposed: u64,
    pub accepted: u64,
}

impl<S: Scalar> ChainState<S> {
    /// One path evaluation.
    pub fn init<R: Rng + ?Sized>(x: Vec<S>, target: &SplitTarget<'_, S>, step_size: S, _rng: &mut R) -> Self {
        let (ref_part, path_part) = target.eval_parts(&x);
        ChainState {
            position: x,
            ref_part,
            path_part,
            step_size,
            adapt_count: 0,
            proposed: 0,
            accepted: 0,
        }
    }

    pub fn annealed_log_density(&self, beta: S) -> S {
        annealed_value(beta, self.ref_part.log_density, self.path_part.log_density)
    }

    pub fn annealed_score(&self, beta: S) -> Vec<S> {
        let omb = S::one() - beta;
        self.ref_part
            .score
            .iter()
            .zip(&self.path_part.score)
            .map(|(&r, &p)| omb * r + beta * p)
            .collect()
    }

    pub fn acceptance_rate(&self) -> S {
        if self.proposed == 0 {
            return S::zero();
        }
        S::lit(self.accepted as f64 / self.proposed as f64)
    }

    fn adopt(&mut self, position: Vec<S>, ref_part: Eval<S>, path_part: Eval<S>) {
        self.position = position;
        self.ref_part = ref_part;
        self.path_part = path_part;
    }
}

/// `(1 - beta) r + beta p`, with the convention that a zero coefficient
/// kills a non-finite term (so `beta = 1` ignores a `-inf` reference).
fn annealed_value<S: Scalar>(beta: S, r: S, p: S) -> S {
    let omb = S::one() - beta;
    let rterm = if omb == S::zero() { S::zero() } else { omb * r };
    let pterm = if beta == S::zero() { S::zero() } else { beta * p };
    rterm + pterm
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutcome<S> {
    pub accepted: bool,
    /// Log MH ratio (for HMC, the negated energy error).
    pub log_ratio: S,
}

/// Advance one MH step of the configured kind, adapting the step size if
/// enabled. Returns the outcome; evaluation costs are as documented above.
pub fn kernel_step<S: Scalar, R: Rng + ?Sized>(
    state: &mut ChainState<S>,
    target: &SplitTarget<'_, S>,
    cfg: &KernelConfig<S>,
    rng: &mut R,
) -> StepOutcome<S> {
    let outcome = match cfg.kind {
        KernelKind::Mala => mala_step(state, target, rng),
        KernelKind::Hmc => hmc_step(state, target, cfg.leapfrog_steps, rng),
        KernelKind::RandomWalk => random_walk_step(state, target, rng),
    };
    state.proposed += 1;
    if outcome.accepted {
        state.accepted += 1;
    }
    if cfg.adapt {
        adapt_step_size(state, outcome.accepted, cfg.target_acceptance);
    }
    outcome
}

/// Robbins-Monro update on the log step size with gain `0.1 / sqrt(k)`,
/// clamped to `[1e-12, 1e3]`.
pub fn adapt_step_size<S: Scalar>(state: &mut ChainState<S>, accepted: bool, target_acceptance: S) {
    state.adapt_count += 1;
    let gain = S::lit(0.1) / S::lit(state.adapt_count as f64).sqrt();
    let signal = if accepted { S::one() } else { S::zero() } - target_acceptance;
    let log_h = state.step_size.ln() + gain * signal;
    state.step_size = log_h.exp().max(S::lit(1e-12)).min(S::lit(1e3));
}

fn mala_step<S: Scalar, R: Rng + ?Sized>(
    state: &mut ChainState<S>,
    target: &SplitTarget<'_, S>,
    rng: &mut R,
) -> StepOutcome<S> {
    let dim = target.dim();
    let h = state.step_size;
    let half_h2 = S::lit(0.5) * h * h;
    let score = state.annealed_score(target.beta);
    let mut proposal = Vec::with_capacity(dim);
    for i in 0..dim {
        let xi = S::std_normal(rng);
        proposal.push(state.position[i] + half_h2 * score[i] + h * xi);
    }
    let (ref_part, path_part) = target.eval_parts(&proposal);
    let u = S::unit_uniform(rng);

    let logp_new = annealed_value(target.beta, ref_part.log_density, path_part.log_density);
    let logp_old = state.annealed_log_density(target.beta);
    let mut log_ratio = S::neg_infinity();
    if logp_new.is_finite() && path_part.score.iter().all(|s| s.is_finite()) {
        let score_new = annealed_value_score(target.beta, &ref_part.score, &path_part.score);
        let fwd_mean: Vec<S> = (0..dim)
            .map(|i| state.position[i] + half_h2 * score[i])
            .collect();
        let rev_mean: Vec<S> = (0..dim)
            .map(|i| proposal[i] + half_h2 * score_new[i])
            .collect();
        let denom = S::lit(2.0) * h * h;
        let log_q_fwd = -squared_distance(&proposal, &fwd_mean) / denom;
        let log_q_rev = -squared_distance(&state.position, &rev_mean) / denom;
        log_ratio = logp_new - logp_old + log_q_rev - log_q_fwd;
    }
    let accepted = u.ln() < log_ratio;
    if accepted {
        state.adopt(proposal, ref_part, path_part);
    }
    StepOutcome { accepted, log_ratio }
}

fn annealed_value_score<S: Scalar>(beta: S, r: &[S], p: &[S]) -> Vec<S> {
    let omb = S::one() - beta;
    r.iter().zip(p).map(|(&ri, &pi)| omb * ri + beta * pi).collect()
}

fn hmc_step<S: Scalar, R: Rng + ?Sized>(
    state: &mut ChainState<S>,
    target: &SplitTarget<'_, S>,
    leapfrog_steps: usize,
    rng: &mut R,
) -> StepOutcome<S> {
    let dim = target.dim();
    let h = state.step_size;
    let half_h = S::lit(0.5) * h;
    let momentum: Vec<S> = (0..dim).map(|_| S::std_normal(rng)).collect();

    let energy_old = -state.annealed_log_density(target.beta)
        + S::lit(0.5) * dot(&momentum, &momentum);

    let mut q = state.position.clone();
    let mut p = momentum;
    let mut score = state.annealed_score(target.beta);
    for (pi, &si) in p.iter_mut().zip(&score) {
        *pi += half_h * si;
    }
    let mut parts = None;
    for leap in 0..leapfrog_steps {
        for (qi, &pi) in q.iter_mut().zip(&p) {
            *qi += h * pi;
        }
        let (r, pp) = target.eval_parts(&q);
        score = annealed_value_score(target.beta, &r.score, &pp.score);
        let last = leap + 1 == leapfrog_steps;
        let scale = if last { half_h } else { h };
        for (pi, &si) in p.iter_mut().zip(&score) {
            *pi += scale * si;
        }
        parts = Some((r, pp));
    }
    let u = S::unit_uniform(rng);

    let (ref_part, path_part) = parts.expect("leapfrog_steps >= 1");
    let logp_new = annealed_value(target.beta, ref_part.log_density, path_part.log_density);
    let kinetic = S::lit(0.5) * dot(&p, &p);
    let mut log_ratio = S::neg_infinity();
    if logp_new.is_finite() && kinetic.is_finite() {
        log_ratio = energy_old - (-logp_new + kinetic);
    }
    let accepted = u.ln() < log_ratio;
    if accepted {
        state.adopt(q, ref_part, path_part);
    }
    StepOutcome { accepted, log_ratio }
}

fn random_walk_step<S: Scalar, R: Rng + ?Sized>(
    state: &mut ChainState<S>,
    target: &SplitTarget<'_, S>,
    rng: &mut R,
) -> StepOutcome<S> {
    let dim = target.dim();
    let h = state.step_size;
    let proposal: Vec<S> = (0..dim)
        .map(|i| state.position[i] + h * S::std_normal(rng))
        .collect();
    let (ref_part, path_part) = target.eval_parts(&proposal);
    let u = S::unit_uniform(rng);

    let logp_new = annealed_value(target.beta, ref_part.log_density, path_part.log_density);
    let log_ratio = if logp_new.is_finite() {
        logp_new - state.annealed_log_density(target.beta)
    } else {
        S::neg_infinity()
    };
    let accepted = u.ln() < log_ratio;
    if accepted {
        state.adopt(proposal, ref_part, path_part);
    }
    StepOutcome { accepted, log_ratio }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{mean, variance};
    use crate::rng::derive_rng;
    use crate::targets::{GaussianMixture, Target};
    use approx::assert_relative_eq;

    fn std_normal() -> Target<f64> {
        Target::new(GaussianMixture::isotropic(vec![vec![0.0]]).unwrap())
    }

    #[test]
    fn mala_consumes_one_evaluation_per_step() {
        let t = std_normal();
        let tgt = SplitTarget::plain(&t);
        let mut rng = derive_rng(1, &[0]);
        let mut state = ChainState::init(vec![0.0], &tgt, 0.8, &mut rng);
        assert_eq!(t.evaluations(), 1);
        for _ in 0..100 {
            kernel_step(&mut state, &tgt, &KernelConfig::mala(0.8), &mut rng);
        }
        assert_eq!(t.evaluations(), 101);
    }

    #[test]
    fn hmc_consumes_leapfrog_many_evaluations_per_step() {
        let t = std_normal();
        let tgt = SplitTarget::plain(&t);
        let mut rng = derive_rng(1, &[1]);
        let mut state = ChainState::init(vec![0.0], &tgt, 0.3, &mut rng);
        let cfg = KernelConfig::hmc(0.3, 5);
        for _ in 0..40 {
            kernel_step(&mut state, &tgt, &cfg, &mut rng);
        }
        assert_eq!(t.evaluations(), 1 + 40 * 5);
        assert_eq!(cfg.evals_per_step(), 5);
    }

    #[test]
    fn mala_reaches_its_textbook_acceptance_target() {
        let t = std_normal();
        let tgt = SplitTarget::plain(&t);
        let mut rng = derive_rng(7, &[0]);
        let cfg = KernelConfig::mala(3.0);
        let mut state = ChainState::init(vec![0.5], &tgt, 3.0, &mut rng);
        for _ in 0..4000 {
            kernel_step(&mut state, &tgt, &cfg, &mut rng);
        }
        let (a0, p0) = (state.accepted, state.proposed);
        for _ in 0..4000 {
            kernel_step(&mut state, &tgt, &cfg, &mut rng);
        }
        let late = (state.accepted - a0) as f64 / (state.proposed - p0) as f64;
        assert_relative_eq!(late, 0.574, epsilon = 0.06);
    }

    #[test]
    fn mala_moments_match_the_gaussian() {
        let t = std_normal();
        let tgt = SplitTarget::plain(&t);
        let mut rng = derive_rng(13, &[0]);
        let cfg = KernelConfig::mala(1.0);
        let mut state = ChainState::init(vec![2.0], &tgt, 1.0, &mut rng);
        let mut xs = Vec::new();
        for i in 0..60_000 {
            kernel_step(&mut state, &tgt, &cfg, &mut rng);
            if i >= 5000 {
                xs.push(state.position[0]);
            }
        }
        assert_relative_eq!(mean(&xs), 0.0, epsilon = 0.05);
        assert_relative_eq!(variance(&xs), 1.0, epsilon = 0.08);
    }

    #[test]
    fn hmc_energy_error_shrinks_quadratically_in_the_step() {
        let t = std_normal();
        let tgt = SplitTarget::plain(&t);
        let mean_abs_err = |h: f64, seed: u64| {
            let mut rng = derive_rng(seed, &[0]);
            let cfg = KernelConfig::hmc(h, 8).fixed();
            let mut state = ChainState::init(vec![0.3], &tgt, h, &mut rng);
            let mut acc = 0.0;
            let n = 2000;
            for _ in 0..n {
                let out = kernel_step(&mut state, &tgt, &cfg, &mut rng);
                acc += out.log_ratio.abs();
            }
            acc / n as f64
        };
        // leapfrog is second order: |dH| ~ h^2, so halving h divides by ~4
        let coarse = mean_abs_err(0.2, 21);
        let fine = mean_abs_err(0.1, 21);
        let ratio = coarse / fine;
        assert!(
            (2.5..6.0).contains(&ratio),
            "expected ~4x energy error reduction, got {ratio}"
        );
    }

    #[test]
    fn hmc_moments_match_the_gaussian() {
        let t = std_normal();
        let tgt = SplitTarget::plain(&t);
        let mut rng = derive_rng(17, &[0]);
        let cfg = KernelConfig::hmc(0.4, 6);
        let mut state = ChainState::init(vec![-1.5], &tgt, 0.4, &mut rng);
        let mut xs = Vec::new();
        for i in 0..30_000 {
            kernel_step(&mut state, &tgt, &cfg, &mut rng);
            if i >= 2000 {
                xs.push(state.position[0]);
            }
        }
        assert_relative_eq!(mean(&xs), 0.0, epsilon = 0.05);
        assert_relative_eq!(variance(&xs), 1.0, epsilon = 0.08);
    }

    #[test]
    fn random_walk_moments_match_the_gaussian() {
        let t = std_normal();
        let tgt = SplitTarget::plain(&t);
        let mut rng = derive_rng(19, &[0]);
        let cfg = KernelConfig::random_walk(1.5);
        let mut state = ChainState::init(vec![0.0], &tgt, 1.5, &mut rng);
        let mut xs = Vec::new();
        for i in 0..80_000 {
            kernel_step(&mut state, &tgt, &cfg, &mut rng);
            if i >= 5000 {
                xs.push(state.position[0]);
            }
        }
        assert_relative_eq!(mean(&xs), 0.0, epsilon = 0.05);
        assert_relative_eq!(variance(&xs), 1.0, epsilon = 0.09);
    }

    #[test]
    fn non_finite_proposals_are_rejected_and_still_billed() {
        use crate::targets::{Eval, UnnormalizedDensity};

        struct HalfLine;

        impl UnnormalizedDensity<f64> for HalfLine {
            fn dim(&self) -> usize {
                1
            }

            fn eval(&self, x: &[f64]) -> Eval<f64> {
                if x[0] <= 0.0 {
                    Eval {
                        log_density: f64::NEG_INFINITY,
                        score: vec![f64::NAN],
                    }
                } else {
                    Eval {
                        log_density: -x[0],
                        score: vec![-1.0],
                    }
                }
            }
        }

        let t = Target::new(HalfLine);
        let tgt = SplitTarget::plain(&t);
        let mut rng = derive_rng(23, &[0]);
        let cfg = KernelConfig::mala(5.0).fixed();
        let mut state = ChainState::init(vec![0.1], &tgt, 5.0, &mut rng);
        let mut rejected_nonfinite = 0;
        for _ in 0..200 {
            let before = state.position[0];
            let out = kernel_step(&mut state, &tgt, &cfg, &mut rng);
            assert!(state.position[0] > 0.0, "never moves to the dead half-line");
            if !out.accepted && state.position[0] == before {
                rejected_nonfinite += 1;
            }
        }
        assert!(rejected_nonfinite > 0);
        assert_eq!(t.evaluations(), 201);
    }

    #[test]
    fn adaptation_clamps_at_the_documented_bounds() {
        let t = std_normal();
        let tgt = SplitTarget::plain(&t);
        let mut rng = derive_rng(29, &[0]);
        let mut state = ChainState::init(vec![0.0], &tgt, 1e-12, &mut rng);
        // all-reject pressure cannot push the step below the floor
        for _ in 0..500 {
            adapt_step_size(&mut state, false, 0.574);
        }
        assert!(state.step_size >= 1e-12);
        state.step_size = 1e3;
        for _ in 0..500 {
            adapt_step_size(&mut state, true, 0.574);
        }
        assert!(state.step_size <= 1e3);
    }

    #[test]
    fn annealed_parts_combine_linearly() {
        let t = std_normal();
        let reference = crate::targets::GaussianReference::unit(vec![1.0f64]);
        let tgt = SplitTarget {
            path: &t,
            reference: Some(&reference),
            beta: 0.25,
        };
        let mut rng = derive_rng(31, &[0]);
        let state = ChainState::init(vec![0.4], &tgt, 0.5, &mut rng);
        let expect = 0.75 * reference.log_density(&[0.4]) + 0.25 * t.fork().log_density(&[0.4]);
        assert_relative_eq!(state.annealed_log_density(0.25), expect, max_relative = 1e-12);
        let s = state.annealed_score(0.25);
        assert_relative_eq!(s[0], 0.75 * (1.0 - 0.4) + 0.25 * (-0.4), max_relative = 1e-12);
    }
}
