//! Non-reversible parallel tempering.
//!
//! An ensemble of replicas targets the annealed family
//! `pi_beta = r^(1-beta) p^beta` between a reference `r` and the path
//! density `p`. Each sweep runs one local-exploration step per replica and
//! then proposes deterministic even/odd swaps: sweep `k` proposes the
//! adjacent pairs `(n, n+1)` with `n = k (mod 2)`. The alternation is what
//! makes the replica flow non-reversible and is the reason round trips, not
//! acceptance rates alone, are the mixing currency here.
//!
//! Swap decisions use only cached evaluations, so a sweep costs exactly one
//! path evaluation per replica: the budgeted unit of everything downstream.
//! When the schedule starts at `beta = 0` with a Gaussian reference, the
//! bottom replica is refreshed by exact sampling instead of a kernel step;
//! it still pays its one evaluation to keep the swap caches warm.

use rand_chacha::ChaCha8Rng;

use crate::kernels::{kernel_step, ChainState, KernelConfig, SplitTarget};
use crate::rng::derive_rng;
use crate::scalar::Scalar;
use crate::targets::{Eval, GaussianReference, UnnormalizedDensity};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TemperingError {
    #[error("annealing schedule needs >= 2 strictly increasing levels in [0, 1] ending at 1")]
    InvalidSchedule,
    #[error("flat reference mode requires every annealing level to be positive")]
    FlatNeedsPositiveBetas,
    #[error("swap statistics need at least one proposal per pair (pair {pair} has none)")]
    InsufficientSwapData { pair: usize },
    #[error("initialization point or its evaluation is not finite")]
    NonFiniteInit,
    #[error("initializing from the reference requires a Gaussian reference")]
    InitNeedsReference,
}

/// Strictly increasing annealing levels, last one equal to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealingSchedule<S> {
    betas: Vec<S>,
}

impl<S: Scalar> AnnealingSchedule<S> {
    pub fn from_betas(betas: Vec<S>) -> Result<Self, TemperingError> {
        if betas.len() < 2 || *betas.last().unwrap() != S::one() {
            return Err(TemperingError::InvalidSchedule);
        }
        let in_range = betas.iter().all(|b| *b >= S::zero() && b.is_finite());
        let increasing = betas.windows(2).all(|w| w[0] < w[1]);
        if !in_range || !increasing {
            return Err(TemperingError::InvalidSchedule);
        }
        Ok(AnnealingSchedule { betas })
    }

    /// Log-spaced levels from `beta_min` to 1. With `include_zero` the first
    /// level is 0 (a proper reference) and the remaining levels are
    /// log-spaced; otherwise all levels are positive (flat-reference mode).
    pub fn geometric(
        n_replicas: usize,
        beta_min: S,
        include_zero: bool,
    ) -> Result<Self, TemperingError> {
        if n_replicas < 2 || beta_min <= S::zero() || beta_min >= S::one() {
            return Err(TemperingError::InvalidSchedule);
        }
        let mut betas = Vec::with_capacity(n_replicas);
        if include_zero {
            betas.push(S::zero());
        }
        let m = n_replicas - usize::from(include_zero);
        for i in 0..m {
            if m == 1 {
                betas.push(S::one());
            } else {
                let expo = S::from_usize_exact(m - 1 - i) / S::from_usize_exact(m - 1);
                betas.push(beta_min.powf(expo));
            }
        }
        AnnealingSchedule::from_betas(betas)
    }

    pub fn betas(&self) -> &[S] {
        &self.betas
    }

    pub fn n_replicas(&self) -> usize {
        self.betas.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.betas.len() - 1
    }

    /// Rebalance the levels so each adjacent pair carries an equal share of
    /// the measured communication barrier: the cumulative rejection curve is
    /// interpolated piecewise-linearly in beta and inverted on an even grid.
    /// Endpoints are preserved; an all-zero rejection profile returns the
    /// schedule unchanged.
    pub fn rebalanced(&self, pair_rejection: &[S]) -> Result<Self, TemperingError> {
        if pair_rejection.len() != self.n_pairs() {
            return Err(TemperingError::InvalidSchedule);
        }
        let total: S = pair_rejection.iter().cloned().sum();
        if total <= S::zero() {
            return Ok(self.clone());
        }
        let n = self.n_pairs();
        let mut cumulative = Vec::with_capacity(n + 1);
        let mut acc = S::zero();
        cumulative.push(S::zero());
        for &r in pair_rejection {
            acc += r;
            cumulative.push(acc);
        }
        let mut betas = Vec::with_capacity(n + 1);
        betas.push(self.betas[0]);
        for k in 1..n {
            let level = total * S::from_usize_exact(k) / S::from_usize_exact(n);
            // find the segment holding this level and invert linearly
            let mut seg = 0;
            while seg + 1 < cumulative.len() && cumulative[seg + 1] < level {
                seg += 1;
            }
            let span = cumulative[seg + 1] - cumulative[seg];
            let frac = if span > S::zero() {
                (level - cumulative[seg]) / span
            } else {
                S::zero()
            };
            let beta = self.betas[seg] + frac * (self.betas[seg + 1] - self.betas[seg]);
            betas.push(beta);
        }
        betas.push(*self.betas.last().unwrap());
        // numerical ties can appear when whole segments carry zero rejection
        for i in 1..betas.len() {
            if betas[i] <= betas[i - 1] {
                betas[i] = betas[i - 1] + S::lit(1e-12);
            }
        }
        AnnealingSchedule::from_betas(betas)
    }
}

/// What sits at `beta = 0`.
#[derive(Clone, Copy)]
pub enum ReferenceMode<'a, S> {
    Gaussian(&'a GaussianReference<S>),
    /// No reference term; requires all levels positive.
    Flat,
}

impl<'a, S: Scalar> ReferenceMode<'a, S> {
    fn as_option(&self) -> Option<&'a GaussianReference<S>> {
        match self {
            ReferenceMode::Gaussian(r) => Some(r),
            ReferenceMode::Flat => None,
        }
    }
}

/// Annealed log-density at a single level. Consumes one path evaluation iff
/// `beta > 0`; at `beta = 0` only the (free) reference is touched.
pub fn annealed_log_density<S: Scalar>(
    beta: S,
    reference: &ReferenceMode<'_, S>,
    path: &dyn UnnormalizedDensity<S>,
    x: &[S],
) -> S {
    let omb = S::one() - beta;
    let mut acc = S::zero();
    if omb > S::zero() {
        if let ReferenceMode::Gaussian(r) = reference {
            acc += omb * r.log_density(x);
        }
    }
    if beta > S::zero() {
        acc += beta * path.log_density(x);
    }
    acc
}

pub fn gcb_from_rejections<S: Scalar>(pair_rejection: &[S]) -> S {
    pair_rejection.iter().cloned().sum()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PairStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl PairStats {
    fn rejection_rate<S: Scalar>(&self) -> S {
        if self.proposed == 0 {
            return S::nan();
        }
        S::lit((self.proposed - self.accepted) as f64 / self.proposed as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Rising,
    Falling,
}

#[derive(Debug, Clone)]
pub struct PtDiagnostics<S> {
    pub sweeps: u64,
    pub round_trips: u64,
    pub round_trip_rate: S,
    pub per_pair_rejection: Vec<S>,
    pub gcb_estimate: S,
}

/// How replicas start out.
pub enum EnsembleInit<S> {
    /// Every replica at the same point.
    AllAt(Vec<S>),
    /// Independent draws from the Gaussian reference.
    FromReference,
}

pub struct ReplicaEnsemble<'a, S: Scalar> {
    path: Box<dyn UnnormalizedDensity<S> + 'a>,
    reference: ReferenceMode<'a, S>,
    schedule: AnnealingSchedule<S>,
    kernel: KernelConfig<S>,
    replicas: Vec<ChainState<S>>,
    particle_at_slot: Vec<usize>,
    lineage: Vec<Option<Direction>>,
    pair_stats: Vec<PairStats>,
    sweeps: u64,
    round_trips: u64,
    slot_rngs: Vec<ChaCha8Rng>,
    swap_rng: ChaCha8Rng,
    exact_bottom_refresh: bool,
}

impl<'a, S: Scalar> ReplicaEnsemble<'a, S> {
    /// Build and initialize the ensemble. Costs one path evaluation per
    /// replica (the initial cache fill).
    pub fn new(
        path: Box<dyn UnnormalizedDensity<S> + 'a>,
        reference: ReferenceMode<'a, S>,
        schedule: AnnealingSchedule<S>,
        kernel: KernelConfig<S>,
        init: EnsembleInit<S>,
        master_seed: u64,
        stream_tag: u64,
    ) -> Result<Self, TemperingError> {
        let n = schedule.n_replicas();
        if matches!(reference, ReferenceMode::Flat) && schedule.betas()[0] <= S::zero() {
            return Err(TemperingError::FlatNeedsPositiveBetas);
        }
        let mut slot_rngs: Vec<ChaCha8Rng> = (0..n)
            .map(|i| derive_rng(master_seed, &[stream_tag, 1, i as u64]))
            .collect();
        let swap_rng = derive_rng(master_seed, &[stream_tag, 2]);
        let mut init_rng = derive_rng(master_seed, &[stream_tag, 3]);

        let opt_ref = reference.as_option();
        let mut replicas = Vec::with_capacity(n);
        for (slot, beta) in schedule.betas().iter().enumerate() {
            let x = match &init {
                EnsembleInit::AllAt(x) => x.clone(),
                EnsembleInit::FromReference => opt_ref
                    .ok_or(TemperingError::InitNeedsReference)?
                    .sample(&mut init_rng),
            };
            let split = SplitTarget {
                path: &*path,
                reference: opt_ref,
                beta: *beta,
            };
            let state = ChainState::init(x, &split, kernel.step_size, &mut slot_rngs[slot]);
            if !state.annealed_log_density(*beta).is_finite() {
                return Err(TemperingError::NonFiniteInit);
            }
            replicas.push(state);
        }

        let mut lineage = vec![None; n];
        lineage[0] = Some(Direction::Rising);
        lineage[n - 1] = Some(Direction::Falling);
        let pair_stats = vec![PairStats::default(); schedule.n_pairs()];

        let exact_bottom_refresh =
            schedule.betas()[0] == S::zero() && opt_ref.is_some();

        Ok(ReplicaEnsemble {
            path,
            reference,
            schedule,
            kernel,
            replicas,
            particle_at_slot: (0..n).collect(),
            lineage,
            pair_stats,
            sweeps: 0,
            round_trips: 0,
            slot_rngs,
            swap_rng,
            exact_bottom_refresh,
        })
    }

    pub fn schedule(&self) -> &AnnealingSchedule<S> {
        &self.schedule
    }

    pub fn n_replicas(&self) -> usize {
        self.replicas.len()
    }

    pub fn replica(&self, slot: usize) -> &ChainState<S> {
        &self.replicas[slot]
    }

    /// The replica at `beta = 1`.
    pub fn target_state(&self) -> &ChainState<S> {
        self.replicas.last().unwrap()
    }

    /// The replica at the lowest level.
    pub fn bottom_state(&self) -> &ChainState<S> {
        &self.replicas[0]
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn round_trips(&self) -> u64 {
        self.round_trips
    }

    /// Completed round trips per sweep, summed over the ensemble.
    pub fn round_trip_rate(&self) -> S {
        if self.sweeps == 0 {
            return S::zero();
        }
        S::lit(self.round_trips as f64 / self.sweeps as f64)
    }

    /// Log MH ratio for swapping pair `n`, assembled entirely from cached
    /// evaluations: no path evaluation happens here.
    pub fn swap_log_ratio(&self, n: usize) -> S {
        let (lo, hi) = (self.schedule.betas()[n], self.schedule.betas()[n + 1]);
        let (a, b) = (&self.replicas[n], &self.replicas[n + 1]);
        b.annealed_log_density(lo) + a.annealed_log_density(hi)
            - a.annealed_log_density(lo)
            - b.annealed_log_density(hi)
    }

    fn apply_swap(&mut self, n: usize) {
        let (left, right) = self.replicas.split_at_mut(n + 1);
        let a = &mut left[n];
        let b = &mut right[0];
        std::mem::swap(&mut a.position, &mut b.position);
        std::mem::swap(&mut a.ref_part, &mut b.ref_part);
        std::mem::swap(&mut a.path_part, &mut b.path_part);
        self.particle_at_slot.swap(n, n + 1);
    }

    /// One sweep: a local move per replica, then the parity round of swaps,
    /// then lineage bookkeeping. Costs exactly `n_replicas` path evaluations.
    pub fn sweep(&mut self) {
        let k = self.sweeps + 1;
        let opt_ref = self.reference.as_option();
        for slot in 0..self.replicas.len() {
            let beta = self.schedule.betas()[slot];
            if slot == 0 && self.exact_bottom_refresh {
                let reference = opt_ref.expect("exact refresh requires a reference");
                let x = reference.sample(&mut self.slot_rngs[0]);
                let split = SplitTarget {
                    path: &*self.path,
                    reference: opt_ref,
                    beta,
                };
                let (ref_part, path_part) = split.eval_parts(&x);
                let state = &mut self.replicas[0];
                state.position = x;
                state.ref_part = ref_part;
                state.path_part = path_part;
                continue;
            }
            let split = SplitTarget {
                path: &*self.path,
                reference: opt_ref,
                beta,
            };
            kernel_step(
                &mut self.replicas[slot],
                &split,
                &self.kernel,
                &mut self.slot_rngs[slot],
            );
        }

        for n in 0..self.pair_stats.len() {
            if n as u64 % 2 != k % 2 {
                continue;
            }
            self.pair_stats[n].proposed += 1;
            let log_ratio = self.swap_log_ratio(n);
            let u = S::unit_uniform(&mut self.swap_rng);
            if u.ln() < log_ratio {
                self.pair_stats[n].accepted += 1;
                self.apply_swap(n);
            }
        }

        let top = self.replicas.len() - 1;
        let p_top = self.particle_at_slot[top];
        self.lineage[p_top] = Some(Direction::Falling);
        let p_bottom = self.particle_at_slot[0];
        if self.lineage[p_bottom] == Some(Direction::Falling) {
            self.round_trips += 1;
        }
        self.lineage[p_bottom] = Some(Direction::Rising);

        self.sweeps = k;
    }

    pub fn run_sweeps(&mut self, count: usize) {
        for _ in 0..count {
            self.sweep();
        }
    }

    pub fn pair_rejection_rates(&self) -> Result<Vec<S>, TemperingError> {
        self.pair_stats
            .iter()
            .enumerate()
            .map(|(pair, s)| {
                if s.proposed == 0 {
                    Err(TemperingError::InsufficientSwapData { pair })
                } else {
                    Ok(s.rejection_rate())
                }
            })
            .collect()
    }

    /// Global communication barrier estimate: the sum of per-pair rejection
    /// rates. Needs at least one proposal on every pair.
    pub fn estimate_gcb(&self) -> Result<S, TemperingError> {
        Ok(gcb_from_rejections(&self.pair_rejection_rates()?))
    }

    pub fn diagnostics(&self) -> Result<PtDiagnostics<S>, TemperingError> {
        let per_pair_rejection = self.pair_rejection_rates()?;
        Ok(PtDiagnostics {
            sweeps: self.sweeps,
            round_trips: self.round_trips,
            round_trip_rate: self.round_trip_rate(),
            gcb_estimate: gcb_from_rejections(&per_pair_rejection),
            per_pair_rejection,
        })
    }

    /// Rebalanced schedule from the observed rejection profile.
    pub fn optimized_schedule(&self) -> Result<AnnealingSchedule<S>, TemperingError> {
        self.schedule.rebalanced(&self.pair_rejection_rates()?)
    }

    /// Install a new schedule, resetting swap statistics and lineage but
    /// keeping replica states. Levels move, so cached annealed values stay
    /// valid (the parts are cached separately from any level).
    pub fn set_schedule(&mut self, schedule: AnnealingSchedule<S>) -> Result<(), TemperingError> {
        if schedule.n_replicas() != self.replicas.len() {
            return Err(TemperingError::InvalidSchedule);
        }
        if matches!(self.reference, ReferenceMode::Flat) && schedule.betas()[0] <= S::zero() {
            return Err(TemperingError::FlatNeedsPositiveBetas);
        }
        self.schedule = schedule;
        for s in &mut self.pair_stats {
            *s = PairStats::default();
        }
        let n = self.replicas.len();
        self.lineage = vec![None; n];
        self.lineage[self.particle_at_slot[0]] = Some(Direction::Rising);
        self.lineage[self.particle_at_slot[n - 1]] = Some(Direction::Falling);
        self.exact_bottom_refresh =
            self.schedule.betas()[0] == S::zero() && self.reference.as_option().is_some();
        Ok(())
    }

    /// Move every replica to a new path time of a pushforward family:
    /// positions are carried by the map, cached path evaluations are
    /// re-derived from the cached source evaluations, and kernel step sizes
    /// are rescaled by `t_new / t_old` so each replica keeps driving the
    /// pushforward of the same source-space kernel. Zero path evaluations.
    ///
    /// `new_path` must be the same family evaluated at `t_new`; the caller
    /// owns that invariant (this method cannot check it).
    pub fn retime(
        &mut self,
        interpolant: &dyn crate::interpolant::Interpolant<S>,
        t_old: S,
        t_new: S,
        new_path: Box<dyn UnnormalizedDensity<S> + 'a>,
    ) {
        use crate::interpolant::ConditionalPath;
        self.path = new_path;
        let opt_ref = self.reference.as_option();
        for state in &mut self.replicas {
            let source_x = interpolant.inverse(t_old, &state.position);
            let new_pos = interpolant.forward(t_new, &source_x);
            let source = Eval {
                log_density: state.path_part.log_density
                    + interpolant.log_det_jacobian(t_old),
                score: interpolant.pullback_score(t_old, &state.path_part.score),
            };
            state.path_part = ConditionalPath::rederive_at(interpolant, t_new, &source);
            state.ref_part = match opt_ref {
                Some(r) => r.eval(&new_pos),
                None => Eval::zeros(new_pos.len()),
            };
            state.position = new_pos;
            state.step_size = state.step_size * (t_new / t_old);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{GaussianMixture, Target};
    use approx::assert_relative_eq;

    fn gaussian_target(mean: f64) -> Target<f64> {
        Target::new(GaussianMixture::isotropic(vec![vec![mean]]).unwrap())
    }

    #[test]
    fn geometric_schedule_is_log_spaced() {
        let s = AnnealingSchedule::<f64>::geometric(5, 1e-3, false).unwrap();
        let expect = [
            1e-3,
            0.005623413251903491,
            0.03162277660168379,
            0.1778279410038923,
            1.0,
        ];
        for (b, e) in s.betas().iter().zip(&expect) {
            assert_relative_eq!(b, e, max_relative = 1e-12);
        }
        let z = AnnealingSchedule::<f64>::geometric(4, 0.01, true).unwrap();
        assert_eq!(z.betas()[0], 0.0);
        assert_relative_eq!(z.betas()[1], 0.01, max_relative = 1e-12);
        assert_relative_eq!(z.betas()[2], 0.1, max_relative = 1e-12);
        assert_eq!(z.betas()[3], 1.0);
    }

    #[test]
    fn schedule_validation_rejects_bad_input() {
        assert!(AnnealingSchedule::from_betas(vec![0.0, 0.5]).is_err());
        assert!(AnnealingSchedule::from_betas(vec![0.5, 0.5, 1.0]).is_err());
        assert!(AnnealingSchedule::from_betas(vec![1.0]).is_err());
        assert!(AnnealingSchedule::from_betas(vec![-0.1, 1.0]).is_err());
        assert!(AnnealingSchedule::from_betas(vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn rebalancing_equalizes_the_barrier() {
        let s = AnnealingSchedule::from_betas(vec![0.0, 0.5, 1.0]).unwrap();
        // cumulative rejections: knots (0, 0.3, 0.4); even split at 0.2
        // lands a third of the way into [0, 0.5]
        let r = s.rebalanced(&[0.3, 0.1]).unwrap();
        assert_relative_eq!(r.betas()[1], 0.5 * (0.2 / 0.3), max_relative = 1e-12);
        assert_eq!(r.betas()[0], 0.0);
        assert_eq!(r.betas()[2], 1.0);

        // already balanced: schedule unchanged
        let s2 = AnnealingSchedule::from_betas(vec![0.0, 0.2, 0.7, 1.0]).unwrap();
        let r2 = s2.rebalanced(&[0.25, 0.25, 0.25]).unwrap();
        for (a, b) in s2.betas().iter().zip(r2.betas()) {
            assert_relative_eq!(a, b, epsilon = 1e-6);
        }

        // no signal: schedule unchanged
        let r3 = s2.rebalanced(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s2.betas(), r3.betas());
    }

    #[test]
    fn annealed_log_density_charges_only_positive_levels() {
        let t = gaussian_target(1.0);
        let reference = GaussianReference::unit(vec![0.0f64]);
        let mode = ReferenceMode::Gaussian(&reference);
        let x = [0.4];
        let v0 = annealed_log_density(0.0, &mode, &t, &x);
        assert_eq!(t.evaluations(), 0);
        assert_relative_eq!(v0, reference.log_density(&x), max_relative = 1e-14);
        let v_half = annealed_log_density(0.5, &mode, &t, &x);
        assert_eq!(t.evaluations(), 1);
        let expect = 0.5 * reference.log_density(&x) + 0.5 * t.fork().log_density(&x);
        assert_relative_eq!(v_half, expect, max_relative = 1e-14);
        let flat = annealed_log_density(0.5, &ReferenceMode::Flat, &t, &x);
        assert_relative_eq!(flat, 0.5 * t.fork().log_density(&x), max_relative = 1e-14);
    }

    #[test]
    fn sweeps_cost_one_evaluation_per_replica() {
        let t = gaussian_target(1.5);
        let reference = GaussianReference::unit(vec![0.0f64]);
        let schedule = AnnealingSchedule::from_betas(vec![0.0, 0.5, 1.0]).unwrap();
        let mut ens = ReplicaEnsemble::new(
            Box::new(&t),
            ReferenceMode::Gaussian(&reference),
            schedule,
            KernelConfig::mala(0.8),
            EnsembleInit::AllAt(vec![0.0]),
            7,
            0,
        )
        .unwrap();
        assert_eq!(t.evaluations(), 3);
        ens.run_sweeps(50);
        assert_eq!(t.evaluations(), 3 + 50 * 3);
    }

    #[test]
    fn swap_is_an_involution_and_costs_nothing() {
        let t = gaussian_target(1.5);
        let reference = GaussianReference::unit(vec![0.0f64]);
        let schedule = AnnealingSchedule::from_betas(vec![0.0, 0.4, 1.0]).unwrap();
        let mut ens = ReplicaEnsemble::new(
            Box::new(&t),
            ReferenceMode::Gaussian(&reference),
            schedule,
            KernelConfig::mala(0.8),
            EnsembleInit::FromReference,
            11,
            0,
        )
        .unwrap();
        ens.run_sweeps(5);
        let before_evals = t.evaluations();
        let pos: Vec<Vec<f64>> = (0..3).map(|i| ens.replica(i).position.clone()).collect();
        let lp: Vec<f64> = (0..3).map(|i| ens.replica(i).path_part.log_density).collect();
        ens.swap_log_ratio(0);
        ens.swap_log_ratio(1);
        ens.apply_swap(1);
        ens.apply_swap(1);
        for i in 0..3 {
            assert_eq!(ens.replica(i).position, pos[i]);
            assert_eq!(ens.replica(i).path_part.log_density, lp[i]);
        }
        assert_eq!(t.evaluations(), before_evals);
    }

    #[test]
    fn swap_ratio_matches_the_geometric_path_identity() {
        let t = gaussian_target(2.0);
        let reference = GaussianReference::unit(vec![0.0f64]);
        let schedule = AnnealingSchedule::from_betas(vec![0.0, 0.3, 1.0]).unwrap();
        let mut ens = ReplicaEnsemble::new(
            Box::new(&t),
            ReferenceMode::Gaussian(&reference),
            schedule,
            KernelConfig::mala(0.8),
            EnsembleInit::FromReference,
            13,
            0,
        )
        .unwrap();
        ens.run_sweeps(3);
        for n in 0..2 {
            let a = ens.replica(n);
            let b = ens.replica(n + 1);
            let ell = |s: &ChainState<f64>| s.path_part.log_density - s.ref_part.log_density;
            let d_beta = ens.schedule().betas()[n + 1] - ens.schedule().betas()[n];
            let identity = d_beta * (ell(a) - ell(b));
            assert_relative_eq!(ens.swap_log_ratio(n), identity, max_relative = 1e-11, epsilon = 1e-11);
        }
    }

    #[test]
    fn proposed_pair_parity_alternates() {
        let t = gaussian_target(0.5);
        let reference = GaussianReference::unit(vec![0.0f64]);
        let schedule = AnnealingSchedule::from_betas(vec![0.0, 0.2, 0.6, 1.0]).unwrap();
        let mut ens = ReplicaEnsemble::new(
            Box::new(&t),
            ReferenceMode::Gaussian(&reference),
            schedule,
            KernelConfig::mala(0.8),
            EnsembleInit::FromReference,
            17,
            0,
        )
        .unwrap();
        // sweep 1 proposes odd pairs, sweep 2 even pairs
        ens.sweep();
        assert_eq!(ens.pair_stats[0].proposed, 0);
        assert_eq!(ens.pair_stats[1].proposed, 1);
        assert_eq!(ens.pair_stats[2].proposed, 0);
        ens.sweep();
        assert_eq!(ens.pair_stats[0].proposed, 1);
        assert_eq!(ens.pair_stats[1].proposed, 1);
        assert_eq!(ens.pair_stats[2].proposed, 1);
    }

    #[test]
    fn always_accepted_swaps_complete_one_round_trip_per_two_sweeps() {
        // path identical to the reference: the swap ratio is exactly zero,
        // every proposal accepts, and the ensemble round-trips like clockwork
        let t = gaussian_target(0.0);
        let reference = GaussianReference::unit(vec![0.0f64]);
        for betas in [vec![0.0, 1.0], vec![0.0, 0.5, 1.0]] {
            let mut ens = ReplicaEnsemble::new(
                Box::new(&t),
                ReferenceMode::Gaussian(&reference),
                AnnealingSchedule::from_betas(betas).unwrap(),
                KernelConfig::mala(1.0),
                EnsembleInit::FromReference,
                19,
                0,
            )
            .unwrap();
            let k = 400;
            ens.run_sweeps(k);
            assert_eq!(ens.round_trips(), (k as u64) / 2);
            let diag = ens.diagnostics().unwrap();
            assert_relative_eq!(diag.gcb_estimate, 0.0);
            assert_relative_eq!(diag.round_trip_rate, 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn gcb_sums_rejection_rates() {
        assert_relative_eq!(gcb_from_rejections(&[1.0f64, 1.0, 1.0]), 3.0);
        assert_relative_eq!(gcb_from_rejections(&[0.0f64, 0.0]), 0.0);
        assert_relative_eq!(gcb_from_rejections(&[0.25f64, 0.5]), 0.75);
    }

    #[test]
    fn diagnostics_error_until_every_pair_was_proposed() {
        let t = gaussian_target(1.0);
        let reference = GaussianReference::unit(vec![0.0f64]);
        let schedule = AnnealingSchedule::from_betas(vec![0.0, 0.5, 1.0]).unwrap();
        let mut ens = ReplicaEnsemble::new(
            Box::new(&t),
            ReferenceMode::Gaussian(&reference),
            schedule,
            KernelConfig::mala(0.8),
            EnsembleInit::FromReference,
            23,
            0,
        )
        .unwrap();
        assert!(matches!(
            ens.estimate_gcb(),
            Err(TemperingError::InsufficientSwapData { .. })
        ));
        ens.sweep();
        assert!(ens.estimate_gcb().is_err());
        ens.sweep();
        assert!(ens.estimate_gcb().is_ok());
    }

    #[test]
    fn stationary_marginals_and_independence_match_the_product_measure() {
        // all-Gaussian setup: pi_beta is Gaussian with precision
        // (1 - b)/1 + b and mean b * m / precision, checkable exactly
        let m = 1.5f64;
        let t = gaussian_target(m);
        let reference = GaussianReference::unit(vec![0.0f64]);
        let schedule = AnnealingSchedule::from_betas(vec![0.0, 0.5, 1.0]).unwrap();
        let mut ens = ReplicaEnsemble::new(
            Box::new(&t),
            ReferenceMode::Gaussian(&reference),
            schedule,
            KernelConfig::mala(1.2),
            EnsembleInit::FromReference,
            29,
            0,
        )
        .unwrap();
        let sweeps = 60_000;
        let burn = 2000;
        let mut samples: Vec<[f64; 3]> = Vec::with_capacity(sweeps - burn);
        for i in 0..sweeps {
            ens.sweep();
            if i >= burn {
                samples.push([
                    ens.replica(0).position[0],
                    ens.replica(1).position[0],
                    ens.replica(2).position[0],
                ]);
            }
        }
        let n = samples.len() as f64;
        for (slot, beta) in [(0usize, 0.0f64), (1, 0.5), (2, 1.0)] {
            let mean_expect = beta * m;
            let mean: f64 = samples.iter().map(|s| s[slot]).sum::<f64>() / n;
            let var: f64 =
                samples.iter().map(|s| (s[slot] - mean).powi(2)).sum::<f64>() / n;
            assert_relative_eq!(mean, mean_expect, epsilon = 0.05);
            assert_relative_eq!(var, 1.0, epsilon = 0.08);
        }
        // product measure: bottom and top replicas are independent
        let mu0: f64 = samples.iter().map(|s| s[0]).sum::<f64>() / n;
        let mu2: f64 = samples.iter().map(|s| s[2]).sum::<f64>() / n;
        let cov: f64 = samples
            .iter()
            .map(|s| (s[0] - mu0) * (s[2] - mu2))
            .sum::<f64>()
            / n;
        assert!(cov.abs() < 0.05, "cross-replica covariance {cov}");

        // brute-force joint check: 3x3 quantile grid TV against the product
        let thirds = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (v[v.len() / 3], v[2 * v.len() / 3])
        };
        let mut v0: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        let mut v2: Vec<f64> = samples.iter().map(|s| s[2]).collect();
        let (q0a, q0b) = thirds(&mut v0);
        let (q2a, q2b) = thirds(&mut v2);
        let cell = |x: f64, a: f64, b: f64| usize::from(x >= a) + usize::from(x >= b);
        let mut joint = [[0.0f64; 3]; 3];
        for s in &samples {
            joint[cell(s[0], q0a, q0b)][cell(s[2], q2a, q2b)] += 1.0 / n;
        }
        let mut tv = 0.0;
        for row in joint.iter() {
            let pi: f64 = row.iter().sum();
            for (j, &pij) in row.iter().enumerate() {
                let pj: f64 = joint.iter().map(|r| r[j]).sum();
                tv += (pij - pi * pj).abs();
            }
        }
        tv *= 0.5;
        assert!(tv < 0.02, "joint/product TV {tv}");
    }
}
