//! Two-stage conditional sampler.
//!
//! Stage 1 equilibrates the contracted conditional `nu_{t0|z}` with the
//! replica ensemble from [`crate::tempering`], annealing between the run
//! reference and the conditional path density. Stage 2 transports the result
//! to the target at `t = 1`, either by Euler-Maruyama on the closed-form
//! transport SDE (optionally interleaved with Metropolis correctors), by
//! Euler on the noise-free velocity ODE, or by the one-shot inverse of the
//! interpolation map.
//!
//! Evaluation budget per chain, enforced by the tests down to the unit:
//! stage 1 costs `R * (K + 1)` path evaluations (`R` replicas, `K` sweeps,
//! one ensemble init), the SDE transport costs `N * (1 + M * c)` (`N` time
//! steps, `M` corrector steps of per-step cost `c`), and the ODE and
//! inverse-map transports cost nothing. Every drift is assembled from the
//! evaluation cached by the previous corrector or init, never paid twice.
//!
//! The initial time can be tuned online: the symmetrized KL between the
//! reference and the conditional has a Monte Carlo time-gradient that is
//! free to evaluate from ensemble caches, and the ensemble itself can be
//! carried to the updated time without new evaluations (see
//! [`ReplicaEnsemble::retime`]).

use rand::Rng;

use crate::interpolant::{min_time, ConditionalPath, Interpolant, InterpolantError};
use crate::kernels::{kernel_step, ChainState, KernelConfig, SplitTarget};
use crate::math::add_scaled;
use crate::rng::derive_rng;
use crate::scalar::Scalar;
use crate::targets::{Eval, GaussianReference, Target};
use crate::tempering::{
    AnnealingSchedule, EnsembleInit, PtDiagnostics, ReferenceMode, ReplicaEnsemble,
    TemperingError,
};

// Per-chain RNG stream ids. The ensemble consumes {1, 2, 3} internally.
const STREAM_STAGE2: u64 = 4;
const STREAM_ANCHOR: u64 = 6;

#[derive(Debug, thiserror::Error)]
pub enum CdsError {
    #[error(transparent)]
    Interpolant(#[from] InterpolantError),
    #[error(transparent)]
    Tempering(#[from] TemperingError),
    #[error("time grid must rise strictly from a time at or above the floor to exactly 1")]
    InvalidTimeGrid,
    #[error("noise schedule must be finite, nonnegative, and match the step count")]
    InvalidNoiseSchedule,
    #[error("an explicit time grid cannot be combined with initial-time search")]
    GridSearchConflict,
    #[error("explicit time grid must start at the configured initial time")]
    GridStartMismatch,
    #[error("sample sets for the SKL time gradient must be non-empty")]
    EmptySampleSet,
    #[error("chain state became non-finite at integration step {step}")]
    ChainDiverged { step: usize },
}

/// How stage-2 carries stage-1 output to `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    /// Euler-Maruyama on the transport SDE with optional correctors.
    Sde,
    /// Euler on the velocity field; zero evaluations.
    Ode,
    /// One application of the inverse interpolation map; zero evaluations.
    InverseMap,
}

/// Where the anchor `z` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorMode {
    /// The reference mean (a located mode).
    ReferenceMean,
    /// A fresh draw from the reference per chain.
    Sampled,
}

/// Integration grid specification; realized against the (possibly tuned)
/// initial time, so `t0 = 1` always degenerates to the single point `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeGrid<S> {
    Uniform { steps: usize },
    /// Log-spaced: finer near the singular small-time end.
    Geometric { steps: usize },
    Explicit(Vec<S>),
}

impl<S: Scalar> TimeGrid<S> {
    /// Concrete times `t0 < t1 < ... < 1`.
    pub fn realize(&self, t0: S) -> Result<Vec<S>, CdsError> {
        if !(t0 >= min_time::<S>() && t0 <= S::one()) {
            return Err(CdsError::InvalidTimeGrid);
        }
        let times = match self {
            TimeGrid::Uniform { steps } => {
                if t0 == S::one() {
                    return Ok(vec![S::one()]);
                }
                if *steps == 0 {
                    return Err(CdsError::InvalidTimeGrid);
                }
                let n = S::from_usize_exact(*steps);
                let mut v: Vec<S> = (0..*steps)
                    .map(|i| t0 + (S::one() - t0) * S::from_usize_exact(i) / n)
                    .collect();
                v.push(S::one());
                v
            }
            TimeGrid::Geometric { steps } => {
                if t0 == S::one() {
                    return Ok(vec![S::one()]);
                }
                if *steps == 0 {
                    return Err(CdsError::InvalidTimeGrid);
                }
                let n = S::from_usize_exact(*steps);
                let mut v: Vec<S> = (0..*steps)
                    .map(|i| t0.powf((n - S::from_usize_exact(i)) / n))
                    .collect();
                v.push(S::one());
                v
            }
            TimeGrid::Explicit(v) => {
                if v.first() != Some(&t0) {
                    return Err(CdsError::GridStartMismatch);
                }
                v.clone()
            }
        };
        validate_times(&times)?;
        Ok(times)
    }
}

fn validate_times<S: Scalar>(times: &[S]) -> Result<(), CdsError> {
    let ok = !times.is_empty()
        && *times.last().unwrap() == S::one()
        && times[0] >= min_time::<S>()
        && times.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(CdsError::InvalidTimeGrid)
    }
}

/// Diffusion scale per integration step.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSchedule<S> {
    Constant(S),
    /// Linear in the step index from `start` to `end` inclusive.
    Linear { start: S, end: S },
    Explicit(Vec<S>),
}

impl<S: Scalar> NoiseSchedule<S> {
    pub fn value(&self, step: usize, n_steps: usize) -> S {
        match self {
            NoiseSchedule::Constant(s) => *s,
            NoiseSchedule::Linear { start, end } => {
                if n_steps <= 1 {
                    *start
                } else {
                    let f = S::from_usize_exact(step) / S::from_usize_exact(n_steps - 1);
                    *start + (*end - *start) * f
                }
            }
            NoiseSchedule::Explicit(v) => v[step],
        }
    }

    pub fn validate(&self, n_steps: usize) -> Result<(), CdsError> {
        fn fine<S: Scalar>(s: &S) -> bool {
            s.is_finite() && *s >= S::zero()
        }
        let ok = match self {
            NoiseSchedule::Constant(s) => fine(s),
            NoiseSchedule::Linear { start, end } => fine(start) && fine(end),
            NoiseSchedule::Explicit(v) => v.len() == n_steps && v.iter().all(fine),
        };
        if ok {
            Ok(())
        } else {
            Err(CdsError::InvalidNoiseSchedule)
        }
    }
}

/// Online initial-time tuning by projected stochastic gradient descent on
/// the symmetrized KL, run over the first sweeps of stage 1.
#[derive(Debug, Clone, Copy)]
pub struct T0Search<S> {
    pub iterations: usize,
    pub learning_rate: S,
}

/// Stage-1 ensemble settings.
#[derive(Clone)]
pub struct PtSettings<S> {
    pub schedule: AnnealingSchedule<S>,
    pub kernel: KernelConfig<S>,
    /// Sweeps `K`; 0 returns the anchor untouched.
    pub sweeps: usize,
}

#[derive(Clone)]
pub struct CdsConfig<S> {
    pub t0: S,
    pub grid: TimeGrid<S>,
    pub noise: NoiseSchedule<S>,
    pub pt: PtSettings<S>,
    pub transport: Transport,
    /// Corrector steps `M` after each SDE step; 0 disables correction.
    pub corrector_steps: usize,
    pub corrector: KernelConfig<S>,
    pub anchor: AnchorMode,
    /// Skip stage 1 entirely and start the transport at `z`. Exists to
    /// reproduce a known failure mode; not a recommended setting.
    pub deterministic_init: bool,
    pub t0_search: Option<T0Search<S>>,
}

impl<S: Scalar> CdsConfig<S> {
    pub fn validate(&self) -> Result<(), CdsError> {
        if !(self.t0 >= min_time::<S>() && self.t0 <= S::one()) {
            return Err(CdsError::InvalidTimeGrid);
        }
        if self.t0_search.is_some() && matches!(self.grid, TimeGrid::Explicit(_)) {
            return Err(CdsError::GridSearchConflict);
        }
        let times = self.grid.realize(self.t0)?;
        self.noise.validate(times.len() - 1)
    }
}

/// Split a total per-chain evaluation budget into stage-1 sweeps `K` and
/// integration steps `N`: stage 1 receives `rho * total` and pays
/// `n_replicas` per sweep plus the init, stage 2 receives the rest and pays
/// `1 + corrector_steps * corrector_cost` per step. The returned pair is the
/// plan; the evaluation counter remains the authority on what was spent.
pub fn split_budget<S: Scalar>(
    total: u64,
    rho: S,
    n_replicas: usize,
    corrector_steps: usize,
    corrector_cost: u64,
) -> (usize, usize) {
    let stage1 = (rho * S::lit(total as f64)).to_f64_lossy().floor() as u64;
    let stage2 = total.saturating_sub(stage1);
    let r = n_replicas as u64;
    let sweeps = (stage1 / r).saturating_sub(1) as usize;
    let per_step = 1 + corrector_steps as u64 * corrector_cost;
    let steps = (stage2 / per_step).max(1) as usize;
    (sweeps, steps)
}

/// A position together with the path evaluation cached at it.
#[derive(Debug, Clone)]
pub struct CachedParticle<S> {
    pub position: Vec<S>,
    pub path_eval: Eval<S>,
}

/// Borrowed view of a cached particle; what the SKL estimator consumes.
#[derive(Clone, Copy)]
pub struct ParticleView<'p, S> {
    pub position: &'p [S],
    pub path_eval: &'p Eval<S>,
}

impl<'p, S: Scalar> From<&'p ChainState<S>> for ParticleView<'p, S> {
    fn from(state: &'p ChainState<S>) -> Self {
        ParticleView {
            position: &state.position,
            path_eval: &state.path_part,
        }
    }
}

impl<'p, S: Scalar> From<&'p CachedParticle<S>> for ParticleView<'p, S> {
    fn from(p: &'p CachedParticle<S>) -> Self {
        ParticleView {
            position: &p.position,
            path_eval: &p.path_eval,
        }
    }
}

pub struct Stage1Output<S> {
    /// The `beta = 1` replica: a draw from the contracted conditional, with
    /// its cached path evaluation for the first transport step.
    pub particle: CachedParticle<S>,
    /// Initial time actually in force (tuned when search was enabled).
    pub t0: S,
    /// Absent when too few sweeps ran to propose every swap pair.
    pub diagnostics: Option<PtDiagnostics<S>>,
}

/// Stage 1: equilibrate `nu_{t0|z}` by replica exchange, all replicas
/// initialized at the anchor. Costs `n_replicas * (sweeps + 1)` evaluations.
///
/// The configured kernel step size is premultiplied by `t0`: a step sensible
/// on the target is carried to the contracted conditional by the map, which
/// is exactly the pushforward-kernel rescaling.
pub fn stage1<S: Scalar>(
    target: &Target<S>,
    interpolant: &dyn Interpolant<S>,
    reference: &GaussianReference<S>,
    t0: S,
    pt: &PtSettings<S>,
    search: Option<&T0Search<S>>,
    master_seed: u64,
    stream_tag: u64,
) -> Result<Stage1Output<S>, CdsError> {
    let z = interpolant.anchor().to_vec();
    let path = ConditionalPath::new(target, interpolant, t0)?;
    let mut kernel = pt.kernel.clone();
    kernel.step_size = kernel.step_size * t0;
    let mut ens = ReplicaEnsemble::new(
        Box::new(path),
        ReferenceMode::Gaussian(reference),
        pt.schedule.clone(),
        kernel,
        EnsembleInit::AllAt(z),
        master_seed,
        stream_tag,
    )?;

    let mut t = t0;
    let search_sweeps = search.map_or(0, |s| s.iterations.min(pt.sweeps));
    for _ in 0..search_sweeps {
        ens.sweep();
        let s = search.expect("search_sweeps > 0 implies search");
        let grad = skl_time_gradient(
            t,
            interpolant.anchor(),
            reference,
            &[ParticleView::from(ens.target_state())],
            &[ParticleView::from(ens.bottom_state())],
        )?;
        let t_new = (t - s.learning_rate * grad)
            .max(min_time::<S>())
            .min(S::one() - min_time::<S>());
        if t_new != t {
            let new_path = ConditionalPath::new(target, interpolant, t_new)?;
            ens.retime(interpolant, t, t_new, Box::new(new_path));
            t = t_new;
        }
    }
    for _ in search_sweeps..pt.sweeps {
        ens.sweep();
    }

    let state = ens.target_state();
    Ok(Stage1Output {
        particle: CachedParticle {
            position: state.position.clone(),
            path_eval: state.path_part.clone(),
        },
        t0: t,
        diagnostics: ens.diagnostics().ok(),
    })
}

/// Monte Carlo estimate of the time derivative of the symmetrized KL
/// between the reference and the conditional at time `t`:
///
/// ```text
/// d/dt SKL = E_{nu_t}[ s_t(x) (log pi_t(x) - log r(x)) ] - E_r[ s_t(x) ]
/// s_t(x)   = -D/t - (1/t) (x - z)' grad log pi_t(x)
/// ```
///
/// `cond` holds draws from the conditional, `refs` draws from the reference,
/// both with cached path evaluations at `t`; nothing here evaluates the
/// target. The conditional may be unnormalized: `E_{nu_t}[s_t] = 0`, so the
/// missing constant cancels in expectation.
pub fn skl_time_gradient<S: Scalar>(
    t: S,
    anchor: &[S],
    reference: &GaussianReference<S>,
    cond: &[ParticleView<'_, S>],
    refs: &[ParticleView<'_, S>],
) -> Result<S, CdsError> {
    if cond.is_empty() || refs.is_empty() {
        return Err(CdsError::EmptySampleSet);
    }
    let mut term1 = S::zero();
    for p in cond {
        let ratio = p.path_eval.log_density - reference.log_density(p.position);
        term1 += time_score(t, anchor, p) * ratio;
    }
    term1 /= S::from_usize_exact(cond.len());
    let mut term2 = S::zero();
    for p in refs {
        term2 += time_score(t, anchor, p);
    }
    term2 /= S::from_usize_exact(refs.len());
    Ok(term1 - term2)
}

/// `d/dt log pi_t(x)` at fixed `x`, from the cached path score.
fn time_score<S: Scalar>(t: S, anchor: &[S], p: &ParticleView<'_, S>) -> S {
    let d = S::from_usize_exact(anchor.len());
    let mut dot = S::zero();
    for ((&x, &z), &s) in p.position.iter().zip(anchor).zip(&p.path_eval.score) {
        dot += (x - z) * s;
    }
    -(d + dot) / t
}

/// Standalone initial-time tuning: runs its own short ensemble and returns
/// the tuned time, clamped to `[t_min, 1 - t_min]`. A zero learning rate or
/// zero iterations return `initial_t` (clamped) unchanged.
pub fn optimize_t0<S: Scalar>(
    target: &Target<S>,
    interpolant: &dyn Interpolant<S>,
    reference: &GaussianReference<S>,
    pt: &PtSettings<S>,
    initial_t: S,
    iterations: usize,
    learning_rate: S,
    master_seed: u64,
) -> Result<S, CdsError> {
    let mut settings = pt.clone();
    settings.sweeps = iterations;
    let search = T0Search {
        iterations,
        learning_rate,
    };
    let out = stage1(
        target,
        interpolant,
        reference,
        initial_t.max(min_time::<S>()).min(S::one() - min_time::<S>()),
        &settings,
        Some(&search),
        master_seed,
        0,
    )?;
    Ok(out.t0)
}

/// Stage 2, diffusion flavor: Euler-Maruyama over `times` with `M` corrector
/// steps after each move, chained so every drift reuses the evaluation the
/// previous corrector (or step init) cached. Exactly
/// `(times.len() - 1) * (1 + M * corrector.evals_per_step())` evaluations.
///
/// Corrector step sizes follow the current time (`base * t`), the
/// pushforward scaling of a fixed source-space step.
pub fn stage2_sde<S: Scalar, R: Rng + ?Sized>(
    target: &Target<S>,
    interpolant: &dyn Interpolant<S>,
    particle: CachedParticle<S>,
    times: &[S],
    noise: &NoiseSchedule<S>,
    corrector: &KernelConfig<S>,
    corrector_steps: usize,
    rng: &mut R,
) -> Result<Vec<S>, CdsError> {
    let mut path = stage2_sde_path(
        target,
        interpolant,
        particle,
        times,
        noise,
        corrector,
        corrector_steps,
        rng,
    )?;
    Ok(path.pop().expect("grid is non-empty"))
}

/// [`stage2_sde`] keeping the whole trajectory: one position per grid time,
/// the first being the incoming particle. Same cost, same stream draws.
pub fn stage2_sde_path<S: Scalar, R: Rng + ?Sized>(
    target: &Target<S>,
    interpolant: &dyn Interpolant<S>,
    particle: CachedParticle<S>,
    times: &[S],
    noise: &NoiseSchedule<S>,
    corrector: &KernelConfig<S>,
    corrector_steps: usize,
    rng: &mut R,
) -> Result<Vec<Vec<S>>, CdsError> {
    validate_times(times)?;
    let n_steps = times.len() - 1;
    noise.validate(n_steps)?;
    let dim = target.dim();
    let mut trajectory = Vec::with_capacity(times.len());
    let mut x = particle.position;
    let mut cache = particle.path_eval;
    trajectory.push(x.clone());
    for n in 0..n_steps {
        let (t, t_next) = (times[n], times[n + 1]);
        let dt = t_next - t;
        let sigma = noise.value(n, n_steps);
        let path = ConditionalPath::new(target, interpolant, t)?;
        let drift = path.drift_from_cache(&x, sigma, &cache);
        let scale = sigma * dt.sqrt();
        for i in 0..dim {
            // noise is drawn even at sigma = 0 to keep streams aligned
            let xi = S::std_normal(rng);
            x[i] += dt * drift[i] + scale * xi;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(CdsError::ChainDiverged { step: n });
        }
        let path_next = ConditionalPath::new(target, interpolant, t_next)?;
        let split = SplitTarget::plain(&path_next);
        let mut kernel = corrector.clone();
        kernel.step_size = kernel.step_size * t_next;
        let mut state = ChainState::init(x, &split, kernel.step_size, rng);
        for _ in 0..corrector_steps {
            kernel_step(&mut state, &split, &kernel, rng);
        }
        if !state.position.iter().all(|v| v.is_finite()) || !state.path_part.is_finite() {
            return Err(CdsError::ChainDiverged { step: n });
        }
        x = state.position;
        cache = state.path_part;
        trajectory.push(x.clone());
    }
    Ok(trajectory)
}

/// Stage 2, deterministic flavor: Euler on the velocity field. Zero target
/// evaluations; for the linear interpolant the exact flow is
/// `x(1) = z + (x(t0) - z) / t0`.
pub fn stage2_ode<S: Scalar>(
    interpolant: &dyn Interpolant<S>,
    x0: Vec<S>,
    times: &[S],
) -> Result<Vec<S>, CdsError> {
    validate_times(times)?;
    let mut x = x0;
    for n in 0..times.len() - 1 {
        let dt = times[n + 1] - times[n];
        let u = interpolant.velocity(times[n], &x);
        x = add_scaled(&x, dt, &u);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(CdsError::ChainDiverged { step: n });
        }
    }
    Ok(x)
}

/// Stage 2, one-shot flavor: pull the particle back through the map. Zero
/// target evaluations.
pub fn inverse_map_transport<S: Scalar>(
    interpolant: &dyn Interpolant<S>,
    t0: S,
    x0: &[S],
) -> Vec<S> {
    interpolant.inverse(t0, x0)
}

/// Everything one chain reports besides its sample.
#[derive(Debug, Clone)]
pub struct ChainReport<S> {
    pub anchor: Vec<S>,
    /// Initial time in force for the transport (tuned when search ran).
    pub t0: S,
    pub stage1_evals: u64,
    pub stage2_evals: u64,
    pub stage1: Option<PtDiagnostics<S>>,
    /// Integration step at which the chain died, if it did.
    pub diverged_at_step: Option<usize>,
}

pub struct CdsRun<S> {
    /// Terminal samples of the chains that finished.
    pub samples: Vec<Vec<S>>,
    pub reports: Vec<ChainReport<S>>,
    pub stage1_evals: u64,
    pub stage2_evals: u64,
}

impl<S> CdsRun<S> {
    pub fn total_evals(&self) -> u64 {
        self.stage1_evals + self.stage2_evals
    }
}

/// Run one chain against its own evaluation ledger (callers fork the master
/// target). Deterministic given `(seed, chain)`; chains never share streams.
pub fn run_chain<S: Scalar>(
    target: &Target<S>,
    reference: &GaussianReference<S>,
    cfg: &CdsConfig<S>,
    seed: u64,
    chain: u64,
) -> Result<(Option<Vec<S>>, ChainReport<S>), CdsError> {
    let z = match cfg.anchor {
        AnchorMode::ReferenceMean => reference.mean().to_vec(),
        AnchorMode::Sampled => {
            let mut rng = derive_rng(seed, &[chain, STREAM_ANCHOR]);
            reference.sample(&mut rng)
        }
    };
    let interpolant = crate::interpolant::LinearInterpolant::new(z.clone());

    let before = target.evaluations();
    let s1 = if cfg.deterministic_init {
        let path = ConditionalPath::new(target, &interpolant, cfg.t0)?;
        let (path_eval, _) = path.eval_with_source(&z);
        Stage1Output {
            particle: CachedParticle {
                position: z.clone(),
                path_eval,
            },
            t0: cfg.t0,
            diagnostics: None,
        }
    } else {
        stage1(
            target,
            &interpolant,
            reference,
            cfg.t0,
            &cfg.pt,
            cfg.t0_search.as_ref(),
            seed,
            chain,
        )?
    };
    let stage1_evals = target.evaluations() - before;

    let times = cfg.grid.realize(s1.t0)?;
    let t0 = s1.t0;
    let diagnostics = s1.diagnostics;
    let outcome = match cfg.transport {
        Transport::Sde => {
            let mut rng = derive_rng(seed, &[chain, STREAM_STAGE2]);
            stage2_sde(
                target,
                &interpolant,
                s1.particle,
                &times,
                &cfg.noise,
                &cfg.corrector,
                cfg.corrector_steps,
                &mut rng,
            )
        }
        Transport::Ode => stage2_ode(&interpolant, s1.particle.position, &times),
        Transport::InverseMap => Ok(inverse_map_transport(&interpolant, t0, &s1.particle.position)),
    };
    let stage2_evals = target.evaluations() - before - stage1_evals;

    let (sample, diverged_at_step) = match outcome {
        Ok(x) => (Some(x), None),
        Err(CdsError::ChainDiverged { step }) => (None, Some(step)),
        Err(e) => return Err(e),
    };
    Ok((
        sample,
        ChainReport {
            anchor: z,
            t0,
            stage1_evals,
            stage2_evals,
            stage1: diagnostics,
            diverged_at_step,
        },
    ))
}

/// Run `n_chains` independent chains and aggregate samples, reports, and the
/// exact evaluation ledger. Divergent chains are recorded and skipped; the
/// run continues.
pub fn run_cds<S: Scalar>(
    target: &Target<S>,
    reference: &GaussianReference<S>,
    cfg: &CdsConfig<S>,
    n_chains: usize,
    seed: u64,
) -> Result<CdsRun<S>, CdsError> {
    cfg.validate()?;
    let mut samples = Vec::new();
    let mut reports = Vec::with_capacity(n_chains);
    let mut stage1_evals = 0;
    let mut stage2_evals = 0;
    for chain in 0..n_chains {
        let fork = target.fork();
        let (sample, report) = run_chain(&fork, reference, cfg, seed, chain as u64)?;
        stage1_evals += report.stage1_evals;
        stage2_evals += report.stage2_evals;
        if let Some(x) = sample {
            samples.push(x);
        }
        reports.push(report);
    }
    Ok(CdsRun {
        samples,
        reports,
        stage1_evals,
        stage2_evals,
    })
}
