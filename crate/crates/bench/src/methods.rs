//! The competing samplers, wrapped behind one budgeted interface.
//!
//! Every method runs against a fork of the task target, so the fork's
//! evaluation counter is the realized cost of the run. Budgets are plans;
//! the counter is the authority, and runs may overshoot by at most one
//! sweep or one kernel step.

use crate::tasks::Task;
use crate::BenchError;
use cds_core::cds::{
    run_cds, AnchorMode, CdsConfig, NoiseSchedule, PtSettings, T0Search, TimeGrid, Transport,
};
use cds_core::kernels::{kernel_step, ChainState, KernelConfig, SplitTarget};
use cds_core::rng::derive_rng;
use cds_core::tempering::{AnnealingSchedule, EnsembleInit, ReferenceMode, ReplicaEnsemble};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodId {
    Cds,
    Nrpt,
    Mala,
    Hmc,
}

impl MethodId {
    pub fn parse(s: &str) -> Option<MethodId> {
        match s {
            "cds" => Some(MethodId::Cds),
            "nrpt" => Some(MethodId::Nrpt),
            "mala" => Some(MethodId::Mala),
            "hmc" => Some(MethodId::Hmc),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodId::Cds => "cds",
            MethodId::Nrpt => "nrpt",
            MethodId::Mala => "mala",
            MethodId::Hmc => "hmc",
        }
    }
}

/// Serializable mirror of [`Transport`], for configs and manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportKind {
    Sde,
    Ode,
    InverseMap,
}

impl TransportKind {
    pub fn parse(s: &str) -> Option<TransportKind> {
        match s {
            "sde" => Some(TransportKind::Sde),
            "ode" => Some(TransportKind::Ode),
            "inverse-map" => Some(TransportKind::InverseMap),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransportKind::Sde => "sde",
            TransportKind::Ode => "ode",
            TransportKind::InverseMap => "inverse-map",
        }
    }

    fn to_core(self) -> Transport {
        match self {
            TransportKind::Sde => Transport::Sde,
            TransportKind::Ode => Transport::Ode,
            TransportKind::InverseMap => Transport::InverseMap,
        }
    }
}

/// Two-stage sampler settings. One chain spends `chain_budget` evaluations;
/// the run launches `budget / chain_budget` chains, each yielding one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CdsParams {
    pub t0: f64,
    /// Replica count including the `beta = 0` slot.
    pub replicas: usize,
    pub beta_min: f64,
    /// Evenly spaced ladder instead of geometric; suits bridges whose
    /// levels differ by location rather than scale.
    #[serde(default)]
    pub uniform_ladder: bool,
    /// Stage-1 share of the chain budget.
    pub rho: f64,
    pub chain_budget: u64,
    pub corrector_steps: usize,
    /// Diffusion scale; the task's base step when absent.
    pub noise: Option<f64>,
    pub transport: TransportKind,
    pub t0_search: bool,
}

impl Default for CdsParams {
    fn default() -> Self {
        CdsParams {
            t0: 0.1,
            replicas: 5,
            beta_min: 1e-2,
            uniform_ladder: false,
            rho: 0.5,
            chain_budget: 500,
            corrector_steps: 1,
            noise: None,
            transport: TransportKind::Sde,
            t0_search: false,
        }
    }
}

/// Replica-exchange baseline on the plain target (flat reference, all
/// levels positive).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NrptParams {
    pub replicas: usize,
    pub beta_min: f64,
}

impl Default for NrptParams {
    fn default() -> Self {
        NrptParams {
            replicas: 5,
            beta_min: 1e-2,
        }
    }
}

/// Single-chain baselines. `step` falls back to the task's base step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainParams {
    pub step: Option<f64>,
    pub leapfrog: usize,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            step: None,
            leapfrog: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MethodParams {
    Cds(CdsParams),
    Nrpt(NrptParams),
    Chain(ChainParams),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodInstance {
    pub id: MethodId,
    /// Stable display label; distinguishes instances of the same method.
    pub label: String,
    pub params: MethodParams,
}

/// Diagnostics a run may or may not produce; absent fields serialize as
/// null so manifests stay self-describing.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub round_trips: Option<u64>,
    pub round_trip_rate: Option<f64>,
    pub gcb: Option<f64>,
    pub adapted_step: Option<f64>,
    pub optimized_t0: Option<f64>,
    pub diverged_chains: Option<u64>,
}

pub struct MethodRun {
    pub samples: Vec<Vec<f64>>,
    /// Target evaluations actually spent, read off the run's fork.
    pub sampler_evals: u64,
    pub diagnostics: RunDiagnostics,
}

/// Keep at most `cap` rows, evenly strided so the tail is represented.
pub(crate) fn thin_to_cap(rows: Vec<Vec<f64>>, cap: usize) -> Vec<Vec<f64>> {
    if rows.len() <= cap || cap == 0 {
        return rows;
    }
    let n = rows.len();
    (0..cap).map(|i| rows[i * n / cap].clone()).collect()
}

pub fn run_method(
    task: &Task,
    instance: &MethodInstance,
    budget: u64,
    samples_cap: usize,
    seed: u64,
) -> Result<MethodRun, BenchError> {
    match &instance.params {
        MethodParams::Cds(p) => run_cds_method(task, p, budget, samples_cap, seed),
        MethodParams::Nrpt(p) => run_nrpt_method(task, p, budget, samples_cap, seed),
        MethodParams::Chain(p) => {
            let kind = match instance.id {
                MethodId::Mala => ChainKind::Mala,
                MethodId::Hmc => ChainKind::Hmc,
                other => {
                    return Err(BenchError::Config(format!(
                        "method {} cannot take single-chain params",
                        other.name()
                    )))
                }
            };
            run_chain_method(task, p, kind, budget, samples_cap, seed)
        }
    }
}

fn run_cds_method(
    task: &Task,
    p: &CdsParams,
    budget: u64,
    samples_cap: usize,
    seed: u64,
) -> Result<MethodRun, BenchError> {
    if p.replicas < 2 {
        return Err(BenchError::Config("cds needs at least 2 replicas".into()));
    }
    let corrector = KernelConfig::mala(task.base_step);
    // deterministic transports spend nothing in stage 2
    let rho = match p.transport {
        TransportKind::Sde => p.rho,
        _ => 1.0,
    };
    let (sweeps, steps) = cds_core::cds::split_budget(
        p.chain_budget.min(budget),
        rho,
        p.replicas,
        p.corrector_steps,
        corrector.evals_per_step(),
    );
    let schedule = if p.uniform_ladder {
        let n = (p.replicas - 1) as f64;
        AnnealingSchedule::from_betas((0..p.replicas).map(|i| i as f64 / n).collect())?
    } else {
        AnnealingSchedule::geometric(p.replicas, p.beta_min, true)?
    };
    let cfg = CdsConfig {
        t0: p.t0,
        grid: TimeGrid::Uniform { steps },
        noise: NoiseSchedule::Constant(p.noise.unwrap_or(task.base_step)),
        pt: PtSettings {
            schedule,
            kernel: KernelConfig::mala(task.base_step),
            sweeps,
        },
        transport: p.transport.to_core(),
        corrector_steps: p.corrector_steps,
        corrector,
        anchor: AnchorMode::ReferenceMean,
        deterministic_init: false,
        t0_search: p.t0_search.then_some(T0Search {
            iterations: sweeps / 2,
            learning_rate: 0.01,
        }),
    };
    let n_chains = (budget / p.chain_budget.min(budget).max(1)).max(1) as usize;

    let sampler = task.target.fork();
    let run = run_cds(&sampler, &task.reference, &cfg, n_chains, seed)?;

    let mut diagnostics = RunDiagnostics::default();
    let stage1: Vec<_> = run.reports.iter().filter_map(|r| r.stage1.as_ref()).collect();
    if !stage1.is_empty() {
        diagnostics.round_trips = Some(stage1.iter().map(|d| d.round_trips).sum());
        diagnostics.round_trip_rate = Some(
            stage1.iter().map(|d| d.round_trip_rate).sum::<f64>() / stage1.len() as f64,
        );
        diagnostics.gcb =
            Some(stage1.iter().map(|d| d.gcb_estimate).sum::<f64>() / stage1.len() as f64);
    }
    if p.t0_search && !run.reports.is_empty() {
        let mean_t0 =
            run.reports.iter().map(|r| r.t0).sum::<f64>() / run.reports.len() as f64;
        diagnostics.optimized_t0 = Some(mean_t0);
    }
    let diverged = run
        .reports
        .iter()
        .filter(|r| r.diverged_at_step.is_some())
        .count() as u64;
    if diverged > 0 {
        diagnostics.diverged_chains = Some(diverged);
    }

    // run_cds forks per chain, so the parent ledger stays empty
    let sampler_evals = run.total_evals();
    Ok(MethodRun {
        samples: thin_to_cap(run.samples, samples_cap),
        sampler_evals,
        diagnostics,
    })
}

fn run_nrpt_method(
    task: &Task,
    p: &NrptParams,
    budget: u64,
    samples_cap: usize,
    seed: u64,
) -> Result<MethodRun, BenchError> {
    if p.replicas < 2 {
        return Err(BenchError::Config("nrpt needs at least 2 replicas".into()));
    }
    let schedule = AnnealingSchedule::geometric(p.replicas, p.beta_min, false)?;
    let sampler = task.target.fork();
    let mut ens = ReplicaEnsemble::new(
        Box::new(&sampler),
        ReferenceMode::Flat,
        schedule,
        KernelConfig::mala(task.base_step),
        EnsembleInit::AllAt(task.anchor().to_vec()),
        seed,
        0,
    )?;
    // init costs one evaluation per replica, each sweep another
    let sweeps = (budget / p.replicas as u64).saturating_sub(1).max(1) as usize;
    let burn = sweeps / 5;
    let mut kept = Vec::with_capacity(sweeps - burn);
    for s in 0..sweeps {
        ens.sweep();
        if s >= burn {
            kept.push(ens.target_state().position.clone());
        }
    }

    let mut diagnostics = RunDiagnostics {
        adapted_step: Some(ens.target_state().step_size),
        ..RunDiagnostics::default()
    };
    if let Ok(d) = ens.diagnostics() {
        diagnostics.round_trips = Some(d.round_trips);
        diagnostics.round_trip_rate = Some(d.round_trip_rate);
        diagnostics.gcb = Some(d.gcb_estimate);
    }

    Ok(MethodRun {
        samples: thin_to_cap(kept, samples_cap),
        sampler_evals: sampler.evaluations(),
        diagnostics,
    })
}

enum ChainKind {
    Mala,
    Hmc,
}

fn run_chain_method(
    task: &Task,
    p: &ChainParams,
    kind: ChainKind,
    budget: u64,
    samples_cap: usize,
    seed: u64,
) -> Result<MethodRun, BenchError> {
    let step = p.step.unwrap_or(task.base_step);
    let kernel = match kind {
        ChainKind::Mala => KernelConfig::mala(step),
        ChainKind::Hmc => {
            if p.leapfrog == 0 {
                return Err(BenchError::Config("hmc needs at least 1 leapfrog step".into()));
            }
            KernelConfig::hmc(step, p.leapfrog)
        }
    };
    let steps = (budget.saturating_sub(1) / kernel.evals_per_step()).max(1) as usize;

    let sampler = task.target.fork();
    let split = SplitTarget::plain(&sampler);
    let mut rng = derive_rng(seed, &[0]);
    let mut state = ChainState::init(task.anchor().to_vec(), &split, kernel.step_size, &mut rng);
    let burn = steps / 5;
    let mut kept = Vec::with_capacity(steps - burn);
    for s in 0..steps {
        kernel_step(&mut state, &split, &kernel, &mut rng);
        if s >= burn {
            kept.push(state.position.clone());
        }
    }

    Ok(MethodRun {
        samples: thin_to_cap(kept, samples_cap),
        sampler_evals: sampler.evaluations(),
        diagnostics: RunDiagnostics {
            adapted_step: Some(state.step_size),
            ..RunDiagnostics::default()
        },
    })
}
