//! Initial-time sweep: how replica-exchange communication responds to the
//! contraction level.
//!
//! For each initial time a pilot ensemble measures the communication
//! barrier, the replica count is set to its ceiling, and a fresh ensemble
//! runs with a mid-run schedule rebalance. Round trips and the barrier are
//! measured after the rebalance only, so points at different times are
//! compared under matched, individually tuned schedules.

use crate::tasks::{ground_truth, Task, TaskId};
use crate::BenchError;
use cds_core::cds::{inverse_map_transport, CdsError};
use cds_core::interpolant::{ConditionalPath, LinearInterpolant};
use cds_core::kernels::KernelConfig;
use cds_core::metrics::{wasserstein2, SampleSet};
use cds_core::tempering::{AnnealingSchedule, EnsembleInit, ReferenceMode, ReplicaEnsemble};

/// Transported samples kept per point for the quality column.
const SWEEP_SAMPLES: usize = 256;

#[derive(Debug, Clone)]
pub struct T0SweepSettings {
    /// Ladder size of the barrier-measuring pilot.
    pub pilot_replicas: usize,
    pub pilot_sweeps: usize,
    /// Measured sweeps after the rebalance; the warmup adds a quarter more.
    pub main_sweeps: usize,
    pub beta_min: f64,
}

impl Default for T0SweepSettings {
    fn default() -> Self {
        T0SweepSettings {
            pilot_replicas: 8,
            pilot_sweeps: 200,
            main_sweeps: 2000,
            beta_min: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct T0SweepPoint {
    pub t0: f64,
    pub seed: u64,
    /// Replica count of the main run (pilot barrier, ceiled).
    pub replicas: usize,
    /// Measured sweeps (warmup excluded).
    pub sweeps: u64,
    pub round_trips: u64,
    pub round_trip_rate: f64,
    pub gcb: Option<f64>,
    pub pilot_gcb: Option<f64>,
    /// Transported-sample quality against ground truth, when available.
    pub w2: Option<f64>,
    /// Total evaluations the point spent, pilot included.
    pub evals: u64,
}

/// Run the sweep over `t0_values` x `seeds`, in that order.
pub fn sweep_t0(
    task: &Task,
    t0_values: &[f64],
    seeds: &[u64],
    settings: &T0SweepSettings,
) -> Result<Vec<T0SweepPoint>, BenchError> {
    if t0_values.len() < 2 {
        return Err(BenchError::Config(
            "t0 sweep needs at least 2 values".into(),
        ));
    }
    if seeds.is_empty() {
        return Err(BenchError::Config("t0 sweep needs at least 1 seed".into()));
    }
    let truth = match ground_truth(&task.id, SWEEP_SAMPLES, 0) {
        Ok(t) => Some(t),
        Err(e) => {
            eprintln!("warning: no ground truth for {}: {e}; w2 column omitted", task.id.name());
            None
        }
    };
    let mut points = Vec::with_capacity(t0_values.len() * seeds.len());
    for &t0 in t0_values {
        for &seed in seeds {
            points.push(sweep_point(task, t0, seed, settings, truth.as_ref())?);
        }
    }
    Ok(points)
}

fn sweep_point(
    task: &Task,
    t0: f64,
    seed: u64,
    settings: &T0SweepSettings,
    truth: Option<&SampleSet<f64>>,
) -> Result<T0SweepPoint, BenchError> {
    let fork = task.target.fork();
    let z = task.anchor().to_vec();
    let interpolant = LinearInterpolant::new(z.clone());
    let path = ConditionalPath::new(&fork, &interpolant, t0).map_err(CdsError::from)?;
    let mut kernel = KernelConfig::mala(task.base_step);
    kernel.step_size *= t0;

    // pilot: generous ladder, only there to measure the barrier
    let pilot_schedule =
        AnnealingSchedule::geometric(settings.pilot_replicas, settings.beta_min, true)?;
    let mut pilot = ReplicaEnsemble::new(
        Box::new(&path),
        ReferenceMode::Gaussian(&task.reference),
        pilot_schedule,
        kernel.clone(),
        EnsembleInit::AllAt(z.clone()),
        seed,
        1,
    )?;
    pilot.run_sweeps(settings.pilot_sweeps);
    let pilot_gcb = pilot.estimate_gcb().ok();
    drop(pilot);
    let replicas = pilot_gcb.map_or(settings.pilot_replicas, |g| (g.ceil() as usize).max(2));

    let schedule = AnnealingSchedule::geometric(replicas, settings.beta_min, true)?;
    let mut ens = ReplicaEnsemble::new(
        Box::new(&path),
        ReferenceMode::Gaussian(&task.reference),
        schedule,
        kernel,
        EnsembleInit::AllAt(z),
        seed,
        2,
    )?;
    let warmup = (settings.main_sweeps / 4).max(2);
    ens.run_sweeps(warmup);
    if let Ok(optimized) = ens.optimized_schedule() {
        ens.set_schedule(optimized)?;
    }

    let trips_before = ens.round_trips();
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(SWEEP_SAMPLES);
    let stride = (settings.main_sweeps / SWEEP_SAMPLES).max(1);
    for s in 0..settings.main_sweeps {
        ens.sweep();
        if s % stride == 0 {
            kept.push(inverse_map_transport(
                &interpolant,
                t0,
                &ens.target_state().position,
            ));
        }
    }
    let round_trips = ens.round_trips() - trips_before;
    let round_trip_rate = if settings.main_sweeps == 0 {
        0.0
    } else {
        round_trips as f64 / settings.main_sweeps as f64
    };

    let w2 = match truth {
        Some(truth) if kept.len() >= 2 => {
            let set = SampleSet::from_rows(kept, format!("sweep-t0={t0}"))?;
            let align = matches!(task.id, TaskId::Lj13);
            wasserstein2(&set, truth, align).ok()
        }
        _ => None,
    };

    Ok(T0SweepPoint {
        t0,
        seed,
        replicas,
        sweeps: settings.main_sweeps as u64,
        round_trips,
        round_trip_rate,
        gcb: ens.estimate_gcb().ok(),
        pilot_gcb,
        w2,
        evals: fork.evaluations(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{build, TaskId};

    #[test]
    fn sweep_rejects_degenerate_grids() {
        let task = build(TaskId::Gm2);
        let settings = T0SweepSettings::default();
        assert!(sweep_t0(&task, &[0.5], &[1], &settings).is_err());
        assert!(sweep_t0(&task, &[0.5, 1.0], &[], &settings).is_err());
    }

    #[test]
    fn sweep_points_carry_matched_diagnostics() {
        let task = build(TaskId::Gm2);
        let settings = T0SweepSettings {
            pilot_replicas: 4,
            pilot_sweeps: 60,
            main_sweeps: 200,
            beta_min: 1e-2,
        };
        let points = sweep_t0(&task, &[0.2, 1.0], &[5, 6], &settings).unwrap();
        assert_eq!(points.len(), 4);
        assert_eq!(
            points.iter().map(|p| p.t0).collect::<Vec<_>>(),
            vec![0.2, 0.2, 1.0, 1.0]
        );
        for p in &points {
            assert!(p.replicas >= 2);
            assert_eq!(p.sweeps, 200);
            assert!(p.gcb.is_some());
            assert!(p.w2.is_some());
            assert!(p.evals > 0);
        }
        // same seed, same point
        let again = sweep_t0(&task, &[0.2, 1.0], &[5, 6], &settings).unwrap();
        assert_eq!(points[0].round_trips, again[0].round_trips);
        assert_eq!(points[0].w2, again[0].w2);
    }
}
