//! Experiment configuration.
//!
//! Configs are TOML. Any hyperparameter axis under `[[methods]]` may be a
//! scalar or an array; arrays expand into the cartesian product of method
//! instances, in file order and with axes in a fixed documented order, so
//! the expansion is stable across runs. The config hash covers the expanded
//! form, which is what job seeds are derived from.

use crate::methods::{
    CdsParams, ChainParams, MethodId, MethodInstance, MethodParams, NrptParams, TransportKind,
};
use crate::tasks::TaskId;
use crate::BenchError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::Path;

pub const DEFAULT_REPLICATES: usize = 3;
/// Desk-scale default: at most this many samples are kept per run.
pub const DEFAULT_SAMPLES_CAP: usize = 1000;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Optional axis: absent means "one instance with the default value".
fn axis<T: Clone>(field: &Option<OneOrMany<T>>, default: T) -> Vec<T> {
    match field {
        Some(f) => f.values(),
        None => vec![default],
    }
}

fn option_axis<T: Clone>(field: &Option<OneOrMany<T>>) -> Vec<Option<T>> {
    match field {
        Some(f) => f.values().into_iter().map(Some).collect(),
        None => vec![None],
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: String,
    pub label: Option<String>,
    // two-stage sampler axes
    pub t0: Option<OneOrMany<f64>>,
    pub replicas: Option<OneOrMany<usize>>,
    pub beta_min: Option<OneOrMany<f64>>,
    /// `"geometric"` (default) or `"uniform"` annealing ladder.
    pub ladder: Option<String>,
    pub rho: Option<OneOrMany<f64>>,
    pub chain_budget: Option<OneOrMany<u64>>,
    pub corrector_steps: Option<OneOrMany<usize>>,
    pub noise: Option<OneOrMany<f64>>,
    pub transport: Option<OneOrMany<String>>,
    pub t0_search: Option<bool>,
    // single-chain axes
    pub step: Option<OneOrMany<f64>>,
    pub leapfrog: Option<OneOrMany<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    task: String,
    #[serde(default)]
    seed: u64,
    budgets: Vec<u64>,
    replicates: Option<usize>,
    samples_cap: Option<usize>,
    /// Ground-truth set size for metrics; defaults to `samples_cap`.
    truth_samples: Option<usize>,
    methods: Vec<MethodSpec>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: TaskId,
    pub seed: u64,
    pub budgets: Vec<u64>,
    pub replicates: usize,
    pub samples_cap: usize,
    pub truth_samples: usize,
    pub instances: Vec<MethodInstance>,
    pub hash: String,
}

/// Canonical form the hash is computed over. Struct field order fixes the
/// JSON key order, so equal configs hash equally byte for byte.
#[derive(Serialize)]
struct CanonicalConfig<'a> {
    task: &'a str,
    seed: u64,
    budgets: &'a [u64],
    replicates: usize,
    samples_cap: usize,
    truth_samples: usize,
    instances: &'a [MethodInstance],
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        ExperimentConfig::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, BenchError> {
        let raw: RawConfig = toml::from_str(s)?;
        let task = TaskId::parse(&raw.task)
            .ok_or_else(|| BenchError::Config(format!("unknown task `{}`", raw.task)))?;
        if raw.budgets.is_empty() {
            return Err(BenchError::Config("budgets must be non-empty".into()));
        }
        if raw.budgets.iter().any(|&b| b == 0) {
            return Err(BenchError::Config("budgets must be positive".into()));
        }
        if !raw.budgets.windows(2).all(|w| w[0] < w[1]) {
            return Err(BenchError::Config(
                "budgets must be strictly increasing".into(),
            ));
        }
        let replicates = raw.replicates.unwrap_or(DEFAULT_REPLICATES);
        if replicates == 0 {
            return Err(BenchError::Config("replicates must be at least 1".into()));
        }
        let samples_cap = raw.samples_cap.unwrap_or(DEFAULT_SAMPLES_CAP);
        if samples_cap == 0 {
            return Err(BenchError::Config("samples_cap must be at least 1".into()));
        }
        if raw.methods.is_empty() {
            return Err(BenchError::Config("at least one [[methods]] entry".into()));
        }
        let instances = expand_methods(&raw.methods)?;

        let mut cfg = ExperimentConfig {
            task,
            seed: raw.seed,
            budgets: raw.budgets,
            replicates,
            samples_cap,
            truth_samples: raw.truth_samples.unwrap_or(samples_cap),
            instances,
            hash: String::new(),
        };
        cfg.hash = cfg.compute_hash()?;
        Ok(cfg)
    }

    /// Replace the master seed (the `--seed` flag); job seeds follow.
    pub fn override_seed(&mut self, seed: u64) -> Result<(), BenchError> {
        self.seed = seed;
        self.hash = self.compute_hash()?;
        Ok(())
    }

    /// Keep only instances of one method (the `--method` flag).
    pub fn retain_method(&mut self, id: MethodId) -> Result<(), BenchError> {
        self.instances.retain(|i| i.id == id);
        if self.instances.is_empty() {
            return Err(BenchError::Config(format!(
                "config has no `{}` instances",
                id.name()
            )));
        }
        self.hash = self.compute_hash()?;
        Ok(())
    }

    fn compute_hash(&self) -> Result<String, BenchError> {
        let canonical = serde_json::to_string(&CanonicalConfig {
            task: self.task.name(),
            seed: self.seed,
            budgets: &self.budgets,
            replicates: self.replicates,
            samples_cap: self.samples_cap,
            truth_samples: self.truth_samples,
            instances: &self.instances,
        })?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }

    /// Jobs in deterministic order: instance (file order), then budget
    /// ascending, then replicate.
    pub fn jobs(&self) -> Vec<Job<'_>> {
        let mut jobs = Vec::new();
        for instance in &self.instances {
            for &budget in &self.budgets {
                for replicate in 0..self.replicates {
                    jobs.push(Job {
                        instance,
                        budget,
                        replicate,
                        seed: job_seed(&self.hash, &instance.label, budget, replicate),
                    });
                }
            }
        }
        jobs
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Job<'a> {
    pub instance: &'a MethodInstance,
    pub budget: u64,
    pub replicate: usize,
    pub seed: u64,
}

/// Every job's RNG seed is a digest of the config hash and the job
/// coordinates, so reruns of the same config reproduce every stream.
pub fn job_seed(config_hash: &str, label: &str, budget: u64, replicate: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(config_hash.as_bytes());
    h.update([0]);
    h.update(label.as_bytes());
    h.update(budget.to_le_bytes());
    h.update((replicate as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

fn forbid_fields(spec: &MethodSpec, fields: &[(&str, bool)]) -> Result<(), BenchError> {
    for (name, present) in fields {
        if *present {
            return Err(BenchError::Config(format!(
                "field `{name}` does not apply to method `{}`",
                spec.method
            )));
        }
    }
    Ok(())
}

/// Suffix for one grid axis, attached only when the axis actually varies.
fn tag<T: std::fmt::Display>(parts: &mut Vec<String>, name: &str, values: &[T], v: &T) {
    if values.len() > 1 {
        parts.push(format!("{name}={v}"));
    }
}

fn expand_methods(specs: &[MethodSpec]) -> Result<Vec<MethodInstance>, BenchError> {
    let mut instances = Vec::new();
    for spec in specs {
        let id = MethodId::parse(&spec.method)
            .ok_or_else(|| BenchError::Config(format!("unknown method `{}`", spec.method)))?;
        let base = spec.label.clone().unwrap_or_else(|| id.name().to_string());
        match id {
            MethodId::Cds => expand_cds(spec, &base, &mut instances)?,
            MethodId::Nrpt => expand_nrpt(spec, &base, &mut instances)?,
            MethodId::Mala | MethodId::Hmc => expand_chain(spec, id, &base, &mut instances)?,
        }
    }
    let mut seen = BTreeSet::new();
    for inst in &instances {
        if !seen.insert(inst.label.clone()) {
            return Err(BenchError::Config(format!(
                "duplicate method label `{}`; set `label` to disambiguate",
                inst.label
            )));
        }
    }
    Ok(instances)
}

fn join_label(base: &str, parts: &[String]) -> String {
    if parts.is_empty() {
        base.to_string()
    } else {
        format!("{base}-{}", parts.join("-"))
    }
}

fn expand_cds(
    spec: &MethodSpec,
    base: &str,
    out: &mut Vec<MethodInstance>,
) -> Result<(), BenchError> {
    forbid_fields(
        spec,
        &[
            ("step", spec.step.is_some()),
            ("leapfrog", spec.leapfrog.is_some()),
        ],
    )?;
    let d = CdsParams::default();
    let t0s = axis(&spec.t0, d.t0);
    let replicas = axis(&spec.replicas, d.replicas);
    let beta_mins = axis(&spec.beta_min, d.beta_min);
    let uniform_ladder = match spec.ladder.as_deref() {
        None | Some("geometric") => false,
        Some("uniform") => true,
        Some(other) => {
            return Err(BenchError::Config(format!("unknown ladder `{other}`")));
        }
    };
    let rhos = axis(&spec.rho, d.rho);
    let chain_budgets = axis(&spec.chain_budget, d.chain_budget);
    let correctors = axis(&spec.corrector_steps, d.corrector_steps);
    let noises = option_axis(&spec.noise);
    let transports = match &spec.transport {
        None => vec![d.transport],
        Some(f) => f
            .values()
            .iter()
            .map(|s| {
                TransportKind::parse(s)
                    .ok_or_else(|| BenchError::Config(format!("unknown transport `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    let t0_search = spec.t0_search.unwrap_or(false);

    for &t0 in &t0s {
        for &r in &replicas {
            for &bm in &beta_mins {
                for &rho in &rhos {
                    for &cb in &chain_budgets {
                        for &cs in &correctors {
                            for &noise in &noises {
                                for &transport in &transports {
                                    let mut parts = Vec::new();
                                    tag(&mut parts, "t0", &t0s, &t0);
                                    tag(&mut parts, "replicas", &replicas, &r);
                                    tag(&mut parts, "beta_min", &beta_mins, &bm);
                                    tag(&mut parts, "rho", &rhos, &rho);
                                    tag(&mut parts, "chain_budget", &chain_budgets, &cb);
                                    tag(&mut parts, "corrector_steps", &correctors, &cs);
                                    if noises.len() > 1 {
                                        parts.push(format!(
                                            "noise={}",
                                            noise.map_or("default".into(), |n| n.to_string())
                                        ));
                                    }
                                    if transports.len() > 1 {
                                        parts.push(format!("transport={}", transport.name()));
                                    }
                                    out.push(MethodInstance {
                                        id: MethodId::Cds,
                                        label: join_label(base, &parts),
                                        params: MethodParams::Cds(CdsParams {
                                            t0,
                                            replicas: r,
                                            beta_min: bm,
                                            uniform_ladder,
                                            rho,
                                            chain_budget: cb,
                                            corrector_steps: cs,
                                            noise,
                                            transport,
                                            t0_search,
                                        }),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn expand_nrpt(
    spec: &MethodSpec,
    base: &str,
    out: &mut Vec<MethodInstance>,
) -> Result<(), BenchError> {
    forbid_fields(
        spec,
        &[
            ("t0", spec.t0.is_some()),
            ("ladder", spec.ladder.is_some()),
            ("rho", spec.rho.is_some()),
            ("chain_budget", spec.chain_budget.is_some()),
            ("corrector_steps", spec.corrector_steps.is_some()),
            ("noise", spec.noise.is_some()),
            ("transport", spec.transport.is_some()),
            ("t0_search", spec.t0_search.is_some()),
            ("step", spec.step.is_some()),
            ("leapfrog", spec.leapfrog.is_some()),
        ],
    )?;
    let d = NrptParams::default();
    let replicas = axis(&spec.replicas, d.replicas);
    let beta_mins = axis(&spec.beta_min, d.beta_min);
    for &r in &replicas {
        for &bm in &beta_mins {
            let mut parts = Vec::new();
            tag(&mut parts, "replicas", &replicas, &r);
            tag(&mut parts, "beta_min", &beta_mins, &bm);
            out.push(MethodInstance {
                id: MethodId::Nrpt,
                label: join_label(base, &parts),
                params: MethodParams::Nrpt(NrptParams {
                    replicas: r,
                    beta_min: bm,
                }),
            });
        }
    }
    Ok(())
}

fn expand_chain(
    spec: &MethodSpec,
    id: MethodId,
    base: &str,
    out: &mut Vec<MethodInstance>,
) -> Result<(), BenchError> {
    forbid_fields(
        spec,
        &[
            ("t0", spec.t0.is_some()),
            ("replicas", spec.replicas.is_some()),
            ("beta_min", spec.beta_min.is_some()),
            ("ladder", spec.ladder.is_some()),
            ("rho", spec.rho.is_some()),
            ("chain_budget", spec.chain_budget.is_some()),
            ("corrector_steps", spec.corrector_steps.is_some()),
            ("noise", spec.noise.is_some()),
            ("transport", spec.transport.is_some()),
            ("t0_search", spec.t0_search.is_some()),
            (
                "leapfrog",
                id == MethodId::Mala && spec.leapfrog.is_some(),
            ),
        ],
    )?;
    let d = ChainParams::default();
    let steps = option_axis(&spec.step);
    let leapfrogs = axis(&spec.leapfrog, d.leapfrog);
    for &step in &steps {
        for &l in &leapfrogs {
            let mut parts = Vec::new();
            if steps.len() > 1 {
                parts.push(format!(
                    "step={}",
                    step.map_or("default".into(), |s| s.to_string())
                ));
            }
            tag(&mut parts, "leapfrog", &leapfrogs, &l);
            out.push(MethodInstance {
                id,
                label: join_label(base, &parts),
                params: MethodParams::Chain(ChainParams { step, leapfrog: l }),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
task = "gm-2"
seed = 7
budgets = [1000, 4000]

[[methods]]
method = "cds"
t0 = [0.1, 0.5]
chain_budget = 250

[[methods]]
method = "mala"
step = 0.2
"#;

    #[test]
    fn parses_and_expands_the_grid_in_order() {
        let cfg = ExperimentConfig::from_toml_str(BASIC).unwrap();
        assert_eq!(cfg.task, TaskId::Gm2);
        assert_eq!(cfg.replicates, DEFAULT_REPLICATES);
        assert_eq!(cfg.samples_cap, DEFAULT_SAMPLES_CAP);
        assert_eq!(cfg.truth_samples, DEFAULT_SAMPLES_CAP);
        let labels: Vec<_> = cfg.instances.iter().map(|i| i.label.as_str()).collect();
        assert_eq!(labels, vec!["cds-t0=0.1", "cds-t0=0.5", "mala"]);
        // 3 instances x 2 budgets x 3 replicates
        assert_eq!(cfg.jobs().len(), 18);
    }

    #[test]
    fn hash_and_job_seeds_are_reproducible_and_sensitive() {
        let a = ExperimentConfig::from_toml_str(BASIC).unwrap();
        let b = ExperimentConfig::from_toml_str(BASIC).unwrap();
        assert_eq!(a.hash, b.hash);
        let ja: Vec<u64> = a.jobs().iter().map(|j| j.seed).collect();
        let jb: Vec<u64> = b.jobs().iter().map(|j| j.seed).collect();
        assert_eq!(ja, jb);
        let distinct: BTreeSet<u64> = ja.iter().copied().collect();
        assert_eq!(distinct.len(), ja.len());

        let c = ExperimentConfig::from_toml_str(&BASIC.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.hash, c.hash);
        assert_ne!(ja[0], c.jobs()[0].seed);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cases = [
            ("task = \"gm-3\"\nbudgets = [1]\n[[methods]]\nmethod = \"mala\"", "unknown task"),
            ("task = \"gm-2\"\nbudgets = []\n[[methods]]\nmethod = \"mala\"", "non-empty"),
            ("task = \"gm-2\"\nbudgets = [5, 5]\n[[methods]]\nmethod = \"mala\"", "increasing"),
            ("task = \"gm-2\"\nbudgets = [0]\n[[methods]]\nmethod = \"mala\"", "positive"),
            ("task = \"gm-2\"\nbudgets = [5]\nreplicates = 0\n[[methods]]\nmethod = \"mala\"", "replicates"),
            ("task = \"gm-2\"\nbudgets = [5]", "methods"),
            ("task = \"gm-2\"\nbudgets = [5]\n[[methods]]\nmethod = \"nuts\"", "unknown method"),
            ("task = \"gm-2\"\nbudgets = [5]\n[[methods]]\nmethod = \"mala\"\nt0 = 0.1", "does not apply"),
            ("task = \"gm-2\"\nbudgets = [5]\n[[methods]]\nmethod = \"cds\"\ntransport = \"warp\"", "unknown transport"),
        ];
        for (toml, needle) in cases {
            let err = ExperimentConfig::from_toml_str(toml).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains(needle), "`{msg}` missing `{needle}`");
            assert_eq!(crate::exit_code(&err), 1, "{msg}");
        }
        // unknown top-level or method keys fail at deserialization
        let err = ExperimentConfig::from_toml_str(
            "task = \"gm-2\"\nbudgets = [5]\nbogus = 1\n[[methods]]\nmethod = \"mala\"",
        )
        .unwrap_err();
        assert_eq!(crate::exit_code(&err), 1);
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let two_malas = r#"
task = "gm-2"
budgets = [5]
[[methods]]
method = "mala"
[[methods]]
method = "mala"
"#;
        let err = ExperimentConfig::from_toml_str(two_malas).unwrap_err();
        assert!(err.to_string().contains("duplicate method label"));
    }

    #[test]
    fn scalar_and_singleton_array_axes_expand_identically() {
        let scalar = ExperimentConfig::from_toml_str(
            "task = \"gm-2\"\nbudgets = [5]\n[[methods]]\nmethod = \"hmc\"\nleapfrog = 5",
        )
        .unwrap();
        let array = ExperimentConfig::from_toml_str(
            "task = \"gm-2\"\nbudgets = [5]\n[[methods]]\nmethod = \"hmc\"\nleapfrog = [5]",
        )
        .unwrap();
        assert_eq!(scalar.hash, array.hash);
        assert_eq!(scalar.instances[0].label, "hmc");
    }
}
