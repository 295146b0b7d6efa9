//! Command-line front-end.
//!
//! Verbs: `run` a config, `t0-sweep` a task, `figures` from manifests,
//! `validate` the pipeline invariants, `make-reference` for ground-truth
//! fixtures. Environment: `CDS_BENCH_OUT` for the output root and
//! `CDS_BENCH_THREADS` for the pool width; flags override both.

use cds_bench::config::ExperimentConfig;
use cds_bench::figures::{emit_figures, write_rt_vs_t0};
use cds_bench::manifest::read_manifests;
use cds_bench::methods::MethodId;
use cds_bench::runner::{make_reference, run_experiment, MANIFEST_FILE};
use cds_bench::sweep::{sweep_t0, T0SweepSettings};
use cds_bench::tasks::{build, lj13_fixture_path, TaskId};
use cds_bench::BenchError;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "cds-bench", version, about = "Budget-matched sampler benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every job in a config; manifests and samples land in --out.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: $CDS_BENCH_OUT or ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: $CDS_BENCH_THREADS or all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Run only instances of this method.
        #[arg(long)]
        method: Option<String>,
    },
    /// Round-trip study over a grid of initial times.
    T0Sweep {
        #[arg(long)]
        task: String,
        #[arg(long, value_delimiter = ',', default_value = "1.0,0.5,0.2,0.1")]
        t0: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Measured sweeps per point (warmup and pilot add more).
        #[arg(long, default_value_t = 2000)]
        sweeps: usize,
    },
    /// Emit figure CSVs from a run directory's manifest log.
    Figures {
        /// Run directory holding manifests.jsonl and sample files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV destination (default: <out>/figures).
        #[arg(long)]
        figures_out: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
    },
    /// Fast end-to-end invariant checks; optionally validates a config too.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a task's ground-truth fixture.
    MakeReference {
        #[arg(long)]
        task: String,
        /// Fixture path (default: the committed fixture location).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Total evaluation budget of the annealed run.
        #[arg(long, default_value_t = 10_000_000)]
        budget: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1500)]
        samples: usize,
    },
}

fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("CDS_BENCH_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("CDS_BENCH_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(0)
}

fn parse_task(name: &str) -> Result<TaskId, BenchError> {
    TaskId::parse(name).ok_or_else(|| BenchError::Config(format!("unknown task `{name}`")))
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(cds_bench::exit_code(&e));
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), BenchError> {
    match cmd {
        Cmd::Run {
            config,
            out,
            seed,
            threads,
            method,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.override_seed(seed)?;
            }
            if let Some(method) = method {
                let id = MethodId::parse(&method)
                    .ok_or_else(|| BenchError::Config(format!("unknown method `{method}`")))?;
                cfg.retain_method(id)?;
            }
            let outdir = out_root(out);
            let manifests = run_experiment(&cfg, &outdir, thread_count(threads))?;
            let failed = manifests.iter().filter(|m| m.failed).count();
            println!(
                "{} runs ({} failed) -> {}",
                manifests.len(),
                failed,
                outdir.join(MANIFEST_FILE).display()
            );
            if failed == manifests.len() {
                return Err(BenchError::RunFailure("every run failed".into()));
            }
            Ok(())
        }
        Cmd::T0Sweep {
            task,
            t0,
            seeds,
            out,
            sweeps,
        } => {
            let id = parse_task(&task)?;
            let settings = T0SweepSettings {
                main_sweeps: sweeps,
                ..T0SweepSettings::default()
            };
            let points = sweep_t0(&build(id), &t0, &seeds, &settings)?;
            let path = out_root(out).join(format!("rt_vs_t0_{}.csv", id.name()));
            write_rt_vs_t0(&points, &path)?;
            println!("{} points -> {}", points.len(), path.display());
            Ok(())
        }
        Cmd::Figures {
            out,
            figures_out,
            iterations,
        } => {
            let outdir = out_root(out);
            let manifests = read_manifests(&outdir.join(MANIFEST_FILE))?;
            let dest = figures_out.unwrap_or_else(|| outdir.join("figures"));
            let written = emit_figures(&manifests, &outdir, &dest, iterations)?;
            for p in &written {
                println!("{}", p.display());
            }
            Ok(())
        }
        Cmd::Validate { config } => validate(config),
        Cmd::MakeReference {
            task,
            out,
            budget,
            seed,
            samples,
        } => {
            let id = parse_task(&task)?;
            let path = out.unwrap_or_else(|| match id {
                TaskId::Lj13 => lj13_fixture_path(),
                other => PathBuf::from(format!("{}_reference.bin", other.name())),
            });
            let info = make_reference(id, &path, budget, seed, samples)?;
            println!(
                "{} samples of dim {} -> {} (sha256 {})",
                info.n,
                info.dim,
                path.display(),
                info.sha256
            );
            Ok(())
        }
    }
}

/// Cheap invariants that catch a broken build or environment before a long
/// run: config determinism, sample-file round trip, seed reproducibility,
/// and the budget split identity.
fn validate(config: Option<PathBuf>) -> Result<(), BenchError> {
    use cds_bench::manifest::{read_samples, write_samples};
    use cds_bench::methods::{run_method, CdsParams, MethodInstance, MethodParams};

    let mut ok = true;
    let mut check = |name: &str, passed: bool| {
        println!("{} {name}", if passed { "pass" } else { "FAIL" });
        ok &= passed;
    };

    let cfg_text = match &config {
        Some(path) => std::fs::read_to_string(path)?,
        None => "task = \"gm-2\"\nbudgets = [200]\n[[methods]]\nmethod = \"mala\"\n".to_string(),
    };
    let a = ExperimentConfig::from_toml_str(&cfg_text)?;
    let b = ExperimentConfig::from_toml_str(&cfg_text)?;
    check(
        "config expansion is deterministic",
        a.hash == b.hash
            && a.jobs().iter().map(|j| j.seed).collect::<Vec<_>>()
                == b.jobs().iter().map(|j| j.seed).collect::<Vec<_>>(),
    );

    let dir = std::env::temp_dir().join(format!("cds-bench-validate-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let rows = vec![vec![1.0, 2.0], vec![-3.5, 4.25]];
    let f = dir.join("probe.bin");
    let w1 = write_samples(&f, &rows)?;
    let back = read_samples(&f)?;
    let w2 = write_samples(&f, &back)?;
    check(
        "sample files round-trip bit-exactly",
        back == rows && w1.sha256 == w2.sha256,
    );

    let task = build(TaskId::Gm2);
    let inst = MethodInstance {
        id: MethodId::Cds,
        label: "probe".into(),
        params: MethodParams::Cds(CdsParams {
            chain_budget: 150,
            ..CdsParams::default()
        }),
    };
    let r1 = run_method(&task, &inst, 300, 100, 11)?;
    let r2 = run_method(&task, &inst, 300, 100, 11)?;
    check(
        "equal seeds reproduce samples and cost",
        r1.samples == r2.samples && r1.sampler_evals == r2.sampler_evals,
    );
    check(
        "realized cost stays within budget",
        r1.sampler_evals > 0 && r1.sampler_evals <= 300,
    );

    check(
        "budget split matches its contract",
        cds_core::cds::split_budget(1000u64, 0.5f64, 5, 1, 1) == (99, 250),
    );

    if ok {
        Ok(())
    } else {
        Err(BenchError::RunFailure("validation failed".into()))
    }
}
