//! CSV figure data.
//!
//! Everything here is a pure function of its inputs: manifests are deduped
//! by job coordinates (last line wins), sorted, and processed with fixed
//! bootstrap seeds, so re-emitting from the same manifest file reproduces
//! every CSV byte for byte. No plotting; the CSVs are the interface.

use crate::manifest::{read_samples, RunManifest};
use crate::sweep::T0SweepPoint;
use crate::BenchError;
use cds_core::metrics::{bootstrap_front, hypervolume_ratios, pareto_front};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Metrics that get a front file, in emission order.
const FRONT_METRICS: [&str; 3] = ["w2", "tv_energy", "mmd_energy"];
const BOOTSTRAP_SEED: u64 = 0x6669_6773;

pub fn write_rt_vs_t0(points: &[T0SweepPoint], path: &Path) -> Result<(), BenchError> {
    if points.is_empty() {
        return Err(BenchError::EmptyInput("no sweep points".into()));
    }
    let mut csv = String::from(
        "t0,seed,replicas,sweeps,round_trips,round_trip_rate,gcb,pilot_gcb,w2,evals\n",
    );
    for p in points {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            p.t0,
            p.seed,
            p.replicas,
            p.sweeps,
            p.round_trips,
            p.round_trip_rate,
            opt(p.gcb),
            opt(p.pilot_gcb),
            opt(p.w2),
            p.evals
        ));
    }
    write_file(path, &csv)
}

/// Emit every figure CSV into `outdir`. Sample files are resolved relative
/// to `manifest_dir`. Returns the files written.
pub fn emit_figures(
    manifests: &[RunManifest],
    manifest_dir: &Path,
    outdir: &Path,
    iterations: usize,
) -> Result<Vec<PathBuf>, BenchError> {
    if manifests.is_empty() {
        return Err(BenchError::EmptyInput("no manifests".into()));
    }
    let mut rows = dedup_and_sort(manifests);
    rows.retain(|m| {
        if m.failed {
            eprintln!("warning: skipping failed run {} b{} r{}", m.method, m.budget, m.replicate);
        }
        !m.failed
    });
    if rows.is_empty() {
        return Err(BenchError::EmptyInput("only failed manifests".into()));
    }
    std::fs::create_dir_all(outdir)?;
    let mut written = Vec::new();

    let mut by_task: BTreeMap<&str, Vec<&RunManifest>> = BTreeMap::new();
    for m in &rows {
        by_task.entry(m.task.as_str()).or_default().push(m);
    }

    for (task, task_rows) in &by_task {
        for metric in FRONT_METRICS {
            if let Some(path) = write_front(task, task_rows, metric, outdir, iterations)? {
                written.push(path);
            }
        }
        if let Some(path) = write_hvr(task, task_rows, outdir)? {
            written.push(path);
        }
        if let Some(path) = write_transport_fronts(task, task_rows, outdir, iterations)? {
            written.push(path);
        }
        written.extend(write_scatters(task, task_rows, manifest_dir, outdir)?);
    }
    Ok(written)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn write_file(path: &Path, content: &str) -> Result<(), BenchError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

fn dedup_and_sort(manifests: &[RunManifest]) -> Vec<RunManifest> {
    // job coordinates identify a run; a rerun appended later supersedes
    let mut latest: BTreeMap<(String, String, u64, usize), RunManifest> = BTreeMap::new();
    for m in manifests {
        latest.insert(
            (m.task.clone(), m.method.clone(), m.budget, m.replicate),
            m.clone(),
        );
    }
    latest.into_values().collect()
}

/// Replicate points of one (method label, budget) cell: the bootstrap's
/// resampling unit.
fn config_groups<'m>(
    rows: &[&'m RunManifest],
    metric: &str,
    keep: impl Fn(&RunManifest) -> bool,
) -> BTreeMap<(String, u64), Vec<(f64, f64)>> {
    let mut groups: BTreeMap<(String, u64), Vec<(f64, f64)>> = BTreeMap::new();
    for m in rows {
        if !keep(m) {
            continue;
        }
        if let Some(&value) = m.metrics.get(metric) {
            groups
                .entry((m.method.clone(), m.budget))
                .or_default()
                .push((m.realized_evals as f64, value));
        }
    }
    groups
}

fn write_front(
    task: &str,
    rows: &[&RunManifest],
    metric: &str,
    outdir: &Path,
    iterations: usize,
) -> Result<Option<PathBuf>, BenchError> {
    let mut csv = String::from("method,evals,median,p5,p95\n");
    let mut any = false;
    let mut methods: Vec<&str> = rows.iter().map(|m| m.method_id.name()).collect();
    methods.sort_unstable();
    methods.dedup();
    for method in methods {
        let groups = config_groups(rows, metric, |m| m.method_id.name() == method);
        if groups.is_empty() {
            eprintln!("warning: {task}/{method} has no `{metric}` values; column omitted");
            continue;
        }
        let configs: Vec<Vec<(f64, f64)>> = groups.into_values().collect();
        let band = bootstrap_front(&configs, iterations, BOOTSTRAP_SEED);
        for i in 0..band.grid.len() {
            csv.push_str(&format!(
                "{method},{},{},{},{}\n",
                band.grid[i], band.median[i], band.lo[i], band.hi[i]
            ));
        }
        any = true;
    }
    if !any {
        eprintln!("warning: no `{metric}` values on {task}; file omitted");
        return Ok(None);
    }
    let path = outdir.join(format!("front_{task}_{metric}.csv"));
    write_file(&path, &csv)?;
    Ok(Some(path))
}

fn write_hvr(
    task: &str,
    rows: &[&RunManifest],
    outdir: &Path,
) -> Result<Option<PathBuf>, BenchError> {
    let mut csv = String::from("metric,method,hvr\n");
    let mut any = false;
    for metric in FRONT_METRICS {
        let mut methods: Vec<&str> = rows.iter().map(|m| m.method_id.name()).collect();
        methods.sort_unstable();
        methods.dedup();
        // one mean point per (label, budget) cell, fronts per method
        let mut names = Vec::new();
        let mut fronts = Vec::new();
        for method in methods {
            let groups = config_groups(rows, metric, |m| m.method_id.name() == method);
            if groups.is_empty() {
                continue;
            }
            let points: Vec<(f64, f64)> = groups.values().map(|g| mean_point(g)).collect();
            names.push(method);
            fronts.push(pareto_front(&points));
        }
        if names.is_empty() {
            continue;
        }
        for (name, ratio) in names.iter().zip(hypervolume_ratios(&fronts)) {
            csv.push_str(&format!("{metric},{name},{ratio}\n"));
            any = true;
        }
    }
    if !any {
        return Ok(None);
    }
    let path = outdir.join(format!("hvr_{task}.csv"));
    write_file(&path, &csv)?;
    Ok(Some(path))
}

fn mean_point(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    (
        points.iter().map(|p| p.0).sum::<f64>() / n,
        points.iter().map(|p| p.1).sum::<f64>() / n,
    )
}

/// Per-instance fronts for the two-stage sampler only, keyed by transport,
/// so deterministic and diffusion transports can be compared directly.
fn write_transport_fronts(
    task: &str,
    rows: &[&RunManifest],
    outdir: &Path,
    iterations: usize,
) -> Result<Option<PathBuf>, BenchError> {
    let cds: Vec<&RunManifest> = rows
        .iter()
        .copied()
        .filter(|m| m.method_id.name() == "cds")
        .collect();
    if cds.is_empty() {
        return Ok(None);
    }
    let mut labels: Vec<&str> = cds.iter().map(|m| m.method.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();

    let mut csv = String::from("label,transport,evals,median,p5,p95\n");
    let mut any = false;
    for label in labels {
        let groups = config_groups(&cds, "w2", |m| m.method == label);
        if groups.is_empty() {
            continue;
        }
        let transport = cds
            .iter()
            .find(|m| m.method == label)
            .and_then(|m| m.params.get("transport"))
            .and_then(|t| t.as_str())
            .unwrap_or("?")
            .to_string();
        let configs: Vec<Vec<(f64, f64)>> = groups.into_values().collect();
        let band = bootstrap_front(&configs, iterations, BOOTSTRAP_SEED);
        for i in 0..band.grid.len() {
            csv.push_str(&format!(
                "{label},{transport},{},{},{},{}\n",
                band.grid[i], band.median[i], band.lo[i], band.hi[i]
            ));
        }
        any = true;
    }
    if !any {
        return Ok(None);
    }
    let path = outdir.join(format!("transport_fronts_{task}.csv"));
    write_file(&path, &csv)?;
    Ok(Some(path))
}

/// First two coordinates of each instance's samples at the largest budget,
/// first replicate.
fn write_scatters(
    task: &str,
    rows: &[&RunManifest],
    manifest_dir: &Path,
    outdir: &Path,
) -> Result<Vec<PathBuf>, BenchError> {
    let mut labels: Vec<&str> = rows.iter().map(|m| m.method.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut written = Vec::new();
    for label in labels {
        let pick = rows
            .iter()
            .filter(|m| m.method == label && m.sample_file.is_some())
            .max_by_key(|m| (m.budget, std::cmp::Reverse(m.replicate)));
        let Some(m) = pick else { continue };
        let file = m.sample_file.as_ref().expect("filtered on sample_file");
        let samples = read_samples(&manifest_dir.join(file))?;
        if samples.first().map_or(true, |r| r.len() < 2) {
            continue;
        }
        let mut csv = String::from("x0,x1\n");
        for row in &samples {
            csv.push_str(&format!("{},{}\n", row[0], row[1]));
        }
        let path = outdir.join(format!("scatter_{task}_{}.csv", sanitize(label)));
        write_file(&path, &csv)?;
        written.push(path);
    }
    Ok(written)
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '.' || c == '=' || c == '-' { c } else { '-' })
        .collect()
}
