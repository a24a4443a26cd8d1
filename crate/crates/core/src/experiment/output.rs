//! On-disk layout of experiment results.
//!
//! ```text
//! <root>/gap_report.csv
//! <root>/summary.txt
//! <root>/<protocol>/<scenario>/seed-<n>/
//!     manifest.json  training_curve.csv  grounding_audit.csv  alpha_trace.csv
//!     metrics.csv    trajectory.csv      vehicles.csv
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::protocol::{Evaluation, ProtocolRun, SeedRun};
use super::report::{summary_table, GapReport, SeedGap};
use super::stats::Aggregate;
use crate::sim::{MetricsRecord, Scenario, NUM_LANES};
use crate::{Error, Result};

pub const OUTPUT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const GAP_REPORT_FILE: &str = "gap_report.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Identity and resolved configuration of one seed directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub protocol: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub config: ExperimentConfig,
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub environment: Environment,
    pub episode: u64,
    pub att: f64,
    pub tp: f64,
    pub reward: f64,
    pub queue: f64,
    pub delay: f64,
    pub delay_seconds: f64,
    pub spawned: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Sim,
    Real,
}

impl MetricsRow {
    fn new(environment: Environment, episode: u64, m: &MetricsRecord) -> Self {
        Self {
            environment,
            episode,
            att: m.att,
            tp: m.tp,
            reward: m.reward_mean,
            queue: m.queue_mean,
            delay: m.delay,
            delay_seconds: m.delay_seconds,
            spawned: m.spawned,
        }
    }

    fn record(&self) -> MetricsRecord {
        MetricsRecord {
            att: self.att,
            tp: self.tp,
            reward_mean: self.reward,
            queue_mean: self.queue,
            delay: self.delay,
            delay_seconds: self.delay_seconds,
            spawned: self.spawned,
        }
    }
}

pub fn seed_dir(root: &Path, run: &SeedRun) -> PathBuf {
    root.join(&run.label)
        .join(run.scenario.name())
        .join(format!("seed-{}", run.seed))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .from_path(path)
        .map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record(header).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Write every artifact of one seed run; returns its directory.
pub fn write_seed_run(root: &Path, config: &ExperimentConfig, run: &SeedRun) -> Result<PathBuf> {
    let dir = seed_dir(root, run);
    fs::create_dir_all(&dir)?;
    let manifest = Manifest {
        format_version: OUTPUT_FORMAT_VERSION,
        protocol: run.label.clone(),
        scenario: run.scenario,
        seed: run.seed,
        config: ExperimentConfig {
            seeds: vec![run.seed],
            ..config.clone()
        },
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    write_rows(
        &dir.join("training_curve.csv"),
        &run.training,
        &[
            "stage",
            "iteration",
            "epoch",
            "episode",
            "total_return",
            "mean_td_loss",
            "epsilon",
        ],
    )?;
    write_rows(
        &dir.join("grounding_audit.csv"),
        &run.audit,
        &[
            "iteration",
            "epoch",
            "step",
            "state_hash",
            "policy_action",
            "grounded_action",
            "uncertainty",
            "alpha",
            "accepted",
        ],
    )?;
    write_rows(
        &dir.join("alpha_trace.csv"),
        &run.alpha_trace,
        &[
            "iteration",
            "alpha_used",
            "alpha_next",
            "logged",
            "mean_uncertainty",
            "accepted",
        ],
    )?;

    let evals = [
        (Environment::Sim, &run.sim_eval),
        (Environment::Real, &run.real_eval),
    ];
    let metric_rows: Vec<MetricsRow> = evals
        .iter()
        .flat_map(|(env, ev)| {
            ev.episodes
                .iter()
                .map(move |e| MetricsRow::new(*env, e.episode, &e.metrics))
        })
        .collect();
    write_rows(&dir.join(METRICS_FILE), &metric_rows, &[])?;
    write_trajectory(&dir.join("trajectory.csv"), &evals)?;
    write_vehicles(&dir.join("vehicles.csv"), &evals)?;
    Ok(dir)
}

fn env_name(e: Environment) -> &'static str {
    match e {
        Environment::Sim => "sim",
        Environment::Real => "real",
    }
}

fn write_trajectory(path: &Path, evals: &[(Environment, &Evaluation)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = ["environment", "episode", "step", "time", "action", "reward"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..NUM_LANES).map(|l| format!("queue_{l}")));
    w.write_record(&header).map_err(csv_err)?;
    for (env, ev) in evals {
        for ep in &ev.episodes {
            for (step, d) in ep.decisions.iter().enumerate() {
                let mut rec = vec![
                    env_name(*env).to_string(),
                    ep.episode.to_string(),
                    step.to_string(),
                    d.time.to_string(),
                    d.action.to_string(),
                    d.reward.to_string(),
                ];
                rec.extend(d.lane_queues.iter().map(u32::to_string));
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_vehicles(path: &Path, evals: &[(Environment, &Evaluation)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "environment",
        "episode",
        "id",
        "lane",
        "spawn_time",
        "completion_time",
        "free_flow_time",
    ])
    .map_err(csv_err)?;
    for (env, ev) in evals {
        for ep in &ev.episodes {
            for v in &ep.vehicles {
                w.write_record([
                    env_name(*env).to_string(),
                    ep.episode.to_string(),
                    v.id.to_string(),
                    v.lane.to_string(),
                    v.spawn_time.to_string(),
                    v.completion_time.to_string(),
                    v.free_flow_time.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Write all seed directories of several protocols plus the top-level
/// report and summary.
pub fn write_protocol_runs(root: &Path, runs: &[ProtocolRun]) -> Result<()> {
    fs::create_dir_all(root)?;
    for p in runs {
        for r in &p.runs {
            write_seed_run(root, &p.config, r)?;
        }
    }
    write_reports(
        root,
        &runs.iter().map(|p| p.report.clone()).collect::<Vec<_>>(),
    )
}

#[derive(Serialize)]
struct GapRow<'a> {
    protocol: &'a str,
    scenario: &'a str,
    metric: &'a str,
    sim_mean: f64,
    sim_std: f64,
    real_mean: f64,
    real_std: f64,
    delta_mean: f64,
    delta_std: f64,
    seeds: usize,
}

pub fn write_reports(root: &Path, reports: &[GapReport]) -> Result<()> {
    fs::create_dir_all(root)?;
    let rows: Vec<GapRow> = reports
        .iter()
        .flat_map(|r| {
            r.metrics.iter().map(move |m| GapRow {
                protocol: &r.label,
                scenario: r.scenario.name(),
                metric: &m.metric,
                sim_mean: m.sim_mean,
                sim_std: m.sim_std,
                real_mean: m.real_mean,
                real_std: m.real_std,
                delta_mean: m.delta_mean,
                delta_std: m.delta_std,
                seeds: r.seeds.len(),
            })
        })
        .collect();
    write_rows(&root.join(GAP_REPORT_FILE), &rows, &[])?;
    fs::write(root.join(SUMMARY_FILE), summary_table(reports))?;
    Ok(())
}

/// Read a seed directory back into its identity and seed-level gap,
/// recomputed from `metrics.csv`.
pub fn read_seed_dir(dir: &Path) -> Result<(Manifest, SeedGap)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let metrics_path = dir.join(METRICS_FILE);
    for p in [&manifest_path, &metrics_path] {
        if !p.is_file() {
            return Err(Error::Input(format!(
                "incomplete run directory: missing {}",
                p.display()
            )));
        }
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.format_version != OUTPUT_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{} has format version {}, expected {OUTPUT_FORMAT_VERSION}",
            manifest_path.display(),
            manifest.format_version
        )));
    }
    let mut reader = csv::Reader::from_path(&metrics_path).map_err(csv_err)?;
    let (mut sim, mut real) = (Vec::new(), Vec::new());
    for row in reader.deserialize::<MetricsRow>() {
        let row = row.map_err(|e| Error::Format(format!("{}: {e}", metrics_path.display())))?;
        match row.environment {
            Environment::Sim => sim.push(row.record()),
            Environment::Real => real.push(row.record()),
        }
    }
    if sim.is_empty() || real.is_empty() {
        return Err(Error::Input(format!(
            "incomplete run directory: {} lacks sim or real episodes",
            metrics_path.display()
        )));
    }
    let gap = SeedGap::new(
        manifest.seed,
        Aggregate::over_episodes(&sim).mean,
        Aggregate::over_episodes(&real).mean,
    );
    Ok((manifest, gap))
}

/// Seed directories under `path`: the path itself if it holds a manifest,
/// otherwise every descendant that does, in sorted order.
pub fn find_seed_dirs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.join(MANIFEST_FILE).is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            if p.file_name()
                .is_some_and(|n| n.to_string_lossy().starts_with("seed-"))
            {
                out.push(p);
            } else {
                out.extend(find_seed_dirs(&p)?);
            }
        }
    }
    Ok(out)
}

/// Merge seed directories into one report per (protocol, scenario).
/// Directories that cannot be read are returned alongside.
pub fn gap_reports_from_dirs(dirs: &[PathBuf]) -> (Vec<GapReport>, Vec<(PathBuf, Error)>) {
    let mut groups: BTreeMap<(String, String), (Scenario, Vec<SeedGap>)> = BTreeMap::new();
    let mut failed = Vec::new();
    for d in dirs {
        match read_seed_dir(d) {
            Ok((m, gap)) => groups
                .entry((m.protocol.clone(), m.scenario.name().to_string()))
                .or_insert_with(|| (m.scenario, Vec::new()))
                .1
                .push(gap),
            Err(e) => failed.push((d.clone(), e)),
        }
    }
    let reports = groups
        .into_iter()
        .map(|((label, _), (scenario, mut seeds))| {
            seeds.sort_by_key(|s| s.seed);
            GapReport::from_seeds(&label, scenario, seeds)
        })
        .collect();
    (reports, failed)
}
