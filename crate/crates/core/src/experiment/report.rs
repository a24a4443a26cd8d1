use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{mean, sample_std, METRIC_COUNT};
use crate::sim::{MetricsRecord, Scenario};

/// Seed-level metric means in both environments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedGap {
    pub seed: u64,
    pub sim: [f64; METRIC_COUNT],
    pub real: [f64; METRIC_COUNT],
    /// `real − sim` per metric.
    pub delta: [f64; METRIC_COUNT],
}

impl SeedGap {
    pub fn new(seed: u64, sim: [f64; METRIC_COUNT], real: [f64; METRIC_COUNT]) -> Self {
        Self {
            seed,
            sim,
            real,
            delta: std::array::from_fn(|i| real[i] - sim[i]),
        }
    }
}

/// One metric aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGap {
    pub metric: String,
    pub sim_mean: f64,
    pub sim_std: f64,
    pub real_mean: f64,
    pub real_std: f64,
    /// Always exactly `real_mean − sim_mean`.
    pub delta_mean: f64,
    /// Sample standard deviation of the per-seed gaps.
    pub delta_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub label: String,
    pub scenario: Scenario,
    pub seeds: Vec<SeedGap>,
    pub metrics: Vec<MetricGap>,
}

impl GapReport {
    /// Aggregate per-seed results; spreads are sample standard deviations
    /// over seeds.
    pub fn from_seeds(label: &str, scenario: Scenario, seeds: Vec<SeedGap>) -> Self {
        let metrics = (0..METRIC_COUNT)
            .map(|i| {
                let col = |f: fn(&SeedGap) -> [f64; METRIC_COUNT]| {
                    seeds.iter().map(|s| f(s)[i]).collect::<Vec<_>>()
                };
                let (sim, real, delta) = (col(|s| s.sim), col(|s| s.real), col(|s| s.delta));
                let (sim_mean, real_mean) = (mean(&sim), mean(&real));
                MetricGap {
                    metric: MetricsRecord::NAMES[i].to_string(),
                    sim_mean,
                    sim_std: sample_std(&sim),
                    real_mean,
                    real_std: sample_std(&real),
                    delta_mean: real_mean - sim_mean,
                    delta_std: sample_std(&delta),
                }
            })
            .collect();
        Self {
            label: label.to_string(),
            scenario,
            seeds,
            metrics,
        }
    }

    pub fn metric(&self, name: &str) -> Option<&MetricGap> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    /// Mean gap of one metric (`ATT`, `TP`, `Reward`, `Queue`, `Delay`).
    pub fn delta(&self, name: &str) -> f64 {
        self.metric(name).map_or(f64::NAN, |m| m.delta_mean)
    }
}

/// Plain-text table: one row per report, each cell the real-world value
/// followed by its gap, `real (Δ ± std)`.
pub fn summary_table(reports: &[GapReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# ugatlab summary: cells are real-world mean (gap mean ± gap std over seeds)"
    );
    let _ = write!(out, "{:<28} {:<8}", "protocol", "scenario");
    for name in MetricsRecord::NAMES {
        let _ = write!(out, " {:>28}", format!("{name}(Δ)"));
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<28} {:<8}", r.label, r.scenario.name());
        for m in &r.metrics {
            let _ = write!(
                out,
                " {:>28}",
                format!(
                    "{:.2} ({:+.2}±{:.2})",
                    m.real_mean, m.delta_mean, m.delta_std
                )
            );
        }
        let seeds: Vec<String> = r.seeds.iter().map(|s| s.seed.to_string()).collect();
        let _ = write!(out, "  seeds={}", seeds.join(","));
        out.push('\n');
    }
    out
}
