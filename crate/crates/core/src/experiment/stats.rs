use serde::{Deserialize, Serialize};

use crate::sim::MetricsRecord;

pub const METRIC_COUNT: usize = 5;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// √(Σ(x − x̄)²/n); 0 for fewer than two values.
pub fn population_std(xs: &[f64]) -> f64 {
    spread(xs, xs.len() as f64)
}

/// √(Σ(x − x̄)²/(n − 1)); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    spread(xs, xs.len() as f64 - 1.0)
}

fn spread(xs: &[f64], denom: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / denom).sqrt()
}

/// Per-metric difference `real − sim`.
pub fn compute_gap(real: &MetricsRecord, sim: &MetricsRecord) -> [f64; METRIC_COUNT] {
    let (r, s) = (real.headline(), sim.headline());
    std::array::from_fn(|i| r[i] - s[i])
}

/// Mean and spread of the headline metrics over a set of records.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: [f64; METRIC_COUNT],
    pub std: [f64; METRIC_COUNT],
}

impl Aggregate {
    /// Mean and population standard deviation per metric; evaluation
    /// episodes are treated as the whole population of interest.
    pub fn over_episodes(records: &[MetricsRecord]) -> Self {
        Self::from_rows(
            &records
                .iter()
                .map(MetricsRecord::headline)
                .collect::<Vec<_>>(),
            population_std,
        )
    }

    pub(crate) fn from_rows(rows: &[[f64; METRIC_COUNT]], std_fn: fn(&[f64]) -> f64) -> Self {
        let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<_>>();
        Self {
            mean: std::array::from_fn(|i| mean(&col(i))),
            std: std::array::from_fn(|i| std_fn(&col(i))),
        }
    }
}
