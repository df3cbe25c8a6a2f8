use serde::{Deserialize, Serialize};

use super::{ExperimentError, Result, RoundResult};

/// A metric averaged over rounds and languages, then summarised over
/// replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub metric: String,
    /// Mean over all (round, language) pairs of each replicate.
    pub per_replicate: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over replicates; zero for one replicate.
    pub stddev: f64,
}

pub fn aggregate<'a>(replicates: impl IntoIterator<Item = &'a [RoundResult]>, metric: &str) -> Result<AggregateReport> {
    let mut per_replicate = Vec::new();
    for (k, rounds) in replicates.into_iter().enumerate() {
        let mut vals = Vec::new();
        for r in rounds {
            for (lang, m) in &r.metrics.languages {
                let v = m.values.get(metric).copied().ok_or_else(|| {
                    ExperimentError::Config(format!("metric {metric} missing for {lang} in round {} of replicate {k}", r.round))
                })?;
                vals.push(v);
            }
        }
        if vals.is_empty() {
            return Err(ExperimentError::Config(format!("replicate {k} has no results")));
        }
        per_replicate.push(vals.iter().sum::<f64>() / vals.len() as f64);
    }
    if per_replicate.is_empty() {
        return Err(ExperimentError::Config("no replicates to aggregate".into()));
    }
    let n = per_replicate.len() as f64;
    let mean = per_replicate.iter().sum::<f64>() / n;
    let stddev = if per_replicate.len() > 1 {
        (per_replicate.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(AggregateReport {
        metric: metric.to_string(),
        per_replicate,
        mean,
        stddev,
    })
}
