use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, train, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::Dataset;

/// Outcome of one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub test_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    pub final_epoch: Option<usize>,
    /// Failure message; the seed is left out of the aggregate.
    pub error: Option<String>,
}

/// Mean and sample standard deviation of test accuracy over successful seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub config: TrainConfig,
    pub per_seed: Vec<SeedResult>,
    pub mean: f64,
    pub std: f64,
    /// Percentages, e.g. `"85.00 ± 7.07"`.
    pub summary: String,
}

impl AggregateReport {
    /// Aggregates per-seed results; fails only when no seed succeeded.
    pub fn from_results(config: TrainConfig, per_seed: Vec<SeedResult>) -> Result<Self> {
        let accs: Vec<f64> = per_seed.iter().filter_map(|r| r.test_accuracy).collect();
        if accs.is_empty() {
            return Err(Error::Numerical {
                epoch: 0,
                detail: "every seed failed".into(),
            });
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let std = sample_std(&accs);
        Ok(AggregateReport {
            config,
            per_seed,
            mean,
            std,
            summary: format_mean_std(mean, std),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// `"{mean} ± {std}"` in percent with two decimals.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * std)
}

/// Bessel-corrected standard deviation; 0 for fewer than two samples.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Trains one replicate per seed, at most `jobs` at a time. Results keep seed order.
pub fn multi_seed_run(
    dataset: &Dataset,
    config: &TrainConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<AggregateReport> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let per_seed: Vec<SeedResult> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| run_seed(dataset, config, seed))
            .collect()
    });
    AggregateReport::from_results(config.clone(), per_seed)
}

fn run_seed(dataset: &Dataset, config: &TrainConfig, seed: u64) -> SeedResult {
    let cfg = TrainConfig { seed, ..config.clone() };
    let result = train(dataset, &cfg).and_then(|out| {
        let test = evaluate(&out.model, dataset, &out.basis, "test")?;
        let val = evaluate(&out.model, dataset, &out.basis, "val")?;
        Ok((test, val, out.history))
    });
    match result {
        Ok((test, val, history)) => SeedResult {
            seed,
            test_accuracy: Some(test.accuracy),
            val_accuracy: Some(val.accuracy),
            best_epoch: Some(history.best_val_epoch),
            final_epoch: Some(history.final_epoch),
            error: None,
        },
        Err(e) => {
            warn!("seed {seed} failed: {e}");
            SeedResult {
                seed,
                test_accuracy: None,
                val_accuracy: None,
                best_epoch: None,
                final_epoch: None,
                error: Some(e.to_string()),
            }
        }
    }
}
