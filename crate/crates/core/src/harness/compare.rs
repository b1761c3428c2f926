use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Method, ScenarioConfig};
use super::metrics::Summary;
use super::run::{run_prepared, RunMetrics, Scenario};
use crate::error::{Error, Result};

/// Metrics of one (method, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub method: Method,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Statistics of one method across seeds. Runs where a metric is undefined
/// (no attempt, no true match) do not enter that metric's statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub match_rate: Summary,
    pub registration_rmse: Summary,
    pub fused_rmse: Summary,
    pub vio_rmse: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub summaries: Vec<MethodSummary>,
    pub runs: Vec<SeedRun>,
}

/// Runs every method on every seed of `cfg` and summarizes per method.
///
/// Seeds run in parallel. Each seed's world, flight, odometry and map are
/// simulated once and shared by all methods, so the methods see identical
/// inputs.
pub fn compare_methods(cfg: &ScenarioConfig, methods: &[Method], seeds: &[u64]) -> Result<Comparison> {
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "at least one seed is required"));
    }
    if methods.is_empty() {
        return Err(Error::invalid("methods", "at least one method is required"));
    }
    cfg.validate()?;
    let per_seed: Vec<Vec<SeedRun>> = seeds
        .par_iter()
        .map(|&seed| {
            let scenario = Scenario::prepare(&ScenarioConfig { seed, ..cfg.clone() })?;
            methods
                .iter()
                .map(|&method| {
                    let report = run_prepared(&scenario, method)?;
                    Ok(SeedRun {
                        method,
                        seed,
                        metrics: report.metrics,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let runs: Vec<SeedRun> = per_seed.into_iter().flatten().collect();

    let summaries = methods
        .iter()
        .map(|&method| {
            let mine: Vec<&RunMetrics> = runs.iter().filter(|r| r.method == method).map(|r| &r.metrics).collect();
            MethodSummary {
                method,
                runs: mine.len(),
                match_rate: Summary::of(mine.iter().filter_map(|m| m.match_rate)),
                registration_rmse: Summary::of(mine.iter().filter_map(|m| m.registration_rmse)),
                fused_rmse: Summary::of(mine.iter().filter_map(|m| m.fused_rmse)),
                vio_rmse: Summary::of(mine.iter().filter_map(|m| m.vio_rmse)),
            }
        })
        .collect();
    Ok(Comparison {
        seeds: seeds.to_vec(),
        summaries,
        runs,
    })
}

impl Comparison {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid("comparison", e.to_string()))
    }

    /// One row per method: `method,runs` then `n,mean,std` for match rate,
    /// registration RMSE, fused RMSE and VIO RMSE. Undefined cells are empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string(), "runs".to_string()];
        for m in ["match_rate", "registration_rmse", "fused_rmse", "vio_rmse"] {
            for s in ["n", "mean", "std"] {
                header.push(format!("{m}_{s}"));
            }
        }
        w.write_record(&header).map_err(csv_error)?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.summaries {
            let mut row = vec![s.method.to_string(), s.runs.to_string()];
            for m in [&s.match_rate, &s.registration_rmse, &s.fused_rmse, &s.vio_rmse] {
                row.extend([m.n.to_string(), cell(m.mean), cell(m.std)]);
            }
            w.write_record(&row).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid("comparison", e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid("comparison", e.to_string()))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::invalid("comparison", e.to_string())
}
