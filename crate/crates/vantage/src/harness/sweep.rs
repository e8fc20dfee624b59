//! Policy sweeps and the flight-model ablation.

use rayon::prelude::*;

use crate::error::Result;
use crate::harness::{run_experiment, ExperimentConfig, RunResult};
use crate::planner::PolicyKind;

/// Aggregated result of one policy across seeds.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub policy: PolicyKind,
    /// Mean over seeds of the per-run mean error.
    pub mean: f64,
    /// Sample standard deviation across seeds.
    pub std: f64,
    pub per_seed: Vec<f64>,
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Runs the cross product of `policies` x `seeds` over the base config.
/// Runs execute in parallel; results are deterministic per (config, seed).
pub fn sweep(
    base: &ExperimentConfig,
    policies: &[PolicyKind],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(PolicyKind, u64)> = policies
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let results: Vec<Result<(PolicyKind, f64)>> = jobs
        .par_iter()
        .map(|&(policy, seed)| {
            let mut config = base.clone();
            config.policy = policy;
            config.seed = seed;
            let result = run_experiment(&config)?;
            Ok((policy, result.mean_mpjpe))
        })
        .collect();

    let mut rows = Vec::new();
    for &policy in policies {
        let mut per_seed = Vec::new();
        for r in &results {
            match r {
                Ok((p, m)) if *p == policy => per_seed.push(*m),
                Ok(_) => {}
                Err(e) => return Err(clone_error(e)),
            }
        }
        let (mean, std) = mean_std(&per_seed);
        rows.push(SweepRow {
            policy,
            mean,
            std,
            per_seed,
        });
    }
    Ok(rows)
}

// Error is not Clone (io::Error); reproduce enough context for the caller.
fn clone_error(e: &crate::error::Error) -> crate::error::Error {
    crate::error::Error::Config(format!("sweep run failed: {e}"))
}

/// Flight-model ablation: the active policy with model-based candidate
/// prediction versus momentum-free uniform sampling, same seeds.
#[derive(Debug, Clone)]
pub struct AblationReport {
    pub with_model: SweepRow,
    pub without_model: SweepRow,
}

pub fn ablate(base: &ExperimentConfig, seeds: &[u64]) -> Result<AblationReport> {
    let mut with_cfg = base.clone();
    with_cfg.use_flight_model = true;
    with_cfg.policy = PolicyKind::Active;
    let mut without_cfg = with_cfg.clone();
    without_cfg.use_flight_model = false;

    let with_model = sweep(&with_cfg, &[PolicyKind::Active], seeds)?.remove(0);
    let without_model = sweep(&without_cfg, &[PolicyKind::Active], seeds)?.remove(0);
    Ok(AblationReport {
        with_model,
        without_model,
    })
}

/// Convenience wrapper when a caller needs full run results per seed.
pub fn run_seeds(base: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<RunResult>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut config = base.clone();
            config.seed = seed;
            run_experiment(&config)
        })
        .collect()
}
