use rayon::prelude::*;
use serde::Serialize;

use crate::config::GameConfig;
use crate::engine::{run_until_converged, RunResult};
use crate::error::ConfigError;
use crate::rng::{derive_seed, Stream};

/// Mean over samples and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// NaN when `xs` is empty; zero error for a single sample.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Estimate { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() == 1 {
            return Estimate { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate { mean, stderr: (var / n).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub config_hash: String,
    pub seed_base: u64,
    pub samples: usize,
    /// Runs that hit reserve exhaustion; excluded from the estimates below.
    pub exhausted: usize,
    pub converged: usize,
    pub mean_a: Estimate,
    pub sigma_a: Estimate,
    pub sigma_total: Estimate,
    pub mean_total: Estimate,
    pub excess_kurtosis: Estimate,
    pub mean_active_fraction: Estimate,
    pub steps_run: Estimate,
    pub total_weight: Estimate,
    pub heterogeneity: Estimate,
    #[serde(skip)]
    pub runs: Vec<RunResult>,
}

/// Seed of ensemble sample `k`.
pub fn sample_seed(seed_base: u64, k: usize) -> u64 {
    derive_seed(seed_base, Stream::EnsembleSample, k as u64)
}

/// Runs `f` over `jobs` on a pool of `workers` threads; results keep input order.
pub fn parallel_map<T, R, F>(jobs: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    if workers <= 1 {
        return jobs.into_iter().map(f).collect();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
        .install(|| jobs.into_par_iter().map(f).collect())
}

/// Independent runs of `config` with seeds derived from `seed_base`.
pub fn run_ensemble(config: &GameConfig, samples: usize, seed_base: u64, workers: usize) -> Result<EnsembleSummary, ConfigError> {
    config.validate()?;
    let jobs: Vec<GameConfig> = (0..samples)
        .map(|k| GameConfig { seed: sample_seed(seed_base, k), ..config.clone() })
        .collect();
    let runs = parallel_map(jobs, workers, |c| run_until_converged(&c))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(config, seed_base, runs))
}

pub fn summarize(config: &GameConfig, seed_base: u64, runs: Vec<RunResult>) -> EnsembleSummary {
    let ok: Vec<&RunResult> = runs.iter().filter(|r| r.exhausted.is_none()).collect();
    let est = |f: fn(&RunResult) -> f64| Estimate::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
    EnsembleSummary {
        config_hash: format!("{:016x}", config.config_hash()),
        seed_base,
        samples: runs.len(),
        exhausted: runs.len() - ok.len(),
        converged: runs.iter().filter(|r| r.converged).count(),
        mean_a: est(|r| r.mean_a),
        sigma_a: est(|r| r.sigma_a),
        sigma_total: est(|r| r.sigma_total),
        mean_total: est(|r| r.mean_total),
        excess_kurtosis: est(|r| r.excess_kurtosis),
        mean_active_fraction: est(|r| r.mean_active_fraction),
        steps_run: est(|r| r.steps_run as f64),
        total_weight: est(|r| r.total_weight),
        heterogeneity: est(|r| r.heterogeneity),
        runs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GameConfig {
        let mut c = GameConfig::standard(31, 16, 2);
        c.max_steps = 4000;
        c
    }

    #[test]
    fn single_sample_is_the_run() {
        let c = small();
        let e = run_ensemble(&c, 1, 9, 1).unwrap();
        let r = run_until_converged(&GameConfig { seed: sample_seed(9, 0), ..c }).unwrap();
        assert_eq!(e.sigma_a.mean, r.sigma_a);
        assert_eq!(e.sigma_a.stderr, 0.0);
        assert_eq!(e.runs[0], r);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let c = small();
        let a = run_ensemble(&c, 6, 3, 1).unwrap();
        let b = run_ensemble(&c, 6, 3, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn estimate_matches_hand_values() {
        let e = Estimate::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3, over n = 4
        assert!((e.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!(Estimate::of(&[]).mean.is_nan());
    }
}
