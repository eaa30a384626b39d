use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::config::{parse_kv, GameConfig, KEYS};
use crate::engine::run_until_converged;
use crate::error::ConfigError;

use super::ensemble::{parallel_map, sample_seed, summarize, EnsembleSummary};

pub const DEFAULT_MAX_POINTS: usize = 10_000;

/// A cartesian grid over config keys.
///
/// Text form: the usual `key = value` lines for the base config, plus
/// `axis.<key> = v1 | v2 | ...` per axis, and optionally `samples = n`
/// (defaults to the base `sample_count`) and `max_points = n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub base: BTreeMap<String, String>,
    pub axes: Vec<(String, Vec<String>)>,
    pub samples_per_point: usize,
    pub max_points: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("sweep has {points} grid points ({runs} runs of up to {max_steps} steps each), cap is {cap}")]
    TooLarge { points: usize, runs: usize, max_steps: u64, cap: usize },
}

/// One grid point and its aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: Vec<(String, String)>,
    pub config: GameConfig,
    pub summary: EnsembleSummary,
}

impl SweepSpec {
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let mut base = parse_kv(text, base_dir)?;
        // axes keep their order of appearance in the text
        let mut axes = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or_default();
            if let Some((k, _)) = line.split_once('=') {
                if let Some(key) = k.trim().strip_prefix("axis.") {
                    let v = base.remove(k.trim()).unwrap_or_default();
                    axes.push((key.to_string(), v.split('|').map(|s| s.trim().to_string()).collect()));
                }
            }
        }
        let take = |base: &mut BTreeMap<String, String>, k: &str| -> Result<Option<usize>, ConfigError> {
            base.remove(k)
                .map(|v| v.trim().parse().map_err(|_| ConfigError::invalid(k.to_string(), format!("`{v}`"))))
                .transpose()
        };
        let samples = take(&mut base, "samples")?;
        let max_points = take(&mut base, "max_points")?.unwrap_or(DEFAULT_MAX_POINTS);
        let spec = SweepSpec {
            samples_per_point: match samples {
                Some(s) => s,
                None => GameConfig::from_kv(&with_placeholders(&base, &axes))?.sample_count,
            },
            base,
            axes,
            max_points,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        Self::parse(&text, path.parent())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (k, vals) in &self.axes {
            if !KEYS.contains(&k.as_str()) {
                return Err(ConfigError::UnknownKey(format!("axis.{k}")));
            }
            if vals.is_empty() || vals.iter().any(|v| v.is_empty()) {
                return Err(ConfigError::invalid(format!("axis.{k}"), "empty value"));
            }
        }
        if self.samples_per_point == 0 {
            return Err(ConfigError::invalid("samples", "must be positive"));
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Grid points in canonical order: the last axis varies fastest.
    pub fn points(&self) -> Vec<Vec<(String, String)>> {
        let mut out: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (k, vals) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    vals.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((k.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn config_at(&self, point: &[(String, String)]) -> Result<GameConfig, ConfigError> {
        let mut kv = self.base.clone();
        for (k, v) in point {
            if k == "alpha" {
                kv.remove("n_patterns");
            }
            kv.insert(k.clone(), v.clone());
        }
        GameConfig::from_kv(&kv)
    }
}

// Lets a base without, say, n_agents still resolve sample_count when an axis supplies it.
fn with_placeholders(base: &BTreeMap<String, String>, axes: &[(String, Vec<String>)]) -> BTreeMap<String, String> {
    let mut kv = base.clone();
    for (k, v) in axes {
        kv.entry(k.clone()).or_insert_with(|| v[0].clone());
    }
    kv
}

/// Runs every grid point as an ensemble with the base seed as `seed_base`,
/// so points share their sample seeds.
pub fn sweep(spec: &SweepSpec, workers: usize) -> Result<Vec<SweepRow>, SweepError> {
    spec.validate()?;
    let points = spec.points();
    let configs = points.iter().map(|p| spec.config_at(p)).collect::<Result<Vec<_>, _>>()?;
    if points.len() > spec.max_points {
        return Err(SweepError::TooLarge {
            points: points.len(),
            runs: points.len() * spec.samples_per_point,
            max_steps: configs.iter().map(|c| c.max_steps).max().unwrap_or(0),
            cap: spec.max_points,
        });
    }
    let m = spec.samples_per_point;
    let jobs: Vec<GameConfig> = configs
        .iter()
        .flat_map(|c| (0..m).map(move |k| GameConfig { seed: sample_seed(c.seed, k), ..c.clone() }))
        .collect();
    let mut runs = parallel_map(jobs, workers, |c| run_until_converged(&c).expect("validated above")).into_iter();
    Ok(points
        .into_iter()
        .zip(configs)
        .map(|(point, config)| {
            let chunk: Vec<_> = runs.by_ref().take(m).collect();
            let summary = summarize(&config, config.seed, chunk);
            SweepRow { point, config, summary }
        })
        .collect())
}

/// One CSV row per grid point; axis columns first.
pub fn sweep_csv(spec: &SweepSpec, rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = spec.axes.iter().map(|(k, _)| k.clone()).collect();
    header.extend(SUMMARY_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec: Vec<String> = r.point.iter().map(|(_, v)| v.clone()).collect();
        rec.extend(summary_fields(&r.config, &r.summary));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub const SUMMARY_COLUMNS: &[&str] = &[
    "n_agents",
    "n_patterns",
    "alpha",
    "config_hash",
    "seed_base",
    "samples",
    "converged",
    "exhausted",
    "mean_a",
    "mean_a_se",
    "sigma_a",
    "sigma_a_se",
    "sigma_total",
    "sigma_total_se",
    "excess_kurtosis",
    "active_fraction",
    "steps_mean",
];

pub fn summary_fields(c: &GameConfig, s: &EnsembleSummary) -> Vec<String> {
    vec![
        c.n_agents.to_string(),
        c.n_patterns.to_string(),
        format!("{:?}", c.alpha()),
        s.config_hash.clone(),
        s.seed_base.to_string(),
        s.samples.to_string(),
        s.converged.to_string(),
        s.exhausted.to_string(),
        format!("{:?}", s.mean_a.mean),
        format!("{:?}", s.mean_a.stderr),
        format!("{:?}", s.sigma_a.mean),
        format!("{:?}", s.sigma_a.stderr),
        format!("{:?}", s.sigma_total.mean),
        format!("{:?}", s.sigma_total.stderr),
        format!("{:?}", s.excess_kurtosis.mean),
        format!("{:?}", s.mean_active_fraction.mean),
        format!("{:?}", s.steps_run.mean),
    ]
}
