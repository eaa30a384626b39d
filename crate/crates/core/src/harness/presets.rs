//! Figure presets: each pins one experiment's parameters and emits CSV
//! tables plus a manifest.
//!
//! Scaling: a factor `s ∈ (0, 1]` shrinks agent counts by `s`, step caps and
//! window lengths by `s²` and sample counts by `s²` (with floors so the
//! tables stay meaningful). `s = 1` is the full-size experiment. Fixed-size
//! populations (the realistic weight table) are never rescaled.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::{BiasSpec, GameConfig, NoiseSpec, RiskAversion, RiskSpec};
use crate::engine::Game;
use crate::error::{ConfigError, PriceError};
use crate::oracle::{nash_variance, sigma_over_mean_estimate, DEFAULT_W_OVER_MU};
use crate::price::{broadening_expectation, default_step, derivative_check, Broadening, MeritLadder, PriceSpec, CUTOFF_FACTOR};
use crate::rng::{stream, Stream};
use crate::stats::{running_sigma, Histogram};
use crate::weights::{make_weights, realistic_weights, WeightSpec, WeightVector, REALISTIC_AGENTS};

use super::ensemble::{parallel_map, sample_seed, summarize, EnsembleSummary};

pub const PRESETS: &[&str] =
    &["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "appA", "appB", "appC"];

/// Synthetic merit ladder shipped with the crate.
pub const SYNTHETIC_LADDER_CSV: &str = include_str!("../../data/merit_ladder_synthetic.csv");

#[derive(Debug, thiserror::Error)]
pub enum PresetError {
    #[error("unknown preset `{name}`; available: {}", PRESETS.join(", "))]
    Unknown { name: String },
    #[error("scale must be in (0, 1], got {0}")]
    Scale(f64),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Price(#[from] PriceError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetOptions {
    /// `None` picks the preset's desk-scale default.
    pub scale: Option<f64>,
    pub seed: u64,
    pub workers: usize,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions { scale: None, seed: 1, workers: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scale(f64);

impl Scale {
    fn n(self, n: usize) -> usize {
        ((n as f64 * self.0).round() as usize).max(16)
    }

    fn area(self) -> f64 {
        self.0 * self.0
    }

    /// Step cap: scaled, but never below 60 visits per pattern.
    fn steps(self, t: u64, n_patterns: usize) -> u64 {
        ((t as f64 * self.area()).round() as u64).max(60 * n_patterns as u64).max(20_000)
    }

    fn samples(self, m: usize) -> usize {
        ((m as f64 * self.area()).round() as usize).max(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestRun {
    pub label: String,
    pub config_hash: String,
    pub seed_base: u64,
    pub samples: usize,
    pub config: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub preset: String,
    pub version: String,
    pub scale: f64,
    pub seed: u64,
    pub files: Vec<String>,
    pub runs: Vec<ManifestRun>,
    pub notes: Vec<String>,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetOutput {
    /// `(file name, contents)`.
    pub files: Vec<(String, String)>,
    pub manifest: Manifest,
}

impl PresetOutput {
    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n"
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        std::fs::write(dir.join("manifest.json"), self.manifest_json())
    }
}

/// Output file under construction.
struct Table {
    name: String,
    body: String,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), body: header.join(",") + "\n" }
    }

    fn row(&mut self, cells: &[String]) {
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }
}

fn f(x: f64) -> String {
    format!("{x:?}")
}

struct Builder {
    preset: String,
    scale: Scale,
    opts: PresetOptions,
    tables: Vec<Table>,
    runs: Vec<ManifestRun>,
    notes: Vec<String>,
}

impl Builder {
    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn record(&mut self, label: String, c: &GameConfig, samples: usize) {
        self.runs.push(ManifestRun {
            label,
            config_hash: format!("{:016x}", c.config_hash()),
            seed_base: c.seed,
            samples,
            config: c.to_text(),
        });
    }

    /// Runs every config as an ensemble of `samples`, all jobs on one pool.
    fn ensembles(&mut self, points: Vec<(String, GameConfig)>, samples: usize) -> Vec<EnsembleSummary> {
        let jobs: Vec<GameConfig> = points
            .iter()
            .flat_map(|(_, c)| (0..samples).map(move |k| GameConfig { seed: sample_seed(c.seed, k), ..c.clone() }))
            .collect();
        let mut runs = parallel_map(jobs, self.opts.workers, |c| {
            crate::engine::run_until_converged(&c).expect("preset configs are valid")
        })
        .into_iter();
        let mut out = Vec::with_capacity(points.len());
        for (label, c) in points {
            let chunk: Vec<_> = runs.by_ref().take(samples).collect();
            out.push(summarize(&c, c.seed, chunk));
            self.record(label, &c, samples);
        }
        out
    }

    fn base(&self, n: usize, alpha: f64, max_steps: u64) -> GameConfig {
        let p = ((alpha * n as f64).round() as usize).max(1);
        let mut c = GameConfig::standard(n, p, 2);
        c.seed = self.opts.seed;
        c.max_steps = self.scale.steps(max_steps, p);
        c
    }

    fn finish(self, started: Instant) -> PresetOutput {
        let files: Vec<(String, String)> = self.tables.into_iter().map(|t| (t.name, t.body)).collect();
        PresetOutput {
            manifest: Manifest {
                preset: self.preset,
                version: env!("CARGO_PKG_VERSION").into(),
                scale: self.scale.0,
                seed: self.opts.seed,
                files: files.iter().map(|(n, _)| n.clone()).collect(),
                runs: self.runs,
                notes: self.notes,
                runtime_seconds: started.elapsed().as_secs_f64(),
            },
            files,
        }
    }
}

const FULL_MAX_STEPS: u64 = 2_000_000;
const ALPHA_GRID: &[f64] = &[0.01, 0.02, 0.05, 0.1, 0.2, 0.34, 0.5, 1.0, 2.0, 4.0, 8.0];
const HIGH_ALPHA_GRID: &[f64] = &[0.1, 0.2, 0.5, 1.0, 2.0, 4.0];
const LOW_ALPHA_GRID: &[f64] = &[0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0];

fn desk_scale(name: &str) -> f64 {
    match name {
        "fig2" | "fig3" => 0.125,
        "fig10" | "appA" | "appB" | "appC" => 0.5,
        _ => 0.25,
    }
}

/// Runs preset `name`.
pub fn run_preset(name: &str, opts: &PresetOptions) -> Result<PresetOutput, PresetError> {
    if !PRESETS.contains(&name) {
        return Err(PresetError::Unknown { name: name.into() });
    }
    let s = opts.scale.unwrap_or_else(|| desk_scale(name));
    if !(s > 0.0 && s <= 1.0) {
        return Err(PresetError::Scale(s));
    }
    let started = Instant::now();
    let mut b = Builder {
        preset: name.into(),
        scale: Scale(s),
        opts: *opts,
        tables: Vec::new(),
        runs: Vec::new(),
        notes: Vec::new(),
    };
    match name {
        "fig2" => fig2(&mut b)?,
        "fig3" => fig3(&mut b)?,
        "fig4" => fig4(&mut b),
        "fig5" => fig5(&mut b),
        "fig6" => fig6(&mut b)?,
        "fig7" => fig7(&mut b),
        "fig8" => fig8(&mut b),
        "fig9" => fig9(&mut b),
        "fig10" => fig10(&mut b),
        "appA" => app_a(&mut b),
        "appB" => app_b(&mut b)?,
        "appC" => app_c(&mut b)?,
        _ => unreachable!(),
    }
    Ok(b.finish(started))
}

/// Single long run: `A^t` series, its histogram, and histograms on both sides
/// of the transition.
fn fig2(b: &mut Builder) -> Result<(), PresetError> {
    let n = b.scale.n(4100);
    let steps = b.scale.steps(1_000_000, 0);
    b.note(format!("N = {n}, P = N/2, S = 2, {steps} steps from t = 0 (full size: N = 4100, 10^6 steps)"));
    let series = fixed_run(b, "series", n, n / 2, steps)?;
    let mut t = Table::new("fig2a_series.csv", &["t", "A"]);
    for (k, a) in series.iter().enumerate() {
        t.row(&[k.to_string(), f(*a)]);
    }
    b.tables.push(t);
    b.tables.push(histogram_table("fig2b_histogram.csv", &series));
    // phase comparison: alpha = 1 and alpha ≈ 0.0076, second half of each run
    for (alpha, file) in [(1.0, "fig2_phase_high_alpha.csv"), (0.0076, "fig2_phase_low_alpha.csv")] {
        let p = ((alpha * n as f64).round() as usize).max(1);
        let s = fixed_run(b, &format!("phase alpha={alpha}"), n, p, steps)?;
        b.tables.push(histogram_table(file, &s[s.len() / 2..]));
    }
    Ok(())
}

/// Running `σ_A/√N` over a window of 2000 steps (scaled).
fn fig3(b: &mut Builder) -> Result<(), PresetError> {
    let n = b.scale.n(4100);
    let steps = b.scale.steps(1_000_000, 0);
    let window = ((2000.0 * b.scale.0).round() as usize).max(100);
    let series = fixed_run(b, "series", n, n / 2, steps)?;
    let sig = running_sigma(&series, window);
    let stride = (sig.len() / 5000).max(1);
    b.note(format!("N = {n}, P = N/2, window = {window}, every {stride}th window position"));
    let mut t = Table::new("fig3_running_sigma.csv", &["t_end", "sigma_over_sqrt_n"]);
    let root = (n as f64).sqrt();
    for (k, v) in sig.iter().enumerate().step_by(stride) {
        t.row(&[(k + window).to_string(), f(v / root)]);
    }
    b.tables.push(t);
    Ok(())
}

fn fixed_run(b: &mut Builder, label: &str, n: usize, p: usize, steps: u64) -> Result<Vec<f64>, PresetError> {
    let mut c = GameConfig::standard(n, p, 2);
    c.seed = b.opts.seed;
    c.max_steps = steps;
    b.record(label.into(), &c, 1);
    let (_, series) = Game::new(&c)?.run_fixed(steps, None).expect("no trace writer");
    Ok(series)
}

fn histogram_table(name: &str, xs: &[f64]) -> Table {
    let h = Histogram::freedman_diaconis(xs);
    let mut t = Table::new(name, &["bin_lo", "bin_hi", "count", "gaussian_count"]);
    let (mu, sd) = h.gaussian_overlay.unwrap_or((0.0, 0.0));
    let total = h.total() as f64;
    for (k, c) in h.counts.iter().enumerate() {
        let (lo, hi) = (h.bin_edges[k], h.bin_edges[k + 1]);
        let g = if sd > 0.0 { total * (normal_cdf((hi - mu) / sd) - normal_cdf((lo - mu) / sd)) } else { 0.0 };
        t.row(&[f(lo), f(hi), c.to_string(), f(g)]);
    }
    t
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `σ_A/√N` against `α` for several `S` (a) and several `N` (b).
fn fig4(b: &mut Builder) {
    let n = b.scale.n(1025);
    let m = b.scale.samples(100);
    b.note(format!("(a) N = {n}, S in 2..=5; (b) S = 2, N in {{N/4, N/2, N}}; {m} samples per point"));
    let mut pts = Vec::new();
    for s in 2..=5 {
        for &a in ALPHA_GRID {
            let mut c = b.base(n, a, FULL_MAX_STEPS);
            c.n_strategies = s;
            pts.push((format!("a S={s} alpha={a}"), c));
        }
    }
    let sizes = [n / 4, n / 2, n];
    for &nn in &sizes {
        for &a in ALPHA_GRID {
            pts.push((format!("b N={nn} alpha={a}"), b.base(nn, a, FULL_MAX_STEPS)));
        }
    }
    let configs: Vec<GameConfig> = pts.iter().map(|(_, c)| c.clone()).collect();
    let res = b.ensembles(pts, m);
    let mut ta = Table::new("fig4a_sigma_vs_alpha.csv", &["S", "N", "P", "alpha", "sigma_over_sqrt_n", "se"]);
    let mut tb = Table::new("fig4b_collapse.csv", &["N", "P", "alpha", "sigma_over_sqrt_n", "se"]);
    let split = 4 * ALPHA_GRID.len();
    for (k, (c, e)) in configs.iter().zip(&res).enumerate() {
        let root = (c.n_agents as f64).sqrt();
        let tail = [f(c.alpha()), f(e.sigma_a.mean / root), f(e.sigma_a.stderr / root)];
        if k < split {
            ta.row(&[&[c.n_strategies.to_string(), c.n_agents.to_string(), c.n_patterns.to_string()][..], &tail].concat());
        } else {
            tb.row(&[&[c.n_agents.to_string(), c.n_patterns.to_string()][..], &tail].concat());
        }
    }
    b.tables.push(ta);
    b.tables.push(tb);
}

fn biased_identity(b: &Builder, n: usize, alpha: f64, intraday: f64) -> GameConfig {
    let mut c = b.base(n, alpha, FULL_MAX_STEPS);
    c.price = PriceSpec::Identity;
    c.intraday_price = intraday;
    c.strategy_bias = BiasSpec::Equilibrium;
    c
}

/// Intraday-price rescaling: `σ_A/√((W² - I²)/N)` for `I/W ∈ {0, ¼, ½, ¾}`.
fn fig5(b: &mut Builder) {
    let n = b.scale.n(1025);
    let m = b.scale.samples(100);
    let w = n as f64;
    b.note(format!("N = W = {n}, identity price, equilibrium-biased strategies, {m} samples"));
    let mut pts = Vec::new();
    for frac in [0.0, 0.25, 0.5, 0.75] {
        for &a in HIGH_ALPHA_GRID {
            pts.push((format!("I={} alpha={a}", frac * w), biased_identity(b, n, a, frac * w)));
        }
    }
    let configs: Vec<GameConfig> = pts.iter().map(|(_, c)| c.clone()).collect();
    let res = b.ensembles(pts, m);
    let mut t = Table::new("fig5_intraday_rescaling.csv", &["I", "alpha", "mean_a", "sigma_a", "sigma_a_se", "rescaled"]);
    for (c, e) in configs.iter().zip(&res) {
        let i = c.intraday_price;
        let norm = ((w * w - i * i) / n as f64).sqrt();
        t.row(&[f(i), f(c.alpha()), f(e.mean_a.mean), f(e.sigma_a.mean), f(e.sigma_a.stderr), f(e.sigma_a.mean / norm)]);
    }
    b.tables.push(t);
}

/// Weight families (distribution and rescaled fluctuations) and the noise
/// additivity table.
fn fig6(b: &mut Builder) -> Result<(), PresetError> {
    let n = b.scale.n(1025);
    let m = b.scale.samples(100);
    let families = [
        ("uniform", WeightSpec::Uniform { total: n as f64 }, n),
        ("exponential", WeightSpec::Exponential, n),
        ("pareto", WeightSpec::Pareto { exponent: 4.0, lower: 2.0 / 3.0 }, n),
        ("realistic", WeightSpec::Realistic, REALISTIC_AGENTS),
    ];
    b.note(format!("N = {n} (realistic: {REALISTIC_AGENTS}), identity price, I = 0, {m} samples"));

    // (a) one realized draw per family, unit mean
    let mut ta = Table::new("fig6a_weights.csv", &["family", "agent", "weight"]);
    for (label, spec, nn) in &families {
        let w = make_weights(spec, *nn, &mut stream(b.opts.seed, Stream::Weights, 0))?;
        let mean = w.total() / w.len() as f64;
        for (i, x) in w.as_slice().iter().enumerate() {
            ta.row(&[label.to_string(), i.to_string(), f(x / mean)]);
        }
    }
    b.tables.push(ta);

    // (b) rescaled fluctuations
    let mut pts = Vec::new();
    for (label, spec, nn) in &families {
        for &a in HIGH_ALPHA_GRID {
            let mut c = b.base(*nn, a, FULL_MAX_STEPS);
            c.price = PriceSpec::Identity;
            c.weights = spec.clone();
            pts.push((format!("{label} alpha={a}"), c));
        }
    }
    let labels: Vec<(String, f64)> = families
        .iter()
        .flat_map(|(l, _, _)| HIGH_ALPHA_GRID.iter().map(move |&a| (l.to_string(), a)))
        .collect();
    let res = b.ensembles(pts, m);
    let mut tb = Table::new(
        "fig6b_weight_rescaling.csv",
        &["family", "alpha", "N", "W", "X", "sigma_a", "sigma_a_se", "rescaled"],
    );
    for ((label, a), e) in labels.iter().zip(&res) {
        let nn = if label == "realistic" { REALISTIC_AGENTS } else { n };
        let (w, x) = (e.total_weight.mean, e.heterogeneity.mean);
        let norm = (w * w * x / nn as f64).sqrt();
        tb.row(&[label.clone(), f(*a), nn.to_string(), f(w), f(x), f(e.sigma_a.mean), f(e.sigma_a.stderr), f(e.sigma_a.mean / norm)]);
    }
    b.tables.push(tb);

    // noise additivity with a linear price
    let mut pts = Vec::new();
    let noise_grid = [0.0, 10.0, 25.0, 50.0, 100.0];
    for &a in &[0.1, 1.0] {
        for &s in &noise_grid {
            let mut c = b.base(n, a, FULL_MAX_STEPS);
            c.price = PriceSpec::Identity;
            c.noise = NoiseSpec::gaussian(s);
            pts.push((format!("noise alpha={a} sigma_eta={s}"), c));
        }
    }
    let configs: Vec<GameConfig> = pts.iter().map(|(_, c)| c.clone()).collect();
    let res = b.ensembles(pts, m);
    let mut tn = Table::new(
        "fig6_noise_additivity.csv",
        &["alpha", "sigma_eta", "sigma_a", "sigma_total", "sigma_predicted", "relative_error"],
    );
    for (c, e) in configs.iter().zip(&res) {
        let s = c.noise.sigma;
        let pred = (e.sigma_a.mean.powi(2) + s * s).sqrt();
        tn.row(&[f(c.alpha()), f(s), f(e.sigma_a.mean), f(e.sigma_total.mean), f(pred), f(e.sigma_total.mean / pred - 1.0)]);
    }
    b.tables.push(tn);
    Ok(())
}

const EPS_GRID: &[Option<f64>] = &[None, Some(0.0), Some(0.25), Some(0.5), Some(1.0), Some(2.0)];

fn risk(eps: Option<f64>) -> RiskSpec {
    RiskSpec::Uniform(eps.map_or(RiskAversion::Never, RiskAversion::Threshold))
}

fn eps_text(eps: Option<f64>) -> String {
    eps.map_or("-inf".into(), f)
}

/// `⟨A⟩` against risk aversion for several `α`.
fn fig7(b: &mut Builder) {
    let n = b.scale.n(2000);
    let i = n as f64 / 4.0;
    let m = b.scale.samples(100);
    b.note(format!("N = {n}, I = N/4 = {i}, identity price, biased strategies, {m} samples"));
    let alphas = [0.002, 0.02, 0.2, 2.0];
    let mut pts = Vec::new();
    for &a in &alphas {
        for &e in EPS_GRID {
            let mut c = biased_identity(b, n, a, i);
            c.risk_aversion = risk(e);
            pts.push((format!("alpha={a} eps={}", eps_text(e)), c));
        }
    }
    let configs: Vec<GameConfig> = pts.iter().map(|(_, c)| c.clone()).collect();
    let res = b.ensembles(pts, m);
    let mut t = Table::new("fig7_mean_vs_eps.csv", &["alpha", "eps", "mean_a", "mean_a_se", "active_fraction"]);
    for ((c, e), eps) in configs.iter().zip(&res).zip(alphas.iter().flat_map(|_| EPS_GRID)) {
        t.row(&[f(c.alpha()), eps_text(*eps), f(e.mean_a.mean), f(e.mean_a.stderr), f(e.mean_active_fraction.mean)]);
    }
    b.tables.push(t);
}

/// Quadratic price: `⟨A⟩` against noise strength and against `c2`.
fn fig8(b: &mut Builder) {
    let n = b.scale.n(1025);
    let m = b.scale.samples(100);
    b.note(format!("N = {n}, R(x) = x + c2 x^2, unbiased strategies, {m} samples"));
    let noise_grid = [0.0, 10.0, 25.0, 50.0, 75.0, 100.0];
    let c2_grid = [0.0, 1.0 / 2000.0, 1.0 / 1000.0, 1.0 / 500.0, 1.0 / 250.0];
    let mut pts = Vec::new();
    for &a in &[0.1, 1.0] {
        for &s in &noise_grid {
            let mut c = b.base(n, a, FULL_MAX_STEPS);
            c.price = PriceSpec::Quadratic { c2: 1.0 / 500.0 };
            c.noise = NoiseSpec::gaussian(s);
            pts.push((format!("a alpha={a} sigma_eta={s}"), c));
        }
        for &c2 in &c2_grid {
            let mut c = b.base(n, a, FULL_MAX_STEPS);
            c.price = PriceSpec::Quadratic { c2 };
            c.noise = NoiseSpec::gaussian(50.0);
            pts.push((format!("b alpha={a} c2={c2}"), c));
        }
    }
    let configs: Vec<GameConfig> = pts.iter().map(|(_, c)| c.clone()).collect();
    let res = b.ensembles(pts, m);
    let mut ta = Table::new("fig8a_mean_vs_noise.csv", &["alpha", "sigma_eta", "mean_a", "mean_a_se", "sigma_a"]);
    let mut tb = Table::new("fig8b_mean_vs_c2.csv", &["alpha", "c2", "mean_a", "mean_a_se", "sigma_a"]);
    let per_alpha = noise_grid.len() + c2_grid.len();
    for (k, (c, e)) in configs.iter().zip(&res).enumerate() {
        let c2 = match c.price {
            PriceSpec::Quadratic { c2 } => c2,
            _ => unreachable!(),
        };
        if k % per_alpha < noise_grid.len() {
            ta.row(&[f(c.alpha()), f(c.noise.sigma), f(e.mean_a.mean), f(e.mean_a.stderr), f(e.sigma_a.mean)]);
        } else {
            tb.row(&[f(c.alpha()), f(c2), f(e.mean_a.mean), f(e.mean_a.stderr), f(e.sigma_a.mean)]);
        }
    }
    b.tables.push(ta);
    b.tables.push(tb);
}

/// Fluctuations under risk aversion: against `α` (a) and for three `N` at
/// `ε = 1` (b).
fn fig9(b: &mut Builder) {
    let n = b.scale.n(2000);
    let m = b.scale.samples(100);
    b.note(format!("(a) N = {n}, I = N/4; (b) eps = 1, N in {{N, N/2, N/4}}, I = N/4; {m} samples"));
    let eps_a = [None, Some(0.0), Some(0.5), Some(1.0)];
    let sizes = [n, n / 2, n / 4];
    let mut pts = Vec::new();
    let mut rows_a = Vec::new();
    for &e in &eps_a {
        for &a in LOW_ALPHA_GRID {
            let mut c = biased_identity(b, n, a, n as f64 / 4.0);
            c.risk_aversion = risk(e);
            rows_a.push(eps_text(e));
            pts.push((format!("a eps={} alpha={a}", eps_text(e)), c));
        }
    }
    for &nn in &sizes {
        for &a in LOW_ALPHA_GRID {
            let mut c = biased_identity(b, nn, a, nn as f64 / 4.0);
            c.risk_aversion = risk(Some(1.0));
            pts.push((format!("b N={nn} alpha={a}"), c));
        }
    }
    let configs: Vec<GameConfig> = pts.iter().map(|(_, c)| c.clone()).collect();
    let res = b.ensembles(pts, m);
    let mut ta = Table::new("fig9a_sigma_vs_alpha.csv", &["eps", "alpha", "P", "sigma_over_sqrt_n", "se", "active_fraction"]);
    let mut tb = Table::new("fig9b_sizes.csv", &["N", "I", "alpha", "P", "sigma_over_sqrt_n", "se"]);
    for (k, (c, e)) in configs.iter().zip(&res).enumerate() {
        let root = (c.n_agents as f64).sqrt();
        if k < rows_a.len() {
            ta.row(&[
                rows_a[k].clone(),
                f(c.alpha()),
                c.n_patterns.to_string(),
                f(e.sigma_a.mean / root),
                f(e.sigma_a.stderr / root),
                f(e.mean_active_fraction.mean),
            ]);
        } else {
            tb.row(&[
                c.n_agents.to_string(),
                f(c.intraday_price),
                f(c.alpha()),
                c.n_patterns.to_string(),
                f(e.sigma_a.mean / root),
                f(e.sigma_a.stderr / root),
            ]);
        }
    }
    b.tables.push(ta);
    b.tables.push(tb);
}

/// Heterogeneous risk aversion on the realistic weights: one weight group at
/// `ε` and the other at zero.
fn fig10(b: &mut Builder) {
    let m = b.scale.samples(100);
    let grid = [0.0, 0.25, 0.5, 1.0, 2.0];
    b.note(format!(
        "realistic weights (N = {REALISTIC_AGENTS}), P = 120, I = 50, {m} samples; eps of the risk-averse group over {grid:?}"
    ));
    let mut pts = Vec::new();
    let mut rows = Vec::new();
    for (group, make) in [
        ("high", (|e| RiskSpec::WeightGroups { high: e, low: RiskAversion::Threshold(0.0) }) as fn(RiskAversion) -> RiskSpec),
        ("low", |e| RiskSpec::WeightGroups { high: RiskAversion::Threshold(0.0), low: e }),
    ] {
        for &e in &grid {
            let mut c = biased_identity(b, REALISTIC_AGENTS, 1.0, 50.0);
            c.weights = WeightSpec::Realistic;
            c.risk_aversion = make(RiskAversion::Threshold(e));
            rows.push((group, e));
            pts.push((format!("{group} eps={e}"), c));
        }
    }
    let res = b.ensembles(pts, m);
    let mut t = Table::new("fig10_hetero_eps.csv", &["risk_averse_group", "eps", "sigma_a", "sigma_a_se", "mean_a", "active_fraction"]);
    for ((g, e), r) in rows.iter().zip(&res) {
        t.row(&[g.to_string(), f(*e), f(r.sigma_a.mean), f(r.sigma_a.stderr), f(r.mean_a.mean), f(r.mean_active_fraction.mean)]);
    }
    b.tables.push(t);
}

/// Order-of-magnitude estimate on the realistic weight table.
fn app_a(b: &mut Builder) {
    let w = WeightVector::new(realistic_weights()).expect("table is valid");
    let mut t = Table::new(
        "appA_estimate.csv",
        &["N", "W_mw", "X", "N_over_X", "W_over_mu", "sigma_over_mu", "nash_sigma_at_mu"],
    );
    for w_over_mu in [DEFAULT_W_OVER_MU, 2.0, 3.0] {
        let mu = w.total() / w_over_mu;
        let r = nash_variance(&w, mu);
        t.row(&[
            w.len().to_string(),
            f(w.total()),
            f(w.heterogeneity()),
            f(w.effective_agents()),
            f(w_over_mu),
            f(sigma_over_mean_estimate(&w, w_over_mu)),
            f(r.sigma_a_pred),
        ]);
    }
    b.note("weights in MW: 5x400, 5x160, 10x120, 100x15");
    b.tables.push(t);
    let report = nash_variance(&w, w.total() / DEFAULT_W_OVER_MU);
    b.tables.push(Table {
        name: "appA_report.json".into(),
        body: serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    });
}

/// Derivative conditions along the synthetic merit ladder.
fn app_b(b: &mut Builder) -> Result<(), PresetError> {
    let ladder = MeritLadder::from_csv_reader(SYNTHETIC_LADDER_CSV.as_bytes())?;
    let h = default_step(&ladder);
    let points = ((400.0 * b.scale.0).round() as usize).max(20);
    let mut t = Table::new(
        "appB_derivatives.csv",
        &["x", "price", "d_price", "d2_price", "marginal", "d_marginal", "condition_holds"],
    );
    for (lo, hi) in [(-ladder.negative_capacity(), 0.0), (0.0, ladder.positive_capacity())] {
        for k in 1..points {
            let x = lo + (hi - lo) * k as f64 / points as f64;
            if let Ok(r) = derivative_check(&ladder, x, h) {
                t.row(&[f(r.x), f(r.price), f(r.d_price), f(r.d2_price), f(r.marginal), f(r.d_marginal), r.convexity_condition_holds.to_string()]);
            }
        }
    }
    b.note(format!("synthetic ladder, step h = {h}"));
    b.tables.push(t);
    Ok(())
}

/// Broadening: `⟨R⟩` against distribution width for convex, concave and
/// cut-off prices.
fn app_c(b: &mut Builder) -> Result<(), PresetError> {
    let k = ((40.0 * b.scale.0).round() as usize).max(8);
    let widths: Vec<f64> = (1..=k).map(|j| 100.0 * j as f64 / k as f64).collect();
    let mut t = Table::new("appC_broadening.csv", &["price", "distribution", "a_star", "width", "expected_price", "closed_form"]);
    let cases: Vec<(&str, PriceSpec, f64)> = vec![
        ("quadratic:0.002", PriceSpec::Quadratic { c2: 0.002 }, 0.0),
        ("quadratic:-0.002", PriceSpec::Quadratic { c2: -0.002 }, -150.0),
        (
            "cutoff",
            PriceSpec::Cutoff { inner: Box::new(PriceSpec::Identity), i_avg: 40.0, factor: CUTOFF_FACTOR },
            CUTOFF_FACTOR * 40.0,
        ),
    ];
    for (label, spec, a_star) in cases {
        for (dist, dname) in [(Broadening::Gaussian, "gaussian"), (Broadening::Uniform, "uniform")] {
            // keep the concave case inside its monotone region and the
            // cut-off case away from the sign flip at zero
            let shrink = match (&spec, dist) {
                (PriceSpec::Quadratic { c2 }, _) if *c2 < 0.0 => 0.1,
                (PriceSpec::Cutoff { .. }, Broadening::Gaussian) => 0.12,
                (PriceSpec::Cutoff { .. }, Broadening::Uniform) => 0.48,
                _ => 1.0,
            };
            let ws: Vec<f64> = widths.iter().map(|w| w * shrink).collect();
            for (w, r) in broadening_expectation(&spec, a_star, &ws, dist)? {
                let closed = match spec {
                    PriceSpec::Quadratic { c2 } => {
                        let var = if dist == Broadening::Gaussian { w * w } else { w * w / 3.0 };
                        f(a_star + c2 * a_star * a_star + c2 * var)
                    }
                    _ => String::new(),
                };
                t.row(&[label.into(), dname.into(), f(a_star), f(w), f(r), closed]);
            }
        }
    }
    b.tables.push(t);
    Ok(())
}

/// Lists presets with one line each.
pub fn describe_presets() -> String {
    let mut s = String::new();
    for (name, what) in [
        ("fig2", "A^t series and histograms, standard game"),
        ("fig3", "running sigma_A/sqrt(N) during learning"),
        ("fig4", "sigma_A/sqrt(N) vs alpha for S = 2..5 and three N"),
        ("fig5", "intraday-price rescaling with biased strategies"),
        ("fig6", "weight families and noise additivity"),
        ("fig7", "<A> vs risk aversion"),
        ("fig8", "<A> vs noise and c2, quadratic price"),
        ("fig9", "sigma_A under risk aversion, three N"),
        ("fig10", "heterogeneous risk aversion, realistic weights"),
        ("appA", "order-of-magnitude estimate on the realistic weights"),
        ("appB", "merit-order derivative conditions"),
        ("appC", "broadening of the imbalance distribution"),
    ] {
        let _ = writeln!(s, "{name:<6} {what} (desk scale {})", desk_scale(name));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_preset_lists_alternatives() {
        let e = run_preset("fig99", &PresetOptions::default()).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("fig99") && msg.contains("appC"), "{msg}");
    }

    #[test]
    fn scale_is_checked() {
        let o = PresetOptions { scale: Some(1.5), ..Default::default() };
        assert!(matches!(run_preset("appA", &o), Err(PresetError::Scale(_))));
    }

    #[test]
    fn app_a_table() {
        let out = run_preset("appA", &PresetOptions::default()).unwrap();
        let body = &out.files[0].1;
        let row: Vec<&str> = body.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[0], "120");
        assert!((row[3].parse::<f64>().unwrap() - 27.638).abs() < 1e-3);
        assert!((row[5].parse::<f64>().unwrap() - 0.3804).abs() < 1e-3);
    }

    #[test]
    fn scale_floors() {
        let s = Scale(0.01);
        assert_eq!(s.n(1025), 16);
        assert_eq!(s.samples(100), 2);
        assert_eq!(s.steps(2_000_000, 1000), 60_000);
        assert_eq!(Scale(1.0).steps(2_000_000, 10), 2_000_000);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(-1.959_963_984_540_054) - 0.025).abs() < 1e-12);
    }
}
