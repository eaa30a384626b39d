//! Game configuration and its flat `key = value` text form.
//!
//! ```text
//! # comment
//! n_agents = 513
//! alpha = 0.5            # optional, overrides n_patterns = round(alpha·N)
//! n_strategies = 2
//! intraday_price = 0
//! risk_aversion = -inf   # scalar, comma list of N values, or groups:high:low
//! weights = uniform      # uniform[:W] | exponential | pareto[:4:0.6667] | realistic | explicit:w1,...
//! price = standard       # see PriceSpec::parse
//! noise = none           # none | gaussian:sigma[:mean]
//! strategy_bias = 0.5    # probability of +1, or `equilibrium`
//! seed = 1
//! max_steps = 2000000
//! convergence_tol = 0.001
//! sample_count = 100
//! eval_uses_noise = true
//! freeze_inactive = false
//! ```
//!
//! A value starting with `@` is replaced by the contents of that file, with
//! newlines read as commas.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::ConfigError;
use crate::price::PriceSpec;
use crate::weights::{WeightSpec, REALISTIC_AGENTS};

/// Risk aversion of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RiskAversion {
    /// Never abstains (`ε = -∞`): the standard game.
    Never,
    /// Plays only while its best strategy's mean payoff `U/t` is at least this.
    Threshold(f64),
}

impl RiskAversion {
    fn parse(s: &str) -> Result<Self, ConfigError> {
        let s = s.trim();
        if matches!(s, "-inf" | "-infinity" | "never") {
            return Ok(RiskAversion::Never);
        }
        let v: f64 = s.parse().map_err(|_| ConfigError::invalid("risk_aversion", format!("`{s}`")))?;
        if v == f64::NEG_INFINITY {
            Ok(RiskAversion::Never)
        } else if v.is_finite() {
            Ok(RiskAversion::Threshold(v))
        } else {
            Err(ConfigError::invalid("risk_aversion", "must be finite or -inf"))
        }
    }

    fn to_text(self) -> String {
        match self {
            RiskAversion::Never => "-inf".into(),
            RiskAversion::Threshold(v) => format!("{v:?}"),
        }
    }
}

/// Risk aversion of the whole population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RiskSpec {
    Uniform(RiskAversion),
    PerAgent(Vec<RiskAversion>),
    /// Agents split into two groups of equal total weight (see
    /// [`crate::harness::split_by_weight`]); each group gets one value.
    WeightGroups { high: RiskAversion, low: RiskAversion },
}

impl RiskSpec {
    pub fn is_gated(&self) -> bool {
        !matches!(self, RiskSpec::Uniform(RiskAversion::Never))
    }

    fn to_text(&self) -> String {
        match self {
            RiskSpec::Uniform(r) => r.to_text(),
            RiskSpec::PerAgent(v) => v.iter().map(|r| r.to_text()).collect::<Vec<_>>().join(","),
            RiskSpec::WeightGroups { high, low } => format!("groups:{}:{}", high.to_text(), low.to_text()),
        }
    }

    fn parse(s: &str) -> Result<Self, ConfigError> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("groups:") {
            let (h, l) = rest
                .split_once(':')
                .ok_or_else(|| ConfigError::invalid("risk_aversion", "expected groups:high:low"))?;
            return Ok(RiskSpec::WeightGroups { high: RiskAversion::parse(h)?, low: RiskAversion::parse(l)? });
        }
        if s.contains(',') {
            return s.split(',').map(RiskAversion::parse).collect::<Result<_, _>>().map(RiskSpec::PerAgent);
        }
        RiskAversion::parse(s).map(RiskSpec::Uniform)
    }
}

/// Exogenous imbalance `η`, drawn independently each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub mean: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec { sigma: 0.0, mean: 0.0 };

    pub fn gaussian(sigma: f64) -> Self {
        NoiseSpec { sigma, mean: 0.0 }
    }

    pub fn is_none(&self) -> bool {
        self.sigma == 0.0 && self.mean == 0.0
    }

    fn to_text(self) -> String {
        if self.is_none() {
            "none".into()
        } else {
            format!("gaussian:{:?}:{:?}", self.sigma, self.mean)
        }
    }

    fn parse(s: &str) -> Result<Self, ConfigError> {
        let bad = || ConfigError::invalid("noise", format!("`{s}`"));
        let s = s.trim();
        if s == "none" {
            return Ok(NoiseSpec::NONE);
        }
        let rest = s.strip_prefix("gaussian:").ok_or_else(bad)?;
        let mut it = rest.split(':');
        let sigma: f64 = it.next().and_then(|v| v.trim().parse().ok()).ok_or_else(bad)?;
        let mean: f64 = match it.next() {
            Some(m) => m.trim().parse().map_err(|_| bad())?,
            None => 0.0,
        };
        if !(sigma >= 0.0) || !mean.is_finite() {
            return Err(bad());
        }
        Ok(NoiseSpec { sigma, mean })
    }
}

/// Probability that a strategy entry is `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BiasSpec {
    Fixed(f64),
    /// `1/2 + A*/(2W)` from the homogeneous Nash equilibrium, clipped to `[0, 1]`.
    Equilibrium,
}

/// Full parameterization of one game.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameConfig {
    pub n_agents: usize,
    pub n_patterns: usize,
    pub n_strategies: usize,
    pub intraday_price: f64,
    pub risk_aversion: RiskSpec,
    pub weights: WeightSpec,
    pub price: PriceSpec,
    pub noise: NoiseSpec,
    pub strategy_bias: BiasSpec,
    pub seed: u64,
    pub max_steps: u64,
    pub convergence_tol: f64,
    pub sample_count: usize,
    /// Update evaluations with `R(A+η)` (true) or `R(A)`.
    pub eval_uses_noise: bool,
    /// Leave evaluations of gated agents untouched.
    pub freeze_inactive: bool,
}

pub const DEFAULT_MAX_STEPS: u64 = 2_000_000;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_SAMPLES: usize = 100;

/// Recognized keys of the text form, in canonical order.
pub const KEYS: &[&str] = &[
    "n_agents",
    "n_patterns",
    "alpha",
    "n_strategies",
    "intraday_price",
    "risk_aversion",
    "weights",
    "price",
    "noise",
    "strategy_bias",
    "seed",
    "max_steps",
    "convergence_tol",
    "sample_count",
    "eval_uses_noise",
    "freeze_inactive",
];

impl GameConfig {
    /// The standard game: unit weights, `I = 0`, `R(A) = A/N`, unbiased strategies.
    pub fn standard(n_agents: usize, n_patterns: usize, n_strategies: usize) -> Self {
        GameConfig {
            n_agents,
            n_patterns,
            n_strategies,
            intraday_price: 0.0,
            risk_aversion: RiskSpec::Uniform(RiskAversion::Never),
            weights: WeightSpec::Uniform { total: n_agents as f64 },
            price: PriceSpec::ScaledLinear { c: 1.0, n: n_agents },
            noise: NoiseSpec::NONE,
            strategy_bias: BiasSpec::Fixed(0.5),
            seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
            convergence_tol: DEFAULT_TOL,
            sample_count: DEFAULT_SAMPLES,
            eval_uses_noise: true,
            freeze_inactive: false,
        }
    }

    /// `α = P/N`.
    pub fn alpha(&self) -> f64 {
        self.n_patterns as f64 / self.n_agents as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |k: &str, v: u64| if v == 0 { Err(ConfigError::invalid(k, "must be positive")) } else { Ok(()) };
        pos("n_agents", self.n_agents as u64)?;
        pos("n_patterns", self.n_patterns as u64)?;
        pos("n_strategies", self.n_strategies as u64)?;
        pos("max_steps", self.max_steps)?;
        pos("sample_count", self.sample_count as u64)?;
        if !self.intraday_price.is_finite() {
            return Err(ConfigError::invalid("intraday_price", "must be finite"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(ConfigError::invalid("convergence_tol", "must be positive"));
        }
        if let BiasSpec::Fixed(p) = self.strategy_bias {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::invalid("strategy_bias", "must lie in [0, 1]"));
            }
        }
        if let RiskSpec::PerAgent(v) = &self.risk_aversion {
            if v.len() != self.n_agents {
                return Err(ConfigError::Length { key: "risk_aversion".into(), got: v.len(), expected: self.n_agents });
            }
        }
        match &self.weights {
            WeightSpec::Realistic if self.n_agents != REALISTIC_AGENTS => {
                return Err(ConfigError::RealisticAgentCount(self.n_agents))
            }
            WeightSpec::Explicit(v) if v.len() != self.n_agents => {
                return Err(ConfigError::Length { key: "weights".into(), got: v.len(), expected: self.n_agents })
            }
            _ => {}
        }
        Ok(())
    }

    /// Canonical key-value map; `from_kv(&c.to_kv()) == c`.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("n_agents", self.n_agents.to_string());
        put("n_patterns", self.n_patterns.to_string());
        put("n_strategies", self.n_strategies.to_string());
        put("intraday_price", format!("{:?}", self.intraday_price));
        put("risk_aversion", self.risk_aversion.to_text());
        put("weights", self.weights.to_text());
        put("price", self.price.to_text());
        put("noise", self.noise.to_text());
        put(
            "strategy_bias",
            match self.strategy_bias {
                BiasSpec::Fixed(p) => format!("{p:?}"),
                BiasSpec::Equilibrium => "equilibrium".into(),
            },
        );
        put("seed", self.seed.to_string());
        put("max_steps", self.max_steps.to_string());
        put("convergence_tol", format!("{:?}", self.convergence_tol));
        put("sample_count", self.sample_count.to_string());
        put("eval_uses_noise", self.eval_uses_noise.to_string());
        put("freeze_inactive", self.freeze_inactive.to_string());
        m
    }

    /// Canonical text, one `key = value` per line in fixed key order.
    pub fn to_text(&self) -> String {
        let kv = self.to_kv();
        let mut out = String::new();
        for k in KEYS {
            if let Some(v) = kv.get(*k) {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    /// Builds a config from a key-value map. `n_agents` and `n_patterns`
    /// (or `alpha`) are required; everything else defaults to the standard game.
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if let Some(k) = kv.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let get = |k: &str| kv.get(k).map(|s| s.trim());
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, ConfigError> {
            v.parse().map_err(|_| ConfigError::invalid(k, format!("cannot parse `{v}`")))
        }
        let n_agents: usize = num("n_agents", get("n_agents").ok_or(ConfigError::Missing("n_agents"))?)?;
        let n_patterns: usize = match (get("alpha"), get("n_patterns")) {
            (Some(a), _) => {
                let alpha: f64 = num("alpha", a)?;
                if !(alpha > 0.0) {
                    return Err(ConfigError::invalid("alpha", "must be positive"));
                }
                ((alpha * n_agents as f64).round() as usize).max(1)
            }
            (None, Some(p)) => num("n_patterns", p)?,
            (None, None) => return Err(ConfigError::Missing("n_patterns")),
        };
        let mut c = GameConfig::standard(n_agents, n_patterns, 2);
        if let Some(v) = get("n_strategies") {
            c.n_strategies = num("n_strategies", v)?;
        }
        if let Some(v) = get("intraday_price") {
            c.intraday_price = num("intraday_price", v)?;
        }
        if let Some(v) = get("risk_aversion") {
            c.risk_aversion = RiskSpec::parse(v)?;
        }
        if let Some(v) = get("weights") {
            c.weights = WeightSpec::parse(v, n_agents)?;
        }
        if let Some(v) = get("price") {
            c.price = PriceSpec::parse(v, n_agents)?;
        }
        if let Some(v) = get("noise") {
            c.noise = NoiseSpec::parse(v)?;
        }
        if let Some(v) = get("strategy_bias") {
            c.strategy_bias = if v == "equilibrium" { BiasSpec::Equilibrium } else { BiasSpec::Fixed(num("strategy_bias", v)?) };
        }
        if let Some(v) = get("seed") {
            c.seed = num("seed", v)?;
        }
        if let Some(v) = get("max_steps") {
            c.max_steps = num("max_steps", v)?;
        }
        if let Some(v) = get("convergence_tol") {
            c.convergence_tol = num("convergence_tol", v)?;
        }
        if let Some(v) = get("sample_count") {
            c.sample_count = num("sample_count", v)?;
        }
        if let Some(v) = get("eval_uses_noise") {
            c.eval_uses_noise = num("eval_uses_noise", v)?;
        }
        if let Some(v) = get("freeze_inactive") {
            c.freeze_inactive = num("freeze_inactive", v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_text(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        Self::from_kv(&parse_kv(text, base_dir)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        Self::from_text(&text, path.parent())
    }

    /// Stable 64-bit hash of the game parameters (everything except `seed`
    /// and `sample_count`): first 8 bytes of SHA-256 over the canonical text.
    pub fn config_hash(&self) -> u64 {
        let mut c = self.clone();
        c.seed = 0;
        c.sample_count = 1;
        let digest = Sha256::digest(c.to_text().as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() })
}

/// Parses `key = value` lines; `#` starts a comment. Later keys override
/// earlier ones. `@file` values are inlined relative to `base_dir`.
pub fn parse_kv(text: &str, base_dir: Option<&Path>) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut m = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::invalid(format!("line {}", n + 1), "expected `key = value`"))?;
        let mut v = v.trim().to_string();
        if let Some(file) = v.strip_prefix('@') {
            let p = match base_dir {
                Some(d) => d.join(file),
                None => Path::new(file).to_path_buf(),
            };
            v = read(&p)?
                .split(['\n', ','])
                .map(str::trim)
                .filter(|s| !s.is_empty() && !s.starts_with('#'))
                .collect::<Vec<_>>()
                .join(",");
        }
        m.insert(k.trim().to_string(), v);
    }
    Ok(m)
}
