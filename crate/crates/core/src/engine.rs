//! The repeated game.
//!
//! Each step: draw the signal `μ`, gate agents by risk aversion, let every
//! active agent play its best-scoring strategy, aggregate `A = Σ w_i a_i`,
//! add noise, price the imbalance and credit every strategy of every agent
//! with the payoff it would have earned.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::config::{BiasSpec, GameConfig, RiskAversion, RiskSpec};
use crate::error::{ConfigError, PriceError};
use crate::harness::split_by_weight;
use crate::oracle::solve_a_star;
use crate::price::PriceSpec;
use crate::rng::{stream, Stream, StreamRng};
use crate::stats::{Histogram, Moments};
use crate::strategies::{bias_from_equilibrium, draw_strategies, StrategyTable};
use crate::weights::{make_weights, WeightVector};

/// First convergence checkpoint; later ones double.
pub const FIRST_CHECKPOINT: u64 = 1000;

/// Scalar outcome of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSummary {
    /// Step index before the update (0-based).
    pub t: u64,
    /// Signal, 0-based.
    pub mu: usize,
    pub arbitrage: f64,
    pub eta: f64,
    pub total_imbalance: f64,
    /// `R(A + η)`.
    pub price: f64,
    /// Price credited to the evaluations.
    pub evaluation_price: f64,
    pub active_count: usize,
}

/// Everything observable about one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub summary: StepSummary,
    pub actions: Vec<i8>,
    pub active: Vec<bool>,
    /// `a_i (I - R(A + η))`.
    pub payoff_per_unit: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exhaustion {
    pub step: u64,
    pub imbalance: f64,
    pub overshoot: f64,
}

/// Observables of one run, measured over the last half of its steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub seed: u64,
    pub config_hash: String,
    pub steps_run: u64,
    pub converged: bool,
    pub mean_a: f64,
    pub sigma_a: f64,
    /// Standard deviation of `A + η`.
    pub sigma_total: f64,
    pub mean_total: f64,
    pub excess_kurtosis: f64,
    pub mean_active_fraction: f64,
    pub histogram_a: Histogram,
    pub histogram_total: Histogram,
    pub exhausted: Option<Exhaustion>,
    /// Steps whose imbalance left the region where the price is non-decreasing.
    pub non_monotone_steps: u64,
    pub strategy_bias: f64,
    pub a_star: f64,
    /// `W` of the realized weights.
    pub total_weight: f64,
    /// `X` of the realized weights.
    pub heterogeneity: f64,
}

/// Resolved per-agent gate.
fn resolve_risk(spec: &RiskSpec, weights: &WeightVector) -> Vec<RiskAversion> {
    let n = weights.len();
    match spec {
        RiskSpec::Uniform(r) => vec![*r; n],
        RiskSpec::PerAgent(v) => v.clone(),
        RiskSpec::WeightGroups { high, low } => {
            let split = split_by_weight(weights);
            let mut out = vec![*low; n];
            for &i in &split.high {
                out[i] = *high;
            }
            out
        }
    }
}

/// A game instance. Strictly sequential: step `t + 1` depends on step `t`.
#[derive(Debug, Clone)]
pub struct Game {
    config: GameConfig,
    weights: Vec<f64>,
    total_weight: f64,
    heterogeneity: f64,
    strategies: StrategyTable,
    risk: Vec<RiskAversion>,
    gated: bool,
    scores: Vec<f64>,
    t: u64,
    signal_rng: StreamRng,
    noise_rng: StreamRng,
    noise: Option<Normal<f64>>,
    tie_rngs: Vec<StreamRng>,
    actions: Vec<i8>,
    active: Vec<bool>,
    monotone: (f64, f64),
    non_monotone_steps: u64,
    strategy_bias: f64,
    a_star: f64,
}

impl Game {
    /// Materializes weights, bias and strategies from the config's seed.
    pub fn new(config: &GameConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut wrng = stream(config.seed, Stream::Weights, 0);
        let weights = make_weights(&config.weights, config.n_agents, &mut wrng)?;
        let w = weights.total();
        let a_star = solve_a_star(&config.price, config.intraday_price, config.noise.mean, (-w, w)).value();
        let bias = match config.strategy_bias {
            BiasSpec::Fixed(p) => p,
            BiasSpec::Equilibrium => bias_from_equilibrium(a_star, w),
        };
        let strategies =
            draw_strategies(config.n_agents, config.n_strategies, config.n_patterns, bias, config.seed);
        Self::with_parts(config, weights, strategies, bias, a_star)
    }

    /// Builds a game around an explicit weight vector and strategy table.
    pub fn with_parts(
        config: &GameConfig,
        weights: WeightVector,
        strategies: StrategyTable,
        strategy_bias: f64,
        a_star: f64,
    ) -> Result<Self, ConfigError> {
        let n = config.n_agents;
        if weights.len() != n {
            return Err(ConfigError::Length { key: "weights".into(), got: weights.len(), expected: n });
        }
        if strategies.n_agents() != n
            || strategies.n_strategies() != config.n_strategies
            || strategies.n_patterns() != config.n_patterns
        {
            return Err(ConfigError::invalid("strategies", "table shape does not match config"));
        }
        let risk = resolve_risk(&config.risk_aversion, &weights);
        let noise = if config.noise.sigma > 0.0 {
            Some(Normal::new(config.noise.mean, config.noise.sigma).map_err(|e| ConfigError::invalid("noise", e.to_string()))?)
        } else {
            None
        };
        Ok(Game {
            gated: risk.iter().any(|r| *r != RiskAversion::Never),
            risk,
            total_weight: weights.total(),
            heterogeneity: weights.heterogeneity(),
            weights: weights.as_slice().to_vec(),
            scores: vec![0.0; n * config.n_strategies],
            t: 0,
            signal_rng: stream(config.seed, Stream::Signal, 0),
            noise_rng: stream(config.seed, Stream::Noise, 0),
            noise,
            tie_rngs: (0..n).map(|i| stream(config.seed, Stream::TieBreak, i as u64)).collect(),
            actions: vec![0; n],
            active: vec![true; n],
            monotone: config.price.monotone_range(),
            non_monotone_steps: 0,
            strategies,
            strategy_bias,
            a_star,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn strategies(&self) -> &StrategyTable {
        &self.strategies
    }

    /// Evaluations `U`, laid out `[agent][strategy]`.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn strategy_bias(&self) -> f64 {
        self.strategy_bias
    }

    pub fn a_star(&self) -> f64 {
        self.a_star
    }

    fn price(&self, x: f64) -> Result<f64, PriceError> {
        self.config.price.eval(x)
    }

    /// Advances one step.
    pub fn step(&mut self) -> Result<StepSummary, PriceError> {
        let s = self.config.n_strategies;
        let mu = self.signal_rng.random_range(0..self.config.n_patterns);
        let block = self.strategies.pattern_block(mu);
        let t = self.t;

        let inv_t = if t == 0 { 0.0 } else { 1.0 / t as f64 };
        let mut arbitrage = 0.0;
        let mut active_count = 0;
        let agents = self
            .scores
            .chunks_exact(s)
            .zip(block.chunks_exact(s))
            .zip(&self.risk)
            .zip(&mut self.tie_rngs)
            .zip(&self.weights)
            .zip(self.actions.iter_mut().zip(self.active.iter_mut()));
        for (((((sc, row), risk), rng), &w), (action, on)) in agents {
            let (best, ties) = best_score(sc);
            let active = t == 0
                || match *risk {
                    RiskAversion::Never => true,
                    RiskAversion::Threshold(eps) => best * inv_t >= eps,
                };
            *on = active;
            if !active {
                *action = 0;
                continue;
            }
            let pick = if ties == 1 {
                sc.iter().position(|&v| v == best).expect("max is present")
            } else {
                let r = rng.random_range(0..ties) as usize;
                sc.iter().enumerate().filter(|(_, &v)| v == best).nth(r).expect("r < ties").0
            };
            let a = row[pick];
            *action = a;
            arbitrage += w * a as f64;
            active_count += 1;
        }

        let eta = match &self.noise {
            Some(d) => d.sample(&mut self.noise_rng),
            None => self.config.noise.mean,
        };
        let total = arbitrage + eta;
        if total < self.monotone.0 || total > self.monotone.1 {
            if self.non_monotone_steps == 0 {
                log::warn!("imbalance {total} left the monotone region of the price at step {t}");
            }
            self.non_monotone_steps += 1;
        }
        let price = self.price(total)?;
        let evaluation_price = if self.config.eval_uses_noise || eta == 0.0 { price } else { self.price(arbitrage)? };
        let gain = self.config.intraday_price - evaluation_price;

        if self.config.freeze_inactive && self.gated {
            for ((u, row), _) in self.scores.chunks_exact_mut(s).zip(block.chunks_exact(s)).zip(&self.active).filter(|(_, &on)| on) {
                for (u, &d) in u.iter_mut().zip(row) {
                    *u += d as f64 * gain;
                }
            }
        } else {
            for (u, &d) in self.scores.iter_mut().zip(block) {
                *u += d as f64 * gain;
            }
        }
        self.t += 1;
        Ok(StepSummary { t, mu, arbitrage, eta, total_imbalance: total, price, evaluation_price, active_count })
    }

    /// Advances one step and returns the full record.
    pub fn step_record(&mut self) -> Result<StepRecord, PriceError> {
        let summary = self.step()?;
        let gain = self.config.intraday_price - summary.price;
        Ok(StepRecord {
            summary,
            actions: self.actions.clone(),
            active: self.active.clone(),
            payoff_per_unit: self.actions.iter().map(|&a| a as f64 * gain).collect(),
        })
    }

    /// Runs with the convergence schedule and measures the last half.
    pub fn run(&mut self, trace: Option<&mut dyn Write>) -> std::io::Result<RunResult> {
        let mut runner = Runner::new(self.config.max_steps);
        runner.run(self, trace)
    }

    /// Runs exactly `steps` steps (no convergence check).
    pub fn run_fixed(&mut self, steps: u64, trace: Option<&mut dyn Write>) -> std::io::Result<(RunResult, Vec<f64>)> {
        let mut runner = Runner::new(steps);
        runner.fixed = true;
        let r = runner.run(self, trace)?;
        Ok((r, runner.a))
    }
}

struct Runner {
    max_steps: u64,
    fixed: bool,
    a: Vec<f64>,
    total: Vec<f64>,
    active: Vec<u32>,
}

impl Runner {
    fn new(max_steps: u64) -> Self {
        let cap = max_steps.min(1 << 22) as usize;
        Runner { max_steps, fixed: false, a: Vec::with_capacity(cap), total: Vec::with_capacity(cap), active: Vec::with_capacity(cap) }
    }

    fn run(&mut self, game: &mut Game, mut trace: Option<&mut dyn Write>) -> std::io::Result<RunResult> {
        if let Some(w) = trace.as_deref_mut() {
            writeln!(w, "t,mu,A,eta,price,active_count")?;
        }
        let tol = game.config.convergence_tol;
        let mut next = if self.fixed { self.max_steps } else { FIRST_CHECKPOINT.min(self.max_steps) };
        let mut converged = false;
        let mut exhausted = None;
        'outer: loop {
            while game.t < next {
                match game.step() {
                    Ok(s) => {
                        if let Some(w) = trace.as_deref_mut() {
                            writeln!(w, "{},{},{:?},{:?},{:?},{}", s.t, s.mu + 1, s.arbitrage, s.eta, s.price, s.active_count)?;
                        }
                        self.a.push(s.arbitrage);
                        self.total.push(s.total_imbalance);
                        self.active.push(s.active_count as u32);
                    }
                    Err(PriceError::Exhausted { imbalance, overshoot }) => {
                        exhausted = Some(Exhaustion { step: game.t, imbalance, overshoot });
                        break 'outer;
                    }
                    Err(e) => unreachable!("price evaluation cannot fail otherwise: {e}"),
                }
            }
            if !self.fixed && quarters_agree(&self.a, tol) {
                converged = true;
                break;
            }
            if game.t >= self.max_steps {
                break;
            }
            next = (next * 2).min(self.max_steps);
        }
        Ok(self.result(game, converged, exhausted))
    }

    fn result(&self, game: &Game, converged: bool, exhausted: Option<Exhaustion>) -> RunResult {
        let len = self.a.len();
        let from = len / 2;
        let ma = Moments::from_slice(&self.a[from..]);
        let mt = Moments::from_slice(&self.total[from..]);
        let active_mean = if len > from {
            self.active[from..].iter().map(|&c| c as f64).sum::<f64>() / ((len - from) as f64 * game.config.n_agents as f64)
        } else {
            0.0
        };
        RunResult {
            seed: game.config.seed,
            config_hash: format!("{:016x}", game.config.config_hash()),
            steps_run: game.t,
            converged,
            mean_a: ma.mean(),
            sigma_a: ma.std(),
            sigma_total: mt.std(),
            mean_total: mt.mean(),
            excess_kurtosis: ma.excess_kurtosis(),
            mean_active_fraction: active_mean,
            histogram_a: Histogram::freedman_diaconis(&self.a[from..]),
            histogram_total: Histogram::freedman_diaconis(&self.total[from..]),
            exhausted,
            non_monotone_steps: game.non_monotone_steps,
            strategy_bias: game.strategy_bias,
            a_star: game.a_star,
            total_weight: game.total_weight,
            heterogeneity: game.heterogeneity,
        }
    }
}

/// Largest score and how many strategies share it.
#[inline]
fn best_score(sc: &[f64]) -> (f64, u32) {
    if let [a, b] = *sc {
        return if a == b { (a, 2) } else { (a.max(b), 1) };
    }
    let mut best = sc[0];
    let mut ties = 1u32;
    for &v in &sc[1..] {
        if v > best {
            best = v;
            ties = 1;
        } else if v == best {
            ties += 1;
        }
    }
    (best, ties)
}

/// Stopping rule: `σ_A` over the third and the last quarter of the series
/// differ by less than `tol` relative.
pub fn quarters_agree(series: &[f64], tol: f64) -> bool {
    let q = series.len() / 4;
    if q < 2 {
        return false;
    }
    let third = Moments::from_slice(&series[2 * q..3 * q]).std();
    let last = Moments::from_slice(&series[3 * q..4 * q]).std();
    if third == 0.0 {
        return last == 0.0;
    }
    ((last - third) / third).abs() < tol
}

/// Builds a game from `config` and runs it to convergence or `max_steps`.
pub fn run_until_converged(config: &GameConfig) -> Result<RunResult, ConfigError> {
    let mut game = Game::new(config)?;
    Ok(game.run(None).expect("no trace writer, no i/o"))
}

/// Recomputes evaluations by replaying a record stream; must equal the
/// engine's own evaluations.
pub fn replay_scores(
    strategies: &StrategyTable,
    intraday_price: f64,
    records: &[StepRecord],
    freeze_inactive: bool,
) -> Vec<f64> {
    let (n, s) = (strategies.n_agents(), strategies.n_strategies());
    let mut u = vec![0.0; n * s];
    for r in records {
        let gain = intraday_price - r.summary.evaluation_price;
        for i in 0..n {
            if freeze_inactive && !r.active[i] {
                continue;
            }
            for k in 0..s {
                u[i * s + k] += strategies.get(i, k, r.summary.mu) as f64 * gain;
            }
        }
    }
    u
}

impl PriceSpec {
    /// Whether the price is linear, so noise cannot shift the mean.
    pub fn is_linear(&self) -> bool {
        matches!(self, PriceSpec::Identity | PriceSpec::ScaledLinear { .. } | PriceSpec::Affine { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NoiseSpec;
    use crate::weights::WeightSpec;

    /// Naive replica of one game: nested vectors, explicit tie lists.
    fn naive_trajectory(cfg: &GameConfig, w: &[f64], table: &StrategyTable, steps: u64) -> (Vec<(usize, f64, f64)>, Vec<Vec<f64>>) {
        let (n, s) = (cfg.n_agents, cfg.n_strategies);
        let mut sig = stream(cfg.seed, Stream::Signal, 0);
        let mut ties: Vec<StreamRng> = (0..n).map(|i| stream(cfg.seed, Stream::TieBreak, i as u64)).collect();
        let mut u = vec![vec![0.0f64; s]; n];
        let mut out = Vec::new();
        for _ in 0..steps {
            let mu = sig.random_range(0..cfg.n_patterns);
            let mut a = 0.0;
            for i in 0..n {
                let m = u[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let best: Vec<usize> = (0..s).filter(|&k| u[i][k] == m).collect();
                let k = if best.len() == 1 { best[0] } else { best[ties[i].random_range(0..best.len() as u32) as usize] };
                a += w[i] * table.get(i, k, mu) as f64;
            }
            let price = cfg.price.eval(a).unwrap();
            for i in 0..n {
                for k in 0..s {
                    u[i][k] += table.get(i, k, mu) as f64 * (cfg.intraday_price - price);
                }
            }
            out.push((mu, a, price));
        }
        (out, u)
    }

    fn tiny() -> GameConfig {
        let mut c = GameConfig::standard(3, 2, 2);
        c.weights = WeightSpec::Explicit(vec![1.0, 2.0, 0.5]);
        c.seed = 11;
        c
    }

    #[test]
    fn matches_naive_oracle_on_tiny_game() {
        let cfg = tiny();
        // Hand-written table: agent 0 always agrees with itself, agent 2 is anti-correlated.
        let rows = [[[1, -1], [1, 1]], [[-1, 1], [1, -1]], [[-1, -1], [1, -1]]];
        let table = StrategyTable::from_fn(3, 2, 2, |i, k, mu| rows[i][k][mu]);
        let w = WeightVector::new(vec![1.0, 2.0, 0.5]).unwrap();
        let mut g = Game::with_parts(&cfg, w.clone(), table.clone(), 0.5, 0.0).unwrap();
        let got: Vec<_> = (0..5).map(|_| g.step().unwrap()).collect();
        let (want, u) = naive_trajectory(&cfg, w.as_slice(), &table, 5);
        for (s, (mu, a, p)) in got.iter().zip(&want) {
            assert_eq!(s.mu, *mu);
            assert_eq!(s.arbitrage, *a);
            assert_eq!(s.price, *p);
        }
        let flat: Vec<f64> = u.into_iter().flatten().collect();
        assert_eq!(g.scores(), &flat[..]);
    }

    #[test]
    fn matches_naive_oracle_on_drawn_game() {
        let mut cfg = GameConfig::standard(31, 8, 3);
        cfg.seed = 5;
        let mut g = Game::new(&cfg).unwrap();
        let w = g.weights().to_vec();
        let table = g.strategies().clone();
        let got: Vec<_> = (0..400).map(|_| g.step().unwrap()).collect();
        let (want, _) = naive_trajectory(&cfg, &w, &table, 400);
        for (s, (mu, a, _)) in got.iter().zip(&want) {
            assert_eq!((s.mu, s.arbitrage), (*mu, *a));
        }
    }

    #[test]
    fn replay_reproduces_scores() {
        let mut cfg = GameConfig::standard(21, 5, 2);
        cfg.noise = NoiseSpec::gaussian(2.0);
        cfg.risk_aversion = RiskSpec::Uniform(RiskAversion::Threshold(0.0));
        for (eval_noise, freeze) in [(true, false), (false, true), (false, false)] {
            cfg.eval_uses_noise = eval_noise;
            cfg.freeze_inactive = freeze;
            let mut g = Game::new(&cfg).unwrap();
            let recs: Vec<_> = (0..300).map(|_| g.step_record().unwrap()).collect();
            let u = replay_scores(g.strategies(), cfg.intraday_price, &recs, freeze);
            for (a, b) in u.iter().zip(g.scores()) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn payoff_is_action_times_gain() {
        let mut cfg = GameConfig::standard(9, 3, 2);
        cfg.intraday_price = 0.5;
        let mut g = Game::new(&cfg).unwrap();
        for _ in 0..20 {
            let r = g.step_record().unwrap();
            let a: f64 = r.actions.iter().zip(g.weights()).map(|(&x, w)| x as f64 * w).sum();
            assert!((a - r.summary.arbitrage).abs() < 1e-12);
            for (p, &x) in r.payoff_per_unit.iter().zip(&r.actions) {
                assert_eq!(*p, x as f64 * (0.5 - r.summary.price));
            }
        }
    }

    #[test]
    fn same_seed_same_run() {
        let mut cfg = GameConfig::standard(51, 25, 2);
        cfg.max_steps = 8000;
        cfg.noise = NoiseSpec::gaussian(1.0);
        let a = run_until_converged(&cfg).unwrap();
        let b = run_until_converged(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed += 1;
        assert_ne!(a.sigma_a, run_until_converged(&cfg).unwrap().sigma_a);
    }

    #[test]
    fn everyone_plays_first_step_then_gate_applies() {
        let mut cfg = GameConfig::standard(15, 4, 2);
        cfg.risk_aversion = RiskSpec::Uniform(RiskAversion::Threshold(1e9));
        let mut g = Game::new(&cfg).unwrap();
        assert_eq!(g.step().unwrap().active_count, 15);
        let s = g.step().unwrap();
        assert_eq!(s.active_count, 0);
        assert_eq!(s.arbitrage, 0.0);
    }

    #[test]
    fn frozen_agents_keep_scores() {
        let mut cfg = GameConfig::standard(15, 4, 2);
        cfg.risk_aversion = RiskSpec::Uniform(RiskAversion::Threshold(1e9));
        cfg.freeze_inactive = true;
        let mut g = Game::new(&cfg).unwrap();
        g.step().unwrap();
        let before = g.scores().to_vec();
        g.step().unwrap();
        assert_eq!(g.scores(), &before[..]);
    }

    #[test]
    fn exhaustion_is_reported_not_panicked() {
        let mut cfg = GameConfig::standard(11, 3, 2);
        cfg.price = PriceSpec::MeritOrder(crate::price::MeritLadder::constant(1.0, 0.5));
        cfg.strategy_bias = BiasSpec::Fixed(1.0);
        let r = run_until_converged(&cfg).unwrap();
        let e = r.exhausted.expect("capacity 0.5 cannot absorb 11");
        assert_eq!(e.step, 0);
        assert!((e.overshoot - 10.5).abs() < 1e-12);
    }

    #[test]
    fn fixed_run_length() {
        let cfg = GameConfig::standard(11, 3, 2);
        let (r, series) = Game::new(&cfg).unwrap().run_fixed(777, None).unwrap();
        assert_eq!(r.steps_run, 777);
        assert_eq!(series.len(), 777);
        assert!(!r.converged);
    }

    #[test]
    fn trace_has_one_row_per_step() {
        let cfg = GameConfig::standard(11, 3, 2);
        let mut buf = Vec::new();
        Game::new(&cfg).unwrap().run_fixed(50, Some(&mut buf)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 51);
        assert!(text.starts_with("t,mu,A,eta,price,active_count\n"));
    }

    #[test]
    fn quarter_rule() {
        let flat: Vec<f64> = (0..400).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(quarters_agree(&flat, 1e-3));
        let mut grow = flat.clone();
        for x in &mut grow[300..] {
            *x *= 2.0;
        }
        assert!(!quarters_agree(&grow, 1e-3));
        assert!(!quarters_agree(&flat[..4], 1e-3));
    }
}
