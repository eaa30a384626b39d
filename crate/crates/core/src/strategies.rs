//! Fixed per-agent strategy tables.

use rand::Rng;

use crate::rng::{stream, Stream};

/// `N × S × P` table of ±1 decisions, stored pattern-major
/// (`[μ][agent][strategy]`) so one signal touches a contiguous block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyTable {
    n_agents: usize,
    n_strategies: usize,
    n_patterns: usize,
    entries: Vec<i8>,
}

impl StrategyTable {
    /// Builds a table from an agent-major closure `f(agent, strategy, pattern)`.
    pub fn from_fn(
        n_agents: usize,
        n_strategies: usize,
        n_patterns: usize,
        mut f: impl FnMut(usize, usize, usize) -> i8,
    ) -> Self {
        let mut entries = vec![0i8; n_agents * n_strategies * n_patterns];
        for i in 0..n_agents {
            for s in 0..n_strategies {
                for mu in 0..n_patterns {
                    let v = f(i, s, mu);
                    assert!(v == 1 || v == -1, "strategy entries must be ±1");
                    entries[(mu * n_agents + i) * n_strategies + s] = v;
                }
            }
        }
        StrategyTable { n_agents, n_strategies, n_patterns, entries }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_strategies(&self) -> usize {
        self.n_strategies
    }

    pub fn n_patterns(&self) -> usize {
        self.n_patterns
    }

    /// Decision of `strategy` of `agent` under signal `mu` (0-based).
    #[inline]
    pub fn get(&self, agent: usize, strategy: usize, mu: usize) -> i8 {
        self.entries[(mu * self.n_agents + agent) * self.n_strategies + strategy]
    }

    /// All decisions under signal `mu`, laid out `[agent][strategy]`.
    #[inline]
    pub fn pattern_block(&self, mu: usize) -> &[i8] {
        let len = self.n_agents * self.n_strategies;
        &self.entries[mu * len..(mu + 1) * len]
    }

    /// Mean of all entries.
    pub fn mean_entry(&self) -> f64 {
        self.entries.iter().map(|&v| v as i64).sum::<i64>() as f64 / self.entries.len() as f64
    }
}

/// Draws every entry independently: `+1` with probability `bias`, else `-1`.
///
/// Agent `i` draws its `S × P` entries (strategy-major) from its own stream
/// `(root_seed, Strategies, i)`.
pub fn draw_strategies(
    n_agents: usize,
    n_strategies: usize,
    n_patterns: usize,
    bias: f64,
    root_seed: u64,
) -> StrategyTable {
    let bias = bias.clamp(0.0, 1.0);
    let mut entries = vec![0i8; n_agents * n_strategies * n_patterns];
    for i in 0..n_agents {
        let mut rng = stream(root_seed, Stream::Strategies, i as u64);
        for s in 0..n_strategies {
            for mu in 0..n_patterns {
                let v = if rng.random_bool(bias) { 1 } else { -1 };
                entries[(mu * n_agents + i) * n_strategies + s] = v;
            }
        }
    }
    StrategyTable { n_agents, n_strategies, n_patterns, entries }
}

/// Strategy bias of the homogeneous Nash equilibrium: `clip(1/2 + A*/(2W), 0, 1)`.
pub fn bias_from_equilibrium(a_star: f64, total_weight: f64) -> f64 {
    assert!(total_weight > 0.0, "total weight must be positive");
    (0.5 + a_star / (2.0 * total_weight)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_bias() {
        let t = draw_strategies(10, 3, 7, 1.0, 1);
        assert!((0..10).all(|i| (0..3).all(|s| (0..7).all(|m| t.get(i, s, m) == 1))));
        let t = draw_strategies(10, 3, 7, 0.0, 1);
        assert_eq!(t.mean_entry(), -1.0);
    }

    #[test]
    fn unbiased_mean_is_near_zero() {
        let t = draw_strategies(1000, 2, 500, 0.5, 11);
        assert!(t.mean_entry().abs() <= 0.01, "{}", t.mean_entry());
    }

    #[test]
    fn biased_mean_matches_binomial_expectation() {
        // E[entry] = 2p - 1 = 0.5
        let t = draw_strategies(1000, 2, 500, 0.75, 12);
        assert!((t.mean_entry() - 0.5).abs() <= 0.01, "{}", t.mean_entry());
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        assert_eq!(draw_strategies(50, 3, 40, 0.6, 9), draw_strategies(50, 3, 40, 0.6, 9));
        assert_ne!(draw_strategies(50, 3, 40, 0.6, 9), draw_strategies(50, 3, 40, 0.6, 10));
    }

    #[test]
    fn adding_agents_keeps_existing_tables() {
        let small = draw_strategies(5, 2, 8, 0.5, 3);
        let big = draw_strategies(9, 2, 8, 0.5, 3);
        for i in 0..5 {
            for s in 0..2 {
                for m in 0..8 {
                    assert_eq!(small.get(i, s, m), big.get(i, s, m));
                }
            }
        }
    }

    #[test]
    fn from_fn_layout() {
        let t = StrategyTable::from_fn(3, 2, 4, |i, s, m| if (i + s + m) % 2 == 0 { 1 } else { -1 });
        assert_eq!(t.get(1, 1, 2), 1);
        assert_eq!(t.get(0, 1, 2), -1);
        assert_eq!(t.pattern_block(2)[1 * 2 + 1], t.get(1, 1, 2));
    }

    #[test]
    fn equilibrium_bias() {
        assert_eq!(bias_from_equilibrium(0.0, 1025.0), 0.5);
        assert_eq!(bias_from_equilibrium(2000.0, 2000.0), 1.0);
        assert_eq!(bias_from_equilibrium(500.0, 2000.0), 0.625);
        assert_eq!(bias_from_equilibrium(-5000.0, 2000.0), 0.0);
    }
}
