//! Agent weights (power available for arbitrage, MW) and their heterogeneity.

use rand::Rng;
use rand_distr::{Distribution, Exp, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DomainError};

/// Number of agents in the realistic weight table.
pub const REALISTIC_AGENTS: usize = 120;

/// Nonnegative per-agent weights with cached totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    w: Vec<f64>,
}

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self, DomainError> {
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(DomainError::Other("weights must be finite and nonnegative".into()));
        }
        if !w.iter().any(|&x| x > 0.0) {
            return Err(DomainError::ZeroWeights);
        }
        Ok(WeightVector { w })
    }

    pub fn uniform(n: usize, each: f64) -> Self {
        WeightVector { w: vec![each; n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Total weight `W = Σ w_i`.
    pub fn total(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.w.iter().map(|x| x * x).sum()
    }

    /// Heterogeneity `X`; never fails because construction rejects all-zero vectors.
    pub fn heterogeneity(&self) -> f64 {
        heterogeneity(&self.w).expect("validated at construction").0
    }

    /// Effective number of agents `N/X`.
    pub fn effective_agents(&self) -> f64 {
        heterogeneity(&self.w).expect("validated at construction").1
    }
}

/// Returns `(X, N/X)` with `X = mean(w²) / mean(w)²`.
pub fn heterogeneity(weights: &[f64]) -> Result<(f64, f64), DomainError> {
    let n = weights.len() as f64;
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || !(sum > 0.0) {
        return Err(DomainError::ZeroWeights);
    }
    let sq: f64 = weights.iter().map(|x| x * x).sum();
    let x = (sq / n) / (sum / n).powi(2);
    Ok((x, n / x))
}

/// How to construct the weight vector of a game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightSpec {
    /// Every agent gets `total / N`.
    Uniform { total: f64 },
    /// I.i.d. exponential, rescaled to unit mean.
    Exponential,
    /// I.i.d. with density `∝ w^-exponent` above `lower`, rescaled to unit mean.
    Pareto { exponent: f64, lower: f64 },
    /// The fixed 120-agent table (MW).
    Realistic,
    Explicit(Vec<f64>),
}

impl WeightSpec {
    /// Canonical text form, parsed back by [`WeightSpec::parse`].
    pub fn to_text(&self) -> String {
        match self {
            WeightSpec::Uniform { total } => format!("uniform:{total:?}"),
            WeightSpec::Exponential => "exponential".into(),
            WeightSpec::Pareto { exponent, lower } => format!("pareto:{exponent:?}:{lower:?}"),
            WeightSpec::Realistic => "realistic".into(),
            WeightSpec::Explicit(v) => {
                let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                format!("explicit:{}", parts.join(","))
            }
        }
    }

    /// Parses `uniform[:W]`, `exponential`, `pareto[:exponent:lower]`,
    /// `realistic` or `explicit:w1,w2,...`. A bare `uniform` means unit weights
    /// and is resolved against `n_agents`.
    pub fn parse(text: &str, n_agents: usize) -> Result<Self, ConfigError> {
        let bad = |r: &str| ConfigError::invalid("weights", format!("{r}: `{text}`"));
        let mut parts = text.trim().splitn(2, ':');
        let head = parts.next().unwrap_or_default().trim();
        let rest = parts.next().map(str::trim);
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
        match head {
            "uniform" => Ok(WeightSpec::Uniform {
                total: match rest {
                    Some(r) => num(r)?,
                    None => n_agents as f64,
                },
            }),
            "exponential" => Ok(WeightSpec::Exponential),
            "pareto" => match rest {
                None => Ok(WeightSpec::Pareto { exponent: 4.0, lower: 2.0 / 3.0 }),
                Some(r) => {
                    let (a, b) = r.split_once(':').ok_or_else(|| bad("expected pareto:exponent:lower"))?;
                    let (exponent, lower) = (num(a)?, num(b)?);
                    if !(exponent > 3.0) || !(lower > 0.0) {
                        return Err(bad("pareto needs exponent > 3 (finite X) and lower > 0"));
                    }
                    Ok(WeightSpec::Pareto { exponent, lower })
                }
            },
            "realistic" => Ok(WeightSpec::Realistic),
            "explicit" => {
                let r = rest.ok_or_else(|| bad("explicit needs values"))?;
                let v = r.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
                Ok(WeightSpec::Explicit(v))
            }
            _ => Err(bad("unknown weight family")),
        }
    }
}

/// The realistic weight table in MW.
pub fn realistic_weights() -> Vec<f64> {
    let mut w = Vec::with_capacity(REALISTIC_AGENTS);
    w.extend(std::iter::repeat_n(400.0, 5));
    w.extend(std::iter::repeat_n(160.0, 5));
    w.extend(std::iter::repeat_n(120.0, 10));
    w.extend(std::iter::repeat_n(15.0, 100));
    w
}

fn unit_mean(mut w: Vec<f64>) -> Vec<f64> {
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    w.iter_mut().for_each(|x| *x /= mean);
    w
}

/// Materializes a weight vector. Sampled families are drawn i.i.d. from `rng`;
/// they and the realistic table are rescaled so the mean weight is one.
pub fn make_weights<R: Rng + ?Sized>(
    spec: &WeightSpec,
    n_agents: usize,
    rng: &mut R,
) -> Result<WeightVector, ConfigError> {
    if n_agents == 0 {
        return Err(ConfigError::invalid("n_agents", "must be positive"));
    }
    let w = match spec {
        WeightSpec::Uniform { total } => {
            if !(*total > 0.0) {
                return Err(ConfigError::invalid("weights", "uniform total must be positive"));
            }
            vec![total / n_agents as f64; n_agents]
        }
        WeightSpec::Exponential => {
            let d = Exp::new(1.0).expect("unit rate");
            unit_mean((0..n_agents).map(|_| d.sample(rng)).collect())
        }
        WeightSpec::Pareto { exponent, lower } => {
            // density ∝ w^-exponent  <=>  Pareto shape exponent-1
            let d = Pareto::new(*lower, exponent - 1.0)
                .map_err(|e| ConfigError::invalid("weights", e.to_string()))?;
            unit_mean((0..n_agents).map(|_| d.sample(rng)).collect())
        }
        WeightSpec::Realistic => {
            if n_agents != REALISTIC_AGENTS {
                return Err(ConfigError::RealisticAgentCount(n_agents));
            }
            unit_mean(realistic_weights())
        }
        WeightSpec::Explicit(v) => {
            if v.len() != n_agents {
                return Err(ConfigError::Length { key: "weights".into(), got: v.len(), expected: n_agents });
            }
            v.clone()
        }
    };
    WeightVector::new(w).map_err(|e| ConfigError::invalid("weights", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_weights_have_unit_heterogeneity() {
        let (x, eff) = heterogeneity(&[3.0; 17]).unwrap();
        assert_relative_eq!(x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(eff, 17.0, epsilon = 1e-12);
    }

    #[test]
    fn single_nonzero_weight() {
        let (x, eff) = heterogeneity(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(x, 4.0);
        assert_eq!(eff, 1.0);
    }

    #[test]
    fn all_zero_is_domain_error() {
        assert_eq!(heterogeneity(&[0.0, 0.0]), Err(DomainError::ZeroWeights));
        assert!(WeightVector::new(vec![0.0; 3]).is_err());
    }

    #[test]
    fn realistic_table() {
        let mut rng = stream(0, Stream::Weights, 0);
        let w = make_weights(&WeightSpec::Realistic, 120, &mut rng).unwrap();
        assert_relative_eq!(w.total(), 120.0, epsilon = 1e-9);
        assert_eq!(realistic_weights().iter().sum::<f64>(), 5500.0);
        // W² / Σw² = 5500² / 1_094_500, independent of the unit
        assert_relative_eq!(w.effective_agents(), 30_250_000.0 / 1_094_500.0, epsilon = 1e-12);
        assert!(matches!(
            make_weights(&WeightSpec::Realistic, 100, &mut rng),
            Err(ConfigError::RealisticAgentCount(100))
        ));
    }

    #[test]
    fn sampled_families_have_unit_mean_and_expected_x() {
        let mut rng = stream(7, Stream::Weights, 0);
        let w = make_weights(&WeightSpec::Exponential, 100_000, &mut rng).unwrap();
        assert_relative_eq!(w.total() / 1e5, 1.0, epsilon = 1e-9);
        assert!((w.heterogeneity() - 2.0).abs() < 0.05, "{}", w.heterogeneity());

        let spec = WeightSpec::parse("pareto", 0).unwrap();
        let w = make_weights(&spec, 100_000, &mut rng).unwrap();
        assert!(w.as_slice().iter().all(|&x| x > 0.6));
        assert!((w.heterogeneity() - 4.0 / 3.0).abs() < 0.05, "{}", w.heterogeneity());
    }

    #[test]
    fn spec_text_round_trip() {
        for s in ["uniform:10.0", "exponential", "pareto:4.0:0.5", "realistic", "explicit:1.0,2.5"] {
            let spec = WeightSpec::parse(s, 2).unwrap();
            assert_eq!(WeightSpec::parse(&spec.to_text(), 2).unwrap(), spec);
        }
        assert!(WeightSpec::parse("lognormal", 2).is_err());
    }

    proptest! {
        #[test]
        fn heterogeneity_is_scale_invariant_and_at_least_one(
            w in prop::collection::vec(0.0f64..100.0, 1..50),
            c in 1e-3f64..1e3,
        ) {
            prop_assume!(w.iter().any(|&x| x > 0.0));
            let (x, eff) = heterogeneity(&w).unwrap();
            prop_assert!(x >= 1.0 - 1e-12);
            prop_assert!(eff <= w.len() as f64 + 1e-9);
            let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
            let (xs, _) = heterogeneity(&scaled).unwrap();
            prop_assert!((x - xs).abs() <= 1e-9 * x);
        }
    }
}
