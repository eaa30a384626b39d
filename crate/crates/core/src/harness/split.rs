use serde::Serialize;

use crate::weights::WeightVector;

/// Agents split into a high-weight group holding at least half the total
/// weight and everyone else.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSplit {
    pub high: Vec<usize>,
    pub low: Vec<usize>,
    /// Share of the total weight held by the high group.
    pub high_share: f64,
}

/// Greedy by descending weight until the cumulative weight reaches `W/2`.
/// Equal weights keep their index order.
pub fn split_by_weight(weights: &WeightVector) -> WeightSplit {
    let w = weights.as_slice();
    let total = weights.total();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut acc = 0.0;
    let mut cut = 0;
    for &i in &order {
        if acc >= total / 2.0 {
            break;
        }
        acc += w[i];
        cut += 1;
    }
    let mut high = order[..cut].to_vec();
    let mut low = order[cut..].to_vec();
    high.sort_unstable();
    low.sort_unstable();
    WeightSplit { high, low, high_share: acc / total }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realistic_split() {
        let w = WeightVector::new(crate::weights::realistic_weights()).unwrap();
        let s = split_by_weight(&w);
        // 2000 + 800 = 2800 of 5500 reaches half after ten agents.
        assert_eq!(s.high, (0..10).collect::<Vec<_>>());
        assert!((s.high_share - 2800.0 / 5500.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_split_takes_half() {
        let s = split_by_weight(&WeightVector::uniform(10, 10.0));
        assert_eq!(s.high.len(), 5);
        assert_eq!(s.low.len(), 5);
    }

    #[test]
    fn dominant_agent_alone() {
        let s = split_by_weight(&WeightVector::new(vec![1.0, 10.0, 2.0]).unwrap());
        assert_eq!(s.high, vec![1]);
        assert_eq!(s.low.len(), 2);
    }

    proptest::proptest! {
        #[test]
        fn share_bounds(w in proptest::collection::vec(0.01f64..100.0, 2..60)) {
            let v = WeightVector::new(w.clone()).unwrap();
            let s = split_by_weight(&v);
            let max = w.iter().copied().fold(0.0, f64::max);
            proptest::prop_assert!(s.high_share >= 0.5 - 1e-12);
            proptest::prop_assert!(s.high_share <= 0.5 + max / v.total() + 1e-12);
            proptest::prop_assert_eq!(s.high.len() + s.low.len(), w.len());
        }
    }
}
