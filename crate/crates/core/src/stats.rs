//! Series and ensemble statistics. Variances use the population convention
//! `⟨x²⟩ - ⟨x⟩²` throughout.

use serde::{Deserialize, Serialize};

/// Default `|excess kurtosis|` threshold below which a series counts as Gaussian.
pub const GAUSSIAN_KURTOSIS_THRESHOLD: f64 = 0.2;

/// Streaming central moments up to fourth order; [`Moments::merge`] is
/// associative, so partial accumulators can be combined in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Moments::new();
        xs.iter().for_each(|&x| m.push(x));
        m
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        let d2 = d * d;
        let d3 = d2 * d;
        let d4 = d2 * d2;
        let mean = self.mean + d * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3 + other.m3 + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * d * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * other.m3 - nb * self.m3) / n;
        Moments { n: self.n + other.n, mean, m2, m3, m4 }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.m2 / self.n as f64).max(0.0)
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// `m4/m2² - 3`; zero for a constant series.
    pub fn excess_kurtosis(&self) -> f64 {
        if self.m2 <= 0.0 {
            return 0.0;
        }
        self.n as f64 * self.m4 / (self.m2 * self.m2) - 3.0
    }

    pub fn summary(&self) -> SeriesStats {
        SeriesStats {
            count: self.n,
            mean: self.mean(),
            variance: self.variance(),
            std: self.std(),
            excess_kurtosis: self.excess_kurtosis(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
    pub excess_kurtosis: f64,
}

pub fn series_stats(xs: &[f64]) -> SeriesStats {
    Moments::from_slice(xs).summary()
}

/// Sliding-window standard deviation, one value per complete window.
/// Returns an empty vector (and logs a warning) if the series is shorter
/// than the window.
pub fn running_sigma(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 2, "window must be at least 2");
    if series.len() < window {
        log::warn!("running_sigma: series of length {} shorter than window {window}", series.len());
        return Vec::new();
    }
    // Sums of deviations from a fixed shift keep cancellation in check.
    let shift = series.iter().sum::<f64>() / series.len() as f64;
    let w = window as f64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for &x in &series[..window] {
        let d = x - shift;
        s1 += d;
        s2 += d * d;
    }
    let mut out = Vec::with_capacity(series.len() - window + 1);
    let sd = |s1: f64, s2: f64| ((s2 / w) - (s1 / w).powi(2)).max(0.0).sqrt();
    out.push(sd(s1, s2));
    for k in window..series.len() {
        let (a, b) = (series[k] - shift, series[k - window] - shift);
        s1 += a - b;
        s2 += a * a - b * b;
        out.push(sd(s1, s2));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub sigma_a: f64,
    pub sigma_eta: f64,
    pub sigma_total: f64,
    /// `σ_total² - σ_A² - σ_η² = 2 cov(A, η)`.
    pub residual: f64,
    /// `residual / σ_total²`.
    pub relative_residual: f64,
}

pub fn variance_decomposition(a: &[f64], eta: &[f64]) -> VarianceDecomposition {
    assert_eq!(a.len(), eta.len(), "series lengths differ");
    let total: Vec<f64> = a.iter().zip(eta).map(|(x, y)| x + y).collect();
    let (va, ve, vt) = (series_stats(a).variance, series_stats(eta).variance, series_stats(&total).variance);
    let residual = vt - va - ve;
    VarianceDecomposition {
        sigma_a: va.sqrt(),
        sigma_eta: ve.sqrt(),
        sigma_total: vt.sqrt(),
        residual,
        relative_residual: if vt > 0.0 { residual / vt } else { 0.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussianity {
    pub excess_kurtosis: f64,
    pub threshold: f64,
    pub is_gaussian: bool,
}

pub fn gaussianity(series: &[f64], threshold: f64) -> Gaussianity {
    let k = series_stats(series).excess_kurtosis;
    Gaussianity { excess_kurtosis: k, threshold, is_gaussian: k.abs() < threshold }
}

/// Fixed-edge histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// `(mean, std)` of the binned sample, for drawing a matching Gaussian.
    pub gaussian_overlay: Option<(f64, f64)>,
}

const MAX_BINS: usize = 2000;

impl Histogram {
    pub fn with_edges(edges: Vec<f64>, xs: &[f64]) -> Self {
        assert!(edges.len() >= 2 && edges.windows(2).all(|w| w[1] > w[0]), "edges must increase");
        let mut counts = vec![0u64; edges.len() - 1];
        let last = counts.len() - 1;
        for &x in xs {
            let k = edges.partition_point(|&e| e <= x);
            // right edge inclusive for the last bin
            let bin = if k == 0 { 0 } else { (k - 1).min(last) };
            counts[bin] += 1;
        }
        let m = Moments::from_slice(xs);
        Histogram { bin_edges: edges, counts, gaussian_overlay: Some((m.mean(), m.std())) }
    }

    /// Freedman–Diaconis bin width `2·IQR·n^(-1/3)`, falling back to the
    /// square-root rule when the IQR vanishes. Capped at 2000 bins.
    pub fn freedman_diaconis(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Histogram { bin_edges: vec![0.0, 1.0], counts: vec![0], gaussian_overlay: None };
        }
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        let (lo, hi) = (s[0], s[s.len() - 1]);
        if hi <= lo {
            return Histogram::with_edges(vec![lo - 0.5, lo + 0.5], xs);
        }
        let q = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
        let iqr = q(0.75) - q(0.25);
        let n = s.len() as f64;
        let bins = if iqr > 0.0 {
            ((hi - lo) / (2.0 * iqr * n.powf(-1.0 / 3.0))).ceil() as usize
        } else {
            n.sqrt().ceil() as usize
        }
        .clamp(1, MAX_BINS);
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
        edges[bins] = hi;
        Histogram::with_edges(edges, xs)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV with columns `bin_lo,bin_hi,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{:?},{:?},{}\n", self.bin_edges[k], self.bin_edges[k + 1], c));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let (mut edges, mut counts) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            let f = |i: usize| rec.get(i).ok_or("short row".to_string());
            let lo: f64 = f(0)?.parse().map_err(|_| "bad bin_lo")?;
            let hi: f64 = f(1)?.parse().map_err(|_| "bad bin_hi")?;
            let c: u64 = f(2)?.parse().map_err(|_| "bad count")?;
            if edges.is_empty() {
                edges.push(lo);
            }
            edges.push(hi);
            counts.push(c);
        }
        if counts.is_empty() {
            return Err("empty histogram".into());
        }
        Ok(Histogram { bin_edges: edges, counts, gaussian_overlay: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn gaussian(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, Stream::Noise, 0);
        let d = Normal::new(0.0, sigma).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn running_sigma_cases() {
        assert!(running_sigma(&[3.0; 100], 10).iter().all(|&s| s == 0.0));
        let alt: Vec<f64> = (0..5000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = running_sigma(&alt, 2000);
        assert_eq!(r.len(), 3001);
        assert!(r.iter().all(|&s| (s - 1.0).abs() < 1e-12));
        let noise = gaussian(20_000, 3.0, 5);
        assert!(running_sigma(&noise, 2000).iter().all(|&s| (s / 3.0 - 1.0).abs() < 0.05));
        assert!(running_sigma(&[1.0, 2.0], 5).is_empty());
    }

    #[test]
    fn decomposition_cases() {
        let a = gaussian(10_000, 2.0, 1);
        let d = variance_decomposition(&a, &vec![0.0; a.len()]);
        assert_eq!(d.sigma_total, d.sigma_a);
        let d = variance_decomposition(&a, &a);
        assert_relative_eq!(d.residual, 2.0 * d.sigma_a.powi(2), max_relative = 1e-9);
        let e = gaussian(10_000, 1.0, 2);
        assert!(variance_decomposition(&a, &e).relative_residual.abs() < 0.05);
    }

    #[test]
    fn kurtosis_cases() {
        let g = gaussianity(&gaussian(1_000_000, 1.0, 3), GAUSSIAN_KURTOSIS_THRESHOLD);
        assert!(g.is_gaussian, "{g:?}");
        let two: Vec<f64> = (0..10_000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let g = gaussianity(&two, GAUSSIAN_KURTOSIS_THRESHOLD);
        assert_relative_eq!(g.excess_kurtosis, -2.0, epsilon = 1e-9);
        assert!(!g.is_gaussian);
    }

    #[test]
    fn histogram_counts_and_csv() {
        let xs = gaussian(5000, 1.0, 4);
        let h = Histogram::freedman_diaconis(&xs);
        assert_eq!(h.total(), 5000);
        let back = Histogram::from_csv(&h.to_csv()).unwrap();
        assert_eq!(back.counts, h.counts);
        assert_eq!(back.bin_edges, h.bin_edges);
        let h = Histogram::freedman_diaconis(&[2.0; 10]);
        assert_eq!(h.counts, vec![10]);
    }

    proptest! {
        #[test]
        fn merge_matches_sequential(xs in prop::collection::vec(-100.0f64..100.0, 2..200), cut in 0usize..200) {
            let cut = cut.min(xs.len());
            let whole = Moments::from_slice(&xs);
            let merged = Moments::from_slice(&xs[..cut]).merge(&Moments::from_slice(&xs[cut..]));
            prop_assert_eq!(whole.n, merged.n);
            let tol = |a: f64| 1e-8 * a.abs().max(1.0);
            prop_assert!((whole.mean() - merged.mean()).abs() <= tol(whole.mean()));
            prop_assert!((whole.variance() - merged.variance()).abs() <= tol(whole.variance()));
            prop_assert!((whole.excess_kurtosis() - merged.excess_kurtosis()).abs() <= 1e-6 * whole.excess_kurtosis().abs().max(1.0));
        }

        #[test]
        fn translation_and_scaling(xs in prop::collection::vec(-10.0f64..10.0, 3..100), shift in -50.0f64..50.0, c in 0.1f64..10.0) {
            let base = series_stats(&xs);
            prop_assume!(base.variance > 1e-6);
            let moved = series_stats(&xs.iter().map(|x| x + shift).collect::<Vec<_>>());
            let scaled = series_stats(&xs.iter().map(|x| x * c).collect::<Vec<_>>());
            prop_assert!((moved.variance - base.variance).abs() <= 1e-8 * base.variance.max(1.0));
            prop_assert!((moved.excess_kurtosis - base.excess_kurtosis).abs() <= 1e-6);
            prop_assert!((scaled.variance - c * c * base.variance).abs() <= 1e-9 * (c * c * base.variance).max(1.0));
        }

        #[test]
        fn histogram_conserves_count(xs in prop::collection::vec(-1e3f64..1e3, 1..300)) {
            let h = Histogram::freedman_diaconis(&xs);
            prop_assert_eq!(h.total(), xs.len() as u64);
            prop_assert!(h.bin_edges.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
