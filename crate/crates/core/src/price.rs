//! Reserve-price functions `R(x)` of the total imbalance `x`, plus the
//! calculus used to reason about them: merit-order averaging, the regulatory
//! cut-off, finite-difference derivative checks and expectation under
//! symmetric broadening.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, PriceError};

/// Default cut-off safety factor.
pub const CUTOFF_FACTOR: f64 = 1.25;

/// One block of reserve offered at a constant marginal price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderStep {
    pub capacity: f64,
    pub price: f64,
}

/// Merit-order ladder. Each side lists steps in activation order, walking
/// away from zero imbalance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeritLadder {
    positive: Vec<LadderStep>,
    negative: Vec<LadderStep>,
    #[serde(skip)]
    pos_cum: Vec<(f64, f64)>,
    #[serde(skip)]
    neg_cum: Vec<(f64, f64)>,
}

fn cumulate(steps: &[LadderStep]) -> Vec<(f64, f64)> {
    let (mut cap, mut cost) = (0.0, 0.0);
    steps
        .iter()
        .map(|s| {
            cap += s.capacity;
            cost += s.capacity * s.price;
            (cap, cost)
        })
        .collect()
}

impl MeritLadder {
    /// Validates merit order: marginal price non-decreasing in `x` across the
    /// whole ladder, i.e. rising outward on the positive side and falling
    /// outward on the negative side.
    pub fn new(positive: Vec<LadderStep>, negative: Vec<LadderStep>) -> Result<Self, PriceError> {
        for s in positive.iter().chain(&negative) {
            if !(s.capacity > 0.0) || !s.capacity.is_finite() || !s.price.is_finite() {
                return Err(PriceError::Ladder(format!("bad step {s:?}")));
            }
        }
        if positive.is_empty() && negative.is_empty() {
            return Err(PriceError::Ladder("empty ladder".into()));
        }
        if positive.windows(2).any(|w| w[1].price < w[0].price) {
            return Err(PriceError::Ladder("positive side prices must not decrease outward".into()));
        }
        if negative.windows(2).any(|w| w[1].price > w[0].price) {
            return Err(PriceError::Ladder("negative side prices must not increase outward".into()));
        }
        if let (Some(p), Some(n)) = (positive.first(), negative.first()) {
            if n.price > p.price {
                return Err(PriceError::Ladder("p(0-) exceeds p(0+)".into()));
            }
        }
        let pos_cum = cumulate(&positive);
        let neg_cum = cumulate(&negative);
        Ok(MeritLadder { positive, negative, pos_cum, neg_cum })
    }

    /// Ladder with the same constant marginal price on both sides.
    pub fn constant(price: f64, capacity_each_side: f64) -> Self {
        let s = LadderStep { capacity: capacity_each_side, price };
        MeritLadder::new(vec![s], vec![s]).expect("valid constant ladder")
    }

    pub fn positive_steps(&self) -> &[LadderStep] {
        &self.positive
    }

    pub fn negative_steps(&self) -> &[LadderStep] {
        &self.negative
    }

    pub fn positive_capacity(&self) -> f64 {
        self.pos_cum.last().map_or(0.0, |c| c.0)
    }

    pub fn negative_capacity(&self) -> f64 {
        self.neg_cum.last().map_or(0.0, |c| c.0)
    }

    fn side(&self, x: f64) -> (&[LadderStep], &[(f64, f64)]) {
        if x >= 0.0 {
            (&self.positive, &self.pos_cum)
        } else {
            (&self.negative, &self.neg_cum)
        }
    }

    fn check_domain(&self, x: f64) -> Result<(), PriceError> {
        let cap = if x >= 0.0 { self.positive_capacity() } else { self.negative_capacity() };
        let over = x.abs() - cap;
        if over > 0.0 {
            return Err(PriceError::Exhausted { imbalance: x, overshoot: over });
        }
        Ok(())
    }

    fn step_index(cum: &[(f64, f64)], u: f64) -> usize {
        cum.partition_point(|&(cap, _)| cap < u).min(cum.len() - 1)
    }

    /// Marginal price `p(x)`; at zero this is the midpoint of both sides.
    pub fn marginal(&self, x: f64) -> Result<f64, PriceError> {
        self.check_domain(x)?;
        if x == 0.0 {
            return Ok(self.price_at_zero());
        }
        let (steps, cum) = self.side(x);
        Ok(steps[Self::step_index(cum, x.abs())].price)
    }

    fn price_at_zero(&self) -> f64 {
        match (self.positive.first(), self.negative.first()) {
            (Some(p), Some(n)) => 0.5 * (p.price + n.price),
            (Some(p), None) => p.price,
            (None, Some(n)) => n.price,
            (None, None) => unreachable!("validated non-empty"),
        }
    }

    /// Average price `R(x) = (∫₀ˣ p) / x`.
    pub fn average(&self, x: f64) -> Result<f64, PriceError> {
        self.check_domain(x)?;
        if x == 0.0 {
            return Ok(self.price_at_zero());
        }
        let (steps, cum) = self.side(x);
        let u = x.abs();
        let k = Self::step_index(cum, u);
        let (prev_cap, prev_cost) = if k == 0 { (0.0, 0.0) } else { cum[k - 1] };
        let cost = prev_cost + (u - prev_cap) * steps[k].price;
        // ∫₀ˣ p = -cost for x < 0, and dividing by x = -u gives cost/u either way.
        Ok(cost / u)
    }

    /// Loads a ladder from CSV with columns `sign,capacity_mw,marginal_price`.
    /// Rows of each sign are taken in file order as the activation order.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, PriceError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| PriceError::Ladder(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| PriceError::Ladder(format!("missing column `{name}`")))
        };
        let (ci_sign, ci_cap, ci_price) = (col("sign")?, col("capacity_mw")?, col("marginal_price")?);
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| PriceError::Ladder(e.to_string()))?;
            let bad = |what: &str| PriceError::Ladder(format!("row {}: bad {what}", line + 1));
            let capacity: f64 = rec.get(ci_cap).and_then(|v| v.parse().ok()).ok_or_else(|| bad("capacity_mw"))?;
            let price: f64 = rec.get(ci_price).and_then(|v| v.parse().ok()).ok_or_else(|| bad("marginal_price"))?;
            let step = LadderStep { capacity, price };
            match rec.get(ci_sign) {
                Some("+") | Some("pos") | Some("positive") => pos.push(step),
                Some("-") | Some("neg") | Some("negative") => neg.push(step),
                _ => return Err(bad("sign")),
            }
        }
        MeritLadder::new(pos, neg)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, PriceError> {
        let f = std::fs::File::open(path).map_err(|e| PriceError::Ladder(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(f)
    }

    fn to_inline(&self) -> String {
        let side = |steps: &[LadderStep]| {
            steps.iter().map(|s| format!("{:?}@{:?}", s.capacity, s.price)).collect::<Vec<_>>().join(",")
        };
        format!("pos={};neg={}", side(&self.positive), side(&self.negative))
    }

    fn parse_inline(text: &str) -> Result<Self, PriceError> {
        let bad = || PriceError::Ladder(format!("bad inline ladder `{text}`"));
        let parse_side = |s: &str| -> Result<Vec<LadderStep>, PriceError> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(',')
                .map(|item| {
                    let (c, p) = item.split_once('@').ok_or_else(bad)?;
                    Ok(LadderStep {
                        capacity: c.trim().parse().map_err(|_| bad())?,
                        price: p.trim().parse().map_err(|_| bad())?,
                    })
                })
                .collect()
        };
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for part in text.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            match k.trim() {
                "pos" => pos = parse_side(v.trim())?,
                "neg" => neg = parse_side(v.trim())?,
                _ => return Err(bad()),
            }
        }
        MeritLadder::new(pos, neg)
    }

    /// Marginal price smoothed by linear interpolation between step midpoints
    /// (linear extrapolation past the outermost midpoints). Returns `(p, p')`.
    fn smoothed_marginal(&self, x: f64) -> (f64, f64) {
        let (nodes, sign) = self.smoothing_nodes(x);
        let u = x.abs();
        let (v, dv) = interpolate(&nodes, u);
        // q(u) = p(sign·u)  =>  p'(x) = sign·q'(u)
        (v, sign * dv)
    }

    fn smoothing_nodes(&self, x: f64) -> (Vec<(f64, f64)>, f64) {
        let (steps, cum) = self.side(x);
        let nodes = steps
            .iter()
            .zip(cum)
            .map(|(s, &(cap, _))| (cap - 0.5 * s.capacity, s.price))
            .collect();
        (nodes, if x >= 0.0 { 1.0 } else { -1.0 })
    }

    /// Average price of the smoothed ladder, `(∫₀ˣ p̃) / x`.
    pub fn smoothed_average(&self, x: f64) -> Result<f64, PriceError> {
        self.check_domain(x)?;
        if x == 0.0 {
            return Ok(self.smoothed_marginal(0.0).0);
        }
        let (nodes, _) = self.smoothing_nodes(x);
        let u = x.abs();
        // Exact integral of the piecewise-linear interpolant on [0, u].
        let mut knots: Vec<f64> = vec![0.0];
        knots.extend(nodes.iter().map(|n| n.0).filter(|&m| m > 0.0 && m < u));
        knots.push(u);
        let integral: f64 = knots
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (interpolate(&nodes, w[0]).0 + interpolate(&nodes, w[1]).0))
            .sum();
        Ok(integral / u)
    }

    /// Signed step boundaries, where `R` has kinks.
    fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pos_cum.iter().map(|c| c.0).collect();
        b.extend(self.neg_cum.iter().map(|c| -c.0));
        b.push(0.0);
        b
    }
}

/// Piecewise-linear interpolation with linear extrapolation. Returns value and slope.
fn interpolate(nodes: &[(f64, f64)], u: f64) -> (f64, f64) {
    if nodes.len() == 1 {
        return (nodes[0].1, 0.0);
    }
    let k = nodes.partition_point(|n| n.0 < u).clamp(1, nodes.len() - 1);
    let (x0, y0) = nodes[k - 1];
    let (x1, y1) = nodes[k];
    let slope = (y1 - y0) / (x1 - x0);
    (y0 + slope * (u - x0), slope)
}

/// The family of reserve-price functions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PriceSpec {
    /// `R(x) = x`.
    Identity,
    /// `R(x) = c·x/n`.
    ScaledLinear { c: f64, n: usize },
    /// `R(x) = intraday + slope·(x - a_star)`.
    Affine { intraday: f64, slope: f64, a_star: f64 },
    /// `R(x) = x + c2·x²`.
    Quadratic { c2: f64 },
    MeritOrder(MeritLadder),
    /// Regulatory floor/ceiling around the inner price, see [`apply_cutoff`].
    Cutoff { inner: Box<PriceSpec>, i_avg: f64, factor: f64 },
}

impl PriceSpec {
    pub fn eval(&self, x: f64) -> Result<f64, PriceError> {
        eval_price(self, x)
    }

    /// Imbalance range over which `R` is non-decreasing, if bounded.
    pub fn monotone_range(&self) -> (f64, f64) {
        match self {
            PriceSpec::Quadratic { c2 } if *c2 > 0.0 => (-0.5 / c2, f64::INFINITY),
            PriceSpec::Quadratic { c2 } if *c2 < 0.0 => (f64::NEG_INFINITY, -0.5 / c2),
            PriceSpec::Cutoff { inner, .. } => inner.monotone_range(),
            PriceSpec::MeritOrder(l) => (-l.negative_capacity(), l.positive_capacity()),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Points where `R` or `R'` may be discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            PriceSpec::MeritOrder(l) => l.breakpoints(),
            PriceSpec::Cutoff { inner, .. } => {
                let mut b = inner.breakpoints();
                b.push(0.0);
                b
            }
            _ => Vec::new(),
        }
    }

    /// Canonical text form (see [`PriceSpec::parse`]).
    pub fn to_text(&self) -> String {
        match self {
            PriceSpec::Identity => "identity".into(),
            PriceSpec::ScaledLinear { c, n } => format!("scaled_linear:{c:?}:{n}"),
            PriceSpec::Affine { intraday, slope, a_star } => format!("affine:{intraday:?}:{slope:?}:{a_star:?}"),
            PriceSpec::Quadratic { c2 } => format!("quadratic:{c2:?}"),
            PriceSpec::MeritOrder(l) => format!("merit:{}", l.to_inline()),
            PriceSpec::Cutoff { inner, i_avg, factor } => format!("cutoff:{i_avg:?}:{factor:?}:{}", inner.to_text()),
        }
    }

    /// Parses the text form:
    ///
    /// | text | function |
    /// |---|---|
    /// | `identity` | `x` |
    /// | `standard` | `x/N` (needs `n_agents`) |
    /// | `scaled_linear:c[:n]` | `c·x/n`, `n` defaults to `n_agents` |
    /// | `affine:I:c1:a_star` | `I + c1(x - a_star)` |
    /// | `quadratic:c2` | `x + c2·x²` |
    /// | `merit:pos=cap@p,...;neg=cap@p,...` | merit-order average |
    /// | `merit_file:path.csv` | merit-order average, ladder from CSV |
    /// | `cutoff:i_avg:factor:<inner>` | cut-off wrapper |
    pub fn parse(text: &str, n_agents: usize) -> Result<Self, ConfigError> {
        let text = text.trim();
        let bad = |r: String| ConfigError::invalid("price", format!("{r}: `{text}`"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")));
        let (head, rest) = match text.split_once(':') {
            Some((h, r)) => (h.trim(), Some(r)),
            None => (text, None),
        };
        let args = |want: usize| -> Result<Vec<f64>, ConfigError> {
            let r = rest.ok_or_else(|| bad(format!("expected {want} arguments")))?;
            let v = r.split(':').map(num).collect::<Result<Vec<_>, _>>()?;
            if v.len() != want {
                return Err(bad(format!("expected {want} arguments")));
            }
            Ok(v)
        };
        match head {
            "identity" => Ok(PriceSpec::Identity),
            "standard" => Ok(PriceSpec::ScaledLinear { c: 1.0, n: n_agents }),
            "scaled_linear" => {
                let r = rest.ok_or_else(|| bad("expected scaled_linear:c[:n]".into()))?;
                match r.split_once(':') {
                    Some((c, n)) => Ok(PriceSpec::ScaledLinear {
                        c: num(c)?,
                        n: n.trim().parse().map_err(|_| bad("bad n".into()))?,
                    }),
                    None => Ok(PriceSpec::ScaledLinear { c: num(r)?, n: n_agents }),
                }
            }
            "affine" => {
                let v = args(3)?;
                Ok(PriceSpec::Affine { intraday: v[0], slope: v[1], a_star: v[2] })
            }
            "quadratic" => Ok(PriceSpec::Quadratic { c2: args(1)?[0] }),
            "merit" => {
                let r = rest.ok_or_else(|| bad("missing ladder".into()))?;
                MeritLadder::parse_inline(r).map(PriceSpec::MeritOrder).map_err(|e| bad(e.to_string()))
            }
            "merit_file" => {
                let r = rest.ok_or_else(|| bad("missing path".into()))?;
                MeritLadder::from_csv_path(Path::new(r.trim()))
                    .map(PriceSpec::MeritOrder)
                    .map_err(|e| bad(e.to_string()))
            }
            "cutoff" => {
                let r = rest.ok_or_else(|| bad("expected cutoff:i_avg:factor:inner".into()))?;
                let mut it = r.splitn(3, ':');
                let i_avg = num(it.next().unwrap_or_default())?;
                let factor = num(it.next().ok_or_else(|| bad("missing factor".into()))?)?;
                if !(factor > 0.0) {
                    return Err(bad("factor must be positive".into()));
                }
                let inner = PriceSpec::parse(it.next().ok_or_else(|| bad("missing inner".into()))?, n_agents)?;
                Ok(PriceSpec::Cutoff { inner: Box::new(inner), i_avg, factor })
            }
            _ => Err(bad("unknown price family".into())),
        }
    }
}

/// Evaluates `R(x)`.
pub fn eval_price(spec: &PriceSpec, x: f64) -> Result<f64, PriceError> {
    Ok(match spec {
        PriceSpec::Identity => x,
        PriceSpec::ScaledLinear { c, n } => c * x / *n as f64,
        PriceSpec::Affine { intraday, slope, a_star } => intraday + slope * (x - a_star),
        PriceSpec::Quadratic { c2 } => x + c2 * x * x,
        PriceSpec::MeritOrder(ladder) => ladder.average(x)?,
        PriceSpec::Cutoff { inner, i_avg, factor } => apply_cutoff(eval_price(inner, x)?, x, *i_avg, *factor),
    })
}

/// Regulatory cut-off: for a shortage (`x > 0`) the price is at least
/// `factor·i_avg`, for a surplus (`x < 0`) at most `-factor·i_avg`.
pub fn apply_cutoff(inner_price: f64, x: f64, i_avg: f64, factor: f64) -> f64 {
    let bound = factor * i_avg;
    if x > 0.0 && inner_price < bound {
        bound
    } else if x < 0.0 && inner_price > -bound {
        -bound
    } else {
        inner_price
    }
}

/// Finite-difference derivatives of the smoothed merit-order average price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub x: f64,
    pub price: f64,
    pub d_price: f64,
    pub d2_price: f64,
    /// Smoothed marginal price and its slope at `x`.
    pub marginal: f64,
    pub d_marginal: f64,
    /// `p'(x) > 2p(x)/x` with `x` and `R(x)` of the same sign. Implies
    /// `R'' > 0` for `x > 0` and `R'' < 0` for `x < 0`.
    pub convexity_condition_holds: bool,
}

/// Default finite-difference step: `10⁻³` of the ladder's domain width.
pub fn default_step(ladder: &MeritLadder) -> f64 {
    1e-3 * (ladder.positive_capacity() + ladder.negative_capacity())
}

/// Central differences of the smoothed average price at `x`.
pub fn derivative_check(ladder: &MeritLadder, x: f64, h: f64) -> Result<DerivativeReport, PriceError> {
    if !(h > 0.0) {
        return Err(PriceError::Ladder("step must be positive".into()));
    }
    if x == 0.0 || (x - h).signum() != (x + h).signum() {
        return Err(PriceError::Ladder(format!("stencil around {x} crosses zero")));
    }
    let r = |y: f64| ladder.smoothed_average(y);
    let (rm, r0, rp) = (r(x - h)?, r(x)?, r(x + h)?);
    let d_price = (rp - rm) / (2.0 * h);
    let d2_price = (rp - 2.0 * r0 + rm) / (h * h);
    let (p, dp) = ladder.smoothed_marginal(x);
    let same_sign = r0 * x > 0.0 && p * x > 0.0;
    Ok(DerivativeReport {
        x,
        price: r0,
        d_price,
        d2_price,
        marginal: p,
        d_marginal: dp,
        convexity_condition_holds: same_sign && dp > 2.0 * p / x,
    })
}

/// Symmetric imbalance distribution around `A*` used for broadening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Broadening {
    /// Normal with standard deviation equal to the width.
    Gaussian,
    /// Uniform on `[A* - width, A* + width]`.
    Uniform,
}

/// Gaussian support is truncated at this many standard deviations.
const GAUSS_SPAN: f64 = 10.0;

/// `⟨R⟩ = ∫ P(x) R(x) dx` for each width, by adaptive Simpson quadrature
/// split at the price function's breakpoints.
pub fn broadening_expectation(
    spec: &PriceSpec,
    a_star: f64,
    widths: &[f64],
    dist: Broadening,
) -> Result<Vec<(f64, f64)>, PriceError> {
    if widths.iter().any(|&w| !(w > 0.0)) {
        return Err(PriceError::Quadrature("widths must be positive".into()));
    }
    let breaks = spec.breakpoints();
    widths
        .iter()
        .map(|&w| {
            let half = match dist {
                Broadening::Gaussian => GAUSS_SPAN * w,
                Broadening::Uniform => w,
            };
            let (lo, hi) = (a_star - half, a_star + half);
            // surface exhaustion before integrating
            spec.eval(lo)?;
            spec.eval(hi)?;
            let density = |x: f64| match dist {
                Broadening::Gaussian => {
                    let z = (x - a_star) / w;
                    (-0.5 * z * z).exp() / (w * (2.0 * std::f64::consts::PI).sqrt())
                }
                Broadening::Uniform => 0.5 / w,
            };
            let mut knots = vec![lo, a_star, hi];
            knots.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
            knots.sort_by(f64::total_cmp);
            knots.dedup();
            let mut total = 0.0;
            for seg in knots.windows(2) {
                // Evaluate just inside each panel so one-sided limits are used at jumps.
                let span = seg[1] - seg[0];
                let eps = span * 1e-12;
                let f = |x: f64| -> Result<f64, PriceError> {
                    let xc = x.clamp(seg[0] + eps, seg[1] - eps);
                    Ok(density(x) * spec.eval(xc)?)
                };
                total += adaptive_simpson(&f, seg[0], seg[1], 1e-12)?;
            }
            Ok((w, total))
        })
        .collect()
}

fn adaptive_simpson<F>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64, PriceError>
where
    F: Fn(f64) -> Result<f64, PriceError>,
{
    #[allow(clippy::too_many_arguments)]
    fn rec<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64, PriceError>
    where
        F: Fn(f64) -> Result<f64, PriceError>,
    {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm)?, f(rm)?);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return Ok(left + right + diff / 15.0);
        }
        Ok(rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
    // Start from a fixed subdivision so narrow features are not skipped.
    const PANELS: usize = 64;
    let h = (b - a) / PANELS as f64;
    let mut sum = 0.0;
    for k in 0..PANELS {
        let (x0, x1) = (a + k as f64 * h, if k + 1 == PANELS { b } else { a + (k + 1) as f64 * h });
        let (f0, fm, f1) = (f(x0)?, f(0.5 * (x0 + x1))?, f(x1)?);
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        sum += rec(f, x0, x1, f0, fm, f1, whole, tol / PANELS as f64, 40)?;
    }
    Ok(sum)
}
