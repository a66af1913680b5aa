//! Instantaneous transforms of a latent Gaussian process and their
//! Hermite-expansion machinery.
//!
//! For a transform G and standard normal X, the indicator 1{G(X) <= x}
//! expands in probabilists' Hermite polynomials with coefficients
//! J_q(x) = E[1{G(X) <= x} H_q(X)]. The Hermite rank (smallest q >= 1 with
//! J_q not identically zero) drives every limit theorem in this crate, and
//! the normalization d_{n,m}^2 = m! sum_{i,j<=n} rho(i-j)^m scales the
//! statistics. Coefficients are computed by integrating H_q(s) phi(s) over
//! the solved region {s : G(s) <= x} with adaptive Gauss–Legendre panels;
//! transforms supplied only as a callable fall back to a dense trapezoid
//! over the indicator (reduced accuracy, reported in the result).

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{cap_phi, hermite_poly, inv_phi, phi};
use crate::quad;
use crate::seed::{child_seed, SeedSpec};
use crate::sim::{simulate, GaussianModel};

/// Latent values beyond this contribute less than ~1e-16 of Gaussian mass;
/// all quadrature is clipped to [-CUTOFF, CUTOFF].
pub const INTEGRATION_CUTOFF: f64 = 8.5;

/// Absolute accuracy target for Gauss–Legendre coefficient quadrature.
const COEFF_TOL: f64 = 1e-10;

/// Step of the dense trapezoid fallback for callable-only transforms.
const TRAPEZOID_STEP: f64 = 1e-4;

/// A coefficient is "present" for rank detection when its sup over the
/// quantile grid exceeds this.
pub const RANK_THRESHOLD: f64 = 1e-6;

/// Quantile-grid size used by rank detection.
const RANK_GRID: usize = 201;

/// Largest n for which the exact double-sum normalization is the default.
pub const EXACT_SUM_DEFAULT_LIMIT: usize = 8192;

/// Monotone target distribution for quantile-transform subordinators:
/// G(x) = F^{-1}(Phi(x)), so G(X) has marginal F.
#[derive(Clone)]
pub struct QuantileMap {
    label: String,
    cdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    inv: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl QuantileMap {
    pub fn new(
        label: impl Into<String>,
        cdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        inv: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    ) -> Self {
        QuantileMap {
            label: label.into(),
            cdf,
            inv,
        }
    }

    /// Target N(mean, sd^2).
    pub fn normal(mean: f64, sd: f64) -> Self {
        let cdf = move |x: f64| cap_phi((x - mean) / sd);
        let inv = move |p: f64| mean + sd * inv_phi(p);
        QuantileMap::new(
            format!("normal(mean={mean}, sd={sd})"),
            Arc::new(cdf),
            Arc::new(inv),
        )
    }

    /// Two-component Gaussian mixture (1 - delta) N(0,1) + delta N(mu, sd^2);
    /// the inverse is solved by bisection on the monotone cdf.
    pub fn gaussian_mixture(delta: f64, mu: f64, sd: f64) -> Self {
        let cdf = move |x: f64| (1.0 - delta) * cap_phi(x) + delta * cap_phi((x - mu) / sd);
        let cdf_for_inv = cdf;
        let inv = move |p: f64| invert_monotone_cdf(&cdf_for_inv, p);
        QuantileMap::new(
            format!("mixture(delta={delta}, mu={mu}, sd={sd})"),
            Arc::new(cdf),
            Arc::new(inv),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Evaluate the target distribution function.
    pub fn cdf_at(&self, x: f64) -> f64 {
        (self.cdf)(x)
    }

    /// Evaluate the target quantile function.
    pub fn quantile_at(&self, p: f64) -> f64 {
        (self.inv)(p)
    }
}

impl std::fmt::Debug for QuantileMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "QuantileMap({})", self.label)
    }
}

/// Transform supplied only as a pointwise callable; no region solver, so
/// coefficient integrals use the dense-trapezoid fallback.
#[derive(Clone)]
pub struct CustomMap {
    label: String,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl CustomMap {
    pub fn new(label: impl Into<String>, eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>) -> Self {
        CustomMap {
            label: label.into(),
            eval,
        }
    }
}

impl std::fmt::Debug for CustomMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CustomMap({})", self.label)
    }
}

/// Instantaneous transform G applied to the latent Gaussian process.
#[derive(Debug, Clone)]
pub enum Subordinator {
    /// G(x) = x.
    Identity,
    /// G(x) = x + mu.
    MeanShift { mu: f64 },
    /// G(x) = sigma x, sigma > 0.
    Scale { sigma: f64 },
    /// G(x) = sigma x + mu, sigma > 0.
    Affine { sigma: f64, mu: f64 },
    /// G(x) = x^2.
    Square,
    /// G(x) = a x^2 + b x + c.
    AffineSquare { a: f64, b: f64, c: f64 },
    /// G(x) = a_pos x^2 for x >= 0, a_neg x^2 for x < 0 (both > 0).
    SplitSquare { a_pos: f64, a_neg: f64 },
    /// G(x) = F^{-1}(Phi(x)) for a monotone target cdf F.
    Quantile(QuantileMap),
    /// G(x) = Phi^{-1}(2 Phi(|x|) - 1): the folded value pushed back to a
    /// standard normal marginal. Even in x, so the rank is 2.
    FoldedToGaussian,
    /// Split-square value gaussianized through its own cdf, then shifted:
    /// G(x) = Phi^{-1}(F_split(split_a(x))) + mu with split_a as in
    /// `SplitSquare { a_pos: a, a_neg: 1 }`. Marginal N(mu, 1).
    SplitSquareToGaussian { a: f64, mu: f64 },
    /// Arbitrary callable; region unsolvable, coefficients via fallback.
    Custom(CustomMap),
}

/// Closed interval of latent values; endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }
}

/// Bisection for p = cdf(x) on a monotone cdf with unknown support.
fn invert_monotone_cdf(cdf: &impl Fn(f64) -> f64, p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut guard = 0;
    while cdf(lo) > p && guard < 2048 {
        lo *= 2.0;
        guard += 1;
    }
    let mut guard = 0;
    while cdf(hi) < p && guard < 2048 {
        hi *= 2.0;
        guard += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// cdf of the split-square value: P(split(X) <= y).
fn split_square_cdf(a_pos: f64, a_neg: f64, y: f64) -> f64 {
    if y < 0.0 {
        0.0
    } else {
        cap_phi((y / a_pos).sqrt()) + cap_phi((y / a_neg).sqrt()) - 1.0
    }
}

/// Quantile of the split-square value (bisection; cdf is strictly increasing
/// on [0, inf)).
fn split_square_quantile(a_pos: f64, a_neg: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0f64;
    let mut guard = 0;
    while split_square_cdf(a_pos, a_neg, hi) < p && guard < 2048 {
        hi *= 2.0;
        guard += 1;
    }
    let (mut lo, mut hi) = (0.0f64, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if split_square_cdf(a_pos, a_neg, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * (1.0 + mid) {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl Subordinator {
    /// Parameter-domain check.
    pub fn validate(&self) -> Result<()> {
        match self {
            Subordinator::Scale { sigma } | Subordinator::Affine { sigma, .. } => {
                if !(*sigma > 0.0) {
                    return Err(Error::domain(format!(
                        "scale parameter must be positive, got {sigma}"
                    )));
                }
            }
            Subordinator::SplitSquare { a_pos, a_neg } => {
                if !(*a_pos > 0.0 && *a_neg > 0.0) {
                    return Err(Error::domain(format!(
                        "split-square coefficients must be positive, got ({a_pos}, {a_neg})"
                    )));
                }
            }
            Subordinator::AffineSquare { a, b, .. } => {
                if *a == 0.0 && *b == 0.0 {
                    return Err(Error::domain(
                        "affine-square with a = b = 0 is a constant transform".to_string(),
                    ));
                }
            }
            Subordinator::SplitSquareToGaussian { a, .. } => {
                if !(*a > 0.0) {
                    return Err(Error::domain(format!(
                        "split-square-to-gaussian coefficient must be positive, got {a}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Short human-readable name for reports.
    pub fn label(&self) -> String {
        match self {
            Subordinator::Identity => "identity".to_string(),
            Subordinator::MeanShift { mu } => format!("mean_shift(mu={mu})"),
            Subordinator::Scale { sigma } => format!("scale(sigma={sigma})"),
            Subordinator::Affine { sigma, mu } => format!("affine(sigma={sigma}, mu={mu})"),
            Subordinator::Square => "square".to_string(),
            Subordinator::AffineSquare { a, b, c } => format!("affine_square(a={a}, b={b}, c={c})"),
            Subordinator::SplitSquare { a_pos, a_neg } => {
                format!("split_square(a_pos={a_pos}, a_neg={a_neg})")
            }
            Subordinator::Quantile(map) => format!("quantile({})", map.label),
            Subordinator::FoldedToGaussian => "folded_to_gaussian".to_string(),
            Subordinator::SplitSquareToGaussian { a, mu } => {
                format!("split_square_to_gaussian(a={a}, mu={mu})")
            }
            Subordinator::Custom(map) => format!("custom({})", map.label),
        }
    }

    /// Apply the transform to one latent value.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Subordinator::Identity => x,
            Subordinator::MeanShift { mu } => x + mu,
            Subordinator::Scale { sigma } => sigma * x,
            Subordinator::Affine { sigma, mu } => sigma * x + mu,
            Subordinator::Square => x * x,
            Subordinator::AffineSquare { a, b, c } => a * x * x + b * x + c,
            Subordinator::SplitSquare { a_pos, a_neg } => {
                if x >= 0.0 {
                    a_pos * x * x
                } else {
                    a_neg * x * x
                }
            }
            Subordinator::Quantile(map) => (map.inv)(cap_phi(x)),
            Subordinator::FoldedToGaussian => {
                let p = (2.0 * cap_phi(x.abs()) - 1.0).clamp(0.0, 1.0);
                inv_phi(p)
            }
            Subordinator::SplitSquareToGaussian { a, mu } => {
                let y = if x >= 0.0 { a * x * x } else { x * x };
                mu + inv_phi(split_square_cdf(*a, 1.0, y).clamp(0.0, 1.0))
            }
            Subordinator::Custom(map) => (map.eval)(x),
        }
    }

    /// Solve {s : G(s) <= level} as disjoint sorted intervals, or `None` when
    /// the transform is callable-only.
    pub fn region(&self, level: f64) -> Option<Vec<Interval>> {
        let neg = f64::NEG_INFINITY;
        let pos = f64::INFINITY;
        let r = match self {
            Subordinator::Identity => vec![Interval::new(neg, level)],
            Subordinator::MeanShift { mu } => vec![Interval::new(neg, level - mu)],
            Subordinator::Scale { sigma } => vec![Interval::new(neg, level / sigma)],
            Subordinator::Affine { sigma, mu } => vec![Interval::new(neg, (level - mu) / sigma)],
            Subordinator::Square => {
                if level < 0.0 {
                    vec![]
                } else {
                    let r = level.sqrt();
                    vec![Interval::new(-r, r)]
                }
            }
            Subordinator::AffineSquare { a, b, c } => {
                // a s^2 + b s + (c - level) <= 0
                let c0 = c - level;
                if *a == 0.0 {
                    if *b > 0.0 {
                        vec![Interval::new(neg, -c0 / b)]
                    } else if *b < 0.0 {
                        vec![Interval::new(-c0 / b, pos)]
                    } else if c0 <= 0.0 {
                        vec![Interval::new(neg, pos)]
                    } else {
                        vec![]
                    }
                } else {
                    let disc = b * b - 4.0 * a * c0;
                    if *a > 0.0 {
                        if disc < 0.0 {
                            vec![]
                        } else {
                            let sq = disc.sqrt();
                            vec![Interval::new((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a))]
                        }
                    } else if disc < 0.0 {
                        vec![Interval::new(neg, pos)]
                    } else {
                        let sq = disc.sqrt();
                        let r1 = (-b + sq) / (2.0 * a);
                        let r2 = (-b - sq) / (2.0 * a);
                        let (r1, r2) = (r1.min(r2), r1.max(r2));
                        vec![Interval::new(neg, r1), Interval::new(r2, pos)]
                    }
                }
            }
            Subordinator::SplitSquare { a_pos, a_neg } => {
                if level < 0.0 {
                    vec![]
                } else {
                    vec![Interval::new(-(level / a_neg).sqrt(), (level / a_pos).sqrt())]
                }
            }
            Subordinator::Quantile(map) => {
                let p = (map.cdf)(level);
                if p <= 0.0 {
                    vec![]
                } else if p >= 1.0 {
                    vec![Interval::new(neg, pos)]
                } else {
                    vec![Interval::new(neg, inv_phi(p))]
                }
            }
            Subordinator::FoldedToGaussian => {
                let q = 0.5 * (1.0 + cap_phi(level));
                if q >= 1.0 {
                    vec![Interval::new(neg, pos)]
                } else {
                    let r = inv_phi(q);
                    vec![Interval::new(-r, r)]
                }
            }
            Subordinator::SplitSquareToGaussian { a, mu } => {
                let p = cap_phi(level - mu);
                if p <= 0.0 {
                    vec![]
                } else if p >= 1.0 {
                    vec![Interval::new(neg, pos)]
                } else {
                    let y = split_square_quantile(*a, 1.0, p);
                    vec![Interval::new(-y.sqrt(), (y / a).sqrt())]
                }
            }
            Subordinator::Custom(_) => return None,
        };
        Some(r)
    }

    /// Marginal distribution function of G(X), X ~ N(0, 1).
    pub fn marginal_cdf(&self, x: f64) -> f64 {
        match self {
            Subordinator::Identity => cap_phi(x),
            Subordinator::MeanShift { mu } => cap_phi(x - mu),
            Subordinator::Scale { sigma } => cap_phi(x / sigma),
            Subordinator::Affine { sigma, mu } => cap_phi((x - mu) / sigma),
            Subordinator::Square => {
                if x < 0.0 {
                    0.0
                } else {
                    2.0 * cap_phi(x.sqrt()) - 1.0
                }
            }
            Subordinator::SplitSquare { a_pos, a_neg } => split_square_cdf(*a_pos, *a_neg, x),
            Subordinator::Quantile(map) => (map.cdf)(x).clamp(0.0, 1.0),
            Subordinator::FoldedToGaussian => cap_phi(x),
            Subordinator::SplitSquareToGaussian { mu, .. } => cap_phi(x - mu),
            Subordinator::AffineSquare { .. } => {
                let region = self.region(x).expect("affine-square region is solvable");
                gaussian_measure(&region)
            }
            Subordinator::Custom(map) => {
                indicator_trapezoid(&|s| (map.eval)(s) <= x, phi).clamp(0.0, 1.0)
            }
        }
    }

    /// Marginal quantile of G(X) at level p.
    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Subordinator::Identity => inv_phi(p),
            Subordinator::MeanShift { mu } => inv_phi(p) + mu,
            Subordinator::Scale { sigma } => sigma * inv_phi(p),
            Subordinator::Affine { sigma, mu } => sigma * inv_phi(p) + mu,
            Subordinator::Square => inv_phi(0.5 * (1.0 + p)).powi(2),
            Subordinator::SplitSquare { a_pos, a_neg } => split_square_quantile(*a_pos, *a_neg, p),
            Subordinator::Quantile(map) => (map.inv)(p),
            Subordinator::FoldedToGaussian => inv_phi(p),
            Subordinator::SplitSquareToGaussian { mu, .. } => mu + inv_phi(p),
            Subordinator::AffineSquare { .. } | Subordinator::Custom(_) => {
                invert_monotone_cdf(&|x| self.marginal_cdf(x), p)
            }
        }
    }

    /// Evenly spaced marginal quantiles at levels 0.005 ..= 0.995.
    pub fn quantile_grid(&self, count: usize) -> Vec<f64> {
        debug_assert!(count >= 2);
        if let Subordinator::Custom(map) = self {
            // One dense pass: weighted empirical quantiles of eval under phi.
            let n = ((2.0 * INTEGRATION_CUTOFF) / TRAPEZOID_STEP) as usize;
            let h = 2.0 * INTEGRATION_CUTOFF / n as f64;
            let mut pairs: Vec<(f64, f64)> = (0..=n)
                .map(|i| {
                    let s = -INTEGRATION_CUTOFF + i as f64 * h;
                    ((map.eval)(s), phi(s) * h)
                })
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = pairs.iter().map(|p| p.1).sum();
            let mut out = Vec::with_capacity(count);
            let mut acc = 0.0;
            let mut idx = 0;
            for i in 0..count {
                let level = grid_level(i, count) * total;
                while idx < pairs.len() - 1 && acc + pairs[idx].1 < level {
                    acc += pairs[idx].1;
                    idx += 1;
                }
                out.push(pairs[idx].0);
            }
            return out;
        }
        (0..count).map(|i| self.quantile(grid_level(i, count))).collect()
    }
}

fn grid_level(i: usize, count: usize) -> f64 {
    0.005 + 0.99 * i as f64 / (count - 1) as f64
}

/// Standard normal measure of a union of disjoint intervals.
pub fn gaussian_measure(region: &[Interval]) -> f64 {
    region
        .iter()
        .map(|iv| (cap_phi(iv.hi) - cap_phi(iv.lo)).max(0.0))
        .sum()
}

/// How a Hermite coefficient was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffMethod {
    /// Adaptive Gauss–Legendre panels over the solved region.
    GaussLegendre,
    /// Dense trapezoid over the indicator (reduced accuracy).
    Trapezoid,
}

/// One Hermite coefficient value with its computation method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HermiteCoeff {
    pub value: f64,
    pub method: CoeffMethod,
}

/// J_q(x) = E[1{G(X) <= x} H_q(X)]: integrate H_q(s) phi(s) over the region
/// {G <= x} clipped to [-8.5, 8.5], adaptively to absolute accuracy 1e-10.
/// Callable-only transforms use the dense trapezoid fallback and say so.
pub fn hermite_coeff(g: &Subordinator, q: u32, x: f64) -> Result<HermiteCoeff> {
    g.validate()?;
    match g.region(x) {
        Some(region) => {
            let clipped: Vec<(f64, f64)> = region
                .iter()
                .map(|iv| {
                    (
                        iv.lo.max(-INTEGRATION_CUTOFF),
                        iv.hi.min(INTEGRATION_CUTOFF),
                    )
                })
                .filter(|(lo, hi)| hi > lo)
                .collect();
            let tol = COEFF_TOL / clipped.len().max(1) as f64;
            let mut value = 0.0;
            for (lo, hi) in clipped {
                let mut f = |s: f64| hermite_poly(q, s) * phi(s);
                let (v, _converged) = quad::adaptive(&mut f, lo, hi, tol);
                value += v;
            }
            Ok(HermiteCoeff {
                value,
                method: CoeffMethod::GaussLegendre,
            })
        }
        None => {
            let eval = match g {
                Subordinator::Custom(map) => map.eval.clone(),
                _ => unreachable!("only Custom lacks a region solver"),
            };
            let value =
                indicator_trapezoid(&|s| (eval)(s) <= x, |s| hermite_poly(q, s) * phi(s));
            Ok(HermiteCoeff {
                value,
                method: CoeffMethod::Trapezoid,
            })
        }
    }
}

/// Trapezoid rule for w(s)·1{inside(s)} over [-CUTOFF, CUTOFF] with step 1e-4.
///
/// A plain node-sampled indicator charges each region boundary with an O(step)
/// error — large enough to swamp rank detection, whose threshold must separate
/// genuinely zero coefficients from present ones. Instead, every cell whose
/// endpoints disagree gets its switch point located by bisection (to ~1e-16)
/// and only the included sub-cell is integrated, so a boundary contributes
/// machine-level error and the total error is the smooth-integrand O(step^2).
/// Included intervals narrower than one cell are still missed; that is the
/// documented resolution limit of the callable-only fallback.
fn indicator_trapezoid(inside: &dyn Fn(f64) -> bool, mut w: impl FnMut(f64) -> f64) -> f64 {
    let a = -INTEGRATION_CUTOFF;
    let b = INTEGRATION_CUTOFF;
    let n = ((b - a) / TRAPEZOID_STEP).ceil() as usize;
    let h = (b - a) / n as f64;
    let mut total = 0.0;
    let mut s_prev = a;
    let mut in_prev = inside(a);
    for i in 1..=n {
        let s_cur = if i == n { b } else { a + i as f64 * h };
        let in_cur = inside(s_cur);
        if in_prev && in_cur {
            total += 0.5 * (w(s_prev) + w(s_cur)) * (s_cur - s_prev);
        } else if in_prev != in_cur {
            let (mut lo, mut hi) = (s_prev, s_cur);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if inside(mid) == in_prev {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let cross = 0.5 * (lo + hi);
            if in_prev {
                total += 0.5 * (w(s_prev) + w(cross)) * (cross - s_prev);
            } else {
                total += 0.5 * (w(cross) + w(s_cur)) * (s_cur - cross);
            }
        }
        s_prev = s_cur;
        in_prev = in_cur;
    }
    total
}

/// Hermite rank of a transform plus its coefficient function.
#[derive(Debug, Clone)]
pub struct HermiteInfo {
    /// Smallest q >= 1 whose coefficient sup exceeds [`RANK_THRESHOLD`].
    pub rank: u32,
    /// How far the scan went (diagnostics; rank <= qmax_scanned).
    pub qmax_scanned: u32,
    /// sup |J_rank| over the detection grid.
    pub grid_sup: f64,
    transform: Subordinator,
}

impl HermiteInfo {
    /// Coefficient J_q(x) of the stored transform.
    pub fn coeff(&self, q: u32, x: f64) -> Result<HermiteCoeff> {
        hermite_coeff(&self.transform, q, x)
    }

    pub fn transform(&self) -> &Subordinator {
        &self.transform
    }
}

/// Detect the Hermite rank: scan q = 1, 2, ... over a 201-point marginal
/// quantile grid (levels 0.005 ..= 0.995) until sup |J_q| > 1e-6.
pub fn hermite_rank(g: &Subordinator, qmax: u32) -> Result<HermiteInfo> {
    g.validate()?;
    if qmax < 1 {
        return Err(Error::domain("qmax must be >= 1".to_string()));
    }
    let grid = g.quantile_grid(RANK_GRID);
    for q in 1..=qmax {
        let mut sup = 0.0f64;
        for &x in &grid {
            let c = hermite_coeff(g, q, x)?;
            sup = sup.max(c.value.abs());
        }
        if sup > RANK_THRESHOLD {
            return Ok(HermiteInfo {
                rank: q,
                qmax_scanned: q,
                grid_sup: sup,
                transform: g.clone(),
            });
        }
    }
    Err(Error::RankNotFound {
        qmax,
        threshold: RANK_THRESHOLD,
    })
}

/// Which formula produced a [`Normalization`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationSource {
    ExactDoubleSum,
    AsymptoticFormula,
    Estimated,
}

/// Requested normalization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationMode {
    Exact,
    Asymptotic,
}

/// The scale d_{n,m} dividing the statistics, with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Normalization {
    pub n: usize,
    pub m: u32,
    /// Hurst index of the order-m Hermite limit process: 1 - m D / 2.
    pub hurst: f64,
    /// Constant limit of the slowly varying factor of rho.
    pub l_const: f64,
    /// d_{n,m} itself (not squared).
    pub value: f64,
    pub source: NormalizationSource,
}

fn factorial(m: u32) -> f64 {
    (1..=m as u64).map(|i| i as f64).product()
}

/// Compute d_{n,m} for a long-memory model.
///
/// Exact mode: d^2 = m! * sum_{i,j<=n} rho(i-j)^m, evaluated in O(n) via the
/// lag-count form m! (n + 2 sum_k (n-k) rho(k)^m). Asymptotic mode:
/// d^2 = (2 m! / ((1-mD)(2-mD))) n^{2-mD} C^m. Requires m D < 1.
pub fn normalization_dn(
    n: usize,
    m: u32,
    model: &GaussianModel,
    mode: NormalizationMode,
) -> Result<Normalization> {
    model.validate()?;
    if n < 2 {
        return Err(Error::domain(format!("n must be >= 2, got {n}")));
    }
    if m < 1 {
        return Err(Error::domain("Hermite order m must be >= 1".to_string()));
    }
    let mem = model.memory().ok_or_else(|| {
        Error::domain(format!(
            "model {model} has no long-memory parameterization (D >= 1), so d_{{n,m}} is undefined"
        ))
    })?;
    let md = m as f64 * mem.decay_d;
    if md >= 1.0 {
        return Err(Error::LongMemory {
            m,
            d: mem.decay_d,
            product: md,
        });
    }
    let d_squared = match mode {
        NormalizationMode::Exact => {
            let rho = model.autocov_vec(n);
            let mut sum = n as f64; // k = 0 term: n * rho(0)^m
            for (k, &r) in rho.iter().enumerate().skip(1) {
                sum += 2.0 * (n - k) as f64 * r.powi(m as i32);
            }
            factorial(m) * sum
        }
        NormalizationMode::Asymptotic => {
            2.0 * factorial(m) / ((1.0 - md) * (2.0 - md))
                * (n as f64).powf(2.0 - md)
                * mem.l_const.powi(m as i32)
        }
    };
    if !(d_squared > 0.0) {
        return Err(Error::degenerate(format!(
            "normalization d^2 = {d_squared} is not positive"
        )));
    }
    Ok(Normalization {
        n,
        m,
        hurst: 1.0 - 0.5 * md,
        l_const: mem.l_const,
        value: d_squared.sqrt(),
        source: match mode {
            NormalizationMode::Exact => NormalizationSource::ExactDoubleSum,
            NormalizationMode::Asymptotic => NormalizationSource::AsymptoticFormula,
        },
    })
}

/// Exact double sum for n up to [`EXACT_SUM_DEFAULT_LIMIT`], asymptotic
/// formula beyond.
pub fn default_normalization(n: usize, m: u32, model: &GaussianModel) -> Result<Normalization> {
    let mode = if n <= EXACT_SUM_DEFAULT_LIMIT {
        NormalizationMode::Exact
    } else {
        NormalizationMode::Asymptotic
    };
    normalization_dn(n, m, model, mode)
}

/// Monte Carlo summary of the reduction-principle residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReductionReport {
    pub n: usize,
    pub m: u32,
    pub reps: usize,
    /// MC mean of sup_{l<=n, x in grid} |d_{n,m}^{-1} sum_{j<=l}
    /// (1{G(X_j) <= x} - sum_{q<=m} J_q(x)/q! H_q(X_j))|.
    pub mean_sup: f64,
}

/// Measure how completely the order-m Hermite expansion captures the
/// indicator empirical process: the normalized residual sup over time and a
/// 101-point marginal quantile grid, averaged over `reps` simulations.
///
/// The expansion here is mechanical — m below the true rank is allowed (the
/// residual then contains the leading term itself, which is how the
/// full-process sanity checks drive this function).
pub fn reduction_residual(
    model: &GaussianModel,
    g: &Subordinator,
    m: u32,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<ReductionReport> {
    if reps == 0 {
        return Err(Error::domain("reps must be >= 1".to_string()));
    }
    let dn = default_normalization(n, m, model)?.value;
    let grid = g.quantile_grid(101);
    // coefficients J_q(x_g) / q! for q = 0..=m on the grid
    let mut coeff = vec![vec![0.0f64; grid.len()]; (m + 1) as usize];
    for q in 0..=m {
        let fq = factorial(q);
        for (gi, &x) in grid.iter().enumerate() {
            coeff[q as usize][gi] = hermite_coeff(g, q, x)?.value / fq;
        }
    }
    let master = child_seed(seed, 0x5245_4443); // "REDC"
    let sups: Result<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let latent = simulate(model, n, SeedSpec::new(master, r))?;
            let x = &latent.values;
            let mut running = vec![0.0f64; grid.len()];
            let mut sup = 0.0f64;
            let mut h = vec![0.0f64; (m + 1) as usize];
            for &xi in x {
                let y = g.eval(xi);
                h[0] = 1.0;
                if m >= 1 {
                    h[1] = xi;
                }
                for q in 2..=m as usize {
                    h[q] = xi * h[q - 1] - (q as f64 - 1.0) * h[q - 2];
                }
                for (gi, &xg) in grid.iter().enumerate() {
                    let ind = if y <= xg { 1.0 } else { 0.0 };
                    let mut expansion = 0.0;
                    for q in 0..=m as usize {
                        expansion += coeff[q][gi] * h[q];
                    }
                    running[gi] += ind - expansion;
                    let a = running[gi].abs();
                    if a > sup {
                        sup = a;
                    }
                }
            }
            Ok(sup / dn)
        })
        .collect();
    let sups = sups?;
    Ok(ReductionReport {
        n,
        m,
        reps,
        mean_sup: sups.iter().sum::<f64>() / reps as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedSpec;

    /// Closed-form oracle: int_a^b H_q(s) phi(s) ds = H_{q-1}(a) phi(a) -
    /// H_{q-1}(b) phi(b) for q >= 1 (antiderivative of H_q phi is -H_{q-1}
    /// phi). Independent of the quadrature path.
    fn coeff_oracle(g: &Subordinator, q: u32, x: f64) -> f64 {
        let region = g.region(x).expect("oracle needs a solvable region");
        let cut = INTEGRATION_CUTOFF;
        region
            .iter()
            .map(|iv| {
                let (a, b) = (iv.lo.max(-cut), iv.hi.min(cut));
                if b <= a {
                    return 0.0;
                }
                if q == 0 {
                    cap_phi(b) - cap_phi(a)
                } else {
                    hermite_poly(q - 1, a) * phi(a) - hermite_poly(q - 1, b) * phi(b)
                }
            })
            .sum()
    }

    fn all_solvable_variants() -> Vec<Subordinator> {
        vec![
            Subordinator::Identity,
            Subordinator::MeanShift { mu: 0.7 },
            Subordinator::Scale { sigma: 1.3 },
            Subordinator::Affine { sigma: 0.8, mu: -0.4 },
            Subordinator::Square,
            Subordinator::AffineSquare { a: 1.0, b: 0.5, c: 0.5 },
            Subordinator::AffineSquare { a: -0.5, b: 1.0, c: 2.0 },
            Subordinator::AffineSquare { a: 0.0, b: -2.0, c: 1.0 },
            Subordinator::SplitSquare { a_pos: 1.1, a_neg: 1.0 },
            Subordinator::Quantile(QuantileMap::normal(0.5, 2.0)),
            Subordinator::Quantile(QuantileMap::gaussian_mixture(0.2, 3.0, 1.0)),
            Subordinator::FoldedToGaussian,
            Subordinator::SplitSquareToGaussian { a: 1.3, mu: 0.2 },
        ]
    }

    #[test]
    fn marginal_cdf_equals_region_measure() {
        let mut rng_x = SeedSpec::new(314, 0).rng();
        use rand::Rng;
        for g in all_solvable_variants() {
            for _ in 0..100 {
                let p: f64 = rng_x.gen_range(0.001..0.999);
                let x = g.quantile(p);
                let region = g.region(x).unwrap();
                // intervals must be sorted and disjoint
                for w in region.windows(2) {
                    assert!(w[0].hi <= w[1].lo, "{}: region not sorted/disjoint", g.label());
                }
                let measure = gaussian_measure(&region);
                let cdf = g.marginal_cdf(x);
                assert!(
                    (measure - cdf).abs() < 1e-10,
                    "{} at x={x}: measure {measure} vs cdf {cdf}",
                    g.label()
                );
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for g in all_solvable_variants() {
            for &p in &[0.01, 0.1, 0.5, 0.9, 0.99] {
                let x = g.quantile(p);
                let back = g.marginal_cdf(x);
                assert!(
                    (back - p).abs() < 1e-8,
                    "{}: quantile({p}) = {x}, cdf back = {back}",
                    g.label()
                );
            }
        }
    }

    #[test]
    fn identity_first_coefficient_is_minus_density() {
        for &x in &[-2.0, -0.5, 0.0, 0.31, 1.7, 3.0] {
            let c = hermite_coeff(&Subordinator::Identity, 1, x).unwrap();
            assert_eq!(c.method, CoeffMethod::GaussLegendre);
            assert!(
                (c.value + phi(x)).abs() < 1e-10,
                "J_1({x}) = {} vs -phi = {}",
                c.value,
                -phi(x)
            );
        }
    }

    #[test]
    fn identity_second_coefficient() {
        // J_2(x) = -x phi(x): antiderivative of (s^2 - 1) phi(s) is -s phi(s)
        for &x in &[-1.5, 0.0, 0.31, 2.2] {
            let c = hermite_coeff(&Subordinator::Identity, 2, x).unwrap();
            assert!((c.value + x * phi(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn square_coefficients() {
        // J_1 vanishes by symmetry; J_2(x) = -2 sqrt(x) phi(sqrt(x)) 1{x>=0}
        for &x in &[0.1, 0.5, 1.0, 2.5, 6.0] {
            let c1 = hermite_coeff(&Subordinator::Square, 1, x).unwrap();
            assert!(c1.value.abs() < 1e-10, "J_1({x}) = {}", c1.value);
            let c2 = hermite_coeff(&Subordinator::Square, 2, x).unwrap();
            let expect = -2.0 * x.sqrt() * phi(x.sqrt());
            assert!(
                (c2.value - expect).abs() < 1e-10,
                "J_2({x}) = {} vs {expect}",
                c2.value
            );
        }
        let below = hermite_coeff(&Subordinator::Square, 2, -0.5).unwrap();
        assert_eq!(below.value, 0.0);
    }

    #[test]
    fn quadrature_matches_antiderivative_oracle() {
        use rand::Rng;
        let mut rng = SeedSpec::new(99, 0).rng();
        for g in all_solvable_variants() {
            for q in 1..=8u32 {
                for _ in 0..6 {
                    let p: f64 = rng.gen_range(0.01..0.99);
                    let x = g.quantile(p);
                    let got = hermite_coeff(&g, q, x).unwrap().value;
                    let want = coeff_oracle(&g, q, x);
                    assert!(
                        (got - want).abs() < 1e-9,
                        "{} q={q} x={x}: {got} vs {want}",
                        g.label()
                    );
                }
            }
        }
    }

    #[test]
    fn coefficients_vanish_at_extremes() {
        // level above the whole range: region is (almost) everything and
        // E[H_q(X)] = 0 for q >= 1
        for q in 1..=8u32 {
            let c = hermite_coeff(&Subordinator::Identity, q, 1e9).unwrap();
            assert!(c.value.abs() < 1e-8, "q={q}: {}", c.value);
            let c0 = hermite_coeff(&Subordinator::Identity, q, -1e9).unwrap();
            assert!(c0.value.abs() < 1e-12);
        }
    }

    #[test]
    fn ranks_of_known_transforms() {
        assert_eq!(hermite_rank(&Subordinator::Identity, 4).unwrap().rank, 1);
        assert_eq!(
            hermite_rank(&Subordinator::Affine { sigma: 2.0, mu: 1.0 }, 4)
                .unwrap()
                .rank,
            1
        );
        assert_eq!(hermite_rank(&Subordinator::Square, 4).unwrap().rank, 2);
        assert_eq!(
            hermite_rank(&Subordinator::SplitSquare { a_pos: 1.1, a_neg: 1.0 }, 4)
                .unwrap()
                .rank,
            1
        );
        assert_eq!(
            hermite_rank(&Subordinator::FoldedToGaussian, 4).unwrap().rank,
            2
        );
        assert_eq!(
            hermite_rank(&Subordinator::SplitSquareToGaussian { a: 1.3, mu: 0.0 }, 4)
                .unwrap()
                .rank,
            1
        );
    }

    #[test]
    fn rank_coefficients_below_rank_are_null() {
        // for Square, J_1 must be below the certification threshold on the
        // whole grid (it is exactly zero in truth)
        let info = hermite_rank(&Subordinator::Square, 4).unwrap();
        assert_eq!(info.rank, 2);
        let grid = Subordinator::Square.quantile_grid(201);
        for &x in &grid {
            assert!(info.coeff(1, x).unwrap().value.abs() < 1e-8);
        }
    }

    #[test]
    fn parseval_bound_on_coefficients() {
        // sum_{q>=1} J_q(x)^2 / q! <= F(x)(1 - F(x)) (variance of the
        // indicator); check the partial sum to q = 20
        for g in [
            Subordinator::Identity,
            Subordinator::Square,
            Subordinator::SplitSquare { a_pos: 1.1, a_neg: 1.0 },
        ] {
            for &p in &[0.1, 0.3, 0.5, 0.7, 0.9] {
                let x = g.quantile(p);
                let f = g.marginal_cdf(x);
                let mut sum = 0.0;
                let mut fac = 1.0;
                for q in 1..=20u32 {
                    fac *= q as f64;
                    let j = hermite_coeff(&g, q, x).unwrap().value;
                    sum += j * j / fac;
                }
                assert!(
                    sum <= f * (1.0 - f) + 1e-8,
                    "{} at p={p}: partial sum {sum} vs bound {}",
                    g.label(),
                    f * (1.0 - f)
                );
            }
        }
    }

    #[test]
    fn total_variation_bounded_by_moment() {
        // TV(J_q) <= E|H_q(X)|: the coefficient measure has mass E|H_q|
        for g in [Subordinator::Identity, Subordinator::Square] {
            for q in 1..=3u32 {
                let mut e_abs = |s: f64| hermite_poly(q, s).abs() * phi(s);
                let (moment, _) =
                    quad::adaptive(&mut e_abs, -INTEGRATION_CUTOFF, INTEGRATION_CUTOFF, 1e-10);
                let grid = g.quantile_grid(801);
                let mut tv = 0.0;
                let mut prev = hermite_coeff(&g, q, grid[0]).unwrap().value;
                for &x in &grid[1..] {
                    let cur = hermite_coeff(&g, q, x).unwrap().value;
                    tv += (cur - prev).abs();
                    prev = cur;
                }
                assert!(
                    tv <= moment + 1e-6,
                    "{} q={q}: TV {tv} vs moment {moment}",
                    g.label()
                );
            }
        }
    }

    #[test]
    fn quantile_transform_normal_matches_affine() {
        let qt = Subordinator::Quantile(QuantileMap::normal(-0.4, 0.8));
        let affine = Subordinator::Affine { sigma: 0.8, mu: -0.4 };
        for q in 1..=4u32 {
            for &x in &[-1.9, -0.4, 0.0, 1.1] {
                let a = hermite_coeff(&qt, q, x).unwrap().value;
                let b = hermite_coeff(&affine, q, x).unwrap().value;
                assert!((a - b).abs() < 1e-9, "q={q} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn custom_transform_uses_trapezoid_fallback() {
        let custom = Subordinator::Custom(CustomMap::new(
            "custom-square",
            Arc::new(|s: f64| s * s),
        ));
        let c = hermite_coeff(&custom, 2, 1.0).unwrap();
        assert_eq!(c.method, CoeffMethod::Trapezoid);
        let expect = -2.0 * phi(1.0);
        assert!(
            (c.value - expect).abs() < 1e-3,
            "fallback J_2(1) = {} vs {expect}",
            c.value
        );
        // rank detection also works through the fallback grid machinery
        let info = hermite_rank(&custom, 4).unwrap();
        assert_eq!(info.rank, 2);
    }

    #[test]
    fn split_square_with_equal_coefficients_is_square() {
        let ss = Subordinator::SplitSquare { a_pos: 1.0, a_neg: 1.0 };
        for &x in &[0.2, 1.0, 3.3] {
            assert!((ss.marginal_cdf(x) - Subordinator::Square.marginal_cdf(x)).abs() < 1e-12);
            let a = hermite_coeff(&ss, 2, x).unwrap().value;
            let b = hermite_coeff(&Subordinator::Square, 2, x).unwrap().value;
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_normalization_telescopes_for_fgn() {
        for &(n, h) in &[(64usize, 0.6f64), (512, 0.75), (4096, 0.9)] {
            let model = GaussianModel::Fgn { hurst: h };
            let d = normalization_dn(n, 1, &model, NormalizationMode::Exact).unwrap();
            let expect = (n as f64).powf(2.0 * h);
            let got = d.value * d.value;
            assert!(
                ((got - expect) / expect).abs() < 1e-9,
                "n={n} H={h}: d^2 = {got} vs {expect}"
            );
            assert_eq!(d.source, NormalizationSource::ExactDoubleSum);
            assert!((d.hurst - h).abs() < 1e-15);
        }
    }

    #[test]
    fn asymptotic_normalization_for_fgn_m1_is_exactly_powerlaw() {
        // for fGn at m = 1 the constant 2/((2H-1) 2H) cancels C = H(2H-1)
        let model = GaussianModel::Fgn { hurst: 0.7 };
        let d = normalization_dn(256, 1, &model, NormalizationMode::Asymptotic).unwrap();
        let expect = (256.0f64).powf(1.4);
        assert!(((d.value * d.value - expect) / expect).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_close_to_exact_at_large_n() {
        let model = GaussianModel::Fgn { hurst: 0.9 };
        for m in [1u32, 2] {
            let exact = normalization_dn(4096, m, &model, NormalizationMode::Exact).unwrap();
            let asym = normalization_dn(4096, m, &model, NormalizationMode::Asymptotic).unwrap();
            let rel = ((asym.value * asym.value) / (exact.value * exact.value) - 1.0).abs();
            assert!(rel < 0.02, "m={m}: relative gap {rel}");
        }
    }

    #[test]
    fn long_memory_condition_enforced() {
        // m = 2, H = 0.7 -> m D = 1.2
        let model = GaussianModel::Fgn { hurst: 0.7 };
        match normalization_dn(128, 2, &model, NormalizationMode::Exact) {
            Err(Error::LongMemory { product, .. }) => assert!(product >= 1.0),
            other => panic!("expected long-memory error, got {other:?}"),
        }
        // AR(1) has no long-memory parameterization at all
        assert!(normalization_dn(128, 1, &GaussianModel::Ar1 { ar: 0.6 }, NormalizationMode::Exact)
            .is_err());
    }

    #[test]
    fn reduction_residual_runs_and_is_positive() {
        let model = GaussianModel::Fgn { hurst: 0.9 };
        let rep = reduction_residual(&model, &Subordinator::Square, 2, 128, 20, 7).unwrap();
        assert!(rep.mean_sup > 0.0 && rep.mean_sup.is_finite());
    }

    #[test]
    fn reduction_with_null_expansion_is_empirical_process() {
        // Square has J_1 = 0, so truncating at m = 1 subtracts only J_0 = F:
        // the residual is the full normalized empirical process, computed
        // here independently.
        let model = GaussianModel::Fgn { hurst: 0.9 };
        let g = Subordinator::Square;
        let (n, reps, seed) = (96usize, 8usize, 21u64);
        let rep = reduction_residual(&model, &g, 1, n, reps, seed).unwrap();
        let dn = default_normalization(n, 1, &model).unwrap().value;
        let grid = g.quantile_grid(101);
        let master = child_seed(seed, 0x5245_4443);
        let mut mean = 0.0;
        for r in 0..reps as u64 {
            let x = simulate(&model, n, SeedSpec::new(master, r)).unwrap().values;
            let mut sup: f64 = 0.0;
            let mut running = vec![0.0f64; grid.len()];
            for &xi in &x {
                let y = g.eval(xi);
                for (gi, &xg) in grid.iter().enumerate() {
                    let ind = if y <= xg { 1.0 } else { 0.0 };
                    running[gi] += ind - g.marginal_cdf(xg);
                    sup = sup.max(running[gi].abs());
                }
            }
            mean += sup / dn;
        }
        mean /= reps as f64;
        // marginal_cdf and the quadrature J_0 agree to ~1e-10, so the two
        // computations are numerically identical at test tolerance
        assert!(
            (rep.mean_sup - mean).abs() < 1e-6,
            "{} vs {}",
            rep.mean_sup,
            mean
        );
    }

    #[test]
    fn expansion_mean_recovers_cdf() {
        // E[sum_{q<=m} J_q(x)/q! H_q(X)] = J_0(x) = F(x): MC check
        let g = Subordinator::Square;
        let x = g.quantile(0.6);
        let j0 = hermite_coeff(&g, 0, x).unwrap().value;
        let j1 = hermite_coeff(&g, 1, x).unwrap().value;
        let j2 = hermite_coeff(&g, 2, x).unwrap().value;
        let mut rng = SeedSpec::new(4, 0).rng();
        use rand::Rng;
        let reps = 200_000;
        let mut acc = 0.0;
        for _ in 0..reps {
            let s: f64 = rng.sample(rand_distr::StandardNormal);
            acc += j0 + j1 * s + 0.5 * j2 * (s * s - 1.0);
        }
        let mean = acc / reps as f64;
        assert!((mean - g.marginal_cdf(x)).abs() < 0.01);
        assert!((j0 - 0.6).abs() < 1e-9, "J_0 is the marginal cdf");
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Subordinator::Scale { sigma: 0.0 }.validate().is_err());
        assert!(Subordinator::SplitSquare { a_pos: -1.0, a_neg: 1.0 }
            .validate()
            .is_err());
        assert!(Subordinator::AffineSquare { a: 0.0, b: 0.0, c: 1.0 }
            .validate()
            .is_err());
        assert!(hermite_coeff(&Subordinator::Scale { sigma: -2.0 }, 1, 0.0).is_err());
    }
}
