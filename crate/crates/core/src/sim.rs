//! Exact simulation of stationary Gaussian models, including long-range
//! dependent ones.
//!
//! Models are standardized to unit marginal variance. Fractional Gaussian
//! noise and FARIMA(0,d,0) are drawn by circulant embedding (Davies–Harte):
//! the length-2(n-1) symmetrized covariance vector is FFT'd, its eigenvalues
//! scale a complex Gaussian vector, and a second FFT synthesizes a path with
//! exactly the target covariance. If an eigenvalue is materially negative the
//! embedding fails; for n <= 2048 a dense O(n^2) Durbin–Levinson recursion
//! takes over, otherwise the error propagates. AR(1) and FARIMA(1,d,0) are
//! produced by filtering a base path through the AR recursion with burn-in,
//! then rescaling by the exact filtered standard deviation.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::SeedSpec;

/// Longest series the dense Durbin–Levinson fallback will accept.
pub const DENSE_FALLBACK_LIMIT: usize = 2048;

/// Relative tolerance below which a circulant eigenvalue counts as negative
/// (anything in [-tol, 0) is clamped to zero as rounding noise).
const EIGENVALUE_TOLERANCE: f64 = 1e-9;

/// Geometric tails |ar|^L below this are truncated in FARIMA(1,d,0)
/// covariance sums.
const AR_TAIL_EPS: f64 = 1e-18;

/// A zero-mean, unit-variance stationary Gaussian model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GaussianModel {
    /// Fractional Gaussian noise with Hurst index `hurst` in (0, 1).
    Fgn { hurst: f64 },
    /// FARIMA(0,d,0) with fractional difference parameter `d` in [0, 0.5).
    Farima00 { d: f64 },
    /// FARIMA(1,d,0): FARIMA(0,d,0) innovations through an AR(1) filter,
    /// |ar| < 1, restandardized.
    Farima10 { d: f64, ar: f64 },
    /// AR(1) with coefficient `ar`, |ar| < 1.
    Ar1 { ar: f64 },
}

/// Long-memory parameterization of a model: autocorrelations behave as
/// rho(k) ~ l_const * k^(-decay_d) with decay_d in (0, 1), equivalently
/// Hurst index hurst = 1 - decay_d / 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryParams {
    pub hurst: f64,
    pub decay_d: f64,
    pub l_const: f64,
}

impl GaussianModel {
    /// Check the parameter domain.
    pub fn validate(&self) -> Result<()> {
        match *self {
            GaussianModel::Fgn { hurst } => {
                if !(hurst > 0.0 && hurst < 1.0) {
                    return Err(Error::domain(format!(
                        "fgn hurst must lie in (0, 1), got {hurst}"
                    )));
                }
            }
            GaussianModel::Farima00 { d } => {
                if !(0.0..0.5).contains(&d) {
                    return Err(Error::domain(format!(
                        "farima00 d must lie in [0, 0.5), got {d}"
                    )));
                }
            }
            GaussianModel::Farima10 { d, ar } => {
                if !(0.0..0.5).contains(&d) {
                    return Err(Error::domain(format!(
                        "farima10 d must lie in [0, 0.5), got {d}"
                    )));
                }
                if !(ar.abs() < 1.0) {
                    return Err(Error::domain(format!(
                        "farima10 ar must satisfy |ar| < 1, got {ar}"
                    )));
                }
            }
            GaussianModel::Ar1 { ar } => {
                if !(ar.abs() < 1.0) {
                    return Err(Error::domain(format!(
                        "ar1 coefficient must satisfy |ar| < 1, got {ar}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Long-memory parameters, if the model has them (fGn needs H > 1/2,
    /// FARIMA needs d > 0; AR(1) is short-memory).
    pub fn memory(&self) -> Option<MemoryParams> {
        match *self {
            GaussianModel::Fgn { hurst } if hurst > 0.5 => Some(MemoryParams {
                hurst,
                decay_d: 2.0 - 2.0 * hurst,
                l_const: hurst * (2.0 * hurst - 1.0),
            }),
            GaussianModel::Farima00 { d } if d > 0.0 => Some(MemoryParams {
                hurst: d + 0.5,
                decay_d: 1.0 - 2.0 * d,
                l_const: gamma(1.0 - d) / gamma(d),
            }),
            GaussianModel::Farima10 { d, ar } if d > 0.0 => {
                // The AR filter multiplies the covariance tail by
                // sum_l ar^|l| / (1 - ar^2) and the standardization divides by
                // the filtered variance.
                let base = gamma(1.0 - d) / gamma(d);
                let tail_factor = (1.0 + ar) / ((1.0 - ar) * (1.0 - ar * ar));
                let var = filtered_variance(d, ar);
                Some(MemoryParams {
                    hurst: d + 0.5,
                    decay_d: 1.0 - 2.0 * d,
                    l_const: base * tail_factor / var,
                })
            }
            _ => None,
        }
    }

    /// Standardized autocorrelation at lag `k`.
    pub fn autocov(&self, k: usize) -> f64 {
        match *self {
            GaussianModel::Fgn { hurst } => fgn_autocov(hurst, k as u64),
            GaussianModel::Farima00 { d } => farima00_autocov_vec(d, k + 1)[k],
            GaussianModel::Farima10 { d, ar } => farima10_autocov_vec(d, ar, k + 1)[k],
            GaussianModel::Ar1 { ar } => ar.powi(k as i32),
        }
    }

    /// Autocorrelations at lags 0..len-1 (rho(0) = 1).
    pub fn autocov_vec(&self, len: usize) -> Vec<f64> {
        match *self {
            GaussianModel::Fgn { hurst } => {
                (0..len).map(|k| fgn_autocov(hurst, k as u64)).collect()
            }
            GaussianModel::Farima00 { d } => farima00_autocov_vec(d, len),
            GaussianModel::Farima10 { d, ar } => farima10_autocov_vec(d, ar, len),
            GaussianModel::Ar1 { ar } => (0..len).map(|k| ar.powi(k as i32)).collect(),
        }
    }
}

impl std::fmt::Display for GaussianModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            GaussianModel::Fgn { hurst } => write!(f, "fgn(H={hurst})"),
            GaussianModel::Farima00 { d } => write!(f, "farima00(d={d})"),
            GaussianModel::Farima10 { d, ar } => write!(f, "farima10(d={d}, ar={ar})"),
            GaussianModel::Ar1 { ar } => write!(f, "ar1(ar={ar})"),
        }
    }
}

/// Fractional Gaussian noise autocorrelation at lag `k`:
/// rho(k) = (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2.
///
/// Equivalently the covariance of unit-spaced increments of fractional
/// Brownian motion, which is how the tests cross-check it.
pub fn fgn_autocov<S: Scalar>(hurst: S, k: u64) -> S {
    let two_h = hurst + hurst;
    if k == 0 {
        return S::one();
    }
    let k = S::from_count(k as usize);
    let half = S::from_f64(0.5).unwrap();
    half * ((k + S::one()).powf(two_h) - (S::one() + S::one()) * k.powf(two_h)
        + (k - S::one()).powf(two_h))
}

/// Autocorrelation of `model` at lag `k` (free-function form of
/// [`GaussianModel::autocov`]).
pub fn model_autocov(model: &GaussianModel, k: usize) -> f64 {
    model.autocov(k)
}

/// FARIMA(0,d,0) autocorrelations via the exact recursion
/// rho(0) = 1, rho(k) = rho(k-1) (k - 1 + d) / (k - d).
fn farima00_autocov_vec(d: f64, len: usize) -> Vec<f64> {
    let mut r = Vec::with_capacity(len);
    r.push(1.0);
    for k in 1..len {
        let k = k as f64;
        let prev = r[r.len() - 1];
        r.push(prev * (k - 1.0 + d) / (k - d));
    }
    r
}

/// Truncation length for geometric tails of an AR(1) filter.
fn ar_tail_len(ar: f64) -> usize {
    if ar == 0.0 {
        return 1;
    }
    let l = (AR_TAIL_EPS.ln() / ar.abs().ln()).ceil();
    (l as usize).clamp(1, 5000)
}

/// Variance of sum_{j>=0} ar^j W_{t-j} for unit-variance FARIMA(0,d,0) W:
/// (1/(1-ar^2)) * sum_l ar^|l| rho_W(|l|).
fn filtered_variance(d: f64, ar: f64) -> f64 {
    let tail = ar_tail_len(ar);
    let rho_w = farima00_autocov_vec(d, tail + 1);
    let mut s = 1.0;
    let mut pow = 1.0;
    for rho in rho_w.iter().take(tail + 1).skip(1) {
        pow *= ar;
        s += 2.0 * pow * rho;
    }
    s / (1.0 - ar * ar)
}

/// FARIMA(1,d,0) autocorrelations: two-sided geometric convolution of the
/// FARIMA(0,d,0) autocovariance with the AR(1) filter, then standardized.
fn farima10_autocov_vec(d: f64, ar: f64, len: usize) -> Vec<f64> {
    let tail = ar_tail_len(ar);
    let rho_w = farima00_autocov_vec(d, len + tail);
    let unnorm = |k: usize| -> f64 {
        // sum_{l=-tail..tail} ar^|l| rho_W(|k + l|)
        let mut s = rho_w[k];
        let mut pow = 1.0;
        for l in 1..=tail {
            pow *= ar;
            let up = rho_w[k + l];
            let down = rho_w[(k as isize - l as isize).unsigned_abs()];
            s += pow * (up + down);
        }
        s
    };
    let g0 = unnorm(0);
    (0..len).map(|k| unnorm(k) / g0).collect()
}

/// One simulated path plus where it came from.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub provenance: Option<Provenance>,
}

/// Model and seed that produced a simulated series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: GaussianModel,
    pub seed: SeedSpec,
}

impl TimeSeries {
    /// Wrap observed data. Requires at least two finite values.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::degenerate(format!(
                "series must have length >= 2, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::degenerate(format!(
                "non-finite value at index {bad}"
            )));
        }
        Ok(TimeSeries {
            values,
            provenance: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How a path gets synthesized once per (model, n): either circulant
/// weights ready for the FFT synthesis, or the autocovariances for the dense
/// Durbin–Levinson fallback.
enum Synthesis {
    Circulant {
        m: usize,
        /// sqrt(lambda_0 / M)
        w_zero: f64,
        /// sqrt(lambda_{M/2} / M)
        w_half: f64,
        /// sqrt(lambda_k / (2M)) for k = 1..M/2-1
        w: Vec<f64>,
    },
    DurbinLevinson {
        rho: Vec<f64>,
    },
}

#[derive(PartialEq, Eq, Hash, Clone)]
struct PlanKey {
    tag: u8,
    p1: u64,
    p2: u64,
    n: usize,
}

fn plan_key(model: &GaussianModel, n: usize) -> PlanKey {
    match *model {
        GaussianModel::Fgn { hurst } => PlanKey {
            tag: 0,
            p1: hurst.to_bits(),
            p2: 0,
            n,
        },
        GaussianModel::Farima00 { d } => PlanKey {
            tag: 1,
            p1: d.to_bits(),
            p2: 0,
            n,
        },
        GaussianModel::Farima10 { d, ar } => PlanKey {
            tag: 2,
            p1: d.to_bits(),
            p2: ar.to_bits(),
            n,
        },
        GaussianModel::Ar1 { ar } => PlanKey {
            tag: 3,
            p1: ar.to_bits(),
            p2: 0,
            n,
        },
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static SYNTH_CACHE: RefCell<HashMap<PlanKey, Rc<Synthesis>>> = RefCell::new(HashMap::new());
}

pub(crate) fn fft_forward_in_place(buf: &mut [Complex64]) {
    PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft_forward(buf.len());
        fft.process(buf);
    });
}

/// Build (or fetch) the synthesis plan for an exactly-embedded model.
fn synthesis_for(model: &GaussianModel, n: usize) -> Result<Rc<Synthesis>> {
    let key = plan_key(model, n);
    if let Some(hit) = SYNTH_CACHE.with(|c| c.borrow().get(&key).cloned()) {
        return Ok(hit);
    }
    let rho = model.autocov_vec(n);
    let m = 2 * (n - 1);
    let mut c = vec![Complex64::new(0.0, 0.0); m];
    for (k, &v) in rho.iter().enumerate() {
        c[k].re = v;
    }
    for k in 1..n - 1 {
        c[m - k].re = rho[k];
    }
    fft_forward_in_place(&mut c);
    let eigs: Vec<f64> = c.iter().map(|z| z.re).collect();
    let max_abs = eigs.iter().fold(0.0f64, |a, &e| a.max(e.abs()));
    let tol = EIGENVALUE_TOLERANCE * max_abs.max(1.0);
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let synth = if min < -tol {
        if n > DENSE_FALLBACK_LIMIT {
            return Err(Error::Embedding {
                n,
                eigenvalue: min,
                tolerance: tol,
                fallback_limit: DENSE_FALLBACK_LIMIT,
            });
        }
        Synthesis::DurbinLevinson { rho }
    } else {
        let mf = m as f64;
        let lambda = |k: usize| eigs[k].max(0.0);
        Synthesis::Circulant {
            m,
            w_zero: (lambda(0) / mf).sqrt(),
            w_half: (lambda(m / 2) / mf).sqrt(),
            w: (1..m / 2).map(|k| (lambda(k) / (2.0 * mf)).sqrt()).collect(),
        }
    };
    let rc = Rc::new(synth);
    SYNTH_CACHE.with(|c| c.borrow_mut().insert(key, rc.clone()));
    Ok(rc)
}

/// Draw one exactly-distributed path of `model` (fGn / FARIMA(0,d,0)).
fn draw_embedded<R: Rng>(model: &GaussianModel, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let synth = synthesis_for(model, n)?;
    match &*synth {
        Synthesis::Circulant { m, w_zero, w_half, w } => {
            let m = *m;
            let mut z = vec![Complex64::new(0.0, 0.0); m];
            z[0].re = w_zero * rng.sample::<f64, _>(StandardNormal);
            let zh = w_half * rng.sample::<f64, _>(StandardNormal);
            z[m / 2].re = zh;
            for k in 1..m / 2 {
                let u: f64 = rng.sample(StandardNormal);
                let v: f64 = rng.sample(StandardNormal);
                let wk = w[k - 1];
                z[k] = Complex64::new(wk * u, wk * v);
                z[m - k] = Complex64::new(wk * u, -wk * v);
            }
            fft_forward_in_place(&mut z);
            Ok(z.iter().take(n).map(|c| c.re).collect())
        }
        Synthesis::DurbinLevinson { rho } => durbin_levinson_path(rho, n, rng),
    }
}

/// Dense O(n^2) exact Gaussian sampler from autocovariances, via the
/// Durbin–Levinson innovations recursion.
fn durbin_levinson_path<R: Rng>(rho: &[f64], n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(n);
    let mut v = rho[0];
    x.push(v.sqrt() * rng.sample::<f64, _>(StandardNormal));
    let mut phi = vec![0.0f64; n];
    let mut phi_prev = vec![0.0f64; n];
    for t in 1..n {
        let mut acc = rho[t];
        for j in 1..t {
            acc -= phi_prev[j - 1] * rho[t - j];
        }
        let reflection = acc / v;
        phi[t - 1] = reflection;
        for j in 1..t {
            phi[j - 1] = phi_prev[j - 1] - reflection * phi_prev[t - 1 - j];
        }
        v *= 1.0 - reflection * reflection;
        if !(v > 0.0) {
            return Err(Error::degenerate(
                "autocovariance sequence is not positive definite".to_string(),
            ));
        }
        let mut mean = 0.0;
        for j in 1..=t {
            mean += phi[j - 1] * x[t - j];
        }
        x.push(mean + v.sqrt() * rng.sample::<f64, _>(StandardNormal));
        phi_prev[..t].copy_from_slice(&phi[..t]);
    }
    Ok(x)
}

/// Burn-in length for an AR(1) filter: 10 * ceil(1 / (1 - |ar|)), at least
/// 100, so the zero initial condition is forgotten to ~exp(-10).
fn ar_burn_in(ar: f64) -> usize {
    let steps = (1.0 / (1.0 - ar.abs())).ceil() as usize;
    (10 * steps).max(100)
}

/// Simulate `n` observations of `model`, exactly for fGn / FARIMA(0,d,0) and
/// via burn-in AR filtering of an exact base path for FARIMA(1,d,0) / AR(1).
///
/// Deterministic: the output is a pure function of (model, n, seed).
pub fn simulate(model: &GaussianModel, n: usize, seed: SeedSpec) -> Result<TimeSeries> {
    model.validate()?;
    if n < 2 {
        return Err(Error::degenerate(format!(
            "simulation length must be >= 2, got {n}"
        )));
    }
    let mut rng = seed.rng();
    let values = match *model {
        GaussianModel::Fgn { .. } | GaussianModel::Farima00 { .. } => {
            draw_embedded(model, n, &mut rng)?
        }
        GaussianModel::Farima10 { .. } | GaussianModel::Ar1 { .. } => {
            let (d, ar) = match *model {
                GaussianModel::Farima10 { d, ar } => (d, ar),
                GaussianModel::Ar1 { ar } => (0.0, ar),
                _ => unreachable!(),
            };
            let burn = ar_burn_in(ar);
            let total = n + burn;
            let base: Vec<f64> = if d > 0.0 {
                draw_embedded(&GaussianModel::Farima00 { d }, total, &mut rng)?
            } else {
                (0..total).map(|_| rng.sample(StandardNormal)).collect()
            };
            let sd = filtered_variance(d, ar).sqrt();
            let mut out = Vec::with_capacity(n);
            let mut state = 0.0;
            for (t, w) in base.iter().enumerate() {
                state = ar * state + w;
                if t >= burn {
                    out.push(state / sd);
                }
            }
            out
        }
    };
    Ok(TimeSeries {
        values,
        provenance: Some(Provenance {
            model: *model,
            seed,
        }),
    })
}
