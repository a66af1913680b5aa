//! Semi-parametric estimation of the memory and scale of an observed series.
//!
//! The Hurst index is estimated by local Whittle: minimize
//! R(H) = log( (1/m) sum_{j<=m} lambda_j^{2H-1} I(lambda_j) )
//!        - (2H - 1) (1/m) sum_{j<=m} log lambda_j
//! over the first m = floor(n^{2/3}) Fourier frequencies, where I is the
//! periodogram. Because the statistics are rank-based, the estimate needs no
//! knowledge of the marginal transform. A split variant averages per-segment
//! estimates around the estimated change point so a level shift is not
//! mistaken for memory. The autocovariance scale C in rho(k) ~ C k^{2H-2}
//! is estimated by averaging back-compensated sample autocovariances, and
//! together they give the plug-in normalization d = n^H sqrt(C / (H(2H-1))).

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::fft_forward_in_place;
use crate::stats::{raw_statistic, StatisticKind};

/// Lower clamp for estimated Hurst values: calibration tables cover the
/// long-memory range, so estimates at or below 1/2 snap to just above it.
pub const HURST_CLAMP: f64 = 0.501;

/// Optimizer search interval for the raw local Whittle estimate.
const SEARCH_LO: f64 = 0.01;
const SEARCH_HI: f64 = 0.99;
const SEARCH_TOL: f64 = 1e-5;

/// Segments shorter than this fall back to the whole-series estimate.
pub const MIN_SEGMENT: usize = 4;

/// Floor applied to the estimated autocovariance scale constant.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Periodogram I(lambda_j) = |sum_t y_t e^{-i t lambda_j}|^2 / (2 pi n) at
/// the Fourier frequencies lambda_j = 2 pi j / n, j = 1..floor(n/2).
pub fn periodogram(y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    if n < 4 {
        return Err(Error::domain(format!(
            "periodogram needs at least 4 observations, got {n}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("series contains non-finite values"));
    }
    let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward_in_place(&mut buf);
    let scale = 1.0 / (2.0 * std::f64::consts::PI * n as f64);
    Ok((1..=n / 2).map(|j| buf[j].norm_sqr() * scale).collect())
}

/// Exact floor(n^{num/den}): a rounded float seed adjusted by integer
/// comparisons, since m is the floor iff m^den <= n^num < (m+1)^den. powf
/// alone misses, e.g. 1000^{2/3} evaluates to 99.99999999999997 whose floor
/// is off by one.
fn floor_root_pow(n: usize, num: u32, den: u32) -> usize {
    let target = (n as u128).pow(num);
    let mut m = (n as f64).powf(f64::from(num) / f64::from(den)).round() as u128;
    while m > 0 && m.checked_pow(den).is_none_or(|v| v > target) {
        m -= 1;
    }
    while (m + 1).checked_pow(den).is_some_and(|v| v <= target) {
        m += 1;
    }
    m as usize
}

/// The default local Whittle bandwidth floor(n^{2/3}), clamped to the
/// available frequencies.
pub fn default_bandwidth(n: usize) -> usize {
    let m = floor_root_pow(n, 2, 3);
    m.clamp(2, (n / 2).max(2))
}

/// How a Hurst estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum HurstMethod {
    /// One local Whittle fit on the whole series.
    #[serde(rename = "whittle")]
    Whittle { bandwidth: usize },
    /// Length-weighted average of per-segment fits around a split point.
    #[serde(rename = "split_whittle")]
    SplitWhittle { bandwidths: (usize, usize) },
}

/// A Hurst estimate with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    /// Estimate clamped to at least [`HURST_CLAMP`].
    pub value: f64,
    /// Optimizer output before clamping (length-weighted for splits).
    pub raw_value: f64,
    #[serde(flatten)]
    pub method: HurstMethod,
    /// The split point used, if any.
    pub split_k: Option<usize>,
    /// True when a split was requested but a segment was too short, so the
    /// whole series was used instead.
    pub fallback_whole_series: bool,
}

/// Golden-section minimizer for a unimodal objective on [a, b].
fn golden_min(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// R(H) for the stored frequency/periodogram prefix.
fn whittle_objective(h: f64, lambda: &[f64], per: &[f64], mean_log_lambda: f64) -> f64 {
    let exponent = 2.0 * h - 1.0;
    let mut g = 0.0;
    for (&l, &i) in lambda.iter().zip(per.iter()) {
        g += l.powf(exponent) * i;
    }
    g /= lambda.len() as f64;
    g.ln() - exponent * mean_log_lambda
}

fn local_whittle_raw(y: &[f64], bandwidth: usize) -> Result<(f64, usize)> {
    let n = y.len();
    if y.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::degenerate(
            "constant series carries no frequency information",
        ));
    }
    let per = periodogram(y)?;
    let m = bandwidth;
    if m < 2 || m > per.len() {
        return Err(Error::domain(format!(
            "bandwidth {m} outside 2..={} for a series of length {n}",
            per.len()
        )));
    }
    let lambda: Vec<f64> = (1..=m)
        .map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64)
        .collect();
    let per = &per[..m];
    if per.iter().all(|&v| v < 1e-300) {
        return Err(Error::degenerate(
            "periodogram vanishes on the estimation band (constant series?)",
        ));
    }
    let mean_log_lambda = lambda.iter().map(|l| l.ln()).sum::<f64>() / m as f64;
    let raw = golden_min(
        |h| whittle_objective(h, &lambda, per, mean_log_lambda),
        SEARCH_LO,
        SEARCH_HI,
        SEARCH_TOL,
    );
    Ok((raw, m))
}

/// Local Whittle estimate of the Hurst index with the default bandwidth
/// floor(n^{2/3}).
pub fn local_whittle(y: &[f64]) -> Result<HurstEstimate> {
    local_whittle_with(y, default_bandwidth(y.len()))
}

/// Local Whittle estimate with an explicit bandwidth in [2, n/2].
pub fn local_whittle_with(y: &[f64], bandwidth: usize) -> Result<HurstEstimate> {
    let (raw, m) = local_whittle_raw(y, bandwidth)?;
    Ok(HurstEstimate {
        value: raw.max(HURST_CLAMP),
        raw_value: raw,
        method: HurstMethod::Whittle { bandwidth: m },
        split_k: None,
        fallback_whole_series: false,
    })
}

/// Split estimate at the change point the given statistic itself locates:
/// the series is split at the profile argmax and per-segment local Whittle
/// fits are averaged, so the shift the test is hunting cannot masquerade as
/// long memory.
pub fn split_whittle(y: &[f64], kind: StatisticKind) -> Result<HurstEstimate> {
    if y.len() < 8 {
        return Err(Error::domain(format!(
            "split estimation needs at least 8 observations, got {}",
            y.len()
        )));
    }
    let k = raw_statistic(kind, y)?.k_hat;
    split_whittle_at(y, k)
}

/// Split estimate around a given k in 1..=n: the length-weighted average of
/// local Whittle fits on y[..k] and y[k..], each with its own default
/// bandwidth. k = n degenerates to the whole-series fit (zero weight on the
/// empty right segment). Segments shorter than [`MIN_SEGMENT`] trigger a
/// whole-series fallback (flagged).
pub fn split_whittle_at(y: &[f64], k: usize) -> Result<HurstEstimate> {
    let n = y.len();
    if k == 0 || k > n {
        return Err(Error::domain(format!("split point k = {k} outside 1..={n}")));
    }
    if k == n {
        let (raw, m) = local_whittle_raw(y, default_bandwidth(n))?;
        return Ok(HurstEstimate {
            value: raw.max(HURST_CLAMP),
            raw_value: raw,
            method: HurstMethod::SplitWhittle { bandwidths: (m, 0) },
            split_k: Some(n),
            fallback_whole_series: false,
        });
    }
    if k < MIN_SEGMENT || n - k < MIN_SEGMENT {
        let whole = local_whittle(y)?;
        return Ok(HurstEstimate {
            split_k: Some(k),
            fallback_whole_series: true,
            ..whole
        });
    }
    let (left, m1) = local_whittle_raw(&y[..k], default_bandwidth(k))?;
    let (right, m2) = local_whittle_raw(&y[k..], default_bandwidth(n - k))?;
    let w = k as f64 / n as f64;
    let raw = w * left + (1.0 - w) * right;
    Ok(HurstEstimate {
        value: raw.max(HURST_CLAMP),
        raw_value: raw,
        method: HurstMethod::SplitWhittle {
            bandwidths: (m1, m2),
        },
        split_k: Some(k),
        fallback_whole_series: false,
    })
}

/// Biased sample autocovariances gamma_hat(1..=max_lag) of the mean-centered
/// series (1/n divisor, which keeps the sequence positive semidefinite).
pub fn sample_autocov(y: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = y.len();
    if n == 0 || max_lag >= n {
        return Err(Error::domain(format!(
            "max_lag {max_lag} must be below the series length {n}"
        )));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
    Ok((1..=max_lag)
        .map(|k| {
            centered[..n - k]
                .iter()
                .zip(&centered[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect())
}

/// Number of lags used for the scale estimate: floor(n^{1/3}), clamped.
pub fn default_scale_lags(n: usize) -> usize {
    floor_root_pow(n, 1, 3).clamp(1, (n / 4).max(1))
}

/// Plug-in scale and normalization built from an estimated Hurst index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    /// Level of the autocovariance power law rho(k) ~ C k^{2H-2}.
    #[serde(rename = "C_hat")]
    pub c_hat: f64,
    /// d_hat = n^H sqrt(C_hat / (H (2H - 1))): plug-in for the exact
    /// normalization of a rank-1 statistic. For a unit-variance series with
    /// fractional-Gaussian autocovariances the two scale factors cancel and
    /// d_hat is close to n^H.
    #[serde(rename = "d_hat_n")]
    pub d_hat: f64,
    /// The Hurst value the estimate was built with.
    pub hurst: f64,
    /// Number of lags averaged.
    #[serde(rename = "K")]
    pub k_used: usize,
}

/// Estimate C by back-compensating sample autocovariances with the assumed
/// decay: C_hat = mean over k <= K of rho_hat(k) k^{2 - 2H}, floored at
/// [`SCALE_FLOOR`]. The series is treated as already standardized (the
/// latent Gaussian model has mean zero), so rho_hat(k) is the raw product
/// moment (1/n) sum y_i y_{i+k} without re-centering: subtracting the
/// sample mean would shift every lag down by roughly Var(mean) ~ n^{2H-2},
/// which under long memory is a first-order bias, not an o(1) correction.
/// K defaults to floor(n^{1/3}) and must stay within [1, n/4] when given
/// explicitly. Scaling the series by c scales C_hat by c^2 and d_hat by c.
pub fn estimate_scale(y: &[f64], hurst: f64, lags: Option<usize>) -> Result<ScaleEstimate> {
    if !(hurst > 0.5 && hurst < 1.0) {
        return Err(Error::domain(format!(
            "scale estimation requires H in (0.5, 1), got {hurst}"
        )));
    }
    let n = y.len();
    let k_used = match lags {
        None => default_scale_lags(n),
        Some(k) => {
            if k < 1 || k * 4 > n {
                return Err(Error::domain(format!(
                    "lag count K = {k} outside 1..={} for a series of length {n}",
                    n / 4
                )));
            }
            k
        }
    };
    if k_used >= n {
        return Err(Error::domain(format!(
            "lag count K = {k_used} must be below the series length {n}"
        )));
    }
    let mut c = 0.0;
    for k in 1..=k_used {
        let rho: f64 = y[..n - k].iter().zip(&y[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        c += rho * (k as f64).powf(2.0 - 2.0 * hurst);
    }
    c /= k_used as f64;
    let c_hat = c.max(SCALE_FLOOR);
    let d_hat = (n as f64).powf(hurst) * (c_hat / (hurst * (2.0 * hurst - 1.0))).sqrt();
    Ok(ScaleEstimate {
        c_hat,
        d_hat,
        hurst,
        k_used,
    })
}

/// The same back-compensated average computed from a model's true
/// autocovariances — the population value the sample version targets.
pub fn scale_constant_from_acf(rho: impl Fn(usize) -> f64, hurst: f64, lags: usize) -> f64 {
    let mut c = 0.0;
    for k in 1..=lags {
        c += rho(k) * (k as f64).powf(2.0 - 2.0 * hurst);
    }
    c / lags as f64
}
