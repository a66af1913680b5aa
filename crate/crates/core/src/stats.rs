//! Change-point test statistics on the raw (unnormalized) scale.
//!
//! Each statistic scans every split point k = 1, ..., n-1, comparing the
//! first k observations against the rest, and reports the profile over k,
//! its maximum (the raw statistic), and the smallest maximizing k (the
//! change-point estimate). KS, Cramér–von Mises, and Wilcoxon are computed
//! from tie-aware comparison counts in integer arithmetic, so their values
//! are bit-identical under any strictly increasing transform of the data;
//! CUSUM compares partial sums of the values themselves. Everything here is
//! O(n^2) via incremental count updates as one observation at a time moves
//! from the right segment to the left.
//!
//! Raw values grow with the long-memory normalization d_{n,m}: dividing by
//! d (KS, CUSUM), d^2 (Cramér–von Mises), or n d (Wilcoxon) puts them on
//! the scale of their limit distributions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which change-point statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    /// sup over split points and sample points of the weighted two-sample
    /// empirical-cdf difference.
    Ks,
    /// Mean over sample points of the squared weighted cdf difference,
    /// maximized over split points.
    Cvm,
    /// Maximal absolute bridge of the partial sums of the values.
    Cusum,
    /// Maximal absolute centered two-sample rank count.
    Wilcoxon,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 4] = [
        StatisticKind::Ks,
        StatisticKind::Cvm,
        StatisticKind::Cusum,
        StatisticKind::Wilcoxon,
    ];

    /// Divide a raw value by the matching power of the normalization d to
    /// land on the limit scale.
    pub fn normalize(self, raw: f64, n: usize, d: f64) -> f64 {
        match self {
            StatisticKind::Ks | StatisticKind::Cusum => raw / d,
            StatisticKind::Cvm => raw / (d * d),
            StatisticKind::Wilcoxon => raw / (n as f64 * d),
        }
    }

    /// Power p such that the raw statistic scales like d^p: the exponent
    /// applied to a scale-correction factor.
    pub fn scale_power(self) -> i32 {
        match self {
            StatisticKind::Cvm => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StatisticKind::Ks => "ks",
            StatisticKind::Cvm => "cvm",
            StatisticKind::Cusum => "cusum",
            StatisticKind::Wilcoxon => "wilcoxon",
        };
        f.write_str(s)
    }
}

/// A computed statistic: the profile over split points, its maximum, and
/// the smallest maximizing split point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawStatistics<S: Scalar> {
    pub kind: StatisticKind,
    /// Series length n.
    pub n: usize,
    /// max over k of the profile.
    pub raw_value: S,
    /// Smallest k in 1..=n-1 attaining the maximum.
    pub k_hat: usize,
    /// Profile value at split point k is `profile[k - 1]`.
    pub profile: Vec<S>,
}

impl<S: Scalar> RawStatistics<S> {
    /// Profile value at split point k (1-based).
    pub fn profile_at(&self, k: usize) -> S {
        self.profile[k - 1]
    }
}

/// Smallest 1-based index of the maximal profile entry.
pub fn profile_argmax<S: Scalar>(profile: &[S]) -> Result<usize> {
    if profile.is_empty() {
        return Err(Error::domain("empty profile has no change point"));
    }
    let mut best = 0usize;
    for (i, &v) in profile.iter().enumerate().skip(1) {
        if v > profile[best] {
            best = i;
        }
    }
    Ok(best + 1)
}

/// Change-point location estimate: the smallest k maximizing the per-k
/// profile of the chosen statistic.
pub fn changepoint_estimate<S: Scalar>(y: &[S], kind: StatisticKind) -> Result<usize> {
    Ok(raw_statistic(kind, y)?.k_hat)
}

fn validate_series<S: Scalar>(y: &[S]) -> Result<()> {
    if y.len() < 2 {
        return Err(Error::domain(format!(
            "need at least 2 observations, got {}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("series contains non-finite values"));
    }
    Ok(())
}

/// R_i = #{j <= n : Y_j <= Y_i} for every i (ties counted).
fn global_rank_counts<S: Scalar>(y: &[S]) -> Vec<i64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    y.iter()
        .map(|v| sorted.partition_point(|s| s <= v) as i64)
        .collect()
}

fn from_i64<S: Scalar>(t: i64) -> S {
    S::from_i64(t).expect("comparison counts fit in the scalar type")
}

/// One pass over split points computing the three rank-based profiles.
///
/// With cl_i(k) = #{j <= k : Y_j <= Y_i} and R_i the global count, the
/// weighted cdf difference at sample point Y_i is (n cl_i - k R_i) / n, an
/// integer over n. The Wilcoxon count A_k = #{i <= k < j : Y_i <= Y_j}
/// updates incrementally as observation k moves to the left segment.
fn rank_profiles<S: Scalar>(y: &[S]) -> (Vec<S>, Vec<S>, Vec<S>) {
    let n = y.len();
    let n_i = n as i64;
    let r = global_rank_counts(y);
    let mut cl = vec![0i64; n];
    let mut a: i64 = 0;
    let n_s = S::from_count(n);
    let n_cubed = n_s * n_s * n_s;
    let two = S::from_count(2);
    let mut ks = Vec::with_capacity(n - 1);
    let mut cvm = Vec::with_capacity(n - 1);
    let mut wil = Vec::with_capacity(n - 1);
    for k in 1..n {
        let yk = y[k - 1];
        for (i, c) in cl.iter_mut().enumerate() {
            if yk <= y[i] {
                *c += 1;
            }
        }
        if k == 1 {
            a = y[1..].iter().filter(|&&yj| yk <= yj).count() as i64;
        } else {
            let lost = y[..k - 1].iter().filter(|&&yi| yi <= yk).count() as i64;
            let gained = y[k..].iter().filter(|&&yj| yk <= yj).count() as i64;
            a = a - lost + gained;
        }
        let mut t_max: i64 = 0;
        let mut t_sq = S::zero();
        for i in 0..n {
            let t = n_i * cl[i] - k as i64 * r[i];
            t_max = t_max.max(t.abs());
            let ts = from_i64::<S>(t);
            t_sq += ts * ts;
        }
        ks.push(from_i64::<S>(t_max) / n_s);
        cvm.push(t_sq / n_cubed);
        let w = 2 * a - k as i64 * (n_i - k as i64);
        wil.push(from_i64::<S>(w.abs()) / two);
    }
    (ks, cvm, wil)
}

fn finish<S: Scalar>(kind: StatisticKind, n: usize, profile: Vec<S>) -> Result<RawStatistics<S>> {
    let k_hat = profile_argmax(&profile)?;
    Ok(RawStatistics {
        kind,
        n,
        raw_value: profile[k_hat - 1],
        k_hat,
        profile,
    })
}

fn cusum_profile<S: Scalar>(y: &[S]) -> Vec<S> {
    let n = y.len();
    let n_s = S::from_count(n);
    let total: S = y.iter().copied().sum();
    let mut partial = S::zero();
    let mut profile = Vec::with_capacity(n - 1);
    for k in 1..n {
        partial += y[k - 1];
        profile.push((partial * n_s - S::from_count(k) * total).abs() / n_s);
    }
    profile
}

/// Kolmogorov–Smirnov change-point statistic.
pub fn ks_raw<S: Scalar>(y: &[S]) -> Result<RawStatistics<S>> {
    validate_series(y)?;
    let (ks, _, _) = rank_profiles(y);
    finish(StatisticKind::Ks, y.len(), ks)
}

/// Cramér–von Mises change-point statistic.
pub fn cvm_raw<S: Scalar>(y: &[S]) -> Result<RawStatistics<S>> {
    validate_series(y)?;
    let (_, cvm, _) = rank_profiles(y);
    finish(StatisticKind::Cvm, y.len(), cvm)
}

/// CUSUM change-point statistic on the values.
pub fn cusum_raw<S: Scalar>(y: &[S]) -> Result<RawStatistics<S>> {
    validate_series(y)?;
    finish(StatisticKind::Cusum, y.len(), cusum_profile(y))
}

/// Wilcoxon two-sample rank change-point statistic.
pub fn wilcoxon_raw<S: Scalar>(y: &[S]) -> Result<RawStatistics<S>> {
    validate_series(y)?;
    let (_, _, wil) = rank_profiles(y);
    finish(StatisticKind::Wilcoxon, y.len(), wil)
}

/// Dispatch by kind.
pub fn raw_statistic<S: Scalar>(kind: StatisticKind, y: &[S]) -> Result<RawStatistics<S>> {
    match kind {
        StatisticKind::Ks => ks_raw(y),
        StatisticKind::Cvm => cvm_raw(y),
        StatisticKind::Cusum => cusum_raw(y),
        StatisticKind::Wilcoxon => wilcoxon_raw(y),
    }
}

/// All four statistics sharing one pass over the rank counts, in the order
/// of [`StatisticKind::ALL`].
pub fn all_raw_statistics<S: Scalar>(y: &[S]) -> Result<[RawStatistics<S>; 4]> {
    validate_series(y)?;
    let n = y.len();
    let (ks, cvm, wil) = rank_profiles(y);
    Ok([
        finish(StatisticKind::Ks, n, ks)?,
        finish(StatisticKind::Cvm, n, cvm)?,
        finish(StatisticKind::Cusum, n, cusum_profile(y))?,
        finish(StatisticKind::Wilcoxon, n, wil)?,
    ])
}
