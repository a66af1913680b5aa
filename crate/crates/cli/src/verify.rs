//! Invariant suites behind `lrdcp verify`: each check recomputes a
//! structural identity of the library and reports PASS/FAIL with the
//! measured values.

use lrdcp::normal::phi;
use lrdcp::subordinate::NormalizationMode;
use lrdcp::{
    all_raw_statistics, asymptotic_power_with, fstar, gaussian_cubic_ratio, hermite_coeff,
    limit_bridge, normalization_dn, psi_tau, reduction_residual, simulate, Error, GaussianModel,
    Result, SeedSpec, StatisticKind, Subordinator,
};

pub struct Check {
    pub name: String,
    pub pass: bool,
    pub details: String,
}

fn check(name: impl Into<String>, pass: bool, details: String) -> Check {
    Check {
        name: name.into(),
        pass,
        details,
    }
}

/// Order-m expansion residual must shrink as n grows.
pub fn suite_reduction(ns: &[usize], reps: usize, seed: u64) -> Result<Vec<Check>> {
    let model = GaussianModel::Fgn { hurst: 0.9 };
    let g = Subordinator::Square;
    let mut sups = Vec::new();
    for &n in ns {
        let report = reduction_residual(&model, &g, 2, n, reps, seed)?;
        sups.push((n, report.mean_sup));
    }
    let mut checks = Vec::new();
    for w in sups.windows(2) {
        let ((n0, s0), (n1, s1)) = (w[0], w[1]);
        checks.push(check(
            format!("reduction residual decreases {n0} -> {n1}"),
            s1 < s0,
            format!("mean sup {s0:.6} -> {s1:.6}"),
        ));
    }
    if checks.is_empty() {
        checks.push(check(
            "reduction residual finite",
            sups[0].1.is_finite(),
            format!("mean sup {:.6} at n = {}", sups[0].1, sups[0].0),
        ));
    }
    Ok(checks)
}

/// First- and second-order Hermite coefficients match their closed forms.
pub fn suite_hermite() -> Result<Vec<Check>> {
    let identity = Subordinator::Identity;
    let mut worst_id = 0.0f64;
    for &x in &identity.quantile_grid(201) {
        let j1 = hermite_coeff(&identity, 1, x)?.value;
        worst_id = worst_id.max((j1 + phi(x)).abs());
    }
    let square = Subordinator::Square;
    let mut worst_sq = 0.0f64;
    for &x in &square.quantile_grid(201) {
        let j2 = hermite_coeff(&square, 2, x)?.value;
        let closed = if x >= 0.0 {
            -2.0 * x.sqrt() * phi(x.sqrt())
        } else {
            0.0
        };
        worst_sq = worst_sq.max((j2 - closed).abs());
    }
    Ok(vec![
        check(
            "identity J_1 = -phi",
            worst_id < 1e-8,
            format!("sup error {worst_id:.3e}"),
        ),
        check(
            "square J_2 = -2 sqrt(x) phi(sqrt(x))",
            worst_sq < 1e-8,
            format!("sup error {worst_sq:.3e}"),
        ),
    ])
}

/// Exact normalization identity and asymptotic agreement.
pub fn suite_dn() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (n, h) in [(64usize, 0.6), (512, 0.75), (4096, 0.9)] {
        let model = GaussianModel::Fgn { hurst: h };
        let d = normalization_dn(n, 1, &model, NormalizationMode::Exact)?.value;
        let target = (n as f64).powf(2.0 * h);
        let rel = (d * d - target).abs() / target;
        checks.push(check(
            format!("exact d^2 = n^2H at (n={n}, H={h})"),
            rel < 1e-9,
            format!("relative error {rel:.3e}"),
        ));
    }
    for m in [1u32, 2] {
        let model = GaussianModel::Fgn { hurst: 0.9 };
        let exact = normalization_dn(4096, m, &model, NormalizationMode::Exact)?.value;
        let asym = normalization_dn(4096, m, &model, NormalizationMode::Asymptotic)?.value;
        let rel = (exact - asym).abs() / exact;
        checks.push(check(
            format!("asymptotic d within 2% at (n=4096, m={m})"),
            rel < 0.02,
            format!("relative gap {rel:.4}"),
        ));
    }
    Ok(checks)
}

/// Rank statistics are bit-identical under a strictly increasing marginal
/// transform; CUSUM is not.
pub fn suite_monotone(reps: usize, seed: u64) -> Result<Vec<Check>> {
    let model = GaussianModel::Fgn { hurst: 0.7 };
    let mut identical = [0usize; 3];
    let mut cusum_differs = 0usize;
    for r in 0..reps as u64 {
        let y = simulate(&model, 200, SeedSpec::new(seed, r))?;
        let z: Vec<f64> = y.values.iter().map(|&v| v.exp()).collect();
        let a = all_raw_statistics(&y.values)?;
        let b = all_raw_statistics(&z)?;
        for (i, (sa, sb)) in a.iter().zip(b.iter()).enumerate() {
            match sa.kind {
                StatisticKind::Cusum => {
                    if sa.raw_value.to_bits() != sb.raw_value.to_bits() {
                        cusum_differs += 1;
                    }
                }
                _ => {
                    let slot = if i > 2 { 2 } else { i };
                    if sa.raw_value.to_bits() == sb.raw_value.to_bits() {
                        identical[slot] += 1;
                    }
                }
            }
        }
    }
    let rank_ok = identical.iter().all(|&c| c == reps);
    Ok(vec![
        check(
            "ks/cvm/wilcoxon bit-identical under exp",
            rank_ok,
            format!("{identical:?} of {reps} series each"),
        ),
        check(
            "cusum responds to exp",
            cusum_differs >= reps.saturating_sub(1),
            format!("{cusum_differs} of {reps} differ"),
        ),
    ])
}

/// Limit-bridge structure: the endpoint vanishes and drift raises the
/// rejection probability.
pub fn suite_bridge(reps: usize, seed: u64) -> Result<Vec<Check>> {
    let mut endpoint = 0.0f64;
    for (m, h) in [(1u32, 0.5), (1, 0.8), (2, 0.8)] {
        let b = limit_bridge(m, h, 128, SeedSpec::new(seed, m as u64))?;
        endpoint = endpoint.max(b[127].abs());
    }
    let reps = reps.max(100);
    let p0 = asymptotic_power_with(1, 0.7, 0.0, 0.5, 0.05, 128, reps, seed)?;
    let p1 = asymptotic_power_with(1, 0.7, 2.5, 0.5, 0.05, 128, reps, seed)?;
    Ok(vec![
        check(
            "bridge vanishes at t = 1",
            endpoint < 1e-12,
            format!("max |Z(1)| = {endpoint:.3e}"),
        ),
        check(
            "drift raises limit power",
            p1 > p0,
            format!("power {p0:.3} -> {p1:.3} at C = 2.5"),
        ),
    ])
}

/// Drift-functional identities for the efficiency machinery.
pub fn suite_fstar() -> Result<Vec<Check>> {
    let collapsed = fstar(1.25, 0.0, 1.36, 0.5, 0.1, 0.9)?;
    let r = gaussian_cubic_ratio();
    let (c1, c2, q, tau, k1, k2) = (1.0, 1.0, 1.36, 0.5, 0.1, 0.9);
    let v = fstar(c1, c2, q, tau, k1, k2)?;
    let endpoint = |t: f64| {
        let p: f64 = psi_tau(t, tau);
        let a = q + c1 * p;
        let b2 = c2 * c2 * r * p * p;
        c1 + b2 / (p * ((a * a + b2).sqrt() + a))
    };
    let expected = endpoint(k1).min(endpoint(k2));
    Ok(vec![
        check(
            "fstar collapses to C1 at C2 = 0",
            collapsed == 1.25,
            format!("fstar = {collapsed}"),
        ),
        check(
            "gaussian cubic ratio = 1/3",
            (r - 1.0 / 3.0).abs() < 1e-8,
            format!("r = {r:.12}"),
        ),
        check(
            "fstar minimum attained at an endpoint",
            (v - expected).abs() < 1e-9,
            format!("grid min {v:.9} vs endpoint {expected:.9}"),
        ),
    ])
}

/// Run the requested suite(s); `names`: reduction, hermite, dn, monotone,
/// bridge, fstar, or all.
pub fn run_suites(suite: &str, ns: &[usize], reps: usize, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut known = false;
    let want = |name: &str| suite == "all" || suite == name;
    if want("reduction") {
        known = true;
        checks.extend(suite_reduction(ns, reps, seed)?);
    }
    if want("hermite") {
        known = true;
        checks.extend(suite_hermite()?);
    }
    if want("dn") {
        known = true;
        checks.extend(suite_dn()?);
    }
    if want("monotone") {
        known = true;
        checks.extend(suite_monotone(reps, seed)?);
    }
    if want("bridge") {
        known = true;
        checks.extend(suite_bridge(reps, seed)?);
    }
    if want("fstar") {
        known = true;
        checks.extend(suite_fstar()?);
    }
    if !known {
        return Err(Error::Domain(format!(
            "unknown suite '{suite}' (expected all, reduction, hermite, dn, monotone, bridge, or fstar)"
        )));
    }
    Ok(checks)
}
