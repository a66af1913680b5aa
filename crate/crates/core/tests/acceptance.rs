//! Acceptance gate: twelve numbered criteria covering the full pipeline.
//!
//! Each test prints one `PASS criterion NN ...` / `FAIL criterion NN ...`
//! line directly to the process's stderr (bypassing the harness capture so
//! the verdicts are always visible), then asserts. Run the whole gate with
//!
//! ```text
//! cargo test --test acceptance
//! ```
//!
//! The heavy Monte Carlo criteria use fixed seeds, so reruns are exact.

use lrdcp::subordinate::NormalizationMode;
use lrdcp::{
    are_mean_variance, asymptotic_power, estimate_scale, fstar, gaussian_cubic_ratio,
    hermite_coeff, limit_functional, limit_quantile, local_whittle, normalization_dn,
    raw_statistic, reduction_residual, run_power_study, simulate, GaussianModel, HurstMode,
    LatentFamily, PowerRow, Scenario, SeedSpec, StatisticKind, StudyConfig, Subordinator,
};

/// Write the verdict straight to fd 2 (not through the captured test-local
/// stream) so every criterion leaves a visible line, then enforce it.
fn report(idx: u32, name: &str, pass: bool, details: &str) {
    use std::io::Write;
    let line = format!(
        "{} criterion {:02} {}: {}\n",
        if pass { "PASS" } else { "FAIL" },
        idx,
        name,
        details
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {idx:02} {name}: {details}");
}

fn find_rate<'a>(
    rows: &'a [PowerRow],
    stat: StatisticKind,
    n: usize,
    mode: HurstMode,
) -> &'a PowerRow {
    rows.iter()
        .find(|r| r.stat == stat && r.n == n && r.hurst_mode == mode)
        .expect("study row missing")
}

// ---------------------------------------------------------------------------
// 1. Known-H mean-shift power at reference cells
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_known_h_mean_shift_power() {
    let stats = vec![
        StatisticKind::Cvm,
        StatisticKind::Wilcoxon,
        StatisticKind::Cusum,
    ];
    let study_a = StudyConfig {
        scenarios: vec![Scenario::MeanShift { mu: 1.0 }],
        statistics: stats.clone(),
        hurst_modes: vec![HurstMode::Known],
        family: LatentFamily::Fgn,
        ns: vec![100, 250],
        hursts: vec![0.6],
        tau: 0.5,
        alpha: 0.05,
        reps: 1000,
        table_reps: 1000,
        master_seed: 0xAC01,
    };
    let study_b = StudyConfig {
        ns: vec![400],
        hursts: vec![0.8],
        master_seed: 0xAC01_B,
        ..study_a.clone()
    };
    let mut rows = run_power_study(&study_a).expect("study A").rows;
    rows.extend(run_power_study(&study_b).expect("study B").rows);

    // (statistic, n) -> reference power for the mean shift mu = 1, tau = 0.5
    let targets = [
        (StatisticKind::Cvm, 100, 0.919),
        (StatisticKind::Wilcoxon, 100, 0.930),
        (StatisticKind::Cusum, 100, 0.918),
        (StatisticKind::Cvm, 250, 1.000),
        (StatisticKind::Wilcoxon, 250, 0.998),
        (StatisticKind::Cusum, 250, 0.997),
        (StatisticKind::Cvm, 400, 0.830),
        (StatisticKind::Wilcoxon, 400, 0.770),
        (StatisticKind::Cusum, 400, 0.766),
    ];
    let mut pass = true;
    let mut details = String::new();
    for (stat, n, want) in targets {
        let got = find_rate(&rows, stat, n, HurstMode::Known).rate;
        let ok = (got - want).abs() <= 0.05;
        pass &= ok;
        details.push_str(&format!("{stat}@n={n}: {got:.3} vs {want:.3}; "));
    }
    details.push_str("tolerance 0.05");
    report(1, "known-H mean-shift power", pass, &details);
}

// ---------------------------------------------------------------------------
// 2. Known-H null size is the nominal level
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_known_h_null_size() {
    let study = StudyConfig {
        scenarios: vec![Scenario::Null],
        statistics: StatisticKind::ALL.to_vec(),
        hurst_modes: vec![HurstMode::Known],
        family: LatentFamily::Fgn,
        ns: vec![100],
        hursts: vec![0.6, 0.9],
        tau: 0.5,
        alpha: 0.05,
        reps: 4000,
        table_reps: 2000,
        master_seed: 0xAC02,
    };
    let rows = run_power_study(&study).expect("null study").rows;
    let mut pass = rows.len() == 8;
    let mut details = String::new();
    for row in &rows {
        let ok = (row.rate - 0.05).abs() <= 0.02;
        pass &= ok;
        details.push_str(&format!("{}@H={}: {:.4}; ", row.stat, row.hurst, row.rate));
    }
    details.push_str("band 0.05 +/- 0.02");
    report(2, "known-H null size", pass, &details);
}

// ---------------------------------------------------------------------------
// 3. Estimated-H null sizes: whole-series vs split estimation
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_estimated_h_null_sizes() {
    let study = StudyConfig {
        scenarios: vec![Scenario::Null],
        statistics: vec![StatisticKind::Cvm],
        hurst_modes: vec![HurstMode::Whittle, HurstMode::Split],
        family: LatentFamily::Fgn,
        ns: vec![400],
        hursts: vec![0.7],
        tau: 0.5,
        alpha: 0.05,
        reps: 1000,
        table_reps: 1000,
        master_seed: 0xAC03,
    };
    let rows = run_power_study(&study).expect("estimated-H study").rows;
    let whole = find_rate(&rows, StatisticKind::Cvm, 400, HurstMode::Whittle).rate;
    let split = find_rate(&rows, StatisticKind::Cvm, 400, HurstMode::Split).rate;
    let in_band = (0.02..=0.08).contains(&whole);
    let ordered = split > whole;
    let near_whole = (whole - 0.043).abs() <= 0.04;
    let near_split = (split - 0.081).abs() <= 0.04;
    let pass = in_band && ordered && near_whole && near_split;
    let details = format!(
        "whole-series size {whole:.4} (band [0.02, 0.08], ref 0.043 +/- 0.04), \
         split size {split:.4} (ref 0.081 +/- 0.04, must exceed whole-series)"
    );
    report(3, "estimated-H null sizes", pass, &details);
}

// ---------------------------------------------------------------------------
// 4. Rank statistics are bit-invariant under exp(); CUSUM is not
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_monotone_transform_invariance() {
    let reps = 100u64;
    let mut rank_equal = 0usize;
    let mut cusum_diff = 0usize;
    for r in 0..reps {
        let y = simulate(&GaussianModel::Fgn { hurst: 0.7 }, 200, SeedSpec::new(0xAC04, r))
            .expect("simulate")
            .values;
        let z: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let mut all_equal = true;
        for kind in [StatisticKind::Ks, StatisticKind::Cvm, StatisticKind::Wilcoxon] {
            let a = raw_statistic(kind, &y).expect("raw").raw_value;
            let b = raw_statistic(kind, &z).expect("raw").raw_value;
            all_equal &= a.to_bits() == b.to_bits();
        }
        rank_equal += usize::from(all_equal);
        let a = raw_statistic(StatisticKind::Cusum, &y).expect("raw").raw_value;
        let b = raw_statistic(StatisticKind::Cusum, &z).expect("raw").raw_value;
        cusum_diff += usize::from(a.to_bits() != b.to_bits());
    }
    let pass = rank_equal == reps as usize && cusum_diff >= 99;
    let details = format!(
        "KS/CvM/Wilcoxon bit-identical on {rank_equal}/{reps} series, \
         CUSUM changed on {cusum_diff}/{reps} (need all / >= 99)"
    );
    report(4, "monotone-transform invariance", pass, &details);
}

// ---------------------------------------------------------------------------
// 5. Incremental statistics equal O(n^3) enumeration on short series
// ---------------------------------------------------------------------------

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// n * F_k(x)*k-weighted two-sample difference at threshold x, split k.
fn t_profile(y: &[f64], k: usize, x: f64) -> f64 {
    let n = y.len() as f64;
    let head = y[..k].iter().filter(|&&v| v <= x).count() as f64;
    let all = y.iter().filter(|&&v| v <= x).count() as f64;
    n * head - k as f64 * all
}

fn brute_ks(y: &[f64]) -> f64 {
    let n = y.len();
    let mut best = 0.0f64;
    for k in 1..n {
        for &x in y {
            best = best.max(t_profile(y, k, x).abs());
        }
    }
    best / n as f64
}

fn brute_cvm(y: &[f64]) -> f64 {
    let n = y.len();
    let mut best = 0.0f64;
    for k in 1..n {
        let sum: f64 = y.iter().map(|&x| t_profile(y, k, x).powi(2)).sum();
        best = best.max(sum);
    }
    best / (n as f64).powi(3)
}

fn brute_wilcoxon(y: &[f64]) -> f64 {
    let n = y.len();
    let mut best = 0.0f64;
    for k in 1..n {
        let mut count = 0.0f64;
        for i in 0..k {
            for j in k..n {
                count += f64::from(u8::from(y[i] <= y[j]));
            }
        }
        best = best.max((count - (k * (n - k)) as f64 / 2.0).abs());
    }
    best
}

#[test]
fn criterion_05_brute_force_oracle_equivalence() {
    let mut state = 0xAC05u64;
    let mut worst = 0.0f64;
    for series_idx in 0..200usize {
        let n = 3 + series_idx % 10; // lengths 3..=12
        let y: Vec<f64> = (0..n)
            .map(|_| {
                let bits = splitmix(&mut state);
                if bits & 1 == 0 {
                    // small integer lattice: dense ties
                    ((bits >> 8) % 7) as f64 - 3.0
                } else {
                    (bits >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0
                }
            })
            .collect();
        let checks = [
            (StatisticKind::Ks, brute_ks(&y)),
            (StatisticKind::Cvm, brute_cvm(&y)),
            (StatisticKind::Wilcoxon, brute_wilcoxon(&y)),
        ];
        for (kind, brute) in checks {
            let fast = raw_statistic(kind, &y).expect("raw").raw_value;
            worst = worst.max((fast - brute).abs());
        }
    }
    let pass = worst <= 1e-12;
    let details = format!(
        "largest |incremental - enumeration| over 200 series (n <= 12, heavy ties) = {worst:.3e}, \
         tolerance 1e-12"
    );
    report(5, "brute-force oracle equivalence", pass, &details);
}

// ---------------------------------------------------------------------------
// 6. First nonzero expansion coefficients match their closed forms
// ---------------------------------------------------------------------------

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[test]
fn criterion_06_hermite_coefficient_closed_forms() {
    let id = Subordinator::Identity;
    let mut worst_id = 0.0f64;
    for x in id.quantile_grid(201) {
        let j1 = hermite_coeff(&id, 1, x).expect("coeff").value;
        worst_id = worst_id.max((j1 + phi(x)).abs());
    }
    let sq = Subordinator::Square;
    let mut worst_sq = 0.0f64;
    for x in sq.quantile_grid(201) {
        let j2 = hermite_coeff(&sq, 2, x).expect("coeff").value;
        let closed = if x > 0.0 { -2.0 * x.sqrt() * phi(x.sqrt()) } else { 0.0 };
        worst_sq = worst_sq.max((j2 - closed).abs());
    }
    let pass = worst_id < 1e-8 && worst_sq < 1e-8;
    let details = format!(
        "sup |J_1 + phi| = {worst_id:.3e} (identity), \
         sup |J_2 + 2 sqrt(x) phi(sqrt(x))| = {worst_sq:.3e} (square); tolerance 1e-8 on 201 quantile points"
    );
    report(6, "expansion-coefficient closed forms", pass, &details);
}

// ---------------------------------------------------------------------------
// 7. Normalization: exact double sum identity and asymptotic agreement
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_normalization_identity() {
    let mut pass = true;
    let mut details = String::new();
    for (n, h) in [(64usize, 0.6f64), (512, 0.75), (4096, 0.9)] {
        let d = normalization_dn(n, 1, &GaussianModel::Fgn { hurst: h }, NormalizationMode::Exact)
            .expect("exact dn")
            .value;
        let target = (n as f64).powf(2.0 * h);
        let rel = (d * d - target).abs() / target;
        pass &= rel <= 1e-9;
        details.push_str(&format!("d^2(n={n},H={h}) rel err {rel:.2e}; "));
    }
    let model = GaussianModel::Fgn { hurst: 0.9 };
    for m in [1u32, 2] {
        let exact = normalization_dn(4096, m, &model, NormalizationMode::Exact)
            .expect("exact")
            .value;
        let asym = normalization_dn(4096, m, &model, NormalizationMode::Asymptotic)
            .expect("asymptotic")
            .value;
        let rel = (asym * asym - exact * exact).abs() / (exact * exact);
        pass &= rel <= 0.02;
        details.push_str(&format!("asym vs exact d^2 (m={m}) rel err {rel:.2e}; "));
    }
    details.push_str("tolerances 1e-9 and 2%");
    report(7, "normalization identity", pass, &details);
}

// ---------------------------------------------------------------------------
// 8. Expansion residual shrinks with the sample size
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_reduction_residual_decay() {
    let model = GaussianModel::Fgn { hurst: 0.9 };
    let g = Subordinator::Square;
    let sups: Vec<f64> = [256usize, 1024, 4096]
        .iter()
        .map(|&n| {
            reduction_residual(&model, &g, 2, n, 200, 0xAC08)
                .expect("residual")
                .mean_sup
        })
        .collect();
    let pass = sups.windows(2).all(|w| w[1] < w[0]);
    let details = format!(
        "mean sup residual over n in {{256, 1024, 4096}} = {:.4} > {:.4} > {:.4} required",
        sups[0], sups[1], sups[2]
    );
    report(8, "expansion-residual decay", pass, &details);
}

// ---------------------------------------------------------------------------
// 9. Whittle estimator consistency and the plug-in scale level
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_whittle_consistency_and_scale_level() {
    let mut pass = true;
    let mut details = String::new();
    for h in [0.6f64, 0.8] {
        let mut sum = 0.0;
        for r in 0..200u64 {
            let y = simulate(&GaussianModel::Fgn { hurst: h }, 1000, SeedSpec::new(0xAC09, r))
                .expect("simulate")
                .values;
            sum += local_whittle(&y).expect("whittle").value;
        }
        let mean = sum / 200.0;
        pass &= (mean - h).abs() <= 0.03;
        details.push_str(&format!("mean H_hat = {mean:.4} at H = {h} (+/- 0.03); "));
    }
    let mut c_sum = 0.0;
    for r in 0..200u64 {
        let y = simulate(&GaussianModel::Fgn { hurst: 0.8 }, 2000, SeedSpec::new(0xAC09_C, r))
            .expect("simulate")
            .values;
        let h_hat = local_whittle(&y).expect("whittle").value;
        c_sum += estimate_scale(&y, h_hat, None).expect("scale").c_hat;
    }
    let c_mean = c_sum / 200.0;
    let c_ok = (c_mean - 0.48).abs() / 0.48 <= 0.15;
    pass &= c_ok;
    details.push_str(&format!(
        "mean C_hat = {c_mean:.4} vs 0.48 (within 15%: {c_ok})"
    ));
    report(9, "Whittle consistency and scale level", pass, &details);
}

// ---------------------------------------------------------------------------
// 10. Null levels of the limit functional
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_limit_functional_null_levels() {
    // At H = 1/2 the order-1 bridge is Brownian; P(sup |B~| > 1.358) = 0.05.
    let sample = limit_functional(1, 0.5, 4096, 10_000, None, 0xAC10).expect("sample");
    let rate = sample.values.iter().filter(|&&v| v > 1.358).count() as f64 / 10_000.0;
    let rate_ok = (rate - 0.05).abs() <= 0.01;
    let power0 = asymptotic_power(0.0, 0.5, 0.7, 0.05, 10_000, 0xAC10_2).expect("power");
    let power_ok = (power0 - 0.05).abs() <= 0.01;
    let pass = rate_ok && power_ok;
    let details = format!(
        "P(sup > 1.358) = {rate:.4} at H = 0.5 (0.05 +/- 0.01), \
         zero-drift power = {power0:.4} (alpha +/- 0.01)"
    );
    report(10, "limit-functional null levels", pass, &details);
}

// ---------------------------------------------------------------------------
// 11. Efficiency-functional properties
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_efficiency_functional_properties() {
    let (tau, k1, k2, h) = (0.5, 0.1, 0.9, 0.7);
    let q = limit_quantile(1, h, 0.05, 1024, 4000, 0xAC11).expect("quantile");
    let base = fstar(1.25, 0.0, q, tau, k1, k2).expect("fstar");
    let exact = base == 1.25;
    let raised = fstar(1.25, 0.8, q, tau, k1, k2).expect("fstar") > 1.25;
    let mut are_above = true;
    for c2_star in [0.25f64, 1.0] {
        are_above &= are_mean_variance(1.0, c2_star, q, tau, k1, k2, h).expect("are") > 1.0;
    }
    let are_tiny = are_mean_variance(1.0, 1e-6, q, tau, k1, k2, h).expect("are");
    let limit_one = (are_tiny - 1.0).abs() <= 1e-3;
    let ratio_err = (gaussian_cubic_ratio() - 1.0 / 3.0).abs();
    let pass = exact && raised && are_above && limit_one && ratio_err <= 1e-8;
    let details = format!(
        "fstar(C1, 0) = C1 exactly: {exact}; variance drift raises it: {raised}; \
         ARE > 1 for C2* > 0: {are_above}; ARE(C2* = 1e-6) = {are_tiny:.6}; \
         |cubic ratio - 1/3| = {ratio_err:.2e}"
    );
    report(11, "efficiency-functional properties", pass, &details);
}

// ---------------------------------------------------------------------------
// 12. Short-memory AR(1) under-rejection with estimated H
// ---------------------------------------------------------------------------

#[test]
fn criterion_12_short_memory_under_rejection() {
    let study = StudyConfig {
        scenarios: vec![Scenario::Null],
        statistics: vec![StatisticKind::Cvm],
        hurst_modes: vec![HurstMode::Whittle],
        family: LatentFamily::Ar1 { ar: 0.6 },
        ns: vec![250],
        hursts: vec![0.5],
        tau: 0.5,
        alpha: 0.05,
        reps: 1000,
        table_reps: 1000,
        master_seed: 0xAC12,
    };
    let rows = run_power_study(&study).expect("AR(1) study").rows;
    let rate = rows[0].rate;
    let pass = rate <= 0.03;
    let details = format!(
        "null rejection rate {rate:.4} on AR(1) a = 0.6 with estimated H (reference 0.004, gate <= 0.03)"
    );
    report(12, "short-memory under-rejection", pass, &details);
}
