//! Simulation experiments: change injection, local-alternative drift
//! functions, empirical size/power studies, and asymptotic relative
//! efficiency of the four tests.
//!
//! A change is injected by simulating one latent Gaussian path and applying
//! the pre-change transform up to the break point and the post-change
//! transform after it, so that the dependence structure is shared across
//! the break and only the instantaneous transform changes. Power studies
//! compare each raw statistic against raw-scale Monte Carlo critical
//! values built under a fractional-Gaussian-noise null at the known or
//! estimated Hurst index; estimated indices calibrate through linear
//! interpolation on a step-0.01 table grid. The efficiency machinery
//! evaluates the drift functional f* of combined mean/variance changes on
//! a fine grid and solves the matching mean-shift size by bisection.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{
    asymptotic_power, ensure_entries, hurst_grid, mc_critical_values, psi_tau,
    CriticalValueTable,
};
use crate::error::{Error, Result};
use crate::estimators::{local_whittle, split_whittle_at};
use crate::normal::{cap_phi, phi};
use crate::quad;
use crate::seed::{child_seed, SeedSpec};
use crate::sim::{simulate, GaussianModel, TimeSeries};
use crate::stats::{raw_statistic, StatisticKind};
use crate::subordinate::{
    normalization_dn, NormalizationMode, QuantileMap, Subordinator, INTEGRATION_CUTOFF,
};

// ---------------------------------------------------------------------------
// Change injection
// ---------------------------------------------------------------------------

/// A marginal change: the transform applied before the break, the transform
/// applied after it, and the break fraction tau in (0, 1]. tau = 1 (or
/// pre = post) means no change.
#[derive(Debug, Clone)]
pub struct ChangeSpec {
    pub pre: Subordinator,
    pub post: Subordinator,
    pub tau: f64,
}

impl ChangeSpec {
    pub fn new(pre: Subordinator, post: Subordinator, tau: f64) -> Result<Self> {
        let spec = ChangeSpec { pre, post, tau };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::domain(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        self.pre.validate()?;
        self.post.validate()
    }

    /// No change at all: identity marginals throughout.
    pub fn null() -> Self {
        ChangeSpec {
            pre: Subordinator::Identity,
            post: Subordinator::Identity,
            tau: 1.0,
        }
    }

    /// Standard Gaussian marginal shifted by mu after the break.
    pub fn mean_shift(mu: f64, tau: f64) -> Result<Self> {
        ChangeSpec::new(
            Subordinator::Identity,
            Subordinator::MeanShift { mu },
            tau,
        )
    }

    /// Standard deviation changes from 1 to sigma after the break (the
    /// variance-change table row sigma^2 = 1 -> 5/4 corresponds to
    /// sigma = sqrt(5)/2).
    pub fn variance_change(sigma: f64, tau: f64) -> Result<Self> {
        ChangeSpec::new(Subordinator::Identity, Subordinator::Scale { sigma }, tau)
    }

    /// Mean and standard deviation change jointly: x -> sigma x + mu.
    pub fn mean_variance(mu: f64, sigma: f64, tau: f64) -> Result<Self> {
        ChangeSpec::new(
            Subordinator::Identity,
            Subordinator::Affine { sigma, mu },
            tau,
        )
    }

    /// Chi-square pair: x^2 before the break, x^2 + x/2 + 1/2 after it. The
    /// pre-change indicator class has Hermite rank 2, the post-change class
    /// rank 1.
    pub fn chi_square(tau: f64) -> Result<Self> {
        ChangeSpec::new(
            Subordinator::Square,
            Subordinator::AffineSquare {
                a: 1.0,
                b: 0.5,
                c: 0.5,
            },
            tau,
        )
    }

    /// Marginal becomes the contamination mixture
    /// (1 - delta) N(0,1) + delta N(1,1) after the break, realized through
    /// the mixture's quantile transform.
    pub fn mixture(delta: f64, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::domain(format!(
                "mixture weight must lie in [0, 1], got {delta}"
            )));
        }
        ChangeSpec::new(
            Subordinator::Identity,
            Subordinator::Quantile(QuantileMap::gaussian_mixture(delta, 1.0, 1.0)),
            tau,
        )
    }

    /// Pathological rank-change pair: the folded transform
    /// Phi^{-1}(2 Phi(|x|) - 1) (Hermite rank 2, standard Gaussian marginal)
    /// switches to a split-square-to-Gaussian transform with scale `a` on
    /// the positive branch and marginal N(mu, 1) (Hermite rank 1). Exposed
    /// for exploration; the drift and rank change at different rates, so
    /// the usual limit theory does not cover it.
    pub fn rank_change(a: f64, mu: f64, tau: f64) -> Result<Self> {
        ChangeSpec::new(
            Subordinator::FoldedToGaussian,
            Subordinator::SplitSquareToGaussian { a, mu },
            tau,
        )
    }
}

/// Simulate the latent Gaussian path once and apply `spec.pre` to the first
/// floor(n tau) observations and `spec.post` to the rest. The latent path is
/// shared across the break, so pre = post reproduces the unchanged series
/// bit for bit regardless of tau.
pub fn inject_change(
    model: &GaussianModel,
    spec: &ChangeSpec,
    n: usize,
    seed: SeedSpec,
) -> Result<TimeSeries> {
    if n < 2 {
        return Err(Error::domain(format!("n must be >= 2, got {n}")));
    }
    spec.validate()?;
    let latent = simulate(model, n, seed)?;
    let k = ((n as f64) * spec.tau).floor() as usize;
    let k = k.min(n);
    let values = latent
        .values
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if i < k {
                spec.pre.eval(x)
            } else {
                spec.post.eval(x)
            }
        })
        .collect();
    Ok(TimeSeries {
        values,
        provenance: latent.provenance,
    })
}

// ---------------------------------------------------------------------------
// Local alternatives
// ---------------------------------------------------------------------------

/// The marginal drift class of a local alternative.
#[derive(Clone, Debug)]
pub enum AlternativeKind {
    /// G_n = G + mu_n with mu_n ~ C d_n / n: g(x) = C f_G(x).
    MeanShift { c: f64 },
    /// G_n = sigma_n G with sigma_n - 1 ~ C d_n / n: g(x) = C x f_G(x).
    VarianceChange { c: f64 },
    /// G_n = sigma_n G + mu_n: g(x) = f_G(x) (C1 + C2 x).
    MeanVariance { c1: f64, c2: f64 },
    /// F_{(n)} = (1 - delta_n) F + delta_n F* with delta_n ~ d_n / n:
    /// g(x) = F*(x) - F(x).
    Mixture { target: QuantileMap },
    /// Scale change of a chi-square marginal, a_n - 1 ~ C d_{n,2} / n:
    /// g(x) = C sqrt(x) phi(sqrt(x)) 1_{x >= 0}.
    ChiSquareScale { c: f64 },
}

/// A local alternative: its drift kind plus a textual description of the
/// rate at which the change shrinks.
#[derive(Clone, Debug)]
pub struct LocalAlternative {
    pub kind: AlternativeKind,
    /// How the change magnitude scales with n.
    pub rate: &'static str,
}

impl LocalAlternative {
    pub fn mean_shift(c: f64) -> Self {
        LocalAlternative {
            kind: AlternativeKind::MeanShift { c },
            rate: "mu_n ~ C d_{n,1} / n",
        }
    }

    pub fn variance_change(c: f64) -> Self {
        LocalAlternative {
            kind: AlternativeKind::VarianceChange { c },
            rate: "sigma_n - 1 ~ C d_{n,1} / n",
        }
    }

    pub fn mean_variance(c1: f64, c2: f64) -> Self {
        LocalAlternative {
            kind: AlternativeKind::MeanVariance { c1, c2 },
            rate: "mu_n ~ C1 d_{n,1} / n, sigma_n - 1 ~ C2 d_{n,1} / n",
        }
    }

    pub fn mixture(target: QuantileMap) -> Self {
        LocalAlternative {
            kind: AlternativeKind::Mixture { target },
            rate: "delta_n ~ d_{n,1} / n",
        }
    }

    pub fn chi_square_scale(c: f64) -> Self {
        LocalAlternative {
            kind: AlternativeKind::ChiSquareScale { c },
            rate: "a_n - 1 ~ C d_{n,2} / n",
        }
    }

    /// The drift function g for a standard Gaussian pre-change marginal
    /// (f_G = phi, F = Phi).
    pub fn g(&self, x: f64) -> f64 {
        match &self.kind {
            AlternativeKind::MeanShift { c } => c * phi(x),
            AlternativeKind::VarianceChange { c } => c * x * phi(x),
            AlternativeKind::MeanVariance { c1, c2 } => phi(x) * (c1 + c2 * x),
            AlternativeKind::Mixture { target } => target.cdf_at(x) - cap_phi(x),
            AlternativeKind::ChiSquareScale { c } => {
                if x >= 0.0 {
                    let s = x.sqrt();
                    c * s * phi(s)
                } else {
                    0.0
                }
            }
        }
    }

    /// Total variation of g over [lo, hi], summed over a uniform partition.
    pub fn total_variation(&self, lo: f64, hi: f64, steps: usize) -> f64 {
        let mut tv = 0.0;
        let mut prev = self.g(lo);
        for i in 1..=steps {
            let x = lo + (hi - lo) * i as f64 / steps as f64;
            let v = self.g(x);
            tv += (v - prev).abs();
            prev = v;
        }
        tv
    }
}

/// Evaluate the drift function of a local alternative at x.
pub fn local_alternative_g(alt: &LocalAlternative, x: f64) -> f64 {
    alt.g(x)
}

// ---------------------------------------------------------------------------
// Power studies
// ---------------------------------------------------------------------------

/// A named change scenario for power tables; parameters are the change
/// magnitudes, the break fraction comes from the study config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scenario")]
pub enum Scenario {
    Null,
    MeanShift { mu: f64 },
    VarianceChange { sigma: f64 },
    MeanVariance { mu: f64, sigma: f64 },
    ChiSquare,
    Mixture { delta: f64 },
    RankChange { a: f64, mu: f64 },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Null => "null",
            Scenario::MeanShift { .. } => "mean_shift",
            Scenario::VarianceChange { .. } => "variance_change",
            Scenario::MeanVariance { .. } => "mean_variance",
            Scenario::ChiSquare => "chi_square",
            Scenario::Mixture { .. } => "mixture",
            Scenario::RankChange { .. } => "rank_change",
        }
    }

    pub fn change_spec(&self, tau: f64) -> Result<ChangeSpec> {
        match *self {
            Scenario::Null => ChangeSpec::new(
                Subordinator::Identity,
                Subordinator::Identity,
                tau.min(1.0),
            ),
            Scenario::MeanShift { mu } => ChangeSpec::mean_shift(mu, tau),
            Scenario::VarianceChange { sigma } => ChangeSpec::variance_change(sigma, tau),
            Scenario::MeanVariance { mu, sigma } => ChangeSpec::mean_variance(mu, sigma, tau),
            Scenario::ChiSquare => ChangeSpec::chi_square(tau),
            Scenario::Mixture { delta } => ChangeSpec::mixture(delta, tau),
            Scenario::RankChange { a, mu } => ChangeSpec::rank_change(a, mu, tau),
        }
    }
}

/// How each test's critical value chooses its Hurst index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HurstMode {
    /// Calibrate at the latent simulation H.
    Known,
    /// Local Whittle estimate from each series.
    Whittle,
    /// Split local Whittle around each statistic's change-point estimate.
    Split,
}

impl HurstMode {
    pub fn name(&self) -> &'static str {
        match self {
            HurstMode::Known => "known",
            HurstMode::Whittle => "whittle",
            HurstMode::Split => "split",
        }
    }
}

/// The latent Gaussian family a study simulates from. The study grid is
/// indexed by a nominal H; each family maps it to concrete parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum LatentFamily {
    /// Fractional Gaussian noise at exactly the grid H.
    Fgn,
    /// FARIMA(0, d, 0) with d = H - 1/2.
    Farima00,
    /// FARIMA(1, d, 0) with d = H - 1/2 and the given AR coefficient.
    Farima10 { ar: f64 },
    /// Short-memory AR(1); the grid H is echoed in the output but the
    /// known-H calibration uses H = 1/2.
    Ar1 { ar: f64 },
}

impl LatentFamily {
    pub fn model(&self, grid_h: f64) -> GaussianModel {
        match *self {
            LatentFamily::Fgn => GaussianModel::Fgn { hurst: grid_h },
            LatentFamily::Farima00 => GaussianModel::Farima00 { d: grid_h - 0.5 },
            LatentFamily::Farima10 { ar } => GaussianModel::Farima10 {
                d: grid_h - 0.5,
                ar,
            },
            LatentFamily::Ar1 { ar } => GaussianModel::Ar1 { ar },
        }
    }

    /// The H that "known" calibration uses for a grid point.
    pub fn known_hurst(&self, grid_h: f64) -> f64 {
        match self {
            LatentFamily::Ar1 { .. } => 0.5,
            _ => grid_h,
        }
    }
}

/// Full description of a power study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenarios: Vec<Scenario>,
    pub statistics: Vec<StatisticKind>,
    pub hurst_modes: Vec<HurstMode>,
    pub family: LatentFamily,
    pub ns: Vec<usize>,
    pub hursts: Vec<f64>,
    pub tau: f64,
    pub alpha: f64,
    /// Replicates per cell.
    pub reps: usize,
    /// Monte Carlo size per critical-value table entry.
    pub table_reps: usize,
    pub master_seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            scenarios: vec![Scenario::MeanShift { mu: 1.0 }],
            statistics: StatisticKind::ALL.to_vec(),
            hurst_modes: vec![HurstMode::Known],
            family: LatentFamily::Fgn,
            ns: vec![100],
            hursts: vec![0.6],
            tau: 0.5,
            alpha: 0.05,
            reps: 1000,
            table_reps: 1000,
            master_seed: 0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 100 {
            return Err(Error::domain(format!(
                "a power study needs reps >= 100, got {}",
                self.reps
            )));
        }
        if self.scenarios.is_empty()
            || self.statistics.is_empty()
            || self.hurst_modes.is_empty()
            || self.ns.is_empty()
            || self.hursts.is_empty()
        {
            return Err(Error::domain(
                "scenarios, statistics, hurst_modes, ns, and hursts must all be non-empty",
            ));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::domain(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        for &n in &self.ns {
            if n < 8 {
                return Err(Error::domain(format!("cell length n = {n} is too short")));
            }
        }
        for &h in &self.hursts {
            self.family.model(h).validate()?;
            // The latent-fGn and FARIMA families target the long-memory
            // regime: calibration grids and the estimator clamp both live on
            // H > 1/2, so a grid point at or below 1/2 would quietly pair a
            // short-memory simulation with long-memory critical values. The
            // AR(1) family is the designated short-memory benchmark and keeps
            // the grid H as a display label only.
            if !matches!(self.family, LatentFamily::Ar1 { .. }) && !(h > 0.5 && h < 1.0) {
                return Err(Error::domain(format!(
                    "long-memory study grids need H in (0.5, 1), got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// One cell of a power table.
#[derive(Debug, Clone, Serialize)]
pub struct PowerRow {
    pub scenario: String,
    pub stat: StatisticKind,
    pub hurst_mode: HurstMode,
    pub n: usize,
    #[serde(rename = "H")]
    pub hurst: f64,
    /// Empirical rejection rate in [0, 1].
    pub rate: f64,
    pub reps: usize,
    /// Replicates whose Hurst estimation failed; they count as
    /// non-rejections and are flagged here rather than dropped.
    pub failed: usize,
}

/// All cells of a study plus its reproducibility header.
#[derive(Debug, Clone, Serialize)]
pub struct PowerTable {
    pub rows: Vec<PowerRow>,
    pub reps: usize,
    pub master_seed: u64,
}

impl PowerTable {
    /// CSV with columns scenario,stat,hurst_mode,n,H,rate,reps.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,stat,hurst_mode,n,H,rate,reps\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{}\n",
                r.scenario,
                r.stat,
                r.hurst_mode.name(),
                r.n,
                r.hurst,
                r.rate,
                r.reps
            ));
        }
        out
    }

    /// Find one cell.
    pub fn row(
        &self,
        scenario: &str,
        stat: StatisticKind,
        mode: HurstMode,
        n: usize,
        hurst: f64,
    ) -> Option<&PowerRow> {
        self.rows.iter().find(|r| {
            r.scenario == scenario
                && r.stat == stat
                && r.hurst_mode == mode
                && r.n == n
                && (r.hurst - hurst).abs() < 1e-12
        })
    }
}

struct RepMeasure {
    /// Raw statistic values, aligned with the config's statistics list.
    raws: Vec<f64>,
    /// Whole-series Whittle estimate (None = not requested or failed).
    whittle: Option<f64>,
    /// Split estimates per statistic (None = not requested or failed).
    splits: Vec<Option<f64>>,
}

fn measure_one(
    model: &GaussianModel,
    spec: &ChangeSpec,
    n: usize,
    seed: SeedSpec,
    statistics: &[StatisticKind],
    need_whittle: bool,
    need_split: bool,
) -> Result<RepMeasure> {
    let y = inject_change(model, spec, n, seed)?;
    let mut raws = Vec::with_capacity(statistics.len());
    let mut splits = Vec::with_capacity(statistics.len());
    for &kind in statistics {
        let rs = raw_statistic(kind, &y.values)?;
        splits.push(if need_split {
            split_whittle_at(&y.values, rs.k_hat).ok().map(|e| e.value)
        } else {
            None
        });
        raws.push(rs.raw_value);
    }
    let whittle = if need_whittle {
        local_whittle(&y.values).ok().map(|e| e.value)
    } else {
        None
    };
    Ok(RepMeasure {
        raws,
        whittle,
        splits,
    })
}

fn insert_bracket(grid: &[f64], h: f64, needed: &mut BTreeSet<u64>) {
    let h = h.clamp(grid[0], grid[grid.len() - 1]);
    let i = grid.partition_point(|&g| g < h);
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[i.min(grid.len() - 1)];
    needed.insert(lo.to_bits());
    needed.insert(hi.to_bits());
}

fn decide_estimated<'a>(
    table: &CriticalValueTable,
    kind: StatisticKind,
    n: usize,
    alpha: f64,
    pairs: impl Iterator<Item = (f64, Option<f64>)> + 'a,
) -> Result<(usize, usize)> {
    let mut hits = 0usize;
    let mut failed = 0usize;
    for (raw, est) in pairs {
        match est {
            Some(h) => {
                let crit = table.lookup_interpolated(kind, n, h, alpha).ok_or_else(|| {
                    Error::Table(format!(
                        "missing interpolation support for {kind} at n = {n}, H = {h}"
                    ))
                })?;
                if raw > crit {
                    hits += 1;
                }
            }
            None => failed += 1,
        }
    }
    Ok((hits, failed))
}

/// Run the full study: for every (scenario, n, H) cell simulate `reps`
/// changed series, calibrate raw-scale critical values under the
/// fractional-Gaussian-noise null at the known or per-series estimated
/// Hurst index (estimates interpolate between step-0.01 table grid
/// points), and record each statistic's rejection rate. Estimation
/// failures are flagged per row and count as non-rejections.
pub fn run_power_study(config: &StudyConfig) -> Result<PowerTable> {
    config.validate()?;
    let grid = hurst_grid();
    let mut table = CriticalValueTable::new(child_seed(config.master_seed, 0x5441_424C));
    let mut rows = Vec::new();
    let need_whittle = config.hurst_modes.contains(&HurstMode::Whittle);
    let need_split = config.hurst_modes.contains(&HurstMode::Split);
    for (si, scenario) in config.scenarios.iter().enumerate() {
        let spec = scenario.change_spec(config.tau)?;
        for &n in &config.ns {
            for &grid_h in &config.hursts {
                let model = config.family.model(grid_h);
                let known_h = config.family.known_hurst(grid_h);
                let cell_seed = child_seed(
                    child_seed(config.master_seed, 0x4345_4C4C ^ si as u64),
                    (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ grid_h.to_bits(),
                );
                let measures: Result<Vec<RepMeasure>> = (0..config.reps as u64)
                    .into_par_iter()
                    .map(|r| {
                        measure_one(
                            &model,
                            &spec,
                            n,
                            SeedSpec::new(cell_seed, r),
                            &config.statistics,
                            need_whittle,
                            need_split,
                        )
                    })
                    .collect();
                let measures = measures?;
                if config.hurst_modes.contains(&HurstMode::Known) {
                    ensure_entries(&mut table, n, known_h, &[config.alpha], config.table_reps)?;
                }
                if need_whittle || need_split {
                    let mut needed: BTreeSet<u64> = BTreeSet::new();
                    for m in &measures {
                        if let Some(h) = m.whittle {
                            insert_bracket(&grid, h, &mut needed);
                        }
                        for &h in m.splits.iter().flatten() {
                            insert_bracket(&grid, h, &mut needed);
                        }
                    }
                    for bits in needed {
                        ensure_entries(
                            &mut table,
                            n,
                            f64::from_bits(bits),
                            &[config.alpha],
                            config.table_reps,
                        )?;
                    }
                }
                for (ki, &kind) in config.statistics.iter().enumerate() {
                    for &mode in &config.hurst_modes {
                        let (hits, failed) = match mode {
                            HurstMode::Known => {
                                let crit = table
                                    .lookup_exact(kind, n, known_h, config.alpha)
                                    .ok_or_else(|| {
                                        Error::Table(format!(
                                            "missing table entry for {kind} at n = {n}, H = {known_h}"
                                        ))
                                    })?
                                    .value;
                                (
                                    measures.iter().filter(|m| m.raws[ki] > crit).count(),
                                    0usize,
                                )
                            }
                            HurstMode::Whittle => decide_estimated(
                                &table,
                                kind,
                                n,
                                config.alpha,
                                measures.iter().map(|m| (m.raws[ki], m.whittle)),
                            )?,
                            HurstMode::Split => decide_estimated(
                                &table,
                                kind,
                                n,
                                config.alpha,
                                measures.iter().map(|m| (m.raws[ki], m.splits[ki])),
                            )?,
                        };
                        rows.push(PowerRow {
                            scenario: scenario.name().to_string(),
                            stat: kind,
                            hurst_mode: mode,
                            n,
                            hurst: grid_h,
                            rate: hits as f64 / config.reps as f64,
                            reps: config.reps,
                            failed,
                        });
                    }
                }
            }
        }
    }
    Ok(PowerTable {
        rows,
        reps: config.reps,
        master_seed: config.master_seed,
    })
}

// ---------------------------------------------------------------------------
// Asymptotic relative efficiency
// ---------------------------------------------------------------------------

/// r = integral of phi^3(x) x^2 dx / integral of phi^3(x) dx, by adaptive
/// quadrature (closed form: 1/3).
pub fn gaussian_cubic_ratio() -> f64 {
    static R: OnceLock<f64> = OnceLock::new();
    *R.get_or_init(|| {
        let mut cubed = |x: f64| phi(x).powi(3);
        let (denom, _) = quad::adaptive(&mut cubed, -INTEGRATION_CUTOFF, INTEGRATION_CUTOFF, 1e-12);
        let mut weighted = |x: f64| phi(x).powi(3) * x * x;
        let (num, _) =
            quad::adaptive(&mut weighted, -INTEGRATION_CUTOFF, INTEGRATION_CUTOFF, 1e-12);
        num / denom
    })
}

fn fstar_validate(c1: f64, c2: f64, q: f64, tau: f64, kappa1: f64, kappa2: f64) -> Result<()> {
    if !(c1 > 0.0) {
        return Err(Error::domain(format!("C1 must be > 0, got {c1}")));
    }
    if !(c2 >= 0.0) {
        return Err(Error::domain(format!("C2 must be >= 0, got {c2}")));
    }
    if !(q > 0.0) {
        return Err(Error::domain(format!("q must be > 0, got {q}")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(format!("tau must lie in (0, 1), got {tau}")));
    }
    if !(0.0 < kappa1 && kappa1 < 0.5 && 0.5 < kappa2 && kappa2 < 1.0) {
        return Err(Error::domain(format!(
            "need 0 < kappa1 < 1/2 < kappa2 < 1, got kappa1 = {kappa1}, kappa2 = {kappa2}"
        )));
    }
    Ok(())
}

/// Grid minimum with an explicit step, used to check grid stability.
pub(crate) fn fstar_with_step(
    c1: f64,
    c2: f64,
    q: f64,
    tau: f64,
    kappa1: f64,
    kappa2: f64,
    step: f64,
) -> Result<f64> {
    fstar_validate(c1, c2, q, tau, kappa1, kappa2)?;
    let r = gaussian_cubic_ratio();
    // value at t, written so that c2 = 0 gives exactly c1:
    // (sqrt(A^2 + B^2) - q) / psi = c1 + B^2 / (psi (sqrt(A^2 + B^2) + A))
    // with A = q + c1 psi and B^2 = c2^2 r psi^2.
    let value_at = |t: f64| {
        let p = psi_tau(t, tau);
        let a = q + c1 * p;
        let b2 = c2 * c2 * r * p * p;
        c1 + b2 / (p * ((a * a + b2).sqrt() + a))
    };
    let mut best = f64::INFINITY;
    let mut t = kappa1;
    loop {
        best = best.min(value_at(t));
        if t >= kappa2 {
            break;
        }
        t = (t + step).min(kappa2);
    }
    Ok(best)
}

/// The drift functional of a combined mean/variance change: the minimum
/// over t in [kappa1, kappa2] (step 1e-4, endpoints included) of
/// (sqrt(q^2 + 2 q C1 psi_tau(t) + (C1^2 + C2^2 r) psi_tau(t)^2) - q) /
/// psi_tau(t). C2 = 0 collapses to exactly C1.
pub fn fstar(c1: f64, c2: f64, q: f64, tau: f64, kappa1: f64, kappa2: f64) -> Result<f64> {
    fstar_with_step(c1, c2, q, tau, kappa1, kappa2, 1e-4)
}

/// Asymptotic relative efficiency of a pure mean shift against a combined
/// mean/variance change with sizes (C1*, C2*): solves
/// fstar(C1, C1 C2*/C1*, q, tau, kappa1, kappa2) = C1* for C1 by bisection
/// on (0, C1*] to 1e-8 and returns (C1*/C1)^{1/(1-H)}.
pub fn are_mean_variance(
    c1_star: f64,
    c2_star: f64,
    q: f64,
    tau: f64,
    kappa1: f64,
    kappa2: f64,
    hurst: f64,
) -> Result<f64> {
    if !(c1_star > 0.0) {
        return Err(Error::domain(format!("C1* must be > 0, got {c1_star}")));
    }
    if !(c2_star >= 0.0) {
        return Err(Error::domain(format!("C2* must be >= 0, got {c2_star}")));
    }
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::domain(format!("H must lie in (0, 1), got {hurst}")));
    }
    let ratio = c2_star / c1_star;
    let objective = |c1: f64| fstar(c1, c1 * ratio, q, tau, kappa1, kappa2);
    // increasing objective; its value at c1_star is >= c1_star with
    // equality only when c2_star = 0
    if objective(c1_star)? < c1_star {
        return Err(Error::degenerate(
            "drift functional fell below its mean-shift bound; no root in (0, C1*]",
        ));
    }
    let mut lo = c1_star * 1e-12;
    let mut hi = c1_star;
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if objective(mid)? >= c1_star {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let c1 = 0.5 * (lo + hi);
    Ok((c1_star / c1).powf(1.0 / (1.0 - hurst)))
}

/// Mean-shift efficiency cross-check: the four tests share one asymptotic
/// local power, reported four times, next to finite-n Monte Carlo powers
/// at n = 400 under the matching shift mu = C d_{n,1} / n.
#[derive(Debug, Clone, Serialize)]
pub struct AreMeanShiftReport {
    /// Common limit power for (KS, CvM, CUSUM, Wilcoxon) — identical by
    /// the shared limit structure.
    pub asymptotic: [f64; 4],
    /// Finite-n empirical powers in the same order.
    pub finite_n: [f64; 4],
    pub n: usize,
    /// The injected finite-n shift.
    pub mu: f64,
    pub c: f64,
    pub hurst: f64,
    pub tau: f64,
    pub alpha: f64,
    pub reps: usize,
}

/// Compare the common asymptotic power of the four tests under a local
/// mean shift of size C at break fraction tau with finite-n Monte Carlo
/// powers at n = 400.
pub fn are_mean_shift_check(
    hurst: f64,
    tau: f64,
    c: f64,
    alpha: f64,
    reps: usize,
    master_seed: u64,
) -> Result<AreMeanShiftReport> {
    let limit = asymptotic_power(c, tau, hurst, alpha, reps, child_seed(master_seed, 0x4153_5950))?;
    let n = 400usize;
    let model = GaussianModel::Fgn { hurst };
    let d = normalization_dn(n, 1, &model, NormalizationMode::Exact)?.value;
    let mu = c * d / n as f64;
    let spec = ChangeSpec::mean_shift(mu, tau)?;
    let entries = mc_critical_values(
        hurst,
        n,
        &[alpha],
        reps,
        child_seed(master_seed, 0x4649_4E51),
    )?;
    let crit: Vec<f64> = StatisticKind::ALL
        .iter()
        .map(|&s| {
            entries
                .iter()
                .find(|e| e.stat == s)
                .map(|e| e.value)
                .expect("calibration returns every statistic")
        })
        .collect();
    let data_seed = child_seed(master_seed, 0x4649_4E44);
    let hit_counts: Result<Vec<[bool; 4]>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| -> Result<[bool; 4]> {
            let y = inject_change(&model, &spec, n, SeedSpec::new(data_seed, r))?;
            let mut hits = [false; 4];
            for (i, &kind) in StatisticKind::ALL.iter().enumerate() {
                hits[i] = raw_statistic(kind, &y.values)?.raw_value > crit[i];
            }
            Ok(hits)
        })
        .collect();
    let hit_counts = hit_counts?;
    let mut finite_n = [0.0f64; 4];
    for (i, f) in finite_n.iter_mut().enumerate() {
        *f = hit_counts.iter().filter(|h| h[i]).count() as f64 / reps as f64;
    }
    Ok(AreMeanShiftReport {
        asymptotic: [limit; 4],
        finite_n,
        n,
        mu,
        c,
        hurst,
        tau,
        alpha,
        reps,
    })
}
