//! Critical values and rejection decisions.
//!
//! The finite-sample route calibrates each statistic on its raw scale by
//! Monte Carlo under the null: simulate fractional Gaussian noise at the
//! (known or estimated) Hurst index, take the empirical (1 - alpha)
//! quantile of the raw statistic, and compare raw against raw. Because the
//! rank statistics are invariant under any strictly increasing marginal
//! transform, a Gaussian null calibrates every subordinated null with a
//! monotone transform exactly, and the unknown normalization cancels from
//! the decision. Tables are keyed by (statistic, n, H, alpha, J), persist
//! as JSON, and interpolate linearly in H between grid points for plug-in
//! estimates. Reports additionally carry the statistic on its normalized
//! scale — raw divided by the plug-in d = n^H sqrt(C/(H(2H-1))) raised to
//! the statistic's scale power — with the critical value divided the same
//! way, so the reported comparison is the raw one, expressed in limit
//! units.
//!
//! The asymptotic route simulates the limit instead: an order-m
//! Hermite-process bridge on a uniform grid, its sup-quantile, the local
//! drift tent psi_tau(t) = min(t, tau) - t tau, and transform-specific
//! multipliers that map the limit quantile to each statistic's critical
//! value on the normalized scale.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_scale, local_whittle, split_whittle_at, HurstEstimate};
use crate::normal::{hermite_poly, phi};
use crate::quad;
use crate::scalar::Scalar;
use crate::seed::{child_seed, SeedSpec};
use crate::sim::{simulate, GaussianModel};
use crate::stats::{all_raw_statistics, raw_statistic, StatisticKind};
use crate::subordinate::{
    hermite_coeff, Normalization, NormalizationSource, Subordinator, INTEGRATION_CUTOFF,
};

/// Default grid resolution for limit-process paths.
pub const DEFAULT_LIMIT_GRID: usize = 2048;

/// Smallest admissible limit-path grid.
pub const MIN_LIMIT_GRID: usize = 64;

/// Smallest admissible Monte Carlo calibration size.
pub const MIN_CALIBRATION_REPS: usize = 100;

/// Drift shape of a local change at time fraction tau: the tent
/// psi_tau(t) = min(t, tau) - t tau, vanishing at 0 and 1 and peaking at
/// tau with value tau (1 - tau).
pub fn psi_tau<S: Scalar>(t: S, tau: S) -> S {
    t.min(tau) - t * tau
}

/// Hurst grid for plug-in estimates: 0.501, then 0.51 to 0.99 in steps of
/// 0.01. Estimates clamp into this range and interpolate between neighbors.
pub fn hurst_grid() -> Vec<f64> {
    let mut grid = vec![0.501];
    grid.extend((51..=99).map(|i| i as f64 / 100.0));
    grid
}

/// Empirical upper quantile: the ceil((1 - alpha) J)-th order statistic.
pub(crate) fn order_stat_quantile(values: &mut [f64], alpha: f64) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let j = values.len();
    let idx = ((1.0 - alpha) * j as f64).ceil() as usize;
    values[idx.clamp(1, j) - 1]
}

fn now_unix() -> u64 {
    if let Ok(s) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(v) = s.parse() {
            return v;
        }
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// One calibrated critical value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub stat: StatisticKind,
    pub n: usize,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub alpha: f64,
    /// Monte Carlo sample size the quantile was taken from.
    #[serde(rename = "J")]
    pub reps: usize,
    /// Raw-scale critical value.
    pub value: f64,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    master_seed: u64,
    created_unix: u64,
    entries: Vec<TableEntry>,
}

/// Cell coordinates without the Monte Carlo size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct CellKey {
    stat: StatisticKind,
    n: usize,
    hurst_micro: i64,
    alpha_micro: i64,
}

fn cell_key(stat: StatisticKind, n: usize, hurst: f64, alpha: f64) -> CellKey {
    CellKey {
        stat,
        n,
        hurst_micro: (hurst * 1e6).round() as i64,
        alpha_micro: (alpha * 1e6).round() as i64,
    }
}

/// Store of Monte Carlo critical values keyed by (stat, n, H, alpha, J),
/// with exact lookup and linear interpolation in H. Entries that differ
/// only in J coexist; lookups prefer the largest J. Inserting an entry with
/// a fully matching key replaces it.
#[derive(Debug, Clone)]
pub struct CriticalValueTable {
    pub master_seed: u64,
    pub created_unix: u64,
    entries: Vec<TableEntry>,
    /// Cell -> index of the entry with the largest J for that cell.
    best: HashMap<CellKey, usize>,
    /// (Cell, J) -> entry index, for replacement on duplicate insert.
    exact: HashMap<(CellKey, usize), usize>,
}

impl CriticalValueTable {
    pub fn new(master_seed: u64) -> Self {
        CriticalValueTable {
            master_seed,
            created_unix: now_unix(),
            entries: Vec::new(),
            best: HashMap::new(),
            exact: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    /// Keep only entries for the given statistics (for persisting a table
    /// restricted to what was asked for); lookup indexes are rebuilt.
    pub fn retain_stats(&mut self, kinds: &[StatisticKind]) {
        let kept: Vec<TableEntry> = self
            .entries
            .iter()
            .filter(|e| kinds.contains(&e.stat))
            .copied()
            .collect();
        self.entries.clear();
        self.best.clear();
        self.exact.clear();
        for entry in kept {
            self.insert(entry);
        }
    }

    pub fn insert(&mut self, entry: TableEntry) {
        let key = cell_key(entry.stat, entry.n, entry.hurst, entry.alpha);
        let idx = match self.exact.get(&(key, entry.reps)) {
            Some(&i) => {
                self.entries[i] = entry;
                i
            }
            None => {
                let i = self.entries.len();
                self.exact.insert((key, entry.reps), i);
                self.entries.push(entry);
                i
            }
        };
        match self.best.get(&key) {
            Some(&b) if self.entries[b].reps > entry.reps => {}
            _ => {
                self.best.insert(key, idx);
            }
        }
    }

    /// The stored entry for this cell with the largest Monte Carlo size.
    pub fn lookup_exact(
        &self,
        stat: StatisticKind,
        n: usize,
        hurst: f64,
        alpha: f64,
    ) -> Option<&TableEntry> {
        self.best
            .get(&cell_key(stat, n, hurst, alpha))
            .map(|&i| &self.entries[i])
    }

    /// Critical value at an off-grid H by linear interpolation between the
    /// nearest stored H values for the same (stat, n, alpha); clamps outside
    /// the stored range. `None` when nothing matches at all.
    pub fn lookup_interpolated(
        &self,
        stat: StatisticKind,
        n: usize,
        hurst: f64,
        alpha: f64,
    ) -> Option<f64> {
        if let Some(e) = self.lookup_exact(stat, n, hurst, alpha) {
            return Some(e.value);
        }
        let alpha_micro = (alpha * 1e6).round() as i64;
        let mut by_h: HashMap<i64, (f64, usize, f64)> = HashMap::new();
        for e in &self.entries {
            if e.stat != stat || e.n != n || ((e.alpha * 1e6).round() as i64) != alpha_micro {
                continue;
            }
            let hm = (e.hurst * 1e6).round() as i64;
            match by_h.get(&hm) {
                Some(&(_, reps, _)) if reps > e.reps => {}
                _ => {
                    by_h.insert(hm, (e.hurst, e.reps, e.value));
                }
            }
        }
        if by_h.is_empty() {
            return None;
        }
        let mut points: Vec<(f64, f64)> = by_h.values().map(|&(h, _, v)| (h, v)).collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if hurst <= points[0].0 {
            return Some(points[0].1);
        }
        if hurst >= points[points.len() - 1].0 {
            return Some(points[points.len() - 1].1);
        }
        let i = points.partition_point(|p| p.0 < hurst);
        let (h0, v0) = points[i - 1];
        let (h1, v1) = points[i];
        let w = (hurst - h0) / (h1 - h0);
        Some(v0 + w * (v1 - v0))
    }

    /// Atomic save: write to a temporary file in the target directory, then
    /// rename over the destination.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = TableFile {
            master_seed: self.master_seed,
            created_unix: self.created_unix,
            entries: self.entries.clone(),
        };
        let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
        let mut tmp = match dir {
            Some(d) => tempfile::NamedTempFile::new_in(d),
            None => tempfile::NamedTempFile::new(),
        }
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        tmp.write_all(json.as_bytes()).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        tmp.persist(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e.error,
        })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let file: TableFile = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let mut table = CriticalValueTable::new(file.master_seed);
        table.created_unix = file.created_unix;
        for e in file.entries {
            table.insert(e);
        }
        Ok(table)
    }
}

/// Deterministic per-(n, H) seed tag for lazy table building.
fn table_tag(n: usize, hurst: f64) -> u64 {
    (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ hurst.to_bits()
}

/// Monte Carlo raw-scale critical values under an fGn null: J paths at the
/// given Hurst index, all four statistics per path, empirical (1 - alpha)
/// quantiles. Entries come back for every statistic and every alpha.
pub fn mc_critical_values(
    hurst: f64,
    n: usize,
    alphas: &[f64],
    reps: usize,
    master_seed: u64,
) -> Result<Vec<TableEntry>> {
    if reps < MIN_CALIBRATION_REPS {
        return Err(Error::domain(format!(
            "calibration needs at least {MIN_CALIBRATION_REPS} replicates, got {reps}"
        )));
    }
    for &a in alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::domain(format!("alpha must be in (0, 1), got {a}")));
        }
    }
    let model = GaussianModel::Fgn { hurst };
    model.validate()?;
    let raws: Result<Vec<[f64; 4]>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| -> Result<[f64; 4]> {
            let path = simulate(&model, n, SeedSpec::new(master_seed, r))?;
            let stats = all_raw_statistics(&path.values)?;
            Ok([
                stats[0].raw_value,
                stats[1].raw_value,
                stats[2].raw_value,
                stats[3].raw_value,
            ])
        })
        .collect();
    let raws = raws?;
    let mut entries = Vec::with_capacity(4 * alphas.len());
    for (s, &stat) in StatisticKind::ALL.iter().enumerate() {
        let mut column: Vec<f64> = raws.iter().map(|r| r[s]).collect();
        for &alpha in alphas {
            let value = order_stat_quantile(&mut column, alpha);
            entries.push(TableEntry {
                stat,
                n,
                hurst,
                alpha,
                reps,
                value,
            });
        }
    }
    Ok(entries)
}

/// Make sure the table holds entries for all four statistics at (n, H) and
/// each alpha with a Monte Carlo size of at least `reps`, building the
/// missing cells with the table's deterministic per-cell seed.
pub fn ensure_entries(
    table: &mut CriticalValueTable,
    n: usize,
    hurst: f64,
    alphas: &[f64],
    reps: usize,
) -> Result<()> {
    let missing: Vec<f64> = alphas
        .iter()
        .copied()
        .filter(|&a| {
            StatisticKind::ALL.iter().any(|&s| {
                table
                    .lookup_exact(s, n, hurst, a)
                    .map_or(true, |e| e.reps < reps)
            })
        })
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    let seed = child_seed(table.master_seed, table_tag(n, hurst));
    for entry in mc_critical_values(hurst, n, &missing, reps, seed)? {
        table.insert(entry);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Limit functionals
// ---------------------------------------------------------------------------

/// d_{n,m}^2 = m! (n + 2 sum_k (n - k) rho(k)^m) without long-memory
/// preconditions (the limit lattice handles short memory too).
fn exact_dn_squared(model: &GaussianModel, n: usize, m: u32) -> f64 {
    let rho = model.autocov_vec(n);
    let mut sum = n as f64;
    for (k, &r) in rho.iter().enumerate().skip(1) {
        sum += 2.0 * (n - k) as f64 * r.powi(m as i32);
    }
    let m_fact: f64 = (1..=m as u64).map(|i| i as f64).product();
    m_fact * sum
}

/// Simulation plan for order-m Hermite-process bridges with Hurst index H
/// of the limit, sampled on a uniform grid of [0, 1].
#[derive(Debug, Clone)]
pub struct LimitPlan {
    pub m: u32,
    pub hurst: f64,
    pub grid: usize,
    latent: GaussianModel,
    lattice: usize,
    dn: f64,
}

impl LimitPlan {
    /// m = 1: fGn at H summed directly on the grid. m = 2: second Hermite
    /// polynomial of a latent fGn at (1 + H)/2 on a finer lattice (at least
    /// 2^14 points, 16 per grid cell), exactly normalized.
    pub fn new(m: u32, hurst: f64, grid: usize) -> Result<Self> {
        if grid < MIN_LIMIT_GRID {
            return Err(Error::domain(format!(
                "grid must be at least {MIN_LIMIT_GRID}, got {grid}"
            )));
        }
        let (latent, lattice) = match m {
            1 => {
                if !(0.5..1.0).contains(&hurst) {
                    return Err(Error::domain(format!(
                        "order-1 limit needs H in [0.5, 1), got {hurst}"
                    )));
                }
                (GaussianModel::Fgn { hurst }, grid)
            }
            2 => {
                if !(hurst > 0.5 && hurst < 1.0) {
                    return Err(Error::domain(format!(
                        "order-2 limit needs H in (0.5, 1), got {hurst}"
                    )));
                }
                let latent_h = 0.5 * (1.0 + hurst);
                (GaussianModel::Fgn { hurst: latent_h }, (16 * grid).max(1 << 14))
            }
            other => return Err(Error::UnsupportedOrder(other)),
        };
        let dn = exact_dn_squared(&latent, lattice, m).sqrt();
        Ok(LimitPlan {
            m,
            hurst,
            grid,
            latent,
            lattice,
            dn,
        })
    }

    /// One bridge path: values of Z̃(t_i) = Z(t_i) - t_i Z(1) at
    /// t_i = i / grid, i = 1..=grid (so the last entry is exactly 0).
    pub fn bridge(&self, seed: SeedSpec) -> Result<Vec<f64>> {
        let path = simulate(&self.latent, self.lattice, seed)?;
        let mut z = Vec::with_capacity(self.grid);
        let mut partial = 0.0f64;
        let mut next_idx = 0usize;
        for i in 1..=self.grid {
            let upto = self.lattice * i / self.grid;
            while next_idx < upto {
                let x = path.values[next_idx];
                partial += match self.m {
                    1 => x,
                    _ => x * x - 1.0,
                };
                next_idx += 1;
            }
            z.push(partial / self.dn);
        }
        let z1 = z[self.grid - 1];
        for (i, v) in z.iter_mut().enumerate() {
            let t = (i + 1) as f64 / self.grid as f64;
            *v -= t * z1;
        }
        Ok(z)
    }
}

/// One order-m Hermite bridge path at the default lattice choices.
pub fn limit_bridge(m: u32, hurst: f64, grid: usize, seed: SeedSpec) -> Result<Vec<f64>> {
    LimitPlan::new(m, hurst, grid)?.bridge(seed)
}

/// sup_t |Z̃(t) + c psi_tau(t)| over the bridge's grid.
pub fn bridge_sup(bridge: &[f64], c: f64, tau: f64) -> f64 {
    let grid = bridge.len();
    bridge
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let t = (i + 1) as f64 / grid as f64;
            (v + c * psi_tau(t, tau)).abs()
        })
        .fold(0.0f64, f64::max)
}

/// A Monte Carlo sample of sup-functionals of an order-m Hermite bridge,
/// optionally drifted by C psi_tau.
#[derive(Debug, Clone, Serialize)]
pub struct LimitFunctionalSample {
    pub m: u32,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub grid_size: usize,
    /// One realization of sup_t |Z̃(t) + C psi_tau(t)| per replicate.
    pub values: Vec<f64>,
}

/// Draw `reps` independent realizations of sup_t |Z̃_{m,H}(t) + C psi_tau(t)|
/// on a uniform grid; `shift = None` means C = 0 (the null functional).
pub fn limit_functional(
    m: u32,
    hurst: f64,
    grid: usize,
    reps: usize,
    shift: Option<(f64, f64)>,
    master_seed: u64,
) -> Result<LimitFunctionalSample> {
    if reps == 0 {
        return Err(Error::domain("need at least 1 replicate"));
    }
    let (c, tau) = shift.unwrap_or((0.0, 0.5));
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(format!("tau must be in (0, 1), got {tau}")));
    }
    let plan = LimitPlan::new(m, hurst, grid)?;
    let values: Result<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| Ok(bridge_sup(&plan.bridge(SeedSpec::new(master_seed, r))?, c, tau)))
        .collect();
    Ok(LimitFunctionalSample {
        m,
        hurst,
        grid_size: grid,
        values: values?,
    })
}

/// Monte Carlo (1 - alpha) quantile of sup |Z̃_m| for the order-m Hermite
/// bridge at Hurst H.
pub fn limit_quantile(
    m: u32,
    hurst: f64,
    alpha: f64,
    grid: usize,
    reps: usize,
    master_seed: u64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if reps < 2 {
        return Err(Error::domain("need at least 2 replicates"));
    }
    let sample = limit_functional(m, hurst, grid, reps, None, master_seed)?;
    let mut sups = sample.values;
    Ok(order_stat_quantile(&mut sups, alpha))
}

/// Asymptotic local power of the order-m test at grid resolution `grid`:
/// P(sup_t |Z̃_m(t) + c psi_tau(t)| > q_alpha), with the critical value and
/// the rejection paths drawn from independent child streams of the master
/// seed.
pub fn asymptotic_power_with(
    m: u32,
    hurst: f64,
    c: f64,
    tau: f64,
    alpha: f64,
    grid: usize,
    reps: usize,
    master_seed: u64,
) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(format!("tau must be in (0, 1), got {tau}")));
    }
    if c < 0.0 {
        return Err(Error::domain(format!("drift size must be >= 0, got {c}")));
    }
    let q = limit_quantile(m, hurst, alpha, grid, reps, child_seed(master_seed, 0x5155_414E))?;
    let power_seed = child_seed(master_seed, 0x504F_5752);
    let shifted = limit_functional(m, hurst, grid, reps, Some((c, tau)), power_seed)?;
    let hits = shifted.values.iter().filter(|&&s| s > q).count();
    Ok(hits as f64 / reps as f64)
}

/// Asymptotic local power of the first-order test at the default grid:
/// P(sup_t |B̃_H(t) + C psi_tau(t)| > q_{1-alpha,H}).
pub fn asymptotic_power(
    c: f64,
    tau: f64,
    hurst: f64,
    alpha: f64,
    reps: usize,
    master_seed: u64,
) -> Result<f64> {
    asymptotic_power_with(1, hurst, c, tau, alpha, DEFAULT_LIMIT_GRID, reps, master_seed)
}

// ---------------------------------------------------------------------------
// Asymptotic critical values on the normalized statistic scale
// ---------------------------------------------------------------------------

/// A limit quantile mapped onto one statistic's normalized scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticCritical {
    pub stat: StatisticKind,
    pub m: u32,
    pub hurst: f64,
    pub alpha: f64,
    /// Transform-specific factor in front of the limit quantile.
    pub multiplier: f64,
    /// MC quantile of sup |Z̃_m|.
    pub limit_quantile: f64,
    /// multiplier * q (KS, CUSUM, Wilcoxon) or multiplier * q^2 (CvM):
    /// critical value for the raw statistic divided by d_{n,m} (d^2 for
    /// CvM, n d for Wilcoxon).
    pub value: f64,
}

/// E[G(X) H_m(X)] by adaptive quadrature.
fn transform_hermite_moment(g: &Subordinator, m: u32) -> f64 {
    let mut f = |s: f64| g.eval(s) * hermite_poly(m, s) * phi(s);
    let (v, _) = quad::adaptive(&mut f, -INTEGRATION_CUTOFF, INTEGRATION_CUTOFF, 1e-10);
    v
}

/// E[F_G(G(X)) H_m(X)] by adaptive quadrature.
fn rank_moment(g: &Subordinator, m: u32) -> f64 {
    let mut f = |s: f64| g.marginal_cdf(g.eval(s)) * hermite_poly(m, s) * phi(s);
    let (v, _) = quad::adaptive(&mut f, -INTEGRATION_CUTOFF, INTEGRATION_CUTOFF, 1e-10);
    v
}

/// sup over the marginal quantile grid of |J_m| / m!.
fn sup_coeff(g: &Subordinator, m: u32) -> Result<f64> {
    let m_fact: f64 = (1..=m as u64).map(|i| i as f64).product();
    let grid = g.quantile_grid(201);
    let mut sup = 0.0f64;
    for &x in &grid {
        sup = sup.max(hermite_coeff(g, m, x)?.value.abs());
    }
    Ok(sup / m_fact)
}

/// integral of (J_m / m!)^2 against the marginal law of G(X), computed as a
/// midpoint sum over the quantile scale.
fn coeff_square_integral(g: &Subordinator, m: u32) -> Result<f64> {
    let m_fact: f64 = (1..=m as u64).map(|i| i as f64).product();
    let cells = 4001usize;
    let mut acc = 0.0;
    for i in 0..cells {
        let u = (i as f64 + 0.5) / cells as f64;
        let x = g.quantile(u);
        let j = hermite_coeff(g, m, x)?.value / m_fact;
        acc += j * j;
    }
    Ok(acc / cells as f64)
}

/// Map the order-m limit quantile to a statistic-specific critical value
/// for data transformed by `g`. Degenerate projections (a vanishing CUSUM
/// or Wilcoxon moment at this order) are errors.
pub fn asymptotic_critical_value(
    stat: StatisticKind,
    g: &Subordinator,
    m: u32,
    hurst: f64,
    alpha: f64,
    grid: usize,
    reps: usize,
    master_seed: u64,
) -> Result<AsymptoticCritical> {
    g.validate()?;
    let m_fact: f64 = (1..=m as u64).map(|i| i as f64).product();
    let q = limit_quantile(m, hurst, alpha, grid, reps, master_seed)?;
    let multiplier = match stat {
        StatisticKind::Ks => sup_coeff(g, m)?,
        StatisticKind::Cvm => coeff_square_integral(g, m)?,
        StatisticKind::Cusum => {
            let c = transform_hermite_moment(g, m) / m_fact;
            if c.abs() < 1e-12 {
                return Err(Error::degenerate(format!(
                    "transform {} has a vanishing order-{m} projection; its CUSUM limit is degenerate",
                    g.label()
                )));
            }
            c.abs()
        }
        StatisticKind::Wilcoxon => {
            let b = rank_moment(g, m) / m_fact;
            if b.abs() < 1e-12 {
                return Err(Error::degenerate(format!(
                    "transform {} has a vanishing order-{m} rank projection; its Wilcoxon limit is degenerate",
                    g.label()
                )));
            }
            b.abs()
        }
    };
    let value = match stat {
        StatisticKind::Cvm => multiplier * q * q,
        _ => multiplier * q,
    };
    Ok(AsymptoticCritical {
        stat,
        m,
        hurst,
        alpha,
        multiplier,
        limit_quantile: q,
        value,
    })
}

// ---------------------------------------------------------------------------
// Test decisions
// ---------------------------------------------------------------------------

/// Where the Hurst index for calibration comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum HurstSelector {
    /// Use this H directly (tables are built at exactly this value).
    Known(f64),
    /// Local Whittle on the whole series.
    EstimateWhole,
    /// Split local Whittle around the statistic's change-point estimate.
    EstimateSplit,
}

/// How a decision in a [`TestReport`] was calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    KnownHurst,
    EstimatedHurst,
    EstimatedSplitHurst,
}

/// Which calibration route produces the critical value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "calibration")]
pub enum Calibration {
    /// Finite-sample Monte Carlo table under an fGn null (the default):
    /// the decision compares raw against raw.
    MonteCarlo,
    /// Limit-process quantile scaled by the statistic's transform
    /// multiplier, assuming Gaussian marginals (identity transform, first
    /// Hermite order). The decision compares the normalized statistic
    /// against the asymptotic critical value.
    Asymptotic { grid: usize, reps: usize },
}

/// Options for [`run_test`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub alpha: f64,
    pub hurst: HurstSelector,
    pub calibration: Calibration,
    /// Monte Carlo size for lazily built table entries.
    pub table_reps: usize,
    /// Lag count for the plug-in scale estimate (None = floor(n^{1/3})).
    pub scale_lags: Option<usize>,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            alpha: 0.05,
            hurst: HurstSelector::EstimateWhole,
            calibration: Calibration::MonteCarlo,
            table_reps: 1000,
            scale_lags: None,
        }
    }
}

/// Outcome of one calibrated change-point test.
///
/// `normalized_value` is the raw statistic divided by the plug-in
/// normalization raised to the statistic's scale power; `critical_value`
/// lives on the same normalized scale, so `reject` ⇔ `normalized_value >
/// critical_value`. Under Monte Carlo calibration both sides are divided by
/// the same plug-in, making the decision identical to comparing raw against
/// the raw table quantile.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub kind: StatisticKind,
    pub n: usize,
    pub alpha: f64,
    pub raw_value: f64,
    /// The plug-in normalization d the report scales by.
    pub normalization: Normalization,
    /// raw / d^p with p the statistic's scale power (2 for CvM, 1
    /// otherwise; Wilcoxon divides by n d).
    pub normalized_value: f64,
    /// Critical value on the same normalized scale.
    pub critical_value: f64,
    /// Raw-scale Monte Carlo table quantile (absent in asymptotic mode).
    pub table_value: Option<f64>,
    pub reject: bool,
    pub k_hat: usize,
    /// Hurst index the calibration used.
    pub hurst_used: f64,
    pub hurst_estimate: Option<HurstEstimate>,
    /// Plug-in autocovariance scale, when the Hurst index was estimated.
    #[serde(rename = "C_hat")]
    pub c_hat: Option<f64>,
    pub mode: CalibrationMode,
    pub table_reps: usize,
}

/// Divide a raw-scale value by d^p as the statistic's normalization
/// prescribes.
fn normalize_raw(kind: StatisticKind, raw: f64, n: usize, d: f64) -> f64 {
    kind.normalize(raw, n, d)
}

/// Run one statistic against a lazily built Monte Carlo table or the
/// asymptotic limit quantile.
///
/// Known H uses an exact table at that H; estimated H snaps into the
/// [`hurst_grid`] range, builds the two neighboring grid tables, and
/// interpolates the critical value linearly between them.
pub fn run_test(
    y: &[f64],
    kind: StatisticKind,
    opts: &TestOptions,
    table: &mut CriticalValueTable,
) -> Result<TestReport> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::domain(format!(
            "alpha must be in (0, 1), got {}",
            opts.alpha
        )));
    }
    let stats = raw_statistic(kind, y)?;
    let n = stats.n;
    let (hurst_used, estimate, mode) = match opts.hurst {
        HurstSelector::Known(h) => {
            if !(h > 0.5 && h < 1.0) {
                return Err(Error::domain(format!(
                    "calibration requires H in (0.5, 1), got {h}"
                )));
            }
            (h, None, CalibrationMode::KnownHurst)
        }
        HurstSelector::EstimateWhole => {
            let est = local_whittle(y)?;
            (est.value, Some(est), CalibrationMode::EstimatedHurst)
        }
        HurstSelector::EstimateSplit => {
            let est = split_whittle_at(y, stats.k_hat)?;
            (est.value, Some(est), CalibrationMode::EstimatedSplitHurst)
        }
    };
    // plug-in normalization for reporting: exact n^H for a known fGn-scale
    // null, the estimated d otherwise
    let (normalization, c_hat) = match mode {
        CalibrationMode::KnownHurst => (
            Normalization {
                n,
                m: 1,
                hurst: hurst_used,
                l_const: hurst_used * (2.0 * hurst_used - 1.0),
                value: (n as f64).powf(hurst_used),
                source: NormalizationSource::AsymptoticFormula,
            },
            None,
        ),
        _ => {
            let scale = estimate_scale(y, hurst_used, opts.scale_lags)?;
            (
                Normalization {
                    n,
                    m: 1,
                    hurst: hurst_used,
                    l_const: scale.c_hat,
                    value: scale.d_hat,
                    source: NormalizationSource::Estimated,
                },
                Some(scale.c_hat),
            )
        }
    };
    let normalized_value = normalize_raw(kind, stats.raw_value, n, normalization.value);
    let (critical_value, table_value) = match opts.calibration {
        Calibration::MonteCarlo => {
            let alphas = [opts.alpha];
            let raw_critical = match mode {
                CalibrationMode::KnownHurst => {
                    ensure_entries(table, n, hurst_used, &alphas, opts.table_reps)?;
                    table
                        .lookup_exact(kind, n, hurst_used, opts.alpha)
                        .map(|e| e.value)
                }
                _ => {
                    let grid = hurst_grid();
                    let h = hurst_used.clamp(grid[0], grid[grid.len() - 1]);
                    let i = grid.partition_point(|&g| g < h);
                    let lo = grid[i.saturating_sub(1).min(grid.len() - 1)];
                    let hi = grid[i.min(grid.len() - 1)];
                    ensure_entries(table, n, lo, &alphas, opts.table_reps)?;
                    if hi != lo {
                        ensure_entries(table, n, hi, &alphas, opts.table_reps)?;
                    }
                    table.lookup_interpolated(kind, n, h, opts.alpha)
                }
            };
            let raw_critical = raw_critical.ok_or_else(|| {
                Error::Table(format!(
                    "no critical value available for {kind} at n = {n}, H = {hurst_used}, alpha = {}",
                    opts.alpha
                ))
            })?;
            (
                normalize_raw(kind, raw_critical, n, normalization.value),
                Some(raw_critical),
            )
        }
        Calibration::Asymptotic { grid, reps } => {
            let crit = asymptotic_critical_value(
                kind,
                &Subordinator::Identity,
                1,
                hurst_used,
                opts.alpha,
                grid,
                reps,
                child_seed(table.master_seed, 0x4C49_4D49),
            )?;
            (crit.value, None)
        }
    };
    Ok(TestReport {
        kind,
        n,
        alpha: opts.alpha,
        raw_value: stats.raw_value,
        normalization,
        normalized_value,
        critical_value,
        table_value,
        reject: normalized_value > critical_value,
        k_hat: stats.k_hat,
        hurst_used,
        hurst_estimate: estimate,
        c_hat,
        mode,
        table_reps: opts.table_reps,
    })
}
