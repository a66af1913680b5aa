//! Change-point tests on the marginal distribution of long-range dependent
//! time series.
//!
//! The crate covers the full pipeline: exact simulation of long-memory
//! Gaussian models ([`sim`]), subordination through instantaneous transforms
//! with Hermite-expansion machinery ([`subordinate`]), the four change-point
//! statistics ([`stats`]), Hurst/scale estimation ([`estimators`]),
//! Monte Carlo and asymptotic calibration ([`calibrate`]), and the power /
//! efficiency experiment harness ([`experiments`]).

pub mod calibrate;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod normal;
pub mod quad;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod subordinate;

pub use calibrate::{
    asymptotic_critical_value, asymptotic_power, asymptotic_power_with, ensure_entries,
    hurst_grid, limit_bridge, limit_functional, limit_quantile, mc_critical_values, psi_tau,
    run_test, AsymptoticCritical, Calibration, CalibrationMode, CriticalValueTable,
    HurstSelector, LimitFunctionalSample, LimitPlan, TableEntry, TestOptions, TestReport,
    DEFAULT_LIMIT_GRID,
};
pub use error::{Error, Result};
pub use experiments::{
    are_mean_shift_check, are_mean_variance, fstar, gaussian_cubic_ratio, inject_change,
    local_alternative_g, run_power_study, AlternativeKind, AreMeanShiftReport, ChangeSpec,
    HurstMode, LatentFamily, LocalAlternative, PowerRow, PowerTable, Scenario, StudyConfig,
};
pub use estimators::{
    estimate_scale, local_whittle, local_whittle_with, periodogram, sample_autocov,
    split_whittle, split_whittle_at, HurstEstimate, HurstMethod, ScaleEstimate,
};
pub use scalar::Scalar;
pub use seed::{child_seed, SeedSpec};
pub use sim::{fgn_autocov, model_autocov, simulate, GaussianModel, TimeSeries};
pub use stats::{
    all_raw_statistics, changepoint_estimate, cusum_raw, cvm_raw, ks_raw, profile_argmax,
    raw_statistic, wilcoxon_raw, StatisticKind,
};
pub use subordinate::{
    default_normalization, hermite_coeff, hermite_rank, normalization_dn, reduction_residual,
    Normalization, NormalizationMode, NormalizationSource, Subordinator,
};

/// Default concrete scalar for the generic kernels.
pub type F = f64;

/// Raw statistics at the default scalar.
pub type RawStats = stats::RawStatistics<F>;
