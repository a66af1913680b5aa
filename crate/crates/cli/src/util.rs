//! Shared plumbing: atomic writes, CSV input, seed resolution, and the
//! small textual parsers for models, transforms, and statistics.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use lrdcp::subordinate::QuantileMap;
use lrdcp::{Error, GaussianModel, Result, StatisticKind, Subordinator};

/// Write bytes to a temporary file in the destination directory, then
/// rename it over the target, so interrupts never leave partial files.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d),
        None => tempfile::NamedTempFile::new(),
    }
    .map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}

/// Read a series stored as one decimal value per line. Parse failures name
/// the offending line.
pub fn read_csv_series(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| {
            Error::Parse(format!(
                "{}: line {}: not a number: '{t}'",
                path.display(),
                i + 1
            ))
        })?;
        values.push(v);
    }
    Ok(values)
}

/// Render a series as CSV: one value per line, 17 significant digits.
pub fn series_to_csv(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 24);
    for v in values {
        out.push_str(&format!("{v:.16e}\n"));
    }
    out
}

/// 0 (the default) means "derive from entropy"; the resolved value is
/// echoed in every output.
pub fn resolve_seed(seed: u64) -> u64 {
    if seed == 0 {
        rand::random::<u64>() | 1
    } else {
        seed
    }
}

pub fn parse_stat(name: &str) -> Result<StatisticKind> {
    match name.to_ascii_lowercase().as_str() {
        "ks" => Ok(StatisticKind::Ks),
        "cvm" => Ok(StatisticKind::Cvm),
        "cusum" => Ok(StatisticKind::Cusum),
        "wilcoxon" => Ok(StatisticKind::Wilcoxon),
        other => Err(Error::domain(format!(
            "unknown statistic '{other}' (expected ks, cvm, cusum, or wilcoxon)"
        ))),
    }
}

pub fn parse_stat_list(spec: &str) -> Result<Vec<StatisticKind>> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(StatisticKind::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| parse_stat(s.trim()))
        .collect::<Result<Vec<_>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(Error::domain("empty statistic list"))
            } else {
                Ok(v)
            }
        })
}

pub fn parse_f64_list(spec: &str, what: &str) -> Result<Vec<f64>> {
    let vals: Result<Vec<f64>> = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("invalid {what} value: '{}'", s.trim())))
        })
        .collect();
    let vals = vals?;
    if vals.is_empty() {
        return Err(Error::domain(format!("empty {what} list")));
    }
    Ok(vals)
}

pub fn parse_usize_list(spec: &str, what: &str) -> Result<Vec<usize>> {
    let vals: Result<Vec<usize>> = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("invalid {what} value: '{}'", s.trim())))
        })
        .collect();
    let vals = vals?;
    if vals.is_empty() {
        return Err(Error::domain(format!("empty {what} list")));
    }
    Ok(vals)
}

/// Build a latent model from the simulate flags.
pub fn build_model(
    model: &str,
    hurst: Option<f64>,
    d: Option<f64>,
    ar: Option<f64>,
) -> Result<GaussianModel> {
    let need = |opt: Option<f64>, flag: &str| {
        opt.ok_or_else(|| Error::domain(format!("model '{model}' requires --{flag}")))
    };
    let m = match model.to_ascii_lowercase().as_str() {
        "fgn" => GaussianModel::Fgn {
            hurst: need(hurst, "hurst")?,
        },
        "farima00" => GaussianModel::Farima00 { d: need(d, "d")? },
        "farima10" => GaussianModel::Farima10 {
            d: need(d, "d")?,
            ar: need(ar, "ar")?,
        },
        "ar1" => GaussianModel::Ar1 { ar: need(ar, "ar")? },
        other => {
            return Err(Error::domain(format!(
                "unknown model '{other}' (expected fgn, farima00, farima10, or ar1)"
            )))
        }
    };
    m.validate()?;
    Ok(m)
}

/// Parse a transform spec of the form `name` or `name:arg1,arg2,...`.
///
/// Names: identity, square, mean_shift:MU, scale:SIGMA, affine:SIGMA,MU,
/// affine_square:A,B,C, split_square:APOS,ANEG, folded_to_gaussian,
/// split_square_to_gaussian:A,MU, normal_quantile:MEAN,SD,
/// gaussian_mixture:DELTA,MU,SD.
pub fn parse_transform(spec: &str) -> Result<Subordinator> {
    let (name, args) = match spec.split_once(':') {
        Some((n, a)) => (n.trim(), parse_f64_list(a, "transform argument")?),
        None => (spec.trim(), Vec::new()),
    };
    let arity = |k: usize| -> Result<()> {
        if args.len() != k {
            return Err(Error::domain(format!(
                "transform '{name}' takes {k} argument(s), got {}",
                args.len()
            )));
        }
        Ok(())
    };
    let g = match name.to_ascii_lowercase().as_str() {
        "identity" => {
            arity(0)?;
            Subordinator::Identity
        }
        "square" => {
            arity(0)?;
            Subordinator::Square
        }
        "mean_shift" => {
            arity(1)?;
            Subordinator::MeanShift { mu: args[0] }
        }
        "scale" => {
            arity(1)?;
            Subordinator::Scale { sigma: args[0] }
        }
        "affine" => {
            arity(2)?;
            Subordinator::Affine {
                sigma: args[0],
                mu: args[1],
            }
        }
        "affine_square" => {
            arity(3)?;
            Subordinator::AffineSquare {
                a: args[0],
                b: args[1],
                c: args[2],
            }
        }
        "split_square" => {
            arity(2)?;
            Subordinator::SplitSquare {
                a_pos: args[0],
                a_neg: args[1],
            }
        }
        "folded_to_gaussian" => {
            arity(0)?;
            Subordinator::FoldedToGaussian
        }
        "split_square_to_gaussian" => {
            arity(2)?;
            Subordinator::SplitSquareToGaussian {
                a: args[0],
                mu: args[1],
            }
        }
        "normal_quantile" => {
            arity(2)?;
            Subordinator::Quantile(QuantileMap::normal(args[0], args[1]))
        }
        "gaussian_mixture" => {
            arity(3)?;
            Subordinator::Quantile(QuantileMap::gaussian_mixture(args[0], args[1], args[2]))
        }
        other => {
            return Err(Error::domain(format!(
                "unknown transform '{other}'"
            )))
        }
    };
    g.validate()?;
    Ok(g)
}

/// Where a persistent critical-value table lives: an explicit --table path,
/// else $LRDCP_TABLE_DIR/tables.json, else nowhere (ephemeral).
pub fn table_location(flag: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = flag {
        return Some(p.to_path_buf());
    }
    match std::env::var("LRDCP_TABLE_DIR") {
        Ok(dir) if !dir.is_empty() => Some(PathBuf::from(dir).join("tables.json")),
        _ => None,
    }
}

/// Pretty JSON plus trailing newline, to stdout or an atomic file.
pub fn emit_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))? + "\n";
    match out {
        Some(p) => atomic_write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
