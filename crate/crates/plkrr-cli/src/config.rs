//! Configuration file parsing and knob resolution.
//!
//! A config file is line-based `key = value` under `[section]` headers;
//! lookups use the flattened key `section.key`.  Every knob resolves with
//! precedence command-line flag > config file > documented default, and the
//! resolved set is rendered canonically (sorted keys) so its hash and the
//! archived copy are stable across reruns.

use plkrr_core::asymptotics::{lambda_rule, LambdaObjective};
use plkrr_core::{EigenSystem, Error, KernelFamily, Result, Weighting};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::KernelArgs;

/// Parsed config file as a flat `section.key` map.
#[derive(Debug, Default)]
pub struct ConfigFile {
    map: BTreeMap<String, String>,
}

impl ConfigFile {
    /// Loads the file when a path is given; no path means an empty config.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                Self::parse(&text)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[') {
                let name = inner.strip_suffix(']').ok_or_else(|| {
                    Error::InvalidConfig(format!("config line {}: unterminated section", i + 1))
                })?;
                if name.is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "config line {}: empty section name",
                        i + 1
                    )));
                }
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("config line {}: expected `key = value`", i + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::InvalidConfig(format!("config line {}: empty key", i + 1)));
            }
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            map.insert(full, value.trim().to_string());
        }
        Ok(ConfigFile { map })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    /// flag > config > default, for any parseable type.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
    {
        Ok(self.resolve_opt(flag, key)?.unwrap_or(default))
    }

    /// flag > config, with no default.
    pub fn resolve_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidConfig(format!("config key {key}: cannot parse `{raw}`"))
            }),
        }
    }
}

/// Canonical rendering of a resolved configuration: sorted `key = value`
/// lines.  This text is both archived and hashed into output headers.
pub fn render_resolved(pairs: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Output directory: flag > config > $PLKRR_OUT > working directory.
pub fn resolve_out(flag: Option<&Path>, cfg: &ConfigFile) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = cfg.get("run.out") {
        return PathBuf::from(p);
    }
    if let Some(p) = std::env::var_os("PLKRR_OUT") {
        return PathBuf::from(p);
    }
    PathBuf::from(".")
}

pub fn resolve_seed(flag: Option<u64>, cfg: &ConfigFile) -> Result<u64> {
    cfg.resolve(flag, "run.seed", 42)
}

/// Builds the eigensystem from kernel flags and config, defaulting to the
/// order-2 periodic Sobolev family on z ∈ [−1, 1].
pub fn resolve_kernel(args: &KernelArgs, cfg: &ConfigFile) -> Result<EigenSystem> {
    let family_name =
        cfg.resolve(args.kernel.clone(), "kernel.family", "sobolev".to_string())?;
    let family = match family_name.as_str() {
        "sobolev" => {
            let nu = cfg.resolve(args.nu, "kernel.nu", 2u32)?;
            KernelFamily::SobolevPeriodic { nu }
        }
        "gaussian" => KernelFamily::GaussianExp,
        "finite" => {
            let rank = cfg.resolve(args.rank, "kernel.rank", 4usize)?;
            KernelFamily::FiniteRank { rank }
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown kernel family `{other}` (expected sobolev | gaussian | finite)"
            )))
        }
    };
    let es = match cfg.resolve_opt(args.truncation, "kernel.truncation")? {
        Some(t) => EigenSystem::new(family, t)?,
        None => EigenSystem::with_default_truncation(family)?,
    };
    match cfg.resolve_opt(args.z_range.clone(), "kernel.z_range")? {
        None => Ok(es),
        Some(spec) => {
            let (lo, hi) = spec.split_once(',').ok_or_else(|| {
                Error::InvalidConfig(format!("z-range `{spec}` must be `lo,hi`"))
            })?;
            let lo: f64 = lo.trim().parse().map_err(|_| {
                Error::InvalidConfig(format!("z-range lower bound `{lo}` is not a number"))
            })?;
            let hi: f64 = hi.trim().parse().map_err(|_| {
                Error::InvalidConfig(format!("z-range upper bound `{hi}` is not a number"))
            })?;
            es.with_z_range(lo, hi)
        }
    }
}

/// Declared z interval of the eigensystem, for ingest validation.
pub fn resolve_z_interval(args: &KernelArgs, cfg: &ConfigFile) -> Result<(f64, f64)> {
    match cfg.resolve_opt(args.z_range.clone(), "kernel.z_range")? {
        None => Ok((-1.0, 1.0)),
        Some(spec) => {
            let (lo, hi) = spec
                .split_once(',')
                .ok_or_else(|| Error::InvalidConfig(format!("z-range `{spec}` must be `lo,hi`")))?;
            let lo: f64 = lo.trim().parse().map_err(|_| {
                Error::InvalidConfig(format!("z-range lower bound `{lo}` is not a number"))
            })?;
            let hi: f64 = hi.trim().parse().map_err(|_| {
                Error::InvalidConfig(format!("z-range upper bound `{hi}` is not a number"))
            })?;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!("z-range [{lo}, {hi}] is not ordered")));
            }
            Ok((lo, hi))
        }
    }
}

/// Penalty resolution: an explicit positive number, or a rule name applied
/// at the given sample size (`mse` | `clt`), defaulting to `mse`.
pub fn resolve_lambda(
    flag: Option<&str>,
    cfg: &ConfigFile,
    key: &str,
    es: &EigenSystem,
    n_total: usize,
) -> Result<f64> {
    let spec = cfg.resolve(flag.map(str::to_string), key, "mse".to_string())?;
    let lambda = match spec.as_str() {
        "mse" => lambda_rule(es.family(), n_total, LambdaObjective::MinimaxMSE)?,
        "clt" => lambda_rule(es.family(), n_total, LambdaObjective::JointCLT)?,
        other => other.parse::<f64>().map_err(|_| {
            Error::InvalidConfig(format!(
                "lambda `{other}` is neither a number nor a rule (mse | clt)"
            ))
        })?,
    };
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    Ok(lambda)
}

pub fn resolve_weighting(flag: Option<&str>, cfg: &ConfigFile) -> Result<Weighting> {
    let name = cfg.resolve(flag.map(str::to_string), "fit.weighting", "size".to_string())?;
    match name.as_str() {
        "size" => Ok(Weighting::BySize),
        "equal" => Ok(Weighting::Equal),
        other => {
            Err(Error::InvalidConfig(format!("unknown weighting `{other}` (size | equal)")))
        }
    }
}
