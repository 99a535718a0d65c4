//! Flat key-value run configuration.
//!
//! Syntax: one `key = value` per line; `#` starts a comment line; blank
//! lines are skipped. The matrix keys `mechanism`, `epsilon`, `w` and
//! `seed` repeat to form lists; every other key takes a single value.
//! Unknown keys are errors, so a typo cannot silently drop a knob.
//!
//! ```text
//! mechanism       lbu | lsp | lbd | lba | lpu | lpd | lpa    (repeatable)
//! epsilon         window privacy budget, > 0                 (repeatable)
//! w               window length in steps, >= 1               (repeatable)
//! seed            64-bit run seed                            (repeatable)
//! dataset         lns | sin | log | csv
//! users           population size                 (generator datasets)
//! steps           horizon T                       (generator datasets)
//! lns_p0          start of the noisy walk         (dataset = lns)
//! lns_step_std    walk step deviation             (dataset = lns)
//! sin_amplitude   wave amplitude                  (dataset = sin)
//! sin_angular_freq wave angular frequency         (dataset = sin)
//! sin_offset      wave offset                     (dataset = sin)
//! log_limit       saturation limit                (dataset = log)
//! log_growth      saturation growth rate          (dataset = log)
//! csv_path        stream file, relative to the config file (dataset = csv)
//! u_min           population-division publication floor, default 1
//! monitor         max | mean, default mean
//! delta_fraction  event threshold position, in (0, 1), default 0.75
//! out             output directory (relative to the config file);
//!                 the --out flag overrides it
//! ```

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ldplab_core::generate::GeneratorKind;
use ldplab_core::metrics::Monitor;
use ldplab_core::stream::MechanismKind;

use crate::dataset::DatasetSpec;
use crate::error::HarnessError;

/// Default position of the event threshold inside the monitored range.
pub const DEFAULT_DELTA_FRACTION: f64 = 0.75;

/// Output directory when neither the config nor the CLI names one.
pub const DEFAULT_OUT_DIR: &str = "out";

/// The run matrix and analysis knobs of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mechanisms: Vec<MechanismKind>,
    pub epsilons: Vec<f64>,
    pub windows: Vec<u64>,
    pub seeds: Vec<u64>,
    pub dataset: DatasetSpec,
    /// Fewest publication users a population-division step may spend on.
    pub u_min: u64,
    pub monitor: Monitor,
    pub delta_fraction: f64,
    /// Output directory declared in the config, already anchored to the
    /// config file's directory.
    pub out: Option<PathBuf>,
}

/// Reads and validates a config file; relative paths inside it resolve
/// against the file's directory.
pub fn load(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::ConfigParse(format!("{}: {e}", path.display())))?;
    let base = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    parse_inner(&text, &base)
        .map_err(|msg| HarnessError::ConfigParse(format!("{}: {msg}", path.display())))
}

/// Parses config text; `base_dir` anchors relative paths.
pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig, HarnessError> {
    parse_inner(text, base_dir).map_err(HarnessError::ConfigParse)
}

/// Parsed `key = value` lines with consumption tracking, shared by the
/// config parser and the replay metadata reader.
pub(crate) struct Entries {
    items: Vec<(usize, String, String)>,
    used: Vec<bool>,
}

impl Entries {
    pub(crate) fn parse(text: &str) -> Result<Self, String> {
        let mut items = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(format!("line {line}: expected `key = value`"));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(format!("line {line}: missing key before `=`"));
            }
            if value.is_empty() {
                return Err(format!("line {line}: key '{key}' has an empty value"));
            }
            items.push((line, key.to_string(), value.to_string()));
        }
        let used = vec![false; items.len()];
        Ok(Self { items, used })
    }

    /// All values bound to `key`, in declaration order.
    pub(crate) fn take_list(&mut self, key: &str) -> Vec<(usize, String)> {
        let mut out = Vec::new();
        for (i, (line, k, v)) in self.items.iter().enumerate() {
            if k == key {
                self.used[i] = true;
                out.push((*line, v.clone()));
            }
        }
        out
    }

    /// The single value bound to `key`, if any.
    pub(crate) fn take_scalar(&mut self, key: &str) -> Result<Option<(usize, String)>, String> {
        let found = self.take_list(key);
        if found.len() > 1 {
            return Err(format!("line {}: key '{key}' appears more than once", found[1].0));
        }
        Ok(found.into_iter().next())
    }

    /// Like [`Entries::take_scalar`] but the key must be present.
    pub(crate) fn expect_scalar(&mut self, key: &str) -> Result<(usize, String), String> {
        self.take_scalar(key)?
            .ok_or_else(|| format!("missing required key '{key}'"))
    }

    /// Call after all takes: errors on the first unconsumed key.
    pub(crate) fn finish(&self) -> Result<(), String> {
        for (i, (line, key, _)) in self.items.iter().enumerate() {
            if !self.used[i] {
                return Err(format!("line {line}: unknown key '{key}'"));
            }
        }
        Ok(())
    }
}

/// Parses one typed value, naming the key and line on failure.
pub(crate) fn typed<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, String>
where
    T::Err: Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("line {line}: key '{key}': {e}"))
}

/// A repeatable key: every value parsed, duplicates rejected (they would
/// collide on run ids).
fn list_of<T: FromStr + PartialEq>(entries: &mut Entries, key: &str) -> Result<Vec<(usize, T)>, String>
where
    T::Err: Display,
{
    let mut out: Vec<(usize, T)> = Vec::new();
    for (line, raw) in entries.take_list(key) {
        let value: T = typed(line, key, &raw)?;
        if out.iter().any(|(_, seen)| *seen == value) {
            return Err(format!("line {line}: key '{key}': duplicate value '{raw}'"));
        }
        out.push((line, value));
    }
    Ok(out)
}

fn scalar_of<T: FromStr>(entries: &mut Entries, key: &str) -> Result<Option<(usize, T)>, String>
where
    T::Err: Display,
{
    match entries.take_scalar(key)? {
        Some((line, raw)) => Ok(Some((line, typed(line, key, &raw)?))),
        None => Ok(None),
    }
}

/// Floats from config text must be finite ("inf" parses but is never a
/// meaningful knob here).
fn finite_of(entries: &mut Entries, key: &str) -> Result<Option<(usize, f64)>, String> {
    match scalar_of::<f64>(entries, key)? {
        Some((line, v)) if !v.is_finite() => Err(format!("line {line}: key '{key}' must be finite")),
        other => Ok(other),
    }
}

fn forbid<T>(slot: &Option<(usize, T)>, key: &str, family: &str) -> Result<(), String> {
    match slot {
        Some((line, _)) => Err(format!("line {line}: key '{key}' does not apply to dataset = {family}")),
        None => Ok(()),
    }
}

fn require<T>(slot: Option<(usize, T)>, key: &str, family: &str) -> Result<T, String> {
    slot.map(|(_, v)| v)
        .ok_or_else(|| format!("dataset = {family} requires key '{key}'"))
}

fn parse_inner(text: &str, base_dir: &Path) -> Result<RunConfig, String> {
    let mut entries = Entries::parse(text)?;

    let mechanisms: Vec<MechanismKind> = list_of::<MechanismKind>(&mut entries, "mechanism")?
        .into_iter()
        .map(|(_, m)| m)
        .collect();
    if mechanisms.is_empty() {
        return Err("empty mechanism list: declare at least one `mechanism = ...`".to_string());
    }

    let epsilons = list_of::<f64>(&mut entries, "epsilon")?;
    if epsilons.is_empty() {
        return Err("missing required key 'epsilon'".to_string());
    }
    for &(line, e) in &epsilons {
        if !(e.is_finite() && e > 0.0) {
            return Err(format!("line {line}: epsilon must be positive and finite, got {e}"));
        }
    }
    let epsilons: Vec<f64> = epsilons.into_iter().map(|(_, e)| e).collect();

    let windows = list_of::<u64>(&mut entries, "w")?;
    if windows.is_empty() {
        return Err("missing required key 'w'".to_string());
    }
    for &(line, w) in &windows {
        if w == 0 {
            return Err(format!("line {line}: w must be at least 1"));
        }
    }
    let windows: Vec<u64> = windows.into_iter().map(|(_, w)| w).collect();

    let seeds: Vec<u64> = list_of::<u64>(&mut entries, "seed")?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    if seeds.is_empty() {
        return Err("missing required key 'seed'".to_string());
    }

    let (ds_line, family) = entries.expect_scalar("dataset")?;
    let users = scalar_of::<u64>(&mut entries, "users")?;
    let steps = scalar_of::<u64>(&mut entries, "steps")?;
    let csv_path = entries.take_scalar("csv_path")?;
    let lns_p0 = finite_of(&mut entries, "lns_p0")?;
    let lns_step_std = finite_of(&mut entries, "lns_step_std")?;
    let sin_amplitude = finite_of(&mut entries, "sin_amplitude")?;
    let sin_angular_freq = finite_of(&mut entries, "sin_angular_freq")?;
    let sin_offset = finite_of(&mut entries, "sin_offset")?;
    let log_limit = finite_of(&mut entries, "log_limit")?;
    let log_growth = finite_of(&mut entries, "log_growth")?;

    let check_population = |users: u64, steps: u64| -> Result<(), String> {
        if users == 0 {
            return Err("users must be at least 1".to_string());
        }
        if users > u32::MAX as u64 {
            return Err(format!("users = {users} exceeds the u32 user-index space"));
        }
        if steps == 0 {
            return Err("steps must be at least 1".to_string());
        }
        Ok(())
    };

    let dataset = match family.as_str() {
        "lns" => {
            forbid(&csv_path, "csv_path", "lns")?;
            forbid(&sin_amplitude, "sin_amplitude", "lns")?;
            forbid(&sin_angular_freq, "sin_angular_freq", "lns")?;
            forbid(&sin_offset, "sin_offset", "lns")?;
            forbid(&log_limit, "log_limit", "lns")?;
            forbid(&log_growth, "log_growth", "lns")?;
            if let Some((line, std)) = lns_step_std {
                if std < 0.0 {
                    return Err(format!("line {line}: lns_step_std must be nonnegative"));
                }
            }
            let users = require(users, "users", "lns")?;
            let steps = require(steps, "steps", "lns")?;
            check_population(users, steps)?;
            let GeneratorKind::Lns { p0, step_std } = GeneratorKind::default_lns() else {
                unreachable!()
            };
            let kind = GeneratorKind::Lns {
                p0: lns_p0.map_or(p0, |(_, v)| v),
                step_std: lns_step_std.map_or(step_std, |(_, v)| v),
            };
            DatasetSpec::Generated { kind, users, steps }
        }
        "sin" => {
            forbid(&csv_path, "csv_path", "sin")?;
            forbid(&lns_p0, "lns_p0", "sin")?;
            forbid(&lns_step_std, "lns_step_std", "sin")?;
            forbid(&log_limit, "log_limit", "sin")?;
            forbid(&log_growth, "log_growth", "sin")?;
            let users = require(users, "users", "sin")?;
            let steps = require(steps, "steps", "sin")?;
            check_population(users, steps)?;
            let GeneratorKind::Sin { amplitude, angular_freq, offset } =
                GeneratorKind::default_sin()
            else {
                unreachable!()
            };
            let kind = GeneratorKind::Sin {
                amplitude: sin_amplitude.map_or(amplitude, |(_, v)| v),
                angular_freq: sin_angular_freq.map_or(angular_freq, |(_, v)| v),
                offset: sin_offset.map_or(offset, |(_, v)| v),
            };
            DatasetSpec::Generated { kind, users, steps }
        }
        "log" => {
            forbid(&csv_path, "csv_path", "log")?;
            forbid(&lns_p0, "lns_p0", "log")?;
            forbid(&lns_step_std, "lns_step_std", "log")?;
            forbid(&sin_amplitude, "sin_amplitude", "log")?;
            forbid(&sin_angular_freq, "sin_angular_freq", "log")?;
            forbid(&sin_offset, "sin_offset", "log")?;
            let users = require(users, "users", "log")?;
            let steps = require(steps, "steps", "log")?;
            check_population(users, steps)?;
            let GeneratorKind::Log { limit, growth } = GeneratorKind::default_log() else {
                unreachable!()
            };
            let kind = GeneratorKind::Log {
                limit: log_limit.map_or(limit, |(_, v)| v),
                growth: log_growth.map_or(growth, |(_, v)| v),
            };
            DatasetSpec::Generated { kind, users, steps }
        }
        "csv" => {
            forbid(&users, "users", "csv")?;
            forbid(&steps, "steps", "csv")?;
            forbid(&lns_p0, "lns_p0", "csv")?;
            forbid(&lns_step_std, "lns_step_std", "csv")?;
            forbid(&sin_amplitude, "sin_amplitude", "csv")?;
            forbid(&sin_angular_freq, "sin_angular_freq", "csv")?;
            forbid(&sin_offset, "sin_offset", "csv")?;
            forbid(&log_limit, "log_limit", "csv")?;
            forbid(&log_growth, "log_growth", "csv")?;
            let (_, raw) = csv_path.ok_or("dataset = csv requires key 'csv_path'")?;
            let joined = base_dir.join(raw);
            let path = std::path::absolute(&joined)
                .map_err(|e| format!("csv_path '{}': {e}", joined.display()))?;
            DatasetSpec::File { path }
        }
        other => {
            return Err(format!(
                "line {ds_line}: unknown dataset '{other}' (expected lns, sin, log or csv)"
            ))
        }
    };

    let u_min = match scalar_of::<u64>(&mut entries, "u_min")? {
        Some((line, 0)) => return Err(format!("line {line}: u_min must be at least 1")),
        Some((_, v)) => v,
        None => 1,
    };
    let monitor = match entries.take_scalar("monitor")? {
        Some((line, raw)) => typed::<Monitor>(line, "monitor", &raw)?,
        None => Monitor::Mean,
    };
    let delta_fraction = match finite_of(&mut entries, "delta_fraction")? {
        Some((line, v)) => {
            if !(v > 0.0 && v < 1.0) {
                return Err(format!(
                    "line {line}: delta_fraction must lie strictly between 0 and 1"
                ));
            }
            v
        }
        None => DEFAULT_DELTA_FRACTION,
    };
    let out = entries.take_scalar("out")?.map(|(_, v)| base_dir.join(v));
    entries.finish()?;

    Ok(RunConfig {
        mechanisms,
        epsilons,
        windows,
        seeds,
        dataset,
        u_min,
        monitor,
        delta_fraction,
        out,
    })
}
