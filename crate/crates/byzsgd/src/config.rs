//! Experiment configuration: JSON file + flag overrides -> validated config.
//!
//! The file format is flat JSON whose keys are exactly the CLI flag names
//! (`p-true`, `batch-size`, ...). Flags override file fields one by one.
//! Resolution fills documented defaults, then validates every invariant
//! and reports violations by field name. A resolved config serializes
//! back to the same flat schema, so configs round-trip and the manifest
//! written next to run outputs is itself a valid input file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const DATA_DIR_ENV: &str = "BYZSGD_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Mnist,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    /// Closest-subset acceptance with an assumed attacker count.
    Alg1,
    /// Distance-threshold plus descent-direction acceptance.
    Alg2,
    /// Krum selection baseline.
    Krum,
    /// No communication baseline.
    NonCollaborative,
}

impl FilterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Alg1 => "alg1",
            FilterKind::Alg2 => "alg2",
            FilterKind::Krum => "krum",
            FilterKind::NonCollaborative => "non-collaborative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackName {
    AddNoise,
    Random,
    Inverse,
}

impl AttackName {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackName::AddNoise => "add-noise",
            AttackName::Random => "random",
            AttackName::Inverse => "inverse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Fixed step size.
    Constant,
    /// Step size `eta / (t + 1)` at tick `t`.
    InvT,
}

/// Distance-threshold bound; `inf` disables the threshold.
/// Serialized as a number, or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delta(pub f64);

impl Delta {
    pub const INF: Delta = Delta(f64::INFINITY);

    pub fn is_inf(self) -> bool {
        self.0.is_infinite()
    }
}

impl Serialize for Delta {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            ser.serialize_str("inf")
        } else {
            ser.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Delta {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) if v.is_finite() => Ok(Delta(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!(
                "delta must be finite or \"inf\", got {v}"
            ))),
            Raw::Text(s) if s == "inf" => Ok(Delta::INF),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "delta must be a number or \"inf\", got \"{s}\""
            ))),
        }
    }
}

impl std::str::FromStr for Delta {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "inf" {
            return Ok(Delta::INF);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Delta(v)),
            _ => Err(format!("expected a finite number or \"inf\", got \"{s}\"")),
        }
    }
}

/// Tick budget: an explicit count, or `"epoch"` for `n * ceil(m / batch)`
/// ticks (one expected pass over each worker's shard).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickBudget {
    Epoch,
    Fixed(u64),
}

impl TickBudget {
    /// Concrete tick count for a resolved configuration.
    pub fn ticks(self, n: usize, m: usize, batch_size: usize) -> u64 {
        match self {
            TickBudget::Fixed(t) => t,
            TickBudget::Epoch => n as u64 * m.div_ceil(batch_size) as u64,
        }
    }
}

impl Serialize for TickBudget {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TickBudget::Epoch => ser.serialize_str("epoch"),
            TickBudget::Fixed(t) => ser.serialize_u64(*t),
        }
    }
}

impl<'de> Deserialize<'de> for TickBudget {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(t) => Ok(TickBudget::Fixed(t)),
            Raw::Text(s) if s == "epoch" => Ok(TickBudget::Epoch),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "ticks must be a count or \"epoch\", got \"{s}\""
            ))),
        }
    }
}

impl std::str::FromStr for TickBudget {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "epoch" {
            return Ok(TickBudget::Epoch);
        }
        s.parse::<u64>()
            .map(TickBudget::Fixed)
            .map_err(|_| format!("expected a tick count or \"epoch\", got \"{s}\""))
    }
}

/// Parse one of the kebab-case enum spellings used in config files, so
/// CLI flags accept exactly the same names as JSON values.
fn kebab_variant<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown {what} \"{s}\""))
}

impl std::str::FromStr for Problem {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        kebab_variant(s, "problem")
    }
}

impl std::str::FromStr for FilterKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        kebab_variant(s, "filter")
    }
}

impl std::str::FromStr for AttackName {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        kebab_variant(s, "attack")
    }
}

impl std::str::FromStr for Schedule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        kebab_variant(s, "schedule")
    }
}

/// Partially specified configuration, as read from a file or flags.
/// Unset fields fall back to defaults (or to the other source) at
/// resolution time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct PartialConfig {
    pub problem: Option<Problem>,
    pub n: Option<usize>,
    pub p_true: Option<usize>,
    pub p_assumed: Option<usize>,
    pub m: Option<usize>,
    pub batch_size: Option<usize>,
    pub eta: Option<f64>,
    pub schedule: Option<Schedule>,
    pub delta: Option<Delta>,
    pub filter: Option<FilterKind>,
    pub attack: Option<AttackName>,
    pub sigma_sq: Option<f64>,
    pub normalize: Option<bool>,
    pub ticks: Option<TickBudget>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub dim: Option<usize>,
    pub spread: Option<f64>,
    pub data_dir: Option<PathBuf>,
}

impl PartialConfig {
    /// Overlay `overrides` on `self`: any field the override sets wins.
    pub fn merged_with(mut self, overrides: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if overrides.$field.is_some() { self.$field = overrides.$field; })*
            };
        }
        take!(
            problem, n, p_true, p_assumed, m, batch_size, eta, schedule, delta, filter,
            attack, sigma_sq, normalize, ticks, seed, replicates, output_dir, dim, spread,
            data_dir
        );
        self
    }
}

/// Fully resolved and validated experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    /// Total worker count, honest plus Byzantine.
    pub n: usize,
    /// Actual number of Byzantine workers (the top `p-true` ids).
    pub p_true: usize,
    /// Attacker count the filter assumes.
    pub p_assumed: usize,
    /// Training samples (or centers) per worker shard.
    pub m: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub schedule: Schedule,
    pub delta: Delta,
    pub filter: FilterKind,
    pub attack: AttackName,
    /// Per-coordinate variance of the add-noise attack.
    pub sigma_sq: f64,
    pub normalize: bool,
    pub ticks: TickBudget,
    pub seed: u64,
    pub replicates: usize,
    pub output_dir: Option<PathBuf>,
    /// Quadratic problem dimension.
    pub dim: usize,
    /// Standard deviation of quadratic center coordinates.
    pub spread: f64,
    /// MNIST directory; falls back to `BYZSGD_DATA_DIR`.
    pub data_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn tick_count(&self) -> u64 {
        self.ticks.ticks(self.n, self.m, self.batch_size)
    }

    pub fn honest_count(&self) -> usize {
        self.n - self.p_true
    }
}

fn fail(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::config(format!("{field}: {msg}"))
}

/// Fill defaults and validate. `env_data_dir` is the ambient dataset
/// location (normally `BYZSGD_DATA_DIR`), passed explicitly so resolution
/// stays a pure function.
pub fn resolve_with_env(
    partial: PartialConfig,
    env_data_dir: Option<PathBuf>,
) -> Result<ExperimentConfig> {
    let problem = partial.problem.unwrap_or(Problem::Quadratic);
    let config = ExperimentConfig {
        problem,
        n: partial.n.unwrap_or(50),
        p_true: partial.p_true.unwrap_or(0),
        p_assumed: partial.p_assumed.unwrap_or(0),
        m: partial.m.unwrap_or(600),
        batch_size: partial.batch_size.unwrap_or(32),
        eta: partial.eta.unwrap_or(0.01),
        schedule: partial.schedule.unwrap_or(Schedule::Constant),
        delta: partial.delta.unwrap_or(Delta::INF),
        filter: partial.filter.unwrap_or(FilterKind::Alg1),
        attack: partial.attack.unwrap_or(AttackName::AddNoise),
        sigma_sq: partial.sigma_sq.unwrap_or(0.1),
        normalize: partial.normalize.unwrap_or(problem == Problem::Mnist),
        ticks: partial.ticks.unwrap_or(TickBudget::Epoch),
        seed: partial.seed.unwrap_or(42),
        replicates: partial.replicates.unwrap_or(1),
        output_dir: partial.output_dir,
        dim: partial.dim.unwrap_or(10),
        spread: partial.spread.unwrap_or(1.0),
        data_dir: partial.data_dir.or(env_data_dir),
    };
    validate(&config)?;
    Ok(config)
}

/// Check every config invariant, reporting violations by field name.
pub fn validate(c: &ExperimentConfig) -> Result<()> {
    if c.n < 1 {
        return Err(fail("n", "need at least one worker"));
    }
    if c.p_true > c.n - 1 {
        return Err(fail("p-true", format!("must be at most n-1 = {}", c.n - 1)));
    }
    if c.p_assumed > c.n - 1 {
        return Err(fail("p-assumed", format!("must be at most n-1 = {}", c.n - 1)));
    }
    if c.filter == FilterKind::Krum && c.n < c.p_assumed + 3 {
        return Err(fail(
            "p-assumed",
            format!("krum needs n - p-assumed - 2 >= 1, but n = {} ", c.n),
        ));
    }
    if c.m < 1 {
        return Err(fail("m", "shard size must be positive"));
    }
    if c.batch_size < 1 {
        return Err(fail("batch-size", "must be positive"));
    }
    if !(c.eta.is_finite() && c.eta > 0.0) {
        return Err(fail("eta", "step size must be positive and finite"));
    }
    if !(c.delta.0 > 0.0) {
        return Err(fail("delta", "must be positive (or \"inf\")"));
    }
    if !(c.sigma_sq.is_finite() && c.sigma_sq >= 0.0) {
        return Err(fail("sigma-sq", "variance must be non-negative and finite"));
    }
    if let TickBudget::Fixed(0) = c.ticks {
        return Err(fail("ticks", "need at least one tick"));
    }
    if c.replicates < 1 {
        return Err(fail("replicates", "need at least one replicate"));
    }
    match c.problem {
        Problem::Quadratic => {
            if c.dim < 1 {
                return Err(fail("dim", "dimension must be positive"));
            }
            if !(c.spread.is_finite() && c.spread >= 0.0) {
                return Err(fail("spread", "must be non-negative and finite"));
            }
        }
        Problem::Mnist => {
            if c.data_dir.is_none() {
                return Err(fail(
                    "data-dir",
                    format!("mnist needs a dataset directory (flag, config, or ${DATA_DIR_ENV})"),
                ));
            }
        }
    }
    Ok(())
}

/// Parse the optional config file, overlay flag-supplied fields, resolve.
pub fn parse_config(file: Option<&Path>, flags: PartialConfig) -> Result<ExperimentConfig> {
    let base = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::config(format!("cannot read config file {}: {e}", path.display()))
            })?;
            serde_json::from_str::<PartialConfig>(&text).map_err(|e| {
                Error::config(format!("config file {}: {e}", path.display()))
            })?
        }
        None => PartialConfig::default(),
    };
    let env_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    resolve_with_env(base.merged_with(flags), env_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> ExperimentConfig {
        resolve_with_env(PartialConfig::default(), None).unwrap()
    }

    #[test]
    fn empty_input_resolves_to_valid_defaults() {
        let c = defaults();
        assert_eq!(c.problem, Problem::Quadratic);
        assert_eq!(c.n, 50);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.eta, 0.01);
        assert!(!c.normalize, "quadratic default leaves normalization off");
        assert!(c.delta.is_inf());
        assert_eq!(c.ticks, TickBudget::Epoch);
    }

    #[test]
    fn mnist_defaults_to_normalization_on() {
        let partial = PartialConfig {
            problem: Some(Problem::Mnist),
            ..Default::default()
        };
        let c = resolve_with_env(partial, Some(PathBuf::from("/data"))).unwrap();
        assert!(c.normalize);
        assert_eq!(c.data_dir, Some(PathBuf::from("/data")));
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = defaults();
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(c, back);
        // The serialized form is also a valid partial input.
        let partial: PartialConfig = serde_json::from_str(&text).unwrap();
        let resolved = resolve_with_env(partial, None).unwrap();
        assert_eq!(c, resolved);
    }

    #[test]
    fn flags_override_every_file_field() {
        let file: PartialConfig = serde_json::from_str(r#"{"n": 10, "eta": 0.5}"#).unwrap();
        let flags = PartialConfig {
            problem: Some(Problem::Quadratic),
            n: Some(20),
            p_true: Some(3),
            p_assumed: Some(4),
            m: Some(100),
            batch_size: Some(8),
            eta: Some(0.25),
            schedule: Some(Schedule::InvT),
            delta: Some(Delta(9.0)),
            filter: Some(FilterKind::Alg2),
            attack: Some(AttackName::Inverse),
            sigma_sq: Some(0.5),
            normalize: Some(true),
            ticks: Some(TickBudget::Fixed(77)),
            seed: Some(1),
            replicates: Some(2),
            output_dir: Some(PathBuf::from("/tmp/out")),
            dim: Some(6),
            spread: Some(2.0),
            data_dir: Some(PathBuf::from("/tmp/data")),
        };
        let merged = file.merged_with(flags.clone());
        // Every field must carry the flag value, none the file value.
        let merged_v = serde_json::to_value(&merged).unwrap();
        let flags_v = serde_json::to_value(&flags).unwrap();
        assert_eq!(merged_v, flags_v);
    }

    #[test]
    fn file_fields_survive_when_flags_are_silent() {
        let file: PartialConfig = serde_json::from_str(r#"{"n": 10, "eta": 0.5}"#).unwrap();
        let merged = file.merged_with(PartialConfig::default());
        assert_eq!(merged.n, Some(10));
        assert_eq!(merged.eta, Some(0.5));
    }

    #[test]
    fn krum_with_too_few_workers_is_rejected_by_name() {
        let partial = PartialConfig {
            filter: Some(FilterKind::Krum),
            n: Some(4),
            p_assumed: Some(3),
            ..Default::default()
        };
        let err = resolve_with_env(partial, None).unwrap_err();
        assert!(err.to_string().contains("p-assumed"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn attacker_count_cannot_reach_n() {
        let partial = PartialConfig {
            n: Some(5),
            p_true: Some(5),
            ..Default::default()
        };
        let err = resolve_with_env(partial, None).unwrap_err();
        assert!(err.to_string().contains("p-true"), "{err}");
    }

    #[test]
    fn mnist_without_data_dir_is_rejected_by_name() {
        let partial = PartialConfig {
            problem: Some(Problem::Mnist),
            ..Default::default()
        };
        let err = resolve_with_env(partial, None).unwrap_err();
        assert!(err.to_string().contains("data-dir"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<PartialConfig>(r#"{"learning-rate": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("learning-rate"), "{err}");
    }

    #[test]
    fn delta_accepts_numbers_and_inf() {
        let d: Delta = serde_json::from_str("2.5").unwrap();
        assert_eq!(d, Delta(2.5));
        let d: Delta = serde_json::from_str("\"inf\"").unwrap();
        assert!(d.is_inf());
        assert_eq!(serde_json::to_string(&d).unwrap(), "\"inf\"");
        assert!(serde_json::from_str::<Delta>("\"lots\"").is_err());
    }

    #[test]
    fn tick_budget_accepts_counts_and_epoch() {
        let t: TickBudget = serde_json::from_str("1000").unwrap();
        assert_eq!(t, TickBudget::Fixed(1000));
        let t: TickBudget = serde_json::from_str("\"epoch\"").unwrap();
        assert_eq!(t, TickBudget::Epoch);
        assert_eq!(serde_json::to_string(&t).unwrap(), "\"epoch\"");
        // 50 workers, 600 samples, batch 32 -> 19 batches per epoch.
        assert_eq!(t.ticks(50, 600, 32), 50 * 19);
    }

    #[test]
    fn enum_spellings_are_kebab_case() {
        assert_eq!(serde_json::to_string(&FilterKind::NonCollaborative).unwrap(),
            "\"non-collaborative\"");
        assert_eq!(serde_json::to_string(&FilterKind::Alg1).unwrap(), "\"alg1\"");
        assert_eq!(serde_json::to_string(&AttackName::AddNoise).unwrap(), "\"add-noise\"");
        assert_eq!(serde_json::to_string(&Schedule::InvT).unwrap(), "\"inv-t\"");
    }
}
