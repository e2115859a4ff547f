//! Configuration file, `CLPU_*` environment overrides and validation.
//!
//! Precedence, lowest first: built-in defaults, the TOML file, environment
//! variables, command-line flags. An environment variable `CLPU_A__B` sets key
//! `b` in table `a`; its value is parsed as a TOML value and falls back to a
//! string.

use std::path::{Path, PathBuf};

use clpu_core::clpu::{ClpuOptions, DEFAULT_PEAK_LAGS};
use clpu_core::etpsim::WinterSuiteConfig;
use clpu_core::harness::{BacktestConfig, EtpValidationConfig};
use clpu_core::order_select::{SearchConfig, SearchMethod};
use clpu_core::series::CsvSchema;
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "CLPU_";

/// Raised for unreadable, unknown or out-of-range configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Series in the synthetic comparison suite.
    pub n_series: usize,
    pub days: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n_series: 20, days: 14 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub delta_minutes: u32,
    pub horizon_cap: usize,
    pub refresh_days: i64,
    pub peak_lags: usize,
    pub stale_days: i64,
    pub peak_floor_kw: f64,
    /// Days of trailing history the energy model is fitted on.
    pub train_days: usize,
    pub search_method: SearchMethod,
    pub search: SearchConfig,
    pub csv: CsvSchema,
    pub backtest: BacktestConfig,
    pub synth: SynthConfig,
    pub etp: WinterSuiteConfig,
}

impl Default for Config {
    fn default() -> Self {
        let clpu = ClpuOptions::default();
        Self {
            output_dir: PathBuf::from("out"),
            seed: 0,
            jobs: 1,
            delta_minutes: 15,
            horizon_cap: clpu.horizon_cap,
            refresh_days: clpu_core::order_select::DEFAULT_REFRESH_DAYS,
            peak_lags: DEFAULT_PEAK_LAGS,
            stale_days: clpu.stale_days,
            peak_floor_kw: clpu.peak_floor_kw,
            train_days: 7,
            search_method: SearchMethod::Reduced,
            search: SearchConfig::default(),
            csv: CsvSchema::default(),
            backtest: BacktestConfig::default(),
            synth: SynthConfig::default(),
            etp: WinterSuiteConfig::default(),
        }
    }
}

impl Config {
    /// Defaults, then `path` (if any), then environment overrides.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        env.sort();
        for (key, raw) in env {
            let path: Vec<String> = key[ENV_PREFIX.len()..]
                .split("__")
                .map(|s| s.to_ascii_lowercase())
                .collect();
            if path.iter().any(String::is_empty) {
                return Err(ConfigError(format!("malformed environment key {key}")));
            }
            set_path(&mut table, &path, parse_env_value(&raw)).map_err(|e| ConfigError(format!("{key}: {e}")))?;
        }
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        if !clpu_core::series::ALLOWED_RESOLUTIONS.contains(&self.delta_minutes) {
            return bad(format!("delta_minutes {} is not one of 5, 15, 30, 60", self.delta_minutes));
        }
        if self.horizon_cap == 0 {
            return bad("horizon_cap must be >= 1".into());
        }
        if self.refresh_days < 1 {
            return bad("refresh_days must be >= 1".into());
        }
        if self.peak_lags == 0 {
            return bad("peak_lags must be >= 1".into());
        }
        if self.stale_days < 0 {
            return bad("stale_days must be >= 0".into());
        }
        if self.train_days < 2 {
            return bad("train_days must be >= 2".into());
        }
        if self.synth.n_series == 0 || self.synth.days < 3 {
            return bad("synth needs n_series >= 1 and days >= 3".into());
        }
        self.search.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.backtest_config()
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        self.etp.base.validate().map_err(|e| ConfigError(e.to_string()))
    }

    pub fn clpu_options(&self) -> ClpuOptions {
        ClpuOptions {
            peak_floor_kw: self.peak_floor_kw,
            stale_days: self.stale_days,
            horizon_cap: self.horizon_cap,
        }
    }

    fn parallel(&self) -> bool {
        self.jobs != 1
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            parallel: self.parallel(),
            ..self.search.clone()
        }
    }

    /// The `[backtest]` table with the shared search and refresh settings.
    pub fn backtest_config(&self) -> BacktestConfig {
        BacktestConfig {
            refresh_days: self.refresh_days,
            search: self.search.clone(),
            parallel: self.parallel(),
            ..self.backtest.clone()
        }
    }

    pub fn validation_config(&self) -> EtpValidationConfig {
        EtpValidationConfig {
            delta_minutes: self.delta_minutes,
            train_days: self.train_days,
            peak_lags: self.peak_lags,
            search_method: self.search_method,
            search: self.search.clone(),
            clpu: self.clpu_options(),
            parallel: self.parallel(),
        }
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), String> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("`{p}` is not a table"))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str, env: &[(&str, &str)]) -> Result<Config, ConfigError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, text).unwrap();
        Config::load(
            Some(&path),
            env.iter().map(|(k, v)| (k.to_string(), v.to_string())),
        )
    }

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(load_str("", &[]).unwrap(), Config::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = load_str("[search]\np_limt = 3\n", &[]).unwrap_err();
        assert!(err.to_string().contains("p_limt"), "{err}");
        let err = load_str("bogus = 1\n", &[]).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn env_overrides_file() {
        let cfg = load_str(
            "seed = 3\n[search]\np_limit = 4\n",
            &[("CLPU_SEARCH__P_LIMIT", "2"), ("CLPU_OUTPUT_DIR", "elsewhere"), ("OTHER", "x")],
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.search.p_limit, 2);
        assert_eq!(cfg.output_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(load_str("delta_minutes = 7\n", &[]).is_err());
        assert!(load_str("[search]\nci_level = 1.5\n", &[]).is_err());
        assert!(load_str("[backtest]\nhorizon_steps = 0\n", &[]).is_err());
    }
}
