//! Flat `key = value` run configuration. Command-line flags override file
//! values; every key has a default that is written to the manifest.

use std::collections::BTreeMap;
use std::path::PathBuf;

use mvrisk::beta::BetaWindow;
use mvrisk::models::MarinVariant;
use mvrisk::pipeline::RunOptions;
use mvrisk::synth::DgpConfig;
use thiserror::Error;

/// Smallest window length or minimum accepted for betas, in months.
pub const MIN_BETA_MONTHS: usize = 12;

/// Keys accepted in a config file. Dashes in keys are read as underscores.
pub const KEYS: [&str; 18] = [
    "data",
    "fundamentals",
    "prices",
    "riskfree",
    "out",
    "seed",
    "n_firms",
    "n_years",
    "start_year",
    "n_markets",
    "effect_scale",
    "noise_scale",
    "beta_noise_scale",
    "marin_variant",
    "center",
    "constrain_book_unit",
    "beta_window",
    "beta_min",
];

const SYNTH_KEYS: [&str; 8] =
    ["seed", "n_firms", "n_years", "start_year", "n_markets", "effect_scale", "noise_scale", "beta_noise_scale"];
const INPUT_KEYS: [&str; 4] = ["data", "fundamentals", "prices", "riskfree"];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}` set twice (line {line})")]
    DuplicateKey { key: String, line: usize },
    #[error("invalid {key} = `{value}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("{0}")]
    Conflict(String),
    #[error("{0} is required")]
    Missing(&'static str),
}

pub type Settings = BTreeMap<String, String>;

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; values are trimmed and may not be empty.
pub fn parse_config(text: &str) -> Result<Settings, ConfigError> {
    let mut out = Settings::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: line_no, reason: "expected `key = value`".into() });
        };
        let key = normalize(key);
        let value = value.trim();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        if value.is_empty() {
            return Err(ConfigError::Syntax { line: line_no, reason: format!("empty value for `{key}`") });
        }
        if out.insert(key.clone(), value.to_owned()).is_some() {
            return Err(ConfigError::DuplicateKey { key, line: line_no });
        }
    }
    Ok(out)
}

/// Where the panel comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Files { fundamentals: PathBuf, prices: PathBuf, riskfree: PathBuf },
    Synth(DgpConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: Source,
    pub options: RunOptions,
    pub out: Option<PathBuf>,
}

fn parsed<T: std::str::FromStr>(s: &Settings, key: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    s.get(key)
        .map(|v| {
            v.parse::<T>().map_err(|e| ConfigError::InvalidValue {
                key: key.into(),
                value: v.clone(),
                reason: e.to_string(),
            })
        })
        .transpose()
}

impl RunConfig {
    /// Validates settings. Input paths and synthetic-generator keys are
    /// mutually exclusive; without input paths the panel is generated.
    pub fn from_settings(s: &Settings) -> Result<Self, ConfigError> {
        if let Some(k) = s.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let has_inputs = INPUT_KEYS.iter().any(|k| s.contains_key(*k));
        let source = if has_inputs {
            if let Some(k) = SYNTH_KEYS.iter().find(|k| s.contains_key(**k)) {
                return Err(ConfigError::Conflict(format!(
                    "`{k}` configures the synthetic generator but input files were given; set one or the other"
                )));
            }
            let path = |key: &'static str, file: &str| -> Result<PathBuf, ConfigError> {
                match (s.get(key), s.get("data")) {
                    (Some(p), _) => Ok(PathBuf::from(p)),
                    (None, Some(dir)) => Ok(PathBuf::from(dir).join(file)),
                    (None, None) => Err(ConfigError::Missing(key)),
                }
            };
            Source::Files {
                fundamentals: path("fundamentals", "fundamentals.csv")?,
                prices: path("prices", "prices.csv")?,
                riskfree: path("riskfree", "riskfree.csv")?,
            }
        } else {
            let mut cfg = DgpConfig::default();
            if let Some(v) = parsed(s, "seed")? {
                cfg.seed = v;
            }
            if let Some(v) = parsed(s, "n_firms")? {
                cfg.n_firms = v;
            }
            if let Some(v) = parsed(s, "n_years")? {
                cfg.n_years = v;
            }
            if let Some(v) = parsed(s, "start_year")? {
                cfg.start_year = v;
            }
            if let Some(v) = parsed(s, "n_markets")? {
                cfg.n_markets = v;
            }
            if let Some(v) = parsed(s, "effect_scale")? {
                cfg.effect_scale = v;
            }
            if let Some(v) = parsed(s, "noise_scale")? {
                cfg.noise_scale = v;
            }
            if let Some(v) = parsed(s, "beta_noise_scale")? {
                cfg.beta_noise_scale = v;
            }
            Source::Synth(cfg)
        };

        let marin_variant = match s.get("marin_variant") {
            None => MarinVariant::SalesRatio,
            Some(v) => MarinVariant::parse(v).ok_or_else(|| ConfigError::InvalidValue {
                key: "marin_variant".into(),
                value: v.clone(),
                reason: "expected sales, assets or log".into(),
            })?,
        };
        let default_window = BetaWindow::default();
        let max: usize = parsed(s, "beta_window")?.unwrap_or(default_window.max_months);
        let min: usize = parsed(s, "beta_min")?.unwrap_or(default_window.min_months.min(max));
        if min < MIN_BETA_MONTHS || max < min {
            return Err(ConfigError::Conflict(format!(
                "beta window must satisfy beta_window >= beta_min >= {MIN_BETA_MONTHS}, got {max} and {min}"
            )));
        }
        let window = BetaWindow::new(max, min).map_err(|e| ConfigError::Conflict(e.to_string()))?;
        let options = RunOptions {
            marin_variant,
            center: parsed(s, "center")?.unwrap_or(false),
            constrain_book_unit: parsed(s, "constrain_book_unit")?.unwrap_or(false),
            window,
        };
        Ok(Self { source, options, out: s.get("out").map(PathBuf::from) })
    }

    /// Every setting that affects results, defaults filled in. The output
    /// directory is left out so that runs differing only in destination
    /// share a hash.
    pub fn effective(&self) -> Settings {
        let mut m = Settings::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_owned(), v);
        };
        match &self.source {
            Source::Files { fundamentals, prices, riskfree } => {
                put("source", "files".into());
                put("fundamentals", fundamentals.display().to_string());
                put("prices", prices.display().to_string());
                put("riskfree", riskfree.display().to_string());
            }
            Source::Synth(c) => {
                put("source", "synth".into());
                put("seed", c.seed.to_string());
                put("n_firms", c.n_firms.to_string());
                put("n_years", c.n_years.to_string());
                put("start_year", c.start_year.to_string());
                put("n_markets", c.n_markets.to_string());
                put("effect_scale", format!("{:e}", c.effect_scale));
                put("noise_scale", format!("{:e}", c.noise_scale));
                put("beta_noise_scale", format!("{:e}", c.beta_noise_scale));
            }
        }
        put("marin_variant", self.options.marin_variant.name().into());
        put("center", self.options.center.to_string());
        put("constrain_book_unit", self.options.constrain_book_unit.to_string());
        put("beta_window", self.options.window.max_months.to_string());
        put("beta_min", self.options.window.min_months.to_string());
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> Settings {
        pairs.iter().map(|(k, v)| ((*k).to_owned(), (*v).to_owned())).collect()
    }

    #[test]
    fn parses_comments_and_dashes() {
        let s = parse_config("# run\n\nseed = 7\nmarin-variant=log\n  center = true  \n").unwrap();
        assert_eq!(s, settings(&[("seed", "7"), ("marin_variant", "log"), ("center", "true")]));
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(parse_config("seed 7"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse_config("seed ="), Err(ConfigError::Syntax { .. })));
        assert_eq!(parse_config("colour = red"), Err(ConfigError::UnknownKey("colour".into())));
        assert!(matches!(parse_config("seed=1\nseed=2"), Err(ConfigError::DuplicateKey { line: 2, .. })));
    }

    #[test]
    fn defaults_to_synth() {
        let c = RunConfig::from_settings(&Settings::new()).unwrap();
        assert_eq!(c.source, Source::Synth(DgpConfig::default()));
        assert_eq!(c.options, RunOptions::default());
        let e = c.effective();
        assert_eq!(e["beta_window"], "60");
        assert_eq!(e["beta_min"], "48");
        assert!(!e.contains_key("out"));
    }

    #[test]
    fn data_dir_and_overrides() {
        let c = RunConfig::from_settings(&settings(&[("data", "d"), ("prices", "p.csv")])).unwrap();
        assert_eq!(
            c.source,
            Source::Files {
                fundamentals: PathBuf::from("d/fundamentals.csv"),
                prices: PathBuf::from("p.csv"),
                riskfree: PathBuf::from("d/riskfree.csv"),
            }
        );
        assert!(matches!(RunConfig::from_settings(&settings(&[("prices", "p.csv")])), Err(ConfigError::Missing(_))));
    }

    #[test]
    fn inputs_and_synth_conflict() {
        let r = RunConfig::from_settings(&settings(&[("data", "d"), ("seed", "3")]));
        assert!(matches!(r, Err(ConfigError::Conflict(_))));
    }

    #[test]
    fn window_bounds() {
        let ok = RunConfig::from_settings(&settings(&[("beta_window", "36"), ("beta_min", "12")])).unwrap();
        assert_eq!(ok.options.window, BetaWindow { max_months: 36, min_months: 12 });
        let short = RunConfig::from_settings(&settings(&[("beta_window", "36")])).unwrap();
        assert_eq!(short.options.window.min_months, 36);
        for pairs in [[("beta_window", "36"), ("beta_min", "48")], [("beta_window", "60"), ("beta_min", "11")]] {
            assert!(matches!(RunConfig::from_settings(&settings(&pairs)), Err(ConfigError::Conflict(_))));
        }
    }

    #[test]
    fn bad_values() {
        for pairs in [[("seed", "-1")], [("marin_variant", "ratio")], [("center", "yes")]] {
            assert!(matches!(RunConfig::from_settings(&settings(&pairs)), Err(ConfigError::InvalidValue { .. })));
        }
    }
}
