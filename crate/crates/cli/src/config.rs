//! Flat `key = value` configuration with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use chrono_tz::Tz;

use twimob::displacement::{FilterConfig, MPH_TO_MPS};
use twimob::ingest::{InputFormat, TimestampStyle};

/// Environment variable holding the default analysis timezone.
pub const TZ_ENV: &str = "TWIMOB_TZ";

/// Raw settings, later sources overriding earlier ones.
#[derive(Debug, Default, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key = value", i + 1))?;
            let key = k.trim().replace('-', "_");
            if key.is_empty() {
                bail!("config line {}: empty key", i + 1);
            }
            values.insert(key, v.trim().trim_matches('"').to_string());
        }
        Ok(Settings { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("config file not found: {}", path.display()))?;
        Settings::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("invalid value for {key}: '{v}' ({e})"))
            })
            .transpose()
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None => Ok(false),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                other => bail!("invalid boolean for {key}: '{other}'"),
            },
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }
}

pub fn parse_tz(name: &str) -> Result<Tz> {
    name.parse::<Tz>().map_err(|_| anyhow!("unknown timezone '{name}'"))
}

/// Analysis timezone: setting, then environment, then UTC.
pub fn timezone(settings: &Settings) -> Result<Tz> {
    match settings.get("tz") {
        Some(name) => parse_tz(name),
        None => match std::env::var(TZ_ENV) {
            Ok(name) if !name.is_empty() => parse_tz(&name),
            _ => Ok(chrono_tz::UTC),
        },
    }
}

/// Extraction thresholds; speeds are given in mph and windows in hours.
pub fn filter_config(settings: &Settings) -> Result<FilterConfig> {
    let mut cfg = FilterConfig::default();
    if let Some(n) = settings.parsed::<usize>("min_tweets")? {
        cfg.min_tweets = n;
    }
    if let Some(mph) = settings.parsed::<f64>("max_speed_mph")? {
        cfg.max_speed = mph * MPH_TO_MPS;
    }
    if let Some(h) = settings.parsed::<f64>("time_window_h")? {
        cfg.time_window = (h * 3600.0).round() as i64;
    }
    if let Some(m) = settings.parsed::<f64>("min_displacement_m")? {
        cfg.min_displacement_distance = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub format: InputFormat,
    pub timestamps: TimestampStyle,
    pub zones: Option<PathBuf>,
    pub filter: FilterConfig,
    pub tz: Tz,
    pub focal_zone: Option<String>,
    pub include_intra: bool,
    pub include_external: bool,
    pub group_cutoff: f64,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl PipelineConfig {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let inputs = s
            .get("input")
            .map(|v| v.split(',').map(|p| PathBuf::from(p.trim())).collect())
            .unwrap_or_default();
        let format = match s.get("format") {
            Some(f) => f.parse::<InputFormat>().map_err(|e| anyhow!(e))?,
            None => InputFormat::Csv,
        };
        let timestamps = if s.flag("legacy_timestamps")? {
            TimestampStyle::Legacy
        } else {
            TimestampStyle::Iso8601
        };
        let group_cutoff = s.parsed::<f64>("group_cutoff")?.unwrap_or(0.01);
        if !(group_cutoff > 0.0 && group_cutoff < 1.0) {
            bail!("group_cutoff must lie in (0, 1), got {group_cutoff}");
        }
        let workers = match s.parsed::<usize>("workers")? {
            Some(0) => bail!("workers must be at least 1"),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        Ok(PipelineConfig {
            inputs,
            format,
            timestamps,
            zones: s.path("zones"),
            filter: filter_config(s)?,
            tz: timezone(s)?,
            focal_zone: s.get("focal_zone").map(str::to_string),
            include_intra: s.flag("include_intra")?,
            include_external: s.flag("include_external")?,
            group_cutoff,
            out_dir: s.path("out").unwrap_or_else(|| PathBuf::from("out")),
            workers,
        })
    }

    /// Checks that every referenced input exists.
    pub fn check_paths(&self) -> Result<()> {
        if let Some(z) = &self.zones {
            if !z.is_file() {
                bail!("zones file not found: {}", z.display());
            }
        }
        for p in &self.inputs {
            if !p.is_file() {
                bail!("input file not found: {}", p.display());
            }
        }
        Ok(())
    }
}
