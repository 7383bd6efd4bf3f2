//! TOML description of a synthetic corpus.

use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::Deserialize;

use twimob::displacement::{FilterConfig, MPH_TO_MPS};
use twimob::synthgen::{grid_zones, SynthConfig, TweetVolume};
use twimob::zoning::load_zones;
use twimob::ZoneSet;

use crate::config::parse_tz;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    pub seed: u64,
    pub n_agents: usize,
    /// GeoJSON path, relative to the config file.
    pub zones: Option<String>,
    pub grid: Option<GridSpec>,
    pub od_weights: Option<Vec<Vec<f64>>>,
    pub tweets_per_agent: Option<VolumeSpec>,
    pub weekday_schedule: Option<Vec<f64>>,
    pub weekend_schedule: Option<Vec<f64>>,
    pub gps_noise_sigma_m: Option<f64>,
    pub anomaly_rate: Option<f64>,
    pub miss_rate: Option<f64>,
    pub start_date: Option<String>,
    pub days: Option<u32>,
    pub tz: Option<String>,
    pub filter: Option<FilterSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub south: f64,
    pub west: f64,
    pub cell_deg: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeSpec {
    pub x_min: f64,
    pub alpha: f64,
    pub max: usize,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub min_tweets: Option<usize>,
    pub max_speed_mph: Option<f64>,
    pub time_window_h: Option<f64>,
    pub min_displacement_m: Option<f64>,
}

fn schedule(v: Option<Vec<f64>>, default: [f64; 24], name: &str) -> Result<[f64; 24]> {
    match v {
        None => Ok(default),
        Some(v) => v
            .try_into()
            .map_err(|v: Vec<f64>| anyhow::anyhow!("{name} needs 24 weights, got {}", v.len())),
    }
}

impl SynthFile {
    pub fn load(path: &Path) -> Result<(Self, std::path::PathBuf)> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("synth config not found: {}", path.display()))?;
        let parsed: SynthFile = toml::from_str(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((parsed, base))
    }

    pub fn into_config(self, base: &Path) -> Result<SynthConfig> {
        let zones: ZoneSet = match (&self.zones, &self.grid) {
            (Some(z), None) => {
                let p = base.join(z);
                let text =
                    std::fs::read_to_string(&p).with_context(|| format!("zones file not found: {}", p.display()))?;
                load_zones(&text).with_context(|| format!("in {}", p.display()))?
            }
            (None, Some(g)) => grid_zones(g.rows, g.cols, g.south, g.west, g.cell_deg),
            _ => bail!("synth config needs exactly one of `zones` or `[grid]`"),
        };
        let mut cfg = SynthConfig::new(zones, self.seed, self.n_agents);
        if let Some(od) = self.od_weights {
            cfg.od_weights = od;
        }
        if let Some(v) = self.tweets_per_agent {
            cfg.tweets_per_agent = TweetVolume {
                x_min: v.x_min,
                alpha: v.alpha,
                max: v.max,
            };
        }
        cfg.weekday_schedule = schedule(self.weekday_schedule, cfg.weekday_schedule, "weekday_schedule")?;
        cfg.weekend_schedule = schedule(self.weekend_schedule, cfg.weekend_schedule, "weekend_schedule")?;
        if let Some(s) = self.gps_noise_sigma_m {
            cfg.gps_noise_sigma = s;
        }
        if let Some(r) = self.anomaly_rate {
            cfg.anomaly_rate = r;
        }
        if let Some(r) = self.miss_rate {
            cfg.miss_rate = r;
        }
        if let Some(d) = self.start_date {
            cfg.start_date =
                NaiveDate::parse_from_str(&d, "%Y-%m-%d").with_context(|| format!("bad start_date '{d}'"))?;
        }
        if let Some(d) = self.days {
            cfg.days = d;
        }
        if let Some(tz) = self.tz {
            cfg.tz = parse_tz(&tz)?;
        }
        let f = self.filter.unwrap_or_default();
        cfg.filter = FilterConfig {
            min_tweets: f.min_tweets.unwrap_or(cfg.filter.min_tweets),
            max_speed: f.max_speed_mph.map_or(cfg.filter.max_speed, |m| m * MPH_TO_MPS),
            time_window: f
                .time_window_h
                .map_or(cfg.filter.time_window, |h| (h * 3600.0).round() as i64),
            min_displacement_distance: f.min_displacement_m.unwrap_or(cfg.filter.min_displacement_distance),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
