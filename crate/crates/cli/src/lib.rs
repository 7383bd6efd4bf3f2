//! Command-line front end for the `twimob` pipeline.

pub mod commands;
pub mod config;
pub mod synth_config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::Settings;

#[derive(Debug, Parser)]
#[command(name = "twimob", version, about = "Travel displacements from geotagged posts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse posts, filter users and records, and write displacements.
    Extract(ExtractArgs),
    /// Build OD matrices, hour-of-day histograms and user groups.
    Analyze(AnalyzeArgs),
    /// Compare two binned distributions.
    Compare(CompareArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
}

/// Flags shared by `extract` and `analyze`. Each overrides the config file.
#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Zone polygons (GeoJSON FeatureCollection).
    #[arg(long)]
    pub zones: Option<PathBuf>,
    /// Analysis timezone (IANA name); defaults to $TWIMOB_TZ, then UTC.
    #[arg(long)]
    pub tz: Option<String>,
    /// Worker threads; 1 is the reference schedule.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Input file; repeat for several.
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// `csv` or `jsonl`.
    #[arg(long)]
    pub format: Option<String>,
    /// Also accept `m/d/yyyy HH:MM` local timestamps.
    #[arg(long)]
    pub legacy_timestamps: bool,
    #[arg(long)]
    pub min_tweets: Option<usize>,
    #[arg(long)]
    pub max_speed_mph: Option<f64>,
    #[arg(long)]
    pub time_window_h: Option<f64>,
    #[arg(long)]
    pub min_displacement_m: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Displacement CSV written by `extract`.
    #[arg(long)]
    pub displacements: PathBuf,
    /// User profiles; defaults to `user_profiles.csv` next to the displacements.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Zone for the "to" and "from" histograms.
    #[arg(long)]
    pub focal_zone: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub include_intra: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub include_external: Option<bool>,
    /// Top fraction of users by post count forming the high-frequency group.
    #[arg(long)]
    pub group_cutoff: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Series CSV (`bin_label,value`).
    pub series_a: PathBuf,
    pub series_b: PathBuf,
    /// Normalize both series before comparing.
    #[arg(long)]
    pub normalize: bool,
    /// Write JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML corpus description.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "synth")]
    pub out: PathBuf,
    /// Corpus format: `csv` or `jsonl`.
    #[arg(long, default_value = "csv")]
    pub format: String,
}

impl CommonArgs {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        s.set_opt("zones", self.zones.as_ref().map(|p| p.display()));
        s.set_opt("tz", self.tz.as_ref());
        s.set_opt("workers", self.workers);
        s.set_opt("out", self.out.as_ref().map(|p| p.display()));
        Ok(s)
    }
}

impl ExtractArgs {
    pub fn settings(&self) -> Result<Settings> {
        let mut s = self.common.settings()?;
        if !self.input.is_empty() {
            let joined: Vec<String> = self.input.iter().map(|p| p.display().to_string()).collect();
            s.set("input", joined.join(","));
        }
        s.set_opt("format", self.format.as_ref());
        if self.legacy_timestamps {
            s.set("legacy_timestamps", true);
        }
        s.set_opt("min_tweets", self.min_tweets);
        s.set_opt("max_speed_mph", self.max_speed_mph);
        s.set_opt("time_window_h", self.time_window_h);
        s.set_opt("min_displacement_m", self.min_displacement_m);
        Ok(s)
    }
}

impl AnalyzeArgs {
    pub fn settings(&self) -> Result<Settings> {
        let mut s = self.common.settings()?;
        s.set_opt("focal_zone", self.focal_zone.as_ref());
        s.set_opt("include_intra", self.include_intra);
        s.set_opt("include_external", self.include_external);
        s.set_opt("group_cutoff", self.group_cutoff);
        Ok(s)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(a) => commands::extract(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Synth(a) => commands::synth(&a),
    }
}
