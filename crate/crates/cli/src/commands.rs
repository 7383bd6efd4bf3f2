//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use twimob::analytics::{
    aggregate_od, aggregate_time_of_day, classify_groups, compare_distributions, normalize, AnalyticsError,
    DirectionFilter, OdOptions, TimeOfDayHistogram,
};
use twimob::displacement::run_extraction;
use twimob::formats;
use twimob::ingest::{
    build_timelines, dedup_records, parse_records, write_records_csv, write_records_jsonl, InputFormat, ParseOptions,
    ParseOutcome, RejectedLine,
};
use twimob::report::{RunReport, StageTimings};
use twimob::synthgen::generate;
use twimob::zoning::{load_zones, zones_to_geojson};
use twimob::{ZoneLabel, ZoneSet};

use crate::config::{PipelineConfig, Settings};
use crate::synth_config::SynthFile;
use crate::{AnalyzeArgs, CompareArgs, ExtractArgs, SynthArgs};

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("failed to start worker pool")
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_zones(path: &Path) -> Result<ZoneSet> {
    let text = fs::read_to_string(path).with_context(|| format!("zones file not found: {}", path.display()))?;
    load_zones(&text).with_context(|| format!("in {}", path.display()))
}

fn read_inputs(cfg: &PipelineConfig) -> Result<ParseOutcome> {
    let opts = ParseOptions {
        timestamps: cfg.timestamps,
        tz: cfg.tz,
    };
    let multi = cfg.inputs.len() > 1;
    let mut all = ParseOutcome::default();
    for path in &cfg.inputs {
        let f = File::open(path).with_context(|| format!("input file not found: {}", path.display()))?;
        let mut outcome = parse_records(BufReader::new(f), cfg.format, &opts)
            .with_context(|| format!("while reading {}", path.display()))?;
        if multi {
            for r in &mut outcome.rejects {
                r.reason = format!("{}: {}", path.display(), r.reason);
            }
        }
        all.merge(outcome);
    }
    Ok(all)
}

pub fn extract(args: &ExtractArgs) -> Result<()> {
    let cfg = PipelineConfig::from_settings(&args.settings()?)?;
    let Some(zones_path) = &cfg.zones else {
        bail!("no zones file given (use --zones or `zones =` in the config)");
    };
    if cfg.inputs.is_empty() {
        bail!("no input given (use --input or `input =` in the config)");
    }
    cfg.check_paths()?;
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))?;

    let mut timings = StageTimings::default();
    let t = Instant::now();
    let zones = read_zones(zones_path)?;
    timings.record("load zones", t.elapsed());

    let pool = pool(cfg.workers)?;
    let (report, rejects, extraction) = pool.install(|| -> Result<_> {
        let t = Instant::now();
        let parsed = read_inputs(&cfg)?;
        let lines_read = parsed.lines_read;
        let records_parsed = parsed.records.len();
        let rejects: Vec<RejectedLine> = parsed.rejects;
        let (records, dups) = dedup_records(parsed.records);
        let timelines = build_timelines(records);
        timings.record("ingest", t.elapsed());

        let t = Instant::now();
        let extraction = run_extraction(timelines, &zones, &cfg.filter)?;
        timings.record("extract", t.elapsed());
        let report = RunReport::new(lines_read, records_parsed, rejects.len(), dups, &extraction.report);
        Ok((report, rejects, extraction))
    })?;

    let t = Instant::now();
    let out = &cfg.out_dir;
    formats::write_displacements(&extraction.displacements, create(out, "displacements.csv")?)?;
    formats::write_profiles(&extraction.profiles, create(out, "user_profiles.csv")?)?;
    formats::write_rejects(&rejects, create(out, "rejects.csv")?)?;
    formats::write_speed_removals(&extraction.removals, create(out, "speed_removals.csv")?)?;
    write_json(out, "report.json", &report)?;
    timings.record("write", t.elapsed());
    write_json(out, "timings.json", &timings)?;

    print!("{}", report.to_table(Some(&timings)));
    if let Err(bad) = report.check() {
        bail!("report consistency check failed: {}", bad.join("; "));
    }
    Ok(())
}

#[derive(Serialize)]
struct GroupSummary {
    percentile_cutoff: f64,
    users: usize,
    high_group_users: usize,
    low_group_users: usize,
    share_of_displacements_high: f64,
    share_of_displacements_low: f64,
}

fn sanitize(zone: &str) -> String {
    zone.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let settings: Settings = args.settings()?;
    let cfg = PipelineConfig::from_settings(&settings)?;
    cfg.check_paths()?;
    let zone_order = match &cfg.zones {
        Some(p) => read_zones(p)?.zone_ids(),
        None => Vec::new(),
    };
    let profiles_path = args.profiles.clone().unwrap_or_else(|| {
        args.displacements
            .parent()
            .map_or_else(|| PathBuf::from("user_profiles.csv"), |d| d.join("user_profiles.csv"))
    });

    let f = File::open(&args.displacements)
        .with_context(|| format!("displacement file not found: {}", args.displacements.display()))?;
    let displacements = formats::read_displacements(BufReader::new(f))
        .with_context(|| format!("in {}", args.displacements.display()))?;
    let f = File::open(&profiles_path)
        .with_context(|| format!("profile file not found: {} (use --profiles)", profiles_path.display()))?;
    let profiles =
        formats::read_profiles(BufReader::new(f)).with_context(|| format!("in {}", profiles_path.display()))?;

    let opts = OdOptions {
        include_intra: cfg.include_intra,
        include_external: cfg.include_external,
    };
    let pool = pool(cfg.workers)?;
    let (od, histograms, groups) = pool.install(|| -> Result<_> {
        let od = match aggregate_od(&displacements, &zone_order, opts) {
            Err(AnalyticsError::EmptyOd) => bail!("empty OD: no displacements pass the selected filters"),
            other => other?,
        };
        let mut histograms: Vec<(String, TimeOfDayHistogram)> = vec![(
            "tod_all.csv".to_string(),
            aggregate_time_of_day(
                &displacements,
                &DirectionFilter::all(cfg.include_intra, cfg.include_external),
                cfg.tz,
            ),
        )];
        if let Some(focal) = &cfg.focal_zone {
            let zone: ZoneLabel = focal.parse().expect("infallible");
            let name = sanitize(focal);
            let to = DirectionFilter::into_zone(zone.clone(), cfg.include_external);
            let from = DirectionFilter::out_of_zone(zone, cfg.include_external);
            histograms.push((
                format!("tod_to_{name}.csv"),
                aggregate_time_of_day(&displacements, &to, cfg.tz),
            ));
            histograms.push((
                format!("tod_from_{name}.csv"),
                aggregate_time_of_day(&displacements, &from, cfg.tz),
            ));
        }
        let groups = classify_groups(&profiles, cfg.group_cutoff)?;
        Ok((od, histograms, groups))
    })?;

    let out = &cfg.out_dir;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    formats::write_od(&od, false, create(out, "od_counts.csv")?)?;
    formats::write_od(&od, true, create(out, "od_proportions.csv")?)?;
    for (name, h) in &histograms {
        formats::write_histogram(h, create(out, name)?)?;
    }
    formats::write_groups(&groups, create(out, "groups.csv")?)?;
    write_json(
        out,
        "groups_summary.json",
        &GroupSummary {
            percentile_cutoff: groups.percentile_cutoff,
            users: groups.high_group.len() + groups.low_group.len(),
            high_group_users: groups.high_group.len(),
            low_group_users: groups.low_group.len(),
            share_of_displacements_high: groups.share_of_displacements_high,
            share_of_displacements_low: groups.share_of_displacements_low,
        },
    )?;

    println!("displacements read      {:>10}", displacements.len());
    println!("displacements in OD     {:>10}", od.total());
    println!("zones in OD             {:>10}", od.zones.len());
    println!("high-frequency users    {:>10}", groups.high_group.len());
    println!("low-frequency users     {:>10}", groups.low_group.len());
    Ok(())
}

fn read_series(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let f = File::open(path).with_context(|| format!("series file not found: {}", path.display()))?;
    formats::read_series(BufReader::new(f)).with_context(|| format!("in {}", path.display()))
}

pub fn compare(args: &CompareArgs) -> Result<()> {
    let (labels_a, mut a) = read_series(&args.series_a)?;
    let (labels_b, mut b) = read_series(&args.series_b)?;
    if labels_a != labels_b {
        bail!("series have different bin labels");
    }
    if args.normalize {
        a = normalize(&a).context("first series has no positive mass")?;
        b = normalize(&b).context("second series has no positive mass")?;
    }
    let cmp = compare_distributions(labels_a, &a, &b)?;
    let json = serde_json::to_string_pretty(&cmp)?;
    match &args.out {
        Some(p) => fs::write(p, json + "\n").with_context(|| format!("cannot write {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct SynthSummary {
    seed: u64,
    agents: usize,
    records: usize,
    anomalies_injected: usize,
    trips: usize,
    recoverable_trips: usize,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let format: InputFormat = args.format.parse().map_err(anyhow::Error::msg)?;
    let (file, base) = SynthFile::load(&args.config)?;
    let cfg = file.into_config(&base)?;
    let corpus = generate(&cfg)?;

    let out = &args.out;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    match format {
        InputFormat::Csv => write_records_csv(&corpus.records, create(out, "tweets.csv")?)?,
        InputFormat::Jsonl => write_records_jsonl(&corpus.records, create(out, "tweets.jsonl")?)?,
    }
    formats::write_ground_truth(&corpus.trips, create(out, "ground_truth.csv")?)?;
    let recoverable: Vec<_> = corpus.recoverable_trips().cloned().collect();
    formats::write_ground_truth(&recoverable, create(out, "ground_truth_recoverable.csv")?)?;
    fs::write(out.join("zones.geojson"), zones_to_geojson(&cfg.zone_map))?;
    let summary = SynthSummary {
        seed: cfg.seed,
        agents: corpus.agents.len(),
        records: corpus.records.len(),
        anomalies_injected: corpus.anomalies_injected,
        trips: corpus.trips.len(),
        recoverable_trips: recoverable.len(),
    };
    write_json(out, "synth_summary.json", &summary)?;
    println!(
        "{} records from {} agents, {} trips ({} recoverable), {} anomalies",
        summary.records, summary.agents, summary.trips, summary.recoverable_trips, summary.anomalies_injected
    );
    Ok(())
}
