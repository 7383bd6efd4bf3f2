//! CSV layouts of every file the pipeline reads or writes.

use std::io::{Read, Write};

use thiserror::Error;

use crate::analytics::{GroupPartition, OdMatrix, TimeOfDayHistogram, UserProfile};
use crate::displacement::{Displacement, SpeedRemoval};
use crate::geometry::Point;
use crate::ingest::{format_timestamp, parse_timestamp, ParseOptions, RejectedLine, Timestamp};
use crate::synthgen::GroundTruthTrip;

pub const DISPLACEMENT_HEADER: [&str; 12] = [
    "user_id",
    "origin_lat",
    "origin_lon",
    "dest_lat",
    "dest_lon",
    "start_time",
    "end_time",
    "duration_s",
    "distance_m",
    "origin_zone",
    "dest_zone",
    "crossing_time",
];

pub const HISTOGRAM_HEADER: [&str; 5] = ["hour", "weekday_count", "weekend_count", "weekday_frac", "weekend_frac"];
pub const GROUP_HEADER: [&str; 4] = ["user_id", "tweet_count", "displacement_count", "group"];
pub const PROFILE_HEADER: [&str; 3] = ["user_id", "tweet_count", "displacement_count"];
pub const SERIES_HEADER: [&str; 2] = ["bin_label", "value"];
pub const GROUND_TRUTH_HEADER: [&str; 4] = ["user_id", "origin_zone", "dest_zone", "true_crossing_time"];
pub const REJECT_HEADER: [&str; 2] = ["line_number", "reason"];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("unexpected header {found:?}, expected {expected:?}")]
    Header { found: Vec<String>, expected: Vec<String> },
}

fn check_header<R: Read>(r: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), FormatError> {
    let found: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if found != expected {
        return Err(FormatError::Header {
            found,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64, what: &str) -> Result<T, FormatError> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| FormatError::Parse {
            line,
            reason: format!("bad {what}"),
        })
}

fn time_field(rec: &csv::StringRecord, i: usize, line: u64, what: &str) -> Result<Timestamp, FormatError> {
    let raw = rec.get(i).unwrap_or("");
    parse_timestamp(raw, &ParseOptions::default()).map_err(|reason| FormatError::Parse {
        line,
        reason: format!("{what}: {reason}"),
    })
}

pub fn write_displacements<W: Write>(ds: &[Displacement], out: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DISPLACEMENT_HEADER)?;
    for d in ds {
        w.write_record([
            d.user_id.clone(),
            d.origin.lat.to_string(),
            d.origin.lon.to_string(),
            d.destination.lat.to_string(),
            d.destination.lon.to_string(),
            format_timestamp(&d.start_time),
            format_timestamp(&d.end_time),
            d.duration_s.to_string(),
            format!("{:.3}", d.distance_m),
            d.origin_zone.to_string(),
            d.destination_zone.to_string(),
            format_timestamp(&d.crossing_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_displacements<R: Read>(input: R) -> Result<Vec<Displacement>, FormatError> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &DISPLACEMENT_HEADER)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let point = |i: usize| -> Result<_, FormatError> {
            let lat: f64 = field(&rec, i, line, "latitude")?;
            let lon: f64 = field(&rec, i + 1, line, "longitude")?;
            Point::new(lat, lon).map_err(|e| FormatError::Parse {
                line,
                reason: e.to_string(),
            })
        };
        out.push(Displacement {
            user_id: rec.get(0).unwrap_or("").to_string(),
            origin: point(1)?,
            destination: point(3)?,
            start_time: time_field(&rec, 5, line, "start_time")?,
            end_time: time_field(&rec, 6, line, "end_time")?,
            duration_s: field(&rec, 7, line, "duration_s")?,
            distance_m: field(&rec, 8, line, "distance_m")?,
            origin_zone: field(&rec, 9, line, "origin_zone")?,
            destination_zone: field(&rec, 10, line, "dest_zone")?,
            crossing_time: time_field(&rec, 11, line, "crossing_time")?,
        });
    }
    Ok(out)
}

/// Writes the matrix as a square table: header `origin,<zone>...`, one row
/// per origin zone. `proportions` selects which cells are written.
pub fn write_od<W: Write>(od: &OdMatrix, proportions: bool, out: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["origin".to_string()];
    header.extend(od.zones.iter().map(|z| z.to_string()));
    w.write_record(&header)?;
    for (i, z) in od.zones.iter().enumerate() {
        let mut row = vec![z.to_string()];
        if proportions {
            row.extend(od.proportions[i].iter().map(|p| p.to_string()));
        } else {
            row.extend(od.counts[i].iter().map(|c| c.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram<W: Write>(h: &TimeOfDayHistogram, out: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HISTOGRAM_HEADER)?;
    let (wd, we) = (h.weekday_fractions(), h.weekend_fractions());
    for hour in 0..24 {
        w.write_record([
            hour.to_string(),
            h.weekday[hour].to_string(),
            h.weekend[hour].to_string(),
            wd[hour].to_string(),
            we[hour].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_groups<W: Write>(g: &GroupPartition, out: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GROUP_HEADER)?;
    for (p, group) in g.ranked() {
        w.write_record([
            p.user_id.clone(),
            p.tweet_count.to_string(),
            p.displacement_count.to_string(),
            group.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_profiles<W: Write>(profiles: &[UserProfile], out: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PROFILE_HEADER)?;
    for p in profiles {
        w.write_record([
            p.user_id.clone(),
            p.tweet_count.to_string(),
            p.displacement_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profiles<R: Read>(input: R) -> Result<Vec<UserProfile>, FormatError> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &PROFILE_HEADER)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            Ok(UserProfile {
                user_id: rec.get(0).unwrap_or("").to_string(),
                tweet_count: field(&rec, 1, line, "tweet_count")?,
                displacement_count: field(&rec, 2, line, "displacement_count")?,
            })
        })
        .collect()
}

/// Reads a `bin_label,value` series.
pub fn read_series<R: Read>(input: R) -> Result<(Vec<String>, Vec<f64>), FormatError> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &SERIES_HEADER)?;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        labels.push(rec.get(0).unwrap_or("").to_string());
        values.push(field(&rec, 1, line, "value")?);
    }
    Ok((labels, values))
}

pub fn write_series<W: Write>(labels: &[String], values: &[f64], out: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SERIES_HEADER)?;
    for (l, v) in labels.iter().zip(values) {
        w.write_record([l.clone(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ground_truth<W: Write>(trips: &[GroundTruthTrip], out: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GROUND_TRUTH_HEADER)?;
    for t in trips {
        w.write_record([
            t.user_id.as_str(),
            t.origin_zone.as_str(),
            t.destination_zone.as_str(),
            &format_timestamp(&t.true_crossing_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rejects<W: Write>(rejects: &[RejectedLine], out: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REJECT_HEADER)?;
    for r in rejects {
        w.write_record([r.line.to_string(), r.reason.clone()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_speed_removals<W: Write>(removals: &[SpeedRemoval], out: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "timestamp", "lat", "lon", "anchor_time", "speed_mps"])?;
    for r in removals {
        w.write_record([
            r.user_id.clone(),
            format_timestamp(&r.timestamp),
            r.point.lat.to_string(),
            r.point.lon.to_string(),
            format_timestamp(&r.anchor_time),
            if r.speed.is_finite() {
                format!("{:.3}", r.speed)
            } else {
                "inf".to_string()
            },
        ])?;
    }
    w.flush()?;
    Ok(())
}
