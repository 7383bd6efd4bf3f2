//! Record parsing, validation and per-user timelines.
//!
//! CSV input carries the header `user_id,lat,lon,timestamp,text` (the `text`
//! column may be omitted). JSON-lines input uses the same field names.
//! Timestamps are ISO 8601 with an explicit offset. With
//! [`TimestampStyle::Legacy`] the display form `8/2/2014 21:58` is accepted as
//! well and read as local time in the configured zone.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, Read, Write};
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, TimeZone, Timelike, Utc};
use chrono_tz::Tz;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::geometry::Point;
use crate::GeoPoint;

pub type Timestamp = DateTime<Utc>;

pub const CSV_HEADER: [&str; 5] = ["user_id", "lat", "lon", "timestamp", "text"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read input: {0}")]
    Io(#[from] io::Error),
    #[error("format mismatch: {rejected} of {total} lines rejected")]
    FormatMismatch { rejected: usize, total: usize },
    #[error("unexpected CSV header {found:?}, expected user_id,lat,lon,timestamp[,text]")]
    BadHeader { found: Vec<String> },
    #[error("failed to write records: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(InputFormat::Csv),
            "jsonl" | "json-lines" | "ndjson" => Ok(InputFormat::Jsonl),
            other => Err(format!("unknown input format '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimestampStyle {
    #[default]
    Iso8601,
    /// ISO 8601 plus `m/d/yyyy HH:MM[:SS]` local times.
    Legacy,
}

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    pub timestamps: TimestampStyle,
    /// Zone used to interpret legacy local timestamps.
    pub tz: Tz,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            timestamps: TimestampStyle::Iso8601,
            tz: chrono_tz::UTC,
        }
    }
}

/// One geotagged post.
#[derive(Debug, Clone, PartialEq)]
pub struct TweetRecord {
    pub user_id: String,
    pub point: GeoPoint,
    pub timestamp: Timestamp,
    pub text: Option<String>,
}

impl TweetRecord {
    pub fn lat(&self) -> f64 {
        self.point.lat
    }

    pub fn lon(&self) -> f64 {
        self.point.lon
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedLine {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<TweetRecord>,
    pub rejects: Vec<RejectedLine>,
    /// Data lines seen, header and blank lines excluded.
    pub lines_read: usize,
}

impl ParseOutcome {
    fn check_mismatch(self) -> Result<Self, IngestError> {
        if self.rejects.len() * 2 > self.lines_read {
            return Err(IngestError::FormatMismatch {
                rejected: self.rejects.len(),
                total: self.lines_read,
            });
        }
        Ok(self)
    }

    /// Appends another outcome, as when several input files feed one run.
    pub fn merge(&mut self, other: ParseOutcome) {
        self.records.extend(other.records);
        self.rejects.extend(other.rejects);
        self.lines_read += other.lines_read;
    }
}

/// Records sorted by time for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTimeline {
    pub user_id: String,
    pub records: Vec<TweetRecord>,
}

impl UserTimeline {
    /// Stable-sorts `records` by timestamp. All records must belong to `user_id`.
    pub fn new(user_id: impl Into<String>, mut records: Vec<TweetRecord>) -> Self {
        let user_id = user_id.into();
        debug_assert!(records.iter().all(|r| r.user_id == user_id));
        records.sort_by_key(|r| r.timestamp);
        UserTimeline { user_id, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub type Timelines = BTreeMap<String, UserTimeline>;

/// Parses a whole input stream. Malformed lines are collected, not fatal,
/// unless they make up more than half of the input.
pub fn parse_records<R: Read>(
    source: R,
    format: InputFormat,
    opts: &ParseOptions,
) -> Result<ParseOutcome, IngestError> {
    let outcome = match format {
        InputFormat::Csv => parse_csv(source, opts)?,
        InputFormat::Jsonl => parse_jsonl(source, opts)?,
    };
    outcome.check_mismatch()
}

enum RawLine {
    Fields(u64, csv::StringRecord),
    Broken(u64, String),
}

fn parse_csv<R: Read>(mut source: R, opts: &ParseOptions) -> Result<ParseOutcome, IngestError> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    // csv's own line counter skips blank lines, so map byte offsets instead
    let newlines: Vec<u64> = newline_offsets(&buf);
    // a record's position can point at blank lines preceding it
    let line_at = |byte: u64| {
        let skip = buf[byte as usize..]
            .iter()
            .take_while(|b| matches!(b, b'\n' | b'\r'))
            .count();
        newlines.partition_point(|&nl| nl < byte + skip as u64) as u64 + 1
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(buf.as_slice());

    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_read_error(e)),
    };
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Ok(ParseOutcome::default());
    }
    let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let header_ok = (names.len() == 4 || names.len() == 5) && names.iter().zip(CSV_HEADER.iter()).all(|(a, b)| a == b);
    if !header_ok {
        return Err(IngestError::BadHeader { found: names });
    }

    let mut raw = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| line_at(p.byte()));
                raw.push(RawLine::Fields(line, record.clone()));
            }
            Err(e) => {
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(csv_read_error(e));
                }
                let line = e.position().map_or(0, |p| line_at(p.byte()));
                raw.push(RawLine::Broken(line, format!("malformed CSV: {e}")));
            }
        }
    }

    let parsed: Vec<Result<TweetRecord, RejectedLine>> = raw
        .into_par_iter()
        .map(|r| match r {
            RawLine::Fields(line, fields) => {
                csv_fields_to_record(&fields, opts).map_err(|reason| RejectedLine { line, reason })
            }
            RawLine::Broken(line, reason) => Err(RejectedLine { line, reason }),
        })
        .collect();
    Ok(split_results(parsed))
}

fn newline_offsets(buf: &[u8]) -> Vec<u64> {
    buf.iter()
        .enumerate()
        .filter(|(_, &b)| b == b'\n')
        .map(|(i, _)| i as u64)
        .collect()
}

fn csv_read_error(e: csv::Error) -> IngestError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        other => IngestError::Io(io::Error::new(io::ErrorKind::InvalidData, format!("{other:?}"))),
    }
}

fn split_results(parsed: Vec<Result<TweetRecord, RejectedLine>>) -> ParseOutcome {
    let mut out = ParseOutcome {
        lines_read: parsed.len(),
        ..Default::default()
    };
    for r in parsed {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(rej) => out.rejects.push(rej),
        }
    }
    out
}

fn csv_fields_to_record(fields: &csv::StringRecord, opts: &ParseOptions) -> Result<TweetRecord, String> {
    if fields.len() < 4 || fields.len() > 5 {
        return Err(format!("expected 4 or 5 fields, found {}", fields.len()));
    }
    let lat = fields[1]
        .trim()
        .parse::<f64>()
        .map_err(|_| "invalid latitude".to_string())?;
    let lon = fields[2]
        .trim()
        .parse::<f64>()
        .map_err(|_| "invalid longitude".to_string())?;
    let text = fields.get(4).filter(|t| !t.is_empty()).map(str::to_string);
    validate_record(fields[0].trim(), lat, lon, fields[3].trim(), text, opts)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonUserId {
    Text(String),
    Number(serde_json::Number),
}

#[derive(Deserialize)]
struct JsonRecord {
    user_id: JsonUserId,
    lat: f64,
    lon: f64,
    timestamp: String,
    #[serde(default)]
    text: Option<String>,
}

fn parse_jsonl<R: Read>(mut source: R, opts: &ParseOptions) -> Result<ParseOutcome, IngestError> {
    let mut buf = String::new();
    source.read_to_string(&mut buf)?;
    let lines: Vec<(u64, &str)> = buf
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i as u64 + 1, l))
        .collect();
    let parsed = lines
        .into_par_iter()
        .map(|(line, text)| {
            let reject = |reason: String| RejectedLine { line, reason };
            let raw: JsonRecord = serde_json::from_str(text).map_err(|e| reject(format!("invalid JSON: {e}")))?;
            let user = match raw.user_id {
                JsonUserId::Text(s) => s,
                JsonUserId::Number(n) => n.to_string(),
            };
            let text = raw.text.filter(|t| !t.is_empty());
            validate_record(&user, raw.lat, raw.lon, &raw.timestamp, text, opts).map_err(reject)
        })
        .collect();
    Ok(split_results(parsed))
}

fn validate_record(
    user_id: &str,
    lat: f64,
    lon: f64,
    timestamp: &str,
    text: Option<String>,
    opts: &ParseOptions,
) -> Result<TweetRecord, String> {
    if user_id.is_empty() {
        return Err("missing user_id".into());
    }
    if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
        return Err("latitude out of range".into());
    }
    if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
        return Err("longitude out of range".into());
    }
    let timestamp = parse_timestamp(timestamp, opts)?;
    let point = Point::new(lat, lon).map_err(|e| e.to_string())?;
    Ok(TweetRecord {
        user_id: user_id.to_string(),
        point,
        timestamp,
        text,
    })
}

/// Parses a timestamp and truncates it to whole seconds.
pub fn parse_timestamp(s: &str, opts: &ParseOptions) -> Result<Timestamp, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(truncate_seconds(t.with_timezone(&Utc)));
    }
    if opts.timestamps == TimestampStyle::Legacy {
        let naive = NaiveDateTime::parse_from_str(s, "%m/%d/%Y %H:%M")
            .or_else(|_| NaiveDateTime::parse_from_str(s, "%m/%d/%Y %H:%M:%S"))
            .map_err(|_| format!("invalid timestamp '{s}'"))?;
        let local = opts
            .tz
            .from_local_datetime(&naive)
            .earliest()
            .ok_or_else(|| format!("nonexistent local time '{s}' in {}", opts.tz))?;
        return Ok(truncate_seconds(local.with_timezone(&Utc)));
    }
    Err(format!("invalid timestamp '{s}'"))
}

fn truncate_seconds(t: Timestamp) -> Timestamp {
    t.with_nanosecond(0).unwrap_or(t)
}

/// Canonical text form of a timestamp, `2014-08-02T21:58:00Z`.
pub fn format_timestamp(t: &Timestamp) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Writes records as canonical CSV (with header).
pub fn write_records_csv<W: Write>(records: &[TweetRecord], out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.user_id.as_str(),
            &r.point.lat.to_string(),
            &r.point.lon.to_string(),
            &format_timestamp(&r.timestamp),
            r.text.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes records as JSON lines.
pub fn write_records_jsonl<W: Write>(records: &[TweetRecord], mut out: W) -> Result<(), IngestError> {
    for r in records {
        let obj = serde_json::json!({
            "user_id": r.user_id,
            "lat": r.point.lat,
            "lon": r.point.lon,
            "timestamp": format_timestamp(&r.timestamp),
            "text": r.text,
        });
        writeln!(out, "{obj}")?;
    }
    out.flush()?;
    Ok(())
}

/// Drops exact repeats (same user, timestamp and coordinates), keeping the
/// first occurrence. Returns the survivors and the number dropped.
pub fn dedup_records(records: Vec<TweetRecord>) -> (Vec<TweetRecord>, usize) {
    let mut seen = HashSet::with_capacity(records.len());
    let before = records.len();
    let kept: Vec<TweetRecord> = records
        .into_iter()
        .filter(|r| {
            seen.insert((
                r.user_id.clone(),
                r.timestamp,
                r.point.lat.to_bits(),
                r.point.lon.to_bits(),
            ))
        })
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Groups records by user and sorts each group by time (stable on ties).
pub fn build_timelines(records: Vec<TweetRecord>) -> Timelines {
    let mut grouped: BTreeMap<String, Vec<TweetRecord>> = BTreeMap::new();
    for r in records {
        match grouped.get_mut(&r.user_id) {
            Some(v) => v.push(r),
            None => {
                grouped.insert(r.user_id.clone(), vec![r]);
            }
        }
    }
    let sorted: Vec<UserTimeline> = grouped
        .into_par_iter()
        .map(|(user, recs)| UserTimeline::new(user, recs))
        .collect();
    sorted.into_iter().map(|t| (t.user_id.clone(), t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_csv_str(s: &str) -> ParseOutcome {
        parse_records(s.as_bytes(), InputFormat::Csv, &ParseOptions::default()).unwrap()
    }

    #[test]
    fn parses_table_row() {
        let out = parse_csv_str(
            "user_id,lat,lon,timestamp,text\n138987307,40.99412,-73.87725,2014-08-02T21:58:00Z,\"just posted a photo\"\n",
        );
        assert_eq!(out.lines_read, 1);
        assert!(out.rejects.is_empty());
        let r = &out.records[0];
        assert_eq!(r.user_id, "138987307");
        assert_eq!(r.lat(), 40.99412);
        assert_eq!(r.lon(), -73.87725);
        assert_eq!(format_timestamp(&r.timestamp), "2014-08-02T21:58:00Z");
        assert_eq!(r.text.as_deref(), Some("just posted a photo"));
    }

    #[test]
    fn empty_input_is_empty() {
        let out = parse_csv_str("");
        assert!(out.records.is_empty() && out.rejects.is_empty());
        let out = parse_csv_str("user_id,lat,lon,timestamp,text\n");
        assert_eq!(out.lines_read, 0);
    }

    #[test]
    fn out_of_range_latitude_rejected() {
        let out = parse_csv_str(
            "user_id,lat,lon,timestamp\n1,95.0,-73.9,2014-08-02T21:58:00Z\n2,40.7,-73.9,2014-08-02T21:58:00Z\n",
        );
        assert_eq!(out.records.len(), 1);
        assert_eq!(
            out.rejects,
            vec![RejectedLine {
                line: 2,
                reason: "latitude out of range".into()
            }]
        );
    }

    #[test]
    fn majority_rejects_is_fatal() {
        let err = parse_records(
            "user_id,lat,lon,timestamp\n1,x,1,2014\n2,40,1,nope\n3,40,1,2014-08-02T21:58:00Z\n".as_bytes(),
            InputFormat::Csv,
            &ParseOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::FormatMismatch { rejected: 2, total: 3 }));
    }

    #[test]
    fn wrong_header_is_fatal() {
        let err = parse_records(
            "id,latitude,longitude,time\n".as_bytes(),
            InputFormat::Csv,
            &ParseOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::BadHeader { .. }));
    }

    #[test]
    fn jsonl_accepts_numeric_user_ids() {
        let src = "{\"user_id\":138987307,\"lat\":40.99412,\"lon\":-73.87725,\"timestamp\":\"2014-08-02T21:58:00Z\"}\n\n{\"user_id\":\"a\",\"lat\":1,\"lon\":2,\"timestamp\":\"2014-08-02T17:58:00-04:00\",\"text\":\"hi\"}\n";
        let out = parse_records(src.as_bytes(), InputFormat::Jsonl, &ParseOptions::default()).unwrap();
        assert_eq!(out.lines_read, 2);
        assert_eq!(out.records[0].user_id, "138987307");
        assert_eq!(out.records[1].timestamp, out.records[0].timestamp);
    }

    #[test]
    fn jsonl_reject_carries_line_number() {
        let src = "{\"user_id\":\"a\",\"lat\":1,\"lon\":2,\"timestamp\":\"2014-08-02T21:58:00Z\"}\n{\"user_id\":\"a\",\"lat\":1,\"lon\":200,\"timestamp\":\"2014-08-02T21:58:00Z\"}\n";
        let out = parse_records(src.as_bytes(), InputFormat::Jsonl, &ParseOptions::default()).unwrap();
        assert_eq!(out.rejects[0].line, 2);
        assert_eq!(out.rejects[0].reason, "longitude out of range");
    }

    #[test]
    fn legacy_timestamps_follow_configured_zone() {
        let opts = ParseOptions {
            timestamps: TimestampStyle::Legacy,
            tz: chrono_tz::America::New_York,
        };
        let t = parse_timestamp("8/2/2014 21:58", &opts).unwrap();
        assert_eq!(format_timestamp(&t), "2014-08-03T01:58:00Z");
        assert!(parse_timestamp("8/2/2014 21:58", &ParseOptions::default()).is_err());
        // spring-forward gap
        assert!(parse_timestamp("3/9/2014 02:30", &opts).is_err());
    }

    #[test]
    fn fractional_seconds_truncated() {
        let t = parse_timestamp("2014-08-02T21:58:07.900Z", &ParseOptions::default()).unwrap();
        assert_eq!(format_timestamp(&t), "2014-08-02T21:58:07Z");
    }

    fn rec(user: &str, secs: i64, lat: f64) -> TweetRecord {
        TweetRecord {
            user_id: user.into(),
            point: Point::new(lat, -73.9).unwrap(),
            timestamp: Utc.timestamp_opt(1_400_000_000 + secs, 0).unwrap(),
            text: None,
        }
    }

    #[test]
    fn timelines_sort_one_user() {
        let tl = build_timelines(vec![rec("a", 30, 40.0), rec("a", 10, 40.1), rec("a", 20, 40.2)]);
        assert_eq!(tl.len(), 1);
        let secs: Vec<i64> = tl["a"]
            .records
            .iter()
            .map(|r| r.timestamp.timestamp() - 1_400_000_000)
            .collect();
        assert_eq!(secs, vec![10, 20, 30]);
    }

    #[test]
    fn timelines_partition_users() {
        let tl = build_timelines(vec![
            rec("a", 1, 40.0),
            rec("b", 2, 40.0),
            rec("a", 3, 40.0),
            rec("b", 0, 40.0),
        ]);
        assert_eq!(tl.len(), 2);
        assert_eq!(tl["a"].len(), 2);
        assert_eq!(tl["b"].len(), 2);
        assert!(tl.values().all(|t| t.records.iter().all(|r| r.user_id == t.user_id)));
    }

    #[test]
    fn equal_timestamps_keep_input_order() {
        let input = vec![
            rec("a", 5, 40.3),
            rec("a", 5, 40.1),
            rec("a", 1, 40.9),
            rec("a", 5, 40.2),
        ];
        // oracle: explicit stable sort of the list
        let mut expected = input.clone();
        expected.sort_by_key(|r| r.timestamp);
        let lats: Vec<f64> = expected.iter().map(|r| r.lat()).collect();
        assert_eq!(lats, vec![40.9, 40.3, 40.1, 40.2]);
        let tl = build_timelines(input);
        assert_eq!(tl["a"].records, expected);
    }

    #[test]
    fn dedup_keeps_first_exact_copy() {
        let mut dup = rec("a", 5, 40.3);
        dup.text = Some("again".into());
        let (kept, dropped) = dedup_records(vec![rec("a", 5, 40.3), dup, rec("a", 5, 40.4), rec("b", 5, 40.3)]);
        assert_eq!(dropped, 1);
        assert_eq!(kept.len(), 3);
        assert_eq!(kept[0].text, None);
    }
}
