//! Per-user extraction: activity filter, speed filter, time-window pairing,
//! zone labeling and crossing-time estimation.

use chrono::Duration;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytics::UserProfile;
use crate::geometry::haversine_distance;
use crate::ingest::{Timelines, Timestamp, TweetRecord, UserTimeline};
use crate::zoning::{ZoneLabel, ZoneSet};
use crate::GeoPoint;

/// Meters per second in one mile per hour.
pub const MPH_TO_MPS: f64 = 0.44704;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field} must be strictly positive, got {value}")]
    NotPositive { field: &'static str, value: f64 },
}

/// Thresholds of the extraction steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterConfig {
    /// Users with at least this many records are kept.
    pub min_tweets: usize,
    /// Meters per second.
    pub max_speed: f64,
    /// Seconds.
    pub time_window: i64,
    /// Meters.
    pub min_displacement_distance: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_tweets: 100,
            max_speed: 100.0 * MPH_TO_MPS,
            time_window: 2 * 3600,
            min_displacement_distance: 100.0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks = [
            ("min_tweets", self.min_tweets as f64),
            ("max_speed", self.max_speed),
            ("time_window", self.time_window as f64),
            ("min_displacement_distance", self.min_displacement_distance),
        ];
        for (field, value) in checks {
            if !value.is_finite() || value <= 0.0 {
                return Err(ConfigError::NotPositive { field, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ActivityReport {
    pub users_in: usize,
    pub users_retained: usize,
    pub users_dropped: usize,
    pub records_retained: usize,
    pub records_dropped: usize,
}

/// Keeps users with `len >= cfg.min_tweets`.
pub fn filter_active_users(timelines: Timelines, cfg: &FilterConfig) -> (Timelines, ActivityReport) {
    let mut report = ActivityReport {
        users_in: timelines.len(),
        ..Default::default()
    };
    let kept: Timelines = timelines
        .into_iter()
        .filter(|(_, tl)| {
            let keep = tl.len() >= cfg.min_tweets;
            if keep {
                report.users_retained += 1;
                report.records_retained += tl.len();
            } else {
                report.users_dropped += 1;
                report.records_dropped += tl.len();
            }
            keep
        })
        .collect();
    (kept, report)
}

/// A record dropped by the speed filter.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedRemoval {
    pub user_id: String,
    pub timestamp: Timestamp,
    pub point: GeoPoint,
    /// Timestamp of the surviving record it was compared against.
    pub anchor_time: Timestamp,
    /// Implied speed in m/s; infinite for a jump with no elapsed time.
    pub speed: f64,
}

fn implied_speed(from: &TweetRecord, to: &TweetRecord, cfg: &FilterConfig) -> Option<f64> {
    let dt = (to.timestamp - from.timestamp).num_seconds();
    let d = haversine_distance(from.point, to.point);
    if dt <= 0 {
        (d > cfg.min_displacement_distance).then_some(f64::INFINITY)
    } else {
        let v = d / dt as f64;
        (v > cfg.max_speed).then_some(v)
    }
}

/// Single pass in time order. When a record is too fast to reach from the last
/// survivor it is dropped and the next record is compared with that survivor.
pub fn remove_speed_violations(tl: UserTimeline, cfg: &FilterConfig) -> (UserTimeline, Vec<SpeedRemoval>) {
    let mut kept: Vec<TweetRecord> = Vec::with_capacity(tl.records.len());
    let mut removed = Vec::new();
    for r in tl.records {
        if let Some(anchor) = kept.last() {
            if let Some(speed) = implied_speed(anchor, &r, cfg) {
                removed.push(SpeedRemoval {
                    anchor_time: anchor.timestamp,
                    user_id: r.user_id,
                    timestamp: r.timestamp,
                    point: r.point,
                    speed,
                });
                continue;
            }
        }
        kept.push(r);
    }
    (
        UserTimeline {
            user_id: tl.user_id,
            records: kept,
        },
        removed,
    )
}

/// A consecutive record pair before zone labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct Movement {
    pub user_id: String,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub start_time: Timestamp,
    pub end_time: Timestamp,
    pub distance: f64,
}

impl Movement {
    pub fn duration_s(&self) -> i64 {
        (self.end_time - self.start_time).num_seconds()
    }
}

/// Pairs each record with its successor when `0 < dt <= time_window` and the
/// two points are at least `min_displacement_distance` apart.
pub fn extract_displacements(tl: &UserTimeline, cfg: &FilterConfig) -> Vec<Movement> {
    tl.records
        .windows(2)
        .filter_map(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            let dt = (b.timestamp - a.timestamp).num_seconds();
            if dt <= 0 || dt > cfg.time_window {
                return None;
            }
            let distance = haversine_distance(a.point, b.point);
            (distance >= cfg.min_displacement_distance).then(|| Movement {
                user_id: tl.user_id.clone(),
                origin: a.point,
                destination: b.point,
                start_time: a.timestamp,
                end_time: b.timestamp,
                distance,
            })
        })
        .collect()
}

/// A zone-labeled displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    pub user_id: String,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub start_time: Timestamp,
    pub end_time: Timestamp,
    pub duration_s: i64,
    pub distance_m: f64,
    pub origin_zone: ZoneLabel,
    pub destination_zone: ZoneLabel,
    pub crossing_time: Timestamp,
}

impl Displacement {
    pub fn is_inter_zone(&self) -> bool {
        self.origin_zone != self.destination_zone
    }

    pub fn touches_external(&self) -> bool {
        self.origin_zone.is_external() || self.destination_zone.is_external()
    }
}

/// Midpoint of the interval (floored to whole seconds) when the zones differ,
/// otherwise the start time.
pub fn crossing_time_estimate(start: Timestamp, end: Timestamp, inter_zone: bool) -> Timestamp {
    if inter_zone {
        start + Duration::seconds((end - start).num_seconds() / 2)
    } else {
        start
    }
}

pub fn label_displacement(m: Movement, zs: &ZoneSet) -> Displacement {
    let origin_zone = zs.label_point(m.origin);
    let destination_zone = zs.label_point(m.destination);
    let crossing_time = crossing_time_estimate(m.start_time, m.end_time, origin_zone != destination_zone);
    Displacement {
        duration_s: m.duration_s(),
        user_id: m.user_id,
        origin: m.origin,
        destination: m.destination,
        start_time: m.start_time,
        end_time: m.end_time,
        distance_m: m.distance,
        origin_zone,
        destination_zone,
        crossing_time,
    }
}

/// Stage counts of one extraction run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExtractionReport {
    pub users_in: usize,
    pub users_retained: usize,
    pub users_dropped: usize,
    pub records_in: usize,
    pub records_in_retained_users: usize,
    pub records_in_dropped_users: usize,
    pub records_removed_speed: usize,
    pub records_after_speed: usize,
    pub displacements_total: usize,
    pub displacements_inter_zone: usize,
    pub displacements_intra_zone: usize,
    pub displacements_touching_external: usize,
    pub travelers: usize,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    /// Sorted by user id, then start time.
    pub displacements: Vec<Displacement>,
    pub removals: Vec<SpeedRemoval>,
    /// One entry per retained user, sorted by user id.
    pub profiles: Vec<UserProfile>,
    pub report: ExtractionReport,
}

struct UserResult {
    profile: UserProfile,
    displacements: Vec<Displacement>,
    removals: Vec<SpeedRemoval>,
}

fn process_user(tl: UserTimeline, zs: &ZoneSet, cfg: &FilterConfig) -> UserResult {
    let (tl, removals) = remove_speed_violations(tl, cfg);
    let displacements: Vec<Displacement> = extract_displacements(&tl, cfg)
        .into_iter()
        .map(|m| label_displacement(m, zs))
        .collect();
    UserResult {
        profile: UserProfile {
            user_id: tl.user_id,
            tweet_count: tl.records.len(),
            displacement_count: displacements.len(),
        },
        displacements,
        removals,
    }
}

/// Runs every step over all users. Users are processed in parallel on the
/// current rayon pool; the output order does not depend on the pool size.
pub fn run_extraction(timelines: Timelines, zs: &ZoneSet, cfg: &FilterConfig) -> Result<Extraction, ConfigError> {
    cfg.validate()?;
    let records_in = timelines.values().map(UserTimeline::len).sum();
    let (active, activity) = filter_active_users(timelines, cfg);

    let per_user: Vec<UserResult> = active
        .into_values()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|tl| process_user(tl, zs, cfg))
        .collect();

    let mut report = ExtractionReport {
        users_in: activity.users_in,
        users_retained: activity.users_retained,
        users_dropped: activity.users_dropped,
        records_in,
        records_in_retained_users: activity.records_retained,
        records_in_dropped_users: activity.records_dropped,
        ..Default::default()
    };
    let mut out = Extraction {
        displacements: Vec::new(),
        removals: Vec::new(),
        profiles: Vec::with_capacity(per_user.len()),
        report,
    };
    for u in per_user {
        report.records_removed_speed += u.removals.len();
        report.records_after_speed += u.profile.tweet_count;
        if !u.displacements.is_empty() {
            report.travelers += 1;
        }
        for d in &u.displacements {
            if d.is_inter_zone() {
                report.displacements_inter_zone += 1;
            } else {
                report.displacements_intra_zone += 1;
            }
            if d.touches_external() {
                report.displacements_touching_external += 1;
            }
        }
        out.displacements.extend(u.displacements);
        out.removals.extend(u.removals);
        out.profiles.push(u.profile);
    }
    report.displacements_total = out.displacements.len();
    out.report = report;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::ingest::build_timelines;
    use crate::zoning::{Zone, ZoneSet};
    use crate::ZonePolygon;
    use chrono::{TimeZone, Utc};

    fn at(secs: i64) -> Timestamp {
        Utc.timestamp_opt(1_407_000_000 + secs, 0).unwrap()
    }

    fn rec(user: &str, secs: i64, lat: f64, lon: f64) -> TweetRecord {
        TweetRecord {
            user_id: user.into(),
            point: Point::new(lat, lon).unwrap(),
            timestamp: at(secs),
            text: None,
        }
    }

    fn timeline(recs: Vec<TweetRecord>) -> UserTimeline {
        UserTimeline::new(recs[0].user_id.clone(), recs)
    }

    fn zone(id: &str, lat0: f64, lon0: f64, size: f64) -> Zone {
        Zone {
            zone_id: id.into(),
            name: id.into(),
            polygons: vec![ZonePolygon::from_latlon(&[
                (lat0, lon0),
                (lat0, lon0 + size),
                (lat0 + size, lon0 + size),
                (lat0 + size, lon0),
            ])
            .unwrap()],
        }
    }

    fn two_zones() -> ZoneSet {
        ZoneSet::new(vec![
            zone("hudson", 40.6, -74.2, 0.2),
            zone("manhattan", 40.6, -74.0, 0.2),
        ])
        .unwrap()
    }

    #[test]
    fn defaults_match_published_parameters() {
        let c = FilterConfig::default();
        assert_eq!(c.min_tweets, 100);
        assert!((c.max_speed - 44.704).abs() < 1e-12);
        assert_eq!(c.time_window, 7200);
        assert_eq!(c.min_displacement_distance, 100.0);
        assert!(c.validate().is_ok());
        let bad = FilterConfig { time_window: 0, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn activity_threshold_is_inclusive() {
        let many = |user: &str, n: usize| {
            (0..n)
                .map(|i| rec(user, i as i64 * 60, 40.7, -74.0))
                .collect::<Vec<_>>()
        };
        let mut all = many("a", 99);
        all.extend(many("b", 100));
        let (kept, report) = filter_active_users(build_timelines(all), &FilterConfig::default());
        assert!(kept.contains_key("b") && !kept.contains_key("a"));
        assert_eq!((report.users_retained, report.users_dropped), (1, 1));
        assert_eq!((report.records_retained, report.records_dropped), (100, 99));

        let (empty, report) = filter_active_users(Timelines::new(), &FilterConfig::default());
        assert!(empty.is_empty());
        assert_eq!(report.users_in, 0);
    }

    #[test]
    fn fast_jump_drops_later_record() {
        // 1.8 degrees of latitude is about 200 km
        let a = rec("u", 0, 40.0, -74.0);
        let b = rec("u", 3600, 41.8, -74.0);
        let speed = haversine_distance(a.point, b.point) / 3600.0;
        assert!(speed > 44.704 && speed < 60.0);
        let (tl, removed) = remove_speed_violations(timeline(vec![a.clone(), b]), &FilterConfig::default());
        assert_eq!(tl.records, vec![a]);
        assert_eq!(removed.len(), 1);
        assert!((removed[0].speed - speed).abs() < 1e-9);
    }

    #[test]
    fn stationary_records_survive() {
        let recs = vec![
            rec("u", 0, 40.7, -74.0),
            rec("u", 1, 40.7, -74.0),
            rec("u", 1, 40.7, -74.0),
        ];
        let (tl, removed) = remove_speed_violations(timeline(recs), &FilterConfig::default());
        assert_eq!(tl.len(), 3);
        assert!(removed.is_empty());
    }

    #[test]
    fn simultaneous_distant_records_drop_later() {
        let first = rec("u", 0, 40.70, -74.0);
        let second = rec("u", 0, 40.745, -74.0); // ~5 km north, same second
        let (tl, removed) = remove_speed_violations(timeline(vec![first.clone(), second]), &FilterConfig::default());
        assert_eq!(tl.records, vec![first]);
        assert!(removed[0].speed.is_infinite());
    }

    #[test]
    fn survivor_is_recompared_with_next_record() {
        let recs = vec![
            rec("u", 0, 40.7, -74.0),
            rec("u", 60, 45.0, -74.0), // glitch
            rec("u", 600, 40.71, -74.0),
        ];
        let (tl, removed) = remove_speed_violations(timeline(recs), &FilterConfig::default());
        assert_eq!(removed.len(), 1);
        assert_eq!(tl.len(), 2);
        assert_eq!(tl.records[1].lat(), 40.71);
    }

    #[test]
    fn ten_minute_hop_is_one_displacement() {
        let tl = timeline(vec![rec("u", 0, 40.70, -74.0), rec("u", 600, 40.72, -74.0)]);
        let ms = extract_displacements(&tl, &FilterConfig::default());
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].duration_s(), 600);
    }

    #[test]
    fn gap_beyond_window_is_ignored() {
        let tl = timeline(vec![rec("u", 0, 40.70, -74.0), rec("u", 3 * 3600, 40.72, -74.0)]);
        assert!(extract_displacements(&tl, &FilterConfig::default()).is_empty());
        let tl = timeline(vec![rec("u", 0, 40.70, -74.0), rec("u", 7200, 40.72, -74.0)]);
        assert_eq!(extract_displacements(&tl, &FilterConfig::default()).len(), 1);
    }

    #[test]
    fn consecutive_pairs_slide() {
        let tl = timeline(vec![
            rec("u", 0, 40.70, -74.0),
            rec("u", 1800, 40.72, -74.0),
            rec("u", 3600, 40.74, -74.0),
        ]);
        let ms = extract_displacements(&tl, &FilterConfig::default());
        let spans: Vec<(i64, i64)> = ms
            .iter()
            .map(|m| (m.start_time.timestamp(), m.end_time.timestamp()))
            .collect();
        assert_eq!(
            spans,
            vec![
                (at(0).timestamp(), at(1800).timestamp()),
                (at(1800).timestamp(), at(3600).timestamp())
            ]
        );
    }

    #[test]
    fn jitter_below_min_distance_is_not_a_displacement() {
        let tl = timeline(vec![rec("u", 0, 40.7000, -74.0), rec("u", 600, 40.7005, -74.0)]);
        assert!(extract_displacements(&tl, &FilterConfig::default()).is_empty());
    }

    fn movement(o: (f64, f64), d: (f64, f64), start: Timestamp, end: Timestamp) -> Movement {
        let origin = Point::new(o.0, o.1).unwrap();
        let destination = Point::new(d.0, d.1).unwrap();
        Movement {
            user_id: "u".into(),
            origin,
            destination,
            start_time: start,
            end_time: end,
            distance: haversine_distance(origin, destination),
        }
    }

    #[test]
    fn crossing_time_is_midpoint_between_zones() {
        let start = Utc.with_ymd_and_hms(2014, 8, 5, 14, 0, 0).unwrap();
        let end = Utc.with_ymd_and_hms(2014, 8, 5, 16, 0, 0).unwrap();
        let d = label_displacement(movement((40.7, -74.1), (40.7, -73.9), start, end), &two_zones());
        assert_eq!(d.origin_zone, ZoneLabel::Zone("hudson".into()));
        assert_eq!(d.destination_zone, ZoneLabel::Zone("manhattan".into()));
        assert_eq!(d.crossing_time, Utc.with_ymd_and_hms(2014, 8, 5, 15, 0, 0).unwrap());
        assert_eq!(d.duration_s, 7200);
    }

    #[test]
    fn intra_zone_crossing_is_start() {
        let d = label_displacement(movement((40.7, -73.95), (40.75, -73.95), at(0), at(1000)), &two_zones());
        assert!(!d.is_inter_zone());
        assert_eq!(d.crossing_time, at(0));
    }

    #[test]
    fn unmapped_destination_is_external() {
        let d = label_displacement(movement((40.7, -73.95), (41.5, -73.95), at(0), at(1000)), &two_zones());
        assert_eq!(d.destination_zone, ZoneLabel::External);
        assert!(d.touches_external());
        assert_eq!(d.crossing_time, at(500));
    }

    #[test]
    fn inactive_corpus_yields_nothing() {
        let recs: Vec<TweetRecord> = (0..10)
            .flat_map(|u| (0..5).map(move |i| rec(&format!("u{u}"), i * 600, 40.7 + 0.01 * i as f64, -73.95)))
            .collect();
        let out = run_extraction(build_timelines(recs), &two_zones(), &FilterConfig::default()).unwrap();
        assert!(out.displacements.is_empty());
        assert_eq!(out.report.users_dropped, 10);
        assert_eq!(out.report.users_retained, 0);
    }

    #[test]
    fn run_report_counts_balance() {
        let cfg = FilterConfig {
            min_tweets: 3,
            ..Default::default()
        };
        let recs = vec![
            rec("a", 0, 40.70, -74.10),
            rec("a", 900, 40.70, -73.90),
            rec("a", 960, 44.0, -73.90),
            rec("a", 1800, 40.75, -73.90),
            rec("b", 0, 40.70, -74.10),
            rec("c", 0, 40.7, -73.95),
            rec("c", 600, 40.7, -73.95),
            rec("c", 1200, 40.7, -73.95),
        ];
        let out = run_extraction(build_timelines(recs), &two_zones(), &cfg).unwrap();
        let r = out.report;
        assert_eq!(r.users_in, r.users_retained + r.users_dropped);
        assert_eq!(r.records_in, r.records_in_retained_users + r.records_in_dropped_users);
        assert_eq!(
            r.records_after_speed,
            r.records_in_retained_users - r.records_removed_speed
        );
        assert_eq!(r.records_removed_speed, 1);
        assert_eq!(r.displacements_total, 2);
        assert_eq!(r.displacements_inter_zone, 1);
        assert_eq!(r.displacements_intra_zone, 1);
        assert_eq!(r.travelers, 1);
        assert_eq!(out.profiles.len(), 2);
        assert_eq!(out.profiles[0].tweet_count, 3);
        assert_eq!(out.profiles[0].displacement_count, 2);
    }
}
