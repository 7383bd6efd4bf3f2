use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use twimob::displacement::run_extraction;
use twimob::ingest::{build_timelines, dedup_records};
use twimob::report::{average_per_traveler, RunReport};
use twimob::synthgen::grid_zones;
use twimob::{FilterConfig, GeoPoint, TweetRecord};

fn arb_records() -> impl Strategy<Value = Vec<TweetRecord>> {
    proptest::collection::vec((0u8..6, 40.55..40.85f64, -74.15..-73.85f64, 0i64..40_000), 0..400).prop_map(|v| {
        v.into_iter()
            .map(|(u, lat, lon, t)| TweetRecord {
                user_id: format!("u{u}"),
                point: GeoPoint::new(lat, lon).unwrap(),
                timestamp: Utc.timestamp_opt(1_400_000_000 + t, 0).unwrap(),
                text: None,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn run_report_always_balances(records in arb_records(), rejected in 0usize..50, min_tweets in 1usize..80) {
        let zones = grid_zones(2, 2, 40.6, -74.1, 0.1);
        let cfg = FilterConfig { min_tweets, ..FilterConfig::default() };
        let parsed = records.len();
        let (kept, dups) = dedup_records(records);
        let x = run_extraction(build_timelines(kept), &zones, &cfg).unwrap();
        let report = RunReport::new(parsed + rejected, parsed, rejected, dups, &x.report);
        prop_assert_eq!(report.check(), Ok(()));
        prop_assert_eq!(report.displacements_total, x.displacements.len());
        prop_assert_eq!(
            report.average_displacements_per_traveler,
            average_per_traveler(report.displacements_total, report.travelers)
        );
    }
}

#[test]
fn published_totals_display_one_decimal() {
    let r = RunReport {
        displacements_total: 96_471,
        displacements_inter_zone: 96_471,
        travelers: 6_638,
        average_displacements_per_traveler: average_per_traveler(96_471, 6_638),
        ..RunReport::default()
    };
    assert_eq!(r.display_average(), "14.5");
}
