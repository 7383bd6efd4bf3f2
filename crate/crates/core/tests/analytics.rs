use std::cmp::Reverse;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use twimob::analytics::{
    aggregate_od, aggregate_time_of_day, classify_groups, compare_distributions, normalize, user_time_of_day,
    AnalyticsError, DirectionFilter, OdOptions, UserProfile,
};
use twimob::{Displacement, GeoPoint, ZoneLabel};

fn label(i: u8) -> ZoneLabel {
    if i == 0 {
        ZoneLabel::External
    } else {
        ZoneLabel::Zone(format!("z{i}"))
    }
}

fn disp(o: u8, d: u8, t: i64) -> Displacement {
    let ts = Utc.timestamp_opt(t, 0).unwrap();
    let p = GeoPoint::new(0.0, 0.0).unwrap();
    Displacement {
        user_id: "u".into(),
        origin: p,
        destination: p,
        start_time: ts,
        end_time: ts,
        duration_s: 0,
        distance_m: 100.0,
        origin_zone: label(o),
        destination_zone: label(d),
        crossing_time: ts,
    }
}

fn arb_displacements() -> impl Strategy<Value = Vec<Displacement>> {
    proptest::collection::vec(
        (0u8..5, 0u8..5, 1_400_000_000i64..1_500_000_000).prop_map(|(o, d, t)| disp(o, d, t)),
        0..300,
    )
}

/// Sort by count descending, ids ascending; cut at ceil(p * n / 1000).
fn group_oracle(profiles: &[UserProfile], per_mille: usize) -> (Vec<String>, Vec<String>) {
    let mut v: Vec<&UserProfile> = profiles.iter().collect();
    v.sort_by_key(|p| (Reverse(p.tweet_count), p.user_id.clone()));
    let k = ((per_mille * v.len()).div_ceil(1000)).max(1).min(v.len());
    let ids: Vec<String> = v.iter().map(|p| p.user_id.clone()).collect();
    (ids[..k].to_vec(), ids[k..].to_vec())
}

fn arb_profiles() -> impl Strategy<Value = Vec<UserProfile>> {
    proptest::collection::btree_map("[a-z]{1,6}", (1usize..40, 0usize..30), 1..400).prop_map(|m| {
        m.into_iter()
            .map(|(user_id, (tweet_count, displacement_count))| UserProfile {
                user_id,
                tweet_count,
                displacement_count,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn od_proportions_sum_to_one(ds in arb_displacements(), intra: bool, ext: bool) {
        let opts = OdOptions { include_intra: intra, include_external: ext };
        let expected = ds
            .iter()
            .filter(|d| (intra || d.is_inter_zone()) && (ext || !d.touches_external()))
            .count() as u64;
        match aggregate_od(&ds, &["z1".to_string(), "z2".to_string()], opts) {
            Ok(od) => {
                prop_assert_eq!(od.total(), expected);
                let s: f64 = od.proportions.iter().flatten().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
                prop_assert_eq!(&od.zones[0], &label(1));
                if ext {
                    prop_assert_eq!(od.zones.last(), Some(&ZoneLabel::External));
                }
                if !intra {
                    for i in 0..od.zones.len() {
                        prop_assert_eq!(od.counts[i][i], 0);
                    }
                }
            }
            Err(AnalyticsError::EmptyOd) => prop_assert_eq!(expected, 0),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn histogram_conserves_matching_displacements(ds in arb_displacements(), intra: bool, ext: bool) {
        let f = DirectionFilter::all(intra, ext);
        let h = aggregate_time_of_day(&ds, &f, chrono_tz::America::New_York);
        let matching = ds.iter().filter(|d| f.matches(d)).count() as u64;
        prop_assert_eq!(h.total(), matching);
        prop_assert_eq!(&h, &user_time_of_day(&ds, &f, chrono_tz::America::New_York));
        if h.weekday_total() > 0 {
            prop_assert!((h.weekday_fractions().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn groups_match_sort_and_cut(profiles in arb_profiles(), per_mille in 1usize..1000) {
        let cutoff = per_mille as f64 / 1000.0;
        let g = classify_groups(&profiles, cutoff).unwrap();
        let (hi, lo) = group_oracle(&profiles, per_mille);
        let got_hi: Vec<String> = g.high_group.iter().map(|p| p.user_id.clone()).collect();
        let got_lo: Vec<String> = g.low_group.iter().map(|p| p.user_id.clone()).collect();
        prop_assert_eq!(got_hi, hi);
        prop_assert_eq!(got_lo, lo);
    }

    #[test]
    fn groups_invariant_under_count_scaling(profiles in arb_profiles(), per_mille in 1usize..1000, k in 2usize..20) {
        let cutoff = per_mille as f64 / 1000.0;
        let scaled: Vec<UserProfile> = profiles
            .iter()
            .map(|p| UserProfile { tweet_count: p.tweet_count * k, ..p.clone() })
            .collect();
        let a = classify_groups(&profiles, cutoff).unwrap();
        let b = classify_groups(&scaled, cutoff).unwrap();
        let ids = |g: &[UserProfile]| g.iter().map(|p| p.user_id.clone()).collect::<Vec<_>>();
        prop_assert_eq!(ids(&a.high_group), ids(&b.high_group));
        prop_assert_eq!(a.share_of_displacements_high, b.share_of_displacements_high);
    }

    #[test]
    fn l1_is_symmetric_and_bounded(a in proptest::collection::vec(0.0..10.0f64, 24),
                                   b in proptest::collection::vec(0.0..10.0f64, 24)) {
        let (Some(a), Some(b)) = (normalize(&a), normalize(&b)) else { return Ok(()) };
        let labels: Vec<String> = (0..24).map(|h| h.to_string()).collect();
        let ab = compare_distributions(labels.clone(), &a, &b).unwrap();
        let ba = compare_distributions(labels.clone(), &b, &a).unwrap();
        prop_assert!((ab.l1_distance - ba.l1_distance).abs() < 1e-12);
        prop_assert!(ab.l1_distance >= 0.0 && ab.l1_distance <= 2.0 + 1e-12);
        let aa = compare_distributions(labels, &a, &a).unwrap();
        prop_assert_eq!(aa.l1_distance, 0.0);
        if let Some(r) = aa.pearson_r {
            prop_assert!((r - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn hand_built_comparison() {
    let labels: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let a = [0.1f64, 0.2, 0.3, 0.4];
    let b = [0.4, 0.3, 0.2, 0.1];
    let c = compare_distributions(labels.clone(), &a, &b).unwrap();
    // |0.3| + |0.1| + |0.1| + |0.3|
    assert!((c.l1_distance - 0.8).abs() < 1e-12);
    assert!((c.pearson_r.unwrap() + 1.0).abs() < 1e-12);

    let one_hot = |i: usize| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let c = compare_distributions(labels.clone(), &one_hot(0), &one_hot(3)).unwrap();
    assert_eq!(c.l1_distance, 2.0);

    let c32 = compare_distributions::<f32>(labels, &[0.25; 4], &[0.25; 4]).unwrap();
    assert_eq!(c32.l1_distance, 0.0);
    assert_eq!(c32.pearson_r, None);
}

#[test]
fn unnormalized_series_rejected() {
    let labels: Vec<String> = vec!["a".into(), "b".into()];
    assert!(matches!(
        compare_distributions(labels, &[0.5, 0.6], &[0.5, 0.5]),
        Err(AnalyticsError::NotNormalized { index: 0, .. })
    ));
}

#[test]
fn weekend_split_uses_local_time() {
    // Saturday 2014-08-02 23:30 in New York is Sunday 03:30 UTC
    let t = Utc.with_ymd_and_hms(2014, 8, 3, 3, 30, 0).unwrap().timestamp();
    let ds = [disp(1, 2, t)];
    let f = DirectionFilter::all(false, false);
    let ny = aggregate_time_of_day(&ds, &f, chrono_tz::America::New_York);
    assert_eq!(ny.weekend[23], 1);
    let tokyo = aggregate_time_of_day(&ds, &f, chrono_tz::Asia::Tokyo);
    assert_eq!(tokyo.weekend[12], 1);
    // a day later it is Monday afternoon in Tokyo
    let monday = aggregate_time_of_day(&[disp(1, 2, t + 86_400)], &f, chrono_tz::Asia::Tokyo);
    assert_eq!(monday.weekday[12], 1);
}
