mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twimob::synthgen::grid_zones;
use twimob::zoning::{load_zones, zones_to_geojson, Zone, ZoningError};
use twimob::{GeoPoint, ZoneLabel, ZonePolygon, ZoneSet};

use common::star_polygon;

fn random_zones(seed: u64, n: usize) -> ZoneSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zones = (0..n)
        .map(|i| {
            let center = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let ring = star_polygon(&mut rng, center, 16, 0.05, 0.6);
            Zone {
                zone_id: format!("z{i}"),
                name: format!("zone {i}"),
                polygons: vec![ZonePolygon::from_latlon(&ring).unwrap()],
            }
        })
        .collect();
    ZoneSet::new(zones).unwrap()
}

proptest! {
    #[test]
    fn index_agrees_with_scan(seed in any::<u64>(), n in 1usize..8,
                              pts in proptest::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 1..200)) {
        let zs = random_zones(seed, n);
        for (lat, lon) in pts {
            let p = GeoPoint::new(lat, lon).unwrap();
            prop_assert_eq!(zs.locate(p), zs.locate_by_scan(p));
        }
    }
}

#[test]
fn overlapping_zones_resolve_to_first_declared() {
    let square = |id: &str, lo: f64, hi: f64| Zone {
        zone_id: id.to_string(),
        name: id.to_string(),
        polygons: vec![ZonePolygon::from_latlon(&[(lo, lo), (lo, hi), (hi, hi), (hi, lo)]).unwrap()],
    };
    let zs = ZoneSet::new(vec![square("a", 0.0, 2.0), square("b", 1.0, 3.0)]).unwrap();
    let p = GeoPoint::new(1.5, 1.5).unwrap();
    assert_eq!(zs.label_point(p), ZoneLabel::Zone("a".into()));
    assert_eq!(
        zs.label_point(GeoPoint::new(2.5, 2.5).unwrap()),
        ZoneLabel::Zone("b".into())
    );
    assert_eq!(zs.label_point(GeoPoint::new(5.0, 5.0).unwrap()), ZoneLabel::External);
}

#[test]
fn geojson_round_trip_preserves_labels() {
    let zs = random_zones(3, 5);
    let back = load_zones(&zones_to_geojson(&zs)).unwrap();
    assert_eq!(back.zone_ids(), zs.zone_ids());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..2000 {
        let p = GeoPoint::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)).unwrap();
        assert_eq!(back.label_point(p), zs.label_point(p));
    }
}

#[test]
fn grid_cells_tile_without_gaps() {
    let zs = grid_zones(3, 4, 40.0, -75.0, 0.1);
    assert_eq!(zs.len(), 12);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5000 {
        let p = GeoPoint::new(rng.gen_range(40.0..40.3), rng.gen_range(-75.0..-74.6)).unwrap();
        assert!(!zs.label_point(p).is_external(), "{p:?}");
    }
}

#[test]
fn reserved_and_duplicate_ids_are_rejected() {
    let fc = |a: &str, b: &str| {
        format!(
            r#"{{"type":"FeatureCollection","features":[
            {{"type":"Feature","properties":{{"zone_id":"{a}"}},"geometry":{{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}}},
            {{"type":"Feature","properties":{{"zone_id":"{b}"}},"geometry":{{"type":"Polygon","coordinates":[[[2,2],[3,2],[3,3],[2,2]]]}}}}]}}"#
        )
    };
    assert!(load_zones(&fc("a", "b")).is_ok());
    assert!(matches!(load_zones(&fc("a", "a")), Err(ZoningError::DuplicateZone(_))));
    assert!(matches!(
        load_zones(&fc("a", "EXTERNAL")),
        Err(ZoningError::ReservedZoneId(_))
    ));
}
