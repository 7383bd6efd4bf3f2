//! Named zones loaded from GeoJSON and an indexed point labeler.

use std::fmt;
use std::str::FromStr;

use serde_json::Value;
use thiserror::Error;

use crate::geometry::{point_in_polygon, Containment, GeometryError, Point, Polygon, Ring, EDGE_TOLERANCE_DEG};
use crate::{BoundingBox, GeoPoint, ZonePolygon};

const EXTERNAL: &str = "EXTERNAL";

#[derive(Debug, Error)]
pub enum ZoningError {
    #[error("invalid GeoJSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected a GeoJSON FeatureCollection")]
    NotFeatureCollection,
    #[error("no zones defined")]
    NoZones,
    #[error("feature {index} has no zone_id property")]
    MissingZoneId { index: usize },
    #[error("duplicate zone_id '{0}'")]
    DuplicateZone(String),
    #[error("zone_id '{0}' is reserved")]
    ReservedZoneId(String),
    #[error("zone '{0}' has no polygons")]
    EmptyZone(String),
    #[error("feature '{feature}': unsupported geometry {kind}")]
    UnsupportedGeometry { feature: String, kind: String },
    #[error("feature '{feature}': invalid geometry: {reason}")]
    InvalidGeometry { feature: String, reason: String },
}

/// Zone assignment of a point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ZoneLabel {
    Zone(String),
    /// The point lies in no configured zone.
    External,
}

impl ZoneLabel {
    pub fn is_external(&self) -> bool {
        matches!(self, ZoneLabel::External)
    }

    pub fn as_str(&self) -> &str {
        match self {
            ZoneLabel::Zone(id) => id,
            ZoneLabel::External => EXTERNAL,
        }
    }
}

impl fmt::Display for ZoneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl serde::Serialize for ZoneLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl FromStr for ZoneLabel {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == EXTERNAL {
            ZoneLabel::External
        } else {
            ZoneLabel::Zone(s.to_string())
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub zone_id: String,
    pub name: String,
    pub polygons: Vec<ZonePolygon>,
}

#[derive(Debug, Clone, Copy)]
struct IndexEntry {
    zone: usize,
    bbox: BoundingBox,
    polygon: usize,
}

/// Uniform grid over polygon bounding boxes. Each cell lists the polygons
/// whose (tolerance-expanded) box overlaps it, in declaration order.
#[derive(Debug, Clone)]
struct GridIndex {
    extent: BoundingBox,
    cell: f64,
    rows: usize,
    cols: usize,
    cells: Vec<Vec<IndexEntry>>,
}

impl GridIndex {
    fn build(zones: &[Zone]) -> Self {
        let tol = EDGE_TOLERANCE_DEG;
        let entries: Vec<IndexEntry> = zones
            .iter()
            .enumerate()
            .flat_map(|(zi, z)| {
                z.polygons.iter().enumerate().map(move |(pi, p)| IndexEntry {
                    zone: zi,
                    polygon: pi,
                    bbox: crate::geometry::bbox(p).expanded(tol),
                })
            })
            .collect();

        let extent = entries
            .iter()
            .skip(1)
            .fold(entries[0].bbox, |acc, e| acc.union(&e.bbox));
        let cell = entries
            .iter()
            .map(|e| e.bbox.height().max(e.bbox.width()))
            .fold(0.0_f64, f64::max)
            .max(1e-9);
        let rows = (extent.height() / cell).floor() as usize + 1;
        let cols = (extent.width() / cell).floor() as usize + 1;

        let mut index = GridIndex {
            extent,
            cell,
            rows,
            cols,
            cells: vec![Vec::new(); rows * cols],
        };
        for e in entries {
            let (r0, c0) = index.cell_of(e.bbox.min_lat, e.bbox.min_lon);
            let (r1, c1) = index.cell_of(e.bbox.max_lat, e.bbox.max_lon);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    index.cells[r * cols + c].push(e);
                }
            }
        }
        index
    }

    fn cell_of(&self, lat: f64, lon: f64) -> (usize, usize) {
        let r = ((lat - self.extent.min_lat) / self.cell).floor().max(0.0) as usize;
        let c = ((lon - self.extent.min_lon) / self.cell).floor().max(0.0) as usize;
        (r.min(self.rows - 1), c.min(self.cols - 1))
    }

    fn candidates(&self, p: GeoPoint) -> &[IndexEntry] {
        if !self.extent.contains(p) {
            return &[];
        }
        let (r, c) = self.cell_of(p.lat, p.lon);
        &self.cells[r * self.cols + c]
    }
}

/// Immutable zone collection with a spatial index.
#[derive(Debug, Clone)]
pub struct ZoneSet {
    zones: Vec<Zone>,
    index: GridIndex,
}

impl ZoneSet {
    pub fn new(zones: Vec<Zone>) -> Result<Self, ZoningError> {
        if zones.is_empty() {
            return Err(ZoningError::NoZones);
        }
        let mut seen = std::collections::HashSet::new();
        for z in &zones {
            if z.zone_id == EXTERNAL {
                return Err(ZoningError::ReservedZoneId(z.zone_id.clone()));
            }
            if !seen.insert(z.zone_id.as_str()) {
                return Err(ZoningError::DuplicateZone(z.zone_id.clone()));
            }
            if z.polygons.is_empty() {
                return Err(ZoningError::EmptyZone(z.zone_id.clone()));
            }
        }
        let index = GridIndex::build(&zones);
        Ok(ZoneSet { zones, index })
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn zone_ids(&self) -> Vec<String> {
        self.zones.iter().map(|z| z.zone_id.clone()).collect()
    }

    pub fn zone(&self, zone_id: &str) -> Option<&Zone> {
        self.zones.iter().find(|z| z.zone_id == zone_id)
    }

    /// Index of the first zone (declaration order) containing `p`.
    pub fn locate(&self, p: GeoPoint) -> Option<usize> {
        // candidates are in declaration order, so the first hit wins
        self.index
            .candidates(p)
            .iter()
            .find(|e| {
                e.bbox.contains(p)
                    && point_in_polygon(p, &self.zones[e.zone].polygons[e.polygon]) == Containment::Inside
            })
            .map(|e| e.zone)
    }

    /// Like [`ZoneSet::locate`] but by exhaustive scan, bypassing the index.
    pub fn locate_by_scan(&self, p: GeoPoint) -> Option<usize> {
        self.zones.iter().position(|z| {
            z.polygons
                .iter()
                .any(|poly| point_in_polygon(p, poly) == Containment::Inside)
        })
    }

    pub fn label_point(&self, p: GeoPoint) -> ZoneLabel {
        self.to_label(self.locate(p))
    }

    pub fn label_point_by_scan(&self, p: GeoPoint) -> ZoneLabel {
        self.to_label(self.locate_by_scan(p))
    }

    fn to_label(&self, idx: Option<usize>) -> ZoneLabel {
        match idx {
            Some(i) => ZoneLabel::Zone(self.zones[i].zone_id.clone()),
            None => ZoneLabel::External,
        }
    }

    /// Combined bounds of every zone polygon.
    pub fn extent(&self) -> BoundingBox {
        let tol = EDGE_TOLERANCE_DEG;
        self.index.extent.expanded(-tol)
    }
}

/// Free-function form of [`ZoneSet::label_point`].
pub fn label_point(zs: &ZoneSet, p: GeoPoint) -> ZoneLabel {
    zs.label_point(p)
}

/// Loads a FeatureCollection of Polygon / MultiPolygon features. Each feature
/// needs a `zone_id` property; `name` defaults to the id.
pub fn load_zones(geojson: &str) -> Result<ZoneSet, ZoningError> {
    let doc: Value = serde_json::from_str(geojson)?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(ZoningError::NotFeatureCollection);
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or(ZoningError::NotFeatureCollection)?;

    let mut zones = Vec::with_capacity(features.len());
    for (index, feature) in features.iter().enumerate() {
        let props = feature.get("properties");
        let zone_id = props
            .and_then(|p| p.get("zone_id"))
            .and_then(property_string)
            .ok_or(ZoningError::MissingZoneId { index })?;
        let name = props
            .and_then(|p| p.get("name"))
            .and_then(property_string)
            .unwrap_or_else(|| zone_id.clone());
        let polygons = feature_polygons(feature, &zone_id)?;
        zones.push(Zone {
            zone_id,
            name,
            polygons,
        });
    }
    ZoneSet::new(zones)
}

fn property_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn feature_polygons(feature: &Value, zone_id: &str) -> Result<Vec<ZonePolygon>, ZoningError> {
    let invalid = |reason: String| ZoningError::InvalidGeometry {
        feature: zone_id.to_string(),
        reason,
    };
    let geometry = feature
        .get("geometry")
        .filter(|g| !g.is_null())
        .ok_or_else(|| invalid("missing geometry".into()))?;
    let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("");
    let coords = geometry
        .get("coordinates")
        .ok_or_else(|| invalid("missing coordinates".into()))?;
    match kind {
        "Polygon" => Ok(vec![parse_polygon(coords).map_err(invalid)?]),
        "MultiPolygon" => coords
            .as_array()
            .ok_or_else(|| invalid("coordinates must be an array".into()))?
            .iter()
            .map(|p| parse_polygon(p).map_err(invalid))
            .collect(),
        other => Err(ZoningError::UnsupportedGeometry {
            feature: zone_id.to_string(),
            kind: other.to_string(),
        }),
    }
}

fn parse_polygon(v: &Value) -> Result<ZonePolygon, String> {
    let rings = v.as_array().ok_or("polygon must be an array of rings")?;
    let mut parsed = rings.iter().map(parse_ring).collect::<Result<Vec<_>, _>>()?.into_iter();
    let outer = parsed.next().ok_or("polygon has no rings")?;
    Polygon::new(outer, parsed.collect()).map_err(|e| e.to_string())
}

fn parse_ring(v: &Value) -> Result<Ring<f64>, String> {
    let positions = v.as_array().ok_or("ring must be an array of positions")?;
    let vertices = positions
        .iter()
        .map(|pos| {
            let xy = pos
                .as_array()
                .filter(|a| a.len() >= 2)
                .ok_or("position needs [lon, lat]")?;
            let lon = xy[0].as_f64().ok_or("non-numeric longitude")?;
            let lat = xy[1].as_f64().ok_or("non-numeric latitude")?;
            Point::new(lat, lon).map_err(|e: GeometryError| e.to_string())
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ring::new(vertices).map_err(|e| e.to_string())
}

/// Serializes zones back to a GeoJSON FeatureCollection.
pub fn zones_to_geojson(zs: &ZoneSet) -> String {
    let ring_coords = |r: &Ring<f64>| {
        let mut pts: Vec<Value> = r.vertices().iter().map(|p| serde_json::json!([p.lon, p.lat])).collect();
        pts.push(pts[0].clone());
        Value::Array(pts)
    };
    let features: Vec<Value> = zs
        .zones()
        .iter()
        .map(|z| {
            let polys: Vec<Value> = z
                .polygons
                .iter()
                .map(|p| {
                    let mut rings = vec![ring_coords(p.outer())];
                    rings.extend(p.holes().iter().map(ring_coords));
                    Value::Array(rings)
                })
                .collect();
            serde_json::json!({
                "type": "Feature",
                "properties": {"zone_id": z.zone_id, "name": z.name},
                "geometry": {"type": "MultiPolygon", "coordinates": polys},
            })
        })
        .collect();
    serde_json::json!({"type": "FeatureCollection", "features": features}).to_string()
}
