//! Spherical distance, planar polygon containment and bounding boxes.
//!
//! Containment works in equirectangular lat/lon space: `lon` is the x axis and
//! `lat` the y axis. Rings are stored open (the closing vertex is dropped).

use thiserror::Error;

use crate::num::Scalar;

/// Mean earth radius used for every distance computation, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Points closer than this to a ring edge (in degrees) count as inside.
pub const EDGE_TOLERANCE_DEG: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("ring has {count} distinct vertices, at least 3 required")]
    TooFewVertices { count: usize },
    #[error("ring repeats vertex {index} consecutively")]
    RepeatedVertex { index: usize },
    #[error("hole {hole} extends beyond the outer ring's bounding box")]
    HoleOutsideOuter { hole: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point<T> {
    pub lat: T,
    pub lon: T,
}

impl<T: Scalar> Point<T> {
    /// Builds a point, rejecting non-finite or out-of-range coordinates.
    pub fn new(lat: T, lon: T) -> Result<Self, GeometryError> {
        let lat_ok = lat.is_finite() && lat.abs() <= T::lit(90.0);
        let lon_ok = lon.is_finite() && lon.abs() <= T::lit(180.0);
        if lat_ok && lon_ok {
            Ok(Point { lat, lon })
        } else {
            Err(GeometryError::InvalidCoordinate {
                lat: lat.to_f64().unwrap_or(f64::NAN),
                lon: lon.to_f64().unwrap_or(f64::NAN),
            })
        }
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_distance<T: Scalar>(a: Point<T>, b: Point<T>) -> T {
    let two = T::lit(2.0);
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let half_dlat = (lat2 - lat1) / two;
    let half_dlon = (b.lon - a.lon).to_radians() / two;

    let h = half_dlat.sin().powi(2) + lat1.cos() * lat2.cos() * half_dlon.sin().powi(2);
    // rounding can push h a hair above 1 for antipodal pairs
    let h = h.max(T::zero()).min(T::one());
    two * T::lit(EARTH_RADIUS_M) * h.sqrt().asin()
}

/// Axis-aligned bounds in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub min_lat: T,
    pub max_lat: T,
    pub min_lon: T,
    pub max_lon: T,
}

impl<T: Scalar> BoundingBox<T> {
    fn of_points(points: &[Point<T>]) -> Self {
        let first = points[0];
        let init = BoundingBox {
            min_lat: first.lat,
            max_lat: first.lat,
            min_lon: first.lon,
            max_lon: first.lon,
        };
        points.iter().skip(1).fold(init, |b, p| BoundingBox {
            min_lat: b.min_lat.min(p.lat),
            max_lat: b.max_lat.max(p.lat),
            min_lon: b.min_lon.min(p.lon),
            max_lon: b.max_lon.max(p.lon),
        })
    }

    pub fn contains(&self, p: Point<T>) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    /// Returns the box grown by `margin` degrees on every side.
    pub fn expanded(&self, margin: T) -> Self {
        BoundingBox {
            min_lat: self.min_lat - margin,
            max_lat: self.max_lat + margin,
            min_lon: self.min_lon - margin,
            max_lon: self.max_lon + margin,
        }
    }

    pub fn contains_box(&self, other: &Self) -> bool {
        other.min_lat >= self.min_lat
            && other.max_lat <= self.max_lat
            && other.min_lon >= self.min_lon
            && other.max_lon <= self.max_lon
    }

    pub fn union(&self, other: &Self) -> Self {
        BoundingBox {
            min_lat: self.min_lat.min(other.min_lat),
            max_lat: self.max_lat.max(other.max_lat),
            min_lon: self.min_lon.min(other.min_lon),
            max_lon: self.max_lon.max(other.max_lon),
        }
    }

    pub fn height(&self) -> T {
        self.max_lat - self.min_lat
    }

    pub fn width(&self) -> T {
        self.max_lon - self.min_lon
    }
}

/// Closed polygon ring stored without its repeated closing vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring<T> {
    vertices: Vec<Point<T>>,
}

impl<T: Scalar> Ring<T> {
    /// Accepts either an open or an explicitly closed vertex list.
    pub fn new(mut vertices: Vec<Point<T>>) -> Result<Self, GeometryError> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices { count: vertices.len() });
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(GeometryError::RepeatedVertex { index: i });
            }
        }
        Ok(Ring { vertices })
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    pub fn bbox(&self) -> BoundingBox<T> {
        BoundingBox::of_points(&self.vertices)
    }

    fn edges(&self) -> impl Iterator<Item = (Point<T>, Point<T>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd parity of a ray cast from `p` towards +lon.
    fn ray_parity(&self, p: Point<T>) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let x_cross = a.lon + (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat);
                if p.lon < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn touches(&self, p: Point<T>, tolerance: T) -> bool {
        self.edges()
            .any(|(a, b)| segment_distance_sq(p, a, b) <= tolerance * tolerance)
    }
}

fn segment_distance_sq<T: Scalar>(p: Point<T>, a: Point<T>, b: Point<T>) -> T {
    let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
    let (px, py) = (p.lon - a.lon, p.lat - a.lat);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq > T::zero() {
        ((px * dx + py * dy) / len_sq).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    let (ex, ey) = (px - t * dx, py - t * dy);
    ex * ex + ey * ey
}

/// Outer ring plus optional holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon<T> {
    outer: Ring<T>,
    holes: Vec<Ring<T>>,
    bbox: BoundingBox<T>,
}

impl<T: Scalar> Polygon<T> {
    pub fn new(outer: Ring<T>, holes: Vec<Ring<T>>) -> Result<Self, GeometryError> {
        let bbox = outer.bbox();
        if let Some(hole) = holes.iter().position(|h| !bbox.contains_box(&h.bbox())) {
            return Err(GeometryError::HoleOutsideOuter { hole });
        }
        Ok(Polygon { outer, holes, bbox })
    }

    /// Convenience constructor for a hole-free polygon from `(lat, lon)` pairs.
    pub fn from_latlon(coords: &[(T, T)]) -> Result<Self, GeometryError> {
        let vertices = coords
            .iter()
            .map(|&(lat, lon)| Point::new(lat, lon))
            .collect::<Result<Vec<_>, _>>()?;
        Polygon::new(Ring::new(vertices)?, Vec::new())
    }

    pub fn outer(&self) -> &Ring<T> {
        &self.outer
    }

    pub fn holes(&self) -> &[Ring<T>] {
        &self.holes
    }

    fn rings(&self) -> impl Iterator<Item = &Ring<T>> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Inside,
    Outside,
}

/// Even-odd containment test. A point within [`EDGE_TOLERANCE_DEG`] of any
/// ring edge, holes included, is `Inside`.
pub fn point_in_polygon<T: Scalar>(p: Point<T>, poly: &Polygon<T>) -> Containment {
    let tol = T::lit(EDGE_TOLERANCE_DEG);
    if !poly.bbox.expanded(tol).contains(p) {
        return Containment::Outside;
    }
    if poly.rings().any(|r| r.touches(p, tol)) {
        return Containment::Inside;
    }
    let parity = poly.rings().fold(false, |acc, r| acc ^ r.ray_parity(p));
    if parity {
        Containment::Inside
    } else {
        Containment::Outside
    }
}

/// Tight bounds of the outer ring.
pub fn bbox<T: Scalar>(poly: &Polygon<T>) -> BoundingBox<T> {
    poly.bbox
}
