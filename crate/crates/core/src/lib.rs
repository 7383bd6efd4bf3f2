//! Turns raw geotagged post streams into validated displacement records and
//! aggregated travel-behavior products: zone-to-zone OD matrices, hour-of-day
//! histograms split by weekday/weekend, and user-group partitions.
//!
//! The pipeline runs in three steps per user:
//!
//! 1. keep users above an activity threshold and drop records implying
//!    implausible speeds ([`displacement::filter_active_users`],
//!    [`displacement::remove_speed_violations`]);
//! 2. pair consecutive records that fall inside a time window
//!    ([`displacement::extract_displacements`]);
//! 3. label both endpoints with zones by point-in-polygon and estimate the
//!    border-crossing time ([`displacement::label_displacement`]).
//!
//! Coordinate math in [`geometry`] is generic over the float type; the rest of
//! the pipeline works in `f64` through the aliases below.

pub mod analytics;
pub mod displacement;
pub mod formats;
pub mod geometry;
pub mod ingest;
pub mod num;
pub mod report;
pub mod synthgen;
pub mod zoning;

pub use num::Scalar;

pub type GeoPoint = geometry::Point<f64>;
pub type PolygonRing = geometry::Ring<f64>;
pub type ZonePolygon = geometry::Polygon<f64>;
pub type BoundingBox = geometry::BoundingBox<f64>;

pub type GeoPoint32 = geometry::Point<f32>;
pub type ZonePolygon32 = geometry::Polygon<f32>;

pub use displacement::{Displacement, FilterConfig};
pub use ingest::{TweetRecord, UserTimeline};
pub use zoning::{ZoneLabel, ZoneSet};
