//! Aggregations over displacements: user groups, hour-of-day histograms,
//! OD matrices and distribution comparison.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use chrono::{Datelike, Timelike, Weekday};
use chrono_tz::Tz;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::displacement::Displacement;
use crate::num::Scalar;
use crate::zoning::ZoneLabel;

/// Tolerance on "sums to one" checks.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("no user profiles to classify")]
    NoProfiles,
    #[error("group cutoff must lie in (0, 1), got {0}")]
    BadCutoff(f64),
    #[error("empty OD: no displacements survive the filters")]
    EmptyOd,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series need at least 2 bins, got {0}")]
    TooShort(usize),
    #[error("series {index} is not normalized: sums to {sum}")]
    NotNormalized { index: usize, sum: f64 },
    #[error("series {index} has a negative or non-finite value at bin {bin}")]
    BadValue { index: usize, bin: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserProfile {
    pub user_id: String,
    pub tweet_count: usize,
    pub displacement_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Group {
    HighFrequency,
    LowFrequency,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::HighFrequency => "HIGH_FREQUENCY",
            Group::LowFrequency => "LOW_FREQUENCY",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupPartition {
    pub percentile_cutoff: f64,
    /// Most active users first.
    pub high_group: Vec<UserProfile>,
    pub low_group: Vec<UserProfile>,
    /// 0 for both shares when there are no displacements at all.
    pub share_of_displacements_high: f64,
    pub share_of_displacements_low: f64,
}

impl GroupPartition {
    /// Every profile with its group, in rank order.
    pub fn ranked(&self) -> impl Iterator<Item = (&UserProfile, Group)> {
        self.high_group
            .iter()
            .map(|p| (p, Group::HighFrequency))
            .chain(self.low_group.iter().map(|p| (p, Group::LowFrequency)))
    }
}

/// `max(1, ceil(cutoff * n))`, capped at `n`. Products within 1e-9 of an
/// integer are treated as that integer so `0.07 * 100` gives 7, not 8.
pub fn high_group_size(n: usize, cutoff: f64) -> usize {
    let x = cutoff * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k as usize).clamp(1, n.max(1))
}

/// Ranks users by tweet count (descending, ties by user id ascending) and cuts
/// the top `cutoff` fraction into the high-frequency group.
pub fn classify_groups(profiles: &[UserProfile], cutoff: f64) -> Result<GroupPartition, AnalyticsError> {
    if profiles.is_empty() {
        return Err(AnalyticsError::NoProfiles);
    }
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(AnalyticsError::BadCutoff(cutoff));
    }
    let mut ranked = profiles.to_vec();
    ranked.sort_by(|a, b| {
        b.tweet_count
            .cmp(&a.tweet_count)
            .then_with(|| a.user_id.cmp(&b.user_id))
    });
    let k = high_group_size(ranked.len(), cutoff);
    let low_group = ranked.split_off(k);
    let high_group = ranked;

    let high: usize = high_group.iter().map(|p| p.displacement_count).sum();
    let low: usize = low_group.iter().map(|p| p.displacement_count).sum();
    let total = (high + low) as f64;
    let (share_high, share_low) = if total > 0.0 {
        (high as f64 / total, low as f64 / total)
    } else {
        (0.0, 0.0)
    };
    Ok(GroupPartition {
        percentile_cutoff: cutoff,
        high_group,
        low_group,
        share_of_displacements_high: share_high,
        share_of_displacements_low: share_low,
    })
}

/// Which displacements a histogram counts. `None` on either end matches any
/// zone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirectionFilter {
    pub from: Option<ZoneLabel>,
    pub to: Option<ZoneLabel>,
    pub include_intra: bool,
    pub include_external: bool,
}

impl DirectionFilter {
    pub fn all(include_intra: bool, include_external: bool) -> Self {
        DirectionFilter {
            from: None,
            to: None,
            include_intra,
            include_external,
        }
    }

    /// Inter-zone travel from `from` to `to`.
    pub fn between(from: ZoneLabel, to: ZoneLabel) -> Self {
        DirectionFilter {
            from: Some(from),
            to: Some(to),
            include_intra: false,
            include_external: true,
        }
    }

    /// Inter-zone arrivals into `zone` from anywhere.
    pub fn into_zone(zone: ZoneLabel, include_external: bool) -> Self {
        DirectionFilter {
            from: None,
            to: Some(zone),
            include_intra: false,
            include_external,
        }
    }

    /// Inter-zone departures from `zone` to anywhere.
    pub fn out_of_zone(zone: ZoneLabel, include_external: bool) -> Self {
        DirectionFilter {
            from: Some(zone),
            to: None,
            include_intra: false,
            include_external,
        }
    }

    pub fn matches(&self, d: &Displacement) -> bool {
        if !self.include_intra && !d.is_inter_zone() {
            return false;
        }
        if !self.include_external && d.touches_external() {
            return false;
        }
        self.from.as_ref().is_none_or(|z| *z == d.origin_zone)
            && self.to.as_ref().is_none_or(|z| *z == d.destination_zone)
    }
}

/// Hourly crossing counts split into weekdays and weekends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeOfDayHistogram {
    pub direction: DirectionFilter,
    pub weekday: [u64; 24],
    pub weekend: [u64; 24],
}

pub fn is_weekend(day: Weekday) -> bool {
    matches!(day, Weekday::Sat | Weekday::Sun)
}

fn fractions(bins: &[u64; 24]) -> [f64; 24] {
    let total: u64 = bins.iter().sum();
    let mut out = [0.0; 24];
    if total > 0 {
        for (o, &b) in out.iter_mut().zip(bins) {
            *o = b as f64 / total as f64;
        }
    }
    out
}

impl TimeOfDayHistogram {
    pub fn empty(direction: DirectionFilter) -> Self {
        TimeOfDayHistogram {
            direction,
            weekday: [0; 24],
            weekend: [0; 24],
        }
    }

    /// Bins the crossing time of `d` in `tz` if it matches the filter.
    pub fn add(&mut self, d: &Displacement, tz: Tz) {
        if !self.direction.matches(d) {
            return;
        }
        let local = d.crossing_time.with_timezone(&tz);
        let hour = local.hour() as usize;
        if is_weekend(local.weekday()) {
            self.weekend[hour] += 1;
        } else {
            self.weekday[hour] += 1;
        }
    }

    pub fn merge(mut self, other: &Self) -> Self {
        for h in 0..24 {
            self.weekday[h] += other.weekday[h];
            self.weekend[h] += other.weekend[h];
        }
        self
    }

    pub fn weekday_total(&self) -> u64 {
        self.weekday.iter().sum()
    }

    pub fn weekend_total(&self) -> u64 {
        self.weekend.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.weekday_total() + self.weekend_total()
    }

    /// Weekday bins over the weekday total; all zero when there are none.
    pub fn weekday_fractions(&self) -> [f64; 24] {
        fractions(&self.weekday)
    }

    pub fn weekend_fractions(&self) -> [f64; 24] {
        fractions(&self.weekend)
    }

    /// Both day types pooled.
    pub fn combined_fractions(&self) -> [f64; 24] {
        let mut pooled = self.weekday;
        for (p, w) in pooled.iter_mut().zip(self.weekend) {
            *p += w;
        }
        fractions(&pooled)
    }
}

/// Histogram of one user's displacements.
pub fn user_time_of_day(displacements: &[Displacement], filter: &DirectionFilter, tz: Tz) -> TimeOfDayHistogram {
    let mut h = TimeOfDayHistogram::empty(filter.clone());
    for d in displacements {
        h.add(d, tz);
    }
    h
}

/// Same as [`user_time_of_day`] over the whole set, reduced in parallel.
pub fn aggregate_time_of_day(displacements: &[Displacement], filter: &DirectionFilter, tz: Tz) -> TimeOfDayHistogram {
    displacements
        .par_chunks(4096)
        .map(|chunk| user_time_of_day(chunk, filter, tz))
        .reduce(|| TimeOfDayHistogram::empty(filter.clone()), |a, b| a.merge(&b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct OdOptions {
    pub include_intra: bool,
    pub include_external: bool,
}

/// Zone-by-zone displacement counts; rows are origins, columns destinations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdMatrix {
    pub zones: Vec<ZoneLabel>,
    pub counts: Vec<Vec<u64>>,
    pub proportions: Vec<Vec<f64>>,
    pub options: OdOptions,
}

impl OdMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn index_of(&self, zone: &ZoneLabel) -> Option<usize> {
        self.zones.iter().position(|z| z == zone)
    }

    pub fn proportion(&self, from: &ZoneLabel, to: &ZoneLabel) -> f64 {
        match (self.index_of(from), self.index_of(to)) {
            (Some(i), Some(j)) => self.proportions[i][j],
            _ => 0.0,
        }
    }
}

/// Builds the OD matrix. Rows and columns follow `zone_order` first, then any
/// other observed zone sorted by id, with `EXTERNAL` last when included.
pub fn aggregate_od(
    displacements: &[Displacement],
    zone_order: &[String],
    opts: OdOptions,
) -> Result<OdMatrix, AnalyticsError> {
    let keep = |d: &Displacement| {
        (opts.include_intra || d.is_inter_zone()) && (opts.include_external || !d.touches_external())
    };

    let mut zones: Vec<ZoneLabel> = zone_order.iter().map(|z| ZoneLabel::Zone(z.clone())).collect();
    let observed: BTreeSet<&ZoneLabel> = displacements
        .iter()
        .filter(|d| keep(d))
        .flat_map(|d| [&d.origin_zone, &d.destination_zone])
        .collect();
    for z in observed.iter().filter(|z| !z.is_external()) {
        if !zones.contains(z) {
            zones.push((*z).clone());
        }
    }
    if opts.include_external {
        zones.push(ZoneLabel::External);
    }
    let lookup: HashMap<&ZoneLabel, usize> = zones.iter().enumerate().map(|(i, z)| (z, i)).collect();
    let n = zones.len();

    let flat = displacements
        .par_chunks(4096)
        .map(|chunk| {
            let mut acc = vec![0u64; n * n];
            for d in chunk.iter().filter(|d| keep(d)) {
                acc[lookup[&d.origin_zone] * n + lookup[&d.destination_zone]] += 1;
            }
            acc
        })
        .reduce(
            || vec![0u64; n * n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let total: u64 = flat.iter().sum();
    if total == 0 {
        return Err(AnalyticsError::EmptyOd);
    }
    let counts: Vec<Vec<u64>> = flat.chunks(n).map(<[u64]>::to_vec).collect();
    let proportions = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / total as f64).collect())
        .collect();
    Ok(OdMatrix {
        zones,
        counts,
        proportions,
        options: opts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionComparison<T> {
    pub labels: Vec<String>,
    pub series: Vec<Vec<T>>,
    /// Sum of absolute bin differences, in [0, 2].
    pub l1_distance: T,
    /// `None` when either series is constant.
    pub pearson_r: Option<T>,
}

fn validate_series<T: Scalar>(index: usize, s: &[T]) -> Result<(), AnalyticsError> {
    if let Some(bin) = s.iter().position(|v| !v.is_finite() || *v < T::zero()) {
        return Err(AnalyticsError::BadValue { index, bin });
    }
    let sum = s.iter().fold(T::zero(), |acc, &v| acc + v);
    let sum = sum.to_f64().unwrap_or(f64::NAN);
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(AnalyticsError::NotNormalized { index, sum });
    }
    Ok(())
}

fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    let n = T::from_usize(a.len())?;
    let mean_a = a.iter().fold(T::zero(), |s, &v| s + v) / n;
    let mean_b = b.iter().fold(T::zero(), |s, &v| s + v) / n;
    let (mut cov, mut var_a, mut var_b) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov = cov + dx * dy;
        var_a = var_a + dx * dx;
        var_b = var_b + dy * dy;
    }
    if var_a <= T::zero() || var_b <= T::zero() {
        return None;
    }
    let r = cov / (var_a * var_b).sqrt();
    Some(r.max(-T::one()).min(T::one()))
}

/// L1 distance and Pearson correlation of two normalized series.
pub fn compare_distributions<T: Scalar>(
    labels: Vec<String>,
    a: &[T],
    b: &[T],
) -> Result<DistributionComparison<T>, AnalyticsError> {
    if a.len() != b.len() {
        return Err(AnalyticsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(AnalyticsError::TooShort(a.len()));
    }
    if labels.len() != a.len() {
        return Err(AnalyticsError::LengthMismatch(labels.len(), a.len()));
    }
    validate_series(0, a)?;
    validate_series(1, b)?;
    let l1 = a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y).abs());
    Ok(DistributionComparison {
        labels,
        series: vec![a.to_vec(), b.to_vec()],
        l1_distance: l1,
        pearson_r: pearson(a, b),
    })
}

/// Scales non-negative values to sum to one.
pub fn normalize<T: Scalar>(values: &[T]) -> Option<Vec<T>> {
    let sum = values.iter().fold(T::zero(), |acc, &v| acc + v);
    if sum.is_nan() || sum <= T::zero() {
        return None;
    }
    Some(values.iter().map(|&v| v / sum).collect())
}
