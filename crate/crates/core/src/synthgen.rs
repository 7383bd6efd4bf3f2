//! Synthetic corpora with known trips.
//!
//! Each agent gets one anchor location per zone. Its timeline is a sequence
//! of episodes: one to three posts near the origin anchor, a border crossing,
//! then one to three posts near the destination anchor. Episodes are separated
//! by silent gaps longer than the time window, so the only record pair that
//! can span zones is the pair bracketing the crossing. That makes the set of
//! trips the extraction should recover known in advance:
//! [`GroundTruthTrip::recoverable`] marks them.
//!
//! Anomalies are single far-away posts 30 s after a real post; the speed
//! filter drops exactly those.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate, TimeZone, Utc};
use chrono_tz::Tz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto, WeightedIndex};
use thiserror::Error;

use crate::analytics::is_weekend;
use crate::displacement::FilterConfig;
use crate::geometry::{haversine_distance, Point, EARTH_RADIUS_M};
use crate::ingest::{Timestamp, TweetRecord};
use crate::zoning::{Zone, ZoneSet};
use crate::{GeoPoint, ZonePolygon};

/// Meters per degree of latitude on the reference sphere.
const M_PER_DEG: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
/// Noise is truncated at this many sigmas per axis.
const NOISE_CLIP: f64 = 4.0;
const MIN_POST_SPACING_S: i64 = 120;
const MAX_POST_SPACING_S: i64 = 1200;
const MIN_BRACKET_S: i64 = 120;
const MAX_BRACKET_S: i64 = 3000;
const ANOMALY_DELAY_S: i64 = 30;
const ANOMALY_JUMP_DEG: f64 = 9.0;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("need at least 2 zones for inter-zone trips, got {0}")]
    TooFewZones(usize),
    #[error("od_weights must be {n}x{n}")]
    OdShape { n: usize },
    #[error("od_weights must be non-negative and sum to 1 (sum {0})")]
    OdNotNormalized(f64),
    #[error("od_weights diagonal must be zero (zone {0})")]
    OdDiagonal(usize),
    #[error("{0} must lie in [0, 1]")]
    BadRate(&'static str),
    #[error("{0} schedule needs non-negative weights with a positive sum")]
    BadSchedule(&'static str),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("could not place an anchor inside zone '{0}'")]
    AnchorSampling(String),
}

/// Heavy-tailed posts-per-agent budget: Pareto with scale `x_min` and shape
/// `alpha`, capped at `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TweetVolume {
    pub x_min: f64,
    pub alpha: f64,
    pub max: usize,
}

impl Default for TweetVolume {
    fn default() -> Self {
        TweetVolume {
            x_min: 100.0,
            alpha: 1.2,
            max: 3000,
        }
    }
}

/// Commuter-shaped weekday weights with morning and evening peaks.
pub const DEFAULT_WEEKDAY_SCHEDULE: [f64; 24] = [
    0.2, 0.1, 0.1, 0.1, 0.3, 1.0, 3.0, 6.0, 8.0, 5.0, 2.5, 2.0, 2.5, 2.5, 2.5, 3.0, 5.0, 7.0, 7.0, 5.0, 3.0, 2.0, 1.2,
    0.6,
];
pub const DEFAULT_WEEKEND_SCHEDULE: [f64; 24] = [
    1.0, 0.6, 0.4, 0.2, 0.2, 0.3, 0.5, 1.0, 1.5, 2.5, 3.5, 4.0, 4.5, 4.5, 4.5, 4.0, 4.0, 4.0, 3.5, 3.0, 2.5, 2.0, 1.5,
    1.2,
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_agents: usize,
    pub zone_map: ZoneSet,
    /// Origin-by-destination trip weights in zone declaration order.
    pub od_weights: Vec<Vec<f64>>,
    pub tweets_per_agent: TweetVolume,
    pub weekday_schedule: [f64; 24],
    pub weekend_schedule: [f64; 24],
    /// Meters, per axis.
    pub gps_noise_sigma: f64,
    /// Probability that a real post is followed by an injected jump.
    pub anomaly_rate: f64,
    /// Probability that an episode's bracketing gap exceeds the time window.
    pub miss_rate: f64,
    pub start_date: NaiveDate,
    pub days: u32,
    /// Zone the schedules are expressed in.
    pub tz: Tz,
    /// Thresholds recoverability is judged against.
    pub filter: FilterConfig,
}

impl SynthConfig {
    /// Uniform off-diagonal OD weights and default behavior over `zone_map`.
    pub fn new(zone_map: ZoneSet, seed: u64, n_agents: usize) -> Self {
        let n = zone_map.len();
        let cell = if n > 1 { 1.0 / (n * (n - 1)) as f64 } else { 0.0 };
        let od_weights = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { cell }).collect())
            .collect();
        SynthConfig {
            seed,
            n_agents,
            zone_map,
            od_weights,
            tweets_per_agent: TweetVolume::default(),
            weekday_schedule: DEFAULT_WEEKDAY_SCHEDULE,
            weekend_schedule: DEFAULT_WEEKEND_SCHEDULE,
            gps_noise_sigma: 30.0,
            anomaly_rate: 0.0,
            miss_rate: 0.1,
            start_date: NaiveDate::from_ymd_opt(2014, 6, 1).expect("valid date"),
            days: 365,
            tz: chrono_tz::America::New_York,
            filter: FilterConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let n = self.zone_map.len();
        if n < 2 {
            return Err(SynthError::TooFewZones(n));
        }
        if self.od_weights.len() != n || self.od_weights.iter().any(|r| r.len() != n) {
            return Err(SynthError::OdShape { n });
        }
        let sum: f64 = self.od_weights.iter().flatten().sum();
        if self.od_weights.iter().flatten().any(|w| !w.is_finite() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(SynthError::OdNotNormalized(sum));
        }
        if let Some(i) = (0..n).find(|&i| self.od_weights[i][i] != 0.0) {
            return Err(SynthError::OdDiagonal(i));
        }
        for (name, rate) in [("anomaly_rate", self.anomaly_rate), ("miss_rate", self.miss_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(SynthError::BadRate(name));
            }
        }
        for (name, s) in [("weekday", &self.weekday_schedule), ("weekend", &self.weekend_schedule)] {
            if s.iter().any(|w| !w.is_finite() || *w < 0.0) || s.iter().sum::<f64>() <= 0.0 {
                return Err(SynthError::BadSchedule(name));
            }
        }
        self.filter
            .validate()
            .map_err(|e| SynthError::BadParameter(e.to_string()))?;
        let v = &self.tweets_per_agent;
        if v.x_min.is_nan() || v.x_min < 1.0 || v.alpha.is_nan() || v.alpha <= 0.0 || v.max < 1 {
            return Err(SynthError::BadParameter("tweets_per_agent".into()));
        }
        if self.n_agents == 0 || self.days == 0 {
            return Err(SynthError::BadParameter("n_agents and days must be positive".into()));
        }
        // jitter between two posts of one stay must stay under the speed limit
        let max_jitter = 2.0 * NOISE_CLIP * std::f64::consts::SQRT_2 * self.gps_noise_sigma;
        if self.gps_noise_sigma.is_nan()
            || self.gps_noise_sigma < 0.0
            || max_jitter / MIN_POST_SPACING_S as f64 >= self.filter.max_speed
        {
            return Err(SynthError::BadParameter(
                "gps_noise_sigma too large for max_speed".into(),
            ));
        }
        if ANOMALY_JUMP_DEG * M_PER_DEG / ANOMALY_DELAY_S as f64 <= 2.0 * self.filter.max_speed {
            return Err(SynthError::BadParameter(
                "max_speed too high for injected anomalies".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrip {
    pub user_id: String,
    pub origin_zone: String,
    pub destination_zone: String,
    pub true_crossing_time: Timestamp,
    /// The posts bracketing the crossing should form an inter-zone
    /// displacement under `SynthConfig::filter`.
    pub recoverable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSummary {
    pub user_id: String,
    /// Posts emitted, anomalies included.
    pub records: usize,
    pub anomalies: usize,
    pub recoverable_trips: usize,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Sorted by timestamp, then user id.
    pub records: Vec<TweetRecord>,
    /// Sorted by user id, then crossing time.
    pub trips: Vec<GroundTruthTrip>,
    pub agents: Vec<AgentSummary>,
    pub anomalies_injected: usize,
}

impl SynthCorpus {
    pub fn recoverable_trips(&self) -> impl Iterator<Item = &GroundTruthTrip> {
        self.trips.iter().filter(|t| t.recoverable)
    }
}

struct EpisodeShape {
    pre_offsets: Vec<i64>,
    post_offsets: Vec<i64>,
}

impl EpisodeShape {
    /// Offsets are relative to the crossing; `pre` ascending and negative.
    fn sample(rng: &mut ChaCha8Rng, cfg: &SynthConfig, min_bracket: i64) -> Self {
        let window = cfg.filter.time_window;
        let mut before = rng.gen_range(MIN_BRACKET_S..=MAX_BRACKET_S);
        let mut after = rng.gen_range(MIN_BRACKET_S..=MAX_BRACKET_S);
        if rng.gen::<f64>() < cfg.miss_rate {
            let long = window + rng.gen_range(60..=window.max(60));
            if rng.gen::<bool>() {
                before = long;
            } else {
                after = long;
            }
        }
        if before + after < min_bracket {
            after = min_bracket - before;
        }
        let k_pre = rng.gen_range(1..=3);
        let k_post = rng.gen_range(1..=3);
        let mut pre_offsets = vec![-before];
        for _ in 1..k_pre {
            let last = pre_offsets[pre_offsets.len() - 1];
            pre_offsets.push(last - rng.gen_range(MIN_POST_SPACING_S..=MAX_POST_SPACING_S));
        }
        pre_offsets.reverse();
        let mut post_offsets = vec![after];
        for _ in 1..k_post {
            let last = post_offsets[post_offsets.len() - 1];
            post_offsets.push(last + rng.gen_range(MIN_POST_SPACING_S..=MAX_POST_SPACING_S));
        }
        EpisodeShape {
            pre_offsets,
            post_offsets,
        }
    }

    fn len(&self) -> usize {
        self.pre_offsets.len() + self.post_offsets.len()
    }

    fn bracket(&self) -> i64 {
        self.post_offsets[0] - self.pre_offsets[self.pre_offsets.len() - 1]
    }
}

struct Episode {
    crossing: i64,
    shape: EpisodeShape,
}

/// Non-overlapping `[start, end]` intervals keyed by start.
#[derive(Default)]
struct Occupancy(BTreeMap<i64, i64>);

impl Occupancy {
    fn try_insert(&mut self, start: i64, end: i64) -> bool {
        if let Some((_, &prev_end)) = self.0.range(..=start).next_back() {
            if prev_end >= start {
                return false;
            }
        }
        if let Some((&next_start, _)) = self.0.range(start..).next() {
            if next_start <= end {
                return false;
            }
        }
        self.0.insert(start, end);
        true
    }
}

struct Sampler<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    cos_lat: f64,
    weekday_hours: WeightedIndex<f64>,
    weekend_hours: WeightedIndex<f64>,
    od: WeightedIndex<f64>,
}

impl<'a> Sampler<'a> {
    fn new(cfg: &'a SynthConfig) -> Self {
        let extent = cfg.zone_map.extent();
        let mean_lat = (extent.min_lat + extent.max_lat) / 2.0;
        let weights = |s: &[f64; 24]| WeightedIndex::new(s.iter().copied()).expect("validated schedule");
        Sampler {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            noise: (cfg.gps_noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.gps_noise_sigma).expect("finite sigma")),
            cos_lat: mean_lat.to_radians().cos().max(1e-6),
            weekday_hours: weights(&cfg.weekday_schedule),
            weekend_hours: weights(&cfg.weekend_schedule),
            od: WeightedIndex::new(cfg.od_weights.iter().flatten().copied()).expect("validated OD weights"),
        }
    }

    fn anchor(&mut self, zone_index: usize, zone: &Zone) -> Result<GeoPoint, SynthError> {
        for _ in 0..10_000 {
            let poly: &ZonePolygon = &zone.polygons[self.rng.gen_range(0..zone.polygons.len())];
            let b = crate::geometry::bbox(poly);
            let lat = self.rng.gen_range(b.min_lat..=b.max_lat);
            let lon = self.rng.gen_range(b.min_lon..=b.max_lon);
            let p = round_point(lat, lon);
            if self.cfg.zone_map.locate(p) == Some(zone_index) {
                return Ok(p);
            }
        }
        Err(SynthError::AnchorSampling(zone.zone_id.clone()))
    }

    fn clipped_normal(&mut self) -> f64 {
        let Some(dist) = self.noise else { return 0.0 };
        let limit = NOISE_CLIP * self.cfg.gps_noise_sigma;
        loop {
            let v = dist.sample(&mut self.rng);
            if v.abs() <= limit {
                return v;
            }
        }
    }

    /// Noisy copy of `anchor` that still falls in the anchor's zone.
    fn observe(&mut self, anchor: GeoPoint, zone_index: usize) -> GeoPoint {
        for _ in 0..1000 {
            let north = self.clipped_normal();
            let east = self.clipped_normal();
            let lat = anchor.lat + north / M_PER_DEG;
            let lon = anchor.lon + east / (M_PER_DEG * self.cos_lat);
            let p = round_point(lat, lon);
            if self.cfg.zone_map.locate(p) == Some(zone_index) {
                return p;
            }
        }
        anchor
    }

    /// A crossing instant drawn from the schedules, as epoch seconds.
    fn crossing_time(&mut self) -> Option<i64> {
        let day = self.cfg.start_date + Duration::days(self.rng.gen_range(0..self.cfg.days) as i64);
        let hour = if is_weekend(day.weekday()) {
            self.weekend_hours.sample(&mut self.rng)
        } else {
            self.weekday_hours.sample(&mut self.rng)
        };
        let secs = self.rng.gen_range(0..3600);
        let naive = day.and_hms_opt(hour as u32, secs / 60, secs % 60)?;
        let local = self.cfg.tz.from_local_datetime(&naive).earliest()?;
        Some(local.timestamp())
    }
}

fn round_point(lat: f64, lon: f64) -> GeoPoint {
    let r = |v: f64| (v * 1e6).round() / 1e6;
    Point {
        lat: r(lat).clamp(-90.0, 90.0),
        lon: r(lon).clamp(-180.0, 180.0),
    }
}

fn timestamp(secs: i64) -> Timestamp {
    Utc.timestamp_opt(secs, 0).single().expect("in range")
}

pub fn user_id_for(agent: usize) -> String {
    format!("u{agent:06}")
}

/// Generates a corpus. Output is fully determined by `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let mut s = Sampler::new(cfg);
    let zones = cfg.zone_map.zones();
    let n_zones = zones.len();
    let pareto = Pareto::new(cfg.tweets_per_agent.x_min, cfg.tweets_per_agent.alpha)
        .map_err(|e| SynthError::BadParameter(e.to_string()))?;
    let window = cfg.filter.time_window;
    let max_speed = cfg.filter.max_speed;

    let mut records = Vec::new();
    let mut trips = Vec::new();
    let mut agents = Vec::with_capacity(cfg.n_agents);
    let mut anomalies_injected = 0;

    for agent in 0..cfg.n_agents {
        let user_id = user_id_for(agent);
        let anchors = zones
            .iter()
            .enumerate()
            .map(|(i, z)| s.anchor(i, z))
            .collect::<Result<Vec<_>, _>>()?;

        // upper bound on any distance this agent can cover between two posts
        let max_anchor_gap = anchors
            .iter()
            .flat_map(|a| anchors.iter().map(move |b| haversine_distance(*a, *b)))
            .fold(0.0, f64::max);
        let reach = max_anchor_gap + 3.0 * NOISE_CLIP * cfg.gps_noise_sigma;
        let min_bracket = (2.0 * reach / max_speed).ceil() as i64 + 1;
        let guard = (window + 1800).max(min_bracket);

        let budget = (pareto.sample(&mut s.rng).floor() as usize).clamp(1, cfg.tweets_per_agent.max);
        let mut occupancy = Occupancy::default();
        let mut episodes = Vec::new();
        let mut planned = 0;
        let mut failures = 0;
        while planned < budget && failures < 200 {
            let shape = EpisodeShape::sample(&mut s.rng, cfg, min_bracket);
            let Some(crossing) = s.crossing_time() else {
                failures += 1;
                continue;
            };
            let first = crossing + shape.pre_offsets[0];
            let last = crossing + shape.post_offsets[shape.post_offsets.len() - 1];
            if occupancy.try_insert(first, last + guard) {
                planned += shape.len();
                episodes.push(Episode { crossing, shape });
                failures = 0;
            } else {
                failures += 1;
            }
        }
        episodes.sort_by_key(|e| e.crossing);

        let mut agent_records: Vec<TweetRecord> = Vec::with_capacity(planned * 2);
        let mut agent_trips = Vec::with_capacity(episodes.len());
        let mut agent_anomalies = 0;
        for ep in &episodes {
            let cell = s.od.sample(&mut s.rng);
            let (o, d) = (cell / n_zones, cell % n_zones);
            let mut last_pre = anchors[o];
            let mut first_post = anchors[d];
            for (k, off) in ep.shape.pre_offsets.iter().enumerate() {
                let p = s.observe(anchors[o], o);
                if k + 1 == ep.shape.pre_offsets.len() {
                    last_pre = p;
                }
                agent_records.push(post(&user_id, p, ep.crossing + off));
            }
            for (k, off) in ep.shape.post_offsets.iter().enumerate() {
                let p = s.observe(anchors[d], d);
                if k == 0 {
                    first_post = p;
                }
                agent_records.push(post(&user_id, p, ep.crossing + off));
            }
            let bracket = ep.shape.bracket();
            let gap_m = haversine_distance(last_pre, first_post);
            debug_assert!(gap_m / bracket as f64 <= max_speed);
            agent_trips.push(GroundTruthTrip {
                user_id: user_id.clone(),
                origin_zone: zones[o].zone_id.clone(),
                destination_zone: zones[d].zone_id.clone(),
                true_crossing_time: timestamp(ep.crossing),
                recoverable: bracket <= window && gap_m >= cfg.filter.min_displacement_distance,
            });
        }

        if cfg.anomaly_rate > 0.0 {
            let mut with_anomalies = Vec::with_capacity(agent_records.len() + 8);
            for r in agent_records {
                let inject = s.rng.gen::<f64>() < cfg.anomaly_rate;
                let jump = inject.then(|| {
                    let lat = if r.point.lat > 0.0 {
                        r.point.lat - ANOMALY_JUMP_DEG
                    } else {
                        r.point.lat + ANOMALY_JUMP_DEG
                    };
                    post(
                        &user_id,
                        round_point(lat, r.point.lon),
                        r.timestamp.timestamp() + ANOMALY_DELAY_S,
                    )
                });
                with_anomalies.push(r);
                if let Some(a) = jump {
                    with_anomalies.push(a);
                    agent_anomalies += 1;
                }
            }
            agent_records = with_anomalies;
        }

        let active = agent_records.len() >= cfg.filter.min_tweets;
        for t in &mut agent_trips {
            t.recoverable &= active;
        }
        agents.push(AgentSummary {
            user_id: user_id.clone(),
            records: agent_records.len(),
            anomalies: agent_anomalies,
            recoverable_trips: agent_trips.iter().filter(|t| t.recoverable).count(),
        });
        anomalies_injected += agent_anomalies;
        records.extend(agent_records);
        trips.extend(agent_trips);
    }

    records.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.user_id.cmp(&b.user_id)));
    Ok(SynthCorpus {
        records,
        trips,
        agents,
        anomalies_injected,
    })
}

fn post(user_id: &str, point: GeoPoint, secs: i64) -> TweetRecord {
    TweetRecord {
        user_id: user_id.to_string(),
        point,
        timestamp: timestamp(secs),
        text: None,
    }
}

/// A `rows` x `cols` grid of square zones named `z<row><col>`, starting at
/// the south-west corner `(south, west)`.
pub fn grid_zones(rows: usize, cols: usize, south: f64, west: f64, cell_deg: f64) -> ZoneSet {
    let zones = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| {
            let lat0 = south + r as f64 * cell_deg;
            let lon0 = west + c as f64 * cell_deg;
            let poly = ZonePolygon::from_latlon(&[
                (lat0, lon0),
                (lat0, lon0 + cell_deg),
                (lat0 + cell_deg, lon0 + cell_deg),
                (lat0 + cell_deg, lon0),
            ])
            .expect("grid cell is a valid square");
            Zone {
                zone_id: format!("z{r}{c}"),
                name: format!("zone {r},{c}"),
                polygons: vec![poly],
            }
        })
        .collect();
    ZoneSet::new(zones).expect("grid zones are distinct")
}
