//! GPS trip logs to duration matrix: activity-center clustering, road gap
//! completion, proportional checkpoint splitting and interval bucketing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeDelta};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DistanceEntry, DistanceTable, SensorRegistry};
use crate::matrix::{DurationMatrix, Unit};
use crate::types::{bucket_timestamp, IntervalWidth, SensorId};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const DEFAULT_EPS_M: f64 = 500.0;
pub const DEFAULT_MIN_PTS: usize = 4;

/// Great-circle distance in meters between two (lat, lon) pairs in degrees.
pub fn haversine_meters(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTripPoint {
    pub latitude: f64,
    pub longitude: f64,
    pub ts: NaiveDateTime,
    pub accuracy_meters: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub road_id: SensorId,
    #[serde(rename = "length_m")]
    pub length_meters: f64,
    pub locality: String,
}

/// A road on a trip's path; `inferred` marks roads filled in by a
/// [`RoadNetworkProvider`] rather than recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRoad {
    pub segment: RoadSegment,
    pub inferred: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub trip_id: String,
    pub start_ts: NaiveDateTime,
    pub end_ts: NaiveDateTime,
    pub points: Vec<RawTripPoint>,
    /// Road sequence; `None` marks a known gap.
    pub roads: Vec<Option<TripRoad>>,
}

impl Trip {
    pub fn new(
        trip_id: impl Into<String>,
        start_ts: NaiveDateTime,
        end_ts: NaiveDateTime,
        points: Vec<RawTripPoint>,
        roads: Vec<Option<TripRoad>>,
    ) -> Result<Self> {
        let trip_id = trip_id.into();
        if end_ts <= start_ts {
            return Err(Error::validation(format!("trip {trip_id}: end is not after start")));
        }
        if points.windows(2).any(|w| w[1].ts <= w[0].ts) {
            return Err(Error::validation(format!("trip {trip_id}: points are not strictly time-ordered")));
        }
        for p in &points {
            if !(-90.0..=90.0).contains(&p.latitude) || !(-180.0..=180.0).contains(&p.longitude) {
                return Err(Error::validation(format!(
                    "trip {trip_id}: point ({}, {}) out of range",
                    p.latitude, p.longitude
                )));
            }
        }
        for r in roads.iter().flatten() {
            if !(r.segment.length_meters > 0.0 && r.segment.length_meters.is_finite()) {
                return Err(Error::validation(format!(
                    "trip {trip_id}: road `{}` has non-positive length",
                    r.segment.road_id
                )));
            }
        }
        Ok(Trip {
            trip_id,
            start_ts,
            end_ts,
            points,
            roads,
        })
    }

    pub fn is_gap_free(&self) -> bool {
        self.roads.iter().all(Option::is_some)
    }
}

// Wire format: one JSON object per line.

#[derive(Debug, Serialize, Deserialize)]
struct PointRecord {
    lat: f64,
    lon: f64,
    ts: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    accuracy_m: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TripRecord {
    trip_id: String,
    start_ts: String,
    end_ts: String,
    #[serde(default)]
    points: Vec<PointRecord>,
    roads: Vec<Option<RoadSegment>>,
}

/// Parses ISO-8601 timestamps. Offsets are honored by taking the local wall
/// clock time they describe; naive timestamps are taken as-is.
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_local());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt);
        }
    }
    Err(Error::validation(format!("unparseable timestamp `{s}`")))
}

fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S%.f").to_string()
}

pub fn parse_trip_line(line: &str) -> Result<Trip> {
    let rec: TripRecord = serde_json::from_str(line).map_err(|e| Error::json("trip record", e))?;
    let points = rec
        .points
        .iter()
        .map(|p| {
            Ok(RawTripPoint {
                latitude: p.lat,
                longitude: p.lon,
                ts: parse_timestamp(&p.ts)?,
                accuracy_meters: p.accuracy_m,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let roads = rec
        .roads
        .into_iter()
        .map(|r| r.map(|segment| TripRoad { segment, inferred: false }))
        .collect();
    Trip::new(
        rec.trip_id,
        parse_timestamp(&rec.start_ts)?,
        parse_timestamp(&rec.end_ts)?,
        points,
        roads,
    )
}

pub fn trip_to_line(trip: &Trip) -> String {
    let rec = TripRecord {
        trip_id: trip.trip_id.clone(),
        start_ts: format_timestamp(&trip.start_ts),
        end_ts: format_timestamp(&trip.end_ts),
        points: trip
            .points
            .iter()
            .map(|p| PointRecord {
                lat: p.latitude,
                lon: p.longitude,
                ts: format_timestamp(&p.ts),
                accuracy_m: p.accuracy_meters,
            })
            .collect(),
        roads: trip.roads.iter().map(|r| r.as_ref().map(|r| r.segment.clone())).collect(),
    };
    serde_json::to_string(&rec).expect("trip record serializes")
}

/// Reads a JSON-lines trip file; blank lines are skipped.
pub fn load_trips(path: impl AsRef<Path>) -> Result<Vec<Trip>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut trips = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        trips.push(parse_trip_line(&line).map_err(|e| {
            Error::validation(format!("{} line {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(trips)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterLabel {
    Home,
    Work,
    Other,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub member_indices: Vec<usize>,
    pub centroid: (f64, f64),
    pub label: ClusterLabel,
}

fn centroid(points: &[(f64, f64)], members: &[usize]) -> (f64, f64) {
    let n = members.len() as f64;
    let (la, lo) = members
        .iter()
        .fold((0.0, 0.0), |(a, b), &i| (a + points[i].0, b + points[i].1));
    (la / n, lo / n)
}

/// DBSCAN under haversine distance.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps_meters`. Points are scanned in input order and clusters grow
/// from their lowest-index frontier point first, so the result is a pure
/// function of the input sequence. Unclustered points are returned as one
/// trailing cluster labeled [`ClusterLabel::Noise`].
pub fn dbscan_cluster(points: &[(f64, f64)], eps_meters: f64, min_pts: usize) -> Result<Vec<Cluster>> {
    if !(eps_meters > 0.0) || min_pts == 0 {
        return Err(Error::validation("DBSCAN needs eps > 0 and min_pts >= 1"));
    }
    let n = points.len();
    let region = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| haversine_meters(points[i], points[j]) <= eps_meters)
            .collect()
    };
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut members: Vec<Vec<usize>> = Vec::new();

    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = region(i);
        if nb.len() < min_pts {
            continue;
        }
        let c = members.len();
        members.push(Vec::new());
        assigned[i] = Some(c);
        let mut frontier: BTreeSet<usize> = nb.into_iter().filter(|&j| j != i).collect();
        while let Some(j) = frontier.pop_first() {
            if assigned[j].is_none() {
                assigned[j] = Some(c);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nb = region(j);
            if nb.len() >= min_pts {
                frontier.extend(nb.into_iter().filter(|&k| assigned[k].is_none() || !visited[k]));
            }
        }
    }

    for (i, a) in assigned.iter().enumerate() {
        if let Some(c) = a {
            members[*c].push(i);
        }
    }
    let mut clusters: Vec<Cluster> = members
        .into_iter()
        .map(|m| Cluster {
            centroid: centroid(points, &m),
            member_indices: m,
            label: ClusterLabel::Other,
        })
        .collect();
    let noise: Vec<usize> = (0..n).filter(|&i| assigned[i].is_none()).collect();
    if !noise.is_empty() {
        clusters.push(Cluster {
            centroid: centroid(points, &noise),
            member_indices: noise,
            label: ClusterLabel::Noise,
        });
    }
    Ok(clusters)
}

/// Labels the largest cluster home and the second largest work; ties go to
/// the lower centroid latitude, then longitude. Noise keeps its label.
pub fn label_activity_centers(mut clusters: Vec<Cluster>) -> Vec<Cluster> {
    let mut order: Vec<usize> = (0..clusters.len())
        .filter(|&i| clusters[i].label != ClusterLabel::Noise)
        .collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&clusters[a], &clusters[b]);
        cb.member_indices
            .len()
            .cmp(&ca.member_indices.len())
            .then(ca.centroid.0.total_cmp(&cb.centroid.0))
            .then(ca.centroid.1.total_cmp(&cb.centroid.1))
    });
    for (rank, &i) in order.iter().enumerate() {
        clusters[i].label = match rank {
            0 => ClusterLabel::Home,
            1 => ClusterLabel::Work,
            _ => ClusterLabel::Other,
        };
    }
    clusters
}

/// Answers route queries between two known roads with the roads strictly
/// between them.
pub trait RoadNetworkProvider: Sync {
    fn route(&self, from: &SensorId, to: &SensorId) -> Result<Vec<RoadSegment>>;
}

/// Offline provider backed by a fixed route table.
#[derive(Debug, Clone, Default)]
pub struct FixtureProvider {
    routes: HashMap<(SensorId, SensorId), Vec<RoadSegment>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureRoute {
    from: SensorId,
    to: SensorId,
    via: Vec<RoadSegment>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureFile {
    routes: Vec<FixtureRoute>,
}

impl FixtureProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_route(mut self, from: SensorId, to: SensorId, via: Vec<RoadSegment>) -> Self {
        self.routes.insert((from, to), via);
        self
    }

    /// Loads `{"routes": [{"from": .., "to": .., "via": [segment, ..]}]}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: FixtureFile =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        Ok(file
            .routes
            .into_iter()
            .fold(Self::new(), |p, r| p.with_route(r.from, r.to, r.via)))
    }
}

impl RoadNetworkProvider for FixtureProvider {
    fn route(&self, from: &SensorId, to: &SensorId) -> Result<Vec<RoadSegment>> {
        self.routes
            .get(&(from.clone(), to.clone()))
            .cloned()
            .ok_or_else(|| Error::Provider {
                from: from.clone(),
                to: to.clone(),
                reason: "no route in fixture table".into(),
            })
    }
}

/// HTTP provider: `GET <base>/route?from=<id>&to=<id>` returning a JSON list
/// of road segments. Any non-200 reply is a provider failure.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    base_url: String,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
        }
    }
}

impl RoadNetworkProvider for HttpProvider {
    fn route(&self, from: &SensorId, to: &SensorId) -> Result<Vec<RoadSegment>> {
        let fail = |reason: String| Error::Provider {
            from: from.clone(),
            to: to.clone(),
            reason,
        };
        let mut resp = ureq::get(format!("{}/route", self.base_url))
            .query("from", from.as_str())
            .query("to", to.as_str())
            .call()
            .map_err(|e| fail(e.to_string()))?;
        if resp.status() != 200 {
            return Err(fail(format!("HTTP status {}", resp.status())));
        }
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| fail(e.to_string()))?;
        serde_json::from_str(&body).map_err(|e| fail(format!("bad route body: {e}")))
    }
}

/// Replaces every gap in the road list with the provider's route between the
/// known roads on either side. Inserted roads are flagged as inferred.
pub fn complete_roads(trip: &Trip, provider: &dyn RoadNetworkProvider) -> Result<Trip> {
    if trip.is_gap_free() {
        return Ok(trip.clone());
    }
    let mut out: Vec<Option<TripRoad>> = Vec::with_capacity(trip.roads.len());
    let mut i = 0;
    while i < trip.roads.len() {
        match &trip.roads[i] {
            Some(r) => {
                out.push(Some(r.clone()));
                i += 1;
            }
            None => {
                let gap_end = (i..trip.roads.len())
                    .find(|&k| trip.roads[k].is_some())
                    .ok_or_else(|| {
                        Error::validation(format!("trip {}: trailing gap has no known road after it", trip.trip_id))
                    })?;
                let before = out.last().and_then(|r| r.as_ref()).ok_or_else(|| {
                    Error::validation(format!("trip {}: leading gap has no known road before it", trip.trip_id))
                })?;
                let from = before.segment.road_id.clone();
                let to = trip.roads[gap_end].as_ref().unwrap().segment.road_id.clone();
                let mut via = provider.route(&from, &to)?;
                // tolerate providers that echo the endpoints
                if via.first().is_some_and(|s| s.road_id == from) {
                    via.remove(0);
                }
                if via.last().is_some_and(|s| s.road_id == to) {
                    via.pop();
                }
                for seg in via {
                    if !(seg.length_meters > 0.0) {
                        return Err(Error::Provider {
                            from: from.clone(),
                            to: to.clone(),
                            reason: format!("road `{}` has non-positive length", seg.road_id),
                        });
                    }
                    out.push(Some(TripRoad { segment: seg, inferred: true }));
                }
                i = gap_end;
            }
        }
    }
    Ok(Trip {
        roads: out,
        ..trip.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub road_id: SensorId,
    pub enter_ts: NaiveDateTime,
    pub exit_ts: NaiveDateTime,
    pub duration_seconds: f64,
}

/// Splits the trip's time span across its roads in proportion to road
/// length. Boundaries are placed on cumulative length at nanosecond
/// resolution, so checkpoints are contiguous and the last one ends exactly
/// at the trip end.
pub fn generate_checkpoints(trip: &Trip) -> Result<Vec<Checkpoint>> {
    let roads: Vec<&RoadSegment> = trip
        .roads
        .iter()
        .map(|r| r.as_ref().map(|r| &r.segment))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::validation(format!("trip {} still has road gaps", trip.trip_id)))?;
    let total_len: f64 = roads.iter().map(|r| r.length_meters).sum();
    if roads.is_empty() || !(total_len > 0.0) {
        return Err(Error::Degenerate(format!("trip {} has zero total road length", trip.trip_id)));
    }
    let total_ns = (trip.end_ts - trip.start_ts)
        .num_nanoseconds()
        .ok_or_else(|| Error::validation(format!("trip {} is too long", trip.trip_id)))?;
    if total_ns <= 0 {
        return Err(Error::Degenerate(format!("trip {} has no duration", trip.trip_id)));
    }

    let mut out = Vec::with_capacity(roads.len());
    let mut cum = 0.0;
    let mut enter = trip.start_ts;
    for (k, road) in roads.iter().enumerate() {
        cum += road.length_meters;
        let exit = if k + 1 == roads.len() {
            trip.end_ts
        } else {
            let offset = (total_ns as f64 * (cum / total_len)).round() as i64;
            trip.start_ts + TimeDelta::nanoseconds(offset.min(total_ns))
        };
        let ns = (exit - enter).num_nanoseconds().unwrap_or(0);
        if ns <= 0 {
            return Err(Error::Degenerate(format!(
                "trip {}: road `{}` receives no time",
                trip.trip_id, road.road_id
            )));
        }
        out.push(Checkpoint {
            road_id: road.road_id.clone(),
            enter_ts: enter,
            exit_ts: exit,
            duration_seconds: ns as f64 / 1e9,
        });
        enter = exit;
    }
    Ok(out)
}

/// Buckets every checkpoint by its entry time and averages same-cell
/// contributions.
///
/// Trips are processed in parallel; contributions are merged in
/// (sensor, day, slot, trip, checkpoint) order so the result does not depend
/// on scheduling. `origin` defaults to the earliest trip start date.
pub fn compile_dataset(
    trips: &[Trip],
    registry: &SensorRegistry,
    width: IntervalWidth,
    origin: Option<NaiveDate>,
) -> Result<DurationMatrix> {
    let origin = origin.or_else(|| trips.iter().map(|t| t.start_ts.date()).min());
    let Some(origin) = origin else {
        return DurationMatrix::empty(registry.ids().to_vec(), width, 0, Unit::DurationSeconds);
    };
    let per_trip: Vec<Vec<(usize, u32, usize, usize, usize, f64)>> = trips
        .par_iter()
        .enumerate()
        .map(|(ti, trip)| {
            generate_checkpoints(trip)?
                .into_iter()
                .enumerate()
                .map(|(ci, cp)| {
                    let s = registry
                        .index_of(&cp.road_id)
                        .ok_or_else(|| Error::UnknownSensor(cp.road_id.clone()))?;
                    let b = bucket_timestamp(cp.enter_ts, origin, width)?;
                    let slot = width.slot_of(b.minutes_of_day).expect("bucketed minute is a slot");
                    Ok((s, b.day_index, slot, ti, ci, cp.duration_seconds))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut contributions: Vec<_> = per_trip.into_iter().flatten().collect();
    contributions.sort_by_key(|a| (a.0, a.1, a.2, a.3, a.4));

    let num_days = contributions.iter().map(|c| c.1 as usize + 1).max().unwrap_or(0);
    let mut m = DurationMatrix::empty(registry.ids().to_vec(), width, num_days, Unit::DurationSeconds)?;
    let mut i = 0;
    while i < contributions.len() {
        let key = (contributions[i].0, contributions[i].1, contributions[i].2);
        let mut sum = 0.0;
        let mut n = 0usize;
        while i < contributions.len() && (contributions[i].0, contributions[i].1, contributions[i].2) == key {
            sum += contributions[i].5;
            n += 1;
            i += 1;
        }
        m.set(key.0, key.1 as usize, key.2, sum / n as f64)?;
    }
    Ok(m)
}

/// Road-to-road distances implied by consecutive roads on completed trips:
/// half of each road's length, i.e. midpoint to midpoint. The shortest
/// observation per ordered pair wins and both directions are emitted.
pub fn derive_distances(trips: &[Trip]) -> DistanceTable {
    let mut best: BTreeMap<(SensorId, SensorId), f64> = BTreeMap::new();
    for trip in trips {
        let segs: Vec<&RoadSegment> = trip.roads.iter().flatten().map(|r| &r.segment).collect();
        for w in segs.windows(2) {
            if w[0].road_id == w[1].road_id {
                continue;
            }
            let d = (w[0].length_meters + w[1].length_meters) / 2.0;
            for key in [
                (w[0].road_id.clone(), w[1].road_id.clone()),
                (w[1].road_id.clone(), w[0].road_id.clone()),
            ] {
                let e = best.entry(key).or_insert(d);
                *e = e.min(d);
            }
        }
    }
    DistanceTable {
        entries: best
            .into_iter()
            .map(|((from, to), distance_meters)| DistanceEntry {
                from,
                to,
                distance_meters,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityCoverage {
    pub locality: String,
    pub records: usize,
    pub percentage: f64,
}

/// Present-cell counts per locality, as a share of all present cells
/// (rounded to two decimals). Sensors without a locality count towards the
/// total but get no row. Rows are sorted by record count, descending.
pub fn locality_coverage(
    m: &DurationMatrix,
    locality_of: &HashMap<SensorId, String>,
) -> Vec<LocalityCoverage> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total = 0usize;
    for (s, id) in m.sensors().iter().enumerate() {
        let c = m.sensor_present_count(s);
        total += c;
        if let Some(loc) = locality_of.get(id) {
            *counts.entry(loc.as_str()).or_default() += c;
        }
    }
    if total == 0 {
        return Vec::new();
    }
    let mut rows: Vec<LocalityCoverage> = counts
        .into_iter()
        .map(|(loc, records)| LocalityCoverage {
            locality: loc.to_string(),
            records,
            percentage: (records as f64 / total as f64 * 10_000.0).round() / 100.0,
        })
        .collect();
    rows.sort_by(|a, b| b.records.cmp(&a.records).then_with(|| a.locality.cmp(&b.locality)));
    rows
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig {
    pub eps_meters: f64,
    pub min_pts: usize,
    pub width: IntervalWidth,
    pub origin: Option<NaiveDate>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            eps_meters: DEFAULT_EPS_M,
            min_pts: DEFAULT_MIN_PTS,
            width: IntervalWidth::FIVE_MINUTES,
            origin: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub trips: Vec<Trip>,
    pub clusters: Vec<Cluster>,
    pub matrix: DurationMatrix,
    pub distances: DistanceTable,
    pub locality_of: HashMap<SensorId, String>,
}

/// Whole trip-to-matrix pipeline.
pub fn run_pipeline(
    trips: &[Trip],
    registry: &SensorRegistry,
    provider: &dyn RoadNetworkProvider,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let points: Vec<(f64, f64)> = trips
        .iter()
        .flat_map(|t| t.points.iter().map(|p| (p.latitude, p.longitude)))
        .collect();
    let clusters = label_activity_centers(dbscan_cluster(&points, cfg.eps_meters, cfg.min_pts)?);
    let completed: Vec<Trip> = trips
        .par_iter()
        .map(|t| complete_roads(t, provider))
        .collect::<Result<_>>()?;
    let matrix = compile_dataset(&completed, registry, cfg.width, cfg.origin)?;
    let distances = derive_distances(&completed);
    let mut locality_of = HashMap::new();
    for seg in completed.iter().flat_map(|t| t.roads.iter().flatten()) {
        locality_of
            .entry(seg.segment.road_id.clone())
            .or_insert_with(|| seg.segment.locality.clone());
    }
    Ok(PipelineOutput {
        trips: completed,
        clusters,
        matrix,
        distances,
        locality_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(h: u32, m: u32, s: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2021, 9, 1).unwrap().and_hms_opt(h, m, s).unwrap()
    }

    fn seg(id: &str, len: f64) -> RoadSegment {
        RoadSegment {
            road_id: SensorId::new(id).unwrap(),
            length_meters: len,
            locality: "Marsa".into(),
        }
    }

    fn road(id: &str, len: f64) -> Option<TripRoad> {
        Some(TripRoad { segment: seg(id, len), inferred: false })
    }

    #[test]
    fn haversine_basics() {
        assert_eq!(haversine_meters((35.9, 14.5), (35.9, 14.5)), 0.0);
        let d = haversine_meters((0.0, 0.0), (1.0, 0.0));
        assert!((d - 6_371_000.0 * std::f64::consts::PI / 180.0).abs() < 1e-6);
        assert!((d - 111_195.0).abs() < 1.0);
    }

    proptest! {
        #[test]
        fn haversine_symmetric(a in -90.0f64..90.0, b in -180.0f64..180.0, c in -90.0f64..90.0, d in -180.0f64..180.0) {
            let x = haversine_meters((a, b), (c, d));
            let y = haversine_meters((c, d), (a, b));
            prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0));
            prop_assert!(x >= 0.0);
        }
    }

    /// Offsets (north, east) in meters around a base point.
    fn offset(base: (f64, f64), north: f64, east: f64) -> (f64, f64) {
        let dlat = north / 111_195.0;
        let dlon = east / (111_195.0 * base.0.to_radians().cos());
        (base.0 + dlat, base.1 + dlon)
    }

    #[test]
    fn dbscan_single_tight_group() {
        let base = (35.88, 14.50);
        let pts: Vec<_> = (0..5).map(|i| offset(base, 10.0 * i as f64, 5.0)).collect();
        let c = dbscan_cluster(&pts, 500.0, 4).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].member_indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(c[0].label, ClusterLabel::Other);
    }

    #[test]
    fn dbscan_sparse_points_are_noise() {
        let base = (35.88, 14.50);
        let pts = vec![base, offset(base, 10_000.0, 0.0), offset(base, 0.0, 10_000.0)];
        let c = dbscan_cluster(&pts, 500.0, 4).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].label, ClusterLabel::Noise);
        assert_eq!(c[0].member_indices, vec![0, 1, 2]);
        assert!(dbscan_cluster(&[], 500.0, 4).unwrap().is_empty());
        assert!(dbscan_cluster(&pts, 0.0, 4).is_err());
    }

    #[test]
    fn labels_by_size_then_latitude() {
        let mk = |n: usize, lat: f64| Cluster {
            member_indices: (0..n).collect(),
            centroid: (lat, 14.0),
            label: ClusterLabel::Other,
        };
        let l = label_activity_centers(vec![mk(2, 1.0), mk(10, 2.0), mk(7, 3.0)]);
        assert_eq!(l[1].label, ClusterLabel::Home);
        assert_eq!(l[2].label, ClusterLabel::Work);
        assert_eq!(l[0].label, ClusterLabel::Other);

        let l = label_activity_centers(vec![mk(4, 1.0)]);
        assert_eq!(l[0].label, ClusterLabel::Home);

        let l = label_activity_centers(vec![mk(5, 35.9), mk(5, 35.8)]);
        assert_eq!(l[1].label, ClusterLabel::Home);
        assert_eq!(l[0].label, ClusterLabel::Work);
    }

    fn trip(roads: Vec<Option<TripRoad>>, start: NaiveDateTime, end: NaiveDateTime) -> Trip {
        Trip::new("t", start, end, vec![], roads).unwrap()
    }

    #[test]
    fn complete_roads_fills_gap() {
        let provider = FixtureProvider::new().with_route(
            SensorId::new("A").unwrap(),
            SensorId::new("C").unwrap(),
            vec![seg("B", 300.0)],
        );
        let t = trip(vec![road("A", 100.0), None, road("C", 200.0)], ts(7, 0, 0), ts(7, 10, 0));
        let done = complete_roads(&t, &provider).unwrap();
        let ids: Vec<(&str, bool)> = done
            .roads
            .iter()
            .map(|r| {
                let r = r.as_ref().unwrap();
                (r.segment.road_id.as_str(), r.inferred)
            })
            .collect();
        assert_eq!(ids, vec![("A", false), ("B", true), ("C", false)]);

        let gap_free = trip(vec![road("A", 100.0), road("C", 200.0)], ts(7, 0, 0), ts(7, 10, 0));
        assert_eq!(complete_roads(&gap_free, &FixtureProvider::new()).unwrap(), gap_free);
    }

    #[test]
    fn complete_roads_reports_unroutable_pair() {
        let t = trip(vec![road("A", 100.0), None, road("C", 200.0)], ts(7, 0, 0), ts(7, 10, 0));
        match complete_roads(&t, &FixtureProvider::new()) {
            Err(Error::Provider { from, to, .. }) => {
                assert_eq!((from.as_str(), to.as_str()), ("A", "C"));
            }
            other => panic!("expected provider error, got {other:?}"),
        }
    }

    #[test]
    fn checkpoints_split_proportionally() {
        let t = trip(vec![road("A", 600.0), road("B", 400.0)], ts(10, 0, 0), ts(10, 10, 0));
        let cps = generate_checkpoints(&t).unwrap();
        assert_eq!(cps[0].exit_ts, ts(10, 6, 0));
        assert_eq!(cps[1].enter_ts, ts(10, 6, 0));
        assert_eq!(cps[0].duration_seconds, 360.0);
        assert_eq!(cps[1].duration_seconds, 240.0);

        let t = trip(vec![road("A", 5.0)], ts(10, 0, 0), ts(10, 10, 0));
        let cps = generate_checkpoints(&t).unwrap();
        assert_eq!(cps.len(), 1);
        assert_eq!((cps[0].enter_ts, cps[0].exit_ts), (ts(10, 0, 0), ts(10, 10, 0)));

        let t = trip(vec![road("A", 1.0), road("B", 1.0), road("C", 1.0)], ts(10, 0, 0), ts(10, 9, 0));
        let d: Vec<f64> = generate_checkpoints(&t).unwrap().iter().map(|c| c.duration_seconds).collect();
        assert_eq!(d, vec![180.0, 180.0, 180.0]);
    }

    #[test]
    fn checkpoints_reject_gaps() {
        let t = trip(vec![road("A", 1.0), None, road("B", 1.0)], ts(10, 0, 0), ts(10, 9, 0));
        assert!(generate_checkpoints(&t).is_err());
        let t = trip(vec![], ts(10, 0, 0), ts(10, 9, 0));
        assert!(matches!(generate_checkpoints(&t), Err(Error::Degenerate(_))));
    }

    proptest! {
        #[test]
        fn checkpoints_conserve_duration(
            lens in prop::collection::vec(1.0f64..2000.0, 1..12),
            secs in 60i64..7200,
        ) {
            let roads = lens.iter().enumerate().map(|(i, l)| road(&format!("r{i}"), *l)).collect();
            let start = ts(8, 0, 0);
            let t = trip(roads, start, start + TimeDelta::seconds(secs));
            let cps = generate_checkpoints(&t).unwrap();
            prop_assert_eq!(cps[0].enter_ts, t.start_ts);
            prop_assert_eq!(cps.last().unwrap().exit_ts, t.end_ts);
            let mut total = TimeDelta::zero();
            for w in cps.windows(2) {
                prop_assert_eq!(w[0].exit_ts, w[1].enter_ts);
            }
            for c in &cps {
                prop_assert!(c.exit_ts > c.enter_ts);
                total += c.exit_ts - c.enter_ts;
            }
            prop_assert_eq!(total, t.end_ts - t.start_ts);
            let s: f64 = cps.iter().map(|c| c.duration_seconds).sum();
            prop_assert!((s - secs as f64).abs() < 1e-6);
        }
    }

    fn registry(ids: &[&str]) -> SensorRegistry {
        SensorRegistry::new(ids.iter().map(|i| SensorId::new(*i).unwrap()).collect()).unwrap()
    }

    #[test]
    fn compile_single_checkpoint() {
        let start = ts(7, 45, 0);
        let end = start + TimeDelta::milliseconds(115_370);
        let t = trip(vec![road("A", 100.0)], start, end);
        let m = compile_dataset(&[t], &registry(&["A"]), IntervalWidth::FIVE_MINUTES, None).unwrap();
        assert_eq!(m.get(0, 0, 93), Some(115.37));
    }

    #[test]
    fn compile_averages_same_cell() {
        let a = trip(vec![road("A", 100.0)], ts(7, 45, 0), ts(7, 46, 40));
        let b = trip(vec![road("A", 100.0)], ts(7, 46, 0), ts(7, 48, 0));
        let m = compile_dataset(&[a, b], &registry(&["A"]), IntervalWidth::FIVE_MINUTES, None).unwrap();
        assert_eq!(m.get(0, 0, 93), Some(110.0));
        let empty = compile_dataset(&[], &registry(&["A"]), IntervalWidth::FIVE_MINUTES, None).unwrap();
        assert_eq!(empty.completeness(), 0.0);
    }

    #[test]
    fn compile_rejects_unknown_road() {
        let a = trip(vec![road("Q", 100.0)], ts(7, 45, 0), ts(7, 46, 40));
        assert!(matches!(
            compile_dataset(&[a], &registry(&["A"]), IntervalWidth::FIVE_MINUTES, None),
            Err(Error::UnknownSensor(_))
        ));
    }

    #[test]
    fn coverage_percentages() {
        let ids = registry(&["r1", "r2", "r3"]);
        let mut m = DurationMatrix::empty(ids.ids().to_vec(), IntervalWidth::FIVE_MINUTES, 1, Unit::DurationSeconds).unwrap();
        for t in 0..3 {
            m.set(0, 0, t, 1.0).unwrap();
        }
        m.set(1, 0, 0, 1.0).unwrap();
        let mut map = HashMap::new();
        map.insert(ids.ids()[0].clone(), "Marsa".to_string());
        map.insert(ids.ids()[1].clone(), "Msida".to_string());
        map.insert(ids.ids()[2].clone(), "Msida".to_string());
        let rows = locality_coverage(&m, &map);
        assert_eq!(rows[0].locality, "Marsa");
        assert_eq!(rows[0].percentage, 75.0);
        assert_eq!(rows[1].percentage, 25.0);
        let empty = DurationMatrix::empty(ids.ids().to_vec(), IntervalWidth::FIVE_MINUTES, 1, Unit::DurationSeconds).unwrap();
        assert!(locality_coverage(&empty, &map).is_empty());
    }

    #[test]
    fn trip_json_lines() {
        let line = r#"{"trip_id":"t1","start_ts":"2021-09-01T07:45:00+02:00","end_ts":"2021-09-01T07:55:00+02:00",
            "points":[{"lat":35.88,"lon":14.5,"ts":"2021-09-01T07:45:00+02:00"}],
            "roads":[{"road_id":"A","length_m":600,"locality":"Marsa"},null,{"road_id":"C","length_m":400,"locality":"Marsa"}]}"#
            .replace('\n', "");
        let t = parse_trip_line(&line).unwrap();
        assert_eq!(t.start_ts, ts(7, 45, 0));
        assert_eq!(t.roads.len(), 3);
        assert!(t.roads[1].is_none());
        assert_eq!(parse_trip_line(&trip_to_line(&t)).unwrap(), t);
        assert!(parse_trip_line(r#"{"trip_id":"x","start_ts":"2021-09-01T08:00:00","end_ts":"2021-09-01T07:00:00","roads":[]}"#).is_err());
    }
}
