//! File loaders for sensor registries, distance tables, locations and
//! duration matrices; Gaussian-kernel adjacency construction; dataset
//! bundles on disk.
//!
//! Bundle directory layout:
//!
//! ```text
//! <dir>/manifest.json              names the files below, width, unit, days
//! <dir>/graph_sensor_ids.txt       one id per line
//! <dir>/distances_<name>.csv       from,to,cost (meters)
//! <dir>/graph_sensor_locations.csv sensor_id,latitude,longitude (optional)
//! <dir>/durations.csv              sensor_id,day_index,minutes_of_day,value
//! ```

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SensorGraph;
use crate::matrix::{DurationMatrix, Unit};
use crate::types::{format_hhmm, parse_hhmm, IntervalWidth, SensorId};

pub const DEFAULT_KAPPA: f64 = 0.1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Ordered, duplicate-free list of sensor ids. Its order is the row order of
/// every matrix downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRegistry {
    ids: Vec<SensorId>,
    index: HashMap<SensorId, usize>,
}

impl SensorRegistry {
    pub fn new(ids: Vec<SensorId>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::validation("sensor registry is empty"));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate sensor id `{id}`")));
            }
        }
        Ok(SensorRegistry { ids, index })
    }

    pub fn ids(&self) -> &[SensorId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &SensorId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &SensorId) -> bool {
        self.index.contains_key(id)
    }

    fn resolve(&self, raw: &str) -> Result<(SensorId, usize)> {
        let id = SensorId::new(raw.trim())?;
        let i = self.index_of(&id).ok_or_else(|| Error::UnknownSensor(id.clone()))?;
        Ok((id, i))
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads `graph_sensor_ids.txt`: one UTF-8 id per line, blank lines ignored.
pub fn load_sensor_ids(path: impl AsRef<Path>) -> Result<SensorRegistry> {
    let path = path.as_ref();
    parse_sensor_ids(&read_to_string(path)?)
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

pub fn parse_sensor_ids(text: &str) -> Result<SensorRegistry> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut ids = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let id = line.trim();
        if id.is_empty() {
            continue;
        }
        if let Some(first) = seen.insert(id, lineno + 1) {
            return Err(Error::validation(format!(
                "duplicate sensor id `{id}` on line {} (first seen on line {first})",
                lineno + 1
            )));
        }
        ids.push(SensorId::new(id)?);
    }
    if ids.is_empty() {
        return Err(Error::validation("sensor id file contains no ids"));
    }
    SensorRegistry::new(ids)
}

pub fn write_sensor_ids(path: impl AsRef<Path>, registry: &SensorRegistry) -> Result<()> {
    let mut out = String::new();
    for id in registry.ids() {
        out.push_str(id.as_str());
        out.push('\n');
    }
    fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEntry {
    pub from: SensorId,
    pub to: SensorId,
    pub distance_meters: f64,
}

/// Directed road distances between registered sensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistanceTable {
    pub entries: Vec<DistanceEntry>,
}

#[derive(Debug, Deserialize)]
struct DistanceRow {
    from: String,
    to: String,
    cost: f64,
}

fn check_header(path: &Path, headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::validation(format!(
            "{}: expected header `{}`, found `{}`",
            path.display(),
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rdr)
}

/// Reads `distances_<name>.csv` (header `from,to,cost`, meters).
pub fn load_distances(path: impl AsRef<Path>, registry: &SensorRegistry) -> Result<DistanceTable> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_distances(file, path, registry)
}

pub fn parse_distances<R: Read>(rdr: R, path: &Path, registry: &SensorRegistry) -> Result<DistanceTable> {
    let mut rdr = csv_reader(rdr);
    check_header(path, rdr.headers().map_err(|e| Error::csv(path, e))?, &["from", "to", "cost"])?;
    let mut entries = Vec::new();
    for (i, row) in rdr.deserialize::<DistanceRow>().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let line = i + 2;
        let (from, _) = registry.resolve(&row.from).map_err(|e| at_line(path, line, e))?;
        let (to, _) = registry.resolve(&row.to).map_err(|e| at_line(path, line, e))?;
        let ok = if from == to { row.cost >= 0.0 } else { row.cost > 0.0 };
        if !ok || !row.cost.is_finite() {
            return Err(Error::validation(format!(
                "{} line {line}: distance {} from `{from}` to `{to}` must be positive",
                path.display(),
                row.cost
            )));
        }
        entries.push(DistanceEntry {
            from,
            to,
            distance_meters: row.cost,
        });
    }
    Ok(DistanceTable { entries })
}

fn at_line(path: &Path, line: usize, e: Error) -> Error {
    match e {
        Error::UnknownSensor(id) => Error::validation(format!(
            "{} line {line}: unknown sensor `{id}`",
            path.display()
        )),
        other => other,
    }
}

pub fn write_distances(path: impl AsRef<Path>, table: &DistanceTable) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["from", "to", "cost"]).map_err(|e| Error::csv(path, e))?;
    for e in &table.entries {
        w.write_record([e.from.as_str(), e.to.as_str(), &e.distance_meters.to_string()])
            .map_err(|err| Error::csv(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Thresholded Gaussian kernel over road distances.
///
/// `W[i][j] = exp(-d(i,j)^2 / sigma^2)` with `sigma` the population standard
/// deviation of every listed distance, entries below `kappa` zeroed, the
/// diagonal forced to 1 and unlisted pairs left at 0. When all distances are
/// equal `sigma` falls back to their mean.
pub fn build_adjacency(
    table: &DistanceTable,
    registry: &SensorRegistry,
    kappa: f64,
) -> Result<SensorGraph> {
    if table.entries.is_empty() {
        return Err(Error::Degenerate("distance table is empty".into()));
    }
    let n = table.entries.len() as f64;
    let mean = table.entries.iter().map(|e| e.distance_meters).sum::<f64>() / n;
    let var = table
        .entries
        .iter()
        .map(|e| (e.distance_meters - mean).powi(2))
        .sum::<f64>()
        / n;
    let mut sigma = var.sqrt();
    if sigma == 0.0 {
        sigma = mean;
    }
    if sigma == 0.0 {
        return Err(Error::Degenerate(
            "all listed distances are zero; kernel width is undefined".into(),
        ));
    }

    let size = registry.len();
    let mut w = Array2::<f64>::zeros((size, size));
    for e in &table.entries {
        let i = registry.index_of(&e.from).ok_or_else(|| Error::UnknownSensor(e.from.clone()))?;
        let j = registry.index_of(&e.to).ok_or_else(|| Error::UnknownSensor(e.to.clone()))?;
        let k = (-(e.distance_meters / sigma).powi(2)).exp();
        w[[i, j]] = if k < kappa { 0.0 } else { k };
    }
    for i in 0..size {
        w[[i, i]] = 1.0;
    }
    SensorGraph::from_adjacency(registry.ids().to_vec(), w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLocation {
    #[serde(rename = "sensor_id")]
    pub id: SensorId,
    pub latitude: f64,
    pub longitude: f64,
}

/// Reads `graph_sensor_locations.csv` (header `sensor_id,latitude,longitude`).
pub fn load_locations(path: impl AsRef<Path>, registry: &SensorRegistry) -> Result<Vec<SensorLocation>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv_reader(file);
    check_header(
        path,
        rdr.headers().map_err(|e| Error::csv(path, e))?,
        &["sensor_id", "latitude", "longitude"],
    )?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SensorLocation>().enumerate() {
        let loc = row.map_err(|e| Error::csv(path, e))?;
        let line = i + 2;
        if !registry.contains(&loc.id) {
            return Err(at_line(path, line, Error::UnknownSensor(loc.id)));
        }
        if !(-90.0..=90.0).contains(&loc.latitude) || !(-180.0..=180.0).contains(&loc.longitude) {
            return Err(Error::validation(format!(
                "{} line {line}: coordinates ({}, {}) out of range",
                path.display(),
                loc.latitude,
                loc.longitude
            )));
        }
        out.push(loc);
    }
    Ok(out)
}

pub fn write_locations(path: impl AsRef<Path>, locations: &[SensorLocation]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for loc in locations {
        w.serialize(loc).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize)]
struct LongRow {
    sensor_id: String,
    day_index: u32,
    minutes_of_day: u32,
    value: f64,
}

/// Reads the long-format matrix CSV
/// (`sensor_id,day_index,minutes_of_day,value`). Absent cells are simply not
/// listed. `num_days` defaults to one past the largest day seen.
///
/// A cell listed twice keeps the later value and logs a warning.
pub fn load_duration_matrix(
    path: impl AsRef<Path>,
    registry: &SensorRegistry,
    width: IntervalWidth,
    unit: Unit,
    num_days: Option<usize>,
) -> Result<DurationMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_duration_matrix(file, path, registry, width, unit, num_days)
}

pub fn parse_duration_matrix<R: Read>(
    rdr: R,
    path: &Path,
    registry: &SensorRegistry,
    width: IntervalWidth,
    unit: Unit,
    num_days: Option<usize>,
) -> Result<DurationMatrix> {
    let mut rdr = csv_reader(rdr);
    check_header(
        path,
        rdr.headers().map_err(|e| Error::csv(path, e))?,
        &["sensor_id", "day_index", "minutes_of_day", "value"],
    )?;
    let mut rows = Vec::new();
    for (i, row) in rdr.deserialize::<LongRow>().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let line = i + 2;
        let (_, s) = registry.resolve(&row.sensor_id).map_err(|e| at_line(path, line, e))?;
        let slot = width.slot_of(row.minutes_of_day).ok_or_else(|| {
            Error::validation(format!(
                "{} line {line}: minutes_of_day {} is not a multiple of {} below 1440",
                path.display(),
                row.minutes_of_day,
                width.minutes()
            ))
        })?;
        if !row.value.is_finite() || row.value < 0.0 {
            return Err(Error::validation(format!(
                "{} line {line}: value {} must be non-negative",
                path.display(),
                row.value
            )));
        }
        rows.push((line, s, row.day_index as usize, slot, row.value));
    }
    let seen_days = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
    let days = match num_days {
        Some(d) if d < seen_days => {
            return Err(Error::validation(format!(
                "{}: day index {} exceeds declared {d} days",
                path.display(),
                seen_days - 1
            )))
        }
        Some(d) => d,
        None => seen_days,
    };
    let mut m = DurationMatrix::empty(registry.ids().to_vec(), width, days, unit)?;
    for (line, s, d, t, v) in rows {
        if let Some(prev) = m.get(s, d, t) {
            log::warn!(
                "{} line {line}: duplicate cell ({}, day {d}, {}); replacing {prev} with {v}",
                path.display(),
                registry.ids()[s],
                format_hhmm(width.minutes_of_slot(t))
            );
        }
        m.set(s, d, t, v)?;
    }
    Ok(m)
}

/// Writes the long-format CSV. Values use the shortest representation that
/// parses back to the identical `f64`.
pub fn save_duration_matrix(path: impl AsRef<Path>, m: &DurationMatrix) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_duration_matrix(file, m).map_err(|e| Error::io(path, e))
}

pub fn write_duration_matrix<W: Write>(out: W, m: &DurationMatrix) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "sensor_id,day_index,minutes_of_day,value")?;
    for (s, id) in m.sensors().iter().enumerate() {
        let id = csv_field(id.as_str());
        for d in 0..m.num_days() {
            for (t, v) in m.row(s, d).iter().enumerate() {
                if let Some(v) = v {
                    writeln!(out, "{id},{d},{},{v}", m.width().minutes_of_slot(t))?;
                }
            }
        }
    }
    out.flush()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes the dense variant: one row per (sensor, day), one column per slot
/// headed `HH:MM`, empty fields for absent cells.
pub fn save_dense_matrix(path: impl AsRef<Path>, m: &DurationMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["sensor_id".to_string(), "day_index".to_string()];
    header.extend((0..m.slots_per_day()).map(|t| format_hhmm(m.width().minutes_of_slot(t))));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for (s, id) in m.sensors().iter().enumerate() {
        for d in 0..m.num_days() {
            let mut rec = vec![id.to_string(), d.to_string()];
            rec.extend(m.row(s, d).iter().map(|v| v.map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dense_matrix(
    path: impl AsRef<Path>,
    registry: &SensorRegistry,
    unit: Unit,
) -> Result<DurationMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv_reader(file);
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.len() < 3 || &headers[0] != "sensor_id" || &headers[1] != "day_index" {
        return Err(Error::validation(format!(
            "{}: dense matrix header must start with `sensor_id,day_index`",
            path.display()
        )));
    }
    let slots = headers.len() - 2;
    let width = IntervalWidth::new(1440 / slots as u32)?;
    for (t, h) in headers.iter().skip(2).enumerate() {
        if parse_hhmm(h)? != width.minutes_of_slot(t) {
            return Err(Error::validation(format!(
                "{}: column `{h}` out of sequence for width {}",
                path.display(),
                width.minutes()
            )));
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = i + 2;
        let (_, s) = registry.resolve(&rec[0]).map_err(|e| at_line(path, line, e))?;
        let d: usize = rec[1].parse().map_err(|_| {
            Error::validation(format!("{} line {line}: bad day index `{}`", path.display(), &rec[1]))
        })?;
        let mut vals = Vec::with_capacity(slots);
        for field in rec.iter().skip(2) {
            vals.push(if field.is_empty() {
                None
            } else {
                Some(field.parse::<f64>().map_err(|_| {
                    Error::validation(format!("{} line {line}: bad value `{field}`", path.display()))
                })?)
            });
        }
        rows.push((line, s, d, vals));
    }
    let days = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
    let mut m = DurationMatrix::empty(registry.ids().to_vec(), width, days, unit)?;
    for (line, s, d, vals) in rows {
        for (t, v) in vals.into_iter().enumerate() {
            if let Some(v) = v {
                m.set(s, d, t, v).map_err(|e| {
                    Error::validation(format!("{} line {line}: {e}", path.display()))
                })?;
            }
        }
    }
    Ok(m)
}

/// Everything a model or analysis needs, indexed consistently by the
/// registry order.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub name: String,
    pub registry: SensorRegistry,
    pub distances: DistanceTable,
    pub kappa: f64,
    pub graph: SensorGraph,
    pub matrix: DurationMatrix,
    pub locations: Option<Vec<SensorLocation>>,
}

impl DatasetBundle {
    pub fn new(
        name: impl Into<String>,
        registry: SensorRegistry,
        distances: DistanceTable,
        kappa: f64,
        matrix: DurationMatrix,
        locations: Option<Vec<SensorLocation>>,
    ) -> Result<Self> {
        let graph = build_adjacency(&distances, &registry, kappa)?;
        Ok(DatasetBundle {
            name: name.into(),
            registry,
            distances,
            kappa,
            graph,
            matrix,
            locations,
        })
    }

    /// Restriction to the first `k` registered sensors.
    pub fn head(&self, k: usize) -> Result<DatasetBundle> {
        if k == 0 || k > self.registry.len() {
            return Err(Error::validation(format!(
                "cannot take {k} of {} sensors",
                self.registry.len()
            )));
        }
        let ids = self.registry.ids()[..k].to_vec();
        let registry = SensorRegistry::new(ids.clone())?;
        let distances = DistanceTable {
            entries: self
                .distances
                .entries
                .iter()
                .filter(|e| registry.contains(&e.from) && registry.contains(&e.to))
                .cloned()
                .collect(),
        };
        Ok(DatasetBundle {
            name: format!("{}[{k}]", self.name),
            graph: self.graph.select(&ids)?,
            matrix: self.matrix.select_sensors(&ids)?,
            locations: self
                .locations
                .as_ref()
                .map(|l| l.iter().filter(|x| registry.contains(&x.id)).cloned().collect()),
            registry,
            distances,
            kappa: self.kappa,
        })
    }
}

/// On-disk description of a bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub name: String,
    pub sensor_ids: String,
    pub distances: String,
    #[serde(default)]
    pub locations: Option<String>,
    pub matrix: String,
    pub interval_width_minutes: IntervalWidth,
    pub unit: Unit,
    #[serde(default)]
    pub num_days: Option<usize>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Generator used by any synthesis pass that produced the matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<DatasetBundle> {
    let dir = dir.as_ref();
    let mpath = dir.join(MANIFEST_FILE);
    let manifest: BundleManifest = serde_json::from_str(&read_to_string(&mpath)?)
        .map_err(|e| Error::json(mpath.display().to_string(), e))?;
    let registry = load_sensor_ids(dir.join(&manifest.sensor_ids))?;
    let distances = load_distances(dir.join(&manifest.distances), &registry)?;
    let locations = manifest
        .locations
        .as_ref()
        .map(|l| load_locations(dir.join(l), &registry))
        .transpose()?;
    let matrix = load_duration_matrix(
        dir.join(&manifest.matrix),
        &registry,
        manifest.interval_width_minutes,
        manifest.unit,
        manifest.num_days,
    )?;
    DatasetBundle::new(manifest.name, registry, distances, manifest.kappa, matrix, locations)
}

/// Writes a bundle directory; returns the paths written.
pub fn save_bundle(
    dir: impl AsRef<Path>,
    bundle: &DatasetBundle,
    rng: Option<&str>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let slug: String = bundle
        .name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    let manifest = BundleManifest {
        name: bundle.name.clone(),
        sensor_ids: "graph_sensor_ids.txt".into(),
        distances: format!("distances_{slug}.csv"),
        locations: bundle.locations.as_ref().map(|_| "graph_sensor_locations.csv".into()),
        matrix: "durations.csv".into(),
        interval_width_minutes: bundle.matrix.width(),
        unit: bundle.matrix.unit(),
        num_days: Some(bundle.matrix.num_days()),
        kappa: bundle.kappa,
        rng: rng.map(str::to_string),
    };
    let mut written = Vec::new();
    let p = dir.join(&manifest.sensor_ids);
    write_sensor_ids(&p, &bundle.registry)?;
    written.push(p);
    let p = dir.join(&manifest.distances);
    write_distances(&p, &bundle.distances)?;
    written.push(p);
    if let (Some(name), Some(locs)) = (&manifest.locations, &bundle.locations) {
        let p = dir.join(name);
        write_locations(&p, locs)?;
        written.push(p);
    }
    let p = dir.join(&manifest.matrix);
    save_duration_matrix(&p, &bundle.matrix)?;
    written.push(p);
    let p = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("bundle manifest", e))?;
    fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    DimensionMismatch(String),
    OutOfRange(String),
    OrderMismatch(String),
    InvalidValue(String),
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::DimensionMismatch(m) => write!(f, "dimension mismatch: {m}"),
            Finding::OutOfRange(m) => write!(f, "out of range: {m}"),
            Finding::OrderMismatch(m) => write!(f, "order mismatch: {m}"),
            Finding::InvalidValue(m) => write!(f, "invalid value: {m}"),
        }
    }
}

/// Cross-checks registry, graph, matrix and locations. Empty means valid.
pub fn validate_bundle(b: &DatasetBundle) -> Vec<Finding> {
    let mut findings = Vec::new();
    let n = b.registry.len();
    if b.graph.num_nodes() != n {
        findings.push(Finding::DimensionMismatch(format!(
            "graph has {} nodes, registry has {n} sensors",
            b.graph.num_nodes()
        )));
    } else if b.graph.nodes() != b.registry.ids() {
        findings.push(Finding::OrderMismatch("graph node order differs from registry".into()));
    }
    let adj = b.graph.adjacency();
    if adj.dim() != (b.graph.num_nodes(), b.graph.num_nodes()) {
        findings.push(Finding::DimensionMismatch(format!(
            "adjacency is {:?} for {} nodes",
            adj.dim(),
            b.graph.num_nodes()
        )));
    }
    for ((i, j), &w) in adj.indexed_iter() {
        if !(0.0..=1.0).contains(&w) || w.is_nan() {
            findings.push(Finding::OutOfRange(format!("adjacency[{i}][{j}] = {w} not in [0, 1]")));
        }
    }
    if b.matrix.num_sensors() != n {
        findings.push(Finding::DimensionMismatch(format!(
            "matrix has {} rows, registry has {n} sensors",
            b.matrix.num_sensors()
        )));
    } else if b.matrix.sensors() != b.registry.ids() {
        findings.push(Finding::OrderMismatch("matrix row order differs from registry".into()));
    }
    if b.matrix.cells().iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        findings.push(Finding::InvalidValue("matrix contains negative or non-finite cells".into()));
    }
    if let Some(locs) = &b.locations {
        for l in locs {
            if !b.registry.contains(&l.id) {
                findings.push(Finding::DimensionMismatch(format!("location for unregistered sensor `{}`", l.id)));
            }
            if !(-90.0..=90.0).contains(&l.latitude) || !(-180.0..=180.0).contains(&l.longitude) {
                findings.push(Finding::OutOfRange(format!("location of `{}`", l.id)));
            }
        }
    }
    findings
}
