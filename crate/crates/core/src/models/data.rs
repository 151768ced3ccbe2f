//! Dense day-by-slot series, chronological splits, windows and scaling.

use std::ops::Range;

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DatasetBundle, DistanceEntry, DistanceTable, SensorRegistry, DEFAULT_KAPPA};
use crate::matrix::{DurationMatrix, Unit};
use crate::models::layers::random_walk_matrices;
use crate::types::{IntervalWidth, SensorId};

/// A complete matrix as a `(days, slots, sensors)` array.
#[derive(Debug, Clone)]
pub struct DenseSeries {
    pub sensors: Vec<SensorId>,
    pub values: Array3<f64>,
}

impl DenseSeries {
    pub fn from_matrix(m: &DurationMatrix) -> Result<Self> {
        let incomplete: Vec<SensorId> = (0..m.num_sensors())
            .filter(|&s| m.sensor_present_count(s) < m.num_days() * m.slots_per_day())
            .map(|s| m.sensors()[s].clone())
            .collect();
        if !incomplete.is_empty() {
            return Err(Error::Incomplete { sensors: incomplete });
        }
        let values = Array3::from_shape_fn((m.num_days(), m.slots_per_day(), m.num_sensors()), |(d, t, s)| {
            m.get(s, d, t).expect("checked complete")
        });
        Ok(DenseSeries {
            sensors: m.sensors().to_vec(),
            values,
        })
    }

    pub fn num_days(&self) -> usize {
        self.values.dim().0
    }

    pub fn slots_per_day(&self) -> usize {
        self.values.dim().1
    }

    pub fn num_sensors(&self) -> usize {
        self.values.dim().2
    }

    /// `len x N` block of one day starting at `slot`.
    pub fn block(&self, day: usize, slot: usize, len: usize) -> Array2<f64> {
        Array2::from_shape_fn((len, self.num_sensors()), |(t, n)| self.values[[day, slot + t, n]])
    }
}

/// Chronological day ranges for training, validation and testing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaySplit {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl DaySplit {
    /// `floor(a * D)` training days, `floor(b * D)` validation days, the
    /// rest for testing. Every part must get at least one day.
    pub fn new(num_days: usize, split: (f64, f64, f64)) -> Result<Self> {
        let train = (split.0 * num_days as f64 + 1e-9).floor() as usize;
        let val = (split.1 * num_days as f64 + 1e-9).floor() as usize;
        if train == 0 || val == 0 || train + val >= num_days {
            return Err(Error::validation(format!(
                "{num_days} days cannot be split {:?} with at least one day per part",
                split
            )));
        }
        Ok(DaySplit {
            train: 0..train,
            val: train..train + val,
            test: train + val..num_days,
        })
    }
}

/// A forecasting window: `history` slots from `start`, then `horizon` slots
/// to predict, all within one day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub day: usize,
    pub start: usize,
}

pub fn windows(days: Range<usize>, slots_per_day: usize, history: usize, horizon: usize) -> Result<Vec<Window>> {
    if slots_per_day < history + horizon {
        return Err(Error::validation(format!(
            "a day of {slots_per_day} slots cannot hold {history} history plus {horizon} horizon steps"
        )));
    }
    Ok(days
        .flat_map(|day| (0..=slots_per_day - history - horizon).map(move |start| Window { day, start }))
        .collect())
}

/// Z-score scaling shared by all sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    /// Population statistics of the given days; a zero spread becomes 1.
    pub fn fit(series: &DenseSeries, days: Range<usize>) -> Self {
        let vals: Vec<f64> = days
            .flat_map(|d| series.values.index_axis(ndarray::Axis(0), d).iter().copied().collect::<Vec<_>>())
            .collect();
        let n = vals.len().max(1) as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Normalizer {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        }
    }

    pub fn transform(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Node-major frames for a batch: frame `t` has row `n * B + b` equal to
/// sensor `n` at slot `start_b + offset + t` of window `b`.
pub fn batch_frames(
    series: &DenseSeries,
    batch: &[Window],
    offset: usize,
    len: usize,
    norm: &Normalizer,
) -> Vec<Array2<f64>> {
    let b = batch.len();
    let n = series.num_sensors();
    (0..len)
        .map(|t| {
            Array2::from_shape_fn((n * b, 1), |(r, _)| {
                let w = batch[r % b];
                norm.transform(series.values[[w.day, w.start + offset + t, r / b]])
            })
        })
        .collect()
}

pub const TOY_SENSORS: usize = 4;
pub const TOY_WIDTH_MINUTES: u32 = 18;
pub const TOY_DAYS: usize = 25;

/// Four sensors on a path with a periodic signal plus graph-coupled noise:
/// `50 + 10 sin(2 pi t / 37 + 0.8 i) + 2 z_i(t)` with
/// `z(t+1) = 0.7 P z(t) + e(t)`, `P` the forward random-walk matrix and
/// `e` standard normal. 80 slots of 18 minutes over 25 days, 2000 steps.
pub fn toy_dataset(seed: u64) -> Result<DatasetBundle> {
    let ids: Vec<SensorId> = (0..TOY_SENSORS).map(|i| SensorId::new(format!("toy{i}"))).collect::<Result<_>>()?;
    let registry = SensorRegistry::new(ids.clone())?;
    let mut entries = Vec::new();
    for (a, b, d) in [(0, 1, 1000.0), (1, 2, 1000.0), (2, 3, 1000.0), (0, 2, 2500.0), (1, 3, 2500.0)] {
        for (x, y) in [(a, b), (b, a)] {
            entries.push(DistanceEntry {
                from: ids[x].clone(),
                to: ids[y].clone(),
                distance_meters: d,
            });
        }
    }
    let distances = DistanceTable { entries };
    let width = IntervalWidth::new(TOY_WIDTH_MINUTES)?;
    let mut m = DurationMatrix::empty(ids.clone(), width, TOY_DAYS, Unit::SpeedKmh)?;
    let graph = crate::ingest::build_adjacency(&distances, &registry, DEFAULT_KAPPA)?;
    let (p, _) = random_walk_matrices(graph.adjacency())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = m.slots_per_day();
    let mut z = vec![0.0; TOY_SENSORS];
    for t in 0..TOY_DAYS * slots {
        for (i, zi) in z.iter().enumerate() {
            let phase = 2.0 * std::f64::consts::PI * t as f64 / 37.0 + 0.8 * i as f64;
            m.set(i, t / slots, t % slots, 50.0 + 10.0 * phase.sin() + 2.0 * zi)?;
        }
        let next: Vec<f64> = (0..TOY_SENSORS)
            .map(|i| {
                let coupled: f64 = (0..TOY_SENSORS).map(|j| p[[i, j]] * z[j]).sum();
                let e: f64 = StandardNormal.sample(&mut rng);
                0.7 * coupled + e
            })
            .collect();
        z = next;
    }
    DatasetBundle::new("toy", registry, distances, DEFAULT_KAPPA, m, None)
}
