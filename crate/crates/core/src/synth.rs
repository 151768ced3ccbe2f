//! Gap filling for duration matrices.
//!
//! Two passes run in order:
//!
//! 1. **Missing days.** For every (sensor, time-of-day) column with enough
//!    observed days, each missing day is set to the mean of a random sample
//!    (without replacement) of that column's observed values.
//! 2. **Missing intervals.** Whatever is still missing is linearly
//!    interpolated from the nearest present slots earlier and later on the
//!    same sensor-day, or copied from the one side that exists.
//!
//! Sampling is driven by ChaCha8 keyed per column from
//! `(seed, sensor index, minutes_of_day)` through SplitMix64, so results do
//! not depend on the order in which columns are processed. The sampler is a
//! partial Fisher-Yates shuffle whose draws use the high 64 bits of
//! `next_u64() * remaining`.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DurationMatrix;
use crate::types::SensorId;

/// Recorded in bundle manifests written after synthesis.
pub const RNG_ALGORITHM: &str = "chacha8/splitmix64-column-keys/fisher-yates-mulhi";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sample_fraction: f64,
    pub rng_seed: u64,
    pub min_support: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sample_fraction: 0.5,
            rng_seed: 0,
            min_support: 3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::validation(format!(
                "sample fraction {} must lie in (0, 1]",
                self.sample_fraction
            )));
        }
        if self.min_support == 0 {
            return Err(Error::validation("min_support must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellTag {
    Observed,
    DaySynth,
    IntervalSynth,
    Unresolved,
}

impl CellTag {
    fn code(self) -> char {
        match self {
            CellTag::Observed => 'o',
            CellTag::DaySynth => 'd',
            CellTag::IntervalSynth => 'i',
            CellTag::Unresolved => '-',
        }
    }
}

/// Where every cell's value came from. `provenance` is laid out like
/// [`DurationMatrix::cells`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthReport {
    pub observed: usize,
    pub filled_by_day_rule: usize,
    pub filled_by_interval_rule: usize,
    pub unresolved: usize,
    pub provenance: Vec<CellTag>,
}

impl SynthReport {
    fn from_tags(provenance: Vec<CellTag>) -> Self {
        let count = |t: CellTag| provenance.iter().filter(|&&x| x == t).count();
        SynthReport {
            observed: count(CellTag::Observed),
            filled_by_day_rule: count(CellTag::DaySynth),
            filled_by_interval_rule: count(CellTag::IntervalSynth),
            unresolved: count(CellTag::Unresolved),
            provenance,
        }
    }

    pub fn total(&self) -> usize {
        self.observed + self.filled_by_day_rule + self.filled_by_interval_rule + self.unresolved
    }

    /// Layers a later pass on top: cells the later pass saw as present keep
    /// this report's tag.
    fn then(&self, later: &SynthReport) -> SynthReport {
        let tags = self
            .provenance
            .iter()
            .zip(&later.provenance)
            .map(|(&a, &b)| if b == CellTag::Observed { a } else { b })
            .collect();
        SynthReport::from_tags(tags)
    }

    /// JSON form: counts plus one tag string per sensor-day
    /// (`o` observed, `d` day rule, `i` interval rule, `-` unresolved).
    pub fn to_json(&self, m: &DurationMatrix, cfg: &SynthConfig) -> serde_json::Value {
        let per = m.slots_per_day();
        let mut rows = Vec::new();
        for (s, id) in m.sensors().iter().enumerate() {
            for d in 0..m.num_days() {
                let off = m.offset(s, d, 0);
                let tags: String = self.provenance[off..off + per].iter().map(|t| t.code()).collect();
                rows.push(serde_json::json!({ "sensor_id": id, "day_index": d, "tags": tags }));
            }
        }
        serde_json::json!({
            "config": cfg,
            "rng": RNG_ALGORITHM,
            "observed": self.observed,
            "filled_by_day_rule": self.filled_by_day_rule,
            "filled_by_interval_rule": self.filled_by_interval_rule,
            "unresolved": self.unresolved,
            "provenance": rows,
        })
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn column_rng(seed: u64, sensor: usize, minutes_of_day: u32) -> ChaCha8Rng {
    let mut st = seed;
    let mut st = splitmix64(&mut st) ^ ((sensor as u64) << 32) ^ minutes_of_day as u64;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut st).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Mean of `k` values drawn without replacement.
fn sample_mean(rng: &mut ChaCha8Rng, values: &mut [f64], k: usize) -> f64 {
    let n = values.len();
    for i in 0..k {
        let remaining = (n - i) as u128;
        let j = i + ((rng.next_u64() as u128 * remaining) >> 64) as usize;
        values.swap(i, j);
    }
    values[..k].iter().sum::<f64>() / k as f64
}

fn initial_tags(m: &DurationMatrix) -> Vec<CellTag> {
    m.cells()
        .iter()
        .map(|c| if c.is_some() { CellTag::Observed } else { CellTag::Unresolved })
        .collect()
}

/// Fills missing days column by column. Columns with fewer than
/// `min_support` observed days are left for the interval pass.
pub fn synthesize_missing_days(
    m: &DurationMatrix,
    cfg: &SynthConfig,
) -> Result<(DurationMatrix, SynthReport)> {
    cfg.validate()?;
    let slots = m.slots_per_day();
    let days = m.num_days();
    let fills: Vec<Vec<(usize, usize, f64)>> = (0..m.num_sensors())
        .into_par_iter()
        .map(|s| {
            let mut out = Vec::new();
            for t in 0..slots {
                let mut observed: Vec<f64> = (0..days).filter_map(|d| m.get(s, d, t)).collect();
                let n = observed.len();
                if n < cfg.min_support || n == days {
                    continue;
                }
                let k = ((cfg.sample_fraction * n as f64).ceil() as usize).clamp(1, n);
                let mut rng = column_rng(cfg.rng_seed, s, m.width().minutes_of_slot(t));
                for d in 0..days {
                    if m.get(s, d, t).is_none() {
                        out.push((d, t, sample_mean(&mut rng, &mut observed, k)));
                    }
                }
            }
            out
        })
        .collect();

    let mut filled = m.clone();
    let mut tags = initial_tags(m);
    for (s, cells) in fills.into_iter().enumerate() {
        for (d, t, v) in cells {
            filled.set(s, d, t, v)?;
            tags[m.offset(s, d, t)] = CellTag::DaySynth;
        }
    }
    Ok((filled, SynthReport::from_tags(tags)))
}

/// Fills remaining gaps within each sensor-day by linear interpolation in
/// time between the nearest present slots, or by copying the only present
/// neighbor side. Only cells present on entry serve as anchors.
pub fn synthesize_missing_intervals(m: &DurationMatrix) -> Result<(DurationMatrix, SynthReport)> {
    let mut filled = m.clone();
    let mut tags = initial_tags(m);
    for s in 0..m.num_sensors() {
        for d in 0..m.num_days() {
            let row = m.row(s, d);
            let present: Vec<usize> = (0..row.len()).filter(|&t| row[t].is_some()).collect();
            if present.is_empty() {
                continue;
            }
            for t in 0..row.len() {
                if row[t].is_some() {
                    continue;
                }
                let after = present.partition_point(|&p| p < t);
                let left = after.checked_sub(1).map(|i| present[i]);
                let right = present.get(after).copied();
                let v = match (left, right) {
                    (Some(a), Some(b)) => {
                        let (va, vb) = (row[a].unwrap(), row[b].unwrap());
                        va + (vb - va) * (t - a) as f64 / (b - a) as f64
                    }
                    (Some(a), None) => row[a].unwrap(),
                    (None, Some(b)) => row[b].unwrap(),
                    (None, None) => unreachable!(),
                };
                filled.set(s, d, t, v)?;
                tags[m.offset(s, d, t)] = CellTag::IntervalSynth;
            }
        }
    }
    Ok((filled, SynthReport::from_tags(tags)))
}

/// Runs the day pass then the interval pass.
///
/// Fails with [`Error::Incomplete`] naming every sensor that still has
/// unresolved cells; the partial report is logged, not returned.
pub fn fill_all(m: &DurationMatrix, cfg: &SynthConfig) -> Result<(DurationMatrix, SynthReport)> {
    let (after_days, day_report) = synthesize_missing_days(m, cfg)?;
    let (done, interval_report) = synthesize_missing_intervals(&after_days)?;
    let report = day_report.then(&interval_report);
    if report.unresolved > 0 {
        let per = m.num_days() * m.slots_per_day();
        let sensors: Vec<SensorId> = m
            .sensors()
            .iter()
            .enumerate()
            .filter(|(s, _)| report.provenance[s * per..(s + 1) * per].contains(&CellTag::Unresolved))
            .map(|(_, id)| id.clone())
            .collect();
        log::error!(
            "{} of {} cells unresolved after synthesis",
            report.unresolved,
            report.total()
        );
        return Err(Error::Incomplete { sensors });
    }
    Ok((done, report))
}
