//! The node-duration matrix: sensors x days x time-of-day slots, with
//! missing cells kept explicit.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{IntervalWidth, SensorId};

/// What the cell values measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    #[default]
    DurationSeconds,
    SpeedKmh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DurationMatrix {
    sensors: Vec<SensorId>,
    index: HashMap<SensorId, usize>,
    width: IntervalWidth,
    num_days: usize,
    unit: Unit,
    cells: Vec<Option<f64>>,
}

impl DurationMatrix {
    /// An all-absent matrix.
    pub fn empty(
        sensors: Vec<SensorId>,
        width: IntervalWidth,
        num_days: usize,
        unit: Unit,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(sensors.len());
        for (i, s) in sensors.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate sensor `{s}` in matrix index")));
            }
        }
        let len = sensors.len() * num_days * width.slots_per_day();
        Ok(DurationMatrix {
            sensors,
            index,
            width,
            num_days,
            unit,
            cells: vec![None; len],
        })
    }

    pub fn sensors(&self) -> &[SensorId] {
        &self.sensors
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn num_days(&self) -> usize {
        self.num_days
    }

    pub fn width(&self) -> IntervalWidth {
        self.width
    }

    pub fn slots_per_day(&self) -> usize {
        self.width.slots_per_day()
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn total_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn sensor_index(&self, sensor: &SensorId) -> Result<usize> {
        self.index
            .get(sensor)
            .copied()
            .ok_or_else(|| Error::UnknownSensor(sensor.clone()))
    }

    #[inline]
    pub fn offset(&self, sensor: usize, day: usize, slot: usize) -> usize {
        debug_assert!(sensor < self.sensors.len() && day < self.num_days && slot < self.slots_per_day());
        (sensor * self.num_days + day) * self.slots_per_day() + slot
    }

    #[inline]
    pub fn get(&self, sensor: usize, day: usize, slot: usize) -> Option<f64> {
        self.cells[self.offset(sensor, day, slot)]
    }

    /// Stores a cell value; values must be finite and non-negative.
    pub fn set(&mut self, sensor: usize, day: usize, slot: usize, value: f64) -> Result<()> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::validation(format!(
                "cell value {value} for sensor `{}` must be finite and non-negative",
                self.sensors[sensor]
            )));
        }
        let off = self.offset(sensor, day, slot);
        self.cells[off] = Some(value);
        Ok(())
    }

    pub fn clear(&mut self, sensor: usize, day: usize, slot: usize) {
        let off = self.offset(sensor, day, slot);
        self.cells[off] = None;
    }

    /// Raw cell storage in (sensor, day, slot) row-major order.
    pub fn cells(&self) -> &[Option<f64>] {
        &self.cells
    }

    /// All slots of one sensor-day.
    pub fn row(&self, sensor: usize, day: usize) -> &[Option<f64>] {
        let start = self.offset(sensor, day, 0);
        &self.cells[start..start + self.slots_per_day()]
    }

    pub fn present_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn sensor_present_count(&self, sensor: usize) -> usize {
        let per = self.num_days * self.slots_per_day();
        self.cells[sensor * per..(sensor + 1) * per]
            .iter()
            .filter(|c| c.is_some())
            .count()
    }

    /// Fraction of grid cells holding a value; an empty grid counts as 0.
    pub fn completeness(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.present_count() as f64 / self.cells.len() as f64
    }

    /// Every day's value for one sensor at one time of day, in day order.
    pub fn slice_interval(
        &self,
        sensor: &SensorId,
        minutes_of_day: u32,
    ) -> Result<Vec<(usize, Option<f64>)>> {
        let s = self.sensor_index(sensor)?;
        let slot = self.width.slot_of(minutes_of_day).ok_or_else(|| {
            Error::validation(format!(
                "{minutes_of_day} is not a bucket boundary for width {}",
                self.width.minutes()
            ))
        })?;
        Ok((0..self.num_days).map(|d| (d, self.get(s, d, slot))).collect())
    }

    /// A copy restricted to the given sensors, in the given order.
    pub fn select_sensors(&self, sensors: &[SensorId]) -> Result<DurationMatrix> {
        let mut out = DurationMatrix::empty(sensors.to_vec(), self.width, self.num_days, self.unit)?;
        for (new_i, s) in sensors.iter().enumerate() {
            let old_i = self.sensor_index(s)?;
            for d in 0..self.num_days {
                let src = self.offset(old_i, d, 0);
                let dst = out.offset(new_i, d, 0);
                let n = self.slots_per_day();
                out.cells[dst..dst + n].copy_from_slice(&self.cells[src..src + n]);
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`DurationMatrix::slice_interval`].
pub fn slice_interval(
    m: &DurationMatrix,
    sensor: &SensorId,
    minutes_of_day: u32,
) -> Result<Vec<(usize, Option<f64>)>> {
    m.slice_interval(sensor, minutes_of_day)
}

/// Free-function form of [`DurationMatrix::completeness`].
pub fn completeness(m: &DurationMatrix) -> f64 {
    m.completeness()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(names: &[&str]) -> Vec<SensorId> {
        names.iter().map(|n| SensorId::new(*n).unwrap()).collect()
    }

    #[test]
    fn constant_matrix_slices() {
        let w = IntervalWidth::FIVE_MINUTES;
        let mut m = DurationMatrix::empty(ids(&["A", "B"]), w, 3, Unit::DurationSeconds).unwrap();
        for s in 0..2 {
            for d in 0..3 {
                for t in 0..w.slots_per_day() {
                    m.set(s, d, t, 7.0).unwrap();
                }
            }
        }
        let a = SensorId::new("A").unwrap();
        assert_eq!(
            m.slice_interval(&a, 430).unwrap(),
            vec![(0, Some(7.0)), (1, Some(7.0)), (2, Some(7.0))]
        );
        assert_eq!(m.completeness(), 1.0);
    }

    #[test]
    fn slice_preserves_absences() {
        let w = IntervalWidth::FIVE_MINUTES;
        let mut m = DurationMatrix::empty(ids(&["A"]), w, 200, Unit::DurationSeconds).unwrap();
        let slot = w.slot_of(430).unwrap();
        for d in (0..200).filter(|&d| d != 13) {
            m.set(0, d, slot, 60.0 + d as f64).unwrap();
        }
        let slice = m.slice_interval(&SensorId::new("A").unwrap(), 430).unwrap();
        assert_eq!(slice.len(), 200);
        let absent: Vec<usize> = slice.iter().filter(|(_, v)| v.is_none()).map(|(d, _)| *d).collect();
        assert_eq!(absent, vec![13]);
    }

    #[test]
    fn slice_errors() {
        let m = DurationMatrix::empty(ids(&["A"]), IntervalWidth::FIVE_MINUTES, 1, Unit::DurationSeconds)
            .unwrap();
        let err = m.slice_interval(&SensorId::new("Z").unwrap(), 430).unwrap_err();
        assert!(err.to_string().contains('Z'));
        assert!(m.slice_interval(&SensorId::new("A").unwrap(), 431).is_err());
    }

    #[test]
    fn completeness_counts() {
        let w = IntervalWidth::FIVE_MINUTES;
        let names: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let sensors: Vec<SensorId> = names.iter().map(|n| SensorId::new(n.as_str()).unwrap()).collect();
        let mut m = DurationMatrix::empty(sensors, w, 10, Unit::DurationSeconds).unwrap();
        assert_eq!(m.completeness(), 0.0);
        for s in 0..10 {
            for d in 0..10 {
                for t in 0..288 {
                    if !(s == 3 && d == 4) {
                        m.set(s, d, t, 1.0).unwrap();
                    }
                }
            }
        }
        assert!((m.completeness() - 0.99).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_values() {
        let mut m = DurationMatrix::empty(ids(&["A"]), IntervalWidth::FIVE_MINUTES, 1, Unit::DurationSeconds)
            .unwrap();
        assert!(m.set(0, 0, 0, -1.0).is_err());
        assert!(m.set(0, 0, 0, f64::NAN).is_err());
    }
}
