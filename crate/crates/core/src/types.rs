//! Identifiers and time bucketing shared by every other module.

use std::fmt;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 1440;

/// Opaque sensor identifier: a road name, road id or locality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SensorId(String);

impl SensorId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::validation("sensor id must be non-empty"));
        }
        Ok(SensorId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for SensorId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        SensorId::new(value)
    }
}

impl From<SensorId> for String {
    fn from(id: SensorId) -> String {
        id.0
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Width of one time bucket in minutes. Always divides a day evenly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct IntervalWidth(u32);

impl IntervalWidth {
    pub const FIVE_MINUTES: IntervalWidth = IntervalWidth(5);

    pub fn new(minutes: u32) -> Result<Self> {
        if minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(minutes) {
            return Err(Error::validation(format!(
                "interval width {minutes} does not divide a day of {MINUTES_PER_DAY} minutes"
            )));
        }
        Ok(IntervalWidth(minutes))
    }

    pub fn minutes(self) -> u32 {
        self.0
    }

    pub fn slots_per_day(self) -> usize {
        (MINUTES_PER_DAY / self.0) as usize
    }

    /// Slot index of a minute-of-day value, if it sits on a bucket boundary.
    pub fn slot_of(self, minutes_of_day: u32) -> Option<usize> {
        (minutes_of_day < MINUTES_PER_DAY && minutes_of_day.is_multiple_of(self.0))
            .then(|| (minutes_of_day / self.0) as usize)
    }

    pub fn minutes_of_slot(self, slot: usize) -> u32 {
        slot as u32 * self.0
    }
}

impl Default for IntervalWidth {
    fn default() -> Self {
        IntervalWidth::FIVE_MINUTES
    }
}

impl TryFrom<u32> for IntervalWidth {
    type Error = Error;

    fn try_from(value: u32) -> Result<Self> {
        IntervalWidth::new(value)
    }
}

impl From<IntervalWidth> for u32 {
    fn from(w: IntervalWidth) -> u32 {
        w.0
    }
}

/// A (day, minute-of-day) bucket. Day 0 is the first collection day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeBucket {
    pub day_index: u32,
    pub minutes_of_day: u32,
}

impl fmt::Display for TimeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "day {} {}", self.day_index, format_hhmm(self.minutes_of_day))
    }
}

/// Floors a timestamp to the start of its bucket. `origin` is day 0.
///
/// Timestamps before the origin date are rejected; everything else maps to
/// exactly one bucket.
pub fn bucket_timestamp(
    ts: NaiveDateTime,
    origin: NaiveDate,
    width: IntervalWidth,
) -> Result<TimeBucket> {
    let days = (ts.date() - origin).num_days();
    if days < 0 {
        return Err(Error::validation(format!(
            "timestamp {ts} precedes dataset origin {origin}"
        )));
    }
    let minute = ts.hour() * 60 + ts.minute();
    Ok(TimeBucket {
        day_index: days as u32,
        minutes_of_day: minute - minute % width.minutes(),
    })
}

/// Maps an absolute interval index (as used by datasets that number
/// intervals from the start of collection) to a bucket.
pub fn bucket_from_interval_index(index: u64, width: IntervalWidth) -> TimeBucket {
    let per_day = width.slots_per_day() as u64;
    TimeBucket {
        day_index: (index / per_day) as u32,
        minutes_of_day: ((index % per_day) as u32) * width.minutes(),
    }
}

/// Parses `HH:MM` into minutes since midnight.
pub fn parse_hhmm(s: &str) -> Result<u32> {
    let bad = || Error::validation(format!("expected HH:MM time of day, got `{s}`"));
    let (h, m) = s.trim().split_once(':').ok_or_else(bad)?;
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    if h >= 24 || m >= 60 {
        return Err(bad());
    }
    Ok(h * 60 + m)
}

pub fn format_hhmm(minutes_of_day: u32) -> String {
    format!("{:02}:{:02}", minutes_of_day / 60, minutes_of_day % 60)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(h: u32, m: u32, s: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2021, 9, 1)
            .unwrap()
            .and_hms_opt(h, m, s)
            .unwrap()
    }

    fn origin() -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 9, 1).unwrap()
    }

    #[test]
    fn floors_to_bucket_start() {
        let w = IntervalWidth::FIVE_MINUTES;
        assert_eq!(bucket_timestamp(at(7, 13, 45), origin(), w).unwrap().minutes_of_day, 430);
        assert_eq!(bucket_timestamp(at(7, 10, 0), origin(), w).unwrap().minutes_of_day, 430);
        assert_eq!(bucket_timestamp(at(23, 59, 59), origin(), w).unwrap().minutes_of_day, 1435);
    }

    #[test]
    fn day_index_is_origin_relative() {
        let ts = NaiveDate::from_ymd_opt(2021, 9, 3)
            .unwrap()
            .and_hms_opt(0, 1, 0)
            .unwrap();
        let b = bucket_timestamp(ts, origin(), IntervalWidth::FIVE_MINUTES).unwrap();
        assert_eq!(b, TimeBucket { day_index: 2, minutes_of_day: 0 });
        let before = NaiveDate::from_ymd_opt(2021, 8, 31).unwrap().and_hms_opt(1, 0, 0).unwrap();
        assert!(bucket_timestamp(before, origin(), IntervalWidth::FIVE_MINUTES).is_err());
    }

    #[test]
    fn width_must_divide_day() {
        assert!(IntervalWidth::new(7).is_err());
        assert!(IntervalWidth::new(0).is_err());
        assert_eq!(IntervalWidth::new(15).unwrap().slots_per_day(), 96);
    }

    #[test]
    fn absolute_interval_index() {
        let w = IntervalWidth::new(15).unwrap();
        assert_eq!(
            bucket_from_interval_index(5856, w),
            TimeBucket { day_index: 61, minutes_of_day: 0 }
        );
        assert_eq!(
            bucket_from_interval_index(97, w),
            TimeBucket { day_index: 1, minutes_of_day: 15 }
        );
    }

    #[test]
    fn hhmm() {
        assert_eq!(parse_hhmm("07:10").unwrap(), 430);
        assert_eq!(format_hhmm(1435), "23:55");
        assert!(parse_hhmm("25:00").is_err());
        assert!(SensorId::new("  ").is_err());
    }

    proptest! {
        #[test]
        fn bucketing_is_idempotent(secs in 0u32..86_400, width in prop::sample::select(vec![1u32, 5, 10, 15, 30, 60])) {
            let w = IntervalWidth::new(width).unwrap();
            let ts = at(secs / 3600, (secs / 60) % 60, secs % 60);
            let b = bucket_timestamp(ts, origin(), w).unwrap();
            let again = at(b.minutes_of_day / 60, b.minutes_of_day % 60, 0);
            prop_assert_eq!(bucket_timestamp(again, origin(), w).unwrap(), b);
            prop_assert!(b.minutes_of_day.is_multiple_of(width));
        }
    }
}
