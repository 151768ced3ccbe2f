//! The per-sensor analysis bundle written by `analyze`.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DurationMatrix;
use crate::stats::{
    adf_test, anova_oneway, boxplot_summary, detect_peaks, fit_arima, forecast_arima, AdfResult,
    AnovaResult, ArimaModel, BoxplotSummary, Peak,
};
use crate::types::{format_hhmm, SensorId};

/// How interval durations are grouped for ANOVA and box plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnovaGrouping {
    /// One group per hour of day.
    Hourly,
    /// One group per interval slot.
    Interval,
}

impl FromStr for AnovaGrouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hourly" => Ok(AnovaGrouping::Hourly),
            "interval" => Ok(AnovaGrouping::Interval),
            other => Err(Error::validation(format!(
                "unknown grouping '{other}' (expected hourly or interval)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub interval_minutes: u32,
    pub grouping: AnovaGrouping,
    pub horizon: usize,
    pub max_p: usize,
    pub max_q: usize,
    pub peak_separation_minutes: u32,
}

impl AnalysisConfig {
    pub fn new(interval_minutes: u32) -> Self {
        AnalysisConfig {
            interval_minutes,
            grouping: AnovaGrouping::Hourly,
            horizon: 2,
            max_p: 3,
            max_q: 3,
            peak_separation_minutes: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub sensor: SensorId,
    pub interval: String,
    pub series_len: usize,
    pub missing_days: Vec<usize>,
    pub adf: AdfResult,
    pub arima: ArimaModel,
    pub forecasts: Vec<f64>,
    pub grouping: AnovaGrouping,
    pub anova: AnovaResult,
    pub boxplots: Vec<BoxplotSummary>,
    pub peaks: Vec<PeakRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeakRow {
    pub time: String,
    pub value: f64,
}

impl From<Peak> for PeakRow {
    fn from(p: Peak) -> Self {
        PeakRow {
            time: format_hhmm(p.minutes_of_day),
            value: p.value,
        }
    }
}

/// Runs the full battery for one sensor: stationarity and ARIMA on the
/// day-by-day series of one interval, ANOVA and box plots across time
/// groups, and peaks of the mean daily profile. Missing cells are skipped.
pub fn analyze_sensor(m: &DurationMatrix, sensor: &SensorId, cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    let slice = m.slice_interval(sensor, cfg.interval_minutes)?;
    let missing_days: Vec<usize> = slice.iter().filter(|(_, v)| v.is_none()).map(|(d, _)| *d).collect();
    if !missing_days.is_empty() {
        log::warn!(
            "{} of {} days lack a value at {}; analysing the rest",
            missing_days.len(),
            slice.len(),
            format_hhmm(cfg.interval_minutes)
        );
    }
    let series: Vec<f64> = slice.iter().filter_map(|(_, v)| *v).collect();
    let adf = adf_test(&series)?;
    let arima = match fit_arima(&series, cfg.max_p, cfg.max_q) {
        Ok(m) => m,
        Err(Error::ArimaNonConvergence { best }) => {
            log::warn!("no ARIMA grid cell converged; using best partial fit {best}");
            *best
        }
        Err(e) => return Err(e),
    };
    let forecasts = forecast_arima(&arima, &series, cfg.horizon)?;

    let s = m.sensor_index(sensor)?;
    let width = m.width();
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut profile: Vec<(u32, f64, usize)> = (0..m.slots_per_day())
        .map(|slot| (width.minutes_of_slot(slot), 0.0, 0))
        .collect();
    for day in 0..m.num_days() {
        for (slot, v) in m.row(s, day).iter().enumerate() {
            if let Some(v) = v {
                let minutes = width.minutes_of_slot(slot);
                let key = match cfg.grouping {
                    AnovaGrouping::Hourly => minutes / 60 * 60,
                    AnovaGrouping::Interval => minutes,
                };
                groups.entry(key).or_default().push(*v);
                profile[slot].1 += v;
                profile[slot].2 += 1;
            }
        }
    }
    let labelled: Vec<(String, Vec<f64>)> = groups
        .into_iter()
        .map(|(k, v)| (format_hhmm(k), v))
        .collect();
    let anova_groups: Vec<Vec<f64>> = labelled.iter().filter(|(_, v)| v.len() >= 2).map(|(_, v)| v.clone()).collect();
    let anova = anova_oneway(&anova_groups)?;
    let boxplots = boxplot_summary(&labelled)?;

    let mean_profile: Vec<(u32, f64)> = profile
        .into_iter()
        .filter(|p| p.2 > 0)
        .map(|(t, sum, n)| (t, sum / n as f64))
        .collect();
    let separation = (cfg.peak_separation_minutes / width.minutes()).max(1) as usize;
    let peaks = detect_peaks(&mean_profile, separation).into_iter().map(PeakRow::from).collect();

    Ok(AnalysisReport {
        sensor: sensor.clone(),
        interval: format_hhmm(cfg.interval_minutes),
        series_len: series.len(),
        missing_days,
        adf,
        arima,
        forecasts,
        grouping: cfg.grouping,
        anova,
        boxplots,
        peaks,
    })
}
