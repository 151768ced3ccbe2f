//! Forecast evaluation, baselines and comparison tables.

pub mod metrics;
pub mod report;

use std::ops::Range;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::DatasetBundle;
use crate::matrix::DurationMatrix;
use crate::models::config::{ModelConfig, TrainConfig};
use crate::models::data::{windows, DaySplit, DenseSeries, Window};
use crate::models::train::train_model;
use crate::types::{format_hhmm, SensorId};

pub use metrics::{mae, mape, mape_counted, rmse, Metrics};
pub use report::{compare_report, config_hash, ComparisonTable, EvalReport, ReportMetadata, ResultRow};

/// Anything that turns history windows into `P x N` forecasts in original
/// units.
pub trait Forecaster {
    fn name(&self) -> String;
    fn history_steps(&self) -> usize;
    fn horizon_steps(&self) -> usize;
    fn forecast(&self, series: &DenseSeries, windows: &[Window]) -> Result<Vec<Array2<f64>>>;
}

/// Pools every (window, step, sensor) error into one set of metrics.
pub fn evaluate_forecaster(f: &dyn Forecaster, series: &DenseSeries, windows: &[Window]) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::validation("no evaluation windows"));
    }
    let (h, p) = (f.history_steps(), f.horizon_steps());
    let preds = f.forecast(series, windows)?;
    let mut y = Vec::with_capacity(windows.len() * p * series.num_sensors());
    let mut yhat = Vec::with_capacity(y.capacity());
    for (w, pred) in windows.iter().zip(&preds) {
        let actual = series.block(w.day, w.start + h, p);
        if pred.dim() != actual.dim() {
            return Err(Error::Shape(format!(
                "{} returned a {:?} forecast, expected {:?}",
                f.name(),
                pred.dim(),
                actual.dim()
            )));
        }
        y.extend(actual.iter());
        yhat.extend(pred.iter());
    }
    Metrics::compute(&y, &yhat)
}

/// Per-(slot, sensor) mean over the training days.
#[derive(Debug, Clone)]
pub struct HistoricalAverage {
    means: Array2<f64>,
    history: usize,
    horizon: usize,
}

impl HistoricalAverage {
    pub fn fit(series: &DenseSeries, train_days: Range<usize>, history: usize, horizon: usize) -> Self {
        let days = train_days.len().max(1) as f64;
        let means = Array2::from_shape_fn((series.slots_per_day(), series.num_sensors()), |(t, n)| {
            train_days.clone().map(|d| series.values[[d, t, n]]).sum::<f64>() / days
        });
        HistoricalAverage { means, history, horizon }
    }
}

impl Forecaster for HistoricalAverage {
    fn name(&self) -> String {
        "HA".to_string()
    }

    fn history_steps(&self) -> usize {
        self.history
    }

    fn horizon_steps(&self) -> usize {
        self.horizon
    }

    fn forecast(&self, _series: &DenseSeries, windows: &[Window]) -> Result<Vec<Array2<f64>>> {
        Ok(windows
            .iter()
            .map(|w| {
                let from = w.start + self.history;
                self.means.slice(ndarray::s![from..from + self.horizon, ..]).to_owned()
            })
            .collect())
    }
}

/// Mean of the present values of one (sensor, time of day) column over
/// `days`.
pub fn historical_average_baseline(
    m: &DurationMatrix,
    days: Range<usize>,
    sensor: &SensorId,
    minutes_of_day: u32,
) -> Result<f64> {
    let column = m.slice_interval(sensor, minutes_of_day)?;
    let vals: Vec<f64> = column
        .into_iter()
        .filter(|(d, _)| days.contains(d))
        .filter_map(|(_, v)| v)
        .collect();
    if vals.is_empty() {
        return Err(Error::validation(format!(
            "no training values for sensor {sensor} at {}",
            format_hhmm(minutes_of_day)
        )));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Scores a forecaster on the test days of a bundle.
pub fn evaluate_model(f: &dyn Forecaster, bundle: &DatasetBundle, split: (f64, f64, f64)) -> Result<ResultRow> {
    let series = DenseSeries::from_matrix(&bundle.matrix)?;
    let days = DaySplit::new(series.num_days(), split)?;
    let test = windows(days.test, series.slots_per_day(), f.history_steps(), f.horizon_steps())?;
    let m = evaluate_forecaster(f, &series, &test)?;
    Ok(ResultRow::from_metrics(f.name(), bundle.name.clone(), &m))
}

/// Baseline fitted on the training days of `bundle` under `split`.
pub fn fit_baseline(bundle: &DatasetBundle, split: (f64, f64, f64), history: usize, horizon: usize) -> Result<HistoricalAverage> {
    let series = DenseSeries::from_matrix(&bundle.matrix)?;
    let days = DaySplit::new(series.num_days(), split)?;
    Ok(HistoricalAverage::fit(&series, days.train, history, horizon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalPoint {
    pub sensors: usize,
    pub mae: f64,
    pub baseline_mae: f64,
}

/// Trains one model per prefix of the sensor list and records test MAE.
pub fn incremental_sensor_experiment(
    bundle: &DatasetBundle,
    counts: &[usize],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<Vec<IncrementalPoint>> {
    counts
        .iter()
        .map(|&k| {
            let sub = bundle.head(k)?;
            let cfg = ModelConfig {
                num_nodes: k,
                ..mcfg.clone()
            };
            let (_, report) = train_model(&sub, &cfg, tcfg)?;
            Ok(IncrementalPoint {
                sensors: k,
                mae: report.test.mae,
                baseline_mae: report.baseline_test.mae,
            })
        })
        .collect()
}
