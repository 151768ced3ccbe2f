//! Stationarity testing, ARIMA forecasting, ANOVA and descriptive summaries.

pub mod adf;
pub mod anova;
pub mod arima;
pub mod describe;
pub mod report;

pub use adf::{adf_test, adf_test_with_lags, schwert_lags, AdfResult, CriticalValues, PValueBracket};
pub use anova::{anova_oneway, f_survival, AnovaResult};
pub use arima::{difference_series, fit_arima, fit_arima_order, forecast_arima, select_differencing, ArimaModel};
pub use describe::{boxplot_summary, detect_peaks, quantile_sorted, BoxplotSummary, Peak};
pub use report::{analyze_sensor, AnalysisConfig, AnalysisReport, AnovaGrouping};
