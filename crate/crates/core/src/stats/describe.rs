//! Box-plot summaries and peak detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub label: String,
    pub count: usize,
    /// Lower whisker end: smallest value within 1.5 IQR of `q1`.
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Upper whisker end.
    pub max: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data (`(n - 1) * q` positions).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(label: &str, values: &[f64]) -> Result<BoxplotSummary> {
    if values.is_empty() {
        return Err(Error::validation(format!("box plot group '{label}' is empty")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation(format!("box plot group '{label}' has non-finite values")));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&s, 0.25);
    let median = quantile_sorted(&s, 0.5);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = s.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v)).collect();
    let outliers = s.iter().copied().filter(|v| !(lo_fence..=hi_fence).contains(v)).collect();
    Ok(BoxplotSummary {
        label: label.to_string(),
        count: s.len(),
        min: inside.first().copied().unwrap_or(q1).min(q1),
        q1,
        median,
        q3,
        max: inside.last().copied().unwrap_or(q3).max(q3),
        outliers,
    })
}

pub fn boxplot_summary(groups: &[(String, Vec<f64>)]) -> Result<Vec<BoxplotSummary>> {
    groups.iter().map(|(label, g)| summarize(label, g)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub minutes_of_day: u32,
    pub value: f64,
}

/// Strict interior local maxima above the series mean, taken greedily by
/// height so that chosen peaks are at least `min_separation` samples apart.
/// Returned in time order. `series` must be sorted by time.
pub fn detect_peaks(series: &[(u32, f64)], min_separation: usize) -> Vec<Peak> {
    if series.len() < 3 {
        return Vec::new();
    }
    let mean = series.iter().map(|p| p.1).sum::<f64>() / series.len() as f64;
    let mut candidates: Vec<usize> = (1..series.len() - 1)
        .filter(|&i| {
            let v = series[i].1;
            v > series[i - 1].1 && v > series[i + 1].1 && v > mean
        })
        .collect();
    candidates.sort_by(|&a, &b| series[b].1.total_cmp(&series[a].1).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::new();
    for i in candidates {
        if chosen.iter().all(|&j| i.abs_diff(j) >= min_separation) {
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    chosen
        .into_iter()
        .map(|i| Peak {
            minutes_of_day: series[i].0,
            value: series[i].1,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{format_hhmm, parse_hhmm};
    use proptest::prelude::*;

    #[test]
    fn interpolated_quartiles() {
        let s = summarize("g", &[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        assert_eq!((s.min, s.max), (1.0, 5.0));
        assert!(s.outliers.is_empty());
    }

    #[test]
    fn single_value() {
        let s = summarize("g", &[7.0]).unwrap();
        assert_eq!([s.min, s.q1, s.median, s.q3, s.max], [7.0; 5]);
    }

    #[test]
    fn outlier_flagged() {
        // q1 = 1.75, q3 = 27.25, upper fence 65.5
        let s = summarize("g", &[1.0, 2.0, 3.0, 100.0]).unwrap();
        assert_eq!(s.outliers, vec![100.0]);
        assert_eq!(s.max, 27.25);
        assert!(summarize("g", &[]).is_err());
    }

    fn bump(t: f64, center: f64, height: f64, width: f64) -> f64 {
        height * (-((t - center) / width).powi(2)).exp()
    }

    #[test]
    fn bimodal_morning_peaks() {
        let start = parse_hhmm("05:00").unwrap();
        let series: Vec<(u32, f64)> = (0..60)
            .map(|i| {
                let m = start + 5 * i;
                let t = m as f64;
                let v = 300.0
                    + bump(t, parse_hhmm("06:15").unwrap() as f64, 120.0, 20.0)
                    + bump(t, parse_hhmm("07:30").unwrap() as f64, 150.0, 25.0);
                (m, v)
            })
            .collect();
        let peaks = detect_peaks(&series, 3);
        let times: Vec<String> = peaks.iter().map(|p| format_hhmm(p.minutes_of_day)).collect();
        assert_eq!(times, vec!["06:15", "07:30"]);
    }

    #[test]
    fn no_interior_maximum() {
        let up: Vec<(u32, f64)> = (0..20).map(|i| (i * 5, i as f64)).collect();
        assert!(detect_peaks(&up, 1).is_empty());
        let flat: Vec<(u32, f64)> = (0..20).map(|i| (i * 5, 3.0)).collect();
        assert!(detect_peaks(&flat, 1).is_empty());
    }

    #[test]
    fn separation_keeps_taller() {
        let s = vec![(0, 0.0), (5, 5.0), (10, 1.0), (15, 6.0), (20, 0.0), (25, 0.0)];
        let p = detect_peaks(&s, 3);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].minutes_of_day, 15);
    }

    proptest! {
        #[test]
        fn quartiles_are_ordered(v in prop::collection::vec(-1e6f64..1e6, 1..60)) {
            let s = summarize("g", &v).unwrap();
            prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
            prop_assert_eq!(s.count, v.len());
        }
    }
}
