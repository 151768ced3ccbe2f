//! Augmented Dickey-Fuller unit-root test, constant-only regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Large-sample critical values for the constant-only regression.
pub const CRITICAL_1PCT: f64 = -3.43;
pub const CRITICAL_5PCT: f64 = -2.86;
pub const CRITICAL_10PCT: f64 = -2.57;

pub const MIN_ADF_LENGTH: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalValues {
    #[serde(rename = "1%")]
    pub one_pct: f64,
    #[serde(rename = "5%")]
    pub five_pct: f64,
    #[serde(rename = "10%")]
    pub ten_pct: f64,
}

impl Default for CriticalValues {
    fn default() -> Self {
        CriticalValues {
            one_pct: CRITICAL_1PCT,
            five_pct: CRITICAL_5PCT,
            ten_pct: CRITICAL_10PCT,
        }
    }
}

/// Which tabulated significance levels the statistic clears. Stands in for
/// an exact p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PValueBracket {
    #[serde(rename = "p<0.01")]
    BelowOnePct,
    #[serde(rename = "0.01<=p<0.05")]
    BelowFivePct,
    #[serde(rename = "0.05<=p<0.10")]
    BelowTenPct,
    #[serde(rename = "p>=0.10")]
    AboveTenPct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub lags_used: usize,
    pub nobs: usize,
    pub reject_at_5pct: bool,
    pub critical_values: CriticalValues,
    pub p_value_bracket: PValueBracket,
}

/// Schwert's rule: `floor(12 * (T / 100)^(1/4))`.
pub fn schwert_lags(len: usize) -> usize {
    (12.0 * (len as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Ordinary least squares via SVD. Returns coefficients and their standard
/// errors. Rank-deficient designs are rejected with the condition number.
pub(crate) fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::Numerical(format!(
            "regression has {n} observations for {p} parameters"
        )));
    }
    let svd = x.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    if !(smin > smax * 1e-10) {
        return Err(Error::Numerical(format!(
            "singular regression matrix (condition number {:.3e})",
            if smin > 0.0 { smax / smin } else { f64::INFINITY }
        )));
    }
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let uty = u.transpose() * y;
    let scaled = DVector::from_iterator(p, uty.iter().zip(s.iter()).map(|(a, b)| a / b));
    let beta = vt.transpose() * scaled;
    let resid = y - x * &beta;
    let sigma2 = resid.norm_squared() / (n - p) as f64;
    let se = DVector::from_iterator(
        p,
        (0..p).map(|j| {
            let v: f64 = (0..p).map(|k| (vt[(k, j)] / s[k]).powi(2)).sum();
            (sigma2 * v).sqrt()
        }),
    );
    Ok((beta, se))
}

/// Regresses `dx_t` on a constant, `x_{t-1}` and `k` lagged differences with
/// `k` from [`schwert_lags`]; the statistic is the t-ratio of the level
/// coefficient.
pub fn adf_test(x: &[f64]) -> Result<AdfResult> {
    adf_test_with_lags(x, schwert_lags(x.len()))
}

pub fn adf_test_with_lags(x: &[f64], k: usize) -> Result<AdfResult> {
    if x.len() < MIN_ADF_LENGTH {
        return Err(Error::validation(format!(
            "ADF test needs at least {MIN_ADF_LENGTH} values, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("ADF input contains non-finite values"));
    }
    let dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    if dx.len() <= k + 2 {
        return Err(Error::validation(format!(
            "series of length {} too short for {k} lags",
            x.len()
        )));
    }
    let nobs = dx.len() - k;
    let cols = k + 2;
    let design = DMatrix::from_fn(nobs, cols, |r, c| {
        let t = r + k;
        match c {
            0 => 1.0,
            1 => x[t],
            _ => dx[t - (c - 1)],
        }
    });
    let y = DVector::from_iterator(nobs, (0..nobs).map(|r| dx[r + k]));
    let (beta, se) = ols(&design, &y)?;
    let statistic = beta[1] / se[1];
    if !statistic.is_finite() {
        return Err(Error::Numerical(format!(
            "ADF statistic is not finite (gamma {}, se {})",
            beta[1], se[1]
        )));
    }
    let cv = CriticalValues::default();
    let p_value_bracket = if statistic < cv.one_pct {
        PValueBracket::BelowOnePct
    } else if statistic < cv.five_pct {
        PValueBracket::BelowFivePct
    } else if statistic < cv.ten_pct {
        PValueBracket::BelowTenPct
    } else {
        PValueBracket::AboveTenPct
    };
    Ok(AdfResult {
        statistic,
        lags_used: k,
        nobs,
        reject_at_5pct: statistic < cv.five_pct,
        critical_values: cv,
        p_value_bracket,
    })
}
