//! Point-forecast error metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Shape(format!(
            "{} actual values against {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::validation("metrics need at least one value"));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Mean absolute percentage error in percent, skipping zero actuals.
/// Returns the value and the number of entries used.
pub fn mape_counted(y: &[f64], yhat: &[f64]) -> Result<(f64, usize)> {
    check(y, yhat)?;
    let mut sum = 0.0;
    let mut used = 0;
    for (a, b) in y.iter().zip(yhat) {
        if *a != 0.0 {
            sum += ((a - b) / a).abs();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Numerical("MAPE is undefined: every actual value is zero".into()));
    }
    Ok((100.0 * sum / used as f64, used))
}

pub fn mape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    mape_counted(y, yhat).map(|(v, _)| v)
}

/// Root mean squared error.
pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok((y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mape: f64,
    pub rmse: f64,
    pub count: usize,
    /// Entries with a non-zero actual, the MAPE denominator.
    pub mape_count: usize,
}

impl Metrics {
    pub fn compute(y: &[f64], yhat: &[f64]) -> Result<Self> {
        let (mape, mape_count) = mape_counted(y, yhat)?;
        Ok(Metrics {
            mae: mae(y, yhat)?,
            mape,
            rmse: rmse(y, yhat)?,
            count: y.len(),
            mape_count,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(mae(&y, &[2.0, 2.0, 5.0]).unwrap(), 1.0);
        assert!((mape(&[100.0, 200.0], &[110.0, 180.0]).unwrap() - 10.0).abs() < 1e-12);
        let (v, used) = mape_counted(&[0.0, 100.0], &[5.0, 110.0]).unwrap();
        assert!((v - 10.0).abs() < 1e-12 && used == 1);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(mae(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mape(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    }

    fn pairs() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((1.0f64..500.0, 1.0f64..500.0), 1..50)
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut v in pairs(), seed in 0u64..1000) {
            let (y, p): (Vec<f64>, Vec<f64>) = v.iter().copied().unzip();
            let before = Metrics::compute(&y, &p).unwrap();
            let k = (seed as usize) % v.len();
            v.rotate_left(k);
            v.reverse();
            let (y2, p2): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let after = Metrics::compute(&y2, &p2).unwrap();
            prop_assert!((before.mae - after.mae).abs() <= 1e-9 * before.mae.max(1e-12));
            prop_assert!((before.rmse - after.rmse).abs() <= 1e-9 * before.rmse.max(1e-12));
            prop_assert!((before.mape - after.mape).abs() <= 1e-9 * before.mape.max(1e-12));
        }

        #[test]
        fn translation_invariant(v in pairs(), c in -100.0f64..100.0) {
            let (y, p): (Vec<f64>, Vec<f64>) = v.iter().copied().unzip();
            let ys: Vec<f64> = y.iter().map(|a| a + c).collect();
            let ps: Vec<f64> = p.iter().map(|a| a + c).collect();
            let (m1, m2) = (mae(&y, &p).unwrap(), mae(&ys, &ps).unwrap());
            prop_assert!((m1 - m2).abs() <= 1e-9 * m1.max(1.0));
            let (r1, r2) = (rmse(&y, &p).unwrap(), rmse(&ys, &ps).unwrap());
            prop_assert!((r1 - r2).abs() <= 1e-9 * r1.max(1.0));
        }

        #[test]
        fn rmse_dominates_mae(v in pairs()) {
            let (y, p): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            prop_assert!(rmse(&y, &p).unwrap() >= mae(&y, &p).unwrap() * (1.0 - 1e-12));
        }
    }
}
