//! ARIMA(p, d, q) by conditional sum of squares.
//!
//! The differencing order comes from repeated ADF tests; (p, q) is picked by
//! AIC over a small grid. AR and MA polynomials are parameterized through
//! partial autocorrelations squashed by `tanh`, so every candidate the
//! optimizer visits is stationary and invertible.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::adf::adf_test;

pub const MIN_ARIMA_LENGTH: usize = 30;
const MAX_D: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub ar_coeffs: Vec<f64>,
    pub ma_coeffs: Vec<f64>,
    /// Mean of the differenced series.
    pub intercept: f64,
    pub sigma2: f64,
    pub css: f64,
    pub aic: f64,
    pub nobs: usize,
    pub converged: bool,
}

impl fmt::Display for ArimaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ARIMA({},{},{}) ar={:?} ma={:?} mu={} sigma2={} aic={}",
            self.p, self.d, self.q, self.ar_coeffs, self.ma_coeffs, self.intercept, self.sigma2, self.aic
        )
    }
}

/// `d`-th order differences.
pub fn difference_series(x: &[f64], d: usize) -> Result<Vec<f64>> {
    if x.len() <= d {
        return Err(Error::validation(format!(
            "cannot difference {} values {d} times",
            x.len()
        )));
    }
    let mut out = x.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

fn is_constant(x: &[f64]) -> bool {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0)
}

/// Durbin-Levinson map from partial autocorrelations in (-1, 1) to the
/// coefficients of a stationary `1 - sum a_i B^i`.
fn pacf_to_coeffs(pacf: &[f64]) -> Vec<f64> {
    let mut a = vec![0.0; pacf.len()];
    for k in 0..pacf.len() {
        let prev = a[..k].to_vec();
        for j in 0..k {
            a[j] = prev[j] - pacf[k] * prev[k - 1 - j];
        }
        a[k] = pacf[k];
    }
    a
}

fn sample_pacf(w: &[f64], lags: usize) -> Vec<f64> {
    let n = w.len();
    let mean = w.iter().sum::<f64>() / n as f64;
    let c0: f64 = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if lags == 0 || c0 == 0.0 {
        return vec![0.0; lags];
    }
    let acf: Vec<f64> = (0..=lags)
        .map(|k| {
            (k..n).map(|t| (w[t] - mean) * (w[t - k] - mean)).sum::<f64>() / n as f64 / c0
        })
        .collect();
    let mut pacf = vec![0.0; lags];
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=lags {
        let num = acf[k] - (0..k - 1).map(|j| phi[j] * acf[k - 1 - j]).sum::<f64>();
        let den = 1.0 - (0..k - 1).map(|j| phi[j] * acf[j + 1]).sum::<f64>();
        let pk = if den.abs() > 1e-12 { num / den } else { 0.0 };
        let prev = phi.clone();
        phi = (0..k - 1).map(|j| prev[j] - pk * prev[k - 2 - j]).collect();
        phi.push(pk);
        pacf[k - 1] = pk;
    }
    pacf
}

struct Spec {
    p: usize,
}

impl Spec {
    fn unpack(&self, theta: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let mu = theta[0];
        let ar_p: Vec<f64> = theta[1..1 + self.p].iter().map(|u| u.tanh()).collect();
        let ma_p: Vec<f64> = theta[1 + self.p..].iter().map(|u| u.tanh()).collect();
        let ar = pacf_to_coeffs(&ar_p);
        let ma = pacf_to_coeffs(&ma_p).into_iter().map(|a| -a).collect();
        (mu, ar, ma)
    }
}

/// One-step residuals `e_t` for `t >= start`, with earlier residuals taken
/// as zero.
fn residuals(w: &[f64], mu: f64, ar: &[f64], ma: &[f64], start: usize) -> Vec<f64> {
    let mut e = vec![0.0; w.len()];
    for t in start..w.len() {
        let mut pred = mu;
        for (i, a) in ar.iter().enumerate() {
            pred += a * (w[t - 1 - i] - mu);
        }
        for (j, b) in ma.iter().enumerate() {
            if t > j {
                pred += b * e[t - 1 - j];
            }
        }
        e[t] = w[t] - pred;
    }
    e
}

fn css(w: &[f64], mu: f64, ar: &[f64], ma: &[f64], start: usize) -> f64 {
    residuals(w, mu, ar, ma, start)[start..].iter().map(|e| e * e).sum()
}

struct Simplex {
    x: Vec<f64>,
    fx: f64,
    converged: bool,
}

/// Nelder-Mead with the standard coefficients.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], steps: &[f64], max_evals: usize, ftol: f64) -> Simplex {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    let mut converged = false;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = (vals[n] - vals[0]).abs();
        let size = (1..=n)
            .map(|i| pts[i].iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= ftol * (vals[0].abs() + 1e-12) && size <= 1e-7 {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    pts[i] = pts[i].iter().zip(&pts[0]).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    vals[i] = f(&pts[i]);
                }
                evals += n;
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    Simplex {
        x: pts[best].clone(),
        fx: vals[best],
        converged,
    }
}

fn constant_model(value: f64, d: usize, nobs: usize) -> ArimaModel {
    ArimaModel {
        p: 0,
        d,
        q: 0,
        ar_coeffs: vec![],
        ma_coeffs: vec![],
        intercept: value,
        sigma2: f64::MIN_POSITIVE,
        css: 0.0,
        aic: f64::NEG_INFINITY,
        nobs,
        converged: true,
    }
}

/// CSS fit of the differenced series `w` with residuals summed from `start`.
fn fit_css(w: &[f64], p: usize, d: usize, q: usize, start: usize) -> ArimaModel {
    let spec = Spec { p };
    let n = w.len();
    let mean = w.iter().sum::<f64>() / n as f64;
    let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut x0 = vec![mean];
    x0.extend(sample_pacf(w, p).iter().map(|r| r.clamp(-0.95, 0.95).atanh()));
    x0.extend(std::iter::repeat_n(0.0, q));
    let mut steps = vec![0.1 * sd.max(1e-8)];
    steps.extend(std::iter::repeat_n(0.2, p + q));

    let objective = |theta: &[f64]| {
        let (mu, ar, ma) = spec.unpack(theta);
        css(w, mu, &ar, &ma, start)
    };
    let dim = 1 + p + q;
    let mut best = nelder_mead(objective, &x0, &steps, 4000 * dim, 1e-12);
    // one restart from the optimum guards against a collapsed simplex
    if best.converged {
        let again = nelder_mead(objective, &best.x, &steps, 4000 * dim, 1e-12);
        if again.fx <= best.fx {
            best = again;
        }
    }
    let (mu, ar, ma) = spec.unpack(&best.x);
    let nobs = n - start;
    let sigma2 = (best.fx / nobs as f64).max(f64::MIN_POSITIVE);
    ArimaModel {
        p,
        d,
        q,
        ar_coeffs: ar,
        ma_coeffs: ma,
        intercept: mu,
        sigma2,
        css: best.fx,
        aic: nobs as f64 * sigma2.ln() + 2.0 * (p + q + 1) as f64,
        nobs,
        converged: best.converged,
    }
}

/// Fits one fixed order.
pub fn fit_arima_order(x: &[f64], p: usize, d: usize, q: usize) -> Result<ArimaModel> {
    let w = difference_series(x, d)?;
    if w.len() <= p + q + 1 {
        return Err(Error::validation(format!(
            "{} values are too few for ARIMA({p},{d},{q})",
            x.len()
        )));
    }
    if is_constant(&w) {
        return Ok(constant_model(w[0], d, w.len()));
    }
    Ok(fit_css(&w, p, d, q, p))
}

/// Smallest `d` in {0, 1, 2} whose differenced series rejects a unit root
/// (or is constant). Falls back to 2.
pub fn select_differencing(x: &[f64]) -> Result<usize> {
    for d in 0..=MAX_D {
        let w = difference_series(x, d)?;
        if is_constant(&w) {
            return Ok(d);
        }
        match adf_test(&w) {
            Ok(r) if r.reject_at_5pct => return Ok(d),
            Ok(_) => {}
            Err(e) => log::debug!("ADF at d={d} failed: {e}"),
        }
    }
    log::warn!("no differencing order up to {MAX_D} passed the ADF test; using d={MAX_D}");
    Ok(MAX_D)
}

/// Chooses `d` by ADF, then `(p, q)` in `[0, max_p] x [0, max_q]` by AIC.
/// All grid cells condition on the first `max_p` values so their AICs are
/// computed over the same observations.
pub fn fit_arima(x: &[f64], max_p: usize, max_q: usize) -> Result<ArimaModel> {
    if x.len() < MIN_ARIMA_LENGTH {
        return Err(Error::validation(format!(
            "ARIMA needs at least {MIN_ARIMA_LENGTH} values, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("ARIMA input contains non-finite values"));
    }
    let d = select_differencing(x)?;
    let w = difference_series(x, d)?;
    if is_constant(&w) {
        return Ok(constant_model(w[0], d, w.len()));
    }
    let mut best: Option<ArimaModel> = None;
    let mut best_partial: Option<ArimaModel> = None;
    for p in 0..=max_p {
        for q in 0..=max_q {
            let m = fit_css(&w, p, d, q, max_p);
            let slot = if m.converged { &mut best } else { &mut best_partial };
            if slot.as_ref().is_none_or(|b| m.aic < b.aic) {
                *slot = Some(m);
            }
        }
    }
    match best {
        Some(m) => Ok(m),
        None => Err(Error::ArimaNonConvergence {
            best: Box::new(best_partial.expect("grid is non-empty")),
        }),
    }
}

/// Iterated one-step forecasts, integrated back to the original scale.
pub fn forecast_arima(model: &ArimaModel, x: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::validation("forecast horizon must be at least 1"));
    }
    if model.ar_coeffs.len() != model.p || model.ma_coeffs.len() != model.q {
        return Err(Error::validation("model coefficient counts disagree with its order"));
    }
    if x.len() < model.d + model.p + 1 {
        return Err(Error::validation(format!(
            "need at least {} history values",
            model.d + model.p + 1
        )));
    }
    // last value of every differencing level, to integrate back up
    let mut levels = Vec::with_capacity(model.d);
    let mut cur = x.to_vec();
    for _ in 0..model.d {
        levels.push(*cur.last().unwrap());
        cur = cur.windows(2).map(|w| w[1] - w[0]).collect();
    }
    let w = cur;
    let mut e = residuals(&w, model.intercept, &model.ar_coeffs, &model.ma_coeffs, model.p);
    let mut ext = w.clone();
    for _ in 0..horizon {
        let t = ext.len();
        let mut pred = model.intercept;
        for (i, a) in model.ar_coeffs.iter().enumerate() {
            pred += a * (ext[t - 1 - i] - model.intercept);
        }
        for (j, b) in model.ma_coeffs.iter().enumerate() {
            if t > j {
                pred += b * e[t - 1 - j];
            }
        }
        ext.push(pred);
        e.push(0.0);
    }
    let mut out: Vec<f64> = ext[w.len()..].to_vec();
    for last in levels.into_iter().rev() {
        let mut acc = last;
        for v in out.iter_mut() {
            acc += *v;
            *v = acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(phi: f64, seed: u64, n: usize) -> Vec<f64> {
        let e = noise(seed, n + 100);
        let mut x = vec![0.0; n + 100];
        for t in 1..x.len() {
            x[t] = phi * x[t - 1] + e[t];
        }
        x.split_off(100)
    }

    #[test]
    fn differencing() {
        assert_eq!(difference_series(&[1.0, 3.0, 6.0], 1).unwrap(), vec![2.0, 3.0]);
        assert_eq!(difference_series(&[4.0; 5], 1).unwrap(), vec![0.0; 4]);
        assert_eq!(difference_series(&[1.0, 3.0, 6.0, 10.0], 2).unwrap(), vec![1.0, 1.0]);
        assert!(difference_series(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn pacf_map_is_stationary_for_ar1() {
        assert_eq!(pacf_to_coeffs(&[0.5]), vec![0.5]);
        let a = pacf_to_coeffs(&[0.5, 0.2]);
        // phi_1 = r1 - r2 r1, phi_2 = r2
        assert!((a[0] - 0.4).abs() < 1e-15 && (a[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn constant_series_forecasts_constant() {
        let x = vec![42.0; 40];
        let m = fit_arima(&x, 3, 3).unwrap();
        assert_eq!(m.d, 0);
        assert_eq!(forecast_arima(&m, &x, 4).unwrap(), vec![42.0; 4]);
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let x = ar1(0.7, 3, 500);
        let m = fit_arima(&x, 3, 3).unwrap();
        assert_eq!(m.d, 0);
        assert!(m.p >= 1, "selected {m}");
        assert!((m.ar_coeffs[0] - 0.7).abs() < 0.1, "{m}");
        let fixed = fit_arima_order(&x, 1, 0, 0).unwrap();
        assert!((fixed.ar_coeffs[0] - 0.7).abs() < 0.1);
        assert!(fixed.converged);
    }

    #[test]
    fn random_walk_selects_first_difference() {
        let x: Vec<f64> = noise(8, 300)
            .into_iter()
            .scan(0.0, |a, e| {
                *a += e;
                Some(*a)
            })
            .collect();
        assert_eq!(select_differencing(&x).unwrap(), 1);
        assert_eq!(fit_arima(&x, 2, 2).unwrap().d, 1);
    }

    #[test]
    fn hand_forecasts() {
        let mean_only = ArimaModel {
            p: 0,
            d: 0,
            q: 0,
            ar_coeffs: vec![],
            ma_coeffs: vec![],
            intercept: 3.5,
            sigma2: 1.0,
            css: 0.0,
            aic: 0.0,
            nobs: 0,
            converged: true,
        };
        assert_eq!(forecast_arima(&mean_only, &[1.0, 9.0], 3).unwrap(), vec![3.5; 3]);

        let ar = ArimaModel { p: 1, ar_coeffs: vec![0.5], intercept: 0.0, ..mean_only.clone() };
        assert_eq!(forecast_arima(&ar, &[3.0, 8.0], 3).unwrap(), vec![4.0, 2.0, 1.0]);

        let walk = ArimaModel { d: 1, intercept: 0.0, ..mean_only.clone() };
        assert_eq!(forecast_arima(&walk, &[97.0, 99.0, 100.0], 3).unwrap(), vec![100.0; 3]);

        let drift2 = ArimaModel { d: 2, intercept: 0.0, ..mean_only };
        // second differences zero: continue the last slope
        assert_eq!(forecast_arima(&drift2, &[1.0, 3.0, 5.0], 2).unwrap(), vec![7.0, 9.0]);
    }

    #[test]
    fn stationary_forecast_approaches_mean_monotonically() {
        let m = ArimaModel {
            p: 1,
            d: 0,
            q: 0,
            ar_coeffs: vec![0.8],
            ma_coeffs: vec![],
            intercept: 10.0,
            sigma2: 1.0,
            css: 0.0,
            aic: 0.0,
            nobs: 0,
            converged: true,
        };
        let f = forecast_arima(&m, &[10.0, 25.0], 200).unwrap();
        let gaps: Vec<f64> = f.iter().map(|v| (v - 10.0).abs()).collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0]));
        assert!(gaps.last().unwrap() < &1e-12);
    }

    #[test]
    fn fitted_models_are_stationary() {
        let x = ar1(0.95, 4, 200);
        let m = fit_arima_order(&x, 2, 0, 1).unwrap();
        // AR(2) stationarity triangle
        let (a1, a2) = (m.ar_coeffs[0], m.ar_coeffs[1]);
        assert!(a2.abs() < 1.0 && a1 + a2 < 1.0 && a2 - a1 < 1.0);
        assert!(m.ma_coeffs[0].abs() < 1.0);
    }

    #[test]
    fn too_short() {
        assert!(fit_arima(&[1.0; 10], 3, 3).is_err());
        let m = ArimaModel { p: 1, d: 0, q: 0, ar_coeffs: vec![0.5], ma_coeffs: vec![], intercept: 0.0, sigma2: 1.0, css: 0.0, aic: 0.0, nobs: 0, converged: true };
        assert!(forecast_arima(&m, &[1.0], 0).is_err());
    }
}
