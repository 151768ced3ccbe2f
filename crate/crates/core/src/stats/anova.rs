//! One-way analysis of variance.

use serde::{Deserialize, Serialize};
use statrs::function::beta::checked_beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    pub ss_between: f64,
    pub ss_within: f64,
}

/// Upper tail of the F distribution through the regularized incomplete beta
/// function.
pub fn f_survival(f: f64, df1: usize, df2: usize) -> Result<f64> {
    if f.is_nan() || f < 0.0 {
        return Err(Error::Numerical(format!("invalid F statistic {f}")));
    }
    if f == f64::INFINITY {
        return Ok(0.0);
    }
    let (d1, d2) = (df1 as f64, df2 as f64);
    let x = d2 / (d2 + d1 * f);
    checked_beta_reg(d2 / 2.0, d1 / 2.0, x)
        .map(|p| p.clamp(0.0, 1.0))
        .map_err(|e| Error::Numerical(format!("incomplete beta failed: {e}")))
}

pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::validation(format!(
            "ANOVA needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some((i, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(Error::validation(format!(
            "ANOVA group {i} has {} values, needs at least 2",
            g.len()
        )));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation("ANOVA input contains non-finite values"));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let f_statistic = if ssw == 0.0 {
        if ssb == 0.0 {
            return Err(Error::Numerical(
                "F is undefined: no variance within or between groups".into(),
            ));
        }
        f64::INFINITY
    } else {
        (ssb / df_between as f64) / (ssw / df_within as f64)
    };
    Ok(AnovaResult {
        f_statistic,
        df_between,
        df_within,
        p_value: f_survival(f_statistic, df_between, df_within)?,
        ss_between: ssb,
        ss_within: ssw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn hand_computed_f() {
        let r = anova_oneway(&[vec![1.0, 2.0], vec![5.0, 6.0]]).unwrap();
        assert!((r.ss_between - 16.0).abs() < 1e-12);
        assert!((r.ss_within - 1.0).abs() < 1e-12);
        assert!((r.f_statistic - 32.0).abs() < 1e-9);
        assert_eq!((r.df_between, r.df_within), (1, 2));
        // F(1, 2) tail has the closed form 1 - sqrt(F / (F + 2))
        assert!((r.p_value - (1.0 - (32.0f64 / 34.0).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn identical_groups() {
        let r = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.f_statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(anova_oneway(&[vec![4.0, 4.0], vec![4.0, 4.0]]).is_err());
        let r = anova_oneway(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert!(r.f_statistic.is_infinite() && r.p_value == 0.0);
        assert!(anova_oneway(&[vec![1.0, 2.0]]).is_err());
        assert!(anova_oneway(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    // Closed forms of the tail: df_b = 2 gives I_x(a, 1) = x^a; df_w = 2
    // gives I_x(1, b) = 1 - (1 - x)^b.
    #[test]
    fn tail_closed_forms() {
        for &(f, d1, d2) in &[(0.3, 2usize, 7usize), (2.5, 2, 15), (4.0, 5, 2), (11.0, 9, 2)] {
            let x = d2 as f64 / (d2 as f64 + d1 as f64 * f);
            let expected = if d1 == 2 {
                x.powf(d2 as f64 / 2.0)
            } else {
                1.0 - (1.0 - x).powf(d1 as f64 / 2.0)
            };
            assert!((f_survival(f, d1, d2).unwrap() - expected).abs() < 1e-12);
        }
    }

    // Tail by Simpson integration of the F density on [F, large].
    #[test]
    fn tail_matches_quadrature() {
        let (d1, d2) = (4.0f64, 12.0f64);
        let ln_beta = |a: f64, b: f64| {
            statrs::function::gamma::ln_gamma(a) + statrs::function::gamma::ln_gamma(b)
                - statrs::function::gamma::ln_gamma(a + b)
        };
        let pdf = |x: f64| {
            ((d1 / 2.0) * (d1 / d2).ln() + (d1 / 2.0 - 1.0) * x.ln()
                - ((d1 + d2) / 2.0) * (1.0 + d1 * x / d2).ln()
                - ln_beta(d1 / 2.0, d2 / 2.0))
            .exp()
        };
        let (a, b, n) = (1.7, 400.0, 200_000);
        let h = (b - a) / n as f64;
        let mut s = pdf(a) + pdf(b);
        for i in 1..n {
            s += pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = s * h / 3.0;
        assert!((f_survival(1.7, 4, 12).unwrap() - integral).abs() < 1e-6);
    }

    #[test]
    fn size_is_about_five_percent() {
        let mut rejections = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let groups: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..15).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            if anova_oneway(&groups).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        assert!((1..=12).contains(&rejections), "{rejections}");
    }

    fn brute_force_f(groups: &[Vec<f64>]) -> f64 {
        let all: Vec<f64> = groups.iter().flatten().copied().collect();
        let mut total = 0.0;
        for v in &all {
            total += v;
        }
        let grand = total / all.len() as f64;
        let mut means = Vec::new();
        for g in groups {
            let mut s = 0.0;
            for v in g {
                s += v;
            }
            means.push(s / g.len() as f64);
        }
        let mut ssw = 0.0;
        let mut ssb = 0.0;
        for (g, m) in groups.iter().zip(&means) {
            for v in g {
                ssw += (v - m) * (v - m);
                ssb += (m - grand) * (m - grand);
            }
        }
        (ssb / (groups.len() - 1) as f64) / (ssw / (all.len() - groups.len()) as f64)
    }

    proptest! {
        #[test]
        fn f_matches_two_pass(groups in prop::collection::vec(
            prop::collection::vec(-1000.0f64..1000.0, 2..12), 2..6)) {
            let r = anova_oneway(&groups).unwrap();
            let expected = brute_force_f(&groups);
            prop_assert!((r.f_statistic - expected).abs() <= 1e-9 * expected.abs().max(1e-12));
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
