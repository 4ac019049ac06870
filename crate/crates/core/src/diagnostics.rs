//! Instrument validity battery: endogeneity, over-/under-identification,
//! and weak-instrument statistics with critical-value verdicts.
//!
//! Everything here assumes a single endogenous regressor (K = 1) with L
//! instruments, the only configuration the pipeline produces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::{chi2_sf, f_sf};
use crate::error::{Error, Result};
use crate::estimator::{col_matrix, first_stage, hstack, ols, tsls, with_intercept, CovType};
use crate::linalg::sym_pinv;

const PINV_TOL: f64 = 1e-10;
const F_CAP: f64 = 1e12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestStat {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NoCriticalValue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StockYogoVerdict {
    pub cragg_donald_f: f64,
    pub relative_bias_5pct: Option<f64>,
    pub size_10pct: Option<f64>,
    pub size_15pct: Option<f64>,
    pub relative_bias_5pct_verdict: Verdict,
    pub size_10pct_verdict: Verdict,
    pub size_15pct_verdict: Verdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub dwh_chi2: TestStat,
    pub dwh_f: TestStat,
    /// Second F degree of freedom for the DWH F form.
    pub dwh_f_df2: usize,
    pub hansen_j: Option<TestStat>,
    pub kp_rk_lm: TestStat,
    pub cragg_donald_f: f64,
    pub min_eigenvalue: f64,
    pub first_stage_robust_f: TestStat,
    pub first_stage_f_df2: usize,
    pub stock_yogo: StockYogoVerdict,
    /// Set when a robust moment covariance was near-singular and a
    /// pseudo-inverse was used.
    pub pinv_flagged: bool,
}

/// Stock-Yogo (2005) critical values for one endogenous regressor,
/// transcribed from the published tables. Relative-bias thresholds exist
/// only for L >= 3.
const STOCK_YOGO_K1: [(usize, Option<f64>, f64, f64); 5] = [
    (1, None, 16.38, 8.96),
    (2, None, 19.93, 11.59),
    (3, Some(13.91), 22.30, 12.83),
    (4, Some(16.85), 24.58, 13.96),
    (5, Some(18.37), 26.87, 15.09),
];

/// Durbin-Wu-Hausman endogeneity test in control-function form: the
/// first-stage residual is appended to the structural OLS and its
/// coefficient tested with robust variance. Returns (chi2 form, F form,
/// F denominator df).
pub fn dwh_endogeneity_test(
    y: &DVector<f64>,
    d: &DVector<f64>,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<(TestStat, TestStat, usize)> {
    let (zl, xl) = default_labels(z.ncols(), x.ncols());
    let stage1 = first_stage(d, z, x, &zl, &xl, CovType::Hc1)?;
    let v_hat = stage1.residuals.clone();

    let mut regs = hstack(&col_matrix(d), x);
    regs = hstack(&regs, &col_matrix(&v_hat));
    let mut labels = vec!["d".to_string()];
    labels.extend(xl.iter().cloned());
    labels.push("v_hat".to_string());
    let aug = ols(y, &regs, &labels, CovType::Hc1)?;

    let t = aug.coef("v_hat").unwrap() / aug.se("v_hat").unwrap();
    let stat = t * t;
    let chi2 = TestStat {
        statistic: stat,
        df: 1,
        p_value: chi2_sf(stat, 1.0),
    };
    let f = TestStat {
        statistic: stat,
        df: 1,
        p_value: f_sf(stat, 1.0, aug.df as f64),
    };
    Ok((chi2, f, aug.df))
}

/// Hansen J overidentification statistic: n * gbar' S^-1 gbar over the full
/// exogenous instrument set, with heteroskedasticity-robust moment
/// covariance. Chi-square with L - 1 degrees of freedom.
pub fn hansen_j(
    y: &DVector<f64>,
    d: &DVector<f64>,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<(TestStat, bool)> {
    let l = z.ncols();
    if l <= 1 {
        return Err(Error::InvalidDesign(
            "J undefined, df = 0 (model is just-identified)".into(),
        ));
    }
    let (zl, xl) = default_labels(l, x.ncols());
    let iv = tsls(y, d, z, x, "d", &zl, &xl, CovType::Hc1)?;
    let e = &iv.residuals;
    let n = y.len() as f64;

    let (xc, _) = with_intercept(x, &xl);
    let zx = hstack(z, &xc);
    let m = zx.ncols();

    // gbar = Z'e / n ; S = Z' diag(e^2) Z / n
    let gbar = zx.transpose() * e / n;
    let mut ze = zx.clone();
    for i in 0..zx.nrows() {
        let ei = e[i];
        for j in 0..m {
            ze[(i, j)] *= ei;
        }
    }
    let s = ze.transpose() * &ze / n;
    let (s_inv, flagged) = sym_pinv(&s, PINV_TOL);
    let j_stat = n * (gbar.transpose() * s_inv * &gbar)[(0, 0)];
    let df = l - 1;
    Ok((
        TestStat {
            statistic: j_stat,
            df,
            p_value: chi2_sf(j_stat, df as f64),
        },
        flagged,
    ))
}

/// Residualize `v` on `[x | const]`.
fn partial_out(v: &DVector<f64>, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let labels: Vec<String> = (0..x.ncols()).map(|j| format!("x{}", j)).collect();
    let fit = ols(v, x, &labels, CovType::Classical)?;
    Ok(fit.residuals)
}

/// Kleibergen-Paap rk LM underidentification test (K = 1 form): robust
/// quadratic form of the partialled-out first-stage instrument coefficients.
/// Chi-square with L - K + 1 = L degrees of freedom, with a flag for
/// pseudo-inverted covariance.
pub fn kp_rk_lm(
    d: &DVector<f64>,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<(TestStat, bool)> {
    let l = z.ncols();
    let n = d.len();
    let d_t = partial_out(d, x)?;
    let mut z_t = DMatrix::zeros(n, l);
    for j in 0..l {
        let col = DVector::from_iterator(n, z.column(j).iter().cloned());
        z_t.set_column(j, &partial_out(&col, x)?);
    }

    // no intercept: both sides already residualized
    let fit = crate::linalg::lstsq(
        &z_t,
        &d_t,
        &(0..l).map(|j| format!("z{}", j)).collect::<Vec<_>>(),
    )?;
    let e = &d_t - &z_t * &fit.coef;

    // HC0 covariance of the coefficients
    let mut ze = z_t.clone();
    for i in 0..n {
        let ei = e[i];
        for j in 0..l {
            ze[(i, j)] *= ei;
        }
    }
    let meat = ze.transpose() * &ze;
    let cov = &fit.xtx_inv * meat * &fit.xtx_inv;
    let (cov_inv, flagged) = sym_pinv(&cov, PINV_TOL);
    let pi = DMatrix::from_column_slice(l, 1, fit.coef.as_slice());
    let stat = (pi.transpose() * cov_inv * &pi)[(0, 0)];
    Ok((
        TestStat {
            statistic: stat,
            df: l,
            p_value: chi2_sf(stat, l as f64),
        },
        flagged,
    ))
}

/// Cragg-Donald statistic for K = 1: the homoskedastic first-stage F on the
/// instruments after partialling out the exogenous controls. Equals the
/// minimum-eigenvalue statistic in this configuration.
pub fn cragg_donald_f(
    d: &DVector<f64>,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<f64> {
    let l = z.ncols();
    let n = d.len();
    let (xc, _) = with_intercept(x, &default_labels(0, x.ncols()).1);
    let kx = xc.ncols();

    let d_t = partial_out(d, x)?;
    let mut z_t = DMatrix::zeros(n, l);
    for j in 0..l {
        let col = DVector::from_iterator(n, z.column(j).iter().cloned());
        z_t.set_column(j, &partial_out(&col, x)?);
    }
    let fit = crate::linalg::lstsq(
        &z_t,
        &d_t,
        &(0..l).map(|j| format!("z{}", j)).collect::<Vec<_>>(),
    )?;
    let e = &d_t - &z_t * &fit.coef;
    let rss1 = e.norm_squared();
    let rss0 = d_t.norm_squared();
    let df2 = n - l - kx;
    if df2 == 0 {
        return Err(Error::InvalidDesign("no residual degrees of freedom".into()));
    }
    let f = ((rss0 - rss1) / l as f64) / (rss1 / df2 as f64);
    Ok(if f.is_finite() { f } else { F_CAP })
}

/// Robust Wald test that all instrument coefficients in the first stage are
/// jointly zero, divided by L; F(L, n - cols). Returns the stat, the
/// denominator df, and a pseudo-inverse flag.
pub fn first_stage_robust_f(
    d: &DVector<f64>,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<(TestStat, usize, bool)> {
    let l = z.ncols();
    let (zl, xl) = default_labels(l, x.ncols());
    let stage1 = first_stage(d, z, x, &zl, &xl, CovType::Hc1)?;

    // instrument block of the robust covariance (instruments come first)
    let v_zz = stage1.covariance.view((0, 0), (l, l)).into_owned();
    let (v_inv, flagged) = sym_pinv(&v_zz, PINV_TOL);
    let b = DMatrix::from_column_slice(l, 1, &stage1.coefficients[..l]);
    let wald = (b.transpose() * v_inv * &b)[(0, 0)];
    let f = (wald / l as f64).min(F_CAP);
    let df2 = stage1.df;
    Ok((
        TestStat {
            statistic: f,
            df: l,
            p_value: f_sf(f, l as f64, df2 as f64),
        },
        df2,
        flagged,
    ))
}

/// Compares a Cragg-Donald F against the embedded Stock-Yogo table.
/// Missing (L, K) entries yield `NoCriticalValue`, never a guess.
pub fn stock_yogo_verdict(cd_f: f64, l: usize, k: usize) -> StockYogoVerdict {
    let entry = if k == 1 {
        STOCK_YOGO_K1.iter().find(|(ll, _, _, _)| *ll == l)
    } else {
        None
    };
    match entry {
        Some((_, bias, s10, s15)) => StockYogoVerdict {
            cragg_donald_f: cd_f,
            relative_bias_5pct: *bias,
            size_10pct: Some(*s10),
            size_15pct: Some(*s15),
            relative_bias_5pct_verdict: match bias {
                Some(b) if cd_f > *b => Verdict::Pass,
                Some(_) => Verdict::Fail,
                None => Verdict::NoCriticalValue,
            },
            size_10pct_verdict: if cd_f > *s10 { Verdict::Pass } else { Verdict::Fail },
            size_15pct_verdict: if cd_f > *s15 { Verdict::Pass } else { Verdict::Fail },
        },
        None => StockYogoVerdict {
            cragg_donald_f: cd_f,
            relative_bias_5pct: None,
            size_10pct: None,
            size_15pct: None,
            relative_bias_5pct_verdict: Verdict::NoCriticalValue,
            size_10pct_verdict: Verdict::NoCriticalValue,
            size_15pct_verdict: Verdict::NoCriticalValue,
        },
    }
}

/// Runs the full battery for one outcome.
pub fn run_battery(
    y: &DVector<f64>,
    d: &DVector<f64>,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<DiagnosticsReport> {
    let l = z.ncols();
    let (dwh_chi2, dwh_f, dwh_df2) = dwh_endogeneity_test(y, d, z, x)?;
    let (hansen, mut flagged) = match hansen_j(y, d, z, x) {
        Ok((t, f)) => (Some(t), f),
        Err(Error::InvalidDesign(_)) => (None, false),
        Err(e) => return Err(e),
    };
    let (kp, kp_flag) = kp_rk_lm(d, z, x)?;
    flagged |= kp_flag;
    let cd = cragg_donald_f(d, z, x)?;
    let (fs_f, fs_df2, fs_flag) = first_stage_robust_f(d, z, x)?;
    flagged |= fs_flag;
    Ok(DiagnosticsReport {
        dwh_chi2,
        dwh_f,
        dwh_f_df2: dwh_df2,
        hansen_j: hansen,
        kp_rk_lm: kp,
        cragg_donald_f: cd,
        min_eigenvalue: cd,
        first_stage_robust_f: fs_f,
        first_stage_f_df2: fs_df2,
        stock_yogo: stock_yogo_verdict(cd, l, 1),
        pinv_flagged: flagged,
    })
}

fn default_labels(l: usize, kx: usize) -> (Vec<String>, Vec<String>) {
    (
        (0..l).map(|j| format!("z{}", j)).collect(),
        (0..kx).map(|j| format!("x{}", j)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn simple_design(n: usize, l: usize, seed: u64) -> (DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, l, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let d = DVector::from_fn(n, |i, _| {
            (0..l).map(|j| 0.5 * z[(i, j)]).sum::<f64>()
                + 0.3 * x[(i, 0)]
                + rng.sample::<f64, _>(StandardNormal)
        });
        let y = DVector::from_fn(n, |i, _| {
            2.0 * d[i] + x[(i, 1)] + rng.sample::<f64, _>(StandardNormal)
        });
        (y, d, z, x)
    }

    #[test]
    fn hansen_just_identified_is_error() {
        let (y, d, z, x) = simple_design(200, 1, 1);
        match hansen_j(&y, &d, &z, &x) {
            Err(Error::InvalidDesign(msg)) => assert!(msg.contains("df = 0")),
            other => panic!("expected error, got {:?}", other.map(|(t, _)| t.statistic)),
        }
    }

    #[test]
    fn hansen_invariant_to_instrument_mixing() {
        let (y, d, z, x) = simple_design(400, 3, 2);
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, -1.0, 2.0, 1.0, 0.0, 1.0, 3.0]);
        let z2 = &z * &a;
        let (j1, _) = hansen_j(&y, &d, &z, &x).unwrap();
        let (j2, _) = hansen_j(&y, &d, &z2, &x).unwrap();
        let rel = (j1.statistic - j2.statistic).abs() / j1.statistic.max(1e-12);
        assert!(rel < 1e-6, "J changed under reparameterization: {} vs {}", j1.statistic, j2.statistic);
    }

    #[test]
    fn cragg_donald_equals_squared_t_single_instrument() {
        let (_, d, z, x) = simple_design(300, 1, 3);
        let cd = cragg_donald_f(&d, &z, &x).unwrap();
        let stage1 = first_stage(
            &d,
            &z,
            &x,
            &["z0".to_string()],
            &["x0".to_string(), "x1".to_string()],
            CovType::Classical,
        )
        .unwrap();
        let t = stage1.coefficients[0] / stage1.standard_errors[0];
        assert_abs_diff_eq!(cd, t * t, epsilon = 1e-6 * cd.abs());
    }

    #[test]
    fn classical_first_stage_f_equals_cragg_donald() {
        // homoskedastic-covariance Wald on instruments / L == CD F (K = 1)
        let (_, d, z, x) = simple_design(250, 3, 4);
        let cd = cragg_donald_f(&d, &z, &x).unwrap();
        let stage1 = first_stage(
            &d,
            &z,
            &x,
            &["z0", "z1", "z2"].map(String::from),
            &["x0", "x1"].map(String::from),
            CovType::Classical,
        )
        .unwrap();
        let v_zz = stage1.covariance.view((0, 0), (3, 3)).into_owned();
        let b = DMatrix::from_column_slice(3, 1, &stage1.coefficients[..3]);
        let wald = (b.transpose() * v_zz.try_inverse().unwrap() * &b)[(0, 0)];
        assert_abs_diff_eq!(cd, wald / 3.0, epsilon = 1e-6 * cd);
    }

    #[test]
    fn stock_yogo_reference_thresholds() {
        let v = stock_yogo_verdict(507.350, 3, 1);
        assert_eq!(v.relative_bias_5pct, Some(13.91));
        assert_eq!(v.size_10pct, Some(22.30));
        assert_eq!(v.size_15pct, Some(12.83));
        assert_eq!(v.relative_bias_5pct_verdict, Verdict::Pass);
        assert_eq!(v.size_10pct_verdict, Verdict::Pass);
        assert_eq!(v.size_15pct_verdict, Verdict::Pass);

        let mid = stock_yogo_verdict(13.0, 3, 1);
        assert_eq!(mid.size_10pct_verdict, Verdict::Fail);
        assert_eq!(mid.size_15pct_verdict, Verdict::Pass);

        let zero = stock_yogo_verdict(0.0, 3, 1);
        assert_eq!(zero.relative_bias_5pct_verdict, Verdict::Fail);
        assert_eq!(zero.size_10pct_verdict, Verdict::Fail);
        assert_eq!(zero.size_15pct_verdict, Verdict::Fail);

        let missing = stock_yogo_verdict(10.0, 9, 1);
        assert_eq!(missing.size_10pct_verdict, Verdict::NoCriticalValue);
    }

    #[test]
    fn deterministic_battery() {
        let (y, d, z, x) = simple_design(300, 3, 9);
        let a = run_battery(&y, &d, &z, &x).unwrap();
        let b = run_battery(&y, &d, &z, &x).unwrap();
        assert_eq!(a.dwh_chi2.statistic.to_bits(), b.dwh_chi2.statistic.to_bits());
        assert_eq!(a.cragg_donald_f.to_bits(), b.cragg_donald_f.to_bits());
        assert_eq!(a.kp_rk_lm.statistic.to_bits(), b.kp_rk_lm.statistic.to_bits());
    }

    #[test]
    fn deterministic_first_stage_caps_f() {
        // d is an exact linear function of the instrument: zero residuals
        let n = 50;
        let z = DMatrix::from_fn(n, 1, |i, _| i as f64 / n as f64);
        let x = DMatrix::from_fn(n, 1, |i, _| ((i * 13) % 7) as f64);
        let d = DVector::from_fn(n, |i, _| z[(i, 0)]);
        let (f, _, _) = first_stage_robust_f(&d, &z, &x).unwrap();
        assert!(f.statistic >= 1e10, "expected capped/huge F, got {}", f.statistic);
        assert!(f.p_value <= 1e-10);
    }
}
