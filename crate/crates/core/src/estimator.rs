//! Linear estimators: OLS, two-stage least squares, and two-way fixed effects,
//! all with heteroskedasticity-robust sandwich covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::t_pvalue;
use crate::error::{Error, Result};
use crate::linalg::lstsq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
#[derive(Default)]
pub enum CovType {
    Classical,
    Hc0,
    #[default]
    Hc1,
}


impl std::str::FromStr for CovType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "classical" => Ok(CovType::Classical),
            "hc0" => Ok(CovType::Hc0),
            "hc1" => Ok(CovType::Hc1),
            other => Err(Error::InvalidConfig(format!("unknown cov_type '{}'", other))),
        }
    }
}

/// Outcome, treatment, instruments, and exogenous controls for one estimation.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub y: DVector<f64>,
    pub d: DVector<f64>,
    pub z: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub z_labels: Vec<String>,
    pub x_labels: Vec<String>,
}

impl DesignMatrix {
    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.d.len() != n || self.z.nrows() != n || self.x.nrows() != n {
            return Err(Error::InvalidDesign("row count mismatch".into()));
        }
        let finite = self.y.iter().all(|v| v.is_finite())
            && self.d.iter().all(|v| v.is_finite())
            && self.z.iter().all(|v| v.is_finite())
            && self.x.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidDesign("non-finite entry in design".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in self.z_labels.iter().chain(self.x_labels.iter()) {
            if !seen.insert(l) {
                return Err(Error::InvalidDesign(format!("duplicate column label '{}'", l)));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub standard_errors: Vec<f64>,
    pub residuals: DVector<f64>,
    pub fitted: DVector<f64>,
    pub r_squared: f64,
    pub n: usize,
    pub df: usize,
    pub cov_type: CovType,
}

impl EstimateResult {
    pub fn t_stats(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.standard_errors)
            .map(|(c, s)| c / s)
            .collect()
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.t_stats()
            .iter()
            .map(|&t| t_pvalue(t, self.df as f64))
            .collect()
    }

    pub fn coef(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.coefficients[i])
    }

    pub fn se(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.standard_errors[i])
    }

    pub fn export(&self) -> ResultExport {
        ResultExport {
            labels: self.labels.clone(),
            coefficients: self.coefficients.clone(),
            standard_errors: self.standard_errors.clone(),
            p_values: self.p_values(),
            cov_type: self.cov_type,
            n: self.n,
            df: self.df,
            r_squared: self.r_squared,
        }
    }
}

/// Serializable slice of an [`EstimateResult`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultExport {
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub p_values: Vec<f64>,
    pub cov_type: CovType,
    pub n: usize,
    pub df: usize,
    pub r_squared: f64,
}

/// Appends an intercept column unless one (any constant nonzero column) is
/// already present.
pub fn with_intercept(m: &DMatrix<f64>, labels: &[String]) -> (DMatrix<f64>, Vec<String>) {
    let has_const = (0..m.ncols()).any(|j| {
        let c = m.column(j);
        if c.is_empty() {
            return false;
        }
        let first = c[0];
        first != 0.0 && c.iter().all(|&v| v == first)
    });
    if has_const {
        return (m.clone(), labels.to_vec());
    }
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, m.ncols() + 1);
    out.view_mut((0, 0), (n, m.ncols())).copy_from(m);
    for i in 0..n {
        out[(i, m.ncols())] = 1.0;
    }
    let mut l = labels.to_vec();
    l.push("const".to_string());
    (out, l)
}

pub fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(b.nrows(), n);
    let mut out = DMatrix::zeros(n, a.ncols() + b.ncols());
    out.view_mut((0, 0), (n, a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (n, b.ncols())).copy_from(b);
    out
}

pub fn col_matrix(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// Sandwich covariance for a least-squares fit with design `w`, residuals `e`,
/// and bread `(W'W)^-1`.
fn covariance(
    w: &DMatrix<f64>,
    e: &DVector<f64>,
    bread: &DMatrix<f64>,
    cov_type: CovType,
) -> DMatrix<f64> {
    let n = w.nrows();
    let k = w.ncols();
    match cov_type {
        CovType::Classical => {
            let s2 = e.norm_squared() / (n - k) as f64;
            bread * s2
        }
        CovType::Hc0 | CovType::Hc1 => {
            // meat = W' diag(e^2) W
            let mut we = w.clone();
            for i in 0..n {
                let ei = e[i];
                for j in 0..k {
                    we[(i, j)] *= ei;
                }
            }
            let meat = we.transpose() * &we;
            let mut cov = bread * meat * bread;
            if cov_type == CovType::Hc1 {
                cov *= n as f64 / (n - k) as f64;
            }
            cov
        }
    }
}

fn finish(
    w: &DMatrix<f64>,
    labels: Vec<String>,
    coef: DVector<f64>,
    bread: DMatrix<f64>,
    y: &DVector<f64>,
    residuals: DVector<f64>,
    cov_type: CovType,
) -> EstimateResult {
    let n = w.nrows();
    let k = w.ncols();
    let fitted = y - &residuals;
    let covariance = covariance(w, &residuals, &bread, cov_type);
    let standard_errors: Vec<f64> = (0..k).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect();
    let ybar = y.mean();
    let tss: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let rss = residuals.norm_squared();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN };
    EstimateResult {
        labels,
        coefficients: coef.as_slice().to_vec(),
        covariance,
        standard_errors,
        residuals,
        fitted,
        r_squared,
        n,
        df: n - k,
        cov_type,
    }
}

/// Ordinary least squares of `y` on `regressors` (intercept appended if absent).
pub fn ols(
    y: &DVector<f64>,
    regressors: &DMatrix<f64>,
    labels: &[String],
    cov_type: CovType,
) -> Result<EstimateResult> {
    let (w, wl) = with_intercept(regressors, labels);
    let fit = lstsq(&w, y, &wl)?;
    let residuals = y - &w * &fit.coef;
    Ok(finish(&w, wl, fit.coef, fit.xtx_inv, y, residuals, cov_type))
}

/// First-stage regression of the treatment on instruments plus controls
/// (linear probability form). Instrument columns come first in the result.
pub fn first_stage(
    d: &DVector<f64>,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
    z_labels: &[String],
    x_labels: &[String],
    cov_type: CovType,
) -> Result<EstimateResult> {
    let zx = hstack(z, x);
    let mut labels = z_labels.to_vec();
    labels.extend_from_slice(x_labels);
    ols(d, &zx, &labels, cov_type)
}

/// Two-stage least squares. The treatment is projected onto span[Z|X]; the
/// reported covariance uses residuals recomputed with the original treatment.
#[allow(clippy::too_many_arguments)]
pub fn tsls(
    y: &DVector<f64>,
    d: &DVector<f64>,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
    d_label: &str,
    z_labels: &[String],
    x_labels: &[String],
    cov_type: CovType,
) -> Result<EstimateResult> {
    if z.ncols() == 0 {
        return Err(Error::InvalidDesign("no instruments supplied".into()));
    }
    let stage1 = first_stage(d, z, x, z_labels, x_labels, cov_type)?;
    let d_hat = &stage1.fitted;

    let (x_c, mut labels) = with_intercept(x, x_labels);
    let w = hstack(&col_matrix(d_hat), &x_c);
    labels.insert(0, d_label.to_string());
    let fit = lstsq(&w, y, &labels)?;

    // structural residuals with the original treatment
    let w_orig = hstack(&col_matrix(d), &x_c);
    let residuals = y - &w_orig * &fit.coef;

    Ok(finish(&w, labels, fit.coef, fit.xtx_inv, y, residuals, cov_type))
}

/// Two-way fixed effects: demean by unit and time (grand mean added back),
/// then OLS without an intercept. Unit and time effects are absorbed.
pub fn twfe(
    y: &DVector<f64>,
    regressors: &DMatrix<f64>,
    labels: &[String],
    unit_ids: &[usize],
    time_ids: &[usize],
    cov_type: CovType,
) -> Result<EstimateResult> {
    let n = y.len();
    if regressors.nrows() != n || unit_ids.len() != n || time_ids.len() != n {
        return Err(Error::InvalidDesign("row count mismatch".into()));
    }
    let n_units = unit_ids.iter().collect::<std::collections::HashSet<_>>().len();
    let n_times = time_ids.iter().collect::<std::collections::HashSet<_>>().len();
    if n_units < 2 || n_times < 2 {
        return Err(Error::InvalidDesign(format!(
            "TWFE needs >= 2 units and >= 2 periods, got {} units x {} periods",
            n_units, n_times
        )));
    }

    let demean = |v: &DVector<f64>| -> DVector<f64> {
        let mut unit_sum = std::collections::HashMap::<usize, (f64, usize)>::new();
        let mut time_sum = std::collections::HashMap::<usize, (f64, usize)>::new();
        for i in 0..n {
            let u = unit_sum.entry(unit_ids[i]).or_insert((0.0, 0));
            u.0 += v[i];
            u.1 += 1;
            let t = time_sum.entry(time_ids[i]).or_insert((0.0, 0));
            t.0 += v[i];
            t.1 += 1;
        }
        let grand = v.mean();
        DVector::from_fn(n, |i, _| {
            let (us, uc) = unit_sum[&unit_ids[i]];
            let (ts, tc) = time_sum[&time_ids[i]];
            v[i] - us / uc as f64 - ts / tc as f64 + grand
        })
    };

    let y_w = demean(y);
    let k = regressors.ncols();
    let mut w = DMatrix::zeros(n, k);
    for j in 0..k {
        let col = DVector::from_iterator(n, regressors.column(j).iter().cloned());
        w.set_column(j, &demean(&col));
    }

    let fit = lstsq(&w, &y_w, labels)?;
    let residuals = &y_w - &w * &fit.coef;

    // absorbed effects consume (n_units - 1) + (n_times - 1) + 1 parameters;
    // a saturated panel (df = 0) still has well-defined coefficients with an
    // exact fit, so only k + absorbed > n is an error
    let absorbed = n_units + n_times - 1;
    if n < k + absorbed {
        return Err(Error::InvalidDesign("insufficient degrees of freedom".into()));
    }
    let df = n - k - absorbed;

    let n_f = n as f64;
    let cov = match cov_type {
        CovType::Classical => {
            let s2 = if df > 0 {
                residuals.norm_squared() / df as f64
            } else {
                0.0
            };
            &fit.xtx_inv * s2
        }
        CovType::Hc0 | CovType::Hc1 => {
            let mut we = w.clone();
            for i in 0..n {
                let ei = residuals[i];
                for j in 0..k {
                    we[(i, j)] *= ei;
                }
            }
            let meat = we.transpose() * &we;
            let mut c = &fit.xtx_inv * meat * &fit.xtx_inv;
            if cov_type == CovType::Hc1 && df > 0 {
                c *= n_f / df as f64;
            }
            c
        }
    };
    let standard_errors: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let fitted = y - &residuals;
    let ybar_w = y_w.mean();
    let tss: f64 = y_w.iter().map(|v| (v - ybar_w) * (v - ybar_w)).sum();
    let rss = residuals.norm_squared();
    Ok(EstimateResult {
        labels: labels.to_vec(),
        coefficients: fit.coef.as_slice().to_vec(),
        covariance: cov,
        standard_errors,
        residuals,
        fitted,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN },
        n,
        df,
        cov_type,
    })
}
