//! Tail probabilities for the test battery.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, StudentsT};

/// P(X > x) for X ~ chi-square(df).
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let d = ChiSquared::new(df).expect("df > 0");
    (1.0 - d.cdf(x)).clamp(0.0, 1.0)
}

/// P(X > x) for X ~ F(df1, df2).
pub fn f_sf(x: f64, df1: f64, df2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if !x.is_finite() {
        return 0.0;
    }
    let d = FisherSnedecor::new(df1, df2).expect("positive dfs");
    (1.0 - d.cdf(x)).clamp(0.0, 1.0)
}

/// Two-sided p-value for a t-statistic with `df` degrees of freedom.
pub fn t_pvalue(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let d = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - d.cdf(t.abs()))).clamp(0.0, 1.0)
}
