//! Text renderers for regression tables and the diagnostics battery.

use crate::diagnostics::{DiagnosticsReport, StockYogoVerdict, Verdict};
use crate::estimator::ResultExport;
use crate::robustness::WindowReport;

/// Significance stars at the 0.05 / 0.01 / 0.001 thresholds.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// One table cell: coefficient with stars, standard error in parentheses,
/// e.g. `2.816*** (0.331)`.
pub fn format_cell(coef: f64, se: f64, p: f64) -> String {
    format!("{:.3}{} ({:.3})", coef, stars(p), se)
}

fn pad(s: &str, w: usize) -> String {
    format!("{:<w$}", s, w = w)
}

/// Coefficient table with one column per (titled) result, rows being the
/// union of coefficient labels in first-seen order.
pub fn render_estimates(title: &str, columns: &[(String, &ResultExport)]) -> String {
    let mut row_labels: Vec<&str> = Vec::new();
    for (_, res) in columns {
        for l in &res.labels {
            if !row_labels.contains(&l.as_str()) {
                row_labels.push(l);
            }
        }
    }
    let mut cells: Vec<Vec<String>> = Vec::new();
    for label in &row_labels {
        let mut row = vec![label.to_string()];
        for (_, res) in columns {
            match res.labels.iter().position(|l| l == label) {
                Some(i) => row.push(format_cell(
                    res.coefficients[i],
                    res.standard_errors[i],
                    res.p_values[i],
                )),
                None => row.push(String::new()),
            }
        }
        cells.push(row);
    }
    cells.push({
        let mut row = vec!["N".to_string()];
        row.extend(columns.iter().map(|(_, r)| r.n.to_string()));
        row
    });
    cells.push({
        let mut row = vec!["R2".to_string()];
        row.extend(columns.iter().map(|(_, r)| format!("{:.3}", r.r_squared)));
        row
    });

    let mut header = vec![String::new()];
    header.extend(columns.iter().map(|(t, _)| t.clone()));
    let ncols = header.len();
    let mut widths = vec![0usize; ncols];
    for row in std::iter::once(&header).chain(cells.iter()) {
        for (j, c) in row.iter().enumerate() {
            widths[j] = widths[j].max(c.len());
        }
    }

    let mut out = String::new();
    out.push_str(title);
    out.push('\n');
    let render_row = |row: &[String]| -> String {
        row.iter()
            .enumerate()
            .map(|(j, c)| pad(c, widths[j]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    out.push_str(&render_row(&header));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (ncols - 1)));
    out.push('\n');
    for row in &cells {
        out.push_str(&render_row(row));
        out.push('\n');
    }
    out.push_str("* p<0.05, ** p<0.01, *** p<0.001; standard errors in parentheses\n");
    out
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::NoCriticalValue => "n/a",
    }
}

fn sy_line(v: &StockYogoVerdict) -> String {
    let cv = |c: Option<f64>| c.map_or("—".to_string(), |x| format!("{:.2}", x));
    format!(
        "Stock-Yogo critical values: 5% rel. bias {} ({}), 10% size {} ({}), 15% size {} ({})",
        cv(v.relative_bias_5pct),
        verdict_str(v.relative_bias_5pct_verdict),
        cv(v.size_10pct),
        verdict_str(v.size_10pct_verdict),
        cv(v.size_15pct),
        verdict_str(v.size_15pct_verdict),
    )
}

/// Diagnostics battery in the validity-table layout.
pub fn render_diagnostics(title: &str, r: &DiagnosticsReport) -> String {
    let mut out = String::new();
    out.push_str(title);
    out.push('\n');
    out.push_str(&format!(
        "(1) Endogeneity: robust score chi2({}) = {:.3} (p = {:.4}); robust F({}, {}) = {:.3} (p = {:.4})\n",
        r.dwh_chi2.df, r.dwh_chi2.statistic, r.dwh_chi2.p_value,
        r.dwh_f.df, r.dwh_f_df2, r.dwh_f.statistic, r.dwh_f.p_value,
    ));
    match &r.hansen_j {
        Some(j) => out.push_str(&format!(
            "(2) Overidentification: Hansen J chi2({}) = {:.3} (p = {:.4})\n",
            j.df, j.statistic, j.p_value
        )),
        None => out.push_str("(2) Overidentification: not applicable (just-identified)\n"),
    }
    out.push_str(&format!(
        "(3) Underidentification: Kleibergen-Paap rk LM chi2({}) = {:.3} (p = {:.4})\n",
        r.kp_rk_lm.df, r.kp_rk_lm.statistic, r.kp_rk_lm.p_value
    ));
    out.push_str(&format!(
        "(4) Weak instruments: Cragg-Donald Wald F = {:.3}; minimum eigenvalue = {:.3}\n",
        r.cragg_donald_f, r.min_eigenvalue
    ));
    out.push_str(&format!(
        "    First-stage robust F({}, {}) = {:.3} (p = {:.4})\n",
        r.first_stage_robust_f.df, r.first_stage_f_df2,
        r.first_stage_robust_f.statistic, r.first_stage_robust_f.p_value
    ));
    out.push_str(&format!("    {}\n", sy_line(&r.stock_yogo)));
    if r.pinv_flagged {
        out.push_str("    note: near-singular robust covariance; pseudo-inverse used\n");
    }
    out
}

/// Topic keyword table: one row per topic with its top terms.
pub fn render_keywords(keywords: &[Vec<String>]) -> String {
    let mut out = String::from("topic  keywords\n");
    for (k, words) in keywords.iter().enumerate() {
        out.push_str(&format!("{:<5}  {}\n", k, words.join(", ")));
    }
    out
}

/// Window-sensitivity sweep table.
pub fn render_windows(reports: &[WindowReport]) -> String {
    let mut out = String::from("window  robust_F     min_eigenvalue  cragg_donald_F\n");
    for r in reports {
        out.push_str(&format!(
            "{:<6}  {:<11.3}  {:<14.3}  {:<14.3}\n",
            r.window, r.first_stage_robust_f, r.min_eigenvalue, r.cragg_donald_f
        ));
    }
    out
}
