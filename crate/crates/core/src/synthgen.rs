//! Synthetic panels from a known data-generating process, with controllable
//! endogeneity and instrument strength. This is the ground-truth oracle used
//! to validate the whole estimation pipeline.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::estimator::{self, CovType, DesignMatrix, EstimateResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentKind {
    Continuous,
    BinaryThreshold,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n_scholars: usize,
    pub n_years: usize,
    pub beta0: f64,
    /// True treatment effect.
    pub true_beta1: f64,
    /// Endogeneity: correlation between the treatment and outcome errors.
    pub rho: f64,
    /// Instrument strength, one entry per instrument.
    pub gamma: Vec<f64>,
    pub treatment_kind: TreatmentKind,
    /// Per-instrument validity; `false` loads the instrument directly on the
    /// outcome, violating the exclusion restriction.
    pub instrument_validity: Vec<bool>,
    pub invalid_loading: f64,
    pub control_count: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n_scholars: 500,
            n_years: 20,
            beta0: 1.0,
            true_beta1: 2.0,
            rho: 0.5,
            gamma: vec![0.5, 0.5, 0.5],
            treatment_kind: TreatmentKind::Continuous,
            instrument_validity: vec![true, true, true],
            invalid_loading: 0.3,
            control_count: 12,
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rho.abs() >= 1.0 {
            return Err(Error::InvalidConfig(format!("|rho| must be < 1, got {}", self.rho)));
        }
        if self.noise_sd <= 0.0 {
            return Err(Error::InvalidConfig("noise_sd must be > 0".into()));
        }
        if self.gamma.len() != self.instrument_validity.len() {
            return Err(Error::InvalidConfig(
                "gamma and instrument_validity lengths differ".into(),
            ));
        }
        if self.n_scholars == 0 || self.n_years == 0 {
            return Err(Error::InvalidConfig("empty panel dimensions".into()));
        }
        Ok(())
    }

    /// Fixed control loadings: delta (treatment equation) and beta2
    /// (outcome equation).
    pub fn control_coefs(&self) -> (Vec<f64>, Vec<f64>) {
        let delta = vec![0.3; self.control_count];
        let beta2 = vec![0.5; self.control_count];
        (delta, beta2)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta0: f64,
    pub beta1: f64,
    pub rho: f64,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub beta2: Vec<f64>,
    pub instrument_validity: Vec<bool>,
    pub treatment_kind: TreatmentKind,
    pub seed: u64,
    pub clamped_outcomes: usize,
}

pub struct Generated {
    pub design: DesignMatrix,
    pub truth: GroundTruth,
}

/// Draws one panel. Each (scholar, year) cell uses its own ChaCha8 stream
/// (stream id = scholar * n_years + year index), so any subset of cells is
/// reproducible independent of generation order.
pub fn generate(config: &DgpConfig) -> Result<Generated> {
    config.validate()?;
    let n = config.n_scholars * config.n_years;
    let l = config.gamma.len();
    let c = config.control_count;
    let (delta, beta2) = config.control_coefs();
    let rho = config.rho;
    let sd = config.noise_sd;

    let mut y = DVector::zeros(n);
    let mut d = DVector::zeros(n);
    let mut z = DMatrix::zeros(n, l);
    let mut x = DMatrix::zeros(n, c);
    let mut clamped = 0usize;

    for i in 0..config.n_scholars {
        for t in 0..config.n_years {
            let row = i * config.n_years + t;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream((i * config.n_years + t) as u64);

            for j in 0..l {
                z[(row, j)] = rng.sample::<f64, _>(StandardNormal);
            }
            for j in 0..c {
                x[(row, j)] = rng.sample::<f64, _>(StandardNormal);
            }
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            let u = sd * e1;
            let eps = sd * (rho * e1 + (1.0 - rho * rho).sqrt() * e2);

            let mut latent = u;
            for j in 0..l {
                latent += config.gamma[j] * z[(row, j)];
            }
            for j in 0..c {
                latent += delta[j] * x[(row, j)];
            }
            let treat = match config.treatment_kind {
                TreatmentKind::Continuous => latent,
                TreatmentKind::BinaryThreshold => {
                    if latent > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            d[row] = treat;

            let mut out = config.beta0 + config.true_beta1 * treat + eps;
            for j in 0..c {
                out += beta2[j] * x[(row, j)];
            }
            for j in 0..l {
                if !config.instrument_validity[j] {
                    out += config.invalid_loading * z[(row, j)];
                }
            }
            if out < 0.0 {
                clamped += 1; // tracked but not clamped in-memory
            }
            y[row] = out;
        }
    }

    let z_labels: Vec<String> = (0..l).map(|j| format!("z{}", j)).collect();
    let x_labels: Vec<String> = (0..c).map(|j| format!("x{}", j)).collect();
    Ok(Generated {
        design: DesignMatrix {
            y,
            d,
            z,
            x,
            z_labels,
            x_labels,
        },
        truth: GroundTruth {
            beta0: config.beta0,
            beta1: config.true_beta1,
            rho: config.rho,
            gamma: config.gamma.clone(),
            delta,
            beta2,
            instrument_validity: config.instrument_validity.clone(),
            treatment_kind: config.treatment_kind,
            seed: config.seed,
            clamped_outcomes: clamped,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ols,
    Tsls,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub mean_estimate: f64,
    pub mean_bias: f64,
    pub rmse: f64,
    pub empirical_se: f64,
    pub mean_reported_se: f64,
    pub ci95_coverage: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub replications: usize,
    pub estimators: Vec<EstimatorSummary>,
    /// Rejection rates at nominal 5%.
    pub dwh_rejection: f64,
    pub hansen_rejection: Option<f64>,
    pub kp_rejection: f64,
    pub mean_cragg_donald_f: f64,
}

fn estimate_beta1(design: &DesignMatrix, kind: EstimatorKind) -> Result<EstimateResult> {
    match kind {
        EstimatorKind::Ols => {
            let regs = estimator::hstack(&estimator::col_matrix(&design.d), &design.x);
            let mut labels = vec!["d".to_string()];
            labels.extend(design.x_labels.iter().cloned());
            estimator::ols(&design.y, &regs, &labels, CovType::Hc1)
        }
        EstimatorKind::Tsls => estimator::tsls(
            &design.y,
            &design.d,
            &design.z,
            &design.x,
            "d",
            &design.z_labels,
            &design.x_labels,
            CovType::Hc1,
        ),
    }
}

/// Runs `replications` independent draws and summarizes estimator bias,
/// RMSE, coverage, and diagnostic rejection rates. Deterministic under
/// (config.seed, replications): replication r uses seed = config.seed + r.
pub fn monte_carlo(
    config: &DgpConfig,
    replications: usize,
    estimators: &[EstimatorKind],
) -> Result<MonteCarloSummary> {
    if replications < 1 {
        return Err(Error::InvalidConfig("replications must be >= 1".into()));
    }
    config.validate()?;
    let mut estimates: Vec<Vec<f64>> = vec![Vec::with_capacity(replications); estimators.len()];
    let mut ses: Vec<Vec<f64>> = vec![Vec::with_capacity(replications); estimators.len()];
    let mut covered: Vec<usize> = vec![0; estimators.len()];

    let mut dwh_rej = 0usize;
    let mut hansen_rej = 0usize;
    let mut hansen_total = 0usize;
    let mut kp_rej = 0usize;
    let mut cd_sum = 0.0;

    for r in 0..replications {
        let mut cfg = config.clone();
        cfg.seed = config.seed.wrapping_add(r as u64);
        let g = generate(&cfg)?;

        for (ei, &kind) in estimators.iter().enumerate() {
            let res = estimate_beta1(&g.design, kind)?;
            let b = res.coef("d").unwrap();
            let se = res.se("d").unwrap();
            estimates[ei].push(b);
            ses[ei].push(se);
            if (b - 1.96 * se) <= config.true_beta1 && config.true_beta1 <= (b + 1.96 * se) {
                covered[ei] += 1;
            }
        }

        let report = diagnostics::run_battery(&g.design.y, &g.design.d, &g.design.z, &g.design.x)?;
        if report.dwh_chi2.p_value < 0.05 {
            dwh_rej += 1;
        }
        if let Some(j) = &report.hansen_j {
            hansen_total += 1;
            if j.p_value < 0.05 {
                hansen_rej += 1;
            }
        }
        if report.kp_rk_lm.p_value < 0.05 {
            kp_rej += 1;
        }
        cd_sum += report.cragg_donald_f;
    }

    let reps = replications as f64;
    let summaries = estimators
        .iter()
        .enumerate()
        .map(|(ei, &kind)| {
            let ests = &estimates[ei];
            let mean = ests.iter().sum::<f64>() / reps;
            let bias = mean - config.true_beta1;
            let rmse = (ests.iter().map(|e| (e - config.true_beta1).powi(2)).sum::<f64>() / reps).sqrt();
            let var = ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1.0).max(1.0);
            EstimatorSummary {
                estimator: kind,
                mean_estimate: mean,
                mean_bias: bias,
                rmse,
                empirical_se: var.sqrt(),
                mean_reported_se: ses[ei].iter().sum::<f64>() / reps,
                ci95_coverage: covered[ei] as f64 / reps,
            }
        })
        .collect();

    Ok(MonteCarloSummary {
        replications,
        estimators: summaries,
        dwh_rejection: dwh_rej as f64 / reps,
        hansen_rejection: if hansen_total > 0 {
            Some(hansen_rej as f64 / hansen_total as f64)
        } else {
            None
        },
        kp_rejection: kp_rej as f64 / reps,
        mean_cragg_donald_f: cd_sum / reps,
    })
}

/// Context columns the CSV emitter can carry free-form control values in.
pub const CSV_CONTROL_COLUMNS: [&str; 7] = [
    "qs_rank",
    "usnews_rank",
    "employer_reputation",
    "ln_pubs_affil",
    "ln_cites_affil",
    "ln_pubs_field",
    "ln_cites_field",
];

/// Emits the generated panel in the ingestion CSV schemas plus an aligned
/// instrument file and `ground_truth.json`. Requires binary treatment (a
/// 0/1 `funded` column cannot carry a continuous treatment) and at most 7
/// controls (the free context columns). Outcomes land in `pubs.csv` as one
/// publication per scholar-year with `citations = y`; negative draws are
/// clamped to zero and counted in the ground truth.
pub fn write_dataset(config: &DgpConfig, dir: &Path) -> Result<GroundTruth> {
    if config.treatment_kind != TreatmentKind::BinaryThreshold {
        return Err(Error::InvalidConfig(
            "CSV emission requires treatment_kind = binary_threshold".into(),
        ));
    }
    if config.control_count > CSV_CONTROL_COLUMNS.len() {
        return Err(Error::InvalidConfig(format!(
            "CSV emission supports at most {} controls",
            CSV_CONTROL_COLUMNS.len()
        )));
    }
    let g = generate(config)?;
    let mut truth = g.truth;
    let design = g.design;
    let year0 = 2000i32;
    let n_years = config.n_years;

    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let p = |name: &str| dir.join(name);

    let wtr = |name: &str| -> Result<csv::Writer<std::fs::File>> {
        csv::Writer::from_path(p(name)).map_err(|e| Error::csv(name.to_string(), e))
    };
    fn werr(name: &'static str) -> impl Fn(csv::Error) -> Error {
        move |e| Error::csv(name.to_string(), e)
    }

    let mut scholars = wtr("scholars.csv")?;
    scholars
        .write_record(["scholar_id", "gender", "gender_confidence", "first_pub_year", "affiliation_id"])
        .map_err(werr("scholars.csv"))?;
    for i in 0..config.n_scholars {
        scholars
            .write_record([
                &format!("s{}", i),
                "male",
                "0.99",
                &(year0 - 1).to_string(),
                &format!("a{}", i),
            ])
            .map_err(werr("scholars.csv"))?;
    }
    scholars.flush().map_err(|e| Error::io("scholars.csv", e))?;

    let mut grants = wtr("grants.csv")?;
    grants
        .write_record([
            "grant_id",
            "scholar_id",
            "award_year",
            "amount_usd",
            "duration_years",
            "title",
            "abstract",
            "topic_id",
        ])
        .map_err(werr("grants.csv"))?;
    let mut grant_no = 0usize;
    for i in 0..config.n_scholars {
        for t in 0..n_years {
            let row = i * n_years + t;
            if design.d[row] == 1.0 {
                grants
                    .write_record([
                        &format!("g{}", grant_no),
                        &format!("s{}", i),
                        &(year0 + t as i32).to_string(),
                        "100000",
                        "1",
                        "synthetic grant",
                        "synthetic abstract",
                        "0",
                    ])
                    .map_err(werr("grants.csv"))?;
                grant_no += 1;
            }
        }
    }
    grants.flush().map_err(|e| Error::io("grants.csv", e))?;

    let mut clamped = 0usize;
    let mut pubs = wtr("pubs.csv")?;
    pubs.write_record(["pub_id", "scholar_id", "year", "citations", "citescore", "coauthor_ids"])
        .map_err(werr("pubs.csv"))?;
    for i in 0..config.n_scholars {
        for t in 0..n_years {
            let row = i * n_years + t;
            let mut yv = design.y[row];
            if yv < 0.0 {
                yv = 0.0;
                clamped += 1;
            }
            pubs.write_record([
                &format!("p{}_{}", i, t),
                &format!("s{}", i),
                &(year0 + t as i32).to_string(),
                &format!("{}", yv),
                "1",
                "",
            ])
            .map_err(werr("pubs.csv"))?;
        }
    }
    pubs.flush().map_err(|e| Error::io("pubs.csv", e))?;
    truth.clamped_outcomes = clamped;

    let mut context = wtr("context.csv")?;
    context
        .write_record([
            "affiliation_id",
            "year",
            "qs_rank",
            "usnews_rank",
            "employer_reputation",
            "ln_pubs_affil",
            "ln_cites_affil",
            "field_id",
            "ln_pubs_field",
            "ln_cites_field",
        ])
        .map_err(werr("context.csv"))?;
    for i in 0..config.n_scholars {
        for t in 0..n_years {
            let row = i * n_years + t;
            // control j lands in CSV_CONTROL_COLUMNS[j]; unused columns are 0
            let val = |j: usize| -> String {
                if j < config.control_count {
                    format!("{}", design.x[(row, j)])
                } else {
                    "0".to_string()
                }
            };
            context
                .write_record([
                    format!("a{}", i),
                    (year0 + t as i32).to_string(),
                    val(0),
                    val(1),
                    val(2),
                    val(3),
                    val(4),
                    "f0".to_string(),
                    val(5),
                    val(6),
                ])
                .map_err(werr("context.csv"))?;
        }
    }
    context.flush().map_err(|e| Error::io("context.csv", e))?;

    let mut instr = wtr("instruments.csv")?;
    instr
        .write_record(["scholar_id", "year", "employment", "dominance", "familiarity"])
        .map_err(werr("instruments.csv"))?;
    for i in 0..config.n_scholars {
        for t in 0..n_years {
            let row = i * n_years + t;
            instr
                .write_record([
                    format!("s{}", i),
                    (year0 + t as i32).to_string(),
                    format!("{}", design.z[(row, 0)]),
                    format!("{}", design.z[(row, 1.min(design.z.ncols() - 1))]),
                    format!("{}", design.z[(row, 2.min(design.z.ncols() - 1))]),
                ])
                .map_err(werr("instruments.csv"))?;
        }
    }
    instr.flush().map_err(|e| Error::io("instruments.csv", e))?;

    let json = serde_json::to_string_pretty(&truth)?;
    std::fs::write(p("ground_truth.json"), json)
        .map_err(|e| Error::io("ground_truth.json", e))?;
    Ok(truth)
}
