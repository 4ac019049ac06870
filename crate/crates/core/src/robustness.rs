//! Placebo (pseudo-group) tests and instrument-window sensitivity sweeps.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design;
use crate::diagnostics::{self, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::estimator::{self, CovType, DesignMatrix, ResultExport};
use crate::instruments::{self, InstrumentSet, RoleRecord, TierFilter, TrainingEventRecord};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoGroup {
    PseudoTreated,
    PseudoControl,
}

/// Scholar-level pseudo assignment within the funded and unfunded groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub ratio: f64,
    pub assignment: BTreeMap<String, PseudoGroup>,
    pub n_funded: usize,
    pub n_unfunded: usize,
}

/// Splits funded scholars into pseudo-treated/pseudo-control at `ratio`, and
/// unfunded scholars likewise. Assignment is at scholar level: all of a
/// scholar's years move together. Reproducible from the seed.
pub fn pseudo_split(panel: &PanelDataset, seed: u64, ratio: f64) -> Result<Split> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!("ratio must be in [0,1], got {}", ratio)));
    }
    let mut funded: Vec<&str> = Vec::new();
    let mut unfunded: Vec<&str> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for o in &panel.observations {
        if seen.insert(o.scholar_id.as_str()) {
            if panel.grants.iter().any(|g| g.scholar_id == o.scholar_id) {
                funded.push(&o.scholar_id);
            } else {
                unfunded.push(&o.scholar_id);
            }
        }
    }
    if funded.len() < 2 || unfunded.len() < 2 {
        return Err(Error::InvalidDesign(format!(
            "pseudo split needs >= 2 scholars per group (funded {}, unfunded {})",
            funded.len(),
            unfunded.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    for group in [&mut funded, &mut unfunded] {
        // BTreeSet insertion order is panel order; shuffle then cut at ratio
        group.shuffle(&mut rng);
        let n_treated = ((group.len() as f64) * ratio).round() as usize;
        for (i, id) in group.iter().enumerate() {
            let g = if i < n_treated {
                PseudoGroup::PseudoTreated
            } else {
                PseudoGroup::PseudoControl
            };
            assignment.insert(id.to_string(), g);
        }
    }
    Ok(Split {
        seed,
        ratio,
        assignment,
        n_funded: funded.len(),
        n_unfunded: unfunded.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subgroup {
    /// Funded scholars only; pseudo-control members relabeled unfunded.
    Treated,
    /// Unfunded scholars only; pseudo-treated members relabeled funded.
    Control,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupResult {
    pub subgroup: Subgroup,
    pub outcome: String,
    pub estimate: ResultExport,
    pub diagnostics: DiagnosticsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceboRun {
    pub seed: u64,
    pub split: BTreeMap<String, PseudoGroup>,
    pub results: Vec<SubgroupResult>,
    /// Subgroup/outcome combinations whose estimation failed.
    pub failures: Vec<String>,
}

fn subgroup_design(
    panel: &PanelDataset,
    instruments: &InstrumentSet,
    split: &Split,
    outcome: &str,
    controls: &[String],
    which: Subgroup,
) -> Result<DesignMatrix> {
    let full = design::build_design(panel, instruments, outcome, controls)?;
    let keep: Vec<usize> = panel
        .observations
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            let is_funded_scholar = panel.grants.iter().any(|g| g.scholar_id == o.scholar_id);
            match which {
                Subgroup::Treated => is_funded_scholar,
                Subgroup::Control => !is_funded_scholar,
            }
        })
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::InvalidDesign("empty placebo subgroup".into()));
    }

    let mut d = DVector::zeros(keep.len());
    for (r, &i) in keep.iter().enumerate() {
        let o = &panel.observations[i];
        let group = split.assignment.get(&o.scholar_id).copied();
        // only the treatment indicator changes; y, Z, X pass through untouched
        d[r] = match which {
            Subgroup::Treated => {
                if group == Some(PseudoGroup::PseudoControl) {
                    0.0
                } else {
                    full.d[i]
                }
            }
            Subgroup::Control => {
                if group == Some(PseudoGroup::PseudoTreated) {
                    1.0
                } else {
                    full.d[i]
                }
            }
        };
    }

    Ok(DesignMatrix {
        y: full.y.select_rows(keep.iter()),
        d,
        z: full.z.select_rows(keep.iter()),
        x: full.x.select_rows(keep.iter()),
        z_labels: full.z_labels,
        x_labels: full.x_labels,
    })
}

/// Runs the Figure 1 placebo design: splits scholars with `seed`, relabels
/// the treatment indicator within each subgroup, and reruns 2SLS plus the
/// diagnostics battery per outcome. `controls = None` selects the
/// per-outcome default control set. Estimation failures are recorded per
/// subgroup while the remaining runs continue.
pub fn placebo_run(
    panel: &PanelDataset,
    instruments: &InstrumentSet,
    outcomes: &[String],
    controls: Option<&[String]>,
    seed: u64,
) -> Result<PlaceboRun> {
    for o in outcomes {
        if !matches!(o.as_str(), "article_count" | "avg_citations" | "avg_citescore") {
            return Err(Error::InvalidConfig(format!("unknown placebo outcome '{}'", o)));
        }
    }
    let split = pseudo_split(panel, seed, 0.5)?;
    let mut results = Vec::new();
    let mut failures = Vec::new();

    for outcome in outcomes {
        let controls = match controls {
            Some(c) => c.to_vec(),
            None => design::default_controls(outcome)?,
        };
        for which in [Subgroup::Treated, Subgroup::Control] {
            let run = subgroup_design(panel, instruments, &split, outcome, &controls, which)
                .and_then(|dsg| {
                    let est = estimator::tsls(
                        &dsg.y,
                        &dsg.d,
                        &dsg.z,
                        &dsg.x,
                        "funded",
                        &dsg.z_labels,
                        &dsg.x_labels,
                        CovType::Hc1,
                    )?;
                    let diag = diagnostics::run_battery(&dsg.y, &dsg.d, &dsg.z, &dsg.x)?;
                    Ok((est, diag))
                });
            match run {
                Ok((est, diag)) => results.push(SubgroupResult {
                    subgroup: which,
                    outcome: outcome.clone(),
                    estimate: est.export(),
                    diagnostics: diag,
                }),
                Err(e) => failures.push(format!("{:?}/{}: {}", which, outcome, e)),
            }
        }
    }
    Ok(PlaceboRun {
        seed,
        split: split.assignment,
        results,
        failures,
    })
}

/// Summary CSV rows: seed, outcome, subgroup, coef, se, p for the pseudo
/// funding coefficient.
pub fn placebo_summary_csv(runs: &[PlaceboRun]) -> String {
    let mut out = String::from("seed,outcome,subgroup,coef,se,p\n");
    for run in runs {
        for r in &run.results {
            let idx = r.estimate.labels.iter().position(|l| l == "funded");
            if let Some(i) = idx {
                let coef = r.estimate.coefficients[i];
                let se = r.estimate.standard_errors[i];
                let p = r.estimate.p_values[i];
                let sub = match r.subgroup {
                    Subgroup::Treated => "treated",
                    Subgroup::Control => "control",
                };
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    run.seed, r.outcome, sub, coef, se, p
                ));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: u32,
    pub first_stage_robust_f: f64,
    pub min_eigenvalue: f64,
    pub cragg_donald_f: f64,
}

/// Rebuilds the window-dependent instruments (employment and familiarity;
/// dominance does not depend on the window) for each window and re-runs the
/// first-stage strength diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn window_sensitivity(
    panel: &PanelDataset,
    roles: &[RoleRecord],
    events: &[TrainingEventRecord],
    base: &InstrumentSet,
    tier_filter: TierFilter,
    outcome: &str,
    controls: &[String],
    windows: &[u32],
) -> Result<Vec<WindowReport>> {
    if windows.is_empty() {
        return Err(Error::InvalidConfig("window list is empty".into()));
    }
    let mut reports = Vec::with_capacity(windows.len());
    for &w in windows {
        let set = InstrumentSet {
            employment: instruments::political_hegemony(roles, panel, w, tier_filter),
            dominance: base.dominance.clone(),
            familiarity: instruments::project_familiarity(events, panel, w),
            warnings: Vec::new(),
        };
        let dsg = design::build_design(panel, &set, outcome, controls)?;
        let report = diagnostics::run_battery(&dsg.y, &dsg.d, &dsg.z, &dsg.x)?;
        reports.push(WindowReport {
            window: w,
            first_stage_robust_f: report.first_stage_robust_f.statistic,
            min_eigenvalue: report.min_eigenvalue,
            cragg_donald_f: report.cragg_donald_f,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{
        ContextRecord, GrantRecord, PanelOptions, PublicationRecord, ScholarRecord,
    };

    fn toy_panel(n_scholars: usize, n_funded: usize) -> PanelDataset {
        let mut scholars = Vec::new();
        let mut grants = Vec::new();
        let mut pubs = Vec::new();
        let mut context = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..n_scholars {
            scholars.push(ScholarRecord {
                scholar_id: format!("s{}", i),
                gender: if i % 3 == 0 {
                    crate::panel::Gender::Female
                } else {
                    crate::panel::Gender::Male
                },
                gender_confidence: 0.99,
                first_pub_year: 1990 + (i % 6) as i32,
                affiliation_id: format!("a{}", i % 4),
            });
            if i < n_funded {
                grants.push(GrantRecord {
                    grant_id: format!("g{}", i),
                    scholar_id: format!("s{}", i),
                    award_year: 2002 + (i % 3) as i32,
                    amount_usd: 50_000.0 + 1_000.0 * i as f64,
                    duration_years: 2,
                    title: String::new(),
                    abstract_text: String::new(),
                    topic_id: Some(0),
                });
            }
            for year in 1997..2008 {
                pubs.push(PublicationRecord {
                    pub_id: format!("p{}_{}", i, year),
                    scholar_id: format!("s{}", i),
                    year,
                    citations: rng.gen_range(0.0..30.0),
                    citescore: rng.gen_range(0.5..8.0),
                    coauthor_ids: vec![],
                });
            }
        }
        for a in 0..4 {
            for year in 2000..2008 {
                context.push(ContextRecord {
                    affiliation_id: format!("a{}", a),
                    year,
                    qs_rank: rng.gen_range(-1.0..1.0),
                    usnews_rank: rng.gen_range(-1.0..1.0),
                    employer_reputation: rng.gen_range(-1.0..1.0),
                    ln_pubs_affil: rng.gen_range(-1.0..1.0),
                    ln_cites_affil: rng.gen_range(-1.0..1.0),
                    field_id: "f0".into(),
                    ln_pubs_field: rng.gen_range(-1.0..1.0),
                    ln_cites_field: rng.gen_range(-1.0..1.0),
                });
            }
        }
        crate::panel::assemble_panel(
            scholars,
            grants,
            pubs,
            context,
            PanelOptions { window_start: 2000, window_end: 2007, ..Default::default() },
        )
        .unwrap()
    }

    fn noise_instruments(panel: &PanelDataset, seed: u64) -> InstrumentSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = panel.n_observations();
        let draw = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        InstrumentSet {
            employment: draw(&mut rng),
            dominance: draw(&mut rng),
            familiarity: draw(&mut rng),
            warnings: vec![],
        }
    }

    #[test]
    fn split_is_partition_and_deterministic() {
        let panel = toy_panel(40, 20);
        let a = pseudo_split(&panel, 11, 0.5).unwrap();
        let b = pseudo_split(&panel, 11, 0.5).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.assignment.len(), 40);
        let treated = a
            .assignment
            .values()
            .filter(|g| **g == PseudoGroup::PseudoTreated)
            .count();
        assert_eq!(treated, 20); // 10 of each group
    }

    #[test]
    fn small_group_errors() {
        let panel = toy_panel(10, 1);
        assert!(matches!(pseudo_split(&panel, 1, 0.5), Err(Error::InvalidDesign(_))));
    }

    #[test]
    fn split_counts_binomially_centered() {
        let panel = toy_panel(30, 16);
        // ratio 0.5 over 16 funded scholars: round(16*0.5) is deterministic
        // here, so check the randomized membership instead — over many seeds
        // each scholar is pseudo-treated about half the time (binomial 3 sigma)
        let n_seeds = 1000;
        let mut count = 0usize;
        for seed in 0..n_seeds {
            let s = pseudo_split(&panel, seed, 0.5).unwrap();
            if s.assignment["s0"] == PseudoGroup::PseudoTreated {
                count += 1;
            }
        }
        let mean = n_seeds as f64 * 0.5;
        let sigma = (n_seeds as f64 * 0.25).sqrt();
        assert!(
            (count as f64 - mean).abs() < 3.0 * sigma,
            "count {} outside 3 sigma of {}",
            count,
            mean
        );
    }

    #[test]
    fn relabel_touches_only_treatment() {
        let panel = toy_panel(24, 12);
        let instr = noise_instruments(&panel, 3);
        let split = pseudo_split(&panel, 5, 0.5).unwrap();
        let controls = design::default_controls("avg_citations").unwrap();
        let full = design::build_design(&panel, &instr, "avg_citations", &controls).unwrap();
        let sub =
            subgroup_design(&panel, &instr, &split, "avg_citations", &controls, Subgroup::Treated)
                .unwrap();
        // rows of the subgroup design match the corresponding full-design rows
        // in every column except d
        let keep: Vec<usize> = panel
            .observations
            .iter()
            .enumerate()
            .filter(|(_, o)| panel.grants.iter().any(|g| g.scholar_id == o.scholar_id))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(sub.y.len(), keep.len());
        for (r, &i) in keep.iter().enumerate() {
            assert_eq!(sub.y[r], full.y[i]);
            for j in 0..3 {
                assert_eq!(sub.z[(r, j)], full.z[(i, j)]);
            }
            for j in 0..full.x.ncols() {
                assert_eq!(sub.x[(r, j)], full.x[(i, j)]);
            }
        }
        // and at least one treatment entry actually flipped
        assert!(keep.iter().enumerate().any(|(r, &i)| sub.d[r] != full.d[i]));
    }

    #[test]
    fn placebo_run_deterministic_bytes() {
        let panel = toy_panel(30, 15);
        let instr = noise_instruments(&panel, 9);
        let outs = vec!["avg_citations".to_string()];
        let a = placebo_run(&panel, &instr, &outs, None, 42).unwrap();
        let b = placebo_run(&panel, &instr, &outs, None, 42).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }

    #[test]
    fn placebo_rejects_unknown_outcome() {
        let panel = toy_panel(30, 15);
        let instr = noise_instruments(&panel, 9);
        assert!(placebo_run(&panel, &instr, &["bogus".to_string()], None, 1).is_err());
    }

    #[test]
    fn window_sensitivity_single_window_matches_main_run() {
        let panel = toy_panel(24, 12);
        let roles: Vec<RoleRecord> = (0..12)
            .map(|i| RoleRecord {
                scholar_id: format!("s{}", i),
                body: crate::instruments::Body::Nsf,
                tier: crate::instruments::Tier::Leadership,
                role_year: 2001 + (i % 4),
            })
            .collect();
        let events: Vec<TrainingEventRecord> = (0..4)
            .map(|a| TrainingEventRecord {
                affiliation_id: format!("a{}", a),
                event_year: 2002,
                kind: "training".into(),
            })
            .collect();
        let base = InstrumentSet {
            employment: instruments::political_hegemony(&roles, &panel, 5, TierFilter::All),
            dominance: noise_instruments(&panel, 2).dominance,
            familiarity: instruments::project_familiarity(&events, &panel, 5),
            warnings: vec![],
        };
        let controls = design::default_controls("avg_citations").unwrap();
        let reports = window_sensitivity(
            &panel,
            &roles,
            &events,
            &base,
            TierFilter::All,
            "avg_citations",
            &controls,
            &[5],
        )
        .unwrap();
        assert_eq!(reports.len(), 1);
        let dsg = design::build_design(&panel, &base, "avg_citations", &controls).unwrap();
        let main = diagnostics::run_battery(&dsg.y, &dsg.d, &dsg.z, &dsg.x).unwrap();
        assert_eq!(reports[0].first_stage_robust_f, main.first_stage_robust_f.statistic);
        assert_eq!(reports[0].min_eigenvalue, main.min_eigenvalue);
    }

    #[test]
    fn empty_window_list_errors() {
        let panel = toy_panel(24, 12);
        let base = noise_instruments(&panel, 2);
        let controls = design::default_controls("avg_citations").unwrap();
        assert!(window_sensitivity(
            &panel,
            &[],
            &[],
            &base,
            TierFilter::All,
            "avg_citations",
            &controls,
            &[],
        )
        .is_err());
    }
}
