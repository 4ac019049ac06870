//! `scifund` — config-driven estimation pipeline:
//! ingest → topics → instruments → estimate → diagnose → robustness → reports.

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use scifund_core::error::Error as CoreError;
use scifund_core::estimator::{self, ResultExport};
use scifund_core::instruments::{self, InstrumentSet};
use scifund_core::panel::PanelDataset;
use scifund_core::{design, diagnostics, report, robustness, synthgen, topics};

use config::PipelineConfig;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ESTIMATION: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl ToString) -> Self {
        CliError { code: EXIT_CONFIG, message: msg.to_string() }
    }

    pub fn data(msg: impl ToString) -> Self {
        CliError { code: EXIT_DATA, message: msg.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::InvalidConfig(_) => EXIT_CONFIG,
            CoreError::Schema { .. }
            | CoreError::Integrity { .. }
            | CoreError::MissingData(_)
            | CoreError::Io { .. }
            | CoreError::Csv { .. }
            | CoreError::Json(_) => EXIT_DATA,
            CoreError::RankDeficient { .. }
            | CoreError::InvalidDesign(_)
            | CoreError::InvalidState(_) => EXIT_ESTIMATION,
        };
        CliError { code, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "scifund", version, about = "Funding-effect estimation pipeline")]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides [output].dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed override for LDA, synthetic data, and placebo splits
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Validate the configuration and inputs, write nothing
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    /// Assemble the scholar-year panel and write it with an ingest report
    Ingest,
    /// Fit the topic model on grant abstracts and assign grant topics
    Topics,
    /// Construct the three instruments and write the instrument CSV
    Instruments,
    /// Run OLS, first-stage, and 2SLS per outcome
    Estimate,
    /// Run the full diagnostics battery per outcome
    Diagnose,
    /// Pseudo-group placebo runs over the configured seeds
    Placebo,
    /// Instrument-window sensitivity sweep
    Windows,
    /// Generate a synthetic dataset with known ground truth
    Synth,
    /// Full pipeline: ingest through reports, with a manifest
    Run,
}

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => {}
        Err(e) => {
            // machine-readable error on stderr
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.message, "exit_code": e.code })
            );
            std::process::exit(e.code);
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    cfg.apply_overrides(cli.out.as_deref(), cli.seed);
    cfg.validate()?;

    if cli.dry_run {
        println!("dry run: configuration valid, nothing written");
        return Ok(());
    }

    let out = cfg.output.dir.clone();
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::data(format!("cannot create {}: {}", out.display(), e)))?;

    let mut artifacts: Vec<String> = Vec::new();
    match cli.cmd {
        Cmd::Ingest => {
            let panel = stage_ingest(&cfg, &out, &mut artifacts)?;
            drop(panel);
        }
        Cmd::Topics => {
            stage_topics(&cfg, &out, &mut artifacts)?;
        }
        Cmd::Instruments => {
            let mut panel = stage_ingest(&cfg, &out, &mut artifacts)?;
            stage_instruments(&cfg, &mut panel, &out, &mut artifacts)?;
        }
        Cmd::Estimate => {
            let mut panel = stage_ingest(&cfg, &out, &mut artifacts)?;
            let instr = stage_instruments(&cfg, &mut panel, &out, &mut artifacts)?;
            stage_estimate(&cfg, &panel, &instr, &out, &mut artifacts)?;
        }
        Cmd::Diagnose => {
            let mut panel = stage_ingest(&cfg, &out, &mut artifacts)?;
            let instr = stage_instruments(&cfg, &mut panel, &out, &mut artifacts)?;
            stage_diagnose(&cfg, &panel, &instr, &out, &mut artifacts)?;
        }
        Cmd::Placebo => {
            let mut panel = stage_ingest(&cfg, &out, &mut artifacts)?;
            let instr = stage_instruments(&cfg, &mut panel, &out, &mut artifacts)?;
            stage_placebo(&cfg, &panel, &instr, &out, &mut artifacts)?;
        }
        Cmd::Windows => {
            let mut panel = stage_ingest(&cfg, &out, &mut artifacts)?;
            let instr = stage_instruments(&cfg, &mut panel, &out, &mut artifacts)?;
            stage_windows(&cfg, &panel, &instr, &out, &mut artifacts)?;
        }
        Cmd::Synth => {
            let dgp = cfg.synth.dgp()?;
            let truth = synthgen::write_dataset(&dgp, &out)?;
            println!(
                "synth: {} scholars x {} years; {} clamped outcomes",
                dgp.n_scholars, dgp.n_years, truth.clamped_outcomes
            );
            artifacts.extend(
                [
                    "scholars.csv",
                    "grants.csv",
                    "pubs.csv",
                    "context.csv",
                    "instruments.csv",
                    "ground_truth.json",
                ]
                .map(String::from),
            );
        }
        Cmd::Run => {
            let mut panel = stage_ingest(&cfg, &out, &mut artifacts)?;
            let instr = stage_instruments(&cfg, &mut panel, &out, &mut artifacts)?;
            stage_estimate(&cfg, &panel, &instr, &out, &mut artifacts)?;
            stage_diagnose(&cfg, &panel, &instr, &out, &mut artifacts)?;
            stage_placebo(&cfg, &panel, &instr, &out, &mut artifacts)?;
            stage_windows(&cfg, &panel, &instr, &out, &mut artifacts)?;
        }
    }

    write_manifest(&cfg, &out, &mut artifacts)?;
    Ok(())
}

fn require<'a>(p: &'a Option<PathBuf>, name: &str) -> CliResult<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::config(format!("[inputs].{} is required for this command", name)))
}

fn write_text(out: &Path, name: &str, text: &str, artifacts: &mut Vec<String>) -> CliResult<()> {
    std::fs::write(out.join(name), text)
        .map_err(|e| CliError::data(format!("cannot write {}: {}", name, e)))?;
    artifacts.push(name.to_string());
    Ok(())
}

fn write_json<T: Serialize>(
    out: &Path,
    name: &str,
    value: &T,
    artifacts: &mut Vec<String>,
) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(CoreError::from)?;
    write_text(out, name, &(text + "\n"), artifacts)
}

fn stage_ingest(
    cfg: &PipelineConfig,
    out: &Path,
    artifacts: &mut Vec<String>,
) -> CliResult<PanelDataset> {
    let panel = scifund_core::panel::load_panel(
        require(&cfg.inputs.scholars, "scholars")?,
        require(&cfg.inputs.grants, "grants")?,
        require(&cfg.inputs.pubs, "pubs")?,
        require(&cfg.inputs.context, "context")?,
        cfg.panel.options(),
    )?;
    println!(
        "ingest: {} observations, {} scholars, {} rejected rows",
        panel.n_observations(),
        panel.scholars.len(),
        panel.report.rejected.len()
    );
    write_json(out, "ingest_report.json", &panel.report, artifacts)?;
    write_panel_csv(&panel, out, artifacts)?;
    Ok(panel)
}

fn write_panel_csv(panel: &PanelDataset, out: &Path, artifacts: &mut Vec<String>) -> CliResult<()> {
    let cols = [
        "funded",
        "article_count",
        "avg_citations",
        "avg_citescore",
        "academic_age",
        "ln_grant_amount",
        "gender",
        "initial_articles",
        "initial_citations",
        "initial_citescore",
        "ln_pubs_field",
        "ln_cites_field",
        "ln_pubs_affil",
        "ln_cites_affil",
        "qs_rank",
        "usnews_rank",
        "employer_reputation",
    ];
    let mut text = String::from("scholar_id,year,");
    text.push_str(&cols.join(","));
    text.push('\n');
    for o in &panel.observations {
        text.push_str(&format!("{},{}", o.scholar_id, o.year));
        for c in cols {
            text.push_str(&format!(",{}", o.value(c).unwrap()));
        }
        text.push('\n');
    }
    write_text(out, "panel.csv", &text, artifacts)
}

/// Fits LDA on grant abstracts; returns per-grant topic assignments.
fn stage_topics(
    cfg: &PipelineConfig,
    out: &Path,
    artifacts: &mut Vec<String>,
) -> CliResult<BTreeMap<String, usize>> {
    let grants = scifund_core::panel::read_grants(require(&cfg.inputs.grants, "grants")?)?;
    let stopwords = match &cfg.inputs.stopwords {
        Some(p) => topics::read_stopwords(p)?,
        None => Default::default(),
    };
    let docs: Vec<(String, String)> = grants
        .iter()
        .map(|g| (g.grant_id.clone(), format!("{} {}", g.title, g.abstract_text)))
        .collect();
    let corpus = topics::preprocess(&docs, &stopwords)?;
    let model = topics::fit_lda(&corpus, &cfg.lda.lda_config())?;
    println!(
        "topics: {} documents, vocabulary {}, K = {}",
        corpus.n_docs(),
        corpus.vocab_size(),
        model.k
    );

    write_text(out, "topic_model.json", &model.to_json()?, artifacts)?;
    let (keywords, _) = topics::top_keywords(&model, cfg.lda.keywords);
    write_text(out, "topic_keywords.txt", &report::render_keywords(&keywords), artifacts)?;

    let mut assignments = BTreeMap::new();
    let mut text = String::from("grant_id,topic_id\n");
    for (i, id) in corpus.doc_ids.iter().enumerate() {
        let t = topics::assign_topic(&model, i)?;
        text.push_str(&format!("{},{}\n", id, t));
        assignments.insert(id.clone(), t);
    }
    write_text(out, "topic_assignments.csv", &text, artifacts)?;
    Ok(assignments)
}

fn stage_instruments(
    cfg: &PipelineConfig,
    panel: &mut PanelDataset,
    out: &Path,
    artifacts: &mut Vec<String>,
) -> CliResult<InstrumentSet> {
    if cfg.instruments.exclude_coauthors {
        let removed = instruments::exclude_coauthors(panel);
        println!("instruments: excluded {} funded-coauthor scholars", removed.len());
    }

    let set = if let Some(path) = &cfg.inputs.instruments {
        let set = instruments::read_instruments(path, panel)?;
        println!("instruments: {} precomputed rows from {}", set.len(), path.display());
        set
    } else {
        // dominance needs grant topics; fit them from abstracts when absent
        if panel.grants.iter().any(|g| g.topic_id.is_none()) {
            let assigned = stage_topics(cfg, out, artifacts)?;
            for g in &mut panel.grants {
                if g.topic_id.is_none() {
                    g.topic_id = assigned.get(&g.grant_id).copied();
                }
            }
        }
        let roles = instruments::read_roles(require(&cfg.inputs.roles, "roles")?)?;
        let events = instruments::read_events(require(&cfg.inputs.events, "events")?)?;
        let employment = instruments::political_hegemony(
            &roles,
            panel,
            cfg.instruments.window,
            cfg.instruments.tier()?,
        );
        let (dominance, warnings) = instruments::imitation_isomorphism(
            panel,
            cfg.instruments.mode()?,
            cfg.instruments.scope()?,
        )?;
        let familiarity =
            instruments::project_familiarity(&events, panel, cfg.instruments.window);
        println!("instruments: constructed {} rows ({} warnings)", employment.len(), warnings.len());
        InstrumentSet { employment, dominance, familiarity, warnings }
    };

    instruments::write_instruments(panel, &set, &out.join("instruments.csv"))?;
    artifacts.push("instruments.csv".to_string());
    Ok(set)
}

fn controls_for(cfg: &PipelineConfig, outcome: &str) -> CliResult<Vec<String>> {
    if cfg.estimator.controls.is_empty() {
        Ok(design::default_controls(outcome)?)
    } else {
        Ok(cfg.estimator.controls.clone())
    }
}

#[derive(Serialize)]
struct OutcomeEstimates {
    outcome: String,
    ols: ResultExport,
    first_stage: ResultExport,
    tsls: ResultExport,
}

fn stage_estimate(
    cfg: &PipelineConfig,
    panel: &PanelDataset,
    instr: &InstrumentSet,
    out: &Path,
    artifacts: &mut Vec<String>,
) -> CliResult<()> {
    let cov = cfg.estimator.cov()?;
    let mut all = Vec::new();
    for outcome in &cfg.estimator.outcomes {
        let controls = controls_for(cfg, outcome)?;
        let dsg = design::build_design(panel, instr, outcome, &controls)?;

        let regs = estimator::hstack(&estimator::col_matrix(&dsg.d), &dsg.x);
        let mut labels = vec!["funded".to_string()];
        labels.extend(dsg.x_labels.iter().cloned());
        let ols = estimator::ols(&dsg.y, &regs, &labels, cov)?;
        let fs = estimator::first_stage(&dsg.d, &dsg.z, &dsg.x, &dsg.z_labels, &dsg.x_labels, cov)?;
        let tsls = estimator::tsls(
            &dsg.y,
            &dsg.d,
            &dsg.z,
            &dsg.x,
            "funded",
            &dsg.z_labels,
            &dsg.x_labels,
            cov,
        )?;
        println!("estimate[{}]: {} rows, {} controls", outcome, dsg.y.len(), controls.len());
        all.push(OutcomeEstimates {
            outcome: outcome.clone(),
            ols: ols.export(),
            first_stage: fs.export(),
            tsls: tsls.export(),
        });
    }

    let table = |title: &str, pick: fn(&OutcomeEstimates) -> &ResultExport| {
        let cols: Vec<(String, &ResultExport)> =
            all.iter().map(|e| (e.outcome.clone(), pick(e))).collect();
        report::render_estimates(title, &cols)
    };
    write_text(out, "ols_table.txt", &table("OLS estimates", |e| &e.ols), artifacts)?;
    write_text(
        out,
        "first_stage_table.txt",
        &table("2SLS first stage (treatment on instruments)", |e| &e.first_stage),
        artifacts,
    )?;
    write_text(out, "tsls_table.txt", &table("2SLS estimates", |e| &e.tsls), artifacts)?;
    write_json(out, "estimates.json", &all, artifacts)
}

fn stage_diagnose(
    cfg: &PipelineConfig,
    panel: &PanelDataset,
    instr: &InstrumentSet,
    out: &Path,
    artifacts: &mut Vec<String>,
) -> CliResult<()> {
    let mut reports = BTreeMap::new();
    let mut text = String::new();
    for outcome in &cfg.estimator.outcomes {
        let controls = controls_for(cfg, outcome)?;
        let dsg = design::build_design(panel, instr, outcome, &controls)?;
        let rep = diagnostics::run_battery(&dsg.y, &dsg.d, &dsg.z, &dsg.x)?;
        println!("diagnose[{}]: {} rows", outcome, dsg.y.len());
        text.push_str(&report::render_diagnostics(
            &format!("Instrument validity and strength — {}", outcome),
            &rep,
        ));
        text.push('\n');
        reports.insert(outcome.clone(), rep);
    }
    write_text(out, "diagnostics.txt", &text, artifacts)?;
    write_json(out, "diagnostics.json", &reports, artifacts)
}

fn stage_placebo(
    cfg: &PipelineConfig,
    panel: &PanelDataset,
    instr: &InstrumentSet,
    out: &Path,
    artifacts: &mut Vec<String>,
) -> CliResult<()> {
    let mut runs = Vec::new();
    for &seed in &cfg.robustness.placebo_seeds {
        let controls = if cfg.estimator.controls.is_empty() {
            None
        } else {
            Some(cfg.estimator.controls.as_slice())
        };
        let run = robustness::placebo_run(panel, instr, &cfg.estimator.outcomes, controls, seed)?;
        println!(
            "placebo[seed {}]: {} results, {} failures",
            seed,
            run.results.len(),
            run.failures.len()
        );
        runs.push(run);
    }
    write_text(out, "placebo_summary.csv", &robustness::placebo_summary_csv(&runs), artifacts)?;
    write_json(out, "placebo.json", &runs, artifacts)
}

fn stage_windows(
    cfg: &PipelineConfig,
    panel: &PanelDataset,
    instr: &InstrumentSet,
    out: &Path,
    artifacts: &mut Vec<String>,
) -> CliResult<()> {
    // the sweep rebuilds employment and familiarity from raw role/event
    // records; with purely precomputed instruments there is nothing to vary
    if cfg.inputs.instruments.is_some() && cfg.inputs.roles.is_none() && cfg.inputs.events.is_none()
    {
        println!("windows: skipped (precomputed instruments, no raw role/event records)");
        write_text(
            out,
            "windows.txt",
            "window sensitivity not applicable: instruments were precomputed\n",
            artifacts,
        )?;
        return write_json(out, "windows.json", &Vec::<robustness::WindowReport>::new(), artifacts);
    }
    let roles = match &cfg.inputs.roles {
        Some(p) => instruments::read_roles(p)?,
        None => Vec::new(),
    };
    let events = match &cfg.inputs.events {
        Some(p) => instruments::read_events(p)?,
        None => Vec::new(),
    };
    let outcome = cfg
        .estimator
        .outcomes
        .first()
        .ok_or_else(|| CliError::config("no outcomes configured"))?;
    let controls = controls_for(cfg, outcome)?;
    let reports = robustness::window_sensitivity(
        panel,
        &roles,
        &events,
        instr,
        cfg.instruments.tier()?,
        outcome,
        &controls,
        &cfg.robustness.windows,
    )?;
    println!("windows: {} rows", reports.len());
    write_text(out, "windows.txt", &report::render_windows(&reports), artifacts)?;
    write_json(out, "windows.json", &reports, artifacts)
}

fn write_manifest(
    cfg: &PipelineConfig,
    out: &Path,
    artifacts: &mut Vec<String>,
) -> CliResult<()> {
    let canonical = toml::to_string(cfg).map_err(|e| CliError::config(e.to_string()))?;
    let hash = format!("{:x}", Sha256::digest(canonical.as_bytes()));
    artifacts.sort();
    artifacts.dedup();
    let manifest = serde_json::json!({
        "config_sha256": hash,
        "version": env!("CARGO_PKG_VERSION"),
        "artifacts": artifacts,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(CoreError::from)?;
    std::fs::write(out.join("manifest.json"), text + "\n")
        .map_err(|e| CliError::data(format!("cannot write manifest.json: {}", e)))?;
    Ok(())
}
