//! TOML pipeline configuration: one section per module, with CLI flags
//! taking precedence over file values over defaults.

use std::path::{Path, PathBuf};

use scifund_core::estimator::CovType;
use scifund_core::instruments::{DominanceMode, NormScope, TierFilter};
use scifund_core::panel::PanelOptions;
use scifund_core::synthgen::{DgpConfig, TreatmentKind};
use scifund_core::topics::LdaConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    pub panel: PanelSection,
    pub lda: LdaSection,
    pub instruments: InstrumentSection,
    pub estimator: EstimatorSection,
    pub robustness: RobustnessSection,
    pub synth: SynthSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub scholars: Option<PathBuf>,
    pub grants: Option<PathBuf>,
    pub pubs: Option<PathBuf>,
    pub context: Option<PathBuf>,
    pub roles: Option<PathBuf>,
    pub events: Option<PathBuf>,
    /// Precomputed instrument CSV; replaces construction from roles/events.
    pub instruments: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelSection {
    pub window_start: i32,
    pub window_end: i32,
    pub lookback: u32,
    pub treatment_cap: u32,
}

impl Default for PanelSection {
    fn default() -> Self {
        let o = PanelOptions::default();
        PanelSection {
            window_start: o.window_start,
            window_end: o.window_end,
            lookback: o.lookback,
            treatment_cap: o.treatment_cap,
        }
    }
}

impl PanelSection {
    pub fn options(&self) -> PanelOptions {
        PanelOptions {
            window_start: self.window_start,
            window_end: self.window_end,
            lookback: self.lookback,
            treatment_cap: self.treatment_cap,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaSection {
    pub k: usize,
    pub alpha: Option<f64>,
    pub eta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub keywords: usize,
}

impl Default for LdaSection {
    fn default() -> Self {
        let c = LdaConfig::default();
        LdaSection {
            k: c.k,
            alpha: c.alpha,
            eta: c.eta,
            iterations: c.iterations,
            burn_in: c.burn_in,
            seed: c.seed,
            keywords: 10,
        }
    }
}

impl LdaSection {
    pub fn lda_config(&self) -> LdaConfig {
        LdaConfig {
            k: self.k,
            alpha: self.alpha,
            eta: self.eta,
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstrumentSection {
    pub window: u32,
    pub tier_filter: String,
    pub dominance_mode: String,
    pub norm_scope: String,
    pub exclude_coauthors: bool,
}

impl Default for InstrumentSection {
    fn default() -> Self {
        InstrumentSection {
            window: 5,
            tier_filter: "all".into(),
            dominance_mode: "time_reverse".into(),
            norm_scope: "cell".into(),
            exclude_coauthors: false,
        }
    }
}

impl InstrumentSection {
    pub fn tier(&self) -> Result<TierFilter, CliError> {
        self.tier_filter.parse().map_err(CliError::config)
    }

    pub fn mode(&self) -> Result<DominanceMode, CliError> {
        self.dominance_mode.parse().map_err(CliError::config)
    }

    pub fn scope(&self) -> Result<NormScope, CliError> {
        self.norm_scope.parse().map_err(CliError::config)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub cov_type: String,
    pub outcomes: Vec<String>,
    /// When empty, the per-outcome default control set is used.
    pub controls: Vec<String>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            cov_type: "hc1".into(),
            outcomes: vec![
                "article_count".into(),
                "avg_citations".into(),
                "avg_citescore".into(),
            ],
            controls: Vec::new(),
        }
    }
}

impl EstimatorSection {
    pub fn cov(&self) -> Result<CovType, CliError> {
        self.cov_type.parse().map_err(CliError::config)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessSection {
    pub placebo_seeds: Vec<u64>,
    pub windows: Vec<u32>,
}

impl Default for RobustnessSection {
    fn default() -> Self {
        RobustnessSection {
            placebo_seeds: vec![0],
            windows: vec![3, 5, 7],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_scholars: usize,
    pub n_years: usize,
    pub beta0: f64,
    pub true_beta1: f64,
    pub rho: f64,
    pub gamma: Vec<f64>,
    pub treatment_kind: String,
    pub instrument_validity: Vec<bool>,
    pub invalid_loading: f64,
    pub control_count: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n_scholars: 200,
            n_years: 10,
            beta0: 50.0,
            true_beta1: 2.0,
            rho: 0.5,
            gamma: vec![0.5, 0.5, 0.5],
            treatment_kind: "binary_threshold".into(),
            instrument_validity: vec![true, true, true],
            invalid_loading: 0.3,
            control_count: 7,
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl SynthSection {
    pub fn dgp(&self) -> Result<DgpConfig, CliError> {
        let kind = match self.treatment_kind.as_str() {
            "continuous" => TreatmentKind::Continuous,
            "binary_threshold" => TreatmentKind::BinaryThreshold,
            other => {
                return Err(CliError::config(format!(
                    "unknown treatment_kind '{}'",
                    other
                )))
            }
        };
        Ok(DgpConfig {
            n_scholars: self.n_scholars,
            n_years: self.n_years,
            beta0: self.beta0,
            true_beta1: self.true_beta1,
            rho: self.rho,
            gamma: self.gamma.clone(),
            treatment_kind: kind,
            instrument_validity: self.instrument_validity.clone(),
            invalid_loading: self.invalid_loading,
            control_count: self.control_count,
            noise_sd: self.noise_sd,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
        match path {
            None => Ok(PipelineConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::config(format!("cannot read config {}: {}", p.display(), e))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::config(format!("{}: {}", p.display(), e)))
            }
        }
    }

    /// Flag > file > default precedence for the shared CLI flags.
    pub fn apply_overrides(&mut self, out: Option<&Path>, seed: Option<u64>) {
        if let Some(dir) = out {
            self.output.dir = dir.to_path_buf();
        }
        if let Some(s) = seed {
            self.lda.seed = s;
            self.synth.seed = s;
            self.robustness.placebo_seeds = vec![s];
        }
    }

    /// Validates enum fields and any set input paths; the per-command input
    /// requirements are checked at use time.
    pub fn validate(&self) -> Result<(), CliError> {
        self.instruments.tier()?;
        self.instruments.mode()?;
        self.instruments.scope()?;
        self.estimator.cov()?;
        self.synth.dgp()?;
        if self.panel.window_end < self.panel.window_start {
            return Err(CliError::config("window_end before window_start"));
        }
        for (name, p) in [
            ("scholars", &self.inputs.scholars),
            ("grants", &self.inputs.grants),
            ("pubs", &self.inputs.pubs),
            ("context", &self.inputs.context),
            ("roles", &self.inputs.roles),
            ("events", &self.inputs.events),
            ("instruments", &self.inputs.instruments),
            ("stopwords", &self.inputs.stopwords),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(CliError::data(format!(
                        "{} input does not exist: {}",
                        name,
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }
}
