//! Assembles estimation-ready design matrices from a panel and a
//! constructed instrument set.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::DesignMatrix;
use crate::instruments::InstrumentSet;
use crate::panel::PanelDataset;

pub const INSTRUMENT_LABELS: [&str; 3] = ["employment", "dominance", "familiarity"];

/// Controls used when the caller does not list any. The initial-performance
/// control is matched to the outcome by `default_controls`.
pub const BASE_CONTROLS: [&str; 10] = [
    "academic_age",
    "ln_grant_amount",
    "gender",
    "ln_pubs_field",
    "ln_cites_field",
    "ln_pubs_affil",
    "ln_cites_affil",
    "qs_rank",
    "usnews_rank",
    "employer_reputation",
];

pub fn default_controls(outcome: &str) -> Result<Vec<String>> {
    let initial = match outcome {
        "article_count" => "initial_articles",
        "avg_citations" => "initial_citations",
        "avg_citescore" => "initial_citescore",
        other => return Err(Error::InvalidConfig(format!("unknown outcome '{}'", other))),
    };
    let mut controls: Vec<String> = BASE_CONTROLS.iter().map(|s| s.to_string()).collect();
    controls.push(initial.to_string());
    Ok(controls)
}

/// Builds [y | d | Z | X] for one outcome. Instrument columns must align
/// row-for-row with `panel.observations`.
pub fn build_design(
    panel: &PanelDataset,
    instruments: &InstrumentSet,
    outcome: &str,
    controls: &[String],
) -> Result<DesignMatrix> {
    let n = panel.n_observations();
    if n == 0 {
        return Err(Error::InvalidDesign("empty panel".into()));
    }
    if instruments.employment.len() != n
        || instruments.dominance.len() != n
        || instruments.familiarity.len() != n
    {
        return Err(Error::InvalidDesign(format!(
            "instrument length mismatch: panel has {} rows",
            n
        )));
    }
    let y = DVector::from_vec(panel.column(outcome)?);
    let d = DVector::from_vec(panel.column("funded")?);

    let mut z = DMatrix::zeros(n, 3);
    for i in 0..n {
        z[(i, 0)] = instruments.employment[i];
        z[(i, 1)] = instruments.dominance[i];
        z[(i, 2)] = instruments.familiarity[i];
    }

    let mut x = DMatrix::zeros(n, controls.len());
    for (j, name) in controls.iter().enumerate() {
        let col = panel.column(name)?;
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }

    let design = DesignMatrix {
        y,
        d,
        z,
        x,
        z_labels: INSTRUMENT_LABELS.iter().map(|s| s.to_string()).collect(),
        x_labels: controls.to_vec(),
    };
    design.validate()?;
    Ok(design)
}
