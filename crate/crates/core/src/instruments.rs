//! The three instrument series: political hegemony (employment), imitation
//! isomorphism (dominance), and project familiarity, aligned 1:1 with the
//! panel observations.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Leadership,
    Membership,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Body {
    Nsf,
    Aps,
    Aaas,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoleRecord {
    pub scholar_id: String,
    pub role_year: i32,
    pub tier: Tier,
    pub body: Body,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingEventRecord {
    pub affiliation_id: String,
    pub event_year: i32,
    pub kind: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TierFilter {
    All,
    Leadership,
    Membership,
}

impl std::str::FromStr for TierFilter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(TierFilter::All),
            "leadership" => Ok(TierFilter::Leadership),
            "membership" => Ok(TierFilter::Membership),
            other => Err(Error::InvalidConfig(format!("unknown tier filter '{}'", other))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DominanceMode {
    /// Appendix-style time reversal of the cumulative award series.
    TimeReverse,
    /// 1 / (1 + cumulative awards), then normalized.
    MultiplicativeInverse,
}

impl std::str::FromStr for DominanceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time_reverse" => Ok(DominanceMode::TimeReverse),
            "multiplicative_inverse" => Ok(DominanceMode::MultiplicativeInverse),
            other => Err(Error::InvalidConfig(format!("unknown dominance mode '{}'", other))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormScope {
    /// Min-max within each (university, topic) cell.
    Cell,
    /// Min-max over every cell value at once (sensitivity runs).
    Global,
}

impl std::str::FromStr for NormScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cell" => Ok(NormScope::Cell),
            "global" => Ok(NormScope::Global),
            other => Err(Error::InvalidConfig(format!("unknown normalization scope '{}'", other))),
        }
    }
}

/// The three IV series, one value per panel observation.
#[derive(Debug, Clone)]
pub struct InstrumentSet {
    pub employment: Vec<f64>,
    pub dominance: Vec<f64>,
    pub familiarity: Vec<f64>,
    /// Cells whose normalization denominator vanished.
    pub warnings: Vec<String>,
}

impl InstrumentSet {
    pub fn len(&self) -> usize {
        self.employment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.employment.is_empty()
    }
}

/// Min-max rescale into [0,1]. Constant series map to all zeros with a
/// warning flag (the denominator vanishes).
pub fn minmax_normalize(series: &[f64]) -> Result<(Vec<f64>, bool)> {
    if series.is_empty() {
        return Err(Error::InvalidDesign("empty series".into()));
    }
    let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok((vec![0.0; series.len()], true));
    }
    Ok((series.iter().map(|v| (v - min) / (max - min)).collect(), false))
}

/// Employment indicator: 1 for the window starting at each role year, with
/// overlapping roles unioned.
pub fn political_hegemony(
    roles: &[RoleRecord],
    panel: &PanelDataset,
    window: u32,
    tier_filter: TierFilter,
) -> Vec<f64> {
    let mut active: HashMap<&str, BTreeSet<i32>> = HashMap::new();
    for r in roles {
        let keep = match tier_filter {
            TierFilter::All => true,
            TierFilter::Leadership => r.tier == Tier::Leadership,
            TierFilter::Membership => r.tier == Tier::Membership,
        };
        if !keep {
            continue;
        }
        let e = active.entry(r.scholar_id.as_str()).or_default();
        for y in r.role_year..r.role_year + window as i32 {
            e.insert(y);
        }
    }
    panel
        .observations
        .iter()
        .map(|o| {
            active
                .get(o.scholar_id.as_str())
                .map_or(0.0, |ys| if ys.contains(&o.year) { 1.0 } else { 0.0 })
        })
        .collect()
}

/// Per-cell dominance series over the panel years: count awards per year,
/// cumulative-sum, reverse along the time axis (or take the multiplicative
/// inverse), then min-max normalize. Cells that never receive an award are 0.
pub fn imitation_isomorphism(
    panel: &PanelDataset,
    mode: DominanceMode,
    scope: NormScope,
) -> Result<(Vec<f64>, Vec<String>)> {
    for g in &panel.grants {
        if g.topic_id.is_none() {
            return Err(Error::MissingData(format!(
                "grant {} has no topic_id; run topic assignment first",
                g.grant_id
            )));
        }
    }
    let t0 = panel.options.window_start;
    let t1 = panel.options.window_end;
    let n_years = (t1 - t0 + 1) as usize;

    // award counts per (affiliation, topic, year); awards before the window
    // fold into the cumulative total at the window start
    let mut cells: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for g in &panel.grants {
        let topic = g.topic_id.unwrap();
        let aff = match panel.scholars.get(&g.scholar_id) {
            Some(s) => s.affiliation_id.clone(),
            None => continue,
        };
        let counts = cells.entry((aff, topic)).or_insert_with(|| vec![0.0; n_years]);
        if g.award_year < t0 {
            counts[0] += 1.0;
        } else if g.award_year <= t1 {
            counts[(g.award_year - t0) as usize] += 1.0;
        }
    }

    let mut warnings = Vec::new();
    let mut normalized: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();

    // cumulative then transformed (pre-normalization) series per cell
    let mut transformed: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for (key, counts) in &cells {
        let mut cum = vec![0.0; n_years];
        let mut acc = 0.0;
        for (i, c) in counts.iter().enumerate() {
            acc += c;
            cum[i] = acc;
        }
        let series: Vec<f64> = match mode {
            DominanceMode::TimeReverse => (0..n_years).map(|i| cum[n_years - 1 - i]).collect(),
            DominanceMode::MultiplicativeInverse => cum.iter().map(|c| 1.0 / (1.0 + c)).collect(),
        };
        transformed.insert(key.clone(), series);
    }

    match scope {
        NormScope::Cell => {
            for (key, series) in &transformed {
                let (norm, warned) = minmax_normalize(series)?;
                if warned {
                    warnings.push(format!(
                        "cell ({}, topic {}): constant series, normalized to 0",
                        key.0, key.1
                    ));
                }
                normalized.insert(key.clone(), norm);
            }
        }
        NormScope::Global => {
            let all: Vec<f64> = transformed.values().flatten().cloned().collect();
            if all.is_empty() {
                // no awarded cells at all; every scholar gets 0 below
            } else {
                let min = all.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for (key, series) in &transformed {
                    let norm = if max == min {
                        warnings.push("global normalization: constant series".into());
                        vec![0.0; series.len()]
                    } else {
                        series.iter().map(|v| (v - min) / (max - min)).collect()
                    };
                    normalized.insert(key.clone(), norm);
                }
            }
        }
    }

    let values = panel
        .observations
        .iter()
        .map(|o| match o.topic_id {
            Some(topic) => normalized
                .get(&(o.affiliation_id.clone(), topic))
                .map_or(0.0, |series| series[(o.year - t0) as usize]),
            None => 0.0,
        })
        .collect();
    Ok((values, warnings))
}

/// Training-event familiarity: count of events at the scholar's affiliation
/// in the `window` years before each observation, interacted with the
/// occurrence dummy (so zero when no event occurred in the span).
pub fn project_familiarity(
    events: &[TrainingEventRecord],
    panel: &PanelDataset,
    window: u32,
) -> Vec<f64> {
    let mut by_aff: HashMap<&str, Vec<i32>> = HashMap::new();
    for e in events {
        by_aff.entry(e.affiliation_id.as_str()).or_default().push(e.event_year);
    }
    panel
        .observations
        .iter()
        .map(|o| {
            let count = by_aff
                .get(o.affiliation_id.as_str())
                .map_or(0usize, |years| {
                    years
                        .iter()
                        .filter(|&&y| y >= o.year - window as i32 && y < o.year)
                        .count()
                });
            // count x occurrence dummy: the dummy is 1 exactly when count > 0
            count as f64
        })
        .collect()
}

/// Removes non-funded scholars who co-authored with a funded scholar at the
/// same affiliation. Returns the removed scholar ids.
pub fn exclude_coauthors(panel: &mut PanelDataset) -> Vec<String> {
    let funded: HashSet<&str> = panel
        .grants
        .iter()
        .map(|g| g.scholar_id.as_str())
        .collect();

    let aff_of: HashMap<&str, &str> = panel
        .scholars
        .values()
        .map(|s| (s.scholar_id.as_str(), s.affiliation_id.as_str()))
        .collect();

    let mut removed: BTreeSet<String> = BTreeSet::new();
    for p in &panel.pubs {
        let mut authors: Vec<&str> = vec![p.scholar_id.as_str()];
        authors.extend(p.coauthor_ids.iter().map(|s| s.as_str()));
        for &a in &authors {
            if funded.contains(a) {
                continue;
            }
            let Some(&aff_a) = aff_of.get(a) else { continue };
            let hit = authors
                .iter()
                .any(|&b| b != a && funded.contains(b) && aff_of.get(b) == Some(&aff_a));
            if hit {
                removed.insert(a.to_string());
            }
        }
    }

    panel.scholars.retain(|id, _| !removed.contains(id));
    panel.observations.retain(|o| !removed.contains(&o.scholar_id));
    removed.into_iter().collect()
}

// ---------------------------------------------------------------------------
// CSV interfaces

pub fn read_roles(path: &Path) -> Result<Vec<RoleRecord>> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(file.clone(), e))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(file.clone(), e))?;
        let tier = match rec.get(2).unwrap_or("") {
            "leadership" => Tier::Leadership,
            "membership" => Tier::Membership,
            other => {
                return Err(Error::Schema {
                    file: file.clone(),
                    detail: format!("row {}: unknown tier '{}'", i + 2, other),
                })
            }
        };
        let body = match rec.get(3).unwrap_or("") {
            "NSF" => Body::Nsf,
            "APS" => Body::Aps,
            "AAAS" => Body::Aaas,
            other => {
                return Err(Error::Schema {
                    file: file.clone(),
                    detail: format!("row {}: unknown body '{}'", i + 2, other),
                })
            }
        };
        out.push(RoleRecord {
            scholar_id: rec.get(0).unwrap_or("").to_string(),
            role_year: rec.get(1).unwrap_or("").parse().map_err(|_| Error::Schema {
                file: file.clone(),
                detail: format!("row {}: bad role_year", i + 2),
            })?,
            tier,
            body,
        });
    }
    Ok(out)
}

pub fn read_events(path: &Path) -> Result<Vec<TrainingEventRecord>> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(file.clone(), e))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(file.clone(), e))?;
        out.push(TrainingEventRecord {
            affiliation_id: rec.get(0).unwrap_or("").to_string(),
            event_year: rec.get(1).unwrap_or("").parse().map_err(|_| Error::Schema {
                file: file.clone(),
                detail: format!("row {}: bad event_year", i + 2),
            })?,
            kind: rec.get(2).unwrap_or("").to_string(),
        });
    }
    Ok(out)
}

/// Writes the instrument series next to the panel keys.
pub fn write_instruments(panel: &PanelDataset, set: &InstrumentSet, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::csv(path.display().to_string(), e))?;
    w.write_record(["scholar_id", "year", "employment", "dominance", "familiarity"])
        .map_err(|e| Error::csv(path.display().to_string(), e))?;
    for (i, o) in panel.observations.iter().enumerate() {
        w.write_record([
            o.scholar_id.as_str(),
            &o.year.to_string(),
            &format!("{}", set.employment[i]),
            &format!("{}", set.dominance[i]),
            &format!("{}", set.familiarity[i]),
        ])
        .map_err(|e| Error::csv(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Loads a precomputed instrument file and aligns it to the panel rows.
pub fn read_instruments(path: &Path, panel: &PanelDataset) -> Result<InstrumentSet> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(file.clone(), e))?;
    let mut map: HashMap<(String, i32), (f64, f64, f64)> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(file.clone(), e))?;
        let parse = |j: usize| -> Result<f64> {
            rec.get(j).unwrap_or("").parse().map_err(|_| Error::Schema {
                file: file.clone(),
                detail: format!("bad numeric field in column {}", j),
            })
        };
        let year: i32 = rec.get(1).unwrap_or("").parse().map_err(|_| Error::Schema {
            file: file.clone(),
            detail: "bad year".into(),
        })?;
        map.insert(
            (rec.get(0).unwrap_or("").to_string(), year),
            (parse(2)?, parse(3)?, parse(4)?),
        );
    }
    let mut employment = Vec::with_capacity(panel.n_observations());
    let mut dominance = Vec::with_capacity(panel.n_observations());
    let mut familiarity = Vec::with_capacity(panel.n_observations());
    for o in &panel.observations {
        let key = (o.scholar_id.clone(), o.year);
        let (e, d, f) = map.get(&key).cloned().ok_or_else(|| Error::Integrity {
            detail: format!("no instrument row for scholar {} year {}", o.scholar_id, o.year),
        })?;
        employment.push(e);
        dominance.push(d);
        familiarity.push(f);
    }
    Ok(InstrumentSet {
        employment,
        dominance,
        familiarity,
        warnings: vec![],
    })
}
