//! Scholar-year panel assembly from raw CSV records.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScholarRecord {
    pub scholar_id: String,
    pub gender: Gender,
    pub gender_confidence: f64,
    pub first_pub_year: i32,
    pub affiliation_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrantRecord {
    pub grant_id: String,
    pub scholar_id: String,
    pub award_year: i32,
    pub amount_usd: f64,
    pub duration_years: u32,
    pub title: String,
    pub abstract_text: String,
    pub topic_id: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub pub_id: String,
    pub scholar_id: String,
    pub year: i32,
    pub citations: f64,
    pub citescore: f64,
    pub coauthor_ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextRecord {
    pub affiliation_id: String,
    pub year: i32,
    pub qs_rank: f64,
    pub usnews_rank: f64,
    pub employer_reputation: f64,
    pub ln_pubs_affil: f64,
    pub ln_cites_affil: f64,
    pub field_id: String,
    pub ln_pubs_field: f64,
    pub ln_cites_field: f64,
}

/// One scholar-year row of the assembled panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelObservation {
    pub scholar_id: String,
    pub year: i32,
    pub affiliation_id: String,
    pub topic_id: Option<usize>,
    pub funded: u8,
    pub article_count: u32,
    pub avg_citations: f64,
    pub avg_citescore: f64,
    pub academic_age: f64,
    pub ln_grant_amount: f64,
    pub gender: f64,
    pub initial_articles: f64,
    pub initial_citations: f64,
    pub initial_citescore: f64,
    pub ln_pubs_field: f64,
    pub ln_cites_field: f64,
    pub ln_pubs_affil: f64,
    pub ln_cites_affil: f64,
    pub qs_rank: f64,
    pub usnews_rank: f64,
    pub employer_reputation: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PanelOptions {
    pub window_start: i32,
    pub window_end: i32,
    /// Years of history used for initial-performance controls.
    pub lookback: u32,
    /// Maximum number of years a grant keeps the treatment indicator on.
    pub treatment_cap: u32,
}

impl Default for PanelOptions {
    fn default() -> Self {
        PanelOptions {
            window_start: 2000,
            window_end: 2019,
            lookback: 3,
            treatment_cap: 5,
        }
    }
}

/// Rows dropped during assembly, with reasons. Missing controls reject the
/// row rather than imputing.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rejected: Vec<RejectedRow>,
    pub gender_filtered: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedRow {
    pub scholar_id: String,
    pub year: i32,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct PanelDataset {
    pub observations: Vec<PanelObservation>,
    pub scholars: BTreeMap<String, ScholarRecord>,
    pub grants: Vec<GrantRecord>,
    pub pubs: Vec<PublicationRecord>,
    pub options: PanelOptions,
    pub report: IngestReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    ArticleCount,
    AvgCitations,
    AvgCitescore,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "article_count" => Ok(Metric::ArticleCount),
            "avg_citations" => Ok(Metric::AvgCitations),
            "avg_citescore" => Ok(Metric::AvgCitescore),
            other => Err(Error::InvalidConfig(format!("unknown metric '{}'", other))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Top,
    Bottom,
}

// ---------------------------------------------------------------------------
// CSV loading

struct Sheet {
    file: String,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Sheet {
    fn read(path: &Path) -> Result<Sheet> {
        let file = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(file.clone(), e))?;
        let headers = rdr
            .headers()
            .map_err(|e| Error::csv(file.clone(), e))?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec.map_err(|e| Error::csv(file.clone(), e))?);
        }
        Ok(Sheet { file, headers, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                file: self.file.clone(),
                detail: format!("missing column '{}'", name),
            })
    }

    fn opt_col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn get<'a>(&self, row: &'a csv::StringRecord, idx: usize) -> &'a str {
        row.get(idx).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(
        &self,
        row: &csv::StringRecord,
        idx: usize,
        name: &str,
        line: usize,
    ) -> Result<T> {
        self.get(row, idx).parse().map_err(|_| Error::Schema {
            file: self.file.clone(),
            detail: format!("row {}: cannot parse column '{}' value '{}'", line + 2, name, self.get(row, idx)),
        })
    }
}

pub fn read_scholars(path: &Path) -> Result<Vec<ScholarRecord>> {
    let s = Sheet::read(path)?;
    let (id, gender, conf, fpy, aff) = (
        s.col("scholar_id")?,
        s.col("gender")?,
        s.col("gender_confidence")?,
        s.col("first_pub_year")?,
        s.col("affiliation_id")?,
    );
    let mut out = Vec::with_capacity(s.rows.len());
    for (i, row) in s.rows.iter().enumerate() {
        let g = match s.get(row, gender) {
            "male" => Gender::Male,
            "female" => Gender::Female,
            "unknown" | "" => Gender::Unknown,
            other => {
                return Err(Error::Schema {
                    file: s.file.clone(),
                    detail: format!("row {}: unknown gender '{}'", i + 2, other),
                })
            }
        };
        let gc: f64 = s.parse(row, conf, "gender_confidence", i)?;
        if !(0.0..=1.0).contains(&gc) {
            return Err(Error::Schema {
                file: s.file.clone(),
                detail: format!("row {}: gender_confidence {} outside [0,1]", i + 2, gc),
            });
        }
        out.push(ScholarRecord {
            scholar_id: s.get(row, id).to_string(),
            gender: g,
            gender_confidence: gc,
            first_pub_year: s.parse(row, fpy, "first_pub_year", i)?,
            affiliation_id: s.get(row, aff).to_string(),
        });
    }
    Ok(out)
}

pub fn read_grants(path: &Path) -> Result<Vec<GrantRecord>> {
    let s = Sheet::read(path)?;
    let (gid, sid, ay, amt, dur, title, abs_) = (
        s.col("grant_id")?,
        s.col("scholar_id")?,
        s.col("award_year")?,
        s.col("amount_usd")?,
        s.col("duration_years")?,
        s.col("title")?,
        s.col("abstract")?,
    );
    let topic = s.opt_col("topic_id");
    let mut out = Vec::with_capacity(s.rows.len());
    for (i, row) in s.rows.iter().enumerate() {
        let amount: f64 = s.parse(row, amt, "amount_usd", i)?;
        let duration: u32 = s.parse(row, dur, "duration_years", i)?;
        if amount <= 0.0 || duration < 1 {
            return Err(Error::Schema {
                file: s.file.clone(),
                detail: format!(
                    "row {}: amount_usd must be > 0 and duration_years >= 1",
                    i + 2
                ),
            });
        }
        let topic_id = match topic {
            Some(c) if !s.get(row, c).is_empty() => Some(s.parse(row, c, "topic_id", i)?),
            _ => None,
        };
        out.push(GrantRecord {
            grant_id: s.get(row, gid).to_string(),
            scholar_id: s.get(row, sid).to_string(),
            award_year: s.parse(row, ay, "award_year", i)?,
            amount_usd: amount,
            duration_years: duration,
            title: s.get(row, title).to_string(),
            abstract_text: s.get(row, abs_).to_string(),
            topic_id,
        });
    }
    Ok(out)
}

pub fn read_pubs(path: &Path) -> Result<Vec<PublicationRecord>> {
    let s = Sheet::read(path)?;
    let (pid, sid, yr, cit, cs, coa) = (
        s.col("pub_id")?,
        s.col("scholar_id")?,
        s.col("year")?,
        s.col("citations")?,
        s.col("citescore")?,
        s.col("coauthor_ids")?,
    );
    let mut out = Vec::with_capacity(s.rows.len());
    for (i, row) in s.rows.iter().enumerate() {
        let citations: f64 = s.parse(row, cit, "citations", i)?;
        let citescore: f64 = s.parse(row, cs, "citescore", i)?;
        if citations < 0.0 || citescore < 0.0 {
            return Err(Error::Schema {
                file: s.file.clone(),
                detail: format!("row {}: citations and citescore must be >= 0", i + 2),
            });
        }
        let coauthors: Vec<String> = s
            .get(row, coa)
            .split(';')
            .filter(|t| !t.is_empty())
            .map(|t| t.to_string())
            .collect();
        out.push(PublicationRecord {
            pub_id: s.get(row, pid).to_string(),
            scholar_id: s.get(row, sid).to_string(),
            year: s.parse(row, yr, "year", i)?,
            citations,
            citescore,
            coauthor_ids: coauthors,
        });
    }
    Ok(out)
}

pub fn read_context(path: &Path) -> Result<Vec<ContextRecord>> {
    let s = Sheet::read(path)?;
    let cols = [
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
    ];
    let idx: Vec<usize> = cols.iter().map(|c| s.col(c)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(s.rows.len());
    for (i, row) in s.rows.iter().enumerate() {
        out.push(ContextRecord {
            affiliation_id: s.get(row, idx[0]).to_string(),
            year: s.parse(row, idx[1], "year", i)?,
            qs_rank: s.parse(row, idx[2], "qs_rank", i)?,
            usnews_rank: s.parse(row, idx[3], "usnews_rank", i)?,
            employer_reputation: s.parse(row, idx[4], "employer_reputation", i)?,
            ln_pubs_affil: s.parse(row, idx[5], "ln_pubs_affil", i)?,
            ln_cites_affil: s.parse(row, idx[6], "ln_cites_affil", i)?,
            field_id: s.get(row, idx[7]).to_string(),
            ln_pubs_field: s.parse(row, idx[8], "ln_pubs_field", i)?,
            ln_cites_field: s.parse(row, idx[9], "ln_cites_field", i)?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Derivations

/// Yearly averages and article count for one scholar-year. Empty years give
/// (0, 0, 0).
pub fn aggregate_annual_metrics(
    pubs: &[PublicationRecord],
    scholar_id: &str,
    year: i32,
) -> (f64, f64, u32) {
    let mut sum_cit = 0.0;
    let mut sum_cs = 0.0;
    let mut n = 0u32;
    for p in pubs {
        if p.scholar_id == scholar_id && p.year == year {
            sum_cit += p.citations;
            sum_cs += p.citescore;
            n += 1;
        }
    }
    if n == 0 {
        (0.0, 0.0, 0)
    } else {
        (sum_cit / n as f64, sum_cs / n as f64, n)
    }
}

/// Academic age: (award_year - 1) - first_pub_year, floored at zero.
pub fn derive_academic_age(scholar: &ScholarRecord, award_year: i32) -> Result<f64> {
    if scholar.first_pub_year > award_year {
        // spec invariant: first_pub_year <= any observation year
        return Err(Error::MissingData(format!(
            "scholar {}: first_pub_year {} after award year {}",
            scholar.scholar_id, scholar.first_pub_year, award_year
        )));
    }
    Ok(((award_year - 1) - scholar.first_pub_year).max(0) as f64)
}

/// ln(1 + mean of the metric over the `lookback` years before
/// `window_start_year`). Zero history gives ln(1) = 0.
pub fn derive_initial_performance(
    pubs: &[PublicationRecord],
    scholar_id: &str,
    window_start_year: i32,
    metric: Metric,
    lookback: u32,
) -> f64 {
    let mut total = 0.0;
    let years = lookback as f64;
    for offset in 1..=lookback as i32 {
        let y = window_start_year - offset;
        let (cit, cs, n) = aggregate_annual_metrics(pubs, scholar_id, y);
        total += match metric {
            Metric::ArticleCount => n as f64,
            Metric::AvgCitations => cit,
            Metric::AvgCitescore => cs,
        };
    }
    (1.0 + total / years).ln()
}

/// Drops scholars whose gender confidence falls below the threshold.
/// Returns the number of scholars removed.
pub fn filter_gender_confidence(dataset: &mut PanelDataset, threshold: f64) -> usize {
    let keep: BTreeSet<String> = dataset
        .scholars
        .values()
        .filter(|s| s.gender_confidence >= threshold)
        .map(|s| s.scholar_id.clone())
        .collect();
    let removed = dataset.scholars.len() - keep.len();
    dataset.scholars.retain(|id, _| keep.contains(id));
    dataset.observations.retain(|o| keep.contains(&o.scholar_id));
    dataset.report.gender_filtered += removed;
    removed
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Tail-decile CiteScore outcome: publications inside the selected tail of
/// the global CiteScore distribution keep their value; all others are
/// replaced by the scholar's own average CiteScore. Returns the yearly mean
/// of the transformed values.
pub fn citescore_tail_outcome(
    pubs: &[PublicationRecord],
    global_citescores: &[f64],
    scholar_id: &str,
    year: i32,
    tail: Tail,
    q: f64,
) -> Result<f64> {
    if global_citescores.is_empty() {
        return Err(Error::InvalidState(
            "global CiteScore distribution is empty".into(),
        ));
    }
    let mut sorted = global_citescores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let threshold = match tail {
        Tail::Top => quantile(&sorted, 1.0 - q),
        Tail::Bottom => quantile(&sorted, q),
    };

    let scholar_pubs: Vec<&PublicationRecord> =
        pubs.iter().filter(|p| p.scholar_id == scholar_id).collect();
    let scholar_avg = if scholar_pubs.is_empty() {
        0.0
    } else {
        scholar_pubs.iter().map(|p| p.citescore).sum::<f64>() / scholar_pubs.len() as f64
    };

    let year_pubs: Vec<&&PublicationRecord> =
        scholar_pubs.iter().filter(|p| p.year == year).collect();
    if year_pubs.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = year_pubs
        .iter()
        .map(|p| {
            let in_tail = match tail {
                Tail::Top => p.citescore >= threshold,
                Tail::Bottom => p.citescore <= threshold,
            };
            if in_tail {
                p.citescore
            } else {
                scholar_avg
            }
        })
        .sum();
    Ok(sum / year_pubs.len() as f64)
}

// ---------------------------------------------------------------------------
// Assembly

/// Builds the scholar-year panel from the four input files.
pub fn load_panel(
    scholars_csv: &Path,
    grants_csv: &Path,
    pubs_csv: &Path,
    context_csv: &Path,
    options: PanelOptions,
) -> Result<PanelDataset> {
    let scholars = read_scholars(scholars_csv)?;
    let grants = read_grants(grants_csv)?;
    let pubs = read_pubs(pubs_csv)?;
    let context = read_context(context_csv)?;
    assemble_panel(scholars, grants, pubs, context, options)
}

pub fn assemble_panel(
    scholars: Vec<ScholarRecord>,
    grants: Vec<GrantRecord>,
    pubs: Vec<PublicationRecord>,
    context: Vec<ContextRecord>,
    options: PanelOptions,
) -> Result<PanelDataset> {
    let scholar_map: BTreeMap<String, ScholarRecord> = scholars
        .into_iter()
        .map(|s| (s.scholar_id.clone(), s))
        .collect();

    // referential integrity
    let mut dangling: Vec<String> = Vec::new();
    for g in &grants {
        if !scholar_map.contains_key(&g.scholar_id) {
            dangling.push(format!("grant {} -> scholar {}", g.grant_id, g.scholar_id));
        }
    }
    for p in &pubs {
        if !scholar_map.contains_key(&p.scholar_id) {
            dangling.push(format!("pub {} -> scholar {}", p.pub_id, p.scholar_id));
        }
    }
    if !dangling.is_empty() {
        return Err(Error::Integrity {
            detail: format!("dangling scholar_ids: {}", dangling.join(", ")),
        });
    }

    // indexes
    let mut pubs_by_scholar_year: BTreeMap<(&str, i32), (f64, f64, u32)> = BTreeMap::new();
    for p in &pubs {
        let e = pubs_by_scholar_year
            .entry((p.scholar_id.as_str(), p.year))
            .or_insert((0.0, 0.0, 0));
        e.0 += p.citations;
        e.1 += p.citescore;
        e.2 += 1;
    }
    let mut grants_by_scholar: BTreeMap<&str, Vec<&GrantRecord>> = BTreeMap::new();
    for g in &grants {
        grants_by_scholar.entry(g.scholar_id.as_str()).or_default().push(g);
    }
    let context_by_key: BTreeMap<(&str, i32), &ContextRecord> = context
        .iter()
        .map(|c| ((c.affiliation_id.as_str(), c.year), c))
        .collect();

    let mut observations = Vec::new();
    let mut report = IngestReport::default();

    for scholar in scholar_map.values() {
        let sgrants = grants_by_scholar
            .get(scholar.scholar_id.as_str())
            .cloned()
            .unwrap_or_default();
        let topic_id = sgrants.iter().filter_map(|g| g.topic_id).next();
        let initial_articles = derive_initial_performance(
            &pubs,
            &scholar.scholar_id,
            options.window_start,
            Metric::ArticleCount,
            options.lookback,
        );
        let initial_citations = derive_initial_performance(
            &pubs,
            &scholar.scholar_id,
            options.window_start,
            Metric::AvgCitations,
            options.lookback,
        );
        let initial_citescore = derive_initial_performance(
            &pubs,
            &scholar.scholar_id,
            options.window_start,
            Metric::AvgCitescore,
            options.lookback,
        );

        for year in options.window_start..=options.window_end {
            let ctx = match context_by_key.get(&(scholar.affiliation_id.as_str(), year)) {
                Some(c) => *c,
                None => {
                    report.rejected.push(RejectedRow {
                        scholar_id: scholar.scholar_id.clone(),
                        year,
                        reason: format!(
                            "no context row for affiliation {} year {}",
                            scholar.affiliation_id, year
                        ),
                    });
                    continue;
                }
            };

            let (sum_cit, sum_cs, n) = pubs_by_scholar_year
                .get(&(scholar.scholar_id.as_str(), year))
                .cloned()
                .unwrap_or((0.0, 0.0, 0));
            let (avg_citations, avg_citescore) = if n == 0 {
                (0.0, 0.0)
            } else {
                (sum_cit / n as f64, sum_cs / n as f64)
            };

            let mut funded = 0u8;
            let mut amount_in_force = 0.0;
            for g in &sgrants {
                let span = g.duration_years.min(options.treatment_cap) as i32;
                if year >= g.award_year && year < g.award_year + span {
                    funded = 1;
                    amount_in_force += g.amount_usd;
                }
            }

            observations.push(PanelObservation {
                scholar_id: scholar.scholar_id.clone(),
                year,
                affiliation_id: scholar.affiliation_id.clone(),
                topic_id,
                funded,
                article_count: n,
                avg_citations,
                avg_citescore,
                academic_age: derive_academic_age(scholar, year)?,
                ln_grant_amount: (1.0 + amount_in_force).ln(),
                gender: if scholar.gender == Gender::Male { 1.0 } else { 0.0 },
                initial_articles,
                initial_citations,
                initial_citescore,
                ln_pubs_field: ctx.ln_pubs_field,
                ln_cites_field: ctx.ln_cites_field,
                ln_pubs_affil: ctx.ln_pubs_affil,
                ln_cites_affil: ctx.ln_cites_affil,
                qs_rank: ctx.qs_rank,
                usnews_rank: ctx.usnews_rank,
                employer_reputation: ctx.employer_reputation,
            });
        }
    }

    // every control finite
    for o in &observations {
        let vals = [
            o.academic_age,
            o.ln_grant_amount,
            o.gender,
            o.initial_articles,
            o.initial_citations,
            o.initial_citescore,
            o.ln_pubs_field,
            o.ln_cites_field,
            o.ln_pubs_affil,
            o.ln_cites_affil,
            o.qs_rank,
            o.usnews_rank,
            o.employer_reputation,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integrity {
                detail: format!(
                    "non-finite control for scholar {} year {}",
                    o.scholar_id, o.year
                ),
            });
        }
    }

    Ok(PanelDataset {
        observations,
        scholars: scholar_map,
        grants,
        pubs,
        options,
        report,
    })
}

impl PanelDataset {
    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    /// Extracts a named numeric column from the panel.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        self.observations
            .iter()
            .map(|o| o.value(name))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown panel column '{}'", name)))
    }
}

impl PanelObservation {
    pub fn value(&self, name: &str) -> Option<f64> {
        Some(match name {
            "funded" => self.funded as f64,
            "year" => self.year as f64,
            "article_count" => self.article_count as f64,
            "avg_citations" => self.avg_citations,
            "avg_citescore" => self.avg_citescore,
            "academic_age" => self.academic_age,
            "ln_grant_amount" => self.ln_grant_amount,
            "gender" => self.gender,
            "initial_articles" => self.initial_articles,
            "initial_citations" => self.initial_citations,
            "initial_citescore" => self.initial_citescore,
            "ln_pubs_field" => self.ln_pubs_field,
            "ln_cites_field" => self.ln_cites_field,
            "ln_pubs_affil" => self.ln_pubs_affil,
            "ln_cites_affil" => self.ln_cites_affil,
            "qs_rank" => self.qs_rank,
            "usnews_rank" => self.usnews_rank,
            "employer_reputation" => self.employer_reputation,
            _ => return None,
        })
    }

    /// Initial-performance control matching an outcome metric.
    pub fn initial_for(&self, metric: Metric) -> f64 {
        match metric {
            Metric::ArticleCount => self.initial_articles,
            Metric::AvgCitations => self.initial_citations,
            Metric::AvgCitescore => self.initial_citescore,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scholar(id: &str, aff: &str, fpy: i32) -> ScholarRecord {
        ScholarRecord {
            scholar_id: id.to_string(),
            gender: Gender::Male,
            gender_confidence: 0.99,
            first_pub_year: fpy,
            affiliation_id: aff.to_string(),
        }
    }

    fn publication(sid: &str, year: i32, cit: f64, cs: f64) -> PublicationRecord {
        PublicationRecord {
            pub_id: format!("{}-{}-{}", sid, year, cit),
            scholar_id: sid.to_string(),
            year,
            citations: cit,
            citescore: cs,
            coauthor_ids: vec![],
        }
    }

    fn full_context(affs: &[&str], start: i32, end: i32) -> Vec<ContextRecord> {
        let mut out = Vec::new();
        for a in affs {
            for y in start..=end {
                out.push(ContextRecord {
                    affiliation_id: a.to_string(),
                    year: y,
                    qs_rank: 100.0,
                    usnews_rank: 50.0,
                    employer_reputation: 80.0,
                    ln_pubs_affil: 10.0,
                    ln_cites_affil: 12.0,
                    field_id: "f1".to_string(),
                    ln_pubs_field: 9.0,
                    ln_cites_field: 11.0,
                });
            }
        }
        out
    }

    #[test]
    fn full_cross_product() {
        let scholars = vec![scholar("s1", "a1", 1990), scholar("s2", "a1", 1995), scholar("s3", "a2", 1998)];
        let opts = PanelOptions {
            window_start: 2000,
            window_end: 2004,
            ..Default::default()
        };
        let ds = assemble_panel(scholars, vec![], vec![], full_context(&["a1", "a2"], 2000, 2004), opts).unwrap();
        assert_eq!(ds.n_observations(), 15);
    }

    #[test]
    fn dangling_grant_is_integrity_error() {
        let scholars = vec![scholar("s1", "a1", 1990)];
        let grants = vec![GrantRecord {
            grant_id: "g1".into(),
            scholar_id: "ghost".into(),
            award_year: 2001,
            amount_usd: 1000.0,
            duration_years: 2,
            title: String::new(),
            abstract_text: String::new(),
            topic_id: None,
        }];
        let r = assemble_panel(
            scholars,
            grants,
            vec![],
            full_context(&["a1"], 2000, 2004),
            PanelOptions { window_start: 2000, window_end: 2004, ..Default::default() },
        );
        match r {
            Err(Error::Integrity { detail }) => assert!(detail.contains("ghost")),
            other => panic!("expected integrity error, got {:?}", other.map(|d| d.n_observations())),
        }
    }

    #[test]
    fn missing_context_rejects_rows_and_counts() {
        // a2 has no context rows: 5 rejections
        let scholars = vec![scholar("s1", "a1", 1990), scholar("s2", "a2", 1990)];
        let opts = PanelOptions { window_start: 2000, window_end: 2004, ..Default::default() };
        let ds = assemble_panel(scholars, vec![], vec![], full_context(&["a1"], 2000, 2004), opts).unwrap();
        assert_eq!(ds.n_observations(), 5);
        assert_eq!(ds.report.rejected.len(), 5);
        // 2 scholars x 5 years minus exclusions
        assert_eq!(ds.n_observations(), 2 * 5 - ds.report.rejected.len());
    }

    #[test]
    fn annual_metrics_mean() {
        let pubs = vec![publication("s1", 2010, 10.0, 2.0), publication("s1", 2010, 20.0, 4.0)];
        let (cit, cs, n) = aggregate_annual_metrics(&pubs, "s1", 2010);
        assert_eq!(cit, 15.0);
        assert_eq!(cs, 3.0);
        assert_eq!(n, 2);
        assert_eq!(aggregate_annual_metrics(&pubs, "s1", 2011), (0.0, 0.0, 0));
    }

    #[test]
    fn annual_metrics_brute_force_oracle() {
        let vals = [3.0, 7.0, 11.0, 2.0, 9.0, 5.0, 13.0];
        let pubs: Vec<_> = vals.iter().map(|&v| publication("s1", 2012, v, v / 2.0)).collect();
        let (cit, cs, n) = aggregate_annual_metrics(&pubs, "s1", 2012);
        let oracle: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((cit - oracle).abs() < 1e-12);
        assert!((cs - oracle / 2.0).abs() < 1e-12);
        assert_eq!(n as usize, vals.len());
    }

    #[test]
    fn academic_age_formula() {
        let s = scholar("s1", "a1", 2000);
        assert_eq!(derive_academic_age(&s, 2012).unwrap(), 11.0);
        // first pub equals award year: floored at 0
        let s2 = scholar("s2", "a1", 2012);
        assert_eq!(derive_academic_age(&s2, 2012).unwrap(), 0.0);
    }

    #[test]
    fn initial_performance_mean_then_log() {
        // counts {2, 4, 6} in the three prior years
        let mut pubs = Vec::new();
        for (y, n) in [(1997, 2), (1998, 4), (1999, 6)] {
            for i in 0..n {
                pubs.push(publication("s1", y, i as f64, 1.0));
            }
        }
        let v = derive_initial_performance(&pubs, "s1", 2000, Metric::ArticleCount, 3);
        assert!((v - (1.0f64 + 4.0).ln()).abs() < 1e-12);
        // no history
        let v0 = derive_initial_performance(&[], "s1", 2000, Metric::AvgCitations, 3);
        assert_eq!(v0, 0.0);
    }

    #[test]
    fn initial_performance_monotone() {
        let base = vec![publication("s1", 1999, 5.0, 1.0)];
        let higher = vec![publication("s1", 1999, 9.0, 1.0)];
        let a = derive_initial_performance(&base, "s1", 2000, Metric::AvgCitations, 3);
        let b = derive_initial_performance(&higher, "s1", 2000, Metric::AvgCitations, 3);
        assert!(b >= a);
    }

    #[test]
    fn gender_filter_threshold() {
        let mut s1 = scholar("s1", "a1", 1990);
        s1.gender_confidence = 0.99;
        let mut s2 = scholar("s2", "a1", 1990);
        s2.gender_confidence = 0.90;
        let opts = PanelOptions { window_start: 2000, window_end: 2001, ..Default::default() };
        let mut ds = assemble_panel(vec![s1, s2], vec![], vec![], full_context(&["a1"], 2000, 2001), opts).unwrap();
        let removed = filter_gender_confidence(&mut ds, 0.95);
        assert_eq!(removed, 1);
        assert_eq!(ds.scholars.len(), 1);
        assert!(ds.observations.iter().all(|o| o.scholar_id == "s1"));
    }

    #[test]
    fn gender_filter_zero_threshold_is_identity() {
        let opts = PanelOptions { window_start: 2000, window_end: 2001, ..Default::default() };
        let mut ds = assemble_panel(
            vec![scholar("s1", "a1", 1990)],
            vec![],
            vec![],
            full_context(&["a1"], 2000, 2001),
            opts,
        )
        .unwrap();
        let before = ds.n_observations();
        assert_eq!(filter_gender_confidence(&mut ds, 0.0), 0);
        assert_eq!(ds.n_observations(), before);
    }

    #[test]
    fn treatment_window_follows_duration_with_cap() {
        let scholars = vec![scholar("s1", "a1", 1990)];
        let grants = vec![GrantRecord {
            grant_id: "g1".into(),
            scholar_id: "s1".into(),
            award_year: 2002,
            amount_usd: 100.0,
            duration_years: 8,
            title: String::new(),
            abstract_text: String::new(),
            topic_id: Some(0),
        }];
        let opts = PanelOptions { window_start: 2000, window_end: 2010, ..Default::default() };
        let ds = assemble_panel(scholars, grants, vec![], full_context(&["a1"], 2000, 2010), opts).unwrap();
        let funded_years: Vec<i32> = ds
            .observations
            .iter()
            .filter(|o| o.funded == 1)
            .map(|o| o.year)
            .collect();
        // duration 8 capped at 5: 2002..=2006
        assert_eq!(funded_years, vec![2002, 2003, 2004, 2005, 2006]);
    }

    #[test]
    fn tail_outcome_cases() {
        // global distribution 1..=10; top decile threshold ~9.1
        let global: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        // scholar with two pubs in 2010: one in the top tail (10.0), one not (2.0)
        let pubs = vec![
            publication("s1", 2010, 0.0, 10.0),
            publication("s1", 2010, 0.0, 2.0),
            publication("s1", 2009, 0.0, 6.0),
        ];
        let avg = (10.0 + 2.0 + 6.0) / 3.0;
        let v = citescore_tail_outcome(&pubs, &global, "s1", 2010, Tail::Top, 0.10).unwrap();
        assert!((v - (10.0 + avg) / 2.0).abs() < 1e-12);

        // all pubs inside the tail: identical to untransformed average
        let hi = vec![publication("s2", 2010, 0.0, 9.9), publication("s2", 2010, 0.0, 10.0)];
        let v2 = citescore_tail_outcome(&hi, &global, "s2", 2010, Tail::Top, 0.10).unwrap();
        assert!((v2 - (9.9 + 10.0) / 2.0).abs() < 1e-12);

        // no pubs inside the tail: scholar average
        let lo = vec![publication("s3", 2010, 0.0, 2.0), publication("s3", 2010, 0.0, 4.0)];
        let v3 = citescore_tail_outcome(&lo, &global, "s3", 2010, Tail::Top, 0.10).unwrap();
        assert!((v3 - 3.0).abs() < 1e-12);

        // empty global distribution
        assert!(matches!(
            citescore_tail_outcome(&lo, &[], "s3", 2010, Tail::Top, 0.10),
            Err(Error::InvalidState(_))
        ));
    }
}
