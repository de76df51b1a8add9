//! File formats: matrices (CSV/JSON), priors (JSON), topic sequence dumps
//! and prediction tables (CSV).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ReidError, Result};
use crate::model::{FinitePrior, PriorComponent, RepresentationMatrix};
use crate::topics::{SiteObservations, Topic};

/// JSON form of a matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    pub m: usize,
    pub rows: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl MatrixJson {
    pub fn into_matrix(self) -> Result<RepresentationMatrix> {
        if self.rows.len() != self.n || self.rows.iter().any(|r| r.len() != self.m) {
            return Err(ReidError::ShapeMismatch {
                expected: (self.n, self.m),
                actual: (self.rows.len(), self.rows.first().map_or(0, Vec::len)),
            });
        }
        let p = RepresentationMatrix::from_rows_renormalized(self.rows)?;
        match self.labels {
            Some(l) => p.with_labels(l),
            None => Ok(p),
        }
    }
}

impl From<&RepresentationMatrix> for MatrixJson {
    fn from(p: &RepresentationMatrix) -> Self {
        Self {
            n: p.n(),
            m: p.m(),
            rows: p.to_rows(),
            labels: p.column_labels().map(<[String]>::to_vec),
        }
    }
}

/// Reads a matrix in CSV form: a header of column labels, then one row of
/// decimal probabilities per user.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<RepresentationMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let labels: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| ReidError::Parse(format!("line {}: {f:?} is not a number", i + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    RepresentationMatrix::from_rows_renormalized(rows)?.with_labels(labels)
}

pub fn read_matrix_json<R: Read>(reader: R) -> Result<RepresentationMatrix> {
    let m: MatrixJson = serde_json::from_reader(reader)?;
    m.into_matrix()
}

/// Reads a matrix file, choosing the format by extension (`.json`, else CSV).
pub fn read_matrix(path: &Path) -> Result<RepresentationMatrix> {
    let file = BufReader::new(File::open(path)?);
    if is_json(path) {
        read_matrix_json(file)
    } else {
        read_matrix_csv(file)
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn write_matrix_csv<W: Write>(p: &RepresentationMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let labels: Vec<String> = match p.column_labels() {
        Some(l) => l.to_vec(),
        None => (0..p.m()).map(|o| format!("o{o}")).collect(),
    };
    w.write_record(&labels)?;
    for row in p.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_json<W: Write>(p: &RepresentationMatrix, mut out: W) -> Result<()> {
    serde_json::to_writer(&mut out, &MatrixJson::from(p))?;
    writeln!(out)?;
    Ok(())
}

#[derive(Deserialize)]
struct PriorJson {
    components: Vec<ComponentJson>,
}

#[derive(Deserialize)]
struct ComponentJson {
    weight: f64,
    matrix: MatrixJson,
}

pub fn read_prior_json<R: Read>(reader: R) -> Result<FinitePrior> {
    let prior: PriorJson = serde_json::from_reader(reader)?;
    let components = prior
        .components
        .into_iter()
        .map(|c| {
            Ok(PriorComponent {
                weight: c.weight,
                matrix: c.matrix.into_matrix()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FinitePrior::new(components)
}

pub fn read_prior(path: &Path) -> Result<FinitePrior> {
    read_prior_json(BufReader::new(File::open(path)?))
}

/// One row of a sequence dump.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub user: usize,
    pub site: u64,
    pub epoch: usize,
    pub topic: Topic,
}

/// Flattens a site's observations into dump records.
pub fn site_records(site: u64, obs: &SiteObservations) -> Vec<SequenceRecord> {
    (0..obs.n())
        .flat_map(|user| {
            obs.sequence(user)
                .iter()
                .enumerate()
                .map(move |(epoch, &topic)| SequenceRecord {
                    user,
                    site,
                    epoch,
                    topic,
                })
        })
        .collect()
}

pub fn write_sequences_csv<W: Write>(records: &[SequenceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sequences_csv<R: Read>(reader: R) -> Result<Vec<SequenceRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Groups dump records into complete per-site observation tables, ordered
/// by site id. Every site must cover the same users and epochs.
pub fn sites_from_records(records: &[SequenceRecord]) -> Result<Vec<(u64, SiteObservations)>> {
    let mut by_site: BTreeMap<u64, Vec<&SequenceRecord>> = BTreeMap::new();
    for r in records {
        by_site.entry(r.site).or_default().push(r);
    }
    by_site
        .into_iter()
        .map(|(site, recs)| {
            let n = recs.iter().map(|r| r.user).max().unwrap_or(0) + 1;
            let epochs = recs.iter().map(|r| r.epoch).max().unwrap_or(0) + 1;
            let mut seqs: Vec<Vec<Option<Topic>>> = vec![vec![None; epochs]; n];
            for r in recs {
                let slot = &mut seqs[r.user][r.epoch];
                if slot.replace(r.topic).is_some() {
                    return Err(ReidError::Parse(format!(
                        "duplicate record for site {site}, user {}, epoch {}",
                        r.user, r.epoch
                    )));
                }
            }
            let seqs = seqs
                .into_iter()
                .enumerate()
                .map(|(u, s)| {
                    s.into_iter()
                        .enumerate()
                        .map(|(e, t)| {
                            t.ok_or_else(|| ReidError::Parse(format!("site {site} is missing user {u}, epoch {e}")))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((site, SiteObservations::from_sequences(&seqs)?))
        })
        .collect()
}

/// One row of a predictions table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub trial: u64,
    pub true_user: usize,
    pub predicted_user: usize,
    pub correct: bool,
}

pub fn write_predictions_csv<W: Write>(records: &[PredictionRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
