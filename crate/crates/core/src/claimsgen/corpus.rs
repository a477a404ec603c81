//! Ingestion of exported patient/date/code corpora and semi-synthetic
//! confounding injection on top of them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;

use super::dataset::{label_sample, ClaimsDataset, DatasetHeader, DATASET_SCHEMA_VERSION};
use super::scenario::{distance_feature, ScenarioKind, ScenarioSpec};
use super::sequence::{Code, RecordSequence, MIN_RECORDS};
use crate::error::{Error, Result};
use crate::rng;

pub const CORPUS_HEADER: [&str; 3] = ["patient_id", "date", "code"];

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    /// Code strings in dense-index order (sorted).
    pub vocabulary: Vec<String>,
    pub patients: Vec<(String, RecordSequence)>,
    /// Patients with fewer than two distinct dates.
    pub dropped: usize,
}

impl Corpus {
    pub fn code_index(&self, code: &str) -> Option<Code> {
        self.vocabulary
            .binary_search_by(|c| c.as_str().cmp(code))
            .ok()
            .map(|i| i as Code)
    }
}

pub fn ingest_corpus(path: &Path) -> Result<Corpus> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file)
}

pub fn ingest_reader<R: std::io::Read>(reader: R) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = rows
        .next()
        .ok_or_else(|| Error::Ingestion {
            line: 1,
            message: "empty corpus file".into(),
        })?
        .map_err(|e| csv_error(e, 1))?;
    if header.iter().collect::<Vec<_>>() != CORPUS_HEADER {
        return Err(Error::Ingestion {
            line: 1,
            message: format!("expected header {}", CORPUS_HEADER.join(",")),
        });
    }

    let mut by_patient: BTreeMap<String, BTreeMap<NaiveDate, BTreeSet<String>>> = BTreeMap::new();
    let mut codes = BTreeSet::new();
    for row in rows {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() != 3 || row.iter().any(str::is_empty) {
            return Err(Error::Ingestion {
                line,
                message: format!("expected 3 non-empty fields, got {:?}", row.iter().collect::<Vec<_>>()),
            });
        }
        let date = NaiveDate::parse_from_str(&row[1], "%Y-%m-%d").map_err(|_| Error::Ingestion {
            line,
            message: format!("unrecognized date {:?}, expected YYYY-MM-DD", &row[1]),
        })?;
        codes.insert(row[2].to_string());
        by_patient
            .entry(row[0].to_string())
            .or_default()
            .entry(date)
            .or_default()
            .insert(row[2].to_string());
    }

    let vocabulary: Vec<String> = codes.into_iter().collect();
    let index = |c: &str| vocabulary.binary_search_by(|v| v.as_str().cmp(c)).unwrap() as Code;
    let mut patients = Vec::new();
    let mut dropped = 0;
    for (pid, dates) in by_patient {
        if dates.len() < MIN_RECORDS {
            dropped += 1;
            continue;
        }
        let records = dates
            .into_values()
            .map(|set| {
                let mut r: Vec<Code> = set.iter().map(|c| index(c)).collect();
                r.sort_unstable();
                r
            })
            .collect();
        patients.push((pid, RecordSequence::new(records)?));
    }
    Ok(Corpus {
        vocabulary,
        patients,
        dropped,
    })
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    Error::Ingestion {
        line,
        message: e.to_string(),
    }
}

/// Patients whose two confounding codes both occur at distance `d >= 1`.
pub fn semisynthetic_cohort<'a>(
    corpus: &'a Corpus,
    code_a: Code,
    code_b: Code,
) -> Vec<&'a (String, RecordSequence)> {
    corpus
        .patients
        .iter()
        .filter(|(_, seq)| matches!(distance_feature(seq, code_a, code_b), Some(d) if d >= 1))
        .collect()
}

pub fn inject_semisynthetic(corpus: &Corpus, spec: &ScenarioSpec, seed: u64) -> Result<ClaimsDataset> {
    spec.validate()?;
    if spec.kind != ScenarioKind::SemiSyntheticDistance {
        return Err(Error::Injection(format!(
            "injection needs the semi-synthetic distance scenario, got {:?}",
            spec.kind
        )));
    }
    let code_b = spec.code_b.expect("validated distance scenario");
    for c in [spec.code_a, code_b] {
        if c as usize >= corpus.vocabulary.len() {
            return Err(Error::Injection(format!(
                "code {c} outside vocabulary of {}",
                corpus.vocabulary.len()
            )));
        }
    }
    let cohort = semisynthetic_cohort(corpus, spec.code_a, code_b);
    if cohort.is_empty() {
        return Err(Error::Injection(format!(
            "no patient has both {:?} and {:?} in distinct records",
            corpus.vocabulary[spec.code_a as usize], corpus.vocabulary[code_b as usize]
        )));
    }
    let mut samples = Vec::with_capacity(cohort.len());
    let mut patient_ids = Vec::with_capacity(cohort.len());
    for (i, (pid, seq)) in cohort.into_iter().enumerate() {
        let mut rng = rng::stream(seed, "semi-synthetic", i as u64);
        samples.push(label_sample(i as u64, seq.clone(), spec, &mut rng)?);
        patient_ids.push(pid.clone());
    }
    Ok(ClaimsDataset {
        header: DatasetHeader {
            schema_version: DATASET_SCHEMA_VERSION,
            dx: corpus.vocabulary.len(),
            scenario: spec.clone(),
            seed,
            n_samples: samples.len(),
            generator: None,
            vocabulary: Some(corpus.vocabulary.clone()),
            patient_ids: Some(patient_ids),
        },
        samples,
    })
}
