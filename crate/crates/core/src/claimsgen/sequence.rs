use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Dense code index into a vocabulary of size `d_x`.
pub type Code = u32;

/// A chronological list of records, each a set of codes.
///
/// Codes keep their insertion order inside a record (duplicates removed), so
/// tests can permute within-record order and observe that models ignore it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecordSequence {
    records: Vec<Vec<Code>>,
}

pub const MIN_RECORDS: usize = 2;

impl RecordSequence {
    pub fn new(records: Vec<Vec<Code>>) -> Result<Self> {
        if records.len() < MIN_RECORDS {
            return Err(contract(format!(
                "a record sequence needs at least {MIN_RECORDS} records, got {}",
                records.len()
            )));
        }
        let records = records
            .into_iter()
            .map(|r| {
                let mut seen = Vec::with_capacity(r.len());
                for c in r {
                    if !seen.contains(&c) {
                        seen.push(c);
                    }
                }
                seen
            })
            .collect();
        Ok(RecordSequence { records })
    }

    pub fn records(&self) -> &[Vec<Code>] {
        &self.records
    }

    /// Number of records, `T`.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, t: usize, code: Code) -> bool {
        self.records[t].contains(&code)
    }

    pub fn total_codes(&self) -> usize {
        self.records.iter().map(Vec::len).sum()
    }

    pub fn max_code(&self) -> Option<Code> {
        self.records.iter().flatten().copied().max()
    }

    pub fn validate(&self, dx: usize) -> Result<()> {
        if self.records.len() < MIN_RECORDS {
            return Err(contract("sequence shorter than two records"));
        }
        match self.max_code() {
            Some(c) if c as usize >= dx => Err(contract(format!("code {c} outside vocabulary of {dx}"))),
            _ => Ok(()),
        }
    }

    /// Indices of records containing `code`, ascending.
    pub fn occurrences(&self, code: Code) -> Vec<usize> {
        (0..self.records.len()).filter(|&t| self.contains(t, code)).collect()
    }

    /// Same sequence with record `t`'s codes replaced, used by invariance tests.
    pub fn with_record(&self, t: usize, codes: Vec<Code>) -> Result<Self> {
        let mut records = self.records.clone();
        *records
            .get_mut(t)
            .ok_or_else(|| contract(format!("record {t} out of range")))? = codes;
        Self::new(records)
    }
}
