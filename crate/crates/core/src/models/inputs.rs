//! Token construction for the sequence models.

use crate::claimsgen::{Code, RecordSequence};
use crate::error::{contract, Result};
use crate::numerics::{Mat, SparseRows};

/// What a token's representation is made of, before positional encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Token {
    Cls,
    Code(Code),
    /// Mean of the codes' embeddings; zero for an empty record.
    Record(Vec<Code>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderInput {
    pub tokens: Vec<Token>,
    pub positions: Vec<usize>,
    /// True for real tokens.
    pub mask: Vec<bool>,
    /// Tokens dropped from the oldest end to fit the length limit.
    pub truncated: usize,
}

impl EncoderInput {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn finish(mut tokens: Vec<Token>, mut positions: Vec<usize>, max_len: usize) -> Result<Self> {
        if max_len < 2 {
            return Err(contract("encoder inputs need room for [CLS] and one token"));
        }
        let mut truncated = 0;
        if tokens.len() + 1 > max_len {
            truncated = tokens.len() + 1 - max_len;
            tokens.drain(..truncated);
            positions.drain(..truncated);
        }
        tokens.insert(0, Token::Cls);
        positions.insert(0, 0);
        let mask = vec![true; tokens.len()];
        Ok(EncoderInput {
            tokens,
            positions,
            mask,
            truncated,
        })
    }
}

/// Code-level input: every code in chronological order, each carrying its
/// record's 1-based index as position; `[CLS]` sits at position 0.
pub fn build_input_code(seq: &RecordSequence, max_len: usize) -> Result<EncoderInput> {
    let mut tokens = Vec::with_capacity(seq.total_codes());
    let mut positions = Vec::with_capacity(seq.total_codes());
    for (t, rec) in seq.records().iter().enumerate() {
        for &c in rec {
            tokens.push(Token::Code(c));
            positions.push(t + 1);
        }
    }
    EncoderInput::finish(tokens, positions, max_len)
}

/// Record-level input: one pooled token per record at positions `1..=T`.
pub fn build_input_record(seq: &RecordSequence, max_len: usize) -> Result<EncoderInput> {
    let tokens = seq.records().iter().map(|r| Token::Record(r.clone())).collect();
    let positions = (1..=seq.len()).collect();
    EncoderInput::finish(tokens, positions, max_len)
}

/// Mean of the embedding rows of `record`; zero vector when empty.
pub fn record_pool(record: &[Code], table: &Mat) -> Result<Vec<f64>> {
    let mut out = vec![0.0; table.ncols()];
    if record.is_empty() {
        return Ok(out);
    }
    // summation in ascending code order, so within-record order cannot matter
    let mut codes = record.to_vec();
    codes.sort_unstable();
    let w = 1.0 / codes.len() as f64;
    for c in codes {
        let row = table
            .outer_iter()
            .nth(c as usize)
            .ok_or_else(|| contract(format!("code {c} outside embedding table")))?;
        for (o, v) in out.iter_mut().zip(row) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Pushes a pooling row for `record` (ascending code order, see [`record_pool`]).
pub(crate) fn push_pool_row(sp: &mut SparseRows, record: &[Code]) {
    let mut codes: Vec<usize> = record.iter().map(|&c| c as usize).collect();
    codes.sort_unstable();
    sp.push_mean(&codes);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(records: Vec<Vec<Code>>) -> RecordSequence {
        RecordSequence::new(records).unwrap()
    }

    #[test]
    fn code_input_layout() {
        let inp = build_input_code(&seq(vec![vec![4, 2], vec![], vec![9]]), 512).unwrap();
        assert_eq!(
            inp.tokens,
            vec![Token::Cls, Token::Code(4), Token::Code(2), Token::Code(9)]
        );
        assert_eq!(inp.positions, vec![0, 1, 1, 3]);
        assert_eq!(inp.mask, vec![true; 4]);
        assert_eq!(inp.truncated, 0);
    }

    #[test]
    fn record_input_layout() {
        let s = seq(vec![vec![1], vec![1], vec![], vec![5, 6], vec![0]]);
        let inp = build_input_record(&s, 512).unwrap();
        assert_eq!(inp.len(), 6);
        assert_eq!(inp.positions, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(inp.tokens[1], inp.tokens[2]);
    }

    #[test]
    fn truncation_drops_oldest() {
        let s = seq(vec![vec![1, 2, 3], vec![4, 5]]);
        let inp = build_input_code(&s, 4).unwrap();
        assert_eq!(inp.truncated, 2);
        assert_eq!(
            inp.tokens,
            vec![Token::Cls, Token::Code(3), Token::Code(4), Token::Code(5)]
        );
        assert_eq!(inp.positions, vec![0, 1, 2, 2]);
    }

    #[test]
    fn pooling() {
        let table = Mat::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64);
        assert_eq!(record_pool(&[2], &table).unwrap(), vec![6.0, 7.0, 8.0]);
        assert_eq!(record_pool(&[], &table).unwrap(), vec![0.0; 3]);
        assert_eq!(
            record_pool(&[3, 0], &table).unwrap(),
            record_pool(&[0, 3], &table).unwrap()
        );
        assert!(record_pool(&[4], &table).is_err());
    }
}
