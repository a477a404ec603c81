//! Bucketing of `[CLS]` attention into confounder, other and `[CLS]` shares.

use serde::{Deserialize, Serialize};

use crate::claimsgen::Code;
use crate::error::{contract, Result};
use crate::models::{ClsAttention, EncoderInput, Token};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    /// Mean weight per confounder position; absent when no sample has one.
    pub confounders: Option<f64>,
    /// Mean weight per non-confounder, non-`[CLS]` position.
    pub others: Option<f64>,
    pub cls: f64,
    /// Samples contributing to each of the first two buckets.
    pub n_confounders: usize,
    pub n_others: usize,
}

/// Positions (excluding `[CLS]` at 0) whose token involves one of `codes`,
/// and the remaining positions.
pub fn bucket_positions(input: &EncoderInput, codes: &[Code]) -> (Vec<usize>, Vec<usize>) {
    let mut conf = Vec::new();
    let mut other = Vec::new();
    for (i, tok) in input.tokens.iter().enumerate() {
        let hit = match tok {
            Token::Cls => continue,
            Token::Code(c) => codes.contains(c),
            Token::Record(r) => r.iter().any(|c| codes.contains(c)),
        };
        if hit {
            conf.push(i);
        } else {
            other.push(i);
        }
    }
    (conf, other)
}

/// Per-sample bucket means, then averaged over samples. A sample with an
/// empty bucket does not contribute to that bucket.
pub fn attention_summary(rows: &[ClsAttention], codes: &[Code]) -> Result<AttentionSummary> {
    if rows.is_empty() {
        return Err(contract("attention summary over no samples"));
    }
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for row in rows {
        if row.weights.len() != row.input.len() {
            return Err(contract("attention row length differs from its input"));
        }
        let (conf, other) = bucket_positions(&row.input, codes);
        for (b, idx) in [conf, other].iter().enumerate() {
            if !idx.is_empty() {
                sums[b] += idx.iter().map(|&i| row.weights[i]).sum::<f64>() / idx.len() as f64;
                counts[b] += 1;
            }
        }
        sums[2] += row.weights[0];
        counts[2] += 1;
    }
    let mean = |b: usize| (counts[b] > 0).then(|| sums[b] / counts[b] as f64);
    Ok(AttentionSummary {
        confounders: mean(0),
        others: mean(1),
        cls: sums[2] / counts[2] as f64,
        n_confounders: counts[0],
        n_others: counts[1],
    })
}
