//! IPTW, propensity-score error metrics, trimming and clipping, fold
//! splitting and t-based confidence intervals.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{contract, Error, Result};

fn check_lengths(treatment: &[u8], outcome: &[f64], ps: &[f64]) -> Result<()> {
    if treatment.len() != outcome.len() || outcome.len() != ps.len() {
        return Err(contract(format!(
            "length mismatch: {} treatments, {} outcomes, {} scores",
            treatment.len(),
            outcome.len(),
            ps.len()
        )));
    }
    if treatment.is_empty() {
        return Err(contract("no samples"));
    }
    if treatment.iter().any(|&a| a > 1) {
        return Err(contract("treatment must be 0 or 1"));
    }
    Ok(())
}

/// Inverse-probability-weighted ATE:
/// `(1/N) (Σ A·Y/ê − Σ (1−A)·Y/(1−ê))`.
pub fn iptw_ate(treatment: &[u8], outcome: &[f64], ps: &[f64]) -> Result<f64> {
    check_lengths(treatment, outcome, ps)?;
    let mut treated = 0.0;
    let mut control = 0.0;
    for ((&a, &y), &e) in treatment.iter().zip(outcome).zip(ps) {
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::Computation(format!(
                "propensity score {e} is not strictly inside (0, 1); use clip mode"
            )));
        }
        if a == 1 {
            treated += y / e;
        } else {
            control += y / (1.0 - e);
        }
    }
    Ok((treated - control) / treatment.len() as f64)
}

fn check_pair(e: &[f64], e_hat: &[f64]) -> Result<()> {
    if e.len() != e_hat.len() {
        return Err(contract(format!("{} true vs {} estimated scores", e.len(), e_hat.len())));
    }
    if e.is_empty() {
        return Err(contract("no scores"));
    }
    Ok(())
}

/// Mean absolute error between true and estimated propensity scores.
pub fn ps_mae(e: &[f64], e_hat: &[f64]) -> Result<f64> {
    check_pair(e, e_hat)?;
    let total: f64 = e.iter().zip(e_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / e.len() as f64)
}

/// PS MAE with each term weighted by the true score.
pub fn ps_mae_weighted(e: &[f64], e_hat: &[f64]) -> Result<f64> {
    check_pair(e, e_hat)?;
    let total: f64 = e.iter().zip(e_hat).map(|(a, b)| a * (a - b).abs()).sum();
    Ok(total / e.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimMode {
    #[default]
    None,
    /// Drop samples with `ê` outside `[α, 1−α]`.
    Trim,
    /// Clamp `ê` into `[α, 1−α]`.
    Clip,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrimSpec {
    pub alpha: f64,
    pub mode: TrimMode,
}

impl Default for TrimSpec {
    fn default() -> Self {
        TrimSpec {
            alpha: 0.05,
            mode: TrimMode::None,
        }
    }
}

impl TrimSpec {
    pub fn new(alpha: f64, mode: TrimMode) -> Result<Self> {
        let t = TrimSpec { alpha, mode };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config(format!("trim threshold {} outside (0, 0.5)", self.alpha)));
        }
        Ok(())
    }

    pub fn keeps(&self, e_hat: f64) -> bool {
        e_hat >= self.alpha && e_hat <= 1.0 - self.alpha
    }

    pub fn clip(&self, e_hat: f64) -> f64 {
        e_hat.max(self.alpha).min(1.0 - self.alpha)
    }
}

/// `|Δ̂ − Δ_true|` under the given adjustment, with the number of samples
/// entering the estimate.
pub fn ate_error(
    treatment: &[u8],
    outcome: &[f64],
    ps: &[f64],
    delta_true: f64,
    trim: TrimSpec,
) -> Result<(f64, usize)> {
    check_lengths(treatment, outcome, ps)?;
    match trim.mode {
        TrimMode::None => Ok(((iptw_ate(treatment, outcome, ps)? - delta_true).abs(), ps.len())),
        TrimMode::Clip => {
            trim.validate()?;
            let clipped: Vec<f64> = ps.iter().map(|&e| trim.clip(e)).collect();
            Ok(((iptw_ate(treatment, outcome, &clipped)? - delta_true).abs(), ps.len()))
        }
        TrimMode::Trim => {
            trim.validate()?;
            let keep: Vec<usize> = (0..ps.len()).filter(|&i| trim.keeps(ps[i])).collect();
            let a: Vec<u8> = keep.iter().map(|&i| treatment[i]).collect();
            if !a.contains(&1) || !a.contains(&0) {
                return Err(Error::Evaluation(format!(
                    "trimming at {} leaves an empty treatment arm",
                    trim.alpha
                )));
            }
            let y: Vec<f64> = keep.iter().map(|&i| outcome[i]).collect();
            let e: Vec<f64> = keep.iter().map(|&i| ps[i]).collect();
            Ok(((iptw_ate(&a, &y, &e)? - delta_true).abs(), keep.len()))
        }
    }
}

/// Shuffled partition of `0..n` into `k` folds whose sizes differ by at
/// most one. Each fold is sorted.
pub fn kfold_split<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(contract(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(contract(format!("{k} folds for {n} samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut folds: Vec<Vec<usize>> = (0..k)
        .map(|f| idx.iter().skip(f).step_by(k).copied().collect())
        .collect();
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Mean and 95% half-width `t_{0.975, k−1} · s / √k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ci {
    pub mean: f64,
    pub half_width: f64,
}

pub fn ci95(values: &[f64]) -> Result<Ci> {
    let k = values.len();
    if k < 2 {
        return Err(contract(format!("confidence interval needs at least 2 values, got {k}")));
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64)
        .map_err(|e| contract(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(Ci {
        mean,
        half_width: t * var.sqrt() / (k as f64).sqrt(),
    })
}
