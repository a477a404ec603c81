//! Confounding scenarios.
//!
//! Each scenario reads one temporal feature of a record sequence (longest
//! run of a code, shortest distance between two codes, or count within the
//! last few records) and maps it to both the true propensity score and the
//! untreated outcome, which is what makes the feature a confounder.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::generator::Interval;
use super::sequence::{Code, RecordSequence};
use crate::error::{contract, Error, Result};
use crate::numerics::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    ConsecutiveOccurrence,
    OccurrenceDistance,
    OccurrenceWindow,
    SemiSyntheticDistance,
}

impl ScenarioKind {
    pub fn is_distance(self) -> bool {
        matches!(
            self,
            ScenarioKind::OccurrenceDistance | ScenarioKind::SemiSyntheticDistance
        )
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ScenarioKind::ConsecutiveOccurrence => "Synthetic-CO",
            ScenarioKind::OccurrenceDistance => "Synthetic-OD",
            ScenarioKind::OccurrenceWindow => "Synthetic-OW",
            ScenarioKind::SemiSyntheticDistance => "Semi-synthetic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub code_a: Code,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_b: Option<Code>,
    pub window: usize,
    pub base_outcome: f64,
    pub outcome_coef: f64,
    pub ps_noise_var: f64,
    pub outcome_noise_var: f64,
    pub treatment_effect: f64,
    pub ps_clamp: Interval,
}

impl ScenarioSpec {
    /// Standard constants for a scenario, with the given confounding codes.
    pub fn preset(kind: ScenarioKind, code_a: Code, code_b: Option<Code>) -> Self {
        let outcome_coef = match kind {
            ScenarioKind::ConsecutiveOccurrence => 10.0,
            ScenarioKind::OccurrenceDistance => 40.0,
            ScenarioKind::OccurrenceWindow => 10.0,
            ScenarioKind::SemiSyntheticDistance => 5.0,
        };
        ScenarioSpec {
            kind,
            code_a,
            code_b: if kind.is_distance() { code_b } else { None },
            window: 3,
            base_outcome: 10.0,
            outcome_coef,
            ps_noise_var: 0.01,
            outcome_noise_var: 0.1,
            treatment_effect: -5.0,
            ps_clamp: Interval::new(0.01, 0.99),
        }
    }

    pub fn consecutive(code: Code) -> Self {
        Self::preset(ScenarioKind::ConsecutiveOccurrence, code, None)
    }

    pub fn distance(code_a: Code, code_b: Code) -> Self {
        Self::preset(ScenarioKind::OccurrenceDistance, code_a, Some(code_b))
    }

    pub fn window(code: Code) -> Self {
        Self::preset(ScenarioKind::OccurrenceWindow, code, None)
    }

    pub fn semi_synthetic(code_a: Code, code_b: Code) -> Self {
        Self::preset(ScenarioKind::SemiSyntheticDistance, code_a, Some(code_b))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.ps_noise_var > 0.0 && self.outcome_noise_var > 0.0) {
            return fail("noise variances must be positive");
        }
        if !self.ps_clamp.is_valid() || self.ps_clamp.lo <= 0.0 || self.ps_clamp.hi >= 1.0 {
            return fail("ps_clamp must lie strictly inside (0, 1)");
        }
        if self.kind.is_distance() != self.code_b.is_some() {
            return fail("code_b is required exactly for distance scenarios");
        }
        if self.code_b == Some(self.code_a) {
            return fail("code_a and code_b must differ");
        }
        if self.window == 0 {
            return fail("window must be positive");
        }
        for v in [self.base_outcome, self.outcome_coef, self.treatment_effect] {
            if !v.is_finite() {
                return fail("scenario coefficients must be finite");
            }
        }
        Ok(())
    }

    /// The codes whose pattern drives confounding.
    pub fn confounding_codes(&self) -> Vec<Code> {
        std::iter::once(self.code_a).chain(self.code_b).collect()
    }
}

/// Longest run of consecutive records containing `code`.
pub fn consec_feature(seq: &RecordSequence, code: Code) -> usize {
    let mut best = 0;
    let mut run = 0;
    for rec in seq.records() {
        if rec.contains(&code) {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Shortest record-wise distance between an occurrence of `code_a` and one of
/// `code_b`; `None` when either code never occurs.
pub fn distance_feature(seq: &RecordSequence, code_a: Code, code_b: Code) -> Option<usize> {
    let a = seq.occurrences(code_a);
    let b = seq.occurrences(code_b);
    if a.is_empty() || b.is_empty() {
        return None;
    }
    // both lists ascending: merge walk
    let (mut i, mut j) = (0, 0);
    let mut best = usize::MAX;
    while i < a.len() && j < b.len() {
        best = best.min(a[i].abs_diff(b[j]));
        if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Some(best)
}

/// Records among the last `window` (or all, if fewer) containing `code`.
pub fn window_feature(seq: &RecordSequence, code: Code, window: usize) -> usize {
    let recs = seq.records();
    let start = recs.len().saturating_sub(window);
    recs[start..].iter().filter(|r| r.contains(&code)).count()
}

/// The scenario's feature for one sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioFeature {
    Consecutive(usize),
    Distance(Option<usize>),
    Window(usize),
}

pub fn scenario_feature(seq: &RecordSequence, spec: &ScenarioSpec) -> Result<ScenarioFeature> {
    let code_b = || {
        spec.code_b
            .ok_or_else(|| Error::Config("distance scenario without code_b".into()))
    };
    let feature = match spec.kind {
        ScenarioKind::ConsecutiveOccurrence => {
            ScenarioFeature::Consecutive(consec_feature(seq, spec.code_a))
        }
        ScenarioKind::OccurrenceWindow => {
            ScenarioFeature::Window(window_feature(seq, spec.code_a, spec.window))
        }
        ScenarioKind::OccurrenceDistance => {
            ScenarioFeature::Distance(distance_feature(seq, spec.code_a, code_b()?))
        }
        ScenarioKind::SemiSyntheticDistance => {
            let d = distance_feature(seq, spec.code_a, code_b()?);
            match d {
                Some(d) if d >= 1 => ScenarioFeature::Distance(Some(d)),
                other => {
                    return Err(Error::ScenarioInapplicable(format!(
                        "semi-synthetic distance needs d >= 1, got {other:?}"
                    )))
                }
            }
        }
    };
    Ok(feature)
}

/// Propensity before noise and clamping.
pub fn propensity_mean(spec: &ScenarioSpec, feature: ScenarioFeature) -> Result<f64> {
    let e = match (spec.kind, feature) {
        (ScenarioKind::ConsecutiveOccurrence, ScenarioFeature::Consecutive(o)) => match o {
            0 => 0.1,
            1 => 0.3,
            o => sigmoid(o as f64),
        },
        (ScenarioKind::OccurrenceDistance, ScenarioFeature::Distance(d)) => match d {
            Some(d) => sigmoid((10.0 / (5.0 * d as f64 + 1.0)).ln()),
            None => 0.3,
        },
        (ScenarioKind::OccurrenceWindow, ScenarioFeature::Window(c)) => match c {
            0 => 0.1,
            c => sigmoid(c as f64),
        },
        (ScenarioKind::SemiSyntheticDistance, ScenarioFeature::Distance(Some(d))) if d >= 1 => {
            sigmoid(2.0 * (10.0 / (d as f64).powf(2.5)).ln())
        }
        (kind, f) => {
            return Err(Error::ScenarioInapplicable(format!(
                "feature {f:?} does not fit scenario {kind:?}"
            )))
        }
    };
    Ok(e)
}

/// Untreated outcome before noise.
pub fn outcome_mean(spec: &ScenarioSpec, feature: ScenarioFeature) -> Result<f64> {
    let (b, alpha) = (spec.base_outcome, spec.outcome_coef);
    let y = match (spec.kind, feature) {
        (ScenarioKind::ConsecutiveOccurrence, ScenarioFeature::Consecutive(o)) => {
            if o > 1 {
                b + alpha * o as f64
            } else {
                b
            }
        }
        (ScenarioKind::OccurrenceDistance, ScenarioFeature::Distance(d)) => match d {
            Some(d) => b + alpha / (d as f64 + 1.0),
            None => b,
        },
        (ScenarioKind::OccurrenceWindow, ScenarioFeature::Window(c)) => b + alpha * c as f64,
        (ScenarioKind::SemiSyntheticDistance, ScenarioFeature::Distance(Some(d))) if d >= 1 => {
            b + alpha / d as f64
        }
        (kind, f) => {
            return Err(Error::ScenarioInapplicable(format!(
                "feature {f:?} does not fit scenario {kind:?}"
            )))
        }
    };
    Ok(y)
}

/// True propensity with a given noise draw, clamped to `ps_clamp`.
pub fn propensity_with_noise(seq: &RecordSequence, spec: &ScenarioSpec, noise: f64) -> Result<f64> {
    let e = propensity_mean(spec, scenario_feature(seq, spec)?)? + noise;
    Ok(e.clamp(spec.ps_clamp.lo, spec.ps_clamp.hi))
}

pub fn scenario_propensity<R: Rng + ?Sized>(
    seq: &RecordSequence,
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<f64> {
    let noise = Normal::new(0.0, spec.ps_noise_var.sqrt())
        .map_err(|e| Error::Config(e.to_string()))?
        .sample(rng);
    propensity_with_noise(seq, spec, noise)
}

/// `(y0, y1)` with `y1 = y0 + treatment_effect`.
pub fn scenario_outcome<R: Rng + ?Sized>(
    seq: &RecordSequence,
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let mean = outcome_mean(spec, scenario_feature(seq, spec)?)?;
    let noise = Normal::new(0.0, spec.outcome_noise_var.sqrt())
        .map_err(|e| Error::Config(e.to_string()))?
        .sample(rng);
    let y0 = mean + noise;
    Ok((y0, y0 + spec.treatment_effect))
}

pub fn assign_treatment<R: Rng + ?Sized>(e: f64, rng: &mut R) -> Result<u8> {
    if !(e > 0.0 && e < 1.0) {
        return Err(contract(format!("treatment probability {e} outside (0, 1)")));
    }
    Ok(rng.random_bool(e) as u8)
}
