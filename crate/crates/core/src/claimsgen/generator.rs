//! The static/dynamic-variable Beta→Bernoulli record process.
//!
//! For one sample with `T` records, each code `k` gets a static shape
//! parameter `b_k` and a dynamic one `c_k`; the dynamic one is modulated over
//! time by a quartic curve drawn from five archetypes. Occurrence
//! probabilities are `P_tk ~ Beta(b_k, c_k · s_k(t))` and presence is
//! `X_tk ~ Bernoulli(P_tk)`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::sequence::{Code, RecordSequence, MIN_RECORDS};
use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(self.lo..self.hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    pub n_samples: usize,
    pub dx: usize,
    pub poisson_lambda: f64,
    pub static_range: Interval,
    pub dynamic_range: Interval,
    /// Codes whose dynamic parameter comes from `boosted_dynamic_range`,
    /// making them frequent enough to carry confounding patterns.
    pub boosted_codes: Vec<Code>,
    pub boosted_dynamic_range: Interval,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            n_samples: 12000,
            dx: 100,
            poisson_lambda: 10.0,
            static_range: Interval::new(5.0, 10.0),
            dynamic_range: Interval::new(240.0, 260.0),
            boosted_codes: vec![7, 23, 41, 66, 88],
            boosted_dynamic_range: Interval::new(40.0, 60.0),
            seed: 2024,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_samples == 0 {
            return fail("n_samples must be positive".into());
        }
        if self.dx == 0 {
            return fail("dx must be positive".into());
        }
        if !(self.poisson_lambda.is_finite() && self.poisson_lambda > 0.0) {
            return fail(format!("poisson_lambda must be positive, got {}", self.poisson_lambda));
        }
        for (name, r) in [
            ("static_range", self.static_range),
            ("dynamic_range", self.dynamic_range),
            ("boosted_dynamic_range", self.boosted_dynamic_range),
        ] {
            if !r.is_valid() || r.lo <= 0.0 {
                return fail(format!("{name} must be a positive interval with lo < hi"));
            }
        }
        for (i, &c) in self.boosted_codes.iter().enumerate() {
            if c as usize >= self.dx {
                return fail(format!("boosted code {c} outside vocabulary of {}", self.dx));
            }
            if self.boosted_codes[..i].contains(&c) {
                return fail(format!("boosted code {c} listed twice"));
            }
        }
        Ok(())
    }

    pub fn is_boosted(&self, code: Code) -> bool {
        self.boosted_codes.contains(&code)
    }
}

/// The five time-trend shapes, as degree-4 Bézier control points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplineArchetype {
    MildIncline,
    MildDecline,
    SteepInclineThenMildDecline,
    SteepDeclineThenMildIncline,
    Stable,
}

impl SplineArchetype {
    pub const ALL: [SplineArchetype; 5] = [
        SplineArchetype::MildIncline,
        SplineArchetype::MildDecline,
        SplineArchetype::SteepInclineThenMildDecline,
        SplineArchetype::SteepDeclineThenMildIncline,
        SplineArchetype::Stable,
    ];

    pub fn control_points(self) -> [f64; 5] {
        match self {
            SplineArchetype::MildIncline => [1.0, 1.05, 1.1, 1.15, 1.2],
            SplineArchetype::MildDecline => [1.0, 0.95, 0.9, 0.85, 0.8],
            SplineArchetype::SteepInclineThenMildDecline => [1.0, 1.6, 1.5, 1.45, 1.4],
            SplineArchetype::SteepDeclineThenMildIncline => [1.0, 0.4, 0.5, 0.55, 0.6],
            SplineArchetype::Stable => [1.0; 5],
        }
    }

    /// Curve value at `u ∈ [0, 1]` (de Casteljau).
    pub fn eval(self, u: f64) -> f64 {
        let mut p = self.control_points();
        for level in (1..5).rev() {
            for i in 0..level {
                p[i] = (1.0 - u) * p[i] + u * p[i + 1];
            }
        }
        p[0]
    }

    /// The curve sampled at `t / (T − 1)` for `t = 0..T` (just `0` when `T = 1`).
    pub fn coefficients(self, t_len: usize) -> Vec<f64> {
        if t_len == 1 {
            return vec![self.eval(0.0)];
        }
        let denom = (t_len - 1) as f64;
        (0..t_len).map(|t| self.eval(t as f64 / denom)).collect()
    }
}

pub fn sample_spline_coeffs<R: Rng + ?Sized>(t_len: usize, rng: &mut R) -> Result<Vec<f64>> {
    if t_len == 0 {
        return Err(contract("spline coefficients need T >= 1"));
    }
    let archetype = SplineArchetype::ALL[rng.random_range(0..5)];
    Ok(archetype.coefficients(t_len))
}

/// `T × d_x` occurrence probabilities, row-major by record.
pub fn gen_occurrence_probs<R: Rng + ?Sized>(
    params: &GeneratorParams,
    t_len: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if t_len == 0 {
        return Err(contract("occurrence probabilities need T >= 1"));
    }
    params.validate()?;
    let dx = params.dx;
    let static_row: Vec<f64> = (0..dx).map(|_| params.static_range.sample(rng)).collect();
    let dynamic_row: Vec<f64> = (0..dx)
        .map(|k| {
            if params.is_boosted(k as Code) {
                params.boosted_dynamic_range.sample(rng)
            } else {
                params.dynamic_range.sample(rng)
            }
        })
        .collect();
    let mut probs = vec![vec![0.0; dx]; t_len];
    for k in 0..dx {
        let coeffs = sample_spline_coeffs(t_len, rng)?;
        for (t, s) in coeffs.into_iter().enumerate() {
            let (a, b) = (static_row[k], dynamic_row[k] * s);
            let beta = Beta::new(a, b)
                .map_err(|e| Error::Generation(format!("Beta({a}, {b}): {e}")))?;
            probs[t][k] = beta.sample(rng);
        }
    }
    Ok(probs)
}

/// Turns occurrence probabilities into records by independent Bernoulli draws.
pub fn sample_records<R: Rng + ?Sized>(probs: &[Vec<f64>], rng: &mut R) -> Result<Vec<Vec<Code>>> {
    probs
        .iter()
        .map(|row| {
            let mut rec = Vec::new();
            for (k, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Generation(format!("occurrence probability {p}")));
                }
                if rng.random_bool(p) {
                    rec.push(k as Code);
                }
            }
            Ok(rec)
        })
        .collect()
}

pub fn gen_record_sequence<R: Rng + ?Sized>(
    params: &GeneratorParams,
    rng: &mut R,
) -> Result<RecordSequence> {
    params.validate()?;
    let poisson = Poisson::new(params.poisson_lambda)
        .map_err(|e| Error::Generation(format!("Poisson({}): {e}", params.poisson_lambda)))?;
    let t_len = loop {
        let t = poisson.sample(rng) as usize;
        if t >= MIN_RECORDS {
            break t;
        }
    };
    let probs = gen_occurrence_probs(params, t_len, rng)?;
    RecordSequence::new(sample_records(&probs, rng)?)
}
