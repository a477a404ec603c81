//! Flat covariates for the baseline estimators: standardized per-code
//! occurrence counts, and the HDPS expansion of each code into three binary
//! threshold indicators.

use serde::{Deserialize, Serialize};

use crate::claimsgen::RecordSequence;
use crate::error::{contract, Result};
use crate::numerics::Mat;

/// Entry `k` is the number of records containing code `k`.
pub fn count_features(seq: &RecordSequence, dx: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; dx];
    for rec in seq.records() {
        for &c in rec {
            *counts
                .get_mut(c as usize)
                .ok_or_else(|| contract(format!("code {c} outside vocabulary of {dx}")))? += 1.0;
        }
    }
    Ok(counts)
}

/// `N × d_x` count matrix, one row per sequence.
pub fn count_matrix<'a, I>(seqs: I, dx: usize) -> Result<Mat>
where
    I: IntoIterator<Item = &'a RecordSequence>,
{
    let rows = seqs
        .into_iter()
        .map(|s| count_features(s, dx))
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len();
    Mat::from_shape_vec((n, dx), rows.into_iter().flatten().collect())
        .map_err(|e| contract(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizerStats {
    pub mean: Vec<f64>,
    /// Population standard deviation (divide by N).
    pub std: Vec<f64>,
    pub fitted_on: String,
}

impl StandardizerStats {
    pub fn fit(counts: &Mat, fitted_on: impl Into<String>) -> Result<Self> {
        let (n, dx) = counts.dim();
        if n < 2 {
            return Err(contract(format!("standardizer needs at least 2 rows, got {n}")));
        }
        let mut mean = vec![0.0; dx];
        let mut std = vec![0.0; dx];
        for k in 0..dx {
            let col = counts.column(k);
            let m = col.sum() / n as f64;
            let var = col.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            mean[k] = m;
            std[k] = var.sqrt();
        }
        Ok(StandardizerStats {
            mean,
            std,
            fitted_on: fitted_on.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(x − mean) / std`; codes with zero spread map to 0.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(contract(format!(
                "standardizer fitted on {} codes, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
            .collect())
    }
}

/// Nearest-rank percentile: the value at 1-based rank `⌈p·N⌉` of the sorted
/// data (rank 1 when that is 0).
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HdpsThresholds {
    pub median: Vec<f64>,
    pub p75: Vec<f64>,
    pub fitted_on: String,
}

impl HdpsThresholds {
    pub fn fit(counts: &Mat, fitted_on: impl Into<String>) -> Result<Self> {
        let (n, dx) = counts.dim();
        if n == 0 {
            return Err(contract("HDPS thresholds need at least one row"));
        }
        let mut median = Vec::with_capacity(dx);
        let mut p75 = Vec::with_capacity(dx);
        for k in 0..dx {
            let mut col = counts.column(k).to_vec();
            col.sort_by(f64::total_cmp);
            median.push(nearest_rank(&col, 0.5));
            p75.push(nearest_rank(&col, 0.75));
        }
        Ok(HdpsThresholds {
            median,
            p75,
            fitted_on: fitted_on.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.median.len()
    }

    /// Per code: `(count ≥ 1, count > median, count > p75)`, laid out as
    /// three consecutive entries per code.
    pub fn apply(&self, counts: &[f64]) -> Result<Vec<f64>> {
        if counts.len() != self.dim() {
            return Err(contract(format!(
                "HDPS thresholds fitted on {} codes, got {}",
                self.dim(),
                counts.len()
            )));
        }
        let mut out = Vec::with_capacity(3 * counts.len());
        for (k, &c) in counts.iter().enumerate() {
            out.push((c >= 1.0) as u8 as f64);
            out.push((c > self.median[k]) as u8 as f64);
            out.push((c > self.p75[k]) as u8 as f64);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Counts,
    Hdps,
}

/// Which rows the feature statistics are fitted on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScope {
    /// All samples, including evaluation folds.
    #[default]
    EntireDataset,
    /// Training rows of each fold only.
    TrainingFold,
}

/// A fitted flat feature transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FeatureMap {
    Counts(StandardizerStats),
    Hdps(HdpsThresholds),
}

impl FeatureMap {
    pub fn fit<'a, I>(mode: FeatureMode, seqs: I, dx: usize, fitted_on: &str) -> Result<Self>
    where
        I: IntoIterator<Item = &'a RecordSequence>,
    {
        let counts = count_matrix(seqs, dx)?;
        Ok(match mode {
            FeatureMode::Counts => FeatureMap::Counts(StandardizerStats::fit(&counts, fitted_on)?),
            FeatureMode::Hdps => FeatureMap::Hdps(HdpsThresholds::fit(&counts, fitted_on)?),
        })
    }

    pub fn dx(&self) -> usize {
        match self {
            FeatureMap::Counts(s) => s.dim(),
            FeatureMap::Hdps(h) => h.dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureMap::Counts(s) => s.dim(),
            FeatureMap::Hdps(h) => 3 * h.dim(),
        }
    }

    pub fn transform(&self, seq: &RecordSequence) -> Result<Vec<f64>> {
        let counts = count_features(seq, self.dx())?;
        match self {
            FeatureMap::Counts(s) => s.apply(&counts),
            FeatureMap::Hdps(h) => h.apply(&counts),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(records: Vec<Vec<u32>>) -> RecordSequence {
        RecordSequence::new(records).unwrap()
    }

    #[test]
    fn counts_records_containing_code() {
        let s = seq(vec![vec![3], vec![3, 1], vec![], vec![], vec![3]]);
        let c = count_features(&s, 5).unwrap();
        assert_eq!(c, vec![0.0, 1.0, 0.0, 3.0, 0.0]);
        assert_eq!(count_features(&seq(vec![vec![], vec![]]), 4).unwrap(), vec![0.0; 4]);
        assert!(count_features(&s, 3).is_err());
    }

    #[test]
    fn counts_match_double_loop() {
        let mut rng = crate::rng::stream(1, "counts", 0);
        use rand::Rng;
        for _ in 0..100 {
            let t = rng.random_range(2..12);
            let recs: Vec<Vec<u32>> = (0..t)
                .map(|_| (0..8).filter(|_| rng.random_bool(0.3)).collect())
                .collect();
            let s = seq(recs.clone());
            let fast = count_features(&s, 8).unwrap();
            for k in 0..8u32 {
                let mut n = 0.0;
                for r in &recs {
                    if r.iter().any(|&c| c == k) {
                        n += 1.0;
                    }
                }
                assert_eq!(fast[k as usize], n);
            }
        }
    }

    #[test]
    fn standardizer_population_form() {
        let m = Mat::from_shape_vec((3, 2), vec![0.0, 5.0, 2.0, 5.0, 4.0, 5.0]).unwrap();
        let st = StandardizerStats::fit(&m, "t").unwrap();
        assert_eq!(st.mean, vec![2.0, 5.0]);
        assert!((st.std[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(st.std[1], 0.0);
        let z: Vec<f64> = [0.0, 2.0, 4.0]
            .iter()
            .map(|&x| st.apply(&[x, 5.0]).unwrap()[0])
            .collect();
        for (a, b) in z.iter().zip([-1.2247448713915889, 0.0, 1.2247448713915889]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(st.apply(&[1.0, 7.0]).unwrap()[1], 0.0);
        assert!(StandardizerStats::fit(&Mat::zeros((1, 2)), "t").is_err());
    }

    #[test]
    fn hdps_examples() {
        let h = HdpsThresholds {
            median: vec![2.0],
            p75: vec![4.0],
            fitted_on: "t".into(),
        };
        assert_eq!(h.apply(&[5.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(h.apply(&[0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(h.apply(&[2.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(h.apply(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn nearest_rank_small_cases() {
        assert_eq!(nearest_rank(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.0);
        assert_eq!(nearest_rank(&[1.0, 2.0, 3.0, 4.0], 0.75), 3.0);
        assert_eq!(nearest_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.75), 4.0);
        assert_eq!(nearest_rank(&[7.0], 0.5), 7.0);
    }

    fn count_matrix_strategy() -> impl Strategy<Value = Mat> {
        (2usize..40, 1usize..6).prop_flat_map(|(n, dx)| {
            proptest::collection::vec(0u8..7, n * dx)
                .prop_map(move |v| Mat::from_shape_fn((n, dx), |(i, j)| v[i * dx + j] as f64))
        })
    }

    proptest! {
        #[test]
        fn percentiles_match_rank_definition(m in count_matrix_strategy()) {
            let h = HdpsThresholds::fit(&m, "p").unwrap();
            let n = m.nrows();
            for k in 0..m.ncols() {
                let col: Vec<f64> = m.column(k).to_vec();
                // smallest value with at least ⌈pN⌉ entries at or below it
                let brute = |p: f64| {
                    let need = ((p * n as f64).ceil() as usize).max(1);
                    let mut cands = col.clone();
                    cands.sort_by(f64::total_cmp);
                    *cands.iter().find(|&&v| col.iter().filter(|&&x| x <= v).count() >= need).unwrap()
                };
                prop_assert_eq!(h.median[k], brute(0.5));
                prop_assert_eq!(h.p75[k], brute(0.75));
                prop_assert!(h.median[k] <= h.p75[k]);
            }
        }

        #[test]
        fn hdps_binary_and_monotone(m in count_matrix_strategy(), bump in 0usize..6, extra in 1u8..4) {
            let h = HdpsThresholds::fit(&m, "p").unwrap();
            let row: Vec<f64> = m.row(0).to_vec();
            let out = h.apply(&row).unwrap();
            prop_assert_eq!(out.len(), 3 * m.ncols());
            prop_assert!(out.iter().all(|&v| v == 0.0 || v == 1.0));
            let mut raised = row.clone();
            let k = bump % m.ncols();
            raised[k] += extra as f64;
            let out2 = h.apply(&raised).unwrap();
            for (a, b) in out.iter().zip(&out2) {
                prop_assert!(b >= a);
            }
        }

        #[test]
        fn standardized_columns_have_unit_moments(m in count_matrix_strategy()) {
            let st = StandardizerStats::fit(&m, "p").unwrap();
            let z: Vec<Vec<f64>> = m.rows().into_iter().map(|r| st.apply(&r.to_vec()).unwrap()).collect();
            let n = z.len() as f64;
            for k in 0..m.ncols() {
                let mean = z.iter().map(|r| r[k]).sum::<f64>() / n;
                let var = z.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
                if st.std[k] > 0.0 {
                    prop_assert!(mean.abs() < 1e-10);
                    prop_assert!((var.sqrt() - 1.0).abs() < 1e-10);
                } else {
                    prop_assert!(z.iter().all(|r| r[k] == 0.0));
                }
            }
        }
    }
}
