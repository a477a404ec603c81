//! k-fold cross-validated evaluation of one estimator on one dataset.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::attention::attention_summary;
use super::metrics::{ate_error, iptw_ate, kfold_split, ps_mae, ps_mae_weighted, TrimMode, TrimSpec};
use super::report::{Aggregates, EvaluationReport, FoldMetrics, Provenance, REPORT_SCHEMA_VERSION};
use crate::claimsgen::{ClaimsDataset, LabeledSample, RecordSequence};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, FitScope};
use crate::models::{EstimatorKind, NeuralEstimator, PropensityEstimator, TrainConfig};
use crate::rng;

/// An entry of the estimator registry: a trainable model, or one of the two
/// reference estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorSpec {
    Model(EstimatorKind),
    /// Returns the true propensity score.
    Oracle,
    /// Returns the treated prevalence of the training folds.
    Constant,
}

impl EstimatorSpec {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorSpec::Model(k) => k.name(),
            EstimatorSpec::Oracle => "oracle",
            EstimatorSpec::Constant => "constant",
        }
    }

    pub fn registry() -> Vec<&'static str> {
        EstimatorKind::ALL
            .iter()
            .map(|k| k.name())
            .chain(["oracle", "constant"])
            .collect()
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(EstimatorSpec::Oracle),
            "constant" => Ok(EstimatorSpec::Constant),
            _ => s.parse().map(EstimatorSpec::Model).map_err(|_| {
                Error::Config(format!(
                    "unknown estimator {s:?}; known estimators: {}",
                    EstimatorSpec::registry().join(", ")
                ))
            }),
        }
    }
}

impl Serialize for EstimatorSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EstimatorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
    pub trim_alpha: f64,
    pub fit_scope: FitScope,
    pub seed: u64,
    /// 1 runs folds sequentially; more runs them on a thread pool.
    pub threads: usize,
    /// Summarize `[CLS]` attention on held-out folds for encoder models.
    pub attention: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 10,
            trim_alpha: 0.05,
            fit_scope: FitScope::EntireDataset,
            seed: 0,
            threads: 1,
            attention: true,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        TrimSpec::new(self.trim_alpha, TrimMode::Trim).map(|_| ())
    }
}

/// Hex sha256 of everything that determines a run's results.
pub fn config_hash(
    dataset: &ClaimsDataset,
    estimator: EstimatorSpec,
    train: &TrainConfig,
    cv: &CvConfig,
) -> Result<String> {
    let value = serde_json::json!({
        "dataset": &dataset.header,
        "estimator": estimator,
        "train": train,
        "k": cv.k,
        "trim_alpha": cv.trim_alpha,
        "fit_scope": cv.fit_scope,
        "seed": cv.seed,
        "attention": cv.attention,
    });
    let digest = Sha256::digest(serde_json::to_vec(&value)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

struct FoldOutput {
    ps: Vec<f64>,
    attention: Option<super::AttentionSummary>,
    truncated: usize,
    train_log: Option<crate::models::TrainLog>,
    features: Option<FeatureMap>,
}

fn fit_and_predict(
    dataset: &ClaimsDataset,
    estimator: EstimatorSpec,
    train_cfg: &TrainConfig,
    cv: &CvConfig,
    shared_features: Option<&FeatureMap>,
    fold: usize,
    train: &[&LabeledSample],
    eval: &[&LabeledSample],
) -> Result<FoldOutput> {
    let eval_seqs: Vec<&RecordSequence> = eval.iter().map(|s| s.seq()).collect();
    match estimator {
        EstimatorSpec::Oracle => Ok(FoldOutput {
            ps: eval.iter().map(|s| s.true_ps).collect(),
            attention: None,
            truncated: 0,
            train_log: None,
            features: None,
        }),
        EstimatorSpec::Constant => {
            let treated = train.iter().filter(|s| s.treatment == 1).count();
            if treated == 0 || treated == train.len() {
                return Err(Error::Training("constant estimator needs both classes".into()));
            }
            let p = treated as f64 / train.len() as f64;
            Ok(FoldOutput {
                ps: vec![p; eval.len()],
                attention: None,
                truncated: 0,
                train_log: None,
                features: None,
            })
        }
        EstimatorSpec::Model(kind) => {
            let cfg = TrainConfig {
                seed: rng::derive_seed(cv.seed, &format!("fit:{kind}"), fold as u64),
                ..train_cfg.clone()
            };
            let mut est = NeuralEstimator::new(kind, dataset.dx(), cfg)?;
            if let Some(f) = shared_features {
                est = est.with_features(f.clone())?;
            }
            let log = est.fit(train)?;
            let ps = est.predict(&eval_seqs)?;
            let attention = if cv.attention && kind.has_attention() {
                let rows = est.cls_attention(&eval_seqs)?;
                Some(attention_summary(&rows, &dataset.header.scenario.confounding_codes())?)
            } else {
                None
            };
            let mut truncated = 0;
            for s in &eval_seqs {
                truncated += (est.truncated_tokens(s)? > 0) as usize;
            }
            Ok(FoldOutput {
                ps,
                attention,
                truncated,
                train_log: Some(log),
                features: est.features().cloned(),
            })
        }
    }
}

fn fold_metrics(
    fold: usize,
    eval: &[&LabeledSample],
    out: FoldOutput,
    delta_true: f64,
    alpha: f64,
) -> Result<FoldMetrics> {
    let e: Vec<f64> = eval.iter().map(|s| s.true_ps).collect();
    let a: Vec<u8> = eval.iter().map(|s| s.treatment).collect();
    let y: Vec<f64> = eval.iter().map(|s| s.outcome).collect();
    let ps = &out.ps;
    let mut notes = Vec::new();
    let ate_hat = match iptw_ate(&a, &y, ps) {
        Ok(v) => Some(v),
        Err(Error::Computation(msg)) => {
            notes.push(msg);
            None
        }
        Err(err) => return Err(err),
    };
    let trim = TrimSpec::new(alpha, TrimMode::Trim)?;
    let ate_err_trim = match ate_error(&a, &y, ps, delta_true, trim) {
        Ok((err, _)) => Some(err),
        Err(Error::Evaluation(msg)) => {
            notes.push(msg);
            None
        }
        Err(err) => return Err(err),
    };
    let clip = TrimSpec::new(alpha, TrimMode::Clip)?;
    let (ate_err_clip, _) = ate_error(&a, &y, ps, delta_true, clip)?;
    Ok(FoldMetrics {
        fold,
        m: eval.len(),
        ps_mae: ps_mae(&e, ps)?,
        ps_mae_weighted: ps_mae_weighted(&e, ps)?,
        ate_hat,
        ate_err: ate_hat.map(|v| (v - delta_true).abs()),
        ate_err_trim,
        ate_err_clip,
        n_trimmed: ps.iter().filter(|&&p| !trim.keeps(p)).count(),
        attention: out.attention,
        truncated: out.truncated,
        train_log: out.train_log,
        features: out.features,
        notes,
    })
}

/// Cross-validates `estimator` on `dataset`.
pub fn run_cv(
    dataset: &ClaimsDataset,
    estimator: EstimatorSpec,
    train: &TrainConfig,
    cv: &CvConfig,
) -> Result<EvaluationReport> {
    run_cv_with(dataset, estimator, train, cv, |_| Ok(()))
}

/// As [`run_cv`], calling `on_fold` with the partial report after each
/// fold finishes (sequential mode) and with the final report.
pub fn run_cv_with<F>(
    dataset: &ClaimsDataset,
    estimator: EstimatorSpec,
    train_cfg: &TrainConfig,
    cv: &CvConfig,
    mut on_fold: F,
) -> Result<EvaluationReport>
where
    F: FnMut(&EvaluationReport) -> Result<()>,
{
    cv.validate()?;
    train_cfg.validate()?;
    dataset.validate()?;
    let samples: Vec<&LabeledSample> = dataset.samples.iter().collect();
    let folds = kfold_split(samples.len(), cv.k, &mut rng::stream(cv.seed, "kfold", 0))?;
    let shared_features = match (cv.fit_scope, estimator) {
        (FitScope::EntireDataset, EstimatorSpec::Model(kind)) => kind
            .flat_features(train_cfg)
            .map(|mode| {
                FeatureMap::fit(mode, samples.iter().map(|s| s.seq()), dataset.dx(), "entire dataset")
            })
            .transpose()?,
        _ => None,
    };
    let delta_true = dataset.header.scenario.treatment_effect;

    let mut report = EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        estimator: estimator.name().to_string(),
        scenario: dataset.header.scenario.kind.short_name().to_string(),
        k: cv.k,
        trim_alpha: cv.trim_alpha,
        treatment_effect: delta_true,
        m: Vec::new(),
        folds: Vec::new(),
        aggregate: Aggregates::default(),
        attention: None,
        truncated_samples: 0,
        complete: false,
        provenance: Provenance {
            seed: cv.seed,
            config_hash: config_hash(dataset, estimator, train_cfg, cv)?,
            single_threaded: cv.threads == 1,
            fit_scope: cv.fit_scope,
            dataset_seed: dataset.header.seed,
            dataset_size: samples.len(),
            dx: dataset.dx(),
        },
    };

    let run_fold = |f: usize| -> Result<FoldMetrics> {
        let eval: Vec<&LabeledSample> = folds[f].iter().map(|&i| samples[i]).collect();
        let train: Vec<&LabeledSample> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, idx)| idx.iter().map(|&i| samples[i]))
            .collect();
        let out = fit_and_predict(
            dataset,
            estimator,
            train_cfg,
            cv,
            shared_features.as_ref(),
            f,
            &train,
            &eval,
        )?;
        fold_metrics(f, &eval, out, delta_true, cv.trim_alpha)
    };
    let wrap = |f: usize, r: Result<FoldMetrics>| {
        r.map_err(|e| Error::Fold {
            fold: f,
            source: Box::new(e),
        })
    };

    if cv.threads == 1 {
        for f in 0..cv.k {
            let m = wrap(f, run_fold(f))?;
            report.folds.push(m);
            report.recompute();
            on_fold(&report)?;
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cv.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let results: Vec<Result<FoldMetrics>> =
            pool.install(|| (0..cv.k).into_par_iter().map(run_fold).collect());
        for (f, r) in results.into_iter().enumerate() {
            report.folds.push(wrap(f, r)?);
        }
        report.recompute();
        on_fold(&report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claimsgen::{generate_synthetic, GeneratorParams, ScenarioSpec};

    fn small_dataset(n: usize, seed: u64) -> ClaimsDataset {
        let params = GeneratorParams {
            n_samples: n,
            ..GeneratorParams::default()
        };
        generate_synthetic(&params, &ScenarioSpec::distance(7, 23), seed).unwrap()
    }

    fn cv(k: usize) -> CvConfig {
        CvConfig {
            k,
            seed: 3,
            ..CvConfig::default()
        }
    }

    #[test]
    fn oracle_has_zero_ps_error() {
        let ds = small_dataset(400, 1);
        let r = run_cv(&ds, EstimatorSpec::Oracle, &TrainConfig::default(), &cv(4)).unwrap();
        assert_eq!(r.folds.len(), 4);
        assert!(r.complete);
        assert_eq!(r.m.iter().sum::<usize>(), 400);
        for f in &r.folds {
            assert_eq!(f.ps_mae, 0.0);
            assert_eq!(f.ps_mae_weighted, 0.0);
            assert!(f.n_trimmed <= f.m);
        }
    }

    #[test]
    fn constant_estimator_error_is_distance_to_prevalence() {
        let ds = small_dataset(300, 2);
        let c = cv(3);
        let r = run_cv(&ds, EstimatorSpec::Constant, &TrainConfig::default(), &c).unwrap();
        let folds = kfold_split(300, 3, &mut rng::stream(c.seed, "kfold", 0)).unwrap();
        for (f, m) in r.folds.iter().enumerate() {
            let train: Vec<usize> = (0..300).filter(|i| !folds[f].contains(i)).collect();
            let p = train.iter().filter(|&&i| ds.samples[i].treatment == 1).count() as f64
                / train.len() as f64;
            let expected = folds[f]
                .iter()
                .map(|&i| (ds.samples[i].true_ps - p).abs())
                .sum::<f64>()
                / folds[f].len() as f64;
            assert!((m.ps_mae - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn threaded_and_sequential_agree() {
        let ds = small_dataset(200, 3);
        let train = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let est = EstimatorSpec::Model(EstimatorKind::Lr);
        let a = run_cv(&ds, est, &train, &cv(3)).unwrap();
        let b = run_cv(&ds, est, &train, &CvConfig { threads: 2, ..cv(3) }).unwrap();
        assert_eq!(a.folds, b.folds);
        assert!(a.provenance.single_threaded && !b.provenance.single_threaded);
        assert_eq!(a.provenance.config_hash, b.provenance.config_hash);
    }

    #[test]
    fn fold_failures_name_the_fold() {
        let mut ds = small_dataset(40, 4);
        for s in &mut ds.samples {
            s.treatment = 1;
            s.outcome = s.y1;
        }
        let err = run_cv(&ds, EstimatorSpec::Constant, &TrainConfig::default(), &cv(2)).unwrap_err();
        assert!(matches!(err, Error::Fold { fold: 0, .. }), "{err}");
    }

    #[test]
    fn partial_reports_are_emitted_per_fold() {
        let ds = small_dataset(90, 5);
        let mut seen = Vec::new();
        run_cv_with(&ds, EstimatorSpec::Oracle, &TrainConfig::default(), &cv(3), |r| {
            seen.push((r.folds.len(), r.complete));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![(1, false), (2, false), (3, true)]);
    }

    #[test]
    fn registry_parsing() {
        assert_eq!("oracle".parse::<EstimatorSpec>().unwrap(), EstimatorSpec::Oracle);
        assert_eq!(
            "bert-code".parse::<EstimatorSpec>().unwrap(),
            EstimatorSpec::Model(EstimatorKind::BertCode)
        );
        let err = "svm".parse::<EstimatorSpec>().unwrap_err().to_string();
        assert!(err.contains("lr, lr-hdps"), "{err}");
    }
}
