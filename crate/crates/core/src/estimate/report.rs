//! The evaluation report and its plain-text rendering.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::attention::AttentionSummary;
use super::metrics::{ci95, Ci};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, FitScope};
use crate::models::TrainLog;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    /// Evaluation-set size.
    pub m: usize,
    pub ps_mae: f64,
    pub ps_mae_weighted: f64,
    /// Absent when some `ê` is exactly 0 or 1 (see `notes`).
    pub ate_hat: Option<f64>,
    pub ate_err: Option<f64>,
    /// Absent when trimming empties a treatment arm.
    pub ate_err_trim: Option<f64>,
    pub ate_err_clip: f64,
    pub n_trimmed: usize,
    pub attention: Option<AttentionSummary>,
    /// Evaluation samples whose encoder input was truncated.
    pub truncated: usize,
    pub train_log: Option<TrainLog>,
    /// Feature statistics the flat model was fitted with.
    pub features: Option<FeatureMap>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub ps_mae: Option<Ci>,
    pub ps_mae_weighted: Option<Ci>,
    pub ate_hat: Option<Ci>,
    pub ate_err: Option<Ci>,
    pub ate_err_trim: Option<Ci>,
    pub ate_err_clip: Option<Ci>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub single_threaded: bool,
    pub fit_scope: FitScope,
    pub dataset_seed: u64,
    pub dataset_size: usize,
    pub dx: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub estimator: String,
    pub scenario: String,
    pub k: usize,
    pub trim_alpha: f64,
    pub treatment_effect: f64,
    /// Evaluation-set size per fold.
    pub m: Vec<usize>,
    pub folds: Vec<FoldMetrics>,
    pub aggregate: Aggregates,
    pub attention: Option<AttentionSummary>,
    pub truncated_samples: usize,
    /// False while folds are still missing.
    pub complete: bool,
    pub provenance: Provenance,
}

fn ci_of(values: impl Iterator<Item = Option<f64>>) -> Option<Ci> {
    let v: Option<Vec<f64>> = values.collect();
    v.and_then(|v| ci95(&v).ok())
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl Aggregates {
    /// CIs over folds; a metric missing in any fold has no aggregate.
    pub fn from_folds(folds: &[FoldMetrics]) -> Self {
        Aggregates {
            ps_mae: ci_of(folds.iter().map(|f| Some(f.ps_mae))),
            ps_mae_weighted: ci_of(folds.iter().map(|f| Some(f.ps_mae_weighted))),
            ate_hat: ci_of(folds.iter().map(|f| f.ate_hat)),
            ate_err: ci_of(folds.iter().map(|f| f.ate_err)),
            ate_err_trim: ci_of(folds.iter().map(|f| f.ate_err_trim)),
            ate_err_clip: ci_of(folds.iter().map(|f| Some(f.ate_err_clip))),
        }
    }
}

/// Fold-averaged attention summary.
pub fn mean_attention(folds: &[FoldMetrics]) -> Option<AttentionSummary> {
    let atts: Vec<&AttentionSummary> = folds.iter().filter_map(|f| f.attention.as_ref()).collect();
    if atts.is_empty() {
        return None;
    }
    Some(AttentionSummary {
        confounders: mean_of(atts.iter().map(|a| a.confounders)),
        others: mean_of(atts.iter().map(|a| a.others)),
        cls: atts.iter().map(|a| a.cls).sum::<f64>() / atts.len() as f64,
        n_confounders: atts.iter().map(|a| a.n_confounders).sum(),
        n_others: atts.iter().map(|a| a.n_others).sum(),
    })
}

impl EvaluationReport {
    pub fn recompute(&mut self) {
        self.m = self.folds.iter().map(|f| f.m).collect();
        self.aggregate = Aggregates::from_folds(&self.folds);
        self.attention = mean_attention(&self.folds);
        self.truncated_samples = self.folds.iter().map(|f| f.truncated).sum();
        self.complete = self.folds.len() == self.k;
    }

    /// Mean PS MAE, falling back to the fold mean for single-fold partials.
    pub fn ps_mae(&self) -> Option<f64> {
        self.aggregate
            .ps_mae
            .map(|c| c.mean)
            .or_else(|| mean_of(self.folds.iter().map(|f| Some(f.ps_mae))))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(REPORT_SCHEMA_VERSION as u64) {
            return Err(Error::Config(format!(
                "{}: report schema {version:?}, expected {REPORT_SCHEMA_VERSION}",
                path.display()
            )));
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Ascending mean PS MAE, ties (and missing values) ordered by name.
pub fn sort_reports(reports: &mut [EvaluationReport]) {
    reports.sort_by(|a, b| {
        let by_mae = match (a.ps_mae(), b.ps_mae()) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        by_mae.then_with(|| a.estimator.cmp(&b.estimator))
    });
}

const ABSENT: &str = "—";

fn fmt_ci(c: Option<Ci>) -> String {
    match c {
        Some(c) => format!("{:.3} ± {:.3}", c.mean, c.half_width),
        None => ABSENT.to_string(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), |v| format!("{v:.3}"))
}

/// Comparison table: PS, PS_W, ATE, ATE_T and ATE_C columns, plus the
/// three attention columns when any report carries them.
pub fn render_table(reports: &[EvaluationReport]) -> String {
    let with_attention = reports.iter().any(|r| r.attention.is_some());
    let mut header = vec!["Model", "Scenario", "PS", "PS_W", "ATE", "ATE_T", "ATE_C"];
    if with_attention {
        header.extend(["Conf", "Other", "CLS"]);
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut name = r.estimator.clone();
            if !r.complete {
                name.push_str(" (incomplete)");
            }
            let a = &r.aggregate;
            let mut row = vec![
                name,
                r.scenario.clone(),
                fmt_ci(a.ps_mae),
                fmt_ci(a.ps_mae_weighted),
                fmt_ci(a.ate_err),
                fmt_ci(a.ate_err_trim),
                fmt_ci(a.ate_err_clip),
            ];
            if with_attention {
                match &r.attention {
                    Some(s) => row.extend([fmt_opt(s.confounders), fmt_opt(s.others), fmt_opt(Some(s.cls))]),
                    None => row.extend([ABSENT.to_string(), ABSENT.to_string(), ABSENT.to_string()]),
                }
            }
            row
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.clone(), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(rule.iter().map(String::as_str).collect(), &mut out);
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fold(i: usize, ps: f64) -> FoldMetrics {
        FoldMetrics {
            fold: i,
            m: 10,
            ps_mae: ps,
            ps_mae_weighted: ps / 2.0,
            ate_hat: Some(-5.0),
            ate_err: Some(0.1),
            ate_err_trim: None,
            ate_err_clip: 0.1,
            n_trimmed: 0,
            attention: None,
            truncated: 0,
            train_log: None,
            features: None,
            notes: Vec::new(),
        }
    }

    fn report(name: &str, folds: Vec<FoldMetrics>, k: usize) -> EvaluationReport {
        let mut r = EvaluationReport {
            schema_version: REPORT_SCHEMA_VERSION,
            estimator: name.into(),
            scenario: "Synthetic-OD".into(),
            k,
            trim_alpha: 0.05,
            treatment_effect: -5.0,
            m: Vec::new(),
            folds,
            aggregate: Aggregates::default(),
            attention: None,
            truncated_samples: 0,
            complete: false,
            provenance: Provenance {
                seed: 1,
                config_hash: "x".into(),
                single_threaded: true,
                fit_scope: FitScope::EntireDataset,
                dataset_seed: 1,
                dataset_size: 20,
                dx: 100,
            },
        };
        r.recompute();
        r
    }

    #[test]
    fn absent_metrics_render_as_dash() {
        let mut with_att = report("bert-code", vec![fold(0, 0.1), fold(1, 0.2)], 2);
        with_att.attention = Some(AttentionSummary {
            confounders: Some(0.3),
            others: Some(0.01),
            cls: 0.1,
            n_confounders: 1,
            n_others: 1,
        });
        let lr = report("lr", vec![fold(0, 0.3), fold(1, 0.3)], 2);
        let table = render_table(&[with_att, lr]);
        let lr_row = table.lines().find(|l| l.starts_with("lr")).unwrap();
        assert_eq!(lr_row.matches(ABSENT).count(), 4, "{table}");
        assert!(table.lines().next().unwrap().contains("Conf"));
    }

    #[test]
    fn sorting_is_stable_on_ties() {
        let mut rs = vec![
            report("mlp", vec![fold(0, 0.2), fold(1, 0.2)], 2),
            report("lstm", vec![fold(0, 0.1), fold(1, 0.1)], 2),
            report("lr", vec![fold(0, 0.2), fold(1, 0.2)], 2),
        ];
        sort_reports(&mut rs);
        let names: Vec<&str> = rs.iter().map(|r| r.estimator.as_str()).collect();
        assert_eq!(names, vec!["lstm", "lr", "mlp"]);
    }

    #[test]
    fn partial_reports_are_incomplete() {
        let r = report("lr", vec![fold(0, 0.2)], 3);
        assert!(!r.complete);
        assert_eq!(r.ps_mae(), Some(0.2));
        assert!(render_table(&[r]).contains("(incomplete)"));
    }

    #[test]
    fn json_round_trip_and_schema_check() {
        let dir = tempfile::tempdir().unwrap();
        let r = report("lr", vec![fold(0, 0.2), fold(1, 0.25)], 2);
        let path = dir.path().join("r.json");
        r.save(&path).unwrap();
        assert_eq!(EvaluationReport::load(&path).unwrap(), r);
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 99");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(EvaluationReport::load(&path), Err(Error::Config(_))));
    }
}
