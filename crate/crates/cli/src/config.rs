//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use psbench::claimsgen::{
    generate_synthetic, ingest_corpus, inject_semisynthetic, ClaimsDataset, Code, GeneratorParams,
    ScenarioKind, ScenarioSpec,
};
use psbench::estimate::{CvConfig, EstimatorSpec};
use psbench::features::FitScope;
use psbench::models::TrainConfig;
use psbench::rng::derive_seed;
use psbench::Error;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub estimators: Vec<EstimatorEntry>,
    /// Training settings shared by every estimator; entries may override
    /// individual fields.
    #[serde(default)]
    pub train: Value,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_alpha")]
    pub trim_alpha: f64,
    #[serde(default)]
    pub fit_scope: FitScope,
    #[serde(default = "yes")]
    pub attention: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub threads: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_k() -> usize {
    10
}
fn default_alpha() -> f64 {
    0.05
}
fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Synthetic cohort drawn from the generator.
    Generate {
        #[serde(default)]
        generator: GeneratorParams,
        scenario: ScenarioConfig,
    },
    /// A dataset previously written by `generate`.
    Path(PathBuf),
    /// A patient/date/code CSV with injected confounding on two named codes.
    Corpus {
        path: PathBuf,
        code_a: String,
        code_b: String,
        #[serde(default)]
        overrides: ScenarioOverrides,
    },
}

/// A scenario preset plus optional overrides of its constants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub code_a: Code,
    #[serde(default)]
    pub code_b: Option<Code>,
    #[serde(flatten)]
    pub overrides: ScenarioOverrides,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ScenarioOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment_effect: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ps_noise_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_noise_var: Option<f64>,
}

impl ScenarioOverrides {
    fn apply(&self, mut spec: ScenarioSpec) -> ScenarioSpec {
        if let Some(w) = self.window {
            spec.window = w;
        }
        if let Some(v) = self.treatment_effect {
            spec.treatment_effect = v;
        }
        if let Some(v) = self.ps_noise_var {
            spec.ps_noise_var = v;
        }
        if let Some(v) = self.outcome_noise_var {
            spec.outcome_noise_var = v;
        }
        spec
    }
}

impl ScenarioConfig {
    pub fn spec(&self) -> ScenarioSpec {
        self.overrides
            .apply(ScenarioSpec::preset(self.kind, self.code_a, self.code_b))
    }
}

/// `"lstm"` or `{"name": "lstm", "train": {...}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EstimatorEntry {
    Name(String),
    Full {
        name: String,
        #[serde(default)]
        train: Value,
    },
}

impl EstimatorEntry {
    pub fn name(&self) -> &str {
        match self {
            EstimatorEntry::Name(n) | EstimatorEntry::Full { name: n, .. } => n,
        }
    }

    fn train_overrides(&self) -> Option<&Value> {
        match self {
            EstimatorEntry::Name(_) => None,
            EstimatorEntry::Full { train, .. } => Some(train),
        }
    }
}

/// One resolved estimator of a run.
#[derive(Clone, Debug)]
pub struct Planned {
    pub spec: EstimatorSpec,
    pub train: TrainConfig,
}

fn merge(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (_, Value::Null) => {}
        (b, t) => *b = t.clone(),
    }
}

fn train_config(shared: &Value, own: Option<&Value>, who: &str) -> psbench::Result<TrainConfig> {
    let mut v = serde_json::to_value(TrainConfig::default())?;
    merge(&mut v, shared);
    if let Some(own) = own {
        merge(&mut v, own);
    }
    let cfg: TrainConfig = serde_json::from_value(v)
        .map_err(|e| Error::Config(format!("train settings for {who}: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
    }

    /// Dataset seed, derived from the master seed alone.
    pub fn dataset_seed(&self) -> u64 {
        derive_seed(self.seed, "dataset", 0)
    }

    pub fn cv(&self) -> psbench::Result<CvConfig> {
        let cv = CvConfig {
            k: self.k,
            trim_alpha: self.trim_alpha,
            fit_scope: self.fit_scope,
            seed: derive_seed(self.seed, "cv", 0),
            threads: self.threads,
            attention: self.attention,
        };
        cv.validate()?;
        Ok(cv)
    }

    /// Resolves estimator names against the registry and merges settings.
    pub fn plan(&self) -> psbench::Result<Vec<Planned>> {
        if self.estimators.is_empty() {
            return Err(Error::Config(format!(
                "no estimators listed; known estimators: {}",
                EstimatorSpec::registry().join(", ")
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        self.estimators
            .iter()
            .map(|e| {
                let spec: EstimatorSpec = e.name().parse()?;
                if !seen.insert(spec) {
                    return Err(Error::Config(format!("estimator {spec} listed twice")));
                }
                let train = train_config(&self.train, e.train_overrides(), e.name())?;
                Ok(Planned { spec, train })
            })
            .collect()
    }

    /// Builds or loads the dataset. Paths are relative to `base`.
    pub fn dataset(&self, base: &Path) -> psbench::Result<ClaimsDataset> {
        match &self.dataset {
            DatasetSource::Generate { generator, scenario } => {
                generate_synthetic(generator, &scenario.spec(), self.dataset_seed())
            }
            DatasetSource::Path(p) => ClaimsDataset::load(&base.join(p)),
            DatasetSource::Corpus {
                path,
                code_a,
                code_b,
                overrides,
            } => {
                let corpus = ingest_corpus(&base.join(path))?;
                let index = |c: &str| {
                    corpus
                        .code_index(c)
                        .ok_or_else(|| Error::Config(format!("code {c:?} does not occur in the corpus")))
                };
                let spec = overrides.apply(ScenarioSpec::semi_synthetic(index(code_a)?, index(code_b)?));
                inject_semisynthetic(&corpus, &spec, self.dataset_seed())
            }
        }
    }
}
