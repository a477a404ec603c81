//! Propensity-score estimators: logistic regression and MLP over flat
//! features, an LSTM over pooled records, and transformer encoders over
//! code-level or record-level tokens.

pub mod inputs;
pub mod nets;
pub mod train;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::claimsgen::{LabeledSample, RecordSequence};
use crate::error::{contract, Error, Result};
use crate::features::{FeatureMap, FeatureMode};
use crate::numerics::{Checkpoint, Graph, ParamStore};
use crate::rng;

pub use inputs::{build_input_code, build_input_record, record_pool, EncoderInput, Token};
pub use nets::{BagNet, BertNet, EncoderInputKind, FlatNet, LstmNet, ModelDims, Network};
pub use train::{mean_bce, stratified_split, EpochLog, TrainLog};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Lr,
    LrHdps,
    Mlp,
    MlpHdps,
    Lstm,
    BertCode,
    BertRecord,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::Lr,
        EstimatorKind::LrHdps,
        EstimatorKind::Mlp,
        EstimatorKind::MlpHdps,
        EstimatorKind::Lstm,
        EstimatorKind::BertCode,
        EstimatorKind::BertRecord,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Lr => "lr",
            EstimatorKind::LrHdps => "lr-hdps",
            EstimatorKind::Mlp => "mlp",
            EstimatorKind::MlpHdps => "mlp-hdps",
            EstimatorKind::Lstm => "lstm",
            EstimatorKind::BertCode => "bert-code",
            EstimatorKind::BertRecord => "bert-record",
        }
    }

    pub fn feature_mode(self) -> Option<FeatureMode> {
        match self {
            EstimatorKind::Lr | EstimatorKind::Mlp => Some(FeatureMode::Counts),
            EstimatorKind::LrHdps | EstimatorKind::MlpHdps => Some(FeatureMode::Hdps),
            _ => None,
        }
    }

    /// The flat feature mode this estimator consumes under `config`.
    pub fn flat_features(self, config: &TrainConfig) -> Option<FeatureMode> {
        let bag = config.embedding_bag && matches!(self, EstimatorKind::Mlp | EstimatorKind::MlpHdps);
        self.feature_mode().filter(|_| !bag)
    }

    pub fn is_deep(self) -> bool {
        matches!(
            self,
            EstimatorKind::Lstm | EstimatorKind::BertCode | EstimatorKind::BertRecord
        )
    }

    pub fn has_attention(self) -> bool {
        matches!(self, EstimatorKind::BertCode | EstimatorKind::BertRecord)
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            EstimatorKind::Lr | EstimatorKind::LrHdps => 1e-3,
            EstimatorKind::Mlp | EstimatorKind::MlpHdps => 1e-4,
            _ => 1e-5,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// `None` picks the estimator's default.
    pub learning_rate: Option<f64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub dims: ModelDims,
    /// MLP over a learned mean of code embeddings instead of flat features.
    pub embedding_bag: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            learning_rate: None,
            max_epochs: 200,
            patience: 10,
            min_delta: 1e-4,
            val_fraction: 0.1,
            seed: 0,
            dims: ModelDims::default(),
            embedding_bag: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation fraction {} outside (0, 1)",
                self.val_fraction
            )));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate {lr} must be positive")));
            }
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("max_epochs and patience must be positive".into()));
        }
        let d = &self.dims;
        if d.embed == 0 || d.hidden == 0 || d.layers == 0 || d.heads == 0 || d.max_len < 2 {
            return Err(Error::Config(format!("invalid model dimensions {d:?}")));
        }
        Ok(())
    }
}

/// A trainable map from record sequences to propensity scores in `(0, 1)`.
pub trait PropensityEstimator: Send {
    fn name(&self) -> String;

    fn fit(&mut self, train: &[&LabeledSample]) -> Result<TrainLog>;

    fn predict(&self, seqs: &[&RecordSequence]) -> Result<Vec<f64>>;

    /// Last-layer `[CLS]` attention rows, averaged over heads.
    fn cls_attention(&self, _seqs: &[&RecordSequence]) -> Result<Vec<ClsAttention>> {
        Err(contract(format!("{} has no attention weights", self.name())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClsAttention {
    pub input: EncoderInput,
    /// One weight per input position, `[CLS]` first.
    pub weights: Vec<f64>,
}

enum Net {
    Flat(FlatNet),
    Bag(BagNet),
    Lstm(LstmNet),
    Bert(BertNet),
}

impl Net {
    fn network(&self) -> &dyn Network {
        match self {
            Net::Flat(n) => n,
            Net::Bag(n) => n,
            Net::Lstm(n) => n,
            Net::Bert(n) => n,
        }
    }

    fn network_mut(&mut self) -> &mut dyn Network {
        match self {
            Net::Flat(n) => n,
            Net::Bag(n) => n,
            Net::Lstm(n) => n,
            Net::Bert(n) => n,
        }
    }
}

/// Any of the seven neural estimators.
pub struct NeuralEstimator {
    kind: EstimatorKind,
    config: TrainConfig,
    dx: usize,
    features: Option<FeatureMap>,
    net: Option<Net>,
    trained: bool,
}

impl NeuralEstimator {
    pub fn new(kind: EstimatorKind, dx: usize, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if dx == 0 {
            return Err(Error::Config("vocabulary size must be positive".into()));
        }
        Ok(NeuralEstimator {
            kind,
            config,
            dx,
            features: None,
            net: None,
            trained: false,
        })
    }

    /// Uses an already fitted feature transform instead of fitting one on
    /// the training rows.
    pub fn with_features(mut self, features: FeatureMap) -> Result<Self> {
        if self.kind.flat_features(&self.config).is_none() {
            return Err(contract(format!("{} takes no flat features", self.kind)));
        }
        if features.dx() != self.dx {
            return Err(contract("feature map vocabulary size mismatch"));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn features(&self) -> Option<&FeatureMap> {
        self.features.as_ref()
    }

    pub fn learning_rate(&self) -> f64 {
        self.config
            .learning_rate
            .unwrap_or_else(|| self.kind.default_learning_rate())
    }

    fn build(&self) -> Result<Net> {
        let mut rng = rng::stream(self.config.seed, "init", 0);
        let dims = &self.config.dims;
        Ok(match self.kind {
            _ if self.kind.feature_mode().is_some() && self.kind.flat_features(&self.config).is_none() => Net::Bag(BagNet::new(self.dx, dims, &mut rng)?),
            EstimatorKind::Lr | EstimatorKind::LrHdps | EstimatorKind::Mlp | EstimatorKind::MlpHdps => {
                let features = self
                    .features
                    .clone()
                    .ok_or_else(|| contract("flat estimator without fitted features"))?;
                let layers = if matches!(self.kind, EstimatorKind::Lr | EstimatorKind::LrHdps) {
                    0
                } else {
                    dims.layers
                };
                Net::Flat(FlatNet::new(features, layers, dims.hidden, &mut rng)?)
            }
            EstimatorKind::Lstm => Net::Lstm(LstmNet::new(self.dx, dims, &mut rng)?),
            EstimatorKind::BertCode => {
                Net::Bert(BertNet::new(self.dx, EncoderInputKind::Code, dims, &mut rng)?)
            }
            EstimatorKind::BertRecord => {
                Net::Bert(BertNet::new(self.dx, EncoderInputKind::Record, dims, &mut rng)?)
            }
        })
    }

    /// Builds an untrained network, fitting flat features on `seqs` when
    /// none were supplied.
    pub fn initialize<'a, I>(&mut self, seqs: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a RecordSequence>,
    {
        if let (Some(mode), None) = (self.kind.flat_features(&self.config), &self.features) {
            self.features = Some(FeatureMap::fit(mode, seqs, self.dx, "training fold")?);
        }
        self.net = Some(self.build()?);
        Ok(())
    }

    pub fn params(&self) -> Option<&ParamStore> {
        self.net.as_ref().map(|n| n.network().store())
    }

    pub fn params_mut(&mut self) -> Option<&mut ParamStore> {
        self.net.as_mut().map(|n| n.network_mut().store_mut())
    }

    /// Marks hand-set parameters as usable for prediction.
    pub fn mark_trained(&mut self) -> Result<()> {
        if self.net.is_none() {
            return Err(contract("estimator has no parameters"));
        }
        self.trained = true;
        Ok(())
    }

    fn trained_net(&self) -> Result<&Net> {
        match (&self.net, self.trained) {
            (Some(n), true) => Ok(n),
            _ => Err(contract(format!("{} has not been trained", self.kind))),
        }
    }

    /// Oldest tokens dropped when encoding `seq`; zero for non-encoder models.
    pub fn truncated_tokens(&self, seq: &RecordSequence) -> Result<usize> {
        match &self.net {
            Some(Net::Bert(b)) => Ok(b.build_input(seq)?.truncated),
            _ => Ok(0),
        }
    }

    pub fn manifest(&self, vocabulary_hash: String) -> EstimatorManifest {
        EstimatorManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            kind: self.kind,
            config: self.config.clone(),
            dx: self.dx,
            features: self.features.clone(),
            vocabulary_hash,
        }
    }

    /// Writes `manifest.json` and `params.json` into `dir`.
    pub fn save(&self, dir: &Path, vocabulary_hash: String) -> Result<()> {
        let net = self.trained_net()?;
        std::fs::create_dir_all(dir)?;
        let manifest = serde_json::to_string_pretty(&self.manifest(vocabulary_hash))?;
        std::fs::write(dir.join("manifest.json"), manifest)?;
        net.network().store().to_checkpoint().save(&dir.join("params.json"))
    }

    /// Restores an estimator saved with [`NeuralEstimator::save`]. When
    /// `vocabulary_hash` is given it must match the manifest's.
    pub fn load(dir: &Path, vocabulary_hash: Option<&str>) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("manifest.json"))?;
        let m: EstimatorManifest = serde_json::from_str(&text)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "manifest schema {} unsupported (expected {MANIFEST_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        if let Some(h) = vocabulary_hash {
            if h != m.vocabulary_hash {
                return Err(Error::Config("checkpoint was trained on a different vocabulary".into()));
            }
        }
        let mut est = NeuralEstimator::new(m.kind, m.dx, m.config)?;
        est.features = m.features;
        let mut net = est.build()?;
        net.network_mut()
            .store_mut()
            .load_checkpoint(&Checkpoint::load(&dir.join("params.json"))?)?;
        est.net = Some(net);
        est.trained = true;
        Ok(est)
    }
}

impl PropensityEstimator for NeuralEstimator {
    fn name(&self) -> String {
        self.kind.name().to_string()
    }

    fn fit(&mut self, train: &[&LabeledSample]) -> Result<TrainLog> {
        self.initialize(train.iter().map(|s| s.seq()))?;
        let mut rng = rng::stream(self.config.seed, "train", 0);
        let lr = self.learning_rate();
        let config = self.config.clone();
        let net = self.net.as_mut().expect("initialized").network_mut();
        let log = train::train_network(net, train, &config, lr, &mut rng)?;
        self.trained = true;
        Ok(log)
    }

    fn predict(&self, seqs: &[&RecordSequence]) -> Result<Vec<f64>> {
        train::predict_network(self.trained_net()?.network(), seqs)
    }

    fn cls_attention(&self, seqs: &[&RecordSequence]) -> Result<Vec<ClsAttention>> {
        let bert = match self.trained_net()? {
            Net::Bert(b) => b,
            _ => return Err(contract(format!("{} has no attention weights", self.kind))),
        };
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(64) {
            let mut g = Graph::new();
            let f = bert.forward(&mut g, chunk)?;
            let att = f.last_attention.ok_or_else(|| contract("encoder without layers"))?;
            let weights = g
                .attention_weights(att)
                .ok_or_else(|| contract("attention node lost its weights"))?;
            for (input, heads) in f.inputs.into_iter().zip(weights) {
                let mut row = vec![0.0; input.len()];
                for h in heads {
                    for (r, w) in row.iter_mut().zip(h.row(0)) {
                        *r += w / heads.len() as f64;
                    }
                }
                out.push(ClsAttention { input, weights: row });
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorManifest {
    pub schema_version: u32,
    pub kind: EstimatorKind,
    pub config: TrainConfig,
    pub dx: usize,
    pub features: Option<FeatureMap>,
    pub vocabulary_hash: String,
}

/// Hex sha256 of the code vocabulary, or of `dx` alone for synthetic data
/// whose codes are bare indices.
pub fn vocabulary_hash(vocabulary: Option<&[String]>, dx: usize) -> String {
    let mut h = Sha256::new();
    match vocabulary {
        Some(v) => {
            for code in v {
                h.update(code.as_bytes());
                h.update([0u8]);
            }
        }
        None => h.update(format!("synthetic:{dx}").as_bytes()),
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests;
