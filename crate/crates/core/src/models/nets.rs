//! The network architectures behind the estimators.
//!
//! Each network maps a batch of record sequences to a `B × 1` column of
//! probabilities on a fresh [`Graph`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::inputs::{build_input_code, build_input_record, push_pool_row, EncoderInput, Token};
use crate::claimsgen::RecordSequence;
use crate::error::{contract, Result};
use crate::features::FeatureMap;
use crate::numerics::{
    glorot, positional_encoding, Affine, EncoderLayer, Graph, LstmCell, Mat, ParamId, ParamStore,
    SparseRows, Var,
};

/// Result of a batch forward pass.
pub struct Forward {
    /// `B × 1` probabilities.
    pub probs: Var,
    /// The last encoder layer's attention node, for attention models.
    pub last_attention: Option<Var>,
    /// Per-sample encoder inputs, for attention models.
    pub inputs: Vec<EncoderInput>,
}

pub trait Network: Send + Sync {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn forward(&self, g: &mut Graph, batch: &[&RecordSequence]) -> Result<Forward>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub max_len: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            embed: 64,
            hidden: 64,
            layers: 2,
            heads: 4,
            ff_mult: 4,
            max_len: 512,
        }
    }
}

fn head_probs(g: &mut Graph, store: &ParamStore, head: &Affine, x: Var) -> Result<Var> {
    let z = head.forward(g, store, x)?;
    Ok(g.sigmoid(z))
}

/// Logistic regression (no hidden layers) or an MLP over flat features.
pub struct FlatNet {
    pub features: FeatureMap,
    hidden: Vec<Affine>,
    head: Affine,
    store: ParamStore,
}

impl FlatNet {
    pub fn new<R: Rng + ?Sized>(
        features: FeatureMap,
        hidden_layers: usize,
        hidden_units: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut hidden = Vec::with_capacity(hidden_layers);
        let mut width = features.output_dim();
        for l in 0..hidden_layers {
            hidden.push(Affine::new(&mut store, &format!("hidden{l}"), width, hidden_units, rng)?);
            width = hidden_units;
        }
        let head = Affine::new(&mut store, "head", width, 1, rng)?;
        Ok(FlatNet {
            features,
            hidden,
            head,
            store,
        })
    }

    pub fn design_matrix(&self, batch: &[&RecordSequence]) -> Result<Mat> {
        let d = self.features.output_dim();
        let mut data = Vec::with_capacity(batch.len() * d);
        for s in batch {
            data.extend(self.features.transform(s)?);
        }
        Mat::from_shape_vec((batch.len(), d), data).map_err(|e| contract(e.to_string()))
    }
}

impl Network for FlatNet {
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, g: &mut Graph, batch: &[&RecordSequence]) -> Result<Forward> {
        let mut x = g.constant(self.design_matrix(batch)?);
        for layer in &self.hidden {
            let z = layer.forward(g, &self.store, x)?;
            x = g.relu(z);
        }
        let probs = head_probs(g, &self.store, &self.head, x)?;
        Ok(Forward {
            probs,
            last_attention: None,
            inputs: Vec::new(),
        })
    }
}

/// MLP over the mean embedding of every code occurrence in the sequence.
pub struct BagNet {
    dx: usize,
    embedding: ParamId,
    hidden: Vec<Affine>,
    head: Affine,
    store: ParamStore,
}

impl BagNet {
    pub fn new<R: Rng + ?Sized>(dx: usize, dims: &ModelDims, rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::new();
        let embedding = store.add("embedding", glorot(rng, dx, dims.embed))?;
        let mut hidden = Vec::with_capacity(dims.layers);
        let mut width = dims.embed;
        for l in 0..dims.layers {
            hidden.push(Affine::new(&mut store, &format!("hidden{l}"), width, dims.hidden, rng)?);
            width = dims.hidden;
        }
        let head = Affine::new(&mut store, "head", width, 1, rng)?;
        Ok(BagNet {
            dx,
            embedding,
            hidden,
            head,
            store,
        })
    }
}

impl Network for BagNet {
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, g: &mut Graph, batch: &[&RecordSequence]) -> Result<Forward> {
        let mut bag = SparseRows::new(self.dx);
        for s in batch {
            let mut codes: Vec<usize> = s.records().iter().flatten().map(|&c| c as usize).collect();
            if codes.iter().any(|&c| c >= self.dx) {
                return Err(contract("code outside vocabulary"));
            }
            codes.sort_unstable();
            bag.push_mean(&codes);
        }
        let table = g.param(&self.store, self.embedding);
        let mut x = g.sparse_matmul(bag, table)?;
        for layer in &self.hidden {
            let z = layer.forward(g, &self.store, x)?;
            x = g.relu(z);
        }
        let probs = head_probs(g, &self.store, &self.head, x)?;
        Ok(Forward {
            probs,
            last_attention: None,
            inputs: Vec::new(),
        })
    }
}

/// Record average-pooling into a stacked LSTM, read out from the last hidden
/// state of the top layer.
pub struct LstmNet {
    dx: usize,
    embedding: ParamId,
    cells: Vec<LstmCell>,
    head: Affine,
    store: ParamStore,
}

impl LstmNet {
    pub fn new<R: Rng + ?Sized>(dx: usize, dims: &ModelDims, rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::new();
        let embedding = store.add("embedding", glorot(rng, dx, dims.embed))?;
        let mut cells = Vec::with_capacity(dims.layers);
        let mut width = dims.embed;
        for l in 0..dims.layers {
            cells.push(LstmCell::new(&mut store, &format!("lstm{l}"), width, dims.hidden, rng)?);
            width = dims.hidden;
        }
        let head = Affine::new(&mut store, "head", width, 1, rng)?;
        Ok(LstmNet {
            dx,
            embedding,
            cells,
            head,
            store,
        })
    }
}

impl Network for LstmNet {
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, g: &mut Graph, batch: &[&RecordSequence]) -> Result<Forward> {
        let b = batch.len();
        if b == 0 {
            return Err(contract("empty batch"));
        }
        let steps = batch.iter().map(|s| s.len()).max().unwrap_or(0);
        if steps == 0 {
            return Err(contract("sequence without records"));
        }
        // row t*B + i holds record t of sample i (zero past its end)
        let mut pool = SparseRows::new(self.dx);
        for t in 0..steps {
            for s in batch {
                match s.records().get(t) {
                    Some(rec) => {
                        if rec.iter().any(|&c| c as usize >= self.dx) {
                            return Err(contract("code outside vocabulary"));
                        }
                        push_pool_row(&mut pool, rec)
                    }
                    None => pool.push_row(Vec::new()),
                }
            }
        }
        let table = g.param(&self.store, self.embedding);
        let pooled = g.sparse_matmul(pool, table)?;
        let mut inputs = (0..steps)
            .map(|t| g.slice_rows(pooled, t * b..(t + 1) * b))
            .collect::<Result<Vec<_>>>()?;

        // per step: keep/advance masks for samples that have already ended
        let masks: Vec<Option<(Var, Var)>> = (0..steps)
            .map(|t| {
                if batch.iter().all(|s| t < s.len()) {
                    return None;
                }
                let hd = self.cells[0].hidden;
                let adv = Mat::from_shape_fn((b, hd), |(i, _)| (t < batch[i].len()) as u8 as f64);
                let keep = adv.mapv(|v| 1.0 - v);
                Some((g.constant(adv), g.constant(keep)))
            })
            .collect();

        let mut last = None;
        for cell in &self.cells {
            let mut h = g.constant(Mat::zeros((b, cell.hidden)));
            let mut c = g.constant(Mat::zeros((b, cell.hidden)));
            let mut outputs = Vec::with_capacity(steps);
            for (t, x) in inputs.iter().enumerate() {
                let (h_new, c_new) = cell.step(g, &self.store, *x, h, c)?;
                match masks[t] {
                    None => {
                        h = h_new;
                        c = c_new;
                    }
                    Some((adv, keep)) => {
                        let a = g.mul(h_new, adv)?;
                        let k = g.mul(h, keep)?;
                        h = g.add(a, k)?;
                        let a = g.mul(c_new, adv)?;
                        let k = g.mul(c, keep)?;
                        c = g.add(a, k)?;
                    }
                }
                outputs.push(h);
            }
            last = Some(h);
            inputs = outputs;
        }
        let probs = head_probs(g, &self.store, &self.head, last.expect("at least one layer"))?;
        Ok(Forward {
            probs,
            last_attention: None,
            inputs: Vec::new(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderInputKind {
    Code,
    Record,
}

/// Transformer encoder over code-level or record-level tokens with a
/// learned `[CLS]` token whose final state feeds the output layer.
pub struct BertNet {
    dx: usize,
    kind: EncoderInputKind,
    dim: usize,
    max_len: usize,
    /// `(d_x + 1) × dim`; the last row is `[CLS]`.
    embedding: ParamId,
    layers: Vec<EncoderLayer>,
    head: Affine,
    store: ParamStore,
}

impl BertNet {
    pub fn new<R: Rng + ?Sized>(
        dx: usize,
        kind: EncoderInputKind,
        dims: &ModelDims,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.embed % 2 != 0 {
            return Err(contract("model dimension must be even for positional codes"));
        }
        let mut store = ParamStore::new();
        let embedding = store.add("embedding", glorot(rng, dx + 1, dims.embed))?;
        let layers = (0..dims.layers)
            .map(|l| {
                EncoderLayer::new(
                    &mut store,
                    &format!("encoder{l}"),
                    dims.embed,
                    dims.heads,
                    dims.ff_mult * dims.embed,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let head = Affine::new(&mut store, "head", dims.embed, 1, rng)?;
        Ok(BertNet {
            dx,
            kind,
            dim: dims.embed,
            max_len: dims.max_len,
            embedding,
            layers,
            head,
            store,
        })
    }

    pub fn input_kind(&self) -> EncoderInputKind {
        self.kind
    }

    pub fn build_input(&self, seq: &RecordSequence) -> Result<EncoderInput> {
        match self.kind {
            EncoderInputKind::Code => build_input_code(seq, self.max_len),
            EncoderInputKind::Record => build_input_record(seq, self.max_len),
        }
    }
}

impl Network for BertNet {
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, g: &mut Graph, batch: &[&RecordSequence]) -> Result<Forward> {
        if batch.is_empty() {
            return Err(contract("empty batch"));
        }
        let inputs = batch
            .iter()
            .map(|s| self.build_input(s))
            .collect::<Result<Vec<_>>>()?;
        let rows: usize = inputs.iter().map(EncoderInput::len).sum();
        let mut gather = SparseRows::new(self.dx + 1);
        let mut pos = Mat::zeros((rows, self.dim));
        let mut segments = Vec::with_capacity(inputs.len());
        let mut mask = Vec::with_capacity(rows);
        let mut cls = SparseRows::new(rows);
        let mut r = 0;
        for inp in &inputs {
            segments.push(r..r + inp.len());
            cls.push_pick(r);
            for (tok, &p) in inp.tokens.iter().zip(&inp.positions) {
                match tok {
                    Token::Cls => gather.push_pick(self.dx),
                    Token::Code(c) => {
                        if *c as usize >= self.dx {
                            return Err(contract(format!("code {c} outside vocabulary")));
                        }
                        gather.push_pick(*c as usize)
                    }
                    Token::Record(codes) => {
                        if codes.iter().any(|&c| c as usize >= self.dx) {
                            return Err(contract("code outside vocabulary"));
                        }
                        push_pool_row(&mut gather, codes)
                    }
                }
                for (j, v) in positional_encoding(p, self.dim)?.into_iter().enumerate() {
                    pos[[r, j]] = v;
                }
                r += 1;
            }
            mask.extend_from_slice(&inp.mask);
        }
        let table = g.param(&self.store, self.embedding);
        let emb = g.sparse_matmul(gather, table)?;
        let pos = g.constant(pos);
        let mut x = g.add(emb, pos)?;
        let mut last_attention = None;
        for layer in &self.layers {
            let (y, att) = layer.forward(g, &self.store, x, &segments, &mask)?;
            x = y;
            last_attention = Some(att);
        }
        let cls_rows = g.sparse_matmul(cls, x)?;
        let probs = head_probs(g, &self.store, &self.head, cls_rows)?;
        Ok(Forward {
            probs,
            last_attention,
            inputs,
        })
    }
}
