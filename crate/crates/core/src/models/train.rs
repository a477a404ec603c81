//! Minibatch Adam with a stratified inner validation split and early
//! stopping.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nets::Network;
use super::TrainConfig;
use crate::claimsgen::{LabeledSample, RecordSequence};
use crate::error::{Error, Result};
use crate::numerics::{AdamState, Graph};

const BCE_CLAMP: f64 = 1e-7;
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch (1-based) whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// Optimizer steps skipped because of non-finite gradients.
    pub skipped_steps: usize,
    pub n_train: usize,
    pub n_val: usize,
}

/// Splits indices `0..labels.len()` into (train, validation), drawing
/// `round(fraction · n_c)` validation rows from each class.
pub fn stratified_split<R: Rng + ?Sized>(
    labels: &[u8],
    fraction: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("validation fraction {fraction} outside (0, 1)")));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        let take = ((fraction * idx.len() as f64).round() as usize).min(idx.len().saturating_sub(1));
        val.extend_from_slice(&idx[..take]);
        train.extend_from_slice(&idx[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Mean clamped binary cross-entropy of probabilities against labels.
pub fn mean_bce(probs: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / probs.len() as f64
}

/// Forward pass in fixed-size chunks, returning one probability per sequence.
pub fn predict_network(net: &dyn Network, seqs: &[&RecordSequence]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(EVAL_CHUNK) {
        let mut g = Graph::new();
        let f = net.forward(&mut g, chunk)?;
        out.extend(g.value(f.probs).iter().copied());
    }
    Ok(out)
}

pub fn train_network<R: Rng + ?Sized>(
    net: &mut dyn Network,
    samples: &[&LabeledSample],
    cfg: &TrainConfig,
    learning_rate: f64,
    rng: &mut R,
) -> Result<TrainLog> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let labels: Vec<u8> = samples.iter().map(|s| s.treatment).collect();
    if labels.iter().any(|&a| a > 1) {
        return Err(Error::Training("treatment labels must be 0 or 1".into()));
    }
    let treated = labels.iter().filter(|&&a| a == 1).count();
    if treated == 0 || treated == labels.len() {
        return Err(Error::Training(
            "all training labels belong to one class; nothing to learn".into(),
        ));
    }
    let (mut train_idx, val_idx) = stratified_split(&labels, cfg.val_fraction, rng)?;
    if val_idx.is_empty() {
        return Err(Error::Training("training set too small for a validation split".into()));
    }
    let val_seqs: Vec<&RecordSequence> = val_idx.iter().map(|&i| samples[i].seq()).collect();
    let val_labels: Vec<u8> = val_idx.iter().map(|&i| labels[i]).collect();

    let mut adam = AdamState::new(net.store(), learning_rate);
    let mut log = TrainLog {
        best_val_loss: f64::INFINITY,
        n_train: train_idx.len(),
        n_val: val_idx.len(),
        ..TrainLog::default()
    };
    let mut best_params = net.store().snapshot();
    let mut reference = f64::INFINITY;
    let mut wait = 0;

    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(rng);
        let mut loss_sum = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let seqs: Vec<&RecordSequence> = batch.iter().map(|&i| samples[i].seq()).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| labels[i] as f64).collect();
            let mut g = Graph::new();
            let f = net.forward(&mut g, &seqs)?;
            let loss = g.bce(f.probs, &ys)?;
            g.backward(loss)?;
            loss_sum += g.scalar(loss) * batch.len() as f64;
            let store = net.store_mut();
            store.zero_grads();
            g.accumulate_into(store);
            match adam.step(store) {
                Ok(()) => {}
                Err(Error::Optimizer(_)) => log.skipped_steps += 1,
                Err(e) => return Err(e),
            }
        }
        let val_loss = mean_bce(&predict_network(&*net, &val_seqs)?, &val_labels);
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("validation loss diverged at epoch {epoch}")));
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            val_loss,
        });
        if val_loss < log.best_val_loss {
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            best_params = net.store().snapshot();
        }
        if val_loss < reference - cfg.min_delta {
            reference = val_loss;
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    net.store_mut().restore(&best_params)?;
    Ok(log)
}
