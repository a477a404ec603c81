use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::claimsgen::{Code, LabeledSample};

const DX: usize = 20;

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        dims: ModelDims {
            embed: 16,
            hidden: 16,
            layers: 2,
            heads: 4,
            ff_mult: 2,
            max_len: 512,
        },
        ..TrainConfig::default()
    }
}

fn random_seq(rng: &mut ChaCha8Rng) -> RecordSequence {
    let t = rng.random_range(2..8);
    let records = (0..t)
        .map(|_| {
            let n = rng.random_range(0..5);
            (0..n).map(|_| rng.random_range(0..DX as Code)).collect()
        })
        .collect();
    RecordSequence::new(records).unwrap()
}

fn random_seqs(n: usize, seed: u64) -> Vec<RecordSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_seq(&mut rng)).collect()
}

/// An estimator with random initial weights, usable for prediction.
fn untrained(kind: EstimatorKind, seed: u64) -> NeuralEstimator {
    let mut est = NeuralEstimator::new(kind, DX, small_config(seed)).unwrap();
    est.initialize(random_seqs(50, 99).iter()).unwrap();
    est.mark_trained().unwrap();
    est
}

fn sample(id: u64, records: Vec<Vec<Code>>, treatment: u8) -> LabeledSample {
    LabeledSample {
        id,
        records: RecordSequence::new(records).unwrap(),
        treatment,
        outcome: 0.0,
        true_ps: 0.5,
        y0: 0.0,
        y1: -5.0,
    }
}

fn reversed(s: &RecordSequence) -> RecordSequence {
    let mut r = s.records().to_vec();
    r.reverse();
    RecordSequence::new(r).unwrap()
}

fn shuffled_within_records(s: &RecordSequence, rng: &mut ChaCha8Rng) -> RecordSequence {
    use rand::seq::SliceRandom;
    let records = s
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.shuffle(rng);
            r
        })
        .collect();
    RecordSequence::new(records).unwrap()
}

#[test]
fn outputs_strictly_inside_unit_interval() {
    let seqs = random_seqs(40, 1);
    let refs: Vec<&RecordSequence> = seqs.iter().collect();
    for kind in EstimatorKind::ALL {
        let est = untrained(kind, 5);
        for p in est.predict(&refs).unwrap() {
            assert!(p > 0.0 && p < 1.0, "{kind}: {p}");
        }
    }
}

#[test]
fn within_record_order_is_irrelevant() {
    let seqs = random_seqs(30, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for kind in [EstimatorKind::Lstm, EstimatorKind::BertRecord, EstimatorKind::BertCode] {
        let est = untrained(kind, 11);
        for s in &seqs {
            let perm = shuffled_within_records(s, &mut rng);
            let a = est.predict(&[s]).unwrap()[0];
            let b = est.predict(&[&perm]).unwrap()[0];
            assert!((a - b).abs() < 1e-9, "{kind}: {a} vs {b}");
        }
    }
}

#[test]
fn record_order_matters_for_the_lstm() {
    let mut changed = 0;
    let probes = 50;
    for probe in 0..probes {
        let est = untrained(EstimatorKind::Lstm, 100 + probe);
        let seqs = random_seqs(1, 200 + probe);
        let s = &seqs[0];
        if s.records() == reversed(s).records() {
            continue;
        }
        let a = est.predict(&[s]).unwrap()[0];
        let b = est.predict(&[&reversed(s)]).unwrap()[0];
        changed += (a != b) as usize;
    }
    assert!(changed * 10 >= probes as usize * 9, "{changed}/{probes}");
}

#[test]
fn batch_prediction_matches_single() {
    let seqs = random_seqs(23, 3);
    let refs: Vec<&RecordSequence> = seqs.iter().collect();
    for kind in EstimatorKind::ALL {
        let est = untrained(kind, 13);
        let batch = est.predict(&refs).unwrap();
        for (s, b) in refs.iter().zip(&batch) {
            let single = est.predict(&[s]).unwrap()[0];
            assert!((single - b).abs() < 1e-12, "{kind}: {single} vs {b}");
        }
        assert_eq!(batch, est.predict(&refs).unwrap());
    }
}

#[test]
fn zero_logistic_weights_give_one_half() {
    let mut est = untrained(EstimatorKind::Lr, 1);
    let store = est.params_mut().unwrap();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.value_mut(id).fill(0.0);
    }
    let seqs = random_seqs(10, 4);
    let refs: Vec<&RecordSequence> = seqs.iter().collect();
    assert!(est.predict(&refs).unwrap().iter().all(|&p| p == 0.5));
}

fn separable_samples() -> Vec<LabeledSample> {
    let mut out = Vec::new();
    for i in 0..200 {
        out.push(sample(2 * i, vec![vec![0], vec![1]], 1));
        out.push(sample(2 * i + 1, vec![vec![1], vec![1]], 0));
    }
    out
}

#[test]
fn logistic_regression_separates_separable_data() {
    let samples = separable_samples();
    let refs: Vec<&LabeledSample> = samples.iter().collect();
    let mut est = NeuralEstimator::new(
        EstimatorKind::Lr,
        2,
        TrainConfig {
            max_epochs: 50,
            ..small_config(3)
        },
    )
    .unwrap();
    est.fit(&refs).unwrap();
    let seqs: Vec<&RecordSequence> = refs.iter().map(|s| s.seq()).collect();
    let preds = est.predict(&seqs).unwrap();
    let correct = preds
        .iter()
        .zip(&refs)
        .filter(|(&p, s)| (p > 0.5) == (s.treatment == 1))
        .count();
    assert_eq!(correct, refs.len());
}

fn noisy_samples(n: usize, seed: u64) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let s = random_seq(&mut rng);
            let p = if !s.occurrences(3).is_empty() { 0.8 } else { 0.2 };
            let a = rng.random_bool(p) as u8;
            LabeledSample {
                id: i as u64,
                records: s,
                treatment: a,
                outcome: 0.0,
                true_ps: p,
                y0: 0.0,
                y1: -5.0,
            }
        })
        .collect()
}

#[test]
fn fitting_is_seeded() {
    let samples = noisy_samples(120, 5);
    let refs: Vec<&LabeledSample> = samples.iter().collect();
    for kind in [EstimatorKind::MlpHdps, EstimatorKind::Lstm, EstimatorKind::BertCode] {
        let cfg = TrainConfig {
            max_epochs: 2,
            learning_rate: Some(1e-3),
            ..small_config(8)
        };
        let mut a = NeuralEstimator::new(kind, DX, cfg.clone()).unwrap();
        let mut b = NeuralEstimator::new(kind, DX, cfg).unwrap();
        let la = a.fit(&refs).unwrap();
        let lb = b.fit(&refs).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a.params().unwrap().snapshot(), b.params().unwrap().snapshot(), "{kind}");
    }
}

#[test]
fn early_stopping_restores_best_parameters() {
    let samples = noisy_samples(200, 6);
    let refs: Vec<&LabeledSample> = samples.iter().collect();
    let cfg = TrainConfig {
        max_epochs: 25,
        patience: 3,
        learning_rate: Some(3e-2),
        ..small_config(9)
    };
    let mut est = NeuralEstimator::new(EstimatorKind::Mlp, DX, cfg.clone()).unwrap();
    let log = est.fit(&refs).unwrap();
    let min = log.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(log.best_val_loss, min);
    assert_eq!(log.epochs[log.best_epoch - 1].val_loss, min);

    // the split is the first draw from the training stream
    let labels: Vec<u8> = refs.iter().map(|s| s.treatment).collect();
    let mut rng = crate::rng::stream(cfg.seed, "train", 0);
    let (_, val) = stratified_split(&labels, cfg.val_fraction, &mut rng).unwrap();
    let seqs: Vec<&RecordSequence> = val.iter().map(|&i| refs[i].seq()).collect();
    let ys: Vec<u8> = val.iter().map(|&i| labels[i]).collect();
    let restored = mean_bce(&est.predict(&seqs).unwrap(), &ys);
    assert!((restored - min).abs() < 1e-12, "{restored} vs {min}");
}

#[test]
fn degenerate_training_sets_are_rejected() {
    let samples: Vec<LabeledSample> = (0..20).map(|i| sample(i, vec![vec![0], vec![1]], 1)).collect();
    let refs: Vec<&LabeledSample> = samples.iter().collect();
    let mut est = NeuralEstimator::new(EstimatorKind::Lr, 2, small_config(0)).unwrap();
    assert!(matches!(est.fit(&refs), Err(Error::Training(_))));
    assert!(NeuralEstimator::new(EstimatorKind::Lr, 2, TrainConfig {
        val_fraction: 0.0,
        ..TrainConfig::default()
    })
    .is_err());
}

#[test]
fn untrained_prediction_is_a_contract_violation() {
    let est = NeuralEstimator::new(EstimatorKind::Lstm, DX, small_config(0)).unwrap();
    let seqs = random_seqs(1, 0);
    assert!(matches!(est.predict(&[&seqs[0]]), Err(Error::Contract(_))));
}

#[test]
fn cls_attention_rows() {
    let seqs = random_seqs(12, 8);
    let refs: Vec<&RecordSequence> = seqs.iter().collect();
    for kind in [EstimatorKind::BertCode, EstimatorKind::BertRecord] {
        let est = untrained(kind, 21);
        for (s, att) in refs.iter().zip(est.cls_attention(&refs).unwrap()) {
            let expected = match kind {
                EstimatorKind::BertCode => 1 + s.total_codes(),
                _ => 1 + s.len(),
            };
            assert_eq!(att.weights.len(), expected);
            assert_eq!(att.input.len(), expected);
            assert!((att.weights.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }
    let lstm = untrained(EstimatorKind::Lstm, 1);
    assert!(matches!(lstm.cls_attention(&refs), Err(Error::Contract(_))));
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let seqs = random_seqs(15, 9);
    let refs: Vec<&RecordSequence> = seqs.iter().collect();
    let hash = vocabulary_hash(None, DX);
    for kind in [EstimatorKind::LrHdps, EstimatorKind::Lstm, EstimatorKind::BertRecord] {
        let est = untrained(kind, 31);
        let path = dir.path().join(kind.name());
        est.save(&path, hash.clone()).unwrap();
        let back = NeuralEstimator::load(&path, Some(&hash)).unwrap();
        assert_eq!(back.predict(&refs).unwrap(), est.predict(&refs).unwrap());
        assert_eq!(back.features(), est.features());
        assert!(NeuralEstimator::load(&path, Some("other")).is_err());
    }
}

#[test]
fn kind_names_round_trip() {
    for kind in EstimatorKind::ALL {
        assert_eq!(kind.name().parse::<EstimatorKind>().unwrap(), kind);
        let json = serde_json::to_string(&kind).unwrap();
        assert_eq!(json, format!("\"{}\"", kind.name()));
    }
    assert!("oracle".parse::<EstimatorKind>().is_err());
}

#[test]
fn embedding_bag_mode_is_optional() {
    let cfg = TrainConfig {
        embedding_bag: true,
        ..small_config(2)
    };
    let mut est = NeuralEstimator::new(EstimatorKind::Mlp, DX, cfg).unwrap();
    est.initialize(random_seqs(5, 1).iter()).unwrap();
    est.mark_trained().unwrap();
    assert!(est.features().is_none());
    let seqs = random_seqs(5, 2);
    let refs: Vec<&RecordSequence> = seqs.iter().collect();
    assert!(est.predict(&refs).unwrap().iter().all(|&p| p > 0.0 && p < 1.0));
}
