//! Training loop for the Siamese network: Adam on cross-entropy with
//! validation-based early stopping.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArchShape, CharVocab, Gradients, SiameseNet, SimilarityModel};
use crate::corpus::{Corpus, SimInstance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Characters must occur at least this often to get their own vocab entry.
    pub vocab_min_freq: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 20,
            patience: 3,
            seed: 0,
            vocab_min_freq: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max epochs must be >= 1".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were returned (minimum validation loss).
    pub selected_epoch: usize,
}

impl TrainingLog {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
            .map_err(|e| Error::Data(e.to_string()))?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                e.train_acc.to_string(),
                e.val_acc.to_string(),
            ])
            .map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    fn new(group_lens: &[usize]) -> Adam {
        Adam {
            m: group_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, cfg: &TrainConfig, params: &mut [&mut [f64]], grads: &[&mut [f64]]) {
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for (gi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[gi];
            let v = &mut self.v[gi];
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Train the network, returning the parameters from the epoch with minimum
/// validation loss. Single-threaded and deterministic per seed.
pub fn train(
    train_corpus: &Corpus,
    train_pairs: &[SimInstance],
    val_corpus: &Corpus,
    val_pairs: &[SimInstance],
    shape: ArchShape,
    cfg: &TrainConfig,
) -> Result<(SiameseNet, TrainingLog)> {
    cfg.validate()?;
    if train_pairs.is_empty() || val_pairs.is_empty() {
        return Err(Error::Data("train and validation pair sets must be non-empty".into()));
    }
    let vocab = CharVocab::from_corpus(train_corpus, cfg.vocab_min_freq);
    let mut net = SiameseNet::init(shape, vocab, cfg.seed);
    let group_lens: Vec<usize> = net.groups_mut().iter().map(|g| g.len()).collect();
    let mut adam = Adam::new(&group_lens);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut best: Option<(f64, SiameseNet, usize)> = None;
    let mut log = TrainingLog { epochs: Vec::new(), selected_epoch: 0 };

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&net);
            for &pi in batch {
                let pair = &train_pairs[pi];
                let a = &train_corpus.text(pair.text_a).body;
                let b = &train_corpus.text(pair.text_b).body;
                let cache = net.forward_pair(a, b, Some(&mut rng))?;
                let loss = SiameseNet::loss(&cache, pair.label);
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
                }
                epoch_loss += loss;
                if (cache.probs[0] >= 0.5) == pair.label {
                    epoch_correct += 1;
                }
                net.backward_pair(&cache, pair.label, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.step(cfg, &mut net.groups_mut(), &grads.groups_mut());
        }
        let train_loss = epoch_loss / train_pairs.len() as f64;
        let train_acc = epoch_correct as f64 / train_pairs.len() as f64;
        let (val_loss, val_acc) = evaluate(&net, val_corpus, val_pairs)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation loss at epoch {epoch}")));
        }
        log.epochs.push(EpochStats { epoch, train_loss, val_loss, train_acc, val_acc });

        let improved = best.as_ref().map_or(true, |(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, net.clone(), epoch));
        } else if epoch - best.as_ref().unwrap().2 >= cfg.patience {
            break;
        }
    }
    let (_, best_net, selected) = best.expect("at least one epoch ran");
    log.selected_epoch = selected;
    Ok((best_net, log))
}

/// Mean cross-entropy and rounded accuracy of a model over labeled pairs.
/// A similarity of exactly 0.5 rounds to 1 (same author).
pub fn evaluate(
    model: &dyn SimilarityModel,
    corpus: &Corpus,
    pairs: &[SimInstance],
) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty pair set".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for pair in pairs {
        let s = model
            .similarity(&corpus.text(pair.text_a).body, &corpus.text(pair.text_b).body)?;
        let p = if pair.label { s } else { 1.0 - s };
        loss += -p.max(1e-300).ln();
        if (s >= 0.5) == pair.label {
            correct += 1;
        }
    }
    Ok((loss / pairs.len() as f64, correct as f64 / pairs.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CleanText, StudentRecord, TextRef};
    use approx::assert_abs_diff_eq;

    struct ConstModel(f64);
    impl SimilarityModel for ConstModel {
        fn similarity(&self, _: &str, _: &str) -> Result<f64> {
            Ok(self.0)
        }
    }

    struct OracleModel;
    impl SimilarityModel for OracleModel {
        fn similarity(&self, a: &str, b: &str) -> Result<f64> {
            // First char encodes the author in the fixture corpus.
            Ok(if a.chars().next() == b.chars().next() { 1.0 } else { 0.0 })
        }
    }

    fn fixture() -> (Corpus, Vec<SimInstance>) {
        let mk = |id: char, n: usize| StudentRecord {
            student_id: id.to_string(),
            texts: (0..n)
                .map(|j| CleanText {
                    student_id: id.to_string(),
                    submitted_at: format!("2020-09-{:02}T10:00:00Z", j + 1).parse().unwrap(),
                    body: format!("{id} text {j}"),
                    char_len: 8,
                })
                .collect(),
        };
        let corpus = Corpus { students: vec![mk('a', 3), mk('b', 3)] };
        let mut pairs = Vec::new();
        for s in 0..2 {
            pairs.push(SimInstance {
                text_a: TextRef { student: s, text: 0 },
                text_b: TextRef { student: s, text: 1 },
                label: true,
            });
            pairs.push(SimInstance {
                text_a: TextRef { student: 0, text: s },
                text_b: TextRef { student: 1, text: s },
                label: false,
            });
        }
        (corpus, pairs)
    }

    #[test]
    fn constant_half_model_loss_is_ln2_and_acc_half() {
        let (corpus, pairs) = fixture();
        let (loss, acc) = evaluate(&ConstModel(0.5), &corpus, &pairs).unwrap();
        assert_abs_diff_eq!(loss, std::f64::consts::LN_2, epsilon = 1e-12);
        // 0.5 rounds to "same author": positives correct on the balanced set.
        assert_abs_diff_eq!(acc, 0.5);
    }

    #[test]
    fn oracle_model_is_perfect() {
        let (corpus, pairs) = fixture();
        let (_, acc) = evaluate(&OracleModel, &corpus, &pairs).unwrap();
        assert_abs_diff_eq!(acc, 1.0);
    }

    #[test]
    fn empty_pairs_error() {
        let (corpus, _) = fixture();
        assert!(evaluate(&ConstModel(0.5), &corpus, &[]).is_err());
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig { max_epochs: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn selected_epoch_is_argmin_val_loss() {
        let (corpus, pairs) = fixture();
        let cfg = TrainConfig {
            max_epochs: 4,
            patience: 4,
            batch_size: 4,
            vocab_min_freq: 1,
            ..Default::default()
        };
        let (_, log) =
            train(&corpus, &pairs, &corpus, &pairs, ArchShape::tiny(), &cfg).unwrap();
        let argmin = log
            .epochs
            .iter()
            .min_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).unwrap())
            .unwrap()
            .epoch;
        assert_eq!(log.selected_epoch, argmin);
    }

    #[test]
    fn training_deterministic_per_seed() {
        let (corpus, pairs) = fixture();
        let cfg = TrainConfig {
            max_epochs: 2,
            batch_size: 4,
            vocab_min_freq: 1,
            ..Default::default()
        };
        let (n1, l1) = train(&corpus, &pairs, &corpus, &pairs, ArchShape::tiny(), &cfg).unwrap();
        let (n2, l2) = train(&corpus, &pairs, &corpus, &pairs, ArchShape::tiny(), &cfg).unwrap();
        assert_eq!(l1.epochs.len(), l2.epochs.len());
        for (a, b) in l1.epochs.iter().zip(&l2.epochs) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
            assert_eq!(a.val_loss.to_bits(), b.val_loss.to_bits());
        }
        let s1 = n1.similarity("a text 0", "b text 1").unwrap();
        let s2 = n2.similarity("a text 0", "b text 1").unwrap();
        assert_eq!(s1.to_bits(), s2.to_bits());
    }
}
