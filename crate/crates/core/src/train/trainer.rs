use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::LossWeights;
use super::objective::{example_gradient, example_loss, TrainExample};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::model::Model;
use crate::tensor::{save_container, DType, Weights};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_start: usize,
    pub batch_max: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub loss: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_start: 8,
            batch_max: 128,
            patience: 15,
            max_epochs: 100,
            seed: 0,
            loss: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pow2 = |n: usize| n.is_power_of_two() && (8..=128).contains(&n);
        if !pow2(self.batch_start) || !pow2(self.batch_max) || self.batch_start > self.batch_max {
            return Err(Error::config(
                "batch sizes must be powers of two in [8, 128] with start <= max",
            ));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::config("patience and max_epochs must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.weight_decay >= 0.0 && self.adam_eps > 0.0) {
            return Err(Error::config("lr and weight decay must be non-negative"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        self.loss.validate()
    }

    /// Batch size of `epoch` (zero-based): doubling from the start size, capped.
    pub fn batch_size(&self, epoch: usize) -> usize {
        let shift = epoch.min(usize::BITS as usize - 1) as u32;
        self.batch_start
            .checked_shl(shift)
            .filter(|b| *b != 0 && *b <= self.batch_max)
            .unwrap_or(self.batch_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// One-based epoch number.
    pub epoch: usize,
    /// Mean loss over the epoch's batches, each measured before its update.
    pub train_loss: f64,
    pub val_loss: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Mean training loss of the initial parameters.
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,batch_size\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.val_loss, e.batch_size
            ));
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let csv = self.to_csv();
        write_atomic(path.as_ref(), |f| Ok(f.write_all(csv.as_bytes())?))
    }
}

pub struct TrainOutcome {
    /// The model with the best validation loss seen.
    pub model: Model,
    pub history: TrainHistory,
}

struct Adam {
    m: Weights<f64>,
    v: Weights<f64>,
    t: i32,
}

impl Adam {
    fn new(w: &Weights<f64>) -> Self {
        Self {
            m: w.zeros_like(),
            v: w.zeros_like(),
            t: 0,
        }
    }

    /// Applies one step; `grad` already averaged over the batch.
    fn step(&mut self, w: &mut Weights<f64>, grad: &Weights<f64>, tc: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - tc.beta1.powi(self.t);
        let bc2 = 1.0 - tc.beta2.powi(self.t);
        for (((p, g), m), v) in w
            .tensors_mut()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.len() {
                let gi = g[i] + tc.weight_decay * p[i];
                m[i] = tc.beta1 * m[i] + (1.0 - tc.beta1) * gi;
                v[i] = tc.beta2 * v[i] + (1.0 - tc.beta2) * gi * gi;
                p[i] -= tc.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + tc.adam_eps);
            }
        }
    }
}

/// Mean loss over a dataset, evaluated in parallel and summed in order.
pub fn mean_loss(model: &Model, data: &[TrainExample], weights: &LossWeights) -> Result<f64> {
    let losses: Vec<f64> = data
        .par_iter()
        .map(|ex| example_loss(model, ex, weights))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Where per-epoch checkpoints go.
#[derive(Debug, Clone)]
pub struct CheckpointDir(pub PathBuf);

impl CheckpointDir {
    pub fn best(&self) -> PathBuf {
        self.0.join("best.pdf2")
    }

    pub fn last(&self) -> PathBuf {
        self.0.join("last.pdf2")
    }
}

fn save_checkpoint(model: &Model, path: &Path, epoch: usize, val_loss: f64) -> Result<()> {
    let mut store = model.to_store(DType::F64)?;
    store.set_meta("epoch", epoch.to_string());
    store.set_meta("val_loss", val_loss.to_string());
    save_container(&store, path)
}

/// Adam on the combined loss with per-epoch batch doubling and early stopping
/// on the validation loss. Deterministic for a fixed seed and thread count
/// independent: per-example gradients are summed in dataset order.
pub fn toy_train(
    model: &Model,
    train: &[TrainExample],
    val: &[TrainExample],
    tc: &TrainConfig,
    checkpoints: Option<&CheckpointDir>,
) -> Result<TrainOutcome> {
    tc.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::usage("training and validation sets must not be empty"));
    }
    if let Some(dir) = checkpoints {
        std::fs::create_dir_all(&dir.0)?;
    }
    let mut current = model.clone();
    let mut adam = Adam::new(current.weights());
    let initial_train_loss = mean_loss(&current, train, &tc.loss)?;
    let initial_val_loss = mean_loss(&current, val, &tc.loss)?;
    if !initial_train_loss.is_finite() || !initial_val_loss.is_finite() {
        return Err(Error::Training {
            step: 0,
            msg: "initial loss is not finite".into(),
        });
    }
    let mut best: Option<(usize, f64, Weights<f64>)> = None;
    let mut history = TrainHistory {
        initial_train_loss,
        initial_val_loss,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: initial_val_loss,
        stopped_early: false,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0usize;
    let mut stale = 0usize;
    log::info!(
        "training {} examples, validating on {}; initial loss {initial_train_loss:.5} / {initial_val_loss:.5}",
        train.len(),
        val.len()
    );

    for epoch in 1..=tc.max_epochs {
        let bs = tc.batch_size(epoch - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(bs) {
            step += 1;
            let results: Vec<(f64, Weights<f64>)> = batch
                .par_iter()
                .map(|&i| example_gradient(&current, &train[i], &tc.loss))
                .collect::<Result<_>>()?;
            let mut grad = current.weights().zeros_like();
            let mut loss = 0.0;
            for (l, g) in &results {
                loss += l;
                for (acc, gi) in grad.tensors_mut().zip(g.tensors()) {
                    for (a, b) in acc.iter_mut().zip(gi) {
                        *a += b;
                    }
                }
            }
            let n = batch.len() as f64;
            loss /= n;
            for t in grad.tensors_mut() {
                t.iter_mut().for_each(|v| *v /= n);
            }
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Training {
                    step,
                    msg: format!("loss diverged ({loss}) in epoch {epoch}"),
                });
            }
            let mut w = current.weights().clone();
            adam.step(&mut w, &grad, tc);
            current.set_weights(w)?;
            sum += loss;
            batches += 1;
        }
        let train_loss = sum / batches as f64;
        let val_loss = mean_loss(&current, val, &tc.loss)?;
        if !val_loss.is_finite() {
            return Err(Error::Training {
                step,
                msg: format!("validation loss is {val_loss} after epoch {epoch}"),
            });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            batch_size: bs,
        });
        log::info!("epoch {epoch}: batch {bs}, train {train_loss:.5}, val {val_loss:.5}");
        if best.as_ref().is_none_or(|b| val_loss < b.1) {
            best = Some((epoch, val_loss, current.weights().clone()));
            stale = 0;
            if let Some(dir) = checkpoints {
                save_checkpoint(&current, &dir.best(), epoch, val_loss)?;
            }
        } else {
            stale += 1;
        }
        if let Some(dir) = checkpoints {
            save_checkpoint(&current, &dir.last(), epoch, val_loss)?;
        }
        if stale >= tc.patience {
            history.stopped_early = true;
            break;
        }
    }
    let (best_epoch, best_val, best_weights) = best.expect("at least one epoch ran");
    history.best_epoch = best_epoch;
    history.best_val_loss = best_val;
    let mut out = model.clone();
    out.set_weights(best_weights)?;
    Ok(TrainOutcome {
        model: out,
        history,
    })
}
