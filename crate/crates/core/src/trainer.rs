//! Mini-batch training with Adam, clipping, dropout and early stopping.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{truncate, Sentence};
use crate::encoder::DropoutConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, token_accuracy};
use crate::model::Model;
use crate::optim::{clip_gradients, Adam, LrSchedule};

/// Validation metric that drives early stopping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopMetric {
    #[default]
    TokenAccuracy,
    F1,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay: f64,
    pub schedule: LrSchedule,
    pub clip: f64,
    pub keep_prob: f64,
    pub batch_size: usize,
    pub max_len: usize,
    /// Epochs without improvement tolerated before stopping.
    pub patience: usize,
    /// When off, all `max_epochs` run; the best epoch is still restored.
    pub early_stopping: bool,
    pub max_epochs: usize,
    pub stop_metric: StopMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.01,
            decay: 0.05,
            schedule: LrSchedule::InverseTime,
            clip: 5.0,
            keep_prob: 0.5,
            batch_size: 10,
            max_len: 50,
            patience: 5,
            early_stopping: true,
            max_epochs: 100,
            stop_metric: StopMetric::TokenAccuracy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return bad("decay must be non-negative");
        }
        if self.schedule == LrSchedule::Exponential && self.decay >= 1.0 {
            return bad("exponential decay must be below 1");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return bad("keep_prob must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.max_len == 0 || self.max_epochs == 0 {
            return bad("batch_size, max_len and max_epochs must be positive");
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.schedule.rate(self.lr0, self.decay, epoch)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sentence training loss over the epoch.
    pub loss: f64,
    pub dev_acc: f64,
    pub dev_f1: f64,
    pub lr: f64,
}

impl EpochLog {
    pub fn line(&self) -> String {
        format!(
            "epoch={} loss={:.6} dev_acc={:.6} lr={:.6}",
            self.epoch, self.loss, self.dev_acc, self.lr
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters restored to the best validation epoch.
    pub model: Model,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
}

fn labeled(set: &[Sentence], what: &str, max_len: usize) -> Result<Vec<Sentence>> {
    if set.is_empty() {
        return Err(Error::Config(format!("{what} set is empty")));
    }
    set.iter()
        .enumerate()
        .map(|(i, s)| {
            if s.labels.is_none() {
                return Err(Error::Config(format!("{what} sentence {i} has no labels")));
            }
            s.validate()?;
            Ok(truncate(s, max_len))
        })
        .collect()
}

/// Token accuracy and F1 of `model` on labeled sentences.
pub fn score(model: &Model, set: &[Sentence]) -> Result<(f64, f64)> {
    let gold: Vec<&[u8]> = set.iter().map(|s| s.labels.as_deref().unwrap_or(&[])).collect();
    let pred = set.iter().map(|s| model.predict(s)).collect::<Result<Vec<_>>>()?;
    Ok((token_accuracy(&gold, &pred)?, evaluate(&gold, &pred)?.f1))
}

/// One optimizer update on `batch`: mean loss, clipped gradients, Adam step.
/// Returns the summed (not averaged) loss of the batch.
pub fn train_batch<R: Rng + ?Sized>(
    model: &mut Model,
    adam: &mut Adam,
    batch: &[&Sentence],
    cfg: &TrainConfig,
    lr: f64,
    rng: &mut R,
) -> Result<f64> {
    let dropout = DropoutConfig {
        keep_prob: cfg.keep_prob,
        training: cfg.keep_prob < 1.0,
    };
    model.store.zero_grads();
    let weight = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        let mut tape = Tape::new();
        let loss = model.loss(&mut tape, s, dropout, rng)?;
        total += tape.item(loss);
        tape.backward(loss)?;
        model.store.accumulate_grads(&tape, weight);
    }
    model.store.check_finite_grads()?;
    clip_gradients(&mut model.store, cfg.clip);
    adam.step(&mut model.store, lr)?;
    Ok(total)
}

/// Trains until `max_epochs` or until the validation metric has not improved
/// for `patience` consecutive epochs (a patience of 0 behaves like 1), then
/// restores the best epoch's parameters. `on_epoch` sees every log entry as it happens.
pub fn train<R: Rng + ?Sized>(
    mut model: Model,
    train_set: &[Sentence],
    dev_set: &[Sentence],
    cfg: &TrainConfig,
    rng: &mut R,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_set = labeled(train_set, "training", cfg.max_len)?;
    let dev_set = labeled(dev_set, "validation", cfg.max_len)?;
    let mut adam = Adam::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Vec<crate::autodiff::Tensor>)> = None;
    let mut wait = 0;

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.learning_rate(epoch);
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sentence> = chunk.iter().map(|&i| &train_set[i]).collect();
            total += train_batch(&mut model, &mut adam, &batch, cfg, lr, rng)?;
        }
        let (dev_acc, dev_f1) = score(&model, &dev_set)?;
        let log = EpochLog {
            epoch,
            loss: total / train_set.len() as f64,
            dev_acc,
            dev_f1,
            lr,
        };
        on_epoch(&log);
        history.push(log);

        let metric = match cfg.stop_metric {
            StopMetric::TokenAccuracy => dev_acc,
            StopMetric::F1 => dev_f1,
        };
        if best.as_ref().is_none_or(|(b, _, _)| metric > *b) {
            best = Some((metric, epoch, model.snapshot()));
            wait = 0;
        } else {
            wait += 1;
            if cfg.early_stopping && wait >= cfg.patience.max(1) {
                break;
            }
        }
    }
    let (_, best_epoch, snap) = best.expect("at least one epoch ran");
    model.restore(&snap);
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}
