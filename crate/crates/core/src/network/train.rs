use std::fmt::Write as _;

use ndarray::Axis;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamParams, AdamState};
use super::metrics::rmse;
use super::model::{loss_and_gradients, Architecture, Model};
use crate::dataset::{DatasetBundle, Split};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub adam: AdamParams,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a new best validation RMSE.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamParams::default(),
            batch_size: 256,
            epochs: 200,
            patience: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epoch count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-record training loss of each epoch.
    pub train_loss: Vec<f64>,
    pub val_rmse: Vec<f64>,
    pub best_epoch: usize,
}

impl TrainReport {
    pub fn best_val_rmse(&self) -> f64 {
        self.val_rmse[self.best_epoch]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_rmse\n");
        for (e, (l, v)) in self.train_loss.iter().zip(&self.val_rmse).enumerate() {
            let _ = writeln!(out, "{e},{l},{v}");
        }
        out
    }
}

/// Mini-batch Adam on the training split; returns the weights of the epoch
/// with the lowest validation RMSE.
pub fn train(bundle: &DatasetBundle, cfg: &TrainConfig, arch: &Architecture) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    if bundle.meta.split.is_none() {
        return Err(Error::Config("dataset has no train/validation/test split".into()));
    }
    let train_set = bundle.part(Split::Train);
    let val_set = bundle.part(Split::Validation);
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("training and validation splits must be non-empty".into()));
    }
    let val_target: Vec<[f64; 3]> = val_set.iter().map(|r| r.painted).collect();

    let mut model = Model::new_random(arch.clone(), bundle.meta.classes, bundle.norm(), &mut seed::rng(cfg.seed, "init"))?;
    let (x_all, y_all) = model.design(&train_set)?;
    let mut adam = AdamState::new(model.layers());
    let mut shuffle_rng = seed::rng(cfg.seed, "shuffle");
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_rmse: Vec::new(),
        best_epoch: 0,
    };
    let mut best = model.clone();
    let mut best_rmse = f64::INFINITY;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = x_all.select(Axis(0), batch);
            let y = y_all.select(Axis(0), batch);
            let (loss, grads) = loss_and_gradients(&model, x.view(), &y)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    msg: format!("non-finite batch loss {loss}"),
                });
            }
            total += loss * batch.len() as f64;
            adam.step(model.layers_mut(), &grads, &cfg.adam);
        }
        let train_loss = total / train_set.len() as f64;
        let val = rmse(&model.predict_records(&val_set)?, &val_target)?;
        if !val.is_finite() || !model.is_finite() {
            return Err(Error::Training {
                epoch,
                msg: "parameters became non-finite".into(),
            });
        }
        log::info!("epoch {epoch}: train loss {train_loss:.6}, validation RMSE {val:.6}");
        report.train_loss.push(train_loss);
        report.val_rmse.push(val);
        if val < best_rmse {
            best_rmse = val;
            best = model.clone();
            report.best_epoch = epoch;
        } else if epoch - report.best_epoch >= cfg.patience {
            log::info!("early stop at epoch {epoch}, best epoch {}", report.best_epoch);
            break;
        }
    }
    Ok((best, report))
}
