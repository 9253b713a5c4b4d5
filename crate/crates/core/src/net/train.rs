//! Mini-batch training with early stopping.

use ndarray::Array2;
use rayon::prelude::*;

use super::adam::{adam_step, AdamState};
use super::backward::backward_scaled;
use super::forward::{model_forward, model_predict, sum_squared_error};
use super::params::{init_params, ModelConfig, ModelParams};
use crate::corpus::{denormalize_contours, ContourNormStats, ContourSequence};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One training example: standardized features and normalized contours.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqData {
    pub features: Array2<f64>,
    pub targets: Array2<f64>,
}

impl SeqData {
    pub fn new(features: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if features.nrows() != targets.nrows() || features.nrows() == 0 {
            return Err(Error::contract(format!(
                "sequence needs matching, non-zero frame counts (features {}, targets {})",
                features.nrows(),
                targets.nrows()
            )));
        }
        Ok(Self { features, targets })
    }

    pub fn n_frames(&self) -> usize {
        self.features.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Sequences per optimizer step.
    pub batch_sequences: usize,
    pub patience: usize,
    pub seed: u64,
    pub lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            batch_sequences: 10,
            patience: 10,
            seed: 0,
            lr: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_sequences == 0 {
            return Err(Error::Config("batch_sequences must be at least 1".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience ({}) must be below max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr)));
        }
        Ok(())
    }
}

/// Per-epoch losses (index 0 is epoch 1) and the early-stopping outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    /// 1-based epoch after which training halted.
    pub stopped_epoch: usize,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch - 1]
    }

    /// `epoch,train_mse,val_mse` with one row per epoch.
    pub fn to_csv(&self) -> String {
        use crate::numfmt::fmt_g17;
        let mut out = String::from("epoch,train_mse,val_mse\n");
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!("{},{},{}\n", e + 1, fmt_g17(*t), fmt_g17(*v)));
        }
        out
    }
}

/// Frame-weighted MSE of the model over a set of sequences.
pub fn dataset_mse(params: &ModelParams, data: &[SeqData]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("empty evaluation set"));
    }
    let sses = data
        .par_iter()
        .map(|s| model_predict(params, &s.features).map(|y| sum_squared_error(&y, &s.targets)))
        .collect::<Result<Vec<f64>>>()?;
    let entries: usize = data.iter().map(|s| s.targets.len()).sum();
    Ok(sses.iter().sum::<f64>() / entries as f64)
}

/// Trains with a constant learning rate `tcfg.lr`.
pub fn train_model(
    train: &[SeqData],
    val: &[SeqData],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    train_model_with_schedule(train, val, mcfg, tcfg, |_| tcfg.lr)
}

/// Training loop with a per-epoch learning rate (`lr_at(epoch)`, 1-based).
///
/// Each epoch shuffles the training sequences, then takes one Adam step per
/// batch of `batch_sequences` sequences on the batch's frame-mean loss.
/// Per-sequence gradients are computed in parallel and summed in batch order,
/// so results do not depend on the thread count. Training stops once the
/// validation MSE has not improved for `patience` epochs; the returned
/// parameters are those of the best validation epoch.
pub fn train_model_with_schedule(
    train: &[SeqData],
    val: &[SeqData],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    lr_at: impl Fn(usize) -> f64,
) -> Result<(ModelParams, TrainHistory)> {
    tcfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::contract("training and validation splits must be non-empty"));
    }
    if let Some(s) = train.iter().chain(val).find(|s| s.features.ncols() != mcfg.input_dim) {
        return Err(Error::contract(format!(
            "feature width {} does not match model input_dim {}",
            s.features.ncols(),
            mcfg.input_dim
        )));
    }
    if let Some(s) = train.iter().chain(val).find(|s| s.targets.ncols() != mcfg.output_dim) {
        return Err(Error::contract(format!(
            "target width {} does not match model output_dim {}",
            s.targets.ncols(),
            mcfg.output_dim
        )));
    }

    let mut params = init_params(mcfg)?;
    let mut adam = AdamState::new(&params, tcfg.lr);
    let mut rng = Rng::new(tcfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        stopped_epoch: 0,
    };
    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0;

    for epoch in 1..=tcfg.max_epochs {
        adam.lr = lr_at(epoch);
        rng.shuffle(&mut order);
        let mut epoch_sse = 0.0;
        let mut epoch_entries = 0usize;
        for batch in order.chunks(tcfg.batch_sequences) {
            let entries: usize = batch.iter().map(|&i| train[i].targets.len()).sum();
            let scale = 1.0 / entries as f64;
            let per_seq = batch
                .par_iter()
                .map(|&i| {
                    let s = &train[i];
                    let (y, cache) = model_forward(&params, &s.features)?;
                    let sse = sum_squared_error(&y, &s.targets);
                    backward_scaled(&params, &cache, &s.targets, scale).map(|g| (sse, g))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut per_seq = per_seq.into_iter();
            let (first_sse, mut grads) = per_seq.next().expect("non-empty batch");
            epoch_sse += first_sse;
            for (sse, g) in per_seq {
                epoch_sse += sse;
                grads.add_assign(&g);
            }
            epoch_entries += entries;
            adam_step(&mut params, &grads, &mut adam);
        }

        let train_mse = epoch_sse / epoch_entries as f64;
        let val_mse = dataset_mse(&params, val)?;
        history.train_loss.push(train_mse);
        history.val_loss.push(val_mse);
        history.stopped_epoch = epoch;
        log::info!("epoch {epoch}: train mse {train_mse:.6}, val mse {val_mse:.6}");

        if val_mse < best_val {
            best_val = val_mse;
            best = params.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tcfg.patience {
                log::info!(
                    "early stop at epoch {epoch}, best epoch {}",
                    history.best_epoch
                );
                break;
            }
        }
    }
    if history.best_epoch == 0 {
        return Err(Error::contract("validation loss never became finite"));
    }
    Ok((best, history))
}

/// Runs the model and maps its normalized output back to pixel contours.
pub fn predict(
    params: &ModelParams,
    features: &Array2<f64>,
    contour_stats: &ContourNormStats,
    frame_rate_hz: f64,
) -> Result<ContourSequence> {
    let z = model_predict(params, features)?;
    denormalize_contours(&z, contour_stats, frame_rate_hz)
}
