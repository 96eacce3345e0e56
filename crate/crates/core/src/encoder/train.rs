use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_update, AdamState};
use super::config::EncoderConfig;
use super::encoding::TrainingPair;
use super::model::{evaluate_loss, loss_and_gradients};
use super::params::{init_model, ModelParams};
use crate::error::{Error, Result};

/// Shuffling draws from this ChaCha stream so it never overlaps the
/// initialization stream of the same seed.
const SHUFFLE_STREAM: u64 = 1;

/// Metrics for one epoch. Training values average over the minibatches seen
/// during the epoch; validation values are measured after its last step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_mse: f64,
    pub train_mae: f64,
    pub val_mse: Option<f64>,
    pub val_mae: Option<f64>,
}

/// Minibatch Adam from a seeded initialization, reshuffling every epoch.
pub fn train(
    pairs: &[TrainingPair],
    val: &[TrainingPair],
    config: &EncoderConfig,
) -> Result<(ModelParams, Vec<EpochStats>)> {
    train_with_progress(pairs, val, config, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_progress(
    pairs: &[TrainingPair],
    val: &[TrainingPair],
    config: &EncoderConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(ModelParams, Vec<EpochStats>)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("training set is empty".into()));
    }
    let mut params = init_model(config, config.seed)?;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut mse_sum = 0.0;
        let mut mae_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<TrainingPair> = chunk.iter().map(|&i| pairs[i].clone()).collect();
            let (report, grads) = loss_and_gradients(&params, &batch, config)?;
            if !report.loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    value: report.loss,
                });
            }
            let weight = chunk.len() as f64;
            loss_sum += report.loss * weight;
            mse_sum += report.mse * weight;
            mae_sum += report.mae * weight;
            adam_update(&mut params, &grads, &mut state, config)?;
        }
        let count = pairs.len() as f64;
        let (val_mse, val_mae) = if val.is_empty() {
            (None, None)
        } else {
            let r = evaluate_loss(&params, val, config)?;
            (Some(r.mse), Some(r.mae))
        };
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / count,
            train_mse: mse_sum / count,
            train_mae: mae_sum / count,
            val_mse,
            val_mae,
        };
        log::debug!(
            "epoch {epoch}: loss {:.5} mse {:.5} mae {:.5} val_mse {:?}",
            stats.train_loss,
            stats.train_mse,
            stats.train_mae,
            stats.val_mse
        );
        on_epoch(&stats);
        history.push(stats);
    }
    Ok((params, history))
}
