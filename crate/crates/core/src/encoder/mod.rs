//! Attention encoder that learns to draw envelopes through signal peaks.

pub mod adam;
pub mod attention;
pub mod config;
pub mod encoding;
pub mod model;
pub mod params;
pub mod train;
pub mod weights;

pub use adam::{adam_update, AdamState};
pub use config::{Activation, EncoderConfig};
pub use encoding::{encode_window, orient, Normalization, TrainingPair};
pub use model::{evaluate_loss, gradient_check, loss_and_gradients, model_forward, LossReport};
pub use params::{init_model, Layout, ModelParams, TensorSpec};
pub use train::{train, train_with_progress, EpochStats};
pub use weights::{load_weights, save_weights, weights_from_str, weights_to_string};

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{Envelope, Polarity, TimeSeries};

/// A trained model together with the configuration it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedInterpolator {
    params: ModelParams,
    config: EncoderConfig,
}

impl LearnedInterpolator {
    pub fn new(params: ModelParams, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        params.check_layout(&config)?;
        if !params.all_finite() {
            return Err(Error::InvalidParameter("model weights contain non-finite values".into()));
        }
        Ok(Self { params, config })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, config) = load_weights(path)?;
        Self::new(params, config)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn window_len(&self) -> usize {
        self.config.window_len
    }

    pub fn envelope(&self, samples: &[f64], polarity: Polarity) -> Result<Envelope> {
        predict_samples(&self.params, &self.config, samples, polarity)
    }
}

/// Envelope of `window` for one polarity, in the window's own units.
pub fn predict_envelope(
    params: &ModelParams,
    config: &EncoderConfig,
    window: &TimeSeries,
    polarity: Polarity,
) -> Result<Envelope> {
    predict_samples(params, config, window.samples(), polarity)
}

fn predict_samples(
    params: &ModelParams,
    config: &EncoderConfig,
    samples: &[f64],
    polarity: Polarity,
) -> Result<Envelope> {
    if samples.len() != config.window_len {
        return Err(Error::LengthMismatch {
            expected: config.window_len,
            found: samples.len(),
        });
    }
    let (input, norm) = encode_window(samples, polarity)?;
    let out = model_forward(&input, params, config)?;
    let sign = if polarity == Polarity::Lower { -1.0 } else { 1.0 };
    Ok(Envelope {
        values: out.iter().map(|&v| sign * norm.invert(v)).collect(),
        polarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> LearnedInterpolator {
        let config = EncoderConfig::tiny(16, 2, 4);
        let params = init_model(&config, 4).unwrap();
        LearnedInterpolator::new(params, config).unwrap()
    }

    #[test]
    fn output_has_window_length() {
        let m = model();
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 1.1).sin()).collect();
        let ts = TimeSeries::new(x, 250.0).unwrap();
        for polarity in [Polarity::Upper, Polarity::Lower] {
            let env = predict_envelope(m.params(), m.config(), &ts, polarity).unwrap();
            assert_eq!(env.len(), 16);
            assert_eq!(env.polarity, polarity);
        }
    }

    #[test]
    fn wrong_window_length() {
        let m = model();
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        assert!(matches!(
            m.envelope(&x, Polarity::Upper),
            Err(Error::LengthMismatch { expected: 16, found: 20 })
        ));
    }

    #[test]
    fn lower_envelope_is_negated_upper_of_negated_window() {
        let m = model();
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.8).sin() + 0.1 * i as f64).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let lower = m.envelope(&x, Polarity::Lower).unwrap();
        let upper = m.envelope(&neg, Polarity::Upper).unwrap();
        for (a, b) in lower.values.iter().zip(&upper.values) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn save_load_predict_is_bitwise() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        save_weights(m.params(), m.config(), &path).unwrap();
        let back = LearnedInterpolator::load(&path).unwrap();
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 1.3).cos() * 2.0).collect();
        let a = m.envelope(&x, Polarity::Upper).unwrap();
        let b = back.envelope(&x, Polarity::Upper).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_mismatched_params() {
        let config = EncoderConfig::tiny(16, 2, 4);
        let other = init_model(&EncoderConfig::tiny(16, 1, 4), 1).unwrap();
        assert!(LearnedInterpolator::new(other, config).is_err());
    }
}
