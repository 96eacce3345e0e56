//! Two-channel peak encoding shared by training-pair construction and
//! inference.
//!
//! A window is first oriented (negated for the lower envelope) so the model
//! always sees maxima. It is then mapped to zero mean and unit RMS. The
//! mapping is computed from the observed window only, so inference can undo it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{extrema_of, Polarity};

/// Per-window affine map `normalized = (value - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: f64,
    pub scale: f64,
}

impl Normalization {
    /// Mean and RMS deviation of `samples`; a zero RMS maps to scale 1.
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let shift = samples.iter().sum::<f64>() / n;
        let rms = (samples.iter().map(|v| (v - shift).powi(2)).sum::<f64>() / n).sqrt();
        let scale = if rms > 0.0 && rms.is_finite() { rms } else { 1.0 };
        Self { shift, scale }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }

    pub fn invert(&self, v: f64) -> f64 {
        self.shift + self.scale * v
    }
}

/// One supervised example for the learned interpolator.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    /// `window_len × 2`, row-major: channel 0 holds the normalized value at
    /// each peak (0 elsewhere), channel 1 is the peak mask.
    pub input: Vec<f64>,
    /// Normalized target envelope, one value per sample.
    pub target: Vec<f64>,
    pub normalization: Normalization,
    pub polarity: Polarity,
}

/// Flip a lower-polarity window so its minima become maxima.
pub fn orient(samples: &[f64], polarity: Polarity) -> Result<Vec<f64>> {
    match polarity {
        Polarity::Upper => Ok(samples.to_vec()),
        Polarity::Lower => Ok(samples.iter().map(|v| -v).collect()),
        Polarity::Mean => Err(Error::InvalidParameter(
            "peak encoding needs upper or lower polarity".into(),
        )),
    }
}

/// Encode the peaks of `samples` for the requested polarity.
///
/// Adding a constant to the window leaves the encoded input unchanged (up to
/// rounding): the shift absorbs it.
pub fn encode_window(samples: &[f64], polarity: Polarity) -> Result<(Vec<f64>, Normalization)> {
    let oriented = orient(samples, polarity)?;
    let (maxima, minima) = extrema_of(&oriented);
    if maxima.len() < 2 {
        return Err(Error::InsufficientExtrema {
            needed: 2,
            maxima: maxima.len(),
            minima: minima.len(),
        });
    }
    let norm = Normalization::of(&oriented);
    let mut input = vec![0.0; oriented.len() * 2];
    for (&i, &v) in maxima.indices.iter().zip(&maxima.values) {
        let i = i as usize;
        input[2 * i] = norm.apply(v);
        input[2 * i + 1] = 1.0;
    }
    Ok((input, norm))
}
