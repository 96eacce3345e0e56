use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the learned envelope interpolator.
///
/// The layer widths reproduce the reference architecture; `num_heads` and
/// `key_dim` were never published and default to 4 and 32.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Samples per window; also the width of the final dense layer.
    pub window_len: usize,
    pub num_heads: usize,
    pub key_dim: usize,
    /// Masked peak values plus the binary peak mask.
    pub input_channels: usize,
    pub bottleneck_units: usize,
    /// Widths of the five dense layers after the bottleneck.
    pub stack_units: [usize; 5],
    /// L2 penalty on the bottleneck kernel.
    pub l2_coeff: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            window_len: 800,
            num_heads: 4,
            key_dim: 32,
            input_channels: 2,
            bottleneck_units: 10,
            stack_units: [800, 400, 200, 100, 800],
            l2_coeff: 0.01,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            epochs: 50,
            batch_size: 16,
            seed: 42,
        }
    }
}

/// Activation applied after each layer of the dense stack. Only the fourth
/// layer (100 units by default) is linear.
pub const STACK_ACTIVATIONS: [Activation; 5] = [
    Activation::Elu,
    Activation::Elu,
    Activation::Elu,
    Activation::Identity,
    Activation::Elu,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Elu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Elu => {
                if z >= 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Elu => {
                if z >= 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
        }
    }
}

impl EncoderConfig {
    /// A scaled-down model for tests and gradient checks.
    pub fn tiny(window_len: usize, num_heads: usize, key_dim: usize) -> Self {
        Self {
            window_len,
            num_heads,
            key_dim,
            bottleneck_units: 5,
            stack_units: [12, 10, 8, 6, window_len],
            epochs: 10,
            batch_size: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("window_len", self.window_len),
            ("num_heads", self.num_heads),
            ("key_dim", self.key_dim),
            ("bottleneck_units", self.bottleneck_units),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
            }
        }
        if self.stack_units.contains(&0) {
            return Err(Error::InvalidParameter("stack widths must be at least 1".into()));
        }
        if self.input_channels != 2 {
            return Err(Error::InvalidParameter(format!(
                "input_channels must be 2, got {}",
                self.input_channels
            )));
        }
        if self.stack_units[4] != self.window_len {
            return Err(Error::InvalidParameter(format!(
                "final stack width {} must equal window_len {}",
                self.stack_units[4], self.window_len
            )));
        }
        if !(self.l2_coeff >= 0.0 && self.l2_coeff.is_finite()) {
            return Err(Error::InvalidParameter("l2_coeff must be finite and >= 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning_rate must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Input and output widths of the six dense layers, bottleneck first.
    pub fn dense_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.window_len * self.input_channels, self.bottleneck_units)];
        let mut fan_in = self.bottleneck_units;
        for &units in &self.stack_units {
            shapes.push((fan_in, units));
            fan_in = units;
        }
        shapes
    }

    /// Activation of dense layer `layer` (0 is the bottleneck).
    pub fn activation(&self, layer: usize) -> Activation {
        if layer == 0 {
            Activation::Identity
        } else {
            STACK_ACTIVATIONS[layer - 1]
        }
    }
}
