use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::EncoderConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    fn is_bias(&self) -> bool {
        self.shape.len() == 1
    }
}

/// Ordered tensor directory of a model: per-head query/key/value
/// projections, the attention output projection, then kernel and bias of
/// every dense layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    specs: Vec<TensorSpec>,
    num_heads: usize,
    total: usize,
}

impl Layout {
    pub fn for_config(config: &EncoderConfig) -> Self {
        let c = config.input_channels;
        let d = config.key_dim;
        let mut specs = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let spec = TensorSpec {
                name,
                shape,
                offset,
            };
            offset += spec.len();
            specs.push(spec);
        };
        for h in 0..config.num_heads {
            for role in ["query", "key", "value"] {
                push(format!("attention.head{h}.{role}"), vec![c, d]);
            }
        }
        push("attention.output".into(), vec![config.num_heads * d, c]);
        for (l, (fan_in, fan_out)) in config.dense_shapes().into_iter().enumerate() {
            push(format!("dense{l}.kernel"), vec![fan_in, fan_out]);
            push(format!("dense{l}.bias"), vec![fan_out]);
        }
        let total = offset;
        Self {
            specs,
            num_heads: config.num_heads,
            total,
        }
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn query(&self, head: usize) -> &TensorSpec {
        &self.specs[3 * head]
    }

    pub fn key(&self, head: usize) -> &TensorSpec {
        &self.specs[3 * head + 1]
    }

    pub fn value(&self, head: usize) -> &TensorSpec {
        &self.specs[3 * head + 2]
    }

    pub fn output(&self) -> &TensorSpec {
        &self.specs[3 * self.num_heads]
    }

    pub fn kernel(&self, layer: usize) -> &TensorSpec {
        &self.specs[3 * self.num_heads + 1 + 2 * layer]
    }

    pub fn bias(&self, layer: usize) -> &TensorSpec {
        &self.specs[3 * self.num_heads + 2 + 2 * layer]
    }

    pub fn dense_layers(&self) -> usize {
        (self.specs.len() - 3 * self.num_heads - 1) / 2
    }
}

/// All trainable weights in one flat buffer, addressed through [`Layout`].
/// Gradients and optimizer moments share the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layout: Layout,
    data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: &EncoderConfig) -> Self {
        Self::zeros_like_layout(Layout::for_config(config))
    }

    fn zeros_like_layout(layout: Layout) -> Self {
        let data = vec![0.0; layout.total()];
        Self { layout, data }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros_like_layout(self.layout.clone())
    }

    pub fn from_parts(layout: Layout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.total() {
            return Err(Error::Shape(format!(
                "parameter buffer has {} values, layout needs {}",
                data.len(),
                layout.total()
            )));
        }
        Ok(Self { layout, data })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, spec: &TensorSpec) -> &[f64] {
        &self.data[spec.range()]
    }

    pub fn tensor_mut(&mut self, spec: &TensorSpec) -> &mut [f64] {
        &mut self.data[spec.range()]
    }

    /// `(name, tensor)` pairs in layout order.
    pub fn named_tensors(&self) -> impl Iterator<Item = (&TensorSpec, &[f64])> {
        self.layout
            .specs()
            .iter()
            .map(move |s| (s, &self.data[s.range()]))
    }

    pub fn check_layout(&self, config: &EncoderConfig) -> Result<()> {
        let expected = Layout::for_config(config);
        if self.layout != expected {
            return Err(Error::Shape(
                "parameter layout does not match encoder configuration".into(),
            ));
        }
        Ok(())
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        debug_assert_eq!(self.layout, other.layout);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Glorot-uniform weights, zero biases, drawn in layout order from
/// `ChaCha8Rng::seed_from_u64(seed)`.
pub fn init_model(config: &EncoderConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut params = ModelParams::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = params.layout.specs().to_vec();
    for spec in &specs {
        if spec.is_bias() {
            continue;
        }
        let limit = (6.0 / (spec.shape[0] + spec.shape[1]) as f64).sqrt();
        for w in params.tensor_mut(spec) {
            *w = rng.random_range(-limit..limit);
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let c = EncoderConfig::tiny(16, 2, 4);
        let a = init_model(&c, 5).unwrap();
        let b = init_model(&c, 5).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let other = init_model(&c, 6).unwrap();
        assert_ne!(a.as_slice(), other.as_slice());
    }

    #[test]
    fn default_shapes() {
        let c = EncoderConfig::default();
        let p = init_model(&c, 1).unwrap();
        let l = p.layout();
        assert_eq!(l.query(0).shape, vec![2, 32]);
        assert_eq!(l.output().shape, vec![128, 2]);
        assert_eq!(l.kernel(0).shape, vec![1600, 10]);
        assert_eq!(l.kernel(1).shape, vec![10, 800]);
        assert_eq!(l.kernel(5).shape, vec![100, 800]);
        assert_eq!(l.bias(5).shape, vec![800]);
        assert_eq!(l.dense_layers(), 6);
        let expected = 4 * 3 * 64
            + 256
            + (1600 * 10 + 10)
            + (10 * 800 + 800)
            + (800 * 400 + 400)
            + (400 * 200 + 200)
            + (200 * 100 + 100)
            + (100 * 800 + 800);
        assert_eq!(p.len(), expected);
    }

    #[test]
    fn weights_bounded_biases_zero() {
        let c = EncoderConfig::default();
        let p = init_model(&c, 9).unwrap();
        assert!(p.all_finite());
        for (spec, values) in p.named_tensors() {
            if spec.shape.len() == 1 {
                assert!(values.iter().all(|&v| v == 0.0), "{}", spec.name);
            } else {
                let limit = (6.0 / (spec.shape[0] + spec.shape[1]) as f64).sqrt();
                assert!(values.iter().all(|v| v.abs() <= limit), "{}", spec.name);
            }
        }
    }
}
