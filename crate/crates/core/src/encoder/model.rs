//! Full forward pass, reverse-mode gradients and the training loss.

use rayon::prelude::*;

use super::attention::{attention_backward, attention_forward, AttentionCache};
use super::config::EncoderConfig;
use super::encoding::TrainingPair;
use super::params::ModelParams;
use crate::error::{Error, Result};

struct ForwardCache {
    attention: AttentionCache,
    /// Input to each dense layer; entry 0 is the flattened attention output.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each dense layer.
    pre: Vec<Vec<f64>>,
}

fn forward_cached(
    input: &[f64],
    params: &ModelParams,
    config: &EncoderConfig,
) -> Result<(Vec<f64>, ForwardCache)> {
    let (flat, attention) = attention_forward(input, params, config)?;
    let layout = params.layout();
    let mut inputs = Vec::with_capacity(layout.dense_layers());
    let mut pre = Vec::with_capacity(layout.dense_layers());
    let mut a = flat;
    for layer in 0..layout.dense_layers() {
        let kernel_spec = layout.kernel(layer);
        let (fan_in, fan_out) = (kernel_spec.shape[0], kernel_spec.shape[1]);
        let kernel = params.tensor(kernel_spec);
        let mut z = params.tensor(layout.bias(layer)).to_vec();
        debug_assert_eq!(a.len(), fan_in);
        for (i, &ai) in a.iter().enumerate() {
            let row = &kernel[i * fan_out..(i + 1) * fan_out];
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += ai * w;
            }
        }
        let act = config.activation(layer);
        let next: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
        inputs.push(a);
        pre.push(z);
        a = next;
    }
    Ok((
        a,
        ForwardCache {
            attention,
            inputs,
            pre,
        },
    ))
}

/// attention → flatten → Dense(10) → Dense(800, ELU) → Dense(400, ELU) →
/// Dense(200, ELU) → Dense(100) → Dense(800, ELU), for the default widths.
pub fn model_forward(input: &[f64], params: &ModelParams, config: &EncoderConfig) -> Result<Vec<f64>> {
    params.check_layout(config)?;
    forward_cached(input, params, config).map(|(out, _)| out)
}

fn backward(
    d_pred: &[f64],
    cache: &ForwardCache,
    params: &ModelParams,
    config: &EncoderConfig,
    grads: &mut ModelParams,
) {
    let layout = params.layout().clone();
    let mut da = d_pred.to_vec();
    for layer in (0..layout.dense_layers()).rev() {
        let act = config.activation(layer);
        let dz: Vec<f64> = da
            .iter()
            .zip(&cache.pre[layer])
            .map(|(g, &z)| g * act.derivative(z))
            .collect();
        let kernel_spec = layout.kernel(layer);
        let fan_out = kernel_spec.shape[1];
        let a_prev = &cache.inputs[layer];
        {
            let gk = grads.tensor_mut(kernel_spec);
            for (i, &ai) in a_prev.iter().enumerate() {
                let row = &mut gk[i * fan_out..(i + 1) * fan_out];
                for (g, d) in row.iter_mut().zip(&dz) {
                    *g += ai * d;
                }
            }
        }
        for (g, d) in grads.tensor_mut(layout.bias(layer)).iter_mut().zip(&dz) {
            *g += d;
        }
        let kernel = params.tensor(kernel_spec);
        da = (0..a_prev.len())
            .map(|i| {
                kernel[i * fan_out..(i + 1) * fan_out]
                    .iter()
                    .zip(&dz)
                    .map(|(w, d)| w * d)
                    .sum()
            })
            .collect();
    }
    attention_backward(&da, &cache.attention, params, config, grads);
}

/// Batch loss split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    /// `mse + l2_coeff · Σ bottleneck_kernel²`.
    pub loss: f64,
    pub mse: f64,
    pub mae: f64,
}

struct SampleTerms {
    sse: f64,
    sae: f64,
    grads: Option<ModelParams>,
}

fn sample_terms(
    pair: &TrainingPair,
    params: &ModelParams,
    config: &EncoderConfig,
    with_grads: bool,
) -> Result<SampleTerms> {
    if pair.target.len() != config.window_len {
        return Err(Error::Shape(format!(
            "target has {} values, expected {}",
            pair.target.len(),
            config.window_len
        )));
    }
    let (pred, cache) = forward_cached(&pair.input, params, config)?;
    let mut sse = 0.0;
    let mut sae = 0.0;
    let mut d_pred = vec![0.0; pred.len()];
    for ((p, t), g) in pred.iter().zip(&pair.target).zip(d_pred.iter_mut()) {
        let e = p - t;
        sse += e * e;
        sae += e.abs();
        *g = 2.0 * e;
    }
    let grads = with_grads.then(|| {
        let mut g = params.zeros_like();
        backward(&d_pred, &cache, params, config, &mut g);
        g
    });
    Ok(SampleTerms { sse, sae, grads })
}

fn l2_penalty(params: &ModelParams, config: &EncoderConfig) -> f64 {
    let kernel = params.tensor(params.layout().kernel(0));
    config.l2_coeff * kernel.iter().map(|w| w * w).sum::<f64>()
}

/// Per-sample terms evaluated in parallel, then reduced in batch order so the
/// result does not depend on the thread count.
fn batch_terms(
    params: &ModelParams,
    batch: &[TrainingPair],
    config: &EncoderConfig,
    with_grads: bool,
) -> Result<(LossReport, Option<ModelParams>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    params.check_layout(config)?;
    let terms: Vec<SampleTerms> = batch
        .par_iter()
        .map(|pair| sample_terms(pair, params, config, with_grads))
        .collect::<Result<_>>()?;
    let count = (batch.len() * config.window_len) as f64;
    let mut sse = 0.0;
    let mut sae = 0.0;
    let mut grads = with_grads.then(|| params.zeros_like());
    for t in &terms {
        sse += t.sse;
        sae += t.sae;
        if let (Some(acc), Some(g)) = (grads.as_mut(), t.grads.as_ref()) {
            acc.add_scaled(g, 1.0);
        }
    }
    let mse = sse / count;
    let mae = sae / count;
    let loss = mse + l2_penalty(params, config);
    if let Some(acc) = grads.as_mut() {
        for v in acc.as_mut_slice() {
            *v /= count;
        }
        let spec = params.layout().kernel(0).clone();
        let kernel = params.tensor(&spec).to_vec();
        for (g, w) in acc.tensor_mut(&spec).iter_mut().zip(kernel) {
            *g += 2.0 * config.l2_coeff * w;
        }
    }
    Ok((LossReport { loss, mse, mae }, grads))
}

/// Loss over a batch and its gradient with respect to every parameter.
pub fn loss_and_gradients(
    params: &ModelParams,
    batch: &[TrainingPair],
    config: &EncoderConfig,
) -> Result<(LossReport, ModelParams)> {
    let (report, grads) = batch_terms(params, batch, config, true)?;
    Ok((report, grads.expect("gradients requested")))
}

/// Forward-only loss over a batch.
pub fn evaluate_loss(
    params: &ModelParams,
    batch: &[TrainingPair],
    config: &EncoderConfig,
) -> Result<LossReport> {
    batch_terms(params, batch, config, false).map(|(r, _)| r)
}

/// Largest relative discrepancy between analytic gradients and central
/// differences of the full loss, over every parameter. Denominators are
/// floored at `1e-8`.
pub fn gradient_check(
    params: &ModelParams,
    pair: &TrainingPair,
    config: &EncoderConfig,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("finite-difference step must be positive".into()));
    }
    let batch = std::slice::from_ref(pair);
    let (_, analytic) = loss_and_gradients(params, batch, config)?;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = params.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let plus = evaluate_loss(&probe, batch, config)?.loss;
        probe.as_mut_slice()[i] = orig - h;
        let minus = evaluate_loss(&probe, batch, config)?.loss;
        probe.as_mut_slice()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.as_slice()[i];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::params::init_model;
    use crate::signal::Polarity;
    use crate::encoder::encoding::Normalization;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pair(rng: &mut ChaCha8Rng, n: usize, density: f64) -> TrainingPair {
        let mut input = vec![0.0; 2 * n];
        for t in 0..n {
            if rng.random::<f64>() < density {
                input[2 * t] = rng.random_range(-2.0..2.0);
                input[2 * t + 1] = 1.0;
            }
        }
        TrainingPair {
            input,
            target: (0..n).map(|_| rng.random_range(-0.5..1.5)).collect(),
            normalization: Normalization { shift: 0.0, scale: 1.0 },
            polarity: Polarity::Upper,
        }
    }

    #[test]
    fn zero_input_zero_biases_gives_zero_output() {
        let config = EncoderConfig::default();
        let params = init_model(&config, 3).unwrap();
        let out = model_forward(&vec![0.0; 1600], &params, &config).unwrap();
        assert_eq!(out.len(), 800);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_gradient() {
        let mut config = EncoderConfig::tiny(8, 1, 2);
        config.l2_coeff = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = init_model(&config, 4).unwrap();
        let mut pair = random_pair(&mut rng, 8, 0.5);
        pair.target = model_forward(&pair.input, &params, &config).unwrap();
        let (report, grads) = loss_and_gradients(&params, &[pair], &config).unwrap();
        assert_eq!(report.mse, 0.0);
        assert_eq!(report.mae, 0.0);
        assert!(grads.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn penalty_gradient_alone_at_zero_fixed_point() {
        let config = EncoderConfig::tiny(8, 2, 2);
        let params = init_model(&config, 5).unwrap();
        let pair = TrainingPair {
            input: vec![0.0; 16],
            target: vec![0.0; 8],
            normalization: Normalization { shift: 0.0, scale: 1.0 },
            polarity: Polarity::Upper,
        };
        let (_, grads) = loss_and_gradients(&params, &[pair], &config).unwrap();
        let spec = params.layout().kernel(0);
        for (g, w) in grads.tensor(spec).iter().zip(params.tensor(spec)) {
            assert_eq!(*g, 2.0 * config.l2_coeff * w);
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let config = EncoderConfig::tiny(8, 1, 2);
        let params = init_model(&config, 0).unwrap();
        assert!(matches!(
            loss_and_gradients(&params, &[], &config),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let config = EncoderConfig::tiny(16, 2, 4);
        for _ in 0..3 {
            let params = init_model(&config, rng.random()).unwrap();
            let pair = random_pair(&mut rng, 16, 0.4);
            let err = gradient_check(&params, &pair, &config, 1e-5).unwrap();
            assert!(err <= 1e-4, "max relative error {err}");
        }
    }

    #[test]
    fn zero_loss_gradient_check_is_small() {
        let mut config = EncoderConfig::tiny(8, 1, 2);
        config.l2_coeff = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = init_model(&config, 12).unwrap();
        let mut pair = random_pair(&mut rng, 8, 0.5);
        pair.target = model_forward(&pair.input, &params, &config).unwrap();
        // Both gradients vanish; the residual is the O(h) curvature term
        // relative to the 1e-8 floor.
        let err = gradient_check(&params, &pair, &config, 1e-5).unwrap();
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn mae_never_exceeds_root_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let config = EncoderConfig::tiny(16, 2, 4);
        let params = init_model(&config, 13).unwrap();
        let batch: Vec<TrainingPair> = (0..5).map(|_| random_pair(&mut rng, 16, 0.3)).collect();
        let r = evaluate_loss(&params, &batch, &config).unwrap();
        assert!(r.mae <= r.mse.sqrt() + 1e-15);
        assert!(r.loss >= r.mse);
    }
}
