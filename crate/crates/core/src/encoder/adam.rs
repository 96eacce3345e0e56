use super::config::EncoderConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step, in place.
pub fn adam_update(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    config: &EncoderConfig,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape(format!(
            "adam: params {n}, grads {}, moments {}/{}",
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    state.t += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let t = state.t as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let eps = config.epsilon;
    for (((theta, &g), m), v) in params
        .as_mut_slice()
        .iter_mut()
        .zip(grads.as_slice())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *theta -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::params::init_model;

    fn scalar_config() -> EncoderConfig {
        EncoderConfig::tiny(4, 1, 1)
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let config = EncoderConfig::tiny(8, 1, 2);
        let mut params = init_model(&config, 1).unwrap();
        let before = params.clone();
        let mut grads = params.zeros_like();
        for (i, g) in grads.as_mut_slice().iter_mut().enumerate() {
            *g = if i % 2 == 0 { 1e-3 * (1.0 + i as f64) } else { -0.5 };
        }
        let mut state = AdamState::new(&params);
        adam_update(&mut params, &grads, &mut state, &config).unwrap();
        for ((a, b), g) in params.as_slice().iter().zip(before.as_slice()).zip(grads.as_slice()) {
            let step = b - a;
            assert!(((step.abs() - config.learning_rate) / config.learning_rate).abs() < 1e-3);
            assert_eq!(step.signum(), g.signum());
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let config = scalar_config();
        let mut params = init_model(&config, 2).unwrap();
        let before = params.clone();
        let grads = params.zeros_like();
        let mut state = AdamState::new(&params);
        adam_update(&mut params, &grads, &mut state, &config).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn three_steps_match_hand_recurrence() {
        let config = scalar_config();
        let mut params = init_model(&config, 3).unwrap();
        let theta0 = params.as_slice()[0];
        let mut state = AdamState::new(&params);
        let gs = [0.5, -0.2, 0.1];
        for g in gs {
            let mut grads = params.zeros_like();
            grads.as_mut_slice()[0] = g;
            adam_update(&mut params, &grads, &mut state, &config).unwrap();
        }
        // m1 = 0.05, v1 = 0.00025; m2 = 0.025, v2 = 0.00028975;
        // m3 = 0.0325, v3 = 0.00029946025.
        let lr = 1e-3;
        let eps = 1e-7;
        let s1 = lr * (0.05 / 0.1) / ((0.00025f64 / 0.001).sqrt() + eps);
        let s2 = lr * (0.025 / 0.19) / ((0.00028975f64 / (1.0 - 0.999f64.powi(2))).sqrt() + eps);
        let s3 = lr * (0.0325 / 0.271) / ((0.00029946025f64 / (1.0 - 0.999f64.powi(3))).sqrt() + eps);
        let expected = theta0 - s1 - s2 - s3;
        assert!((params.as_slice()[0] - expected).abs() < 1e-12);
        assert!(state.v.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn mismatched_shapes() {
        let config = scalar_config();
        let mut params = init_model(&config, 3).unwrap();
        let other = init_model(&EncoderConfig::tiny(8, 1, 1), 3).unwrap();
        let mut state = AdamState::new(&params);
        assert!(matches!(
            adam_update(&mut params, &other, &mut state, &config),
            Err(Error::Shape(_))
        ));
    }
}
