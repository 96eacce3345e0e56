//! Multi-head scaled dot-product self-attention over a `window_len × channels`
//! sequence, with no projection biases.
//!
//! Because the sequence has only `channels` features, each head's score
//! matrix `x Wq (x Wk)ᵀ / √d` equals `x A xᵀ` with the `channels × channels`
//! matrix `A = Wq Wkᵀ / √d`, and the head's contribution to the projected
//! output equals `softmax(·) x B` with `B = Wv Wo_h`. Both products are
//! contracted first. Tokens whose feature row is all zero (sample positions
//! without a peak) score exactly 0 against every query and carry a zero
//! value vector, so they are folded into one shared softmax term; all zero
//! query rows share one probability row. The result is the standard layer,
//! evaluated in `O(k²)` per head for `k` non-zero tokens.

use super::config::EncoderConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct HeadCache {
    /// `channels × channels` value/output product `Wv Wo_h`.
    b: Vec<f64>,
    /// Row `q` holds the probabilities of the active keys for distinct query `q`.
    probs: Vec<f64>,
    /// Probability assigned to each zero key, per distinct query.
    zero_prob: Vec<f64>,
    /// `Σ_j P[q][j] x_j` per distinct query.
    y: Vec<f64>,
}

/// Intermediate values retained for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    n: usize,
    channels: usize,
    active: Vec<usize>,
    query_of: Vec<usize>,
    active_x: Vec<f64>,
    has_zero_rows: bool,
    heads: Vec<HeadCache>,
}

impl AttentionCache {
    fn distinct_queries(&self) -> usize {
        self.active.len() + usize::from(self.has_zero_rows)
    }

    fn query_features(&self, q: usize) -> Option<&[f64]> {
        let c = self.channels;
        (q < self.active.len()).then(|| &self.active_x[q * c..(q + 1) * c])
    }

    /// Full softmax row of `token` for `head`, one probability per token.
    pub fn probability_row(&self, head: usize, token: usize) -> Vec<f64> {
        let hc = &self.heads[head];
        let q = self.query_of[token];
        let k = self.active.len();
        let mut row = vec![hc.zero_prob[q]; self.n];
        for (j, &t) in self.active.iter().enumerate() {
            row[t] = hc.probs[q * k + j];
        }
        row
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }
}

/// `out = x · m` for a `c`-vector `x` and a row-major `c × c` matrix `m`.
#[inline]
fn vec_mat(x: &[f64], m: &[f64], c: usize, out: &mut [f64]) {
    for b in 0..c {
        out[b] = (0..c).map(|a| x[a] * m[a * c + b]).sum();
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn head_forms(params: &ModelParams, config: &EncoderConfig, head: usize) -> (Vec<f64>, Vec<f64>) {
    let c = config.input_channels;
    let d = config.key_dim;
    let layout = params.layout();
    let wq = params.tensor(layout.query(head));
    let wk = params.tensor(layout.key(head));
    let wv = params.tensor(layout.value(head));
    let wo = &params.tensor(layout.output())[head * d * c..(head + 1) * d * c];
    let scale = 1.0 / (d as f64).sqrt();
    let mut a = vec![0.0; c * c];
    let mut b = vec![0.0; c * c];
    for r in 0..c {
        for s in 0..c {
            a[r * c + s] = scale * (0..d).map(|e| wq[r * d + e] * wk[s * d + e]).sum::<f64>();
            b[r * c + s] = (0..d).map(|e| wv[r * d + e] * wo[e * c + s]).sum::<f64>();
        }
    }
    (a, b)
}

/// Self-attention output (`n × channels`, row-major) and its cache.
pub fn attention_forward(
    x: &[f64],
    params: &ModelParams,
    config: &EncoderConfig,
) -> Result<(Vec<f64>, AttentionCache)> {
    let n = config.window_len;
    let c = config.input_channels;
    if x.len() != n * c {
        return Err(Error::Shape(format!(
            "attention input has {} values, expected {n}×{c}",
            x.len()
        )));
    }
    let mut active = Vec::new();
    let mut active_x = Vec::new();
    let mut query_of = vec![usize::MAX; n];
    for t in 0..n {
        let row = &x[t * c..(t + 1) * c];
        if row.iter().any(|&v| v != 0.0) {
            query_of[t] = active.len();
            active.push(t);
            active_x.extend_from_slice(row);
        }
    }
    let k = active.len();
    let zeros = n - k;
    for q in query_of.iter_mut().filter(|q| **q == usize::MAX) {
        *q = k;
    }
    let mut cache = AttentionCache {
        n,
        channels: c,
        active,
        query_of,
        active_x,
        has_zero_rows: zeros > 0,
        heads: Vec::with_capacity(config.num_heads),
    };
    let queries = cache.distinct_queries();
    let zero_row = vec![0.0; c];
    let mut combined = vec![0.0; queries * c];
    let mut u = vec![0.0; c];
    let mut scores = vec![0.0; k];
    for head in 0..config.num_heads {
        let (a, b) = head_forms(params, config, head);
        let mut probs = vec![0.0; queries * k];
        let mut zero_prob = vec![0.0; queries];
        let mut y = vec![0.0; queries * c];
        for q in 0..queries {
            let xq = cache.query_features(q).unwrap_or(&zero_row);
            vec_mat(xq, &a, c, &mut u);
            let mut max = if zeros > 0 { 0.0 } else { f64::NEG_INFINITY };
            for j in 0..k {
                scores[j] = dot(&u, &cache.active_x[j * c..(j + 1) * c]);
                max = max.max(scores[j]);
            }
            let zero_weight = (-max).exp();
            let mut total = zeros as f64 * zero_weight;
            let row = &mut probs[q * k..(q + 1) * k];
            for j in 0..k {
                row[j] = (scores[j] - max).exp();
                total += row[j];
            }
            let inv = 1.0 / total;
            for p in row.iter_mut() {
                *p *= inv;
            }
            zero_prob[q] = if zeros > 0 { zero_weight * inv } else { 0.0 };
            let yq = &mut y[q * c..(q + 1) * c];
            for j in 0..k {
                let p = row[j];
                for (ya, xa) in yq.iter_mut().zip(&cache.active_x[j * c..(j + 1) * c]) {
                    *ya += p * xa;
                }
            }
            vec_mat(yq, &b, c, &mut u);
            for (o, v) in combined[q * c..(q + 1) * c].iter_mut().zip(&u) {
                *o += v;
            }
        }
        cache.heads.push(HeadCache {
            b,
            probs,
            zero_prob,
            y,
        });
    }
    let mut out = vec![0.0; n * c];
    for t in 0..n {
        let q = cache.query_of[t];
        out[t * c..(t + 1) * c].copy_from_slice(&combined[q * c..(q + 1) * c]);
    }
    Ok((out, cache))
}

/// Accumulates parameter gradients of the attention block into `grads`
/// given the loss gradient `d_out` with respect to its output.
pub fn attention_backward(
    d_out: &[f64],
    cache: &AttentionCache,
    params: &ModelParams,
    config: &EncoderConfig,
    grads: &mut ModelParams,
) {
    let c = cache.channels;
    let d = config.key_dim;
    let k = cache.active.len();
    let queries = cache.distinct_queries();
    let mut g = vec![0.0; queries * c];
    for t in 0..cache.n {
        let q = cache.query_of[t];
        for (acc, v) in g[q * c..(q + 1) * c].iter_mut().zip(&d_out[t * c..(t + 1) * c]) {
            *acc += v;
        }
    }
    let scale = 1.0 / (d as f64).sqrt();
    let layout = params.layout().clone();
    let mut dy = vec![0.0; c];
    let mut dp = vec![0.0; k];
    let mut w = vec![0.0; c];
    for (head, hc) in cache.heads.iter().enumerate() {
        let mut da = vec![0.0; c * c];
        let mut db = vec![0.0; c * c];
        for q in 0..queries {
            let gq = &g[q * c..(q + 1) * c];
            let yq = &hc.y[q * c..(q + 1) * c];
            for r in 0..c {
                for s in 0..c {
                    db[r * c + s] += yq[r] * gq[s];
                }
            }
            // Zero query rows have zero features and add nothing to dA.
            let Some(xq) = cache.query_features(q) else {
                continue;
            };
            for r in 0..c {
                dy[r] = dot(&hc.b[r * c..(r + 1) * c], gq);
            }
            let row = &hc.probs[q * k..(q + 1) * k];
            let mut weighted = 0.0;
            for j in 0..k {
                dp[j] = dot(&dy, &cache.active_x[j * c..(j + 1) * c]);
                weighted += row[j] * dp[j];
            }
            w.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..k {
                let ds = row[j] * (dp[j] - weighted);
                for (wa, xa) in w.iter_mut().zip(&cache.active_x[j * c..(j + 1) * c]) {
                    *wa += ds * xa;
                }
            }
            for r in 0..c {
                for s in 0..c {
                    da[r * c + s] += xq[r] * w[s];
                }
            }
        }
        let wq = params.tensor(layout.query(head)).to_vec();
        let wk = params.tensor(layout.key(head)).to_vec();
        let wv = params.tensor(layout.value(head)).to_vec();
        let wo_all = params.tensor(layout.output());
        let wo = wo_all[head * d * c..(head + 1) * d * c].to_vec();

        let gq = grads.tensor_mut(layout.query(head));
        for r in 0..c {
            for e in 0..d {
                gq[r * d + e] += scale * (0..c).map(|s| da[r * c + s] * wk[s * d + e]).sum::<f64>();
            }
        }
        let gk = grads.tensor_mut(layout.key(head));
        for s in 0..c {
            for e in 0..d {
                gk[s * d + e] += scale * (0..c).map(|r| da[r * c + s] * wq[r * d + e]).sum::<f64>();
            }
        }
        let gv = grads.tensor_mut(layout.value(head));
        for r in 0..c {
            for e in 0..d {
                gv[r * d + e] += (0..c).map(|s| db[r * c + s] * wo[e * c + s]).sum::<f64>();
            }
        }
        let go = &mut grads.tensor_mut(layout.output())[head * d * c..(head + 1) * d * c];
        for e in 0..d {
            for s in 0..c {
                go[e * c + s] += (0..c).map(|r| wv[r * d + e] * db[r * c + s]).sum::<f64>();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::params::init_model;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook evaluation: explicit Q, K, V, n×n scores, concatenated heads
    /// and output projection.
    fn dense_reference(x: &[f64], params: &ModelParams, config: &EncoderConfig) -> (Vec<f64>, Vec<Vec<Vec<f64>>>) {
        let n = config.window_len;
        let c = config.input_channels;
        let d = config.key_dim;
        let h_count = config.num_heads;
        let layout = params.layout();
        let mut concat = vec![vec![0.0; h_count * d]; n];
        let mut all_probs = Vec::new();
        for h in 0..h_count {
            let proj = |w: &[f64]| -> Vec<Vec<f64>> {
                (0..n)
                    .map(|t| (0..d).map(|e| (0..c).map(|a| x[t * c + a] * w[a * d + e]).sum()).collect())
                    .collect()
            };
            let q = proj(params.tensor(layout.query(h)));
            let kk = proj(params.tensor(layout.key(h)));
            let v = proj(params.tensor(layout.value(h)));
            let mut probs = vec![vec![0.0; n]; n];
            for i in 0..n {
                let s: Vec<f64> = (0..n)
                    .map(|j| (0..d).map(|e| q[i][e] * kk[j][e]).sum::<f64>() / (d as f64).sqrt())
                    .collect();
                let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for j in 0..n {
                    probs[i][j] = e[j] / z;
                }
                for f in 0..d {
                    concat[i][h * d + f] = (0..n).map(|j| probs[i][j] * v[j][f]).sum();
                }
            }
            all_probs.push(probs);
        }
        let wo = params.tensor(layout.output());
        let mut out = vec![0.0; n * c];
        for i in 0..n {
            for b in 0..c {
                out[i * c + b] = (0..h_count * d).map(|e| concat[i][e] * wo[e * c + b]).sum();
            }
        }
        (out, all_probs)
    }

    fn sparse_input(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<f64> {
        let mut x = vec![0.0; n * 2];
        for t in 0..n {
            if rng.random::<f64>() < density {
                x[2 * t] = rng.random_range(-2.0..2.0);
                x[2 * t + 1] = 1.0;
            }
        }
        x
    }

    #[test]
    fn matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, heads, d, density) in [(16, 2, 4, 0.3), (12, 1, 3, 1.0), (10, 3, 2, 0.0), (20, 2, 5, 0.6)] {
            let config = EncoderConfig::tiny(n, heads, d);
            let params = init_model(&config, rng.random()).unwrap();
            let x = sparse_input(&mut rng, n, density);
            let (out, cache) = attention_forward(&x, &params, &config).unwrap();
            let (reference, probs) = dense_reference(&x, &params, &config);
            for (a, b) in out.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            for h in 0..heads {
                for t in 0..n {
                    let row = cache.probability_row(h, t);
                    for (p, r) in row.iter().zip(&probs[h][t]) {
                        assert!((p - r).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn dense_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let config = EncoderConfig::tiny(9, 2, 3);
        let params = init_model(&config, 3).unwrap();
        let x: Vec<f64> = (0..18).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (out, _) = attention_forward(&x, &params, &config).unwrap();
        let (reference, _) = dense_reference(&x, &params, &config);
        for (a, b) in out.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_give_projection_of_the_row() {
        let config = EncoderConfig::tiny(8, 2, 3);
        let params = init_model(&config, 4).unwrap();
        let row = [0.7, -1.3];
        let x: Vec<f64> = (0..8).flat_map(|_| row).collect();
        let (out, _) = attention_forward(&x, &params, &config).unwrap();
        // Uniform softmax: every head returns its value projection of `row`.
        let layout = params.layout();
        let (c, d) = (2, 3);
        let wo = params.tensor(layout.output());
        let mut expected = [0.0; 2];
        for h in 0..2 {
            let wv = params.tensor(layout.value(h));
            let v: Vec<f64> = (0..d).map(|e| (0..c).map(|a| row[a] * wv[a * d + e]).sum()).collect();
            for b in 0..c {
                expected[b] += (0..d).map(|e| v[e] * wo[(h * d + e) * c + b]).sum::<f64>();
            }
        }
        for t in 0..8 {
            assert!((out[2 * t] - expected[0]).abs() < 1e-12);
            assert!((out[2 * t + 1] - expected[1]).abs() < 1e-12);
            assert_eq!(out[2 * t], out[0]);
        }
    }

    #[test]
    fn two_token_scalar_case() {
        // One head, key_dim 1, hand-chosen weights.
        let mut config = EncoderConfig::tiny(2, 1, 1);
        config.stack_units = [3, 3, 3, 3, 2];
        let mut params = ModelParams::zeros(&config);
        let layout = params.layout().clone();
        params.tensor_mut(layout.query(0)).copy_from_slice(&[1.0, 0.5]);
        params.tensor_mut(layout.key(0)).copy_from_slice(&[2.0, -1.0]);
        params.tensor_mut(layout.value(0)).copy_from_slice(&[1.0, 3.0]);
        params.tensor_mut(layout.output()).copy_from_slice(&[0.5, -2.0]);
        let x = [1.0, 1.0, -0.5, 1.0];
        let (out, _) = attention_forward(&x, &params, &config).unwrap();
        // Step by step: q_t = x_t·Wq, k_t = x_t·Wk, v_t = x_t·Wv.
        let q: [f64; 2] = [1.0 + 0.5, -0.5 + 0.5];
        let k = [2.0 - 1.0, -1.0 - 1.0];
        let v = [1.0 + 3.0, -0.5 + 3.0];
        for t in 0..2 {
            let s0 = q[t] * k[0];
            let s1 = q[t] * k[1];
            let m = s0.max(s1);
            let (e0, e1) = ((s0 - m).exp(), (s1 - m).exp());
            let h = (e0 * v[0] + e1 * v[1]) / (e0 + e1);
            assert!((out[2 * t] - 0.5 * h).abs() < 1e-14);
            assert!((out[2 * t + 1] + 2.0 * h).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let config = EncoderConfig::default();
        let params = init_model(&config, 8).unwrap();
        let x = sparse_input(&mut rng, config.window_len, 0.15);
        let (_, cache) = attention_forward(&x, &params, &config).unwrap();
        for h in 0..cache.num_heads() {
            for t in (0..config.window_len).step_by(37) {
                let s: f64 = cache.probability_row(h, t).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let config = EncoderConfig::tiny(8, 1, 2);
        let params = init_model(&config, 0).unwrap();
        assert!(matches!(
            attention_forward(&[0.0; 15], &params, &config),
            Err(Error::Shape(_))
        ));
    }
}
