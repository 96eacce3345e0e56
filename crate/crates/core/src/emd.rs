//! Sifting, full decomposition, and the two envelope-based denoisers.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::LearnedInterpolator;
use crate::error::{Error, Result};
use crate::signal::{
    extend_boundaries, extrema_of, interpolate_cubic_spline, interpolate_linear,
    mean_of_envelopes, Envelope, ExtremaSet, Polarity, TimeSeries, Windowing,
};

/// Extrema mirrored past each end before classical interpolation.
pub const N_MIRROR: usize = 2;

/// How envelopes are drawn through the extrema.
#[derive(Clone)]
pub enum InterpolatorKind {
    Linear,
    CubicSpline,
    Learned(Arc<LearnedInterpolator>),
}

impl InterpolatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::CubicSpline => "spline",
            Self::Learned(_) => "learned",
        }
    }

    pub fn is_classical(&self) -> bool {
        !matches!(self, Self::Learned(_))
    }
}

impl fmt::Debug for InterpolatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Learned(m) => write!(f, "Learned(window_len={})", m.window_len()),
            other => f.write_str(other.name()),
        }
    }
}

/// Sifting and decomposition limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmdParams {
    pub sd_threshold: f64,
    pub max_sift: usize,
    pub max_imfs: usize,
    /// Also require [`has_imf_shape`] before accepting an IMF.
    pub require_imf_shape: bool,
}

impl Default for EmdParams {
    fn default() -> Self {
        Self {
            sd_threshold: 0.2,
            max_sift: 50,
            max_imfs: 10,
            require_imf_shape: true,
        }
    }
}

impl EmdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sd_threshold > 0.0) || !self.sd_threshold.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sd_threshold must be positive, got {}",
                self.sd_threshold
            )));
        }
        if self.max_sift == 0 {
            return Err(Error::InvalidParameter("max_sift must be at least 1".into()));
        }
        Ok(())
    }
}

/// Output of [`decompose`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmdResult {
    pub imfs: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
    pub meta: EmdMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmdMeta {
    pub interpolator: String,
    /// Sifting passes spent on each IMF.
    pub iterations: Vec<usize>,
}

impl EmdResult {
    /// `Σ imfs + residual`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residual.clone();
        for imf in &self.imfs {
            for (o, v) in out.iter_mut().zip(imf) {
                *o += v;
            }
        }
        out
    }
}

fn require_extrema(maxima: &ExtremaSet, minima: &ExtremaSet) -> Result<()> {
    if maxima.len() < 2 || minima.len() < 2 {
        return Err(Error::InsufficientExtrema {
            needed: 2,
            maxima: maxima.len(),
            minima: minima.len(),
        });
    }
    Ok(())
}

/// Upper and lower envelopes of `samples`.
///
/// The learned kind needs segments of at least the model window; longer
/// segments are covered by model-sized windows at a quarter-window hop and
/// overlap-averaged.
pub fn envelopes_of(samples: &[f64], kind: &InterpolatorKind) -> Result<(Envelope, Envelope)> {
    let (maxima, minima) = extrema_of(samples);
    require_extrema(&maxima, &minima)?;
    match kind {
        InterpolatorKind::Linear | InterpolatorKind::CubicSpline => {
            let (maxima, minima) = extend_boundaries(samples.len(), &maxima, &minima, N_MIRROR)?;
            let grid: Vec<f64> = (0..samples.len()).map(|i| i as f64).collect();
            let interp = |set: &ExtremaSet| match kind {
                InterpolatorKind::Linear => interpolate_linear(&set.positions(), &set.values, &grid),
                _ => interpolate_cubic_spline(&set.positions(), &set.values, &grid),
            };
            Ok((
                Envelope {
                    values: interp(&maxima)?,
                    polarity: Polarity::Upper,
                },
                Envelope {
                    values: interp(&minima)?,
                    polarity: Polarity::Lower,
                },
            ))
        }
        InterpolatorKind::Learned(model) => {
            let w = model.window_len();
            if samples.len() == w {
                return Ok((
                    model.envelope(samples, Polarity::Upper)?,
                    model.envelope(samples, Polarity::Lower)?,
                ));
            }
            let plan = Windowing::plan(samples.len(), w, (w / 4).max(1))?;
            let mut uppers = Vec::with_capacity(plan.len());
            let mut lowers = Vec::with_capacity(plan.len());
            for win in plan.slices(samples) {
                let (u, l) = match (
                    model.envelope(win, Polarity::Upper),
                    model.envelope(win, Polarity::Lower),
                ) {
                    (Ok(u), Ok(l)) => (u.values, l.values),
                    (Err(Error::InsufficientExtrema { .. }), _)
                    | (_, Err(Error::InsufficientExtrema { .. })) => (win.to_vec(), win.to_vec()),
                    (Err(e), _) | (_, Err(e)) => return Err(e),
                };
                uppers.push(u);
                lowers.push(l);
            }
            Ok((
                Envelope {
                    values: plan.reassemble(&uppers)?,
                    polarity: Polarity::Upper,
                },
                Envelope {
                    values: plan.reassemble(&lowers)?,
                    polarity: Polarity::Lower,
                },
            ))
        }
    }
}

/// Upper envelope from the maxima, lower from the minima.
pub fn compute_envelopes(window: &TimeSeries, kind: &InterpolatorKind) -> Result<(Envelope, Envelope)> {
    envelopes_of(window.samples(), kind)
}

fn sift_samples(samples: &[f64], kind: &InterpolatorKind) -> Result<(Vec<f64>, Envelope)> {
    let (upper, lower) = envelopes_of(samples, kind)?;
    let mean = mean_of_envelopes(&upper, &lower)?;
    let detail = samples.iter().zip(&mean.values).map(|(x, m)| x - m).collect();
    Ok((detail, mean))
}

/// One sifting step: the window minus its mean envelope.
pub fn sift_once(window: &TimeSeries, kind: &InterpolatorKind) -> Result<(Vec<f64>, Envelope)> {
    sift_samples(window.samples(), kind)
}

/// Sign changes, skipping exact zeros.
pub fn zero_crossings(samples: &[f64]) -> usize {
    let mut count = 0;
    let mut prev = 0.0f64;
    for &v in samples {
        if v != 0.0 {
            if prev != 0.0 && (v > 0.0) != (prev > 0.0) {
                count += 1;
            }
            prev = v;
        }
    }
    count
}

/// No riding waves: every maximum is positive and every minimum negative.
/// Consecutive extrema then straddle exactly one zero crossing, so
/// `|#extrema − #zero crossings| ≤ 1` holds on every contiguous stretch,
/// not only on the whole signal.
pub fn has_imf_shape(samples: &[f64]) -> bool {
    let (maxima, minima) = extrema_of(samples);
    maxima.values.iter().all(|&v| v > 0.0)
        && minima.values.iter().all(|&v| v < 0.0)
        && (maxima.len() + minima.len()).abs_diff(zero_crossings(samples)) <= 1
}

fn extract_from(samples: &[f64], kind: &InterpolatorKind, params: &EmdParams) -> Result<(Vec<f64>, usize)> {
    let (mut h, _) = sift_samples(samples, kind)?;
    let mut iterations = 1;
    while iterations < params.max_sift {
        let next = match sift_samples(&h, kind) {
            Ok((next, _)) => next,
            Err(Error::InsufficientExtrema { .. }) => break,
            Err(e) => return Err(e),
        };
        iterations += 1;
        let den: f64 = h.iter().map(|v| v * v).sum();
        let num: f64 = h.iter().zip(&next).map(|(a, b)| (a - b).powi(2)).sum();
        h = next;
        let converged = den == 0.0 || num / den < params.sd_threshold;
        if converged && (!params.require_imf_shape || has_imf_shape(&h)) {
            break;
        }
    }
    Ok((h, iterations))
}

/// Sift until the Cauchy SD between successive iterates drops below
/// `sd_threshold`, or `max_sift` passes.
pub fn extract_imf(
    window: &TimeSeries,
    kind: &InterpolatorKind,
    sd_threshold: f64,
    max_sift: usize,
) -> Result<(Vec<f64>, usize)> {
    let params = EmdParams {
        sd_threshold,
        max_sift,
        max_imfs: 1,
        require_imf_shape: true,
    };
    params.validate()?;
    extract_from(window.samples(), kind, &params)
}

/// Peel IMFs off the running residual until it has fewer than two maxima or
/// minima, or `max_imfs` have been taken.
pub fn decompose(ts: &TimeSeries, kind: &InterpolatorKind, params: &EmdParams) -> Result<EmdResult> {
    params.validate()?;
    let mut residual = ts.samples().to_vec();
    let mut imfs = Vec::new();
    let mut iterations = Vec::new();
    while imfs.len() < params.max_imfs {
        let (maxima, minima) = extrema_of(&residual);
        if maxima.len() < 2 || minima.len() < 2 {
            break;
        }
        let (imf, n) = match extract_from(&residual, kind, params) {
            Ok(r) => r,
            Err(Error::InsufficientExtrema { .. }) => break,
            Err(e) => return Err(e),
        };
        for (r, v) in residual.iter_mut().zip(&imf) {
            *r -= v;
        }
        imfs.push(imf);
        iterations.push(n);
    }
    Ok(EmdResult {
        imfs,
        residual,
        meta: EmdMeta {
            interpolator: kind.name().to_string(),
            iterations,
        },
    })
}

/// Window geometry for the mean-envelope denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowParams {
    pub window_len: usize,
    pub hop: usize,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            window_len: 800,
            hop: 200,
        }
    }
}

/// Record-length upper, lower and mean envelopes, built window by window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedEnvelopes {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub mean: Vec<f64>,
    /// Windows that had too few extrema and were passed through.
    pub passed_through: usize,
}

/// Envelopes per window, overlap-averaged back onto the record. A window
/// with too few extrema contributes itself to all three curves.
pub fn windowed_envelopes(
    ts: &TimeSeries,
    kind: &InterpolatorKind,
    window: WindowParams,
) -> Result<WindowedEnvelopes> {
    let plan = Windowing::plan(ts.len(), window.window_len, window.hop)?;
    let slices: Vec<&[f64]> = plan.slices(ts.samples()).collect();
    let per_window: Vec<Result<Option<(Envelope, Envelope)>>> = slices
        .par_iter()
        .map(|w| match envelopes_of(w, kind) {
            Ok(pair) => Ok(Some(pair)),
            Err(Error::InsufficientExtrema { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut uppers = Vec::with_capacity(plan.len());
    let mut lowers = Vec::with_capacity(plan.len());
    let mut means = Vec::with_capacity(plan.len());
    let mut passed_through = 0;
    for (i, (res, w)) in per_window.into_iter().zip(&slices).enumerate() {
        match res? {
            Some((u, l)) => {
                means.push(mean_of_envelopes(&u, &l)?.values);
                uppers.push(u.values);
                lowers.push(l.values);
            }
            None => {
                log::debug!("window {i} (start {}) has too few extrema; passing through", plan.starts[i]);
                passed_through += 1;
                uppers.push(w.to_vec());
                lowers.push(w.to_vec());
                means.push(w.to_vec());
            }
        }
    }
    Ok(WindowedEnvelopes {
        upper: plan.reassemble(&uppers)?,
        lower: plan.reassemble(&lowers)?,
        mean: plan.reassemble(&means)?,
        passed_through,
    })
}

/// The mean envelope, window by window, is the denoised signal.
pub fn denoise_mean_envelope(
    ts: &TimeSeries,
    kind: &InterpolatorKind,
    window: WindowParams,
) -> Result<TimeSeries> {
    let env = windowed_envelopes(ts, kind, window)?;
    if env.passed_through > 0 {
        log::info!("{} window(s) passed through unchanged", env.passed_through);
    }
    ts.with_samples(env.mean)
}

/// Classic EMD denoising: drop the first `n_remove` IMFs and rebuild.
pub fn denoise_subtract_imf(
    ts: &TimeSeries,
    kind: &InterpolatorKind,
    n_remove: usize,
    params: &EmdParams,
) -> Result<TimeSeries> {
    let result = decompose(ts, kind, params)?;
    if n_remove > 0 && n_remove >= result.imfs.len() {
        log::warn!(
            "removing {n_remove} IMF(s) but only {} were extracted; keeping the residual only",
            result.imfs.len()
        );
    }
    let mut out = result.residual.clone();
    for imf in result.imfs.iter().skip(n_remove) {
        for (o, v) in out.iter_mut().zip(imf) {
            *o += v;
        }
    }
    ts.with_samples(out)
}
