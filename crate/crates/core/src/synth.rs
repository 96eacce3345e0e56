//! Seeded synthetic EEG records with one chewing burst each.
//!
//! Every record draws from `ChaCha8Rng::seed_from_u64(seed)`: stream 0 builds
//! the clean signal, stream 1 the artifact. The record seed is the dataset's
//! master seed plus the record index.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_window, orient, Normalization, TrainingPair};
use crate::error::{Error, Result};
use crate::signal::{
    extend_boundaries, extrema_of, interpolate_cubic_spline, Polarity, TimeSeries, Windowing,
};
use crate::emd::N_MIRROR;

const CLEAN_STREAM: u64 = 0;
const ARTIFACT_STREAM: u64 = 1;

/// A narrowband rhythm. `amplitude` is the peak of a sine with equal power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rhythm {
    pub name: String,
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub amplitude: f64,
}

impl Rhythm {
    fn new(name: &str, center_hz: f64, bandwidth_hz: f64, amplitude: f64) -> Self {
        Self {
            name: name.to_string(),
            center_hz,
            bandwidth_hz,
            amplitude,
        }
    }

    pub fn band(&self) -> (f64, f64) {
        (
            self.center_hz - self.bandwidth_hz / 2.0,
            self.center_hz + self.bandwidth_hz / 2.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub rate_hz: f64,
    pub duration_s: f64,
    pub record_count: usize,
    pub rhythms: Vec<Rhythm>,
    /// RMS of the 1/f background.
    pub pink_rms: f64,
    /// The 1/f background starts at this frequency.
    pub pink_min_hz: f64,
    pub artifact_band_hz: (f64, f64),
    /// Burst RMS over its support, in units of the clean record's RMS.
    pub artifact_multiplier: f64,
    pub artifact_duration_s: (f64, f64),
    /// Fraction of the burst covered by the two cosine ramps together.
    pub artifact_taper: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rate_hz: 250.0,
            duration_s: 4.0,
            record_count: 300,
            rhythms: vec![
                Rhythm::new("theta", 6.0, 2.0, 1.0),
                Rhythm::new("alpha", 10.0, 2.0, 2.0),
                Rhythm::new("beta", 20.0, 6.0, 0.5),
            ],
            pink_rms: 1.0,
            pink_min_hz: 0.5,
            artifact_band_hz: (20.0, 60.0),
            artifact_multiplier: 5.0,
            artifact_duration_s: (0.5, 1.5),
            artifact_taper: 0.5,
        }
    }
}

impl SynthConfig {
    /// Samples per record.
    pub fn len(&self) -> usize {
        (self.rate_hz * self.duration_s).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn artifact_len_range(&self) -> (usize, usize) {
        (
            (self.artifact_duration_s.0 * self.rate_hz).round() as usize,
            (self.artifact_duration_s.1 * self.rate_hz).round() as usize,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.rate_hz > 0.0) || !self.rate_hz.is_finite() {
            return bad(format!("rate must be positive, got {}", self.rate_hz));
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return bad(format!("duration must be positive, got {}", self.duration_s));
        }
        let n = self.rate_hz * self.duration_s;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) || n.round() < 8.0 {
            return bad(format!("rate × duration = {n} is not a whole sample count of at least 8"));
        }
        let nyquist = self.rate_hz / 2.0;
        let check_band = |what: &str, lo: f64, hi: f64| -> Result<()> {
            if !(lo > 0.0 && lo < hi && hi <= nyquist) {
                return Err(Error::InvalidParameter(format!(
                    "{what}: band [{lo}, {hi}] Hz must satisfy 0 < lo < hi <= {nyquist}"
                )));
            }
            Ok(())
        };
        for r in &self.rhythms {
            let (lo, hi) = r.band();
            check_band(&r.name, lo, hi)?;
            if !(r.amplitude >= 0.0) {
                return bad(format!("{}: amplitude must be non-negative", r.name));
            }
        }
        check_band("pink noise", self.pink_min_hz, nyquist)?;
        if !(self.pink_rms >= 0.0) {
            return bad("pink noise RMS must be non-negative".into());
        }
        check_band("artifact", self.artifact_band_hz.0, self.artifact_band_hz.1)?;
        if !(self.artifact_multiplier > 0.0) || !self.artifact_multiplier.is_finite() {
            return bad("artifact multiplier must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.artifact_taper) {
            return bad("artifact taper must lie in [0, 1]".into());
        }
        let (a, b) = self.artifact_duration_s;
        if !(a > 0.0 && a <= b) {
            return bad(format!("artifact duration range ({a}, {b}) is invalid"));
        }
        if b >= self.duration_s {
            return Err(Error::DurationTooLong {
                artifact_s: b,
                record_s: self.duration_s,
            });
        }
        if self.artifact_len_range().0 < 2 {
            return bad("artifact must span at least 2 samples".into());
        }
        Ok(())
    }
}

/// One clean/contaminated pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub clean: TimeSeries,
    pub contaminated: TimeSeries,
    /// 1 on the burst support, 0 elsewhere.
    pub artifact_mask: Vec<u8>,
    pub seed: u64,
}

impl DatasetRecord {
    /// Equal lengths and rates, a 0/1 mask, and bit-exact equality off-mask.
    pub fn validate(&self) -> Result<()> {
        let n = self.clean.len();
        for len in [self.contaminated.len(), self.artifact_mask.len()] {
            if len != n {
                return Err(Error::LengthMismatch { expected: n, found: len });
            }
        }
        if self.clean.rate() != self.contaminated.rate() {
            return Err(Error::InvalidSeries("clean and contaminated rates differ".into()));
        }
        for (i, ((c, x), &m)) in self
            .clean
            .samples()
            .iter()
            .zip(self.contaminated.samples())
            .zip(&self.artifact_mask)
            .enumerate()
        {
            if m > 1 {
                return Err(Error::InvalidSeries(format!("mask value {m} at sample {i}")));
            }
            if m == 0 && c.to_bits() != x.to_bits() {
                return Err(Error::InvalidSeries(format!(
                    "contaminated differs from clean outside the mask at sample {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn mask_len(&self) -> usize {
        self.artifact_mask.iter().filter(|&&m| m == 1).count()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Random-phase Gaussian noise with amplitude response `gain(f)`, scaled to
/// unit RMS (all zeros if no bin has gain). Two normals are drawn for every
/// bin between DC and Nyquist, so the draw count depends on `n` only.
fn shaped_noise(n: usize, rate: f64, rng: &mut ChaCha8Rng, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    let df = rate / n as f64;
    for k in 1..n.div_ceil(2) {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let g = gain(k as f64 * df);
        spectrum[k] = Complex64::new(re * g, im * g);
        spectrum[n - k] = spectrum[k].conj();
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let mut out: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let r = rms(&out);
    if r > 0.0 {
        for v in &mut out {
            *v /= r;
        }
    }
    out
}

fn in_band(f: f64, lo: f64, hi: f64) -> f64 {
    if f >= lo && f <= hi {
        1.0
    } else {
        0.0
    }
}

/// Sum of the configured rhythms plus 1/f background.
pub fn generate_clean_eeg(cfg: &SynthConfig, seed: u64) -> Result<TimeSeries> {
    cfg.validate()?;
    let n = cfg.len();
    let mut rng = stream(seed, CLEAN_STREAM);
    let mut out = vec![0.0; n];
    for r in &cfg.rhythms {
        let (lo, hi) = r.band();
        let component = shaped_noise(n, cfg.rate_hz, &mut rng, |f| in_band(f, lo, hi));
        let scale = r.amplitude / std::f64::consts::SQRT_2;
        for (o, c) in out.iter_mut().zip(&component) {
            *o += scale * c;
        }
    }
    let fmin = cfg.pink_min_hz;
    let pink = shaped_noise(n, cfg.rate_hz, &mut rng, |f| if f >= fmin { f.powf(-0.5) } else { 0.0 });
    for (o, p) in out.iter_mut().zip(&pink) {
        *o += cfg.pink_rms * p;
    }
    TimeSeries::new(out, cfg.rate_hz)
}

/// Tukey window: flat top, cosine ramps over `taper` of the length in total.
fn tukey(len: usize, taper: f64) -> Vec<f64> {
    let ramp = ((taper * (len - 1) as f64) / 2.0).floor() as usize;
    (0..len)
        .map(|i| {
            let d = i.min(len - 1 - i);
            if d >= ramp {
                1.0
            } else {
                0.5 * (1.0 - (std::f64::consts::PI * d as f64 / ramp as f64).cos())
            }
        })
        .collect()
}

/// Add one tapered, band-limited burst at a random onset.
pub fn inject_chewing_artifact(
    clean: &TimeSeries,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<DatasetRecord> {
    cfg.validate()?;
    let n = clean.len();
    let (min_len, max_len) = cfg.artifact_len_range();
    if max_len >= n {
        return Err(Error::DurationTooLong {
            artifact_s: cfg.artifact_duration_s.1,
            record_s: clean.duration_s(),
        });
    }
    let mut rng = stream(seed, ARTIFACT_STREAM);
    let len = rng.random_range(min_len..=max_len);
    let onset = rng.random_range(0..=n - len);
    let (lo, hi) = cfg.artifact_band_hz;
    let mut burst = shaped_noise(len, clean.rate(), &mut rng, |f| in_band(f, lo, hi));
    for (b, w) in burst.iter_mut().zip(tukey(len, cfg.artifact_taper)) {
        *b *= w;
    }
    let burst_rms = rms(&burst);
    let target = cfg.artifact_multiplier * rms(clean.samples());
    if burst_rms > 0.0 {
        for b in &mut burst {
            *b *= target / burst_rms;
        }
    }
    let mut contaminated = clean.samples().to_vec();
    let mut mask = vec![0u8; n];
    for (k, b) in burst.iter().enumerate() {
        contaminated[onset + k] += b;
        mask[onset + k] = 1;
    }
    Ok(DatasetRecord {
        clean: clean.clone(),
        contaminated: clean.with_samples(contaminated)?,
        artifact_mask: mask,
        seed,
    })
}

/// A clean record and its contaminated copy for one seed.
pub fn generate_record(cfg: &SynthConfig, seed: u64) -> Result<DatasetRecord> {
    let clean = generate_clean_eeg(cfg, seed)?;
    inject_chewing_artifact(&clean, cfg, seed)
}

/// `record_count` records with seeds `master_seed + index`.
pub fn build_dataset(cfg: &SynthConfig, master_seed: u64) -> Result<Vec<DatasetRecord>> {
    cfg.validate()?;
    (0..cfg.record_count as u64)
        .into_par_iter()
        .map(|i| generate_record(cfg, master_seed.wrapping_add(i)))
        .collect()
}

/// Natural-spline envelope of `samples` for one polarity, in oriented units
/// (a lower envelope comes back negated).
fn oriented_spline_envelope(samples: &[f64], polarity: Polarity) -> Result<Vec<f64>> {
    let oriented = orient(samples, polarity)?;
    let (maxima, minima) = extrema_of(&oriented);
    let (maxima, _) = extend_boundaries(oriented.len(), &maxima, &minima, N_MIRROR)?;
    let grid: Vec<f64> = (0..oriented.len()).map(|i| i as f64).collect();
    interpolate_cubic_spline(&maxima.positions(), &maxima.values, &grid)
}

fn pair_for(contaminated: &[f64], clean: &[f64], polarity: Polarity) -> Result<TrainingPair> {
    let (input, normalization): (Vec<f64>, Normalization) = encode_window(contaminated, polarity)?;
    let target = oriented_spline_envelope(clean, polarity)?
        .into_iter()
        .map(|v| normalization.apply(v))
        .collect();
    Ok(TrainingPair {
        input,
        target,
        normalization,
        polarity,
    })
}

/// Supervised pairs from the contaminated and clean views of each window.
///
/// Inputs encode the contaminated window's peaks; the target is the clean
/// window's natural-spline envelope under the same normalization. Windows
/// lacking extrema for a polarity are skipped.
pub fn make_training_pairs(
    record: &DatasetRecord,
    window_len: usize,
    hop: usize,
    polarities: &[Polarity],
) -> Result<Vec<TrainingPair>> {
    let plan = Windowing::plan(record.clean.len(), window_len, hop)?;
    let mut pairs = Vec::new();
    for (&start, (noisy, clean)) in plan.starts.iter().zip(
        plan.slices(record.contaminated.samples())
            .zip(plan.slices(record.clean.samples())),
    ) {
        for &polarity in polarities {
            match pair_for(noisy, clean, polarity) {
                Ok(p) => pairs.push(p),
                Err(Error::InsufficientExtrema { .. }) => {
                    log::debug!("record {} window at {start}: too few extrema, skipped", record.seed);
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(pairs)
}

/// Seeded train/test partition of `0..n`; both sides come back sorted.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidFraction(test_fraction));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn split_dataset<T: Clone>(records: &[T], test_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (train, test) = split_indices(records.len(), test_fraction, seed)?;
    Ok((
        train.iter().map(|&i| records[i].clone()).collect(),
        test.iter().map(|&i| records[i].clone()).collect(),
    ))
}
