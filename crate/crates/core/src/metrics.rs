//! Error measures, spectra, and the method comparison harness.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::emd::{denoise_mean_envelope, denoise_subtract_imf, EmdParams, InterpolatorKind, WindowParams};
use crate::error::{Error, Result};
use crate::signal::TimeSeries;
use crate::synth::DatasetRecord;

pub const ALPHA_BAND_HZ: (f64, f64) = (8.0, 13.0);

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// `10·log10(Σ clean² / Σ (test − clean)²)`.
pub fn snr_db(clean: &[f64], test: &[f64]) -> Result<f64> {
    same_len(clean, test)?;
    let signal: f64 = clean.iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let noise: f64 = clean.iter().zip(test).map(|(c, t)| (t - c).powi(2)).sum();
    if noise == 0.0 {
        return Err(Error::ZeroNoise);
    }
    Ok(10.0 * (signal / noise).log10())
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    if a.is_empty() {
        return Err(Error::TooShort { needed: 1, found: 0 });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

pub fn mae(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    if a.is_empty() {
        return Err(Error::TooShort { needed: 1, found: 0 });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralWindow {
    Rectangular,
    Hann,
}

impl SpectralWindow {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Self::Rectangular => vec![1.0; n],
            Self::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub df: f64,
    pub nyquist: f64,
}

impl Psd {
    /// `Σ power · df`, the mean power of the windowed signal.
    pub fn total(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.df
    }
}

/// Single-segment periodogram scaled so that `Σ P·df` equals the mean
/// square of the windowed signal.
pub fn periodogram(ts: &TimeSeries, window: SpectralWindow) -> Result<Psd> {
    periodogram_of(ts.samples(), ts.rate(), window)
}

pub fn periodogram_of(samples: &[f64], rate: f64, window: SpectralWindow) -> Result<Psd> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::TooShort { needed: 8, found: n });
    }
    let mut buf: Vec<Complex64> = samples
        .iter()
        .zip(window.weights(n))
        .map(|(x, w)| Complex64::new(x * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = rate / n as f64;
    let norm = (n as f64).powi(2) * df;
    let bins = n / 2 + 1;
    let power = (0..bins)
        .map(|k| {
            let two_sided = buf[k].norm_sqr() / norm;
            if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                two_sided
            } else {
                2.0 * two_sided
            }
        })
        .collect();
    Ok(Psd {
        freqs: (0..bins).map(|k| k as f64 * df).collect(),
        power,
        df,
        nyquist: rate / 2.0,
    })
}

/// Power in bins whose centres lie in `[f_lo, f_hi)`; the top bin is included
/// when `f_hi` is the Nyquist frequency.
pub fn band_power(psd: &Psd, f_lo: f64, f_hi: f64) -> Result<f64> {
    if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= psd.nyquist) {
        return Err(Error::InvalidBand {
            lo: f_lo,
            hi: f_hi,
            nyquist: psd.nyquist,
        });
    }
    let to_top = f_hi == psd.nyquist;
    Ok(psd
        .freqs
        .iter()
        .zip(&psd.power)
        .filter(|(&f, _)| f >= f_lo && (f < f_hi || to_top))
        .map(|(_, p)| p)
        .sum::<f64>()
        * psd.df)
}

/// Anything that maps a contaminated record to a cleaned one.
pub trait Denoiser: Sync {
    fn name(&self) -> String;
    fn denoise(&self, ts: &TimeSeries) -> Result<TimeSeries>;
}

/// How an envelope method turns into a denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DenoiseMode {
    MeanEnvelope { window: WindowParams },
    SubtractImf { n_remove: usize, emd: EmdParams },
}

impl Default for DenoiseMode {
    fn default() -> Self {
        Self::MeanEnvelope {
            window: WindowParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnvelopeDenoiser {
    pub kind: InterpolatorKind,
    pub mode: DenoiseMode,
}

impl Denoiser for EnvelopeDenoiser {
    fn name(&self) -> String {
        self.kind.name().to_string()
    }

    fn denoise(&self, ts: &TimeSeries) -> Result<TimeSeries> {
        match self.mode {
            DenoiseMode::MeanEnvelope { window } => denoise_mean_envelope(ts, &self.kind, window),
            DenoiseMode::SubtractImf { n_remove, emd } => denoise_subtract_imf(ts, &self.kind, n_remove, &emd),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub record_seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub evaluated: usize,
    pub snr_db: Option<Summary>,
    pub mse: Option<Summary>,
    pub mae: Option<Summary>,
    pub alpha_power_ratio: Option<Summary>,
    pub failures: Vec<RecordFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub records: usize,
    pub mode: DenoiseMode,
    /// SNR of the contaminated records themselves.
    pub baseline: MethodReport,
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }
}

struct RecordScores {
    snr: f64,
    mse: f64,
    mae: f64,
    alpha: f64,
}

fn alpha_power(samples: &[f64], rate: f64) -> Result<f64> {
    let psd = periodogram_of(samples, rate, SpectralWindow::Hann)?;
    band_power(&psd, ALPHA_BAND_HZ.0, ALPHA_BAND_HZ.1)
}

fn score(record: &DatasetRecord, output: &[f64]) -> Result<RecordScores> {
    let clean = record.clean.samples();
    let clean_alpha = alpha_power(clean, record.clean.rate())?;
    if clean_alpha == 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok(RecordScores {
        snr: snr_db(clean, output)?,
        mse: mse(clean, output)?,
        mae: mae(clean, output)?,
        alpha: alpha_power(output, record.clean.rate())? / clean_alpha,
    })
}

fn summarize(method: String, records: &[DatasetRecord], results: Vec<Result<RecordScores>>) -> MethodReport {
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(s) => scores.push(s),
            Err(e) => {
                log::warn!("{method}: record {} failed: {e}", r.seed);
                failures.push(RecordFailure {
                    record_seed: r.seed,
                    message: e.to_string(),
                });
            }
        }
    }
    let pick = |f: fn(&RecordScores) -> f64| Summary::of(&scores.iter().map(f).collect::<Vec<_>>());
    MethodReport {
        method,
        evaluated: scores.len(),
        snr_db: pick(|s| s.snr),
        mse: pick(|s| s.mse),
        mae: pick(|s| s.mae),
        alpha_power_ratio: pick(|s| s.alpha),
        failures,
    }
}

/// Score each denoiser on every record plus the untouched contaminated
/// baseline. Per-record failures are listed, never fatal.
pub fn evaluate_denoisers(
    records: &[DatasetRecord],
    denoisers: &[&dyn Denoiser],
    dataset: &str,
    mode: DenoiseMode,
) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no records to evaluate".into()));
    }
    if denoisers.is_empty() {
        return Err(Error::InvalidParameter("no methods to evaluate".into()));
    }
    let baseline = summarize(
        "contaminated".into(),
        records,
        records
            .par_iter()
            .map(|r| score(r, r.contaminated.samples()))
            .collect(),
    );
    let methods = denoisers
        .iter()
        .map(|d| {
            let results = records
                .par_iter()
                .map(|r| d.denoise(&r.contaminated).and_then(|out| score(r, out.samples())))
                .collect();
            summarize(d.name(), records, results)
        })
        .collect();
    Ok(EvalReport {
        dataset: dataset.to_string(),
        records: records.len(),
        mode,
        baseline,
        methods,
    })
}

/// [`evaluate_denoisers`] over envelope methods sharing one mode.
pub fn evaluate_methods(
    records: &[DatasetRecord],
    methods: &[InterpolatorKind],
    mode: DenoiseMode,
    dataset: &str,
) -> Result<EvalReport> {
    let denoisers: Vec<EnvelopeDenoiser> = methods
        .iter()
        .map(|kind| EnvelopeDenoiser {
            kind: kind.clone(),
            mode,
        })
        .collect();
    let refs: Vec<&dyn Denoiser> = denoisers.iter().map(|d| d as &dyn Denoiser).collect();
    evaluate_denoisers(records, &refs, dataset, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{build_dataset, SynthConfig};
    use proptest::prelude::*;

    fn sine(freq: f64, n: usize, rate: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin())
            .collect()
    }

    #[test]
    fn snr_reference_values() {
        let clean = [1.0, -1.0, 1.0, -1.0];
        let equal = [2.0, -2.0, 2.0, -2.0];
        assert!(snr_db(&clean, &equal).unwrap().abs() < 1e-12);
        let tenth: Vec<f64> = clean.iter().map(|c| c + 0.1 * c).collect();
        assert!((snr_db(&clean, &tenth).unwrap() - 20.0).abs() < 1e-9);
        assert!(matches!(snr_db(&clean, &clean), Err(Error::ZeroNoise)));
        assert!(matches!(snr_db(&[0.0; 4], &clean), Err(Error::ZeroSignal)));
        assert!(snr_db(&clean, &[1.0]).is_err());
    }

    #[test]
    fn snr_falls_as_noise_grows() {
        let clean = sine(3.0, 200, 100.0);
        let noise: Vec<f64> = (0..200).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        let mut last = f64::INFINITY;
        for alpha in [0.01, 0.1, 0.5, 1.0, 3.0, 10.0] {
            let test: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + alpha * n).collect();
            let s = snr_db(&clean, &test).unwrap();
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn error_measures() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        let b = [3.0, 4.0, 5.0];
        assert_eq!(mse(&a, &b).unwrap(), 4.0);
        assert_eq!(mae(&a, &b).unwrap(), 2.0);
        assert!(mse(&a, &b[..2]).is_err());
    }

    proptest! {
        #[test]
        fn error_measures_match_loops(pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..200)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let mut sq = 0.0;
            let mut ab = 0.0;
            for i in 0..a.len() {
                sq += (a[i] - b[i]) * (a[i] - b[i]);
                ab += (a[i] - b[i]).abs();
            }
            let n = a.len() as f64;
            let m = mse(&a, &b).unwrap();
            prop_assert!((m - sq / n).abs() <= 1e-12 * (1.0 + sq / n));
            prop_assert!((mae(&a, &b).unwrap() - ab / n).abs() <= 1e-12 * (1.0 + ab / n));
            prop_assert!(mae(&a, &b).unwrap() <= m.sqrt() * (1.0 + 1e-12));
        }

        #[test]
        fn parseval(x in proptest::collection::vec(-10.0f64..10.0, 8..300)) {
            for window in [SpectralWindow::Rectangular, SpectralWindow::Hann] {
                let psd = periodogram_of(&x, 250.0, window).unwrap();
                let w = window.weights(x.len());
                let power = x.iter().zip(&w).map(|(v, w)| (v * w).powi(2)).sum::<f64>() / x.len() as f64;
                prop_assert!((psd.total() - power).abs() <= 1e-6 * power.max(1e-300));
                let full = band_power(&psd, 0.0, psd.nyquist).unwrap();
                prop_assert!((full - psd.total()).abs() <= 1e-12 * psd.total().max(1e-300));
            }
        }
    }

    #[test]
    fn tone_lands_in_its_bin() {
        let ts = TimeSeries::new(sine(10.0, 1000, 250.0), 250.0).unwrap();
        let psd = periodogram(&ts, SpectralWindow::Rectangular).unwrap();
        let peak = psd
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(psd.freqs[peak], 10.0);
        let alpha = band_power(&psd, 8.0, 13.0).unwrap();
        assert!(alpha > 0.95 * psd.total());
        // Between two bins, nothing to collect.
        assert_eq!(band_power(&psd, 10.05, 10.2).unwrap(), 0.0);
        assert!(band_power(&psd, 13.0, 8.0).is_err());
        assert!(band_power(&psd, 0.0, 200.0).is_err());
    }

    #[test]
    fn zero_signal_spectrum() {
        let psd = periodogram_of(&[0.0; 16], 250.0, SpectralWindow::Hann).unwrap();
        assert!(psd.power.iter().all(|&p| p == 0.0));
        assert_eq!(psd.freqs.len(), 9);
        assert!(periodogram_of(&[1.0; 7], 250.0, SpectralWindow::Hann).is_err());
    }

    struct Identity;

    impl Denoiser for Identity {
        fn name(&self) -> String {
            "identity".into()
        }

        fn denoise(&self, ts: &TimeSeries) -> Result<TimeSeries> {
            Ok(ts.clone())
        }
    }

    fn records(n: usize) -> Vec<DatasetRecord> {
        let cfg = SynthConfig {
            record_count: n,
            ..SynthConfig::default()
        };
        build_dataset(&cfg, 5).unwrap()
    }

    #[test]
    fn identity_matches_baseline() {
        let recs = records(6);
        let report = evaluate_denoisers(&recs, &[&Identity], "mem", DenoiseMode::default()).unwrap();
        assert_eq!(report.methods.len(), 1);
        assert_eq!(report.methods[0].snr_db, report.baseline.snr_db);
        assert_eq!(report.methods[0].evaluated, 6);
    }

    #[test]
    fn report_lists_each_method() {
        let recs = records(4);
        let report = evaluate_methods(
            &recs,
            &[InterpolatorKind::Linear, InterpolatorKind::CubicSpline],
            DenoiseMode::default(),
            "mem",
        )
        .unwrap();
        let names: Vec<&str> = report.methods.iter().map(|m| m.method.as_str()).collect();
        assert_eq!(names, ["linear", "spline"]);
        for m in &report.methods {
            assert_eq!(m.evaluated + m.failures.len(), 4);
            assert!(m.mae.unwrap().mean <= m.mse.unwrap().mean.sqrt());
            assert!(m.alpha_power_ratio.is_some());
        }
        let text = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        assert!(evaluate_methods(&recs, &[], DenoiseMode::default(), "mem").is_err());
        assert!(evaluate_methods(&[], &[InterpolatorKind::Linear], DenoiseMode::default(), "mem").is_err());
    }

    #[test]
    fn order_invariant() {
        let recs = records(8);
        let mut rev = recs.clone();
        rev.reverse();
        let a = evaluate_methods(&recs, &[InterpolatorKind::Linear], DenoiseMode::default(), "d").unwrap();
        let b = evaluate_methods(&rev, &[InterpolatorKind::Linear], DenoiseMode::default(), "d").unwrap();
        let (sa, sb) = (a.methods[0].snr_db.unwrap(), b.methods[0].snr_db.unwrap());
        assert!((sa.mean - sb.mean).abs() <= 1e-12 * sa.mean.abs().max(1.0));
        assert!((sa.std - sb.std).abs() <= 1e-12 * sa.std.abs().max(1.0));
    }

    #[test]
    fn failures_are_flagged_not_fatal() {
        let mut recs = records(3);
        let flat = TimeSeries::new(vec![0.0; 1000], 250.0).unwrap();
        recs[1].clean = flat;
        let report = evaluate_methods(&recs, &[InterpolatorKind::Linear], DenoiseMode::default(), "d").unwrap();
        assert_eq!(report.methods[0].evaluated, 2);
        assert_eq!(report.methods[0].failures.len(), 1);
        assert_eq!(report.methods[0].failures[0].record_seed, recs[1].seed);
    }
}
