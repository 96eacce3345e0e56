//! Command-line arguments. Global flags can also be set through `EEGEMD_*`
//! environment variables.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eegemd::emd::{EmdParams, WindowParams};
use eegemd::encoder::EncoderConfig;
use eegemd::metrics::DenoiseMode;
use eegemd::synth::SynthConfig;
use serde::Serialize;

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "eegemd", version, about = "Chewing-artifact removal from EEG by EMD mean envelopes")]
pub struct Cli {
    /// Master seed for data generation, splitting and training.
    #[arg(long, global = true, env = "EEGEMD_SEED", default_value_t = 42)]
    pub seed: u64,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "EEGEMD_THREADS", default_value_t = 1)]
    pub threads: usize,

    /// Output directory.
    #[arg(long, global = true, env = "EEGEMD_OUT", default_value = "out")]
    pub out: PathBuf,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    #[serde(skip)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Write a synthetic dataset of clean/contaminated records.
    Generate(GenerateArgs),
    /// Train the learned envelope interpolator on a generated dataset.
    Train(TrainArgs),
    /// Denoise one signal file.
    Denoise(DenoiseArgs),
    /// Compare methods on a dataset's test split.
    Evaluate(EvaluateArgs),
    /// Draw a signal with its envelopes as SVG.
    Plot(PlotArgs),
    /// generate, train, evaluate and plot in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    pub records: usize,
    /// Record length in seconds.
    #[arg(long, default_value_t = 4.0)]
    pub duration: f64,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 250.0)]
    pub rate: f64,
    /// RMS of the 1/f background.
    #[arg(long, default_value_t = 1.0)]
    pub pink_rms: f64,
    /// Burst RMS as a multiple of the clean RMS.
    #[arg(long, default_value_t = 5.0)]
    pub artifact_multiplier: f64,
    /// Share of records held out for testing.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
}

impl SynthArgs {
    pub fn config(&self) -> SynthConfig {
        SynthConfig {
            rate_hz: self.rate,
            duration_s: self.duration,
            record_count: self.records,
            pink_rms: self.pink_rms,
            artifact_multiplier: self.artifact_multiplier,
            ..SynthConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EncoderArgs {
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 4)]
    pub num_heads: usize,
    #[arg(long, default_value_t = 32)]
    pub key_dim: usize,
    /// L2 coefficient on the bottleneck kernel.
    #[arg(long, default_value_t = 0.01)]
    pub l2: f64,
}

impl EncoderArgs {
    pub fn config(&self, window: &WindowArgs, seed: u64) -> EncoderConfig {
        let base = EncoderConfig::default();
        let mut stack_units = base.stack_units;
        stack_units[4] = window.window_len;
        EncoderConfig {
            window_len: window.window_len,
            num_heads: self.num_heads,
            key_dim: self.key_dim,
            stack_units,
            l2_coeff: self.l2,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            ..base
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WindowArgs {
    /// Samples per analysis window (also the model's output length).
    #[arg(long, default_value_t = 800)]
    pub window_len: usize,
    /// Samples between window starts.
    #[arg(long, default_value_t = 200)]
    pub hop: usize,
}

impl WindowArgs {
    pub fn params(&self) -> WindowParams {
        WindowParams {
            window_len: self.window_len,
            hop: self.hop,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub window: WindowArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Linear,
    Spline,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    /// The mean of the upper and lower envelopes is the output.
    MeanEnvelope,
    /// Drop the first IMFs and rebuild from the rest.
    Subtract,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModeArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::MeanEnvelope)]
    pub mode: ModeArg,
    /// IMFs to drop in subtract mode.
    #[arg(long, default_value_t = 1)]
    pub n_remove: usize,
    #[command(flatten)]
    pub window: WindowArgs,
}

impl ModeArgs {
    pub fn mode(&self) -> DenoiseMode {
        match self.mode {
            ModeArg::MeanEnvelope => DenoiseMode::MeanEnvelope {
                window: self.window.params(),
            },
            ModeArg::Subtract => DenoiseMode::SubtractImf {
                n_remove: self.n_remove,
                emd: EmdParams::default(),
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DenoiseArgs {
    /// Signal CSV (`value` column, or a record file whose contaminated column is used).
    #[arg(long)]
    pub input: PathBuf,
    /// Model weights; implies the learned method.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[command(flatten)]
    pub mode: ModeArgs,
    /// Output CSV (default `<out>/denoised.csv`).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Linear, MethodArg::Spline, MethodArg::Learned])]
    pub methods: Vec<MethodArg>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub mode: ModeArgs,
    /// Report path (default `<out>/evaluation.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeArg {
    None,
    Linear,
    Spline,
    Learned,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlotArgs {
    /// Signal or record CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Extra `value` CSVs to overlay, labelled by file name.
    #[arg(long)]
    pub denoised: Vec<PathBuf>,
    /// Envelope method drawn over the observed signal.
    #[arg(long, value_enum, default_value_t = EnvelopeArg::Spline)]
    pub envelopes: EnvelopeArg,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long)]
    pub title: Option<String>,
    /// Output SVG (default `<out>/plot.svg`).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub window: WindowArgs,
}
