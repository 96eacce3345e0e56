//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use eegemd::emd::{windowed_envelopes, InterpolatorKind, WindowParams};
use eegemd::encoder::{train_with_progress, weights_to_string, EncoderConfig, EpochStats, LearnedInterpolator};
use eegemd::metrics::{evaluate_methods, DenoiseMode, Denoiser, EnvelopeDenoiser, EvalReport};
use eegemd::signal::Polarity;
use eegemd::synth::{build_dataset, make_training_pairs, split_indices, DatasetRecord};
use rayon::prelude::*;

use crate::cli::{Cli, Command, EnvelopeArg, MethodArg, SynthArgs, WindowArgs};
use crate::io::{
    ensure_dir, read_record_csv, read_signal_csv, read_signal_file, record_file_name, write_atomic,
    write_json_atomic, write_record_csv, write_signal_csv, SignalFile,
};
use crate::manifest::{
    file_digest, read_dataset_info, sha256_hex, sidecar_path, DatasetInfo, ManifestBuilder, RecordEntry, Split,
    DATASET_MANIFEST,
};
use crate::plot::{render_svg, PlotSeries, PALETTE};
use crate::{CliError, CliResult};

pub const WEIGHTS_FILE: &str = "weights.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "evaluation.json";

/// Settings shared by every command of one invocation.
struct Ctx {
    command: &'static str,
    seed: u64,
    threads: usize,
    config: serde_json::Value,
}

impl Ctx {
    fn manifest(&self, stage: &str) -> ManifestBuilder {
        let name = if stage == self.command {
            stage.to_string()
        } else {
            format!("{}/{stage}", self.command)
        };
        let mut b = ManifestBuilder::new(&name, self.config.clone(), self.threads);
        b.seed("master", self.seed);
        b
    }
}

/// Run one parsed command line inside a pool of `--threads` workers.
pub fn run(cli: &Cli) -> CliResult<()> {
    if cli.threads == 0 {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {} threads: {e}", cli.threads)))?;
    let ctx = Ctx {
        command: command_name(&cli.command),
        seed: cli.seed,
        threads: cli.threads,
        config: serde_json::to_value(cli).map_err(eegemd::Error::from)?,
    };
    pool.install(|| dispatch(&ctx, cli))
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Generate(_) => "generate",
        Command::Train(_) => "train",
        Command::Denoise(_) => "denoise",
        Command::Evaluate(_) => "evaluate",
        Command::Plot(_) => "plot",
        Command::Pipeline(_) => "pipeline",
    }
}

fn dispatch(ctx: &Ctx, cli: &Cli) -> CliResult<()> {
    let out = &cli.out;
    match &cli.command {
        Command::Generate(args) => {
            let dir = out.join("dataset");
            let info = generate(ctx, &args.synth, &dir)?;
            println!("wrote {} records to {}", info.records.len(), dir.display());
        }
        Command::Train(args) => {
            let config = args.encoder.config(&args.window, ctx.seed);
            let (weights, history) = train(ctx, &args.data, &config, &args.window, &out.join("model"))?;
            print_training(&weights, &history);
        }
        Command::Denoise(args) => {
            let kind = resolve_single_method(args.method, args.weights.as_deref())?;
            let output = args.output.clone().unwrap_or_else(|| out.join("denoised.csv"));
            denoise(ctx, &args.input, kind, args.mode.mode(), &output)?;
            println!("wrote {}", output.display());
        }
        Command::Evaluate(args) => {
            let kinds = resolve_methods(&args.methods, args.weights.as_deref())?;
            let report_path = args.report.clone().unwrap_or_else(|| out.join(REPORT_FILE));
            let report = evaluate(ctx, &args.data, &kinds, args.mode.mode(), &report_path)?;
            print!("{}", report_table(&report));
            println!("report: {}", report_path.display());
        }
        Command::Plot(args) => {
            let kind = match args.envelopes {
                EnvelopeArg::None => None,
                EnvelopeArg::Linear => Some(InterpolatorKind::Linear),
                EnvelopeArg::Spline => Some(InterpolatorKind::CubicSpline),
                EnvelopeArg::Learned => Some(resolve_single_method(Some(MethodArg::Learned), args.weights.as_deref())?),
            };
            let output = args.output.clone().unwrap_or_else(|| out.join("plot.svg"));
            plot(
                ctx,
                &args.input,
                &args.denoised,
                kind.as_ref(),
                args.window.params(),
                args.title.as_deref(),
                &output,
            )?;
            println!("wrote {}", output.display());
        }
        Command::Pipeline(args) => pipeline(ctx, &args.synth, &args.encoder.config(&args.window, ctx.seed), &args.window, out)?,
    }
    Ok(())
}

fn usage_from(e: eegemd::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn check_window(window: &WindowArgs) -> CliResult<()> {
    if window.window_len < 2 {
        return Err(CliError::usage("--window-len must be at least 2"));
    }
    if window.hop == 0 {
        return Err(CliError::usage("--hop must be positive"));
    }
    Ok(())
}

/// Write a synthetic dataset into `dir` with its manifest and split.
fn generate(ctx: &Ctx, synth: &SynthArgs, dir: &Path) -> CliResult<DatasetInfo> {
    let cfg = synth.config();
    if cfg.record_count == 0 {
        return Err(CliError::usage("--records must be at least 1"));
    }
    cfg.validate().map_err(usage_from)?;
    let (_, test) = split_indices(cfg.record_count, synth.test_fraction, ctx.seed).map_err(usage_from)?;
    let records = build_dataset(&cfg, ctx.seed)?;
    ensure_dir(dir)?;
    let mut manifest = ctx.manifest("generate");
    let mut entries = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let file = record_file_name(i);
        let path = dir.join(&file);
        write_record_csv(record, &path)?;
        manifest.output(&path);
        let split = if test.binary_search(&i).is_ok() {
            Split::Test
        } else {
            Split::Train
        };
        entries.push(RecordEntry {
            file,
            seed: record.seed,
            split,
        });
    }
    let info = DatasetInfo {
        synth: cfg,
        master_seed: ctx.seed,
        test_fraction: synth.test_fraction,
        split_seed: ctx.seed,
        records: entries,
    };
    manifest.seed("split", ctx.seed).dataset(info.clone());
    manifest.write(&dir.join(DATASET_MANIFEST))?;
    log::info!("{} records ({} test) in {}", info.records.len(), test.len(), dir.display());
    Ok(info)
}

fn load_split(data: &Path, info: &DatasetInfo, split: Split) -> CliResult<Vec<DatasetRecord>> {
    let entries: Vec<&RecordEntry> = info.entries(split).collect();
    Ok(entries
        .par_iter()
        .map(|e| read_record_csv(&data.join(&e.file), e.seed))
        .collect::<eegemd::Result<Vec<_>>>()?)
}

/// Content id of a dataset split: hashes of its files in manifest order.
fn split_id(data: &Path, info: &DatasetInfo, split: Split) -> CliResult<String> {
    let mut text = String::new();
    for e in info.entries(split) {
        let digest = file_digest(&data.join(&e.file))?;
        let _ = writeln!(text, "{} {}", e.file, digest.sha256);
    }
    Ok(format!("sha256:{}", sha256_hex(text.as_bytes())))
}

fn pairs_of(records: &[DatasetRecord], window: &WindowArgs) -> CliResult<Vec<eegemd::encoder::TrainingPair>> {
    let per_record = records
        .par_iter()
        .map(|r| make_training_pairs(r, window.window_len, window.hop, &[Polarity::Upper, Polarity::Lower]))
        .collect::<eegemd::Result<Vec<_>>>()?;
    Ok(per_record.into_iter().flatten().collect())
}

fn history_csv(history: &[EpochStats]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    let mut out = String::from("epoch,train_loss,train_mse,train_mae,val_mse,val_mae\n");
    for s in history {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{},{}",
            s.epoch,
            s.train_loss,
            s.train_mse,
            s.train_mae,
            opt(s.val_mse),
            opt(s.val_mae)
        );
    }
    out
}

/// Train on the dataset's train split, validating on its test split.
fn train(
    ctx: &Ctx,
    data: &Path,
    config: &EncoderConfig,
    window: &WindowArgs,
    model_dir: &Path,
) -> CliResult<(PathBuf, Vec<EpochStats>)> {
    check_window(window)?;
    config.validate().map_err(usage_from)?;
    let info = read_dataset_info(data)?;
    let train_records = load_split(data, &info, Split::Train)?;
    let val_records = load_split(data, &info, Split::Test)?;
    let pairs = pairs_of(&train_records, window)?;
    let val = pairs_of(&val_records, window)?;
    log::info!("{} training pairs, {} validation pairs", pairs.len(), val.len());
    let epochs = config.epochs;
    let (params, history) = train_with_progress(&pairs, &val, config, |s| {
        log::info!(
            "epoch {}/{epochs}: loss {:.6} mse {:.6} val_mse {}",
            s.epoch,
            s.train_loss,
            s.train_mse,
            s.val_mse.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
        );
    })?;
    ensure_dir(model_dir)?;
    let weights = model_dir.join(WEIGHTS_FILE);
    let history_path = model_dir.join(HISTORY_FILE);
    write_atomic(&weights, weights_to_string(&params, config)?.as_bytes())?;
    write_atomic(&history_path, history_csv(&history).as_bytes())?;
    let mut manifest = ctx.manifest("train");
    manifest
        .seed("init", config.seed)
        .input(&data.join(DATASET_MANIFEST))
        .output(&weights)
        .output(&history_path);
    manifest.write(&sidecar_path(&weights))?;
    Ok((weights, history))
}

fn print_training(weights: &Path, history: &[EpochStats]) {
    match history.last() {
        Some(s) => println!(
            "trained {} epochs: train_mse {:.6}, val_mse {}",
            s.epoch,
            s.train_mse,
            s.val_mse.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
        ),
        None => println!("0 epochs: saved the initial parameters"),
    }
    println!("weights: {}", weights.display());
}

fn load_learned(weights: &Path) -> CliResult<InterpolatorKind> {
    Ok(InterpolatorKind::Learned(Arc::new(LearnedInterpolator::load(weights)?)))
}

fn resolve_single_method(method: Option<MethodArg>, weights: Option<&Path>) -> CliResult<InterpolatorKind> {
    match (method, weights) {
        (None, None) => Err(CliError::usage("give --method or --weights")),
        (Some(MethodArg::Learned) | None, Some(w)) => load_learned(w),
        (Some(MethodArg::Learned), None) => Err(CliError::usage("the learned method needs --weights")),
        (Some(_), Some(_)) => Err(CliError::usage("--weights only applies to the learned method")),
        (Some(MethodArg::Linear), None) => Ok(InterpolatorKind::Linear),
        (Some(MethodArg::Spline), None) => Ok(InterpolatorKind::CubicSpline),
    }
}

fn resolve_methods(methods: &[MethodArg], weights: Option<&Path>) -> CliResult<Vec<InterpolatorKind>> {
    if methods.is_empty() {
        return Err(CliError::usage("--methods is empty"));
    }
    let mut learned: Option<InterpolatorKind> = None;
    let mut kinds = Vec::with_capacity(methods.len());
    for m in methods {
        let kind = match m {
            MethodArg::Linear => InterpolatorKind::Linear,
            MethodArg::Spline => InterpolatorKind::CubicSpline,
            MethodArg::Learned => {
                if learned.is_none() {
                    let w = weights.ok_or_else(|| CliError::usage("the learned method needs --weights"))?;
                    learned = Some(load_learned(w)?);
                }
                learned.clone().expect("loaded above")
            }
        };
        kinds.push(kind);
    }
    Ok(kinds)
}

/// Shrink the window to the signal when it is shorter.
fn fit_window(window: WindowParams, len: usize) -> WindowParams {
    if window.window_len > len {
        log::info!("signal has {len} samples; using a single {len}-sample window");
        WindowParams {
            window_len: len,
            hop: window.hop.min(len),
        }
    } else {
        window
    }
}

fn denoise(ctx: &Ctx, input: &Path, kind: InterpolatorKind, mode: DenoiseMode, output: &Path) -> CliResult<()> {
    let ts = read_signal_csv(input)?;
    let mode = match mode {
        DenoiseMode::MeanEnvelope { window } if kind.is_classical() => DenoiseMode::MeanEnvelope {
            window: fit_window(window, ts.len()),
        },
        m => m,
    };
    let denoiser = EnvelopeDenoiser { kind, mode };
    let cleaned = denoiser.denoise(&ts)?;
    write_signal_csv(&cleaned, output)?;
    let mut manifest = ctx.manifest("denoise");
    manifest.input(input).output(output);
    manifest.write(&sidecar_path(output))?;
    Ok(())
}

fn evaluate(
    ctx: &Ctx,
    data: &Path,
    kinds: &[InterpolatorKind],
    mode: DenoiseMode,
    report_path: &Path,
) -> CliResult<EvalReport> {
    if let DenoiseMode::MeanEnvelope { window } = mode {
        if window.window_len < 2 || window.hop == 0 {
            return Err(CliError::usage("window length must be at least 2 and hop positive"));
        }
    }
    let info = read_dataset_info(data)?;
    let records = load_split(data, &info, Split::Test)?;
    let id = split_id(data, &info, Split::Test)?;
    let report = evaluate_methods(&records, kinds, mode, &id)?;
    if let Some(dir) = report_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_json_atomic(report_path, &report)?;
    let mut manifest = ctx.manifest("evaluate");
    manifest.input(&data.join(DATASET_MANIFEST)).output(report_path);
    manifest.write(&sidecar_path(report_path))?;
    Ok(report)
}

/// Plain-text table of an evaluation report.
pub fn report_table(report: &EvalReport) -> String {
    let mut out = format!(
        "{:<14} {:>5} {:>16} {:>16} {:>8}\n",
        "method", "n", "SNR dB", "alpha ratio", "failed"
    );
    let fmt = |s: Option<eegemd::metrics::Summary>| {
        s.map(|s| format!("{:.3} ± {:.3}", s.mean, s.std))
            .unwrap_or_else(|| "-".into())
    };
    for m in std::iter::once(&report.baseline).chain(&report.methods) {
        let _ = writeln!(
            out,
            "{:<14} {:>5} {:>16} {:>16} {:>8}",
            m.method,
            m.evaluated,
            fmt(m.snr_db),
            fmt(m.alpha_power_ratio),
            m.failures.len()
        );
    }
    out
}

fn plot(
    ctx: &Ctx,
    input: &Path,
    denoised: &[PathBuf],
    envelopes: Option<&InterpolatorKind>,
    window: WindowParams,
    title: Option<&str>,
    output: &Path,
) -> CliResult<()> {
    let file = read_signal_file(input)?;
    let observed = file.observed();
    let mut series = Vec::new();
    let mut push = |label: String, values: Vec<f64>| {
        let color = PALETTE[series.len() % PALETTE.len()];
        series.push(PlotSeries::new(label, color, values));
    };
    match &file {
        SignalFile::Single(ts) => push("signal".into(), ts.samples().to_vec()),
        SignalFile::Record {
            clean, contaminated, ..
        } => {
            push("contaminated".into(), contaminated.samples().to_vec());
            push("clean".into(), clean.samples().to_vec());
        }
    }
    if let Some(kind) = envelopes {
        let window = if kind.is_classical() {
            fit_window(window, observed.len())
        } else {
            window
        };
        let env = windowed_envelopes(observed, kind, window)?;
        let name = kind.name();
        push(format!("upper ({name})"), env.upper);
        push(format!("lower ({name})"), env.lower);
        push(format!("mean ({name})"), env.mean);
    }
    for path in denoised {
        let ts = read_signal_csv(path)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        push(label, ts.into_samples());
    }
    let default_title = input
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let svg = render_svg(title.unwrap_or(&default_title), observed.rate(), &series)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_atomic(output, svg.as_bytes())?;
    let mut manifest = ctx.manifest("plot");
    manifest.input(input);
    for p in denoised {
        manifest.input(p);
    }
    manifest.output(output);
    manifest.write(&sidecar_path(output))?;
    Ok(())
}

/// generate, train, evaluate all three methods, then plot the first test
/// record with learned and linear envelopes.
fn pipeline(ctx: &Ctx, synth: &SynthArgs, config: &EncoderConfig, window: &WindowArgs, out: &Path) -> CliResult<()> {
    check_window(window)?;
    config.validate().map_err(usage_from)?;
    let data = out.join("dataset");
    let info = generate(ctx, synth, &data)?;
    let (weights, history) = train(ctx, &data, config, window, &out.join("model"))?;
    print_training(&weights, &history);

    let learned = load_learned(&weights)?;
    let kinds = [InterpolatorKind::Linear, InterpolatorKind::CubicSpline, learned.clone()];
    let mode = DenoiseMode::MeanEnvelope {
        window: window.params(),
    };
    let report_path = out.join(REPORT_FILE);
    let report = evaluate(ctx, &data, &kinds, mode, &report_path)?;
    print!("{}", report_table(&report));

    let mut outputs = vec![weights.clone(), report_path.clone()];
    if let Some(first) = info.entries(Split::Test).next().or_else(|| info.records.first()) {
        let input = data.join(&first.file);
        let stem = first.file.trim_end_matches(".csv");
        for kind in [&learned, &InterpolatorKind::Linear] {
            let svg = out.join("plots").join(format!("{stem}_{}.svg", kind.name()));
            let title = format!("{stem}: {} envelopes", kind.name());
            plot(ctx, &input, &[], Some(kind), window.params(), Some(&title), &svg)?;
            outputs.push(svg);
        }
    }
    let mut manifest = ctx.manifest("pipeline");
    manifest.input(&data.join(DATASET_MANIFEST));
    for p in &outputs {
        manifest.output(p);
    }
    manifest.write(&out.join("pipeline.manifest.json"))?;
    println!("outputs in {}", out.display());
    Ok(())
}
