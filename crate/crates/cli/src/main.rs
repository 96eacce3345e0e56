use clap::Parser;
use eegemd_cli::Cli;

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("EEGEMD_LOG")
        .format_timestamp(None)
        .init();
    if let Err(e) = eegemd_cli::run(&cli) {
        eprintln!("eegemd: {e}");
        std::process::exit(e.exit_code());
    }
}
