use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ldsrx::harness::{parse_config_text, run_monte_carlo, write_csv};
use ldsrx::{Error, SimConfig, SnrSummary};

/// Monte-Carlo BER / AER simulator for grant-free LDS-OFDM receivers.
#[derive(Debug, Parser)]
#[command(name = "ldsrx", version)]
struct Cli {
    /// Receiver: mf, bpmf, id-aided or csi-id-aided
    #[arg(long)]
    algo: Option<String>,
    /// Number of subcarriers
    #[arg(long = "N")]
    n: Option<String>,
    /// Number of potential users
    #[arg(long = "U")]
    u: Option<String>,
    /// Number of active users
    #[arg(long = "K")]
    k: Option<String>,
    /// Symbols per block, including the reference symbol
    #[arg(long = "L")]
    l: Option<String>,
    /// Subcarriers occupied by each user
    #[arg(long)]
    dc: Option<String>,
    /// Comma-separated SNR points in dB
    #[arg(long = "snr-db", allow_hyphen_values = true)]
    snr_db: Option<String>,
    /// Monte-Carlo frames per SNR point
    #[arg(long)]
    trials: Option<String>,
    /// Outer receiver iterations
    #[arg(long = "outer-iters")]
    outer_iters: Option<String>,
    /// Inner iterations per outer iteration
    #[arg(long = "inner-iters")]
    inner_iters: Option<String>,
    /// Outer iterations given to the BP-MF pre-processor
    #[arg(long = "preprocess-iters")]
    preprocess_iters: Option<String>,
    /// Master seed
    #[arg(long)]
    seed: Option<String>,
    /// Detector used by the genie baselines (mf or bpmf)
    #[arg(long = "genie-detector")]
    genie_detector: Option<String>,
    /// Spreading matrix file (rows of 0/1) instead of a generated one
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// `key = value` file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add per-iteration BER / AER rows
    #[arg(long)]
    trace: bool,
    /// Write every simulated frame to this directory
    #[arg(long = "dump-frames")]
    dump_frames: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("missing required --snr-db (no config file given)")]
    MissingSnr,
    #[error("no SNR points configured")]
    EmptySnr,
    #[error("reading config {path}: {source}")]
    ConfigFile { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Sim(#[from] Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::MissingSnr | CliError::EmptySnr | CliError::ConfigFile { .. } => 2,
            CliError::Sim(Error::Config(_) | Error::CodebookFormat { .. }) => 2,
            _ => 1,
        }
    }
}

fn build_config(cli: &Cli) -> Result<SimConfig, CliError> {
    let mut config = SimConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ConfigFile {
            path: path.clone(),
            source,
        })?;
        for (k, v) in parse_config_text(&text)? {
            config.set(&k, &v)?;
        }
    } else if cli.snr_db.is_none() {
        return Err(CliError::MissingSnr);
    }
    let flags = [
        ("algo", &cli.algo),
        ("N", &cli.n),
        ("U", &cli.u),
        ("K", &cli.k),
        ("L", &cli.l),
        ("dc", &cli.dc),
        ("snr-db", &cli.snr_db),
        ("trials", &cli.trials),
        ("outer-iters", &cli.outer_iters),
        ("inner-iters", &cli.inner_iters),
        ("preprocess-iters", &cli.preprocess_iters),
        ("seed", &cli.seed),
        ("genie-detector", &cli.genie_detector),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            config.set(key, v)?;
        }
    }
    if let Some(p) = &cli.codebook {
        config.codebook_file = Some(p.clone());
    }
    if let Some(p) = &cli.dump_frames {
        config.dump_frames = Some(p.clone());
    }
    if config.snr_grid_db.is_empty() {
        return Err(CliError::EmptySnr);
    }
    config.validate()?;
    Ok(config)
}

fn print_summary(mut w: impl Write, config: &SimConfig, summaries: &[SnrSummary]) -> io::Result<()> {
    for s in summaries {
        writeln!(
            w,
            "{} snr {:>5} dB  ber {:.3e} (±{:.1e})  aer {:.3e} (±{:.1e})  lambda bias {:.3}",
            config.algorithm, s.snr_db, s.ber, s.ber_stderr, s.aer, s.aer_stderr, s.lambda_bias
        )?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = build_config(&cli)?;
    let summaries = run_monte_carlo(&config)?;
    match &cli.out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            write_csv(&mut f, &config, &summaries, cli.trace)?;
            f.flush()?;
            print_summary(io::stdout().lock(), &config, &summaries)?;
        }
        None => {
            write_csv(io::stdout().lock(), &config, &summaries, cli.trace)?;
            print_summary(io::stderr().lock(), &config, &summaries)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
