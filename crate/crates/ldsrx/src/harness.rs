//! Monte-Carlo driver, configuration and CSV output.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::bpmf::run_bpmf;
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::gaussian::Clamps;
use crate::link::{dump_frame, simulate_trial, snr_to_noise_var};
use crate::metrics::{count_bit_errors, count_matches, match_identities};
use crate::mf::run_mf;
use crate::receiver::{Genie, ReceiverOutput, RxParams};
use crate::seed::{stream_rng, Stream};

/// Receiver selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Mf,
    Bpmf,
    IdAided,
    CsiIdAided,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Mf => "mf",
            Algorithm::Bpmf => "bpmf",
            Algorithm::IdAided => "id-aided",
            Algorithm::CsiIdAided => "csi-id-aided",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "mf" => Ok(Algorithm::Mf),
            "bpmf" | "bp-mf" => Ok(Algorithm::Bpmf),
            "id-aided" => Ok(Algorithm::IdAided),
            "csi-id-aided" => Ok(Algorithm::CsiIdAided),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Detector run underneath the genie baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    Mf,
    Bpmf,
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mf" => Ok(Detector::Mf),
            "bpmf" | "bp-mf" => Ok(Detector::Bpmf),
            other => Err(Error::Config(format!("unknown detector {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_subcarriers: usize,
    pub n_users: usize,
    pub n_active: usize,
    pub block_len: usize,
    pub col_weight: usize,
    pub snr_grid_db: Vec<f64>,
    pub trials: u64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub preprocess_iters: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub genie_detector: Detector,
    pub clamps: Clamps,
    pub codebook_file: Option<PathBuf>,
    pub dump_frames: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_subcarriers: 128,
            n_users: 256,
            n_active: 25,
            block_len: 40,
            col_weight: 16,
            snr_grid_db: Vec::new(),
            trials: 1000,
            outer_iters: 25,
            inner_iters: 5,
            preprocess_iters: 5,
            seed: 1,
            algorithm: Algorithm::Bpmf,
            genie_detector: Detector::Bpmf,
            clamps: Clamps::default(),
            codebook_file: None,
            dump_frames: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

/// Parse a comma-separated list of SNR points in dB.
pub fn parse_snr_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse::<f64>("snr-db", s))
        .collect()
}

/// Split `key = value` lines, skipping blanks and `#` comments.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl SimConfig {
    /// Apply one setting; keys are the long flag names without dashes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim().trim_start_matches("--") {
            "algo" | "algorithm" => self.algorithm = value.parse()?,
            "N" => self.n_subcarriers = parse(key, value)?,
            "U" => self.n_users = parse(key, value)?,
            "K" => self.n_active = parse(key, value)?,
            "L" => self.block_len = parse(key, value)?,
            "dc" => self.col_weight = parse(key, value)?,
            "snr-db" | "snr_db" => self.snr_grid_db = parse_snr_list(value)?,
            "trials" => self.trials = parse(key, value)?,
            "outer-iters" | "outer_iters" => self.outer_iters = parse(key, value)?,
            "inner-iters" | "inner_iters" => self.inner_iters = parse(key, value)?,
            "preprocess-iters" | "preprocess_iters" => self.preprocess_iters = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "genie-detector" | "genie_detector" => self.genie_detector = value.parse()?,
            "codebook" => self.codebook_file = Some(PathBuf::from(value.trim())),
            "dump-frames" | "dump_frames" => self.dump_frames = Some(PathBuf::from(value.trim())),
            "variance-floor" | "variance_floor" => self.clamps.var_floor = parse(key, value)?,
            "variance-cap" | "variance_cap" => self.clamps.var_cap = parse(key, value)?,
            "lambda-floor" | "lambda_floor" => self.clamps.precision_floor = parse(key, value)?,
            "lambda-cap" | "lambda_cap" => self.clamps.precision_cap = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 || self.n_users == 0 || self.block_len == 0 {
            return Err(Error::Config("N, U and L must be positive".into()));
        }
        if self.n_active == 0 || self.n_active > self.n_users {
            return Err(Error::Config(format!("K must lie in 1..={}", self.n_users)));
        }
        if self.col_weight == 0 || self.col_weight > self.n_subcarriers {
            return Err(Error::Config(format!("dc must lie in 1..={}", self.n_subcarriers)));
        }
        if (self.n_users * self.col_weight) % self.n_subcarriers != 0 {
            return Err(Error::Config("U*dc must be divisible by N".into()));
        }
        self.rx_params().validate()
    }

    pub fn rx_params(&self) -> RxParams {
        RxParams {
            outer_iters: self.outer_iters,
            inner_iters: self.inner_iters,
            preprocess_iters: self.preprocess_iters,
            clamps: self.clamps,
        }
    }

    /// The codebook from `codebook_file`, or one generated from the seed.
    pub fn codebook(&self) -> Result<Codebook> {
        let cb = match &self.codebook_file {
            Some(p) => Codebook::load(p)?,
            None => Codebook::generate(
                self.n_subcarriers,
                self.n_users,
                self.col_weight,
                &mut stream_rng(self.seed, Stream::Codebook, 0),
                self.seed,
            )?,
        };
        if cb.n_subcarriers() != self.n_subcarriers
            || cb.n_users() != self.n_users
            || cb.col_weight() != self.col_weight
        {
            return Err(Error::Config(format!(
                "codebook is {}x{} with dc {}, configuration asks for {}x{} with dc {}",
                cb.n_subcarriers(),
                cb.n_users(),
                cb.col_weight(),
                self.n_subcarriers,
                self.n_users,
                self.col_weight
            )));
        }
        Ok(cb)
    }
}

/// Counts from one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub bit_errors: usize,
    pub bits_total: usize,
    pub ids_correct: usize,
    pub n_active: usize,
    pub iters_run: usize,
    pub noise_precision: f64,
    pub noise_var: f64,
    /// (bit errors, identities correct) after each outer iteration.
    pub per_iter: Vec<(usize, usize)>,
}

impl TrialResult {
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.bits_total.max(1) as f64
    }

    pub fn aer(&self) -> f64 {
        (self.n_active - self.ids_correct) as f64 / self.n_active.max(1) as f64
    }
}

/// Run the configured receiver on one frame.
pub fn run_receiver(
    config: &SimConfig,
    codebook: &Codebook,
    received: &crate::grid::Grid<num_complex::Complex64>,
    genie: &Genie,
) -> Result<ReceiverOutput> {
    let params = config.rx_params();
    let detector = match config.algorithm {
        Algorithm::Mf => Detector::Mf,
        Algorithm::Bpmf => Detector::Bpmf,
        Algorithm::IdAided | Algorithm::CsiIdAided => config.genie_detector,
    };
    match detector {
        Detector::Mf => run_mf(received, codebook, config.n_active, &params, genie),
        Detector::Bpmf => run_bpmf(received, codebook, config.n_active, &params, genie),
    }
}

pub fn run_trial(
    config: &SimConfig,
    codebook: &Codebook,
    snr_db: f64,
    trial: u64,
) -> Result<TrialResult> {
    let wrap = |e: Error| Error::Trial {
        trial,
        snr_db,
        source: Box::new(e),
    };
    let noise_var = snr_to_noise_var(snr_db);
    let (truth, frame) = simulate_trial(
        codebook,
        config.n_active,
        config.block_len,
        noise_var,
        config.seed,
        trial,
    )
    .map_err(wrap)?;
    if let Some(dir) = &config.dump_frames {
        let path = dir.join(format!("frame_snr{snr_db}_trial{trial}.bin"));
        dump_frame(&path, codebook, &truth, &frame, config.seed).map_err(wrap)?;
    }
    let genie = match config.algorithm {
        Algorithm::Mf | Algorithm::Bpmf => Genie::None,
        Algorithm::IdAided => Genie::Identities(truth.identities.clone()),
        Algorithm::CsiIdAided => Genie::IdentitiesAndChannel {
            identities: truth.identities.clone(),
            channel: truth.channel.clone(),
        },
    };
    let out = run_receiver(config, codebook, &frame.received, &genie).map_err(wrap)?;
    let score = |ids: &[usize], dec: &crate::grid::Grid<u8>| {
        let m = match_identities(ids, &truth.identities);
        (count_bit_errors(dec, &m, &frame.tx_bits), count_matches(&m))
    };
    let per_iter = out
        .trace
        .iter()
        .map(|s| score(&s.identities, &s.decisions))
        .collect();
    let (bit_errors, ids_correct) = score(&out.identities, &out.decisions);
    Ok(TrialResult {
        bit_errors,
        bits_total: frame.tx_bits.rows() * frame.tx_bits.cols(),
        ids_correct,
        n_active: config.n_active,
        iters_run: out.trace.len(),
        noise_precision: out.noise_precision,
        noise_var,
        per_iter,
    })
}

/// Aggregate of all trials at one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrSummary {
    pub snr_db: f64,
    pub trials: u64,
    pub ber: f64,
    pub aer: f64,
    /// Standard errors of the trial-level BER and AER means.
    pub ber_stderr: f64,
    pub aer_stderr: f64,
    pub mean_outer_iters: f64,
    pub lambda_bias: f64,
    /// (iteration, BER, AER) after each outer iteration, 1-based.
    pub trace: Vec<(usize, f64, f64)>,
}

fn mean_and_stderr(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn summarize(snr_db: f64, results: &[TrialResult]) -> SnrSummary {
    let n = results.len();
    let total_bits: usize = results.iter().map(|r| r.bits_total).sum();
    let total_users: usize = results.iter().map(|r| r.n_active).sum();
    let ber = results.iter().map(|r| r.bit_errors).sum::<usize>() as f64 / total_bits.max(1) as f64;
    let aer = results.iter().map(|r| r.n_active - r.ids_correct).sum::<usize>() as f64
        / total_users.max(1) as f64;
    let (_, ber_stderr) = mean_and_stderr(results.iter().map(TrialResult::ber), n);
    let (_, aer_stderr) = mean_and_stderr(results.iter().map(TrialResult::aer), n);
    let iters = results.iter().map(|r| r.iters_run as f64).sum::<f64>() / n.max(1) as f64;
    let lambda_bias = results
        .iter()
        .map(|r| r.noise_precision * r.noise_var)
        .sum::<f64>()
        / n.max(1) as f64;
    let depth = results.iter().map(|r| r.per_iter.len()).max().unwrap_or(0);
    let trace = (0..depth)
        .map(|i| {
            let (mut be, mut ok) = (0usize, 0usize);
            for r in results {
                let (b, c) = r.per_iter.get(i).copied().unwrap_or((r.bit_errors, r.ids_correct));
                be += b;
                ok += c;
            }
            (
                i + 1,
                be as f64 / total_bits.max(1) as f64,
                (total_users - ok) as f64 / total_users.max(1) as f64,
            )
        })
        .collect();
    SnrSummary {
        snr_db,
        trials: n as u64,
        ber,
        aer,
        ber_stderr,
        aer_stderr,
        mean_outer_iters: iters,
        lambda_bias,
        trace,
    }
}

/// Every trial of every SNR point, in parallel over trials.
pub fn run_monte_carlo(config: &SimConfig) -> Result<Vec<SnrSummary>> {
    config.validate()?;
    let codebook = config.codebook()?;
    if let Some(dir) = &config.dump_frames {
        std::fs::create_dir_all(dir)?;
    }
    if config.trials == 0 {
        return Ok(Vec::new());
    }
    config
        .snr_grid_db
        .iter()
        .map(|&snr| {
            let results = (0..config.trials)
                .into_par_iter()
                .map(|t| run_trial(config, &codebook, snr, t))
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(snr, &results))
        })
        .collect()
}

pub const CSV_HEADER: &str = "algo,N,U,K,L,dc,snr_db,trials,ber,aer,mean_outer_iters,lambda_bias,seed";

fn csv_prefix(config: &SimConfig, s: &SnrSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{:.6e},{:.6e},{},{:.6},{}",
        config.algorithm,
        config.n_subcarriers,
        config.n_users,
        config.n_active,
        config.block_len,
        config.col_weight,
        s.snr_db,
        s.trials,
        s.ber,
        s.aer,
        s.mean_outer_iters,
        s.lambda_bias,
        config.seed
    )
}

/// One row per SNR point; with `trace`, one row per SNR point and outer
/// iteration with three extra columns.
pub fn write_csv<W: Write>(
    mut out: W,
    config: &SimConfig,
    summaries: &[SnrSummary],
    trace: bool,
) -> std::io::Result<()> {
    if trace {
        writeln!(out, "{CSV_HEADER},iter,ber_iter,aer_iter")?;
        for s in summaries {
            let prefix = csv_prefix(config, s);
            for &(i, b, a) in &s.trace {
                writeln!(out, "{prefix},{i},{b:.6e},{a:.6e}")?;
            }
        }
    } else {
        writeln!(out, "{CSV_HEADER}")?;
        for s in summaries {
            writeln!(out, "{}", csv_prefix(config, s))?;
        }
    }
    Ok(())
}
