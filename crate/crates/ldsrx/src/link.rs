//! Transmitter and AWGN channel for one block of L symbols per user.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::codebook::{sample_active_set, Codebook};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::seed::{stream_rng, Stream};

/// Gray-mapped QPSK, indexed so that index i+1 is index i rotated by 90°.
pub const QPSK: [Complex64; 4] = [
    Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    Complex64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

/// Bit pairs carried by each entry of [`QPSK`].
pub const QPSK_BITS: [[u8; 2]; 4] = [[0, 0], [0, 1], [1, 1], [1, 0]];

/// Constellation index of the per-user reference symbol sent first.
pub const REFERENCE_INDEX: usize = 0;

pub fn bits_to_index(b0: u8, b1: u8) -> usize {
    match (b0 & 1, b1 & 1) {
        (0, 0) => 0,
        (0, 1) => 1,
        (1, 1) => 2,
        _ => 3,
    }
}

pub fn snr_to_noise_var(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Map a K x 2(L-1) bit matrix to K x L symbols, reference symbol first.
pub fn modulate_frame(bits: &Grid<u8>, block_len: usize) -> Result<Grid<Complex64>> {
    if block_len == 0 || bits.cols() != 2 * (block_len - 1) {
        return Err(Error::Contract(format!(
            "{} bit columns do not fit a block of {block_len} symbols",
            bits.cols()
        )));
    }
    Ok(Grid::from_fn(bits.rows(), block_len, |k, l| {
        if l == 0 {
            QPSK[REFERENCE_INDEX]
        } else {
            QPSK[bits_to_index(bits[(k, 2 * l - 2)], bits[(k, 2 * l - 1)])]
        }
    }))
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Noise-free superposition H X.
pub fn superpose(channel: &Grid<Complex64>, symbols: &Grid<Complex64>) -> Grid<Complex64> {
    let (n, k) = channel.shape();
    let l = symbols.cols();
    let mut y = Grid::filled(n, l, Complex64::new(0.0, 0.0));
    for r in 0..n {
        let out = y.row_mut(r);
        for kk in 0..k {
            let h = channel[(r, kk)];
            if h == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(symbols.row(kk)) {
                *o += h * x;
            }
        }
    }
    y
}

/// Y = H X + W with W i.i.d. CN(0, noise_var).
pub fn awgn_transmit<R: Rng + ?Sized>(
    channel: &Grid<Complex64>,
    symbols: &Grid<Complex64>,
    noise_var: f64,
    rng: &mut R,
) -> Result<Grid<Complex64>> {
    if channel.cols() != symbols.rows() {
        return Err(Error::Contract(format!(
            "channel {:?} and symbols {:?} do not compose",
            channel.shape(),
            symbols.shape()
        )));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::Contract(format!("noise variance {noise_var}")));
    }
    let mut y = superpose(channel, symbols);
    if noise_var > 0.0 {
        for v in y.as_mut_slice() {
            *v += complex_normal(rng, noise_var);
        }
    }
    Ok(y)
}

/// What was actually transmitted in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub identities: Vec<usize>,
    pub gains: Grid<Complex64>,
    pub channel: Grid<Complex64>,
    pub symbols: Grid<Complex64>,
}

/// Transmitted bits and the observation handed to a receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub tx_bits: Grid<u8>,
    pub received: Grid<Complex64>,
    pub noise_var: f64,
}

/// Draw one trial; every random component uses its own derived stream.
pub fn simulate_trial(
    codebook: &Codebook,
    n_active: usize,
    block_len: usize,
    noise_var: f64,
    master_seed: u64,
    trial: u64,
) -> Result<(GroundTruth, Frame)> {
    let n = codebook.n_subcarriers();
    let identities = sample_active_set(
        codebook.n_users(),
        n_active,
        &mut stream_rng(master_seed, Stream::Activity, trial),
    )?;
    let mut rng = stream_rng(master_seed, Stream::Gains, trial);
    let gains = Grid::from_fn(n, n_active, |_, _| complex_normal(&mut rng, 1.0));
    let channel = codebook.equivalent_channel(&identities, &gains)?;
    let mut rng = stream_rng(master_seed, Stream::Bits, trial);
    let payload = 2 * block_len.saturating_sub(1);
    let tx_bits = Grid::from_fn(n_active, payload, |_, _| rng.random_range(0..2u8));
    let symbols = modulate_frame(&tx_bits, block_len)?;
    let received = awgn_transmit(
        &channel,
        &symbols,
        noise_var,
        &mut stream_rng(master_seed, Stream::Noise, trial),
    )?;
    Ok((
        GroundTruth {
            identities,
            gains,
            channel,
            symbols,
        },
        Frame {
            tx_bits,
            received,
            noise_var,
        },
    ))
}

pub const DUMP_VERSION: u32 = 1;

/// Write `N,K,U,L,d_c,noise_var,seed,version` followed by Y, H and X as
/// little-endian f64 (re, im) pairs in row-major order.
pub fn dump_frame(
    path: &Path,
    codebook: &Codebook,
    truth: &GroundTruth,
    frame: &Frame,
    seed: u64,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "{},{},{},{},{},{:e},{},{}",
        codebook.n_subcarriers(),
        truth.identities.len(),
        codebook.n_users(),
        frame.received.cols(),
        codebook.col_weight(),
        frame.noise_var,
        seed,
        DUMP_VERSION
    )?;
    for m in [&frame.received, &truth.channel, &truth.symbols] {
        for v in m.as_slice() {
            out.write_all(&v.re.to_le_bytes())?;
            out.write_all(&v.im.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Header and payload of a dumped frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDump {
    pub n_subcarriers: usize,
    pub n_active: usize,
    pub n_users: usize,
    pub block_len: usize,
    pub col_weight: usize,
    pub noise_var: f64,
    pub seed: u64,
    pub version: u32,
    pub received: Grid<Complex64>,
    pub channel: Grid<Complex64>,
    pub symbols: Grid<Complex64>,
}

pub fn read_frame_dump(path: &Path) -> Result<FrameDump> {
    let bytes = std::fs::read(path)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Contract("frame dump has no header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::Contract("frame dump header is not UTF-8".into()))?;
    let f: Vec<&str> = header.split(',').collect();
    if f.len() != 8 {
        return Err(Error::Contract(format!("{} header fields, expected 8", f.len())));
    }
    let bad = |what: &str| Error::Contract(format!("bad header field {what}"));
    let int = |i: usize, what: &str| f[i].parse::<usize>().map_err(|_| bad(what));
    let (n, k, u, l, dc) = (
        int(0, "N")?,
        int(1, "K")?,
        int(2, "U")?,
        int(3, "L")?,
        int(4, "d_c")?,
    );
    let noise_var = f[5].parse::<f64>().map_err(|_| bad("noise_var"))?;
    let seed = f[6].parse::<u64>().map_err(|_| bad("seed"))?;
    let version = f[7].parse::<u32>().map_err(|_| bad("version"))?;
    let mut values = bytes[nl + 1..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    let expected = 2 * (n * l + n * k + k * l);
    if bytes.len() - nl - 1 != 8 * expected {
        return Err(Error::Contract("frame dump payload size mismatch".into()));
    }
    let mut take = |rows: usize, cols: usize| {
        Grid::from_fn(rows, cols, |_, _| {
            let re = values.next().unwrap_or(f64::NAN);
            let im = values.next().unwrap_or(f64::NAN);
            Complex64::new(re, im)
        })
    };
    let received = take(n, l);
    let channel = take(n, k);
    let symbols = take(k, l);
    Ok(FrameDump {
        n_subcarriers: n,
        n_active: k,
        n_users: u,
        block_len: l,
        col_weight: dc,
        noise_var,
        seed,
        version,
        received,
        channel,
        symbols,
    })
}
