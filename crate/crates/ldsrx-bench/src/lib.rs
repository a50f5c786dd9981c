//! Shared fixtures for the criterion benches.

use ldsrx::link::{simulate_trial, snr_to_noise_var};
use ldsrx::seed::{stream_rng, Stream};
use ldsrx::{Codebook, Complex64, Grid};

/// A Table-II-sized frame at the given SNR and column weight.
pub fn table_two_frame(col_weight: usize, snr_db: f64, seed: u64) -> (Codebook, Grid<Complex64>) {
    let codebook = Codebook::generate(128, 256, col_weight, &mut stream_rng(seed, Stream::Codebook, 0), seed)
        .expect("Table II dimensions are regular");
    let (_, frame) = simulate_trial(&codebook, 25, 40, snr_to_noise_var(snr_db), seed, 0)
        .expect("valid trial");
    (codebook, frame.received)
}
