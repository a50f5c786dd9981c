//! Message-passing receivers for grant-free LDS-OFDM uplinks.
//!
//! K of U users are active and each spreads QPSK symbols over `d_c` of N
//! subcarriers with a binary low-density signature. The receivers recover
//! who is active, their channels and their symbols from one block of L
//! observations with no pilots beyond one reference symbol per user.
//!
//! - [`mf::run_mf`]: mean-field detector.
//! - [`bpmf::run_bpmf`]: hybrid BP / mean-field detector with a Gaussian
//!   pre-processor.
//! - [`harness`]: Monte-Carlo driver producing BER / AER tables.

pub mod bpmf;
pub mod codebook;
pub mod error;
pub mod gaussian;
pub mod grid;
pub mod harness;
pub mod init;
pub mod link;
pub mod metrics;
pub mod mf;
pub mod receiver;
pub mod seed;
pub mod uad;

pub use codebook::Codebook;
pub use error::{Error, Result};
pub use gaussian::{Clamps, DiscreteDist, GaussianMsg};
pub use grid::Grid;
pub use harness::{Algorithm, Detector, SimConfig, SnrSummary, TrialResult};
pub use link::{Frame, GroundTruth, QPSK};
pub use num_complex::Complex64;
pub use receiver::{Genie, ReceiverOutput, RxParams};
