//! Types shared by both detectors.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gaussian::{argmax, Clamps, GaussianMsg};
use crate::grid::Grid;
use crate::link::{QPSK, REFERENCE_INDEX};

/// Side information handed to a receiver for the genie baselines.
#[derive(Debug, Clone, Default)]
pub enum Genie {
    #[default]
    None,
    /// Branch k is fixed to user `identities[k]`.
    Identities(Vec<usize>),
    /// Identities plus the exact N x K equivalent channel.
    IdentitiesAndChannel {
        identities: Vec<usize>,
        channel: Grid<Complex64>,
    },
}

impl Genie {
    pub fn identities(&self) -> Option<&[usize]> {
        match self {
            Genie::None => None,
            Genie::Identities(ids) => Some(ids),
            Genie::IdentitiesAndChannel { identities, .. } => Some(identities),
        }
    }

    pub fn channel(&self) -> Option<&Grid<Complex64>> {
        match self {
            Genie::IdentitiesAndChannel { channel, .. } => Some(channel),
            _ => None,
        }
    }
}

/// Iteration budget and numerical limits of one receiver run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxParams {
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// Outer iterations of the BP-MF run spent in the Gaussian-symbol
    /// pre-processor; counted inside `outer_iters`.
    pub preprocess_iters: usize,
    pub clamps: Clamps,
}

impl Default for RxParams {
    fn default() -> Self {
        Self {
            outer_iters: 25,
            inner_iters: 5,
            preprocess_iters: 5,
            clamps: Clamps::default(),
        }
    }
}

impl RxParams {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::Config("iteration counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Hard decisions after one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub identities: Vec<usize>,
    /// K x L constellation indices, rotated so the reference column reads
    /// [`REFERENCE_INDEX`].
    pub decisions: Grid<u8>,
}

#[derive(Debug, Clone)]
pub struct ReceiverOutput {
    /// K x U identity probabilities.
    pub identity_beliefs: Grid<f64>,
    pub identities: Vec<usize>,
    /// N x K channel beliefs.
    pub channel: Grid<GaussianMsg>,
    /// K x L posterior probabilities over [`QPSK`].
    pub symbol_probs: Grid<[f64; 4]>,
    pub decisions: Grid<u8>,
    pub noise_precision: f64,
    pub trace: Vec<Snapshot>,
    /// Divisions that hit the variance cap.
    pub clamped: usize,
}

/// Posterior over QPSK given a Gaussian observation of the symbol, and
/// its Gaussian projection.
pub fn symbol_posterior(obs: GaussianMsg, clamps: &Clamps) -> ([f64; 4], GaussianMsg) {
    let mut lw = [0.0; 4];
    for (w, q) in lw.iter_mut().zip(QPSK) {
        *w = -(q - obs.mean).norm_sqr() / obs.var;
    }
    let probs = softmax4(lw);
    (probs, project_symbol(&probs, clamps))
}

#[inline]
pub(crate) fn softmax4(mut lw: [f64; 4]) -> [f64; 4] {
    let m = lw[0].max(lw[1]).max(lw[2]).max(lw[3]);
    let mut s = 0.0;
    for w in lw.iter_mut() {
        *w = (*w - m).exp();
        s += *w;
    }
    for w in lw.iter_mut() {
        *w /= s;
    }
    lw
}

/// Mean and variance of a distribution over [`QPSK`].
#[inline]
pub fn project_symbol(probs: &[f64; 4], clamps: &Clamps) -> GaussianMsg {
    let mean: Complex64 = probs.iter().zip(QPSK).map(|(&p, q)| q * p).sum();
    GaussianMsg::new(mean, clamps.var(1.0 - mean.norm_sqr()))
}

/// Argmax decisions, derotated so that each branch's reference symbol
/// lands on [`REFERENCE_INDEX`].
pub fn decide(probs: &Grid<[f64; 4]>) -> Grid<u8> {
    let (k, l) = probs.shape();
    let mut out = Grid::filled(k, l, 0u8);
    for kk in 0..k {
        let row = probs.row(kk);
        let raw: Vec<usize> = row.iter().map(|p| argmax(p)).collect();
        let rot = (4 + REFERENCE_INDEX - raw[0]) % 4;
        for (o, r) in out.row_mut(kk).iter_mut().zip(raw) {
            *o = ((r + rot) % 4) as u8;
        }
    }
    out
}

pub(crate) fn check_finite(v: f64, what: &'static str, outer: usize, index: usize) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { what, outer, index })
    }
}

pub(crate) fn initial_noise_precision(y: &Grid<Complex64>, clamps: &Clamps) -> f64 {
    let e: f64 = y.as_slice().iter().map(|v| v.norm_sqr()).sum();
    clamps.precision(y.as_slice().len() as f64 / e)
}
