//! User-activity detection and channel-belief projection.
//!
//! Each active branch k carries a discrete belief over the U spreading
//! sequences. Observations enter through per-(n,k) Gaussian messages about
//! the equivalent channel h[n,k]; a sequence that does not occupy
//! subcarrier n forces h[n,k] = 0, one that does leaves h[n,k] ~ CN(0, 1).

use num_complex::Complex64;

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::gaussian::{
    gaussian_quotient, log_cn, softmax_in_place, Clamps, GaussianMsg, Quotient,
};
use crate::grid::Grid;

/// Gain prior CN(0, 1) seen by every occupied subcarrier.
pub const GAIN_PRIOR: GaussianMsg = GaussianMsg::new(Complex64::new(0.0, 0.0), 1.0);

#[inline]
fn vacant_loglik(forward: GaussianMsg) -> f64 {
    log_cn(Complex64::new(0.0, 0.0), forward.mean, forward.var)
}

#[inline]
fn occupied_loglik(forward: GaussianMsg, gain: GaussianMsg) -> f64 {
    log_cn(forward.mean, gain.mean, forward.var + gain.var)
}

/// Log-likelihood of every candidate identity given one channel message.
pub fn identity_loglik(
    codebook: &Codebook,
    n: usize,
    forward: GaussianMsg,
    gain: GaussianMsg,
) -> Vec<f64> {
    let vacant = vacant_loglik(forward);
    let occupied = occupied_loglik(forward, gain);
    (0..codebook.n_users())
        .map(|u| if codebook.bit(n, u) { occupied } else { vacant })
        .collect()
}

/// Posterior over identities from per-subcarrier log-likelihoods; `None`
/// means a uniform prior.
pub fn update_identity_beliefs(logliks: &[Vec<f64>], prior: Option<&[f64]>) -> Result<Vec<f64>> {
    let u = logliks
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Contract("no log-likelihood vectors".into()))?;
    let mut acc = match prior {
        Some(p) => p.iter().map(|x| x.ln()).collect(),
        None => vec![0.0; u],
    };
    for ll in logliks {
        for (a, x) in acc.iter_mut().zip(ll) {
            *a += x;
        }
    }
    softmax_in_place(&mut acc)?;
    Ok(acc)
}

/// The backward identity message reuses the full posterior.
pub fn identity_backward_approx(beliefs: &[f64]) -> Vec<f64> {
    beliefs.to_vec()
}

/// Gaussian projection of the channel belief for (n, k) given the branch's
/// identity weights `beta` over all users.
pub fn channel_belief_moment_match(
    codebook: &Codebook,
    n: usize,
    forward: GaussianMsg,
    gain: GaussianMsg,
    beta: &[f64],
    clamps: &Clamps,
) -> GaussianMsg {
    let occupied_mass: f64 = (0..codebook.n_users())
        .filter(|&u| codebook.bit(n, u))
        .map(|u| beta[u])
        .sum();
    let vacant_mass: f64 = (0..codebook.n_users())
        .filter(|&u| !codebook.bit(n, u))
        .map(|u| beta[u])
        .sum();
    project_channel(forward, gain, vacant_mass, occupied_mass, clamps)
}

/// Per-edge quantities shared by the identity and channel updates:
/// `vacant_loglik - occupied_loglik` without the common normalizer, and
/// the forward message times the gain prior.
#[derive(Debug, Clone, Copy)]
struct Edge {
    gap: f64,
    post: GaussianMsg,
}

#[inline]
fn edge(forward: GaussianMsg, gain: GaussianMsg, clamps: &Clamps) -> Edge {
    let (m, v) = (forward.mean, forward.var);
    let w = v + gain.var;
    let (inv, iv) = (1.0 / w, 1.0 / v);
    let gap = (w * iv).ln() - m.norm_sqr() * iv + (m - gain.mean).norm_sqr() * inv;
    let post = GaussianMsg::new(
        (m * gain.var + gain.mean * v) * inv,
        clamps.var(v * gain.var * inv),
    );
    Edge { gap, post }
}

#[inline]
fn project_channel(
    forward: GaussianMsg,
    gain: GaussianMsg,
    vacant_mass: f64,
    occupied_mass: f64,
    clamps: &Clamps,
) -> GaussianMsg {
    project_edge(forward, edge(forward, gain, clamps), vacant_mass, occupied_mass, clamps)
}

#[inline]
fn project_edge(
    forward: GaussianMsg,
    e: Edge,
    vacant_mass: f64,
    occupied_mass: f64,
    clamps: &Clamps,
) -> GaussianMsg {
    let (p0, p1) = (vacant_mass.max(0.0), occupied_mass.max(0.0));
    // Posterior probability that the tap is occupied.
    let r = if p0 == 0.0 {
        1.0
    } else if p1 == 0.0 {
        0.0
    } else {
        p1 / (p1 + p0 * e.gap.exp())
    };
    if r.is_nan() {
        return GaussianMsg::new(forward.mean, clamps.var(forward.var));
    }
    GaussianMsg::new(
        e.post.mean * r,
        clamps.var(r * e.post.var + r * (1.0 - r) * e.post.mean.norm_sqr()),
    )
}

/// Message returned to the detector: belief divided by what it sent.
pub fn ep_backward(belief: GaussianMsg, forward: GaussianMsg, clamps: &Clamps) -> Quotient {
    gaussian_quotient(belief, forward, clamps)
}

/// Identity posteriors and channel messages of one activity-detection pass.
#[derive(Debug, Clone)]
pub struct ActivityUpdate {
    /// K x U identity probabilities.
    pub beliefs: Grid<f64>,
    /// N x K projected channel beliefs.
    pub channel: Grid<GaussianMsg>,
    /// N x K messages back to the detector.
    pub backward: Grid<GaussianMsg>,
    pub clamped: usize,
}

impl ActivityUpdate {
    /// Most probable identity of each branch, lowest index on ties.
    pub fn decisions(&self) -> Vec<usize> {
        (0..self.beliefs.rows())
            .map(|k| crate::gaussian::argmax(self.beliefs.row(k)))
            .collect()
    }
}

/// One full pass over every branch. `pinned` replaces the identity
/// posteriors by point masses on the given users.
pub fn activity_update(
    codebook: &Codebook,
    forward: &Grid<GaussianMsg>,
    pinned: Option<&[usize]>,
    clamps: &Clamps,
) -> Result<ActivityUpdate> {
    let (n_sc, k_act) = forward.shape();
    let n_users = codebook.n_users();
    if n_sc != codebook.n_subcarriers() {
        return Err(Error::Contract("forward messages do not match codebook".into()));
    }
    // Candidates differ only on their support, so each one's log-weight is
    // the sum of occupied-minus-vacant terms there.
    let edges = Grid::from_fn(k_act, n_sc, |k, n| edge(forward[(n, k)], GAIN_PRIOR, clamps));

    let mut beliefs = Grid::filled(k_act, n_users, 0.0);
    match pinned {
        Some(ids) => {
            for (k, &u) in ids.iter().enumerate() {
                beliefs[(k, u)] = 1.0;
            }
        }
        None => {
            for k in 0..k_act {
                let e = edges.row(k);
                let row = beliefs.row_mut(k);
                for (u, b) in row.iter_mut().enumerate() {
                    *b = -codebook.support(u).iter().map(|&n| e[n].gap).sum::<f64>();
                }
                softmax_in_place(row)?;
            }
        }
    }

    let mut occupied = Grid::filled(n_sc, k_act, 0.0);
    for k in 0..k_act {
        for u in 0..n_users {
            let b = beliefs[(k, u)];
            if b == 0.0 {
                continue;
            }
            for &n in codebook.support(u) {
                occupied[(n, k)] += b;
            }
        }
    }

    let mut channel = Grid::filled(n_sc, k_act, GaussianMsg::vacuous(clamps));
    let mut backward = channel.clone();
    let mut clamped = 0;
    for n in 0..n_sc {
        for k in 0..k_act {
            let p = occupied[(n, k)].min(1.0);
            let f = forward[(n, k)];
            let belief = project_edge(f, edges[(k, n)], 1.0 - p, p, clamps);
            let q = ep_backward(belief, f, clamps);
            clamped += q.clamped as usize;
            channel[(n, k)] = belief;
            backward[(n, k)] = q.msg;
        }
    }
    Ok(ActivityUpdate {
        beliefs,
        channel,
        backward,
        clamped,
    })
}
