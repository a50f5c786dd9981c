//! Mean-field multiuser detector joined with activity detection and
//! channel estimation.

use num_complex::Complex64;

use crate::codebook::Codebook;
use crate::error::Result;
use crate::gaussian::{gaussian_product, Clamps, GaussianMsg};
use crate::grid::Grid;
use crate::init::rank_one_pursuit;
use crate::receiver::{
    check_finite, decide, initial_noise_precision, symbol_posterior, Genie, ReceiverOutput,
    RxParams, Snapshot,
};
use crate::uad::activity_update;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Turn a precision and precision-weighted mean into a message; too little
/// precision gives the vacuous message.
#[inline]
pub(crate) fn from_natural(eta: Complex64, precision: f64, clamps: &Clamps) -> GaussianMsg {
    if !(precision > 1.0 / clamps.var_cap) {
        return GaussianMsg::vacuous(clamps);
    }
    GaussianMsg::new(eta / precision, clamps.var(1.0 / precision))
}

/// Message from observation y[n,l] to symbol x[k,l], given the channel
/// belief of (n,k) and the interference `others` = sum over k' != k of
/// h[n,k'] x[k',l].
pub fn mf_obs_to_symbol(
    y: Complex64,
    others: Complex64,
    channel: GaussianMsg,
    lambda: f64,
    clamps: &Clamps,
) -> GaussianMsg {
    let a = channel.second_moment();
    from_natural(channel.mean.conj() * (y - others) * lambda, lambda * a, clamps)
}

/// Message from observation y[n,l] to channel h[n,k], given the symbol
/// belief of (k,l) and the interference of the other users.
pub fn mf_obs_to_channel(
    y: Complex64,
    others: Complex64,
    symbol: GaussianMsg,
    lambda: f64,
    clamps: &Clamps,
) -> GaussianMsg {
    let b = symbol.second_moment();
    from_natural(symbol.mean.conj() * (y - others) * lambda, lambda * b, clamps)
}

/// Precision-weighted combination of independent messages about one
/// variable.
pub fn fuse_messages(msgs: &[GaussianMsg], clamps: &Clamps) -> GaussianMsg {
    let mut eta = ZERO;
    let mut precision = 0.0;
    for m in msgs {
        eta += m.mean / m.var;
        precision += 1.0 / m.var;
    }
    from_natural(eta, precision, clamps)
}

/// Noise precision from the expected squared residual under the current
/// channel and symbol beliefs.
pub fn estimate_noise_precision_mf(
    y: &Grid<Complex64>,
    channel: &Grid<GaussianMsg>,
    symbols: &Grid<GaussianMsg>,
    clamps: &Clamps,
) -> f64 {
    let (n_sc, l) = y.shape();
    let fit = fitted(channel, symbols);
    let mut total: f64 = y
        .as_slice()
        .iter()
        .zip(fit.as_slice())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    for n in 0..n_sc {
        for (k, h) in channel.row(n).iter().enumerate() {
            let (hm2, hv) = (h.mean.norm_sqr(), h.var);
            for x in symbols.row(k) {
                total += hm2 * x.var + x.mean.norm_sqr() * hv + hv * x.var;
            }
        }
    }
    clamps.precision((n_sc * l) as f64 / total)
}

pub(crate) fn fitted(channel: &Grid<GaussianMsg>, symbols: &Grid<GaussianMsg>) -> Grid<Complex64> {
    let (n_sc, k_act) = channel.shape();
    let l = symbols.cols();
    let mut out = Grid::filled(n_sc, l, ZERO);
    for n in 0..n_sc {
        let row = out.row_mut(n);
        for k in 0..k_act {
            let h = channel[(n, k)].mean;
            if h == ZERO {
                continue;
            }
            for (o, x) in row.iter_mut().zip(symbols.row(k)) {
                *o += h * x.mean;
            }
        }
    }
    out
}

/// Channel messages for every (n,k), each fused over the block.
pub(crate) fn channel_forward(
    y: &Grid<Complex64>,
    channel: &Grid<GaussianMsg>,
    symbols: &Grid<GaussianMsg>,
    lambda: f64,
    clamps: &Clamps,
) -> Grid<GaussianMsg> {
    let (n_sc, k_act) = channel.shape();
    let fit = fitted(channel, symbols);
    let weak = 1.0 / clamps.var_cap;
    let mut out = Grid::filled(n_sc, k_act, GaussianMsg::vacuous(clamps));
    for n in 0..n_sc {
        let (yr, fr) = (y.row(n), fit.row(n));
        for k in 0..k_act {
            let h = channel[(n, k)].mean;
            let mut eta = ZERO;
            let mut precision = 0.0;
            for ((x, &yv), &fv) in symbols.row(k).iter().zip(yr).zip(fr) {
                let p = lambda * x.second_moment();
                if p > weak {
                    eta += x.mean.conj() * (yv - fv + h * x.mean) * lambda;
                    precision += p;
                } else {
                    precision += weak;
                }
            }
            out[(n, k)] = from_natural(eta, precision, clamps);
        }
    }
    out
}

/// Symbol observations for every (k,l), each fused over subcarriers.
fn symbol_observations(
    y: &Grid<Complex64>,
    channel: &Grid<GaussianMsg>,
    symbols: &Grid<GaussianMsg>,
    lambda: f64,
    clamps: &Clamps,
) -> Grid<GaussianMsg> {
    let (n_sc, k_act) = channel.shape();
    let l = y.cols();
    let fit = fitted(channel, symbols);
    let weak = 1.0 / clamps.var_cap;
    let mut eta = Grid::filled(k_act, l, ZERO);
    let mut precision = Grid::filled(k_act, 1, 0.0);
    for n in 0..n_sc {
        let (yr, fr) = (y.row(n), fit.row(n));
        for k in 0..k_act {
            let h = channel[(n, k)];
            let p = lambda * h.second_moment();
            if p > weak {
                precision[(k, 0)] += p;
                let hc = h.mean.conj() * lambda;
                for (((e, x), &yv), &fv) in eta.row_mut(k).iter_mut().zip(symbols.row(k)).zip(yr).zip(fr) {
                    *e += hc * (yv - fv + h.mean * x.mean);
                }
            } else {
                precision[(k, 0)] += weak;
            }
        }
    }
    Grid::from_fn(k_act, l, |k, ll| {
        from_natural(eta[(k, ll)], precision[(k, 0)], clamps)
    })
}

pub(crate) fn pin_channel(channel: &mut Grid<GaussianMsg>, truth: &Grid<Complex64>, clamps: &Clamps) {
    for (c, &h) in channel.as_mut_slice().iter_mut().zip(truth.as_slice()) {
        *c = GaussianMsg::new(h, clamps.var_floor);
    }
}

/// Mean-field receiver: alternating activity detection, symbol detection,
/// noise-precision estimation and channel estimation.
pub fn run_mf(
    y: &Grid<Complex64>,
    codebook: &Codebook,
    n_active: usize,
    params: &RxParams,
    genie: &Genie,
) -> Result<ReceiverOutput> {
    params.validate()?;
    let clamps = &params.clamps;
    let (n_sc, l) = y.shape();
    let mut lambda = initial_noise_precision(y, clamps);
    let seeding = rank_one_pursuit(y, codebook, n_active, genie.identities());
    let mut symbols = seeding.symbols.map(|&x| GaussianMsg::new(x, 1.0));
    let mut probs = Grid::filled(n_active, l, [0.25; 4]);
    let mut channel = Grid::filled(n_sc, n_active, GaussianMsg::new(ZERO, clamps.var_floor));
    let mut forward = channel_forward(y, &channel, &symbols, lambda, clamps);

    let mut trace = Vec::with_capacity(params.outer_iters);
    let mut clamped = 0;
    let mut last = None;
    for outer in 0..params.outer_iters {
        let part = activity_update(codebook, &forward, genie.identities(), clamps)?;
        clamped += part.clamped;
        channel = part.channel.clone();
        if let Some(h) = genie.channel() {
            pin_channel(&mut channel, h, clamps);
        }
        for _ in 0..params.inner_iters {
            let obs = symbol_observations(y, &channel, &symbols, lambda, clamps);
            for (i, o) in obs.as_slice().iter().enumerate() {
                let (p, g) = symbol_posterior(*o, clamps);
                check_finite(g.mean.re + g.mean.im, "symbol mean", outer, i)?;
                probs.as_mut_slice()[i] = p;
                symbols.as_mut_slice()[i] = g;
            }
            lambda = estimate_noise_precision_mf(y, &channel, &symbols, clamps);
            check_finite(lambda, "noise precision", outer, 0)?;
            forward = channel_forward(y, &channel, &symbols, lambda, clamps);
            for (i, c) in channel.as_mut_slice().iter_mut().enumerate() {
                *c = gaussian_product(forward.as_slice()[i], part.backward.as_slice()[i], clamps);
            }
            if let Some(h) = genie.channel() {
                pin_channel(&mut channel, h, clamps);
            }
        }
        trace.push(Snapshot {
            identities: part.decisions(),
            decisions: decide(&probs),
        });
        last = Some(part);
    }
    let part = last.expect("at least one outer iteration");
    Ok(ReceiverOutput {
        identities: part.decisions(),
        identity_beliefs: part.beliefs,
        channel,
        decisions: decide(&probs),
        symbol_probs: probs,
        noise_precision: lambda,
        trace,
        clamped,
    })
}
