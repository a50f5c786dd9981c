//! Hybrid BP / mean-field receiver.
//!
//! Each observation y[n,l] is split through auxiliary variables
//! psi[n,k,l] = h[n,k] x[k,l] and phi[n,l] = sum_k psi[n,k,l]. Sum-product
//! runs on the products and sums; the noise precision is handled by a
//! mean-field update. The first outer iterations run a pre-processor that
//! keeps symbol beliefs Gaussian and uses mean-field messages at the
//! product nodes.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::codebook::Codebook;
use crate::error::Result;
use crate::gaussian::{gaussian_product, Clamps, GaussianMsg};
use crate::grid::Grid;
use crate::init::rank_one_pursuit;
use crate::link::QPSK;
use crate::mf::{channel_forward, from_natural, pin_channel};
use crate::receiver::{
    check_finite, decide, initial_noise_precision, softmax4, symbol_posterior,
    Genie, ReceiverOutput, RxParams, Snapshot,
};
use crate::uad::activity_update;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Extrinsic message from channel h[n,k] towards one product node.
pub fn channel_to_fpsi(
    belief: GaussianMsg,
    from_fpsi: GaussianMsg,
    clamps: &Clamps,
) -> crate::gaussian::Quotient {
    crate::gaussian::gaussian_quotient(belief, from_fpsi, clamps)
}

/// Log-weights over QPSK from one product node: the density of the
/// backward psi message under psi = q h.
#[inline]
pub fn psi_symbol_loglik(psi_back: GaussianMsg, to_fpsi: GaussianMsg) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, q) in out.iter_mut().zip(QPSK) {
        let v = psi_back.var + q.norm_sqr() * to_fpsi.var;
        *o = crate::gaussian::log_cn(psi_back.mean, q * to_fpsi.mean, v);
    }
    out
}

/// Symbol posterior from all product nodes of (k,l), plus the
/// leave-one-out distributions sent back to each node.
pub fn bpmf_symbol_update(
    psi_back: &[GaussianMsg],
    to_fpsi: &[GaussianMsg],
) -> ([f64; 4], Vec<[f64; 4]>) {
    let lls: Vec<[f64; 4]> = psi_back
        .iter()
        .zip(to_fpsi)
        .map(|(&b, &h)| psi_symbol_loglik(b, h))
        .collect();
    let mut full = [0.0; 4];
    for ll in &lls {
        for q in 0..4 {
            full[q] += ll[q];
        }
    }
    let loo = lls
        .iter()
        .map(|ll| softmax4([0, 1, 2, 3].map(|q| full[q] - ll[q])))
        .collect();
    (softmax4(full), loo)
}

/// Gaussian projection of the forward psi message for a discrete symbol
/// distribution and a channel message.
pub fn fpsi_to_psi_project(gamma: &[f64; 4], to_fpsi: GaussianMsg, clamps: &Clamps) -> GaussianMsg {
    let wsum: f64 = gamma.iter().zip(QPSK).map(|(&g, q)| g * q.norm_sqr()).sum();
    let mut mean = ZERO;
    let mut second = 0.0;
    for (&g, q) in gamma.iter().zip(QPSK) {
        let w = g * q.norm_sqr() / wsum;
        mean += q * to_fpsi.mean * w;
        second += w * q.norm_sqr() * to_fpsi.second_moment();
    }
    GaussianMsg::new(mean, clamps.var(second - mean.norm_sqr()))
}

/// Forward message of phi[n,l] and its belief given the observation.
pub fn phi_forward_and_belief(
    psi_fwd: &[GaussianMsg],
    lambda: f64,
    y: Complex64,
) -> (GaussianMsg, GaussianMsg) {
    let mut mean = ZERO;
    let mut var = 0.0;
    for p in psi_fwd {
        mean += p.mean;
        var += p.var;
    }
    let belief = phi_belief(mean, var, lambda, y);
    (GaussianMsg::new(mean, var), belief)
}

#[inline]
fn phi_belief(mean: Complex64, var: f64, lambda: f64, y: Complex64) -> GaussianMsg {
    let d = 1.0 + var * lambda;
    GaussianMsg::new((mean + y * (var * lambda)) / d, var / d)
}

/// Noise precision from the residual between observations and phi beliefs.
pub fn estimate_noise_precision_bpmf(
    y: &Grid<Complex64>,
    phi: &Grid<Complex64>,
    clamps: &Clamps,
) -> f64 {
    let total: f64 = y
        .as_slice()
        .iter()
        .zip(phi.as_slice())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    clamps.precision(y.as_slice().len() as f64 / total)
}

/// Backward psi message for user k: observation minus the other users'
/// forward messages.
pub fn psi_backward(y: Complex64, others: &[GaussianMsg], lambda: f64) -> GaussianMsg {
    let mut mean = y;
    let mut var = 1.0 / lambda;
    for p in others {
        mean -= p.mean;
        var += p.var;
    }
    GaussianMsg::new(mean, var)
}

/// Gaussian projection of the message from a product node to h[n,k].
pub fn fpsi_to_channel_project(
    gamma: &[f64; 4],
    psi_back: GaussianMsg,
    clamps: &Clamps,
) -> GaussianMsg {
    let wsum: f64 = gamma.iter().zip(QPSK).map(|(&g, q)| g / q.norm_sqr()).sum();
    let mut mean = ZERO;
    let mut second = 0.0;
    for (&g, q) in gamma.iter().zip(QPSK) {
        let w = g / q.norm_sqr() / wsum;
        mean += psi_back.mean / q * w;
        second += w * psi_back.second_moment() / q.norm_sqr();
    }
    GaussianMsg::new(mean, clamps.var(second - mean.norm_sqr()))
}

/// Separable form of [`psi_symbol_loglik`] for Gray-mapped QPSK: the
/// q-dependent part of the log-weight is `re * sign(Re q) + im * sign(Im q)`.
#[inline]
pub fn psi_symbol_llr(psi_back: GaussianMsg, to_fpsi: GaussianMsg) -> Complex64 {
    let t = to_fpsi.mean * psi_back.mean.conj() * (2.0 / (psi_back.var + to_fpsi.var));
    t.conj() * FRAC_1_SQRT_2
}

/// QPSK distribution with separable log-weights `llr`.
pub fn llr_probs(llr: Complex64) -> [f64; 4] {
    let pr = 1.0 / (1.0 + (-2.0 * llr.re).exp());
    let pi = 1.0 / (1.0 + (-2.0 * llr.im).exp());
    QPSK.map(|q| {
        let a = if q.re > 0.0 { pr } else { 1.0 - pr };
        let b = if q.im > 0.0 { pi } else { 1.0 - pi };
        a * b
    })
}

/// Mean of the QPSK distribution with separable log-weights `llr`.
#[inline]
pub fn llr_mean(llr: Complex64) -> Complex64 {
    Complex64::new(llr.re.tanh(), llr.im.tanh()) * FRAC_1_SQRT_2
}

/// [`fpsi_to_psi_project`] for a unit-modulus constellation, given the
/// symbol distribution's mean.
#[inline]
pub fn qpsk_psi_forward(symbol_mean: Complex64, to_fpsi: GaussianMsg, clamps: &Clamps) -> GaussianMsg {
    let mean = to_fpsi.mean * symbol_mean;
    GaussianMsg::new(mean, clamps.var(to_fpsi.second_moment() - mean.norm_sqr()))
}

/// [`fpsi_to_channel_project`] for a unit-modulus constellation, given the
/// symbol distribution's mean.
#[inline]
pub fn qpsk_channel_backward(symbol_mean: Complex64, psi_back: GaussianMsg, clamps: &Clamps) -> GaussianMsg {
    let mean = psi_back.mean * symbol_mean.conj();
    GaussianMsg::new(mean, clamps.var(psi_back.second_moment() - mean.norm_sqr()))
}

/// Precision-weighted mean and precision of a Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Natural {
    eta: Complex64,
    prec: f64,
}

impl Natural {
    #[inline]
    fn of(mean: Complex64, var: f64) -> Self {
        let prec = 1.0 / var;
        Self { eta: mean * prec, prec }
    }

    /// Message from precision-weighted mean and precision, vacuous when
    /// the precision is below `1/var_cap` and capped at `1/var_floor`.
    #[inline]
    fn clamped(eta: Complex64, prec: f64, clamps: &Clamps) -> Self {
        let weak = 1.0 / clamps.var_cap;
        if !(prec > weak) {
            return Self { eta: ZERO, prec: weak };
        }
        let strong = 1.0 / clamps.var_floor;
        if prec > strong {
            return Self { eta: eta * (strong / prec), prec: strong };
        }
        Self { eta, prec }
    }

    /// Divide `self` by `den`, with the variance cap rule of
    /// [`gaussian_quotient`](crate::gaussian::gaussian_quotient).
    #[inline]
    fn divide(self, den: Natural, num_mean: Complex64, clamps: &Clamps) -> (GaussianMsg, bool) {
        let prec = self.prec - den.prec;
        if !(prec > 1.0 / clamps.var_cap) {
            return (GaussianMsg::new(num_mean, clamps.var_cap), true);
        }
        let var = 1.0 / prec;
        (GaussianMsg::new((self.eta - den.eta) * var, var.max(clamps.var_floor)), false)
    }
}

/// BP-MF receiver preceded by the Gaussian-symbol pre-processor.
pub fn run_bpmf(
    y: &Grid<Complex64>,
    codebook: &Codebook,
    n_active: usize,
    params: &RxParams,
    genie: &Genie,
) -> Result<ReceiverOutput> {
    params.validate()?;
    let clamps = &params.clamps;
    let (n_sc, l) = y.shape();
    let k_act = n_active;
    let size = n_sc * k_act * l;
    let weak = 1.0 / clamps.var_cap;
    let vac = Natural { eta: ZERO, prec: weak };

    let mut lambda = initial_noise_precision(y, clamps);
    let seeding = rank_one_pursuit(y, codebook, k_act, genie.identities());
    let mut symbols = seeding.symbols.map(|&x| GaussianMsg::new(x, 1.0));
    let mut probs = Grid::filled(k_act, l, [0.25; 4]);
    let mut channel = Grid::filled(n_sc, k_act, GaussianMsg::new(ZERO, clamps.var_floor));
    let mut forward = channel_forward(y, &channel, &symbols, lambda, clamps);

    // Edge arrays are laid out (n, k, l) with l fastest, so each (n,k)
    // owns the contiguous slice [(n*K + k)*L, (n*K + k + 1)*L).
    let mut to_channel = vec![vac; size];
    let mut to_symbol = vec![vac; size];
    let mut psi_fwd = vec![GaussianMsg::vacuous(clamps); size];
    // Mean of each product node's extrinsic symbol distribution; holds the
    // node's own LLR between the two halves of a symbol update.
    let mut extrinsic = vec![ZERO; size];
    let mut phi_mean = Grid::filled(n_sc, l, ZERO);
    let mut phi_var = Grid::filled(n_sc, l, 0.0);
    let mut sym_eta = Grid::filled(k_act, l, ZERO);
    let mut sym_prec = Grid::filled(k_act, l, 0.0);
    let mut llr = Grid::filled(k_act, l, ZERO);

    let mut trace = Vec::with_capacity(params.outer_iters);
    let mut clamped = 0;
    let mut last = None;
    for outer in 0..params.outer_iters {
        let pre = outer < params.preprocess_iters;
        let part = activity_update(codebook, &forward, genie.identities(), clamps)?;
        clamped += part.clamped;
        channel = part.channel.clone();
        if let Some(h) = genie.channel() {
            pin_channel(&mut channel, h, clamps);
        }
        for _ in 0..params.inner_iters {
            // Messages into the product nodes and forward psi messages.
            let x_nat: Vec<Natural> = symbols.as_slice().iter().map(|x| Natural::of(x.mean, x.var)).collect();
            let h_nat: Vec<Natural> = channel.as_slice().iter().map(|h| Natural::of(h.mean, h.var)).collect();
            phi_mean.as_mut_slice().fill(ZERO);
            phi_var.as_mut_slice().fill(0.0);
            for (c, (pf, tc)) in psi_fwd.chunks_exact_mut(l).zip(to_channel.chunks_exact(l)).enumerate() {
                let (n, k) = (c / k_act, c % k_act);
                let (hn, hmean) = (h_nat[c], channel.as_slice()[c].mean);
                let (pm, pv) = (phi_mean.row_mut(n), phi_var.row_mut(n));
                if pre {
                    let ts = &to_symbol[c * l..(c + 1) * l];
                    let xs = &x_nat[k * l..(k + 1) * l];
                    for (ll, ((p, t), (ns, xn))) in pf.iter_mut().zip(tc).zip(ts.iter().zip(xs)).enumerate() {
                        let (h, c1) = hn.divide(*t, hmean, clamps);
                        let (x, c2) = xn.divide(*ns, symbols.row(k)[ll].mean, clamps);
                        clamped += c1 as usize + c2 as usize;
                        let var = h.var * x.mean.norm_sqr() + x.var * h.mean.norm_sqr() + h.var * x.var;
                        *p = GaussianMsg::new(h.mean * x.mean, clamps.var(var));
                        pm[ll] += p.mean;
                        pv[ll] += p.var;
                    }
                } else {
                    let ex = &extrinsic[c * l..(c + 1) * l];
                    for (((p, t), mq), (m, v)) in pf.iter_mut().zip(tc).zip(ex).zip(pm.iter_mut().zip(pv.iter_mut())) {
                        let (h, c1) = hn.divide(*t, hmean, clamps);
                        clamped += c1 as usize;
                        *p = qpsk_psi_forward(*mq, h, clamps);
                        *m += p.mean;
                        *v += p.var;
                    }
                }
            }

            // Observation beliefs and noise precision. Backward psi messages
            // are rebuilt from these sums where needed.
            let mut residual = 0.0;
            for ((&m, &v), &yv) in phi_mean.as_slice().iter().zip(phi_var.as_slice()).zip(y.as_slice()) {
                residual += (yv - phi_belief(m, v, lambda, yv).mean).norm_sqr();
            }
            lambda = clamps.precision((n_sc * l) as f64 / residual);
            check_finite(lambda, "noise precision", outer, 0)?;
            let noise = 1.0 / lambda;
            for ((m, v), &yv) in phi_mean.as_mut_slice().iter_mut().zip(phi_var.as_mut_slice()).zip(y.as_slice()) {
                *m = yv - *m;
                *v += noise;
            }
            // phi_mean now holds y - sum of forward means and phi_var the
            // total variance, so psi_bwd = (resid + p.mean, var - p.var).
            let backward = |p: &GaussianMsg, r: Complex64, v: f64| {
                GaussianMsg::new(r + p.mean, clamps.var(v - p.var))
            };

            if pre {
                // Mean-field messages at the product nodes towards x and h.
                sym_eta.as_mut_slice().fill(ZERO);
                sym_prec.as_mut_slice().fill(0.0);
                for (c, (pf, ts)) in psi_fwd.chunks_exact(l).zip(to_symbol.chunks_exact_mut(l)).enumerate() {
                    let (n, k) = (c / k_act, c % k_act);
                    let hb = channel.as_slice()[c];
                    let (hc, a) = (hb.mean.conj(), hb.second_moment());
                    let (rr, vr) = (phi_mean.row(n), phi_var.row(n));
                    let (se, sp) = (sym_eta.row_mut(k), sym_prec.row_mut(k));
                    for (ll, (p, t)) in pf.iter().zip(ts.iter_mut()).enumerate() {
                        let b = backward(p, rr[ll], vr[ll]);
                        let inv = 1.0 / b.var;
                        let m = Natural::clamped(hc * b.mean * inv, a * inv, clamps);
                        *t = m;
                        se[ll] += m.eta;
                        sp[ll] += m.prec;
                    }
                }
                for i in 0..k_act * l {
                    let obs = from_natural(sym_eta.as_slice()[i], sym_prec.as_slice()[i], clamps);
                    let (p, g) = symbol_posterior(obs, clamps);
                    check_finite(g.mean.re + g.mean.im, "symbol mean", outer, i)?;
                    probs.as_mut_slice()[i] = p;
                    symbols.as_mut_slice()[i] = g;
                }
                for (c, (pf, tc)) in psi_fwd.chunks_exact(l).zip(to_channel.chunks_exact_mut(l)).enumerate() {
                    let (n, k) = (c / k_act, c % k_act);
                    let (rr, vr) = (phi_mean.row(n), phi_var.row(n));
                    let (mut eta, mut prec) = (ZERO, 0.0);
                    for (ll, ((p, t), x)) in pf.iter().zip(tc.iter_mut()).zip(symbols.row(k)).enumerate() {
                        let b = backward(p, rr[ll], vr[ll]);
                        let inv = 1.0 / b.var;
                        *t = Natural::clamped(x.mean.conj() * b.mean * inv, x.second_moment() * inv, clamps);
                        eta += t.eta;
                        prec += t.prec;
                    }
                    let f = from_natural(eta, prec, clamps);
                    forward.as_mut_slice()[c] = f;
                    channel.as_mut_slice()[c] = gaussian_product(f, part.backward.as_slice()[c], clamps);
                }
            } else {
                // Sum-product symbol update with leave-one-out extrinsics.
                llr.as_mut_slice().fill(ZERO);
                for (c, ((pf, tc), ex)) in psi_fwd
                    .chunks_exact(l)
                    .zip(to_channel.chunks_exact(l))
                    .zip(extrinsic.chunks_exact_mut(l))
                    .enumerate()
                {
                    let (n, k) = (c / k_act, c % k_act);
                    let (hn, hmean) = (h_nat[c], channel.as_slice()[c].mean);
                    let (rr, vr) = (phi_mean.row(n), phi_var.row(n));
                    let lr = llr.row_mut(k);
                    for (ll, ((p, t), e)) in pf.iter().zip(tc).zip(ex.iter_mut()).enumerate() {
                        let (h, _) = hn.divide(*t, hmean, clamps);
                        let s = psi_symbol_llr(backward(p, rr[ll], vr[ll]), h);
                        *e = s;
                        lr[ll] += s;
                    }
                }
                for i in 0..k_act * l {
                    let f = llr.as_slice()[i];
                    let mean = llr_mean(f);
                    check_finite(mean.re + mean.im, "symbol mean", outer, i)?;
                    probs.as_mut_slice()[i] = llr_probs(f);
                    symbols.as_mut_slice()[i] = GaussianMsg::new(mean, clamps.var(1.0 - mean.norm_sqr()));
                }
                for (c, ((pf, tc), ex)) in psi_fwd
                    .chunks_exact(l)
                    .zip(to_channel.chunks_exact_mut(l))
                    .zip(extrinsic.chunks_exact_mut(l))
                    .enumerate()
                {
                    let (n, k) = (c / k_act, c % k_act);
                    let (rr, vr) = (phi_mean.row(n), phi_var.row(n));
                    let lr = llr.row(k);
                    let (mut eta, mut prec) = (ZERO, 0.0);
                    for (ll, ((p, t), e)) in pf.iter().zip(tc.iter_mut()).zip(ex.iter_mut()).enumerate() {
                        let mq = llr_mean(lr[ll] - *e);
                        *e = mq;
                        let m = qpsk_channel_backward(mq, backward(p, rr[ll], vr[ll]), clamps);
                        let inv = 1.0 / m.var;
                        *t = Natural::clamped(m.mean * inv, inv, clamps);
                        eta += t.eta;
                        prec += t.prec;
                    }
                    let f = from_natural(eta, prec, clamps);
                    forward.as_mut_slice()[c] = f;
                    channel.as_mut_slice()[c] = gaussian_product(f, part.backward.as_slice()[c], clamps);
                }
            }
            if let Some(h) = genie.channel() {
                pin_channel(&mut channel, h, clamps);
            }
        }
        if pre && outer + 1 == params.preprocess_iters {
            for n in 0..n_sc {
                for k in 0..k_act {
                    let e = (n * k_act + k) * l;
                    for (x, s) in extrinsic[e..e + l].iter_mut().zip(symbols.row(k)) {
                        *x = s.mean;
                    }
                }
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
