//! Scalar circularly-symmetric complex Gaussian messages and small discrete
//! distributions, the two currencies every receiver update is written in.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Numerical guard rails shared by every message update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamps {
    pub var_floor: f64,
    pub var_cap: f64,
    pub precision_floor: f64,
    pub precision_cap: f64,
}

impl Default for Clamps {
    fn default() -> Self {
        Self {
            var_floor: 1e-12,
            var_cap: 1e8,
            precision_floor: 1e-8,
            precision_cap: 1e8,
        }
    }
}

impl Clamps {
    #[inline]
    pub fn var(&self, v: f64) -> f64 {
        v.clamp(self.var_floor, self.var_cap)
    }

    #[inline]
    pub fn precision(&self, lambda: f64) -> f64 {
        if lambda.is_nan() {
            return self.precision_floor;
        }
        lambda.clamp(self.precision_floor, self.precision_cap)
    }
}

/// A complex Gaussian CN(mean, var).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMsg {
    pub mean: Complex64,
    pub var: f64,
}

impl GaussianMsg {
    pub const fn new(mean: Complex64, var: f64) -> Self {
        Self { mean, var }
    }

    /// The uninformative message used wherever nothing is known yet.
    pub fn vacuous(clamps: &Clamps) -> Self {
        Self::new(Complex64::new(0.0, 0.0), clamps.var_cap)
    }

    pub fn second_moment(&self) -> f64 {
        self.mean.norm_sqr() + self.var
    }
}

/// Density of CN(m, v) at x.
pub fn cgauss_pdf(x: Complex64, m: Complex64, v: f64) -> Result<f64> {
    Ok(cgauss_logpdf(x, m, v)?.exp())
}

/// Log-density of CN(m, v) at x.
pub fn cgauss_logpdf(x: Complex64, m: Complex64, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!("variance must be positive, got {v}")));
    }
    Ok(log_cn(x, m, v))
}

/// Unchecked log-density for hot loops; the caller guarantees v > 0.
#[inline]
pub(crate) fn log_cn(x: Complex64, m: Complex64, v: f64) -> f64 {
    -(PI * v).ln() - (x - m).norm_sqr() / v
}

/// Product of two Gaussian densities, renormalized.
pub fn gaussian_product(a: GaussianMsg, b: GaussianMsg, clamps: &Clamps) -> GaussianMsg {
    let pa = 1.0 / a.var;
    let pb = 1.0 / b.var;
    let var = 1.0 / (pa + pb);
    GaussianMsg::new((a.mean * pa + b.mean * pb) * var, clamps.var(var))
}

/// Outcome of a Gaussian division; `clamped` marks a non-positive precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quotient {
    pub msg: GaussianMsg,
    pub clamped: bool,
}

/// Divide `num` by `den`. When the resulting precision falls at or below
/// `1 / var_cap`, the result is `(num.mean, var_cap)`.
pub fn gaussian_quotient(num: GaussianMsg, den: GaussianMsg, clamps: &Clamps) -> Quotient {
    let (mean, var, clamped) = quotient_parts(num.mean, num.var, den.mean, den.var, clamps);
    Quotient {
        msg: GaussianMsg::new(mean, var),
        clamped,
    }
}

#[inline]
pub(crate) fn quotient_parts(
    m_num: Complex64,
    v_num: f64,
    m_den: Complex64,
    v_den: f64,
    clamps: &Clamps,
) -> (Complex64, f64, bool) {
    let (p_num, p_den) = (1.0 / v_num, 1.0 / v_den);
    let precision = p_num - p_den;
    if !(precision > 1.0 / clamps.var_cap) {
        return (m_num, clamps.var_cap, true);
    }
    let var = 1.0 / precision;
    let mean = (m_num * p_num - m_den * p_den) * var;
    (mean, var.max(clamps.var_floor), false)
}

/// One component of a mixture handed to [`project_mixture`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Point(Complex64),
    Gaussian(GaussianMsg),
}

/// Moment-match a weighted mixture of point masses and Gaussians.
pub fn project_mixture(parts: &[(f64, Component)], clamps: &Clamps) -> Result<GaussianMsg> {
    let mut total = 0.0;
    let mut first = Complex64::new(0.0, 0.0);
    let mut second = 0.0;
    for &(w, c) in parts {
        if w < 0.0 || !w.is_finite() {
            return Err(Error::Degenerate(format!("invalid mixture weight {w}")));
        }
        let (m, v) = match c {
            Component::Point(x) => (x, 0.0),
            Component::Gaussian(g) => (g.mean, g.var),
        };
        total += w;
        first += m * w;
        second += w * (m.norm_sqr() + v);
    }
    if !(total > 0.0) {
        return Err(Error::Degenerate("mixture has no positive weight".into()));
    }
    let mean = first / total;
    let var = second / total - mean.norm_sqr();
    Ok(GaussianMsg::new(mean, clamps.var(var)))
}

/// Finite distribution over a labelled support, stored as log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist<L> {
    support: Vec<L>,
    log_weights: Vec<f64>,
}

impl<L: PartialEq + Clone> DiscreteDist<L> {
    pub fn new(support: Vec<L>, log_weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != log_weights.len() {
            return Err(Error::Contract(format!(
                "support of {} labels with {} weights",
                support.len(),
                log_weights.len()
            )));
        }
        for (i, a) in support.iter().enumerate() {
            if support[..i].contains(a) {
                return Err(Error::Contract("duplicate label in support".into()));
            }
        }
        Ok(Self {
            support,
            log_weights,
        })
    }

    pub fn support(&self) -> &[L] {
        &self.support
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Subtract the log-sum-exp so the weights sum to one.
    pub fn normalize(&self) -> Result<Self> {
        let mut lw = self.log_weights.clone();
        normalize_log(&mut lw)?;
        Ok(Self {
            support: self.support.clone(),
            log_weights: lw,
        })
    }

    pub fn weights(&self) -> Result<Vec<f64>> {
        let mut w = self.log_weights.clone();
        softmax_in_place(&mut w)?;
        Ok(w)
    }

    /// Label with the largest weight; ties go to the earliest label.
    pub fn argmax(&self) -> &L {
        &self.support[argmax(&self.log_weights)]
    }
}

/// Shift log-weights in place so that they exponentiate to a distribution.
pub fn normalize_log(lw: &mut [f64]) -> Result<()> {
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::Degenerate("all log-weights are -inf".into()));
    }
    let log_total = lw.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    for x in lw.iter_mut() {
        *x = (*x - max) - log_total;
    }
    Ok(())
}

pub fn log_sum_exp(lw: &[f64]) -> Result<f64> {
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::Degenerate("all log-weights are -inf".into()));
    }
    let s: f64 = lw.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + s.ln())
}

/// Replace log-weights by normalized linear weights.
pub fn softmax_in_place(lw: &mut [f64]) -> Result<()> {
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::Degenerate("all log-weights are -inf".into()));
    }
    let mut s = 0.0;
    for x in lw.iter_mut() {
        *x = (*x - max).exp();
        s += *x;
    }
    for x in lw.iter_mut() {
        *x /= s;
    }
    Ok(())
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
