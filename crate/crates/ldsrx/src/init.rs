//! Starting point for the iterative receivers.
//!
//! All branches are a priori identical, so starting them from the same
//! message leaves every branch at the same fixed point. Instead, branches
//! are seeded one at a time: pick the spreading sequence whose rows of the
//! residual carry the strongest rank-one component, take that component's
//! symbol row as the branch's starting symbols, and peel it off.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::codebook::Codebook;
use crate::grid::Grid;
use crate::link::{QPSK, REFERENCE_INDEX};

const POWER_ITERS: usize = 100;
const POWER_TOL: f64 = 1e-6;

/// Starting symbol estimates (K x L, unit modulus) and the identity each
/// branch was seeded from.
#[derive(Debug, Clone)]
pub struct Seeding {
    pub symbols: Grid<Complex64>,
    pub identities: Vec<usize>,
}

fn gram(r: &Grid<Complex64>) -> DMatrix<Complex64> {
    let n = r.rows();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: Complex64 = r.row(i).iter().zip(r.row(j)).map(|(a, b)| a * b.conj()).sum();
            c[(i, j)] = v;
            c[(j, i)] = v.conj();
        }
    }
    c
}

fn refresh_rows(c: &mut DMatrix<Complex64>, r: &Grid<Complex64>, rows: &[usize]) {
    for &i in rows {
        for j in 0..r.rows() {
            let v: Complex64 = r.row(i).iter().zip(r.row(j)).map(|(a, b)| a * b.conj()).sum();
            c[(i, j)] = v;
            c[(j, i)] = v.conj();
        }
    }
}

fn trace(c: &DMatrix<Complex64>, support: &[usize]) -> f64 {
    support.iter().map(|&n| c[(n, n)].re).sum()
}

/// Largest eigenvalue of the Hermitian PSD submatrix of `c` on `support`,
/// by power iteration warm-started from `v`, which is updated in place.
fn top_eigenvalue(c: &DMatrix<Complex64>, support: &[usize], v: &mut [Complex64]) -> f64 {
    let d = support.len();
    let sub: Vec<Complex64> = support
        .iter()
        .flat_map(|&a| support.iter().map(move |&b| c[(a, b)]))
        .collect();
    let mut w = vec![Complex64::new(0.0, 0.0); d];
    let mut rayleigh = 0.0;
    for _ in 0..POWER_ITERS {
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            v.iter_mut().for_each(|z| *z = Complex64::new(1.0, 0.0));
            continue;
        }
        v.iter_mut().for_each(|z| *z /= norm);
        for (a, wa) in w.iter_mut().enumerate() {
            *wa = sub[a * d..(a + 1) * d].iter().zip(v.iter()).map(|(s, vb)| s * vb).sum();
        }
        let next: f64 = v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
        v.copy_from_slice(&w);
        let done = (next - rayleigh).abs() <= POWER_TOL * next.abs();
        rayleigh = next;
        if done {
            break;
        }
    }
    rayleigh
}

/// Greedy rank-one pursuit. With `pinned`, branch k may only use user
/// `pinned[k]`; otherwise each step picks among users not yet taken.
pub fn rank_one_pursuit(
    received: &Grid<Complex64>,
    codebook: &Codebook,
    n_active: usize,
    pinned: Option<&[usize]>,
) -> Seeding {
    let l = received.cols();
    let mut residual = received.clone();
    let mut c = gram(&residual);
    let mut symbols = Grid::filled(n_active, l, QPSK[REFERENCE_INDEX]);
    let mut identities = vec![usize::MAX; n_active];
    let mut taken = vec![false; codebook.n_users()];
    let mut done = vec![false; n_active];
    let mut vecs: Vec<Vec<Complex64>> = (0..codebook.n_users())
        .map(|u| vec![Complex64::new(1.0, 0.0); codebook.support(u).len()])
        .collect();

    for step in 0..n_active {
        // The trace bounds the top eigenvalue, so candidates are visited
        // in decreasing trace order until no remaining one can win.
        let mut cands: Vec<(f64, usize, usize)> = match pinned {
            Some(ids) => (0..n_active)
                .filter(|&k| !done[k])
                .map(|k| (trace(&c, codebook.support(ids[k])), k, ids[k]))
                .collect(),
            None => (0..codebook.n_users())
                .filter(|&u| !taken[u])
                .map(|u| (trace(&c, codebook.support(u)), step, u))
                .collect(),
        };
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)));
        let mut best = (f64::NEG_INFINITY, usize::MAX, usize::MAX);
        for &(tr, k, u) in &cands {
            if tr < best.0 {
                break;
            }
            let e = top_eigenvalue(&c, codebook.support(u), &mut vecs[u]);
            if e > best.0 || (e == best.0 && u < best.2) {
                best = (e, k, u);
            }
        }
        let (branch, user) = (best.1, best.2);
        done[branch] = true;
        taken[user] = true;
        identities[branch] = user;

        let support = codebook.support(user);
        let block = DMatrix::from_fn(support.len(), l, |a, b| residual[(support[a], b)]);
        let svd = block.svd(true, true);
        let (Some(u_mat), Some(v_t)) = (svd.u.as_ref(), svd.v_t.as_ref()) else {
            continue;
        };
        let top = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &s)| if s > b.1 { (i, s) } else { b });
        let (i, s) = top;
        let scale = (l as f64).sqrt();
        let mut x: Vec<Complex64> = (0..l).map(|b| v_t[(i, b)] * scale).collect();
        let mut h: Vec<Complex64> = (0..support.len()).map(|a| u_mat[(a, i)] * (s / scale)).collect();
        let r0 = x[0].norm();
        if r0 > 0.0 {
            let rot = QPSK[REFERENCE_INDEX] / (x[0] / r0);
            x.iter_mut().for_each(|v| *v *= rot);
            h.iter_mut().for_each(|v| *v /= rot);
        }
        for (a, &n) in support.iter().enumerate() {
            for (b, r) in residual.row_mut(n).iter_mut().enumerate() {
                *r -= h[a] * x[b];
            }
        }
        refresh_rows(&mut c, &residual, support);
        for (b, v) in symbols.row_mut(branch).iter_mut().enumerate() {
            let m = x[b].norm();
            *v = if m > 1e-12 { x[b] / m } else { QPSK[REFERENCE_INDEX] };
        }
    }
    Seeding {
        symbols,
        identities,
    }
}
