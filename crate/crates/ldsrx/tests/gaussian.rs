use std::f64::consts::PI;

use ldsrx::gaussian::{
    argmax, cgauss_logpdf, cgauss_pdf, gaussian_product, gaussian_quotient, normalize_log, project_mixture,
    Component,
};
use ldsrx::link::QPSK;
use ldsrx::{Clamps, Complex64, DiscreteDist, GaussianMsg};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn msg(re: f64, im: f64, v: f64) -> GaussianMsg {
    GaussianMsg::new(c(re, im), v)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Mass and first two moments of a density sampled on a square grid.
fn grid_moments(f: impl Fn(Complex64) -> f64, centre: Complex64, half: f64, steps: usize) -> (f64, Complex64, f64) {
    let h = 2.0 * half / steps as f64;
    let (mut mass, mut first, mut second) = (0.0, c(0.0, 0.0), 0.0);
    for i in 0..steps {
        for j in 0..steps {
            let z = centre + c(-half + (i as f64 + 0.5) * h, -half + (j as f64 + 0.5) * h);
            let p = f(z) * h * h;
            mass += p;
            first += z * p;
            second += z.norm_sqr() * p;
        }
    }
    let mean = first / mass;
    (mass, mean, second / mass - mean.norm_sqr())
}

#[test]
fn pdf_examples() {
    assert!(close(cgauss_pdf(c(0.0, 0.0), c(0.0, 0.0), 1.0).unwrap(), 1.0 / PI, 1e-15));
    assert!(close(cgauss_pdf(c(0.3, -2.0), c(0.3, -2.0), 0.25).unwrap(), 1.0 / (PI * 0.25), 1e-15));
    let v = cgauss_pdf(c(1.0, 0.0), c(0.0, 0.0), 1.0).unwrap();
    assert!((v - 0.117099).abs() < 1e-6);
    let (mass, _, _) = grid_moments(|z| cgauss_pdf(z, c(0.0, 0.0), 1.0).unwrap(), c(0.0, 0.0), 8.0, 800);
    assert!((mass - 1.0).abs() < 1e-6);
}

#[test]
fn pdf_rejects_non_positive_variance() {
    assert!(cgauss_pdf(c(0.0, 0.0), c(0.0, 0.0), 0.0).is_err());
    assert!(cgauss_logpdf(c(0.0, 0.0), c(0.0, 0.0), -1.0).is_err());
}

#[test]
fn product_examples() {
    let cl = Clamps::default();
    let p = gaussian_product(msg(0.0, 0.0, 1.0), msg(0.0, 0.0, 1.0), &cl);
    assert_eq!(p, msg(0.0, 0.0, 0.5));

    let a = msg(1.0, 0.0, 2.0);
    let b = msg(3.0, 0.0, 1.0);
    let p = gaussian_product(a, b, &cl);
    assert!(close(p.mean.re, 7.0 / 3.0, 1e-14) && p.mean.im == 0.0);
    assert!(close(p.var, 2.0 / 3.0, 1e-14));
    // Oracle: pointwise product on a grid, refit.
    let f = |z: Complex64| {
        cgauss_pdf(z, a.mean, a.var).unwrap() * cgauss_pdf(z, b.mean, b.var).unwrap()
    };
    let (_, m, v) = grid_moments(f, c(7.0 / 3.0, 0.0), 7.0, 1400);
    assert!((m.re - p.mean.re).abs() < 1e-6 && m.im.abs() < 1e-9);
    assert!((v - p.var).abs() < 1e-4);

    let m = msg(0.4, -1.2, 0.3);
    let p = gaussian_product(m, GaussianMsg::vacuous(&cl), &cl);
    assert!((p.mean - m.mean).norm() < 1e-8 && close(p.var, m.var, 1e-8));
}

#[test]
fn quotient_examples() {
    let cl = Clamps::default();
    let a = msg(1.0, 0.0, 2.0);
    let b = msg(3.0, 0.0, 1.0);
    let q = gaussian_quotient(gaussian_product(a, b, &cl), b, &cl);
    assert!(!q.clamped);
    assert!((q.msg.mean - a.mean).norm() < 1e-12 && (q.msg.var - a.var).abs() < 1e-12);

    let q = gaussian_quotient(msg(0.0, 0.0, 2.0), msg(0.0, 0.0, 1.0), &cl);
    assert!(q.clamped);
    assert_eq!(q.msg, msg(0.0, 0.0, cl.var_cap));

    let q = gaussian_quotient(msg(2.0, 0.0, 1.0), msg(0.0, 0.0, 4.0), &cl);
    assert!(close(q.msg.var, 4.0 / 3.0, 1e-14));
    assert!(close(q.msg.mean.re, 8.0 / 3.0, 1e-14));
    let back = gaussian_product(q.msg, msg(0.0, 0.0, 4.0), &cl);
    assert!((back.mean - c(2.0, 0.0)).norm() < 1e-12 && close(back.var, 1.0, 1e-12));
    let m = msg(0.3, -1.0, 0.7);
    let q = gaussian_quotient(m, m, &cl);
    assert!(q.clamped);
    assert_eq!(q.msg, GaussianMsg::new(m.mean, cl.var_cap));
}

#[test]
fn projection_examples() {
    let cl = Clamps::default();
    let p = project_mixture(
        &[(0.5, Component::Point(c(1.0, 0.0))), (0.5, Component::Point(c(-1.0, 0.0)))],
        &cl,
    )
    .unwrap();
    assert_eq!(p, msg(0.0, 0.0, 1.0));

    let p = project_mixture(&[(1.0, Component::Gaussian(msg(1.0, 0.0, 0.1)))], &cl).unwrap();
    assert!((p.mean - c(1.0, 0.0)).norm() < 1e-15 && close(p.var, 0.1, 1e-15));

    let parts: Vec<_> = QPSK.iter().map(|&q| (0.25, Component::Point(q))).collect();
    let p = project_mixture(&parts, &cl).unwrap();
    assert!(p.mean.norm() < 1e-15 && close(p.var, 1.0, 1e-15));

    assert!(project_mixture(&[(0.0, Component::Point(c(1.0, 0.0)))], &cl).is_err());
}

#[test]
fn normalize_log_examples() {
    let mut w = [0.0, 0.0];
    normalize_log(&mut w).unwrap();
    assert!(close(w[0].exp(), 0.5, 1e-15) && close(w[1].exp(), 0.5, 1e-15));

    let mut w = [0.0, f64::NEG_INFINITY];
    normalize_log(&mut w).unwrap();
    assert_eq!(w[0].exp(), 1.0);
    assert_eq!(w[1].exp(), 0.0);

    let mut w = [1000.0, 1001.0];
    normalize_log(&mut w).unwrap();
    let e = std::f64::consts::E;
    assert!(close(w[0].exp(), 1.0 / (1.0 + e), 1e-14));
    assert!(close(w[1].exp(), e / (1.0 + e), 1e-14));

    let mut w = [f64::NEG_INFINITY; 3];
    assert!(normalize_log(&mut w).is_err());
}

#[test]
fn ties_go_to_the_lowest_index() {
    assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
}

#[test]
fn discrete_dist_contract() {
    assert!(DiscreteDist::new(vec![1, 1], vec![0.0, 0.0]).is_err());
    assert!(DiscreteDist::<u8>::new(vec![], vec![]).is_err());
    let d = DiscreteDist::new(vec!['a', 'b', 'c'], vec![0.0, 2.0, 2.0]).unwrap();
    assert_eq!(*d.argmax(), 'b');
    let w = d.normalize().unwrap().weights().unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

fn arb_msg() -> impl Strategy<Value = GaussianMsg> {
    (-5.0..5.0f64, -5.0..5.0f64, 0.01..10.0f64).prop_map(|(a, b, v)| msg(a, b, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn product_commutes_and_associates(a in arb_msg(), b in arb_msg(), d in arb_msg()) {
        let cl = Clamps::default();
        let ab = gaussian_product(a, b, &cl);
        let ba = gaussian_product(b, a, &cl);
        prop_assert!((ab.mean - ba.mean).norm() <= 1e-10 * (1.0 + ab.mean.norm()));
        prop_assert!(close(ab.var, ba.var, 1e-10));
        let l = gaussian_product(ab, d, &cl);
        let r = gaussian_product(a, gaussian_product(b, d, &cl), &cl);
        prop_assert!((l.mean - r.mean).norm() <= 1e-10 * (1.0 + l.mean.norm()));
        prop_assert!(close(l.var, r.var, 1e-10));
    }

    #[test]
    fn quotient_inverts_product(a in arb_msg(), b in arb_msg()) {
        let cl = Clamps::default();
        let q = gaussian_quotient(gaussian_product(a, b, &cl), b, &cl);
        prop_assert!(!q.clamped);
        prop_assert!((q.msg.mean - a.mean).norm() <= 1e-10 * (1.0 + a.mean.norm()));
        prop_assert!(close(q.msg.var, a.var, 1e-10));
    }

    #[test]
    fn projection_matches_direct_moments(
        parts in prop::collection::vec((0.0..1.0f64, arb_msg(), any::<bool>()), 1..8)
    ) {
        let cl = Clamps::default();
        prop_assume!(parts.iter().any(|p| p.0 > 1e-3));
        let mix: Vec<_> = parts
            .iter()
            .map(|&(w, m, point)| (w, if point { Component::Point(m.mean) } else { Component::Gaussian(m) }))
            .collect();
        let got = project_mixture(&mix, &cl).unwrap();
        let total: f64 = parts.iter().map(|p| p.0).sum();
        let mean: Complex64 = parts.iter().map(|&(w, m, _)| m.mean * (w / total)).sum();
        let var: f64 = parts
            .iter()
            .map(|&(w, m, point)| {
                let v = if point { 0.0 } else { m.var };
                w / total * ((m.mean - mean).norm_sqr() + v)
            })
            .sum();
        prop_assert!((got.mean - mean).norm() <= 1e-10 * (1.0 + mean.norm()));
        prop_assert!((got.var - var.max(cl.var_floor)).abs() <= 1e-10 * (1.0 + var));
    }

    // Weights on a 2^-20 lattice and integer shifts keep every shifted
    // input exactly representable, so the outputs must agree bit for bit.
    #[test]
    fn normalize_log_is_shift_invariant(
        w in prop::collection::vec(-50_000_000i64..50_000_000, 1..10),
        shift in -1000i64..1000,
    ) {
        let w: Vec<f64> = w.iter().map(|&x| x as f64 / (1u64 << 20) as f64).collect();
        let mut a = w.clone();
        let mut b: Vec<f64> = w.iter().map(|x| x + shift as f64).collect();
        normalize_log(&mut a).unwrap();
        normalize_log(&mut b).unwrap();
        let sa: f64 = a.iter().map(|x| x.exp()).sum();
        prop_assert!((sa - 1.0).abs() < 1e-12);
        prop_assert_eq!(a, b);
    }
}
