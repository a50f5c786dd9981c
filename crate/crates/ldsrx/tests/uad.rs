use ldsrx::gaussian::{cgauss_pdf, gaussian_product};
use ldsrx::link::complex_normal;
use ldsrx::seed::{stream_rng, Stream};
use ldsrx::uad::{
    activity_update, channel_belief_moment_match, ep_backward, identity_backward_approx,
    identity_loglik, update_identity_beliefs, GAIN_PRIOR,
};
use ldsrx::{Clamps, Codebook, Complex64, GaussianMsg, Grid};
use proptest::prelude::*;
use rand::Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn book(n: usize, u: usize, dc: usize, seed: u64) -> Codebook {
    Codebook::generate(n, u, dc, &mut stream_rng(seed, Stream::Codebook, 0), seed).unwrap()
}

/// Posterior over identities by direct evaluation of every candidate's
/// marginal likelihood in the linear domain.
fn brute_force_posterior(cb: &Codebook, fwd: &[GaussianMsg]) -> Vec<f64> {
    let like: Vec<f64> = (0..cb.n_users())
        .map(|u| {
            fwd.iter()
                .enumerate()
                .map(|(n, f)| {
                    if cb.bit(n, u) {
                        cgauss_pdf(f.mean, GAIN_PRIOR.mean, f.var + GAIN_PRIOR.var).unwrap()
                    } else {
                        cgauss_pdf(c(0.0, 0.0), f.mean, f.var).unwrap()
                    }
                })
                .product()
        })
        .collect();
    let total: f64 = like.iter().sum();
    like.iter().map(|l| l / total).collect()
}

#[test]
fn loglik_examples() {
    let cb = Codebook::from_entries(Grid::from_vec(2, 2, vec![1, 0, 0, 1])).unwrap();
    let f = GaussianMsg::new(c(0.3, -0.2), 0.5);
    let ll = identity_loglik(&cb, 0, f, GAIN_PRIOR);
    let vacant = cgauss_pdf(c(0.0, 0.0), f.mean, f.var).unwrap().ln();
    let occupied = cgauss_pdf(f.mean, c(0.0, 0.0), f.var + 1.0).unwrap().ln();
    assert!((ll[0] - occupied).abs() < 1e-14);
    assert!((ll[1] - vacant).abs() < 1e-14);

    let zero = GaussianMsg::new(c(0.0, 0.0), 0.5);
    let ll = identity_loglik(&cb, 0, zero, GAIN_PRIOR);
    assert!((ll[0] - cgauss_pdf(c(0.0, 0.0), c(0.0, 0.0), 1.5).unwrap().ln()).abs() < 1e-14);

    // Occupied hypothesis wins by about 97 nats.
    let f = GaussianMsg::new(c(1.0, 0.0), 0.01);
    let gain = GaussianMsg::new(c(1.0, 0.0), 0.01);
    let ll = identity_loglik(&cb, 0, f, gain);
    assert!((ll[0].exp() - 1.0 / (0.02 * std::f64::consts::PI)).abs() < 1e-10);
    assert!((ll[0] - ll[1] - 100.0 - (0.5f64).ln()).abs() < 1e-10);
    assert!((ll[0] - ll[1] - 97.0).abs() < 3.0);
}

#[test]
fn belief_examples() {
    let flat = vec![vec![-1.3; 5]; 4];
    let b = update_identity_beliefs(&flat, None).unwrap();
    assert!(b.iter().all(|&x| (x - 0.2).abs() < 1e-15));

    let b = update_identity_beliefs(&[vec![0.0, -2.0]], None).unwrap();
    let e2 = (-2.0f64).exp();
    assert!((b[0] - 1.0 / (1.0 + e2)).abs() < 1e-15);
    assert!((b[1] - e2 / (1.0 + e2)).abs() < 1e-15);
    assert!((b[0] - 0.8808).abs() < 1e-4);

    let b = update_identity_beliefs(&[vec![0.0, 0.0]], Some(&[0.75, 0.25])).unwrap();
    assert!((b[0] - 0.75).abs() < 1e-15);

    let beta = vec![0.1, 0.6, 0.3];
    assert_eq!(identity_backward_approx(&beta), beta);
}

#[test]
fn noiseless_single_user_concentrates() {
    let clamps = Clamps::default();
    let mut checked = 0;
    for seed in 0..50u64 {
        let cb = book(4, 8, 2, seed);
        let mut rng = stream_rng(seed, Stream::Activity, 0);
        let truth = rng.random_range(0..8);
        let unique = (0..8).all(|u| u == truth || cb.support(u) != cb.support(truth));
        if !unique {
            continue;
        }
        checked += 1;
        let fwd = Grid::from_fn(4, 1, |n, _| {
            let h = if cb.bit(n, truth) { complex_normal(&mut rng, 1.0) } else { c(0.0, 0.0) };
            GaussianMsg::new(h, 1e-6)
        });
        let up = activity_update(&cb, &fwd, None, &clamps).unwrap();
        let oracle = brute_force_posterior(&cb, fwd.as_slice());
        assert!(up.beliefs[(0, truth)] >= 0.99, "seed {seed}: {}", up.beliefs[(0, truth)]);
        assert!(oracle[truth] >= 0.99);
        assert_eq!(up.decisions(), vec![truth]);
    }
    assert!(checked >= 10);
}

#[test]
fn moment_match_examples() {
    let clamps = Clamps::default();
    let cb = Codebook::from_entries(Grid::from_vec(2, 2, vec![1, 0, 0, 1])).unwrap();
    let fwd = GaussianMsg::new(c(1.0, 0.0), 0.1);

    let b = channel_belief_moment_match(&cb, 0, fwd, GAIN_PRIOR, &[0.0, 1.0], &clamps);
    assert_eq!(b, GaussianMsg::new(c(0.0, 0.0), clamps.var_floor));

    let b = channel_belief_moment_match(&cb, 0, fwd, GAIN_PRIOR, &[1.0, 0.0], &clamps);
    let p = gaussian_product(fwd, GAIN_PRIOR, &clamps);
    assert!((b.mean - p.mean).norm() < 1e-14 && (b.var - p.var).abs() < 1e-14);

    // Two-component oracle: point mass at 0 against the occupied posterior,
    // each weighted by prior mass times its evidence.
    let b = channel_belief_moment_match(&cb, 0, fwd, GAIN_PRIOR, &[0.5, 0.5], &clamps);
    let w0 = 0.5 * cgauss_pdf(c(0.0, 0.0), fwd.mean, fwd.var).unwrap();
    let w1 = 0.5 * cgauss_pdf(fwd.mean, c(0.0, 0.0), fwd.var + 1.0).unwrap();
    let (a0, a1) = (w0 / (w0 + w1), w1 / (w0 + w1));
    let mean = p.mean * a1;
    let var = a1 * p.second_moment() - mean.norm_sqr() + a0 * 0.0;
    assert!((b.mean - mean).norm() < 1e-12);
    assert!((b.var - var).abs() < 1e-12);
}

#[test]
fn ep_backward_examples() {
    let clamps = Clamps::default();
    let f = GaussianMsg::new(c(0.4, 0.1), 0.3);
    let q = ep_backward(f, f, &clamps);
    assert!(q.clamped);
    assert_eq!(q.msg, GaussianMsg::new(f.mean, clamps.var_cap));

    let q = ep_backward(
        GaussianMsg::new(c(7.0 / 3.0, 0.0), 2.0 / 3.0),
        GaussianMsg::new(c(3.0, 0.0), 1.0),
        &clamps,
    );
    assert!((q.msg.mean - c(1.0, 0.0)).norm() < 1e-12 && (q.msg.var - 2.0).abs() < 1e-12);
}

#[test]
fn leave_one_out_divergence_is_reported() {
    // The activity stage reuses the full posterior where the exact
    // extrinsic would leave out subcarrier n; measure how far apart they are.
    let cb = Codebook::from_entries(Grid::from_vec(2, 4, vec![1, 1, 0, 0, 0, 0, 1, 1])).unwrap();
    let fwd = [GaussianMsg::new(c(0.9, -0.2), 0.2), GaussianMsg::new(c(0.1, 0.1), 0.2)];
    let lls: Vec<Vec<f64>> = fwd
        .iter()
        .enumerate()
        .map(|(n, &f)| identity_loglik(&cb, n, f, GAIN_PRIOR))
        .collect();
    let beta = update_identity_beliefs(&lls, None).unwrap();
    let gamma = identity_backward_approx(&beta);
    for n in 0..2 {
        let others: Vec<Vec<f64>> = lls.iter().enumerate().filter(|&(m, _)| m != n).map(|(_, v)| v.clone()).collect();
        let exact = update_identity_beliefs(&others, None).unwrap();
        let tv: f64 = exact.iter().zip(&gamma).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        println!("subcarrier {n}: total variation between full and leave-one-out = {tv:.4}");
        assert!((0.0..=1.0).contains(&tv));
    }
}

fn arb_fwd(n: usize) -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, 0.05..2.0f64), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_brute_force(fwd in arb_fwd(8), seed in 0u64..1000) {
        let clamps = Clamps::default();
        let cb = book(4, 8, 2, seed);
        let f = Grid::from_fn(4, 2, |n, k| {
            let (a, b, v) = fwd[2 * n + k];
            GaussianMsg::new(c(a, b), v)
        });
        let up = activity_update(&cb, &f, None, &clamps).unwrap();
        for k in 0..2 {
            let col: Vec<GaussianMsg> = (0..4).map(|n| f[(n, k)]).collect();
            let oracle = brute_force_posterior(&cb, &col);
            let tv: f64 = oracle.iter().zip(up.beliefs.row(k)).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
            prop_assert!(tv <= 1e-9, "tv {}", tv);
            prop_assert!((up.beliefs.row(k).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn branches_are_independent(fwd in arb_fwd(12), seed in 0u64..100) {
        let clamps = Clamps::default();
        let cb = book(4, 8, 2, seed);
        let f = Grid::from_fn(4, 3, |n, k| {
            let (a, b, v) = fwd[3 * n + k];
            GaussianMsg::new(c(a, b), v)
        });
        let swapped = Grid::from_fn(4, 3, |n, k| f[(n, [0, 2, 1][k])]);
        let a = activity_update(&cb, &f, None, &clamps).unwrap().decisions();
        let b = activity_update(&cb, &swapped, None, &clamps).unwrap().decisions();
        prop_assert_eq!(a[0], b[0]);
        prop_assert_eq!(a[1], b[2]);
    }

    #[test]
    fn scaling_likelihoods_leaves_beliefs(lls in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 6), 3), shift in -50.0..50.0f64) {
        // A common positive factor per subcarrier is an additive log shift.
        let a = update_identity_beliefs(&lls, None).unwrap();
        let shifted: Vec<Vec<f64>> = lls.iter().map(|v| v.iter().map(|x| x + shift).collect()).collect();
        let b = update_identity_beliefs(&shifted, None).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn projected_variance_is_bounded(fwd in arb_fwd(8), seed in 0u64..100) {
        let clamps = Clamps::default();
        let cb = book(4, 8, 2, seed);
        let f = Grid::from_fn(4, 2, |n, k| {
            let (a, b, v) = fwd[2 * n + k];
            GaussianMsg::new(c(a, b), v)
        });
        let up = activity_update(&cb, &f, None, &clamps).unwrap();
        for (b, fw) in up.channel.as_slice().iter().zip(f.as_slice()) {
            prop_assert!(b.var >= clamps.var_floor);
            prop_assert!(b.var <= fw.var.max(1.0) + fw.mean.norm_sqr() + 1e-12);
        }
    }
}
