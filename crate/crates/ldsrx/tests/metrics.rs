use ldsrx::metrics::{compute_aer, compute_ber, count_bit_errors, match_identities};
use ldsrx::Grid;
use proptest::prelude::*;

#[test]
fn aer_examples() {
    let truth: Vec<usize> = (0..25).collect();
    assert_eq!(compute_aer(&truth, &truth), 0.0);
    let mut est = truth.clone();
    est.reverse();
    assert_eq!(compute_aer(&est, &truth), 0.0);
    est[0] = 100;
    assert!((compute_aer(&est, &truth) - 0.04).abs() < 1e-15);
    // A duplicated estimate is only credited once.
    assert_eq!(compute_aer(&[5, 5], &[5, 7]), 0.5);
    assert_eq!(match_identities(&[5, 5], &[5, 7]), vec![Some(0), None]);
}

fn all_correct(k: usize, l: usize) -> (Grid<u8>, Grid<u8>) {
    // Symbol 0 carries bits 00, so zero bits decide to index 0.
    (Grid::filled(k, l, 0u8), Grid::filled(k, 2 * (l - 1), 0u8))
}

#[test]
fn ber_examples() {
    let (dec, bits) = all_correct(25, 11);
    let ids: Vec<usize> = (0..25).collect();
    let m = match_identities(&ids, &ids);
    assert_eq!(compute_ber(&dec, &m, &bits), 0.0);

    let mut est = ids.clone();
    est[3] = 99;
    let m = match_identities(&est, &ids);
    assert!((compute_ber(&dec, &m, &bits) - 0.04).abs() < 1e-15);

    // Gray neighbours: one wrong symbol costs one bit; the diagonal costs two.
    let m = match_identities(&ids, &ids);
    let mut one = dec.clone();
    one[(4, 6)] = 1;
    assert_eq!(count_bit_errors(&one, &m, &bits), 1);
    one[(4, 6)] = 3;
    assert_eq!(count_bit_errors(&one, &m, &bits), 1);
    one[(4, 6)] = 2;
    assert_eq!(count_bit_errors(&one, &m, &bits), 2);

    // The reference column is not payload.
    let mut refcol = dec.clone();
    refcol[(0, 0)] = 2;
    assert_eq!(count_bit_errors(&refcol, &m, &bits), 0);
}

#[test]
fn branch_order_follows_the_match() {
    let bits = Grid::from_vec(2, 2, vec![0, 0, 1, 1]);
    let dec = Grid::from_vec(2, 2, vec![0, 2, 0, 0]);
    let m = match_identities(&[8, 3], &[3, 8]);
    assert_eq!(count_bit_errors(&dec, &m, &bits), 0);
}

proptest! {
    #[test]
    fn rates_are_bounded(
        est in prop::collection::vec(0usize..12, 1..8),
        truth in prop::collection::hash_set(0usize..12, 1..8),
    ) {
        let truth: Vec<usize> = truth.into_iter().collect();
        let aer = compute_aer(&est, &truth);
        prop_assert!((0.0..=1.0).contains(&aer));
        let m = match_identities(&est, &truth);
        let dec = Grid::filled(est.len(), 4, 2u8);
        let bits = Grid::filled(truth.len(), 6, 0u8);
        let ber = compute_ber(&dec, &m, &bits);
        prop_assert!((0.0..=1.0).contains(&ber));
    }
}
