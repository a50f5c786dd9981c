//! Error-rate metrics with one-to-one identity matching.

use crate::grid::Grid;
use crate::link::QPSK_BITS;

/// For each receiver branch, the position in `truth` it was matched to.
/// Branches are visited in order and each true user is consumed at most
/// once.
pub fn match_identities(estimated: &[usize], truth: &[usize]) -> Vec<Option<usize>> {
    let mut used = vec![false; truth.len()];
    estimated
        .iter()
        .map(|u| {
            let t = truth.iter().position(|v| v == u)?;
            if used[t] {
                None
            } else {
                used[t] = true;
                Some(t)
            }
        })
        .collect()
}

pub fn count_matches(matching: &[Option<usize>]) -> usize {
    matching.iter().filter(|m| m.is_some()).count()
}

/// Fraction of active users whose identity was not recovered.
pub fn compute_aer(estimated: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let m = count_matches(&match_identities(estimated, truth));
    (truth.len() - m) as f64 / truth.len() as f64
}

/// Bit errors over the payload columns; every bit of an unmatched true
/// user counts as an error.
pub fn count_bit_errors(
    decisions: &Grid<u8>,
    matching: &[Option<usize>],
    tx_bits: &Grid<u8>,
) -> usize {
    let payload = tx_bits.cols();
    let mut errors = 0;
    for (branch, m) in matching.iter().enumerate() {
        let Some(t) = *m else { continue };
        let truth = tx_bits.row(t);
        for (l, &d) in decisions.row(branch).iter().enumerate().skip(1) {
            let b = QPSK_BITS[d as usize];
            errors += (b[0] != truth[2 * l - 2]) as usize + (b[1] != truth[2 * l - 1]) as usize;
        }
    }
    let unmatched = tx_bits.rows() - count_matches(matching);
    errors + unmatched * payload
}

pub fn compute_ber(decisions: &Grid<u8>, matching: &[Option<usize>], tx_bits: &Grid<u8>) -> f64 {
    let total = tx_bits.rows() * tx_bits.cols();
    if total == 0 {
        return 0.0;
    }
    count_bit_errors(decisions, matching, tx_bits) as f64 / total as f64
}
