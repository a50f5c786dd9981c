//! Regular low-density spreading codebooks and the active-user channel.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;

const MAX_ATTEMPTS: usize = 1000;

/// Binary N x U spreading matrix with `col_weight` ones per column and
/// `row_weight` ones per row. Users are indexed from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    entries: Grid<u8>,
    col_weight: usize,
    row_weight: usize,
    supports: Vec<Vec<usize>>,
}

impl Codebook {
    /// Build from a 0/1 matrix, checking regularity.
    pub fn from_entries(entries: Grid<u8>) -> Result<Self> {
        let (n, u) = entries.shape();
        if n == 0 || u == 0 {
            return Err(Error::Contract("empty codebook".into()));
        }
        if entries.as_slice().iter().any(|&b| b > 1) {
            return Err(Error::Contract("codebook entries must be 0 or 1".into()));
        }
        let supports: Vec<Vec<usize>> = (0..u)
            .map(|c| (0..n).filter(|&r| entries[(r, c)] == 1).collect())
            .collect();
        let col_weight = supports[0].len();
        if let Some(c) = supports.iter().position(|s| s.len() != col_weight) {
            return Err(Error::Contract(format!(
                "column {c} has weight {}, expected {col_weight}",
                supports[c].len()
            )));
        }
        let row_weight = entries.row(0).iter().map(|&b| b as usize).sum();
        for r in 0..n {
            let w: usize = entries.row(r).iter().map(|&b| b as usize).sum();
            if w != row_weight {
                return Err(Error::Contract(format!(
                    "row {r} has weight {w}, expected {row_weight}"
                )));
            }
        }
        Ok(Self {
            entries,
            col_weight,
            row_weight,
            supports,
        })
    }

    /// Random regular codebook from stacked row permutations. A column that
    /// would hit the same row twice is repaired by random swaps; the whole
    /// construction is redrawn if repair fails.
    pub fn generate<R: Rng + ?Sized>(
        n_subcarriers: usize,
        n_users: usize,
        col_weight: usize,
        rng: &mut R,
        seed_for_report: u64,
    ) -> Result<Self> {
        if n_subcarriers == 0 || n_users == 0 || col_weight == 0 {
            return Err(Error::Config("codebook dimensions must be positive".into()));
        }
        if col_weight > n_subcarriers {
            return Err(Error::Config(format!(
                "column weight {col_weight} exceeds {n_subcarriers} subcarriers"
            )));
        }
        if (n_users * col_weight) % n_subcarriers != 0 {
            return Err(Error::Config(format!(
                "U*d_c = {} is not divisible by N = {n_subcarriers}",
                n_users * col_weight
            )));
        }
        let blocks = n_users * col_weight / n_subcarriers;
        let total = n_users * col_weight;
        let mut slots: Vec<usize> = Vec::with_capacity(total);
        let clash = |slots: &[usize], col: usize, row: usize, skip: usize| {
            (col * col_weight..(col + 1) * col_weight).any(|i| i != skip && slots[i] == row)
        };
        'attempt: for _ in 0..MAX_ATTEMPTS {
            slots.clear();
            for _ in 0..blocks {
                let mut perm: Vec<usize> = (0..n_subcarriers).collect();
                perm.shuffle(rng);
                slots.extend(perm);
            }
            // Repair repeated rows within a column by swapping with a slot
            // of another column; swaps keep every row weight unchanged.
            for i in 0..total {
                let col = i / col_weight;
                if !clash(&slots, col, slots[i], i) {
                    continue;
                }
                let fixed = (0..MAX_ATTEMPTS).any(|_| {
                    let j = rng.random_range(0..total);
                    let other = j / col_weight;
                    if other == col
                        || clash(&slots, col, slots[j], i)
                        || clash(&slots, other, slots[i], j)
                    {
                        return false;
                    }
                    slots.swap(i, j);
                    true
                });
                if !fixed {
                    continue 'attempt;
                }
            }
            let mut entries = Grid::filled(n_subcarriers, n_users, 0u8);
            for (i, &row) in slots.iter().enumerate() {
                entries[(row, i / col_weight)] = 1;
            }
            return Self::from_entries(entries);
        }
        Err(Error::Generation {
            seed: seed_for_report,
            attempts: MAX_ATTEMPTS,
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.entries.rows()
    }

    pub fn n_users(&self) -> usize {
        self.entries.cols()
    }

    pub fn col_weight(&self) -> usize {
        self.col_weight
    }

    pub fn row_weight(&self) -> usize {
        self.row_weight
    }

    pub fn entries(&self) -> &Grid<u8> {
        &self.entries
    }

    #[inline]
    pub fn bit(&self, n: usize, u: usize) -> bool {
        self.entries[(n, u)] == 1
    }

    /// Subcarriers occupied by user `u`, ascending.
    pub fn support(&self, u: usize) -> &[usize] {
        &self.supports[u]
    }

    /// Plain-text form: one row per subcarrier, space-separated 0/1.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in 0..self.n_subcarriers() {
            let row = self.entries.row(r);
            for (i, b) in row.iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{b}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<u8>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| match t {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::CodebookFormat {
                        line: i + 1,
                        reason: format!("unexpected token {other:?}"),
                    }),
                })
                .collect::<Result<Vec<u8>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::CodebookFormat {
                        line: i + 1,
                        reason: format!("{} columns, expected {}", row.len(), first.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::CodebookFormat {
                line: 0,
                reason: "no rows".into(),
            });
        }
        let (n, u) = (rows.len(), rows[0].len());
        Self::from_entries(Grid::from_vec(n, u, rows.concat()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// The N x K columns of the active identities.
    pub fn active_mask(&self, identities: &[usize]) -> Result<Grid<u8>> {
        if let Some(&bad) = identities.iter().find(|&&u| u >= self.n_users()) {
            return Err(Error::Contract(format!("identity {bad} out of range")));
        }
        Ok(Grid::from_fn(self.n_subcarriers(), identities.len(), |r, k| {
            self.entries[(r, identities[k])]
        }))
    }

    /// Mask an N x K gain matrix by the columns of the active identities.
    pub fn equivalent_channel(
        &self,
        identities: &[usize],
        gains: &Grid<Complex64>,
    ) -> Result<Grid<Complex64>> {
        apply_mask(&self.active_mask(identities)?, gains)
    }
}

/// Elementwise product of a 0/1 mask with a gain matrix of the same shape.
pub fn apply_mask(mask: &Grid<u8>, gains: &Grid<Complex64>) -> Result<Grid<Complex64>> {
    if gains.shape() != mask.shape() {
        return Err(Error::Contract(format!(
            "gains are {:?}, mask is {:?}",
            gains.shape(),
            mask.shape()
        )));
    }
    Ok(Grid::from_fn(mask.rows(), mask.cols(), |r, k| {
        if mask[(r, k)] == 1 {
            gains[(r, k)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// Draw `n_active` distinct users uniformly.
pub fn sample_active_set<R: Rng + ?Sized>(
    n_users: usize,
    n_active: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n_active == 0 || n_active > n_users {
        return Err(Error::Config(format!(
            "active count {n_active} must lie in 1..={n_users}"
        )));
    }
    Ok(index::sample(rng, n_users, n_active).into_vec())
}
