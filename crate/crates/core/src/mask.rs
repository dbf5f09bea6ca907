//! Symmetric dyad masks for cross-validation.
//!
//! Each unordered pair `{i, j}` belongs to exactly one fold, so the two
//! ordered entries `A_ij` and `A_ji` are always held out together.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Fold assignment of every unordered off-diagonal dyad.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadMask {
    n_nodes: usize,
    n_folds: usize,
    /// Packed upper triangle, row-major over `i < j`.
    assignment: Vec<u16>,
}

impl DyadMask {
    /// Uniform random partition of the dyads into `n_folds` groups whose sizes
    /// differ by at most one.
    pub fn random(n_nodes: usize, n_folds: usize, seed: u64) -> Result<Self> {
        if n_folds < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 folds, got {n_folds}"
            )));
        }
        if n_folds > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!("too many folds: {n_folds}")));
        }
        let n_dyads = n_nodes * n_nodes.saturating_sub(1) / 2;
        if n_dyads < n_folds {
            return Err(Error::InvalidArgument(format!(
                "{n_dyads} dyads cannot fill {n_folds} folds"
            )));
        }
        let mut order: Vec<u32> = (0..n_dyads as u32).collect();
        order.shuffle(&mut substream(seed, Stream::Mask, 0));
        let mut assignment = vec![0u16; n_dyads];
        for (pos, &d) in order.iter().enumerate() {
            assignment[d as usize] = (pos % n_folds) as u16;
        }
        Ok(Self {
            n_nodes,
            n_folds,
            assignment,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    fn row_offset(&self, i: usize) -> usize {
        // index of (i, i+1) in the packed triangle
        i * (2 * self.n_nodes - i - 1) / 2
    }

    /// Fold of the dyad `{i, j}`, `i != j`.
    pub fn fold_of(&self, i: usize, j: usize) -> usize {
        debug_assert_ne!(i, j);
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.assignment[self.row_offset(a) + b - a - 1] as usize
    }

    /// Fold ids of `{i, j}` for `j = i+1..n`.
    pub fn row(&self, i: usize) -> &[u16] {
        let start = self.row_offset(i);
        &self.assignment[start..start + (self.n_nodes - i - 1)]
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f as usize] += 1;
        }
        sizes
    }

    /// Dyads `(i, j)`, `i < j`, assigned to `fold`.
    pub fn dyads_in(&self, fold: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n_nodes {
            for (off, &f) in self.row(i).iter().enumerate() {
                if f as usize == fold {
                    out.push((i, i + 1 + off));
                }
            }
        }
        out
    }

    /// View that hides `fold` from training.
    pub fn hold_out(&self, fold: usize) -> HeldOut<'_> {
        assert!(fold < self.n_folds, "fold {fold} out of range");
        HeldOut { mask: self, fold }
    }
}

/// A mask together with the fold excluded from training.
#[derive(Debug, Clone, Copy)]
pub struct HeldOut<'a> {
    mask: &'a DyadMask,
    fold: usize,
}

impl<'a> HeldOut<'a> {
    pub fn fold(&self) -> usize {
        self.fold
    }

    pub fn mask(&self) -> &'a DyadMask {
        self.mask
    }

    /// Whether the entry `(i, j)` (and therefore `(j, i)`) is hidden.
    pub fn is_held_out(&self, i: usize, j: usize) -> bool {
        self.mask.fold_of(i, j) == self.fold
    }

    /// Held-out flags for `{i, j}`, `j = i+1..n`, as a row iterator.
    pub(crate) fn row(&self, i: usize) -> (&'a [u16], u16) {
        (self.mask.row(i), self.fold as u16)
    }
}

/// `true` when `(i, j)` takes part in training under the optional mask.
#[inline]
pub fn is_training(mask: Option<HeldOut<'_>>, i: usize, j: usize) -> bool {
    match mask {
        Some(m) => !m.is_held_out(i, j),
        None => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_nodes_five_folds() {
        let m = DyadMask::random(5, 5, 1).unwrap();
        assert_eq!(m.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn remainder_goes_to_first_folds() {
        let m = DyadMask::random(5, 4, 1).unwrap();
        assert_eq!(m.fold_sizes(), vec![3, 3, 2, 2]);
    }

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(
            DyadMask::random(30, 5, 9).unwrap(),
            DyadMask::random(30, 5, 9).unwrap()
        );
        assert_ne!(
            DyadMask::random(30, 5, 9).unwrap(),
            DyadMask::random(30, 5, 10).unwrap()
        );
    }

    #[test]
    fn symmetric_and_covering() {
        let n = 17;
        let m = DyadMask::random(n, 5, 3).unwrap();
        let mut seen = 0;
        for f in 0..5 {
            for (i, j) in m.dyads_in(f) {
                assert!(i < j);
                assert_eq!(m.fold_of(i, j), f);
                assert_eq!(m.fold_of(j, i), f);
                seen += 1;
            }
        }
        assert_eq!(seen, n * (n - 1) / 2);
        let sizes = m.fold_sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(DyadMask::random(5, 1, 0).is_err());
        assert!(DyadMask::random(3, 5, 0).is_err());
    }

    #[test]
    fn row_matches_fold_of() {
        let m = DyadMask::random(9, 3, 4).unwrap();
        for i in 0..9 {
            for (off, &f) in m.row(i).iter().enumerate() {
                assert_eq!(f as usize, m.fold_of(i, i + 1 + off));
            }
        }
    }
}
