//! Upper-triangle pivot indexing.
//!
//! Pairs `(i, j)` with `i < j < n` are enumerated row-major:
//! `(0,1), (0,2), ..., (0,n-1), (1,2), ..., (n-2,n-1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of pivots of an order-`n` matrix, `n(n-1)/2`.
pub const fn num_actions(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// An upper-triangle pivot `(i, j)` with its flat index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PivotAction {
    pub i: usize,
    pub j: usize,
    pub flat: usize,
}

impl PivotAction {
    pub fn new(i: usize, j: usize, n: usize) -> Result<Self> {
        let flat = action_index(i, j, n)?;
        Ok(Self { i, j, flat })
    }

    pub fn from_flat(flat: usize, n: usize) -> Result<Self> {
        let (i, j) = action_pair(flat, n)?;
        Ok(Self { i, j, flat })
    }

    /// Same as [`PivotAction::new`] for indices already known to be valid.
    pub(crate) fn new_unchecked(i: usize, j: usize, n: usize) -> Self {
        debug_assert!(i < j && j < n);
        Self { i, j, flat: flat_unchecked(i, j, n) }
    }
}

impl std::fmt::Display for PivotAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

#[inline]
fn flat_unchecked(i: usize, j: usize, n: usize) -> usize {
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

pub fn action_index(i: usize, j: usize, n: usize) -> Result<usize> {
    if i >= n || j >= n {
        return Err(Error::IndexOutOfRange { i, j, n });
    }
    if i >= j {
        return Err(Error::NotUpperTriangle { i, j });
    }
    Ok(flat_unchecked(i, j, n))
}

pub fn action_pair(flat: usize, n: usize) -> Result<(usize, usize)> {
    if flat >= num_actions(n) {
        return Err(Error::ActionOutOfRange { flat, n });
    }
    let mut rest = flat;
    for i in 0..n - 1 {
        let row_len = n - 1 - i;
        if rest < row_len {
            return Ok((i, i + 1 + rest));
        }
        rest -= row_len;
    }
    unreachable!("flat index checked against num_actions")
}

/// All pivots of an order-`n` matrix in flat order.
pub fn all_actions(n: usize) -> impl Iterator<Item = PivotAction> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| PivotAction::new_unchecked(i, j, n)))
}
