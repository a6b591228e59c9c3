//! The stage index set `ω ∪ (ω×ω)`: point stages `n` interleaved with
//! open-set stages `(i, j)`.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaIndex {
    Num(usize),
    Pair(usize, usize),
}

impl GammaIndex {
    fn key(&self) -> (usize, u8, usize) {
        match *self {
            GammaIndex::Num(n) => (n, 0, 0),
            GammaIndex::Pair(i, j) => (i + j, 1, i),
        }
    }

    /// Position in the enumeration.
    pub fn rank(&self) -> usize {
        match *self {
            // before Num(n): all Num(t) and Pair sums t for t < n
            GammaIndex::Num(n) => n * (n + 3) / 2,
            GammaIndex::Pair(i, j) => GammaIndex::Num(i + j).rank() + 1 + i,
        }
    }

    /// The strict down-set `{a : a ≺ self}`, in order.
    pub fn below(&self) -> Vec<GammaIndex> {
        enumerate(self.rank())
    }
}

impl Ord for GammaIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for GammaIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GammaIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaIndex::Num(n) => write!(f, "{n}"),
            GammaIndex::Pair(i, j) => write!(f, "({i},{j})"),
        }
    }
}

pub fn gamma_cmp(a: &GammaIndex, b: &GammaIndex) -> Ordering {
    a.cmp(b)
}

/// The first `count` indices in increasing order.
pub fn enumerate(count: usize) -> Vec<GammaIndex> {
    let mut out = Vec::with_capacity(count);
    let mut s = 0;
    while out.len() < count {
        out.push(GammaIndex::Num(s));
        for i in 0..=s {
            out.push(GammaIndex::Pair(i, s - i));
        }
        s += 1;
    }
    out.truncate(count);
    out
}

/// The index at position `rank`.
pub fn nth(rank: usize) -> GammaIndex {
    let mut s = 0;
    while GammaIndex::Num(s + 1).rank() <= rank {
        s += 1;
    }
    let off = rank - GammaIndex::Num(s).rank();
    if off == 0 {
        GammaIndex::Num(s)
    } else {
        GammaIndex::Pair(off - 1, s + 1 - off)
    }
}
