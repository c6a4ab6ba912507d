//! Multi-indices `k = (k_1, …, k_d)` with `|k| = Σ k_j` and `k! = Π k_j!`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::specfun::ln_factorial;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zeros(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    /// `(1, …, 1)` in dimension `d`.
    pub fn ones(d: usize) -> Self {
        MultiIndex(vec![1; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// `|k|`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    /// `ln k!`, exact to rounding for every entry size.
    pub fn ln_factorial(&self) -> f64 {
        self.0.iter().map(|&k| ln_factorial(k)).sum()
    }

    /// `k!` as a float. Overflows to infinity only beyond `170!`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&k| crate::specfun::factorial(k)).product()
    }

    /// Entry-wise sum `k + i`.
    pub fn add(&self, other: &MultiIndex) -> Result<MultiIndex> {
        crate::error::check_dim(self.dim(), other.dim())?;
        Ok(MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    /// All multi-indices of dimension `d` with `|k| = order`, in increasing
    /// lexicographic order.
    pub fn with_order(d: usize, order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        if d == 0 {
            if order == 0 {
                out.push(MultiIndex(Vec::new()));
            }
            return out;
        }
        let mut current = vec![0u32; d];
        fill(&mut current, 0, order, &mut out);
        out
    }

    /// All multi-indices with `|k| ≤ max_order`, grouped by order.
    pub fn up_to(d: usize, max_order: u32) -> Vec<MultiIndex> {
        (0..=max_order).flat_map(|l| MultiIndex::with_order(d, l)).collect()
    }
}

fn fill(current: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex(current.clone()));
        return;
    }
    for k in 0..=remaining {
        current[pos] = k;
        fill(current, pos + 1, remaining - k, out);
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }
}

/// Entries joined by `;`, e.g. `1;0;2`. The separator keeps the value a
/// single CSV field.
impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(';')
            .map(|part| {
                part.trim()
                    .parse::<u32>()
                    .map_err(|e| Error::invalid("multi_index", format!("`{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(MultiIndex)
    }
}
