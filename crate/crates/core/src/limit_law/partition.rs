use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grouping `t = (t_0, …, t_{k⁰})`, `0 = t_0 < t_1 < … < t_{k⁰} ≤ k`, of fitted
/// units onto true units. Group `i` (zero-based) holds the fitted units
/// `t_i..t_{i+1}` (zero-based, half open).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    t: Vec<usize>,
}

impl Partition {
    pub fn new(t: Vec<usize>) -> Result<Self> {
        if t.len() < 2 || t[0] != 0 {
            return Err(Error::Config(format!("partition must start at 0 and have k0 >= 1: {t:?}")));
        }
        if t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("partition must be strictly increasing: {t:?}")));
        }
        Ok(Self { t })
    }

    /// All units in singleton groups, `t = (0, 1, …, k⁰)`.
    pub fn singletons(k0: usize) -> Self {
        Self { t: (0..=k0).collect() }
    }

    pub fn t(&self) -> &[usize] {
        &self.t
    }

    /// Number of true units `k⁰`.
    pub fn k0(&self) -> usize {
        self.t.len() - 1
    }

    /// `t_{k⁰}`: fitted units attached to some true unit.
    pub fn used_units(&self) -> usize {
        self.t[self.k0()]
    }

    pub fn group(&self, i: usize) -> Range<usize> {
        self.t[i]..self.t[i + 1]
    }

    /// `m_i`.
    pub fn group_size(&self, i: usize) -> usize {
        self.t[i + 1] - self.t[i]
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        (0..self.k0()).map(|i| self.group_size(i)).collect()
    }

    /// Group holding fitted unit `j`, if any.
    pub fn group_of(&self, j: usize) -> Option<usize> {
        (0..self.k0()).find(|&i| self.group(i).contains(&j))
    }

    pub fn fits_width(&self, k: usize) -> bool {
        self.used_units() <= k
    }
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = Error;
    fn try_from(t: Vec<usize>) -> Result<Self> {
        Partition::new(t)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.t
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.t.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

/// Every partition for `k` fitted and `k0` true units, lexicographic in `t`.
pub fn enumerate_partitions(k: usize, k0: usize) -> Result<Vec<Partition>> {
    if k0 == 0 || k < k0 {
        return Err(Error::Config(format!("need k >= k0 >= 1 (k={k}, k0={k0})")));
    }
    let mut out = Vec::new();
    let mut t = vec![0usize; k0 + 1];
    fn rec(t: &mut Vec<usize>, pos: usize, k: usize, out: &mut Vec<Partition>) {
        if pos == t.len() {
            out.push(Partition { t: t.clone() });
            return;
        }
        let remaining = t.len() - 1 - pos;
        for v in t[pos - 1] + 1..=k - remaining {
            t[pos] = v;
            rec(t, pos + 1, k, out);
        }
    }
    rec(&mut t, 1, k, &mut out);
    Ok(out)
}
