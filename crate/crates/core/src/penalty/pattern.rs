use std::fmt;

use serde::{Deserialize, Serialize};

/// Canonical encoding of the face structure of a penalty at a point.
///
/// Two points with the same encoding have the same subdifferential, and the
/// encoding is invariant under positive rescaling.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Pattern {
    /// Sign vector (Lasso, weighted Lasso, elastic net, no penalty).
    Signs { signs: Vec<i8> },
    /// Signs plus magnitude cluster ranks: rank 0 marks zeros, rank 1 the
    /// smallest nonzero magnitude, and so on (SLOPE).
    Clusters { signs: Vec<i8>, ranks: Vec<u32> },
    /// Signs of the coordinates and of successive differences (fused Lasso).
    Fused { signs: Vec<i8>, diffs: Vec<i8> },
}

impl Pattern {
    pub fn dim(&self) -> usize {
        self.signs().len()
    }

    pub fn signs(&self) -> &[i8] {
        match self {
            Pattern::Signs { signs } | Pattern::Clusters { signs, .. } | Pattern::Fused { signs, .. } => signs,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.signs().iter().all(|&s| s == 0)
    }
}

fn sign_char(s: i8) -> char {
    match s {
        1 => '+',
        -1 => '-',
        _ => '0',
    }
}

impl fmt::Display for Pattern {
    /// Compact form: `+-00`, `-2 -2 +1 0`, or `++0/0-`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Signs { signs } => {
                for &s in signs {
                    write!(f, "{}", sign_char(s))?;
                }
                Ok(())
            }
            Pattern::Clusters { signs, ranks } => {
                for (k, (&s, &r)) in signs.iter().zip(ranks).enumerate() {
                    if k > 0 {
                        f.write_str(" ")?;
                    }
                    if r == 0 {
                        f.write_str("0")?;
                    } else {
                        write!(f, "{}{}", sign_char(s), r)?;
                    }
                }
                Ok(())
            }
            Pattern::Fused { signs, diffs } => {
                for &s in signs {
                    write!(f, "{}", sign_char(s))?;
                }
                f.write_str("/")?;
                for &s in diffs {
                    write!(f, "{}", sign_char(s))?;
                }
                Ok(())
            }
        }
    }
}

pub(crate) fn sign_of(x: f64, thr: f64) -> i8 {
    if x > thr {
        1
    } else if x < -thr {
        -1
    } else {
        0
    }
}

/// Dense ranks of nonzero keys in increasing order; entries with `None` get
/// rank 0. Neighbours in sorted order differing by at most `same` (under
/// `close`) share a rank.
pub(crate) fn dense_ranks<K: Copy>(
    keys: &[Option<K>],
    cmp: impl Fn(&K, &K) -> std::cmp::Ordering,
    close: impl Fn(&K, &K) -> bool,
) -> Vec<u32> {
    let mut order: Vec<usize> = (0..keys.len()).filter(|&i| keys[i].is_some()).collect();
    order.sort_by(|&a, &b| cmp(keys[a].as_ref().unwrap(), keys[b].as_ref().unwrap()));
    let mut ranks = vec![0u32; keys.len()];
    let mut rank = 0;
    let mut prev: Option<K> = None;
    for i in order {
        let k = keys[i].unwrap();
        match prev {
            Some(p) if close(&p, &k) => {}
            _ => rank += 1,
        }
        ranks[i] = rank;
        prev = Some(k);
    }
    ranks
}
