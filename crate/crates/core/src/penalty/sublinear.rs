//! Sublinear (positively homogeneous convex) functions built from disjoint
//! blocks plus a linear term.
//!
//! Every penalty in this crate, and every directional derivative of one, has
//! the form `h(u) = bᵀu + Σ_blocks h_B(u_B)`. The family is closed under
//! `u ↦ h′(θ; u)`, which is what lets limit laws, subdifferential membership
//! and relative-interior points all be computed exactly.

use crate::numerics::Vector;

use super::isotonic::pava_nonincreasing;
use super::tv::tv_prox;

/// One nonlinear piece of a [`DirectionalPenalty`].
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    /// `weight · Σ |u_i|`.
    Abs { indices: Vec<usize>, weight: f64 },
    /// `Σ_j weights_j |u|_(j)` with magnitudes sorted decreasingly and
    /// `weights` nonincreasing and nonnegative.
    SortedAbs { indices: Vec<usize>, weights: Vec<f64> },
    /// `Σ_j weights_j y_[j]` with `y = signs ∘ u` sorted decreasingly (no
    /// absolute values). `weights` is nonincreasing and sums to zero.
    SortedSigned {
        indices: Vec<usize>,
        signs: Vec<f64>,
        weights: Vec<f64>,
    },
    /// `l1 · Σ |u_i| + tv · Σ |u_{i+1} − u_i|` over the contiguous range
    /// `start..start + len`.
    Fused {
        start: usize,
        len: usize,
        l1: f64,
        tv: f64,
    },
}

impl Block {
    fn value(&self, u: &Vector) -> f64 {
        match self {
            Block::Abs { indices, weight } => weight * indices.iter().map(|&i| u[i].abs()).sum::<f64>(),
            Block::SortedAbs { indices, weights } => {
                let mut a: Vec<f64> = indices.iter().map(|&i| u[i].abs()).collect();
                a.sort_by(|x, y| y.total_cmp(x));
                a.iter().zip(weights).map(|(x, w)| x * w).sum()
            }
            Block::SortedSigned {
                indices,
                signs,
                weights,
            } => {
                let mut y: Vec<f64> = indices.iter().zip(signs).map(|(&i, s)| s * u[i]).collect();
                y.sort_by(|x, y| y.total_cmp(x));
                y.iter().zip(weights).map(|(x, w)| x * w).sum()
            }
            Block::Fused { start, len, l1, tv } => {
                let seg = &u.as_slice()[*start..start + len];
                let a: f64 = seg.iter().map(|x| x.abs()).sum();
                let d: f64 = seg.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
                l1 * a + tv * d
            }
        }
    }

    fn prox_in_place(&self, x: &mut Vector, t: f64) {
        match self {
            Block::Abs { indices, weight } => {
                for &i in indices {
                    x[i] = soft(x[i], t * weight);
                }
            }
            Block::SortedAbs { indices, weights } => {
                let order = argsort_desc(indices.iter().map(|&i| x[i].abs()));
                let mut z: Vec<f64> = order
                    .iter()
                    .zip(weights)
                    .map(|(&k, w)| x[indices[k]].abs() - t * w)
                    .collect();
                pava_nonincreasing(&mut z);
                for (&k, zj) in order.iter().zip(&z) {
                    let i = indices[k];
                    x[i] = x[i].signum() * zj.max(0.0);
                }
            }
            Block::SortedSigned {
                indices,
                signs,
                weights,
            } => {
                let order = argsort_desc(indices.iter().zip(signs).map(|(&i, s)| s * x[i]));
                let mut z: Vec<f64> = order
                    .iter()
                    .zip(weights)
                    .map(|(&k, w)| signs[k] * x[indices[k]] - t * w)
                    .collect();
                pava_nonincreasing(&mut z);
                for (&k, zj) in order.iter().zip(&z) {
                    x[indices[k]] = signs[k] * zj;
                }
            }
            Block::Fused { start, len, l1, tv } => {
                let seg = &mut x.as_mut_slice()[*start..start + len];
                tv_prox(seg, t * tv);
                for v in seg.iter_mut() {
                    *v = soft(*v, t * l1);
                }
            }
        }
    }

    /// Appends the directional derivative of this block at `u`: linear terms
    /// go into `offset`, remaining nonlinear pieces into `out`.
    fn directional_at(&self, u: &Vector, offset: &mut Vector, out: &mut Vec<Block>) {
        match self {
            Block::Abs { indices, weight } => {
                if *weight == 0.0 {
                    return;
                }
                let mut zeros = Vec::new();
                for &i in indices {
                    if u[i] == 0.0 {
                        zeros.push(i);
                    } else {
                        offset[i] += weight * u[i].signum();
                    }
                }
                if !zeros.is_empty() {
                    out.push(Block::Abs {
                        indices: zeros,
                        weight: *weight,
                    });
                }
            }
            Block::SortedAbs { indices, weights } => {
                let keys: Vec<f64> = indices.iter().map(|&i| u[i].abs()).collect();
                let mut pos = 0;
                for group in groups_desc(&keys) {
                    let ws = &weights[pos..pos + group.len()];
                    pos += group.len();
                    let idx: Vec<usize> = group.iter().map(|&k| indices[k]).collect();
                    if keys[group[0]] > 0.0 {
                        let signs: Vec<f64> = idx.iter().map(|&i| u[i].signum()).collect();
                        push_signed(idx, signs, ws, offset, out);
                    } else if ws.iter().any(|&w| w > 0.0) {
                        out.push(Block::SortedAbs {
                            indices: idx,
                            weights: ws.to_vec(),
                        });
                    }
                }
            }
            Block::SortedSigned {
                indices,
                signs,
                weights,
            } => {
                let keys: Vec<f64> = indices.iter().zip(signs).map(|(&i, s)| s * u[i]).collect();
                let mut pos = 0;
                for group in groups_desc(&keys) {
                    let ws = &weights[pos..pos + group.len()];
                    pos += group.len();
                    let idx: Vec<usize> = group.iter().map(|&k| indices[k]).collect();
                    let sg: Vec<f64> = group.iter().map(|&k| signs[k]).collect();
                    push_signed(idx, sg, ws, offset, out);
                }
            }
            Block::Fused { start, len, l1, tv } => {
                let (start, len) = (*start, *len);
                let end = start + len;
                for i in start..end {
                    if u[i] != 0.0 {
                        offset[i] += l1 * u[i].signum();
                    }
                }
                let mut run_start = start;
                for i in start..end {
                    let closes = i + 1 == end || u[i + 1] != u[i];
                    if i + 1 < end && u[i + 1] != u[i] && *tv != 0.0 {
                        let s = (u[i + 1] - u[i]).signum();
                        offset[i + 1] += tv * s;
                        offset[i] -= tv * s;
                    }
                    if closes {
                        let run_len = i + 1 - run_start;
                        let run_l1 = if u[run_start] == 0.0 { *l1 } else { 0.0 };
                        if (run_len > 1 && *tv > 0.0) || run_l1 > 0.0 {
                            out.push(Block::Fused {
                                start: run_start,
                                len: run_len,
                                l1: run_l1,
                                tv: *tv,
                            });
                        }
                        run_start = i + 1;
                    }
                }
            }
        }
    }

    /// Gauge of `∂h_B(0)` evaluated at `x` restricted to the block; `tol`
    /// absorbs rounding in the hard constraints.
    fn dual_gauge(&self, x: &Vector, tol: f64) -> f64 {
        match self {
            Block::Abs { indices, weight } => {
                let m = indices.iter().map(|&i| x[i].abs()).fold(0.0, f64::max);
                ratio(m, *weight, tol)
            }
            Block::SortedAbs { indices, weights } => {
                let mut a: Vec<f64> = indices.iter().map(|&i| x[i].abs()).collect();
                a.sort_by(|p, q| q.total_cmp(p));
                prefix_gauge(&a, weights, a.len(), tol)
            }
            Block::SortedSigned {
                indices,
                signs,
                weights,
            } => {
                let mut y: Vec<f64> = indices.iter().zip(signs).map(|(&i, s)| s * x[i]).collect();
                y.sort_by(|p, q| q.total_cmp(p));
                let total: f64 = y.iter().sum();
                if total.abs() > tol * y.len() as f64 {
                    return f64::INFINITY;
                }
                prefix_gauge(&y, weights, y.len().saturating_sub(1), tol)
            }
            Block::Fused { start, len, l1, tv } => {
                fused_gauge(&x.as_slice()[*start..start + len], *l1, *tv, tol)
            }
        }
    }

    fn indices(&self) -> Vec<usize> {
        match self {
            Block::Abs { indices, .. } | Block::SortedAbs { indices, .. } | Block::SortedSigned { indices, .. } => {
                indices.clone()
            }
            Block::Fused { start, len, .. } => (*start..start + len).collect(),
        }
    }
}

/// Splits a sorted-weight group into its mean (a linear term) and the
/// centered remainder.
fn push_signed(idx: Vec<usize>, signs: Vec<f64>, ws: &[f64], offset: &mut Vector, out: &mut Vec<Block>) {
    let mean = ws.iter().sum::<f64>() / ws.len() as f64;
    for (&i, s) in idx.iter().zip(&signs) {
        offset[i] += s * mean;
    }
    if ws.first() != ws.last() {
        out.push(Block::SortedSigned {
            indices: idx,
            signs,
            weights: ws.iter().map(|w| w - mean).collect(),
        });
    }
}

fn ratio(num: f64, den: f64, tol: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > tol {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `max_{k ≤ upto} (Σ_{j≤k} a_j) / (Σ_{j≤k} w_j)` for `a` sorted decreasingly.
fn prefix_gauge(a: &[f64], w: &[f64], upto: usize, tol: f64) -> f64 {
    let (mut ta, mut tw, mut g) = (0.0, 0.0, 0.0f64);
    for k in 0..upto {
        ta += a[k];
        tw += w[k];
        g = g.max(ratio(ta, tw, tol));
    }
    g
}

/// Smallest `r` such that `x = a + Dᵀc` with `|a| ≤ r·l1`, `|c| ≤ r·tv`.
fn fused_gauge(x: &[f64], l1: f64, tv: f64, tol: f64) -> f64 {
    let feasible = |r: f64| -> bool {
        let m = x.len();
        let (a, b) = (r * l1 + tol, r * tv + tol);
        // c_k = c_{k-1} + a_k − x_k, c_0 = c_m = 0, |c_k| ≤ b for 0 < k < m.
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for (k, xk) in x.iter().enumerate() {
            lo += -xk - a;
            hi += -xk + a;
            if k + 1 < m {
                lo = lo.max(-b);
                hi = hi.min(b);
            }
            if lo > hi {
                return false;
            }
        }
        lo <= 0.0 && 0.0 <= hi
    };
    if feasible(0.0) {
        return 0.0;
    }
    let mut hi = 1.0;
    while !feasible(hi) {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub(crate) fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Positions sorted by decreasing key; ties keep their input order.
fn argsort_desc(keys: impl Iterator<Item = f64>) -> Vec<usize> {
    let keys: Vec<f64> = keys.collect();
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
    order
}

/// Groups of positions with exactly equal key, ordered by decreasing key.
fn groups_desc(keys: &[f64]) -> Vec<Vec<usize>> {
    let order = argsort_desc(keys.iter().copied());
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for k in order {
        match groups.last_mut() {
            Some(g) if keys[g[0]] == keys[k] => g.push(k),
            _ => groups.push(vec![k]),
        }
    }
    groups
}

/// A sublinear function `h(u) = offsetᵀu + Σ_B h_B(u_B)` with disjoint blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalPenalty {
    offset: Vector,
    blocks: Vec<Block>,
}

impl DirectionalPenalty {
    pub(crate) fn new(offset: Vector, blocks: Vec<Block>) -> Self {
        Self { offset, blocks }
    }

    /// The zero function on `R^dim`.
    pub fn zero(dim: usize) -> Self {
        Self::new(Vector::zeros(dim), Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// The linear part `b`.
    pub fn offset(&self) -> &Vector {
        &self.offset
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// True when the function is linear, i.e. its subdifferential is the
    /// single point [`offset`](Self::offset).
    pub fn is_linear(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn value(&self, u: &Vector) -> f64 {
        self.offset.dot(u) + self.base_value(u)
    }

    fn base_value(&self, u: &Vector) -> f64 {
        self.blocks.iter().map(|b| b.value(u)).sum()
    }

    /// `argmin_x ½‖x − v‖² + t·h(x)`.
    pub fn prox(&self, v: &Vector, t: f64) -> Vector {
        let mut x = v - &self.offset * t;
        self.base_prox_in_place(&mut x, t);
        x
    }

    fn base_prox_in_place(&self, x: &mut Vector, t: f64) {
        for b in &self.blocks {
            b.prox_in_place(x, t);
        }
    }

    /// `u ↦ h′(at; u)`.
    pub fn directional_at(&self, at: &Vector) -> DirectionalPenalty {
        let mut offset = self.offset.clone();
        let mut blocks = Vec::new();
        for b in &self.blocks {
            b.directional_at(at, &mut offset, &mut blocks);
        }
        DirectionalPenalty::new(offset, blocks)
    }

    /// Euclidean distance from `v` to `∂h(at)`.
    ///
    /// `∂h(at) = offset′ + ∂base′(0)` where `h′(at; ·) = offset′ᵀu + base′(u)`;
    /// by Moreau's decomposition the distance to `∂base′(0)` is the norm of
    /// `prox_{base′}`.
    pub fn subdiff_distance(&self, at: &Vector, v: &Vector) -> f64 {
        let d = self.directional_at(at);
        let mut r = v - &d.offset;
        d.base_prox_in_place(&mut r, 1.0);
        r.norm()
    }

    /// A point in the relative interior of `∂h(at)`.
    pub fn subdiff_ri_point(&self, at: &Vector) -> Vector {
        self.directional_at(at).offset
    }

    /// Gauge of `∂base(0)` at `x`: the least `r ≥ 0` with `x ∈ r·∂base(0)`,
    /// `+∞` if none. Coordinates outside every block must vanish.
    pub fn dual_gauge(&self, x: &Vector, tol: f64) -> f64 {
        let mut covered = vec![false; self.dim()];
        let mut g = 0.0f64;
        for b in &self.blocks {
            for i in b.indices() {
                covered[i] = true;
            }
            g = g.max(b.dual_gauge(x, tol));
        }
        for (i, c) in covered.iter().enumerate() {
            if !c && x[i].abs() > tol {
                return f64::INFINITY;
            }
        }
        g
    }
}

/// Types with a computable distance to their subdifferential; the solver's
/// optimality residual is built on this.
pub trait Subdifferential {
    /// Euclidean distance from `v` to `∂h(at)`.
    fn subdiff_distance(&self, at: &Vector, v: &Vector) -> f64;
}

impl Subdifferential for DirectionalPenalty {
    fn subdiff_distance(&self, at: &Vector, v: &Vector) -> f64 {
        DirectionalPenalty::subdiff_distance(self, at, v)
    }
}
