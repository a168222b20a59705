//! Independent reference implementations used by the integration tests.
//!
//! Everything here works from definitions (explicit vertices, brute-force
//! enumeration, plain loops over `Vec<f64>`) and shares no code with the
//! library beyond plain data.

#![allow(dead_code)]

use minilp::{ComparisonOp, OptimizationDirection, Problem};

pub fn slope_value(lambda: &[f64], x: &[f64]) -> f64 {
    let mut a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    a.sort_by(|p, q| q.partial_cmp(p).unwrap());
    a.iter().zip(lambda).map(|(p, q)| p * q).sum()
}

pub fn fused_value(l1: f64, tv: f64, x: &[f64]) -> f64 {
    l1 * x.iter().map(|v| v.abs()).sum::<f64>() + tv * x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
}

fn half_sq_dist(x: &[f64], v: &[f64]) -> f64 {
    x.iter().zip(v).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum()
}

/// All maps `{0..n} → {0..k}` as vectors of labels.
fn all_labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|l| {
                (0..k).map(move |c| {
                    let mut l = l.clone();
                    l.push(c);
                    l
                })
            })
            .collect();
    }
    out
}

/// Minimizer of `½‖x − v‖² + t·slope(x)` by enumerating every (sign, weak
/// ordering of magnitudes) pattern, solving the quadratic on that pattern's
/// linear span, and keeping the candidate with least true objective.
pub fn brute_force_prox_slope(lambda: &[f64], v: &[f64], t: f64) -> Vec<f64> {
    let p = v.len();
    let obj = |x: &[f64]| half_sq_dist(x, v) + t * slope_value(lambda, x);
    let mut best = vec![0.0; p];
    let mut best_val = obj(&best);
    for signs in all_labelings(p, 3) {
        let s: Vec<f64> = signs.iter().map(|&c| c as f64 - 1.0).collect();
        let support: Vec<usize> = (0..p).filter(|&i| s[i] != 0.0).collect();
        let m = support.len();
        if m == 0 {
            continue;
        }
        for labels in all_labelings(m, m) {
            let k = labels.iter().max().unwrap() + 1;
            if (0..k).any(|c| !labels.contains(&c)) {
                continue;
            }
            // Higher label = larger magnitude = earlier sorted position.
            let mut x = vec![0.0; p];
            let mut pos = 0;
            for c in (0..k).rev() {
                let members: Vec<usize> = (0..m).filter(|&j| labels[j] == c).map(|j| support[j]).collect();
                let g: f64 = lambda[pos..pos + members.len()].iter().sum();
                pos += members.len();
                let beta = (members.iter().map(|&i| s[i] * v[i]).sum::<f64>() - t * g) / members.len() as f64;
                for &i in &members {
                    x[i] = s[i] * beta;
                }
            }
            let val = obj(&x);
            if val < best_val {
                best_val = val;
                best = x;
            }
        }
    }
    best
}

/// Minimizer of `½‖x − v‖² + t·(l1‖x‖₁ + tv‖Dx‖₁)` by enumerating sign and
/// difference-sign patterns.
pub fn brute_force_prox_fused(l1: f64, tv: f64, v: &[f64], t: f64) -> Vec<f64> {
    let p = v.len();
    let obj = |x: &[f64]| half_sq_dist(x, v) + t * fused_value(l1, tv, x);
    let mut best = vec![0.0; p];
    let mut best_val = obj(&best);
    for signs in all_labelings(p, 3) {
        let s: Vec<f64> = signs.iter().map(|&c| c as f64 - 1.0).collect();
        for diffs in all_labelings(p - 1, 3) {
            let d: Vec<f64> = diffs.iter().map(|&c| c as f64 - 1.0).collect();
            // Gradient of the penalty on this pattern's cone.
            let mut c: Vec<f64> = s.iter().map(|si| l1 * si).collect();
            for j in 0..p - 1 {
                c[j + 1] += tv * d[j];
                c[j] -= tv * d[j];
            }
            let mut x = vec![0.0; p];
            let mut start = 0;
            for i in 0..p {
                if i + 1 == p || d[i] != 0.0 {
                    if s[start] != 0.0 {
                        let n = (i + 1 - start) as f64;
                        let beta = (start..=i).map(|j| v[j] - t * c[j]).sum::<f64>() / n;
                        x[start..=i].fill(beta);
                    }
                    start = i + 1;
                }
            }
            let val = obj(&x);
            if val < best_val {
                best_val = val;
                best = x;
            }
        }
    }
    best
}

/// Every signed permutation of `lambda`: the vertices of `∂slope(0)`.
pub fn slope_vertices(lambda: &[f64]) -> Vec<Vec<f64>> {
    let p = lambda.len();
    let mut out = Vec::new();
    for perm in all_labelings(p, p) {
        let mut seen = vec![false; p];
        if perm.iter().any(|&j| std::mem::replace(&mut seen[j], true)) {
            continue;
        }
        for signs in all_labelings(p, 2) {
            out.push((0..p).map(|i| (2.0 * signs[i] as f64 - 1.0) * lambda[perm[i]]).collect());
        }
    }
    out
}

/// Vertices attaining `max_w wᵀθ`, i.e. those spanning `∂h(θ)`.
pub fn active_vertices(vertices: &[Vec<f64>], theta: &[f64]) -> Vec<Vec<f64>> {
    let score = |w: &Vec<f64>| w.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
    let m = vertices.iter().map(score).fold(f64::NEG_INFINITY, f64::max);
    vertices.iter().filter(|w| score(w) >= m - 1e-12 * (1.0 + m.abs())).cloned().collect()
}

/// ℓ1 distance from `v` to the convex hull of `points`, by linear programming.
pub fn lp_hull_distance(points: &[Vec<f64>], v: &[f64]) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mu: Vec<_> = points.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    lp.add_constraint(mu.iter().map(|&m| (m, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    for (i, vi) in v.iter().enumerate() {
        let sp = lp.add_var(1.0, (0.0, f64::INFINITY));
        let sn = lp.add_var(1.0, (0.0, f64::INFINITY));
        let mut terms: Vec<_> = mu.iter().zip(points).map(|(&m, w)| (m, w[i])).collect();
        terms.push((sp, 1.0));
        terms.push((sn, -1.0));
        lp.add_constraint(terms, ComparisonOp::Eq, *vi);
    }
    lp.solve().expect("hull LP is always feasible").objective()
}

/// ℓ1 distance from `v` to `∂(l1‖·‖₁ + tv‖D·‖₁)(θ)`, written as
/// `{a + Dᵀc}` with `a` and `c` boxed or pinned by the signs of `θ` and `Dθ`.
pub fn lp_fused_distance(l1: f64, tv: f64, theta: &[f64], v: &[f64]) -> f64 {
    let p = theta.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let bound = |x: f64, r: f64| if x != 0.0 { (r * x.signum(), r * x.signum()) } else { (-r, r) };
    let a: Vec<_> = (0..p).map(|i| lp.add_var(0.0, bound(theta[i], l1))).collect();
    let c: Vec<_> = (0..p - 1).map(|j| lp.add_var(0.0, bound(theta[j + 1] - theta[j], tv))).collect();
    for i in 0..p {
        let sp = lp.add_var(1.0, (0.0, f64::INFINITY));
        let sn = lp.add_var(1.0, (0.0, f64::INFINITY));
        // (Dᵀc)_i = c_{i−1} − c_i.
        let mut terms = vec![(a[i], 1.0), (sp, 1.0), (sn, -1.0)];
        if i > 0 {
            terms.push((c[i - 1], 1.0));
        }
        if i + 1 < p {
            terms.push((c[i], -1.0));
        }
        lp.add_constraint(terms, ComparisonOp::Eq, v[i]);
    }
    lp.solve().expect("fused LP is always feasible").objective()
}
