//! Penalty operations against explicit-vertex and brute-force oracles.

mod support;

use polypat::numerics::Vector;
use polypat::penalty::{PenaltySpec, Subdifferential};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

fn vec(x: &[f64]) -> Vector {
    Vector::from_row_slice(x)
}

/// Entries drawn from a small grid half the time so ties and zeros are common.
fn structured(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    (0..p)
        .map(|_| {
            if rng.random_bool(0.5) {
                rng.random_range(-2i32..=2) as f64
            } else {
                rng.random_range(-2.5..2.5)
            }
        })
        .collect()
}

fn random_lambda(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    let mut l: Vec<f64> = (0..p)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..2.0) })
        .collect();
    if rng.random_bool(0.3) && p > 1 {
        l[1] = l[0];
    }
    l.sort_by(|a, b| b.partial_cmp(a).unwrap());
    l
}

#[test]
fn slope_prox_two_dimensional_example() {
    let pen = PenaltySpec::slope(vec![2.0, 1.0]).compile(2).unwrap();
    let x = pen.prox(&vec(&[3.0, 2.5]), 1.0).unwrap();
    let oracle = brute_force_prox_slope(&[2.0, 1.0], &[3.0, 2.5], 1.0);
    for i in 0..2 {
        assert!((x[i] - oracle[i]).abs() < 1e-12);
        assert!((x[i] - 1.25).abs() < 1e-12);
    }
}

#[test]
fn slope_prox_matches_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..400 {
        let p = rng.random_range(1..=4);
        let lambda = random_lambda(&mut rng, p);
        let v = structured(&mut rng, p);
        let t = rng.random_range(0.1..2.0);
        let x = PenaltySpec::slope(lambda.clone()).compile(p).unwrap().prox(&vec(&v), t).unwrap();
        let oracle = brute_force_prox_slope(&lambda, &v, t);
        for i in 0..p {
            assert!((x[i] - oracle[i]).abs() < 1e-9, "λ={lambda:?} v={v:?} t={t}: {x} vs {oracle:?}");
        }
    }
}

#[test]
fn fused_prox_matches_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..400 {
        let p = rng.random_range(2..=4);
        let l1 = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1.5) };
        let tv = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1.5) };
        let v = structured(&mut rng, p);
        let t = rng.random_range(0.1..2.0);
        let x = PenaltySpec::fused(l1, tv).compile(p).unwrap().prox(&vec(&v), t).unwrap();
        let oracle = brute_force_prox_fused(l1, tv, &v, t);
        for i in 0..p {
            assert!((x[i] - oracle[i]).abs() < 1e-9, "l1={l1} tv={tv} v={v:?} t={t}: {x} vs {oracle:?}");
        }
    }
}

/// Random probe: half the time a convex combination of active vertices
/// (a member), otherwise a point in the bounding box.
fn probe(rng: &mut ChaCha8Rng, active: &[Vec<f64>], bound: f64) -> Vec<f64> {
    let p = active[0].len();
    if rng.random_bool(0.5) {
        let w: Vec<f64> = active.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = w.iter().sum();
        (0..p).map(|i| active.iter().zip(&w).map(|(a, wi)| a[i] * wi / s).sum()).collect()
    } else {
        (0..p).map(|_| rng.random_range(-bound..bound)).collect()
    }
}

/// The Euclidean distance reported by the library must bracket the ℓ1
/// distance computed by the LP: d₂ ≤ d₁ ≤ √p·d₂.
fn assert_distances_agree(d2: f64, d1: f64, p: usize, ctx: &str) {
    assert!(d2 <= d1 + 1e-9, "{ctx}: d2={d2} d1={d1}");
    assert!(d1 <= (p as f64).sqrt() * d2 + 1e-9, "{ctx}: d2={d2} d1={d1}");
    assert_eq!(d2 <= 1e-9, d1 <= 1e-9 * (p as f64).sqrt(), "{ctx}: membership disagrees");
}

#[test]
fn slope_membership_matches_vertex_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for p in [2usize, 3] {
        for _ in 0..100 {
            let lambda = random_lambda(&mut rng, p);
            let theta = structured(&mut rng, p);
            let v = probe(&mut rng, &active_vertices(&slope_vertices(&lambda), &theta), 2.0 * lambda[0] + 0.5);
            let pen = PenaltySpec::slope(lambda.clone()).compile(p).unwrap();
            let d2 = pen.subdiff_distance(&vec(&theta), &vec(&v)).unwrap();
            let d1 = lp_hull_distance(&active_vertices(&slope_vertices(&lambda), &theta), &v);
            assert_distances_agree(d2, d1, p, &format!("λ={lambda:?} θ={theta:?} v={v:?}"));
        }
    }
}

#[test]
fn fused_membership_matches_decomposition_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for p in [2usize, 3, 4] {
        for _ in 0..100 {
            let (l1, tv) = (rng.random_range(0.1..1.5), rng.random_range(0.1..1.5));
            let theta = structured(&mut rng, p);
            let pen = PenaltySpec::fused(l1, tv).compile(p).unwrap();
            // Members: the relative-interior point plus a random element of
            // the face, built from the decomposition directly.
            let v: Vec<f64> = if rng.random_bool(0.5) {
                let a: Vec<f64> = theta
                    .iter()
                    .map(|&x| if x != 0.0 { l1 * x.signum() } else { rng.random_range(-l1..l1) })
                    .collect();
                let c: Vec<f64> = theta
                    .windows(2)
                    .map(|w| if w[1] != w[0] { tv * (w[1] - w[0]).signum() } else { rng.random_range(-tv..tv) })
                    .collect();
                (0..p)
                    .map(|i| a[i] + if i > 0 { c[i - 1] } else { 0.0 } - if i + 1 < p { c[i] } else { 0.0 })
                    .collect()
            } else {
                (0..p).map(|_| rng.random_range(-3.0..3.0)).collect()
            };
            let d2 = pen.subdiff_distance(&vec(&theta), &vec(&v)).unwrap();
            let d1 = lp_fused_distance(l1, tv, &theta, &v);
            assert_distances_agree(d2, d1, p, &format!("l1={l1} tv={tv} θ={theta:?} v={v:?}"));
        }
    }
}

#[test]
fn slope_ri_point_at_origin_is_vertex_barycenter() {
    let lambda = [2.0, 1.0];
    let verts = slope_vertices(&lambda);
    let bary: Vec<f64> = (0..2).map(|i| verts.iter().map(|w| w[i]).sum::<f64>() / verts.len() as f64).collect();
    let pen = PenaltySpec::slope(lambda.to_vec()).compile(2).unwrap();
    let zero = Vector::zeros(2);
    let v0 = pen.subdiff_ri_point(&zero).unwrap();
    assert!((v0 - vec(&bary)).amax() < 1e-15);
    // Interior with margin: the full-dimensional face survives any small push.
    for dir in [[1.0, 0.0], [0.0, 1.0], [0.7, -0.7], [-1.0, -1.0]] {
        let w = vec(&bary) + vec(&dir) * 1e-6;
        assert!(lp_hull_distance(&verts, w.as_slice()) < 1e-12);
        assert!(pen.subdiff_distance(&zero, &w).unwrap() < 1e-12);
    }
}

#[test]
fn ri_point_survives_perturbation_within_face() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let p = 3;
        let lambda = random_lambda(&mut rng, p);
        if lambda[0] == 0.0 {
            continue;
        }
        let theta = structured(&mut rng, p);
        let pen = PenaltySpec::slope(lambda.clone()).compile(p).unwrap();
        let th = vec(&theta);
        let v0 = pen.subdiff_ri_point(&th).unwrap();
        let active = active_vertices(&slope_vertices(&lambda), &theta);
        assert!(lp_hull_distance(&active, v0.as_slice()) < 1e-9);
        // Directions spanning the face's affine hull.
        for a in &active {
            let d = vec(a) - &v0;
            if d.norm() < 1e-12 {
                continue;
            }
            for sgn in [1.0, -1.0] {
                let w = &v0 + &d * (sgn * 1e-6 / d.norm());
                assert!(lp_hull_distance(&active, w.as_slice()) < 1e-9, "λ={lambda:?} θ={theta:?}");
                assert!(Subdifferential::subdiff_distance(&pen, &th, &w) < 1e-9);
            }
        }
    }
}
