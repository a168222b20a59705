//! Adaptive quadrature for smooth one-dimensional integrands.

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The interval is first cut at `0` and at `±2^j`, so integrands whose mass
/// sits near the origin are resolved even on very long intervals. Each piece
/// is then handled by adaptive Simpson with Richardson correction.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -integrate(f, b, a, tol);
    }
    let mut cuts = vec![a];
    let mut marks: Vec<f64> = (-4..=62).map(|j| 2f64.powi(j)).collect();
    marks.extend(marks.clone().into_iter().map(|m| -m));
    marks.push(0.0);
    marks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.extend(marks.into_iter().filter(|&m| m > a && m < b));
    cuts.push(b);
    let pieces = (cuts.len() - 1) as f64;
    cuts.windows(2)
        .map(|w| simpson(&f, w[0], w[1], tol / pieces))
        .sum()
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
