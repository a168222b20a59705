//! Exact proximal operator of one-dimensional total variation.

/// Solves `min_x ½‖x − y‖² + lambda Σ |x_{i+1} − x_i|` in place.
///
/// Direct taut-string style algorithm (Condat, 2013): a single forward pass
/// that tracks the admissible range of the current segment value and backs
/// up to the last knot when the range collapses. Linear time in practice,
/// and every output segment is written with one value, so plateaus are
/// exactly flat.
pub(crate) fn tv_prox(y: &mut [f64], lambda: f64) {
    let n = y.len();
    if n <= 1 || lambda <= 0.0 {
        return;
    }
    let input = y.to_vec();
    let out = y;
    let mut k = 0usize;
    let mut k0 = 0usize;
    let mut kminus = 0usize;
    let mut kplus = 0usize;
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = input[0] - lambda;
    let mut vmax = input[0] + lambda;
    let twolambda = 2.0 * lambda;
    let minlambda = -lambda;
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                // vmin too high: negative jump
                while k0 <= kminus {
                    out[k0] = vmin;
                    k0 += 1;
                }
                kminus = k0;
                k = k0;
                vmin = input[k];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                // vmax too low: positive jump
                while k0 <= kplus {
                    out[k0] = vmax;
                    k0 += 1;
                }
                kplus = k0;
                k = k0;
                vmax = input[k];
                umax = minlambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                while k0 <= k {
                    out[k0] = vmin;
                    k0 += 1;
                }
                return;
            }
        }
        umin += input[k + 1] - vmin;
        if umin < minlambda {
            while k0 <= kminus {
                out[k0] = vmin;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = input[k];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = minlambda;
            continue;
        }
        umax += input[k + 1] - vmax;
        if umax > lambda {
            while k0 <= kplus {
                out[k0] = vmax;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = input[k];
            vmin = vmax - twolambda;
            umin = lambda;
            umax = minlambda;
        } else {
            k += 1;
            if umin >= lambda {
                kminus = k;
                vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
                umin = lambda;
            }
            if umax <= minlambda {
                kplus = k;
                vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
                umax = minlambda;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(x: &[f64], y: &[f64], lambda: f64) -> f64 {
        let fit: f64 = x.iter().zip(y).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
        let tv: f64 = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        fit + lambda * tv
    }

    #[test]
    fn two_points_close_together_merge() {
        let mut y = [1.0, 2.0];
        tv_prox(&mut y, 1.0);
        assert_eq!(y, [1.5, 1.5]);
    }

    #[test]
    fn two_points_far_apart_shrink() {
        let mut y = [0.0, 4.0];
        tv_prox(&mut y, 1.0);
        assert_eq!(y, [1.0, 3.0]);
    }

    #[test]
    fn huge_lambda_gives_mean() {
        let mut y = [1.0, -2.0, 5.0, 0.0];
        tv_prox(&mut y, 100.0);
        for v in y {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_lambda_is_identity() {
        let mut y = [1.0, -2.0, 5.0];
        tv_prox(&mut y, 0.0);
        assert_eq!(y, [1.0, -2.0, 5.0]);
    }

    proptest::proptest! {
        #[test]
        fn no_local_improvement(y in proptest::collection::vec(-5.0f64..5.0, 2..9), lambda in 0.01f64..3.0) {
            let mut x = y.clone();
            tv_prox(&mut x, lambda);
            let best = objective(&x, &y, lambda);
            // Optimality check along coordinate and block moves.
            for i in 0..x.len() {
                for j in i..x.len() {
                    for h in [1e-4, -1e-4] {
                        let mut z = x.clone();
                        for zk in &mut z[i..=j] {
                            *zk += h;
                        }
                        proptest::prop_assert!(objective(&z, &y, lambda) >= best - 1e-12);
                    }
                }
            }
        }
    }
}
