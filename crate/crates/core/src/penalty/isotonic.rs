//! Pool-adjacent-violators for nonincreasing least squares fits.

/// Replaces `z` by its projection onto the nonincreasing cone
/// `{x : x_1 ≥ x_2 ≥ … ≥ x_m}`.
///
/// Pooled entries receive the identical block mean, so ties in the output are
/// exact.
pub(crate) fn pava_nonincreasing(z: &mut [f64]) {
    // (sum, count) per block on a stack.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(z.len());
    for &v in z.iter() {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 <= s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut k = 0;
    for (s, c) in blocks {
        let mean = s / c as f64;
        z[k..k + c].fill(mean);
        k += c;
    }
}
