use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sigmoid, LossSpec, NoiseSpec};
use crate::error::{check_dim, Error, Result};
use crate::numerics::{cholesky, integrate, is_symmetric, symmetrize, Matrix, RngStream, SpdMatrix, Vector};

/// Hessian `C` of the population risk and covariance `C_Δ` of the score,
/// both at `θ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct MomentPair {
    c: SpdMatrix,
    c_delta: Matrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    c: Vec<Vec<f64>>,
    c_delta: Vec<Vec<f64>>,
}

impl TryFrom<RawPair> for MomentPair {
    type Error = Error;

    fn try_from(raw: RawPair) -> Result<Self> {
        let c = SpdMatrix::try_from(raw.c)?;
        let p = raw.c_delta.len();
        if raw.c_delta.iter().any(|r| r.len() != p) {
            return Err(Error::ConfigInvalid("c_delta must be square".into()));
        }
        let cd = Matrix::from_fn(p, p, |i, j| raw.c_delta[i][j]);
        MomentPair::new(c, cd)
    }
}

impl From<MomentPair> for RawPair {
    fn from(m: MomentPair) -> Self {
        let rows = |a: &Matrix| (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect();
        RawPair {
            c: rows(m.c.matrix()),
            c_delta: rows(&m.c_delta),
        }
    }
}

impl MomentPair {
    /// `c_delta` must be symmetric positive semidefinite with the dimension
    /// of `c`.
    pub fn new(c: SpdMatrix, c_delta: Matrix) -> Result<Self> {
        check_dim(c.dim(), c_delta.nrows())?;
        check_dim(c.dim(), c_delta.ncols())?;
        if c_delta.iter().any(|v| !v.is_finite()) || !is_symmetric(&c_delta) {
            return Err(Error::NotPositiveDefinite);
        }
        let c_delta = symmetrize(&c_delta);
        let min = c_delta.clone().symmetric_eigenvalues().min();
        if min < -1e-10 * c_delta.trace().abs().max(1.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(MomentPair { c, c_delta })
    }

    pub fn dim(&self) -> usize {
        self.c.dim()
    }

    pub fn c(&self) -> &SpdMatrix {
        &self.c
    }

    pub fn c_delta(&self) -> &Matrix {
        &self.c_delta
    }
}

fn require_noise<'a>(loss: &LossSpec, noise: Option<&'a NoiseSpec>) -> Result<&'a NoiseSpec> {
    let n = noise.ok_or_else(|| Error::ConfigInvalid(format!("{} loss needs a noise model", loss.name())))?;
    n.validate()?;
    Ok(n)
}

/// Huber constants `(γ_k, δ_k) = (P(|ε| < k), E[ε²1{|ε|<k}] + k²P(|ε| > k))`.
pub(crate) fn huber_constants(k: f64, noise: &NoiseSpec) -> (f64, f64) {
    let gamma = noise.cdf(k) - noise.cdf(-k);
    let inner = integrate(|x| x * x * noise.pdf(x), -k, k, 1e-12);
    (gamma, inner + k * k * (1.0 - gamma))
}

/// Closed-form moments given `Exx = E[xxᵀ]`.
///
/// * squared: `C = Exx`, `C_Δ = Var(ε)·Exx`
/// * Huber: `C = γ_k·Exx`, `C_Δ = δ_k·Exx`
/// * quantile: `C = f(0)·Exx`, `C_Δ = α(1−α)·Exx`, with `f` the density of the
///   noise recentered at its α-quantile
/// * logistic and Poisson, only at `θ₀ = 0`: `C = ψ̈(0)·Exx`, `C_Δ = C/τ`
pub fn moments_analytic(loss: &LossSpec, exx: &SpdMatrix, theta0: &Vector, noise: Option<&NoiseSpec>) -> Result<MomentPair> {
    loss.validate()?;
    check_dim(exx.dim(), theta0.len())?;
    let e = exx.matrix();
    let (c, cd) = match *loss {
        LossSpec::Squared => {
            let noise = require_noise(loss, noise)?;
            let var = noise
                .variance()
                .ok_or_else(|| Error::NoClosedForm("squared loss with infinite noise variance".into()))?;
            (1.0, var)
        }
        LossSpec::Huber { k } => huber_constants(k, require_noise(loss, noise)?),
        LossSpec::Quantile { alpha } => {
            let noise = require_noise(loss, noise)?;
            (noise.pdf(loss.noise_shift(noise)), alpha * (1.0 - alpha))
        }
        LossSpec::Logistic { .. } | LossSpec::Poisson if theta0.iter().any(|&t| t != 0.0) => {
            return Err(Error::NoClosedForm(format!("{} moments at a nonzero θ₀", loss.name())));
        }
        LossSpec::Logistic { tau } => (0.25, 0.25 / tau),
        LossSpec::Poisson => (1.0, 1.0),
    };
    MomentPair::new(exx.scaled(c)?, e * cd)
}

/// Monte Carlo moments with entrywise standard errors.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub pair: MomentPair,
    pub c_se: Matrix,
    pub c_delta_se: Matrix,
    pub draws: usize,
    pub stream: RngStream,
}

const CHUNK: usize = 8192;
const MOMENT_TAG: u64 = 0x6d6f_6d65_6e74;

struct Acc {
    c: Matrix,
    c2: Matrix,
    d: Matrix,
    d2: Matrix,
}

/// Estimates `(C, C_Δ)` from `draws` simulated observations with
/// `x ~ N(0, design_cov)` and responses from the loss's model.
///
/// `C` averages `ψ̈(xᵀθ₀)·xxᵀ` (GLMs), `1{|ε|<k}·xxᵀ` (Huber) or
/// `f(0)·xxᵀ` (quantile, using the noise density); `C_Δ` averages score outer
/// products. Draws are split into fixed chunks with their own streams, so the
/// result does not depend on the thread count.
pub fn moments_mc(
    loss: &LossSpec,
    design_cov: &SpdMatrix,
    noise: Option<&NoiseSpec>,
    theta0: &Vector,
    draws: usize,
    stream: &RngStream,
) -> Result<MomentEstimate> {
    loss.validate()?;
    check_dim(design_cov.dim(), theta0.len())?;
    if draws == 0 {
        return Err(Error::ConfigInvalid("moment draws must be positive".into()));
    }
    let noise = if loss.uses_noise() { Some(require_noise(loss, noise)?) } else { None };
    let quantile_weight = match (loss, noise) {
        (LossSpec::Quantile { .. }, Some(n)) => n.pdf(loss.noise_shift(n)),
        _ => 0.0,
    };
    let p = theta0.len();
    let l = cholesky(design_cov)?;
    let base = stream.child(MOMENT_TAG);
    let chunks = draws.div_ceil(CHUNK);
    let parts: Vec<Result<Acc>> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = base.with_stream(ci as u64).rng();
            let m = CHUNK.min(draws - ci * CHUNK);
            let mut acc = Acc {
                c: Matrix::zeros(p, p),
                c2: Matrix::zeros(p, p),
                d: Matrix::zeros(p, p),
                d2: Matrix::zeros(p, p),
            };
            for _ in 0..m {
                let z = Vector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
                let x = &l * z;
                let eta = x.dot(theta0);
                let y = loss.sample_response(eta, noise, &mut rng)?;
                let h = match *loss {
                    LossSpec::Squared => 1.0,
                    LossSpec::Logistic { .. } => {
                        let s = sigmoid(eta);
                        s * (1.0 - s)
                    }
                    LossSpec::Poisson => eta.exp(),
                    LossSpec::Huber { k } => {
                        if (y - eta).abs() < k {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    LossSpec::Quantile { .. } => quantile_weight,
                };
                let s2 = loss.deriv_eta(y, eta).powi(2);
                let x2 = x.component_mul(&x);
                acc.c.ger(h, &x, &x, 1.0);
                acc.c2.ger(h * h, &x2, &x2, 1.0);
                acc.d.ger(s2, &x, &x, 1.0);
                acc.d2.ger(s2 * s2, &x2, &x2, 1.0);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Acc {
        c: Matrix::zeros(p, p),
        c2: Matrix::zeros(p, p),
        d: Matrix::zeros(p, p),
        d2: Matrix::zeros(p, p),
    };
    for part in parts {
        let part = part?;
        total.c += part.c;
        total.c2 += part.c2;
        total.d += part.d;
        total.d2 += part.d2;
    }
    let nf = draws as f64;
    let mean_se = |sum: &Matrix, sq: &Matrix| {
        let mean = symmetrize(&(sum / nf));
        let se = Matrix::from_fn(p, p, |i, j| ((sq[(i, j)] / nf - mean[(i, j)].powi(2)).max(0.0) / nf).sqrt());
        (mean, se)
    };
    let (c, c_se) = mean_se(&total.c, &total.c2);
    let (cd, c_delta_se) = mean_se(&total.d, &total.d2);
    let c = SpdMatrix::new(c).map_err(|_| Error::SingularEstimate)?;
    Ok(MomentEstimate {
        pair: MomentPair::new(c, cd)?,
        c_se,
        c_delta_se,
        draws,
        stream: *stream,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gauss(sigma: f64) -> NoiseSpec {
        NoiseSpec::Gaussian { sigma }
    }

    fn cs2() -> SpdMatrix {
        SpdMatrix::new(Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap()
    }

    #[test]
    fn squared_unit_noise_gives_exx_twice() {
        let m = moments_analytic(&LossSpec::Squared, &cs2(), &Vector::zeros(2), Some(&gauss(1.0))).unwrap();
        assert_eq!(m.c().matrix(), cs2().matrix());
        assert_eq!(m.c_delta(), cs2().matrix());
    }

    #[test]
    fn quantile_median_with_laplace_noise() {
        let m = moments_analytic(
            &LossSpec::Quantile { alpha: 0.5 },
            &cs2(),
            &Vector::zeros(2),
            Some(&NoiseSpec::Laplace { scale: 1.0 }),
        )
        .unwrap();
        assert_eq!(m.c().matrix(), &(cs2().matrix() / 2.0));
        assert_eq!(m.c_delta(), &(cs2().matrix() / 4.0));
    }

    #[test]
    fn huber_constants_pinned() {
        // Values from 50-digit evaluation of 2Φ(k)−1 and
        // 2Φ(k)−1 − 2kφ(k) + 2k²(1−Φ(k)) at k = 1.345.
        let (g, d) = huber_constants(1.345, &gauss(1.0));
        assert_relative_eq!(g, 0.8213747654313258, max_relative = 1e-12);
        assert_relative_eq!(d, 0.7101645482690485, max_relative = 1e-10);
    }

    #[test]
    fn huber_with_huge_k_is_squared_loss() {
        let m = moments_analytic(&LossSpec::Huber { k: 1e6 }, &cs2(), &Vector::zeros(2), Some(&gauss(1.0))).unwrap();
        assert!((m.c().matrix() - cs2().matrix()).amax() < 1e-6);
        assert!((m.c_delta() - cs2().matrix()).amax() < 1e-6);
    }

    #[test]
    fn huber_constants_nondecreasing_in_k() {
        for noise in [gauss(1.0), NoiseSpec::Laplace { scale: 1.0 }, NoiseSpec::StudentT { df: 1.5 }] {
            let mut prev = (0.0, 0.0);
            for i in 1..60 {
                let (g, d) = huber_constants(0.1 * i as f64, &noise);
                assert!(g >= prev.0 && d >= prev.1, "{noise:?} at k={}", 0.1 * i as f64);
                prev = (g, d);
            }
        }
    }

    #[test]
    fn glm_closed_forms_only_at_zero() {
        let l = LossSpec::Logistic { tau: 2.0 };
        let m = moments_analytic(&l, &cs2(), &Vector::zeros(2), None).unwrap();
        assert_eq!(m.c().matrix(), &(cs2().matrix() / 4.0));
        assert_eq!(m.c_delta(), &(cs2().matrix() / 8.0));
        let at = Vector::from_row_slice(&[1.0, 0.0]);
        assert!(matches!(moments_analytic(&l, &cs2(), &at, None), Err(Error::NoClosedForm(_))));
        assert!(matches!(moments_analytic(&LossSpec::Poisson, &cs2(), &at, None), Err(Error::NoClosedForm(_))));
    }

    #[test]
    fn squared_with_cauchy_like_noise_has_no_closed_form() {
        let r = moments_analytic(&LossSpec::Squared, &cs2(), &Vector::zeros(2), Some(&NoiseSpec::StudentT { df: 2.0 }));
        assert!(matches!(r, Err(Error::NoClosedForm(_))));
    }

    #[test]
    fn moment_pair_rejects_indefinite_score_covariance() {
        let bad = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(MomentPair::new(cs2(), bad).is_err());
        assert!(MomentPair::new(cs2(), Matrix::zeros(2, 2)).is_ok());
    }

    #[test]
    fn moment_pair_json_round_trip() {
        let m = moments_analytic(&LossSpec::Squared, &cs2(), &Vector::zeros(2), Some(&gauss(0.5))).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<MomentPair>(&s).unwrap(), m);
    }

    #[test]
    fn mc_is_deterministic_and_symmetric() {
        let s = RngStream::new(9, 0);
        let l = LossSpec::Logistic { tau: 1.0 };
        let th = Vector::from_row_slice(&[0.5, -1.0]);
        let a = moments_mc(&l, &cs2(), None, &th, 20_000, &s).unwrap();
        let b = moments_mc(&l, &cs2(), None, &th, 20_000, &s).unwrap();
        assert_eq!(a.pair, b.pair);
        let c = a.pair.c().matrix();
        assert_eq!(c, &c.transpose());
    }
}
