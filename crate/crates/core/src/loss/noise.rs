use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::numerics::{normal_cdf, normal_pdf, normal_quantile};

/// Additive noise distributions, all centered and symmetric about zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Gaussian { sigma: f64 },
    /// Density `exp(−|x|/scale) / (2·scale)`.
    Laplace { scale: f64 },
    /// Standard Student t with `df` degrees of freedom.
    StudentT { df: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let (name, v, zero_ok) = match *self {
            NoiseSpec::Gaussian { sigma } => ("sigma", sigma, true),
            NoiseSpec::Laplace { scale } => ("scale", scale, false),
            NoiseSpec::StudentT { df } => ("df", df, false),
        };
        if v.is_finite() && (v > 0.0 || (zero_ok && v == 0.0)) {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("noise {name} must be positive, got {v}")))
        }
    }

    fn student(df: f64) -> StudentsT {
        StudentsT::new(0.0, 1.0, df).expect("validated degrees of freedom")
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            NoiseSpec::Gaussian { sigma } => normal_pdf(x / sigma) / sigma,
            NoiseSpec::Laplace { scale } => (-x.abs() / scale).exp() / (2.0 * scale),
            NoiseSpec::StudentT { df } => Self::student(df).pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            NoiseSpec::Gaussian { sigma } => {
                if sigma == 0.0 {
                    if x >= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    normal_cdf(x / sigma)
                }
            }
            NoiseSpec::Laplace { scale } => {
                if x < 0.0 {
                    0.5 * (x / scale).exp()
                } else {
                    1.0 - 0.5 * (-x / scale).exp()
                }
            }
            NoiseSpec::StudentT { df } => Self::student(df).cdf(x),
        }
    }

    /// Inverse CDF for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            NoiseSpec::Gaussian { sigma } => sigma * normal_quantile(p),
            NoiseSpec::Laplace { scale } => {
                if p < 0.5 {
                    scale * (2.0 * p).ln()
                } else {
                    -scale * (2.0 * (1.0 - p)).ln()
                }
            }
            NoiseSpec::StudentT { .. } => {
                if p == 0.5 {
                    return 0.0;
                }
                let (mut lo, mut hi) = (-1.0, 1.0);
                while self.cdf(lo) > p {
                    lo *= 2.0;
                }
                while self.cdf(hi) < p {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// `None` when the variance is infinite.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            NoiseSpec::Gaussian { sigma } => Some(sigma * sigma),
            NoiseSpec::Laplace { scale } => Some(2.0 * scale * scale),
            NoiseSpec::StudentT { df } => (df > 2.0).then(|| df / (df - 2.0)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            NoiseSpec::Laplace { scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            NoiseSpec::StudentT { df } => rand_distr::StudentT::new(df).expect("validated degrees of freedom").sample(rng),
        }
    }
}
