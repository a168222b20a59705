//! Per-observation losses `ℓ(y, x, θ)`, which depend on `θ` only through
//! `η = xᵀθ`, and their asymptotic moment pairs `(C, C_Δ)`.

mod moments;
mod noise;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{Matrix, Vector};

pub use moments::{moments_analytic, moments_mc, MomentEstimate, MomentPair};
pub use noise::NoiseSpec;

fn one() -> f64 {
    1.0
}

/// Loss families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    /// `η²/2 − yη`.
    Squared,
    /// `log(1 + e^η) − yη`; `tau` is the dispersion in `C_Δ = C/τ`.
    Logistic {
        #[serde(default = "one")]
        tau: f64,
    },
    /// `e^η − yη`.
    Poisson,
    /// Huber function of the residual `y − η`.
    Huber { k: f64 },
    /// Check loss `|r|_α = r(α − 1{r < 0})` of the residual `r = y − η`.
    Quantile { alpha: f64 },
}

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

impl LossSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::Squared => "squared",
            LossSpec::Logistic { .. } => "logistic",
            LossSpec::Poisson => "poisson",
            LossSpec::Huber { .. } => "huber",
            LossSpec::Quantile { .. } => "quantile",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LossSpec::Squared | LossSpec::Poisson => true,
            LossSpec::Logistic { tau } => tau.is_finite() && tau > 0.0,
            LossSpec::Huber { k } => k.is_finite() && k > 0.0,
            LossSpec::Quantile { alpha } => alpha > 0.0 && alpha < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("invalid loss parameters: {self:?}")))
        }
    }

    /// True when the loss has a Lipschitz gradient in `η`.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, LossSpec::Quantile { .. })
    }

    /// True for losses whose responses are generated as `η + ε`.
    pub fn uses_noise(&self) -> bool {
        matches!(self, LossSpec::Squared | LossSpec::Huber { .. } | LossSpec::Quantile { .. })
    }

    pub fn check_response(&self, y: f64) -> Result<()> {
        let ok = y.is_finite()
            && match self {
                LossSpec::Logistic { .. } => y == 0.0 || y == 1.0,
                LossSpec::Poisson => y >= 0.0 && y.fract() == 0.0,
                _ => true,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidResponse {
                loss: self.name(),
                value: y,
            })
        }
    }

    /// `ℓ` as a function of `η = xᵀθ`.
    pub fn value_eta(&self, y: f64, eta: f64) -> f64 {
        match *self {
            LossSpec::Squared => 0.5 * eta * eta - y * eta,
            LossSpec::Logistic { .. } => softplus(eta) - y * eta,
            LossSpec::Poisson => eta.exp() - y * eta,
            LossSpec::Huber { k } => {
                let r = y - eta;
                if r.abs() <= k {
                    0.5 * r * r
                } else {
                    k * (r.abs() - 0.5 * k)
                }
            }
            LossSpec::Quantile { alpha } => {
                let r = y - eta;
                if r < 0.0 {
                    (alpha - 1.0) * r
                } else {
                    alpha * r
                }
            }
        }
    }

    /// A subgradient of `η ↦ ℓ`. At the quantile kink `r = 0` the branch
    /// `−(1 − α)` of the residual derivative is used.
    pub fn deriv_eta(&self, y: f64, eta: f64) -> f64 {
        match *self {
            LossSpec::Squared => eta - y,
            LossSpec::Logistic { .. } => sigmoid(eta) - y,
            LossSpec::Poisson => eta.exp() - y,
            LossSpec::Huber { k } => -(y - eta).clamp(-k, k),
            LossSpec::Quantile { alpha } => {
                if y - eta > 0.0 {
                    -alpha
                } else {
                    1.0 - alpha
                }
            }
        }
    }

    /// Value and derivative in `η`, with the quantile check loss replaced by
    /// its Moreau envelope of parameter `mu` when `mu > 0`. Other losses are
    /// returned exactly.
    pub fn value_deriv_eta(&self, y: f64, eta: f64, mu: f64) -> (f64, f64) {
        match *self {
            LossSpec::Quantile { alpha } if mu > 0.0 => {
                let r = y - eta;
                let (hi, lo) = (alpha * mu, -(1.0 - alpha) * mu);
                let (v, dr) = if r > hi {
                    (alpha * r - 0.5 * alpha * alpha * mu, alpha)
                } else if r < lo {
                    ((alpha - 1.0) * r - 0.5 * (1.0 - alpha) * (1.0 - alpha) * mu, alpha - 1.0)
                } else {
                    (0.5 * r * r / mu, r / mu)
                };
                (v, -dr)
            }
            _ => (self.value_eta(y, eta), self.deriv_eta(y, eta)),
        }
    }

    /// Shift that makes the noise's relevant location zero: the α-quantile
    /// for quantile loss, zero otherwise.
    pub fn noise_shift(&self, noise: &NoiseSpec) -> f64 {
        match *self {
            LossSpec::Quantile { alpha } => noise.quantile(alpha),
            _ => 0.0,
        }
    }

    /// Draws a response given the linear predictor `η`.
    pub fn sample_response<R: Rng + ?Sized>(&self, eta: f64, noise: Option<&NoiseSpec>, rng: &mut R) -> Result<f64> {
        match self {
            LossSpec::Logistic { .. } => Ok(if rng.random::<f64>() < sigmoid(eta) { 1.0 } else { 0.0 }),
            LossSpec::Poisson => {
                let mean = eta.exp();
                if mean == 0.0 {
                    return Ok(0.0);
                }
                let d = Poisson::new(mean).map_err(|_| Error::ConfigInvalid(format!("poisson mean {mean} out of range")))?;
                Ok(d.sample(rng))
            }
            _ => {
                let noise = noise.ok_or_else(|| Error::ConfigInvalid(format!("{} loss needs a noise model", self.name())))?;
                Ok(eta + noise.sample(rng) - self.noise_shift(noise))
            }
        }
    }
}

/// `ℓ(y, x, θ)`.
pub fn loss_value(loss: &LossSpec, y: f64, x: &Vector, theta: &Vector) -> Result<f64> {
    check_dim(x.len(), theta.len())?;
    loss.check_response(y)?;
    Ok(loss.value_eta(y, x.dot(theta)))
}

/// A subgradient of `θ ↦ ℓ(y, x, θ)`.
pub fn loss_grad(loss: &LossSpec, y: f64, x: &Vector, theta: &Vector) -> Result<Vector> {
    check_dim(x.len(), theta.len())?;
    loss.check_response(y)?;
    Ok(x * loss.deriv_eta(y, x.dot(theta)))
}

/// Observations `(yᵢ, xᵢ)` with the `xᵢ` as rows of `design`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    design: Matrix,
    response: Vector,
}

impl Dataset {
    pub fn new(design: Matrix, response: Vector) -> Result<Self> {
        check_dim(design.nrows(), response.len())?;
        if design.nrows() == 0 {
            return Err(Error::ConfigInvalid("dataset has no observations".into()));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::ConfigInvalid("dataset contains non-finite values".into()));
        }
        Ok(Dataset { design, response })
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &Matrix {
        &self.design
    }

    pub fn response(&self) -> &Vector {
        &self.response
    }

    /// Checks every response against the loss's support.
    pub fn validate_for(&self, loss: &LossSpec) -> Result<()> {
        self.response.iter().try_for_each(|&y| loss.check_response(y))
    }
}
