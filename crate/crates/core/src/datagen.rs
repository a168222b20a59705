//! Synthetic designs and responses.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::loss::{Dataset, LossSpec, NoiseSpec};
use crate::numerics::{cholesky, normal_quantile, serde_vector, Matrix, RngStream, SpdMatrix, Vector};
use crate::penalty::PenaltySpec;

/// Population covariance of the design rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    Identity,
    /// `I_blocks ⊗ Σ⁰` with `Σ⁰` the `block_size × block_size` matrix with
    /// unit diagonal and `rho` elsewhere.
    CompoundSymmetryBlocks { block_size: usize, rho: f64, blocks: usize },
    Explicit { matrix: SpdMatrix },
}

/// Gaussian design with `p` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub p: usize,
    pub covariance: CovarianceSpec,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::ConfigInvalid("design dimension p must be positive".into()));
        }
        match &self.covariance {
            CovarianceSpec::Identity => Ok(()),
            CovarianceSpec::CompoundSymmetryBlocks { block_size, rho, blocks } => {
                if block_size * blocks != self.p || *block_size == 0 {
                    return Err(Error::ConfigInvalid(format!(
                        "{blocks} blocks of size {block_size} do not cover p = {}",
                        self.p
                    )));
                }
                let lower = if *block_size > 1 { -1.0 / (*block_size as f64 - 1.0) } else { -1.0 };
                if !(rho.is_finite() && *rho < 1.0 && *rho > lower) {
                    return Err(Error::NotPositiveDefinite);
                }
                Ok(())
            }
            CovarianceSpec::Explicit { matrix } => check_dim(self.p, matrix.dim()),
        }
    }
}

/// Assembles the design covariance.
pub fn build_covariance(spec: &DesignSpec) -> Result<SpdMatrix> {
    spec.validate()?;
    let p = spec.p;
    let m = match &spec.covariance {
        CovarianceSpec::Identity => return Ok(SpdMatrix::identity(p)),
        CovarianceSpec::Explicit { matrix } => return Ok(matrix.clone()),
        CovarianceSpec::CompoundSymmetryBlocks { block_size, rho, .. } => Matrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0
            } else if i / block_size == j / block_size {
                *rho
            } else {
                0.0
            }
        }),
    };
    let s = SpdMatrix::new(m)?;
    cholesky(&s)?;
    Ok(s)
}

fn default_n() -> usize {
    100
}

/// Data-generating model. `n` is the sample size for single fits;
/// experiments supply their own grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub design: DesignSpec,
    #[serde(with = "serde_vector")]
    pub theta0: Vector,
    pub loss: LossSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default = "default_n")]
    pub n: usize,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        check_dim(self.design.p, self.theta0.len())?;
        if self.theta0.iter().any(|x| !x.is_finite()) {
            return Err(Error::ConfigInvalid("theta0 must be finite".into()));
        }
        self.loss.validate()?;
        if self.n == 0 {
            return Err(Error::ConfigInvalid("sample size n must be positive".into()));
        }
        match (self.loss.uses_noise(), &self.noise) {
            (true, None) => Err(Error::ConfigInvalid(format!("{} loss needs a noise model", self.loss.name()))),
            (false, Some(_)) => Err(Error::ConfigInvalid(format!(
                "{} loss draws its own responses; remove the noise model",
                self.loss.name()
            ))),
            (true, Some(noise)) => {
                noise.validate()?;
                if let (LossSpec::Squared, NoiseSpec::StudentT { df }) = (&self.loss, noise) {
                    if *df <= 2.0 {
                        return Err(Error::ConfigInvalid(format!(
                            "squared loss needs finite noise variance; Student t df = {df} ≤ 2"
                        )));
                    }
                }
                Ok(())
            }
            (false, None) => Ok(()),
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        ScenarioSpec { n, ..self.clone() }
    }

    pub fn p(&self) -> usize {
        self.design.p
    }
}

/// Draws `n` observations: rows `x ~ N(0, Σ)` and responses from the loss's
/// model at `η = xᵀθ₀`.
pub fn gen_dataset(spec: &ScenarioSpec, stream: &RngStream) -> Result<Dataset> {
    spec.validate()?;
    let cov = build_covariance(&spec.design)?;
    let l = cholesky(&cov)?;
    let (n, p) = (spec.n, spec.p());
    let mut rng = stream.rng();
    let mut x = Matrix::zeros(n, p);
    let mut y = Vector::zeros(n);
    for i in 0..n {
        let z = Vector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        let row = &l * z;
        y[i] = spec.loss.sample_response(row.dot(&spec.theta0), spec.noise.as_ref(), &mut rng)?;
        x.set_row(i, &row.transpose());
    }
    Dataset::new(x, y)
}

/// `λ_j = Φ⁻¹(1 − q·j/(2p))` for `j = 1..p`.
pub fn bh_sequence(p: usize, q: f64) -> Vec<f64> {
    (1..=p).map(|j| normal_quantile(1.0 - q * j as f64 / (2.0 * p as f64))).collect()
}

/// Reference scenario: logistic regression with `p = 30`, rows drawn from
/// `N(0, I₆ ⊗ Σ⁰)` where `Σ⁰` is 5×5 compound symmetry with correlation
/// 0.8, and `θ₀ = (−2 ×5, 1 ×5, 0 ×20)`.
pub fn paper_scenario() -> ScenarioSpec {
    let theta0 = Vector::from_fn(30, |i, _| match i {
        0..=4 => -2.0,
        5..=9 => 1.0,
        _ => 0.0,
    });
    ScenarioSpec {
        design: DesignSpec {
            p: 30,
            covariance: CovarianceSpec::CompoundSymmetryBlocks {
                block_size: 5,
                rho: 0.8,
                blocks: 6,
            },
        },
        theta0,
        loss: LossSpec::Logistic { tau: 1.0 },
        noise: None,
        n: 500,
    }
}

/// SLOPE with the `q = 0.2` sequence of [`bh_sequence`] at unit scale.
pub fn paper_penalty() -> PenaltySpec {
    PenaltySpec::slope(bh_sequence(30, 0.2))
}
