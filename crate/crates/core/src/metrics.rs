//! Estimation error and pattern recovery summaries.

use serde::Serialize;

use crate::asymptotics::{binomial_se, PatternDistribution};
use crate::error::{check_dim, Error, Result};
use crate::numerics::{projector, Matrix, Vector};
use crate::penalty::{Pattern, Penalty, PenaltySpec};

/// Pattern tolerance applied to finite-sample estimates.
pub const PATTERN_TOL: f64 = 1e-8;

/// One replication, or one draw from the limit law.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    /// `None` for draws from the limit law.
    pub theta_hat: Option<Vector>,
    pub pattern: Pattern,
    /// `√n(θ̂ − θ₀)`, or the draw `û` itself.
    pub scaled_error: Vector,
    pub converged: bool,
}

impl ReplicationResult {
    /// Result of a finite-sample fit; the pattern uses [`PATTERN_TOL`].
    pub fn from_fit(theta_hat: Vector, theta0: &Vector, n: usize, pen: &Penalty, converged: bool) -> Result<Self> {
        check_dim(theta0.len(), theta_hat.len())?;
        let scaled_error = (&theta_hat - theta0) * (n as f64).sqrt();
        Ok(ReplicationResult {
            pattern: pen.pattern(&theta_hat, PATTERN_TOL),
            theta_hat: Some(theta_hat),
            scaled_error,
            converged,
        })
    }

    /// A draw `û` from the limit law with its limiting pattern.
    pub fn from_limit(u: Vector, theta0: &Vector, pen: &Penalty) -> Result<Self> {
        Ok(ReplicationResult {
            pattern: pen.limit_pattern(theta0, &u)?,
            theta_hat: None,
            scaled_error: u,
            converged: true,
        })
    }

    /// Placeholder for a failed solve that produced no usable iterate.
    pub fn failed(p: usize) -> Self {
        ReplicationResult {
            theta_hat: None,
            pattern: Pattern::Signs { signs: vec![0; p] },
            scaled_error: Vector::zeros(p),
            converged: false,
        }
    }
}

/// A Monte Carlo summary with its standard error and the replications used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub value: f64,
    pub std_error: f64,
    pub used: usize,
    pub excluded: usize,
}

fn converged(results: &[ReplicationResult]) -> Result<(Vec<&ReplicationResult>, usize)> {
    let ok: Vec<&ReplicationResult> = results.iter().filter(|r| r.converged).collect();
    if ok.is_empty() {
        return Err(Error::NoConvergedReplications);
    }
    let excluded = results.len() - ok.len();
    Ok((ok, excluded))
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// `sqrt(mean ‖û_n‖²)` over converged replications. The standard error is
/// the delta-method transform of that of the mean square.
pub fn rmse(results: &[ReplicationResult]) -> Result<Summary> {
    let (ok, excluded) = converged(results)?;
    let sq: Vec<f64> = ok.iter().map(|r| r.scaled_error.norm_squared()).collect();
    let (ms, se) = mean_se(&sq);
    let value = ms.sqrt();
    Ok(Summary {
        value,
        std_error: if value > 0.0 { se / (2.0 * value) } else { 0.0 },
        used: ok.len(),
        excluded,
    })
}

/// Projector onto the pattern space of `θ₀`, for repeated residual errors.
#[derive(Debug, Clone)]
pub struct PatternProjector {
    proj: Matrix,
}

impl PatternProjector {
    pub fn new(pen: &PenaltySpec, theta0: &Vector) -> Result<Self> {
        let p = theta0.len();
        let compiled = pen.compile(p)?;
        let basis = compiled.pattern_basis(&compiled.pattern(theta0, 0.0))?;
        Ok(PatternProjector {
            proj: projector(&basis, p)?,
        })
    }

    /// From an explicit basis of the pattern space.
    pub fn from_basis(basis: &[Vector], p: usize) -> Result<Self> {
        Ok(PatternProjector {
            proj: projector(basis, p)?,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.proj
    }

    /// `(RE, RRE)`: `RE = ‖(I − P)û‖²`, `RRE = RE/‖û‖²` (zero when `û = 0`).
    pub fn residual_errors(&self, u: &Vector) -> Result<(f64, f64)> {
        check_dim(self.proj.nrows(), u.len())?;
        let r = u - &self.proj * u;
        let total = u.norm_squared();
        let re = r.norm_squared();
        let rre = if total == 0.0 { 0.0 } else { (re / total).clamp(0.0, 1.0) };
        Ok((re, rre))
    }
}

/// `(RE, RRE)` of `û` relative to the pattern space of `θ₀`.
pub fn residual_errors(u: &Vector, pen: &PenaltySpec, theta0: &Vector) -> Result<(f64, f64)> {
    check_dim(theta0.len(), u.len())?;
    PatternProjector::new(pen, theta0)?.residual_errors(u)
}

/// Mean RRE over converged replications; replications whose pattern equals
/// `target` contribute exactly zero.
pub fn mean_rre(results: &[ReplicationResult], proj: &PatternProjector, target: &Pattern) -> Result<Summary> {
    let (ok, excluded) = converged(results)?;
    let values = ok
        .iter()
        .map(|r| {
            if &r.pattern == target {
                Ok(0.0)
            } else {
                proj.residual_errors(&r.scaled_error).map(|e| e.1)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let (value, std_error) = mean_se(&values);
    Ok(Summary {
        value,
        std_error,
        used: ok.len(),
        excluded,
    })
}

/// Fraction of converged replications whose pattern equals `target`.
pub fn recovery_rate(results: &[ReplicationResult], target: &Pattern) -> Result<Summary> {
    let (ok, excluded) = converged(results)?;
    let hits = ok.iter().filter(|r| &r.pattern == target).count();
    let value = hits as f64 / ok.len() as f64;
    Ok(Summary {
        value,
        std_error: binomial_se(value, ok.len()),
        used: ok.len(),
        excluded,
    })
}

/// `½Σ|p_a − p_b|` over the union of observed patterns.
pub fn tv_distance(a: &PatternDistribution, b: &PatternDistribution) -> f64 {
    a.total_variation(b)
}
