//! The limit law of `√n(θ̂ − θ₀)`: `û = argmin ½uᵀCu − uᵀW + f′(θ₀; u)` with
//! `W ~ N(0, C_Δ)`, its pattern distribution, and the Gaussian recovery
//! formula built on the pattern space of `θ₀`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::loss::MomentPair;
use crate::numerics::{
    inverse_symmetric_sqrt, projector, serde_vector, solve_spd, symmetric_sqrt, symmetrize, GaussianSampler, Matrix,
    RngStream, Vector,
};
use crate::penalty::{DirectionalPenalty, Pattern, Penalty, PenaltySpec};
use crate::solver::{minimize_limit, SolveOptions};

/// Draws per random stream in the Monte Carlo loops.
const CHUNK: usize = 1024;
const LIMIT_TAG: u64 = 0x6c69_6d69_74;
const FORMULA_TAG: u64 = 0x666f_726d;
/// Largest tolerated fraction of non-converged limit solves.
pub const MAX_FAILURE_RATE: f64 = 1e-3;
/// Membership tolerance for the recovery formula.
const MEMBERSHIP_TOL: f64 = 1e-9;
/// Irrepresentability holds when the margin exceeds this.
pub const MARGIN_THRESHOLD: f64 = 1e-9;

/// Distribution of `û` for a true parameter, moment pair and penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitLaw {
    #[serde(with = "serde_vector")]
    theta0: Vector,
    moments: MomentPair,
    penalty: PenaltySpec,
}

/// Compiled pieces shared by every draw of a law.
struct Prepared {
    compiled: Penalty,
    dir: DirectionalPenalty,
    noise: GaussianSampler,
}

impl LimitLaw {
    pub fn new(theta0: Vector, moments: MomentPair, penalty: PenaltySpec) -> Result<Self> {
        check_dim(moments.dim(), theta0.len())?;
        penalty.validate(theta0.len())?;
        if theta0.iter().any(|x| !x.is_finite()) {
            return Err(Error::ConfigInvalid("theta0 must be finite".into()));
        }
        Ok(LimitLaw { theta0, moments, penalty })
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    pub fn theta0(&self) -> &Vector {
        &self.theta0
    }

    pub fn moments(&self) -> &MomentPair {
        &self.moments
    }

    pub fn penalty(&self) -> &PenaltySpec {
        &self.penalty
    }

    /// The same law with penalty scale `alpha`.
    pub fn with_scale(&self, alpha: f64) -> Result<Self> {
        LimitLaw::new(self.theta0.clone(), self.moments.clone(), self.penalty.with_scale(alpha))
    }

    /// Pattern of `θ₀` under the law's penalty.
    pub fn true_pattern(&self) -> Result<Pattern> {
        Ok(self.penalty.compile(self.dim())?.pattern(&self.theta0, 0.0))
    }

    fn prepare(&self) -> Result<Prepared> {
        let compiled = self.penalty.compile(self.dim())?;
        let dir = compiled.directional(&self.theta0)?;
        let noise = GaussianSampler::new(Vector::zeros(self.dim()), self.moments.c_delta())?;
        Ok(Prepared { compiled, dir, noise })
    }

    fn draw(&self, prep: &Prepared, rng: &mut crate::numerics::StreamRng, opts: &SolveOptions) -> Result<Vector> {
        let w = prep.noise.sample(rng);
        Ok(minimize_limit(self.moments.c(), &w, &prep.dir, opts)?.minimizer)
    }
}

/// One draw of `û` using a fresh generator for `stream`.
pub fn sample_limit(law: &LimitLaw, stream: &RngStream, opts: &SolveOptions) -> Result<Vector> {
    let prep = law.prepare()?;
    law.draw(&prep, &mut stream.rng(), opts)
}

/// `draws` independent draws of `û`, one entry per draw in order. Draw `i`
/// depends only on `(stream, i)`.
pub fn sample_limit_batch(law: &LimitLaw, draws: usize, stream: &RngStream, opts: &SolveOptions) -> Result<Vec<Result<Vector>>> {
    let prep = law.prepare()?;
    let base = stream.child(LIMIT_TAG);
    let chunks: Vec<Vec<Result<Vector>>> = (0..draws.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ci| {
            let mut rng = base.with_stream(ci as u64).rng();
            let m = CHUNK.min(draws - ci * CHUNK);
            (0..m).map(|_| law.draw(&prep, &mut rng, opts)).collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Empirical distribution over patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternDistribution {
    counts: BTreeMap<Pattern, usize>,
    /// Draws that entered the counts.
    pub draws: usize,
    /// Draws dropped because the solver did not converge.
    pub failed: usize,
    pub stream: RngStream,
}

impl PatternDistribution {
    /// Builds a distribution from observed patterns.
    pub fn from_patterns(patterns: impl IntoIterator<Item = Pattern>, failed: usize, stream: RngStream) -> Self {
        let mut counts = BTreeMap::new();
        let mut draws = 0;
        for p in patterns {
            *counts.entry(p).or_insert(0) += 1;
            draws += 1;
        }
        PatternDistribution {
            counts,
            draws,
            failed,
            stream,
        }
    }

    pub fn count(&self, pattern: &Pattern) -> usize {
        self.counts.get(pattern).copied().unwrap_or(0)
    }

    pub fn probability(&self, pattern: &Pattern) -> f64 {
        if self.draws == 0 {
            0.0
        } else {
            self.count(pattern) as f64 / self.draws as f64
        }
    }

    /// Binomial standard error of [`PatternDistribution::probability`].
    pub fn std_error(&self, pattern: &Pattern) -> f64 {
        binomial_se(self.probability(pattern), self.draws)
    }

    /// Patterns with their counts, in pattern order.
    pub fn iter(&self) -> impl Iterator<Item = (&Pattern, usize)> {
        self.counts.iter().map(|(p, &c)| (p, c))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Most frequent pattern; ties go to the smaller pattern.
    pub fn mode(&self) -> Option<&Pattern> {
        self.counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(p, _)| p)
    }

    /// Total variation distance `½Σ|p − q|` over the union of supports.
    pub fn total_variation(&self, other: &PatternDistribution) -> f64 {
        let mut keys: Vec<&Pattern> = self.counts.keys().chain(other.counts.keys()).collect();
        keys.sort();
        keys.dedup();
        0.5 * keys
            .into_iter()
            .map(|k| (self.probability(k) - other.probability(k)).abs())
            .sum::<f64>()
    }

    /// Rough standard error of the plug-in total variation distance,
    /// `½·sqrt(Σ (se_p² + se_q²))` over the union of supports.
    pub fn total_variation_se(&self, other: &PatternDistribution) -> f64 {
        let mut keys: Vec<&Pattern> = self.counts.keys().chain(other.counts.keys()).collect();
        keys.sort();
        keys.dedup();
        0.5 * keys
            .into_iter()
            .map(|k| self.std_error(k).powi(2) + other.std_error(k).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

/// Fails when more than [`MAX_FAILURE_RATE`] of `total` draws failed.
pub(crate) fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_RATE * total as f64 {
        Err(Error::TooManyFailures { failed, total })
    } else {
        Ok(())
    }
}

/// Distribution of `lim_{ε↓0} pattern(θ₀ + εû)` over `draws` draws of `û`.
pub fn limit_pattern_distribution(
    law: &LimitLaw,
    draws: usize,
    stream: &RngStream,
    opts: &SolveOptions,
) -> Result<PatternDistribution> {
    if draws == 0 {
        return Err(Error::ConfigInvalid("draws must be positive".into()));
    }
    let prep = law.prepare()?;
    let samples = sample_limit_batch(law, draws, stream, opts)?;
    let mut patterns = Vec::with_capacity(draws);
    let mut failed = 0;
    for s in samples {
        match s {
            Ok(u) => patterns.push(prep.compiled.limit_pattern(&law.theta0, &u)?),
            Err(Error::NotConverged(_)) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    check_failures(failed, draws)?;
    Ok(PatternDistribution::from_patterns(patterns, failed, *stream))
}

/// Covariance used for the Gaussian in the recovery formula.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaForm {
    /// `C^{1/2}(I−P)C^{−1/2}·C_Δ·C^{−1/2}(I−P)C^{1/2}`, the covariance of
    /// `W − CUβ̂` when `û = Uβ̂` solves the restricted stationarity equation.
    #[default]
    Derived,
    /// `C^{1/2}(I−P)C^{1/2}·C_Δ·C^{1/2}(I−P)C^{1/2}`; agrees with
    /// [`SigmaForm::Derived`] when `C = I`.
    Printed,
}

/// Mean and covariance of the Gaussian whose mass on `∂f(θ₀)` is the
/// recovery probability.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryGaussian {
    pub mean: Vector,
    pub cov: Matrix,
    /// Orthogonal projector onto `C^{1/2}·span(basis)`.
    pub projector: Matrix,
}

/// [`RecoveryGaussian`] from an explicit basis of the pattern space of `θ₀`.
pub fn recovery_gaussian_with_basis(law: &LimitLaw, basis: &[Vector], form: SigmaForm) -> Result<RecoveryGaussian> {
    let p = law.dim();
    let c = law.moments.c();
    let half = symmetric_sqrt(c)?;
    let inv_half = inverse_symmetric_sqrt(c)?;
    let h = half.matrix();
    let mapped: Vec<Vector> = basis.iter().map(|b| h * b).collect();
    let proj = projector(&mapped, p)?;
    let v0 = law.penalty.compile(p)?.subdiff_ri_point(&law.theta0)?;
    let comp = Matrix::identity(p, p) - &proj;
    let mean = h * &proj * inv_half.matrix() * v0;
    let left = match form {
        SigmaForm::Derived => h * &comp * inv_half.matrix(),
        SigmaForm::Printed => h * &comp * h,
    };
    let cov = symmetrize(&(&left * law.moments.c_delta() * left.transpose()));
    Ok(RecoveryGaussian {
        mean,
        cov,
        projector: proj,
    })
}

/// [`RecoveryGaussian`] using the canonical pattern basis.
pub fn recovery_gaussian(law: &LimitLaw, form: SigmaForm) -> Result<RecoveryGaussian> {
    let pen = law.penalty.compile(law.dim())?;
    let basis = pen.pattern_basis(&pen.pattern(&law.theta0, 0.0))?;
    recovery_gaussian_with_basis(law, &basis, form)
}

/// A Monte Carlo probability estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub draws: usize,
}

impl ProbabilityEstimate {
    fn from_hits(hits: usize, draws: usize) -> Self {
        let p = hits as f64 / draws as f64;
        ProbabilityEstimate {
            probability: p,
            std_error: binomial_se(p, draws),
            draws,
        }
    }
}

/// Probability of recovering the pattern of `θ₀`, estimated as the mass the
/// recovery Gaussian puts on `∂f(θ₀)`.
pub fn recovery_probability_formula(law: &LimitLaw, draws: usize, stream: &RngStream) -> Result<ProbabilityEstimate> {
    recovery_probability_formula_with(law, draws, stream, SigmaForm::Derived)
}

/// [`recovery_probability_formula`] with a choice of covariance.
pub fn recovery_probability_formula_with(
    law: &LimitLaw,
    draws: usize,
    stream: &RngStream,
    form: SigmaForm,
) -> Result<ProbabilityEstimate> {
    if draws == 0 {
        return Err(Error::ConfigInvalid("draws must be positive".into()));
    }
    let g = recovery_gaussian(law, form)?;
    let sampler = GaussianSampler::new_psd(g.mean, &g.cov)?;
    let pen = law.penalty.compile(law.dim())?;
    let tol = MEMBERSHIP_TOL * law.theta0.amax().max(1.0);
    let base = stream.child(FORMULA_TAG);
    let hits: Vec<usize> = (0..draws.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ci| {
            let mut rng = base.with_stream(ci as u64).rng();
            let m = CHUNK.min(draws - ci * CHUNK);
            (0..m)
                .map(|_| pen.subdiff_contains(&law.theta0, &sampler.sample(&mut rng), tol))
                .try_fold(0, |acc, hit| hit.map(|h| acc + h as usize))
        })
        .collect::<Result<_>>()?;
    Ok(ProbabilityEstimate::from_hits(hits.into_iter().sum(), draws))
}

/// Outcome of the irrepresentability check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Irrepresentability {
    pub holds: bool,
    /// `1 − g`, where `g` is the gauge of `Cz − v₀` relative to
    /// `∂f(θ₀) − v₀` at the unique pattern-space `z` matching `v₀` on the
    /// pattern space. Positive exactly when `Cz` is relatively interior.
    pub margin: f64,
}

/// Whether `C·span(U) ∩ ri ∂f(θ₀)` is nonempty, with the best margin.
///
/// Every element of `∂f(θ₀)` has the same projection onto the pattern space,
/// which pins down `z = Uβ` through `UᵀCUβ = Uᵀv₀`; the largest interior
/// margin is then the gauge gap of `Cz`.
pub fn irrepresentability_check(law: &LimitLaw) -> Result<Irrepresentability> {
    let p = law.dim();
    let pen = law.penalty.compile(p)?;
    let dir = pen.directional(&law.theta0)?;
    let basis = pen.pattern_basis(&pen.pattern(&law.theta0, 0.0))?;
    let c = law.moments.c().matrix();
    let v0 = dir.offset();
    let cz = if basis.is_empty() {
        Vector::zeros(p)
    } else {
        let u = Matrix::from_columns(&basis);
        let cu = c * &u;
        let gram = crate::numerics::SpdMatrix::new(symmetrize(&(u.transpose() * &cu)))?;
        let beta = solve_spd(&gram, &u.tr_mul(v0))?;
        cu * beta
    };
    let tol = 1e-12 * v0.amax().max(1.0);
    let gauge = dir.dual_gauge(&(cz - v0), tol);
    let margin = 1.0 - gauge;
    Ok(Irrepresentability {
        holds: margin > MARGIN_THRESHOLD,
        margin,
    })
}

/// One point of an α sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub probability: f64,
    pub std_error: f64,
}

/// Recovery probability of the true pattern at each penalty scale.
///
/// Every α reuses the same noise draws, so neighbouring points differ only
/// through the penalty.
pub fn alpha_sweep_recovery(
    law: &LimitLaw,
    alphas: &[f64],
    draws: usize,
    stream: &RngStream,
    opts: &SolveOptions,
) -> Result<Vec<SweepPoint>> {
    if alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
        return Err(Error::ConfigInvalid("alpha values must be finite and nonnegative".into()));
    }
    let target = law.true_pattern()?;
    alphas
        .iter()
        .map(|&alpha| {
            let dist = limit_pattern_distribution(&law.with_scale(alpha)?, draws, stream, opts)?;
            Ok(SweepPoint {
                alpha,
                probability: dist.probability(&target),
                std_error: dist.std_error(&target),
            })
        })
        .collect()
}

/// Least-squares slope of `log(1 − p̂)` against `α²` over the points with
/// `0 < p̂ < 1`; `None` with fewer than two such points.
pub fn sweep_decay_rate(points: &[SweepPoint]) -> Option<f64> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|s| s.probability > 0.0 && s.probability < 1.0)
        .map(|s| (s.alpha * s.alpha, (1.0 - s.probability).ln()))
        .collect();
    if xy.len() < 2 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}
