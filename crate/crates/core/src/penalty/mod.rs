//! Polyhedral-type penalties: values, proximal maps, patterns, pattern
//! spaces, directional derivatives and subdifferentials.
//!
//! A [`PenaltySpec`] is the declarative form. [`PenaltySpec::compile`] fixes
//! the dimension and produces a [`Penalty`], which splits the penalty into a
//! sublinear part (a [`DirectionalPenalty`]) and an optional ridge term.

mod isotonic;
mod pattern;
mod sublinear;
mod tv;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::Vector;

pub use pattern::Pattern;
pub use sublinear::{Block, DirectionalPenalty, Subdifferential};

use pattern::{dense_ranks, sign_of};

/// The penalty families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltyKind {
    None,
    Lasso { lambda: f64 },
    WeightedLasso { weights: Vec<f64> },
    /// Sorted-ℓ1 with nonincreasing weights, one per coordinate.
    Slope { lambda: Vec<f64> },
    FusedLasso { lambda1: f64, lambda2: f64 },
    /// `lambda1·‖θ‖₁ + lambda2·‖θ‖²`.
    ElasticNet { lambda1: f64, lambda2: f64 },
}

fn one() -> f64 {
    1.0
}

/// A penalty family together with its global scale `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySpec {
    pub variant: PenaltyKind,
    #[serde(default = "one")]
    pub scale: f64,
}

/// Which [`Pattern`] encoding a penalty uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternFamily {
    Signs,
    Clusters,
    Fused,
}

fn check_param(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidPenalty(format!("{name} must be finite and nonnegative, got {x}")))
    }
}

impl PenaltySpec {
    pub fn new(variant: PenaltyKind, scale: f64) -> Self {
        Self { variant, scale }
    }

    pub fn none() -> Self {
        Self::new(PenaltyKind::None, 1.0)
    }

    pub fn lasso(lambda: f64) -> Self {
        Self::new(PenaltyKind::Lasso { lambda }, 1.0)
    }

    pub fn slope(lambda: Vec<f64>) -> Self {
        Self::new(PenaltyKind::Slope { lambda }, 1.0)
    }

    pub fn fused(lambda1: f64, lambda2: f64) -> Self {
        Self::new(PenaltyKind::FusedLasso { lambda1, lambda2 }, 1.0)
    }

    /// Same family with a different scale.
    pub fn with_scale(&self, scale: f64) -> Self {
        Self::new(self.variant.clone(), scale)
    }

    pub fn family(&self) -> PatternFamily {
        match self.variant {
            PenaltyKind::Slope { .. } => PatternFamily::Clusters,
            PenaltyKind::FusedLasso { .. } => PatternFamily::Fused,
            _ => PatternFamily::Signs,
        }
    }

    /// Checks parameter ranges; `dim` is the coefficient dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        check_param("scale", self.scale)?;
        match &self.variant {
            PenaltyKind::None => {}
            PenaltyKind::Lasso { lambda } => {
                check_param("lambda", *lambda)?;
                if *lambda == 0.0 {
                    return Err(Error::InvalidPenalty("lasso lambda must be positive".into()));
                }
            }
            PenaltyKind::WeightedLasso { weights } => {
                if weights.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: weights.len(),
                    });
                }
                for &w in weights {
                    check_param("weight", w)?;
                }
            }
            PenaltyKind::Slope { lambda } => {
                if lambda.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: lambda.len(),
                    });
                }
                for &l in lambda {
                    check_param("lambda", l)?;
                }
                if lambda.windows(2).any(|w| w[0] < w[1]) {
                    return Err(Error::InvalidPenalty("slope lambda must be nonincreasing".into()));
                }
            }
            PenaltyKind::FusedLasso { lambda1, lambda2 } | PenaltyKind::ElasticNet { lambda1, lambda2 } => {
                check_param("lambda1", *lambda1)?;
                check_param("lambda2", *lambda2)?;
            }
        }
        Ok(())
    }

    /// Validates and fixes the dimension.
    pub fn compile(&self, dim: usize) -> Result<Penalty> {
        self.validate(dim)?;
        let a = self.scale;
        let all: Vec<usize> = (0..dim).collect();
        let mut ridge = 0.0;
        let blocks = match &self.variant {
            PenaltyKind::None => vec![],
            PenaltyKind::Lasso { lambda } => vec![Block::Abs {
                indices: all,
                weight: a * lambda,
            }],
            PenaltyKind::WeightedLasso { weights } => weights
                .iter()
                .enumerate()
                .map(|(i, w)| Block::Abs {
                    indices: vec![i],
                    weight: a * w,
                })
                .collect(),
            PenaltyKind::Slope { lambda } => vec![Block::SortedAbs {
                indices: all,
                weights: lambda.iter().map(|l| a * l).collect(),
            }],
            PenaltyKind::FusedLasso { lambda1, lambda2 } => vec![Block::Fused {
                start: 0,
                len: dim,
                l1: a * lambda1,
                tv: a * lambda2,
            }],
            PenaltyKind::ElasticNet { lambda1, lambda2 } => {
                ridge = a * lambda2;
                vec![Block::Abs {
                    indices: all,
                    weight: a * lambda1,
                }]
            }
        };
        Ok(Penalty {
            family: self.family(),
            poly: DirectionalPenalty::new(Vector::zeros(dim), blocks),
            ridge,
        })
    }
}

/// A penalty of fixed dimension: `poly(θ) + ridge·‖θ‖²` with `poly`
/// sublinear.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    family: PatternFamily,
    poly: DirectionalPenalty,
    ridge: f64,
}

impl Penalty {
    pub fn dim(&self) -> usize {
        self.poly.dim()
    }

    pub fn family(&self) -> PatternFamily {
        self.family
    }

    /// The sublinear part.
    pub fn polyhedral(&self) -> &DirectionalPenalty {
        &self.poly
    }

    /// Coefficient of the differentiable term `ridge·‖θ‖²`.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn value(&self, theta: &Vector) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        Ok(self.poly.value(theta) + self.ridge * theta.norm_squared())
    }

    /// `argmin_u ½‖u − v‖² + t·f(u)`.
    pub fn prox(&self, v: &Vector, t: f64) -> Result<Vector> {
        check_dim(self.dim(), v.len())?;
        Ok(self.prox_unchecked(v, t))
    }

    pub(crate) fn prox_unchecked(&self, v: &Vector, t: f64) -> Vector {
        let x = self.poly.prox(v, t);
        if self.ridge == 0.0 {
            x
        } else {
            // Exact because the sublinear part is positively homogeneous.
            x / (1.0 + 2.0 * t * self.ridge)
        }
    }

    /// `u ↦ f′(θ; u)`, including the ridge gradient in the linear offset.
    pub fn directional(&self, theta: &Vector) -> Result<DirectionalPenalty> {
        check_dim(self.dim(), theta.len())?;
        let d = self.poly.directional_at(theta);
        if self.ridge == 0.0 {
            return Ok(d);
        }
        let offset = d.offset() + theta * (2.0 * self.ridge);
        Ok(DirectionalPenalty::new(offset, d.blocks().to_vec()))
    }

    /// Euclidean distance from `v` to `∂f(θ)`.
    pub fn subdiff_distance(&self, theta: &Vector, v: &Vector) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        check_dim(self.dim(), v.len())?;
        Ok(Subdifferential::subdiff_distance(self, theta, v))
    }

    /// Whether `v ∈ ∂f(θ)` up to Euclidean distance `tol`.
    pub fn subdiff_contains(&self, theta: &Vector, v: &Vector, tol: f64) -> Result<bool> {
        Ok(self.subdiff_distance(theta, v)? <= tol)
    }

    /// A point in the relative interior of `∂f(θ)`.
    pub fn subdiff_ri_point(&self, theta: &Vector) -> Result<Vector> {
        Ok(self.directional(theta)?.offset().clone())
    }

    /// Pattern of `θ`; entries and gaps within `tol·max(1, ‖θ‖∞)` are treated
    /// as zero. `tol = 0` is exact.
    pub fn pattern(&self, theta: &Vector, tol: f64) -> Pattern {
        let thr = tol * theta.amax().max(1.0);
        match self.family {
            PatternFamily::Signs => Pattern::Signs {
                signs: theta.iter().map(|&x| sign_of(x, thr)).collect(),
            },
            PatternFamily::Clusters => {
                let keys: Vec<Option<f64>> =
                    theta.iter().map(|x| (x.abs() > thr).then_some(x.abs())).collect();
                let ranks = dense_ranks(&keys, |a, b| a.total_cmp(b), |a, b| b - a <= thr);
                let signs = theta
                    .iter()
                    .zip(&ranks)
                    .map(|(&x, &r)| if r == 0 { 0 } else { sign_of(x, 0.0) })
                    .collect();
                Pattern::Clusters { signs, ranks }
            }
            PatternFamily::Fused => fused_pattern(theta.as_slice(), thr),
        }
    }

    /// Basis of the pattern space: all vectors sharing the pattern lie in its
    /// span.
    pub fn pattern_basis(&self, pat: &Pattern) -> Result<Vec<Vector>> {
        let p = self.dim();
        if pat.dim() != p {
            return Err(Error::InvalidPattern(format!("pattern has dimension {}, penalty {p}", pat.dim())));
        }
        check_signs(pat.signs())?;
        let unit = |idx: &[usize], signs: &[i8]| {
            let mut v = Vector::zeros(p);
            for &i in idx {
                v[i] = signs[i] as f64;
            }
            v
        };
        match (self.family, pat) {
            (PatternFamily::Signs, Pattern::Signs { signs }) => Ok((0..p)
                .filter(|&i| signs[i] != 0)
                .map(|i| {
                    let mut v = Vector::zeros(p);
                    v[i] = 1.0;
                    v
                })
                .collect()),
            (PatternFamily::Clusters, Pattern::Clusters { signs, ranks }) => {
                if ranks.len() != p {
                    return Err(Error::InvalidPattern("rank vector has wrong length".into()));
                }
                let k = ranks.iter().copied().max().unwrap_or(0);
                let mut basis = Vec::with_capacity(k as usize);
                for r in 1..=k {
                    let idx: Vec<usize> = (0..p).filter(|&i| ranks[i] == r).collect();
                    if idx.is_empty() {
                        return Err(Error::InvalidPattern(format!("cluster rank {r} is unused")));
                    }
                    basis.push(unit(&idx, signs));
                }
                for i in 0..p {
                    if (ranks[i] == 0) != (signs[i] == 0) {
                        return Err(Error::InvalidPattern(format!("coordinate {i}: rank 0 must match sign 0")));
                    }
                }
                Ok(basis)
            }
            (PatternFamily::Fused, Pattern::Fused { signs, diffs }) => {
                if diffs.len() != p.saturating_sub(1) {
                    return Err(Error::InvalidPattern("difference vector has wrong length".into()));
                }
                check_signs(diffs)?;
                let mut basis = Vec::new();
                let mut start = 0;
                for i in 0..p {
                    if i + 1 < p {
                        let (a, b, d) = (signs[i], signs[i + 1], diffs[i]);
                        let consistent = if d == 0 { a == b } else { a == b || (b - a).signum() == d };
                        if !consistent {
                            return Err(Error::InvalidPattern(format!(
                                "difference sign at {i} contradicts coordinate signs"
                            )));
                        }
                    }
                    if i + 1 == p || diffs[i] != 0 {
                        if signs[start] != 0 {
                            let idx: Vec<usize> = (start..=i).collect();
                            basis.push(unit(&idx, &vec![1; p]));
                        }
                        start = i + 1;
                    }
                }
                Ok(basis)
            }
            _ => Err(Error::InvalidPattern("pattern family does not match the penalty".into())),
        }
    }

    /// `lim_{ε↓0} pattern(θ₀ + εu)`, computed symbolically.
    pub fn limit_pattern(&self, theta0: &Vector, u: &Vector) -> Result<Pattern> {
        check_dim(self.dim(), theta0.len())?;
        check_dim(self.dim(), u.len())?;
        let signs: Vec<i8> = theta0
            .iter()
            .zip(u.iter())
            .map(|(&t, &d)| if t != 0.0 { sign_of(t, 0.0) } else { sign_of(d, 0.0) })
            .collect();
        Ok(match self.family {
            PatternFamily::Signs => Pattern::Signs { signs },
            PatternFamily::Clusters => {
                // Magnitude of θ₀ + εu is |θ₀_i| + ε·s_i·u_i for small ε.
                let keys: Vec<Option<(f64, f64)>> = (0..theta0.len())
                    .map(|i| (signs[i] != 0).then(|| (theta0[i].abs(), signs[i] as f64 * u[i])))
                    .collect();
                let ranks = dense_ranks(
                    &keys,
                    |a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)),
                    |a, b| a == b,
                );
                Pattern::Clusters { signs, ranks }
            }
            PatternFamily::Fused => {
                let diffs = (0..theta0.len().saturating_sub(1))
                    .map(|i| {
                        let d0 = theta0[i + 1] - theta0[i];
                        if d0 != 0.0 {
                            sign_of(d0, 0.0)
                        } else {
                            sign_of(u[i + 1] - u[i], 0.0)
                        }
                    })
                    .collect();
                Pattern::Fused { signs, diffs }
            }
        })
    }
}

impl Subdifferential for Penalty {
    fn subdiff_distance(&self, at: &Vector, v: &Vector) -> f64 {
        if self.ridge == 0.0 {
            self.poly.subdiff_distance(at, v)
        } else {
            self.poly.subdiff_distance(at, &(v - at * (2.0 * self.ridge)))
        }
    }
}

fn check_signs(s: &[i8]) -> Result<()> {
    match s.iter().find(|x| !(-1..=1).contains(*x)) {
        Some(x) => Err(Error::InvalidPattern(format!("sign entry {x} outside {{-1, 0, 1}}"))),
        None => Ok(()),
    }
}

/// Runs whose successive gaps are within `thr` are flattened to their mean,
/// then small values are zeroed, so the resulting encoding is consistent.
fn fused_pattern(theta: &[f64], thr: f64) -> Pattern {
    let mut x = theta.to_vec();
    let mut start = 0;
    for i in 0..x.len() {
        if i + 1 == x.len() || (theta[i + 1] - theta[i]).abs() > thr {
            if i > start {
                let m = theta[start..=i].iter().sum::<f64>() / (i + 1 - start) as f64;
                x[start..=i].fill(m);
            }
            start = i + 1;
        }
    }
    for v in &mut x {
        if v.abs() <= thr {
            *v = 0.0;
        }
    }
    Pattern::Fused {
        signs: x.iter().map(|&v| sign_of(v, 0.0)).collect(),
        diffs: x.windows(2).map(|w| sign_of(w[1] - w[0], 0.0)).collect(),
    }
}
