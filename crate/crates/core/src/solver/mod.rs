//! Accelerated proximal gradient for the finite-sample objective
//! `(1/n)Σℓ(yᵢ, xᵢ, θ) + n^{-1/2}·f(θ)` and the limit objective
//! `V(u) = ½uᵀCu − uᵀW + h(u)`.
//!
//! Iterations use backtracking on the smooth part and restart the momentum
//! whenever the objective would increase. Convergence is certified by the
//! distance from zero to the subdifferential of the full objective.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::loss::{Dataset, LossSpec};
use crate::numerics::{serde_vector, solve_spd, spectral_bound, SpdMatrix, Vector};
use crate::penalty::{DirectionalPenalty, Penalty, PenaltySpec, Subdifferential};

fn default_smoothing() -> Vec<f64> {
    (1..=7).map(|k| 10f64.powi(-k)).collect()
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// KKT tolerance relative to `max(1, ‖∇F(0)‖)`.
    pub tol: f64,
    /// Backtracking factor in `(0, 1)`.
    pub shrink: f64,
    pub initial_step: f64,
    /// Decreasing smoothing levels for the quantile loss; the last is the
    /// floor at which the reported solution is computed.
    pub smoothing: Vec<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 50_000,
            tol: 1e-9,
            shrink: 0.5,
            initial_step: 1.0,
            smoothing: default_smoothing(),
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(format!("solver options: {m}")));
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol must be positive");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad("initial_step must be positive");
        }
        if self.smoothing.is_empty()
            || self.smoothing.iter().any(|&m| !(m > 0.0 && m.is_finite()))
            || self.smoothing.windows(2).any(|w| w[1] >= w[0])
        {
            return bad("smoothing must be a nonempty strictly decreasing positive sequence");
        }
        Ok(())
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    #[serde(serialize_with = "serde_vector::serialize")]
    pub minimizer: Vector,
    pub iterations: usize,
    pub objective: f64,
    /// Distance from zero to the subdifferential of the full objective.
    pub kkt_residual: f64,
    pub kkt_tolerance: f64,
    pub converged: bool,
}

/// The nonsmooth term of a composite objective.
pub(crate) trait ProxTerm {
    fn value(&self, x: &Vector) -> f64;
    fn prox(&self, v: &Vector, t: f64) -> Vector;
    /// Distance from `v` to `∂h(x)`.
    fn distance(&self, x: &Vector, v: &Vector) -> f64;
}

/// `s·f` for a compiled penalty `f`.
struct Scaled<'a> {
    pen: &'a Penalty,
    s: f64,
}

impl ProxTerm for Scaled<'_> {
    fn value(&self, x: &Vector) -> f64 {
        self.s * (self.pen.polyhedral().value(x) + self.pen.ridge() * x.norm_squared())
    }

    fn prox(&self, v: &Vector, t: f64) -> Vector {
        self.pen.prox_unchecked(v, t * self.s)
    }

    fn distance(&self, x: &Vector, v: &Vector) -> f64 {
        if self.s == 0.0 {
            v.norm()
        } else {
            self.s * Subdifferential::subdiff_distance(self.pen, x, &(v / self.s))
        }
    }
}

impl ProxTerm for DirectionalPenalty {
    fn value(&self, x: &Vector) -> f64 {
        DirectionalPenalty::value(self, x)
    }

    fn prox(&self, v: &Vector, t: f64) -> Vector {
        DirectionalPenalty::prox(self, v, t)
    }

    fn distance(&self, x: &Vector, v: &Vector) -> f64 {
        self.subdiff_distance(x, v)
    }
}

/// Per accepted iteration: (objective, KKT residual).
pub(crate) type Trace = Vec<(f64, f64)>;

/// Accelerated proximal gradient on `smooth + h` from `x0`.
///
/// Stops when the KKT residual drops below `tol_abs`; `max_norm` aborts
/// with [`Error::SeparableData`] when iterates run off to infinity.
#[allow(clippy::too_many_arguments)]
pub(crate) fn apg<F, H>(
    smooth: &F,
    h: &H,
    x0: Vector,
    opts: &SolveOptions,
    step0: f64,
    tol_abs: f64,
    max_norm: Option<f64>,
    mut trace: Option<&mut Trace>,
) -> Result<SolveReport>
where
    F: Fn(&Vector) -> (f64, Vector),
    H: ProxTerm + ?Sized,
{
    let mut x = x0;
    let (mut fx, mut gx) = smooth(&x);
    let mut obj = fx + h.value(&x);
    let mut resid = h.distance(&x, &-&gx);
    let mut eta = step0;
    let mut y = x.clone();
    let (mut fy, mut gy) = (fx, gx.clone());
    let mut t = 1.0f64;
    let mut momentum = false;
    let mut iterations = 0;
    let report = |x: &Vector, it: usize, obj: f64, resid: f64| SolveReport {
        minimizer: x.clone(),
        iterations: it,
        objective: obj,
        kkt_residual: resid,
        kkt_tolerance: tol_abs,
        converged: resid <= tol_abs,
    };
    if let Some(tr) = trace.as_deref_mut() {
        tr.push((obj, resid));
    }
    while resid > tol_abs && iterations < opts.max_iter {
        iterations += 1;
        // Backtracking from y.
        let (xn, fxn, gxn) = loop {
            let xn = h.prox(&(&y - &gy * eta), eta);
            let (f, g) = smooth(&xn);
            let d = &xn - &y;
            let bound = fy + gy.dot(&d) + d.norm_squared() / (2.0 * eta);
            if f.is_finite() && f <= bound + 1e-13 * fy.abs().max(1.0) {
                break (xn, f, g);
            }
            eta *= opts.shrink;
            if eta < 1e-300 {
                return Err(Error::NotConverged(Box::new(report(&x, iterations, obj, resid))));
            }
        };
        let objn = fxn + h.value(&xn);
        // A plain proximal step that passed the line search decreases the
        // objective in exact arithmetic, so it is kept even when rounding
        // says otherwise.
        if momentum && objn > obj + 1e-13 * obj.abs().max(1.0) {
            y = x.clone();
            fy = fx;
            gy = gx.clone();
            t = 1.0;
            momentum = false;
            continue;
        }
        // Prox optimality gives (y − xn)/η − ∇F(y) ∈ ∂h(xn), hence a free
        // upper bound on the residual at xn.
        let bound = ((&gy - &gxn) + (&xn - &y) / eta).norm();
        let x_prev = std::mem::replace(&mut x, xn);
        fx = fxn;
        gx = gxn;
        obj = objn;
        resid = if bound <= tol_abs { bound } else { bound.min(h.distance(&x, &-&gx)) };
        if let Some(tr) = trace.as_deref_mut() {
            tr.push((obj, resid));
        }
        if let Some(m) = max_norm {
            let norm = x.norm();
            if norm > m {
                return Err(Error::SeparableData { norm });
            }
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        t = t_next;
        if beta > 0.0 {
            y = &x + (&x - &x_prev) * beta;
            (fy, gy) = smooth(&y);
            momentum = true;
        } else {
            y = x.clone();
            fy = fx;
            gy = gx.clone();
            momentum = false;
        }
    }
    let r = report(&x, iterations, obj, resid);
    if r.converged {
        Ok(r)
    } else {
        Err(Error::NotConverged(Box::new(r)))
    }
}

/// Norm beyond which a logistic fit is declared divergent.
const DIVERGENCE_NORM: f64 = 1e6;

/// Smooth part of the finite-sample objective at smoothing level `mu`.
enum Empirical<'a> {
    Gram { g: nalgebra::DMatrix<f64>, h: Vector },
    General { data: &'a Dataset, loss: LossSpec, mu: f64 },
}

impl Empirical<'_> {
    fn value_grad(&self, theta: &Vector) -> (f64, Vector) {
        match self {
            Empirical::Gram { g, h } => {
                let gt = g * theta;
                (0.5 * theta.dot(&gt) - h.dot(theta), gt - h)
            }
            Empirical::General { data, loss, mu } => {
                let x = data.design();
                let eta = x * theta;
                let n = data.n() as f64;
                let mut total = 0.0;
                let d = Vector::from_iterator(
                    eta.len(),
                    eta.iter().zip(data.response().iter()).map(|(&e, &y)| {
                        let (v, d) = loss.value_deriv_eta(y, e, *mu);
                        total += v;
                        d
                    }),
                );
                (total / n, x.tr_mul(&d) / n)
            }
        }
    }
}

/// Minimizes `(1/n)Σℓ(yᵢ, xᵢ, θ) + n^{-1/2}·f(θ)` starting from zero.
pub fn fit(data: &Dataset, loss: &LossSpec, pen: &PenaltySpec, opts: &SolveOptions) -> Result<SolveReport> {
    fit_from(data, loss, pen, opts, None)
}

/// [`fit`] with an optional warm start.
pub fn fit_from(
    data: &Dataset,
    loss: &LossSpec,
    pen: &PenaltySpec,
    opts: &SolveOptions,
    start: Option<&Vector>,
) -> Result<SolveReport> {
    opts.validate()?;
    loss.validate()?;
    data.validate_for(loss)?;
    let p = data.p();
    let compiled = pen.compile(p)?;
    let h = Scaled {
        pen: &compiled,
        s: 1.0 / (data.n() as f64).sqrt(),
    };
    let mut x = match start {
        Some(s) => {
            check_dim(p, s.len())?;
            s.clone()
        }
        None => Vector::zeros(p),
    };
    let max_norm = matches!(loss, LossSpec::Logistic { .. }).then_some(DIVERGENCE_NORM);
    let levels: Vec<f64> = if loss.is_smooth() { vec![0.0] } else { opts.smoothing.clone() };
    let mut total_iter = 0;
    let last = levels.len() - 1;
    for (i, &mu) in levels.iter().enumerate() {
        let smooth = match loss {
            LossSpec::Squared => {
                let xm = data.design();
                let n = data.n() as f64;
                Empirical::Gram {
                    g: xm.tr_mul(xm) / n,
                    h: xm.tr_mul(data.response()) / n,
                }
            }
            _ => Empirical::General {
                data,
                loss: *loss,
                mu,
            },
        };
        let f = |t: &Vector| smooth.value_grad(t);
        let g0 = f(&Vector::zeros(p)).1.norm();
        let tol_abs = opts.tol * g0.max(1.0);
        let outcome = apg(&f, &h, x.clone(), opts, opts.initial_step, tol_abs, max_norm, None);
        if let Some(m) = max_norm {
            let last = match &outcome {
                Ok(r) => Some(r),
                Err(Error::NotConverged(r)) => Some(r.as_ref()),
                Err(_) => None,
            };
            if let Some(r) = last {
                ray_check(&f, &h, &r.minimizer, r.objective, m)?;
            }
        }
        match outcome {
            Ok(r) => {
                total_iter += r.iterations;
                if i == last {
                    return Ok(SolveReport {
                        iterations: total_iter,
                        ..r
                    });
                }
                x = r.minimizer;
            }
            Err(Error::NotConverged(r)) => {
                total_iter += r.iterations;
                if i == last {
                    return Err(Error::NotConverged(Box::new(SolveReport {
                        iterations: total_iter,
                        ..*r
                    })));
                }
                x = r.minimizer;
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("smoothing schedule is nonempty")
}

/// Iterates of a logistic fit on separable data creep outwards only
/// logarithmically, so besides the norm guard the objective is compared
/// with its value on the same ray beyond `max_norm`: if that is lower the
/// minimizer is unbounded for practical purposes.
fn ray_check<F, H>(smooth: &F, h: &H, x: &Vector, obj: f64, max_norm: f64) -> Result<()>
where
    F: Fn(&Vector) -> (f64, Vector),
    H: ProxTerm,
{
    let norm = x.norm();
    if norm == 0.0 {
        return Ok(());
    }
    let far = x * (2.0 * max_norm / norm);
    let far_obj = smooth(&far).0 + h.value(&far);
    if far_obj < obj {
        return Err(Error::SeparableData { norm });
    }
    Ok(())
}

/// Minimizes `V(u) = ½uᵀCu − uᵀW + dir(u)` starting from zero.
pub fn minimize_limit(c: &SpdMatrix, w: &Vector, dir: &DirectionalPenalty, opts: &SolveOptions) -> Result<SolveReport> {
    minimize_limit_from(c, w, dir, opts, None)
}

/// [`minimize_limit`] with an optional warm start.
pub fn minimize_limit_from(
    c: &SpdMatrix,
    w: &Vector,
    dir: &DirectionalPenalty,
    opts: &SolveOptions,
    start: Option<&Vector>,
) -> Result<SolveReport> {
    let p = c.dim();
    check_dim(p, w.len())?;
    check_dim(p, dir.dim())?;
    let cm = c.matrix();
    let tol_abs = opts.tol * w.norm().max(1.0);
    let smooth = |u: &Vector| {
        let cu = cm * u;
        (0.5 * u.dot(&cu) - w.dot(u), cu - w)
    };
    if dir.is_linear() {
        let u = solve_spd(c, &(w - dir.offset()))?;
        let (f, g) = smooth(&u);
        let resid = (g + dir.offset()).norm();
        return Ok(SolveReport {
            objective: f + dir.value(&u),
            minimizer: u,
            iterations: 0,
            kkt_residual: resid,
            kkt_tolerance: tol_abs,
            converged: resid <= tol_abs,
        });
    }
    let x0 = match start {
        Some(s) => {
            check_dim(p, s.len())?;
            s.clone()
        }
        None => Vector::zeros(p),
    };
    apg(&smooth, dir, x0, opts, 1.0 / spectral_bound(cm), tol_abs, None, None)
}

/// `prox_{n^{-1/2}·α·f}(θ₁)`: the two-step estimator built on any
/// root-n consistent initial estimate `θ₁`.
pub fn prox_two_step(theta1: &Vector, pen: &PenaltySpec, alpha: f64, n: usize) -> Result<Vector> {
    if alpha == 0.0 {
        return Ok(theta1.clone());
    }
    pen.with_scale(alpha).compile(theta1.len())?.prox(theta1, 1.0 / (n as f64).sqrt())
}

/// Distance from `−smooth_grad/scale` to `∂f(θ)`; with `scale = 0` it is
/// `‖smooth_grad‖`. Zero exactly at stationary points of `F + scale·f`.
pub fn kkt_residual<S: Subdifferential + ?Sized>(theta: &Vector, smooth_grad: &Vector, pen: &S, scale: f64) -> f64 {
    if scale == 0.0 {
        smooth_grad.norm()
    } else {
        pen.subdiff_distance(theta, &(-smooth_grad / scale))
    }
}

#[cfg(test)]
mod tests;
