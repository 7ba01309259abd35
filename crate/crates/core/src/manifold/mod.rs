//! Riemannian first-order descent on the non-negative unit sphere and the
//! unit-modulus torus, and the radiation/phase subproblems built on them.
//!
//! Complex gradients follow the convention `g = df/dRe + j df/dIm`, so the
//! first-order change of `f` along `dx` is `Re(g^H dx)`.

mod phases;
mod radiation;
mod reduced;

pub use phases::{
    current_phases, minimize_phases, phase_gradient, PhaseBlock, PhaseProblem, PhaseVector,
};
pub use radiation::{
    minimize_radiation_psds, minimize_radiation_ts, RadiationQuadratic, SingleUserRadiation,
};
pub use reduced::{
    minimize_phases_reduced, minimize_radiation_psds_reduced, minimize_radiation_ts_reduced,
    reduced_phase_gradient, reduced_phase_value, reduced_radiation_grad_psds, reduced_radiation_ts, reduced_radiation_value_psds,
    ReducedPhaseObjective,
};

use crate::error::{Error, Result};
use crate::{CVector, RVector};

/// Tangent projection on the unit sphere: `g - (x^T g) x`.
pub fn sphere_riemannian_grad(euclid_grad: &RVector, point: &RVector) -> RVector {
    euclid_grad - point * point.dot(euclid_grad)
}

/// Step `point - step * direction`, clamp negatives to zero and renormalize.
/// Returns `None` when clamping leaves nothing.
pub fn sphere_retract_positive(point: &RVector, step: f64, direction: &RVector) -> Option<RVector> {
    let moved = (point - direction * step).map(|v| v.max(0.0));
    let norm = moved.norm();
    if norm > 0.0 && norm.is_finite() {
        Some(moved / norm)
    } else {
        None
    }
}

/// Tangent projection on the torus: `g - Re(g .* conj(x)) .* x`.
pub fn torus_riemannian_grad(euclid_grad: &CVector, point: &CVector) -> CVector {
    euclid_grad.zip_map(point, |g, x| g - x * (g * x.conj()).re)
}

/// Elementwise `(x - step g) / |x - step g|`. Returns `None` if an entry
/// collapses to zero.
pub fn torus_retract(point: &CVector, step: f64, riemannian_grad: &CVector) -> Option<CVector> {
    let mut out = point.clone();
    for (o, g) in out.iter_mut().zip(riemannian_grad.iter()) {
        let z = *o - g * step;
        let r = z.norm();
        if !(r > 0.0 && r.is_finite()) {
            return None;
        }
        *o = z / r;
    }
    Some(out)
}

/// A constraint manifold with a projection-style retraction.
pub trait Manifold {
    type Point: Clone;

    fn riemannian_grad(&self, point: &Self::Point, euclid_grad: &Self::Point) -> Self::Point;
    fn retract(&self, point: &Self::Point, step: f64, grad: &Self::Point) -> Option<Self::Point>;
    fn norm_sq(&self, v: &Self::Point) -> f64;
}

/// Non-negative orthant of the unit sphere.
#[derive(Debug, Clone, Copy, Default)]
pub struct PositiveSphere;

impl Manifold for PositiveSphere {
    type Point = RVector;

    /// Tangent projection with components that would push a zero entry
    /// negative removed, so the norm vanishes at boundary stationary points.
    fn riemannian_grad(&self, point: &RVector, euclid_grad: &RVector) -> RVector {
        let g = sphere_riemannian_grad(euclid_grad, point);
        let mut masked = g.clone();
        let mut touched = false;
        for (i, v) in masked.iter_mut().enumerate() {
            if point[i] <= 0.0 && *v > 0.0 {
                *v = 0.0;
                touched = true;
            }
        }
        if touched {
            sphere_riemannian_grad(&masked, point)
        } else {
            g
        }
    }

    fn retract(&self, point: &RVector, step: f64, grad: &RVector) -> Option<RVector> {
        sphere_retract_positive(point, step, grad)
    }

    fn norm_sq(&self, v: &RVector) -> f64 {
        v.norm_squared()
    }
}

/// Product of unit circles.
#[derive(Debug, Clone, Copy, Default)]
pub struct Torus;

impl Manifold for Torus {
    type Point = CVector;

    fn riemannian_grad(&self, point: &CVector, euclid_grad: &CVector) -> CVector {
        torus_riemannian_grad(euclid_grad, point)
    }

    fn retract(&self, point: &CVector, step: f64, grad: &CVector) -> Option<CVector> {
        torus_retract(point, step, grad)
    }

    fn norm_sq(&self, v: &CVector) -> f64 {
        v.norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoOptions {
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
}

impl Default for ArmijoOptions {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 30,
            max_iterations: 100,
            grad_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    SmallGradient,
    IterationLimit,
    LineSearchFailed,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentReport {
    pub iterations: usize,
    pub initial_value: f64,
    pub final_value: f64,
    pub grad_norm: f64,
    pub stop: StopReason,
}

/// Riemannian gradient descent with Armijo backtracking.
///
/// Each accepted step satisfies `f(new) <= f(old) - c1 * step * ||g||^2`, so
/// the objective never increases.
pub fn armijo_descend<M, F, G>(
    manifold: &M,
    objective: F,
    euclid_grad: G,
    start: M::Point,
    opts: &ArmijoOptions,
) -> Result<(M::Point, DescentReport)>
where
    M: Manifold,
    F: Fn(&M::Point) -> f64,
    G: Fn(&M::Point) -> M::Point,
{
    let mut x = start;
    let mut fx = objective(&x);
    if !fx.is_finite() {
        return Err(Error::NonFinite("descent objective at start"));
    }
    let initial_value = fx;
    let mut iterations = 0;
    let mut grad_norm;
    let stop = loop {
        let g = manifold.riemannian_grad(&x, &euclid_grad(&x));
        let gsq = manifold.norm_sq(&g);
        grad_norm = gsq.sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::NonFinite("descent gradient"));
        }
        if grad_norm < opts.grad_tolerance {
            break StopReason::SmallGradient;
        }
        if iterations >= opts.max_iterations {
            break StopReason::IterationLimit;
        }
        let mut step = opts.initial_step;
        let mut accepted: Option<(M::Point, f64)> = None;
        for _ in 0..=opts.max_backtracks {
            let cand = manifold
                .retract(&x, step, &g)
                .map(|c| {
                    let fc = objective(&c);
                    (c, fc)
                })
                .filter(|(_, fc)| fc.is_finite());
            match (&accepted, cand) {
                // Keep shrinking past the first acceptable step while the
                // objective still improves; plain Armijo tends to accept
                // overshooting steps that zig-zag around the minimizer.
                (Some((_, fa)), Some((c, fc))) if fc < *fa => accepted = Some((c, fc)),
                (Some(_), _) => break,
                (None, Some((c, fc))) if fc <= fx - opts.sufficient_decrease * step * gsq => {
                    accepted = Some((c, fc))
                }
                (None, _) => {}
            }
            step *= opts.shrink;
        }
        match accepted {
            Some((cand, fc)) => {
                iterations += 1;
                let stalled = fc >= fx;
                x = cand;
                fx = fc;
                if stalled {
                    break StopReason::Stalled;
                }
            }
            None => break StopReason::LineSearchFailed,
        }
    };
    Ok((
        x,
        DescentReport {
            iterations,
            initial_value,
            final_value: fx,
            grad_norm,
            stop,
        },
    ))
}

/// Largest deviation of `|x_n|` from 1.
pub fn torus_residual(x: &CVector) -> f64 {
    x.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
pub(crate) fn unit(phase: f64) -> crate::Complex64 {
    crate::Complex64::from_polar(1.0, phase)
}
