//! Radiation-amplitude subproblems.
//!
//! With everything except the radiation amplitudes frozen, the weighted MSE
//! is a real quadratic in `(xi_f, xi_b)`. Under PS/DS the two directions are
//! coupled through the cross block; under TS each direction serves one user
//! and the problems decouple.

use nalgebra::DMatrix;

use super::{armijo_descend, ArmijoOptions, DescentReport, PositiveSphere};
use crate::error::Result;
use crate::model::{c64, ChannelSet, Direction, PrecoderState, RadiationState, User};
use crate::wmmse::{AuxPsds, AuxTs};
use crate::{CMatrix, CVector, RVector};

/// `diag(h) G^T w`: contribution of each PA to `h_eff^T w`.
pub(super) fn pa_contributions(channels: &ChannelSet, user: User, dir: Direction, w: &CVector) -> CVector {
    let gw = channels.g(dir).transpose() * w;
    channels.h(user, dir).component_mul(&gw)
}

/// Quadratic `f(xi) = sum xi_c^T A_cc' xi_c' - 2 Re(sum xi_c^T l_c)` of the
/// PS/DS radiation subproblem, plus the constant that restores the full
/// weighted-MSE surrogate.
#[derive(Debug, Clone)]
pub struct RadiationQuadratic {
    pub a_ff: CMatrix,
    pub a_bb: CMatrix,
    pub a_fb: CMatrix,
    pub l_f: CVector,
    pub l_b: CVector,
    pub constant: f64,
    s_ff: DMatrix<f64>,
    s_bb: DMatrix<f64>,
    s_fb: DMatrix<f64>,
    r_f: RVector,
    r_b: RVector,
}

impl RadiationQuadratic {
    pub fn build(channels: &ChannelSet, precoder: &PrecoderState, aux: &AuxPsds, noise: f64) -> Self {
        let n = channels.g_f.ncols();
        let mut a_ff = CMatrix::zeros(n, n);
        let mut a_bb = CMatrix::zeros(n, n);
        let mut a_fb = CMatrix::zeros(n, n);
        let mut l_f = CVector::zeros(n);
        let mut l_b = CVector::zeros(n);
        let mut constant = 0.0;
        for user in User::BOTH {
            let x = aux.get(user);
            let weight = c64(x.kappa * x.t.norm_sqr(), 0.0);
            for j in User::BOTH {
                let w = precoder.w(j);
                let uf = pa_contributions(channels, user, Direction::Forward, w);
                let ub = pa_contributions(channels, user, Direction::Backward, w);
                a_ff += &uf * uf.adjoint() * weight;
                a_bb += &ub * ub.adjoint() * weight;
                a_fb += &uf * ub.adjoint() * weight;
                if j == user {
                    let lin = x.t.conj() * x.kappa;
                    l_f += uf * lin;
                    l_b += ub * lin;
                }
            }
            constant += x.kappa * (1.0 + x.t.norm_sqr() * noise) - x.kappa.ln();
        }
        Self {
            s_ff: a_ff.map(|z| z.re),
            s_bb: a_bb.map(|z| z.re),
            s_fb: a_fb.map(|z| z.re),
            r_f: l_f.map(|z| z.re),
            r_b: l_b.map(|z| z.re),
            a_ff,
            a_bb,
            a_fb,
            l_f,
            l_b,
            constant,
        }
    }

    /// Subproblem objective (real part of the assembled forms).
    pub fn value(&self, xi_f: &RVector, xi_b: &RVector) -> f64 {
        xi_f.dot(&(&self.s_ff * xi_f)) + xi_b.dot(&(&self.s_bb * xi_b))
            + 2.0 * xi_f.dot(&(&self.s_fb * xi_b))
            - 2.0 * (xi_f.dot(&self.r_f) + xi_b.dot(&self.r_b))
    }

    /// Full weighted-MSE surrogate at these amplitudes.
    pub fn surrogate(&self, xi_f: &RVector, xi_b: &RVector) -> f64 {
        self.value(xi_f, xi_b) + self.constant
    }

    pub fn grad_f(&self, xi_f: &RVector, xi_b: &RVector) -> RVector {
        (&self.s_ff * xi_f + &self.s_fb * xi_b - &self.r_f) * 2.0
    }

    pub fn grad_b(&self, xi_f: &RVector, xi_b: &RVector) -> RVector {
        (&self.s_bb * xi_b + self.s_fb.tr_mul(xi_f) - &self.r_b) * 2.0
    }
}

/// Alternating Armijo descent on both directions (forward then backward),
/// two sweeps. Returns the new state and the per-pass reports.
pub fn minimize_radiation_psds(
    quad: &RadiationQuadratic,
    start: &RadiationState,
    opts: &ArmijoOptions,
) -> Result<(RadiationState, Vec<DescentReport>)> {
    let mut state = start.clone();
    let mut reports = Vec::with_capacity(4);
    for _ in 0..2 {
        let xi_b = state.xi_b.clone();
        let (xf, rep) = armijo_descend(
            &PositiveSphere,
            |x: &RVector| quad.value(x, &xi_b),
            |x: &RVector| quad.grad_f(x, &xi_b),
            state.xi_f.clone(),
            opts,
        )?;
        state.xi_f = xf;
        reports.push(rep);
        let xi_f = state.xi_f.clone();
        let (xb, rep) = armijo_descend(
            &PositiveSphere,
            |x: &RVector| quad.value(&xi_f, x),
            |x: &RVector| quad.grad_b(&xi_f, x),
            state.xi_b.clone(),
            opts,
        )?;
        state.xi_b = xb;
        reports.push(rep);
    }
    Ok((state, reports))
}

/// Single-user TS radiation objective `|xi^T v|^2 - 2 Re(xi^T v)` with
/// `v = diag(h) G^T conj(t_hat)`.
#[derive(Debug, Clone)]
pub struct SingleUserRadiation {
    pub v: CVector,
}

impl SingleUserRadiation {
    pub fn build(channels: &ChannelSet, aux: &AuxTs, user: User) -> Self {
        let t = &aux.get(user).t;
        Self {
            v: pa_contributions(channels, user, user.home_direction(), &t.conjugate()),
        }
    }

    pub fn value(&self, xi: &RVector) -> f64 {
        let s = self.v.iter().zip(xi.iter()).map(|(v, x)| v * *x).sum::<crate::Complex64>();
        s.norm_sqr() - 2.0 * s.re
    }

    pub fn grad(&self, xi: &RVector) -> RVector {
        let s = self.v.iter().zip(xi.iter()).map(|(v, x)| v * *x).sum::<crate::Complex64>();
        self.v.map(|v| 2.0 * (v * s.conj()).re - 2.0 * v.re)
    }
}

/// Independent per-direction descent: FU drives `xi_f`, BU drives `xi_b`.
pub fn minimize_radiation_ts(
    channels: &ChannelSet,
    aux: &AuxTs,
    start: &RadiationState,
    opts: &ArmijoOptions,
) -> Result<(RadiationState, Vec<DescentReport>)> {
    let mut state = start.clone();
    let mut reports = Vec::with_capacity(2);
    for user in User::BOTH {
        let dir = user.home_direction();
        let prob = SingleUserRadiation::build(channels, aux, user);
        let (x, rep) = armijo_descend(
            &PositiveSphere,
            |x: &RVector| prob.value(x),
            |x: &RVector| prob.grad(x),
            state.get(dir).clone(),
            opts,
        )?;
        *state.get_mut(dir) = x;
        reports.push(rep);
    }
    Ok((state, reports))
}
