//! Power-splitting angles.
//!
//! With the radiation amplitudes, positions and precoder frozen, user `k`'s
//! effective channel is `alpha_k^F (c_F .* cos(theta)) + alpha_k^B (c_B .* sin(theta))`,
//! where `c_dir` are the port phases relative to the edge port and
//! `alpha_k^dir = sum_n xi_n exp(-j kg offset_n) h_kn`. PS minimizes the
//! weighted MSE over the box `[0, pi/2]^M` with a projected limited-memory
//! quasi-Newton method; DS adds the concave penalty
//! `P(theta) = sum_m cos + sin - 1`, which vanishes exactly at binary angles.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::model::{
    backward_amplitude, c64, cis_neg, forward_amplitude, unit_port_phases, ChannelSet, Direction,
    Geometry, PrecoderState, Scenario, User,
};
use crate::wmmse::AuxPsds;
use crate::{CVector, Complex64, RVector};

/// Frozen data of the splitting subproblem.
#[derive(Debug, Clone)]
pub struct SplittingProblem {
    /// `alpha[user][dir]`.
    pub alpha: [[Complex64; 2]; 2],
    pub c_f: CVector,
    pub c_b: CVector,
    pub precoder: PrecoderState,
    pub aux: AuxPsds,
    pub noise: f64,
}

impl SplittingProblem {
    pub fn build(
        scenario: &Scenario,
        geometry: &Geometry,
        channels: &ChannelSet,
        radiation: &crate::RadiationState,
        precoder: &PrecoderState,
        aux: &AuxPsds,
    ) -> Self {
        let kg = scenario.consts.guided_wavenumber;
        let alpha = User::BOTH.map(|user| {
            Direction::BOTH.map(|dir| {
                let xi = radiation.get(dir);
                let h = channels.h(user, dir);
                let d = geometry.displacements(dir);
                (0..xi.len())
                    .map(|n| h[n] * xi[n] * cis_neg(kg * geometry.waveguide_offset(dir, n, d[n])))
                    .sum()
            })
        });
        Self {
            alpha,
            c_f: unit_port_phases(geometry, Direction::Forward, kg),
            c_b: unit_port_phases(geometry, Direction::Backward, kg),
            precoder: precoder.clone(),
            aux: *aux,
            noise: scenario.noise_power(),
        }
    }

    pub fn num_ports(&self) -> usize {
        self.c_f.len()
    }

    /// Effective channel of `user` at angles `theta`.
    pub fn effective_channel(&self, theta: &[f64], user: User) -> CVector {
        let [af, ab] = self.alpha[user.index()];
        CVector::from_fn(theta.len(), |m, _| {
            af * self.c_f[m] * forward_amplitude(theta[m]) + ab * self.c_b[m] * backward_amplitude(theta[m])
        })
    }

    /// Full weighted-MSE surrogate `sum_k kappa_k e_k - ln kappa_k`.
    pub fn value(&self, theta: &[f64]) -> f64 {
        User::BOTH
            .iter()
            .map(|&u| {
                let h = self.effective_channel(theta, u);
                let x = self.aux.get(u);
                let s = h.dot(self.precoder.w(u));
                let i = h.dot(self.precoder.w(u.other()));
                let e = (c64(1.0, 0.0) - x.t.conj() * s).norm_sqr() + x.t.norm_sqr() * (i.norm_sqr() + self.noise);
                x.kappa * e - x.kappa.ln()
            })
            .sum()
    }

    /// Gradients with respect to the forward and backward amplitude vectors.
    pub fn amplitude_gradients(&self, theta: &[f64]) -> (RVector, RVector) {
        let m = theta.len();
        let mut gf = RVector::zeros(m);
        let mut gb = RVector::zeros(m);
        for u in User::BOTH {
            let h = self.effective_channel(theta, u);
            let x = self.aux.get(u);
            let w_k = self.precoder.w(u);
            // kappa |t|^2 W_sum conj(h) - kappa conj(t) w_k
            let mut v = CVector::zeros(m);
            for j in User::BOTH {
                let w = self.precoder.w(j);
                v += w * (h.dot(w).conj() * (x.kappa * x.t.norm_sqr()));
            }
            v -= w_k * (x.t.conj() * x.kappa);
            let [af, ab] = self.alpha[u.index()];
            for i in 0..m {
                gf[i] += 2.0 * (af * self.c_f[i] * v[i]).re;
                gb[i] += 2.0 * (ab * self.c_b[i] * v[i]).re;
            }
        }
        (gf, gb)
    }

    pub fn objective_and_grad(&self, theta: &[f64]) -> (f64, RVector) {
        let (gf, gb) = self.amplitude_gradients(theta);
        let grad = RVector::from_fn(theta.len(), |m, _| gb[m] * theta[m].cos() - gf[m] * theta[m].sin());
        (self.value(theta), grad)
    }
}

/// `sum_m cos(theta_m) + sin(theta_m) - 1`; zero exactly at binary angles.
pub fn binary_penalty(theta: &[f64]) -> f64 {
    theta
        .iter()
        .map(|&t| {
            let (c, s) = (forward_amplitude(t), backward_amplitude(t));
            (c - c * c) + (s - s * s)
        })
        .sum()
}

pub fn binary_penalty_grad(theta: &[f64]) -> RVector {
    RVector::from_iterator(theta.len(), theta.iter().map(|&t| t.cos() - t.sin()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiNewtonOptions {
    pub memory: usize,
    pub max_iterations: usize,
    pub pg_tolerance: f64,
    pub max_backtracks: usize,
    pub sufficient_decrease: f64,
}

impl Default for QuasiNewtonOptions {
    fn default() -> Self {
        Self {
            memory: 7,
            max_iterations: 100,
            pg_tolerance: 1e-6,
            max_backtracks: 30,
            sufficient_decrease: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxReport {
    pub iterations: usize,
    pub initial_value: f64,
    pub final_value: f64,
    pub projected_grad_norm: f64,
    pub converged: bool,
    pub line_search_failed: bool,
}

fn project(x: &mut RVector, lo: f64, hi: f64) {
    for v in x.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

fn projected_grad_norm(x: &RVector, g: &RVector, lo: f64, hi: f64) -> f64 {
    let mut p = x - g;
    project(&mut p, lo, hi);
    (x - p).norm()
}

/// Projected limited-memory BFGS on the box `[lo, hi]^n`.
///
/// Variables sitting on a bound with the gradient pushing outward are held
/// fixed for the step; the two-loop direction is computed on the rest and the
/// trial point is projected back onto the box. Every iterate is feasible and
/// the objective never increases.
pub fn minimize_box<F>(
    f: F,
    start: &RVector,
    lo: f64,
    hi: f64,
    opts: &QuasiNewtonOptions,
) -> Result<(RVector, BoxReport)>
where
    F: Fn(&RVector) -> (f64, RVector),
{
    let mut x = start.clone();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return Err(Error::NonFinite("box objective at start"));
    }
    let initial_value = fx;
    let mut memory: VecDeque<(RVector, RVector, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut line_search_failed = false;
    let mut pg = projected_grad_norm(&x, &g, lo, hi);
    while pg >= opts.pg_tolerance && iterations < opts.max_iterations {
        let free: Vec<bool> = (0..x.len())
            .map(|i| !((x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0)))
            .collect();
        let mask = |v: &RVector| RVector::from_fn(v.len(), |i, _| if free[i] { v[i] } else { 0.0 });
        let gm = mask(&g);
        // Two-loop recursion.
        let mut q = gm.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * mask(s).dot(&q);
            q -= mask(y) * a;
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let (sm, ym) = (mask(s), mask(y));
            let yy = ym.dot(&ym);
            if yy > 0.0 && sm.dot(&ym) > 0.0 {
                q *= sm.dot(&ym) / yy;
            }
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * mask(y).dot(&q);
            q += mask(s) * (a - b);
        }
        let mut d = -mask(&q);
        if d.dot(&gm) >= 0.0 {
            memory.clear();
            d = -gm.clone();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let mut trial = &x + &d * step;
            project(&mut trial, lo, hi);
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + opts.sufficient_decrease * g.dot(&(&trial - &x)) && ft <= fx {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if memory.is_empty() {
                line_search_failed = true;
                break;
            }
            memory.clear();
            continue;
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            memory.push_back((s, y, 1.0 / sy));
            if memory.len() > opts.memory {
                memory.pop_front();
            }
        }
        iterations += 1;
        let moved = xn != x;
        x = xn;
        fx = fnew;
        g = gn;
        pg = projected_grad_norm(&x, &g, lo, hi);
        if !moved {
            break;
        }
    }
    Ok((
        x,
        BoxReport {
            iterations,
            initial_value,
            final_value: fx,
            projected_grad_norm: pg,
            converged: pg < opts.pg_tolerance,
            line_search_failed,
        },
    ))
}

/// Continuous PS splitting update.
pub fn minimize_theta_ps(
    start: &[f64],
    problem: &SplittingProblem,
    opts: &QuasiNewtonOptions,
) -> Result<(Vec<f64>, BoxReport)> {
    let (x, rep) = minimize_box(
        |t: &RVector| problem.objective_and_grad(t.as_slice()),
        &RVector::from_column_slice(start),
        0.0,
        FRAC_PI_2,
        opts,
    )?;
    Ok((x.as_slice().to_vec(), rep))
}

/// Penalized DS splitting update at a fixed penalty weight.
pub fn minimize_theta_ds(
    start: &[f64],
    problem: &SplittingProblem,
    rho: f64,
    opts: &QuasiNewtonOptions,
) -> Result<(Vec<f64>, BoxReport)> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("penalty weight must be positive, got {rho}")));
    }
    let (x, rep) = minimize_box(
        |t: &RVector| {
            let (v, g) = problem.objective_and_grad(t.as_slice());
            (v + rho * binary_penalty(t.as_slice()), g + binary_penalty_grad(t.as_slice()) * rho)
        },
        &RVector::from_column_slice(start),
        0.0,
        FRAC_PI_2,
        opts,
    )?;
    Ok((x.as_slice().to_vec(), rep))
}

pub const ROUNDING_TOLERANCE: f64 = 1e-3;
pub const MAX_PENALTY: f64 = 1e6;

/// Snap angles to exact `{0, pi/2}`; refuses if any is farther than
/// `tolerance` from both.
pub fn round_binary(theta: &[f64], tolerance: f64) -> Result<Vec<f64>> {
    theta
        .iter()
        .enumerate()
        .map(|(port, &t)| {
            if t.abs() <= tolerance {
                Ok(0.0)
            } else if (FRAC_PI_2 - t).abs() <= tolerance {
                Ok(FRAC_PI_2)
            } else {
                Err(Error::RoundingRefused {
                    port,
                    angle: t,
                    tolerance,
                })
            }
        })
        .collect()
}

/// Distance of the least binary angle from `{0, pi/2}`, maximized over ports.
pub fn binary_gap(theta: &[f64]) -> f64 {
    theta
        .iter()
        .map(|&t| t.abs().min((FRAC_PI_2 - t).abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyPath {
    pub theta: Vec<f64>,
    /// Penalty weight after the path (carried to the next call).
    pub rho: f64,
    pub steps: usize,
    /// True when the cap was hit and angles were rounded to nearest instead.
    pub forced: bool,
}

/// Penalty continuation: minimize at `rho`, grow it by `growth` until every
/// angle is within the rounding tolerance, then round. At the weight cap the
/// angles are rounded to the nearest binary value.
pub fn penalty_path(
    start: &[f64],
    problem: &SplittingProblem,
    rho: f64,
    growth: f64,
    opts: &QuasiNewtonOptions,
) -> Result<PenaltyPath> {
    let mut theta = start.to_vec();
    let mut rho = rho.min(MAX_PENALTY);
    let mut steps = 0;
    loop {
        let (t, _) = minimize_theta_ds(&theta, problem, rho, opts)?;
        theta = t;
        steps += 1;
        if let Ok(rounded) = round_binary(&theta, ROUNDING_TOLERANCE) {
            return Ok(PenaltyPath {
                theta: rounded,
                rho,
                steps,
                forced: false,
            });
        }
        if rho >= MAX_PENALTY {
            let rounded = theta
                .iter()
                .map(|&t| if t < FRAC_PI_2 / 2.0 { 0.0 } else { FRAC_PI_2 })
                .collect();
            return Ok(PenaltyPath {
                theta: rounded,
                rho,
                steps,
                forced: true,
            });
        }
        rho = (rho * growth).min(MAX_PENALTY);
    }
}
