//! Radiation and phase descent on the reduced objective, where the WMMSE
//! auxiliaries are re-optimized at every trial point.
//!
//! With optimal auxiliaries the surrogate equals `const - ln(2) R`, so the
//! reduced value is `-sum ln(1 + SINR)` (or its time-shared form) and, since
//! the auxiliaries minimize the surrogate, its gradient is the fixed-aux
//! surrogate gradient evaluated at the refreshed auxiliaries. Unlike a
//! fixed-aux step, whose minimizer stays within `O(1/SNR)` of the start at
//! high SNR, this makes full progress on the channel gains.

use super::phases::{PhaseProblem, PhaseVector};
use super::radiation::{pa_contributions, RadiationQuadratic};
use super::{armijo_descend, ArmijoOptions, DescentReport, PositiveSphere, Torus};
use crate::error::Result;
use crate::model::{c64, ChannelSet, Direction, PrecoderState, RadiationState, User};
use crate::wmmse::{scalar_aux, vector_aux, AuxPsds};
use crate::{CVector, RVector, TimeAllocation};

/// `ln(1 + SINR)` of `user` with effective channel `h`.
fn log_sinr(h: &CVector, precoder: &PrecoderState, user: User, noise: f64) -> f64 {
    let s = h.dot(precoder.w(user)).norm_sqr();
    let i = h.dot(precoder.w(user.other())).norm_sqr();
    (s / (i + noise)).ln_1p()
}

/// `mu ln(1 + ||h||^2 / sigma)` with `sigma = mu N0 / P`; zero for `mu = 0`.
fn log_snr_ts(h: &CVector, mu: f64, power: f64, noise: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    mu * (h.norm_squared() * power / (mu * noise)).ln_1p()
}

fn effective(channels: &ChannelSet, user: User, xi_f: &RVector, xi_b: &RVector) -> CVector {
    channels.one_way(user, Direction::Forward, xi_f) + channels.one_way(user, Direction::Backward, xi_b)
}

/// Reduced PS/DS radiation objective `-sum_k ln(1 + SINR_k)`.
pub fn reduced_radiation_value_psds(
    channels: &ChannelSet,
    precoder: &PrecoderState,
    noise: f64,
    xi_f: &RVector,
    xi_b: &RVector,
) -> f64 {
    -User::BOTH
        .iter()
        .map(|&u| log_sinr(&effective(channels, u, xi_f, xi_b), precoder, u, noise))
        .sum::<f64>()
}

/// Gradients `(d/dxi_f, d/dxi_b)` of the reduced PS/DS radiation objective.
pub fn reduced_radiation_grad_psds(
    channels: &ChannelSet,
    precoder: &PrecoderState,
    noise: f64,
    xi_f: &RVector,
    xi_b: &RVector,
) -> Result<(RVector, RVector)> {
    let aux = |u: User| scalar_aux(&effective(channels, u, xi_f, xi_b), precoder.w(u), precoder.w(u.other()), noise);
    let aux = AuxPsds {
        fu: aux(User::Fu)?,
        bu: aux(User::Bu)?,
    };
    let quad = RadiationQuadratic::build(channels, precoder, &aux, noise);
    Ok((quad.grad_f(xi_f, xi_b), quad.grad_b(xi_f, xi_b)))
}

/// Alternating reduced-objective descent on both directions, two sweeps.
pub fn minimize_radiation_psds_reduced(
    channels: &ChannelSet,
    precoder: &PrecoderState,
    noise: f64,
    start: &RadiationState,
    opts: &ArmijoOptions,
) -> Result<(RadiationState, Vec<DescentReport>)> {
    let mut state = start.clone();
    let mut reports = Vec::with_capacity(4);
    // A failed auxiliary refresh yields a NaN gradient, which the line search
    // reports as non-finite.
    let nan = |n: usize| RVector::from_element(n, f64::NAN);
    for _ in 0..2 {
        let xi_b = state.xi_b.clone();
        let (xf, rep) = armijo_descend(
            &PositiveSphere,
            |x: &RVector| reduced_radiation_value_psds(channels, precoder, noise, x, &xi_b),
            |x: &RVector| {
                reduced_radiation_grad_psds(channels, precoder, noise, x, &xi_b).map_or_else(|_| nan(x.len()), |g| g.0)
            },
            state.xi_f.clone(),
            opts,
        )?;
        state.xi_f = xf;
        reports.push(rep);
        let xi_f = state.xi_f.clone();
        let (xb, rep) = armijo_descend(
            &PositiveSphere,
            |x: &RVector| reduced_radiation_value_psds(channels, precoder, noise, &xi_f, x),
            |x: &RVector| {
                reduced_radiation_grad_psds(channels, precoder, noise, &xi_f, x).map_or_else(|_| nan(x.len()), |g| g.1)
            },
            state.xi_b.clone(),
            opts,
        )?;
        state.xi_b = xb;
        reports.push(rep);
    }
    Ok((state, reports))
}

/// Reduced single-user TS radiation objective `-mu ln(1 + P ||h||^2 / (mu N0))`
/// and its gradient.
pub fn reduced_radiation_ts(
    channels: &ChannelSet,
    user: User,
    mu: f64,
    power: f64,
    noise: f64,
    xi: &RVector,
) -> Result<(f64, RVector)> {
    let dir = user.home_direction();
    let h = channels.one_way(user, dir, xi);
    let value = -log_snr_ts(&h, mu, power, noise);
    if mu <= 0.0 {
        return Ok((value, RVector::zeros(xi.len())));
    }
    let aux = vector_aux(&h, mu * noise / power)?;
    let v = pa_contributions(channels, user, dir, &aux.t.conjugate());
    let s = v.iter().zip(xi.iter()).map(|(v, x)| v * *x).sum::<crate::Complex64>();
    let grad = v.map(|v| 2.0 * (v * s.conj()).re - 2.0 * v.re) * (mu * aux.kappa);
    Ok((value, grad))
}

/// Independent per-direction reduced descent for TS.
pub fn minimize_radiation_ts_reduced(
    channels: &ChannelSet,
    time: &TimeAllocation,
    power: f64,
    noise: f64,
    start: &RadiationState,
    opts: &ArmijoOptions,
) -> Result<(RadiationState, Vec<DescentReport>)> {
    let mut state = start.clone();
    let mut reports = Vec::with_capacity(2);
    for user in User::BOTH {
        let mu = time.get(user);
        let (x, rep) = armijo_descend(
            &PositiveSphere,
            |x: &RVector| -log_snr_ts(&channels.one_way(user, user.home_direction(), x), mu, power, noise),
            |x: &RVector| {
                reduced_radiation_ts(channels, user, mu, power, noise, x)
                    .map_or_else(|_| RVector::from_element(x.len(), f64::NAN), |r| r.1)
            },
            state.get(user.home_direction()).clone(),
            opts,
        )?;
        *state.get_mut(user.home_direction()) = x;
        reports.push(rep);
    }
    Ok((state, reports))
}

/// Objective driving the reduced phase descent.
#[derive(Debug, Clone, Copy)]
pub enum ReducedPhaseObjective<'a> {
    /// Simultaneous service: each block drives its user's `ln(1 + SINR)`.
    Psds { precoder: &'a PrecoderState, noise: f64 },
    /// Time switching: each block drives its user's time-shared log-SNR.
    Ts { time: &'a TimeAllocation, power: f64, noise: f64 },
}

impl ReducedPhaseObjective<'_> {
    fn value(&self, user: User, h: &CVector) -> f64 {
        match *self {
            Self::Psds { precoder, noise } => -log_sinr(h, precoder, user, noise),
            Self::Ts { time, power, noise } => -log_snr_ts(h, time.get(user), power, noise),
        }
    }

    /// Gradient w.r.t. the block phases; `k_mat` maps them to `h`.
    fn grad(&self, user: User, k_mat: &crate::CMatrix, h: &CVector) -> Result<CVector> {
        let kh = k_mat.adjoint();
        match *self {
            Self::Psds { precoder, noise } => {
                let x = scalar_aux(h, precoder.w(user), precoder.w(user.other()), noise)?;
                let inner = precoder.w_sum().conjugate() * h * c64(x.t.norm_sqr(), 0.0)
                    - precoder.w(user).conjugate() * x.t;
                Ok(kh * inner * c64(2.0 * x.kappa, 0.0))
            }
            Self::Ts { time, power, noise } => {
                let mu = time.get(user);
                if mu <= 0.0 {
                    return Ok(CVector::zeros(k_mat.ncols()));
                }
                let x = vector_aux(h, mu * noise / power)?;
                let k = kh * &x.t;
                let s = x.t.dotc(h);
                Ok(k * ((s - c64(1.0, 0.0)) * (2.0 * mu * x.kappa)))
            }
        }
    }
}

/// Reduced objective of the block owning `user`, as a function of its phases.
pub fn reduced_phase_value(problem: &PhaseProblem, objective: &ReducedPhaseObjective, user: User, block_phi: &CVector) -> f64 {
    let b = problem.blocks.iter().find(|b| b.user == user).expect("block per user");
    objective.value(user, &(&b.k_mat * block_phi))
}

/// Gradient of [`reduced_phase_value`] with respect to the block's phases
/// (Euclidean, treating real and imaginary parts as coordinates).
pub fn reduced_phase_gradient(problem: &PhaseProblem, objective: &ReducedPhaseObjective, user: User, block_phi: &CVector) -> Result<CVector> {
    let b = problem.blocks.iter().find(|b| b.user == user).expect("block per user");
    objective.grad(user, &b.k_mat, &(&b.k_mat * block_phi))
}

/// A PA whose column in `k_mat` is this small relative to its unit-amplitude
/// column does not radiate.
const DORMANT_RATIO: f64 = 1e-9;

/// Per-block reduced descent on the torus (blocks stay independent).
///
/// Non-radiating PAs do not affect the objective, so descent leaves their
/// phases wherever they are; a later radiation step then sees them as
/// misaligned and keeps them off. After descent each such phase is pointed
/// along the steepest-descent direction it would have at unit amplitude.
/// The objective value is unchanged by construction.
pub fn minimize_phases_reduced(
    problem: &PhaseProblem,
    objective: &ReducedPhaseObjective,
    start: PhaseVector,
    opts: &ArmijoOptions,
) -> Result<(PhaseVector, Vec<DescentReport>)> {
    let mut phi = start;
    let mut reports = Vec::with_capacity(problem.blocks.len());
    let mut offset = 0;
    for b in &problem.blocks {
        let len = b.directions.len() * problem.num_pas;
        let (out, rep) = armijo_descend(
            &Torus,
            |p: &CVector| objective.value(b.user, &(&b.k_mat * p)),
            |p: &CVector| {
                objective
                    .grad(b.user, &b.k_mat, &(&b.k_mat * p))
                    .unwrap_or_else(|_| CVector::from_element(len, c64(f64::NAN, 0.0)))
            },
            phi.rows(offset, len).into_owned(),
            opts,
        )?;
        let mut out = out;
        let dormant: Vec<usize> = (0..len)
            .filter(|&n| b.k_mat.column(n).norm() <= DORMANT_RATIO * b.probe.column(n).norm())
            .collect();
        if !dormant.is_empty() {
            if let Ok(g) = objective.grad(b.user, &b.probe, &(&b.k_mat * &out)) {
                for n in dormant {
                    let mag = g[n].norm();
                    if mag > 0.0 && mag.is_finite() {
                        out[n] = -g[n] / mag;
                    }
                }
            }
        }
        phi.rows_mut(offset, len).copy_from(&out);
        reports.push(rep);
        offset += len;
    }
    Ok((phi, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{current_phases, unit};
    use crate::model::{sum_rate, Protocol};
    use crate::oracle::{finite_diff_gradient, relative_error};
    use crate::wmmse::{split_mrt_precoder, update_aux_psds, update_aux_ts};
    use crate::{DesignVariables, Scenario, SystemConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, protocol: Protocol) -> (Scenario, DesignVariables, crate::Geometry, ChannelSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Scenario::new(SystemConfig {
            num_ports: 3,
            num_pas_per_direction: 5,
            ..SystemConfig::default()
        })
        .unwrap();
        let mut v = DesignVariables::nominal(&s);
        v.splitting.angles = (0..3).map(|_| rng.random_range(0.1..1.4)).collect();
        v.radiation.xi_f = RVector::from_fn(5, |_, _| rng.random_range(0.1..1.0)).normalize();
        v.radiation.xi_b = RVector::from_fn(5, |_, _| rng.random_range(0.1..1.0)).normalize();
        v.d_f = (0..5).map(|_| rng.random_range(-0.01..0.01)).collect();
        v.time = TimeAllocation::new(rng.random_range(0.2..0.8));
        let (g, ch) = ChannelSet::for_state(&s, protocol, &v).unwrap();
        v.precoder = split_mrt_precoder(&ch, s.transmit_power()).unwrap();
        v.precoder.w_bu *= c64(0.3, 0.4);
        (s, v, g, ch)
    }

    #[test]
    fn psds_radiation_value_is_log_rate() {
        let (s, v, _, ch) = setup(1, Protocol::PowerSplitting);
        let f = reduced_radiation_value_psds(&ch, &v.precoder, s.noise_power(), &v.radiation.xi_f, &v.radiation.xi_b);
        let r = sum_rate(&ch, &v.precoder, &v.time, s.noise_power()).sum();
        assert!((f + r * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn psds_radiation_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let (s, v, _, ch) = setup(seed, Protocol::PowerSplitting);
            let n0 = s.noise_power();
            let (gf, gb) = reduced_radiation_grad_psds(&ch, &v.precoder, n0, &v.radiation.xi_f, &v.radiation.xi_b).unwrap();
            let xb = v.radiation.xi_b.clone();
            let nf = finite_diff_gradient(|x| reduced_radiation_value_psds(&ch, &v.precoder, n0, x, &xb), &v.radiation.xi_f, 1e-6).unwrap();
            assert!(relative_error(&gf, &nf) < 1e-5, "seed {seed}: {}", relative_error(&gf, &nf));
            let xf = v.radiation.xi_f.clone();
            let nb = finite_diff_gradient(|x| reduced_radiation_value_psds(&ch, &v.precoder, n0, &xf, x), &v.radiation.xi_b, 1e-6).unwrap();
            assert!(relative_error(&gb, &nb) < 1e-5, "seed {seed}: {}", relative_error(&gb, &nb));
        }
    }

    #[test]
    fn ts_radiation_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let (s, v, _, ch) = setup(seed, Protocol::TimeSwitching);
            let (p, n0) = (s.transmit_power(), s.noise_power());
            for user in User::BOTH {
                let mu = v.time.get(user);
                let xi = v.radiation.get(user.home_direction());
                let (_, g) = reduced_radiation_ts(&ch, user, mu, p, n0, xi).unwrap();
                let num = finite_diff_gradient(|x| reduced_radiation_ts(&ch, user, mu, p, n0, x).unwrap().0, xi, 1e-6).unwrap();
                assert!(relative_error(&g, &num) < 1e-5, "seed {seed}");
            }
        }
    }

    /// Complex gradient via finite differences on the real and imaginary
    /// parts of each phase entry.
    fn complex_fd(f: impl Fn(&CVector) -> f64, p: &CVector) -> RVector {
        let n = p.len();
        let flat = RVector::from_fn(2 * n, |i, _| if i < n { p[i].re } else { p[i - n].im });
        let unflat = |x: &RVector| CVector::from_fn(n, |i, _| c64(x[i], x[i + n]));
        finite_diff_gradient(|x| f(&unflat(x)), &flat, 1e-6).unwrap()
    }

    fn flatten(g: &CVector) -> RVector {
        let n = g.len();
        RVector::from_fn(2 * n, |i, _| if i < n { g[i].re } else { g[i - n].im })
    }

    #[test]
    fn phase_gradients_match_finite_differences() {
        for seed in 0..20 {
            for protocol in [Protocol::PowerSplitting, Protocol::TimeSwitching] {
                let (s, v, g, ch) = setup(seed, protocol);
                let (p, n0) = (s.transmit_power(), s.noise_power());
                let problem = if protocol == Protocol::TimeSwitching {
                    let aux = update_aux_ts(&ch, &v.time, p, n0, None).unwrap();
                    PhaseProblem::ts(&s, &g, &ch, &v, &aux)
                } else {
                    let aux = update_aux_psds(&ch, &v.precoder, n0).unwrap();
                    PhaseProblem::psds(&s, &g, &ch, &v, &aux)
                };
                let objective = if protocol == Protocol::TimeSwitching {
                    ReducedPhaseObjective::Ts { time: &v.time, power: p, noise: n0 }
                } else {
                    ReducedPhaseObjective::Psds { precoder: &v.precoder, noise: n0 }
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
                for b in &problem.blocks {
                    let len = b.directions.len() * problem.num_pas;
                    let phi = CVector::from_fn(len, |_, _| unit(rng.random_range(-3.0..3.0)));
                    let h = &b.k_mat * &phi;
                    let analytic = flatten(&objective.grad(b.user, &b.k_mat, &h).unwrap());
                    let numeric = complex_fd(|q| objective.value(b.user, &(&b.k_mat * q)), &phi);
                    let err = relative_error(&analytic, &numeric);
                    assert!(err < 1e-5, "seed {seed} {protocol}: {err}");
                }
            }
        }
    }

    #[test]
    fn reduced_descent_improves_rates() {
        for seed in 0..5 {
            let (s, v, g, ch) = setup(seed, Protocol::PowerSplitting);
            let n0 = s.noise_power();
            let opts = ArmijoOptions::default();
            let before = reduced_radiation_value_psds(&ch, &v.precoder, n0, &v.radiation.xi_f, &v.radiation.xi_b);
            let (rad, _) = minimize_radiation_psds_reduced(&ch, &v.precoder, n0, &v.radiation, &opts).unwrap();
            let after = reduced_radiation_value_psds(&ch, &v.precoder, n0, &rad.xi_f, &rad.xi_b);
            assert!(after <= before);
            assert!((rad.xi_f.norm() - 1.0).abs() < 1e-12 && rad.xi_f.min() >= 0.0);

            let aux = update_aux_psds(&ch, &v.precoder, n0).unwrap();
            let problem = PhaseProblem::psds(&s, &g, &ch, &v, &aux);
            let start = current_phases(&problem, &s, &g, &ch);
            let objective = ReducedPhaseObjective::Psds { precoder: &v.precoder, noise: n0 };
            let (phi, reps) = minimize_phases_reduced(&problem, &objective, start.clone(), &opts).unwrap();
            for rep in &reps {
                assert!(rep.final_value <= rep.initial_value);
            }
            assert!(crate::manifold::torus_residual(&phi) < 1e-12);
        }
    }

    #[test]
    fn ts_phase_blocks_are_independent() {
        let (s, v, g, ch) = setup(3, Protocol::TimeSwitching);
        let (p, n0) = (s.transmit_power(), s.noise_power());
        let aux = update_aux_ts(&ch, &v.time, p, n0, None).unwrap();
        let problem = PhaseProblem::ts(&s, &g, &ch, &v, &aux);
        let start = current_phases(&problem, &s, &g, &ch);
        let objective = ReducedPhaseObjective::Ts { time: &v.time, power: p, noise: n0 };
        let (a, _) = minimize_phases_reduced(&problem, &objective, start.clone(), &ArmijoOptions::default()).unwrap();
        let mut other = start.clone();
        let n = problem.num_pas;
        for i in n..2 * n {
            other[i] = unit(0.3 * i as f64);
        }
        let (b, _) = minimize_phases_reduced(&problem, &objective, other, &ArmijoOptions::default()).unwrap();
        assert_eq!(a.rows(0, n), b.rows(0, n));
    }

    #[test]
    fn dormant_pas_are_steered_without_changing_the_value() {
        let (s, mut v, g, mut ch) = setup(4, Protocol::PowerSplitting);
        let n0 = s.noise_power();
        v.radiation.xi_f[1] = 0.0;
        v.radiation.xi_f[3] = 0.0;
        v.radiation.xi_f = v.radiation.xi_f.normalize();
        ch.refresh_effective(&v.radiation);
        let aux = update_aux_psds(&ch, &v.precoder, n0).unwrap();
        let problem = PhaseProblem::psds(&s, &g, &ch, &v, &aux);
        let start = current_phases(&problem, &s, &g, &ch);
        let objective = ReducedPhaseObjective::Psds { precoder: &v.precoder, noise: n0 };
        let opts = ArmijoOptions { max_iterations: 0, ..ArmijoOptions::default() };
        let (phi, _) = minimize_phases_reduced(&problem, &objective, start.clone(), &opts).unwrap();
        let len = 2 * problem.num_pas;
        for (i, b) in problem.blocks.iter().enumerate() {
            let (p0, p1) = (start.rows(i * len, len).into_owned(), phi.rows(i * len, len).into_owned());
            let before = reduced_phase_value(&problem, &objective, b.user, &p0);
            assert!((reduced_phase_value(&problem, &objective, b.user, &p1) - before).abs() <= 1e-12 * before.abs());
            let probe = objective.grad(b.user, &b.probe, &(&b.k_mat * &p0)).unwrap();
            for n in 0..len {
                if n == 1 || n == 3 {
                    assert!((p1[n] + probe[n] / probe[n].norm()).norm() < 1e-12);
                } else {
                    assert_eq!(p1[n], p0[n]);
                }
            }
        }
    }
}
