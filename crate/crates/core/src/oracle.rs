//! Brute-force checks that share no code paths with the solvers they verify.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::sum_rate;
use crate::solver::{run_algorithm1, Freeze, SolverOptions};
use crate::wmmse::split_mrt_precoder;
use crate::{CVector, ChannelSet, Complex64, DesignVariables, PrecoderState, Protocol, RVector, Scenario};

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_gradient(f: impl Fn(&RVector) -> f64, point: &RVector, h: f64) -> Result<RVector> {
    let mut g = RVector::zeros(point.len());
    let mut x = point.clone();
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite("finite-difference evaluation"));
        }
        g[i] = (up - down) / (2.0 * h);
    }
    Ok(g)
}

/// `||a - b|| / max(||a||, 1e-12)`.
pub fn relative_error(analytic: &RVector, numeric: &RVector) -> f64 {
    (analytic - numeric).norm() / analytic.norm().max(1e-12)
}

/// Best binary splitting found by enumeration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExhaustiveDs {
    pub angles: Vec<f64>,
    pub sum_rate: f64,
    /// Number of binary configurations evaluated (`2^M`).
    pub evaluated: usize,
}

/// Largest port count accepted by [`exhaustive_ds_search`].
pub const MAX_EXHAUSTIVE_PORTS: usize = 12;

/// Enumerate every binary splitting, run the remaining alternating
/// optimization with that splitting held fixed from `start`, and keep the
/// best exact sum rate. Ties keep the lowest configuration index (bit `m`
/// set means port `m` routes backward).
pub fn exhaustive_ds_search(scenario: &Scenario, start: &DesignVariables, opts: &SolverOptions) -> Result<ExhaustiveDs> {
    let m = scenario.num_ports();
    if m > MAX_EXHAUSTIVE_PORTS {
        return Err(Error::config("num_ports", format!("exhaustive search supports at most {MAX_EXHAUSTIVE_PORTS} ports")));
    }
    let opts = SolverOptions {
        freeze: Freeze {
            splitting: true,
            ..opts.freeze
        },
        ..opts.clone()
    };
    let count = 1usize << m;
    let results: Vec<(Vec<f64>, f64)> = (0..count)
        .into_par_iter()
        .map(|mask| {
            let angles: Vec<f64> = (0..m).map(|p| if mask >> p & 1 == 1 { FRAC_PI_2 } else { 0.0 }).collect();
            let mut vars = start.clone();
            vars.splitting.angles = angles.clone();
            let (_, ch) = ChannelSet::for_state(scenario, Protocol::DirectionSwitching, &vars)?;
            vars.precoder = split_mrt_precoder(&ch, scenario.transmit_power())?;
            let sol = run_algorithm1(scenario, Protocol::DirectionSwitching, vars, &opts)?;
            Ok((angles, sol.rates.sum()))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.1 > results[best].1 {
            best = i;
        }
    }
    Ok(ExhaustiveDs {
        angles: results[best].0.clone(),
        sum_rate: results[best].1,
        evaluated: count,
    })
}

fn bilinear(h: &CVector, w: &CVector) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..h.len() {
        acc += h[i] * w[i];
    }
    acc
}

fn ts_rate_at(mu: f64, gain_fu: f64, gain_bu: f64, noise: f64) -> f64 {
    let slot = |share: f64, gain: f64| {
        if share <= 0.0 {
            0.0
        } else {
            share * (1.0 + gain / (share * noise)).log2()
        }
    };
    slot(mu, gain_fu) + slot(1.0 - mu, gain_bu)
}

/// Exact time-switching sum rate maximized over `grid` uniformly spaced
/// shares `mu_FU` in `[0, 1]`; returns `(mu, rate)`. Ties keep the smaller
/// share.
pub fn grid_max_mu(channels: &ChannelSet, precoder: &PrecoderState, noise: f64, grid: usize) -> Result<(f64, f64)> {
    if grid < 2 {
        return Err(Error::config("grid", "must be >= 2"));
    }
    let gain_fu = bilinear(&channels.h_eff[0], &precoder.w_fu).norm_sqr();
    let gain_bu = bilinear(&channels.h_eff[1], &precoder.w_bu).norm_sqr();
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..grid {
        let mu = i as f64 / (grid - 1) as f64;
        let r = ts_rate_at(mu, gain_fu, gain_bu, noise);
        if r > best.1 {
            best = (mu, r);
        }
    }
    Ok(best)
}

/// Outcome of [`rate_recompute_check`]. Residuals are relative and labeled
/// by the quantity they compare (e.g. `h_eff[BU][1]`, `rate[FU]`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCheck {
    pub passed: bool,
    pub residuals: Vec<(String, f64)>,
}

impl RateCheck {
    pub fn worst(&self) -> (&str, f64) {
        self.residuals
            .iter()
            .fold(("", 0.0), |acc, (k, v)| if *v > acc.1 { (k.as_str(), *v) } else { acc })
    }
}

/// Tolerance of [`rate_recompute_check`].
pub const RECOMPUTE_TOLERANCE: f64 = 1e-9;

struct Recomputed {
    h_eff: [Vec<Complex64>; 2],
    rates: [f64; 2],
}

/// Positions, channels and rates straight from the configuration, one
/// scalar at a time.
fn recompute(scenario: &Scenario, protocol: Protocol, vars: &DesignVariables) -> Recomputed {
    let c = &scenario.config;
    let lambda = c.speed_of_light / c.carrier_frequency;
    let k0 = 2.0 * PI / lambda;
    let kg = k0 * c.effective_refractive_index;
    let eta = lambda / (4.0 * PI);
    let (m_ports, n_pas) = (c.num_ports, c.num_pas_per_direction);
    let half = (m_ports as f64 - 1.0) / 2.0 * c.port_spacing;
    let ports: Vec<f64> = (1..=m_ports).map(|m| (m as f64 - (m_ports as f64 + 1.0) / 2.0) * c.port_spacing).collect();
    let users = [c.user_fu_position, c.user_bu_position];
    let ts = protocol == Protocol::TimeSwitching;

    let mut h_eff = [vec![Complex64::new(0.0, 0.0); m_ports], vec![Complex64::new(0.0, 0.0); m_ports]];
    for (u, pos) in users.iter().enumerate() {
        for forward in [true, false] {
            // Under TS each user only hears its own side: FU forward, BU backward.
            if ts && forward != (u == 0) {
                continue;
            }
            for n in 1..=n_pas {
                let (x, xi) = if forward {
                    (half + n as f64 * c.pa_spacing + vars.d_f[n - 1], vars.radiation.xi_f[n - 1])
                } else {
                    (-half - n as f64 * c.pa_spacing + vars.d_b[n - 1], vars.radiation.xi_b[n - 1])
                };
                let r = ((x - pos[0]).powi(2) + pos[1].powi(2)).sqrt();
                let h = Complex64::from_polar(eta / r, -k0 * r);
                for m in 0..m_ports {
                    let theta = vars.splitting.angles[m];
                    let amp = if ts {
                        1.0
                    } else if forward {
                        theta.cos()
                    } else {
                        theta.sin()
                    };
                    let g = Complex64::from_polar(amp, -kg * (x - ports[m]).abs());
                    h_eff[u][m] += g * xi * h;
                }
            }
        }
    }

    let noise = 10f64.powf(c.noise_power_dbm / 10.0);
    let ws = [&vars.precoder.w_fu, &vars.precoder.w_bu];
    let mut rates = [0.0; 2];
    for u in 0..2 {
        let mut own = Complex64::new(0.0, 0.0);
        let mut other = Complex64::new(0.0, 0.0);
        for m in 0..m_ports {
            own += h_eff[u][m] * ws[u][m];
            other += h_eff[u][m] * ws[1 - u][m];
        }
        rates[u] = if ts {
            let mu = if u == 0 { vars.time.mu_fu } else { vars.time.mu_bu };
            if mu <= 0.0 {
                0.0
            } else {
                mu * (1.0 + own.norm_sqr() / (mu * noise)).log2()
            }
        } else {
            (1.0 + own.norm_sqr() / (other.norm_sqr() + noise)).log2()
        };
    }
    Recomputed { h_eff, rates }
}

/// Compare the model module's channels for `vars` against an independent
/// scalar recomputation.
pub fn rate_recompute_check(scenario: &Scenario, protocol: Protocol, vars: &DesignVariables) -> Result<RateCheck> {
    let (_, channels) = ChannelSet::for_state(scenario, protocol, vars)?;
    Ok(compare_channels(scenario, protocol, vars, &channels))
}

/// As [`rate_recompute_check`] but against caller-supplied channels.
pub fn compare_channels(scenario: &Scenario, protocol: Protocol, vars: &DesignVariables, channels: &ChannelSet) -> RateCheck {
    let reference = recompute(scenario, protocol, vars);
    let rates = sum_rate(channels, &vars.precoder, &vars.time, scenario.noise_power());
    let mut residuals = Vec::new();
    for (u, name) in ["FU", "BU"].iter().enumerate() {
        let expected = &reference.h_eff[u];
        let scale = expected.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for (m, want) in expected.iter().enumerate() {
            let got = channels.h_eff[u].get(m).copied().unwrap_or(Complex64::new(f64::NAN, 0.0));
            residuals.push((format!("h_eff[{name}][{m}]"), (got - want).norm() / scale));
        }
        let got = if u == 0 { rates.fu } else { rates.bu };
        let want = reference.rates[u];
        residuals.push((format!("rate[{name}]"), (got - want).abs() / want.abs().max(1.0)));
    }
    let passed = residuals.iter().all(|(_, r)| *r <= RECOMPUTE_TOLERANCE);
    RateCheck { passed, residuals }
}
