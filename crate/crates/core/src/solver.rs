//! Alternating-optimization drivers.
//!
//! PS/DS: `{W, xi, (Phi, d), theta}` per outer iteration. TS: `{mu, xi,
//! (Phi, d)}` with MRT precoders recomputed whenever the channels change.
//! Auxiliaries are refreshed before every subproblem, and each subproblem is
//! accepted only if the exact sum rate does not drop; otherwise its variables
//! are restored. This makes the reported trace exactly non-decreasing.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{
    current_phases, minimize_phases_reduced, minimize_radiation_psds_reduced, minimize_radiation_ts_reduced,
    ArmijoOptions, PhaseProblem, ReducedPhaseObjective,
};
use crate::model::{build_geometry, sum_rate, Geometry, UserRates};
use crate::placement::{fit_displacement_psds, fit_displacement_ts};
use crate::splitting::{
    minimize_theta_ds, minimize_theta_ps, penalty_path, round_binary, QuasiNewtonOptions, SplittingProblem, MAX_PENALTY,
    ROUNDING_TOLERANCE,
};
use crate::wmmse::{
    mrt_precoder, split_mrt_precoder, surrogate_objective_psds, surrogate_objective_ts, update_aux_psds,
    update_aux_ts, update_precoder_psds, AuxPsds, AuxTs,
};
use crate::{ChannelSet, DesignVariables, Direction, Protocol, Scenario, TimeAllocation, User};

/// Coefficients of the time-share quadratic `A mu^2 + B mu + C` (in `mu_FU`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuQuadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl MuQuadratic {
    /// With `e_k = |1 - t^H h|^2` and `c_k = N0 ||t||^2 / P`, the surrogate
    /// is `sum_k mu_k (kappa_k (e_k + mu_k c_k) - ln kappa_k)` and
    /// `mu_BU = 1 - mu_FU`.
    pub fn build(channels: &ChannelSet, aux: &AuxTs, power: f64, noise: f64) -> Self {
        let parts = User::BOTH.map(|u| {
            let a = aux.get(u);
            let e = (crate::Complex64::new(1.0, 0.0) - a.t.dotc(channels.h_eff(u))).norm_sqr();
            let c = noise * a.t.norm_squared() / power;
            (a.kappa, e, c)
        });
        let [(kf, ef, cf), (kb, eb, cb)] = parts;
        Self {
            a: kf * cf + kb * cb,
            b: (kf * ef - kf.ln()) - (kb * eb - kb.ln()) - 2.0 * kb * cb,
            c: kb * eb - kb.ln() + kb * cb,
        }
    }

    pub fn value(&self, mu: f64) -> f64 {
        (self.a * mu + self.b) * mu + self.c
    }

    pub fn argmin(&self) -> Result<f64> {
        if !(self.a > 0.0) {
            return Err(Error::Internal(format!("time-share quadratic has curvature {}", self.a)));
        }
        Ok((-self.b / (2.0 * self.a)).clamp(0.0, 1.0))
    }
}

/// Closed-form time allocation for the current auxiliaries.
pub fn update_mu(channels: &ChannelSet, aux: &AuxTs, power: f64, noise: f64) -> Result<TimeAllocation> {
    Ok(TimeAllocation::new(MuQuadratic::build(channels, aux, power, noise).argmin()?))
}

/// Which blocks are held fixed (used by the baselines).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Freeze {
    pub splitting: bool,
    /// Radiation amplitudes and PA positions.
    pub pinching: bool,
    pub precoder: bool,
}

/// Inner WMMSE loop of the precoder block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecoderOptions {
    pub max_iterations: usize,
    /// Relative sum-rate change that ends the inner loop.
    pub tolerance: f64,
}

impl Default for PrecoderOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolverOptions {
    pub armijo: ArmijoOptions,
    pub quasi_newton: QuasiNewtonOptions,
    pub precoder: PrecoderOptions,
    pub freeze: Freeze,
    /// Check the rate identity after every auxiliary update and the
    /// constraints after every subproblem; results land in
    /// [`Solution::audit`].
    pub audit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub rate_fu: f64,
    pub rate_bu: f64,
    pub sum_rate: f64,
    /// WMMSE surrogate at auxiliaries refreshed for the recorded state.
    pub surrogate: f64,
    pub mu_fu: f64,
    /// DS penalty weight carried into the next iteration.
    pub rho: Option<f64>,
    /// Subproblems rejected in this iteration.
    pub reverted: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
}

impl ConvergenceTrace {
    pub fn sum_rates(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sum_rate).collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].sum_rate >= w[0].sum_rate)
    }

    /// Outer iterations executed.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration)
    }

    /// First iteration whose relative change from its predecessor is below
    /// `tolerance`.
    pub fn first_converged(&self, tolerance: f64) -> Option<usize> {
        self.records
            .windows(2)
            .find(|w| relative_change(w[0].sum_rate, w[1].sum_rate) < tolerance)
            .map(|w| w[1].iteration)
    }
}

fn relative_change(old: f64, new: f64) -> f64 {
    (new - old).abs() / old.abs().max(1e-12)
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub vars: DesignVariables,
    pub rates: UserRates,
    pub trace: ConvergenceTrace,
    pub audit: Option<Audit>,
}

/// Worst invariant violations observed during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Audit {
    pub aux_updates: usize,
    /// Largest `|sum_k log2 kappa_k - R_sum|` right after an auxiliary
    /// update (time-share weighted under TS).
    pub max_rate_identity_gap: f64,
    pub states_checked: usize,
    /// Worst constraint residual over all intermediate states. Binarity of a
    /// DS splitting is excluded: relaxed iterates are allowed there.
    pub max_constraint_residual: f64,
}

/// Starting point: `theta = pi/4`, uniform radiation, nominal positions,
/// `mu_FU = 1/2` and MRT precoders (split budget for PS/DS, full for TS).
pub fn initial_state(scenario: &Scenario, protocol: Protocol) -> Result<DesignVariables> {
    let mut vars = DesignVariables::nominal(scenario);
    let (_, ch) = ChannelSet::for_state(scenario, protocol, &vars)?;
    vars.precoder = match protocol {
        Protocol::TimeSwitching => mrt_precoder(&ch, scenario.transmit_power())?,
        _ => split_mrt_precoder(&ch, scenario.transmit_power())?,
    };
    Ok(vars)
}

struct Snapshot {
    vars: DesignVariables,
    geometry: Geometry,
    channels: ChannelSet,
    aux_ts: Option<AuxTs>,
    rates: UserRates,
}

struct Driver<'a> {
    scenario: &'a Scenario,
    protocol: Protocol,
    opts: &'a SolverOptions,
    vars: DesignVariables,
    geometry: Geometry,
    channels: ChannelSet,
    aux_ts: Option<AuxTs>,
    rates: UserRates,
    rho: f64,
    audit: Option<Audit>,
}

impl<'a> Driver<'a> {
    fn new(scenario: &'a Scenario, protocol: Protocol, vars: DesignVariables, opts: &'a SolverOptions) -> Result<Self> {
        let (geometry, channels) = ChannelSet::for_state(scenario, protocol, &vars)?;
        let rates = sum_rate(&channels, &vars.precoder, &vars.time, scenario.noise_power());
        Ok(Self {
            scenario,
            protocol,
            opts,
            vars,
            geometry,
            channels,
            aux_ts: None,
            rates,
            rho: scenario.config.penalty_init,
            audit: opts.audit.then(Audit::default),
        })
    }

    fn audit_aux_psds(&mut self, aux: &AuxPsds) {
        if self.audit.is_some() {
            let rate = sum_rate(&self.channels, &self.vars.precoder, &self.vars.time, self.noise()).sum();
            let Some(a) = self.audit.as_mut() else { return };
            a.aux_updates += 1;
            a.max_rate_identity_gap = a.max_rate_identity_gap.max((aux.log_weight_sum() - rate).abs());
        }
    }

    fn audit_state(&mut self) {
        if self.audit.is_some() {
            let mut r = constraint_residuals(self.scenario, self.protocol, &self.vars);
            r.splitting_binary = 0.0;
            let Some(a) = self.audit.as_mut() else { return };
            a.states_checked += 1;
            a.max_constraint_residual = a.max_constraint_residual.max(r.worst());
        }
    }

    fn power(&self) -> f64 {
        self.scenario.transmit_power()
    }

    fn noise(&self) -> f64 {
        self.scenario.noise_power()
    }

    fn exact_rates(&self) -> UserRates {
        sum_rate(&self.channels, &self.vars.precoder, &self.vars.time, self.noise())
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            vars: self.vars.clone(),
            geometry: self.geometry.clone(),
            channels: self.channels.clone(),
            aux_ts: self.aux_ts.clone(),
            rates: self.rates,
        }
    }

    fn restore(&mut self, s: Snapshot) {
        self.vars = s.vars;
        self.geometry = s.geometry;
        self.channels = s.channels;
        self.aux_ts = s.aux_ts;
        self.rates = s.rates;
    }

    /// Run one subproblem; keep it only if it succeeded and the exact sum
    /// rate did not drop. Returns whether the step was reverted.
    fn try_step(&mut self, name: &str, step: impl FnOnce(&mut Self) -> Result<()>) -> bool {
        let before = self.snapshot();
        let outcome = step(self);
        let rates = self.exact_rates();
        let rejected = match outcome {
            Err(e) => {
                log::warn!("{name} subproblem failed: {e}; reverting");
                true
            }
            Ok(()) if !rates.sum().is_finite() || rates.sum() < before.rates.sum() => {
                log::debug!("{name} subproblem lowered the sum rate ({} -> {}); reverting", before.rates.sum(), rates.sum());
                true
            }
            Ok(()) => false,
        };
        if rejected {
            self.restore(before);
        } else {
            self.rates = rates;
        }
        self.audit_state();
        rejected
    }

    /// Like [`Self::try_step`], but only a failure reverts: used to leave an
    /// infeasible (relaxed) state, whose rate is no benchmark.
    fn force_step(&mut self, name: &str, step: impl FnOnce(&mut Self) -> Result<()>) -> bool {
        let before = self.snapshot();
        let outcome = step(self).and_then(|()| {
            let rates = self.exact_rates();
            if rates.sum().is_finite() {
                Ok(rates)
            } else {
                Err(Error::NonFinite("sum rate"))
            }
        });
        let rejected = match outcome {
            Ok(rates) => {
                self.rates = rates;
                false
            }
            Err(e) => {
                log::warn!("{name} subproblem failed: {e}; reverting");
                self.restore(before);
                true
            }
        };
        self.audit_state();
        rejected
    }

    fn rebuild(&mut self) -> Result<()> {
        self.geometry = build_geometry(self.scenario, &self.vars.d_f, &self.vars.d_b)?;
        self.channels = ChannelSet::build(self.scenario, self.protocol, &self.geometry, &self.vars)?;
        if self.protocol == Protocol::TimeSwitching {
            self.vars.precoder = mrt_precoder(&self.channels, self.power())?;
        }
        Ok(())
    }

    fn ts_aux(&mut self) -> Result<AuxTs> {
        let aux = update_aux_ts(&self.channels, &self.vars.time, self.power(), self.noise(), self.aux_ts.as_ref())?;
        self.aux_ts = Some(aux.clone());
        if self.audit.is_some() {
            let rate = self.exact_rates().sum();
            let gap = (aux.log_weight_sum(&self.vars.time) - rate).abs();
            if let Some(a) = self.audit.as_mut() {
                a.aux_updates += 1;
                a.max_rate_identity_gap = a.max_rate_identity_gap.max(gap);
            }
        }
        Ok(aux)
    }

    fn surrogate(&mut self) -> f64 {
        match self.protocol {
            Protocol::TimeSwitching => match self.ts_aux() {
                Ok(aux) => surrogate_objective_ts(&self.channels, &aux, &self.vars.time, self.power(), self.noise()),
                Err(_) => f64::NAN,
            },
            _ => match update_aux_psds(&self.channels, &self.vars.precoder, self.noise()) {
                Ok(aux) => {
                    self.audit_aux_psds(&aux);
                    surrogate_objective_psds(&self.channels, &self.vars.precoder, &aux, self.noise())
                }
                Err(_) => f64::NAN,
            },
        }
    }

    fn record(&mut self, iteration: usize, reverted: usize) -> TraceRecord {
        TraceRecord {
            iteration,
            rate_fu: self.rates.fu,
            rate_bu: self.rates.bu,
            sum_rate: self.rates.sum(),
            surrogate: self.surrogate(),
            mu_fu: self.vars.time.mu_fu,
            rho: (self.protocol == Protocol::DirectionSwitching).then_some(self.rho),
            reverted,
        }
    }

    /// Inner WMMSE iterations (aux, W) until the rate settles. A single
    /// update creeps away from the symmetric saddle that the equal-power
    /// start sits on when the users' channels are nearly parallel.
    fn precoder_step(&mut self) -> Result<()> {
        let opts = &self.opts.precoder;
        let mut rate = self.exact_rates().sum();
        for _ in 0..opts.max_iterations {
            let aux = update_aux_psds(&self.channels, &self.vars.precoder, self.noise())?;
            self.audit_aux_psds(&aux);
            self.vars.precoder = update_precoder_psds(&self.channels, &aux, self.power())?;
            let next = self.exact_rates().sum();
            let settled = relative_change(rate, next) < opts.tolerance;
            rate = next;
            if settled {
                break;
            }
        }
        Ok(())
    }

    /// Radiation amplitudes by descent on the reduced objective.
    fn radiation_step(&mut self) -> Result<()> {
        let radiation = match self.protocol {
            Protocol::TimeSwitching => {
                let (p, n0) = (self.power(), self.noise());
                minimize_radiation_ts_reduced(&self.channels, &self.vars.time, p, n0, &self.vars.radiation, &self.opts.armijo)?.0
            }
            _ => {
                let n0 = self.noise();
                minimize_radiation_psds_reduced(&self.channels, &self.vars.precoder, n0, &self.vars.radiation, &self.opts.armijo)?.0
            }
        };
        self.vars.radiation = radiation;
        self.channels.refresh_effective(&self.vars.radiation);
        if self.protocol == Protocol::TimeSwitching {
            self.vars.precoder = mrt_precoder(&self.channels, self.power())?;
        }
        Ok(())
    }

    /// Phase targets by reduced descent, then the displacement fit.
    fn placement_step(&mut self) -> Result<()> {
        let ts = self.protocol == Protocol::TimeSwitching;
        let problem = if ts {
            let aux = self.ts_aux()?;
            PhaseProblem::ts(self.scenario, &self.geometry, &self.channels, &self.vars, &aux)
        } else {
            let aux = update_aux_psds(&self.channels, &self.vars.precoder, self.noise())?;
            self.audit_aux_psds(&aux);
            PhaseProblem::psds(self.scenario, &self.geometry, &self.channels, &self.vars, &aux)
        };
        let objective = if ts {
            ReducedPhaseObjective::Ts {
                time: &self.vars.time,
                power: self.power(),
                noise: self.noise(),
            }
        } else {
            ReducedPhaseObjective::Psds {
                precoder: &self.vars.precoder,
                noise: self.noise(),
            }
        };
        let start = current_phases(&problem, self.scenario, &self.geometry, &self.channels);
        let (phi, _) = minimize_phases_reduced(&problem, &objective, start, &self.opts.armijo)?;
        let targets = problem.targets(&phi);
        let (d_f, d_b) = if ts {
            fit_displacement_ts(self.scenario, &self.geometry, &targets)
        } else {
            fit_displacement_psds(self.scenario, &self.geometry, &targets)
        };
        self.vars.d_f = d_f;
        self.vars.d_b = d_b;
        self.rebuild()?;
        self.adapt_precoder()
    }

    /// Re-optimize the PS/DS precoder after the channels changed. Near
    /// zero-forcing, a stale precoder turns any channel change into
    /// interference leakage, so a channel update is judged together with the
    /// precoder that matches it.
    fn adapt_precoder(&mut self) -> Result<()> {
        if self.protocol == Protocol::TimeSwitching || self.opts.freeze.precoder {
            return Ok(());
        }
        self.precoder_step()
    }

    fn splitting_problem(&mut self) -> Result<SplittingProblem> {
        let aux = update_aux_psds(&self.channels, &self.vars.precoder, self.noise())?;
        self.audit_aux_psds(&aux);
        Ok(SplittingProblem::build(
            self.scenario,
            &self.geometry,
            &self.channels,
            &self.vars.radiation,
            &self.vars.precoder,
            &aux,
        ))
    }

    fn splitting_step_ps(&mut self) -> Result<()> {
        let problem = self.splitting_problem()?;
        let (theta, _) = minimize_theta_ps(&self.vars.splitting.angles, &problem, &self.opts.quasi_newton)?;
        self.vars.splitting.angles = theta;
        self.rebuild()?;
        self.adapt_precoder()
    }

    fn splitting_step_ds(&mut self) -> Result<()> {
        let problem = self.splitting_problem()?;
        let growth = self.scenario.config.penalty_growth;
        let path = penalty_path(&self.vars.splitting.angles, &problem, self.rho, growth, &self.opts.quasi_newton)?;
        self.vars.splitting.angles = path.theta;
        self.rebuild()?;
        self.adapt_precoder()
    }

    /// Penalty continuation from a relaxed DS splitting to a binary one,
    /// re-adapting the precoder after every round. With the precoder held
    /// fixed, every port tends to break toward the same direction and one
    /// user ends up unserved; adapting it lets the ports divide the users.
    fn binarize_ds(&mut self) -> Result<()> {
        let growth = self.scenario.config.penalty_growth;
        let mut rho = self.rho.min(MAX_PENALTY);
        loop {
            let problem = self.splitting_problem()?;
            let (theta, _) = minimize_theta_ds(&self.vars.splitting.angles, &problem, rho, &self.opts.quasi_newton)?;
            let binary = round_binary(&theta, ROUNDING_TOLERANCE).ok().or_else(|| {
                (rho >= MAX_PENALTY).then(|| theta.iter().map(|&t| if t < FRAC_PI_4 { 0.0 } else { FRAC_PI_2 }).collect())
            });
            let done = binary.is_some();
            self.vars.splitting.angles = binary.unwrap_or(theta);
            self.rebuild()?;
            self.adapt_precoder()?;
            if done {
                return Ok(());
            }
            rho = (rho * growth).min(MAX_PENALTY);
        }
    }

    /// Alternate the TS auxiliaries and the closed-form share until the
    /// share settles, so it sits at the exact-rate argmax for the current
    /// channels.
    fn time_step(&mut self) -> Result<()> {
        for _ in 0..100 {
            let aux = self.ts_aux()?;
            let next = update_mu(&self.channels, &aux, self.power(), self.noise())?;
            let delta = (next.mu_fu - self.vars.time.mu_fu).abs();
            self.vars.time = next;
            if delta < 1e-12 {
                break;
            }
        }
        Ok(())
    }

    /// One outer iteration; returns the number of rejected subproblems.
    fn outer_iteration(&mut self, update_splitting: bool) -> usize {
        let freeze = self.opts.freeze;
        let mut reverted = 0;
        let mut step = |d: &mut Self, name: &str, f: fn(&mut Self) -> Result<()>| {
            reverted += d.try_step(name, f) as usize;
        };
        match self.protocol {
            Protocol::TimeSwitching => {
                step(self, "time-share", Self::time_step);
                if !freeze.pinching {
                    step(self, "radiation", Self::radiation_step);
                    step(self, "placement", Self::placement_step);
                }
            }
            Protocol::PowerSplitting | Protocol::DirectionSwitching => {
                if !freeze.precoder {
                    step(self, "precoder", Self::precoder_step);
                }
                if !freeze.pinching {
                    step(self, "radiation", Self::radiation_step);
                    step(self, "placement", Self::placement_step);
                }
                if update_splitting && !freeze.splitting {
                    if self.protocol == Protocol::PowerSplitting {
                        step(self, "splitting", Self::splitting_step_ps);
                    } else {
                        if self.vars.splitting.is_binary() {
                            step(self, "splitting", Self::splitting_step_ds);
                        } else {
                            reverted += self.force_step("binarization", Self::binarize_ds) as usize;
                        }
                        let growth = self.scenario.config.penalty_growth;
                        self.rho = (self.rho * growth).min(MAX_PENALTY);
                    }
                }
            }
        }
        reverted
    }

    fn run(mut self) -> Result<Solution> {
        let tolerance = self.scenario.config.convergence_tolerance;
        let max_iterations = self.scenario.config.max_iterations;
        let ds = self.protocol == Protocol::DirectionSwitching && !self.opts.freeze.splitting;
        let mut trace = ConvergenceTrace::default();
        self.audit_state();
        // A relaxed DS start is not a feasible DS point, so its trace begins
        // once the splitting is binary.
        if !ds || self.vars.splitting.is_binary() {
            let rec = self.record(0, 0);
            trace.records.push(rec);
        }
        for iteration in 1..=max_iterations {
            let reverted = self.outer_iteration(true);
            if ds && !self.vars.splitting.is_binary() {
                // The first penalty path was rejected or failed; force a
                // feasible point before recording anything.
                let problem = self.splitting_problem()?;
                let growth = self.scenario.config.penalty_growth;
                let path = penalty_path(&self.vars.splitting.angles, &problem, self.rho, growth, &self.opts.quasi_newton)?;
                self.vars.splitting.angles = path.theta;
                self.rebuild()?;
                self.rates = self.exact_rates();
            }
            let rec = self.record(iteration, reverted);
            let prev = trace.records.last().map(|r| r.sum_rate);
            trace.records.push(rec);
            if let Some(prev) = prev {
                if relative_change(prev, self.rates.sum()) < tolerance {
                    trace.converged = true;
                    break;
                }
            }
        }
        if ds {
            // Final pass with the binary splitting held fixed.
            let reverted = self.outer_iteration(false);
            let next = trace.iterations() + 1;
            let rec = self.record(next, reverted);
            trace.records.push(rec);
        }
        debug_assert!(trace.is_monotone());
        Ok(Solution {
            rates: self.rates,
            vars: self.vars,
            trace,
            audit: self.audit,
        })
    }
}

/// PS/DS alternating optimization from `initial`.
pub fn run_algorithm1(
    scenario: &Scenario,
    protocol: Protocol,
    initial: DesignVariables,
    opts: &SolverOptions,
) -> Result<Solution> {
    if protocol == Protocol::TimeSwitching {
        return Err(Error::Unsupported("the PS/DS driver does not handle time switching".into()));
    }
    Driver::new(scenario, protocol, initial, opts)?.run()
}

/// TS alternating optimization from `initial`.
pub fn run_algorithm2(scenario: &Scenario, initial: DesignVariables, opts: &SolverOptions) -> Result<Solution> {
    if opts.freeze.precoder || opts.freeze.splitting {
        return Err(Error::Unsupported("time switching always uses MRT precoders and no splitting".into()));
    }
    let mut initial = initial;
    let (_, ch) = ChannelSet::for_state(scenario, Protocol::TimeSwitching, &initial)?;
    initial.precoder = mrt_precoder(&ch, scenario.transmit_power())?;
    Driver::new(scenario, Protocol::TimeSwitching, initial, opts)?.run()
}

/// Full solve from the default initialization.
pub fn solve(scenario: &Scenario, protocol: Protocol, opts: &SolverOptions) -> Result<Solution> {
    let initial = initial_state(scenario, protocol)?;
    match protocol {
        Protocol::TimeSwitching => run_algorithm2(scenario, initial, opts),
        _ => run_algorithm1(scenario, protocol, initial, opts),
    }
}

/// Tolerance used when checking constraints of a final state.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// Constraint residuals of a state; zero means exactly satisfied.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConstraintResiduals {
    /// `max(0, ||W||^2 - P) / P` (per user for TS).
    pub power: f64,
    /// `| ||xi_chi|| - 1 |`, worst direction.
    pub radiation_norm: f64,
    /// Most negative radiation amplitude, as a positive number.
    pub radiation_sign: f64,
    /// Distance of the worst angle outside `[0, pi/2]`.
    pub splitting_box: f64,
    /// DS only: worst distance from a binary angle.
    pub splitting_binary: f64,
    /// `|cos^2 + sin^2 - 1|` of the realized per-port amplitudes.
    pub splitting_energy: f64,
    /// Distance of the worst displacement outside `[-max, max]`.
    pub displacement: f64,
    /// Time shares outside `[0, 1]` or not summing to one.
    pub time_share: f64,
}

impl ConstraintResiduals {
    pub fn worst(&self) -> f64 {
        [
            self.power,
            self.radiation_norm,
            self.radiation_sign,
            self.splitting_box,
            self.splitting_binary,
            self.splitting_energy,
            self.displacement,
            self.time_share,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalReport {
    pub rates: UserRates,
    pub sum_rate: f64,
    pub residuals: ConstraintResiduals,
    pub feasible: bool,
}

/// Residual of every constraint of `vars` under `protocol`.
pub fn constraint_residuals(scenario: &Scenario, protocol: Protocol, vars: &DesignVariables) -> ConstraintResiduals {
    let delta = scenario.config.max_displacement;
    let out_of_range = vars.d_f.iter().chain(&vars.d_b).map(|d| (d.abs() - delta).max(0.0)).fold(0.0, f64::max);
    // TS serves the users in disjoint slots, each with the full budget.
    let used = match protocol {
        Protocol::TimeSwitching => vars.precoder.w_fu.norm_squared().max(vars.precoder.w_bu.norm_squared()),
        _ => vars.precoder.power(),
    };
    let mut residuals = ConstraintResiduals {
        power: ((used - scenario.transmit_power()) / scenario.transmit_power()).max(0.0),
        displacement: out_of_range,
        ..Default::default()
    };
    for dir in Direction::BOTH {
        let xi = vars.radiation.get(dir);
        residuals.radiation_norm = residuals.radiation_norm.max((xi.norm() - 1.0).abs());
        residuals.radiation_sign = residuals.radiation_sign.max((-xi.min()).max(0.0));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    for &t in &vars.splitting.angles {
        residuals.splitting_box = residuals.splitting_box.max((-t).max(t - half_pi).max(0.0));
        if protocol == Protocol::DirectionSwitching {
            residuals.splitting_binary = residuals.splitting_binary.max(t.abs().min((half_pi - t).abs()));
        }
    }
    if protocol != Protocol::TimeSwitching {
        let (f, b) = (vars.splitting.amplitudes(Direction::Forward), vars.splitting.amplitudes(Direction::Backward));
        residuals.splitting_energy = f.iter().zip(b.iter()).map(|(f, b)| (f * f + b * b - 1.0).abs()).fold(0.0, f64::max);
    }
    if protocol == Protocol::TimeSwitching {
        let (f, b) = (vars.time.mu_fu, vars.time.mu_bu);
        residuals.time_share = (f + b - 1.0).abs().max((-f).max(f - 1.0).max(0.0)).max((-b).max(b - 1.0).max(0.0));
    }
    residuals
}

/// Recompute everything from scratch and check every constraint.
pub fn evaluate_final(scenario: &Scenario, protocol: Protocol, vars: &DesignVariables) -> Result<FinalReport> {
    let residuals = constraint_residuals(scenario, protocol, vars);
    let out_of_range = residuals.displacement;
    if out_of_range > FEASIBILITY_TOLERANCE {
        return Ok(FinalReport {
            rates: UserRates::default(),
            sum_rate: f64::NAN,
            feasible: false,
            residuals,
        });
    }
    let (_, ch) = ChannelSet::for_state(scenario, protocol, vars)?;
    let rates = sum_rate(&ch, &vars.precoder, &vars.time, scenario.noise_power());
    Ok(FinalReport {
        rates,
        sum_rate: rates.sum(),
        feasible: residuals.worst() <= FEASIBILITY_TOLERANCE,
        residuals,
    })
}
