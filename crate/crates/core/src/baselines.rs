//! Comparison schemes: end-fed PASS, random transmit precoding and uniform
//! pinching beamforming. Each is the full solver with some blocks frozen.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::UserRates;
use crate::solver::{initial_state, run_algorithm1, run_algorithm2, Freeze, Solution, SolverOptions};
use crate::wmmse::split_mrt_precoder;
use crate::{CVector, ChannelSet, Complex64, PrecoderState, Protocol, Scenario};

/// Realization count used when none is given.
pub const DEFAULT_REALIZATIONS: usize = 200;

/// All power routed forward from the same center ports (`theta = 0`); the
/// backward radiation variables are inert.
pub fn solve_end_fed(scenario: &Scenario, opts: &SolverOptions) -> Result<Solution> {
    let mut vars = initial_state(scenario, Protocol::PowerSplitting)?;
    vars.splitting.angles.fill(0.0);
    let (_, ch) = ChannelSet::for_state(scenario, Protocol::PowerSplitting, &vars)?;
    vars.precoder = split_mrt_precoder(&ch, scenario.transmit_power())?;
    let opts = SolverOptions {
        freeze: Freeze {
            splitting: true,
            ..opts.freeze
        },
        ..opts.clone()
    };
    run_algorithm1(scenario, Protocol::PowerSplitting, vars, &opts)
}

/// Radiation amplitudes fixed at `1/sqrt(N)` and PAs at nominal positions;
/// only the precoder and the splitting (or time share) are optimized.
pub fn solve_uniform_pinching(scenario: &Scenario, protocol: Protocol, opts: &SolverOptions) -> Result<Solution> {
    let opts = SolverOptions {
        freeze: Freeze {
            pinching: true,
            ..opts.freeze
        },
        ..opts.clone()
    };
    let vars = initial_state(scenario, protocol)?;
    match protocol {
        Protocol::TimeSwitching => run_algorithm2(scenario, vars, &opts),
        _ => run_algorithm1(scenario, protocol, vars, &opts),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomPrecodingSummary {
    pub mean_fu: f64,
    pub mean_bu: f64,
    pub mean_sum: f64,
    /// Population standard deviation of the sum rate.
    pub std_sum: f64,
    pub mean_iterations: f64,
    /// Per-realization rates in realization order.
    pub rates: Vec<UserRates>,
}

/// I.i.d. standard complex Gaussian precoder scaled to the full budget.
pub fn random_precoder(num_ports: usize, power: f64, rng: &mut ChaCha8Rng) -> PrecoderState {
    let mut draw = || {
        CVector::from_fn(num_ports, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
    };
    let w_fu = draw();
    let w_bu = draw();
    let scale = (power / (w_fu.norm_squared() + w_bu.norm_squared())).sqrt();
    PrecoderState {
        w_fu: w_fu * Complex64::new(scale, 0.0),
        w_bu: w_bu * Complex64::new(scale, 0.0),
        lagrange_multiplier: 0.0,
    }
}

/// Frozen random precoders, everything else optimized; averaged over
/// `realizations`. Realization `i` draws from stream `i` of the seeded
/// generator, so the result does not depend on scheduling.
pub fn solve_random_precoding(
    scenario: &Scenario,
    protocol: Protocol,
    realizations: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<RandomPrecodingSummary> {
    if protocol == Protocol::TimeSwitching {
        return Err(Error::Unsupported(
            "time switching uses MRT precoders; random precoding applies to PS and DS".into(),
        ));
    }
    if realizations == 0 {
        return Err(Error::config("realizations", "must be at least 1"));
    }
    let opts = SolverOptions {
        freeze: Freeze {
            precoder: true,
            ..opts.freeze
        },
        ..opts.clone()
    };
    let solutions: Vec<Solution> = (0..realizations)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut vars = initial_state(scenario, protocol)?;
            vars.precoder = random_precoder(scenario.num_ports(), scenario.transmit_power(), &mut rng);
            run_algorithm1(scenario, protocol, vars, &opts)
        })
        .collect::<Result<_>>()?;
    let n = realizations as f64;
    let rates: Vec<UserRates> = solutions.iter().map(|s| s.rates).collect();
    let mean_sum = rates.iter().map(UserRates::sum).sum::<f64>() / n;
    let var = rates.iter().map(|r| (r.sum() - mean_sum).powi(2)).sum::<f64>() / n;
    Ok(RandomPrecodingSummary {
        mean_fu: rates.iter().map(|r| r.fu).sum::<f64>() / n,
        mean_bu: rates.iter().map(|r| r.bu).sum::<f64>() / n,
        mean_sum,
        std_sum: var.sqrt(),
        mean_iterations: solutions.iter().map(|s| s.trace.iterations() as f64).sum::<f64>() / n,
        rates,
    })
}
