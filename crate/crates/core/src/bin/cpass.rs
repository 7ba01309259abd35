use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cpass::experiment::{emit_results, format_sig, parse_config, run_sweep, Baseline, ExperimentSpec, Format};
use cpass::oracle::{exhaustive_ds_search, grid_max_mu, rate_recompute_check};
use cpass::solver::{evaluate_final, initial_state, solve, SolverOptions};
use cpass::{ChannelSet, Error, Protocol, Scenario};

/// Center-fed pinching-antenna system simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every configured protocol at the base config and emit the
    /// per-iteration convergence traces.
    Run(Common),
    /// Run the configured sweep and emit one row per (value, scheme).
    Sweep(Common),
    /// Compare protocols and all baselines at the base config.
    Compare(Common),
    /// Cross-check solver outputs against the brute-force oracles.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment spec (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the spec's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted (or the spec's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl Common {
    /// Any failure to load the spec, unreadable file included, is a
    /// configuration error.
    fn spec(&self) -> Result<ExperimentSpec, Failure> {
        let mut spec = match &self.config {
            Some(path) => parse_config(path).map_err(Failure::Config)?,
            None => ExperimentSpec::default(),
        };
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        Ok(spec)
    }

    fn out<'a>(&'a self, spec: &'a ExperimentSpec) -> Option<&'a Path> {
        self.out.as_deref().or(spec.output.as_deref())
    }
}

enum Failure {
    Config(Error),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Parse { .. } => Failure::Config(e),
            other => Failure::Solver(other.to_string()),
        }
    }
}

fn write(body: &str, path: Option<&Path>) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(|source| Error::Io { path: p.into(), source }.into()),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn run(c: &Common) -> Result<(), Failure> {
    let spec = c.spec()?;
    let mut config = spec.config.clone();
    config.rng_seed = spec.seed;
    let scenario = Scenario::new(config)?;
    let opts = SolverOptions::default();
    let mut traces = Vec::new();
    for &p in &spec.protocols {
        let sol = solve(&scenario, p, &opts)?;
        traces.push((p, sol.trace));
    }
    let body = match c.format {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = traces
                .iter()
                .map(|(p, t)| (p.to_string(), serde_json::to_value(t).expect("trace serializes")))
                .collect();
            serde_json::to_string_pretty(&map).expect("json") + "\n"
        }
        Format::Csv => {
            let mut s = String::from("scheme,iteration,rate_fu,rate_bu,rate_sum,surrogate,mu_fu,rho,reverted\n");
            for (p, t) in &traces {
                for r in &t.records {
                    s += &format!(
                        "{p},{},{},{},{},{},{},{},{}\n",
                        r.iteration,
                        format_sig(r.rate_fu),
                        format_sig(r.rate_bu),
                        format_sig(r.sum_rate),
                        format_sig(r.surrogate),
                        format_sig(r.mu_fu),
                        r.rho.map(format_sig).unwrap_or_default(),
                        r.reverted
                    );
                }
            }
            s
        }
    };
    write(&body, c.out(&spec))
}

fn sweep(c: &Common, spec: ExperimentSpec) -> Result<(), Failure> {
    let rows = run_sweep(&spec, c.jobs)?;
    emit_results(&rows, c.format, c.out(&spec))?;
    match rows.iter().find_map(|r| r.error.as_ref().map(|e| (r, e))) {
        Some((r, e)) => Err(Failure::Solver(format!("{} at {}: {e}", r.scheme, format_sig(r.sweep_value)))),
        None => Ok(()),
    }
}

fn verify(c: &Common) -> Result<(), Failure> {
    let spec = c.spec()?;
    let scenario = Scenario::new(spec.config.clone())?;
    let opts = SolverOptions::default();
    let mut lines = Vec::new();
    let mut ok = true;
    let mut check = |name: String, pass: bool, detail: String| {
        ok &= pass;
        lines.push(format!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" }));
    };
    for &p in &spec.protocols {
        let sol = solve(&scenario, p, &opts)?;
        let recompute = rate_recompute_check(&scenario, p, &sol.vars)?;
        let (what, worst) = recompute.worst();
        check(format!("{p} rate recompute"), recompute.passed, format!("worst {what} = {worst:e}"));
        let report = evaluate_final(&scenario, p, &sol.vars)?;
        check(format!("{p} feasibility"), report.feasible, format!("worst residual {:e}", report.residuals.worst()));
        check(format!("{p} monotone trace"), sol.trace.is_monotone(), format!("{} iterations", sol.trace.iterations()));
        match p {
            Protocol::TimeSwitching => {
                let (_, ch) = ChannelSet::for_state(&scenario, p, &sol.vars)?;
                let (mu, _) = grid_max_mu(&ch, &sol.vars.precoder, scenario.noise_power(), 1001)?;
                let gap = (sol.vars.time.mu_fu - mu).abs();
                check("TS time share vs grid".into(), gap <= 1e-3 + 1e-12, format!("mu {} vs grid {mu}", format_sig(sol.vars.time.mu_fu)));
            }
            Protocol::DirectionSwitching => {
                let best = exhaustive_ds_search(&scenario, &initial_state(&scenario, p)?, &opts)?;
                let rate = sol.rates.sum();
                check(
                    "DS penalty vs exhaustive".into(),
                    rate >= best.sum_rate * 0.98,
                    format!("{} vs best {} over {} splittings", format_sig(rate), format_sig(best.sum_rate), best.evaluated),
                );
            }
            Protocol::PowerSplitting => {}
        }
    }
    write(&(lines.join("\n") + "\n"), c.out(&spec))?;
    if ok {
        Ok(())
    } else {
        Err(Failure::Solver("verification failed".into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => run(c),
        Command::Sweep(c) => c.spec().and_then(|spec| sweep(c, spec)),
        Command::Compare(c) => c.spec().and_then(|mut spec| {
            spec.sweep = None;
            if spec.baselines.is_empty() {
                spec.baselines = Baseline::ALL.to_vec();
            }
            sweep(c, spec)
        }),
        Command::Verify(c) => verify(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
