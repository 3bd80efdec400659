//! `robust-rl`: generate benchmark MDPs, sample offline datasets, solve them
//! with robust/baseline planners, evaluate policies, and run sweeps.
//!
//! Exit codes: 0 on success, 1 on a validation error (bad flags or inputs),
//! 2 on an internal failure.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use robust_offline_rl::baselines::{lcb_value_iteration, nonrobust_empirical_vi, LcbConfig};
use robust_offline_rl::data::{
    behavior_partial, behavior_uniform, draw_eta, estimate_model, sample_dataset, OfflineDataset,
};
use robust_offline_rl::experiment::{
    emit_tables, emit_timings, run_sweep_with_jobs, suboptimality_gap, ExperimentConfig, Method,
};
use robust_offline_rl::garnet::generate_garnet_with;
use robust_offline_rl::mdp::exact_value_iteration;
use robust_offline_rl::robust::{
    robust_value_iteration, robust_value_iteration_bernstein, EmpiricalRobustModel, RadiusStyle,
    RobustSolution, SolutionRecord,
};
use robust_offline_rl::{DeterministicPolicy, Error, TabularMdp};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "robust-rl", version, about = "Offline RL via robust planning on empirical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random benchmark MDP and write it as JSON.
    Garnet(GarnetArgs),
    /// Sample an offline dataset from an MDP file.
    Sample(SampleArgs),
    /// Fit an empirical model from a dataset and solve it.
    Solve(SolveArgs),
    /// Print the sub-optimality gap of a solved policy on an MDP.
    Evaluate(EvaluateArgs),
    /// Run a full sweep from a JSON config and write CSV tables.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GarnetArgs {
    #[arg(long)]
    states: usize,
    #[arg(long)]
    actions: usize,
    /// Defaults to ROBUST_RL_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// `uniform` or `partial`.
    #[arg(long)]
    coverage: String,
    #[arg(long)]
    n: usize,
    /// Defaults to ROBUST_RL_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Offline dataset produced by `sample`.
    #[arg(long = "mdp-data")]
    mdp_data: PathBuf,
    /// dro-hoeffding, dro-bernstein, lcb or nonrobust.
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Force every uncertainty radius to a fixed value (testing hook).
    #[arg(long = "radius-override", hide = true)]
    radius_override: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// Solution JSON produced by `solve`.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Parallel (size, seed) cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write timings.csv with measured wall times (not reproducible).
    #[arg(long)]
    timings: bool,
}

fn seed_or_env(flag: Option<u64>) -> Result<u64, Error> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("ROBUST_RL_SEED") {
        Ok(text) => text
            .parse()
            .map_err(|_| Error::invalid(format!("ROBUST_RL_SEED is not a valid seed: {text}"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Garnet(a) => {
            let seed = seed_or_env(a.seed)?;
            let mdp = generate_garnet_with(a.states, a.actions, seed, a.gamma, None)?;
            mdp.save(&a.out)?;
            eprintln!(
                "wrote {} ({} states, {} actions, seed {seed})",
                a.out.display(),
                a.states,
                a.actions
            );
            Ok(())
        }
        Command::Sample(a) => {
            let seed = seed_or_env(a.seed)?;
            let mdp = TabularMdp::load(&a.mdp)?;
            let mu = match a.coverage.as_str() {
                "uniform" => behavior_uniform(mdp.num_states(), mdp.num_actions()),
                "partial" => {
                    let (_, pi_star) = exact_value_iteration(&mdp, 1e-9)?;
                    let eta = draw_eta(mdp.num_actions(), seed);
                    eprintln!("partial coverage: eta = {eta}");
                    behavior_partial(&pi_star, eta, mdp.num_actions())?
                }
                other => {
                    return Err(Error::invalid(format!(
                        "unknown coverage '{other}' (expected uniform or partial)"
                    )))
                }
            };
            let data = sample_dataset(&mdp, &mu, a.n, seed)?;
            data.save(&a.out)?;
            eprintln!("wrote {} ({} tuples)", a.out.display(), data.len());
            Ok(())
        }
        Command::Solve(a) => {
            let method: Method = a.method.parse()?;
            let data = OfflineDataset::load(&a.mdp_data)?;
            let model = estimate_model(&data)?;
            let solution: RobustSolution = match method {
                Method::DroHoeffding | Method::DroBernstein => {
                    let style = if method == Method::DroHoeffding {
                        RadiusStyle::hoeffding(a.delta)?
                    } else {
                        RadiusStyle::bernstein(a.delta)?
                    };
                    let robust = match a.radius_override {
                        Some(r) => {
                            let radius =
                                ndarray::Array2::from_elem(model.counts.dim(), r);
                            EmpiricalRobustModel::with_radius(model, radius, style, a.gamma)?
                        }
                        None => EmpiricalRobustModel::new(model, style, a.gamma)?,
                    };
                    if method == Method::DroBernstein && a.radius_override.is_none() {
                        robust_value_iteration_bernstein(&robust, &data, a.tol)?
                    } else {
                        robust_value_iteration(&robust, a.tol)?
                    }
                }
                Method::Lcb => {
                    let cfg = LcbConfig::new(a.delta, 1.0)?;
                    let (value, policy, iterations) =
                        lcb_value_iteration(&model, &cfg, a.gamma, a.tol)?;
                    RobustSolution {
                        value,
                        policy,
                        iterations,
                        residual: a.tol,
                    }
                }
                Method::Nonrobust => {
                    let (value, policy, iterations) =
                        nonrobust_empirical_vi(&model, a.gamma, a.tol)?;
                    RobustSolution {
                        value,
                        policy,
                        iterations,
                        residual: a.tol,
                    }
                }
            };
            SolutionRecord::new(&solution, method.name(), a.delta).save(&a.out)?;
            eprintln!(
                "wrote {} ({} iterations, residual {:e})",
                a.out.display(),
                solution.iterations,
                solution.residual
            );
            Ok(())
        }
        Command::Evaluate(a) => {
            let mdp = TabularMdp::load(&a.mdp)?;
            let record = SolutionRecord::load(&a.policy)?;
            let policy = DeterministicPolicy::new(record.policy, mdp.num_actions())?;
            if policy.num_states() != mdp.num_states() {
                return Err(Error::invalid(
                    "policy length does not match the MDP's state count",
                ));
            }
            let gap = suboptimality_gap(&mdp, &policy, a.tol)?;
            println!("{gap}");
            Ok(())
        }
        Command::Sweep(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            let out_dir = a
                .out_dir
                .clone()
                .or_else(|| cfg.out_dir.clone())
                .ok_or_else(|| {
                    Error::invalid("no output directory: pass --out-dir or set out_dir in config")
                })?;
            let res = run_sweep_with_jobs(&cfg, a.jobs.max(1))?;
            emit_tables(&res, &out_dir)?;
            if a.timings {
                emit_timings(&res, &out_dir)?;
            }
            if let Some(eta) = res.eta {
                eprintln!("partial coverage: eta = {eta}");
            }
            for method in &cfg.methods {
                let total: f64 = res
                    .timings
                    .iter()
                    .filter(|t| t.method == *method)
                    .map(|t| t.wall_ms)
                    .sum();
                eprintln!("{method}: {total:.1} ms total solve time");
            }
            eprintln!(
                "wrote {} and {} ({} rows)",
                out_dir.join("raw.csv").display(),
                out_dir.join("agg.csv").display(),
                res.rows.len()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
