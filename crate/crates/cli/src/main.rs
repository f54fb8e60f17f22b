use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mamemq_core::baselines::AlgorithmKind;
use mamemq_core::config::ExperimentConfig;
use mamemq_core::harness::{build_env, dump_oracle, run_experiment};
use mamemq_core::rng::replication_seed;
use mamemq_core::Error;

#[derive(Parser)]
#[command(name = "mamemq", version, about = "Multi-agent MEMQ experiments on a grid wireless network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm and write traces plus an aggregate.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "mamemq")]
        algo: String,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `run.replications`.
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the joint MDP and dump the optimal policy and values.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config and the environment it builds.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::ConfigParse(_) | Error::InvalidParameter(_) => Failure::Config(e),
            other => Failure::Runtime(other),
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(_) => Failure::Config(e),
        other => other.into(),
    })
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            algo,
            seed,
            replications,
            out,
        } => {
            let mut cfg = load(&config)?;
            let kind: AlgorithmKind = algo.parse().map_err(Failure::Config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(r) = replications {
                cfg.run.replications = r;
            }
            let files = run_experiment(&cfg, kind, &out)?;
            for p in files.traces.iter().chain(&files.final_tables) {
                println!("{}", p.display());
            }
            println!("{}", files.aggregate.display());
        }
        Command::Oracle { config, out } => {
            let cfg = load(&config)?;
            match dump_oracle(&cfg, &out)? {
                Some((policy, values)) => {
                    println!("{}", policy.display());
                    println!("{}", values.display());
                }
                None => {
                    return Err(Failure::Runtime(Error::JointSpaceTooLarge(format!(
                        "joint space exceeds run.oracle_budget = {}",
                        cfg.run.oracle_budget
                    ))))
                }
            }
        }
        Command::Validate { config } => {
            // every failure here is an invariant violation of the config
            let cfg = load(&config).map_err(|f| match f {
                Failure::Config(e) | Failure::Runtime(e) => Failure::Config(e),
            })?;
            let env = build_env(&cfg, replication_seed(cfg.run.seed, 0)).map_err(Failure::Config)?;
            if env.costs.expected_table().iter().any(|c| !c.is_finite()) {
                return Err(Failure::Config(Error::NonFinite("expected cost table")));
            }
            println!(
                "ok: {} transmitters, {} base stations, {} states per agent",
                env.n_tx(),
                env.n_actions(),
                env.space.n_states()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
