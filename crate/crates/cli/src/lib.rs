//! Command-line front end: `run`, `sweep`, `oracle` and `check`.
//!
//! Every [`TrainConfig`] key is accepted as a `--<key> <value>` flag on `run`
//! and `sweep`; `--max-steps` and `--out-dir` are aliases for
//! `--max_train_steps` and `--out_dir`.

pub mod checks;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Arg, ArgAction, ArgMatches, Command};

use fedmix_core::envs::Env;
use fedmix_core::trainer::{self, ConfigError, TrainConfig, METRICS_FILE};

pub use config::{parse_config, parse_entries, resolve_config, OUT_DIR_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Why a command failed; decides the exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_FAILURE,
        }
    }
}

fn flag_alias(key: &str) -> Option<&'static str> {
    match key {
        "max_train_steps" => Some("max-steps"),
        "out_dir" => Some("out-dir"),
        _ => None,
    }
}

fn training_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("flat key=value config file"),
    );
    TrainConfig::KEYS.iter().fold(cmd, |cmd, &key| {
        let mut arg = Arg::new(key).long(key).value_name("VALUE");
        if let Some(alias) = flag_alias(key) {
            arg = arg.visible_alias(alias);
        }
        cmd.arg(arg)
    })
}

pub fn command() -> Command {
    Command::new("fedmix")
        .about("Federated value-factorization multi-agent Q-learning")
        .subcommand_required(true)
        .subcommand(training_args(
            Command::new("run").about("train one configuration"),
        ))
        .subcommand(
            training_args(Command::new("sweep").about("train one configuration for several seeds"))
                .arg(
                    Arg::new("seeds")
                        .long("seeds")
                        .value_name("LIST")
                        .required(true)
                        .help("comma-separated master seeds"),
                ),
        )
        .subcommand(
            Command::new("oracle")
                .about("print the optimal team return of an environment")
                .arg(
                    Arg::new("env")
                        .long("env")
                        .required(true)
                        .value_name("NAME"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_name("SEED")
                        .value_parser(clap::value_parser!(u64))
                        .default_value("0"),
                ),
        )
        .subcommand(
            Command::new("check")
                .about("run the invariant self-test suite")
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_name("SEED")
                        .value_parser(clap::value_parser!(u64))
                        .default_value("0"),
                )
                .arg(Arg::new("quiet").long("quiet").action(ArgAction::SetTrue)),
        )
}

fn overrides(m: &ArgMatches) -> Vec<(String, String)> {
    TrainConfig::KEYS
        .iter()
        .filter_map(|&k| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect()
}

fn config_from(m: &ArgMatches) -> Result<TrainConfig, CliError> {
    let path = m.get_one::<String>("config").map(PathBuf::from);
    Ok(parse_config(path.as_deref(), &overrides(m))?)
}

fn run_one(config: &TrainConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let summary =
        trainer::run(config).with_context(|| format!("run in {}", config.out_dir.display()))?;
    let last = summary.final_row();
    writeln!(
        out,
        "seed {}: {} env steps, {} train steps, final return {}, success {}",
        config.seed,
        summary.env_steps,
        summary.train_steps,
        last.map_or("-".to_string(), |r| r.eval_return_mean.to_string()),
        last.map_or("-".to_string(), |r| r.eval_success_rate.to_string()),
    )
    .context("write output")?;
    Ok(())
}

fn parse_seeds(list: &str) -> Result<Vec<u64>, CliError> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("--seeds: `{s}` is not a seed")))
        })
        .collect()
}

fn sweep(base: &TrainConfig, seeds: &[u64], out: &mut dyn Write) -> Result<(), CliError> {
    for &seed in seeds {
        let config = TrainConfig {
            seed,
            out_dir: base.out_dir.join(format!("seed_{seed}")),
            ..base.clone()
        };
        run_one(&config, out)?;
        let copy = base.out_dir.join(format!("metrics_seed{seed}.csv"));
        std::fs::copy(config.out_dir.join(METRICS_FILE), &copy)
            .with_context(|| format!("copy metrics to {}", copy.display()))?;
    }
    Ok(())
}

fn dispatch(m: &ArgMatches, out: &mut dyn Write) -> Result<(), CliError> {
    match m.subcommand() {
        Some(("run", sub)) => run_one(&config_from(sub)?, out),
        Some(("sweep", sub)) => {
            let seeds = parse_seeds(sub.get_one::<String>("seeds").expect("required"))?;
            sweep(&config_from(sub)?, &seeds, out)
        }
        Some(("oracle", sub)) => {
            let name = sub.get_one::<String>("env").expect("required");
            let seed = *sub.get_one::<u64>("seed").expect("defaulted");
            let env =
                Env::from_name(name, seed).map_err(|e| CliError::Usage(format!("--env: {e}")))?;
            let value = env.optimal_return(seed).context("oracle")?;
            writeln!(out, "{value}").context("write output")?;
            Ok(())
        }
        Some(("check", sub)) => {
            let seed = *sub.get_one::<u64>("seed").expect("defaulted");
            let results = checks::run_checks(seed);
            for r in &results {
                if !sub.get_flag("quiet") || !r.passed {
                    let status = if r.passed { "ok" } else { "FAILED" };
                    writeln!(out, "{status:<6} {:<13} {}", r.name, r.detail)
                        .context("write output")?;
                }
            }
            if results.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err(CliError::Runtime(anyhow::anyhow!("invariant check failed")))
            }
        }
        _ => unreachable!("subcommand required"),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match dispatch(&matches, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "fedmix: {e}");
            e.exit_code()
        }
    }
}
