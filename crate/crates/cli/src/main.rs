//! `selfheal`: train, evaluate, and compare healing controllers.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use selfheal::harness::{
    self, budget_study, compare, gridsim, stochastic_study, summary_csv, AgentName, EnvVariant, ExperimentSpec,
    GridController, SummaryRow,
};
use selfheal::par::Execution;
use selfheal::selfcheck::run_selfcheck;
use selfheal::{Config, Error};

#[derive(Parser, Debug)]
#[command(name = "selfheal", version, about = "Reinforcement-learning control of simulated self-healing materials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Base seed; evaluation run i uses seed + i.
    #[arg(long, default_value_t = 42, global = true)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "results", global = true)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an agent and evaluate it greedily.
    Train {
        #[arg(long)]
        agent: String,
        /// discrete, continuous, stochastic (defaults to the agent's own).
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value_t = harness::EVAL_RUNS)]
        runs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a policy previously written by `train`.
    Eval {
        #[arg(long)]
        agent: String,
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value_t = harness::EVAL_RUNS)]
        runs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate several agents on the same seeds.
    Compare {
        /// Comma-separated agent names.
        #[arg(long, default_value = "td3,qlearning,dqn,adaptive,heuristic,random")]
        agents: String,
        #[arg(long, default_value_t = harness::EVAL_RUNS)]
        runs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run a scripted controller on the grid damage surrogate.
    Gridsim {
        /// none, greedy, oracle.
        #[arg(long, default_value = "greedy")]
        controller: String,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = harness::EVAL_RUNS)]
        runs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// DQN replay variants under a fixed interaction budget.
    BudgetStudy {
        /// Interaction steps per run (overrides budget.steps).
        #[arg(long)]
        steps: Option<usize>,
        /// Runs per variant (overrides budget.runs).
        #[arg(long)]
        runs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// TD3 and the heuristic with stochastic healing efficacy.
    StochasticStudy {
        #[arg(long, default_value_t = harness::STOCHASTIC_RUNS)]
        runs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Fast invariant checks.
    Selfcheck,
}

fn keys_help() -> String {
    let cfg = Config::default();
    let mut s = String::from("Config keys (for --set KEY=VALUE and config files):\n");
    for k in Config::keys() {
        let v = cfg.get(&k).unwrap_or_default();
        s.push_str(&format!("  {k} = {v}\n"));
    }
    s
}

fn load_config(common: &Common) -> Result<Config, Error> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p).map_err(|e| match e {
            Error::Io { .. } => Error::config("--config", e.to_string()),
            other => other,
        })?,
        None => Config::default(),
    };
    cfg.apply_overrides(&common.set)?;
    cfg.validate()?;
    Ok(cfg)
}

fn agent_env(agent: &str, env: Option<&str>) -> Result<(AgentName, EnvVariant), Error> {
    let agent = AgentName::parse(agent)?;
    let env = match env {
        Some(e) => EnvVariant::parse(e)?,
        None => agent.native_env(),
    };
    harness::resolve_kind(agent, env)?;
    Ok((agent, env))
}

fn print_rows(rows: &[SummaryRow]) {
    print!("{}", summary_csv(rows));
}

fn spec(agent: AgentName, env: EnvVariant, runs: usize, common: &Common, cfg: Config) -> ExperimentSpec {
    ExperimentSpec {
        agent,
        env,
        config: cfg,
        eval_runs: runs,
        seed: common.seed,
        out: Some(common.out.clone()),
        exec: Execution::default(),
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Train {
            agent,
            env,
            runs,
            common,
        } => {
            let cfg = load_config(&common)?;
            let (agent, env) = agent_env(&agent, env.as_deref())?;
            let outcome = harness::train_and_evaluate(&spec(agent, env, runs, &common, cfg))?;
            print_rows(&[outcome.summary]);
        }
        Command::Eval {
            agent,
            env,
            runs,
            common,
        } => {
            let cfg = load_config(&common)?;
            let (agent, env) = agent_env(&agent, env.as_deref())?;
            let row = harness::evaluate_stored(&spec(agent, env, runs, &common, cfg))?;
            print_rows(&[row]);
        }
        Command::Compare { agents, runs, common } => {
            let cfg = load_config(&common)?;
            let names = agents
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(AgentName::parse)
                .collect::<Result<Vec<_>, _>>()?;
            let rows = compare(&names, &cfg, common.seed, runs, Some(common.out.as_path()), Execution::default())?;
            print_rows(&rows);
        }
        Command::Gridsim {
            controller,
            steps,
            runs,
            common,
        } => {
            let cfg = load_config(&common)?;
            let controller = GridController::parse(&controller)?;
            let steps = steps.unwrap_or(cfg.grid.horizon);
            let s = gridsim(
                &cfg.grid,
                controller,
                common.seed,
                runs,
                steps,
                Some(common.out.as_path()),
                Execution::default(),
            )?;
            println!(
                "controller={} steps={} final_integrity_mean={} final_integrity_std={} runs={}",
                controller.name(),
                steps,
                selfheal::fmt::sig6(s.final_mean),
                selfheal::fmt::sig6(s.final_std),
                runs
            );
        }
        Command::BudgetStudy { steps, runs, common } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = steps {
                cfg.budget.steps = s;
            }
            if let Some(r) = runs {
                cfg.budget.runs = r;
            }
            let r = budget_study(&cfg, common.seed, Some(common.out.as_path()), Execution::default())?;
            for c in &r.curves {
                println!(
                    "variant={} integrity_at_step_{}={} early_mean={}",
                    harness::mode_name(c.mode),
                    r.steps,
                    selfheal::fmt::sig6(c.at_budget()),
                    selfheal::fmt::sig6(c.early_mean(20))
                );
            }
        }
        Command::StochasticStudy { runs, common } => {
            let cfg = load_config(&common)?;
            let r = stochastic_study(&cfg, common.seed, runs, Some(common.out.as_path()), Execution::default())?;
            print_rows(&[r.td3.clone(), r.heuristic.clone()]);
            println!(
                "failure_rate td3={} heuristic={}",
                selfheal::fmt::sig6(r.td3_failure_rate),
                selfheal::fmt::sig6(r.heuristic_failure_rate)
            );
        }
        Command::Selfcheck => {
            let checks = run_selfcheck()?;
            let mut failed = Vec::new();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                if !c.passed {
                    failed.push(c.name);
                }
            }
            if !failed.is_empty() {
                return Err(Error::State(format!("selfcheck failed: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

const SUBCOMMANDS: &str = "train, eval, compare, gridsim, budget-study, stochastic-study, selfcheck";

fn main() -> ExitCode {
    let matches = Cli::command().after_help(keys_help()).try_get_matches();
    let cli = match matches.and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
                _ => {
                    let rendered = e.to_string();
                    let first = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
                    eprintln!("{first} (subcommands: {SUBCOMMANDS}; see --help)");
                    return ExitCode::from(1);
                }
            }
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
