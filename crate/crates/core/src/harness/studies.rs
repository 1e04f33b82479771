//! Budget study, stochastic-healing study, and grid runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{
    emit_figure_data, env_params, eval_seed, evaluate, mean, provenance, sample_std, summary_csv, train_agent,
    train_seed, write_file, AgentName, EnvVariant, RunRecord, SummaryRow, FAILURE_THRESHOLD,
};
use crate::agents::dqn::{self, DqnAgent, DqnConfig, ReplayMode};
use crate::agents::linear_schedule;
use crate::baselines::{greedy_grid_policy, oracle_grid_policy, HeuristicController};
use crate::config::Config;
use crate::env_grid::{export_heatmap, DamageField, GridConfig, GridEnv};
use crate::env_scalar::{Action, ActionKind, ScalarEnv};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::par::{try_map_indexed, Execution};
use crate::policy::Controller;
use crate::replay::Transition;
use crate::rng::derive_seed;

/// Fraction of runs whose integrity dropped below `threshold` at any step.
pub fn failure_rate(records: &[RunRecord], threshold: f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.failed(threshold)).count() as f64 / records.len() as f64
}

#[derive(Debug, Clone)]
pub struct StochasticReport {
    pub td3: SummaryRow,
    pub td3_failure_rate: f64,
    pub td3_records: Vec<RunRecord>,
    pub heuristic: SummaryRow,
    pub heuristic_failure_rate: f64,
}

/// Trains TD3 with the stochastic healing wrapper on and evaluates it and
/// the heuristic on the same `runs` seeds.
pub fn stochastic_study(cfg: &Config, seed: u64, runs: usize, out: Option<&Path>, exec: Execution) -> Result<StochasticReport> {
    cfg.validate()?;
    if runs == 0 {
        return Err(Error::Argument("need at least one run".into()));
    }
    let env = EnvVariant::Stochastic;
    let (env_cfg, heal) = env_params(cfg, env);
    let (policy, _) = train_agent(AgentName::Td3, cfg, env, seed)?;
    let make_td3 = || policy.controller(cfg, ActionKind::Continuous);
    let td3_records = evaluate(&env_cfg, &heal, ActionKind::Continuous, &make_td3, seed, runs, exec)?;
    let make_heuristic = || Box::new(HeuristicController) as Box<dyn Controller>;
    let heuristic_records = evaluate(&env_cfg, &heal, ActionKind::Discrete, &make_heuristic, seed, runs, exec)?;

    let report = StochasticReport {
        td3: SummaryRow::from_records("td3", env.name(), &td3_records)?,
        td3_failure_rate: failure_rate(&td3_records, FAILURE_THRESHOLD),
        heuristic: SummaryRow::from_records("heuristic", env.name(), &heuristic_records)?,
        heuristic_failure_rate: failure_rate(&heuristic_records, FAILURE_THRESHOLD),
        td3_records,
    };
    if let Some(out) = out {
        let dir = out.join("td3").join(env.name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_file(&dir.join("summary.csv"), &summary_csv(std::slice::from_ref(&report.td3)))?;
        emit_figure_data(&report.td3_records, &dir)?;
        let prov = provenance(cfg, AgentName::Td3, env, seed);
        write_file(&dir.join(policy.artifact_name()), &policy.artifact(&prov))?;
        let mut csv = String::from("agent,final_integrity_mean,final_integrity_std,failure_rate,runs\n");
        for (row, rate) in [
            (&report.td3, report.td3_failure_rate),
            (&report.heuristic, report.heuristic_failure_rate),
        ] {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                row.agent,
                sig6(row.final_mean),
                sig6(row.final_std),
                sig6(rate),
                row.runs
            );
        }
        write_file(&out.join("stochastic.csv"), &csv)?;
    }
    Ok(report)
}

pub fn mode_name(mode: ReplayMode) -> &'static str {
    match mode {
        ReplayMode::Uniform => "uniform",
        ReplayMode::Prioritized => "prioritized",
        ReplayMode::TransferPrefill => "transfer",
    }
}

#[derive(Debug, Clone)]
pub struct BudgetCurve {
    pub mode: ReplayMode,
    /// Mean integrity after each interaction step.
    pub mean: Vec<f64>,
    pub per_run: Vec<Vec<f64>>,
    /// Buffer size before the first interaction step of each run.
    pub initial_buffer: Vec<usize>,
}

impl BudgetCurve {
    pub fn at_budget(&self) -> f64 {
        *self.mean.last().expect("budget >= 1")
    }

    /// Mean of the curve over its first `k` steps.
    pub fn early_mean(&self, k: usize) -> f64 {
        mean(&self.mean[..k.min(self.mean.len())])
    }
}

#[derive(Debug, Clone)]
pub struct BudgetReport {
    pub steps: usize,
    pub runs: usize,
    pub curves: Vec<BudgetCurve>,
}

impl BudgetReport {
    pub fn curve(&self, mode: ReplayMode) -> &BudgetCurve {
        self.curves.iter().find(|c| c.mode == mode).expect("all modes present")
    }
}

const BUDGET_MODES: [ReplayMode; 3] = [ReplayMode::Uniform, ReplayMode::Prioritized, ReplayMode::TransferPrefill];
const EARLY_STEPS: usize = 20;

fn budget_dqn_config(cfg: &Config) -> DqnConfig {
    let b = &cfg.budget;
    DqnConfig {
        lr: b.lr,
        batch: b.batch,
        sync_period: b.sync_period,
        learn_start: b.batch,
        prefill: b.prefill,
        ..cfg.dqn.clone()
    }
}

/// One learning run of `steps` interactions; returns the integrity after
/// each step and the buffer size before the first.
fn budget_run(cfg: &Config, mode: ReplayMode, base_seed: u64, run: usize) -> Result<(Vec<f64>, usize)> {
    let b = &cfg.budget;
    let dcfg = budget_dqn_config(cfg);
    let agent_seed = derive_seed(train_seed(base_seed), run as u64);
    let mut agent = DqnAgent::new(dcfg.clone(), mode, agent_seed)?;
    let (env_cfg, heal) = env_params(cfg, EnvVariant::Discrete);
    if mode == ReplayMode::TransferPrefill {
        agent.prefill(&env_cfg, &heal, b.prefill, dqn::prefill_seed(agent_seed))?;
    }
    let initial_buffer = agent.buffer.len();
    let mut env = ScalarEnv::new(env_cfg, heal, ActionKind::Discrete)?;
    let env_seed = eval_seed(base_seed, run);
    let mut obs = env.reset(env_seed);
    let mut episode = 0u64;
    let mut curve = Vec::with_capacity(b.steps);
    for step in 0..b.steps {
        let eps = linear_schedule(b.eps_start, b.eps_end, b.eps_decay_steps, step);
        let a = Action::Discrete(agent.act(&obs, eps)?);
        let out = env.step(a)?;
        agent.remember(Transition::new(&obs, a, out.reward, &out.observation, out.terminal));
        curve.push(out.observation.integrity);
        if agent.buffer.len() >= dcfg.learn_start {
            agent.set_beta_progress((step + 1) as f64 / b.steps as f64);
            for _ in 0..b.updates_per_step {
                agent.train_step()?;
            }
        }
        obs = out.observation;
        if out.terminal {
            episode += 1;
            obs = env.reset(derive_seed(env_seed, episode));
        }
    }
    Ok((curve, initial_buffer))
}

/// Online learning under a fixed interaction budget for the uniform,
/// prioritized, and transfer-prefill DQN variants. Every variant sees the
/// same initial weights and damage sequence in a given run.
pub fn budget_study(cfg: &Config, seed: u64, out: Option<&Path>, exec: Execution) -> Result<BudgetReport> {
    cfg.validate()?;
    let b = &cfg.budget;
    let jobs = BUDGET_MODES.len() * b.runs;
    let results = try_map_indexed(exec, jobs, |j| budget_run(cfg, BUDGET_MODES[j / b.runs], seed, j % b.runs))?;
    let curves: Vec<BudgetCurve> = BUDGET_MODES
        .iter()
        .enumerate()
        .map(|(m, &mode)| {
            let runs = &results[m * b.runs..(m + 1) * b.runs];
            let per_run: Vec<Vec<f64>> = runs.iter().map(|r| r.0.clone()).collect();
            let mean_curve = (0..b.steps)
                .map(|k| mean(&per_run.iter().map(|c| c[k]).collect::<Vec<_>>()))
                .collect();
            BudgetCurve {
                mode,
                mean: mean_curve,
                initial_buffer: runs.iter().map(|r| r.1).collect(),
                per_run,
            }
        })
        .collect();
    let report = BudgetReport {
        steps: b.steps,
        runs: b.runs,
        curves,
    };
    if let Some(out) = out {
        let mut csv = String::from("step");
        for c in &report.curves {
            csv.push(',');
            csv.push_str(mode_name(c.mode));
        }
        csv.push('\n');
        for k in 0..report.steps {
            let _ = write!(csv, "{}", k + 1);
            for c in &report.curves {
                let _ = write!(csv, ",{}", sig6(c.mean[k]));
            }
            csv.push('\n');
        }
        write_file(&out.join("budget.csv"), &csv)?;
        let mut summary = String::from("variant,integrity_at_budget,std_at_budget,early_mean_integrity,runs\n");
        for c in &report.curves {
            let finals: Vec<f64> = c.per_run.iter().map(|r| *r.last().expect("budget >= 1")).collect();
            let _ = writeln!(
                summary,
                "{},{},{},{},{}",
                mode_name(c.mode),
                sig6(c.at_budget()),
                sig6(sample_std(&finals)),
                sig6(c.early_mean(EARLY_STEPS)),
                report.runs
            );
        }
        write_file(&out.join("budget_summary.csv"), &summary)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridController {
    NoControl,
    Greedy,
    Oracle,
}

impl GridController {
    pub const ALL: [GridController; 3] = [GridController::NoControl, GridController::Greedy, GridController::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            GridController::NoControl => "none",
            GridController::Greedy => "greedy",
            GridController::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::config("controller", format!("unknown controller `{s}`; valid: none, greedy, oracle")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRecord {
    pub run_id: usize,
    pub seed: u64,
    pub initial_integrity: f64,
    /// Integrity after each step.
    pub integrity: Vec<f64>,
    pub initial_field: DamageField,
    pub final_field: DamageField,
    pub actions_taken: usize,
}

impl GridRecord {
    pub fn final_integrity(&self) -> f64 {
        *self.integrity.last().unwrap_or(&self.initial_integrity)
    }
}

/// One grid episode of `steps` steps. Scripted controllers trigger on the
/// integrity reading; greedy targets the noisy observation, oracle the
/// hidden field.
pub fn grid_run(cfg: &GridConfig, controller: GridController, seed: u64, steps: usize, run_id: usize) -> Result<GridRecord> {
    let mut cfg = cfg.clone();
    cfg.horizon = cfg.horizon.max(steps);
    let act_below = cfg.act_below;
    let mut env = GridEnv::new(cfg, seed)?;
    let initial_integrity = env.integrity();
    let mut integrity = Vec::with_capacity(steps);
    let mut actions_taken = 0;
    for _ in 0..steps {
        let observed = env.observe();
        let action = match controller {
            GridController::NoControl => None,
            GridController::Greedy => greedy_grid_policy(&observed, env.integrity(), act_below),
            GridController::Oracle => oracle_grid_policy(env.true_field(), env.integrity(), act_below),
        };
        actions_taken += usize::from(action.is_some());
        integrity.push(env.step(action)?);
    }
    Ok(GridRecord {
        run_id,
        seed,
        initial_integrity,
        integrity,
        initial_field: env.initial_field().clone(),
        final_field: env.true_field().clone(),
        actions_taken,
    })
}

#[derive(Debug, Clone)]
pub struct GridSummary {
    pub controller: GridController,
    pub steps: usize,
    pub final_mean: f64,
    pub final_std: f64,
    pub records: Vec<GridRecord>,
}

/// Runs `runs` grid episodes on seeds `seed + i`. With `out` set, writes
/// `heatmap_t<steps>.csv` (final true field of run 0),
/// `grid_trajectory.csv`, and `grid_summary.csv`.
pub fn gridsim(
    cfg: &GridConfig,
    controller: GridController,
    seed: u64,
    runs: usize,
    steps: usize,
    out: Option<&Path>,
    exec: Execution,
) -> Result<GridSummary> {
    cfg.validate()?;
    if runs == 0 || steps == 0 {
        return Err(Error::Argument("gridsim needs at least one run and one step".into()));
    }
    let records = try_map_indexed(exec, runs, |i| grid_run(cfg, controller, eval_seed(seed, i), steps, i))?;
    let finals: Vec<f64> = records.iter().map(|r| r.final_integrity()).collect();
    let summary = GridSummary {
        controller,
        steps,
        final_mean: mean(&finals),
        final_std: sample_std(&finals),
        records,
    };
    if let Some(out) = out {
        write_file(
            &out.join(format!("heatmap_t{steps}.csv")),
            &export_heatmap(&summary.records[0].final_field),
        )?;
        let mut traj = String::from("step,mean_integrity,std_integrity\n");
        for k in 0..steps {
            let xs: Vec<f64> = summary.records.iter().map(|r| r.integrity[k]).collect();
            let _ = writeln!(traj, "{},{},{}", k + 1, sig6(mean(&xs)), sig6(sample_std(&xs)));
        }
        write_file(&out.join("grid_trajectory.csv"), &traj)?;
        let actions: Vec<f64> = summary.records.iter().map(|r| r.actions_taken as f64).collect();
        let csv = format!(
            "controller,steps,final_integrity_mean,final_integrity_std,mean_actions,runs\n{},{},{},{},{},{}\n",
            controller.name(),
            steps,
            sig6(summary.final_mean),
            sig6(summary.final_std),
            sig6(mean(&actions)),
            runs
        );
        write_file(&out.join("grid_summary.csv"), &csv)?;
    }
    Ok(summary)
}
