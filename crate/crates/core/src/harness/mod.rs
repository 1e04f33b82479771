//! Experiment orchestration: seeded training, greedy evaluation, summary
//! tables, studies, and CSV output.

mod output;
mod studies;

pub use output::{
    action_freq_csv, action_frequencies, emit_figure_data, summary_csv, supply_reward_csv, trajectory_csv, write_file,
};
pub use studies::{
    budget_study, failure_rate, grid_run, gridsim, mode_name, stochastic_study, BudgetCurve, BudgetReport,
    GridController, GridRecord, GridSummary, StochasticReport,
};

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::agents::dqn::{self, train_dqn, DqnPolicy, ReplayMode};
use crate::agents::qlearning::{self, train_qlearning, QPolicy, QTable};
use crate::agents::td3::{self, train_td3, Td3Policy};
use crate::baselines::{HeuristicController, PiController, RandomController};
use crate::config::{check_range, config_section, Config};
use crate::env_scalar::{Action, ActionKind, DiscreteAction, ScalarEnv, ScalarEnvConfig, StochasticHealParams};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::par::{try_map_indexed, Execution};
use crate::policy::Controller;
use crate::rng::{derive_seed, stream_rng, Stream};

config_section! {
    pub struct BudgetConfig ["budget"] {
        /// Interaction steps per run.
        pub steps: usize = 60,
        pub runs: usize = 10,
        pub batch: usize = 32,
        /// Gradient steps per interaction step.
        pub updates_per_step: usize = 4,
        pub eps_start: f64 = 0.5,
        pub eps_end: f64 = 0.05,
        pub eps_decay_steps: usize = 40,
        pub sync_period: usize = 20,
        pub lr: f64 = 1e-3,
        /// Heuristic transitions stored before step 1 by the transfer variant.
        pub prefill: usize = 500,
    }
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("budget.steps", "must be at least 1"));
        }
        if self.runs == 0 {
            return Err(Error::config("budget.runs", "must be at least 1"));
        }
        if self.batch == 0 {
            return Err(Error::config("budget.batch", "must be at least 1"));
        }
        if self.sync_period == 0 {
            return Err(Error::config("budget.sync_period", "must be at least 1"));
        }
        check_range("budget.eps_start", self.eps_start, 0.0, 1.0)?;
        check_range("budget.eps_end", self.eps_end, 0.0, 1.0)?;
        check_range("budget.lr", self.lr, 0.0, 1.0)?;
        Ok(())
    }
}

pub const EVAL_RUNS: usize = 10;
pub const STOCHASTIC_RUNS: usize = 30;
/// A run fails if integrity drops below this at any step.
pub const FAILURE_THRESHOLD: f64 = 0.6;

/// Index mixed into the base seed to obtain the training seed.
const TRAIN_SEED_INDEX: u64 = Stream::TrainEnv as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentName {
    QLearning,
    Dqn,
    DqnPer,
    DqnTransfer,
    Td3,
    Adaptive,
    Heuristic,
    Random,
}

impl AgentName {
    pub const ALL: [AgentName; 8] = [
        AgentName::QLearning,
        AgentName::Dqn,
        AgentName::DqnPer,
        AgentName::DqnTransfer,
        AgentName::Td3,
        AgentName::Adaptive,
        AgentName::Heuristic,
        AgentName::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentName::QLearning => "qlearning",
            AgentName::Dqn => "dqn",
            AgentName::DqnPer => "dqn-per",
            AgentName::DqnTransfer => "dqn-transfer",
            AgentName::Td3 => "td3",
            AgentName::Adaptive => "adaptive",
            AgentName::Heuristic => "heuristic",
            AgentName::Random => "random",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|a| a.name()).collect::<Vec<_>>().join(", ")
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::config("agent", format!("unknown agent `{s}`; valid: {}", Self::valid_names())))
    }

    pub fn is_learned(self) -> bool {
        matches!(
            self,
            AgentName::QLearning | AgentName::Dqn | AgentName::DqnPer | AgentName::DqnTransfer | AgentName::Td3
        )
    }

    /// Action kind the agent uses when the environment leaves it open.
    pub fn native_kind(self) -> ActionKind {
        match self {
            AgentName::Td3 => ActionKind::Continuous,
            _ => ActionKind::Discrete,
        }
    }

    pub fn supports(self, kind: ActionKind) -> bool {
        match self {
            AgentName::Td3 => kind == ActionKind::Continuous,
            AgentName::Random | AgentName::Adaptive => true,
            _ => kind == ActionKind::Discrete,
        }
    }

    /// Environment variant used for this agent by `compare`.
    pub fn native_env(self) -> EnvVariant {
        match self.native_kind() {
            ActionKind::Continuous => EnvVariant::Continuous,
            ActionKind::Discrete => EnvVariant::Discrete,
        }
    }

    fn replay_mode(self) -> Option<ReplayMode> {
        match self {
            AgentName::Dqn => Some(ReplayMode::Uniform),
            AgentName::DqnPer => Some(ReplayMode::Prioritized),
            AgentName::DqnTransfer => Some(ReplayMode::TransferPrefill),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvVariant {
    Discrete,
    Continuous,
    /// Scalar environment with the stochastic healing wrapper on; the agent
    /// keeps its native action kind.
    Stochastic,
    Grid,
}

impl EnvVariant {
    pub const ALL: [EnvVariant; 4] = [
        EnvVariant::Discrete,
        EnvVariant::Continuous,
        EnvVariant::Stochastic,
        EnvVariant::Grid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvVariant::Discrete => "discrete",
            EnvVariant::Continuous => "continuous",
            EnvVariant::Stochastic => "stochastic",
            EnvVariant::Grid => "grid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.iter().copied().find(|e| e.name() == s.trim()).ok_or_else(|| {
            Error::config(
                "env",
                format!("unknown environment `{s}`; valid: discrete, continuous, stochastic, grid"),
            )
        })
    }
}

/// Action kind for an (agent, environment) pair, or a configuration error
/// naming the mismatch.
pub fn resolve_kind(agent: AgentName, env: EnvVariant) -> Result<ActionKind> {
    let kind = match env {
        EnvVariant::Grid => {
            return Err(Error::config(
                "env",
                "the grid environment is driven by the gridsim controllers none, greedy, oracle",
            ))
        }
        EnvVariant::Discrete => ActionKind::Discrete,
        EnvVariant::Continuous => ActionKind::Continuous,
        EnvVariant::Stochastic => agent.native_kind(),
    };
    if !agent.supports(kind) {
        let need = match agent.native_kind() {
            ActionKind::Continuous => "continuous",
            ActionKind::Discrete => "discrete",
        };
        return Err(Error::config(
            "env",
            format!("{} needs the {need} environment, got {}", agent.name(), env.name()),
        ));
    }
    Ok(kind)
}

/// Scalar environment parameters for a variant.
pub fn env_params(cfg: &Config, env: EnvVariant) -> (ScalarEnvConfig, StochasticHealParams) {
    let mut heal = cfg.heal.clone();
    if env == EnvVariant::Stochastic {
        heal.enabled = true;
    }
    (cfg.env.clone(), heal)
}

pub fn eval_seed(base: u64, run: usize) -> u64 {
    base.wrapping_add(run as u64)
}

pub fn train_seed(base: u64) -> u64 {
    derive_seed(base, TRAIN_SEED_INDEX)
}

/// Bookkeeping of environment seeds used for training and evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeedLedger {
    pub train: BTreeSet<u64>,
    pub eval: BTreeSet<u64>,
}

impl SeedLedger {
    pub fn check_disjoint(&self) -> Result<()> {
        match self.train.intersection(&self.eval).next() {
            Some(s) => Err(Error::State(format!("seed {s} used for both training and evaluation"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub step: usize,
    pub integrity: f64,
    pub action: &'static str,
    pub dosage: f64,
    pub reward: f64,
    pub cumulative_supply: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub seed: u64,
    pub rows: Vec<StepRow>,
    pub final_integrity: f64,
    pub total_reward: f64,
    pub total_supply: f64,
}

impl RunRecord {
    pub fn min_integrity(&self) -> f64 {
        self.rows.iter().map(|r| r.integrity).fold(f64::INFINITY, f64::min)
    }

    pub fn failed(&self, threshold: f64) -> bool {
        self.min_integrity() < threshold
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub agent: String,
    pub env: String,
    pub mean_reward: f64,
    pub final_mean: f64,
    pub final_std: f64,
    pub mean_supply: f64,
    pub runs: usize,
}

impl SummaryRow {
    pub fn from_records(agent: &str, env: &str, records: &[RunRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Argument("summary over zero runs".into()));
        }
        let finals: Vec<f64> = records.iter().map(|r| r.final_integrity).collect();
        let rewards: Vec<f64> = records.iter().map(|r| r.total_reward).collect();
        let supplies: Vec<f64> = records.iter().map(|r| r.total_supply).collect();
        Ok(Self {
            agent: agent.to_string(),
            env: env.to_string(),
            mean_reward: mean(&rewards),
            final_mean: mean(&finals),
            final_std: sample_std(&finals),
            mean_supply: mean(&supplies),
            runs: records.len(),
        })
    }
}

fn action_label(action: Action) -> (&'static str, f64) {
    match action {
        Action::Discrete(a) => (a.label(), 0.0),
        Action::Dosage(d) if d > 0.0 => ("dosage", d),
        Action::Dosage(d) => (DiscreteAction::NoAction.label(), d),
    }
}

/// Greedy rollout of `policy` from `env.reset(seed)` for the full horizon.
/// If the episode ends early at zero integrity, the remaining rows repeat
/// the absorbing state with no action and zero reward.
pub fn run_episode(env: &mut ScalarEnv, policy: &mut dyn Controller, seed: u64, run_id: usize) -> Result<RunRecord> {
    if env.kind() != policy.kind() {
        return Err(Error::config(
            "policy",
            format!("{} acts in a different action space than the environment", policy.name()),
        ));
    }
    let horizon = env.config().horizon;
    let mut obs = env.reset(seed);
    policy.reset();
    let mut rng = stream_rng(seed, Stream::Policy);
    let mut rows = Vec::with_capacity(horizon);
    let mut supply = 0.0;
    let mut total_reward = 0.0;
    for step in 1..=horizon {
        if env.is_done() {
            rows.push(StepRow {
                step,
                integrity: env.integrity(),
                action: DiscreteAction::NoAction.label(),
                dosage: 0.0,
                reward: 0.0,
                cumulative_supply: supply,
            });
            continue;
        }
        let action = policy.act(&obs, &mut rng);
        let out = env.step(action)?;
        supply += out.supply_spent_this_step;
        total_reward += out.reward;
        let (label, dosage) = action_label(action);
        rows.push(StepRow {
            step,
            integrity: out.observation.integrity,
            action: label,
            dosage,
            reward: out.reward,
            cumulative_supply: supply,
        });
        obs = out.observation;
    }
    Ok(RunRecord {
        run_id,
        seed,
        final_integrity: env.integrity(),
        total_reward,
        total_supply: supply,
        rows,
    })
}

/// Runs `runs` greedy episodes on seeds `base_seed + i`.
pub fn evaluate(
    env_cfg: &ScalarEnvConfig,
    heal: &StochasticHealParams,
    kind: ActionKind,
    factory: &(dyn Fn() -> Box<dyn Controller> + Sync),
    base_seed: u64,
    runs: usize,
    exec: Execution,
) -> Result<Vec<RunRecord>> {
    try_map_indexed(exec, runs, |i| {
        let mut env = ScalarEnv::new(env_cfg.clone(), heal.clone(), kind)?;
        let mut policy = factory();
        run_episode(&mut env, policy.as_mut(), eval_seed(base_seed, i), i)
    })
}

/// A frozen policy ready for evaluation or persistence.
#[derive(Debug, Clone)]
pub enum TrainedPolicy {
    Table(QTable),
    Dqn(DqnPolicy),
    Td3(Td3Policy),
    Scripted(AgentName),
}

impl TrainedPolicy {
    pub fn controller(&self, cfg: &Config, kind: ActionKind) -> Box<dyn Controller> {
        match self {
            TrainedPolicy::Table(t) => Box::new(QPolicy { table: t.clone() }),
            TrainedPolicy::Dqn(p) => Box::new(p.clone()),
            TrainedPolicy::Td3(p) => Box::new(p.clone()),
            TrainedPolicy::Scripted(AgentName::Heuristic) => Box::new(HeuristicController),
            TrainedPolicy::Scripted(AgentName::Adaptive) => Box::new(PiController::new(cfg.pi.clone(), kind)),
            TrainedPolicy::Scripted(_) => Box::new(RandomController { kind }),
        }
    }

    pub fn artifact_name(&self) -> &'static str {
        match self {
            TrainedPolicy::Table(_) => "policy.csv",
            TrainedPolicy::Dqn(_) | TrainedPolicy::Td3(_) => "policy.mlp",
            TrainedPolicy::Scripted(_) => "policy.txt",
        }
    }

    pub fn artifact(&self, provenance: &[(&str, String)]) -> String {
        match self {
            TrainedPolicy::Table(t) => t.to_csv(provenance),
            TrainedPolicy::Dqn(p) => p.net.to_text(provenance),
            TrainedPolicy::Td3(p) => p.actor.to_text(provenance),
            TrainedPolicy::Scripted(a) => {
                let mut s: String = provenance.iter().map(|(k, v)| format!("# {k}={v}\n")).collect();
                s.push_str(&format!("scripted {}\n", a.name()));
                s
            }
        }
    }

    /// Reads the artifact written by a previous training run from `dir`.
    pub fn load(agent: AgentName, dir: &Path, cfg: &Config) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        Ok(match agent {
            AgentName::QLearning => TrainedPolicy::Table(QTable::from_csv(
                &read("policy.csv")?,
                cfg.qlearning.alpha,
                cfg.qlearning.gamma,
            )?),
            AgentName::Dqn | AgentName::DqnPer | AgentName::DqnTransfer => TrainedPolicy::Dqn(DqnPolicy {
                net: Mlp::from_text(&read("policy.mlp")?)?,
            }),
            AgentName::Td3 => TrainedPolicy::Td3(Td3Policy {
                actor: Mlp::from_text(&read("policy.mlp")?)?,
            }),
            other => TrainedPolicy::Scripted(other),
        })
    }
}

/// Trains `agent` on the given environment and returns the frozen policy
/// with every environment seed consumed during training.
pub fn train_agent(
    agent: AgentName,
    cfg: &Config,
    env: EnvVariant,
    base_seed: u64,
) -> Result<(TrainedPolicy, Vec<u64>)> {
    resolve_kind(agent, env)?;
    let (env_cfg, heal) = env_params(cfg, env);
    let ts = train_seed(base_seed);
    let horizon = env_cfg.horizon.max(1);
    Ok(match agent {
        AgentName::QLearning => {
            let table = train_qlearning(&env_cfg, &heal, &cfg.qlearning, ts)?;
            let seeds = (0..cfg.qlearning.episodes)
                .map(|ep| qlearning::training_episode_seed(ts, ep))
                .collect();
            (TrainedPolicy::Table(table), seeds)
        }
        AgentName::Dqn | AgentName::DqnPer | AgentName::DqnTransfer => {
            let mode = agent.replay_mode().expect("dqn variant");
            let trained = train_dqn(&env_cfg, &heal, &cfg.dqn, mode, ts)?;
            let mut seeds: Vec<u64> = (0..cfg.dqn.episodes)
                .map(|ep| dqn::training_episode_seed(ts, ep))
                .collect();
            if mode == ReplayMode::TransferPrefill {
                let base = dqn::prefill_seed(ts);
                seeds.extend((0..=cfg.dqn.prefill.div_ceil(horizon)).map(|ep| derive_seed(base, ep as u64)));
            }
            (TrainedPolicy::Dqn(trained.policy()), seeds)
        }
        AgentName::Td3 => {
            let trained = train_td3(&env_cfg, &heal, &cfg.td3, ts)?;
            let seeds = (0..=cfg.td3.total_steps / horizon)
                .map(|ep| td3::training_episode_seed(ts, ep))
                .collect();
            (TrainedPolicy::Td3(trained.policy()), seeds)
        }
        scripted => (TrainedPolicy::Scripted(scripted), Vec::new()),
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub agent: AgentName,
    pub env: EnvVariant,
    pub config: Config,
    pub eval_runs: usize,
    pub seed: u64,
    /// Root output directory; files go to `<out>/<agent>/<env>/`.
    pub out: Option<PathBuf>,
    pub exec: Execution,
}

impl ExperimentSpec {
    pub fn new(agent: AgentName, env: EnvVariant, seed: u64) -> Self {
        Self {
            agent,
            env,
            config: Config::default(),
            eval_runs: EVAL_RUNS,
            seed,
            out: None,
            exec: Execution::default(),
        }
    }

    pub fn run_dir(&self) -> Option<PathBuf> {
        self.out
            .as_ref()
            .map(|o| o.join(self.agent.name()).join(self.env.name()))
    }

    pub fn validate(&self) -> Result<ActionKind> {
        self.config.validate()?;
        if self.eval_runs == 0 {
            return Err(Error::Argument("need at least one evaluation run".into()));
        }
        resolve_kind(self.agent, self.env)
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub policy: TrainedPolicy,
    pub summary: SummaryRow,
    pub records: Vec<RunRecord>,
    pub seeds: SeedLedger,
}

pub fn provenance(cfg: &Config, agent: AgentName, env: EnvVariant, seed: u64) -> Vec<(&'static str, String)> {
    vec![
        ("agent", agent.name().to_string()),
        ("env", env.name().to_string()),
        ("seed", seed.to_string()),
        ("config_hash", cfg.hash()),
    ]
}

/// Writes the summary, figure data, and `policy_artifact` into `dir`,
/// removing the directory again if any write fails.
fn persist_run(dir: &Path, summary: &SummaryRow, records: &[RunRecord], artifact: Option<(&str, String)>) -> Result<()> {
    let result = (|| {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("summary.csv"), &summary_csv(std::slice::from_ref(summary)))?;
        emit_figure_data(records, dir)?;
        if let Some((name, text)) = artifact {
            write_file(&dir.join(name), &text)?;
        }
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(dir);
    }
    result
}

/// Trains per the agent's configured budget, evaluates greedily on seeds
/// `seed + i`, and persists results when an output directory is set.
pub fn train_and_evaluate(spec: &ExperimentSpec) -> Result<Outcome> {
    let kind = spec.validate()?;
    let (policy, train_seeds) = train_agent(spec.agent, &spec.config, spec.env, spec.seed)?;
    let (env_cfg, heal) = env_params(&spec.config, spec.env);
    let cfg = &spec.config;
    let frozen = policy.clone();
    let make = move || frozen.controller(cfg, kind);
    let records = evaluate(&env_cfg, &heal, kind, &make, spec.seed, spec.eval_runs, spec.exec)?;
    let seeds = SeedLedger {
        train: train_seeds.into_iter().collect(),
        eval: (0..spec.eval_runs).map(|i| eval_seed(spec.seed, i)).collect(),
    };
    seeds.check_disjoint()?;
    let summary = SummaryRow::from_records(spec.agent.name(), spec.env.name(), &records)?;
    if let Some(dir) = spec.run_dir() {
        let prov = provenance(cfg, spec.agent, spec.env, spec.seed);
        let artifact = policy.artifact(&prov);
        persist_run(&dir, &summary, &records, Some((policy.artifact_name(), artifact)))?;
    }
    Ok(Outcome {
        policy,
        summary,
        records,
        seeds,
    })
}

/// Evaluates a stored policy from `<out>/<agent>/<env>/` and writes the
/// results under `eval/` in the same directory.
pub fn evaluate_stored(spec: &ExperimentSpec) -> Result<SummaryRow> {
    let kind = spec.validate()?;
    let dir = spec
        .run_dir()
        .ok_or_else(|| Error::Argument("evaluation needs an output directory holding the policy".into()))?;
    let policy = TrainedPolicy::load(spec.agent, &dir, &spec.config)?;
    let (env_cfg, heal) = env_params(&spec.config, spec.env);
    let cfg = &spec.config;
    let make = move || policy.controller(cfg, kind);
    let records = evaluate(&env_cfg, &heal, kind, &make, spec.seed, spec.eval_runs, spec.exec)?;
    let summary = SummaryRow::from_records(spec.agent.name(), spec.env.name(), &records)?;
    persist_run(&dir.join("eval"), &summary, &records, None)?;
    Ok(summary)
}

/// Trains and evaluates each agent in its native environment on a shared
/// seed set; rows sorted by final integrity, best first. Writes
/// `compare.csv` plus per-agent directories when `out` is set.
pub fn compare(
    agents: &[AgentName],
    cfg: &Config,
    seed: u64,
    runs: usize,
    out: Option<&Path>,
    exec: Execution,
) -> Result<Vec<SummaryRow>> {
    if agents.len() < 2 {
        return Err(Error::Argument(format!(
            "compare needs at least two agents, got {}",
            agents.len()
        )));
    }
    cfg.validate()?;
    let outcomes = try_map_indexed(exec, agents.len(), |i| {
        let spec = ExperimentSpec {
            agent: agents[i],
            env: agents[i].native_env(),
            config: cfg.clone(),
            eval_runs: runs,
            seed,
            out: out.map(Path::to_path_buf),
            exec,
        };
        train_and_evaluate(&spec).map(|o| o.summary)
    })?;
    let mut rows = outcomes;
    rows.sort_by(|a, b| b.final_mean.total_cmp(&a.final_mean));
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_file(&out.join("compare.csv"), &summary_csv(&rows))?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_scalar::Observation;
    use crate::rng::SimRng;

    struct Idle;

    impl Controller for Idle {
        fn name(&self) -> &str {
            "idle"
        }
        fn kind(&self) -> ActionKind {
            ActionKind::Discrete
        }
        fn act(&mut self, _obs: &Observation, _rng: &mut SimRng) -> Action {
            Action::Discrete(DiscreteAction::NoAction)
        }
    }

    #[test]
    fn idle_policy_without_damage_is_flat() {
        let cfg = ScalarEnvConfig::default().without_damage();
        let mut env = ScalarEnv::new(cfg, StochasticHealParams::default(), ActionKind::Discrete).unwrap();
        let rec = run_episode(&mut env, &mut Idle, 3, 0).unwrap();
        assert_eq!(rec.rows.len(), 120);
        assert!(rec.rows.iter().all(|r| r.integrity == 0.91));
    }

    #[test]
    fn run_episode_is_deterministic_and_supply_monotone() {
        let mk = || ScalarEnv::new(ScalarEnvConfig::default(), StochasticHealParams::default(), ActionKind::Discrete);
        let mut p = RandomController {
            kind: ActionKind::Discrete,
        };
        let a = run_episode(&mut mk().unwrap(), &mut p, 11, 0).unwrap();
        let b = run_episode(&mut mk().unwrap(), &mut p, 11, 0).unwrap();
        assert_eq!(a, b);
        assert!(a.rows.windows(2).all(|w| w[1].cumulative_supply >= w[0].cumulative_supply));
    }

    #[test]
    fn mismatched_kind_is_config_error() {
        let mut env =
            ScalarEnv::new(ScalarEnvConfig::default(), StochasticHealParams::default(), ActionKind::Continuous).unwrap();
        let err = run_episode(&mut env, &mut HeuristicController, 1, 0).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn sample_std_hand_case() {
        // mean 0.99, squared deviations 0 + 1e-4 + 1e-4, / 2 -> 1e-4
        let s = sample_std(&[0.99, 0.98, 1.00]);
        assert!((s - 0.01).abs() < 1e-12);
        assert_eq!(sample_std(&[0.5]), 0.0);
    }

    #[test]
    fn td3_on_discrete_is_rejected() {
        let err = resolve_kind(AgentName::Td3, EnvVariant::Discrete).unwrap_err();
        assert!(err.to_string().contains("continuous"));
        assert_eq!(resolve_kind(AgentName::Td3, EnvVariant::Stochastic).unwrap(), ActionKind::Continuous);
        assert!(resolve_kind(AgentName::Heuristic, EnvVariant::Continuous).is_err());
    }

    #[test]
    fn unknown_agent_lists_valid_names() {
        let err = AgentName::parse("ppo").unwrap_err();
        assert!(err.to_string().contains("qlearning"));
    }

    #[test]
    fn compare_needs_two_agents() {
        let err = compare(&[AgentName::Random], &Config::default(), 1, 2, None, Execution::Sequential).unwrap_err();
        assert!(err.is_usage());
    }

    #[test]
    fn single_run_std_is_zero() {
        let spec = ExperimentSpec {
            eval_runs: 1,
            ..ExperimentSpec::new(AgentName::Random, EnvVariant::Discrete, 5)
        };
        let o = train_and_evaluate(&spec).unwrap();
        assert_eq!(o.summary.final_std, 0.0);
        assert_eq!(o.summary.runs, 1);
    }

    #[test]
    fn summary_mean_matches_records() {
        let spec = ExperimentSpec::new(AgentName::Heuristic, EnvVariant::Discrete, 9);
        let o = train_and_evaluate(&spec).unwrap();
        let finals: Vec<f64> = o.records.iter().map(|r| r.final_integrity).collect();
        assert!((o.summary.final_mean - mean(&finals)).abs() < 1e-12);
    }
}
