//! Deep Q-network with a hard-synced target network and uniform,
//! prioritized, or prefilled replay.

use crate::agents::{argmax, epsilon_greedy, features, linear_schedule};
use crate::baselines::HeuristicController;
use crate::config::{check_range, config_section};
use crate::env_scalar::{
    Action, ActionKind, DiscreteAction, Observation, ScalarEnv, ScalarEnvConfig, StochasticHealParams, OBS_DIM,
};
use crate::error::{Error, Result};
use crate::nn::{adam_update, Activation, AdamState, Gradients, Mlp};
use crate::policy::Controller;
use crate::replay::{anneal_beta, prefill_from_policy, PerParams, ReplayBuffer, Sample, Transition};
use crate::rng::{derive_seed, stream_rng, SimRng, Stream};

config_section! {
    pub struct DqnConfig ["dqn"] {
        pub gamma: f64 = 0.98,
        pub lr: f64 = 1e-3,
        pub batch: usize = 64,
        pub sync_period: usize = 100,
        pub capacity: usize = 10_000,
        pub hidden: usize = 64,
        pub episodes: usize = 300,
        pub eps_start: f64 = 1.0,
        pub eps_end: f64 = 0.05,
        /// Environment steps over which epsilon decays.
        pub eps_decay_steps: usize = 24_000,
        /// Buffer size before the first gradient step.
        pub learn_start: usize = 500,
        pub per_alpha: f64 = 0.6,
        pub per_beta_start: f64 = 0.4,
        pub per_beta_end: f64 = 1.0,
        pub per_eps: f64 = 0.01,
        /// Heuristic transitions stored before learning in transfer mode.
        pub prefill: usize = 500,
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        check_range("dqn.gamma", self.gamma, 0.0, 1.0)?;
        check_range("dqn.lr", self.lr, 0.0, 1.0)?;
        check_range("dqn.eps_start", self.eps_start, 0.0, 1.0)?;
        check_range("dqn.eps_end", self.eps_end, 0.0, 1.0)?;
        check_range("dqn.per_alpha", self.per_alpha, 0.0, 10.0)?;
        check_range("dqn.per_beta_start", self.per_beta_start, 0.0, 1.0)?;
        check_range("dqn.per_beta_end", self.per_beta_end, 0.0, 1.0)?;
        if self.per_eps.is_nan() || self.per_eps <= 0.0 {
            return Err(Error::config("dqn.per_eps", "must be > 0"));
        }
        if self.sync_period == 0 {
            return Err(Error::config("dqn.sync_period", "must be at least 1"));
        }
        if self.batch == 0 {
            return Err(Error::config("dqn.batch", "must be at least 1"));
        }
        Ok(())
    }

    pub fn per_params(&self) -> PerParams {
        PerParams {
            alpha: self.per_alpha,
            beta: self.per_beta_start,
            epsilon: self.per_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReplayMode {
    Uniform,
    Prioritized,
    /// Uniform replay seeded with heuristic-policy transitions.
    TransferPrefill,
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: Mlp,
    pub target: Mlp,
    pub buffer: ReplayBuffer,
    adam: AdamState,
    cfg: DqnConfig,
    mode: ReplayMode,
    train_steps: u64,
    rng: SimRng,
}

fn q_net(hidden: usize, rng: &mut SimRng) -> Result<Mlp> {
    Mlp::compact(
        OBS_DIM,
        &[hidden, hidden],
        DiscreteAction::COUNT,
        Activation::Relu,
        Activation::Identity,
        rng,
    )
}

impl DqnAgent {
    pub fn new(cfg: DqnConfig, mode: ReplayMode, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(seed, Stream::Agent);
        let online = q_net(cfg.hidden, &mut rng)?;
        Self::with_network(cfg, mode, online, rng)
    }

    /// Agent around a given online network; the target starts as a copy.
    pub fn with_network(cfg: DqnConfig, mode: ReplayMode, online: Mlp, rng: SimRng) -> Result<Self> {
        if online.input_dim() != OBS_DIM {
            return Err(Error::Argument(format!(
                "q-network input must be {OBS_DIM}, got {}",
                online.input_dim()
            )));
        }
        let buffer = match mode {
            ReplayMode::Prioritized => ReplayBuffer::prioritized(cfg.capacity, cfg.per_params()),
            ReplayMode::Uniform | ReplayMode::TransferPrefill => ReplayBuffer::uniform(cfg.capacity),
        };
        Ok(Self {
            target: online.clone(),
            adam: AdamState::new(&online, cfg.lr),
            online,
            buffer,
            cfg,
            mode,
            train_steps: 0,
            rng,
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn mode(&self) -> ReplayMode {
        self.mode
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn q_values(&self, obs: &[f64; OBS_DIM]) -> Vec<f64> {
        self.online.forward(&features(obs)).expect("fixed input dim")
    }

    pub fn act(&mut self, obs: &Observation, epsilon: f64) -> Result<DiscreteAction> {
        let q = self.q_values(&obs.to_array());
        DiscreteAction::from_index(epsilon_greedy(&q, epsilon, &mut self.rng)?)
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// Anneals the importance exponent; `progress` in `[0, 1]`.
    pub fn set_beta_progress(&mut self, progress: f64) {
        let beta = anneal_beta(self.cfg.per_beta_start, self.cfg.per_beta_end, progress);
        self.buffer.set_beta(beta);
    }

    /// Samples a minibatch and performs one optimization step.
    pub fn train_step(&mut self) -> Result<f64> {
        if self.buffer.len() < self.cfg.batch {
            return Err(Error::State(format!(
                "replay holds {} transitions, batch needs {}",
                self.buffer.len(),
                self.cfg.batch
            )));
        }
        let batch = self.buffer.sample(self.cfg.batch, &mut self.rng)?;
        self.train_on(&batch)
    }

    /// One optimization step on an explicit batch: weighted squared TD error
    /// on the taken actions, Adam on the online net, priority refresh, and a
    /// hard target copy every `sync_period` steps.
    pub fn train_on(&mut self, batch: &[Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::State("empty training batch".into()));
        }
        let n = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.online);
        let mut loss = 0.0;
        let mut td_errors = Vec::with_capacity(batch.len());
        for s in batch {
            let t = &s.transition;
            let a = t
                .action
                .index()
                .ok_or_else(|| Error::Argument("DQN transition with a continuous action".into()))?;
            let y = if t.terminal {
                t.reward
            } else {
                let next_q = self.target.forward(&features(&t.next_obs))?;
                t.reward + self.cfg.gamma * next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let trace = self.online.forward_trace(&features(&t.obs))?;
            let q = trace.output()[a];
            let td = y - q;
            loss += s.weight * td * td;
            td_errors.push(td);
            let mut upstream = vec![0.0; DiscreteAction::COUNT];
            upstream[a] = -2.0 * s.weight * td / n;
            self.online.backward_into(&trace, &upstream, &mut grads)?;
        }
        adam_update(&mut self.online, &grads, &mut self.adam)?;
        if self.buffer.is_prioritized() {
            let idx: Vec<usize> = batch.iter().map(|s| s.index).collect();
            self.buffer.update_priorities(&idx, &td_errors)?;
        }
        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.cfg.sync_period as u64) {
            self.target = self.online.clone();
        }
        Ok(loss / n)
    }

    /// Stores heuristic transitions from episodes seeded off `seed`.
    pub fn prefill(&mut self, env_cfg: &ScalarEnvConfig, heal: &StochasticHealParams, n: usize, seed: u64) -> Result<usize> {
        let mut env = ScalarEnv::new(env_cfg.clone(), heal.clone(), ActionKind::Discrete)?;
        let mut heuristic = HeuristicController;
        Ok(prefill_from_policy(&mut self.buffer, &mut heuristic, &mut env, n, seed)?.stored)
    }

    pub fn policy(&self) -> DqnPolicy {
        DqnPolicy {
            net: self.online.clone(),
        }
    }
}

pub fn training_episode_seed(train_seed: u64, episode: usize) -> u64 {
    derive_seed(train_seed, episode as u64)
}

/// Seed of the prefill episodes; distinct from training and evaluation.
pub fn prefill_seed(train_seed: u64) -> u64 {
    derive_seed(train_seed ^ 0x5052_4546_494C_4C00, 0)
}

/// Trains a DQN for `cfg.episodes` episodes with one gradient step per
/// environment step once `learn_start` transitions are stored.
pub fn train_dqn(
    env_cfg: &ScalarEnvConfig,
    heal: &StochasticHealParams,
    cfg: &DqnConfig,
    mode: ReplayMode,
    train_seed: u64,
) -> Result<DqnAgent> {
    let mut agent = DqnAgent::new(cfg.clone(), mode, train_seed)?;
    if mode == ReplayMode::TransferPrefill {
        agent.prefill(env_cfg, heal, cfg.prefill, prefill_seed(train_seed))?;
    }
    let mut env = ScalarEnv::new(env_cfg.clone(), heal.clone(), ActionKind::Discrete)?;
    let total_steps = cfg.episodes * env_cfg.horizon;
    let learn_start = cfg.learn_start.max(cfg.batch);
    let mut step = 0usize;
    for ep in 0..cfg.episodes {
        let mut obs = env.reset(training_episode_seed(train_seed, ep));
        loop {
            let eps = linear_schedule(cfg.eps_start, cfg.eps_end, cfg.eps_decay_steps, step);
            let a = agent.act(&obs, eps)?;
            let action = Action::Discrete(a);
            let out = env.step(action)?;
            agent.remember(Transition::new(&obs, action, out.reward, &out.observation, out.terminal));
            if agent.buffer.len() >= learn_start {
                agent.set_beta_progress(step as f64 / total_steps.max(1) as f64);
                agent.train_step()?;
            }
            step += 1;
            obs = out.observation;
            if out.terminal {
                break;
            }
        }
    }
    Ok(agent)
}

/// Greedy policy over a frozen Q-network.
#[derive(Debug, Clone)]
pub struct DqnPolicy {
    pub net: Mlp,
}

impl Controller for DqnPolicy {
    fn name(&self) -> &str {
        "dqn"
    }
    fn kind(&self) -> ActionKind {
        ActionKind::Discrete
    }
    fn act(&mut self, obs: &Observation, _rng: &mut SimRng) -> Action {
        let q = self.net.forward(&features(&obs.to_array())).expect("fixed input dim");
        Action::Discrete(DiscreteAction::ALL[argmax(&q)])
    }
}
