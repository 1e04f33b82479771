//! TD3 actor-critic for the continuous dosage environment.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::agents::features;
use crate::config::{check_range, config_section};
use crate::env_scalar::{Action, ActionKind, Observation, ScalarEnv, ScalarEnvConfig, StochasticHealParams, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{adam_update, Activation, AdamState, Gradients, Mlp};
use crate::policy::Controller;
use crate::replay::{ReplayBuffer, Sample, Transition};
use crate::rng::{derive_seed, stream_rng, SimRng, Stream};

config_section! {
    pub struct Td3Config ["td3"] {
        pub gamma: f64 = 0.98,
        pub actor_lr: f64 = 1e-3,
        pub critic_lr: f64 = 1e-3,
        pub tau: f64 = 0.005,
        pub policy_delay: usize = 2,
        pub target_noise: f64 = 0.2,
        pub target_noise_clip: f64 = 0.5,
        pub explore_noise: f64 = 0.1,
        pub batch: usize = 64,
        /// Uniform-random steps before the actor drives exploration.
        pub warmup: usize = 500,
        pub total_steps: usize = 30_000,
        pub capacity: usize = 100_000,
        pub hidden: usize = 64,
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        check_range("td3.gamma", self.gamma, 0.0, 1.0)?;
        check_range("td3.actor_lr", self.actor_lr, 0.0, 1.0)?;
        check_range("td3.critic_lr", self.critic_lr, 0.0, 1.0)?;
        check_range("td3.tau", self.tau, 0.0, 1.0)?;
        check_range("td3.target_noise", self.target_noise, 0.0, 10.0)?;
        check_range("td3.target_noise_clip", self.target_noise_clip, 0.0, 10.0)?;
        check_range("td3.explore_noise", self.explore_noise, 0.0, 10.0)?;
        if self.policy_delay == 0 {
            return Err(Error::config("td3.policy_delay", "must be at least 1"));
        }
        if self.batch == 0 {
            return Err(Error::config("td3.batch", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub actor_target: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    pub buffer: ReplayBuffer,
    actor_adam: AdamState,
    critic1_adam: AdamState,
    critic2_adam: AdamState,
    cfg: Td3Config,
    calls: u64,
    rng: SimRng,
}

fn critic_input(obs: &[f64; OBS_DIM], dosage: f64) -> [f64; OBS_DIM + 1] {
    let f = features(obs);
    [f[0], f[1], f[2], dosage]
}

impl Td3Agent {
    pub fn new(cfg: Td3Config, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(seed, Stream::Agent);
        let h = [cfg.hidden, cfg.hidden];
        let actor = Mlp::compact(OBS_DIM, &h, 1, Activation::Relu, Activation::Sigmoid, &mut rng)?;
        let critic1 = Mlp::compact(OBS_DIM + 1, &h, 1, Activation::Relu, Activation::Identity, &mut rng)?;
        let critic2 = Mlp::compact(OBS_DIM + 1, &h, 1, Activation::Relu, Activation::Identity, &mut rng)?;
        Self::from_networks(cfg, actor, critic1, critic2, rng)
    }

    /// Agent around given networks; targets start as copies.
    pub fn from_networks(cfg: Td3Config, actor: Mlp, critic1: Mlp, critic2: Mlp, rng: SimRng) -> Result<Self> {
        cfg.validate()?;
        if actor.input_dim() != OBS_DIM || actor.output_dim() != 1 {
            return Err(Error::Argument("actor must map 3 inputs to 1 output".into()));
        }
        for c in [&critic1, &critic2] {
            if c.input_dim() != OBS_DIM + 1 || c.output_dim() != 1 {
                return Err(Error::Argument("critics must map 4 inputs to 1 output".into()));
            }
        }
        Ok(Self {
            actor_adam: AdamState::new(&actor, cfg.actor_lr),
            critic1_adam: AdamState::new(&critic1, cfg.critic_lr),
            critic2_adam: AdamState::new(&critic2, cfg.critic_lr),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            buffer: ReplayBuffer::uniform(cfg.capacity),
            cfg,
            calls: 0,
            rng,
        })
    }

    pub fn config(&self) -> &Td3Config {
        &self.cfg
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// Deterministic actor output in [0, 1].
    pub fn actor_dosage(&self, obs: &[f64; OBS_DIM]) -> f64 {
        self.actor.forward(&features(obs)).expect("fixed input dim")[0]
    }

    pub fn select_action(&mut self, obs: &Observation, explore: bool) -> f64 {
        let mu = self.actor_dosage(&obs.to_array());
        let sigma = self.cfg.explore_noise;
        td3_select_action(mu, explore, sigma, &mut self.rng)
    }

    /// Twin-min bootstrap target for one transition, with smoothing noise
    /// on the target actor's action.
    fn target_value(&mut self, t: &Transition) -> Result<f64> {
        if t.terminal {
            return Ok(t.reward);
        }
        let mu = self.actor_target.forward(&features(&t.next_obs))?[0];
        let noise = if self.cfg.target_noise > 0.0 {
            let n = Normal::new(0.0, self.cfg.target_noise).expect("validated std");
            n.sample(&mut self.rng)
                .clamp(-self.cfg.target_noise_clip, self.cfg.target_noise_clip)
        } else {
            0.0
        };
        let a_next = (mu + noise).clamp(0.0, 1.0);
        let x = critic_input(&t.next_obs, a_next);
        let q1 = self.critic1_target.forward(&x)?[0];
        let q2 = self.critic2_target.forward(&x)?[0];
        Ok(t.reward + self.cfg.gamma * q1.min(q2))
    }

    pub fn train_step(&mut self) -> Result<(f64, Option<f64>)> {
        if self.buffer.len() < self.cfg.batch {
            return Err(Error::State(format!(
                "replay holds {} transitions, batch needs {}",
                self.buffer.len(),
                self.cfg.batch
            )));
        }
        let batch = self.buffer.sample_uniform(self.cfg.batch, &mut self.rng)?;
        self.train_on(&batch)
    }

    /// Critic regression on the batch; on every `policy_delay`-th call also
    /// an actor ascent step and soft target updates.
    pub fn train_on(&mut self, batch: &[Sample]) -> Result<(f64, Option<f64>)> {
        if batch.is_empty() {
            return Err(Error::State("empty training batch".into()));
        }
        let n = batch.len() as f64;
        let mut targets = Vec::with_capacity(batch.len());
        for s in batch {
            targets.push(self.target_value(&s.transition)?);
        }

        let mut g1 = Gradients::zeros_like(&self.critic1);
        let mut g2 = Gradients::zeros_like(&self.critic2);
        let mut loss = 0.0;
        for (s, &y) in batch.iter().zip(&targets) {
            let t = &s.transition;
            let a = t
                .action
                .dosage()
                .ok_or_else(|| Error::Argument("TD3 transition with a discrete action".into()))?;
            let x = critic_input(&t.obs, a);
            for (net, g) in [(&self.critic1, &mut g1), (&self.critic2, &mut g2)] {
                let trace = net.forward_trace(&x)?;
                let d = trace.output()[0] - y;
                loss += d * d;
                net.backward_into(&trace, &[2.0 * d / n], g)?;
            }
        }
        adam_update(&mut self.critic1, &g1, &mut self.critic1_adam)?;
        adam_update(&mut self.critic2, &g2, &mut self.critic2_adam)?;
        self.calls += 1;
        let critic_loss = loss / (2.0 * n);

        if !self.calls.is_multiple_of(self.cfg.policy_delay as u64) {
            return Ok((critic_loss, None));
        }

        // Actor ascends Q1(s, actor(s)): minimize -mean Q1.
        let mut ga = Gradients::zeros_like(&self.actor);
        let mut scratch = Gradients::zeros_like(&self.critic1);
        let mut actor_loss = 0.0;
        for s in batch {
            let f = features(&s.transition.obs);
            let a_trace = self.actor.forward_trace(&f)?;
            let a = a_trace.output()[0];
            let c_trace = self.critic1.forward_trace(&critic_input(&s.transition.obs, a))?;
            actor_loss -= c_trace.output()[0];
            let dx = self.critic1.backward_into(&c_trace, &[-1.0 / n], &mut scratch)?;
            self.actor.backward_into(&a_trace, &[dx[OBS_DIM]], &mut ga)?;
        }
        adam_update(&mut self.actor, &ga, &mut self.actor_adam)?;
        let tau = self.cfg.tau;
        self.actor_target.soft_update_from(&self.actor, tau);
        self.critic1_target.soft_update_from(&self.critic1, tau);
        self.critic2_target.soft_update_from(&self.critic2, tau);
        Ok((critic_loss, Some(actor_loss / n)))
    }

    /// Bootstrap targets for a batch without noise, and the single-critic
    /// values they are bounded by.
    pub fn noiseless_targets(&self, batch: &[Sample]) -> Result<Vec<(f64, f64, f64)>> {
        let mut out = Vec::with_capacity(batch.len());
        for s in batch {
            let t = &s.transition;
            let mu = self.actor_target.forward(&features(&t.next_obs))?[0];
            let x = critic_input(&t.next_obs, mu);
            let q1 = self.critic1_target.forward(&x)?[0];
            let q2 = self.critic2_target.forward(&x)?[0];
            let mask = if t.terminal { 0.0 } else { self.cfg.gamma };
            out.push((t.reward + mask * q1.min(q2), t.reward + mask * q1, t.reward + mask * q2));
        }
        Ok(out)
    }

    pub fn policy(&self) -> Td3Policy {
        Td3Policy {
            actor: self.actor.clone(),
        }
    }
}

/// Adds clamped Gaussian exploration noise of std `sigma` when `explore`.
pub fn td3_select_action<R: Rng + ?Sized>(actor_output: f64, explore: bool, sigma: f64, rng: &mut R) -> f64 {
    let a = if explore && sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("positive std");
        actor_output + n.sample(rng)
    } else {
        actor_output
    };
    a.clamp(0.0, 1.0)
}

pub fn training_episode_seed(train_seed: u64, episode: usize) -> u64 {
    derive_seed(train_seed, episode as u64)
}

/// Trains for `cfg.total_steps` environment steps; the first `cfg.warmup`
/// use uniform-random dosages, then one train step per environment step.
pub fn train_td3(
    env_cfg: &ScalarEnvConfig,
    heal: &StochasticHealParams,
    cfg: &Td3Config,
    train_seed: u64,
) -> Result<Td3Agent> {
    let mut agent = Td3Agent::new(cfg.clone(), train_seed)?;
    let mut env = ScalarEnv::new(env_cfg.clone(), heal.clone(), ActionKind::Continuous)?;
    let mut episode = 0;
    let mut obs = env.reset(training_episode_seed(train_seed, episode));
    for step in 0..cfg.total_steps {
        let dosage = if step < cfg.warmup {
            agent.rng.random::<f64>()
        } else {
            agent.select_action(&obs, true)
        };
        let action = Action::Dosage(dosage);
        let out = env.step(action)?;
        agent.remember(Transition::new(&obs, action, out.reward, &out.observation, out.terminal));
        if step >= cfg.warmup && agent.buffer.len() >= cfg.batch {
            agent.train_step()?;
        }
        obs = out.observation;
        if out.terminal {
            episode += 1;
            obs = env.reset(training_episode_seed(train_seed, episode));
        }
    }
    Ok(agent)
}

/// Deterministic policy over a frozen actor.
#[derive(Debug, Clone)]
pub struct Td3Policy {
    pub actor: Mlp,
}

impl Controller for Td3Policy {
    fn name(&self) -> &str {
        "td3"
    }
    fn kind(&self) -> ActionKind {
        ActionKind::Continuous
    }
    fn act(&mut self, obs: &Observation, _rng: &mut SimRng) -> Action {
        let y = self.actor.forward(&features(&obs.to_array())).expect("fixed input dim")[0];
        Action::Dosage(y.clamp(0.0, 1.0))
    }
}
