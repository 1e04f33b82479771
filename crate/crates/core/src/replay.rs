//! Transition storage: a FIFO ring with optional proportional prioritization.

use rand::Rng;

use crate::env_scalar::{Action, Observation, ScalarEnv, OBS_DIM};
use crate::error::{Error, Result};
use crate::policy::Controller;
use crate::rng::{derive_seed, stream_rng, Stream};

/// Action as stored in the buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EncodedAction {
    Index(usize),
    Dosage(f64),
}

impl EncodedAction {
    pub fn encode(action: Action) -> Self {
        match action {
            Action::Discrete(a) => EncodedAction::Index(a.index()),
            Action::Dosage(d) => EncodedAction::Dosage(d.clamp(0.0, 1.0)),
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            EncodedAction::Index(i) => Some(*i),
            EncodedAction::Dosage(_) => None,
        }
    }

    pub fn dosage(&self) -> Option<f64> {
        match self {
            EncodedAction::Dosage(d) => Some(*d),
            EncodedAction::Index(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    pub action: EncodedAction,
    pub reward: f64,
    pub next_obs: [f64; OBS_DIM],
    pub terminal: bool,
}

impl Transition {
    pub fn new(obs: &Observation, action: Action, reward: f64, next: &Observation, terminal: bool) -> Self {
        Self {
            obs: obs.to_array(),
            action: EncodedAction::encode(action),
            reward,
            next_obs: next.to_array(),
            terminal,
        }
    }
}

/// Proportional prioritization settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerParams {
    /// Exponent applied to stored priorities when sampling.
    pub alpha: f64,
    /// Importance-sampling exponent; annealed by the owner.
    pub beta: f64,
    /// Floor added to `|td error|`.
    pub epsilon: f64,
}

impl Default for PerParams {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta: 0.4,
            epsilon: 0.01,
        }
    }
}

/// Linear anneal of the importance exponent from `start` to `end`.
pub fn anneal_beta(start: f64, end: f64, progress: f64) -> f64 {
    start + (end - start) * progress.clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
    priorities: Vec<f64>,
    max_priority: f64,
    per: Option<PerParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub transition: Transition,
    /// Importance weight in `(0, 1]`; `1` for uniform sampling.
    pub weight: f64,
}

impl ReplayBuffer {
    pub fn uniform(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: Vec::new(),
            cursor: 0,
            priorities: Vec::new(),
            max_priority: 1.0,
            per: None,
        }
    }

    pub fn prioritized(capacity: usize, params: PerParams) -> Self {
        Self {
            per: Some(params),
            ..Self::uniform(capacity)
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_prioritized(&self) -> bool {
        self.per.is_some()
    }

    pub fn per_params(&self) -> Option<PerParams> {
        self.per
    }

    pub fn set_beta(&mut self, beta: f64) {
        if let Some(p) = &mut self.per {
            p.beta = beta;
        }
    }

    pub fn priority(&self, index: usize) -> Option<f64> {
        self.priorities.get(index).copied()
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }

    /// Stored transitions from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    pub fn push(&mut self, t: Transition) {
        let p = self.max_priority;
        if self.items.len() < self.capacity {
            self.items.push(t);
            self.priorities.push(p);
        } else {
            self.items[self.cursor] = t;
            self.priorities[self.cursor] = p;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Sample>> {
        if self.items.is_empty() {
            return Err(Error::State("cannot sample from an empty replay buffer".into()));
        }
        Ok((0..batch)
            .map(|_| {
                let index = rng.random_range(0..self.items.len());
                Sample {
                    index,
                    transition: self.items[index],
                    weight: 1.0,
                }
            })
            .collect())
    }

    /// Selection probabilities `p_i^alpha / sum_j p_j^alpha`.
    pub fn probabilities(&self) -> Vec<f64> {
        let alpha = self.per.map(|p| p.alpha).unwrap_or(0.0);
        let scaled: Vec<f64> = self.priorities.iter().map(|p| p.powf(alpha)).collect();
        let total: f64 = scaled.iter().sum();
        scaled.iter().map(|s| s / total).collect()
    }

    pub fn sample_prioritized<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Sample>> {
        let per = self
            .per
            .ok_or_else(|| Error::State("prioritized sampling on a uniform buffer".into()))?;
        if self.items.is_empty() {
            return Err(Error::State("cannot sample from an empty replay buffer".into()));
        }
        let mut cumulative = Vec::with_capacity(self.items.len());
        let mut total = 0.0;
        for p in &self.priorities {
            total += p.powf(per.alpha);
            cumulative.push(total);
        }
        let n = self.items.len() as f64;
        let mut out: Vec<Sample> = (0..batch)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                let index = cumulative.partition_point(|&c| c <= u).min(self.items.len() - 1);
                let prob = self.priorities[index].powf(per.alpha) / total;
                Sample {
                    index,
                    transition: self.items[index],
                    weight: (n * prob).powf(-per.beta),
                }
            })
            .collect();
        let max_w = out.iter().map(|s| s.weight).fold(0.0_f64, f64::max);
        if max_w > 0.0 {
            for s in &mut out {
                s.weight /= max_w;
            }
        }
        Ok(out)
    }

    /// Samples with the buffer's own mode.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Sample>> {
        if self.per.is_some() {
            self.sample_prioritized(batch, rng)
        } else {
            self.sample_uniform(batch, rng)
        }
    }

    /// Stores `|td| + epsilon` for each index. No-op on uniform buffers
    /// beyond the range check.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) -> Result<()> {
        if indices.len() != td_errors.len() {
            return Err(Error::Argument(format!(
                "{} indices but {} td errors",
                indices.len(),
                td_errors.len()
            )));
        }
        if let Some(bad) = indices.iter().find(|&&i| i >= self.items.len()) {
            return Err(Error::Argument(format!(
                "priority index {bad} out of range (size {})",
                self.items.len()
            )));
        }
        let Some(per) = self.per else { return Ok(()) };
        for (&i, &td) in indices.iter().zip(td_errors) {
            let td = if td.is_finite() { td.abs() } else { 0.0 };
            let p = td + per.epsilon;
            self.priorities[i] = p;
            self.max_priority = self.max_priority.max(p);
        }
        Ok(())
    }
}

/// Fills `buffer` with whole episodes of `policy` until `n_transitions`
/// have been stored; the last episode is cut at the quota.
pub fn prefill_from_policy(
    buffer: &mut ReplayBuffer,
    policy: &mut dyn Controller,
    env: &mut ScalarEnv,
    n_transitions: usize,
    seed: u64,
) -> Result<PrefillReport> {
    let mut stored = 0;
    let mut episodes = 0;
    let mut policy_rng = stream_rng(seed, Stream::Prefill);
    if env.kind() != policy.kind() {
        return Err(Error::config("policy", "prefill policy and environment action kinds differ"));
    }
    while stored < n_transitions {
        let mut obs = env.reset(derive_seed(seed, episodes as u64));
        policy.reset();
        episodes += 1;
        loop {
            let action = policy.act(&obs, &mut policy_rng);
            let out = env.step(action)?;
            buffer.push(Transition::new(&obs, action, out.reward, &out.observation, out.terminal));
            stored += 1;
            obs = out.observation;
            if out.terminal || stored >= n_transitions {
                break;
            }
        }
    }
    Ok(PrefillReport { stored, episodes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrefillReport {
    pub stored: usize,
    pub episodes: usize,
}
