//! Tabular Q-learning over integrity bins.

use std::fmt::Write as _;

use rand::Rng;

use crate::agents::{argmax, epsilon_greedy, linear_schedule};
use crate::config::{check_range, config_section};
use crate::env_scalar::{
    discretize, Action, ActionKind, DiscreteAction, Observation, ScalarEnv, ScalarEnvConfig,
    StochasticHealParams,
};
use crate::error::{Error, Result};
use crate::policy::Controller;
use crate::rng::{derive_seed, stream_rng, SimRng, Stream};

config_section! {
    pub struct QLearningConfig ["qlearning"] {
        pub bins: usize = 20,
        pub alpha: f64 = 0.1,
        pub gamma: f64 = 0.95,
        pub episodes: usize = 300,
        pub eps_start: f64 = 1.0,
        pub eps_end: f64 = 0.05,
        pub eps_decay_episodes: usize = 200,
        /// Training episodes start at integrity drawn from `[start_low, 1]`;
        /// values of 1 or more keep the environment's initial integrity.
        pub start_low: f64 = 0.5,
    }
}

impl QLearningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::config("qlearning.bins", "must be at least 1"));
        }
        check_range("qlearning.alpha", self.alpha, 0.0, 1.0)?;
        check_range("qlearning.gamma", self.gamma, 0.0, 1.0)?;
        check_range("qlearning.eps_start", self.eps_start, 0.0, 1.0)?;
        check_range("qlearning.eps_end", self.eps_end, 0.0, 1.0)?;
        check_range("qlearning.start_low", self.start_low, 0.0, f64::MAX)?;
        Ok(())
    }
}

/// Dense `bins x actions` action-value table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    bins: usize,
    actions: usize,
    values: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTable {
    pub fn new(bins: usize, actions: usize, alpha: f64, gamma: f64) -> Self {
        Self {
            bins,
            actions,
            values: vec![0.0; bins * actions],
            alpha,
            gamma,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.bins || a >= self.actions {
            return Err(Error::Argument(format!(
                "q-table index ({s}, {a}) outside {}x{}",
                self.bins, self.actions
            )));
        }
        Ok(())
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn greedy(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    /// Bellman update; returns the TD error.
    pub fn q_update(&mut self, s: usize, a: usize, r: f64, s_next: usize, terminal: bool) -> Result<f64> {
        self.check(s, a)?;
        self.check(s_next, 0)?;
        let bootstrap = if terminal {
            0.0
        } else {
            self.row(s_next).iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        let td = r + self.gamma * bootstrap - self.get(s, a);
        let idx = s * self.actions + a;
        self.values[idx] += self.alpha * td;
        Ok(td)
    }

    /// CSV with `bin,action,value` rows after `#` provenance lines.
    pub fn to_csv(&self, provenance: &[(&str, String)]) -> String {
        let mut out = String::new();
        for (k, v) in provenance {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("bin,action,value\n");
        for s in 0..self.bins {
            for a in 0..self.actions {
                let label = DiscreteAction::from_index(a).map(|x| x.label()).unwrap_or("?");
                let _ = writeln!(out, "{s},{label},{}", self.get(s, a));
            }
        }
        out
    }
}

impl QTable {
    /// Parses the output of [`QTable::to_csv`]; values round-trip exactly.
    pub fn from_csv(text: &str, alpha: f64, gamma: f64) -> Result<Self> {
        let mut entries = Vec::new();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != "bin,action,value" {
                    return Err(Error::Parse {
                        line: i + 1,
                        reason: format!("expected header `bin,action,value`, got `{line}`"),
                    });
                }
                header_seen = true;
                continue;
            }
            let parse_err = |reason: String| Error::Parse { line: i + 1, reason };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, got {}", fields.len())));
            }
            let bin: usize = fields[0].parse().map_err(|_| parse_err(format!("bad bin `{}`", fields[0])))?;
            let action = DiscreteAction::ALL
                .iter()
                .position(|a| a.label() == fields[1])
                .ok_or_else(|| parse_err(format!("unknown action `{}`", fields[1])))?;
            let value: f64 = fields[2].parse().map_err(|_| parse_err(format!("bad value `{}`", fields[2])))?;
            if !value.is_finite() {
                return Err(parse_err("non-finite value".into()));
            }
            entries.push((bin, action, value));
        }
        let bins = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        if bins == 0 || entries.len() != bins * DiscreteAction::COUNT {
            return Err(Error::Parse {
                line: 0,
                reason: format!("expected a full table, got {} entries", entries.len()),
            });
        }
        let mut table = QTable::new(bins, DiscreteAction::COUNT, alpha, gamma);
        for (s, a, v) in entries {
            table.set(s, a, v);
        }
        Ok(table)
    }
}

pub fn training_episode_seed(train_seed: u64, episode: usize) -> u64 {
    derive_seed(train_seed, episode as u64)
}

/// Trains a table for `cfg.episodes` episodes of the discrete environment.
/// Resets `env` and, when `start_low < 1`, moves it to an integrity drawn
/// uniformly from `[start_low, 1]`.
pub fn exploring_start(env: &mut ScalarEnv, seed: u64, start_low: f64, rng: &mut SimRng) -> Observation {
    let obs = env.reset(seed);
    if start_low >= 1.0 {
        return obs;
    }
    env.set_integrity(rng.random_range(start_low..=1.0));
    env.observation()
}

pub fn train_qlearning(
    env_cfg: &ScalarEnvConfig,
    heal: &StochasticHealParams,
    cfg: &QLearningConfig,
    train_seed: u64,
) -> Result<QTable> {
    cfg.validate()?;
    let mut env = ScalarEnv::new(env_cfg.clone(), heal.clone(), ActionKind::Discrete)?;
    let mut table = QTable::new(cfg.bins, DiscreteAction::COUNT, cfg.alpha, cfg.gamma);
    let mut rng = stream_rng(train_seed, Stream::Agent);
    for ep in 0..cfg.episodes {
        let eps = linear_schedule(cfg.eps_start, cfg.eps_end, cfg.eps_decay_episodes, ep);
        let mut obs = exploring_start(&mut env, training_episode_seed(train_seed, ep), cfg.start_low, &mut rng);
        loop {
            let s = discretize(obs.integrity, cfg.bins);
            let a = epsilon_greedy(table.row(s), eps, &mut rng)?;
            let out = env.step(Action::Discrete(DiscreteAction::from_index(a)?))?;
            let s_next = discretize(out.observation.integrity, cfg.bins);
            table.q_update(s, a, out.reward, s_next, out.terminal)?;
            obs = out.observation;
            if out.terminal {
                break;
            }
        }
    }
    Ok(table)
}

/// Greedy policy over a frozen table.
#[derive(Debug, Clone)]
pub struct QPolicy {
    pub table: QTable,
}

impl Controller for QPolicy {
    fn name(&self) -> &str {
        "qlearning"
    }
    fn kind(&self) -> ActionKind {
        ActionKind::Discrete
    }
    fn act(&mut self, obs: &Observation, _rng: &mut SimRng) -> Action {
        let s = discretize(obs.integrity, self.table.bins());
        Action::Discrete(DiscreteAction::ALL[self.table.greedy(s)])
    }
}
