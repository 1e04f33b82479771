//! Fast invariant checks run by `selfheal selfcheck`.

use crate::agents::qlearning::QTable;
use crate::agents::{epsilon_greedy, linear_schedule};
use crate::env_grid::{laplacian_signed, DamageField};
use crate::error::Result;
use crate::nn::{gradient_check, Activation, Mlp};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Deterministic five-state healing chain: chemical jumps two bins,
/// thermal one, no action stays. Rewards penalize cost and remaining
/// damage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyMdp {
    pub states: usize,
    pub chem_cost: f64,
    pub thermal_cost: f64,
    pub damage_weight: f64,
    pub gamma: f64,
}

impl Default for ToyMdp {
    fn default() -> Self {
        Self {
            states: 5,
            chem_cost: 0.6,
            thermal_cost: 0.25,
            damage_weight: 0.3,
            gamma: 0.95,
        }
    }
}

impl ToyMdp {
    pub const ACTIONS: usize = 3;

    pub fn step(&self, s: usize, a: usize) -> (usize, f64) {
        let top = self.states - 1;
        let (next, cost) = match a {
            0 => ((s + 2).min(top), self.chem_cost),
            1 => ((s + 1).min(top), self.thermal_cost),
            _ => (s, 0.0),
        };
        (next, -cost - self.damage_weight * (top - next) as f64)
    }

    /// Tabular Q-learning with a decaying epsilon; episodes start in each
    /// state in turn and the time limit is treated as truncation.
    pub fn q_learn(&self, episodes: usize, steps: usize, seed: u64) -> Result<QTable> {
        let mut q = QTable::new(self.states, Self::ACTIONS, 0.1, self.gamma);
        let mut rng = stream_rng(seed, Stream::Agent);
        for ep in 0..episodes {
            let eps = linear_schedule(1.0, 0.05, episodes * 3 / 4, ep);
            let mut s = ep % self.states;
            for _ in 0..steps {
                let a = epsilon_greedy(q.row(s), eps, &mut rng)?;
                let (next, r) = self.step(s, a);
                q.q_update(s, a, r, next, false)?;
                s = next;
            }
        }
        Ok(q)
    }
}

fn greedy_rows(q: &QTable) -> Vec<usize> {
    (0..q.bins()).map(|s| q.greedy(s)).collect()
}

fn check_gradients() -> Result<CheckResult> {
    let mut rng = stream_rng(2024, Stream::Agent);
    let mut worst: f64 = 0.0;
    for (i, act) in [Activation::Tanh, Activation::Sigmoid, Activation::Identity].iter().cycle().take(12).enumerate() {
        let net = Mlp::new(&[3, 5 + i % 3, 4, 2], *act, Activation::Identity, &mut rng)?;
        let x = [0.3 - 0.1 * i as f64, -0.7, 0.25];
        worst = worst.max(gradient_check(&net, &x, 1e-4)?.max_rel_error);
    }
    Ok(CheckResult {
        name: "gradient check",
        passed: worst < 1e-4,
        detail: format!("max relative error {worst:.3e} over 12 networks"),
    })
}

fn check_bellman() -> Result<CheckResult> {
    let mdp = ToyMdp::default();
    let mut q = QTable::new(mdp.states, ToyMdp::ACTIONS, 1.0, mdp.gamma);
    // value iteration: full synchronous Bellman backups
    for _ in 0..2000 {
        let mut next = q.clone();
        for s in 0..mdp.states {
            for a in 0..ToyMdp::ACTIONS {
                let (sn, r) = mdp.step(s, a);
                let v = q.row(sn).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                next.set(s, a, r + mdp.gamma * v);
            }
        }
        q = next;
    }
    let learned = mdp.q_learn(3000, 12, 7)?;
    let want = greedy_rows(&q);
    let got = greedy_rows(&learned);
    Ok(CheckResult {
        name: "bellman oracle",
        passed: want == got,
        detail: format!("value iteration {want:?}, q-learning {got:?}"),
    })
}

fn check_laplacian() -> Result<CheckResult> {
    let uniform = DamageField::uniform(5, 0.4);
    let flat_ok = laplacian_signed(&uniform).iter().all(|v| v.abs() < 1e-15);
    let mut spike = DamageField::zeros(5);
    spike.set(2, 2, 1.0);
    let l = laplacian_signed(&spike);
    let spike_ok = l[2 * 5 + 2] == -4.0 && l[5 + 2] == 1.0 && l[2 * 5 + 1] == 1.0 && l[0] == 0.0;
    let mut corner = DamageField::zeros(5);
    corner.set(0, 0, 1.0);
    // mirror boundary: two ghost neighbours repeat the corner value
    let corner_ok = laplacian_signed(&corner)[0] == -2.0;
    Ok(CheckResult {
        name: "laplacian stencil",
        passed: flat_ok && spike_ok && corner_ok,
        detail: format!("uniform {flat_ok}, interior spike {spike_ok}, mirrored corner {corner_ok}"),
    })
}

pub fn run_selfcheck() -> Result<Vec<CheckResult>> {
    Ok(vec![check_gradients()?, check_bellman()?, check_laplacian()?])
}
