//! Learning agents: tabular Q-learning, DQN, and TD3.

pub mod dqn;
pub mod qlearning;
pub mod td3;

use rand::Rng;

use crate::env_scalar::OBS_DIM;
use crate::error::{Error, Result};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn epsilon_greedy<R: Rng + ?Sized>(values: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::Argument("epsilon-greedy over an empty value list".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Argument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..values.len()))
    } else {
        Ok(argmax(values))
    }
}

/// Linear interpolation from `start` to `end` over `span` units, then flat.
pub fn linear_schedule(start: f64, end: f64, span: usize, t: usize) -> f64 {
    if t >= span {
        return end;
    }
    let frac = (t as f64 / span as f64).min(1.0);
    start + (end - start) * frac
}

/// Fixed input normalization for the networks: the raw observation lives
/// in a narrow band near full integrity, so deficits are magnified.
pub fn features(obs: &[f64; OBS_DIM]) -> [f64; OBS_DIM] {
    [
        (1.0 - obs[0]) * 10.0,
        2.0 * obs[1] - 1.0,
        obs[2] * 10.0,
    ]
}
