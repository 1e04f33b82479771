//! Reinforcement-learning control of simulated self-healing materials.
//!
//! The crate provides a scalar integrity environment with discrete and
//! continuous healing actions, a grid damage surrogate, a small MLP with
//! Adam, replay buffers, Q-learning, DQN and TD3 agents, scripted baselines,
//! and a seeded experiment harness.

pub mod agents;
pub mod baselines;
pub mod config;
pub mod env_grid;
pub mod env_scalar;
pub mod error;
pub mod fmt;
pub mod harness;
pub mod nn;
pub mod par;
pub mod policy;
pub mod replay;
pub mod rng;
pub mod selfcheck;

pub use config::Config;
pub use error::{Error, Result};
pub use policy::Controller;
