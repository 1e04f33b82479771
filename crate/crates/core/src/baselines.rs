//! Scripted comparison policies.

use rand::Rng;

use crate::config::{check_range, config_section};
use crate::env_grid::{DamageField, GridAction};
use crate::env_scalar::{Action, ActionKind, DiscreteAction, Observation};
use crate::error::{Error, Result};
use crate::policy::Controller;
use crate::rng::SimRng;

/// Integrity below which the heuristic releases healing agent.
pub const HEURISTIC_THRESHOLD: f64 = 0.8;

pub fn random_policy<R: Rng + ?Sized>(kind: ActionKind, rng: &mut R) -> Action {
    match kind {
        ActionKind::Discrete => Action::Discrete(DiscreteAction::ALL[rng.random_range(0..DiscreteAction::COUNT)]),
        ActionKind::Continuous => Action::Dosage(rng.random::<f64>()),
    }
}

pub fn heuristic_policy(obs: &Observation) -> Action {
    if obs.integrity < HEURISTIC_THRESHOLD {
        Action::Discrete(DiscreteAction::ChemicalRelease)
    } else {
        Action::Discrete(DiscreteAction::NoAction)
    }
}

config_section! {
    /// Gains and output mapping of the PI controller.
    pub struct PiConfig ["pi"] {
        pub kp: f64 = 2.0,
        pub ki: f64 = 0.1,
        pub setpoint: f64 = 1.0,
        pub integral_clamp: f64 = 2.0,
        /// Discrete mapping: thermal above this control signal.
        pub thermal_threshold: f64 = 0.28,
        /// Discrete mapping: chemical above this control signal.
        pub chemical_threshold: f64 = 0.6,
    }
}

impl PiConfig {
    pub fn validate(&self) -> Result<()> {
        check_range("pi.kp", self.kp, 0.0, f64::MAX)?;
        check_range("pi.ki", self.ki, 0.0, f64::MAX)?;
        check_range("pi.setpoint", self.setpoint, 0.0, 1.0)?;
        check_range("pi.integral_clamp", self.integral_clamp, 0.0, f64::MAX)?;
        if self.thermal_threshold > self.chemical_threshold {
            return Err(Error::config("pi.thermal_threshold", "must not exceed pi.chemical_threshold"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PiControllerState {
    pub integral: f64,
}

/// One PI update. Returns the action and the control signal `u`.
pub fn pi_policy(
    cfg: &PiConfig,
    state: &mut PiControllerState,
    obs: &Observation,
    kind: ActionKind,
) -> (Action, f64) {
    let error = cfg.setpoint - obs.integrity;
    state.integral = (state.integral + error).clamp(-cfg.integral_clamp, cfg.integral_clamp);
    let u = (cfg.kp * error + cfg.ki * state.integral).clamp(0.0, 1.0);
    let action = match kind {
        ActionKind::Continuous => Action::Dosage(u),
        ActionKind::Discrete if u > cfg.chemical_threshold => Action::Discrete(DiscreteAction::ChemicalRelease),
        ActionKind::Discrete if u > cfg.thermal_threshold => Action::Discrete(DiscreteAction::ThermalActivation),
        ActionKind::Discrete => Action::Discrete(DiscreteAction::NoAction),
    };
    (action, u)
}

#[derive(Debug, Clone)]
pub struct RandomController {
    pub kind: ActionKind,
}

impl Controller for RandomController {
    fn name(&self) -> &str {
        "random"
    }
    fn kind(&self) -> ActionKind {
        self.kind
    }
    fn act(&mut self, _obs: &Observation, rng: &mut SimRng) -> Action {
        random_policy(self.kind, rng)
    }
}

#[derive(Debug, Clone, Default)]
pub struct HeuristicController;

impl Controller for HeuristicController {
    fn name(&self) -> &str {
        "heuristic"
    }
    fn kind(&self) -> ActionKind {
        ActionKind::Discrete
    }
    fn act(&mut self, obs: &Observation, _rng: &mut SimRng) -> Action {
        heuristic_policy(obs)
    }
}

#[derive(Debug, Clone)]
pub struct PiController {
    pub config: PiConfig,
    pub state: PiControllerState,
    pub kind: ActionKind,
}

impl PiController {
    pub fn new(config: PiConfig, kind: ActionKind) -> Self {
        Self {
            config,
            state: PiControllerState::default(),
            kind,
        }
    }
}

impl Controller for PiController {
    fn name(&self) -> &str {
        "adaptive"
    }
    fn kind(&self) -> ActionKind {
        self.kind
    }
    fn act(&mut self, obs: &Observation, _rng: &mut SimRng) -> Action {
        pi_policy(&self.config, &mut self.state, obs, self.kind).0
    }
    fn reset(&mut self) {
        self.state = PiControllerState::default();
    }
}

/// Heals the most damaged observed cell at full dosage while integrity is
/// below `act_below`.
pub fn greedy_grid_policy(observed: &DamageField, integrity: f64, act_below: f64) -> Option<GridAction> {
    if integrity >= act_below {
        return None;
    }
    let (row, col) = observed.argmax();
    Some(GridAction { row, col, dosage: 1.0 })
}

/// The greedy rule applied to the hidden true field.
pub fn oracle_grid_policy(true_field: &DamageField, integrity: f64, act_below: f64) -> Option<GridAction> {
    greedy_grid_policy(true_field, integrity, act_below)
}
