use crate::env_scalar::{Action, ActionKind, Observation};
use crate::rng::SimRng;

/// Anything that maps observations of the scalar environment to actions.
pub trait Controller: Send {
    fn name(&self) -> &str;
    fn kind(&self) -> ActionKind;
    fn act(&mut self, obs: &Observation, rng: &mut SimRng) -> Action;
    /// Clears per-episode state.
    fn reset(&mut self) {}
}
