//! Shared Q-network, experience replay and epsilon-greedy selection.
//!
//! The discount rate is zero, so the learning target for a taken action is
//! the immediate reward and no successor state is ever stored. Q-learning
//! reduces to supervised regression of reward per action.

mod network;
mod replay;

pub use network::{AdamConfig, Dense, Gradients, QNetwork, DEFAULT_ARCHITECTURE};
pub use replay::ReplayBuffer;

use alloc::vec::Vec;

use rand::Rng;

use crate::kpi::StateVector;

pub const NUM_ACTIONS: usize = 3;

/// Tilt adjustment proposed by an agent. Downtilt increases the electrical
/// tilt by one degree; uptilt decreases it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Action {
    Keep = 0,
    Down = 1,
    Up = 2,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [Action::Keep, Action::Down, Action::Up];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    /// Change of electrical tilt in degrees.
    pub fn tilt_delta(self) -> f64 {
        match self {
            Action::Keep => 0.0,
            Action::Down => 1.0,
            Action::Up => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Keep => "keep",
            Action::Down => "down",
            Action::Up => "up",
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub state: StateVector,
    pub action: Action,
    pub reward: f64,
}

/// Index of the maximum value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    crate::radiosim::argmax(values)
}

/// Greedy action with probability `1 - epsilon`, otherwise uniform over all
/// actions.
pub fn select_action<R: Rng + ?Sized>(qvalues: &[f64; NUM_ACTIONS], epsilon: f64, rng: &mut R) -> Action {
    let explore = rng.gen::<f64>() < epsilon;
    if explore {
        Action::from_index(rng.gen_range(0..NUM_ACTIONS))
    } else {
        Action::from_index(argmax(qvalues))
    }
}

/// Linear decay from `start` to `end` over the first `decay_fraction` of the
/// run, then constant.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            decay_fraction: 0.5,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64, total_steps: u64) -> f64 {
        let horizon = self.decay_fraction * total_steps as f64;
        if horizon <= 0.0 || step as f64 >= horizon {
            return self.end;
        }
        self.start + (self.end - self.start) * (step as f64 / horizon)
    }
}

/// Learning hyperparameters shared by every campaign.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RlConfig {
    pub architecture: Vec<usize>,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Rewards are clipped to `[-reward_clip, reward_clip]` before storage.
    pub reward_clip: f64,
    pub epsilon: EpsilonSchedule,
    /// Gradient steps after each environment step.
    pub train_steps_per_env_step: usize,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            architecture: DEFAULT_ARCHITECTURE.to_vec(),
            adam: AdamConfig::default(),
            batch_size: 64,
            replay_capacity: 100_000,
            reward_clip: 1000.0,
            epsilon: EpsilonSchedule::default(),
            train_steps_per_env_step: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn greedy_limit() {
        let mut rng = crate::SimRng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(select_action(&[5.0, 1.0, 1.0], 0.0, &mut rng), Action::Keep);
            assert_eq!(select_action(&[0.0, 1.0, 1.0], 0.0, &mut rng), Action::Down);
        }
    }

    #[test]
    fn epsilon_schedule_shape() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.value(0, 1000), 1.0);
        assert!((s.value(250, 1000) - 0.525).abs() < 1e-12);
        assert_eq!(s.value(500, 1000), 0.05);
        assert_eq!(s.value(999, 1000), 0.05);
    }

    #[test]
    fn action_round_trip_and_deltas() {
        for a in Action::ALL {
            assert_eq!(Action::from_index(a.index()), a);
            assert_eq!(Action::parse(a.as_str()), Some(a));
        }
        assert_eq!(Action::Down.tilt_delta(), 1.0);
        assert_eq!(Action::Up.tilt_delta(), -1.0);
    }
}
