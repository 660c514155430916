//! Learning algorithms: transition construction under the two reward
//! perspectives, n-step Q-learning with replay and a target network, and
//! clipped policy-gradient training with generalised advantage estimation.
//!
//! Rewards are discounted in continuous time: a reward collected `dt` time
//! units after a decision is weighted by `gamma^dt`.

mod dqn;
mod ppo;
mod replay;
mod rollout;
mod transitions;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Dtype;

pub use dqn::{dqn_loss, DqnLearner, DqnTrainer};
pub use ppo::{
    clipped_surrogate, gae, ppo_loss_and_grad, ppo_update, PpoLearner, PpoSample, PpoStats, PpoTrainer,
};
pub use replay::ReplayBuffer;
pub use rollout::{
    episode_seed, evaluate, mean_std_err, run_episode, Controller, EpisodeReport, EvalSummary, Greedy,
};
pub use transitions::{
    build_driver_centric, build_system_centric, nstep_samples, nstep_target, LoggedStep,
    NStepSample, NStepStreams, Perspective, Transition,
};

/// `gamma^dt`.
pub fn discount(gamma: f64, dt: f64) -> f64 {
    gamma.powf(dt)
}

/// Exploration rate for `episode` under the default schedule.
pub fn epsilon_at(episode: usize) -> f64 {
    TrainerConfig::default().epsilon_at(episode)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropySchedule {
    pub start: f64,
    pub end: f64,
    /// Epochs over which the coefficient moves linearly from `start` to
    /// `end`; zero means `end` throughout.
    pub anneal_epochs: usize,
}

impl Default for EntropySchedule {
    fn default() -> Self {
        Self {
            start: 0.01,
            end: 0.01,
            anneal_epochs: 0,
        }
    }
}

impl EntropySchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        if self.anneal_epochs == 0 || epoch >= self.anneal_epochs {
            return self.end;
        }
        let f = epoch as f64 / self.anneal_epochs as f64;
        self.start + (self.end - self.start) * f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub lambda: f64,
    pub updates_per_epoch: usize,
    pub steps_per_epoch: usize,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub value_coef: f64,
    pub entropy: EntropySchedule,
    pub parallel_envs: usize,
    pub normalize_advantages: bool,
    /// Observations per forward/backward chunk inside an update.
    pub chunk: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            lambda: 0.95,
            updates_per_epoch: 20,
            steps_per_epoch: 4000,
            lr_policy: 1e-4,
            lr_value: 5e-4,
            value_coef: 0.5,
            entropy: EntropySchedule::default(),
            parallel_envs: 1,
            normalize_advantages: true,
            chunk: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub lr_q: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub replay_capacity: usize,
    pub target_copy_every: usize,
    /// Window length for Q-learning targets; `None` picks 1 for the
    /// driver-centric and 20 for the system-centric perspective.
    pub n_step: Option<usize>,
    /// Transitions collected before the first learner step.
    pub learning_starts: usize,
    /// Decision steps per learner step.
    pub train_every: usize,
    pub precision: Dtype,
    pub ppo: PpoConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 32,
            lr_q: 1e-4,
            epsilon_start: 0.99,
            epsilon_decay: 0.01,
            epsilon_floor: 0.1,
            replay_capacity: 20_000,
            target_copy_every: 100,
            n_step: None,
            learning_starts: 32,
            train_every: 1,
            precision: Dtype::F64,
            ppo: PpoConfig::default(),
        }
    }
}

impl TrainerConfig {
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        (self.epsilon_start - self.epsilon_decay * episode as f64).max(self.epsilon_floor)
    }

    pub fn n_step_for(&self, perspective: Perspective) -> usize {
        self.n_step.unwrap_or(match perspective {
            Perspective::DriverCentric => 1,
            Perspective::SystemCentric => 20,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.target_copy_every == 0 {
            return bad("batch_size, replay_capacity and target_copy_every must be positive");
        }
        if self.train_every == 0 || self.n_step == Some(0) {
            return bad("train_every and n_step must be positive");
        }
        if !(self.lr_q > 0.0 && self.ppo.lr_policy > 0.0 && self.ppo.lr_value > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_floor) || !(0.0..=1.0).contains(&self.epsilon_start) {
            return bad("epsilon schedule must stay in [0, 1]");
        }
        let p = &self.ppo;
        if !(p.clip > 0.0 && p.clip < 1.0) {
            return bad("ppo clip must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&p.lambda) {
            return bad("ppo lambda must lie in [0, 1]");
        }
        if p.updates_per_epoch == 0 || p.steps_per_epoch == 0 || p.parallel_envs == 0 || p.chunk == 0 {
            return bad("ppo epoch sizes, parallel_envs and chunk must be positive");
        }
        if p.value_coef < 0.0 || p.entropy.start < 0.0 || p.entropy.end < 0.0 {
            return bad("ppo coefficients must be non-negative");
        }
        Ok(())
    }
}
