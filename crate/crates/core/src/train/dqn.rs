use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::replay::ReplayBuffer;
use super::rollout::{episode_seed, EpisodeReport};
use super::transitions::{NStepSample, NStepStreams, Perspective};
use super::TrainerConfig;
use crate::error::{Error, Result};
use crate::features::Observation;
use crate::nn::{Adam, AdamConfig, Parameterized, Real};
use crate::policy::{select_epsilon, PolicyNet};
use crate::scenarios::Scenario;
use crate::sim::{Engine, Poll};

const ACTION_SALT: u64 = 0xA5A5_0F0F_3C3C_9696;

pub(crate) fn zero_grads<R: Real>(grads: &mut PolicyNet<R>) {
    grads.visit_mut(&mut |_, _, g| g.fill(R::zero()));
}

/// Mean squared error between `Q(obs_i, actions_i)` and `targets_i`.
/// Gradients are accumulated into `grads` when given.
pub fn dqn_loss<R: Real>(
    net: &PolicyNet<R>,
    obs: &[&Observation],
    actions: &[usize],
    targets: &[f64],
    grads: Option<&mut PolicyNet<R>>,
) -> Result<f64> {
    let b = obs.len();
    if actions.len() != b || targets.len() != b {
        return Err(Error::Shape(format!(
            "{b} observations, {} actions, {} targets",
            actions.len(),
            targets.len()
        )));
    }
    if b == 0 {
        return Ok(0.0);
    }
    let (scores, cache) = net.forward_batch(obs)?;
    let mut loss = 0.0;
    let mut d_actions = Vec::with_capacity(b);
    for i in 0..b {
        let q = &scores[i].actions;
        let a = actions[i];
        if a >= q.len() {
            return Err(Error::Shape(format!("action {a} of {}", q.len())));
        }
        let err = q[a] - targets[i];
        loss += err * err;
        let mut d = vec![0.0; q.len()];
        d[a] = 2.0 * err / b as f64;
        d_actions.push(d);
    }
    if let Some(grads) = grads {
        net.backward_batch(&cache, &d_actions, None, grads, false)?;
    }
    Ok(loss / b as f64)
}

/// Online and target Q-networks with their optimiser.
#[derive(Debug, Clone)]
pub struct DqnLearner<R> {
    pub online: PolicyNet<R>,
    pub target: PolicyNet<R>,
    adam: Adam<R>,
    grads: PolicyNet<R>,
    lr: f64,
    target_copy_every: usize,
    updates: u64,
}

impl<R: Real> DqnLearner<R> {
    pub fn new(net: PolicyNet<R>, config: &TrainerConfig) -> Self {
        Self {
            target: net.clone(),
            grads: net.zeros_like(),
            online: net,
            adam: Adam::new(AdamConfig::default()),
            lr: config.lr_q,
            target_copy_every: config.target_copy_every,
            updates: 0,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Restore a learner from saved networks and its update count.
    pub fn restore(online: PolicyNet<R>, target: PolicyNet<R>, updates: u64, config: &TrainerConfig) -> Self {
        Self {
            grads: online.zeros_like(),
            online,
            target,
            adam: Adam::new(AdamConfig::default()),
            lr: config.lr_q,
            target_copy_every: config.target_copy_every,
            updates,
        }
    }

    /// Targets `ret + discount * max_a Q_target(next, a)`.
    pub fn targets(&self, batch: &[&NStepSample]) -> Result<Vec<f64>> {
        let nexts: Vec<&Observation> = batch.iter().filter_map(|s| s.next.as_deref()).collect();
        let next_scores = self.target.evaluate_batch(&nexts)?;
        let mut k = 0;
        Ok(batch
            .iter()
            .map(|s| match s.next {
                Some(_) => {
                    let best = next_scores[k].actions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    k += 1;
                    s.ret + s.discount * best
                }
                None => s.ret,
            })
            .collect())
    }

    /// One optimiser step on `batch`; returns the loss before the step.
    pub fn update(&mut self, batch: &[&NStepSample]) -> Result<f64> {
        let targets = self.targets(batch)?;
        let obs: Vec<&Observation> = batch.iter().map(|s| s.obs.as_ref()).collect();
        let actions: Vec<usize> = batch.iter().map(|s| s.action).collect();
        zero_grads(&mut self.grads);
        let loss = dqn_loss(&self.online, &obs, &actions, &targets, Some(&mut self.grads))?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "q-learning loss {loss} at learner step {}",
                self.updates
            )));
        }
        let lr = self.lr;
        self.adam.step(&mut self.online, &self.grads, &|_| lr);
        self.updates += 1;
        if self.updates % self.target_copy_every as u64 == 0 {
            self.target = self.online.clone();
        }
        Ok(loss)
    }
}

/// Epsilon-greedy episode runner feeding a replay buffer and a learner.
pub struct DqnTrainer<R> {
    pub learner: DqnLearner<R>,
    pub replay: ReplayBuffer<NStepSample>,
    pub config: TrainerConfig,
    pub perspective: Perspective,
    engine: Engine,
    rng: ChaCha8Rng,
    seed: u64,
    episodes: usize,
    decisions: u64,
}

impl<R: Real> DqnTrainer<R> {
    pub fn new(
        scenario: Scenario,
        config: TrainerConfig,
        perspective: Perspective,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(seed);
        let net = PolicyNet::new(&mut init, false);
        Ok(Self {
            learner: DqnLearner::new(net, &config),
            replay: ReplayBuffer::new(config.replay_capacity),
            engine: Engine::new(scenario)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
            perspective,
            seed,
            episodes: 0,
            decisions: 0,
        })
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    /// Continue from a saved state: networks, update count and episode count.
    /// The replay buffer and optimiser moments start empty.
    pub fn resume(&mut self, online: PolicyNet<R>, target: PolicyNet<R>, updates: u64, episodes: usize) {
        self.learner = DqnLearner::restore(online, target, updates, &self.config);
        self.episodes = episodes;
    }

    pub fn run_episode(&mut self) -> Result<EpisodeReport> {
        self.rng = ChaCha8Rng::seed_from_u64(episode_seed(self.seed ^ ACTION_SALT, self.episodes as u64));
        let epsilon = self.config.epsilon_at(self.episodes);
        let seed = episode_seed(self.seed, self.episodes as u64);
        let n = self.config.n_step_for(self.perspective);
        let mut streams = NStepStreams::new(self.perspective, n, self.config.gamma);
        let mut ready = Vec::new();
        let mut poll = self.engine.reset(seed)?;
        while let Poll::Decision(obs) = poll {
            let obs = Arc::new(obs);
            let scores = self.learner.online.forward(&obs)?.actions;
            let idx = select_epsilon(&scores, epsilon, &mut self.rng)?;
            let action = obs.action(idx).ok_or_else(|| Error::IllegalAction(format!("index {idx}")))?;
            let outcome = self.engine.step(action)?;
            let driver = obs.driver_ids[obs.selected];
            streams.push(driver, obs.time, Arc::clone(&obs), idx, outcome.reward, &mut ready);
            for s in ready.drain(..) {
                self.replay.push(s);
            }
            self.decisions += 1;
            if self.replay.len() >= self.config.learning_starts.max(1)
                && self.decisions % self.config.train_every as u64 == 0
            {
                let batch = self.replay.sample(self.config.batch_size, &mut self.rng);
                self.learner.update(&batch)?;
            }
            poll = outcome.next;
        }
        streams.finish(&mut ready);
        for s in ready.drain(..) {
            self.replay.push(s);
        }
        self.episodes += 1;
        let stats = self.engine.stats().clone();
        Ok(EpisodeReport {
            seed,
            total_reward: stats.total_reward,
            stats,
        })
    }
}
