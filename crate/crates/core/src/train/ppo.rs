use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dqn::zero_grads;
use super::rollout::{episode_seed, EpisodeReport};
use super::transitions::{LoggedStep, Perspective};
use super::{discount, PpoConfig, TrainerConfig};
use crate::error::{Error, Result};
use crate::features::Observation;
use crate::nn::{log_softmax, softmax, Adam, AdamConfig, Real};
use crate::policy::{is_critic_slot, sample_categorical, PolicyNet};
use crate::scenarios::Scenario;
use crate::sim::{DriverId, Engine, Poll};

const ACTION_SALT: u64 = 0x3C6E_F372_FE94_F82B;

/// Generalised advantage estimates and value targets for one stream.
///
/// `values[k]` estimates the state at step `k`; `bootstrap` estimates the
/// state after the last step and is ignored when that step is terminal.
/// `dts[k]` is the time to the next step. The recursion is
/// `A_k = delta_k + gamma^dt_k * lambda * A_{k+1}` with
/// `delta_k = r_k + gamma^dt_k * V_{k+1} - V_k`, both cut at terminals.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    dts: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dts.len() == n && dones.len() == n, "gae inputs differ in length");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for k in (0..n).rev() {
        let g = discount(gamma, dts[k]);
        let (next_value, carry) = if dones[k] {
            (0.0, 0.0)
        } else {
            let v = if k + 1 < n { values[k + 1] } else { bootstrap };
            (v, next_adv)
        };
        let delta = rewards[k] + g * next_value - values[k];
        adv[k] = delta + g * lambda * carry;
        next_adv = adv[k];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// `min(rho*A, clip(rho, 1-eps, 1+eps)*A)` and whether the unclipped term
/// is the minimum (the only case with a nonzero gradient in `rho`).
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    (unclipped.min(clipped), unclipped <= clipped)
}

#[derive(Debug, Clone)]
pub struct PpoSample {
    pub obs: Arc<Observation>,
    pub action: usize,
    /// Behaviour log-probability of `action`.
    pub log_prob: f64,
    pub advantage: f64,
    /// Value regression target.
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub samples: usize,
}

/// Loss `-mean(min(rho*A, clip(rho)*A)) + value_coef*mean((V-ret)^2)
/// - entropy_coef*mean(H)`; gradients are accumulated into `grads`.
/// `clip = f64::INFINITY` disables clipping.
pub fn ppo_loss_and_grad<R: Real>(
    net: &PolicyNet<R>,
    samples: &[PpoSample],
    clip: f64,
    value_coef: f64,
    entropy_coef: f64,
    chunk: usize,
    grads: &mut PolicyNet<R>,
) -> Result<PpoStats> {
    if !net.has_critic() {
        return Err(Error::InvalidConfig("policy-gradient training needs a critic head".into()));
    }
    let total = samples.len();
    let mut stats = PpoStats {
        samples: total,
        ..PpoStats::default()
    };
    if total == 0 {
        return Ok(stats);
    }
    let inv_b = 1.0 / total as f64;
    for (c, part) in samples.chunks(chunk.max(1)).enumerate() {
        let obs: Vec<&Observation> = part.iter().map(|s| s.obs.as_ref()).collect();
        let (scores, cache) = net.forward_batch(&obs)?;
        let mut d_actions = Vec::with_capacity(part.len());
        let mut d_value = Vec::with_capacity(part.len());
        for (i, (s, sc)) in part.iter().zip(&scores).enumerate() {
            let logp = log_softmax(&sc.actions);
            let p = softmax(&sc.actions);
            let a = s.action;
            if a >= p.len() {
                return Err(Error::Shape(format!("action {a} of {}", p.len())));
            }
            let log_ratio = logp[a] - s.log_prob;
            let ratio = log_ratio.exp();
            if !ratio.is_finite() {
                return Err(Error::NonFinite(format!(
                    "probability ratio {ratio} for sample {} (log-prob {} vs behaviour {})",
                    c * chunk + i,
                    logp[a],
                    s.log_prob
                )));
            }
            let (objective, active) = clipped_surrogate(ratio, s.advantage, clip);
            if !active {
                stats.clip_fraction += inv_b;
            }
            let entropy: f64 = -p.iter().zip(&logp).map(|(pj, lj)| pj * lj).sum::<f64>();
            stats.policy_loss -= objective * inv_b;
            stats.entropy += entropy * inv_b;
            stats.approx_kl += ((ratio - 1.0) - log_ratio) * inv_b;

            // dL/dscores: surrogate through log pi(a), plus the entropy bonus.
            let coef = if active { -s.advantage * ratio * inv_b } else { 0.0 };
            let d: Vec<f64> = (0..p.len())
                .map(|j| {
                    let onehot = if j == a { 1.0 } else { 0.0 };
                    coef * (onehot - p[j]) + entropy_coef * inv_b * p[j] * (logp[j] + entropy)
                })
                .collect();
            d_actions.push(d);

            let v = sc.value.expect("critic present");
            let err = v - s.ret;
            stats.value_loss += err * err * inv_b;
            d_value.push(2.0 * value_coef * err * inv_b);
        }
        net.backward_batch(&cache, &d_actions, Some(&d_value), grads, false)?;
    }
    Ok(stats)
}

/// Network, optimiser and gradient buffer for policy-gradient training.
#[derive(Debug, Clone)]
pub struct PpoLearner<R> {
    pub net: PolicyNet<R>,
    adam: Adam<R>,
    grads: PolicyNet<R>,
}

impl<R: Real> PpoLearner<R> {
    pub fn new(net: PolicyNet<R>) -> Self {
        Self {
            grads: net.zeros_like(),
            net,
            adam: Adam::new(AdamConfig::default()),
        }
    }
}

/// `updates_per_epoch` optimiser steps on the full rollout. Advantages are
/// normalised to zero mean and unit variance first when configured.
/// Returns the statistics of the first pass, i.e. before any update.
pub fn ppo_update<R: Real>(
    learner: &mut PpoLearner<R>,
    samples: &[PpoSample],
    config: &PpoConfig,
    entropy_coef: f64,
) -> Result<PpoStats> {
    let normalised;
    let samples = if config.normalize_advantages && samples.len() > 1 {
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
        let scale = 1.0 / (var.sqrt() + 1e-8);
        normalised = samples
            .iter()
            .map(|s| PpoSample {
                advantage: (s.advantage - mean) * scale,
                ..s.clone()
            })
            .collect::<Vec<_>>();
        &normalised[..]
    } else {
        samples
    };
    let (lr_p, lr_v) = (config.lr_policy, config.lr_value);
    let lr = move |name: &str| if is_critic_slot(name) { lr_v } else { lr_p };
    let mut first = None;
    for _ in 0..config.updates_per_epoch {
        zero_grads(&mut learner.grads);
        let stats = ppo_loss_and_grad(
            &learner.net,
            samples,
            config.clip,
            config.value_coef,
            entropy_coef,
            config.chunk,
            &mut learner.grads,
        )?;
        if !(stats.policy_loss.is_finite() && stats.value_loss.is_finite()) {
            return Err(Error::NonFinite(format!(
                "policy loss {} value loss {}",
                stats.policy_loss, stats.value_loss
            )));
        }
        learner.adam.step(&mut learner.net, &learner.grads, &lr);
        first.get_or_insert(stats);
    }
    Ok(first.unwrap_or_default())
}

struct Env {
    engine: Engine,
    poll: Poll,
    seed: u64,
    /// Steps not yet turned into samples, in decision order.
    log: Vec<LoggedStep>,
}

/// Rollout collection over `parallel_envs` engines plus epoch updates.
pub struct PpoTrainer<R> {
    pub learner: PpoLearner<R>,
    pub config: TrainerConfig,
    pub perspective: Perspective,
    scenario: Scenario,
    envs: Vec<Env>,
    rng: ChaCha8Rng,
    seed: u64,
    epochs: usize,
    episodes_started: u64,
    finished: Vec<EpisodeReport>,
}

impl<R: Real> PpoTrainer<R> {
    pub fn new(scenario: Scenario, config: TrainerConfig, perspective: Perspective, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(seed);
        let net = PolicyNet::new(&mut init, true);
        let envs = (0..config.ppo.parallel_envs)
            .map(|_| {
                Ok(Env {
                    engine: Engine::new(scenario.clone())?,
                    poll: Poll::Done,
                    seed: 0,
                    log: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            learner: PpoLearner::new(net),
            config,
            perspective,
            scenario,
            envs,
            rng: ChaCha8Rng::seed_from_u64(episode_seed(seed ^ ACTION_SALT, 0)),
            seed,
            epochs: 0,
            episodes_started: 0,
            finished: Vec::new(),
        })
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Continue from a saved network and epoch count with fresh episodes.
    pub fn resume(&mut self, net: PolicyNet<R>, epochs: usize) {
        self.learner = PpoLearner::new(net);
        self.epochs = epochs;
        self.episodes_started = 0;
        self.rng = ChaCha8Rng::seed_from_u64(episode_seed(self.seed ^ ACTION_SALT, epochs as u64));
        for env in &mut self.envs {
            env.poll = Poll::Done;
            env.log.clear();
        }
    }

    fn start_episode(&mut self, e: usize) -> Result<()> {
        let base = episode_seed(self.seed, self.epochs as u64);
        loop {
            let seed = episode_seed(base, self.episodes_started);
            self.episodes_started += 1;
            let env = &mut self.envs[e];
            env.seed = seed;
            env.log.clear();
            env.poll = env.engine.reset(seed)?;
            if !env.poll.is_done() {
                return Ok(());
            }
        }
    }

    /// Episodes completed since the last call.
    pub fn take_finished(&mut self) -> Vec<EpisodeReport> {
        std::mem::take(&mut self.finished)
    }

    /// Collect `steps_per_epoch` decisions and run the update.
    pub fn run_epoch(&mut self) -> Result<PpoStats> {
        let cfg = self.config.ppo;
        let mut samples = Vec::with_capacity(cfg.steps_per_epoch + 64);
        let mut steps = 0;
        while steps < cfg.steps_per_epoch {
            for e in 0..self.envs.len() {
                if self.envs[e].poll.is_done() {
                    self.start_episode(e)?;
                }
            }
            let obs: Vec<Arc<Observation>> = self
                .envs
                .iter()
                .map(|env| Arc::new(env.poll.observation().expect("live episode").clone()))
                .collect();
            let refs: Vec<&Observation> = obs.iter().map(|o| o.as_ref()).collect();
            let scores = self.learner.net.evaluate_batch(&refs)?;
            for (e, (o, sc)) in obs.into_iter().zip(scores).enumerate() {
                if steps >= cfg.steps_per_epoch {
                    break;
                }
                let (idx, log_prob) = sample_categorical(&sc.actions, &mut self.rng)?;
                let action = o.action(idx).ok_or_else(|| Error::IllegalAction(format!("index {idx}")))?;
                let env = &mut self.envs[e];
                let outcome = env.engine.step(action)?;
                env.log.push(LoggedStep {
                    time: o.time,
                    driver: o.driver_ids[o.selected],
                    obs: o,
                    action: idx,
                    reward: outcome.reward,
                    log_prob,
                    value: sc.value.unwrap_or(0.0),
                });
                env.poll = outcome.next;
                steps += 1;
                if env.poll.is_done() {
                    let end = env.engine.config().episode_horizon.max(env.engine.now());
                    let log = std::mem::take(&mut env.log);
                    release(&log, self.perspective, Some(end), &self.config, &mut samples);
                    let stats = env.engine.stats().clone();
                    self.finished.push(EpisodeReport {
                        seed: env.seed,
                        total_reward: stats.total_reward,
                        stats,
                    });
                }
            }
        }
        // Truncate running episodes: every stream keeps its newest step,
        // whose value bootstraps the released prefix.
        for env in &mut self.envs {
            if env.poll.is_done() || env.log.is_empty() {
                continue;
            }
            let log = std::mem::take(&mut env.log);
            env.log = release(&log, self.perspective, None, &self.config, &mut samples);
        }
        let entropy = cfg.entropy.at(self.epochs);
        let stats = ppo_update(&mut self.learner, &samples, &cfg, entropy)?;
        self.epochs += 1;
        Ok(stats)
    }
}

/// Turn logged steps into samples. With `end = Some(t)` the episode ended at
/// `t` and every stream is released in full; otherwise the newest step of
/// each stream is kept back and returned.
fn release(
    log: &[LoggedStep],
    perspective: Perspective,
    end: Option<f64>,
    config: &TrainerConfig,
    out: &mut Vec<PpoSample>,
) -> Vec<LoggedStep> {
    let mut streams: BTreeMap<DriverId, Vec<&LoggedStep>> = BTreeMap::new();
    for s in log {
        let key = match perspective {
            Perspective::DriverCentric => s.driver,
            Perspective::SystemCentric => 0,
        };
        streams.entry(key).or_default().push(s);
    }
    let mut kept = Vec::new();
    for steps in streams.into_values() {
        let (body, next_time, bootstrap, terminal) = match end {
            Some(t) => (&steps[..], t, 0.0, true),
            None => {
                let last = steps[steps.len() - 1];
                kept.push(last.clone());
                (&steps[..steps.len() - 1], last.time, last.value, false)
            }
        };
        if body.is_empty() {
            continue;
        }
        let n = body.len();
        let rewards: Vec<f64> = body.iter().map(|s| s.reward).collect();
        let values: Vec<f64> = body.iter().map(|s| s.value).collect();
        let dts: Vec<f64> = (0..n)
            .map(|k| {
                let t_next = if k + 1 < n { body[k + 1].time } else { next_time };
                (t_next - body[k].time).max(0.0)
            })
            .collect();
        let mut dones = vec![false; n];
        dones[n - 1] = terminal;
        let (adv, ret) = gae(&rewards, &values, bootstrap, &dts, &dones, config.gamma, config.ppo.lambda);
        for (k, s) in body.iter().enumerate() {
            out.push(PpoSample {
                obs: Arc::clone(&s.obs),
                action: s.action,
                log_prob: s.log_prob,
                advantage: adv[k],
                ret: ret[k],
            });
        }
    }
    kept.sort_by(|a, b| a.time.total_cmp(&b.time));
    kept
}
