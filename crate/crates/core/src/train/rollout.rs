use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Observation;
use crate::nn::Real;
use crate::policy::{select_greedy, PolicyNet};
use crate::scenarios::Scenario;
use crate::sim::{Engine, EpisodeStats, Poll};

/// Anything that can pick an action index for an observation.
pub trait Controller {
    fn choose(&mut self, obs: &Observation) -> Result<usize>;

    /// Called before every episode with that episode's seed.
    fn begin_episode(&mut self, _seed: u64) {}
}

/// Highest-scoring action of a network (max-probability for a policy).
pub struct Greedy<'a, R>(pub &'a PolicyNet<R>);

impl<R: Real> Controller for Greedy<'_, R> {
    fn choose(&mut self, obs: &Observation) -> Result<usize> {
        select_greedy(&self.0.forward(obs)?.actions)
    }
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn choose(&mut self, obs: &Observation) -> Result<usize> {
        (**self).choose(obs)
    }

    fn begin_episode(&mut self, seed: u64) {
        (**self).begin_episode(seed)
    }
}

/// Seed of episode `index` in the stream identified by `base`.
pub fn episode_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub seed: u64,
    pub total_reward: f64,
    pub stats: EpisodeStats,
}

impl EpisodeReport {
    /// Assigned share of the orders created, in percent.
    pub fn served_pct(&self) -> f64 {
        if self.stats.orders_created == 0 {
            0.0
        } else {
            100.0 * self.stats.assignments as f64 / self.stats.orders_created as f64
        }
    }
}

pub fn run_episode<C: Controller + ?Sized>(
    engine: &mut Engine,
    seed: u64,
    controller: &mut C,
) -> Result<EpisodeReport> {
    controller.begin_episode(seed);
    let mut poll = engine.reset(seed)?;
    while let Poll::Decision(obs) = poll {
        let idx = controller.choose(&obs)?;
        let action = obs
            .action(idx)
            .ok_or_else(|| Error::IllegalAction(format!("action index {idx} of {}", obs.num_actions())))?;
        poll = engine.step(action)?.next;
    }
    let stats = engine.stats().clone();
    Ok(EpisodeReport {
        seed,
        total_reward: stats.total_reward,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub returns: Vec<f64>,
    pub mean: f64,
    /// Standard error of the mean over episodes.
    pub std_err: f64,
    pub served_pct: f64,
    /// Mean served orders per episode for each flow tag.
    pub served_by_tag: Vec<f64>,
}

impl EvalSummary {
    pub fn from_reports(reports: &[EpisodeReport]) -> Self {
        let returns: Vec<f64> = reports.iter().map(|r| r.total_reward).collect();
        let (mean, std_err) = mean_std_err(&returns);
        let n = reports.len().max(1) as f64;
        let tags = reports.iter().map(|r| r.stats.served_by_tag.len()).max().unwrap_or(0);
        let served_by_tag = (0..tags)
            .map(|t| {
                reports
                    .iter()
                    .map(|r| r.stats.served_by_tag.get(t).copied().unwrap_or(0) as f64)
                    .sum::<f64>()
                    / n
            })
            .collect();
        Self {
            returns,
            mean,
            std_err,
            served_pct: reports.iter().map(EpisodeReport::served_pct).sum::<f64>() / n,
            served_by_tag,
        }
    }
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Run `episodes` episodes with seeds `episode_seed(base_seed, i)`.
pub fn evaluate<C: Controller + ?Sized>(
    scenario: &Scenario,
    controller: &mut C,
    episodes: usize,
    base_seed: u64,
) -> Result<EvalSummary> {
    let mut engine = Engine::new(scenario.clone())?;
    let reports = (0..episodes as u64)
        .map(|i| run_episode(&mut engine, episode_seed(base_seed, i), controller))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_reports(&reports))
}
