use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::discount;
use crate::features::Observation;
use crate::sim::DriverId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Perspective {
    /// Successive decisions of the same driver are linked.
    #[serde(rename = "driver")]
    DriverCentric,
    /// Globally consecutive decisions are linked, whoever acts.
    #[serde(rename = "system")]
    SystemCentric,
}

impl std::str::FromStr for Perspective {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "driver" | "driver-centric" => Ok(Perspective::DriverCentric),
            "system" | "system-centric" => Ok(Perspective::SystemCentric),
            _ => Err(crate::error::Error::InvalidConfig(format!(
                "unknown perspective `{s}` (expected driver or system)"
            ))),
        }
    }
}

impl Perspective {
    pub fn name(self) -> &'static str {
        match self {
            Perspective::DriverCentric => "driver",
            Perspective::SystemCentric => "system",
        }
    }
}

/// One decision of an episode as seen by the learner.
#[derive(Debug, Clone)]
pub struct LoggedStep {
    pub time: f64,
    pub driver: DriverId,
    pub obs: Arc<Observation>,
    pub action: usize,
    pub reward: f64,
    /// Behaviour log-probability of `action` (policy-gradient runs only).
    pub log_prob: f64,
    /// Critic estimate at `obs` (policy-gradient runs only).
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub time: f64,
    pub driver: DriverId,
    pub obs: Arc<Observation>,
    pub action: usize,
    pub reward: f64,
    /// `None` exactly when `done`.
    pub next: Option<Arc<Observation>>,
    /// Time until the successor decision, or until the episode end.
    pub dt: f64,
    /// `time + dt`, kept exactly.
    pub next_time: f64,
    pub done: bool,
    pub perspective: Perspective,
    pub log_prob: f64,
    pub value: f64,
}

fn link(steps: &[&LoggedStep], end_time: f64, perspective: Perspective) -> Vec<Transition> {
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let succ = steps.get(i + 1);
            let next_time = succ.map_or(end_time, |n| n.time);
            Transition {
                time: s.time,
                driver: s.driver,
                obs: Arc::clone(&s.obs),
                action: s.action,
                reward: s.reward,
                next: succ.map(|n| Arc::clone(&n.obs)),
                dt: (next_time - s.time).max(0.0),
                next_time: next_time.max(s.time),
                done: succ.is_none(),
                perspective,
                log_prob: s.log_prob,
                value: s.value,
            }
        })
        .collect()
}

/// One stream per driver, ordered by driver id; within a stream each
/// decision is linked to the same driver's next decision.
pub fn build_driver_centric(log: &[LoggedStep], end_time: f64) -> Vec<Vec<Transition>> {
    let mut by_driver: BTreeMap<DriverId, Vec<&LoggedStep>> = BTreeMap::new();
    for s in log {
        by_driver.entry(s.driver).or_default().push(s);
    }
    by_driver
        .into_values()
        .map(|steps| link(&steps, end_time, Perspective::DriverCentric))
        .collect()
}

/// A single stream linking globally consecutive decisions.
pub fn build_system_centric(log: &[LoggedStep], end_time: f64) -> Vec<Transition> {
    let steps: Vec<&LoggedStep> = log.iter().collect();
    link(&steps, end_time, Perspective::SystemCentric)
}

/// A Q-learning sample whose target is `ret + discount * max_a Q(next, a)`,
/// or just `ret` when `next` is `None`.
#[derive(Debug, Clone)]
pub struct NStepSample {
    pub obs: Arc<Observation>,
    pub action: usize,
    pub ret: f64,
    pub discount: f64,
    pub next: Option<Arc<Observation>>,
}

/// Target for the window starting at `window[0]`: up to `n` discounted
/// rewards, cut at the first terminal transition, plus the bootstrap term.
/// `next_max` is the target network's best value at the window's last
/// successor and is ignored when the window ends in a terminal.
pub fn nstep_target(window: &[Transition], n: usize, gamma: f64, next_max: f64) -> f64 {
    let (ret, disc, next) = accumulate(window, n, gamma);
    match next {
        Some(_) => ret + disc * next_max,
        None => ret,
    }
}

fn accumulate(window: &[Transition], n: usize, gamma: f64) -> (f64, f64, Option<Arc<Observation>>) {
    let t0 = window[0].time;
    let mut ret = 0.0;
    for tr in window.iter().take(n) {
        ret += discount(gamma, tr.time - t0) * tr.reward;
        if tr.done {
            return (ret, 0.0, None);
        }
    }
    let last = &window[n.min(window.len()) - 1];
    (ret, discount(gamma, last.next_time - t0), last.next.clone())
}

/// All n-step samples of one stream, in stream order.
pub fn nstep_samples(stream: &[Transition], n: usize, gamma: f64) -> Vec<NStepSample> {
    (0..stream.len())
        .map(|i| {
            let (ret, disc, next) = accumulate(&stream[i..], n, gamma);
            NStepSample {
                obs: Arc::clone(&stream[i].obs),
                action: stream[i].action,
                ret,
                discount: disc,
                next,
            }
        })
        .collect()
}

/// Online n-step sample construction. Steps arrive as the episode runs and a
/// sample is released as soon as its window is complete; the rest are
/// released by [`NStepStreams::finish`]. The output matches
/// [`nstep_samples`] over the transitions built after the episode.
#[derive(Debug)]
pub struct NStepStreams {
    perspective: Perspective,
    n: usize,
    gamma: f64,
    streams: BTreeMap<DriverId, Stream>,
}

#[derive(Debug, Default)]
struct Stream {
    /// `(time, obs, action, reward)` of steps not yet released.
    pending: Vec<(f64, Arc<Observation>, usize, f64)>,
}

impl NStepStreams {
    pub fn new(perspective: Perspective, n: usize, gamma: f64) -> Self {
        assert!(n > 0, "n-step window must be positive");
        Self {
            perspective,
            n,
            gamma,
            streams: BTreeMap::new(),
        }
    }

    fn key(&self, driver: DriverId) -> DriverId {
        match self.perspective {
            Perspective::DriverCentric => driver,
            Perspective::SystemCentric => 0,
        }
    }

    /// Record a completed decision and append any samples it completes.
    pub fn push(
        &mut self,
        driver: DriverId,
        time: f64,
        obs: Arc<Observation>,
        action: usize,
        reward: f64,
        out: &mut Vec<NStepSample>,
    ) {
        let key = self.key(driver);
        let (n, gamma) = (self.n, self.gamma);
        let stream = self.streams.entry(key).or_default();
        stream.pending.push((time, obs, action, reward));
        if stream.pending.len() > n {
            let (t_next, next_obs) = (stream.pending[n].0, Arc::clone(&stream.pending[n].1));
            let head = &stream.pending[..n];
            let t0 = head[0].0;
            let ret = head
                .iter()
                .map(|(t, _, _, r)| discount(gamma, t - t0) * r)
                .sum();
            let (_, obs, action, _) = stream.pending.remove(0);
            out.push(NStepSample {
                obs,
                action,
                ret,
                discount: discount(gamma, t_next - t0),
                next: Some(next_obs),
            });
        }
    }

    /// Release every remaining sample as terminal and clear all streams.
    pub fn finish(&mut self, out: &mut Vec<NStepSample>) {
        let gamma = self.gamma;
        for (_, stream) in std::mem::take(&mut self.streams) {
            let pending = stream.pending;
            for i in 0..pending.len() {
                let t0 = pending[i].0;
                let ret = pending[i..]
                    .iter()
                    .map(|(t, _, _, r)| discount(gamma, t - t0) * r)
                    .sum();
                out.push(NStepSample {
                    obs: Arc::clone(&pending[i].1),
                    action: pending[i].2,
                    ret,
                    discount: 0.0,
                    next: None,
                });
            }
        }
    }
}
