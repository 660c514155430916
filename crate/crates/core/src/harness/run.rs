use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{Algorithm, ExperimentConfig};
use crate::baselines::{Baseline, BaselineSpec};
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint, Dtype, ParamVector, Real};
use crate::policy::{is_critic_slot, PolicyNet};
use crate::scenarios::Scenario;
use crate::sim::Engine;
use crate::train::{
    episode_seed, evaluate, mean_std_err, run_episode, Controller, DqnTrainer, EvalSummary, Greedy,
    PpoTrainer, TrainerConfig,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const ARROW_BINS: usize = 10;

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const CURVES_MEAN_FILE: &str = "curves_mean.csv";
pub const EVALS_FILE: &str = "evals.csv";
pub const ARROWS_FILE: &str = "arrows.csv";
pub const BEST_CHECKPOINT: &str = "best.flck";
const LAST_CHECKPOINT: &str = "last.flck";
const LAST_TARGET_CHECKPOINT: &str = "last_target.flck";
const STATE_FILE: &str = "state.json";
const SEED_EVALS_FILE: &str = "evals.jsonl";

/// One periodic greedy evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    /// Episodes (DQN) or epochs (PPO) trained before the evaluation.
    pub progress: usize,
    pub mean: f64,
    pub std_err: f64,
    pub served_pct: f64,
    pub served_by_tag: Vec<f64>,
    pub returns: Vec<f64>,
}

impl EvalPoint {
    fn new(progress: usize, s: EvalSummary) -> Self {
        Self {
            progress,
            mean: s.mean,
            std_err: s.std_err,
            served_pct: s.served_pct,
            served_by_tag: s.served_by_tag,
            returns: s.returns,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub best_progress: usize,
    pub best_mean: f64,
    pub best_std_err: f64,
    pub best_served_pct: f64,
    pub best_served_by_tag: Vec<f64>,
    pub final_mean: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub domain: String,
    pub variant: Option<String>,
    pub algorithm: String,
    pub perspective: String,
    pub baseline: Option<String>,
    pub budget: usize,
    /// `episodes` or `epochs`.
    pub unit: String,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<SeedSummary>,
    /// Best evaluation across all seeds.
    pub best: SeedSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SeedState {
    progress: usize,
    updates: u64,
    evals: Vec<EvalPoint>,
}

/// Index of the highest mean; the earliest wins ties.
pub fn best_index(evals: &[EvalPoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in evals.iter().enumerate() {
        if best.is_none_or(|b| e.mean > evals[b].mean) {
            best = Some(i);
        }
    }
    best
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(format!("write {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("rename to {}", path.display()), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(format!("write {}", path.display()), io),
        other => Error::InvalidConfig(format!("{}: {other:?}", path.display())),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(format!("write {}", path.display()), e))
}

pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed-{seed}"))
}

/// Build a network matching the slots of `params` (with a critic when the
/// checkpoint has one) and load the values into it.
pub fn policy_from_params<R: Real>(params: &ParamVector<R>) -> Result<PolicyNet<R>> {
    let critic = params.slots.iter().any(|s| is_critic_slot(&s.name));
    let mut net = PolicyNet::new(&mut ChaCha8Rng::seed_from_u64(0), critic);
    params.write_into(&mut net)?;
    Ok(net)
}

pub fn load_policy<R: Real>(path: &Path) -> Result<PolicyNet<R>> {
    policy_from_params(&load_checkpoint::<R>(path)?.params)
}

enum Learner<R> {
    Dqn(Box<DqnTrainer<R>>),
    Ppo(Box<PpoTrainer<R>>),
}

impl<R: Real> Learner<R> {
    fn net(&self) -> &PolicyNet<R> {
        match self {
            Learner::Dqn(t) => &t.learner.online,
            Learner::Ppo(t) => &t.learner.net,
        }
    }

    fn progress(&self) -> usize {
        match self {
            Learner::Dqn(t) => t.episodes(),
            Learner::Ppo(t) => t.epochs(),
        }
    }

    fn updates(&self) -> u64 {
        match self {
            Learner::Dqn(t) => t.learner.updates(),
            Learner::Ppo(t) => t.epochs() as u64,
        }
    }

    fn advance(&mut self) -> Result<()> {
        match self {
            Learner::Dqn(t) => t.run_episode().map(drop),
            Learner::Ppo(t) => {
                t.run_epoch()?;
                t.take_finished();
                Ok(())
            }
        }
    }
}

struct SeedRun<'a> {
    cfg: &'a ExperimentConfig,
    trainer: TrainerConfig,
    scenario: &'a Scenario,
    seed: u64,
    dir: PathBuf,
}

impl SeedRun<'_> {
    fn eval_base(&self) -> u64 {
        episode_seed(self.cfg.eval_seed, self.seed)
    }

    fn meta(&self, progress: usize, critic: bool) -> serde_json::Value {
        json!({
            "domain": self.cfg.domain.name(),
            "algorithm": self.cfg.algorithm.name(),
            "perspective": self.cfg.perspective.name(),
            "seed": self.seed,
            "progress": progress,
            "critic": critic,
        })
    }

    fn save_state(&self, state: &SeedState) -> Result<()> {
        let mut lines = String::new();
        for e in &state.evals {
            lines.push_str(&serde_json::to_string(e).map_err(|e| Error::InvalidConfig(e.to_string()))?);
            lines.push('\n');
        }
        write_atomic(&self.dir.join(SEED_EVALS_FILE), lines.as_bytes())?;
        write_json(&self.dir.join(STATE_FILE), state)
    }

    fn baseline(&self, spec: BaselineSpec, on_eval: &(dyn Fn(u64, &EvalPoint) + Sync)) -> Result<Vec<EvalPoint>> {
        let mut controller = Baseline::new(spec);
        let s = evaluate(self.scenario, &mut controller, self.cfg.eval_episodes, self.eval_base())?;
        let point = EvalPoint::new(0, s);
        on_eval(self.seed, &point);
        let state = SeedState {
            progress: 0,
            updates: 0,
            evals: vec![point],
        };
        self.save_state(&state)?;
        Ok(state.evals)
    }

    fn learner<R: Real>(&self) -> Result<Learner<R>> {
        let scenario = self.scenario.clone();
        let p = self.cfg.perspective;
        Ok(match self.cfg.algorithm {
            Algorithm::Dqn => Learner::Dqn(Box::new(DqnTrainer::new(scenario, self.trainer, p, self.seed)?)),
            Algorithm::Ppo => Learner::Ppo(Box::new(PpoTrainer::new(scenario, self.trainer, p, self.seed)?)),
            Algorithm::Baseline => unreachable!("baselines are not trained"),
        })
    }

    fn resume<R: Real>(&self, learner: &mut Learner<R>, state: &SeedState) -> Result<()> {
        let online = load_policy::<R>(&self.dir.join(LAST_CHECKPOINT))?;
        match learner {
            Learner::Dqn(t) => {
                let target = load_policy::<R>(&self.dir.join(LAST_TARGET_CHECKPOINT))?;
                t.resume(online, target, state.updates, state.progress);
            }
            Learner::Ppo(t) => t.resume(online, state.progress),
        }
        Ok(())
    }

    fn checkpoint<R: Real>(&self, learner: &Learner<R>, state: &SeedState, improved: bool) -> Result<()> {
        let net = learner.net();
        let params = ParamVector::from_model(net);
        let meta = self.meta(state.progress, net.has_critic());
        if improved {
            save_checkpoint(&self.dir.join(BEST_CHECKPOINT), &params, &meta)?;
        }
        save_checkpoint(&self.dir.join(LAST_CHECKPOINT), &params, &meta)?;
        if let Learner::Dqn(t) = learner {
            let target = ParamVector::from_model(&t.learner.target);
            save_checkpoint(&self.dir.join(LAST_TARGET_CHECKPOINT), &target, &meta)?;
        }
        self.save_state(state)
    }

    fn evaluate<R: Real>(&self, learner: &Learner<R>) -> Result<EvalPoint> {
        let s = evaluate(self.scenario, &mut Greedy(learner.net()), self.cfg.eval_episodes, self.eval_base())?;
        Ok(EvalPoint::new(learner.progress(), s))
    }

    fn train<R: Real>(&self, on_eval: &(dyn Fn(u64, &EvalPoint) + Sync)) -> Result<Vec<EvalPoint>> {
        let mut learner = self.learner::<R>()?;
        let state_path = self.dir.join(STATE_FILE);
        let mut state = if state_path.exists() {
            let state: SeedState = read_json(&state_path)?;
            self.resume(&mut learner, &state)?;
            state
        } else {
            let point = self.evaluate(&learner)?;
            on_eval(self.seed, &point);
            let state = SeedState {
                progress: 0,
                updates: 0,
                evals: vec![point],
            };
            self.checkpoint(&learner, &state, true)?;
            state
        };
        let budget = self.cfg.budget;
        while learner.progress() < budget {
            learner.advance()?;
            let p = learner.progress();
            if p % self.cfg.eval_every == 0 || p == budget {
                let point = self.evaluate(&learner)?;
                on_eval(self.seed, &point);
                let improved = state.evals.iter().all(|e| point.mean > e.mean);
                state.evals.push(point);
                state.progress = p;
                state.updates = learner.updates();
                self.checkpoint(&learner, &state, improved)?;
            }
        }
        Ok(state.evals)
    }

    fn run(&self, on_eval: &(dyn Fn(u64, &EvalPoint) + Sync)) -> Result<Vec<EvalPoint>> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(format!("create {}", self.dir.display()), e))?;
        match (self.cfg.algorithm, self.cfg.baseline) {
            (Algorithm::Baseline, Some(spec)) => self.baseline(spec, on_eval),
            (Algorithm::Baseline, None) => Err(Error::InvalidConfig("baseline policy missing".into())),
            _ => match self.trainer.precision {
                Dtype::F32 => self.train::<f32>(on_eval),
                Dtype::F64 => self.train::<f64>(on_eval),
            },
        }
    }
}

fn seed_summary(seed: u64, evals: &[EvalPoint]) -> Result<SeedSummary> {
    let b = best_index(evals).ok_or_else(|| Error::InvalidConfig(format!("seed {seed} has no evaluations")))?;
    let best = &evals[b];
    Ok(SeedSummary {
        seed,
        best_progress: best.progress,
        best_mean: best.mean,
        best_std_err: best.std_err,
        best_served_pct: best.served_pct,
        best_served_by_tag: best.served_by_tag.clone(),
        final_mean: evals.last().map_or(0.0, |e| e.mean),
        evaluations: evals.len(),
    })
}

/// Train (or evaluate, for baselines) every seed, then write the merged
/// curves, raw returns, reposition arrows and the summary.
pub fn run_train(cfg: &ExperimentConfig) -> Result<RunSummary> {
    run_train_with(cfg, &|_, _| {})
}

/// [`run_train`] with a callback invoked after every evaluation.
pub fn run_train_with(cfg: &ExperimentConfig, on_eval: &(dyn Fn(u64, &EvalPoint) + Sync)) -> Result<RunSummary> {
    cfg.validate()?;
    let trainer = cfg.trainer_config()?;
    let scenario = cfg.policy_scenario()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(format!("create {}", cfg.out_dir.display()), e))?;
    write_atomic(&cfg.out_dir.join(CONFIG_FILE), cfg.to_toml_string()?.as_bytes())?;
    let runs: Vec<SeedRun> = cfg
        .seeds
        .iter()
        .map(|&seed| SeedRun {
            cfg,
            trainer,
            scenario: &scenario,
            seed,
            dir: seed_dir(&cfg.out_dir, seed),
        })
        .collect();
    let results = runs.par_iter().map(|r| r.run(on_eval)).collect::<Result<Vec<_>>>()?;
    let per_seed: Vec<(u64, Vec<EvalPoint>)> = cfg.seeds.iter().copied().zip(results).collect();
    write_curves(&cfg.out_dir, &per_seed)?;
    let arrows = per_seed
        .iter()
        .map(|(seed, _)| seed_arrows(cfg, &scenario, &seed_dir(&cfg.out_dir, *seed), *seed))
        .collect::<Result<Vec<_>>>()?;
    write_arrows(&cfg.out_dir.join(ARROWS_FILE), &scenario, &arrows)?;
    let seeds = per_seed
        .iter()
        .map(|(s, e)| seed_summary(*s, e))
        .collect::<Result<Vec<_>>>()?;
    let best = seeds
        .iter()
        .fold(None::<&SeedSummary>, |acc, s| match acc {
            Some(a) if a.best_mean >= s.best_mean => Some(a),
            _ => Some(s),
        })
        .cloned()
        .expect("seeds are non-empty");
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        domain: cfg.domain.name().into(),
        variant: cfg.variant.clone(),
        algorithm: cfg.algorithm.name().into(),
        perspective: cfg.perspective.name().into(),
        baseline: cfg.baseline.map(|b| b.to_string()),
        budget: cfg.budget,
        unit: if cfg.algorithm == Algorithm::Ppo { "epochs" } else { "episodes" }.into(),
        eval_every: cfg.eval_every,
        eval_episodes: cfg.eval_episodes,
        seeds,
        best,
    };
    write_json(&cfg.out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn write_curves(out: &Path, per_seed: &[(u64, Vec<EvalPoint>)]) -> Result<()> {
    let f = |v: f64| v.to_string();
    write_csv(
        &out.join(CURVES_FILE),
        &["seed", "episodes_or_epochs", "mean_return", "std_err", "served_pct"],
        per_seed.iter().flat_map(|(seed, evals)| {
            evals
                .iter()
                .map(move |e| vec![seed.to_string(), e.progress.to_string(), f(e.mean), f(e.std_err), f(e.served_pct)])
        }),
    )?;
    write_csv(
        &out.join(EVALS_FILE),
        &["seed", "episodes_or_epochs", "episode", "return"],
        per_seed.iter().flat_map(|(seed, evals)| {
            evals.iter().flat_map(move |e| {
                e.returns
                    .iter()
                    .enumerate()
                    .map(move |(i, r)| vec![seed.to_string(), e.progress.to_string(), i.to_string(), f(*r)])
            })
        }),
    )?;
    let mut progress: Vec<usize> = per_seed.iter().flat_map(|(_, e)| e.iter().map(|p| p.progress)).collect();
    progress.sort_unstable();
    progress.dedup();
    let rows = progress.into_iter().map(|p| {
        let means: Vec<f64> = per_seed
            .iter()
            .filter_map(|(_, e)| e.iter().find(|x| x.progress == p).map(|x| x.mean))
            .collect();
        let (mean, se) = mean_std_err(&means);
        let std = se * (means.len() as f64).sqrt();
        vec![p.to_string(), f(mean), f(std), means.len().to_string()]
    });
    write_csv(
        &out.join(CURVES_MEAN_FILE),
        &["episodes_or_epochs", "mean_return", "std_across_seeds", "seeds"],
        rows,
    )
}

/// Mean reposition vector and count per spatial bin, row-major from the
/// region's minimum corner.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrowField {
    pub seed: u64,
    pub sum: Vec<(f64, f64)>,
    pub count: Vec<u64>,
}

/// Greedy episodes of the seed's best policy with reposition recording.
fn seed_arrows(cfg: &ExperimentConfig, scenario: &Scenario, dir: &Path, seed: u64) -> Result<ArrowField> {
    let mut controller: Box<dyn Controller> = match (cfg.algorithm, cfg.baseline) {
        (Algorithm::Baseline, Some(spec)) => Box::new(Baseline::new(spec)),
        _ => Box::new(OwnedGreedy(load_policy::<f64>(&dir.join(BEST_CHECKPOINT))?)),
    };
    arrow_field(scenario, controller.as_mut(), cfg.eval_episodes, episode_seed(cfg.eval_seed, seed), seed)
}

struct OwnedGreedy(PolicyNet<f64>);

impl Controller for OwnedGreedy {
    fn choose(&mut self, obs: &crate::features::Observation) -> Result<usize> {
        Greedy(&self.0).choose(obs)
    }
}

pub fn arrow_field<C: Controller + ?Sized>(
    scenario: &Scenario,
    controller: &mut C,
    episodes: usize,
    base_seed: u64,
    seed: u64,
) -> Result<ArrowField> {
    let region = scenario.config.region;
    let mut engine = Engine::new(scenario.clone())?;
    engine.set_record_repositions(true);
    let mut field = ArrowField {
        seed,
        sum: vec![(0.0, 0.0); ARROW_BINS * ARROW_BINS],
        count: vec![0; ARROW_BINS * ARROW_BINS],
    };
    let bin = |v: f64, lo: f64, span: f64| (((v - lo) / span * ARROW_BINS as f64).floor().max(0.0) as usize).min(ARROW_BINS - 1);
    for i in 0..episodes as u64 {
        run_episode(&mut engine, episode_seed(base_seed, i), controller)?;
        for r in engine.reposition_log() {
            let b = bin(r.at_y, region.min.y, region.height()) * ARROW_BINS + bin(r.at_x, region.min.x, region.width());
            let (dx, dy) = r.heading.unit();
            field.sum[b].0 += dx;
            field.sum[b].1 += dy;
            field.count[b] += 1;
        }
    }
    Ok(field)
}

fn write_arrows(path: &Path, scenario: &Scenario, fields: &[ArrowField]) -> Result<()> {
    let region = scenario.config.region;
    let (w, h) = (region.width() / ARROW_BINS as f64, region.height() / ARROW_BINS as f64);
    write_csv(
        path,
        &["seed", "bin_x", "bin_y", "center_x", "center_y", "mean_dx", "mean_dy", "count"],
        fields.iter().flat_map(|f| {
            (0..ARROW_BINS * ARROW_BINS).map(move |b| {
                let (bx, by) = (b % ARROW_BINS, b / ARROW_BINS);
                let n = f.count[b];
                let (mx, my) = if n == 0 {
                    (0.0, 0.0)
                } else {
                    (f.sum[b].0 / n as f64, f.sum[b].1 / n as f64)
                };
                vec![
                    f.seed.to_string(),
                    bx.to_string(),
                    by.to_string(),
                    (region.min.x + (bx as f64 + 0.5) * w).to_string(),
                    (region.min.y + (by as f64 + 0.5) * h).to_string(),
                    mx.to_string(),
                    my.to_string(),
                    n.to_string(),
                ]
            })
        }),
    )
}

/// What `run_eval` evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySource {
    Checkpoint(PathBuf),
    Baseline(BaselineSpec),
}

/// Greedy (max-score) evaluation of a checkpoint, or a baseline run, over
/// `episodes` episodes seeded from `seed`.
pub fn run_eval(source: &PolicySource, scenario: &Scenario, episodes: usize, seed: u64) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("episodes must be positive".into()));
    }
    match source {
        PolicySource::Checkpoint(path) => {
            let net = load_policy::<f64>(path)?;
            evaluate(scenario, &mut Greedy(&net), episodes, seed)
        }
        PolicySource::Baseline(spec) => {
            let scenario = spec.configure(scenario.clone());
            evaluate(&scenario, &mut Baseline::new(*spec), episodes, seed)
        }
    }
}

/// Markdown table of the summaries found in `run_dirs`.
pub fn report(run_dirs: &[PathBuf]) -> Result<String> {
    let mut out = String::from(
        "| run | domain | variant | algorithm | perspective | best return | served % | best seed | at |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    for dir in run_dirs {
        let s: RunSummary = read_json(&dir.join(SUMMARY_FILE))?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "{}: summary schema {} (expected {SCHEMA_VERSION})",
                dir.display(),
                s.schema_version
            )));
        }
        let algo = match &s.baseline {
            Some(b) => format!("{} ({b})", s.algorithm),
            None => s.algorithm.clone(),
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.1} ± {:.1} | {:.1} | {} | {} {} |\n",
            dir.display(),
            s.domain,
            s.variant.as_deref().unwrap_or("-"),
            algo,
            s.perspective,
            s.best.best_mean,
            s.best.best_std_err,
            s.best.best_served_pct,
            s.best.seed,
            s.best.best_progress,
            s.unit,
        ));
    }
    Ok(out)
}
