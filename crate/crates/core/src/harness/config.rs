use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineSpec;
use crate::error::{Error, Result};
use crate::scenarios::{self, Demand, Scenario};
use crate::train::{Perspective, TrainerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Regional,
    HotCold,
    Distribute,
    HistoricalOrders,
    HistoricalStatistics,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Regional,
        Domain::HotCold,
        Domain::Distribute,
        Domain::HistoricalOrders,
        Domain::HistoricalStatistics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Regional => "regional",
            Domain::HotCold => "hot-cold",
            Domain::Distribute => "distribute",
            Domain::HistoricalOrders => "historical-orders",
            Domain::HistoricalStatistics => "historical-statistics",
        }
    }

    pub fn is_historical(self) -> bool {
        matches!(self, Domain::HistoricalOrders | Domain::HistoricalStatistics)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown domain `{s}` (expected regional, hot-cold, distribute, \
                     historical-orders or historical-statistics)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dqn,
    Ppo,
    Baseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Ppo => "ppo",
            Algorithm::Baseline => "baseline",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(Algorithm::Dqn),
            "ppo" => Ok(Algorithm::Ppo),
            "baseline" => Ok(Algorithm::Baseline),
            _ => Err(Error::InvalidConfig(format!(
                "unknown algorithm `{s}` (expected dqn, ppo or baseline)"
            ))),
        }
    }
}

/// Optional scenario overrides; unset fields keep the domain's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioOptions {
    pub drivers: Option<usize>,
    pub horizon: Option<f64>,
    /// Orders per time unit (Poisson-region domains).
    pub order_rate: Option<f64>,
    pub noise: Option<f64>,
    /// Driver and order count of the distribute domain.
    pub k: Option<usize>,
    /// Historical order CSV.
    pub orders_file: Option<PathBuf>,
    /// Poisson grid file.
    pub grid_file: Option<PathBuf>,
    /// Number of day slots for the order replay.
    pub days: Option<usize>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_eval_every() -> usize {
    50
}

fn default_eval_episodes() -> usize {
    5
}

fn default_eval_seed() -> u64 {
    0xE7A1
}

fn default_algorithm() -> Algorithm {
    Algorithm::Dqn
}

fn default_perspective() -> Perspective {
    Perspective::DriverCentric
}

/// One experiment: a domain, an algorithm and its budget, evaluated
/// periodically for each seed.
///
/// ```toml
/// domain = "regional"          # regional | hot-cold | distribute | historical-orders | historical-statistics
/// variant = "high"             # high | low, or "50-50" style splits for distribute
/// algorithm = "dqn"            # dqn | ppo | baseline
/// perspective = "driver"       # driver | system
/// baseline = "mpdm-demand"     # only with algorithm = "baseline"
/// seeds = [0, 1, 2, 3]
/// budget = 1000                # episodes (dqn) or epochs (ppo)
/// eval_every = 50
/// eval_episodes = 5
/// out_dir = "runs/regional-dqn"
///
/// [scenario]
/// drivers = 5
/// horizon = 200.0
///
/// [trainer]                    # any TrainerConfig field
/// precision = "f32"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_perspective")]
    pub perspective: Perspective,
    #[serde(default)]
    pub baseline: Option<BaselineSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub budget: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Base seed of the evaluation episodes.
    #[serde(default = "default_eval_seed")]
    pub eval_seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub scenario: ScenarioOptions,
    /// Overrides on top of the domain's trainer defaults.
    #[serde(default)]
    pub trainer: toml::Table,
}

impl ExperimentConfig {
    pub fn new(domain: Domain, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            domain,
            variant: None,
            algorithm: default_algorithm(),
            perspective: default_perspective(),
            baseline: None,
            seeds: default_seeds(),
            budget: 0,
            eval_every: default_eval_every(),
            eval_episodes: default_eval_episodes(),
            eval_seed: default_eval_seed(),
            out_dir: out_dir.into(),
            scenario: ScenarioOptions::default(),
            trainer: toml::Table::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::InvalidConfig("eval_every and eval_episodes must be positive".into()));
        }
        if self.algorithm == Algorithm::Baseline && self.baseline.is_none() {
            return Err(Error::InvalidConfig("algorithm = baseline needs a `baseline` policy".into()));
        }
        self.trainer_config()?.validate()
    }

    pub fn trainer_config(&self) -> Result<TrainerConfig> {
        resolve_trainer(self.domain, &self.trainer)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        build_scenario(self.domain, self.variant.as_deref(), &self.scenario)
    }

    /// The scenario as the configured policy sees it (simple mode for the
    /// simple baselines).
    pub fn policy_scenario(&self) -> Result<Scenario> {
        let s = self.scenario()?;
        Ok(match (self.algorithm, self.baseline) {
            (Algorithm::Baseline, Some(b)) => b.configure(s),
            _ => s,
        })
    }
}

/// Trainer settings the experiments use per domain before overrides.
pub fn domain_trainer_defaults(domain: Domain) -> TrainerConfig {
    let mut c = TrainerConfig::default();
    match domain {
        Domain::Distribute => {
            c.epsilon_floor = 0.2;
            c.ppo.entropy.start = 0.7;
            c.ppo.entropy.end = 0.01;
            c.ppo.entropy.anneal_epochs = 2000;
        }
        Domain::HistoricalOrders => c.gamma = 0.9,
        Domain::HistoricalStatistics => {
            c.gamma = 0.9;
            c.ppo.lr_policy = 5e-4;
            c.ppo.lr_value = 1e-3;
            c.ppo.parallel_envs = 10;
            c.ppo.steps_per_epoch = 400;
        }
        Domain::Regional | Domain::HotCold => {}
    }
    c
}

fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

pub fn resolve_trainer(domain: Domain, overrides: &toml::Table) -> Result<TrainerConfig> {
    let defaults = domain_trainer_defaults(domain);
    let mut table = toml::Table::try_from(defaults).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    merge(&mut table, overrides);
    let cfg: TrainerConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("trainer: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_demand(variant: Option<&str>) -> Result<Demand> {
    match variant.unwrap_or("high") {
        "high" => Ok(Demand::High),
        "low" => Ok(Demand::Low),
        v => Err(Error::InvalidConfig(format!("unknown demand variant `{v}` (expected high or low)"))),
    }
}

/// `"50-50"`, `"80-20"` or `"100-0"`: percentage of orders in the first patch
/// and in the second.
pub fn parse_split(variant: Option<&str>) -> Result<f64> {
    let v = variant.unwrap_or("50-50");
    let bad = || Error::InvalidConfig(format!("distribute variant `{v}` must look like 50-50"));
    let (a, b) = v.split_once('-').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a >= 0.0 && b >= 0.0 && (a + b - 100.0).abs() < 1e-9) {
        return Err(bad());
    }
    Ok(a / 100.0)
}

pub fn build_scenario(domain: Domain, variant: Option<&str>, opts: &ScenarioOptions) -> Result<Scenario> {
    let mut s = match domain {
        Domain::Regional => scenarios::regional(parse_demand(variant)?),
        Domain::HotCold => scenarios::hot_cold(parse_demand(variant)?),
        Domain::Distribute => scenarios::distribute(parse_split(variant)?, opts.k.unwrap_or(20))?,
        Domain::HistoricalOrders => {
            let path = opts
                .orders_file
                .as_deref()
                .ok_or_else(|| Error::InvalidConfig("historical-orders needs scenario.orders_file".into()))?;
            let records = scenarios::read_historical_orders(path)?;
            scenarios::historical_orders_from(&records, opts.days)
        }
        Domain::HistoricalStatistics => {
            let path = opts
                .grid_file
                .as_deref()
                .ok_or_else(|| Error::InvalidConfig("historical-statistics needs scenario.grid_file".into()))?;
            scenarios::historical_statistics(path)?
        }
    };
    if let Some(n) = opts.drivers {
        if domain == Domain::HistoricalStatistics {
            return Err(Error::InvalidConfig(
                "historical-statistics draws its drivers from the grid; `drivers` does not apply".into(),
            ));
        }
        s = s.with_drivers(n);
    }
    if let Some(h) = opts.horizon {
        s = s.with_horizon(h);
    }
    if let Some(r) = opts.order_rate {
        if !matches!(domain, Domain::Regional | Domain::HotCold) {
            return Err(Error::InvalidConfig(format!("`order_rate` does not apply to {domain}")));
        }
        s = s.with_order_rate(r);
    }
    if let Some(sigma) = opts.noise {
        s = s.with_noise(sigma);
    }
    s.validate()?;
    Ok(s)
}
