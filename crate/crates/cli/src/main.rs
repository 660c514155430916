use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fleetlab::baselines::BaselineSpec;
use fleetlab::harness::{
    self, build_scenario, gen_synthetic_historical, run_eval, Algorithm, Domain, ExperimentConfig, PolicySource,
    ScenarioOptions, SynthConfig,
};
use fleetlab::train::{EvalSummary, Perspective};
use fleetlab::{Error, Result};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "fleetlab", version, about = "Ride-hailing dispatch and repositioning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train (or evaluate a baseline) over several seeds with periodic evaluation.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a baseline policy.
    Eval(EvalArgs),
    /// Evaluate baseline policies (`--policy all` for the six of them).
    Baseline(BaselineArgs),
    /// Write a synthetic historical order file and its Poisson grid.
    GenData(GenArgs),
    /// Markdown table of finished runs.
    Report(ReportArgs),
}

#[derive(Args, Default)]
struct ScenarioArgs {
    /// regional | hot-cold | distribute | historical-orders | historical-statistics
    #[arg(long)]
    domain: Option<Domain>,
    /// high | low, or a split such as 50-50 for distribute
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    drivers: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    order_rate: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    /// Driver and order count of the distribute domain.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    orders_file: Option<PathBuf>,
    #[arg(long)]
    grid_file: Option<PathBuf>,
    #[arg(long)]
    days: Option<usize>,
}

impl ScenarioArgs {
    fn apply(&self, o: &mut ScenarioOptions) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { o.$f = Some(v.clone()); })*};
        }
        set!(drivers, horizon, order_rate, noise, k, orders_file, grid_file, days);
    }

    fn options(&self) -> ScenarioOptions {
        let mut o = ScenarioOptions::default();
        self.apply(&mut o);
        o
    }

    fn domain(&self) -> Result<Domain> {
        self.domain
            .ok_or_else(|| Error::InvalidConfig("--domain is required".into()))
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// dqn | ppo | baseline
    #[arg(long)]
    algo: Option<Algorithm>,
    /// driver | system
    #[arg(long)]
    perspective: Option<Perspective>,
    /// Baseline policy for `--algo baseline`.
    #[arg(long)]
    policy: Option<BaselineSpec>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Episodes (dqn) or epochs (ppo).
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    eval_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trainer override such as `gamma=0.9` or `ppo.clip=0.1`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Suppress per-evaluation progress lines on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, conflicts_with = "policy", required_unless_present = "policy")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    policy: Option<BaselineSpec>,
    #[arg(long, default_value_t = 5)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// A baseline name or `all`.
    #[arg(long, default_value = "all")]
    policy: String,
    #[arg(long, default_value_t = 5)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    days: usize,
    #[arg(long, default_value_t = 2000.0)]
    daily_orders: f64,
    /// Output directory for orders.csv and grid.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories containing summary.json.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
}

fn parse_override(entry: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = entry
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("--set `{entry}` must look like key=value")))?;
    let doc: toml::Table = toml::from_str(&format!("v = {raw}"))
        .or_else(|_| toml::from_str(&format!("v = {:?}", raw)))
        .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("--set {entry}: {e}")))?;
    Ok((key.split('.').map(str::to_string).collect(), doc["v"].clone()))
}

fn insert_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("split yields at least one key");
    let mut t = table;
    for p in parents {
        t = t
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("trainer key `{p}` is not a table")))?;
    }
    t.insert(last.clone(), value);
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let out = a
                .out
                .clone()
                .ok_or_else(|| Error::InvalidConfig("--out is required without --config".into()))?;
            ExperimentConfig::new(a.scenario.domain()?, out)
        }
    };
    if let Some(d) = a.scenario.domain {
        cfg.domain = d;
    }
    if let Some(v) = &a.scenario.variant {
        cfg.variant = Some(v.clone());
    }
    a.scenario.apply(&mut cfg.scenario);
    if let Some(x) = a.algo {
        cfg.algorithm = x;
    }
    if let Some(x) = a.perspective {
        cfg.perspective = x;
    }
    if let Some(x) = a.policy {
        cfg.baseline = Some(x);
        if a.algo.is_none() {
            cfg.algorithm = Algorithm::Baseline;
        }
    }
    if let Some(x) = &a.seeds {
        cfg.seeds = x.clone();
    }
    if let Some(x) = a.budget {
        cfg.budget = x;
    }
    if let Some(x) = a.eval_every {
        cfg.eval_every = x;
    }
    if let Some(x) = a.eval_episodes {
        cfg.eval_episodes = x;
    }
    if let Some(x) = a.eval_seed {
        cfg.eval_seed = x;
    }
    if let Some(x) = &a.out {
        cfg.out_dir = x.clone();
    }
    for entry in &a.set {
        let (path, value) = parse_override(entry)?;
        insert_path(&mut cfg.trainer, &path, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn eval_json(s: &EvalSummary) -> Value {
    json!({
        "episodes": s.returns.len(),
        "mean": s.mean,
        "std_err": s.std_err,
        "served_pct": s.served_pct,
        "served_by_tag": s.served_by_tag,
        "returns": s.returns,
    })
}

fn run(cli: Cli) -> Result<Value> {
    match cli.command {
        Command::Train(a) => {
            let cfg = train_config(&a)?;
            let quiet = a.quiet;
            let summary = harness::run_train_with(&cfg, &|seed, e| {
                if !quiet {
                    eprintln!(
                        "seed {seed} at {}: {:.2} ± {:.2} (served {:.1}%)",
                        e.progress, e.mean, e.std_err, e.served_pct
                    );
                }
            })?;
            serde_json::to_value(summary).map_err(|e| Error::InvalidConfig(e.to_string()))
        }
        Command::Eval(a) => {
            let scenario = build_scenario(a.scenario.domain()?, a.scenario.variant.as_deref(), &a.scenario.options())?;
            let source = match (a.checkpoint, a.policy) {
                (Some(p), _) => PolicySource::Checkpoint(p),
                (None, Some(b)) => PolicySource::Baseline(b),
                (None, None) => unreachable!("clap requires one of them"),
            };
            Ok(eval_json(&run_eval(&source, &scenario, a.episodes, a.seed)?))
        }
        Command::Baseline(a) => {
            let scenario = build_scenario(a.scenario.domain()?, a.scenario.variant.as_deref(), &a.scenario.options())?;
            let specs: Vec<BaselineSpec> = if a.policy == "all" {
                BaselineSpec::ALL.to_vec()
            } else {
                vec![a.policy.parse()?]
            };
            let mut out = serde_json::Map::new();
            for spec in specs {
                let s = run_eval(&PolicySource::Baseline(spec), &scenario, a.episodes, a.seed)?;
                out.insert(spec.to_string(), eval_json(&s));
            }
            Ok(Value::Object(out))
        }
        Command::GenData(a) => {
            let o = gen_synthetic_historical(&SynthConfig::new(a.days, a.daily_orders), a.seed, &a.out)?;
            serde_json::to_value(o).map_err(|e| Error::InvalidConfig(e.to_string()))
        }
        Command::Report(a) => Ok(Value::String(harness::report(&a.runs)?)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({"error": "usage", "message": e.to_string().trim_end()}));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(v) => {
            let text = match v {
                Value::String(text) => text,
                v => serde_json::to_string_pretty(&v).expect("values serialise") + "\n",
            };
            // A closed pipe downstream is not an error of ours.
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}
