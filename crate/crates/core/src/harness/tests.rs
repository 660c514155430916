use std::fs;

use super::*;
use crate::baselines::BaselineSpec;
use crate::features::Observation;
use crate::geom::{Heading, Rect};
use crate::nn::Dtype;
use crate::scenarios::{self, DriverScheme, HistoricalRecord, OrderScheme};
use crate::train::{evaluate, Controller, Perspective};
use crate::Result;

fn tiny(out: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(Domain::Regional, out);
    c.scenario.drivers = Some(2);
    c.scenario.horizon = Some(20.0);
    c.eval_every = 1;
    c.eval_episodes = 2;
    c.trainer.insert("precision".into(), "f32".into());
    c.trainer.insert("learning_starts".into(), 4.into());
    c
}

#[test]
fn documented_config_parses() {
    let text = r#"
domain = "regional"
variant = "high"
algorithm = "dqn"
perspective = "driver"
seeds = [0, 1, 2, 3]
budget = 1000
eval_every = 50
eval_episodes = 5
out_dir = "runs/regional-dqn"

[scenario]
drivers = 5
horizon = 200.0

[trainer]
precision = "f32"

[trainer.ppo]
clip = 0.1
"#;
    let c = ExperimentConfig::from_toml_str(text).unwrap();
    c.validate().unwrap();
    assert_eq!(c.seeds, vec![0, 1, 2, 3]);
    let t = c.trainer_config().unwrap();
    assert_eq!(t.precision, Dtype::F32);
    assert_eq!(t.ppo.clip, 0.1);
    assert_eq!(t.ppo.lambda, 0.95);
    let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    let base = "domain = \"regional\"\nout_dir = \"x\"\n";
    assert!(ExperimentConfig::from_toml_str(base).unwrap().validate().is_ok());
    assert!(ExperimentConfig::from_toml_str(&format!("{base}colour = 1\n")).is_err());
    assert!(ExperimentConfig::from_toml_str("domain = \"moon\"\nout_dir = \"x\"\n").is_err());
    let c = ExperimentConfig::from_toml_str(&format!("{base}[trainer]\ngama = 0.5\n")).unwrap();
    assert!(c.validate().is_err());
    let c = ExperimentConfig::from_toml_str(&format!("{base}seeds = []\n")).unwrap();
    assert!(c.validate().is_err());
    let c = ExperimentConfig::from_toml_str(&format!("{base}algorithm = \"baseline\"\n")).unwrap();
    assert!(c.validate().is_err());
}

#[test]
fn domain_defaults_sit_under_overrides() {
    let d = resolve_trainer(Domain::Distribute, &toml::Table::new()).unwrap();
    assert_eq!(d.epsilon_floor, 0.2);
    assert_eq!(d.ppo.entropy.start, 0.7);
    assert_eq!(d.ppo.entropy.anneal_epochs, 2000);
    let mut over = toml::Table::new();
    let mut ppo = toml::Table::new();
    ppo.insert("lr_value".into(), 2e-3.into());
    over.insert("ppo".into(), ppo.into());
    let h = resolve_trainer(Domain::HistoricalStatistics, &over).unwrap();
    assert_eq!(h.gamma, 0.9);
    assert_eq!(h.ppo.parallel_envs, 10);
    assert_eq!(h.ppo.steps_per_epoch, 400);
    assert_eq!(h.ppo.lr_policy, 5e-4);
    assert_eq!(h.ppo.lr_value, 2e-3);
    assert_eq!(resolve_trainer(Domain::HistoricalOrders, &toml::Table::new()).unwrap().gamma, 0.9);
}

#[test]
fn domain_names_round_trip() {
    for d in Domain::ALL {
        assert_eq!(d.name().parse::<Domain>().unwrap(), d);
    }
    assert!("hotcold".parse::<Domain>().is_err());
}

#[test]
fn split_variants() {
    assert_eq!(parse_split(Some("50-50")).unwrap(), 0.5);
    assert_eq!(parse_split(Some("80-20")).unwrap(), 0.8);
    assert_eq!(parse_split(None).unwrap(), 0.5);
    assert!(parse_split(Some("60-60")).is_err());
    assert!(parse_split(Some("half")).is_err());
}

#[test]
fn scenario_options_apply() {
    let mut o = ScenarioOptions::default();
    o.drivers = Some(3);
    o.horizon = Some(50.0);
    let s = build_scenario(Domain::HotCold, Some("low"), &o).unwrap();
    assert_eq!(s.fixed_driver_count(), Some(3));
    assert_eq!(s.config.episode_horizon, 50.0);
    o.k = Some(7);
    let s = build_scenario(Domain::Distribute, Some("100-0"), &o).unwrap();
    assert_eq!(s.fixed_driver_count(), Some(3));
    assert!(build_scenario(Domain::HistoricalOrders, None, &ScenarioOptions::default()).is_err());
    o.order_rate = Some(1.0);
    assert!(build_scenario(Domain::Distribute, None, &o).is_err());
    assert!(build_scenario(Domain::Regional, Some("medium"), &ScenarioOptions::default()).is_err());
}

#[test]
fn zero_budget_reports_the_untrained_policy() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny(dir.path());
    let s = run_train(&c).unwrap();
    assert_eq!(s.schema_version, SCHEMA_VERSION);
    assert_eq!(s.seeds.len(), 1);
    assert_eq!(s.seeds[0].evaluations, 1);
    assert_eq!(s.best.best_progress, 0);
    assert!(seed_dir(dir.path(), 0).join(BEST_CHECKPOINT).exists());
    let arrows = fs::read_to_string(dir.path().join(ARROWS_FILE)).unwrap();
    assert_eq!(arrows.lines().count(), 1 + ARROW_BINS * ARROW_BINS);
}

#[test]
fn four_seeds_give_four_curve_series_and_reruns_match() {
    let a = tempfile::tempdir().unwrap();
    let mut c = tiny(a.path());
    c.seeds = vec![0, 1, 2, 3];
    c.budget = 2;
    let s1 = run_train(&c).unwrap();
    let curves = fs::read_to_string(a.path().join(CURVES_FILE)).unwrap();
    let mut series: Vec<&str> = curves.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    series.dedup();
    assert_eq!(series, ["0", "1", "2", "3"]);
    assert_eq!(curves.lines().count(), 1 + 4 * 3);

    let b = tempfile::tempdir().unwrap();
    c.out_dir = b.path().to_path_buf();
    let s2 = run_train(&c).unwrap();
    assert_eq!(s1, s2);
    for f in [SUMMARY_FILE, CURVES_FILE, CURVES_MEAN_FILE, EVALS_FILE, ARROWS_FILE] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn summary_is_recomputable_from_raw_returns() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path());
    c.budget = 2;
    c.seeds = vec![5, 6];
    let s = run_train(&c).unwrap();
    let evals = fs::read_to_string(dir.path().join(EVALS_FILE)).unwrap();
    for seed in &s.seeds {
        let returns: Vec<f64> = evals
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|r| r[0] == seed.seed.to_string() && r[1] == seed.best_progress.to_string())
            .map(|r| r[3].parse().unwrap())
            .collect();
        let (mean, se) = crate::train::mean_std_err(&returns);
        assert_eq!(mean, seed.best_mean);
        assert_eq!(se, seed.best_std_err);
    }
    let best = s.seeds.iter().map(|x| x.best_mean).fold(f64::MIN, f64::max);
    assert_eq!(s.best.best_mean, best);
}

#[test]
fn interrupted_runs_resume_from_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path());
    c.budget = 2;
    run_train(&c).unwrap();
    c.budget = 4;
    let s = run_train(&c).unwrap();
    assert_eq!(s.seeds[0].evaluations, 5);
    let progress: Vec<usize> = fs::read_to_string(seed_dir(dir.path(), 0).join("evals.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<EvalPoint>(l).unwrap().progress)
        .collect();
    assert_eq!(progress, [0, 1, 2, 3, 4]);
}

#[test]
fn ppo_and_baseline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path());
    c.algorithm = Algorithm::Ppo;
    c.perspective = Perspective::SystemCentric;
    c.budget = 1;
    let mut ppo = toml::Table::new();
    ppo.insert("steps_per_epoch".into(), 40.into());
    ppo.insert("updates_per_epoch".into(), 2.into());
    c.trainer.insert("ppo".into(), ppo.into());
    let s = run_train(&c).unwrap();
    assert_eq!(s.unit, "epochs");
    assert_eq!(s.seeds[0].evaluations, 2);
    let net = load_policy::<f64>(&seed_dir(dir.path(), 0).join(BEST_CHECKPOINT)).unwrap();
    assert!(net.has_critic());

    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path());
    c.algorithm = Algorithm::Baseline;
    c.baseline = Some("mpdm-demand".parse().unwrap());
    c.budget = 100;
    let s = run_train(&c).unwrap();
    assert_eq!(s.baseline.as_deref(), Some("mpdm-demand"));
    assert_eq!(s.seeds[0].evaluations, 1);
    assert!(fs::read_to_string(dir.path().join(ARROWS_FILE))
        .unwrap()
        .lines()
        .skip(1)
        .any(|l| !l.ends_with(",0")));
}

#[test]
fn eval_of_a_checkpoint_matches_the_training_eval() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path());
    c.trainer.insert("precision".into(), "f64".into());
    c.budget = 1;
    let s = run_train(&c).unwrap();
    let best = &s.seeds[0];
    let source = PolicySource::Checkpoint(seed_dir(dir.path(), 0).join(BEST_CHECKPOINT));
    let scenario = c.scenario().unwrap();
    let base = crate::train::episode_seed(c.eval_seed, 0);
    let e = run_eval(&source, &scenario, c.eval_episodes, base).unwrap();
    assert_eq!(e.mean, best.best_mean);
    assert_eq!(run_eval(&source, &scenario, 3, 11).unwrap(), run_eval(&source, &scenario, 3, 11).unwrap());
    let missing = PolicySource::Checkpoint(dir.path().join("nope.flck"));
    assert!(run_eval(&missing, &scenario, 1, 0).is_err());
}

#[test]
fn deterministic_baseline_on_a_fixed_day_has_zero_standard_error() {
    let records: Vec<HistoricalRecord> = (0..40)
        .map(|i| HistoricalRecord {
            day: 0,
            time_seconds: 600.0 * i as f64,
            origin: crate::geom::Point::new(9.0 + (i % 5) as f64 * 0.3, 10.0),
            destination: crate::geom::Point::new(12.0, 10.0 + (i % 3) as f64),
        })
        .collect();
    let mut s = scenarios::historical_orders_from(&records, Some(2)).with_noise(0.0);
    if let OrderScheme::Replay(r) = &mut s.orders {
        r.fixed_day = Some(0);
    }
    s.drivers = DriverScheme::Fixed {
        count: 3,
        spawn: Rect::new(10.0, 10.0, 10.0, 10.0),
    };
    let spec: BaselineSpec = "mpdm-simple".parse().unwrap();
    let e = run_eval(&PolicySource::Baseline(spec), &s, 6, 1).unwrap();
    assert!(e.mean > 0.0);
    assert_eq!(e.std_err, 0.0);
}

struct NeverMove;

impl Controller for NeverMove {
    fn choose(&mut self, obs: &Observation) -> Result<usize> {
        Ok(if obs.num_actions() == Heading::COUNT { Heading::Stay.index() } else { 0 })
    }
}

#[test]
fn distribute_without_repositioning_serves_nothing() {
    let s = build_scenario(Domain::Distribute, Some("50-50"), &ScenarioOptions::default()).unwrap();
    let e = evaluate(&s, &mut NeverMove, 5, 0).unwrap();
    assert_eq!(e.served_pct, 0.0);
    assert_eq!(e.mean, 0.0);
}

#[test]
fn arrows_bin_reposition_headings() {
    let s = scenarios::regional(scenarios::Demand::High).with_drivers(2).with_horizon(30.0);
    struct East;
    impl Controller for East {
        fn choose(&mut self, obs: &Observation) -> Result<usize> {
            Ok(if obs.num_actions() == Heading::COUNT { Heading::East.index() } else { 0 })
        }
    }
    let f = arrow_field(&s, &mut East, 2, 3, 0).unwrap();
    let total: u64 = f.count.iter().sum();
    assert!(total > 0);
    for (sum, n) in f.sum.iter().zip(&f.count) {
        assert!((sum.0 - *n as f64).abs() < 1e-12 && sum.1 == 0.0);
    }
}

#[test]
fn report_lists_each_run() {
    let a = tempfile::tempdir().unwrap();
    let mut c = tiny(a.path());
    c.algorithm = Algorithm::Baseline;
    c.baseline = Some("mrm-simple".parse().unwrap());
    run_train(&c).unwrap();
    let table = report(&[a.path().to_path_buf()]).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("baseline (mrm-simple)"));
    assert!(report(&[a.path().join("missing")]).is_err());
}

#[test]
fn historical_pipeline_from_generated_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = gen_synthetic_historical(&SynthConfig::new(2, 200.0), 1, dir.path()).unwrap();
    let mut o = ScenarioOptions::default();
    o.orders_file = Some(out.orders_file.clone());
    let s = build_scenario(Domain::HistoricalOrders, None, &o).unwrap();
    assert_eq!(s.fixed_driver_count(), Some(scenarios::HISTORICAL_DRIVERS));
    o.orders_file = None;
    o.grid_file = Some(out.grid_file);
    let g = build_scenario(Domain::HistoricalStatistics, None, &o).unwrap();
    assert!(g.fixed_driver_count().is_none());
}
