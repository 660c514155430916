//! Experiment plumbing: configuration files, multi-seed training with
//! periodic greedy evaluation, baseline runs, synthetic historical data and
//! result files.
//!
//! A run directory holds `config.toml`, `summary.json`, `curves.csv`,
//! `curves_mean.csv`, `evals.csv`, `arrows.csv` and one `seed-<n>/`
//! directory per seed with `evals.jsonl`, `state.json` and the checkpoints
//! `best.flck`, `last.flck` (plus `last_target.flck` for DQN). An
//! interrupted run restarts from `state.json` and the last checkpoints.
//!
//! CSV schemas (version [`SCHEMA_VERSION`]):
//!
//! * `curves.csv`: `seed,episodes_or_epochs,mean_return,std_err,served_pct`
//! * `curves_mean.csv`: `episodes_or_epochs,mean_return,std_across_seeds,seeds`
//! * `evals.csv`: `seed,episodes_or_epochs,episode,return`
//! * `arrows.csv`: `seed,bin_x,bin_y,center_x,center_y,mean_dx,mean_dy,count`

mod config;
mod run;
mod synth;

pub use config::{
    build_scenario, domain_trainer_defaults, parse_split, resolve_trainer, Algorithm, Domain, ExperimentConfig,
    ScenarioOptions,
};
pub use run::{
    arrow_field, best_index, load_policy, policy_from_params, report, run_eval, run_train, run_train_with, seed_dir,
    ArrowField, EvalPoint, PolicySource, RunSummary, SeedSummary, ARROWS_FILE, ARROW_BINS, BEST_CHECKPOINT,
    CONFIG_FILE, CURVES_FILE, CURVES_MEAN_FILE, EVALS_FILE, SCHEMA_VERSION, SUMMARY_FILE,
};
pub use synth::{empirical_grid, gen_synthetic_historical, sample_orders, Hotspot, SynthConfig, SynthOutput, GRID_FILE, ORDERS_FILE};

#[cfg(test)]
mod tests;
