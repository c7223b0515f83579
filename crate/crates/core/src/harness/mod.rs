//! Experiment orchestration, configuration and result output.

mod config;
mod emit;
mod experiments;
mod plot;

pub use config::{ExperimentConfig, ExperimentKind, Gamma2Rule};
pub use emit::{emit, to_csv, to_json, OutputFormat, CSV_HEADER};
pub use experiments::{
    run_accuracy_vs_collusion, run_dropout_mse, run_experiment, run_min_iterations, run_success_rate, trial_seed,
};
pub use plot::line_chart;

use serde::{Deserialize, Serialize};

/// One line of experiment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub n: usize,
    pub k: Option<usize>,
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma2: Option<f64>,
    pub alpha: Option<f64>,
    pub metric: String,
    pub value: f64,
    pub trials: usize,
    pub seed: u64,
}

impl ResultRow {
    pub fn new(experiment: &str, method: &str, n: usize, metric: &str, value: f64, trials: usize, seed: u64) -> Self {
        ResultRow {
            experiment: experiment.into(),
            method: method.into(),
            n,
            k: None,
            t: None,
            epsilon: None,
            delta: None,
            rho: None,
            gamma: None,
            gamma2: None,
            alpha: None,
            metric: metric.into(),
            value,
            trials,
            seed,
        }
    }
}

/// Runs `f` for every trial index and returns the results in trial order.
/// With the `parallel` feature trials run on a worker pool.
pub fn run_trials<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}
