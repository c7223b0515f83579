//! WebAssembly bindings behind the static demo page in `www/`.
//!
//! Every export returns a JSON string or an error message.

use inca_lab::harness::{run_experiment, ExperimentConfig, ExperimentKind, ResultRow};
use inca_lab::protocol::{disseminate, run_inca, NoiseSplit, ProtocolConfig};
use inca_lab::rng;
use inca_lab::topology::{random_kout_schedule, sample_dropouts};
use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Run {
    messages: Vec<Vec<f64>>,
    online: Vec<Vec<bool>>,
    estimate: f64,
    truth: f64,
    noisy_mean: f64,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// One protocol run on a random k-out schedule with uniform inputs.
#[wasm_bindgen]
pub fn simulate(n: usize, k: usize, iterations: usize, sigma_ind_sq: f64, sigma_delta_sq: f64, gamma: f64, seed: u64) -> Result<String, String> {
    let schedule = random_kout_schedule(n, k, iterations, &mut rng::stream(seed, &[1]), false).map_err(err)?;
    let history = sample_dropouts(n, iterations, gamma, &mut rng::stream(seed, &[2])).map_err(err)?;
    let mut r = rng::stream(seed, &[3]);
    let x: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let cfg = ProtocolConfig { n, iterations, sigma_ind_sq, split: NoiseSplit::incremental(iterations, sigma_delta_sq).map_err(err)?, seed };
    let tr = run_inca(&cfg, &schedule, &history, &x).map_err(err)?;
    let run = Run {
        estimate: disseminate(&tr).map_err(err)?,
        truth: x.iter().sum::<f64>() / n as f64,
        noisy_mean: tr.inputs_noisy.iter().sum::<f64>() / n as f64,
        online: history.rows().to_vec(),
        messages: tr.messages,
    };
    serde_json::to_string(&run).map_err(err)
}

fn rows_json(rows: &[ResultRow]) -> Result<String, String> {
    serde_json::to_string(rows).map_err(err)
}

/// MSE of IncA and the reference mechanisms against the corrupted fraction.
#[wasm_bindgen]
pub fn accuracy_curve(n: usize, epsilon: f64, delta: f64) -> Result<String, String> {
    let cfg = ExperimentConfig { n: vec![n], epsilon: vec![epsilon], delta: vec![delta], ..ExperimentConfig::defaults(ExperimentKind::AccuracyVsCollusion) };
    cfg.validate().map_err(err)?;
    rows_json(&run_experiment(&cfg).map_err(err)?)
}

/// Fraction of runs meeting the rank precondition, per `k` and `T`.
#[wasm_bindgen]
pub fn success_curve(n: usize, max_k: usize, max_t: usize, observe_fraction: f64, rho: f64, trials: usize, seed: u64) -> Result<String, String> {
    let cfg = ExperimentConfig {
        n: vec![n],
        k: (1..=max_k).collect(),
        iterations: (1..=max_t).collect(),
        observe_fraction,
        rho: vec![rho],
        trials,
        seed,
        ..ExperimentConfig::defaults(ExperimentKind::SuccessRate)
    };
    cfg.validate().map_err(err)?;
    rows_json(&run_experiment(&cfg).map_err(err)?)
}
