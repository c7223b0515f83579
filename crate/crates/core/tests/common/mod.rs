#![allow(dead_code)]

use inca_lab::adversary::{sample_corrupted, AdversaryView, ViewMode};
use inca_lab::protocol::{run_inca, NoiseSplit, ProtocolConfig, SplitKind, Transcript};
use inca_lab::rng;
use inca_lab::topology::{random_kout_schedule, sample_dropouts, CommSchedule, OnlineHistory};
use rand::Rng;

/// One randomly drawn execution.
pub struct Instance {
    pub schedule: CommSchedule,
    pub history: OnlineHistory,
    pub view: AdversaryView,
    pub split: NoiseSplit,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Draw {
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub gamma: f64,
    pub mode: ViewMode,
    pub fraction: f64,
    pub kind: SplitKind,
    pub sigma_delta_sq: f64,
}

pub fn split(kind: SplitKind, t: usize, sigma_delta_sq: f64) -> NoiseSplit {
    match kind {
        SplitKind::Early => NoiseSplit::early(t, sigma_delta_sq).unwrap(),
        _ => NoiseSplit::incremental(t, sigma_delta_sq).unwrap(),
    }
}

pub fn instance(d: &Draw, seed: u64) -> Instance {
    let mut r = rng::stream(seed, &[]);
    let schedule = random_kout_schedule(d.n, d.k, d.t, &mut r, false).unwrap();
    let history = if d.gamma > 0.0 { sample_dropouts(d.n, d.t, d.gamma, &mut r).unwrap() } else { OnlineHistory::all_online(d.n, d.t) };
    let view = match d.mode {
        ViewMode::Eavesdrop => AdversaryView::eavesdrop(d.n, d.t, d.fraction, &mut r).unwrap(),
        ViewMode::Collusion => AdversaryView::collusion(&schedule, sample_corrupted(d.n, d.fraction, &mut r).unwrap()).unwrap(),
    };
    let x = (0..d.n).map(|_| r.random::<f64>()).collect();
    Instance { schedule, history, view, split: split(d.kind, d.t, d.sigma_delta_sq), x }
}

pub fn run(inst: &Instance, sigma_ind_sq: f64, seed: u64) -> Transcript {
    let cfg = ProtocolConfig {
        n: inst.schedule.n(),
        iterations: inst.schedule.iterations(),
        sigma_ind_sq,
        split: inst.split.clone(),
        seed,
    };
    run_inca(&cfg, &inst.schedule, &inst.history, &inst.x).unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

use inca_lab::accountant::{calibrate, edge_vectors, CalibrationResult, EdgeVectorSet, NoiseChoice, PrivacyBudget, Theorem};
use inca_lab::adversary::AdversarySystem;
use inca_lab::protocol::adapt_all;

pub struct Calibrated {
    pub inst: Instance,
    pub system: AdversarySystem,
    pub edges: EdgeVectorSet,
    pub w: Vec<f64>,
    pub result: CalibrationResult,
}

/// Injected weight per party under the split adapted to the history.
pub fn weights(inst: &Instance) -> Vec<f64> {
    adapt_all(&inst.split, &inst.history).iter().map(|a| a.injected_weight()).collect()
}

pub fn calibrate_instance(inst: Instance, budget: &PrivacyBudget, theorem: Theorem, factor: f64) -> Calibrated {
    let system = AdversarySystem::build(&inst.schedule, &inst.history, &inst.split, &inst.view).unwrap();
    let w = weights(&inst);
    let edges = edge_vectors(&inst.schedule, &inst.history, &inst.view, &w).unwrap();
    let result = calibrate(budget, &system, &edges, &w, &inst.history, theorem, NoiseChoice::BoundMultiple(factor)).unwrap();
    Calibrated { inst, system, edges, w, result }
}

/// Small random instances, both view modes and both splits, optionally
/// with dropouts.
pub fn small_draw(seed: u64, dropouts: bool) -> Draw {
    let mut r = rng::stream(seed, &[0xd1]);
    let n = r.random_range(6..=20);
    let collude = r.random::<bool>();
    Draw {
        n,
        k: r.random_range(1..=3),
        t: r.random_range(2..=8),
        gamma: if dropouts { 0.2 } else { 0.0 },
        mode: if collude { ViewMode::Collusion } else { ViewMode::Eavesdrop },
        fraction: if collude { 0.2 } else { 0.5 },
        kind: if r.random::<bool>() { SplitKind::Early } else { SplitKind::Incremental },
        sigma_delta_sq: 1.0,
    }
}
