use rand::Rng;

use super::config::{ExperimentConfig, ExperimentKind};
use super::{run_trials, ResultRow};
use crate::accountant::{calibrate, edge_vectors, gaussian_c_sq, rank_count, NoiseChoice, PrivacyBudget, Theorem, RANK_RTOL};
use crate::adversary::{sample_corrupted, AdversaryView, ObservationOperator, ViewMode};
use crate::baselines::{
    central_dp_mse, cordpdme_bound, cordpdme_pair_variance, gopa_simulate, inca_mse, local_dp_mse, mask_graph, muffliato,
    pair_variance, pairwise_strip_norm_sq, GopaParams,
};
use crate::error::{Error, Result};
use crate::protocol::{adapt_all, disseminate, run_inca, NoiseSplit, ProtocolConfig};
use crate::rng::{self, tag};
use crate::topology::{floor_fraction, random_kout_schedule, sample_dropouts, OnlineHistory};

/// Seed of trial `s` under a master seed.
pub fn trial_seed(master: u64, phase: u64, s: usize) -> u64 {
    rng::derive(master, &[tag::TRIAL, phase, s as u64])
}

/// Dispatches on the configured experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::AccuracyVsCollusion => run_accuracy_vs_collusion(config),
        ExperimentKind::SuccessRate => run_success_rate(config),
        ExperimentKind::MinIterations => run_min_iterations(config),
        ExperimentKind::DropoutMse => run_dropout_mse(config),
    }
}

/// Closed-form MSE against the fraction of corrupted parties.
pub fn run_accuracy_vs_collusion(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let name = ExperimentKind::AccuracyVsCollusion.name();
    let mut rows = Vec::new();
    for &n in &config.n {
        for &epsilon in &config.epsilon {
            for &delta in &config.delta {
                let gossip = if n.is_power_of_two() { Some(muffliato(n, epsilon, delta)?) } else { None };
                for &rho in &config.rho {
                    let mut push = |method: &str, value: f64| {
                        let mut r = ResultRow::new(name, method, n, "mse", value, 0, config.seed);
                        r.epsilon = Some(epsilon);
                        r.delta = Some(delta);
                        r.rho = Some(rho);
                        rows.push(r);
                    };
                    if floor_fraction(rho, n) >= n {
                        return Err(Error::EmptyHonestSet);
                    }
                    push("inca", inca_mse(n, rho, epsilon, gaussian_c_sq(delta)));
                    push("central_dp", central_dp_mse(n, epsilon, delta));
                    push("local_dp", local_dp_mse(n, epsilon, delta));
                    if let Some(m) = &gossip {
                        push("muffliato_lower_bound", m.mse);
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Hidden-pair prefix consistency: edge vectors computed at the largest
/// horizon and filtered to `t < T` equal those computed at horizon `T`,
/// because every stream consumes iterations in order.
fn success_by_horizon(
    n: usize,
    k: usize,
    horizons: &[usize],
    mode: ViewMode,
    fraction: f64,
    rho: f64,
    distinct: bool,
    seed: u64,
) -> Result<Vec<bool>> {
    let t_max = *horizons.iter().max().expect("non-empty grid");
    let schedule = random_kout_schedule(n, k, t_max, &mut rng::stream(seed, &[tag::SCHEDULE]), distinct)?;
    let view = match mode {
        ViewMode::Eavesdrop => AdversaryView::eavesdrop(n, t_max, fraction, &mut rng::stream(seed, &[tag::VIEW]))?,
        ViewMode::Collusion => AdversaryView::collusion(&schedule, sample_corrupted(n, rho, &mut rng::stream(seed, &[tag::CORRUPT]))?)?,
    };
    let history = OnlineHistory::all_online(n, t_max);
    let all = edge_vectors(&schedule, &history, &view, &vec![1.0; n])?;
    let required = view.honest().len().saturating_sub(1);
    Ok(horizons
        .iter()
        .map(|&t| {
            let mut set = all.clone();
            set.vectors.retain(|v| v.iteration < t);
            rank_count(&set, RANK_RTOL) >= required
        })
        .collect())
}

/// Fraction of seeds meeting the rank precondition per `(k, T)`.
pub fn run_success_rate(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let name = ExperimentKind::SuccessRate.name();
    let mut horizons = config.iterations.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let rho = config.rho[0];
    let mut rows = Vec::new();
    for &n in &config.n {
        for &mode in &config.modes {
            for &k in &config.k {
                let outcomes = run_trials(config.trials, |s| {
                    let seed = trial_seed(config.seed, 0, s);
                    success_by_horizon(n, k, &horizons, mode, config.observe_fraction, rho, config.distinct, seed)
                });
                let mut counts = vec![0usize; horizons.len()];
                for o in outcomes {
                    for (c, ok) in counts.iter_mut().zip(o?) {
                        *c += ok as usize;
                    }
                }
                for (&t, &c) in horizons.iter().zip(&counts) {
                    let method = match mode {
                        ViewMode::Eavesdrop => "inca_eavesdrop",
                        ViewMode::Collusion => "inca_collusion",
                    };
                    let mut r = ResultRow::new(name, method, n, "success_rate", c as f64 / config.trials as f64, config.trials, config.seed);
                    r.k = Some(k);
                    r.t = Some(t);
                    if mode == ViewMode::Collusion {
                        r.rho = Some(rho);
                    }
                    rows.push(r);
                }
            }
        }
    }
    Ok(rows)
}

/// Smallest horizon reaching full success, with distinct receivers and
/// `k = 1` by default.
pub fn run_min_iterations(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let name = ExperimentKind::MinIterations.name();
    let t_max = *config.iterations.iter().max().expect("validated");
    let horizons: Vec<usize> = (1..=t_max).collect();
    let k = config.k[0];
    let mut rows = Vec::new();
    for &n in &config.n {
        for &rho in &config.rho {
            let per_trial = run_trials(config.trials, |s| -> Result<Option<usize>> {
                let seed = trial_seed(config.seed, 0, s);
                let ok = success_by_horizon(n, k, &horizons, ViewMode::Collusion, 0.0, rho, config.distinct, seed)?;
                Ok(ok.iter().position(|&b| b).map(|p| horizons[p]))
            });
            let firsts: Vec<Option<usize>> = per_trial.into_iter().collect::<Result<_>>()?;
            let min_t = if firsts.iter().all(Option::is_some) {
                firsts.iter().map(|f| f.unwrap()).max().unwrap_or(0) as f64
            } else {
                f64::NAN
            };
            let mut push = |metric: &str, t: Option<usize>, value: f64| {
                let mut r = ResultRow::new(name, "inca_collusion", n, metric, value, config.trials, config.seed);
                r.k = Some(k);
                r.t = t;
                r.rho = Some(rho);
                rows.push(r);
            };
            push("min_T", None, min_t);
            for &t in &horizons {
                let hits = firsts.iter().filter(|f| f.is_some_and(|v| v <= t)).count();
                push("success_rate", Some(t), hits as f64 / config.trials as f64);
            }
        }
    }
    Ok(rows)
}

fn uniform_inputs(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[tag::INPUT]);
    (0..n).map(|_| r.random::<f64>()).collect()
}

/// Worst-case calibration over seeds, then MSE over fresh seeds, for
/// incremental averaging and the pairwise-mask baselines.
pub fn run_dropout_mse(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let name = ExperimentKind::DropoutMse.name();
    let trials = config.trials;
    let mut rows = Vec::new();
    for &n in &config.n {
        for &epsilon in &config.epsilon {
            for &delta in &config.delta {
                let budget = PrivacyBudget::new(epsilon, delta)?;
                for &rho in &config.rho {
                    // pairwise-mask calibration does not depend on γ
                    let strips = run_trials(trials, |s| -> Result<f64> {
                        let seed = trial_seed(config.seed, tag::PHASE_CALIBRATE, s);
                        let corrupted = sample_corrupted(n, rho, &mut rng::stream(seed, &[tag::CORRUPT]))?;
                        let edges = mask_graph(n, config.gopa_k, &mut rng::stream(seed, &[tag::MASK]))?;
                        pairwise_strip_norm_sq(n, &edges, &corrupted).ok_or(Error::RankPrecondition { rank: 0, required: 1 })
                    });
                    let worst_strip = strips.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
                    let honest = n - floor_fraction(rho, n);

                    for &gamma in &config.gamma {
                        let n_u = n as f64 * (1.0 - gamma - rho);
                        if !(n_u > 0.0) {
                            return Err(Error::Config(format!("γ + ρ = {} leaves no online honest party", gamma + rho)));
                        }
                        let sigma_ind_sq = config.alpha * gaussian_c_sq(delta) / (n_u * epsilon * epsilon);
                        let row = |method: &str, metric: &str, value: f64| {
                            let mut r = ResultRow::new(name, method, n, metric, value, trials, config.seed);
                            r.epsilon = Some(epsilon);
                            r.delta = Some(delta);
                            r.rho = Some(rho);
                            r.gamma = Some(gamma);
                            r.alpha = Some(config.alpha);
                            r
                        };

                        for &k in &config.k {
                            for &t in &config.iterations {
                                let (worst, failures) = inca_worst_sigma_delta(config, &budget, n, k, t, rho, gamma, sigma_ind_sq)?;
                                let mse = inca_mse_runs(config, n, k, t, gamma, sigma_ind_sq, worst)?;
                                for (metric, value) in [("mse", mse), ("sigma_delta_sq", worst), ("calibration_failures", failures as f64)] {
                                    let mut r = row("inca", metric, value);
                                    r.k = Some(k);
                                    r.t = Some(t);
                                    rows.push(r);
                                }
                            }
                        }

                        let sigma_pair_sq = pair_variance(worst_strip, honest, &budget, sigma_ind_sq)?;
                        for rule in &config.gamma2 {
                            let gamma2 = rule.resolve(gamma, n).min(gamma);
                            let params = GopaParams { n, k: config.gopa_k, gamma, gamma2, sigma_pair_sq, sigma_ind_sq };
                            let errs = run_trials(trials, |s| -> Result<f64> {
                                let seed = trial_seed(config.seed, tag::PHASE_EVALUATE, s);
                                let x = uniform_inputs(n, seed);
                                let run = gopa_simulate(&params, &x, &mut rng::stream(seed, &[tag::MASK]))?;
                                Ok((run.estimate - run.truth).powi(2))
                            });
                            let errs = errs.into_iter().collect::<Result<Vec<_>>>()?;
                            let mut r = row("gopa", "mse", errs.iter().sum::<f64>() / trials as f64);
                            r.k = Some(config.gopa_k);
                            r.gamma2 = Some(gamma2);
                            rows.push(r);
                        }

                        let cor_pair = cordpdme_pair_variance(n, rho, &budget, sigma_ind_sq)?;
                        let mut r = row("cordpdme_lower_bound", "mse", cordpdme_bound(n, gamma, cor_pair, sigma_ind_sq));
                        r.trials = 0;
                        rows.push(r);
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Phase one: worst calibrated `σ_Δ²` over seeds, and the number of seeds
/// whose precondition failed.
#[allow(clippy::too_many_arguments)]
fn inca_worst_sigma_delta(
    config: &ExperimentConfig,
    budget: &PrivacyBudget,
    n: usize,
    k: usize,
    t: usize,
    rho: f64,
    gamma: f64,
    sigma_ind_sq: f64,
) -> Result<(f64, usize)> {
    let split = NoiseSplit::incremental(t, 1.0)?;
    let results = run_trials(config.trials, |s| -> Result<Option<f64>> {
        let seed = trial_seed(config.seed, tag::PHASE_CALIBRATE, s);
        let schedule = random_kout_schedule(n, k, t, &mut rng::stream(seed, &[tag::SCHEDULE]), config.distinct)?;
        let history = sample_dropouts(n, t, gamma, &mut rng::stream(seed, &[tag::DROPOUT]))?;
        let corrupted = sample_corrupted(n, rho, &mut rng::stream(seed, &[tag::CORRUPT]))?;
        let view = AdversaryView::collusion(&schedule, corrupted)?;
        let w: Vec<f64> = adapt_all(&split, &history).iter().map(|a| a.injected_weight()).collect();
        let edges = edge_vectors(&schedule, &history, &view, &w)?;
        let op = ObservationOperator::new(&schedule, &history, &split, &view)?;
        let res = calibrate(budget, &op, &edges, &w, &history, Theorem::Coalition, NoiseChoice::Explicit(sigma_ind_sq))?;
        Ok(res.ok.then_some(res.sigma_delta_sq))
    });
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for r in results {
        match r? {
            Some(v) => worst = worst.max(v),
            None => failures += 1,
        }
    }
    Ok((worst, failures))
}

/// Phase two: mean squared error of fresh runs at the calibrated variances.
fn inca_mse_runs(config: &ExperimentConfig, n: usize, k: usize, t: usize, gamma: f64, sigma_ind_sq: f64, sigma_delta_sq: f64) -> Result<f64> {
    let split = NoiseSplit::incremental(t, sigma_delta_sq)?;
    let errs = run_trials(config.trials, |s| -> Result<f64> {
        let seed = trial_seed(config.seed, tag::PHASE_EVALUATE, s);
        let schedule = random_kout_schedule(n, k, t, &mut rng::stream(seed, &[tag::SCHEDULE]), config.distinct)?;
        let history = sample_dropouts(n, t, gamma, &mut rng::stream(seed, &[tag::DROPOUT]))?;
        let x = uniform_inputs(n, seed);
        let cfg = ProtocolConfig { n, iterations: t, sigma_ind_sq, split: split.clone(), seed };
        let transcript = run_inca(&cfg, &schedule, &history, &x)?;
        let truth = x.iter().sum::<f64>() / n as f64;
        Ok((disseminate(&transcript)? - truth).powi(2))
    });
    let errs = errs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(errs.iter().sum::<f64>() / config.trials as f64)
}
