//! The incremental-averaging protocol: Gaussian noise splits, their
//! adaptation to dropouts, the gossip recursion and final dissemination.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{sig17, sig17_matrix, sig17_vec, to_pretty};
use crate::linalg::svd_rank;
use crate::rng::{self, tag};
use crate::topology::{CommSchedule, OnlineHistory, WeightMatrix, STOCHASTIC_TOL};

const SPLIT_TOL: f64 = 1e-9;

/// Named split families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// All input mass at iteration 0; noise canceled one term at a time.
    Early,
    /// Input mass spread evenly; noise telescopes between neighbours.
    Incremental,
    Custom,
}

/// A `(c, Z)` Gaussian split over `T + 1` parts.
///
/// Part `t` of a value `u` is `c_t u + Σ_k Z_{t,k} η_k` with
/// `η_k ~ N(0, σ_Δ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSplit {
    c: Vec<f64>,
    z: DMatrix<f64>,
    sigma_delta_sq: f64,
    kind: SplitKind,
}

impl NoiseSplit {
    /// Validates and builds a custom split. `z` is `(T+1) × T`.
    pub fn new(c: Vec<f64>, z: DMatrix<f64>, sigma_delta_sq: f64) -> Result<Self> {
        Self::with_kind(c, z, sigma_delta_sq, SplitKind::Custom)
    }

    fn with_kind(c: Vec<f64>, z: DMatrix<f64>, sigma_delta_sq: f64, kind: SplitKind) -> Result<Self> {
        let t = c.len().checked_sub(1).filter(|&t| t >= 1).ok_or_else(|| {
            Error::InvalidSplit("need at least two parts".into())
        })?;
        if z.shape() != (t + 1, t) {
            return Err(Error::InvalidSplit(format!("Z must be {}×{t}, got {:?}", t + 1, z.shape())));
        }
        if !(sigma_delta_sq >= 0.0 && sigma_delta_sq.is_finite()) {
            return Err(Error::InvalidSplit(format!("variance {sigma_delta_sq} is not admissible")));
        }
        let sum: f64 = c.iter().sum();
        if (sum - 1.0).abs() > SPLIT_TOL {
            return Err(Error::InvalidSplit(format!("weights sum to {sum}")));
        }
        for k in 0..t {
            let s: f64 = z.column(k).sum();
            if s.abs() > SPLIT_TOL {
                return Err(Error::InvalidSplit(format!("noise column {k} sums to {s}")));
            }
        }
        let mut full = DMatrix::zeros(t + 1, t + 1);
        full.column_mut(0).copy_from_slice(&c);
        full.columns_mut(1, t).copy_from(&z);
        if svd_rank(&full, SPLIT_TOL) != t + 1 {
            return Err(Error::InvalidSplit("[c | Z] is not invertible".into()));
        }
        if svd_rank(&z.rows(0, t).into_owned(), SPLIT_TOL) != t {
            return Err(Error::InvalidSplit("Z without its last row is singular".into()));
        }
        Ok(NoiseSplit { c, z, sigma_delta_sq, kind })
    }

    /// Early split: `c = e_0`, noise row 0 all ones, row `t` cancels `η_t`.
    pub fn early(iterations: usize, sigma_delta_sq: f64) -> Result<Self> {
        let t = iterations;
        let mut c = vec![0.0; t + 1];
        if t > 0 {
            c[0] = 1.0;
        }
        let mut z = DMatrix::zeros(t + 1, t);
        for k in 0..t {
            z[(0, k)] = 1.0;
            z[(k + 1, k)] = -1.0;
        }
        Self::with_kind(c, z, sigma_delta_sq, SplitKind::Early)
    }

    /// Incremental split: equal weights, row `t` adds `η_{t+1}` and removes
    /// `η_t`.
    pub fn incremental(iterations: usize, sigma_delta_sq: f64) -> Result<Self> {
        let t = iterations;
        let c = vec![1.0 / (t as f64 + 1.0); t + 1];
        let mut z = DMatrix::zeros(t + 1, t);
        for k in 0..t {
            z[(k, k)] = 1.0;
            z[(k + 1, k)] = -1.0;
        }
        Self::with_kind(c, z, sigma_delta_sq, SplitKind::Incremental)
    }

    pub fn kind(&self) -> SplitKind {
        self.kind
    }

    pub fn iterations(&self) -> usize {
        self.c.len() - 1
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn sigma_delta_sq(&self) -> f64 {
        self.sigma_delta_sq
    }

    pub fn with_sigma_delta_sq(&self, sigma_delta_sq: f64) -> Result<Self> {
        Self::with_kind(self.c.clone(), self.z.clone(), sigma_delta_sq, self.kind)
    }

    /// Parts of `u` for fixed canceling noise `eta`.
    pub fn parts(&self, u: f64, eta: &[f64]) -> Vec<f64> {
        (0..self.c.len())
            .map(|t| self.c[t] * u + (0..eta.len()).map(|k| self.z[(t, k)] * eta[k]).sum::<f64>())
            .collect()
    }

    /// Draws canceling noise and returns the parts of `u`.
    pub fn sample<R: Rng>(&self, u: f64, rng: &mut R) -> Vec<f64> {
        let sd = self.sigma_delta_sq.sqrt();
        let eta: Vec<f64> = (0..self.iterations()).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        self.parts(u, &eta)
    }

    /// Adapts the split to one party's online history (length `T + 1`).
    ///
    /// Online iterations before `T` take consecutive rows of the original
    /// split; a party online at `T` closes with the next weight and minus the
    /// sum of all noise rows used so far.
    pub fn adapt(&self, online: &[bool]) -> AdaptedSplit {
        let t_max = self.iterations();
        assert_eq!(online.len(), t_max + 1, "history length must be T + 1");
        let mut c = vec![0.0; t_max + 1];
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); t_max + 1];
        let mut acc = vec![0.0; t_max];
        let mut used = 0;
        for t in 0..=t_max {
            if !online[t] {
                continue;
            }
            if t < t_max {
                c[t] = self.c[used];
                for k in 0..t_max {
                    let v = self.z[(used, k)];
                    if v != 0.0 {
                        rows[t].push((k, v));
                        acc[k] += v;
                    }
                }
                used += 1;
            } else {
                c[t] = self.c[used];
                rows[t] = acc.iter().enumerate().filter(|e| *e.1 != 0.0).map(|(k, &v)| (k, -v)).collect();
            }
        }
        AdaptedSplit { c, rows }
    }
}

/// Split after adaptation to a dropout pattern. Noise rows are sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedSplit {
    pub c: Vec<f64>,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl AdaptedSplit {
    /// Weight of the input actually injected into the network.
    pub fn injected_weight(&self) -> f64 {
        self.c.iter().sum()
    }

    pub fn z_dense(&self) -> DMatrix<f64> {
        let t = self.c.len() - 1;
        let mut z = DMatrix::zeros(t + 1, t);
        for (r, row) in self.rows.iter().enumerate() {
            for &(k, v) in row {
                z[(r, k)] = v;
            }
        }
        z
    }
}

/// Adapted splits for every party.
pub fn adapt_all(split: &NoiseSplit, history: &OnlineHistory) -> Vec<AdaptedSplit> {
    (0..history.n()).map(|i| split.adapt(&history.party(i))).collect()
}

/// Protocol parameters for one run.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub n: usize,
    pub iterations: usize,
    pub sigma_ind_sq: f64,
    pub split: NoiseSplit,
    /// Seed of this run; every party draws from its own derived stream.
    pub seed: u64,
}

/// Everything produced by one protocol run.
#[derive(Debug, Clone)]
pub struct Transcript {
    pub n: usize,
    pub iterations: usize,
    /// `messages[t][i] = y_i^(t)`.
    pub messages: Vec<Vec<f64>>,
    /// Effective matrices `W^U_1 … W^U_T`.
    pub effective_weights: Vec<WeightMatrix>,
    pub injected_weight: Vec<f64>,
    /// Total input weight held in each party's final message.
    pub carried_weight: Vec<f64>,
    /// Locally noised inputs `x̃_i`.
    pub inputs_noisy: Vec<f64>,
    /// `canceling_noise[i][k] = η_{i,k+1}`.
    pub canceling_noise: Vec<Vec<f64>>,
    pub online: OnlineHistory,
    pub schedule_digest: u64,
    pub sigma_ind_sq: f64,
    pub sigma_delta_sq: f64,
    pub split_kind: SplitKind,
    pub seed: u64,
}

/// Runs the protocol on inputs `x ∈ [0, 1]^n`.
pub fn run_inca(config: &ProtocolConfig, schedule: &CommSchedule, history: &OnlineHistory, x: &[f64]) -> Result<Transcript> {
    let n = config.n;
    let t_max = config.iterations;
    if schedule.n() != n || history.n() != n || x.len() != n {
        return Err(Error::Dimension("schedule, history and inputs must cover n parties".into()));
    }
    if schedule.iterations() != t_max || history.iterations() != t_max || config.split.iterations() != t_max {
        return Err(Error::Dimension("schedule, history and split must share T".into()));
    }
    if let Some(&bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Config(format!("input {bad} outside [0, 1]")));
    }
    if !(config.sigma_ind_sq >= 0.0 && config.sigma_ind_sq.is_finite()) {
        return Err(Error::Config(format!("variance {} is not admissible", config.sigma_ind_sq)));
    }
    for (t, m) in schedule.matrices().iter().enumerate() {
        if let Some((column, sum)) = m.stochastic_defect(STOCHASTIC_TOL) {
            return Err(Error::NotColumnStochastic { iteration: t + 1, column, sum });
        }
    }

    let sd_ind = config.sigma_ind_sq.sqrt();
    let sd_delta = config.split.sigma_delta_sq().sqrt();
    let mut inputs_noisy = Vec::with_capacity(n);
    let mut canceling_noise = Vec::with_capacity(n);
    let mut injected_weight = Vec::with_capacity(n);
    // parts[t][i] and the input coefficient of each part
    let mut parts = vec![vec![0.0; n]; t_max + 1];
    let mut coeffs = vec![vec![0.0; n]; t_max + 1];
    for i in 0..n {
        let mut r = rng::stream(config.seed, &[tag::NOISE, i as u64]);
        let xt = x[i] + sd_ind * r.sample::<f64, _>(StandardNormal);
        let eta: Vec<f64> = (0..t_max).map(|_| sd_delta * r.sample::<f64, _>(StandardNormal)).collect();
        let adapted = config.split.adapt(&history.party(i));
        for t in 0..=t_max {
            parts[t][i] = adapted.c[t] * xt + adapted.rows[t].iter().map(|&(k, v)| v * eta[k]).sum::<f64>();
            coeffs[t][i] = adapted.c[t];
        }
        injected_weight.push(adapted.injected_weight());
        inputs_noisy.push(xt);
        canceling_noise.push(eta);
    }

    let mut messages = Vec::with_capacity(t_max + 1);
    messages.push(parts[0].clone());
    let mut carried = coeffs[0].clone();
    let mut effective_weights = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let wu = schedule.matrix(t).effective(history.at(t));
        let mut y = vec![0.0; n];
        wu.mul_into(&messages[t - 1], &mut y);
        for (yi, p) in y.iter_mut().zip(&parts[t]) {
            *yi += p;
        }
        messages.push(y);
        let mut next = vec![0.0; n];
        wu.mul_into(&carried, &mut next);
        for (w, c) in next.iter_mut().zip(&coeffs[t]) {
            *w += c;
        }
        carried = next;
        effective_weights.push(wu);
    }

    Ok(Transcript {
        n,
        iterations: t_max,
        messages,
        effective_weights,
        injected_weight,
        carried_weight: carried,
        inputs_noisy,
        canceling_noise,
        online: history.clone(),
        schedule_digest: schedule.digest(),
        sigma_ind_sq: config.sigma_ind_sq,
        sigma_delta_sq: config.split.sigma_delta_sq(),
        split_kind: config.split.kind(),
        seed: config.seed,
    })
}

/// Final estimate: survivors' final messages divided by the input weight
/// those messages carry.
pub fn disseminate(transcript: &Transcript) -> Result<f64> {
    let survivors = transcript.online.survivors();
    let last = &transcript.messages[transcript.iterations];
    let num: f64 = survivors.iter().map(|&i| last[i]).sum();
    let den: f64 = survivors.iter().map(|&i| transcript.carried_weight[i]).sum();
    if survivors.is_empty() || den == 0.0 {
        return Err(Error::NoSurvivors);
    }
    Ok(num / den)
}

#[derive(Serialize)]
struct TranscriptConfigDoc {
    n: usize,
    #[serde(rename = "T")]
    iterations: usize,
    sigma_ind_sq: Box<serde_json::value::RawValue>,
    sigma_delta_sq: Box<serde_json::value::RawValue>,
    split: SplitKind,
    seed: u64,
}

#[derive(Serialize)]
struct TranscriptDoc<'a> {
    config: TranscriptConfigDoc,
    schedule_digest: String,
    online_history: &'a [Vec<bool>],
    messages: Vec<Vec<Box<serde_json::value::RawValue>>>,
    w: Vec<Box<serde_json::value::RawValue>>,
}

impl Transcript {
    /// JSON document with numbers written to 17 significant digits.
    pub fn to_json(&self) -> String {
        to_pretty(&TranscriptDoc {
            config: TranscriptConfigDoc {
                n: self.n,
                iterations: self.iterations,
                sigma_ind_sq: sig17(self.sigma_ind_sq),
                sigma_delta_sq: sig17(self.sigma_delta_sq),
                split: self.split_kind,
                seed: self.seed,
            },
            schedule_digest: format!("{:016x}", self.schedule_digest),
            online_history: self.online.rows(),
            messages: sig17_matrix(&self.messages),
            w: sig17_vec(&self.injected_weight),
        })
    }
}
