//! Communication schedules, dropout histories and graph utilities.

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::AdversaryView;
use crate::error::{Error, Result};

/// Tolerance for column-stochasticity checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Sparse column-stochastic weight matrix stored by columns.
///
/// Column `j` lists `(i, W_ij)`: the share of sender `j`'s value received by
/// party `i`. Entries are sorted by receiver and contain no duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl WeightMatrix {
    pub fn identity(n: usize) -> Self {
        WeightMatrix { n, cols: (0..n).map(|j| vec![(j, 1.0)]).collect() }
    }

    /// Builds a matrix from per-column entry lists. Duplicates are summed
    /// and exact zeros dropped.
    pub fn from_columns(n: usize, cols: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if cols.len() != n {
            return Err(Error::Dimension(format!("expected {n} columns, got {}", cols.len())));
        }
        let mut out = Vec::with_capacity(n);
        for mut col in cols {
            if col.iter().any(|&(i, w)| i >= n || !w.is_finite()) {
                return Err(Error::Dimension("entry out of range or non-finite".into()));
            }
            col.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
            for (i, w) in col {
                match merged.last_mut() {
                    Some(last) if last.0 == i => last.1 += w,
                    _ => merged.push((i, w)),
                }
            }
            merged.retain(|e| e.1 != 0.0);
            out.push(merged);
        }
        Ok(WeightMatrix { n, cols: out })
    }

    pub fn from_dense(w: &DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::Dimension("weight matrix must be square".into()));
        }
        let n = w.nrows();
        let cols = (0..n)
            .map(|j| (0..n).filter(|&i| w[(i, j)] != 0.0).map(|i| (i, w[(i, j)])).collect())
            .collect();
        Self::from_columns(n, cols)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, w) in col {
                d[(i, j)] = w;
            }
        }
        d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.cols[j]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[(usize, f64)]> {
        self.cols.iter().map(Vec::as_slice)
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cols[j]
            .binary_search_by_key(&i, |e| e.0)
            .map(|p| self.cols[j][p].1)
            .unwrap_or(0.0)
    }

    /// Receivers of sender `j` other than `j` itself.
    pub fn receivers(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.cols[j].iter().filter(move |e| e.0 != j && e.1 > 0.0).map(|e| e.0)
    }

    /// `out = W x`.
    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, col) in self.cols.iter().enumerate() {
            let xj = x[j];
            if xj != 0.0 {
                for &(i, w) in col {
                    out[i] += w * xj;
                }
            }
        }
    }

    /// `out = Wᵀ x`.
    pub fn mul_transpose_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, col) in self.cols.iter().enumerate() {
            out[j] = col.iter().map(|&(i, w)| w * x[i]).sum();
        }
    }

    /// First column whose sum deviates from 1 by more than `tol`, or whose
    /// entries are negative.
    pub fn stochastic_defect(&self, tol: f64) -> Option<(usize, f64)> {
        self.cols.iter().enumerate().find_map(|(j, col)| {
            let s: f64 = col.iter().map(|e| e.1).sum();
            let neg = col.iter().any(|e| e.1 < 0.0);
            ((s - 1.0).abs() > tol || neg).then_some((j, s))
        })
    }

    /// Effective matrix under dropouts: offline senders keep their value,
    /// offline receivers get nothing, and mass addressed to offline
    /// receivers stays with the sender.
    pub fn effective(&self, online: &[bool]) -> WeightMatrix {
        let cols = self
            .cols
            .iter()
            .enumerate()
            .map(|(j, col)| {
                if !online[j] {
                    return vec![(j, 1.0)];
                }
                let mut diag = 0.0;
                let mut kept = Vec::with_capacity(col.len());
                for &(i, w) in col {
                    if i == j || !online[i] {
                        diag += w;
                    } else {
                        kept.push((i, w));
                    }
                }
                if diag != 0.0 {
                    let pos = kept.partition_point(|e| e.0 < j);
                    kept.insert(pos, (j, diag));
                }
                kept
            })
            .collect();
        WeightMatrix { n: self.n, cols }
    }
}

/// Ordered sequence of weight matrices `W_1, …, W_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommSchedule {
    n: usize,
    matrices: Vec<WeightMatrix>,
    #[serde(rename = "static")]
    is_static: bool,
}

impl CommSchedule {
    /// Validates dimensions and column-stochasticity.
    pub fn new(n: usize, matrices: Vec<WeightMatrix>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("need at least one party".into()));
        }
        if matrices.is_empty() {
            return Err(Error::Config("need at least one iteration".into()));
        }
        for (t, m) in matrices.iter().enumerate() {
            if m.n() != n {
                return Err(Error::Dimension(format!("matrix {} has size {}", t + 1, m.n())));
            }
            if let Some((column, sum)) = m.stochastic_defect(STOCHASTIC_TOL) {
                return Err(Error::NotColumnStochastic { iteration: t + 1, column, sum });
            }
        }
        let is_static = matrices.windows(2).all(|w| w[0] == w[1]);
        Ok(CommSchedule { n, matrices, is_static })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of gossip iterations `T`.
    pub fn iterations(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_static(&self) -> bool {
        self.is_static
    }

    /// Matrix used at iteration `t ∈ [1, T]`.
    pub fn matrix(&self, t: usize) -> &WeightMatrix {
        &self.matrices[t - 1]
    }

    pub fn matrices(&self) -> &[WeightMatrix] {
        &self.matrices
    }

    /// Planned receivers of party `i` at iteration `t ∈ [1, T]`.
    pub fn out_neighbors(&self, i: usize, t: usize) -> Vec<usize> {
        self.matrix(t).receivers(i).collect()
    }

    /// First `t` iterations of this schedule.
    pub fn truncated(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.iterations() {
            return Err(Error::Config(format!("cannot truncate to {t} iterations")));
        }
        Self::new(self.n, self.matrices[..t].to_vec())
    }

    /// 64-bit FNV-1a digest over the exact matrix contents.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.n as u64);
        eat(self.matrices.len() as u64);
        for m in &self.matrices {
            for (j, col) in m.cols.iter().enumerate() {
                for &(i, w) in col {
                    eat(i as u64);
                    eat(j as u64);
                    eat(w.to_bits());
                }
            }
        }
        h
    }
}

/// Draws a random `k`-out schedule: at every iteration each party picks `k`
/// receivers uniformly and splits its value equally among them and itself.
///
/// Without `distinct`, each party and iteration shuffles from its own
/// substream, so for a fixed `rng` the receivers for `k` are a prefix of
/// those for `k + 1`.
///
/// With `distinct`, no party picks the same receiver twice over the whole
/// horizon, which requires `k·T ≤ n − 1`.
pub fn random_kout_schedule<R: Rng>(
    n: usize,
    k: usize,
    iterations: usize,
    rng: &mut R,
    distinct: bool,
) -> Result<CommSchedule> {
    if n < 2 || k == 0 || k > n - 1 {
        return Err(Error::Config(format!("k = {k} must lie in [1, n-1] with n = {n}")));
    }
    if iterations == 0 {
        return Err(Error::Config("need at least one iteration".into()));
    }
    if distinct && k * iterations > n - 1 {
        return Err(Error::Config(format!(
            "distinct receivers need k·T ≤ n-1 (k = {k}, T = {iterations}, n = {n})"
        )));
    }
    let share = 1.0 / (k as f64 + 1.0);
    let mut pools: Vec<Vec<usize>> = if distinct {
        (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect()
    } else {
        Vec::new()
    };
    let mut matrices = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut cols = Vec::with_capacity(n);
        for i in 0..n {
            let mut col = vec![(i, share)];
            if distinct {
                let pool = &mut pools[i];
                for _ in 0..k {
                    let p = rng.random_range(0..pool.len());
                    col.push((pool.swap_remove(p), share));
                }
            } else {
                let mut sub = ChaCha8Rng::seed_from_u64(rng.random());
                for r in prefix_sample(&mut sub, n - 1, k) {
                    col.push((if r >= i { r + 1 } else { r }, share));
                }
            }
            cols.push(col);
        }
        matrices.push(WeightMatrix::from_columns(n, cols)?);
    }
    CommSchedule::new(n, matrices)
}

/// First `k` entries of a uniform shuffle of `0..len`.
fn prefix_sample<R: Rng>(rng: &mut R, len: usize, k: usize) -> Vec<usize> {
    let mut swapped: HashMap<usize, usize> = HashMap::with_capacity(2 * k);
    (0..k)
        .map(|p| {
            let q = rng.random_range(p..len);
            let at_q = swapped.get(&q).copied().unwrap_or(q);
            let at_p = swapped.get(&p).copied().unwrap_or(p);
            swapped.insert(q, at_p);
            at_q
        })
        .collect()
}

/// Repeats `base` for `iterations` rounds.
pub fn static_schedule(base: &WeightMatrix, iterations: usize) -> Result<CommSchedule> {
    CommSchedule::new(base.n(), vec![base.clone(); iterations])
}

/// Online status of every party at every iteration `0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineHistory {
    n: usize,
    /// `online[t][i]`
    online: Vec<Vec<bool>>,
}

impl OnlineHistory {
    pub fn all_online(n: usize, iterations: usize) -> Self {
        OnlineHistory { n, online: vec![vec![true; n]; iterations + 1] }
    }

    /// Builds a history from explicit status rows; everyone must be online
    /// at iteration 0.
    pub fn from_rows(online: Vec<Vec<bool>>) -> Result<Self> {
        let n = online.first().map(Vec::len).unwrap_or(0);
        if online.len() < 2 || n == 0 || online.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("history must be (T+1) × n with T ≥ 1".into()));
        }
        if online[0].iter().any(|&o| !o) {
            return Err(Error::Config("every party must be online at iteration 0".into()));
        }
        Ok(OnlineHistory { n, online })
    }

    /// Parties in `drops` go offline permanently from the given iteration.
    pub fn with_permanent_dropouts(n: usize, iterations: usize, drops: &[(usize, usize)]) -> Result<Self> {
        let mut h = Self::all_online(n, iterations);
        for &(i, t0) in drops {
            if i >= n || t0 == 0 || t0 > iterations {
                return Err(Error::Config(format!("bad dropout ({i}, {t0})")));
            }
            for t in t0..=iterations {
                h.online[t][i] = false;
            }
        }
        Ok(h)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn iterations(&self) -> usize {
        self.online.len() - 1
    }

    pub fn is_online(&self, i: usize, t: usize) -> bool {
        self.online[t][i]
    }

    /// Status of all parties at iteration `t`.
    pub fn at(&self, t: usize) -> &[bool] {
        &self.online[t]
    }

    /// Status of party `i` over all iterations.
    pub fn party(&self, i: usize) -> Vec<bool> {
        self.online.iter().map(|r| r[i]).collect()
    }

    /// Parties online at the final iteration.
    pub fn survivors(&self) -> Vec<usize> {
        let last = self.online.last().expect("non-empty history");
        (0..self.n).filter(|&i| last[i]).collect()
    }

    pub fn has_dropouts(&self) -> bool {
        self.online.iter().any(|r| r.iter().any(|&o| !o))
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.online
    }
}

/// Samples `⌊γ n⌋` permanent dropouts, each leaving at a uniform iteration
/// in `[1, T]`.
pub fn sample_dropouts<R: Rng>(n: usize, iterations: usize, gamma: f64, rng: &mut R) -> Result<OnlineHistory> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("dropout fraction {gamma} outside [0, 1)")));
    }
    let count = floor_fraction(gamma, n);
    let parties = index::sample(rng, n, count).into_vec();
    let drops: Vec<(usize, usize)> = parties.into_iter().map(|i| (i, rng.random_range(1..=iterations))).collect();
    OnlineHistory::with_permanent_dropouts(n, iterations, &drops)
}

/// `⌊f · n⌋`, robust to representation error of `f`.
pub fn floor_fraction(f: f64, n: usize) -> usize {
    (f * n as f64 + 1e-9).floor() as usize
}

/// Directed graph on honest parties: an edge `i → j` means `j` received part
/// of a message of `i` that the adversary did not observe.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenGraph {
    /// Party ids of the vertices.
    pub vertices: Vec<usize>,
    /// Adjacency by vertex position.
    pub adjacency: Vec<Vec<usize>>,
}

impl HiddenGraph {
    pub fn build(schedule: &CommSchedule, history: &OnlineHistory, view: &AdversaryView) -> Self {
        let vertices = view.honest();
        let mut pos = vec![usize::MAX; schedule.n()];
        for (p, &v) in vertices.iter().enumerate() {
            pos[v] = p;
        }
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for t in 0..schedule.iterations() {
            let w = schedule.matrix(t + 1).effective(history.at(t + 1));
            for (p, &i) in vertices.iter().enumerate() {
                if view.is_observed(i, t) || !history.is_online(i, t) {
                    continue;
                }
                for j in w.receivers(i) {
                    if pos[j] != usize::MAX {
                        adjacency[p].push(pos[j]);
                    }
                }
            }
        }
        for a in &mut adjacency {
            a.sort_unstable();
            a.dedup();
        }
        HiddenGraph { vertices, adjacency }
    }

    pub fn is_strongly_connected(&self) -> bool {
        let n = self.vertices.len();
        if n <= 1 {
            return true;
        }
        let mut reverse = vec![Vec::new(); n];
        for (u, adj) in self.adjacency.iter().enumerate() {
            for &v in adj {
                reverse[v].push(u);
            }
        }
        reaches_all(&self.adjacency) && reaches_all(&reverse)
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == adj.len()
}

/// Hypercube gossip matrix `(I + A)/(d + 1)` on `n = 2^d` parties together
/// with its second-largest eigenvalue.
pub fn hypercube_gossip(n: usize) -> Result<(WeightMatrix, f64)> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Config(format!("hypercube needs a power of two ≥ 2, got {n}")));
    }
    let d = n.trailing_zeros() as usize;
    let share = 1.0 / (d as f64 + 1.0);
    let cols = (0..n)
        .map(|j| {
            let mut col = vec![(j, share)];
            col.extend((0..d).map(|b| (j ^ (1 << b), share)));
            col
        })
        .collect();
    let w = WeightMatrix::from_columns(n, cols)?;
    let lambda2 = second_eigenvalue(&w);
    Ok((w, lambda2))
}

/// Second-largest eigenvalue of a symmetric doubly stochastic matrix by
/// power iteration on `W + I` restricted to the complement of the ones
/// vector.
fn second_eigenvalue(w: &WeightMatrix) -> f64 {
    let n = w.n();
    let mut x: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5).collect();
    let mut y = vec![0.0; n];
    let mut lambda = f64::NAN;
    for _ in 0..20_000 {
        let mean = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        w.mul_into(&x, &mut y);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += xi;
        }
        let rq: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let converged = (rq - lambda).abs() <= 1e-15 * rq.abs().max(1.0);
        lambda = rq;
        std::mem::swap(&mut x, &mut y);
        if converged {
            break;
        }
    }
    lambda - 1.0
}
