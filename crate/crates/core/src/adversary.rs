//! Adversary views and the linear systems they induce.
//!
//! An observed message `y_i^(t)` is a linear function of every party's noisy
//! input and canceling noise. Stacking the observed rows gives
//! `y_V = L x̃_H + N η_H` once the contributions of corrupted parties have
//! been subtracted.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{sig17_matrix, to_pretty};
use crate::linalg::{independent_rows, ROW_RTOL};
use crate::protocol::{adapt_all, AdaptedSplit, NoiseSplit, Transcript};
use crate::topology::{floor_fraction, CommSchedule, OnlineHistory, WeightMatrix};

/// How the adversary gathers messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewMode {
    Eavesdrop,
    Collusion,
}

/// The set of `(party, iteration)` messages known to the adversary, plus the
/// corrupted parties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryView {
    pub mode: ViewMode,
    n: usize,
    iterations: usize,
    /// `observed[t][i]`
    observed: Vec<Vec<bool>>,
    corrupted: Vec<bool>,
}

impl AdversaryView {
    /// Explicit view. Final messages are always observed.
    pub fn new(mode: ViewMode, mut observed: Vec<Vec<bool>>, corrupted: Vec<bool>) -> Result<Self> {
        let n = corrupted.len();
        if observed.len() < 2 || observed.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("observed set must be (T+1) × n".into()));
        }
        let iterations = observed.len() - 1;
        observed[iterations].iter_mut().for_each(|o| *o = true);
        Ok(AdversaryView { mode, n, iterations, observed, corrupted })
    }

    /// Eavesdropper seeing all final messages and, at every earlier
    /// iteration, a uniform sample of `⌊f n⌋` messages.
    ///
    /// Iteration `t` consumes the stream in order, so a dedicated stream
    /// yields the same observations for every horizon that contains `t`.
    pub fn eavesdrop<R: Rng>(n: usize, iterations: usize, fraction: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Config(format!("observation fraction {fraction} outside [0, 1]")));
        }
        let count = floor_fraction(fraction, n);
        let mut observed = vec![vec![false; n]; iterations + 1];
        for row in observed.iter_mut().take(iterations) {
            for i in index::sample(rng, n, count) {
                row[i] = true;
            }
        }
        Self::new(ViewMode::Eavesdrop, observed, vec![false; n])
    }

    /// Colluding parties see their own messages and everything sent to
    /// them according to the schedule.
    pub fn collusion(schedule: &CommSchedule, corrupted: Vec<bool>) -> Result<Self> {
        let n = schedule.n();
        if corrupted.len() != n {
            return Err(Error::Dimension("corruption flags must cover n parties".into()));
        }
        let t_max = schedule.iterations();
        let mut observed = vec![vec![false; n]; t_max + 1];
        for t in 0..t_max {
            let w = schedule.matrix(t + 1);
            for i in 0..n {
                observed[t][i] = corrupted[i] || w.receivers(i).any(|j| corrupted[j]);
            }
        }
        Self::new(ViewMode::Collusion, observed, corrupted)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn is_observed(&self, i: usize, t: usize) -> bool {
        self.observed[t][i]
    }

    pub fn is_corrupted(&self, i: usize) -> bool {
        self.corrupted[i]
    }

    pub fn corrupted(&self) -> &[bool] {
        &self.corrupted
    }

    pub fn honest(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| !self.corrupted[i]).collect()
    }

    /// Observed pairs in iteration-major, party-minor order.
    pub fn observed_pairs(&self) -> Vec<(usize, usize)> {
        (0..=self.iterations)
            .flat_map(|t| (0..self.n).filter(move |&i| self.observed[t][i]).map(move |i| (i, t)))
            .collect()
    }

    /// Marks an additional message as observed.
    pub fn observe(&mut self, i: usize, t: usize) {
        self.observed[t][i] = true;
    }

    pub fn fully_observed(&self, i: usize) -> bool {
        self.observed.iter().all(|r| r[i])
    }
}

/// Samples `⌊ρ n⌋` corrupted parties.
pub fn sample_corrupted<R: Rng>(n: usize, rho: f64, rng: &mut R) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("collusion fraction {rho} outside [0, 1)")));
    }
    let mut c = vec![false; n];
    for i in index::sample(rng, n, floor_fraction(rho, n)) {
        c[i] = true;
    }
    Ok(c)
}

/// Linear map from honest unknowns to observed messages.
///
/// Implementations exist for the explicit dense system and for a
/// matrix-free form driven by the gossip recursion.
pub trait NoiseSystem {
    /// Party ids of the honest unknowns, in column order.
    fn honest(&self) -> &[usize];
    fn iterations(&self) -> usize;
    fn row_count(&self) -> usize;
    /// `L z` for `z` indexed like [`NoiseSystem::honest`].
    fn apply_l(&self, z: &[f64]) -> Vec<f64>;
    /// `N v` for `v` with entry `(p, k)` at `p·T + k`.
    fn apply_n(&self, v: &[f64]) -> Vec<f64>;
    /// `Nᵀ λ`.
    fn apply_n_transpose(&self, lambda: &[f64]) -> Vec<f64>;

    /// `N Nᵀ`.
    fn noise_gram(&self) -> DMatrix<f64> {
        let m = self.row_count();
        let mut g = DMatrix::zeros(m, m);
        let mut e = vec![0.0; m];
        for r in 0..m {
            e[r] = 1.0;
            let col = self.apply_n(&self.apply_n_transpose(&e));
            e[r] = 0.0;
            g.column_mut(r).copy_from_slice(&col);
        }
        g
    }
}

/// Observed rows of the message recursion, row-reduced, as dense matrices.
#[derive(Debug, Clone)]
pub struct AdversarySystem {
    pub honest: Vec<usize>,
    pub corrupted: Vec<usize>,
    pub iterations: usize,
    /// `(party, iteration)` of each retained row.
    pub rows: Vec<(usize, usize)>,
    pub l: DMatrix<f64>,
    pub n: DMatrix<f64>,
    /// Coefficients on corrupted parties' inputs and noise.
    pub l_known: DMatrix<f64>,
    pub n_known: DMatrix<f64>,
    /// All observed rows before reduction, as `[L | N]` on honest unknowns.
    pub unreduced: DMatrix<f64>,
}

impl AdversarySystem {
    /// Builds the system for `view`, drops linearly dependent rows and
    /// moves corrupted parties' contributions into the known part.
    pub fn build(schedule: &CommSchedule, history: &OnlineHistory, split: &NoiseSplit, view: &AdversaryView) -> Result<Self> {
        let n = schedule.n();
        let t_max = schedule.iterations();
        check_dims(schedule, history, view)?;
        if split.iterations() != t_max {
            return Err(Error::Dimension("split must share T with the schedule".into()));
        }
        let honest = view.honest();
        if honest.is_empty() {
            return Err(Error::EmptyHonestSet);
        }
        let corrupted: Vec<usize> = (0..n).filter(|&i| view.is_corrupted(i)).collect();
        let adapted = adapt_all(split, history);

        // Full recursion over all parties: lt (n × n), nt (n × nT).
        let mut lt = DMatrix::<f64>::zeros(n, n);
        let mut nt = DMatrix::<f64>::zeros(n, n * t_max);
        inject(&adapted, 0, t_max, &mut lt, &mut nt);
        let observed = view.observed_pairs();
        let mut full_rows: Vec<((usize, usize), Vec<f64>, Vec<f64>)> = Vec::with_capacity(observed.len());
        let mut cursor = 0;
        for t in 0..=t_max {
            if t > 0 {
                let w = schedule.matrix(t).effective(history.at(t)).to_dense();
                lt = &w * &lt;
                nt = &w * &nt;
                inject(&adapted, t, t_max, &mut lt, &mut nt);
            }
            while cursor < observed.len() && observed[cursor].1 == t {
                let i = observed[cursor].0;
                full_rows.push((observed[cursor], lt.row(i).iter().copied().collect(), nt.row(i).iter().copied().collect()));
                cursor += 1;
            }
        }

        let nh = honest.len();
        let nc = corrupted.len();
        let m0 = full_rows.len();
        let mut unreduced = DMatrix::zeros(m0, nh + nh * t_max);
        for (r, (_, lrow, nrow)) in full_rows.iter().enumerate() {
            for (p, &j) in honest.iter().enumerate() {
                unreduced[(r, p)] = lrow[j];
                for k in 0..t_max {
                    unreduced[(r, nh + p * t_max + k)] = nrow[j * t_max + k];
                }
            }
        }
        let keep = independent_rows(&unreduced, ROW_RTOL);
        let m = keep.len();
        let mut l = DMatrix::zeros(m, nh);
        let mut nm = DMatrix::zeros(m, nh * t_max);
        let mut l_known = DMatrix::zeros(m, nc);
        let mut n_known = DMatrix::zeros(m, nc * t_max);
        let mut rows = Vec::with_capacity(m);
        for (r, &src) in keep.iter().enumerate() {
            let (pair, lrow, nrow) = &full_rows[src];
            rows.push(*pair);
            l.row_mut(r).copy_from(&unreduced.view((src, 0), (1, nh)));
            nm.row_mut(r).copy_from(&unreduced.view((src, nh), (1, nh * t_max)));
            for (p, &j) in corrupted.iter().enumerate() {
                l_known[(r, p)] = lrow[j];
                for k in 0..t_max {
                    n_known[(r, p * t_max + k)] = nrow[j * t_max + k];
                }
            }
        }
        Ok(AdversarySystem { honest, corrupted, iterations: t_max, rows, l, n: nm, l_known, n_known, unreduced })
    }

    /// `y_V`: retained observed messages minus the corrupted parties' known
    /// contributions.
    pub fn observed_vector(&self, transcript: &Transcript) -> DVector<f64> {
        let (xc, ec) = self.unknowns_of(&self.corrupted, transcript);
        let y = DVector::from_iterator(self.rows.len(), self.rows.iter().map(|&(i, t)| transcript.messages[t][i]));
        y - &self.l_known * xc - &self.n_known * ec
    }

    /// True honest unknowns `(x̃_H, η_H)` of a run.
    pub fn honest_unknowns(&self, transcript: &Transcript) -> (DVector<f64>, DVector<f64>) {
        self.unknowns_of(&self.honest, transcript)
    }

    fn unknowns_of(&self, parties: &[usize], transcript: &Transcript) -> (DVector<f64>, DVector<f64>) {
        let t = self.iterations;
        let x = DVector::from_iterator(parties.len(), parties.iter().map(|&i| transcript.inputs_noisy[i]));
        let e = DVector::from_iterator(
            parties.len() * t,
            parties.iter().flat_map(|&i| transcript.canceling_noise[i].iter().copied()),
        );
        (x, e)
    }

    /// `[L | N]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.l.nrows(), self.l.ncols() + self.n.ncols());
        a.columns_mut(0, self.l.ncols()).copy_from(&self.l);
        a.columns_mut(self.l.ncols(), self.n.ncols()).copy_from(&self.n);
        a
    }

    /// Dense `{L, N, y}` document.
    pub fn to_json(&self, y: Option<&DVector<f64>>) -> String {
        #[derive(Serialize)]
        struct Doc {
            rows: Vec<(usize, usize)>,
            honest: Vec<usize>,
            #[serde(rename = "L")]
            l: Vec<Vec<Box<serde_json::value::RawValue>>>,
            #[serde(rename = "N")]
            n: Vec<Vec<Box<serde_json::value::RawValue>>>,
            y: Option<Vec<Box<serde_json::value::RawValue>>>,
        }
        let rows_of = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect() };
        to_pretty(&Doc {
            rows: self.rows.clone(),
            honest: self.honest.clone(),
            l: sig17_matrix(&rows_of(&self.l)),
            n: sig17_matrix(&rows_of(&self.n)),
            y: y.map(|v| crate::json::sig17_vec(v.as_slice())),
        })
    }
}

impl NoiseSystem for AdversarySystem {
    fn honest(&self) -> &[usize] {
        &self.honest
    }
    fn iterations(&self) -> usize {
        self.iterations
    }
    fn row_count(&self) -> usize {
        self.rows.len()
    }
    fn apply_l(&self, z: &[f64]) -> Vec<f64> {
        (&self.l * DVector::from_column_slice(z)).as_slice().to_vec()
    }
    fn apply_n(&self, v: &[f64]) -> Vec<f64> {
        (&self.n * DVector::from_column_slice(v)).as_slice().to_vec()
    }
    fn apply_n_transpose(&self, lambda: &[f64]) -> Vec<f64> {
        (self.n.transpose() * DVector::from_column_slice(lambda)).as_slice().to_vec()
    }
    fn noise_gram(&self) -> DMatrix<f64> {
        &self.n * self.n.transpose()
    }
}

fn check_dims(schedule: &CommSchedule, history: &OnlineHistory, view: &AdversaryView) -> Result<()> {
    if history.n() != schedule.n() || view.n() != schedule.n() {
        return Err(Error::Dimension("schedule, history and view must cover n parties".into()));
    }
    if history.iterations() != schedule.iterations() || view.iterations() != schedule.iterations() {
        return Err(Error::Dimension("schedule, history and view must share T".into()));
    }
    Ok(())
}

fn inject(adapted: &[AdaptedSplit], t: usize, t_max: usize, lt: &mut DMatrix<f64>, nt: &mut DMatrix<f64>) {
    for (j, a) in adapted.iter().enumerate() {
        lt[(j, j)] += a.c[t];
        for &(k, v) in &a.rows[t] {
            nt[(j, j * t_max + k)] += v;
        }
    }
}

/// Largest absolute residual `‖L x̃_H + N η_H − y_V‖∞` at the true values.
pub fn reconstruct_check(system: &AdversarySystem, transcript: &Transcript) -> f64 {
    let (x, e) = system.honest_unknowns(transcript);
    let r = &system.l * x + &system.n * e - system.observed_vector(transcript);
    r.amax()
}

/// Matrix-free observation operator driven by the gossip recursion.
///
/// Applying `N` runs the forward recursion, applying `Nᵀ` runs its adjoint,
/// so each costs `O(T · (nnz(W) + nnz(Z)))`. Rows are every observed pair
/// in iteration-major order, without reduction.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    n: usize,
    t_max: usize,
    honest: Vec<usize>,
    weights: Vec<WeightMatrix>,
    adapted: Vec<AdaptedSplit>,
    rows: Vec<(usize, usize)>,
}

impl ObservationOperator {
    pub fn new(schedule: &CommSchedule, history: &OnlineHistory, split: &NoiseSplit, view: &AdversaryView) -> Result<Self> {
        check_dims(schedule, history, view)?;
        let n = schedule.n();
        let honest = view.honest();
        if honest.is_empty() {
            return Err(Error::EmptyHonestSet);
        }
        let weights = (1..=schedule.iterations()).map(|t| schedule.matrix(t).effective(history.at(t))).collect();
        Ok(ObservationOperator {
            n,
            t_max: schedule.iterations(),
            honest,
            weights,
            adapted: adapt_all(split, history),
            rows: view.observed_pairs(),
        })
    }

    pub fn rows(&self) -> &[(usize, usize)] {
        &self.rows
    }

    fn forward(&self, mut inject_at: impl FnMut(usize, &mut [f64])) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows.len());
        let mut y = vec![0.0; self.n];
        let mut next = vec![0.0; self.n];
        let mut cursor = 0;
        for t in 0..=self.t_max {
            if t > 0 {
                self.weights[t - 1].mul_into(&y, &mut next);
                std::mem::swap(&mut y, &mut next);
            }
            inject_at(t, &mut y);
            while cursor < self.rows.len() && self.rows[cursor].1 == t {
                out.push(y[self.rows[cursor].0]);
                cursor += 1;
            }
        }
        out
    }

    /// Adjoint recursion: `μ^(t) = W_{t+1}ᵀ μ^(t+1) + λ_t`, then each noise
    /// coordinate collects `Z^U` rows weighted by `μ`.
    fn backward(&self, lambda: &[f64]) -> Vec<f64> {
        let t_max = self.t_max;
        let mut out = vec![0.0; self.honest.len() * t_max];
        if t_max == 0 {
            return out;
        }
        let mut mu = vec![0.0; self.n];
        let mut prev = vec![0.0; self.n];
        let mut cursor = self.rows.len();
        let last = self.rows.last().map(|r| r.1).unwrap_or(0);
        for t in (0..=last).rev() {
            if t < last {
                self.weights[t].mul_transpose_into(&mu, &mut prev);
                std::mem::swap(&mut mu, &mut prev);
            }
            while cursor > 0 && self.rows[cursor - 1].1 == t {
                cursor -= 1;
                mu[self.rows[cursor].0] += lambda[cursor];
            }
            for (p, &j) in self.honest.iter().enumerate() {
                let m = mu[j];
                if m != 0.0 {
                    for &(k, v) in &self.adapted[j].rows[t] {
                        out[p * t_max + k] += m * v;
                    }
                }
            }
        }
        out
    }
}

impl NoiseSystem for ObservationOperator {
    fn honest(&self) -> &[usize] {
        &self.honest
    }
    fn iterations(&self) -> usize {
        self.t_max
    }
    fn row_count(&self) -> usize {
        self.rows.len()
    }
    fn apply_l(&self, z: &[f64]) -> Vec<f64> {
        self.forward(|t, y| {
            for (p, &j) in self.honest.iter().enumerate() {
                y[j] += self.adapted[j].c[t] * z[p];
            }
        })
    }
    fn apply_n(&self, v: &[f64]) -> Vec<f64> {
        let t_max = self.t_max;
        self.forward(|t, y| {
            for (p, &j) in self.honest.iter().enumerate() {
                for &(k, c) in &self.adapted[j].rows[t] {
                    y[j] += c * v[p * t_max + k];
                }
            }
        })
    }
    fn apply_n_transpose(&self, lambda: &[f64]) -> Vec<f64> {
        self.backward(lambda)
    }
    /// Both recursions run once on an `m`-wide block, so each sparse
    /// weight touches a contiguous row. Rows are iteration-major, so at
    /// iteration `t` only columns from the first row of `t` onwards are
    /// live; the rest of `G` is filled by symmetry.
    fn noise_gram(&self) -> DMatrix<f64> {
        let m = self.rows.len();
        let (n, t_max) = (self.n, self.t_max);
        let mut g = DMatrix::zeros(m, m);
        if m == 0 || t_max == 0 {
            return g;
        }
        let axpy = |dst: &mut [f64], a: f64, src: &[f64]| dst.iter_mut().zip(src).for_each(|(d, s)| *d += a * s);
        let mut start = vec![m; t_max + 2];
        for (r, &(_, t)) in self.rows.iter().enumerate().rev() {
            for s in start.iter_mut().take(t + 1) {
                *s = r;
            }
        }

        // Nᵀ as (honest · T) × m, row-major
        let mut nt = vec![0.0; self.honest.len() * t_max * m];
        let mut mu = vec![0.0; n * m];
        let mut prev = vec![0.0; n * m];
        let mut cursor = m;
        let last = self.rows[m - 1].1;
        for t in (0..=last).rev() {
            if t < last {
                let lo = start[t + 1];
                for (j, col) in self.weights[t].columns().enumerate() {
                    let dst = &mut prev[j * m + lo..(j + 1) * m];
                    dst.iter_mut().for_each(|v| *v = 0.0);
                    for &(i, w) in col {
                        axpy(dst, w, &mu[i * m + lo..(i + 1) * m]);
                    }
                }
                std::mem::swap(&mut mu, &mut prev);
            }
            while cursor > 0 && self.rows[cursor - 1].1 == t {
                cursor -= 1;
                mu[self.rows[cursor].0 * m + cursor] += 1.0;
            }
            let lo = start[t];
            for (p, &j) in self.honest.iter().enumerate() {
                let src = &mu[j * m + lo..(j + 1) * m];
                for &(k, v) in &self.adapted[j].rows[t] {
                    let r = p * t_max + k;
                    axpy(&mut nt[r * m + lo..(r + 1) * m], v, src);
                }
            }
        }

        // N (Nᵀ): column r of G holds the live part of y at row r's pair
        let mut y = vec![0.0; n * m];
        let mut next = vec![0.0; n * m];
        let mut cursor = 0;
        for t in 0..=last {
            let lo = start[t];
            if t > 0 {
                for j in 0..n {
                    next[j * m + lo..(j + 1) * m].iter_mut().for_each(|v| *v = 0.0);
                }
                for (j, col) in self.weights[t - 1].columns().enumerate() {
                    for &(i, w) in col {
                        axpy(&mut next[i * m + lo..(i + 1) * m], w, &y[j * m + lo..(j + 1) * m]);
                    }
                }
                std::mem::swap(&mut y, &mut next);
            }
            for (p, &j) in self.honest.iter().enumerate() {
                for &(k, c) in &self.adapted[j].rows[t] {
                    let r = p * t_max + k;
                    axpy(&mut y[j * m + lo..(j + 1) * m], c, &nt[r * m + lo..(r + 1) * m]);
                }
            }
            while cursor < m && self.rows[cursor].1 == t {
                let i = self.rows[cursor].0;
                g.column_mut(cursor).as_mut_slice()[lo..].copy_from_slice(&y[i * m + lo..(i + 1) * m]);
                cursor += 1;
            }
        }
        for c in 1..m {
            for r in 0..c {
                g[(r, c)] = g[(c, r)];
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{run_inca, ProtocolConfig};
    use crate::rng;
    use crate::topology::{random_kout_schedule, sample_dropouts};

    fn setup(seed: u64, dropouts: bool) -> (CommSchedule, OnlineHistory, NoiseSplit, AdversaryView) {
        let mut r = rng::stream(seed, &[]);
        let sched = random_kout_schedule(8, 2, 4, &mut r, false).unwrap();
        let hist = if dropouts { sample_dropouts(8, 4, 0.25, &mut r).unwrap() } else { OnlineHistory::all_online(8, 4) };
        let corrupted = sample_corrupted(8, 0.25, &mut r).unwrap();
        let view = AdversaryView::collusion(&sched, corrupted).unwrap();
        (sched, hist, NoiseSplit::incremental(4, 1.5).unwrap(), view)
    }

    #[test]
    fn final_messages_always_observed() {
        let mut r = rng::stream(1, &[]);
        let v = AdversaryView::eavesdrop(10, 3, 0.0, &mut r).unwrap();
        assert!((0..10).all(|i| v.is_observed(i, 3)));
        assert!((0..10).all(|i| !v.is_observed(i, 0)));
    }

    #[test]
    fn collusion_sees_messages_sent_to_corrupted_parties() {
        let (sched, _, _, view) = setup(2, false);
        for t in 0..4 {
            for i in 0..8 {
                let expect = view.is_corrupted(i) || sched.out_neighbors(i, t + 1).iter().any(|&j| view.is_corrupted(j));
                assert_eq!(view.is_observed(i, t), expect);
            }
        }
    }

    #[test]
    fn system_reproduces_observations() {
        for (seed, drop) in [(3, false), (4, true)] {
            let (sched, hist, split, view) = setup(seed, drop);
            let sys = AdversarySystem::build(&sched, &hist, &split, &view).unwrap();
            let cfg = ProtocolConfig { n: 8, iterations: 4, sigma_ind_sq: 0.7, split: split.clone(), seed };
            let x: Vec<f64> = (0..8).map(|i| i as f64 / 8.0).collect();
            let tr = run_inca(&cfg, &sched, &hist, &x).unwrap();
            assert!(reconstruct_check(&sys, &tr) < 1e-10);
        }
    }

    #[test]
    fn dropped_rows_lie_in_retained_span() {
        let (sched, hist, split, view) = setup(5, true);
        let sys = AdversarySystem::build(&sched, &hist, &split, &view).unwrap();
        let kept = sys.stacked();
        let q_rank = crate::linalg::svd_rank(&kept, 1e-9);
        assert_eq!(q_rank, kept.nrows());
        assert_eq!(crate::linalg::svd_rank(&sys.unreduced, 1e-9), q_rank);
        let kt = kept.transpose();
        for r in 0..sys.unreduced.nrows() {
            let row = sys.unreduced.row(r).transpose();
            let (_, res) = crate::linalg::min_norm_lstsq(&kt, &row, 1e-12);
            assert!(res <= 1e-9 * row.norm().max(1.0));
        }
    }

    #[test]
    fn operator_matches_dense_system() {
        let (sched, hist, split, view) = setup(6, true);
        let op = ObservationOperator::new(&sched, &hist, &split, &view).unwrap();
        let dense = AdversarySystem::build(&sched, &hist, &split, &view).unwrap();
        // map reduced rows into operator rows
        let idx: Vec<usize> = dense.rows.iter().map(|p| op.rows().iter().position(|q| q == p).unwrap()).collect();
        let nh = op.honest().len();
        let v: Vec<f64> = (0..nh * 4).map(|k| ((k * 7 % 11) as f64) - 5.0).collect();
        let z: Vec<f64> = (0..nh).map(|k| k as f64 * 0.3 - 1.0).collect();
        let (nv, lz) = (op.apply_n(&v), op.apply_l(&z));
        let (dn, dl) = (dense.apply_n(&v), dense.apply_l(&z));
        for (r, &o) in idx.iter().enumerate() {
            assert!((nv[o] - dn[r]).abs() < 1e-12);
            assert!((lz[o] - dl[r]).abs() < 1e-12);
        }
        // adjoint identity <N v, λ> = <v, Nᵀ λ>
        let lam: Vec<f64> = (0..op.row_count()).map(|r| (r as f64).sin()).collect();
        let lhs: f64 = nv.iter().zip(&lam).map(|(a, b)| a * b).sum();
        let rhs: f64 = v.iter().zip(op.apply_n_transpose(&lam)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn blocked_gram_matches_columnwise_product() {
        for (seed, drop) in [(4, false), (5, true), (6, true)] {
            let (sched, hist, split, view) = setup(seed, drop);
            let op = ObservationOperator::new(&sched, &hist, &split, &view).unwrap();
            let m = op.row_count();
            let cols = op.honest().len() * op.iterations();
            let mut nt = DMatrix::zeros(cols, m);
            for r in 0..m {
                let mut e = vec![0.0; m];
                e[r] = 1.0;
                nt.column_mut(r).copy_from_slice(&op.apply_n_transpose(&e));
            }
            let want = nt.transpose() * &nt;
            assert!((op.noise_gram() - want).amax() < 1e-12);
        }
    }
}
