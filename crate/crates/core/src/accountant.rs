//! Privacy accounting: edge vectors of unobserved messages, rank
//! preconditions, noise calibration and direct checks of the Gaussian
//! quadratic-form condition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversarySystem, AdversaryView, NoiseSystem};
use crate::error::{Error, Result};
use crate::linalg::{min_norm_lstsq, svd_rank, PivotedCholesky};
use crate::topology::{CommSchedule, HiddenGraph, OnlineHistory};

/// Default relative tolerance for [`rank_count`].
pub const RANK_RTOL: f64 = 1e-9;
/// Relative pivot tolerance of the Gram factorization used for
/// minimum-norm solves.
pub const GRAM_RTOL: f64 = 1e-11;
/// Residual above which a minimum-norm solve is declared inconsistent.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Tolerance on the smallest eigenvalue in the semidefinite check.
pub const SDP_TOL: f64 = 1e-10;
/// Relative slack in the quadratic-form check.
pub const QUAD_SLACK: f64 = 1e-9;

/// Privacy parameters together with the Gaussian constant `c²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub c_sq: f64,
}

impl PrivacyBudget {
    /// Budget with `c²` just above `2 ln(1.25/δ)`.
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        Self::with_c_sq(epsilon, delta, gaussian_c_sq(delta) * (1.0 + 1e-9))
    }

    pub fn with_c_sq(epsilon: f64, delta: f64, c_sq: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("ε = {epsilon}, δ = {delta} must lie in (0, 1)")));
        }
        if !(c_sq > gaussian_c_sq(delta)) || !c_sq.is_finite() {
            return Err(Error::Config(format!("c² = {c_sq} must exceed 2 ln(1.25/δ)")));
        }
        Ok(PrivacyBudget { epsilon, delta, c_sq })
    }

    /// `ε² / c²`.
    pub fn threshold(&self) -> f64 {
        self.epsilon * self.epsilon / self.c_sq
    }
}

/// `2 ln(1.25/δ)`.
pub fn gaussian_c_sq(delta: f64) -> f64 {
    2.0 * (1.25 / delta).ln()
}

/// Perturbation direction for one unobserved message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeVector {
    pub sender: usize,
    pub iteration: usize,
    /// Sparse coordinates `(party, value)` sorted by party.
    pub coords: Vec<(usize, f64)>,
}

/// Edge vectors keyed by hidden `(sender, iteration)` pairs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeVectorSet {
    pub n: usize,
    pub vectors: Vec<EdgeVector>,
    /// Hidden pairs skipped because a referenced party injected no weight.
    pub excluded: Vec<(usize, usize)>,
}

impl EdgeVectorSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Vectors whose sender is in `members` and whose support lies inside
    /// `members`.
    pub fn restricted_to(&self, members: &[bool]) -> EdgeVectorSet {
        EdgeVectorSet {
            n: self.n,
            vectors: self
                .vectors
                .iter()
                .filter(|v| members[v.sender] && v.coords.iter().all(|&(j, _)| members[j]))
                .cloned()
                .collect(),
            excluded: self.excluded.clone(),
        }
    }

    /// Stacked dense matrix, one row per vector.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.vectors.len(), self.n);
        for (r, v) in self.vectors.iter().enumerate() {
            for &(j, x) in &v.coords {
                m[(r, j)] = x;
            }
        }
        m
    }
}

/// Builds one edge vector per honest, online, unobserved message `(i, t)`
/// with `t < T`.
///
/// With effective weights `W^U_{t+1}`: `ζ_i = (W_ii − 1)/w_i` and
/// `ζ_j = W_ji / w_j` for every honest receiver `j`.
pub fn edge_vectors(schedule: &CommSchedule, history: &OnlineHistory, view: &AdversaryView, w: &[f64]) -> Result<EdgeVectorSet> {
    let n = schedule.n();
    if history.n() != n || view.n() != n || w.len() != n {
        return Err(Error::Dimension("schedule, history, view and weights must cover n parties".into()));
    }
    if history.iterations() != schedule.iterations() || view.iterations() != schedule.iterations() {
        return Err(Error::Dimension("schedule, history and view must share T".into()));
    }
    let mut set = EdgeVectorSet { n, ..Default::default() };
    for t in 0..schedule.iterations() {
        let wu = schedule.matrix(t + 1).effective(history.at(t + 1));
        for i in 0..n {
            if view.is_corrupted(i) || view.is_observed(i, t) || !history.is_online(i, t) {
                continue;
            }
            let col = wu.column(i);
            if col.iter().any(|&(j, _)| w[j] == 0.0 && !view.is_corrupted(j)) {
                set.excluded.push((i, t));
                continue;
            }
            let mut coords = Vec::with_capacity(col.len());
            let mut has_diag = false;
            for &(j, x) in col {
                if j == i {
                    has_diag = true;
                    let v = (x - 1.0) / w[i];
                    if v != 0.0 {
                        coords.push((i, v));
                    }
                } else if !view.is_corrupted(j) {
                    coords.push((j, x / w[j]));
                }
            }
            if !has_diag {
                coords.push((i, -1.0 / w[i]));
                coords.sort_by_key(|e| e.0);
            }
            set.vectors.push(EdgeVector { sender: i, iteration: t, coords });
        }
    }
    Ok(set)
}

/// Number of linearly independent edge vectors: singular values above
/// `rtol · σ_max` of the stacked matrix.
///
/// Sets of vectors with at most two nonzeros are counted exactly through
/// connected components: a component on `s` coordinates has rank `s − 1`
/// when its two-term relations admit a consistent nonzero orthogonal
/// vector, and rank `s` otherwise.
pub fn rank_count(set: &EdgeVectorSet, rtol: f64) -> usize {
    let vectors: Vec<&EdgeVector> = set.vectors.iter().filter(|v| v.coords.iter().any(|c| c.1 != 0.0)).collect();
    if vectors.is_empty() {
        return 0;
    }
    if vectors.iter().all(|v| v.coords.iter().filter(|c| c.1 != 0.0).count() <= 2) {
        return sparse_pair_rank(set.n, &vectors, rtol);
    }
    // restrict to touched coordinates before the dense factorization
    let mut index = vec![usize::MAX; set.n];
    let mut cols = 0;
    for v in &vectors {
        for &(j, _) in &v.coords {
            if index[j] == usize::MAX {
                index[j] = cols;
                cols += 1;
            }
        }
    }
    let mut m = DMatrix::zeros(vectors.len(), cols);
    for (r, v) in vectors.iter().enumerate() {
        for &(j, x) in &v.coords {
            m[(r, index[j])] = x;
        }
    }
    svd_rank(&m, rtol)
}

fn sparse_pair_rank(n: usize, vectors: &[&EdgeVector], rtol: f64) -> usize {
    // Build an undirected multigraph; edge (p, q, a, b) encodes a·u_p + b·u_q = 0
    // for any u orthogonal to the vector.
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut pinned = vec![false; n];
    let mut touched = vec![false; n];
    for v in vectors {
        let nz: Vec<(usize, f64)> = v.coords.iter().copied().filter(|c| c.1 != 0.0).collect();
        match nz.as_slice() {
            [(p, _)] => {
                pinned[*p] = true;
                touched[*p] = true;
            }
            [(p, a), (q, b)] => {
                // u_q = −(a/b) u_p
                adj[*p].push((*q, -a / b));
                adj[*q].push((*p, -b / a));
                touched[*p] = true;
                touched[*q] = true;
            }
            _ => unreachable!("at most two nonzeros"),
        }
    }
    let mut value = vec![f64::NAN; n];
    let mut rank = 0;
    let mut stack = Vec::new();
    for root in 0..n {
        if !touched[root] || !value[root].is_nan() {
            continue;
        }
        value[root] = 1.0;
        stack.push(root);
        let mut size = 0;
        let mut consistent = true;
        while let Some(u) = stack.pop() {
            size += 1;
            if pinned[u] {
                consistent = false;
            }
            for &(v, ratio) in &adj[u] {
                let want = ratio * value[u];
                if value[v].is_nan() {
                    value[v] = want;
                    stack.push(v);
                } else if (value[v] - want).abs() > rtol * value[v].abs().max(want.abs()) {
                    consistent = false;
                }
            }
        }
        rank += if consistent { size - 1 } else { size };
    }
    rank
}

/// Residual of the least-squares problem `N u = −β L ζ'`, where `ζ'` is the
/// honest part of `zeta`. Small residuals certify that the perturbation is
/// invisible to the adversary.
pub fn nullspace_perturbation_check(system: &AdversarySystem, zeta: &EdgeVector, beta: f64) -> f64 {
    let z = DVector::from_iterator(
        system.honest.len(),
        system.honest.iter().map(|&j| zeta.coords.iter().find(|c| c.0 == j).map(|c| c.1).unwrap_or(0.0)),
    );
    let b = -(&system.l * z) * beta;
    if b.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    min_norm_lstsq(&system.n, &b, 1e-12).1
}

/// Which calibration theorem to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// No dropouts; uniform injected weight.
    Nodrop,
    /// Dropouts, all honest parties as one block.
    Totalsum,
    /// Dropouts, calibration restricted to a coalition containing every
    /// honest survivor.
    Coalition,
}

/// How `σ_η²` is chosen relative to the theorem's lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    /// A fixed variance; must exceed the bound.
    Explicit(f64),
    /// The bound times a factor greater than one.
    BoundMultiple(f64),
}

/// Outcome of [`calibrate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub ok: bool,
    pub theorem: Theorem,
    pub rank: usize,
    pub required_rank: usize,
    /// Strict lower bound on `σ_η²`.
    pub bound_sigma_ind_sq: f64,
    pub sigma_ind_sq: f64,
    pub sigma_delta_sq: f64,
    /// `‖Δ^η‖²` at the binding target.
    pub delta_eta_norm_sq: f64,
    /// `‖Δ_(:)‖²` at the binding target.
    pub delta_strip_norm_sq: f64,
    pub binding_target: Option<usize>,
    pub reason: Option<String>,
}

impl CalibrationResult {
    fn failed(theorem: Theorem, rank: usize, required_rank: usize, bound: f64, reason: String) -> Self {
        CalibrationResult {
            ok: false,
            theorem,
            rank,
            required_rank,
            bound_sigma_ind_sq: bound,
            sigma_ind_sq: f64::NAN,
            sigma_delta_sq: f64::NAN,
            delta_eta_norm_sq: f64::NAN,
            delta_strip_norm_sq: f64::NAN,
            binding_target: None,
            reason: Some(reason),
        }
    }
}

/// Minimum-norm solver for `N Δ = b` reused across right-hand sides.
pub struct MinNormSolver<'a, S: NoiseSystem> {
    system: &'a S,
    factor: PivotedCholesky,
}

impl<'a, S: NoiseSystem> MinNormSolver<'a, S> {
    pub fn new(system: &'a S) -> Self {
        let g = system.noise_gram();
        MinNormSolver { system, factor: PivotedCholesky::new(&g, GRAM_RTOL) }
    }

    /// Returns `Δ` and the residual 2-norm `‖N Δ − b‖`.
    pub fn solve(&self, b: &[f64]) -> (Vec<f64>, f64) {
        let lambda = self.factor.solve_basis(b);
        let delta = self.system.apply_n_transpose(&lambda);
        let nd = self.system.apply_n(&delta);
        let r = nd.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        (delta, r)
    }
}

/// Calibrates `σ_η²` and `σ_Δ²` for one execution.
///
/// For every honest target `i` the input difference `e_i + Δ^η` is hidden
/// by the minimum-norm canceling-noise difference solving
/// `N Δ = −L (e_i + Δ^η)`; the reported `σ_Δ²` is the worst case over
/// targets.
pub fn calibrate<S: NoiseSystem>(
    budget: &PrivacyBudget,
    system: &S,
    edges: &EdgeVectorSet,
    w: &[f64],
    history: &OnlineHistory,
    theorem: Theorem,
    choice: NoiseChoice,
) -> Result<CalibrationResult> {
    let honest = system.honest().to_vec();
    let nh = honest.len();
    if nh == 0 {
        return Err(Error::EmptyHonestSet);
    }
    let t_last = history.iterations();
    let mut in_j = vec![false; history.n()];
    for &i in &honest {
        in_j[i] = theorem != Theorem::Coalition || history.is_online(i, t_last);
    }
    let j_size = in_j.iter().filter(|&&b| b).count();
    let w_u: f64 = honest.iter().map(|&i| w[i]).sum();
    let w_j_sq: f64 = honest.iter().filter(|&&i| in_j[i]).map(|&i| w[i] * w[i]).sum();
    let ratio = budget.c_sq / (budget.epsilon * budget.epsilon);
    let bound = match theorem {
        Theorem::Nodrop => ratio / nh as f64,
        Theorem::Totalsum => (nh as f64 - 1.0) * ratio / (w_u - 1.0).powi(2),
        Theorem::Coalition => (j_size as f64 - 1.0) * ratio / (w_u - 1.0).powi(2),
    };
    let eta_max = honest
        .iter()
        .map(|&i| if in_j[i] { w[i] * w[i] / w_j_sq } else { (w[i] * w[i] / w_j_sq).powi(2) })
        .fold(0.0, f64::max);
    let bound = bound.max(eta_max * ratio);

    let (rank, required) = match theorem {
        Theorem::Coalition => (rank_count(&edges.restricted_to(&in_j), RANK_RTOL), j_size.saturating_sub(1)),
        _ => (rank_count(edges, RANK_RTOL), nh - 1),
    };
    if theorem == Theorem::Nodrop && history.has_dropouts() {
        return Ok(CalibrationResult::failed(theorem, rank, required, bound, "history contains dropouts".into()));
    }
    if j_size == 0 {
        return Ok(CalibrationResult::failed(theorem, rank, required, bound, "no honest survivor".into()));
    }
    if rank < required {
        return Ok(CalibrationResult::failed(
            theorem,
            rank,
            required,
            bound,
            format!("rank {rank} below required {required}"),
        ));
    }
    let sigma_ind_sq = match choice {
        NoiseChoice::Explicit(v) => v,
        NoiseChoice::BoundMultiple(a) => a * bound,
    };
    if !(sigma_ind_sq > bound) || !sigma_ind_sq.is_finite() {
        return Ok(CalibrationResult::failed(
            theorem,
            rank,
            required,
            bound,
            format!("σ_η² = {sigma_ind_sq} does not exceed the bound {bound}"),
        ));
    }

    let solver = MinNormSolver::new(system);
    let threshold = budget.threshold();
    let mut worst: Option<(f64, f64, f64, usize)> = None;
    for (p, &i) in honest.iter().enumerate() {
        let mut z = vec![0.0; nh];
        if in_j[i] {
            let scale = w[i] / w_j_sq;
            for (q, &j) in honest.iter().enumerate() {
                if in_j[j] {
                    z[q] = -scale * w[j];
                }
            }
        } else {
            z[p] = w[i] * w[i] / w_j_sq;
        }
        let eta_sq: f64 = z.iter().map(|v| v * v).sum();
        z[p] += 1.0;
        let b: Vec<f64> = system.apply_l(&z).into_iter().map(|v| -v).collect();
        let (delta, residual) = solver.solve(&b);
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if residual > RESIDUAL_TOL * bnorm.max(1.0) {
            return Err(Error::Inconsistent { residual });
        }
        let strip_sq: f64 = delta.iter().map(|v| v * v).sum();
        let room = threshold - eta_sq / sigma_ind_sq;
        if !(room > 0.0) {
            return Err(Error::Infeasible(format!(
                "target {i}: ‖Δ^η‖²/σ_η² = {} leaves no budget",
                eta_sq / sigma_ind_sq
            )));
        }
        let need = strip_sq / room;
        if worst.is_none_or(|w| need > w.0) {
            worst = Some((need, eta_sq, strip_sq, i));
        }
    }
    let (sigma_delta_sq, eta_sq, strip_sq, target) = worst.expect("non-empty honest set");
    Ok(CalibrationResult {
        ok: true,
        theorem,
        rank,
        required_rank: required,
        bound_sigma_ind_sq: bound,
        sigma_ind_sq,
        sigma_delta_sq,
        delta_eta_norm_sq: eta_sq,
        delta_strip_norm_sq: strip_sq,
        binding_target: Some(target),
        reason: None,
    })
}

fn covariance(system: &AdversarySystem, sigma_ind_sq: f64, sigma_delta_sq: f64) -> DMatrix<f64> {
    &system.l * system.l.transpose() * sigma_ind_sq + &system.n * system.n.transpose() * sigma_delta_sq
}

/// Quadratic-form condition: `hᵀ Σ⁻¹ h ≤ ε²/c²` for every column `h` of
/// `L`, with `Σ = [L | N] Σ_e [L | N]ᵀ`.
pub fn abstract_dp_check(budget: &PrivacyBudget, system: &AdversarySystem, sigma_ind_sq: f64, sigma_delta_sq: f64) -> Result<bool> {
    if !(sigma_ind_sq > 0.0 && sigma_delta_sq > 0.0) {
        return Err(Error::Config("variances must be positive".into()));
    }
    if system.rows.is_empty() {
        return Ok(true);
    }
    let sigma = covariance(system, sigma_ind_sq, sigma_delta_sq);
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Conditioning("observation covariance is not positive definite".into()))?;
    let limit = budget.threshold() * (1.0 + QUAD_SLACK);
    for c in 0..system.l.ncols() {
        let h = system.l.column(c).into_owned();
        let z = chol.solve(&h);
        let q = h.dot(&z);
        if !q.is_finite() {
            return Err(Error::Conditioning("non-finite quadratic form".into()));
        }
        if q > limit {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Largest quadratic form `max_h hᵀ Σ⁻¹ h` (for reporting).
pub fn worst_quadratic_form(system: &AdversarySystem, sigma_ind_sq: f64, sigma_delta_sq: f64) -> Result<f64> {
    let sigma = covariance(system, sigma_ind_sq, sigma_delta_sq);
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Conditioning("observation covariance is not positive definite".into()))?;
    Ok((0..system.l.ncols())
        .map(|c| {
            let h = system.l.column(c).into_owned();
            h.dot(&chol.solve(&h))
        })
        .fold(0.0, f64::max))
}

/// Semidefinite form of the same condition: each block matrix
/// `[[Σ, h], [hᵀ, ε²/c²]]` must have smallest eigenvalue ≥ −1e-10.
///
/// `sigma_e` holds the variances of the honest unknowns in `[x̃; η]` order.
pub fn sdp_feasibility_check(budget: &PrivacyBudget, system: &AdversarySystem, sigma_e: &[f64]) -> bool {
    let a = system.stacked();
    assert_eq!(a.ncols(), sigma_e.len(), "one variance per unknown");
    let m = a.nrows();
    let scaled = DMatrix::from_fn(m, a.ncols(), |r, c| a[(r, c)] * sigma_e[c]);
    let sigma = &scaled * a.transpose();
    let mut block = DMatrix::zeros(m + 1, m + 1);
    block.view_mut((0, 0), (m, m)).copy_from(&sigma);
    block[(m, m)] = budget.threshold();
    for c in 0..system.l.ncols() {
        let h = system.l.column(c);
        block.view_mut((0, m), (m, 1)).copy_from(&h);
        block.view_mut((m, 0), (1, m)).copy_from(&h.transpose());
        let ev = block.clone().symmetric_eigenvalues();
        if ev.min() < -SDP_TOL {
            return false;
        }
    }
    true
}

/// Variances `[σ_η² …, σ_Δ² …]` matching the unknowns of `system`.
pub fn uniform_variances(system: &AdversarySystem, sigma_ind_sq: f64, sigma_delta_sq: f64) -> Vec<f64> {
    let mut v = vec![sigma_ind_sq; system.l.ncols()];
    v.extend(std::iter::repeat_n(sigma_delta_sq, system.n.ncols()));
    v
}

/// Whether the hypothesis of the static-topology negative result holds:
/// a static schedule with at least two honest parties whose messages are
/// all observed. When it does, the rank precondition cannot be met.
pub fn static_negative_check(schedule: &CommSchedule, view: &AdversaryView) -> bool {
    schedule.is_static() && view.honest().iter().filter(|&&i| view.fully_observed(i)).count() >= 2
}

/// What the strong-connectivity criterion says about an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityVerdict {
    /// Hidden graph strongly connected and the rank bound confirmed.
    Confirmed,
    /// Hidden graph not strongly connected; the criterion makes no claim.
    NoClaim,
}

/// Checks that a strongly connected hidden graph implies rank ≥ `n^H − 1`.
pub fn sufficiency_by_connectivity(graph: &HiddenGraph, edges: &EdgeVectorSet) -> Result<ConnectivityVerdict> {
    if !graph.is_strongly_connected() {
        return Ok(ConnectivityVerdict::NoClaim);
    }
    let required = graph.vertices.len().saturating_sub(1);
    let rank = rank_count(edges, RANK_RTOL);
    if rank < required {
        return Err(Error::RankPrecondition { rank, required });
    }
    Ok(ConnectivityVerdict::Confirmed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{sample_corrupted, ViewMode};
    use crate::protocol::{adapt_all, NoiseSplit};
    use crate::rng;
    use crate::topology::{random_kout_schedule, WeightMatrix};

    fn vector(coords: &[(usize, f64)]) -> EdgeVector {
        EdgeVector { sender: coords[0].0, iteration: 0, coords: coords.to_vec() }
    }

    #[test]
    fn budget_defaults() {
        let b = PrivacyBudget::new(0.1, 1e-5).unwrap();
        assert!(b.c_sq > gaussian_c_sq(1e-5));
        assert!(PrivacyBudget::with_c_sq(0.1, 1e-5, 1.0).is_err());
        assert!(PrivacyBudget::new(1.5, 1e-5).is_err());
    }

    #[test]
    fn pair_edge_vector_with_half_weights() {
        let w = WeightMatrix::from_dense(&DMatrix::from_element(2, 2, 0.5)).unwrap();
        let sched = CommSchedule::new(2, vec![w]).unwrap();
        let hist = OnlineHistory::all_online(2, 1);
        let view = AdversaryView::new(ViewMode::Eavesdrop, vec![vec![false, true], vec![true, true]], vec![false; 2]).unwrap();
        let set = edge_vectors(&sched, &hist, &view, &[1.0, 1.0]).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.vectors[0].coords, vec![(0, -0.5), (1, 0.5)]);
    }

    #[test]
    fn rank_of_small_sets() {
        let empty = EdgeVectorSet { n: 3, ..Default::default() };
        assert_eq!(rank_count(&empty, RANK_RTOL), 0);
        let dup = EdgeVectorSet { n: 3, vectors: vec![vector(&[(0, -0.5), (1, 0.5)]); 2], excluded: vec![] };
        assert_eq!(rank_count(&dup, RANK_RTOL), 1);
        // complete exchange among three parties over two iterations
        let mut vs = Vec::new();
        for _ in 0..2 {
            for i in 0..3 {
                let mut c = vec![(i, -2.0 / 3.0)];
                c.extend((0..3).filter(|&j| j != i).map(|j| (j, 1.0 / 3.0)));
                c.sort_by_key(|e| e.0);
                vs.push(EdgeVector { sender: i, iteration: 0, coords: c });
            }
        }
        let set = EdgeVectorSet { n: 3, vectors: vs, excluded: vec![] };
        assert_eq!(rank_count(&set, RANK_RTOL), 2);
        assert_eq!(svd_rank(&set.to_dense(), RANK_RTOL), 2);
    }

    #[test]
    fn pair_fast_path_agrees_with_svd() {
        for seed in 0..40 {
            let mut r = rng::stream(seed, &[]);
            let n = 12;
            let sched = random_kout_schedule(n, 1, 4, &mut r, false).unwrap();
            let hist = if seed % 2 == 0 {
                OnlineHistory::all_online(n, 4)
            } else {
                crate::topology::sample_dropouts(n, 4, 0.25, &mut r).unwrap()
            };
            let view = AdversaryView::collusion(&sched, sample_corrupted(n, 0.25, &mut r).unwrap()).unwrap();
            let split = NoiseSplit::incremental(4, 1.0).unwrap();
            let w: Vec<f64> = adapt_all(&split, &hist).iter().map(|a| a.injected_weight()).collect();
            let set = edge_vectors(&sched, &hist, &view, &w).unwrap();
            assert_eq!(rank_count(&set, RANK_RTOL), svd_rank(&set.to_dense(), RANK_RTOL), "seed {seed}");
        }
    }
}
