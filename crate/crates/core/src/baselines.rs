//! Reference estimators: central and local Gaussian mechanisms, hypercube
//! gossip with local noise, and pairwise-mask protocols under dropouts.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::accountant::{gaussian_c_sq, MinNormSolver, PrivacyBudget};
use crate::adversary::NoiseSystem;
use crate::error::{Error, Result};
use crate::topology::{floor_fraction, hypercube_gossip};

/// MSE of the central Gaussian mechanism on the mean of `n` values in
/// `[0, 1]`.
pub fn central_dp_mse(n: usize, epsilon: f64, delta: f64) -> f64 {
    gaussian_c_sq(delta) / (epsilon * epsilon * (n * n) as f64)
}

/// MSE when every party adds its own full Gaussian noise.
pub fn local_dp_mse(n: usize, epsilon: f64, delta: f64) -> f64 {
    n as f64 * central_dp_mse(n, epsilon, delta)
}

/// MSE of incremental averaging with `n^H = n − ⌊ρ n⌋` honest parties and
/// constant `c²`.
pub fn inca_mse(n: usize, rho: f64, epsilon: f64, c_sq: f64) -> f64 {
    let nh = n - floor_fraction(rho, n);
    c_sq / (nh as f64 * n as f64 * epsilon * epsilon)
}

/// Result of the hypercube gossip baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuffliatoResult {
    pub degree: usize,
    pub lambda2: f64,
    pub iterations: usize,
    pub eps_bar: f64,
    pub sigma_sq: f64,
    pub mse: f64,
}

/// Hypercube gossip with local noise: variance
/// `σ²(ε̄) = (ln(1/δ)/(ε − ε̄) + 1) · d T / (2 n ε̄)`, minimized over `ε̄` by
/// golden-section search; the MSE is `σ²/n`.
pub fn muffliato(n: usize, epsilon: f64, delta: f64) -> Result<MuffliatoResult> {
    let (_, lambda2) = hypercube_gossip(n)?;
    let degree = n.trailing_zeros() as usize;
    let iterations = if lambda2 > 0.0 {
        ((n as f64).ln() / lambda2.sqrt()).ceil() as usize
    } else {
        1
    };
    let sigma_sq = |eb: f64| muffliato_variance(n, degree, iterations, epsilon, delta, eb);
    let (eps_bar, best) = golden_section(sigma_sq, 1e-6, epsilon - 1e-6);
    Ok(MuffliatoResult { degree, lambda2, iterations, eps_bar, sigma_sq: best, mse: best / n as f64 })
}

/// `σ²(ε̄)` of the hypercube baseline.
pub fn muffliato_variance(n: usize, degree: usize, iterations: usize, epsilon: f64, delta: f64, eps_bar: f64) -> f64 {
    ((1.0 / delta).ln() / (epsilon - eps_bar) + 1.0) * (degree * iterations) as f64 / (2.0 * n as f64 * eps_bar)
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > 1e-12 * (a.abs() + b.abs()).max(1e-300) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// One-round pairwise masking system: `L = I`, `N` the signed incidence
/// matrix of the honest mask graph.
struct PairwiseSystem {
    honest: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl NoiseSystem for PairwiseSystem {
    fn honest(&self) -> &[usize] {
        &self.honest
    }
    fn iterations(&self) -> usize {
        1
    }
    fn row_count(&self) -> usize {
        self.honest.len()
    }
    fn apply_l(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }
    fn apply_n(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.honest.len()];
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            out[a] += v[e];
            out[b] -= v[e];
        }
        out
    }
    fn apply_n_transpose(&self, lambda: &[f64]) -> Vec<f64> {
        self.edges.iter().map(|&(a, b)| lambda[a] - lambda[b]).collect()
    }
    fn noise_gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.honest.len(), self.honest.len());
        for &(a, b) in &self.edges {
            g[(a, a)] += 1.0;
            g[(b, b)] += 1.0;
            g[(a, b)] -= 1.0;
            g[(b, a)] -= 1.0;
        }
        g
    }
}

/// Undirected mask graph: every party picks `k` distinct random partners.
pub fn mask_graph<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    if n < 2 || k == 0 || k > n - 1 {
        return Err(Error::Config(format!("k = {k} must lie in [1, n-1] with n = {n}")));
    }
    let mut edges = Vec::with_capacity(n * k);
    for i in 0..n {
        for r in index::sample(rng, n - 1, k) {
            let j = if r >= i { r + 1 } else { r };
            edges.push((i.min(j), i.max(j)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

/// Worst-case squared norm of the minimum-norm mask difference over honest
/// targets, on the honest subgraph of `edges`. `None` if that subgraph is
/// disconnected.
pub fn pairwise_strip_norm_sq(n: usize, edges: &[(usize, usize)], corrupted: &[bool]) -> Option<f64> {
    let honest: Vec<usize> = (0..n).filter(|&i| !corrupted[i]).collect();
    let nh = honest.len();
    let mut pos = vec![usize::MAX; n];
    for (p, &i) in honest.iter().enumerate() {
        pos[i] = p;
    }
    let local: Vec<(usize, usize)> = edges
        .iter()
        .filter(|&&(a, b)| !corrupted[a] && !corrupted[b])
        .map(|&(a, b)| (pos[a], pos[b]))
        .collect();
    let system = PairwiseSystem { honest, edges: local };
    let solver = MinNormSolver::new(&system);
    let mut worst: f64 = 0.0;
    for p in 0..nh {
        let mut b = vec![1.0 / nh as f64; nh];
        b[p] -= 1.0;
        let (delta, residual) = solver.solve(&b);
        if residual > 1e-8 {
            return None;
        }
        worst = worst.max(delta.iter().map(|v| v * v).sum());
    }
    Some(worst)
}

/// Pairwise mask variance: `max_i ‖Δ‖² / (ε²/c² − (1/n^H)/σ_η²)`.
pub fn pair_variance(strip_norm_sq: f64, honest: usize, budget: &PrivacyBudget, sigma_ind_sq: f64) -> Result<f64> {
    let room = budget.threshold() - 1.0 / (honest as f64 * sigma_ind_sq);
    if !(room > 0.0) {
        return Err(Error::Infeasible(format!("σ_η² = {sigma_ind_sq} leaves no budget for masks")));
    }
    Ok(strip_norm_sq / room)
}

/// Calibrates GOPA's pairwise variance on one random mask graph.
pub fn gopa_calibrate<R: Rng>(n: usize, k: usize, corrupted: &[bool], budget: &PrivacyBudget, sigma_ind_sq: f64, rng: &mut R) -> Result<f64> {
    let edges = mask_graph(n, k, rng)?;
    let honest = corrupted.iter().filter(|&&c| !c).count();
    if honest == 0 {
        return Err(Error::EmptyHonestSet);
    }
    let s = pairwise_strip_norm_sq(n, &edges, corrupted)
        .ok_or_else(|| Error::RankPrecondition { rank: 0, required: honest - 1 })?;
    pair_variance(s, honest, budget, sigma_ind_sq)
}

/// One simulated GOPA run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GopaRun {
    pub estimate: f64,
    pub truth: f64,
    /// Variance of the masks left uncanceled by rollback dropouts, as it
    /// enters the estimate.
    pub uncanceled_variance: f64,
}

/// Parameters of a GOPA simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GopaParams {
    pub n: usize,
    pub k: usize,
    /// Total dropout fraction.
    pub gamma: f64,
    /// Fraction dropping during rollback.
    pub gamma2: f64,
    pub sigma_pair_sq: f64,
    pub sigma_ind_sq: f64,
}

/// Simulates GOPA: `γ − γ₂` of the parties drop before publishing and
/// their partners roll back the masks shared with them; `γ₂` of the
/// parties drop during rollback, so the masks their surviving partners
/// share with them stay in the sum.
pub fn gopa_simulate<R: Rng>(p: &GopaParams, x: &[f64], rng: &mut R) -> Result<GopaRun> {
    let n = p.n;
    if x.len() != n {
        return Err(Error::Dimension("one input per party".into()));
    }
    if !(0.0..1.0).contains(&p.gamma) || p.gamma2 < 0.0 || p.gamma2 > p.gamma + 1e-12 {
        return Err(Error::Config(format!("need 0 ≤ γ₂ ≤ γ < 1 (γ = {}, γ₂ = {})", p.gamma, p.gamma2)));
    }
    let total = floor_fraction(p.gamma, n);
    let d2 = ((p.gamma2 * n as f64).round() as usize).min(total);
    let d1 = total - d2;
    let edges = mask_graph(n, p.k, rng)?;
    let sd_pair = p.sigma_pair_sq.sqrt();
    let sd_ind = p.sigma_ind_sq.sqrt();
    let masks: Vec<f64> = edges.iter().map(|_| sd_pair * rng.sample::<f64, _>(StandardNormal)).collect();
    let noise: Vec<f64> = (0..n).map(|_| sd_ind * rng.sample::<f64, _>(StandardNormal)).collect();

    let mut round1 = vec![false; n];
    for i in index::sample(rng, n, d1) {
        round1[i] = true;
    }
    let remaining: Vec<usize> = (0..n).filter(|&i| !round1[i]).collect();
    let mut round2 = vec![false; n];
    for r in index::sample(rng, remaining.len(), d2) {
        round2[remaining[r]] = true;
    }

    // round-one dropouts are rolled back; rollback dropouts never publish and
    // leave the masks their surviving partners share with them
    let present = |i: usize| !round1[i] && !round2[i];
    let mut sum: f64 = (0..n).filter(|&i| present(i)).map(|i| x[i] + noise[i]).sum();
    let mut stuck = 0usize;
    for (e, &(a, b)) in edges.iter().enumerate() {
        match (present(a), present(b)) {
            (true, true) => {}
            (true, false) if round2[b] => {
                sum += masks[e];
                stuck += 1;
            }
            (false, true) if round2[a] => {
                sum -= masks[e];
                stuck += 1;
            }
            _ => {}
        }
    }
    let count = (n - total) as f64;
    Ok(GopaRun {
        estimate: sum / count,
        truth: x.iter().sum::<f64>() / n as f64,
        uncanceled_variance: stuck as f64 * p.sigma_pair_sq / (count * count),
    })
}

/// Pairwise variance of correlated-noise averaging over the complete graph,
/// where `‖Δ‖² = (1 − 1/n^H)/n^H`.
pub fn cordpdme_pair_variance(n: usize, rho: f64, budget: &PrivacyBudget, sigma_ind_sq: f64) -> Result<f64> {
    let nh = n - floor_fraction(rho, n);
    if nh == 0 {
        return Err(Error::EmptyHonestSet);
    }
    let s = (1.0 - 1.0 / nh as f64) / nh as f64;
    pair_variance(s, nh, budget, sigma_ind_sq)
}

/// Closed-form MSE of correlated-noise averaging when `D = ⌊γ n⌋` parties
/// drop: each leaves `n − D` masks uncanceled.
pub fn cordpdme_bound(n: usize, gamma: f64, sigma_pair_sq: f64, sigma_ind_sq: f64) -> f64 {
    let d = floor_fraction(gamma, n) as f64;
    let rest = n as f64 - d;
    sigma_ind_sq / rest + d * sigma_pair_sq / rest
}
