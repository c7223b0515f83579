//! Dense numerical kernels: rank-revealing row selection, pivoted Cholesky
//! and SVD-based minimum-norm least squares.

use nalgebra::{DMatrix, DVector};

/// Relative tolerance used when selecting independent rows.
pub const ROW_RTOL: f64 = 1e-9;

/// Returns the indices (ascending) of a maximal set of linearly independent
/// rows of `a`, chosen by column-pivoted QR of `aᵀ`.
///
/// Pivoting stops once the largest remaining residual norm drops below
/// `rtol` times the first pivot norm. Ties go to the lowest row index.
pub fn independent_rows(a: &DMatrix<f64>, rtol: f64) -> Vec<usize> {
    let (m, n) = a.shape();
    let mut res: Vec<Vec<f64>> = (0..m).map(|r| a.row(r).iter().copied().collect()).collect();
    let mut norms: Vec<f64> = res.iter().map(|v| dot(v, v)).collect();
    let mut active: Vec<bool> = vec![true; m];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut chosen = Vec::new();
    let mut first = 0.0f64;
    loop {
        let mut best = None;
        let mut best_norm = -1.0;
        for r in 0..m {
            if active[r] && norms[r] > best_norm {
                best_norm = norms[r];
                best = Some(r);
            }
        }
        let Some(p) = best else { break };
        let mut q = res[p].clone();
        // one extra pass keeps the basis orthogonal to working precision
        for b in &basis {
            let s = dot(b, &q);
            axpy(-s, b, &mut q);
        }
        let nq = dot(&q, &q).sqrt();
        if chosen.is_empty() {
            first = nq;
        }
        if nq == 0.0 || nq <= rtol * first {
            break;
        }
        for x in q.iter_mut() {
            *x /= nq;
        }
        active[p] = false;
        chosen.push(p);
        for r in 0..m {
            if active[r] {
                let s = dot(&q, &res[r]);
                axpy(-s, &q, &mut res[r]);
                norms[r] = dot(&res[r], &res[r]);
            }
        }
        basis.push(q);
        if basis.len() == n {
            break;
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Numerical rank: singular values above `rtol · σ_max`.
pub fn svd_rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let reduced = if a.nrows() > 2 * a.ncols() {
        a.clone().qr().r()
    } else {
        a.clone()
    };
    let sv = reduced.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * max).count()
}

/// Minimum-norm least-squares solution of `a x = b` through the SVD.
/// Returns the solution and the residual 2-norm.
pub fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rtol: f64) -> (DVector<f64>, f64) {
    if a.nrows() == 0 || a.ncols() == 0 {
        return (DVector::zeros(a.ncols()), b.norm());
    }
    let svd = a.clone().svd(true, true);
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (rtol * max).max(f64::MIN_POSITIVE);
    let mut x = svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()));
    let mut r = (a * &x - b).norm();
    for _ in 0..3 {
        let Ok(dx) = svd.solve(&(b - a * &x), eps) else { break };
        let next = &x + dx;
        let rn = (a * &next - b).norm();
        if !(rn < r) {
            break;
        }
        x = next;
        r = rn;
    }
    (x, r)
}

/// Diagonally pivoted Cholesky factorization `P G Pᵀ ≈ L Lᵀ` of a positive
/// semidefinite matrix, truncated at numerical rank.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    m: usize,
    /// Pivot order; the first `rank` entries index the basis rows.
    pub pivots: Vec<usize>,
    pub rank: usize,
    /// Row-major `rank × rank` lower-triangular factor in pivot order.
    factor: Vec<f64>,
}

impl PivotedCholesky {
    /// Factors `g` (symmetric PSD). Stops when the largest remaining
    /// diagonal entry falls to `rtol` times the largest initial diagonal.
    pub fn new(g: &DMatrix<f64>, rtol: f64) -> Self {
        let m = g.nrows();
        let mut diag: Vec<f64> = (0..m).map(|i| g[(i, i)]).collect();
        let max0 = diag.iter().cloned().fold(0.0, f64::max);
        let mut perm: Vec<usize> = (0..m).collect();
        // row-major m × m storage of L in original row indexing
        let mut l = vec![0.0; m * m];
        let mut rank = 0;
        for k in 0..m {
            let (mut best, mut bv) = (k, diag[perm[k]]);
            for (pos, &idx) in perm.iter().enumerate().skip(k + 1) {
                if diag[idx] > bv {
                    bv = diag[idx];
                    best = pos;
                }
            }
            if max0 <= 0.0 || bv <= rtol * max0 {
                break;
            }
            perm.swap(k, best);
            let p = perm[k];
            let lkk = bv.sqrt();
            l[p * m + k] = lkk;
            let lp: Vec<f64> = l[p * m..p * m + k].to_vec();
            for &i in &perm[k + 1..] {
                let li = &l[i * m..i * m + k];
                let v = (g[(i, p)] - dot(li, &lp)) / lkk;
                l[i * m + k] = v;
                diag[i] -= v * v;
            }
            rank += 1;
        }
        let mut factor = vec![0.0; rank * rank];
        for a in 0..rank {
            let row = perm[a];
            factor[a * rank..a * rank + a + 1].copy_from_slice(&l[row * m..row * m + a + 1]);
        }
        PivotedCholesky { m, pivots: perm, rank, factor }
    }

    /// Basis rows selected by the factorization, in pivot order.
    pub fn basis(&self) -> &[usize] {
        &self.pivots[..self.rank]
    }

    /// Solves `G_BB λ_B = b_B` and scatters `λ` back to length `m`
    /// (zero outside the basis).
    pub fn solve_basis(&self, b: &[f64]) -> Vec<f64> {
        let r = self.rank;
        let mut z = vec![0.0; r];
        for a in 0..r {
            let row = &self.factor[a * r..a * r + a];
            let s = b[self.pivots[a]] - dot(row, &z[..a]);
            z[a] = s / self.factor[a * r + a];
        }
        for a in (0..r).rev() {
            z[a] /= self.factor[a * r + a];
            let za = z[a];
            axpy(-za, &self.factor[a * r..a * r + a], &mut z[..a]);
        }
        let mut out = vec![0.0; self.m];
        for a in 0..r {
            out[self.pivots[a]] = z[a];
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_rows_drops_combinations() {
        let a = DMatrix::from_row_slice(4, 3, &[1., 0., 0., 0., 1., 0., 1., 1., 0., 0., 0., 0.]);
        let rows = independent_rows(&a, ROW_RTOL);
        assert_eq!(rows.len(), 2);
        assert!(!rows.contains(&3));
    }

    #[test]
    fn svd_rank_counts_nonzero_singular_values() {
        let a = DMatrix::from_row_slice(3, 3, &[1., 2., 3., 2., 4., 6., 0., 1., 1.]);
        assert_eq!(svd_rank(&a, 1e-9), 2);
        assert_eq!(svd_rank(&DMatrix::zeros(2, 2), 1e-9), 0);
    }

    #[test]
    fn pivoted_cholesky_matches_min_norm_svd() {
        // N has a dependent third row
        let n = DMatrix::from_row_slice(3, 4, &[1., -1., 0., 0., 0., 1., -1., 0., 1., 0., -1., 0.]);
        let g = &n * n.transpose();
        let ch = PivotedCholesky::new(&g, 1e-12);
        assert_eq!(ch.rank, 2);
        let b = DVector::from_vec(vec![0.3, -0.1, 0.2]);
        let lam = DVector::from_vec(ch.solve_basis(b.as_slice()));
        let x = n.transpose() * lam;
        let (x_ref, r) = min_norm_lstsq(&n, &b, 1e-12);
        assert!(r < 1e-12);
        assert!((x - x_ref).norm() < 1e-12);
    }
}
