//! Householder QR with column-norm pivoting (Businger–Golub).
//!
//! The pivot order makes |R_jj| non-increasing, so numerical rank is the
//! number of leading diagonal entries above the tolerance and the trailing
//! pivoted columns are the dependent ones.

use nalgebra::{DMatrix, DVector};

pub(crate) struct PivotedQr {
    /// R in the upper triangle; rows below the diagonal are unused.
    r: DMatrix<f64>,
    /// Householder vectors, each acting on rows j.. of column j.
    reflectors: Vec<(Vec<f64>, f64)>,
    /// perm[j] = original column placed at position j.
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    /// Factors `a`. Diagonal entries with |R_jj| <= `tol` count as zero.
    pub(crate) fn new(mut a: DMatrix<f64>, tol: f64) -> Self {
        let (n, k) = a.shape();
        let steps = n.min(k);
        let mut perm: Vec<usize> = (0..k).collect();
        let mut reflectors = Vec::with_capacity(steps);
        let mut rank = steps;

        for j in 0..steps {
            // Remaining column norms, recomputed to avoid downdating drift.
            let (mut best, mut best_norm) = (j, -1.0);
            for c in j..k {
                let norm: f64 = a.view((j, c), (n - j, 1)).norm_squared();
                if norm > best_norm {
                    best = c;
                    best_norm = norm;
                }
            }
            if best != j {
                a.swap_columns(j, best);
                perm.swap(j, best);
            }

            let x: Vec<f64> = (j..n).map(|i| a[(i, j)]).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                reflectors.push((vec![0.0; n - j], 0.0));
                if rank == steps {
                    rank = j;
                }
                continue;
            }
            let alpha = if x[0] >= 0.0 { -norm } else { norm };
            let mut v = x;
            v[0] -= alpha;
            let vtv: f64 = v.iter().map(|e| e * e).sum();
            let beta = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };

            a[(j, j)] = alpha;
            for i in j + 1..n {
                a[(i, j)] = 0.0;
            }
            for c in j + 1..k {
                let dot: f64 = (j..n).map(|i| v[i - j] * a[(i, c)]).sum();
                let s = beta * dot;
                for i in j..n {
                    a[(i, c)] -= s * v[i - j];
                }
            }
            reflectors.push((v, beta));
            if rank == steps && alpha.abs() <= tol {
                rank = j;
            }
        }
        if k > n {
            rank = rank.min(n);
        }
        Self { r: a, reflectors, perm, rank }
    }

    pub(crate) fn rank(&self) -> usize {
        self.rank
    }

    pub(crate) fn ncols(&self) -> usize {
        self.perm.len()
    }

    /// Original indices of the columns judged linearly dependent.
    pub(crate) fn dependent_columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    /// Least-squares solution; requires full column rank.
    pub(crate) fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let k = self.ncols();
        debug_assert_eq!(self.rank, k);
        let mut qtb = b.clone();
        for (j, (v, beta)) in self.reflectors.iter().enumerate() {
            let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * qtb[j + i]).sum();
            let s = beta * dot;
            for (i, vi) in v.iter().enumerate() {
                qtb[j + i] -= s * vi;
            }
        }
        let mut z = DVector::zeros(k);
        for j in (0..k).rev() {
            let mut acc = qtb[j];
            for c in j + 1..k {
                acc -= self.r[(j, c)] * z[c];
            }
            z[j] = acc / self.r[(j, j)];
        }
        let mut out = DVector::zeros(k);
        for (pos, &orig) in self.perm.iter().enumerate() {
            out[orig] = z[pos];
        }
        out
    }

    /// (AᵀA)⁻¹ = P R⁻¹ R⁻ᵀ Pᵀ; requires full column rank.
    pub(crate) fn unscaled_covariance(&self) -> DMatrix<f64> {
        let k = self.ncols();
        let mut rinv = DMatrix::<f64>::zeros(k, k);
        for col in 0..k {
            // Solve R z = e_col by back substitution.
            for j in (0..=col).rev() {
                let mut acc = if j == col { 1.0 } else { 0.0 };
                for c in j + 1..=col {
                    acc -= self.r[(j, c)] * rinv[(c, col)];
                }
                rinv[(j, col)] = acc / self.r[(j, j)];
            }
        }
        let m = &rinv * rinv.transpose();
        let mut out = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                out[(self.perm[a], self.perm[b])] = m[(a, b)];
            }
        }
        out
    }
}
