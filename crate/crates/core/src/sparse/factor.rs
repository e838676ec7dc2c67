//! Sparse direct factorization.
//!
//! A left-looking column LU with partial pivoting: for each column the
//! nonzero pattern of `L^-1 a_j` is found by a depth-first reach over the
//! graph of the partially built `L`, the numeric values follow in one sparse
//! triangular solve, and the pivot is the remaining entry of largest
//! magnitude. Fill is whatever the elimination produces, so banded
//! finite-difference operators stay banded and the cost is O(n b^2).
//!
//! The same elimination doubles as an LDL^T-style routine for symmetric
//! positive definite input: [`FactorKind::Spd`] disables pivoting (for an SPD
//! matrix the diagonal pivots are positive and no row exchange is needed) and
//! rejects the matrix as soon as a pivot fails to be positive.

use super::SparseMatrix;
use crate::error::{Result, SolverError};

const UNASSIGNED: usize = usize::MAX;

/// Which factorization to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    /// General LU with partial pivoting.
    Lu,
    /// Pivot-free elimination for symmetric positive definite matrices.
    Spd,
}

/// The factors of `P A = L U` with unit-lower `L`.
///
/// For [`FactorKind::Spd`] the permutation is the identity and the pivots
/// `U_jj` are the (positive) LDL^T pivots.
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    kind: FactorKind,
    // L and U in compressed sparse column form. L holds the strictly lower
    // part (unit diagonal implicit) with row indices in pivot order; U holds
    // the strictly upper part, diagonal split into `udiag`.
    l_ptr: Vec<usize>,
    l_rows: Vec<usize>,
    l_vals: Vec<f64>,
    u_ptr: Vec<usize>,
    u_rows: Vec<usize>,
    u_vals: Vec<f64>,
    udiag: Vec<f64>,
    /// pinv[original_row] = pivot position
    pinv: Vec<usize>,
}

/// Factorizes a square sparse matrix. See [`Factorization`].
pub fn factorize(a: &SparseMatrix, kind: FactorKind) -> Result<Factorization> {
    if a.nrows() != a.ncols() {
        return Err(SolverError::DimensionMismatch {
            context: "factorize (matrix must be square)",
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if kind == FactorKind::Spd {
        if let Some((r, c)) = a.symmetry_defect(1e-12) {
            return Err(SolverError::NotSymmetric { row: r, col: c });
        }
    }
    let n = a.nrows();
    // Column access: the transpose's rows are our columns.
    let at = a.transpose();

    // Growing factors; L row indices stay in original numbering until the end.
    let mut lcols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut ucols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut udiag = vec![0.0; n];
    let mut pinv = vec![UNASSIGNED; n];

    // Dense accumulator (kept all-zero between columns), visit stamps, and
    // DFS scratch.
    let mut x = vec![0.0f64; n];
    let mut mark = vec![0usize; n];
    let mut topo: Vec<usize> = Vec::new();
    let mut stack: Vec<(usize, usize)> = Vec::new();

    for j in 0..n {
        let stamp = j + 1;
        topo.clear();

        // Reach: depth-first search from the pattern of column j through the
        // columns of L already built; postorder gives a topological order of
        // the triangular-solve dependencies once reversed.
        for (i0, _) in at.row(j) {
            if mark[i0] == stamp {
                continue;
            }
            mark[i0] = stamp;
            stack.push((i0, 0));
            while let Some(&(node, pos)) = stack.last() {
                let jp = pinv[node];
                let child = if jp == UNASSIGNED {
                    None
                } else {
                    lcols[jp].get(pos).map(|&(r, _)| r)
                };
                match child {
                    Some(r) => {
                        stack.last_mut().unwrap().1 = pos + 1;
                        if mark[r] != stamp {
                            mark[r] = stamp;
                            stack.push((r, 0));
                        }
                    }
                    None => {
                        stack.pop();
                        topo.push(node);
                    }
                }
            }
        }

        // Numeric sparse triangular solve: scatter a_j, then apply the
        // already-finished columns in dependency order.
        for (i, v) in at.row(j) {
            x[i] = v;
        }
        for &i in topo.iter().rev() {
            let jp = pinv[i];
            if jp == UNASSIGNED {
                continue;
            }
            let xi = x[i];
            if xi != 0.0 {
                for &(r, lv) in &lcols[jp] {
                    x[r] -= lv * xi;
                }
            }
        }

        // Pivot selection.
        let pivot_row = match kind {
            FactorKind::Lu => {
                let mut best = UNASSIGNED;
                let mut best_mag = 0.0f64;
                for &i in &topo {
                    if pinv[i] == UNASSIGNED && x[i].abs() > best_mag {
                        best_mag = x[i].abs();
                        best = i;
                    }
                }
                if best == UNASSIGNED {
                    // Clean the accumulator before bailing out.
                    for &i in &topo {
                        x[i] = 0.0;
                    }
                    return Err(SolverError::SingularMatrix { col: j });
                }
                best
            }
            FactorKind::Spd => {
                if x[j] <= 0.0 {
                    let pivot = x[j];
                    for &i in &topo {
                        x[i] = 0.0;
                    }
                    return Err(SolverError::NotPositiveDefinite { col: j, pivot });
                }
                j
            }
        };

        // Harvest U (pivotal rows), the pivot, and L (remaining rows).
        let piv = x[pivot_row];
        udiag[j] = piv;
        let mut ucol = Vec::new();
        let mut lcol = Vec::new();
        for &i in &topo {
            let xi = x[i];
            x[i] = 0.0;
            if xi == 0.0 || i == pivot_row {
                continue;
            }
            match pinv[i] {
                UNASSIGNED => lcol.push((i, xi / piv)),
                p => ucol.push((p, xi)),
            }
        }
        pinv[pivot_row] = j;
        ucols.push(ucol);
        lcols.push(lcol);
    }

    // Renumber L rows into pivot order and flatten both factors.
    let mut l_ptr = Vec::with_capacity(n + 1);
    let mut l_rows = Vec::new();
    let mut l_vals = Vec::new();
    l_ptr.push(0);
    for col in &lcols {
        for &(i, v) in col {
            l_rows.push(pinv[i]);
            l_vals.push(v);
        }
        l_ptr.push(l_rows.len());
    }
    let mut u_ptr = Vec::with_capacity(n + 1);
    let mut u_rows = Vec::new();
    let mut u_vals = Vec::new();
    u_ptr.push(0);
    for col in &ucols {
        for &(r, v) in col {
            u_rows.push(r);
            u_vals.push(v);
        }
        u_ptr.push(u_rows.len());
    }

    Ok(Factorization {
        n,
        kind,
        l_ptr,
        l_rows,
        l_vals,
        u_ptr,
        u_rows,
        u_vals,
        udiag,
        pinv,
    })
}

impl Factorization {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(SolverError::DimensionMismatch {
                context: "Factorization::solve",
                expected: self.n,
                got: b.len(),
            });
        }
        // z = P b
        let mut z = vec![0.0; self.n];
        for i in 0..self.n {
            z[self.pinv[i]] = b[i];
        }
        // L z = P b (unit lower, column sweep)
        for j in 0..self.n {
            let zj = z[j];
            if zj != 0.0 {
                for k in self.l_ptr[j]..self.l_ptr[j + 1] {
                    z[self.l_rows[k]] -= self.l_vals[k] * zj;
                }
            }
        }
        // U x = z (column sweep from the right)
        for j in (0..self.n).rev() {
            let xj = z[j] / self.udiag[j];
            z[j] = xj;
            if xj != 0.0 {
                for k in self.u_ptr[j]..self.u_ptr[j + 1] {
                    z[self.u_rows[k]] -= self.u_vals[k] * xj;
                }
            }
        }
        Ok(z)
    }

    /// Solves `A^T x = b` using the same factors (`A^T = U^T L^T P`).
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(SolverError::DimensionMismatch {
                context: "Factorization::solve_transpose",
                expected: self.n,
                got: b.len(),
            });
        }
        // U^T w = b (lower triangular, dot-product sweep over U's columns)
        let mut w = vec![0.0; self.n];
        for j in 0..self.n {
            let mut acc = b[j];
            for k in self.u_ptr[j]..self.u_ptr[j + 1] {
                acc -= self.u_vals[k] * w[self.u_rows[k]];
            }
            w[j] = acc / self.udiag[j];
        }
        // L^T v = w (upper triangular with unit diagonal)
        for j in (0..self.n).rev() {
            let mut acc = w[j];
            for k in self.l_ptr[j]..self.l_ptr[j + 1] {
                acc -= self.l_vals[k] * w[self.l_rows[k]];
            }
            w[j] = acc;
        }
        // x = P^T v
        let mut xout = vec![0.0; self.n];
        for i in 0..self.n {
            xout[i] = w[self.pinv[i]];
        }
        Ok(xout)
    }

    /// Fill of both factors (strictly triangular entries plus the diagonal).
    pub fn fill_nnz(&self) -> usize {
        self.l_vals.len() + self.u_vals.len() + self.n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecops::norm2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Backward-error certificate used as the solve oracle: a successful
    /// solve must satisfy ||A x - b|| <= tol (||A||_F ||x|| + ||b||).
    fn check_solve(a: &SparseMatrix, b: &[f64], tol: f64) -> Vec<f64> {
        let f = factorize(a, FactorKind::Lu).expect("factorization should succeed");
        let x = f.solve(b).unwrap();
        let r = crate::vecops::sub(&a.matvec_alloc(&x), b);
        let bound = tol * (a.frobenius_norm() * norm2(&x) + norm2(b));
        assert!(
            norm2(&r) <= bound,
            "backward error {} exceeds {}",
            norm2(&r),
            bound
        );
        x
    }

    fn random_diag_dominant(rng: &mut ChaCha8Rng, n: usize, fill: f64) -> SparseMatrix {
        let mut t = Vec::new();
        let mut rowsum = vec![0.0f64; n];
        for r in 0..n {
            for c in 0..n {
                if r != c && rng.gen::<f64>() < fill {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    rowsum[r] += v.abs();
                    t.push((r, c, v));
                }
            }
        }
        for r in 0..n {
            t.push((r, r, rowsum[r] + 1.0 + rng.gen::<f64>()));
        }
        SparseMatrix::from_triplets(n, n, t).unwrap()
    }

    /// 1D Dirichlet Laplacian: tridiagonal (-1, 2, -1), SPD.
    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn solves_random_diagonally_dominant_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..25 {
            let n = rng.gen_range(1..40);
            let a = random_diag_dominant(&mut rng, n, 0.3);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            check_solve(&a, &b, 1e-12);
        }
    }

    #[test]
    fn reproduces_known_solution() {
        let a = laplacian_1d(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec_alloc(&x_true);
        let x = check_solve(&a, &b, 1e-12);
        let d = crate::vecops::sub(&x, &x_true);
        assert!(norm2(&d) <= 1e-10 * norm2(&x_true));
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // Antidiagonal permutation matrix: LU without pivoting would fail on
        // the zero leading pivot.
        let a = SparseMatrix::from_triplets(3, 3, vec![(0, 2, 1.0), (1, 1, 2.0), (2, 0, 3.0)])
            .unwrap();
        let f = factorize(&a, FactorKind::Lu).unwrap();
        let x = f.solve(&[1.0, 2.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 1.0).abs() < 1e-14);
        assert!((x[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn transpose_solve_matches_transpose_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..15 {
            let n = rng.gen_range(2..30);
            let a = random_diag_dominant(&mut rng, n, 0.35);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = factorize(&a, FactorKind::Lu).unwrap();
            let x = f.solve_transpose(&b).unwrap();
            let r = crate::vecops::sub(&a.matvec_transpose_alloc(&x), &b);
            assert!(norm2(&r) <= 1e-12 * (a.frobenius_norm() * norm2(&x) + norm2(&b)));
        }
    }

    #[test]
    fn zero_matrix_is_singular() {
        let a = SparseMatrix::from_triplets(4, 4, vec![]).unwrap();
        match factorize(&a, FactorKind::Lu) {
            Err(SolverError::SingularMatrix { col: 0 }) => {}
            other => panic!("expected SingularMatrix at column 0, got {other:?}"),
        }
    }

    #[test]
    fn rank_deficient_matrix_is_singular() {
        // Second column is a multiple of the first.
        let a = SparseMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 0, 1.0),
                (1, 0, 2.0),
                (0, 1, 2.0),
                (1, 1, 4.0),
                (2, 2, 1.0),
            ],
        )
        .unwrap();
        assert!(matches!(
            factorize(&a, FactorKind::Lu),
            Err(SolverError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn spd_mode_accepts_laplacian_and_solves() {
        let a = laplacian_1d(30);
        let f = factorize(&a, FactorKind::Spd).unwrap();
        let b = vec![1.0; 30];
        let x = f.solve(&b).unwrap();
        let r = crate::vecops::sub(&a.matvec_alloc(&x), &b);
        assert!(norm2(&r) <= 1e-11 * (a.frobenius_norm() * norm2(&x) + norm2(&b)));
    }

    #[test]
    fn spd_mode_rejects_indefinite() {
        let a = SparseMatrix::from_diag(&[1.0, -1.0, 2.0]);
        match factorize(&a, FactorKind::Spd) {
            Err(SolverError::NotPositiveDefinite { col: 1, pivot }) => {
                assert!(pivot < 0.0)
            }
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn spd_mode_rejects_asymmetric() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (0, 1, 1.0), (1, 1, 2.0)])
            .unwrap();
        assert!(matches!(
            factorize(&a, FactorKind::Spd),
            Err(SolverError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn solve_rejects_wrong_length() {
        let a = laplacian_1d(5);
        let f = factorize(&a, FactorKind::Lu).unwrap();
        assert!(matches!(
            f.solve(&[1.0; 4]),
            Err(SolverError::DimensionMismatch { .. })
        ));
    }
}
