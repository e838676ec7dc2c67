//! Compressed sparse row matrices and the kernels the solver needs from them.
//!
//! The toolkit works with one sparse type, [`SparseMatrix`], stored in CSR
//! with strictly increasing column indices per row. Transpose products are
//! computed by a column-accumulation pass instead of materializing the
//! transpose. Factorization lives in [`factor`], Matrix Market I/O in
//! [`mtx`].

pub mod factor;
pub mod mtx;

pub use factor::{factorize, FactorKind, Factorization};

use crate::error::{Result, SolverError};

/// Square or rectangular sparse matrix in CSR format.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicate entries
    /// are summed; entries that cancel to exactly zero are still stored.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, _) in &triplets {
            if r >= nrows || c >= ncols {
                return Err(SolverError::InvalidMatrix(format!(
                    "triplet index ({r},{c}) out of bounds for {nrows}x{ncols}"
                )));
            }
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals,
        })
    }

    /// n x n identity.
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    /// Diagonal matrix from the given entries.
    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: d.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Entry accessor; O(log nnz(row)). Intended for tests and I/O, not for
    /// numerical kernels.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        match self.col_idx[lo..hi].binary_search(&col) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates over the stored entries of one row as `(col, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.vals[lo..hi].iter().copied())
    }

    /// All stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out.push((r, c, v));
            }
        }
        out
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "matvec: x length mismatch");
        assert_eq!(y.len(), self.nrows, "matvec: y length mismatch");
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// y = A^T x without forming the transpose (single accumulation pass).
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows, "matvec_transpose: x length mismatch");
        assert_eq!(y.len(), self.ncols, "matvec_transpose: y length mismatch");
        y.fill(0.0);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.vals[k] * xr;
            }
        }
    }

    pub fn matvec_transpose_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.matvec_transpose(x, &mut y);
        y
    }

    /// Explicit transpose (used by the factorization front end, which wants
    /// column access).
    pub fn transpose(&self) -> SparseMatrix {
        let mut row_ptr = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            row_ptr[c + 1] += 1;
        }
        for c in 0..self.ncols {
            row_ptr[c + 1] += row_ptr[c];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        let mut next = row_ptr.clone();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let slot = next[c];
                col_idx[slot] = r;
                vals[slot] = self.vals[k];
                next[c] += 1;
            }
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// C = sa * A + sb * B (same shape required).
    pub fn add_scaled(sa: f64, a: &SparseMatrix, sb: f64, b: &SparseMatrix) -> SparseMatrix {
        assert_eq!(a.nrows, b.nrows, "add_scaled: row count mismatch");
        assert_eq!(a.ncols, b.ncols, "add_scaled: col count mismatch");
        let mut row_ptr = vec![0usize; a.nrows + 1];
        let mut col_idx = Vec::with_capacity(a.nnz() + b.nnz());
        let mut vals = Vec::with_capacity(a.nnz() + b.nnz());
        for r in 0..a.nrows {
            let (mut ia, ea) = (a.row_ptr[r], a.row_ptr[r + 1]);
            let (mut ib, eb) = (b.row_ptr[r], b.row_ptr[r + 1]);
            while ia < ea || ib < eb {
                let ca = if ia < ea { a.col_idx[ia] } else { usize::MAX };
                let cb = if ib < eb { b.col_idx[ib] } else { usize::MAX };
                if ca < cb {
                    col_idx.push(ca);
                    vals.push(sa * a.vals[ia]);
                    ia += 1;
                } else if cb < ca {
                    col_idx.push(cb);
                    vals.push(sb * b.vals[ib]);
                    ib += 1;
                } else {
                    col_idx.push(ca);
                    vals.push(sa * a.vals[ia] + sb * b.vals[ib]);
                    ia += 1;
                    ib += 1;
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        SparseMatrix {
            nrows: a.nrows,
            ncols: a.ncols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// Copy of `self` with every entry whose column fails the predicate
    /// dropped (i.e. `A * Pi` for a 0/1 diagonal projector `Pi`).
    pub fn mask_columns(&self, keep: impl Fn(usize) -> bool) -> SparseMatrix {
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                if keep(c) {
                    col_idx.push(c);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for v in &mut self.vals {
            *v *= s;
        }
    }

    /// Main diagonal as a dense vector (square matrices).
    pub fn diagonal(&self) -> Vec<f64> {
        assert_eq!(self.nrows, self.ncols, "diagonal: matrix must be square");
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Checks value symmetry within `tol * max|a_ij|` (absolute for an
    /// all-zero matrix).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.symmetry_defect(tol).is_none()
    }

    /// First index pair violating symmetry, if any.
    pub fn symmetry_defect(&self, tol: f64) -> Option<(usize, usize)> {
        if self.nrows != self.ncols {
            return Some((self.nrows.min(self.ncols), 0));
        }
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                if (v - self.get(c, r)).abs() > tol * scale {
                    return Some((r, c));
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecops::norm2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Dense oracle: matrix as a Vec of rows.
    fn dense_of(a: &SparseMatrix) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; a.ncols()]; a.nrows()];
        for (r, c, v) in a.triplets() {
            d[r][c] += v;
        }
        d
    }

    fn dense_matvec(d: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        d.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn random_sparse(rng: &mut ChaCha8Rng, nrows: usize, ncols: usize, fill: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for r in 0..nrows {
            for c in 0..ncols {
                if rng.gen::<f64>() < fill {
                    t.push((r, c, rng.gen_range(-2.0..2.0)));
                }
            }
        }
        SparseMatrix::from_triplets(nrows, ncols, t).unwrap()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0), (0, 1, 4.0)],
        )
        .unwrap();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(0, 1), 4.0);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(1, 1), 0.0);
    }

    #[test]
    fn triplets_reject_out_of_bounds() {
        assert!(SparseMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, vec![(0, 5, 1.0)]).is_err());
    }

    #[test]
    fn matvec_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (m, n) = (rng.gen_range(1..20), rng.gen_range(1..20));
            let a = random_sparse(&mut rng, m, n, 0.4);
            let d = dense_of(&a);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = a.matvec_alloc(&x);
            let want = dense_matvec(&d, &x);
            let diff: Vec<f64> = got.iter().zip(&want).map(|(g, w)| g - w).collect();
            assert!(norm2(&diff) <= 1e-14 * (1.0 + norm2(&want)));
        }
    }

    #[test]
    fn matvec_transpose_matches_explicit_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (m, n) = (rng.gen_range(1..25), rng.gen_range(1..25));
            let a = random_sparse(&mut rng, m, n, 0.3);
            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = a.matvec_transpose_alloc(&x);
            let want = a.transpose().matvec_alloc(&x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-14 * (1.0 + w.abs()));
            }
        }
    }

    #[test]
    fn add_scaled_and_mask_columns_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_sparse(&mut rng, 9, 9, 0.35);
        let b = random_sparse(&mut rng, 9, 9, 0.35);
        let c = SparseMatrix::add_scaled(2.0, &a, -0.5, &b);
        for i in 0..9 {
            for j in 0..9 {
                let want = 2.0 * a.get(i, j) - 0.5 * b.get(i, j);
                assert!((c.get(i, j) - want).abs() <= 1e-14 * (1.0 + want.abs()));
            }
        }
        let keep = [true, false, true, true, false, true, false, true, true];
        let m = a.mask_columns(|j| keep[j]);
        for i in 0..9 {
            for j in 0..9 {
                let want = if keep[j] { a.get(i, j) } else { 0.0 };
                assert_eq!(m.get(i, j), want);
            }
        }
    }

    #[test]
    fn identity_and_diag() {
        let i3 = SparseMatrix::identity(3);
        assert_eq!(i3.matvec_alloc(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
        let d = SparseMatrix::from_diag(&[2.0, -1.0]);
        assert_eq!(d.matvec_alloc(&[3.0, 3.0]), vec![6.0, -3.0]);
        assert_eq!(d.diagonal(), vec![2.0, -1.0]);
    }

    #[test]
    fn symmetry_check() {
        let s = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0), (0, 0, 2.0)])
            .unwrap();
        assert!(s.is_symmetric(1e-14));
        let ns =
            SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.5)]).unwrap();
        assert!(!ns.is_symmetric(1e-14));
        assert_eq!(ns.symmetry_defect(1e-14), Some((0, 1)));
    }
}
