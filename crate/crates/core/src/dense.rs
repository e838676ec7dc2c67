//! Conversions from sparse matrices and matrix-free operators to dense
//! `nalgebra` matrices, for the eigenvalue diagnostics in [`crate::spectral`].

use crate::sparse::SparseMatrix;
use nalgebra::DMatrix;

/// Expands a sparse matrix into a dense one.
pub fn to_dense(a: &SparseMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (r, c, v) in a.triplets() {
        d[(r, c)] += v;
    }
    d
}

/// Materializes an `n x n` linear operator column by column by applying it
/// to the unit vectors. `apply` must write `A e_j` into `out`.
pub fn densify_operator<F>(n: usize, mut apply: F) -> DMatrix<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut d = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        col.iter_mut().for_each(|v| *v = 0.0);
        apply(&e, &mut col);
        for i in 0..n {
            d[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    d
}

/// Maximum asymmetry `max |A - A^T|` of a dense matrix.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Replaces `A` by its symmetric part `(A + A^T) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_conversion_matches_triplets() {
        let a = SparseMatrix::from_triplets(3, 4, vec![(0, 1, 2.0), (2, 3, -1.5), (1, 0, 4.0)])
            .unwrap();
        let d = to_dense(&a);
        assert_eq!(d[(0, 1)], 2.0);
        assert_eq!(d[(2, 3)], -1.5);
        assert_eq!(d[(1, 0)], 4.0);
        assert_eq!(d.iter().filter(|&&v| v != 0.0).count(), 3);
    }

    #[test]
    fn densified_matvec_equals_dense_conversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 16;
        let mut t = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if rng.gen::<f64>() < 0.25 {
                    t.push((r, c, rng.gen_range(-2.0..2.0)));
                }
            }
        }
        let a = SparseMatrix::from_triplets(n, n, t).unwrap();
        let d1 = to_dense(&a);
        let d2 = densify_operator(n, |x, out| a.matvec(x, out));
        assert_eq!(d1, d2);
    }

    #[test]
    fn symmetrize_halves_asymmetry() {
        let mut d = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]);
        assert_eq!(asymmetry(&d), 2.0);
        symmetrize(&mut d);
        assert_eq!(asymmetry(&d), 0.0);
        assert_eq!(d[(0, 1)], 3.0);
        assert_eq!(d[(1, 0)], 3.0);
    }
}
