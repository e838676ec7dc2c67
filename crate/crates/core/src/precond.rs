//! Active-set Schur-complement approximation and the four saddle-point
//! preconditioners.
//!
//! The exact (negated) Schur complement of the reduced Newton system is
//! `S = alpha L M^-1 L^T + Mbar Pi_I M^-1 Mbar^T` (up to the `1/alpha`
//! scaling). It is approximated by dropping nothing but re-grouping into a
//! single factorizable product
//!
//! ```text
//!     S_hat = K M^-1 K^T,      K = sqrt(alpha) L + Mbar Pi_I,
//! ```
//!
//! which differs from `S` only by the cross terms
//! `sqrt(alpha) (L M^-1 Pi_I Mbar^T + Mbar Pi_I M^-1 L^T)`. One sparse LU
//! factorization of `K` then gives both `S_hat` and `S_hat^-1`
//! applications. For the augmented formulation the trailing block couples
//! `(p, mu_A)`; its approximation keeps the exact off-diagonal coupling
//! through a unit-triangular factor around `blkdiag(S_hat, P_A M P_A^T)`.
//!
//! Four preconditioners are offered, two per formulation:
//!
//! * block-diagonal ([`PrecondKind::BdfAug`], [`PrecondKind::BdfRed`]) —
//!   symmetric positive definite, paired with MINRES;
//! * indefinite constraint-style ([`PrecondKind::IpfAug`],
//!   [`PrecondKind::IpfRed`]) — exact block-triangular factorizations,
//!   paired with GMRES.
//!
//! Inner solves with `K` use the exact sparse LU from [`crate::sparse`];
//! a multigrid cycle could be slotted in behind [`SchurApprox`] without
//! touching the preconditioner algebra.

use crate::error::Result;
use crate::linsys::Formulation;
use crate::optimality::ActiveSetPartition;
use crate::problems::ProblemInstance;
use crate::sparse::{FactorKind, Factorization, SparseMatrix};
use serde::{Deserialize, Serialize};

/// Factorized approximation of the active-set Schur complement.
pub struct SchurApprox {
    kmat: SparseMatrix,
    factor: Factorization,
    m_diag: Vec<f64>,
    alpha: f64,
    active: Vec<usize>,
    is_active: Vec<bool>,
}

/// Builds the Schur approximation for a given partition: factorizes
/// `K = sqrt(alpha) L + Mbar Pi_I`.
///
/// Fails with [`SolverError::SingularMatrix`] when `K` has no usable pivot,
/// which signals a degenerate `alpha`/partition combination.
pub fn build_schur_approx(
    prob: &ProblemInstance,
    part: &ActiveSetPartition,
    alpha: f64,
) -> Result<SchurApprox> {
    assert_eq!(part.n(), prob.n, "build_schur_approx: partition size");
    let mbar_inactive = prob.mbar.mask_columns(|c| !part.is_active(c));
    let kmat = SparseMatrix::add_scaled(alpha.sqrt(), &prob.l, 1.0, &mbar_inactive);
    let factor = crate::sparse::factorize(&kmat, FactorKind::Lu)?;
    let is_active = (0..prob.n).map(|i| part.is_active(i)).collect();
    Ok(SchurApprox {
        kmat,
        factor,
        m_diag: prob.m_diag().to_vec(),
        alpha,
        active: part.active().to_vec(),
        is_active,
    })
}

impl SchurApprox {
    pub fn n(&self) -> usize {
        self.m_diag.len()
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The factorized matrix `K = sqrt(alpha) L + Mbar Pi_I`.
    pub fn kmat(&self) -> &SparseMatrix {
        &self.kmat
    }

    pub fn factor(&self) -> &Factorization {
        &self.factor
    }

    /// `S_hat v = K M^-1 K^T v`.
    pub fn apply_core(&self, v: &[f64]) -> Vec<f64> {
        let mut w = self.kmat.matvec_transpose_alloc(v);
        for i in 0..self.n() {
            w[i] /= self.m_diag[i];
        }
        self.kmat.matvec_alloc(&w)
    }

    /// `S_hat^-1 v = K^-T M K^-1 v`.
    pub fn apply_core_inv(&self, v: &[f64]) -> Vec<f64> {
        let mut w = self.factor.solve(v).expect("factor/input sizes fixed at build");
        for i in 0..self.n() {
            w[i] *= self.m_diag[i];
        }
        self.factor
            .solve_transpose(&w)
            .expect("factor/input sizes fixed at build")
    }

    /// Exact Schur complement `S v = (alpha L M^-1 L^T + Mbar Pi_I M^-1
    /// Mbar^T) v`, for diagnostics and bound verification.
    pub fn apply_exact_schur(&self, v: &[f64], prob: &ProblemInstance) -> Vec<f64> {
        let mut w = prob.l.matvec_transpose_alloc(v);
        for i in 0..self.n() {
            w[i] /= self.m_diag[i];
        }
        let mut out = prob.l.matvec_alloc(&w);
        for o in out.iter_mut() {
            *o *= self.alpha;
        }
        let mut t = prob.mbar.matvec_transpose_alloc(v);
        for i in 0..self.n() {
            t[i] = if self.is_active[i] {
                0.0
            } else {
                t[i] / self.m_diag[i]
            };
        }
        let mt = prob.mbar.matvec_alloc(&t);
        for i in 0..self.n() {
            out[i] += mt[i];
        }
        out
    }

    /// Trailing-block approximation for the augmented formulation, acting
    /// on `(p, mu_A)` of size `n + |A|`:
    ///
    /// ```text
    ///     S_hat_full = (1/alpha) U blkdiag(S_hat, P_A M P_A^T) U^T,
    ///     U = [I, -Mbar Pi_A M^-1 P_A^T; 0, I].
    /// ```
    pub fn apply_full(&self, v: &[f64], prob: &ProblemInstance) -> Vec<f64> {
        let n = self.n();
        let na = self.active.len();
        assert_eq!(v.len(), n + na, "SchurApprox::apply_full: input length");
        let (v1, v2) = v.split_at(n);
        // t2 = v2 - P_A M^-1 Mbar^T v1
        let t = prob.mbar.matvec_transpose_alloc(v1);
        let t2: Vec<f64> = self
            .active
            .iter()
            .enumerate()
            .map(|(k, &i)| v2[k] - t[i] / self.m_diag[i])
            .collect();
        let d1 = self.apply_core(v1);
        // d2 = (P_A M P_A^T) t2
        let d2: Vec<f64> = self
            .active
            .iter()
            .enumerate()
            .map(|(k, &i)| self.m_diag[i] * t2[k])
            .collect();
        // out1 = d1 - Mbar Pi_A M^-1 P_A^T d2
        let mut s = vec![0.0; n];
        for (k, &i) in self.active.iter().enumerate() {
            s[i] = d2[k] / self.m_diag[i];
        }
        let ms = prob.mbar.matvec_alloc(&s);
        let mut out = Vec::with_capacity(n + na);
        out.extend((0..n).map(|i| (d1[i] - ms[i]) / self.alpha));
        out.extend(d2.iter().map(|d| d / self.alpha));
        out
    }

    /// Inverse of [`SchurApprox::apply_full`].
    pub fn apply_full_inv(&self, v: &[f64], prob: &ProblemInstance) -> Vec<f64> {
        let n = self.n();
        let na = self.active.len();
        assert_eq!(v.len(), n + na, "SchurApprox::apply_full_inv: input length");
        let (v1, v2) = v.split_at(n);
        // w1 = v1 + Mbar Pi_A M^-1 P_A^T v2
        let mut s = vec![0.0; n];
        for (k, &i) in self.active.iter().enumerate() {
            s[i] = v2[k] / self.m_diag[i];
        }
        let ms = prob.mbar.matvec_alloc(&s);
        let w1: Vec<f64> = (0..n).map(|i| v1[i] + ms[i]).collect();
        let z1 = self.apply_core_inv(&w1);
        // out2 = alpha (v2 / m_A + P_A M^-1 Mbar^T z1)
        let t = prob.mbar.matvec_transpose_alloc(&z1);
        let mut out = Vec::with_capacity(n + na);
        out.extend(z1.iter().map(|z| self.alpha * z));
        out.extend(
            self.active
                .iter()
                .enumerate()
                .map(|(k, &i)| self.alpha * (v2[k] / self.m_diag[i] + t[i] / self.m_diag[i])),
        );
        out
    }
}

/// Which preconditioner to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondKind {
    /// Block-diagonal for the augmented system (SPD; MINRES).
    BdfAug,
    /// Indefinite block-triangular for the augmented system (GMRES).
    IpfAug,
    /// Block-diagonal for the reduced system (SPD; MINRES).
    BdfRed,
    /// Indefinite block-triangular for the reduced system (GMRES).
    IpfRed,
}

impl PrecondKind {
    pub fn formulation(self) -> Formulation {
        match self {
            PrecondKind::BdfAug | PrecondKind::IpfAug => Formulation::Augmented,
            PrecondKind::BdfRed | PrecondKind::IpfRed => Formulation::Reduced,
        }
    }

    /// Whether the preconditioner is symmetric positive definite (and thus
    /// admissible for MINRES).
    pub fn is_spd(self) -> bool {
        matches!(self, PrecondKind::BdfAug | PrecondKind::BdfRed)
    }
}

/// An immutable, apply-only preconditioner built for one partition.
pub struct Preconditioner<'a> {
    kind: PrecondKind,
    prob: &'a ProblemInstance,
    schur: SchurApprox,
    dim: usize,
}

impl<'a> Preconditioner<'a> {
    /// Builds the preconditioner; rebuild whenever the partition changes.
    pub fn build(
        kind: PrecondKind,
        prob: &'a ProblemInstance,
        part: &ActiveSetPartition,
    ) -> Result<Self> {
        let schur = build_schur_approx(prob, part, prob.alpha)?;
        let dim = match kind.formulation() {
            Formulation::Augmented => 3 * prob.n + part.n_active(),
            Formulation::Reduced => 2 * prob.n,
            Formulation::Full => unreachable!(),
        };
        Ok(Preconditioner {
            kind,
            prob,
            schur,
            dim,
        })
    }

    pub fn kind(&self) -> PrecondKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn schur(&self) -> &SchurApprox {
        &self.schur
    }

    /// `out = P^-1 v`.
    pub fn apply_inv(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.dim, "Preconditioner::apply_inv: input");
        assert_eq!(out.len(), self.dim, "Preconditioner::apply_inv: output");
        let n = self.prob.n;
        let m = self.prob.m_diag();
        let alpha = self.prob.alpha;
        match self.kind {
            PrecondKind::BdfAug => {
                for i in 0..n {
                    out[i] = v[i] / m[i];
                    out[n + i] = v[n + i] / (alpha * m[i]);
                }
                let tail = self.schur.apply_full_inv(&v[2 * n..], self.prob);
                out[2 * n..].copy_from_slice(&tail);
            }
            PrecondKind::IpfAug => {
                let na = self.schur.n_active();
                // Forward elimination: g = J11^-1 v_leading,
                // w = v_trailing - J12 g.
                let gy: Vec<f64> = (0..n).map(|i| v[i] / m[i]).collect();
                let gu: Vec<f64> = (0..n).map(|i| v[n + i] / (alpha * m[i])).collect();
                let l_gy = self.prob.l.matvec_alloc(&gy);
                let mb_gu = self.prob.mbar.matvec_alloc(&gu);
                let mut w = Vec::with_capacity(n + na);
                w.extend((0..n).map(|i| v[2 * n + i] - l_gy[i] + mb_gu[i]));
                w.extend(
                    self.schur
                        .active
                        .iter()
                        .enumerate()
                        .map(|(k, &i)| v[3 * n + k] - m[i] * gu[i]),
                );
                // Diagonal solve: z = -S_hat_full^-1 w.
                let mut z = self.schur.apply_full_inv(&w, self.prob);
                z.iter_mut().for_each(|t| *t = -*t);
                let (zp, za) = z.split_at(n);
                // Back substitution: out_leading = g - J11^-1 J12^T z.
                let lt_zp = self.prob.l.matvec_transpose_alloc(zp);
                let mbt_zp = self.prob.mbar.matvec_transpose_alloc(zp);
                for i in 0..n {
                    out[i] = gy[i] - lt_zp[i] / m[i];
                    out[n + i] = gu[i] + mbt_zp[i] / (alpha * m[i]);
                }
                for (k, &i) in self.schur.active.iter().enumerate() {
                    out[n + i] -= za[k] / alpha;
                }
                out[2 * n..].copy_from_slice(&z);
            }
            PrecondKind::BdfRed => {
                let zp = self.schur.apply_core_inv(&v[n..]);
                for i in 0..n {
                    out[i] = v[i] / m[i];
                    out[n + i] = alpha * zp[i];
                }
            }
            PrecondKind::IpfRed => {
                // P = [I, 0; L M^-1, I] blkdiag(M, -(1/alpha) S_hat)
                //     [I, M^-1 L^T; 0, I]
                let gy: Vec<f64> = (0..n).map(|i| v[i] / m[i]).collect();
                let l_gy = self.prob.l.matvec_alloc(&gy);
                let w: Vec<f64> = (0..n).map(|i| v[n + i] - l_gy[i]).collect();
                let mut zp = self.schur.apply_core_inv(&w);
                zp.iter_mut().for_each(|t| *t *= -alpha);
                let lt_zp = self.prob.l.matvec_transpose_alloc(&zp);
                for i in 0..n {
                    out[i] = gy[i] - lt_zp[i] / m[i];
                    out[n + i] = zp[i];
                }
            }
        }
    }

    /// `P^-1 v` with a freshly allocated output.
    pub fn apply_inv_alloc(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_inv(v, &mut out);
        out
    }
}
