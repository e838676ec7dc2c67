//! Dense spectral diagnostics for the saddle-point preconditioners.
//!
//! The Schur approximation `S_hat = K M^-1 K^T` with `K = sqrt(alpha) L +
//! Mbar Pi_I` differs from the exact control-reduced Schur complement
//! `S = alpha L M^-1 L^T + Mbar Pi_I M^-1 Mbar^T` by a low-rank cross term,
//! and the quality of the approximation is governed by
//!
//! ```text
//!     zeta = || M^1/2 K^-1 sqrt(alpha) L M^-1/2 ||_2,
//!     xi   = zeta^2 + (1 + zeta)^2.
//! ```
//!
//! The pencil `(S, S_hat)` has its spectrum in `[1/2, xi]` with at least
//! `n - 2|I|` unit eigenvalues; from those two numbers closed-form inclusion
//! intervals follow for every preconditioned operator this crate builds:
//! block-diagonal kinds have an indefinite spectrum split across a negative
//! and a positive interval, block-triangular kinds cluster at one with the
//! rest of the spectrum in `[1/2, xi]`.
//!
//! Everything in this module densifies operators (memory `O(dim^2)`, eigen
//! cost `O(dim^3)`), so all entry points gate on a dimension threshold.
//! No route calls a general nonsymmetric eigensolver: block-diagonal
//! preconditioning reduces to a symmetric problem by congruence, and
//! block-triangular preconditioning splits into an exact unit cluster plus
//! a symmetric-definite trailing pencil. QR iteration on the triangular
//! operators is a trap — their unit eigenvalue is defective with huge
//! multiplicity and unshifted bulges can cycle without converging.

use crate::dense::{asymmetry, densify_operator, symmetrize, to_dense};
use crate::error::{Result, SolverError};
use crate::linsys::SaddleSystem;
use crate::optimality::ActiveSetPartition;
use crate::precond::{build_schur_approx, PrecondKind, Preconditioner, SchurApprox};
use crate::problems::ProblemInstance;
use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::Serialize;

/// Default gate for dense computations.
pub const DENSE_THRESHOLD: usize = 4096;

/// Absolute clustering radius for counting eigenvalues "equal to one".
pub const UNIT_CLUSTER_TOL: f64 = 1e-8;

/// Relative slack applied to interval endpoints before flagging violations.
const ENDPOINT_TOL: f64 = 1e-7;
/// Absolute slack below the exact `1/2` lower bound of the pencil spectrum.
const HALF_TOL: f64 = 1e-9;

/// Computed spectrum of one diagnosed operator, with the predicted
/// inclusion intervals and any violations.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// Which preconditioner was diagnosed; `None` for the bare Schur pencil.
    pub kind: Option<PrecondKind>,
    pub dim: usize,
    pub n_active: usize,
    pub n_inactive: usize,
    pub zeta: f64,
    /// Always `zeta^2 + (1 + zeta)^2`.
    pub xi: f64,
    /// Negative branch of the predicted inclusion region, if the operator
    /// is indefinite.
    pub neg_interval: Option<(f64, f64)>,
    /// Positive branch of the predicted inclusion region.
    pub pos_interval: (f64, f64),
    /// Sorted real parts of the computed spectrum.
    pub computed_eigenvalues: Vec<f64>,
    /// Largest imaginary magnitude seen. Every route in this module
    /// reduces to a symmetric eigenproblem, so this is zero unless a
    /// future route introduces a genuinely nonsymmetric solve.
    pub max_imag_abs: f64,
    /// Eigenvalues outside the predicted region beyond tolerance.
    pub violations: Vec<f64>,
    /// Eigenvalues within [`UNIT_CLUSTER_TOL`] of one.
    pub unit_count: usize,
    /// Lower bound the unit cluster must meet (0 when none is predicted).
    pub unit_floor: usize,
}

impl BoundReport {
    /// True when the spectrum respects both the inclusion region and the
    /// unit-cluster floor.
    pub fn ok(&self) -> bool {
        self.violations.is_empty() && self.unit_count >= self.unit_floor
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.computed_eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.computed_eigenvalues.last().copied().unwrap_or(f64::NAN)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Two-column CSV of the sorted spectrum, for plotting.
    pub fn eigenvalues_csv(&self) -> String {
        let mut s = String::from("index,eigenvalue\n");
        for (i, ev) in self.computed_eigenvalues.iter().enumerate() {
            s.push_str(&format!("{i},{ev:e}\n"));
        }
        s
    }
}

fn gate(dim: usize, threshold: usize) -> Result<()> {
    if dim > threshold {
        return Err(SolverError::DenseThresholdExceeded {
            n: dim,
            threshold,
        });
    }
    Ok(())
}

/// `xi` from `zeta`; kept as a function so reports and tests share one
/// definition.
pub fn xi_from_zeta(zeta: f64) -> f64 {
    zeta * zeta + (1.0 + zeta) * (1.0 + zeta)
}

/// The approximation-quality norm `zeta` for a given partition, computed
/// densely via singular values.
pub fn compute_zeta(prob: &ProblemInstance, part: &ActiveSetPartition, alpha: f64) -> Result<f64> {
    compute_zeta_bounded(prob, part, alpha, DENSE_THRESHOLD)
}

pub fn compute_zeta_bounded(
    prob: &ProblemInstance,
    part: &ActiveSetPartition,
    alpha: f64,
    threshold: usize,
) -> Result<f64> {
    gate(prob.n, threshold)?;
    let sa = build_schur_approx(prob, part, alpha)?;
    Ok(zeta_from(&sa, prob))
}

/// Shared worker: builds `M^1/2 K^-1 sqrt(alpha) L M^-1/2` one column at a
/// time through the sparse factorization of `K`, then takes its largest
/// singular value.
fn zeta_from(sa: &SchurApprox, prob: &ProblemInstance) -> f64 {
    let n = prob.n;
    let m = prob.m_diag();
    let sqa = sa.alpha().sqrt();
    let l_dense = to_dense(&prob.l);
    let mut x = DMatrix::<f64>::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        for i in 0..n {
            col[i] = sqa * l_dense[(i, j)];
        }
        let w = sa
            .factor()
            .solve(&col)
            .expect("factor and column sizes fixed at build");
        let cscale = 1.0 / m[j].sqrt();
        for i in 0..n {
            x[(i, j)] = m[i].sqrt() * w[i] * cscale;
        }
    }
    x.singular_values().iter().fold(0.0f64, |a, &s| a.max(s))
}

/// Generalized spectrum of the pencil `(S, S_hat)` together with the
/// predicted inclusion `[1/2, xi]` and the `n - 2|I|` unit-cluster floor.
pub fn eig_pencil_s(
    prob: &ProblemInstance,
    part: &ActiveSetPartition,
    alpha: f64,
) -> Result<BoundReport> {
    eig_pencil_s_bounded(prob, part, alpha, DENSE_THRESHOLD)
}

pub fn eig_pencil_s_bounded(
    prob: &ProblemInstance,
    part: &ActiveSetPartition,
    alpha: f64,
    threshold: usize,
) -> Result<BoundReport> {
    gate(prob.n, threshold)?;
    let sa = build_schur_approx(prob, part, alpha)?;
    let zeta = zeta_from(&sa, prob);
    let xi = xi_from_zeta(zeta);
    let n = prob.n;
    let s_exact = densify_operator(n, |v, out| out.copy_from_slice(&sa.apply_exact_schur(v, prob)));
    let s_hat = densify_operator(n, |v, out| out.copy_from_slice(&sa.apply_core(v)));
    let eigs = spd_pencil_eigs(&s_exact, &s_hat)?;
    Ok(build_report(
        None,
        n,
        part,
        zeta,
        xi,
        None,
        (0.5, xi),
        eigs,
        0.0,
        n.saturating_sub(2 * part.n_inactive()),
    ))
}

/// Spectrum of the preconditioned operator `P^-1 J` with the closed-form
/// inclusion region for the preconditioner's kind.
///
/// The system and preconditioner must have been built for the same
/// formulation and partition.
pub fn eig_preconditioned(sys: &SaddleSystem<'_>, pre: &Preconditioner<'_>) -> Result<BoundReport> {
    eig_preconditioned_bounded(sys, pre, DENSE_THRESHOLD)
}

pub fn eig_preconditioned_bounded(
    sys: &SaddleSystem<'_>,
    pre: &Preconditioner<'_>,
    threshold: usize,
) -> Result<BoundReport> {
    let dim = sys.dim();
    if dim != pre.dim() {
        return Err(SolverError::DimensionMismatch {
            context: "preconditioned spectrum: system vs preconditioner",
            expected: dim,
            got: pre.dim(),
        });
    }
    gate(dim, threshold)?;
    let prob = sys.prob();
    let part = sys.partition();
    let zeta = zeta_from(pre.schur(), prob);
    let xi = xi_from_zeta(zeta);

    let j = densify_operator(dim, |v, out| sys.apply(v, out));
    let w = densify_operator(dim, |v, out| pre.apply_inv(v, out));
    let (eigs, max_imag) = if pre.kind().is_spd() {
        // Symmetric route: the assembled saddle operator is symmetric up
        // to matvec rounding, and with `P^-1 = C C^T` the operator
        // `P^-1 J` is similar to the symmetric `C^T J C`.
        let asym = asymmetry(&j);
        if asym > 1e-10 * (1.0 + j.amax()) {
            return Err(SolverError::EigenFailure(format!(
                "block-diagonal diagnostics need a symmetric operator, asymmetry {asym:.3e}"
            )));
        }
        let mut wsym = w;
        symmetrize(&mut wsym);
        let chol = Cholesky::new(wsym).ok_or_else(|| {
            SolverError::EigenFailure(
                "densified preconditioner inverse is not positive definite".to_string(),
            )
        })?;
        let c = chol.l();
        let mut b = c.tr_mul(&j) * &c;
        symmetrize(&mut b);
        let mut eigs: Vec<f64> = SymmetricEigen::new(b).eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).expect("symmetric eigenvalues are finite"));
        (eigs, 0.0)
    } else {
        // Triangular route: the factorized preconditioner satisfies
        // `P^-1 J = U^-1 blkdiag(I, S_hat^-1 S_J) U` with a unit
        // upper-triangular `U`, so `P^-1 J` is block upper-triangular with
        // an identity leading block and the spectrum splits into `{1}`
        // (leading dimension) plus the generalized spectrum of the SPD
        // trailing pencil. A general nonsymmetric eigensolver is both
        // unnecessary and unreliable here: QR iteration can stall on the
        // huge defective unit cluster.
        let n_tr = match pre.kind() {
            PrecondKind::IpfRed => prob.n,
            _ => prob.n + part.n_active(),
        };
        let lead = dim - n_tr;
        let pj = &w * &j;
        // Certify the structure before relying on it: the leading columns
        // must be exactly the identity embedding.
        let mut deviation = 0.0f64;
        for r in 0..dim {
            for c in 0..lead {
                let target = if r == c { 1.0 } else { 0.0 };
                deviation = deviation.max((pj[(r, c)] - target).abs());
            }
        }
        if deviation > 1e-8 * (1.0 + pj.amax()) {
            return Err(SolverError::EigenFailure(format!(
                "triangular preconditioning lost its block structure, deviation {deviation:.3e}"
            )));
        }
        let t = pj.view((lead, lead), (n_tr, n_tr)).into_owned();
        let schur = pre.schur();
        let s_hat_tr = if pre.kind() == PrecondKind::IpfRed {
            let inv_alpha = 1.0 / schur.alpha();
            densify_operator(n_tr, |vv, out| {
                for (o, s) in out.iter_mut().zip(schur.apply_core(vv)) {
                    *o = inv_alpha * s;
                }
            })
        } else {
            densify_operator(n_tr, |vv, out| {
                out.copy_from_slice(&schur.apply_full(vv, prob));
            })
        };
        let mut s_tr = &s_hat_tr * &t;
        symmetrize(&mut s_tr);
        let tail = spd_pencil_eigs(&s_tr, &s_hat_tr)?;
        let mut eigs = vec![1.0; lead];
        eigs.extend(tail);
        eigs.sort_by(|a, b| a.partial_cmp(b).expect("pencil eigenvalues are finite"));
        (eigs, 0.0)
    };

    let sqrt3 = 3f64.sqrt();
    let (neg, pos, floor) = match pre.kind() {
        PrecondKind::BdfAug => (
            Some((
                0.5 * (1.0 - (1.0 + 4.0 * xi).sqrt()),
                0.5 * (1.0 - sqrt3),
            )),
            (1.0, 0.5 * (1.0 + (1.0 + 4.0 * xi).sqrt())),
            0,
        ),
        PrecondKind::BdfRed => (
            Some((
                0.5 * (1.0 - xi - ((xi + 1.0) * (xi + 1.0) + 4.0 * zeta * zeta).sqrt()),
                0.5 * (1.0 - sqrt3),
            )),
            (1.0, 0.5 * (1.0 + (1.0 + 4.0 * zeta * zeta).sqrt())),
            0,
        ),
        PrecondKind::IpfAug | PrecondKind::IpfRed => (
            None,
            (0.5, xi),
            dim.saturating_sub(2 * part.n_inactive()),
        ),
    };
    Ok(build_report(
        Some(pre.kind()),
        dim,
        part,
        zeta,
        xi,
        neg,
        pos,
        eigs,
        max_imag,
        floor,
    ))
}

/// Generalized symmetric eigenvalues of `(A, B)` with `B` positive
/// definite, via `B = C C^T` and the symmetric `C^-1 A C^-T`.
fn spd_pencil_eigs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut bsym = b.clone();
    symmetrize(&mut bsym);
    let chol = Cholesky::new(bsym).ok_or_else(|| {
        SolverError::EigenFailure("pencil denominator is not positive definite".to_string())
    })?;
    let l = chol.l();
    let t = l
        .solve_lower_triangular(a)
        .ok_or_else(|| SolverError::EigenFailure("singular Cholesky factor".to_string()))?;
    let mut c = l
        .solve_lower_triangular(&t.transpose())
        .ok_or_else(|| SolverError::EigenFailure("singular Cholesky factor".to_string()))?;
    symmetrize(&mut c);
    let mut eigs: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).expect("symmetric eigenvalues are finite"));
    Ok(eigs)
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    kind: Option<PrecondKind>,
    dim: usize,
    part: &ActiveSetPartition,
    zeta: f64,
    xi: f64,
    neg_interval: Option<(f64, f64)>,
    pos_interval: (f64, f64),
    eigs: Vec<f64>,
    max_imag_abs: f64,
    unit_floor: usize,
) -> BoundReport {
    // The positive lower endpoint 1/2 is exact (it comes from a sum of
    // squares), so it only gets absolute slack; every other endpoint
    // carries relative slack for the norm computations behind it.
    let stretch_lo = |lo: f64| {
        if lo == 0.5 {
            0.5 - HALF_TOL
        } else {
            lo - ENDPOINT_TOL * (1.0 + lo.abs())
        }
    };
    let stretch_hi = |hi: f64| hi + ENDPOINT_TOL * (1.0 + hi.abs());
    let inside = |ev: f64| {
        let in_pos = ev >= stretch_lo(pos_interval.0) && ev <= stretch_hi(pos_interval.1);
        let in_neg = neg_interval
            .map(|(lo, hi)| ev >= stretch_lo(lo) && ev <= stretch_hi(hi))
            .unwrap_or(false);
        in_pos || in_neg || (ev - 1.0).abs() <= UNIT_CLUSTER_TOL
    };
    let violations: Vec<f64> = eigs.iter().copied().filter(|&ev| !inside(ev)).collect();
    let unit_count = eigs
        .iter()
        .filter(|&&ev| (ev - 1.0).abs() <= UNIT_CLUSTER_TOL)
        .count();
    BoundReport {
        kind,
        dim,
        n_active: part.n_active(),
        n_inactive: part.n_inactive(),
        zeta,
        xi,
        neg_interval,
        pos_interval,
        computed_eigenvalues: eigs,
        max_imag_abs,
        violations,
        unit_count,
        unit_floor,
    }
}
