//! Newton saddle-point systems: assembly, implicit application, and step
//! recovery.
//!
//! Each semismooth Newton iteration linearizes the optimality residual into
//! a block system `J dx = -Theta(x)`. Three equivalent shapes are offered:
//!
//! * **full** - the nonsymmetric 4n x 4n generalized Jacobian, kept as the
//!   reference formulation for oracles and diagnostics;
//! * **augmented** - a symmetric system of size `3n + |A|` obtained by
//!   eliminating the inactive multiplier updates (which the full system
//!   pins to `mu + dmu = +/-beta`);
//! * **reduced** - a symmetric 2n system in `(dy, dp)` only, with the
//!   control and multiplier updates recovered afterwards.
//!
//! All operators here are apply-only: the reduced `(2,2)` block
//! `-(1/alpha) Mbar Pi_I M^-1 Mbar^T` is never formed. Factorizations
//! happen only inside the preconditioners.

use crate::dense::densify_operator;
use crate::error::{Result, SolverError};
use crate::optimality::{self, ActiveSetPartition, IterateState, SetLabel};
use crate::problems::ProblemInstance;
use crate::sparse::mtx;
use crate::vecops;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Which block shape a [`SaddleSystem`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Full,
    Augmented,
    Reduced,
}

/// One Newton step split into its four components.
#[derive(Debug, Clone, PartialEq)]
pub struct StepVector {
    pub dy: Vec<f64>,
    pub du: Vec<f64>,
    pub dp: Vec<f64>,
    pub dmu: Vec<f64>,
}

/// An assembled Newton system: implicit operator, right-hand side, and the
/// captured quantities needed to recover eliminated variables.
///
/// Immutable after assembly; [`SaddleSystem::apply`] is reentrant.
pub struct SaddleSystem<'a> {
    formulation: Formulation,
    prob: &'a ProblemInstance,
    partition: ActiveSetPartition,
    rhs: Vec<f64>,
    /// `Theta^u + Gamma^u` where `Gamma^u = M Pi_I (mu_next - mu)`.
    t_u: Vec<f64>,
    /// Complementarity values `F(u, mu)` at the iterate.
    f_compl: Vec<f64>,
    /// `mu_next - mu` on the inactive set (zero on the active set), with
    /// `mu_next = +beta` on `I+` and `-beta` on `I-`.
    dmu_inactive: Vec<f64>,
    dim: usize,
}

impl<'a> SaddleSystem<'a> {
    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    /// Number of unknowns: `4n`, `3n + |A|`, or `2n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub(crate) fn prob(&self) -> &ProblemInstance {
        self.prob
    }

    pub fn partition(&self) -> &ActiveSetPartition {
        &self.partition
    }

    pub fn n(&self) -> usize {
        self.prob.n
    }

    /// Applies the operator: `out = J v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.dim, "SaddleSystem::apply: input length");
        assert_eq!(out.len(), self.dim, "SaddleSystem::apply: output length");
        let n = self.prob.n;
        let m = self.prob.m_diag();
        let (alpha, c) = (self.prob.alpha, self.prob.c);
        match self.formulation {
            Formulation::Full => {
                let (dy, du, dp, dmu) = (&v[..n], &v[n..2 * n], &v[2 * n..3 * n], &v[3 * n..]);
                // Row y: M dy + L^T dp
                let lt_dp = self.prob.l.matvec_transpose_alloc(dp);
                // Row u: alpha M du - Mbar^T dp + M dmu
                let mbt_dp = self.prob.mbar.matvec_transpose_alloc(dp);
                // Row p: L dy - Mbar du
                let l_dy = self.prob.l.matvec_alloc(dy);
                let mb_du = self.prob.mbar.matvec_alloc(du);
                for i in 0..n {
                    out[i] = m[i] * dy[i] + lt_dp[i];
                    out[n + i] = alpha * m[i] * du[i] - mbt_dp[i] + m[i] * dmu[i];
                    out[2 * n + i] = l_dy[i] - mb_du[i];
                    // Row mu: Pi_A M du - c Pi_I M dmu
                    out[3 * n + i] = if self.partition.is_active(i) {
                        m[i] * du[i]
                    } else {
                        -c * m[i] * dmu[i]
                    };
                }
            }
            Formulation::Augmented => {
                let na = self.partition.n_active();
                let (dy, du, dp, dmu_a) =
                    (&v[..n], &v[n..2 * n], &v[2 * n..3 * n], &v[3 * n..3 * n + na]);
                let lt_dp = self.prob.l.matvec_transpose_alloc(dp);
                let mbt_dp = self.prob.mbar.matvec_transpose_alloc(dp);
                let l_dy = self.prob.l.matvec_alloc(dy);
                let mb_du = self.prob.mbar.matvec_alloc(du);
                for i in 0..n {
                    out[i] = m[i] * dy[i] + lt_dp[i];
                    out[n + i] = alpha * m[i] * du[i] - mbt_dp[i];
                    out[2 * n + i] = l_dy[i] - mb_du[i];
                }
                // Coupling with the active multiplier updates: M P_A^T dmu_A
                // in the control row and P_A M du in the trailing rows.
                for (k, &i) in self.partition.active().iter().enumerate() {
                    out[n + i] += m[i] * dmu_a[k];
                    out[3 * n + k] = m[i] * du[i];
                }
            }
            Formulation::Reduced => {
                let (dy, dp) = (&v[..n], &v[n..]);
                let lt_dp = self.prob.l.matvec_transpose_alloc(dp);
                let l_dy = self.prob.l.matvec_alloc(dy);
                // (2,2) block, applied without forming it:
                // -(1/alpha) Mbar Pi_I M^-1 Mbar^T dp
                let mut w = self.prob.mbar.matvec_transpose_alloc(dp);
                for i in 0..n {
                    w[i] = if self.partition.is_active(i) {
                        0.0
                    } else {
                        w[i] / m[i]
                    };
                }
                let mb_w = self.prob.mbar.matvec_alloc(&w);
                for i in 0..n {
                    out[i] = m[i] * dy[i] + lt_dp[i];
                    out[n + i] = l_dy[i] - mb_w[i] / alpha;
                }
            }
        }
    }

    /// `J v` with a freshly allocated output vector.
    pub fn apply_alloc(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply(v, &mut out);
        out
    }

    /// `|| rhs - J v ||` for a candidate solution `v`.
    pub fn residual_norm(&self, v: &[f64]) -> f64 {
        let jv = self.apply_alloc(v);
        let mut s = 0.0;
        for i in 0..self.dim {
            let r = self.rhs[i] - jv[i];
            s += r * r;
        }
        s.sqrt()
    }

    /// Expands a solver solution of this system into the four Newton step
    /// components, reconstructing every eliminated variable:
    ///
    /// * full: plain unpacking;
    /// * augmented: scatter `dmu_A` and set `dmu` on the inactive set so
    ///   that `mu + dmu = +/-beta`;
    /// * reduced: additionally recover `dmu_A` by diagonal inversion of the
    ///   active multiplier rows and `du` from the control row.
    pub fn recover_step(&self, solution: &[f64]) -> StepVector {
        assert_eq!(solution.len(), self.dim, "recover_step: solution length");
        let n = self.prob.n;
        let m = self.prob.m_diag();
        match self.formulation {
            Formulation::Full => StepVector {
                dy: solution[..n].to_vec(),
                du: solution[n..2 * n].to_vec(),
                dp: solution[2 * n..3 * n].to_vec(),
                dmu: solution[3 * n..].to_vec(),
            },
            Formulation::Augmented => {
                let mut dmu = self.dmu_inactive.clone();
                for (k, &i) in self.partition.active().iter().enumerate() {
                    dmu[i] = solution[3 * n + k];
                }
                StepVector {
                    dy: solution[..n].to_vec(),
                    du: solution[n..2 * n].to_vec(),
                    dp: solution[2 * n..3 * n].to_vec(),
                    dmu,
                }
            }
            Formulation::Reduced => {
                let dy = solution[..n].to_vec();
                let dp = solution[n..].to_vec();
                let w = self.prob.mbar.matvec_transpose_alloc(&dp);
                // (dmu)_A from the active multiplier rows; dmu on I per the
                // fixed-multiplier rule.
                let mut dmu = self.dmu_inactive.clone();
                for &i in self.partition.active() {
                    dmu[i] = (w[i] - self.t_u[i]) / m[i] + self.prob.alpha * self.f_compl[i];
                }
                // du from the control row:
                // du = (1/alpha) (M^-1 (Mbar^T dp - t_u) - P_A^T dmu_A)
                let du: Vec<f64> = (0..n)
                    .map(|i| {
                        let pin = if self.partition.is_active(i) {
                            dmu[i]
                        } else {
                            0.0
                        };
                        ((w[i] - self.t_u[i]) / m[i] - pin) / self.prob.alpha
                    })
                    .collect();
                StepVector { dy, du, dp, dmu }
            }
        }
    }

    /// Writes the densified operator and right-hand side in Matrix Market
    /// format (`operator.mtx`, `rhs.mtx`) for external verification.
    ///
    /// Refused above `dim` = 512 to keep the densification cheap.
    pub fn dump_mtx(&self, dir: &Path) -> Result<()> {
        const LIMIT: usize = 512;
        if self.dim > LIMIT {
            return Err(SolverError::DenseThresholdExceeded {
                n: self.dim,
                threshold: LIMIT,
            });
        }
        let d = densify_operator(self.dim, |v, out| self.apply(v, out));
        let mut triplets = Vec::new();
        for i in 0..self.dim {
            for j in 0..self.dim {
                if d[(i, j)] != 0.0 {
                    triplets.push((i, j, d[(i, j)]));
                }
            }
        }
        let a = crate::sparse::SparseMatrix::from_triplets(self.dim, self.dim, triplets)?;
        mtx::write_matrix(&dir.join("operator.mtx"), &a)?;
        mtx::write_vector(&dir.join("rhs.mtx"), &self.rhs)?;
        Ok(())
    }
}

/// Shared assembly: residual blocks at `(x, part)` plus the fixed-multiplier
/// quantities used by the symmetrized systems.
struct AssemblyParts {
    theta: optimality::ResidualBlocks,
    f_compl: Vec<f64>,
    dmu_inactive: Vec<f64>,
    t_u: Vec<f64>,
}

fn assembly_parts(
    x: &IterateState,
    part: &ActiveSetPartition,
    prob: &ProblemInstance,
) -> AssemblyParts {
    let theta = optimality::compute_residual(x.y(), x.u(), x.p(), x.mu(), part, prob);
    let f_compl = optimality::complementarity(x.u(), x.mu(), part, prob);
    let m = prob.m_diag();
    let n = prob.n;
    let mut dmu_inactive = vec![0.0; n];
    for i in 0..n {
        dmu_inactive[i] = match part.label(i) {
            SetLabel::Iplus => prob.beta - x.mu()[i],
            SetLabel::Iminus => -prob.beta - x.mu()[i],
            _ => 0.0,
        };
    }
    let t_u: Vec<f64> = (0..n)
        .map(|i| theta.theta_u[i] + m[i] * dmu_inactive[i])
        .collect();
    AssemblyParts {
        theta,
        f_compl,
        dmu_inactive,
        t_u,
    }
}

fn check_sizes(x: &IterateState, part: &ActiveSetPartition, prob: &ProblemInstance) {
    assert_eq!(x.n(), prob.n, "assemble: iterate size mismatch");
    assert_eq!(part.n(), prob.n, "assemble: partition size mismatch");
}

/// Assembles the nonsymmetric 4n x 4n generalized Jacobian system with
/// right-hand side `-Theta(x)`.
pub fn assemble_full<'a>(
    x: &IterateState,
    part: &ActiveSetPartition,
    prob: &'a ProblemInstance,
) -> SaddleSystem<'a> {
    check_sizes(x, part, prob);
    let parts = assembly_parts(x, part, prob);
    let mut rhs = parts.theta.stacked();
    rhs.iter_mut().for_each(|v| *v = -*v);
    SaddleSystem {
        formulation: Formulation::Full,
        prob,
        partition: part.clone(),
        rhs,
        t_u: parts.t_u,
        f_compl: parts.f_compl,
        dmu_inactive: parts.dmu_inactive,
        dim: 4 * prob.n,
    }
}

/// Assembles the symmetric `3n + |A|` system obtained by eliminating the
/// inactive multiplier updates at their fixed values.
pub fn assemble_augmented<'a>(
    x: &IterateState,
    part: &ActiveSetPartition,
    prob: &'a ProblemInstance,
) -> SaddleSystem<'a> {
    check_sizes(x, part, prob);
    let parts = assembly_parts(x, part, prob);
    let n = prob.n;
    let na = part.n_active();
    let mut rhs = Vec::with_capacity(3 * n + na);
    rhs.extend(parts.theta.theta_y.iter().map(|v| -v));
    rhs.extend(parts.t_u.iter().map(|v| -v));
    rhs.extend(parts.theta.theta_p.iter().map(|v| -v));
    rhs.extend(part.active().iter().map(|&i| -parts.theta.theta_mu[i]));
    SaddleSystem {
        formulation: Formulation::Augmented,
        prob,
        partition: part.clone(),
        rhs,
        t_u: parts.t_u,
        f_compl: parts.f_compl,
        dmu_inactive: parts.dmu_inactive,
        dim: 3 * n + na,
    }
}

/// Assembles the 2n system in `(dy, dp)` with the `(2,2)` block
/// `-(1/alpha) Mbar Pi_I M^-1 Mbar^T` applied implicitly.
pub fn assemble_reduced<'a>(
    x: &IterateState,
    part: &ActiveSetPartition,
    prob: &'a ProblemInstance,
) -> SaddleSystem<'a> {
    check_sizes(x, part, prob);
    let parts = assembly_parts(x, part, prob);
    let n = prob.n;
    let m = prob.m_diag();
    // rhs_p = -Theta^p - Mbar (Pi_A F + (1/alpha) Pi_I M^-1 t_u)
    let s: Vec<f64> = (0..n)
        .map(|i| {
            if part.is_active(i) {
                parts.f_compl[i]
            } else {
                parts.t_u[i] / (prob.alpha * m[i])
            }
        })
        .collect();
    let mb_s = prob.mbar.matvec_alloc(&s);
    let mut rhs = Vec::with_capacity(2 * n);
    rhs.extend(parts.theta.theta_y.iter().map(|v| -v));
    rhs.extend((0..n).map(|i| -parts.theta.theta_p[i] - mb_s[i]));
    SaddleSystem {
        formulation: Formulation::Reduced,
        prob,
        partition: part.clone(),
        rhs,
        t_u: parts.t_u,
        f_compl: parts.f_compl,
        dmu_inactive: parts.dmu_inactive,
        dim: 2 * n,
    }
}

/// Lifts an approximate reduced solution into the full system and returns
/// `(||r_reduced||, ||r_lifted||)`.
///
/// The recovery formulas satisfy the control and multiplier rows exactly,
/// so the two norms agree up to roundoff for *any* approximate solution —
/// stopping the inner Krylov solver on the reduced residual is equivalent
/// to stopping on the full Newton residual.
pub fn residual_equivalence_check(
    full_sys: &SaddleSystem,
    red_sys: &SaddleSystem,
    approx_solution: &[f64],
) -> (f64, f64) {
    assert_eq!(full_sys.formulation, Formulation::Full);
    assert_eq!(red_sys.formulation, Formulation::Reduced);
    let r_red = red_sys.residual_norm(approx_solution);
    let step = red_sys.recover_step(approx_solution);
    let mut lifted = Vec::with_capacity(4 * full_sys.n());
    lifted.extend_from_slice(&step.dy);
    lifted.extend_from_slice(&step.du);
    lifted.extend_from_slice(&step.dp);
    lifted.extend_from_slice(&step.dmu);
    let r_lift = full_sys.residual_norm(&lifted);
    (r_red, r_lift)
}

/// `||v||_2` of a step, used for step-size logging.
pub fn step_norm(s: &StepVector) -> f64 {
    (vecops::dot(&s.dy, &s.dy)
        + vecops::dot(&s.du, &s.du)
        + vecops::dot(&s.dp, &s.dp)
        + vecops::dot(&s.dmu, &s.dmu))
    .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::to_dense;
    use crate::optimality::classify;
    use crate::sparse::SparseMatrix;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> ProblemInstance {
        let mut lt = Vec::new();
        let mut mb = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if rng.gen::<f64>() < 0.3 {
                    lt.push((r, c, rng.gen_range(-1.0..1.0)));
                }
                if rng.gen::<f64>() < 0.3 {
                    mb.push((r, c, rng.gen_range(-1.0..1.0)));
                }
            }
            lt.push((r, r, 4.0 + rng.gen::<f64>()));
            mb.push((r, r, 2.0 + rng.gen::<f64>()));
        }
        let m: Vec<f64> = (0..n).map(|_| 0.5 + rng.gen::<f64>()).collect();
        ProblemInstance::new(
            SparseMatrix::from_triplets(n, n, lt).unwrap(),
            SparseMatrix::from_diag(&m),
            SparseMatrix::from_triplets(n, n, mb).unwrap(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            vec![-1.5; n],
            vec![2.0; n],
            0.25,
            0.05,
            3.0,
        )
        .unwrap()
    }

    fn random_iterate(rng: &mut ChaCha8Rng, n: usize) -> IterateState {
        IterateState::new(
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect(),
        )
    }

    /// Dense 4n x 4n Jacobian assembled block by block, straight from the
    /// definition.
    fn dense_full_jacobian(part: &ActiveSetPartition, prob: &ProblemInstance) -> DMatrix<f64> {
        let n = prob.n;
        let m = prob.m_diag();
        let ld = to_dense(&prob.l);
        let mbd = to_dense(&prob.mbar);
        let mut j = DMatrix::zeros(4 * n, 4 * n);
        for i in 0..n {
            j[(i, i)] = m[i];
            j[(n + i, n + i)] = prob.alpha * m[i];
            j[(n + i, 3 * n + i)] = m[i];
            if part.is_active(i) {
                j[(3 * n + i, n + i)] = m[i];
            } else {
                j[(3 * n + i, 3 * n + i)] = -prob.c * m[i];
            }
            for k in 0..n {
                j[(i, 2 * n + k)] = ld[(k, i)]; // L^T
                j[(n + i, 2 * n + k)] = -mbd[(k, i)]; // -Mbar^T
                j[(2 * n + i, k)] = ld[(i, k)]; // L
                j[(2 * n + i, n + k)] = -mbd[(i, k)]; // -Mbar
            }
        }
        j
    }

    fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
        let lu = a.clone().full_piv_lu();
        let x = lu.solve(&DVector::from_column_slice(b)).expect("singular");
        x.iter().copied().collect()
    }

    #[test]
    fn full_operator_on_zero_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prob = random_instance(&mut rng, 6);
        let x = random_iterate(&mut rng, 6);
        let part = classify(x.u(), x.mu(), &prob);
        let sys = assemble_full(&x, &part, &prob);
        let out = sys.apply_alloc(&vec![0.0; sys.dim()]);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_operator_matches_dense_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 4;
        let prob = random_instance(&mut rng, n);
        let x = random_iterate(&mut rng, n);
        let part = classify(x.u(), x.mu(), &prob);
        let sys = assemble_full(&x, &part, &prob);
        let jd = dense_full_jacobian(&part, &prob);
        for _ in 0..10 {
            let v: Vec<f64> = (0..4 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = sys.apply_alloc(&v);
            let want = &jd * DVector::from_column_slice(&v);
            for i in 0..4 * n {
                assert!(
                    (got[i] - want[i]).abs() <= 1e-13 * (1.0 + want[i].abs()),
                    "row {i}: {} vs {}",
                    got[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn all_active_multiplier_row_is_control_mass() {
        let prob = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            random_instance(&mut rng, 5)
        };
        // u = mu = 0 puts every index in the sparsity set.
        let x = IterateState::zeros(5);
        let part = classify(x.u(), x.mu(), &prob);
        assert_eq!(part.n_active(), 5);
        let sys = assemble_full(&x, &part, &prob);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = sys.apply_alloc(&v);
        let m = prob.m_diag();
        for i in 0..5 {
            assert_eq!(out[15 + i], m[i] * v[5 + i]);
        }
    }

    #[test]
    fn augmented_operator_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 30;
        let prob = random_instance(&mut rng, n);
        let x = random_iterate(&mut rng, n);
        let part = classify(x.u(), x.mu(), &prob);
        assert!(part.n_active() > 0 && part.n_inactive() > 0, "need a mix");
        let sys = assemble_augmented(&x, &part, &prob);
        for _ in 0..10 {
            let v: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let jv = sys.apply_alloc(&v);
            let jw = sys.apply_alloc(&w);
            let a = vecops::dot(&jv, &w);
            let b = vecops::dot(&v, &jw);
            assert!(
                (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())),
                "{a} vs {b}"
            );
        }
    }

    #[test]
    fn reduced_operator_is_symmetric_and_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 24;
        let prob = random_instance(&mut rng, n);
        let x = random_iterate(&mut rng, n);
        let part = classify(x.u(), x.mu(), &prob);
        let sys = assemble_reduced(&x, &part, &prob);
        assert_eq!(sys.dim(), 2 * n);
        for _ in 0..10 {
            let v: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let jv = sys.apply_alloc(&v);
            let jw = sys.apply_alloc(&w);
            let sym_a = vecops::dot(&jv, &w);
            let sym_b = vecops::dot(&v, &jw);
            assert!((sym_a - sym_b).abs() <= 1e-12 * (1.0 + sym_a.abs().max(sym_b.abs())));
            // Linearity: J(2v - 3w) = 2 Jv - 3 Jw
            let comb: Vec<f64> = (0..2 * n).map(|i| 2.0 * v[i] - 3.0 * w[i]).collect();
            let j_comb = sys.apply_alloc(&comb);
            for i in 0..2 * n {
                let want = 2.0 * jv[i] - 3.0 * jw[i];
                assert!((j_comb[i] - want).abs() <= 1e-13 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn degenerate_partitions_shrink_and_grow_the_augmented_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 8;
        let prob = random_instance(&mut rng, n);
        // All indices inactive-positive: u comfortably positive, mu = 0.
        let x = IterateState::new(vec![0.0; n], vec![1.0; n], vec![0.0; n], vec![0.0; n]);
        let part = classify(x.u(), x.mu(), &prob);
        assert_eq!(part.n_active(), 0);
        let sys = assemble_augmented(&x, &part, &prob);
        assert_eq!(sys.dim(), 3 * n);

        // All indices in the sparsity set.
        let x0 = IterateState::zeros(n);
        let part0 = classify(x0.u(), x0.mu(), &prob);
        let sys0 = assemble_augmented(&x0, &part0, &prob);
        assert_eq!(sys0.dim(), 4 * n);
    }

    #[test]
    fn reduced_block22_vanishes_when_all_active() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 6;
        let prob = random_instance(&mut rng, n);
        let x = IterateState::zeros(n);
        let part = classify(x.u(), x.mu(), &prob);
        assert_eq!(part.n_inactive(), 0);
        let sys = assemble_reduced(&x, &part, &prob);
        // Apply to (0, dp): the p-row output must be exactly zero.
        let mut v = vec![0.0; 2 * n];
        for i in n..2 * n {
            v[i] = rng.gen_range(-1.0..1.0);
        }
        let out = sys.apply_alloc(&v);
        for i in n..2 * n {
            assert_eq!(out[i], 0.0);
        }
    }

    /// The three formulations give the same Newton step under exact solves.
    #[test]
    fn equivalence_chain_full_augmented_reduced() {
        for (seed, n) in [(10u64, 5usize), (11, 24), (12, 64)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prob = random_instance(&mut rng, n);
            let x = random_iterate(&mut rng, n);
            let part = classify(x.u(), x.mu(), &prob);

            let full = assemble_full(&x, &part, &prob);
            let aug = assemble_augmented(&x, &part, &prob);
            let red = assemble_reduced(&x, &part, &prob);

            let df = densify_operator(full.dim(), |v, out| full.apply(v, out));
            let da = densify_operator(aug.dim(), |v, out| aug.apply(v, out));
            let dr = densify_operator(red.dim(), |v, out| red.apply(v, out));

            let sf = full.recover_step(&dense_solve(&df, full.rhs()));
            let sa = aug.recover_step(&dense_solve(&da, aug.rhs()));
            let sr = red.recover_step(&dense_solve(&dr, red.rhs()));

            let scale: f64 = 1.0 + step_norm(&sf);
            for (a, b) in [(&sf, &sa), (&sf, &sr)] {
                for (va, vb) in [
                    (&a.dy, &b.dy),
                    (&a.du, &b.du),
                    (&a.dp, &b.dp),
                    (&a.dmu, &b.dmu),
                ] {
                    for i in 0..n {
                        assert!(
                            (va[i] - vb[i]).abs() <= 1e-9 * scale,
                            "n={n} i={i}: {} vs {}",
                            va[i],
                            vb[i]
                        );
                    }
                }
            }
        }
    }

    /// An exactly-solved reduced system lifts to a full-system solution.
    #[test]
    fn recovered_step_satisfies_full_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 5;
        let prob = random_instance(&mut rng, n);
        let x = random_iterate(&mut rng, n);
        let part = classify(x.u(), x.mu(), &prob);
        let full = assemble_full(&x, &part, &prob);
        let red = assemble_reduced(&x, &part, &prob);
        let dr = densify_operator(red.dim(), |v, out| red.apply(v, out));
        let sol = dense_solve(&dr, red.rhs());
        let (r_red, r_lift) = residual_equivalence_check(&full, &red, &sol);
        let rhs_norm = vecops::norm2(full.rhs());
        assert!(r_red <= 1e-9 * rhs_norm, "reduced residual {r_red}");
        assert!(r_lift <= 1e-9 * rhs_norm, "lifted residual {r_lift}");
    }

    /// The lifted residual equals the reduced residual for arbitrary
    /// approximate solutions, not just near-exact ones.
    #[test]
    fn residual_norms_agree_for_inexact_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 20;
        let prob = random_instance(&mut rng, n);
        let x = random_iterate(&mut rng, n);
        let part = classify(x.u(), x.mu(), &prob);
        let full = assemble_full(&x, &part, &prob);
        let red = assemble_reduced(&x, &part, &prob);

        let dr = densify_operator(red.dim(), |v, out| red.apply(v, out));
        let exact = dense_solve(&dr, red.rhs());

        for trial in 0..20 {
            // Random corruption levels, including dy-only perturbations.
            let mut approx = exact.clone();
            let scale = 10f64.powi(rng.gen_range(-8..1));
            let dy_only = trial % 3 == 0;
            for (i, item) in approx.iter_mut().enumerate() {
                if dy_only && i >= n {
                    break;
                }
                *item += scale * rng.gen_range(-1.0..1.0);
            }
            let (r_red, r_lift) = residual_equivalence_check(&full, &red, &approx);
            assert!(
                (r_red - r_lift).abs() <= 1e-11 * (1.0 + r_red),
                "trial {trial}: {r_red} vs {r_lift}"
            );
        }
    }

    #[test]
    fn recovery_with_no_active_set_and_zero_data_gives_zero_control_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = 5;
        let prob = random_instance(&mut rng, n);
        // Iterate in I+ everywhere with mu = beta exactly and the control
        // row residual t_u forced to zero through p.
        let u = vec![1.0; n];
        let mu = vec![prob.beta; n];
        let m = prob.m_diag();
        let rhs_for_p: Vec<f64> = (0..n).map(|i| prob.alpha * m[i] * u[i] + m[i] * mu[i]).collect();
        let mbd = to_dense(&prob.mbar).transpose();
        let p = dense_solve(&mbd, &rhs_for_p);
        let x = IterateState::new(vec![0.0; n], u, p, mu);
        let part = classify(x.u(), x.mu(), &prob);
        assert_eq!(part.n_active(), 0);
        let red = assemble_reduced(&x, &part, &prob);
        assert!(vecops::norm2(&red.t_u) <= 1e-12, "t_u = {:?}", red.t_u);
        // dp = 0 (and any dy) must recover du = 0, dmu = 0.
        let mut sol = vec![0.0; 2 * n];
        for i in 0..n {
            sol[i] = rng.gen_range(-1.0..1.0);
        }
        let step = red.recover_step(&sol);
        assert!(step.du.iter().all(|&v| v.abs() <= 1e-12));
        assert!(step.dmu.iter().all(|&v| v.abs() <= 1e-12));
    }

    #[test]
    fn mtx_dump_roundtrips_and_respects_size_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let n = 6;
        let prob = random_instance(&mut rng, n);
        let x = random_iterate(&mut rng, n);
        let part = classify(x.u(), x.mu(), &prob);
        let sys = assemble_full(&x, &part, &prob);
        let dir = tempfile::tempdir().unwrap();
        sys.dump_mtx(dir.path()).unwrap();
        let a = mtx::read_matrix(&dir.path().join("operator.mtx")).unwrap();
        let b = mtx::read_vector(&dir.path().join("rhs.mtx")).unwrap();
        assert_eq!(a.nrows(), 4 * n);
        assert_eq!(b, sys.rhs());
        let d = to_dense(&a);
        let d2 = densify_operator(sys.dim(), |v, out| sys.apply(v, out));
        assert_eq!(d, d2);

        let big = random_instance(&mut rng, 140);
        let xb = random_iterate(&mut rng, 140);
        let pb = classify(xb.u(), xb.mu(), &big);
        let sysb = assemble_full(&xb, &pb, &big);
        assert!(matches!(
            sysb.dump_mtx(dir.path()),
            Err(SolverError::DenseThresholdExceeded { .. })
        ));
    }
}
