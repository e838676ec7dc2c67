//! Globalized inexact semismooth Newton driver.
//!
//! Each outer iteration linearizes the optimality residual `Theta` at the
//! current iterate, solves the chosen saddle-point formulation with the
//! matching preconditioned Krylov method to a forcing-term accuracy
//! `||r_k|| <= eta_k ||Theta_k||`, recovers the full step, and globalizes
//! with a halving line search on the merit function
//! `theta(x) = 1/2 ||Theta(x)||^2`:
//!
//! ```text
//!     while theta(x + rho dx) - theta(x) > -2 sigma gamma rho theta(x):
//!         rho <- rho / 2
//! ```
//!
//! The forcing term is either fixed near machine precision ("exact" inner
//! solves) or adapted to the observed residual contraction so that early
//! iterations solve cheaply and late iterations recover fast local
//! convergence.

use crate::error::{Result, SolverError};
use crate::krylov::{self, KrylovStats};
use crate::linsys::{self, Formulation, SaddleSystem, StepVector};
use crate::optimality::{ActiveSetPartition, IterateState};
use crate::precond::{PrecondKind, Preconditioner};
use crate::problems::ProblemInstance;
use crate::sparse::{factorize, FactorKind};
use crate::vecops;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Inner-solve accuracy schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Forcing {
    /// Essentially exact inner solves: `eta_k = 1e-10`.
    Exact,
    /// Residual-contraction-adaptive forcing:
    /// `eta_k = chi (||Theta_k|| / ||Theta_{k-1}||)^2`, safeguarded by the
    /// previous value when that value was large, and capped at `eta_max`.
    EisenstatWalker { eta0: f64, eta_max: f64, chi: f64 },
}

impl Forcing {
    /// The adaptive schedule with the standard contraction factor 0.9.
    pub fn adaptive(eta0: f64) -> Self {
        Forcing::EisenstatWalker {
            eta0,
            eta_max: eta0,
            chi: 0.9,
        }
    }
}

/// Which preconditioner family to pair with the formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondChoice {
    /// Block-diagonal (SPD), driven by MINRES.
    Bdf,
    /// Indefinite block-triangular, driven by GMRES.
    Ipf,
}

/// Driver configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Line-search scale, in `(0, 1]`.
    pub sigma: f64,
    /// Sufficient-decrease constant, in `(0, 1)`.
    pub gamma: f64,
    /// Stop when `||Theta|| <= tau`.
    pub tau: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
    pub krylov_max: usize,
    pub forcing: Forcing,
    pub formulation: Formulation,
    pub preconditioner: PrecondChoice,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            sigma: 0.1,
            gamma: 1e-4,
            tau: 1e-6,
            max_iters: 100,
            max_backtracks: 30,
            krylov_max: 500,
            forcing: Forcing::Exact,
            formulation: Formulation::Reduced,
            preconditioner: PrecondChoice::Ipf,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "sigma must lie in (0, 1], got {}",
                self.sigma
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.tau > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if let Forcing::EisenstatWalker { eta0, eta_max, chi } = self.forcing {
            if !(eta0 > 0.0 && eta0 < 1.0) {
                return Err(SolverError::InvalidConfig(format!(
                    "eta0 must lie in (0, 1), got {eta0}"
                )));
            }
            if !(eta_max > 0.0 && eta_max < 1.0) {
                return Err(SolverError::InvalidConfig(format!(
                    "eta_max must lie in (0, 1), got {eta_max}"
                )));
            }
            if !(chi > 0.0 && chi <= 1.0) {
                return Err(SolverError::InvalidConfig(format!(
                    "chi must lie in (0, 1], got {chi}"
                )));
            }
        }
        if self.formulation == Formulation::Full {
            return Err(SolverError::InvalidConfig(
                "the full 4n formulation is a diagnostic reference; solve with \
                 the augmented or reduced formulation"
                    .to_string(),
            ));
        }
        Ok(())
    }

    pub(crate) fn precond_kind(&self) -> PrecondKind {
        match (self.formulation, self.preconditioner) {
            (Formulation::Augmented, PrecondChoice::Bdf) => PrecondKind::BdfAug,
            (Formulation::Augmented, PrecondChoice::Ipf) => PrecondKind::IpfAug,
            (Formulation::Reduced, PrecondChoice::Bdf) => PrecondKind::BdfRed,
            (Formulation::Reduced, PrecondChoice::Ipf) => PrecondKind::IpfRed,
            (Formulation::Full, _) => unreachable!("rejected by validate"),
        }
    }
}

/// Everything measured during one outer iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// `||Theta||` at the start of the iteration.
    pub theta_norm: f64,
    /// Merit value `theta(x)` at the start of the iteration.
    pub merit: f64,
    /// Forcing term used for the inner solve.
    pub eta: f64,
    /// Inner Krylov iterations.
    pub krylov_iters: usize,
    /// True absolute residual of the inner solve.
    pub inner_residual: f64,
    /// Line-search halvings.
    pub backtracks: usize,
    /// Accepted step length.
    pub rho: f64,
    pub n_active: usize,
    pub n_inactive: usize,
    /// Percentage of (numerically) zero controls at the new iterate.
    pub pct_zero_controls: f64,
    /// Wall time spent in the inner Krylov solve.
    pub inner_seconds: f64,
}

/// Full run report: per-iteration records plus totals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonReport {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// Outer (nonlinear) iterations performed.
    pub iterations: usize,
    pub final_theta_norm: f64,
    pub final_pct_zero: f64,
    pub total_krylov_iters: usize,
    /// Average inner iterations per outer iteration.
    pub avg_krylov_iters: f64,
    pub total_backtracks: usize,
    pub wall_seconds: f64,
    pub inner_seconds: f64,
}

impl NewtonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// One CSV row per iteration plus a totals footer.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "iter,theta_norm,merit,eta,krylov_iters,inner_residual,backtracks,rho,\
             n_active,n_inactive,pct_zero_controls,inner_seconds\n",
        );
        for r in &self.records {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{},{:e},{},{},{},{},{},{:.6}\n",
                r.iter,
                r.theta_norm,
                r.merit,
                r.eta,
                r.krylov_iters,
                r.inner_residual,
                r.backtracks,
                r.rho,
                r.n_active,
                r.n_inactive,
                r.pct_zero_controls,
                r.inner_seconds
            ));
        }
        s.push_str(&format!(
            "# totals: converged={} iterations={} avg_krylov={:.2} total_backtracks={} \
             final_theta_norm={:e} final_pct_zero={:.2} wall_seconds={:.6}\n",
            self.converged,
            self.iterations,
            self.avg_krylov_iters,
            self.total_backtracks,
            self.final_theta_norm,
            self.final_pct_zero,
            self.wall_seconds
        ));
        s
    }
}

/// Per-iteration view handed to [`solve_with_observer`] callbacks, for
/// diagnostics that need the assembled operators (e.g. eigenvalue checks).
pub struct IterationContext<'s, 'p> {
    pub iter: usize,
    pub system: &'s SaddleSystem<'p>,
    pub precond: &'s Preconditioner<'p>,
    pub partition: &'s ActiveSetPartition,
    pub step: &'s StepVector,
    /// The accepted new iterate (already refreshed).
    pub state: &'s IterateState,
    pub record: &'s IterationRecord,
}

/// Percentage of entries of `u` that are zero relative to the magnitude of
/// the control: `|u_i| <= 1e-8 * max(1, ||u||_inf)`.
pub fn sparsity_percent(u: &[f64]) -> f64 {
    if u.is_empty() {
        return 100.0;
    }
    let scale = 1e-8 * vecops::norm_inf(u).max(1.0);
    let zeros = u.iter().filter(|v| v.abs() <= scale).count();
    100.0 * zeros as f64 / u.len() as f64
}

/// Builds the feasible starting point: `u0 = 0`, `y0` from the state
/// equation, `p0` from the adjoint equation, and `mu0 = M^-1 Mbar^T p0` so
/// that the first three residual blocks vanish.
pub fn feasible_start(prob: &ProblemInstance) -> Result<IterateState> {
    let n = prob.n;
    let lu = factorize(&prob.l, FactorKind::Lu)?;
    // L y0 = f + Mbar u0 = f
    let y0 = lu.solve(&prob.f)?;
    // L^T p0 = M (y_d - y0)
    let m = prob.m_diag();
    let rhs_p: Vec<f64> = (0..n).map(|i| m[i] * (prob.y_d[i] - y0[i])).collect();
    let p0 = lu.solve_transpose(&rhs_p)?;
    // mu0 = M^-1 Mbar^T p0  (with u0 = 0 this zeroes the control block)
    let mut mu0 = prob.mbar.matvec_transpose_alloc(&p0);
    for i in 0..n {
        mu0[i] /= m[i];
    }
    Ok(IterateState::new(y0, vec![0.0; n], p0, mu0))
}

/// Forcing term for the next inner solve.
///
/// `history` holds the residual norms recorded so far (`||Theta_0||` up to
/// the current one); `prev_eta` is the forcing term used by the previous
/// iteration, if any.
pub fn forcing_term(history: &[f64], prev_eta: Option<f64>, forcing: &Forcing) -> f64 {
    assert!(!history.is_empty(), "forcing_term: empty residual history");
    match *forcing {
        Forcing::Exact => 1e-10,
        Forcing::EisenstatWalker { eta0, eta_max, chi } => {
            let (prev, last2) = match (prev_eta, history.len() >= 2) {
                (Some(p), true) => (p, &history[history.len() - 2..]),
                _ => return eta0.min(eta_max),
            };
            let ratio = last2[1] / last2[0];
            let mut eta = chi * ratio * ratio;
            let safeguard = chi * prev * prev;
            if safeguard > 0.1 {
                eta = eta.max(safeguard);
            }
            eta.min(eta_max)
        }
    }
}

/// Runs the driver to convergence (or failure). See [`solve_with_observer`]
/// for a variant exposing per-iteration internals.
pub fn solve(prob: &ProblemInstance, opts: &NewtonOptions) -> Result<(IterateState, NewtonReport)> {
    solve_with_observer(prob, opts, |_| {})
}

/// [`solve`] with a per-iteration callback, invoked after each accepted
/// step with the assembled system, preconditioner, and fresh iterate.
pub fn solve_with_observer<F>(
    prob: &ProblemInstance,
    opts: &NewtonOptions,
    mut observer: F,
) -> Result<(IterateState, NewtonReport)>
where
    F: FnMut(&IterationContext<'_, '_>),
{
    opts.validate()?;
    let t0 = Instant::now();
    let mut x = feasible_start(prob)?;
    x.refresh(prob);

    let mut history = vec![x.theta_norm()];
    let mut prev_eta: Option<f64> = None;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut converged = x.theta_norm() <= opts.tau;
    let mut inner_total = 0.0f64;

    while !converged && records.len() < opts.max_iters {
        let iter = records.len();
        let theta_norm = x.theta_norm();
        let merit = x.merit();
        let part = x
            .partition()
            .expect("iterate refreshed at loop entry")
            .clone();

        let eta = forcing_term(&history, prev_eta, &opts.forcing);

        // Assemble the chosen formulation and its preconditioner.
        let sys = match opts.formulation {
            Formulation::Augmented => linsys::assemble_augmented(&x, &part, prob),
            Formulation::Reduced => linsys::assemble_reduced(&x, &part, prob),
            Formulation::Full => unreachable!("rejected by validate"),
        };
        let pre = Preconditioner::build(opts.precond_kind(), prob, &part)?;

        // Inner solve to ||r|| <= eta ||Theta||. The Krylov tolerance is
        // relative to ||b||, so rescale; by the residual-equivalence
        // property the reduced/augmented residual equals the full one.
        let b_norm = vecops::norm2(sys.rhs());
        let t_inner = Instant::now();
        let (sol, stats): (Vec<f64>, KrylovStats) = if b_norm == 0.0 {
            (
                vec![0.0; sys.dim()],
                KrylovStats {
                    iterations: 0,
                    final_relative_residual: 0.0,
                    converged: true,
                    breakdown: None,
                    residual_history: Vec::new(),
                },
            )
        } else {
            let tol = eta * theta_norm / b_norm;
            match opts.preconditioner {
                PrecondChoice::Ipf => krylov::gmres(
                    |v, out| sys.apply(v, out),
                    |v, out| pre.apply_inv(v, out),
                    sys.rhs(),
                    tol,
                    opts.krylov_max,
                )?,
                PrecondChoice::Bdf => krylov::minres(
                    |v, out| sys.apply(v, out),
                    |v, out| pre.apply_inv(v, out),
                    sys.rhs(),
                    tol,
                    opts.krylov_max,
                )?,
            }
        };
        let inner_seconds = t_inner.elapsed().as_secs_f64();
        inner_total += inner_seconds;
        let inner_residual = stats.final_relative_residual * b_norm;
        if !stats.converged {
            return Err(SolverError::KrylovStagnation {
                iters: stats.iterations,
                achieved: inner_residual,
                required: eta * theta_norm,
            });
        }

        let step = sys.recover_step(&sol);

        // Backtracking line search on the merit function.
        let mut rho = 1.0f64;
        let mut backtracks = 0usize;
        let accepted = loop {
            let mut trial = x.clone();
            trial.take_step(&step.dy, &step.du, &step.dp, &step.dmu, rho);
            trial.refresh(prob);
            if trial.merit() - merit <= -2.0 * opts.sigma * opts.gamma * rho * merit {
                break trial;
            }
            backtracks += 1;
            if backtracks > opts.max_backtracks {
                return Err(SolverError::LineSearchFailure { iter, backtracks });
            }
            rho *= 0.5;
        };
        x = accepted;

        history.push(x.theta_norm());
        prev_eta = Some(eta);
        let record = IterationRecord {
            iter,
            theta_norm,
            merit,
            eta,
            krylov_iters: stats.iterations,
            inner_residual,
            backtracks,
            rho,
            n_active: part.n_active(),
            n_inactive: part.n_inactive(),
            pct_zero_controls: sparsity_percent(x.u()),
            inner_seconds,
        };
        observer(&IterationContext {
            iter,
            system: &sys,
            precond: &pre,
            partition: &part,
            step: &step,
            state: &x,
            record: &record,
        });
        records.push(record);
        converged = x.theta_norm() <= opts.tau;
    }

    let total_krylov: usize = records.iter().map(|r| r.krylov_iters).sum();
    let total_backtracks: usize = records.iter().map(|r| r.backtracks).sum();
    let report = NewtonReport {
        converged,
        iterations: records.len(),
        final_theta_norm: x.theta_norm(),
        final_pct_zero: sparsity_percent(x.u()),
        total_krylov_iters: total_krylov,
        avg_krylov_iters: if records.is_empty() {
            0.0
        } else {
            total_krylov as f64 / records.len() as f64
        },
        total_backtracks,
        wall_seconds: t0.elapsed().as_secs_f64(),
        inner_seconds: inner_total,
        records,
    };
    Ok((x, report))
}
