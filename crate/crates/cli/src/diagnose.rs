//! The `diagnose` subcommand: dense eigenvalue bound reports for the
//! preconditioned Newton systems, one CSV per sweep point with one row
//! per nonlinear iteration.
//!
//! The eigenvalue computation densifies the operators, so it is gated by
//! a hard size threshold; exceeding it is a configuration problem (exit
//! 2), not a runtime failure.

use crate::config::{ExperimentConfig, SweepPoint};
use crate::CliError;
use ssc_core::{
    assemble_augmented, assemble_reduced, eig_preconditioned, feasible_start, solve_with_observer,
    ActiveSetPartition, BoundReport, Formulation, PrecondChoice, PrecondKind, Preconditioner,
    SolverError,
};
use std::path::Path;

/// Column order of the per-iteration bound CSV. The `violations` column
/// counts eigenvalues outside the predicted inclusion intervals (0 when
/// the bounds hold).
pub const DIAG_HEADER: &str = "iteration,zeta,xi,neg_lo,neg_hi,pos_lo,pos_hi,min_eig,max_eig,\
                               unit_count,unit_floor,violations";

/// One CSV row. The negative interval is empty for preconditioners whose
/// spectrum is predicted to be positive, and its columns stay blank.
pub fn bound_row(iter: usize, r: &BoundReport) -> String {
    let (neg_lo, neg_hi) = match r.neg_interval {
        Some((lo, hi)) => (format!("{lo:.12e}"), format!("{hi:.12e}")),
        None => (String::new(), String::new()),
    };
    format!(
        "{iter},{:.12e},{:.12e},{neg_lo},{neg_hi},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}",
        r.zeta,
        r.xi,
        r.pos_interval.0,
        r.pos_interval.1,
        r.min_eigenvalue(),
        r.max_eigenvalue(),
        r.unit_count,
        r.unit_floor,
        r.violations.len(),
    )
}

/// Maps a solver error out of the diagnostics path: the dense size gate
/// is a configuration error (exit 2) and gets actionable guidance.
fn map_diag_err(e: SolverError) -> CliError {
    match e {
        SolverError::DenseThresholdExceeded { n, threshold } => CliError::Threshold(format!(
            "operator dimension {n} exceeds the dense-diagnostics gate ({threshold}); \
             eigenvalue reports densify the system, so pick a smaller grid \
             (for the reduced formulation the dimension is 2n)"
        )),
        other => CliError::Solver(other),
    }
}

fn precond_kind(formulation: Formulation, preconditioner: PrecondChoice) -> PrecondKind {
    match (formulation, preconditioner) {
        (Formulation::Augmented, PrecondChoice::Bdf) => PrecondKind::BdfAug,
        (Formulation::Augmented, PrecondChoice::Ipf) => PrecondKind::IpfAug,
        (_, PrecondChoice::Bdf) => PrecondKind::BdfRed,
        (_, PrecondChoice::Ipf) => PrecondKind::IpfRed,
    }
}

/// The bound rows for one sweep point: one per accepted Newton iteration,
/// or a single row for the forced all-active system at the feasible start.
fn point_rows(p: &SweepPoint, force_all_active: bool) -> Result<Vec<String>, CliError> {
    let prob = p.instance().map_err(CliError::Solver)?;
    // Fail before solving when the system cannot fit under the dense gate
    // for any active-set partition (the augmented dimension 3n + |A| only
    // grows from 3n; the reduced one is 2n exactly).
    let min_dim = match p.formulation {
        Formulation::Augmented => 3 * prob.n,
        _ => 2 * prob.n,
    };
    if min_dim > ssc_core::spectral::DENSE_THRESHOLD {
        return Err(map_diag_err(SolverError::DenseThresholdExceeded {
            n: min_dim,
            threshold: ssc_core::spectral::DENSE_THRESHOLD,
        }));
    }
    if force_all_active {
        let part = ActiveSetPartition::all_active(prob.n);
        let x = feasible_start(&prob).map_err(CliError::Solver)?;
        let system = match p.formulation {
            Formulation::Augmented => assemble_augmented(&x, &part, &prob),
            _ => assemble_reduced(&x, &part, &prob),
        };
        let pre = Preconditioner::build(precond_kind(p.formulation, p.preconditioner), &prob, &part)
            .map_err(map_diag_err)?;
        let report = eig_preconditioned(&system, &pre).map_err(map_diag_err)?;
        return Ok(vec![bound_row(0, &report)]);
    }
    let mut rows = Vec::new();
    let mut first_err: Option<SolverError> = None;
    let solved = solve_with_observer(&prob, &p.newton_options(), |ctx| {
        if first_err.is_some() {
            return;
        }
        match eig_preconditioned(ctx.system, ctx.precond) {
            Ok(report) => rows.push(bound_row(ctx.iter, &report)),
            Err(e) => first_err = Some(e),
        }
    });
    if let Some(e) = first_err {
        return Err(map_diag_err(e));
    }
    // A stalled solve still produced bound reports for every accepted
    // step, and those are the deliverable here; keep them and warn. Only
    // a failure before the first accepted step is fatal.
    if let Err(e) = solved {
        if rows.is_empty() {
            return Err(CliError::Solver(e));
        }
        eprintln!(
            "warning: {}: solver stopped early ({e}); reporting the {} accepted iteration(s)",
            p.label(),
            rows.len()
        );
    }
    Ok(rows)
}

pub fn diagnose(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(), CliError> {
    let out = cfg.resolve_out(out)?;
    let dir = out.join("diagnostics");
    std::fs::create_dir_all(&dir)
        .map_err(CliError::io(format!("creating {}", dir.display())))?;
    let points = cfg.sweep();
    for p in &points {
        let rows = point_rows(p, cfg.force_all_active)?;
        let mut csv = String::from(DIAG_HEADER);
        csv.push('\n');
        for row in &rows {
            csv.push_str(row);
            csv.push('\n');
        }
        let path = dir.join(format!("{}.csv", p.label()));
        std::fs::write(&path, &csv)
            .map_err(CliError::io(format!("writing {}", path.display())))?;
        println!("{}: {} iteration(s)", path.display(), rows.len());
    }
    Ok(())
}
