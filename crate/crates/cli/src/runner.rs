//! The `run` subcommand: execute every sweep point, emit `results.csv`
//! plus one JSON report per run.
//!
//! Work is farmed out to a small thread pool; each worker claims points
//! off an atomic counter and produces its outputs as strings. Everything
//! is merged back in sweep order before any file is written, so the CSV
//! is byte-identical for a given config regardless of `--jobs` (timing
//! columns aside).

use crate::config::{formulation_str, precond_str, ExperimentConfig, SweepPoint};
use crate::{diagnose, CliError};
use serde::Serialize;
use ssc_core::{solve, solve_with_observer, NewtonReport, SolverError};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Exact column order of `results.csv`; documented in the README.
pub const CSV_HEADER: &str =
    "problem,form,precond,level,n,log10_alpha,beta,LI,NLI,BT,pct_u0,CPU,TCPU";

/// `log10(alpha)` snapped to 9 decimals so `1e-6` prints as `-6`, not
/// `-5.999999999999999`.
fn clean_log10(alpha: f64) -> f64 {
    (alpha.log10() * 1e9).round() / 1e9
}

/// One `results.csv` data row. `CPU` is the average inner-solver time per
/// nonlinear iteration; `TCPU` is the total wall time of the run.
fn csv_row(p: &SweepPoint, report: &NewtonReport) -> String {
    let level_col = match p.level {
        Some(l) => l.to_string(),
        None => p.interior.to_string(),
    };
    let cpu = if report.iterations > 0 {
        report.inner_seconds / report.iterations as f64
    } else {
        0.0
    };
    format!(
        "{},{},{},{},{},{},{:e},{:.2},{},{},{:.2},{:.6},{:.6}",
        p.problem,
        formulation_str(p.formulation),
        precond_str(p.preconditioner),
        level_col,
        p.grid().n(),
        clean_log10(p.alpha),
        p.beta,
        report.avg_krylov_iters,
        report.iterations,
        report.total_backtracks,
        report.final_pct_zero,
        cpu,
        report.wall_seconds,
    )
}

/// Everything the JSON report records about one run.
#[derive(Serialize)]
struct RunRecord<'a> {
    label: String,
    point: &'a SweepPoint,
    converged: bool,
    report: &'a NewtonReport,
}

enum Outcome {
    Solved {
        label: String,
        row: String,
        record_json: String,
        diagnostics: Option<String>,
        converged: bool,
        /// Note about a skipped diagnostic (e.g. operator above the dense
        /// gate); warned, not fatal.
        diag_warning: Option<String>,
    },
    Failed {
        label: String,
        message: String,
    },
}

fn run_point(p: &SweepPoint, want_diagnostics: bool) -> Outcome {
    let label = p.label();
    let prob = match p.instance() {
        Ok(prob) => prob,
        Err(e) => {
            return Outcome::Failed {
                label,
                message: e.to_string(),
            }
        }
    };
    let opts = p.newton_options();
    let mut diag_rows: Vec<String> = Vec::new();
    let mut diag_err: Option<SolverError> = None;
    let solved = if want_diagnostics {
        solve_with_observer(&prob, &opts, |ctx| {
            if diag_err.is_some() {
                return;
            }
            match ssc_core::eig_preconditioned(ctx.system, ctx.precond) {
                Ok(report) => diag_rows.push(diagnose::bound_row(ctx.iter, &report)),
                Err(e) => diag_err = Some(e),
            }
        })
    } else {
        solve(&prob, &opts)
    };
    match solved {
        Ok((_, report)) => {
            let record = RunRecord {
                label: label.clone(),
                point: p,
                converged: report.converged,
                report: &report,
            };
            let record_json = serde_json::to_string_pretty(&record)
                .expect("run records hold only plain numbers and strings");
            let (diagnostics, diag_warning) = match (want_diagnostics, diag_err) {
                (true, None) => {
                    let mut csv = String::from(diagnose::DIAG_HEADER);
                    csv.push('\n');
                    for row in &diag_rows {
                        csv.push_str(row);
                        csv.push('\n');
                    }
                    (Some(csv), None)
                }
                (true, Some(e)) => (None, Some(format!("{label}: diagnostics skipped: {e}"))),
                (false, _) => (None, None),
            };
            Outcome::Solved {
                label,
                row: csv_row(p, &report),
                record_json,
                diagnostics,
                converged: report.converged,
                diag_warning,
            }
        }
        Err(e) => Outcome::Failed {
            label,
            message: e.to_string(),
        },
    }
}

pub fn run(cfg: &ExperimentConfig, out: Option<&Path>, jobs: Option<usize>) -> Result<(), CliError> {
    let out = cfg.resolve_out(out)?;
    let points = cfg.sweep();
    let workers = jobs
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|p| p.get())
                .unwrap_or(1)
        })
        .clamp(1, points.len().max(1));

    let next = AtomicUsize::new(0);
    let shards: Mutex<Vec<(usize, Outcome)>> = Mutex::new(Vec::with_capacity(points.len()));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(point) = points.get(i) else { break };
                let outcome = run_point(point, cfg.dense_diagnostics);
                shards.lock().expect("no panics hold this lock").push((i, outcome));
            });
        }
    });
    let mut merged = shards.into_inner().expect("workers have exited");
    merged.sort_by_key(|(i, _)| *i);

    let reports_dir = out.join("reports");
    std::fs::create_dir_all(&reports_dir)
        .map_err(CliError::io(format!("creating {}", reports_dir.display())))?;
    let diagnostics_dir = out.join("diagnostics");
    if cfg.dense_diagnostics {
        std::fs::create_dir_all(&diagnostics_dir)
            .map_err(CliError::io(format!("creating {}", diagnostics_dir.display())))?;
    }

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut failed = 0usize;
    for (_, outcome) in &merged {
        match outcome {
            Outcome::Solved {
                label,
                row,
                record_json,
                diagnostics,
                converged,
                diag_warning,
            } => {
                csv.push_str(row);
                csv.push('\n');
                let path = reports_dir.join(format!("{label}.json"));
                std::fs::write(&path, record_json)
                    .map_err(CliError::io(format!("writing {}", path.display())))?;
                if let Some(diag_csv) = diagnostics {
                    let path = diagnostics_dir.join(format!("{label}.csv"));
                    std::fs::write(&path, diag_csv)
                        .map_err(CliError::io(format!("writing {}", path.display())))?;
                }
                if let Some(warning) = diag_warning {
                    eprintln!("warning: {warning}");
                }
                if !converged {
                    eprintln!("error: {label}: did not converge within the iteration budget");
                    failed += 1;
                }
            }
            Outcome::Failed { label, message } => {
                eprintln!("error: {label}: {message}");
                failed += 1;
            }
        }
    }
    let csv_path = out.join("results.csv");
    std::fs::write(&csv_path, &csv)
        .map_err(CliError::io(format!("writing {}", csv_path.display())))?;
    println!(
        "{}: {} of {} runs succeeded",
        csv_path.display(),
        points.len() - failed,
        points.len()
    );
    if failed > 0 {
        return Err(CliError::RunFailures {
            failed,
            total: points.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ssc_core::{Formulation, NewtonOptions, PrecondChoice};

    fn tiny_point() -> SweepPoint {
        let cfg: ExperimentConfig = serde_json::from_value(serde_json::json!({
            "problem": "poisson2d",
            "levels": [2],
            "alphas": [1e-2],
            "beta": 1e-4
        }))
        .unwrap();
        cfg.sweep().remove(0)
    }

    #[test]
    fn log10_column_is_exact_for_decade_alphas() {
        assert_eq!(format!("{}", clean_log10(1e-6)), "-6");
        assert_eq!(format!("{}", clean_log10(1e-2)), "-2");
        assert_eq!(format!("{}", clean_log10(1e-1)), "-1");
        assert_eq!(format!("{}", clean_log10(3.16227766017e-3)), "-2.5");
    }

    #[test]
    fn csv_row_matches_the_documented_columns() {
        let p = tiny_point();
        let prob = p.instance().unwrap();
        let (_, report) = solve(&prob, &NewtonOptions::default()).unwrap();
        let row = csv_row(&p, &report);
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), CSV_HEADER.split(',').count());
        assert_eq!(fields[0], "poisson2d");
        assert_eq!(fields[1], formulation_str(Formulation::Reduced));
        assert_eq!(fields[2], precond_str(PrecondChoice::Ipf));
        assert_eq!(fields[3], "2");
        assert_eq!(fields[4], "16");
        assert_eq!(fields[5], "-2");
        assert_eq!(fields[6], "1e-4");
        assert_eq!(fields[8], report.iterations.to_string());
    }

    #[test]
    fn non_level_grids_report_their_size_in_the_level_column() {
        let mut p = tiny_point();
        p.level = None;
        p.interior = 65;
        let row = csv_row(
            &p,
            &NewtonReport {
                records: vec![],
                converged: true,
                iterations: 0,
                final_theta_norm: 0.0,
                final_pct_zero: 0.0,
                total_krylov_iters: 0,
                avg_krylov_iters: 0.0,
                total_backtracks: 0,
                wall_seconds: 0.0,
                inner_seconds: 0.0,
            },
        );
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[3], "65");
        assert_eq!(fields[4], "4225");
        assert_eq!(fields[12], "0.000000");
    }
}
