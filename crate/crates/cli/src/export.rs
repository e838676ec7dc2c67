//! The `export-problem` subcommand: write each assembled instance as a
//! Matrix Market bundle so external solvers can consume the exact same
//! operators.
//!
//! The operators and data vectors depend only on the grid (and, for
//! convection-diffusion, on the wind and diffusion coefficient) — not on
//! `alpha` or `beta` — so the sweep collapses to one bundle per grid,
//! with the swept weights recorded in `meta.json`.

use crate::config::{ExperimentConfig, SweepPoint};
use crate::CliError;
use serde::Serialize;
use ssc_core::sparse::mtx;
use std::path::Path;

#[derive(Serialize)]
struct Meta<'a> {
    problem: String,
    dim: usize,
    /// Refinement level when the grid came from `levels`.
    level: Option<u32>,
    /// Interior grid points per axis.
    interior: usize,
    /// Total unknowns per field (rows of every exported operator).
    n: usize,
    alphas: &'a [f64],
    betas: Vec<f64>,
    epsilon: f64,
    wind: ssc_core::Wind,
    files: Vec<&'static str>,
}

fn export_grid(p: &SweepPoint, cfg: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(CliError::io(format!("creating {}", dir.display())))?;
    let prob = p.instance()?;
    let matrices: [(&str, &ssc_core::SparseMatrix); 3] =
        [("l.mtx", &prob.l), ("m.mtx", &prob.m), ("mbar.mtx", &prob.mbar)];
    for (name, mat) in matrices {
        mtx::write_matrix(dir.join(name), mat)?;
    }
    let vectors: [(&str, &[f64]); 4] = [
        ("y_d.mtx", &prob.y_d),
        ("f.mtx", &prob.f),
        ("a.mtx", &prob.a),
        ("b.mtx", &prob.b),
    ];
    for (name, vec) in vectors {
        mtx::write_vector(dir.join(name), vec)?;
    }
    let meta = Meta {
        problem: p.problem.to_string(),
        dim: p.problem.dim(),
        level: p.level,
        interior: p.interior,
        n: prob.n,
        alphas: &cfg.alphas,
        betas: cfg.beta.to_vec(),
        epsilon: cfg.epsilon,
        wind: cfg.wind,
        files: vec!["l.mtx", "m.mtx", "mbar.mtx", "y_d.mtx", "f.mtx", "a.mtx", "b.mtx"],
    };
    let path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&meta).expect("metadata is plain data");
    std::fs::write(&path, json).map_err(CliError::io(format!("writing {}", path.display())))?;
    Ok(())
}

pub fn export(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(), CliError> {
    let out = cfg.resolve_out(out)?;
    let points = cfg.sweep();
    // One bundle per grid: the sweep is ordered grids-first, so keeping
    // the first point of each grid tag preserves the canonical order.
    let mut seen = std::collections::BTreeSet::new();
    for p in &points {
        if !seen.insert(p.grid_tag()) {
            continue;
        }
        let dir = out.join("problems").join(format!("{}-{}", p.problem, p.grid_tag()));
        export_grid(p, cfg, &dir)?;
        println!("{}: n = {}", dir.display(), p.grid().n());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_round_trips_through_the_reader() {
        let cfg: ExperimentConfig = serde_json::from_value(serde_json::json!({
            "problem": "poisson2d",
            "sizes": [4],
            "alphas": [1e-2, 1e-4],
            "beta": 1e-4
        }))
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        export(&cfg, Some(tmp.path())).unwrap();
        let dir = tmp.path().join("problems/poisson2d-n4");
        // 2D five-point stencil on a 4x4 interior grid: 5 entries per row
        // minus the 4 neighbors lost on each of the 4 boundary edges.
        let l = mtx::read_matrix(dir.join("l.mtx")).unwrap();
        assert_eq!(l.nrows(), 16);
        assert_eq!(l.nnz(), 5 * 16 - 4 * 4);
        let y_d = mtx::read_vector(dir.join("y_d.mtx")).unwrap();
        assert_eq!(y_d.len(), 16);
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json")).unwrap())
                .unwrap();
        assert_eq!(meta["n"], 16);
        assert_eq!(meta["alphas"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn one_bundle_per_grid_even_when_weights_sweep() {
        let cfg: ExperimentConfig = serde_json::from_value(serde_json::json!({
            "problem": "poisson2d",
            "levels": [2, 3],
            "alphas": [1e-2, 1e-4, 1e-6],
            "beta": [1e-4, 1e-2]
        }))
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        export(&cfg, Some(tmp.path())).unwrap();
        let dirs: Vec<String> = std::fs::read_dir(tmp.path().join("problems"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(dirs.len(), 2);
        assert!(dirs.contains(&"poisson2d-l2".to_string()));
        assert!(dirs.contains(&"poisson2d-l3".to_string()));
    }
}
