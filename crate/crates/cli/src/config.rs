//! Experiment configuration: JSON schema, validation, sweep expansion.
//!
//! A single JSON file describes one experiment: which problem family to
//! assemble, which grids / regularization weights / solver variants to
//! sweep, and where outputs go. `sweep()` expands the cross product into
//! an ordered list of [`SweepPoint`]s; the order is the determinism
//! contract for everything downstream (CSV rows, report file names,
//! parallel shard merging).

use crate::CliError;
use serde::{Deserialize, Serialize};
use ssc_core::{
    make_convection_diffusion, make_poisson, CDConfig, Forcing, Formulation, GridSpec,
    NewtonOptions, PrecondChoice, ProblemInstance, Wind,
};
use std::fmt;
use std::path::{Path, PathBuf};

/// Which generator builds the problem instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Poisson2d,
    Poisson3d,
    Convdiff,
}

impl ProblemKind {
    pub fn dim(&self) -> usize {
        match self {
            ProblemKind::Poisson2d | ProblemKind::Convdiff => 2,
            ProblemKind::Poisson3d => 3,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Poisson2d => "poisson2d",
            ProblemKind::Poisson3d => "poisson3d",
            ProblemKind::Convdiff => "convdiff",
        })
    }
}

/// A field that accepts either a scalar or a list, e.g. `"beta": 1e-4`
/// and `"beta": [1e-5, 1e-4]` both parse.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

/// Inner-solve accuracy schedule, sweep-expandable over `eta0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    /// Essentially exact inner solves.
    Exact,
    /// Residual-contraction-adaptive forcing; one sweep entry per `eta0`.
    Adaptive {
        #[serde(default)]
        eta0: Option<OneOrMany<f64>>,
        /// Cap on the forcing term; defaults to each `eta0`.
        #[serde(default)]
        eta_max: Option<f64>,
    },
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec::Exact
    }
}

impl ForcingSpec {
    /// The `(Forcing, tag)` pairs this spec expands to; tags name report
    /// files, e.g. `exact` or `adaptive1e-1`.
    fn expand(&self) -> Vec<(Forcing, String)> {
        match self {
            ForcingSpec::Exact => vec![(Forcing::Exact, "exact".to_string())],
            ForcingSpec::Adaptive { eta0, eta_max } => {
                let etas = eta0
                    .as_ref()
                    .map(|e| e.to_vec())
                    .unwrap_or_else(|| vec![0.1]);
                etas.into_iter()
                    .map(|e| {
                        let mut f = Forcing::adaptive(e);
                        if let (Forcing::EisenstatWalker { eta_max: cap, .. }, Some(m)) =
                            (&mut f, eta_max)
                        {
                            *cap = *m;
                        }
                        (f, format!("adaptive{e:e}"))
                    })
                    .collect()
            }
        }
    }
}

fn default_formulations() -> OneOrMany<Formulation> {
    OneOrMany::One(Formulation::Reduced)
}

fn default_preconditioners() -> OneOrMany<PrecondChoice> {
    OneOrMany::One(PrecondChoice::Ipf)
}

fn default_epsilon() -> f64 {
    1.0
}

fn default_wind() -> Wind {
    Wind::Recirculating
}

/// One experiment: a problem family plus the sweep grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    /// Dyadic refinement levels; `2^level` interior points per axis.
    #[serde(default)]
    pub levels: Vec<u32>,
    /// Explicit interior point counts per axis, for grids that are not
    /// powers of two.
    #[serde(default)]
    pub sizes: Vec<usize>,
    pub alphas: Vec<f64>,
    /// Sparsity weight(s); scalar or list.
    #[serde(alias = "betas")]
    pub beta: OneOrMany<f64>,
    #[serde(default = "default_formulations", alias = "formulation")]
    pub formulations: OneOrMany<Formulation>,
    #[serde(default = "default_preconditioners", alias = "preconditioner")]
    pub preconditioners: OneOrMany<PrecondChoice>,
    #[serde(default)]
    pub forcing: ForcingSpec,
    /// Output directory; `--out` overrides it.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Also write per-iteration eigenvalue bound reports during `run`.
    #[serde(default)]
    pub dense_diagnostics: bool,
    /// Diffusion coefficient (convdiff only).
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Wind field (convdiff only).
    #[serde(default = "default_wind")]
    pub wind: Wind,
    /// `diagnose` only: skip the solve and report the bounds of the
    /// all-active system at the feasible starting point.
    #[serde(default)]
    pub force_all_active: bool,
}

impl ExperimentConfig {
    /// Parses and validates a configuration file. Parse errors carry the
    /// offending line and column, validation errors name the field.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |field: &str, msg: String| -> Result<(), CliError> {
            Err(CliError::Config(format!("field `{field}`: {msg}")))
        };
        if self.levels.is_empty() && self.sizes.is_empty() {
            return fail("levels/sizes", "at least one grid is required".into());
        }
        for &l in &self.levels {
            if l < 2 {
                return fail("levels", format!("level {l} gives fewer than 4 interior points per axis"));
            }
        }
        for &s in &self.sizes {
            if s < 4 {
                return fail("sizes", format!("grid needs at least 4 interior points per axis, got {s}"));
            }
        }
        if self.alphas.is_empty() {
            return fail("alphas", "the sweep list is empty".into());
        }
        for &a in &self.alphas {
            if !(a.is_finite() && a > 0.0) {
                return fail("alphas", format!("alpha must be positive and finite, got {a}"));
            }
        }
        let betas = self.beta.to_vec();
        if betas.is_empty() {
            return fail("beta", "the sweep list is empty".into());
        }
        for &b in &betas {
            if !(b.is_finite() && b >= 0.0) {
                return fail("beta", format!("beta must be nonnegative and finite, got {b}"));
            }
        }
        let formulations = self.formulations.to_vec();
        if formulations.is_empty() {
            return fail("formulations", "the sweep list is empty".into());
        }
        if formulations.contains(&Formulation::Full) {
            return fail(
                "formulations",
                "the full 4n formulation is a diagnostic reference; sweep the \
                 augmented or reduced formulation"
                    .into(),
            );
        }
        if self.preconditioners.to_vec().is_empty() {
            return fail("preconditioners", "the sweep list is empty".into());
        }
        if let ForcingSpec::Adaptive { eta0, eta_max } = &self.forcing {
            for e in eta0.as_ref().map(|e| e.to_vec()).unwrap_or_default() {
                if !(e > 0.0 && e < 1.0) {
                    return fail("forcing.eta0", format!("eta0 must lie in (0, 1), got {e}"));
                }
            }
            if let Some(m) = eta_max {
                if !(*m > 0.0 && *m < 1.0) {
                    return fail("forcing.eta_max", format!("eta_max must lie in (0, 1), got {m}"));
                }
            }
            if self.forcing.expand().is_empty() {
                return fail("forcing.eta0", "the sweep list is empty".into());
            }
        }
        if self.problem == ProblemKind::Convdiff && !(self.epsilon.is_finite() && self.epsilon > 0.0)
        {
            return fail("epsilon", format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }

    /// The output directory: `--out` wins, then `out_dir` from the file.
    pub fn resolve_out(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .ok_or_else(|| {
                CliError::Config(
                    "field `out_dir`: no output directory; set it in the config or pass --out"
                        .into(),
                )
            })
    }

    /// Expands the sweep in its canonical order: grids (levels, then
    /// sizes), then alphas, betas, formulations, preconditioners, forcing
    /// terms. The returned indices are the sort key for shard merging.
    pub fn sweep(&self) -> Vec<SweepPoint> {
        let grids: Vec<(Option<u32>, usize)> = self
            .levels
            .iter()
            .map(|&l| (Some(l), 1usize << l))
            .chain(self.sizes.iter().map(|&s| (None, s)))
            .collect();
        let forcings = self.forcing.expand();
        let mut points = Vec::new();
        for &(level, interior) in &grids {
            for &alpha in &self.alphas {
                for &beta in &self.beta.to_vec() {
                    for &formulation in &self.formulations.to_vec() {
                        for &preconditioner in &self.preconditioners.to_vec() {
                            for (forcing, forcing_tag) in &forcings {
                                points.push(SweepPoint {
                                    index: points.len(),
                                    problem: self.problem,
                                    level,
                                    interior,
                                    alpha,
                                    beta,
                                    formulation,
                                    preconditioner,
                                    forcing: *forcing,
                                    forcing_tag: forcing_tag.clone(),
                                    epsilon: self.epsilon,
                                    wind: self.wind,
                                });
                            }
                        }
                    }
                }
            }
        }
        points
    }
}

/// One fully resolved run of the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    /// Position in the canonical sweep order (the determinism sort key).
    pub index: usize,
    pub problem: ProblemKind,
    /// Refinement level when the grid came from `levels`.
    pub level: Option<u32>,
    /// Interior points per axis.
    pub interior: usize,
    pub alpha: f64,
    pub beta: f64,
    pub formulation: Formulation,
    pub preconditioner: PrecondChoice,
    pub forcing: Forcing,
    pub forcing_tag: String,
    pub epsilon: f64,
    pub wind: Wind,
}

impl SweepPoint {
    pub fn grid(&self) -> GridSpec {
        GridSpec::with_interior(self.problem.dim(), self.interior)
    }

    pub fn instance(&self) -> ssc_core::Result<ProblemInstance> {
        match self.problem {
            ProblemKind::Poisson2d | ProblemKind::Poisson3d => {
                make_poisson(self.grid(), self.alpha, self.beta)
            }
            ProblemKind::Convdiff => {
                let cd = CDConfig {
                    epsilon: self.epsilon,
                    wind: self.wind,
                    delta: None,
                };
                make_convection_diffusion(self.grid(), &cd, self.alpha, self.beta)
            }
        }
    }

    pub fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            forcing: self.forcing,
            formulation: self.formulation,
            preconditioner: self.preconditioner,
            ..NewtonOptions::default()
        }
    }

    /// Grid tag for file names: `l7` for level grids, `n65` for explicit
    /// sizes.
    pub fn grid_tag(&self) -> String {
        match self.level {
            Some(l) => format!("l{l}"),
            None => format!("n{}", self.interior),
        }
    }

    /// File-name stem identifying this run, e.g.
    /// `poisson2d-reduced-ipf-l7-a1e-6-b1e-4-exact`.
    pub fn label(&self) -> String {
        format!(
            "{}-{}-{}-{}-a{:e}-b{:e}-{}",
            self.problem,
            formulation_str(self.formulation),
            precond_str(self.preconditioner),
            self.grid_tag(),
            self.alpha,
            self.beta,
            self.forcing_tag
        )
    }
}

pub fn formulation_str(f: Formulation) -> &'static str {
    match f {
        Formulation::Augmented => "augmented",
        Formulation::Reduced => "reduced",
        Formulation::Full => "full",
    }
}

pub fn precond_str(p: PrecondChoice) -> &'static str {
    match p {
        PrecondChoice::Bdf => "bdf",
        PrecondChoice::Ipf => "ipf",
    }
}
