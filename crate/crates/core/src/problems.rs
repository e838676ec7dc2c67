//! Finite-difference test problems on the unit square / cube.
//!
//! Every instance discretizes
//!
//! ```text
//!     min  1/2 ||y - y_d||_M^2 + alpha/2 ||u||_M^2 + beta ||u||_{M,1}
//!     s.t. L y = Mbar u + f,    a <= u <= b  (componentwise),
//! ```
//!
//! on a uniform grid of `m` interior points per axis with mesh size
//! `h = 1/(m+1)` and homogeneous Dirichlet boundary conditions. Interior
//! nodes are numbered lexicographically with `x` fastest.
//!
//! Two generators are provided:
//!
//! * [`make_poisson`]: `L` is the scaled 5-point (2D) or 7-point (3D)
//!   Laplacian, `M = Mbar = I`.
//! * [`make_convection_diffusion`]: 2D only; `L` combines the diffusion
//!   stencil with first-order upwinding of the wind term, `M = h^2 I`, and
//!   `Mbar` carries a streamline-style correction built from the
//!   centered-difference convection matrix, which makes it nonsymmetric.

use crate::error::{Result, SolverError};
use crate::sparse::{mtx, SparseMatrix};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Uniform grid on the unit square (dim 2) or cube (dim 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spatial dimension (2 or 3).
    pub dim: usize,
    /// Interior grid points per axis.
    pub interior: usize,
}

impl GridSpec {
    /// Dyadic refinement level: `2^level` interior points per axis.
    pub fn from_level(dim: usize, level: u32) -> Self {
        GridSpec {
            dim,
            interior: 1usize << level,
        }
    }

    /// Explicit interior point count per axis (used by grids that are not
    /// powers of two, e.g. 65 x 65).
    pub fn with_interior(dim: usize, interior: usize) -> Self {
        GridSpec { dim, interior }
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.interior as f64 + 1.0)
    }

    /// Total number of interior nodes.
    pub fn n(&self) -> usize {
        self.interior.pow(self.dim as u32)
    }

    fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(SolverError::InvalidConfig(format!(
                "grid dimension must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.interior < 4 {
            return Err(SolverError::InvalidConfig(format!(
                "grid needs at least 4 interior points per axis, got {}",
                self.interior
            )));
        }
        Ok(())
    }

    /// Coordinates of interior node `idx` (lexicographic, x fastest).
    pub fn coords(&self, idx: usize) -> (f64, f64, f64) {
        let m = self.interior;
        let h = self.h();
        let i = idx % m;
        let j = (idx / m) % m;
        let k = idx / (m * m);
        (
            (i as f64 + 1.0) * h,
            (j as f64 + 1.0) * h,
            if self.dim == 3 { (k as f64 + 1.0) * h } else { 0.0 },
        )
    }
}

/// Wind field for the convection-diffusion generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wind {
    /// No convection.
    Zero,
    /// The recirculating field `w = (2s(1 - r^2), -2r(1 - s^2))` in the
    /// vortex coordinates `r = 2x - 1`, `s = 2y - 1`, so the flow closes
    /// inside the unit square and vanishes on its boundary.
    Recirculating,
    /// Constant wind.
    Constant { wx: f64, wy: f64 },
}

impl Wind {
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            Wind::Zero => (0.0, 0.0),
            Wind::Recirculating => {
                let r = 2.0 * x - 1.0;
                let s = 2.0 * y - 1.0;
                (2.0 * s * (1.0 - r * r), -2.0 * r * (1.0 - s * s))
            }
            Wind::Constant { wx, wy } => (wx, wy),
        }
    }
}

/// Parameters of the convection-diffusion generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CDConfig {
    /// Diffusion coefficient (viscosity).
    pub epsilon: f64,
    /// Wind field.
    pub wind: Wind,
    /// Strength of the streamline correction in `Mbar`; `None` picks `h/2`.
    pub delta: Option<f64>,
}

/// One discretized control problem.
///
/// All vectors have length `n`; `M` is diagonal with positive entries and
/// the box bounds satisfy `a < 0 < b` componentwise, which the constructor
/// enforces. `c` is the complementarity scaling, `1/alpha` by default.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub n: usize,
    /// State operator (the discretized PDE).
    pub l: SparseMatrix,
    /// Mass/scaling matrix (diagonal, positive).
    pub m: SparseMatrix,
    /// Control-to-state coupling.
    pub mbar: SparseMatrix,
    /// Desired state.
    pub y_d: Vec<f64>,
    /// PDE source term.
    pub f: Vec<f64>,
    /// Lower control bound (negative).
    pub a: Vec<f64>,
    /// Upper control bound (positive).
    pub b: Vec<f64>,
    /// Control cost weight.
    pub alpha: f64,
    /// L1 penalty weight.
    pub beta: f64,
    /// Complementarity scaling.
    pub c: f64,
    m_diag: Vec<f64>,
}

impl ProblemInstance {
    /// Validates and assembles an instance. See the struct-level invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        l: SparseMatrix,
        m: SparseMatrix,
        mbar: SparseMatrix,
        y_d: Vec<f64>,
        f: Vec<f64>,
        a: Vec<f64>,
        b: Vec<f64>,
        alpha: f64,
        beta: f64,
        c: f64,
    ) -> Result<Self> {
        let n = l.nrows();
        let check_sq = |mat: &SparseMatrix, what: &'static str| -> Result<()> {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(SolverError::DimensionMismatch {
                    context: what,
                    expected: n,
                    got: mat.nrows().max(mat.ncols()),
                });
            }
            Ok(())
        };
        check_sq(&l, "ProblemInstance L")?;
        check_sq(&m, "ProblemInstance M")?;
        check_sq(&mbar, "ProblemInstance Mbar")?;
        for (v, what) in [
            (&y_d, "ProblemInstance y_d"),
            (&f, "ProblemInstance f"),
            (&a, "ProblemInstance a"),
            (&b, "ProblemInstance b"),
        ] {
            if v.len() != n {
                return Err(SolverError::DimensionMismatch {
                    context: what,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        // M must be diagonal with positive entries.
        for (r, c_idx, v) in m.triplets() {
            if r != c_idx && v != 0.0 {
                return Err(SolverError::InvalidMatrix(format!(
                    "M must be diagonal, found off-diagonal entry at ({r},{c_idx})"
                )));
            }
        }
        let m_diag = m.diagonal();
        if let Some(i) = m_diag.iter().position(|&d| d <= 0.0) {
            return Err(SolverError::InvalidMatrix(format!(
                "M must have positive diagonal, M[{i},{i}] = {}",
                m_diag[i]
            )));
        }
        for i in 0..n {
            if !(a[i] < 0.0 && 0.0 < b[i]) {
                return Err(SolverError::InvalidConfig(format!(
                    "bounds must satisfy a < 0 < b, got a[{i}] = {}, b[{i}] = {}",
                    a[i], b[i]
                )));
            }
        }
        if alpha <= 0.0 || beta < 0.0 || c <= 0.0 {
            return Err(SolverError::InvalidConfig(format!(
                "need alpha > 0, beta >= 0, c > 0; got alpha = {alpha}, beta = {beta}, c = {c}"
            )));
        }
        Ok(ProblemInstance {
            n,
            l,
            m,
            mbar,
            y_d,
            f,
            a,
            b,
            alpha,
            beta,
            c,
            m_diag,
        })
    }

    /// Diagonal of `M` (cached at construction).
    pub fn m_diag(&self) -> &[f64] {
        &self.m_diag
    }
}

/// The default desired state: `sin(2 pi x) sin(2 pi y) exp(2x) / 6`,
/// multiplied by `sin(2 pi z)` in 3D, sampled at the interior nodes.
pub fn desired_state(grid: GridSpec) -> Vec<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    (0..grid.n())
        .map(|idx| {
            let (x, y, z) = grid.coords(idx);
            let base = (two_pi * x).sin() * (two_pi * y).sin() * (2.0 * x).exp() / 6.0;
            if grid.dim == 3 {
                base * (two_pi * z).sin()
            } else {
                base
            }
        })
        .collect()
}

/// Scaled FD Laplacian: 5-point (2D) or 7-point (3D) stencil divided by h^2.
fn fd_laplacian(grid: GridSpec) -> SparseMatrix {
    let m = grid.interior;
    let h2 = grid.h() * grid.h();
    let n = grid.n();
    let mut t = Vec::with_capacity((2 * grid.dim + 1) * n);
    let diag = 2.0 * grid.dim as f64 / h2;
    let off = -1.0 / h2;
    for idx in 0..n {
        let i = idx % m;
        let j = (idx / m) % m;
        let k = idx / (m * m);
        t.push((idx, idx, diag));
        if i > 0 {
            t.push((idx, idx - 1, off));
        }
        if i + 1 < m {
            t.push((idx, idx + 1, off));
        }
        if j > 0 {
            t.push((idx, idx - m, off));
        }
        if j + 1 < m {
            t.push((idx, idx + m, off));
        }
        if grid.dim == 3 {
            if k > 0 {
                t.push((idx, idx - m * m, off));
            }
            if k + 1 < m {
                t.push((idx, idx + m * m, off));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t).expect("stencil indices are in range")
}

/// Poisson control problem with unit mass matrices and bounds `[-30, 30]`.
pub fn make_poisson(grid: GridSpec, alpha: f64, beta: f64) -> Result<ProblemInstance> {
    make_poisson_with_bounds(grid, alpha, beta, -30.0, 30.0)
}

/// Poisson control problem with caller-chosen constant bounds.
pub fn make_poisson_with_bounds(
    grid: GridSpec,
    alpha: f64,
    beta: f64,
    a_val: f64,
    b_val: f64,
) -> Result<ProblemInstance> {
    grid.validate()?;
    let n = grid.n();
    let l = fd_laplacian(grid);
    let eye = SparseMatrix::identity(n);
    ProblemInstance::new(
        l,
        eye.clone(),
        eye,
        desired_state(grid),
        vec![0.0; n],
        vec![a_val; n],
        vec![b_val; n],
        alpha,
        beta,
        1.0 / alpha,
    )
}

/// Amplification applied to the desired state of convection-diffusion
/// instances; see the note inside the generator.
const CD_TARGET_SCALE: f64 = 2.0;

/// Convection-diffusion control problem (2D) with bounds `[-20, 20]`.
///
/// `L = epsilon * Laplacian + upwind(w . grad)` in the same collocation
/// scaling as the Poisson generator, `M = I`, and `Mbar = I + delta * C`
/// with `C` the centered-difference convection matrix; the correction
/// mimics a streamline-diffusion test space and makes `Mbar` nonsymmetric
/// whenever the wind is nonzero. The default `delta = h/2` keeps the
/// correction `O(1)` since `C` scales like `1/h`.
pub fn make_convection_diffusion(
    grid: GridSpec,
    cd: &CDConfig,
    alpha: f64,
    beta: f64,
) -> Result<ProblemInstance> {
    make_convection_diffusion_with_bounds(grid, cd, alpha, beta, -20.0, 20.0)
}

/// Convection-diffusion problem with caller-chosen constant bounds.
pub fn make_convection_diffusion_with_bounds(
    grid: GridSpec,
    cd: &CDConfig,
    alpha: f64,
    beta: f64,
    a_val: f64,
    b_val: f64,
) -> Result<ProblemInstance> {
    grid.validate()?;
    if grid.dim != 2 {
        return Err(SolverError::InvalidConfig(
            "the convection-diffusion generator is 2D only".into(),
        ));
    }
    if cd.epsilon <= 0.0 {
        return Err(SolverError::InvalidConfig(format!(
            "epsilon must be positive, got {}",
            cd.epsilon
        )));
    }
    let m = grid.interior;
    let h = grid.h();
    let n = grid.n();
    let delta = cd.delta.unwrap_or(h / 2.0);

    // L: diffusion plus row-wise upwinded convection. Upwinding picks the
    // backward difference along the wind direction, so every convection
    // contribution adds a nonnegative amount to the diagonal and a
    // nonpositive one to the upwind neighbor.
    let mut lt = Vec::with_capacity(5 * n);
    // C: centered-difference convection, assembled alongside.
    let mut ct = Vec::with_capacity(4 * n);
    let h2 = h * h;
    for idx in 0..n {
        let i = idx % m;
        let j = idx / m;
        let (x, y) = {
            let (x, y, _) = grid.coords(idx);
            (x, y)
        };
        let (w1, w2) = cd.wind.eval(x, y);

        let mut diag = cd.epsilon * 4.0 / h2;
        let push_pair = |t: &mut Vec<(usize, usize, f64)>, col: Option<usize>, v: f64| {
            if let Some(c) = col {
                t.push((idx, c, v));
            }
        };
        let left = (i > 0).then(|| idx - 1);
        let right = (i + 1 < m).then(|| idx + 1);
        let down = (j > 0).then(|| idx - m);
        let up = (j + 1 < m).then(|| idx + m);

        // Diffusion off-diagonals.
        for nb in [left, right, down, up].into_iter().flatten() {
            lt.push((idx, nb, -cd.epsilon / h2));
        }
        // Upwind convection.
        if w1 >= 0.0 {
            diag += w1 / h;
            push_pair(&mut lt, left, -w1 / h);
        } else {
            diag += -w1 / h;
            push_pair(&mut lt, right, w1 / h);
        }
        if w2 >= 0.0 {
            diag += w2 / h;
            push_pair(&mut lt, down, -w2 / h);
        } else {
            diag += -w2 / h;
            push_pair(&mut lt, up, w2 / h);
        }
        lt.push((idx, idx, diag));

        // Centered convection for the Mbar correction (structural zeros
        // dropped so a vanishing wind leaves no trace).
        let mut push_nz = |col: Option<usize>, v: f64| {
            if v != 0.0 {
                push_pair(&mut ct, col, v);
            }
        };
        push_nz(right, w1 / (2.0 * h));
        push_nz(left, -w1 / (2.0 * h));
        push_nz(up, w2 / (2.0 * h));
        push_nz(down, -w2 / (2.0 * h));
    }
    let l = SparseMatrix::from_triplets(n, n, lt).expect("stencil indices are in range");
    let c_mat = SparseMatrix::from_triplets(n, n, ct).expect("stencil indices are in range");
    let mass = SparseMatrix::identity(n);
    let mbar = if delta == 0.0 || c_mat.nnz() == 0 {
        mass.clone()
    } else {
        SparseMatrix::add_scaled(1.0, &mass, delta, &c_mat)
    };

    // The convection experiments run at much larger sparsity weights than
    // the Poisson ones (beta ~ 1e-2), so the target profile is amplified
    // to keep the adjoint pressure comparable to beta and the active-set
    // structure nontrivial across the alpha range of interest.
    let y_d: Vec<f64> = desired_state(grid)
        .into_iter()
        .map(|v| CD_TARGET_SCALE * v)
        .collect();

    ProblemInstance::new(
        l,
        mass,
        mbar,
        y_d,
        vec![0.0; n],
        vec![a_val; n],
        vec![b_val; n],
        alpha,
        beta,
        1.0 / alpha,
    )
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    grid: GridSpec,
    alpha: f64,
    beta: f64,
    c: f64,
}

/// Writes an instance as a directory of `.mtx` files plus `manifest.json`.
pub fn export_problem(dir: impl AsRef<Path>, prob: &ProblemInstance, grid: GridSpec) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    mtx::write_matrix(dir.join("L.mtx"), &prob.l)?;
    mtx::write_matrix(dir.join("M.mtx"), &prob.m)?;
    mtx::write_matrix(dir.join("Mbar.mtx"), &prob.mbar)?;
    mtx::write_vector(dir.join("y_d.mtx"), &prob.y_d)?;
    mtx::write_vector(dir.join("f.mtx"), &prob.f)?;
    mtx::write_vector(dir.join("a.mtx"), &prob.a)?;
    mtx::write_vector(dir.join("b.mtx"), &prob.b)?;
    let manifest = Manifest {
        grid,
        alpha: prob.alpha,
        beta: prob.beta,
        c: prob.c,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| SolverError::Parse(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Reads an instance back from [`export_problem`]'s layout.
pub fn import_problem(dir: impl AsRef<Path>) -> Result<(ProblemInstance, GridSpec)> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_str(
        &std::fs::read_to_string(dir.join("manifest.json"))?,
    )
    .map_err(|e| SolverError::Parse(format!("manifest.json: {e}")))?;
    let prob = ProblemInstance::new(
        mtx::read_matrix(dir.join("L.mtx"))?,
        mtx::read_matrix(dir.join("M.mtx"))?,
        mtx::read_matrix(dir.join("Mbar.mtx"))?,
        mtx::read_vector(dir.join("y_d.mtx"))?,
        mtx::read_vector(dir.join("f.mtx"))?,
        mtx::read_vector(dir.join("a.mtx"))?,
        mtx::read_vector(dir.join("b.mtx"))?,
        manifest.alpha,
        manifest.beta,
        manifest.c,
    )?;
    Ok((prob, manifest.grid))
}
