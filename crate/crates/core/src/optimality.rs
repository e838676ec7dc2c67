//! First-order optimality residual, merit function, and active sets.
//!
//! For an iterate `x = (y, u, p, mu)` the nonsmooth optimality system is
//!
//! ```text
//!     Theta(x) = ( M y + L^T p - M y_d        (state block)
//!                  alpha M u - Mbar^T p + M mu  (control block)
//!                  L y - Mbar u - f             (PDE block)
//!                  M F(u, mu) )                 (complementarity block)
//! ```
//!
//! where `F` encodes the box constraints and the L1 subdifferential through
//! min/max expressions. [`classify`] splits the indices into five sets on
//! which `F` is affine:
//!
//! * `A_b` / `A_a`: upper / lower bound active (`u_i` pinned to the bound),
//! * `A_0`: the sparsity set (`u_i` pinned to zero),
//! * `I_+` / `I_-`: inactive with multiplier pinned to `beta` / `-beta`.
//!
//! The classification drives both the compact evaluation of `F`
//! ([`complementarity`]) and the generalized Jacobian assembled in
//! [`crate::linsys`].

use crate::problems::ProblemInstance;
use crate::vecops;
use serde::{Deserialize, Serialize};

/// Which of the five sets an index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetLabel {
    /// Upper bound active: `u_i = b_i` at a solution.
    Ab,
    /// Lower bound active: `u_i = a_i` at a solution.
    Aa,
    /// Sparsity set: `u_i = 0` at a solution.
    A0,
    /// Inactive, positive side: `mu_i = beta` at a solution.
    Iplus,
    /// Inactive, negative side: `mu_i = -beta` at a solution.
    Iminus,
}

impl SetLabel {
    pub fn is_active(self) -> bool {
        matches!(self, SetLabel::Ab | SetLabel::Aa | SetLabel::A0)
    }
}

/// Disjoint partition of `{0, .., n-1}` into the five sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSetPartition {
    labels: Vec<SetLabel>,
    ab: Vec<usize>,
    aa: Vec<usize>,
    a0: Vec<usize>,
    iplus: Vec<usize>,
    iminus: Vec<usize>,
    active: Vec<usize>,
    inactive: Vec<usize>,
}

impl ActiveSetPartition {
    fn from_labels(labels: Vec<SetLabel>) -> Self {
        let mut p = ActiveSetPartition {
            labels,
            ab: Vec::new(),
            aa: Vec::new(),
            a0: Vec::new(),
            iplus: Vec::new(),
            iminus: Vec::new(),
            active: Vec::new(),
            inactive: Vec::new(),
        };
        for (i, &l) in p.labels.iter().enumerate() {
            match l {
                SetLabel::Ab => p.ab.push(i),
                SetLabel::Aa => p.aa.push(i),
                SetLabel::A0 => p.a0.push(i),
                SetLabel::Iplus => p.iplus.push(i),
                SetLabel::Iminus => p.iminus.push(i),
            }
            if l.is_active() {
                p.active.push(i);
            } else {
                p.inactive.push(i);
            }
        }
        p
    }

    /// Diagnostic partition with every index in the sparsity set.
    pub fn all_active(n: usize) -> Self {
        Self::from_labels(vec![SetLabel::A0; n])
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, i: usize) -> SetLabel {
        self.labels[i]
    }

    pub fn labels(&self) -> &[SetLabel] {
        &self.labels
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.labels[i].is_active()
    }

    /// Sorted indices of `A = Ab u Aa u A0`.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Sorted indices of `I = I+ u I-`.
    pub fn inactive(&self) -> &[usize] {
        &self.inactive
    }

    pub fn ab(&self) -> &[usize] {
        &self.ab
    }

    pub fn aa(&self) -> &[usize] {
        &self.aa
    }

    pub fn a0(&self) -> &[usize] {
        &self.a0
    }

    pub fn iplus(&self) -> &[usize] {
        &self.iplus
    }

    pub fn iminus(&self) -> &[usize] {
        &self.iminus
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn n_inactive(&self) -> usize {
        self.inactive.len()
    }
}

/// Classifies every index into one of the five sets.
///
/// The tests run in a fixed precedence order (`A_b`, `A_a`, `A_0`, `I_+`,
/// `I_-`) so that floating-point boundary cases still yield a total,
/// deterministic partition:
///
/// ```text
///     A_b : c (mu_i - beta) + (u_i - b_i) > 0
///     A_a : c (mu_i + beta) + (u_i - a_i) < 0
///     A_0 : u_i + c (mu_i + beta) >= 0  and  u_i + c (mu_i - beta) <= 0
///     I_+ : u_i + c (mu_i - beta) > 0
///     I_- : otherwise
/// ```
pub fn classify(u: &[f64], mu: &[f64], prob: &ProblemInstance) -> ActiveSetPartition {
    assert_eq!(u.len(), prob.n, "classify: u length mismatch");
    assert_eq!(mu.len(), prob.n, "classify: mu length mismatch");
    let (c, beta) = (prob.c, prob.beta);
    let labels = (0..prob.n)
        .map(|i| {
            if c * (mu[i] - beta) + (u[i] - prob.b[i]) > 0.0 {
                SetLabel::Ab
            } else if c * (mu[i] + beta) + (u[i] - prob.a[i]) < 0.0 {
                SetLabel::Aa
            } else if u[i] + c * (mu[i] + beta) >= 0.0 && u[i] + c * (mu[i] - beta) <= 0.0 {
                SetLabel::A0
            } else if u[i] + c * (mu[i] - beta) > 0.0 {
                SetLabel::Iplus
            } else {
                SetLabel::Iminus
            }
        })
        .collect();
    ActiveSetPartition::from_labels(labels)
}

/// Compact evaluation of the complementarity function on a given partition:
///
/// ```text
///     F = Pi_{A0} u + Pi_{Ab} (u - b) + Pi_{Aa} (u - a)
///         - c ( Pi_{I+} (mu - beta) + Pi_{I-} (mu + beta) )
/// ```
pub fn complementarity(
    u: &[f64],
    mu: &[f64],
    part: &ActiveSetPartition,
    prob: &ProblemInstance,
) -> Vec<f64> {
    assert_eq!(part.n(), prob.n, "complementarity: partition size mismatch");
    (0..prob.n)
        .map(|i| match part.label(i) {
            SetLabel::A0 => u[i],
            SetLabel::Ab => u[i] - prob.b[i],
            SetLabel::Aa => u[i] - prob.a[i],
            SetLabel::Iplus => -prob.c * (mu[i] - prob.beta),
            SetLabel::Iminus => -prob.c * (mu[i] + prob.beta),
        })
        .collect()
}

/// The four blocks of the optimality residual `Theta(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlocks {
    pub theta_y: Vec<f64>,
    pub theta_u: Vec<f64>,
    pub theta_p: Vec<f64>,
    pub theta_mu: Vec<f64>,
}

impl ResidualBlocks {
    pub fn norm_sq(&self) -> f64 {
        vecops::dot(&self.theta_y, &self.theta_y)
            + vecops::dot(&self.theta_u, &self.theta_u)
            + vecops::dot(&self.theta_p, &self.theta_p)
            + vecops::dot(&self.theta_mu, &self.theta_mu)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// All four blocks stacked into one vector of length 4n.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(4 * self.theta_y.len());
        v.extend_from_slice(&self.theta_y);
        v.extend_from_slice(&self.theta_u);
        v.extend_from_slice(&self.theta_p);
        v.extend_from_slice(&self.theta_mu);
        v
    }
}

struct Cache {
    residual: ResidualBlocks,
    partition: ActiveSetPartition,
    theta_val: f64,
}

/// One Newton iterate `x = (y, u, p, mu)` with lazily refreshed residual,
/// partition, and merit caches.
///
/// Any write to a component invalidates the caches; accessors that need them
/// panic when stale instead of silently recomputing, so the driver stays in
/// charge of when the (classification-dependent) residual is evaluated.
pub struct IterateState {
    y: Vec<f64>,
    u: Vec<f64>,
    p: Vec<f64>,
    mu: Vec<f64>,
    cache: Option<Cache>,
}

impl Clone for IterateState {
    fn clone(&self) -> Self {
        // Caches are cheap relative to a refresh; keep them.
        IterateState {
            y: self.y.clone(),
            u: self.u.clone(),
            p: self.p.clone(),
            mu: self.mu.clone(),
            cache: self.cache.as_ref().map(|c| Cache {
                residual: c.residual.clone(),
                partition: c.partition.clone(),
                theta_val: c.theta_val,
            }),
        }
    }
}

impl std::fmt::Debug for IterateState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IterateState")
            .field("n", &self.y.len())
            .field("cached", &self.cache.is_some())
            .finish()
    }
}

impl IterateState {
    pub fn new(y: Vec<f64>, u: Vec<f64>, p: Vec<f64>, mu: Vec<f64>) -> Self {
        let n = y.len();
        assert!(
            u.len() == n && p.len() == n && mu.len() == n,
            "IterateState: component length mismatch"
        );
        IterateState {
            y,
            u,
            p,
            mu,
            cache: None,
        }
    }

    pub fn zeros(n: usize) -> Self {
        IterateState::new(vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n])
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn set_y(&mut self, v: Vec<f64>) {
        assert_eq!(v.len(), self.n());
        self.y = v;
        self.cache = None;
    }

    pub fn set_u(&mut self, v: Vec<f64>) {
        assert_eq!(v.len(), self.n());
        self.u = v;
        self.cache = None;
    }

    pub fn set_p(&mut self, v: Vec<f64>) {
        assert_eq!(v.len(), self.n());
        self.p = v;
        self.cache = None;
    }

    pub fn set_mu(&mut self, v: Vec<f64>) {
        assert_eq!(v.len(), self.n());
        self.mu = v;
        self.cache = None;
    }

    /// `x += rho * (dy, du, dp, dmu)`; invalidates the caches.
    pub fn take_step(&mut self, dy: &[f64], du: &[f64], dp: &[f64], dmu: &[f64], rho: f64) {
        vecops::axpy(rho, dy, &mut self.y);
        vecops::axpy(rho, du, &mut self.u);
        vecops::axpy(rho, dp, &mut self.p);
        vecops::axpy(rho, dmu, &mut self.mu);
        self.cache = None;
    }

    /// Recomputes and caches the residual, partition, and merit value.
    pub fn refresh(&mut self, prob: &ProblemInstance) -> &ResidualBlocks {
        let partition = classify(&self.u, &self.mu, prob);
        let residual = compute_residual(&self.y, &self.u, &self.p, &self.mu, &partition, prob);
        let theta_val = 0.5 * residual.norm_sq();
        self.cache = Some(Cache {
            residual,
            partition,
            theta_val,
        });
        &self.cache.as_ref().unwrap().residual
    }

    pub fn is_fresh(&self) -> bool {
        self.cache.is_some()
    }

    pub fn residual(&self) -> Option<&ResidualBlocks> {
        self.cache.as_ref().map(|c| &c.residual)
    }

    pub fn partition(&self) -> Option<&ActiveSetPartition> {
        self.cache.as_ref().map(|c| &c.partition)
    }

    /// `1/2 ||Theta(x)||^2`. Panics when the cache is stale.
    pub fn merit(&self) -> f64 {
        self.cache
            .as_ref()
            .expect("IterateState::merit: residual cache is stale; call refresh() first")
            .theta_val
    }

    /// `||Theta(x)||`. Panics when the cache is stale.
    pub fn theta_norm(&self) -> f64 {
        (2.0 * self.merit()).sqrt()
    }
}

pub(crate) fn compute_residual(
    y: &[f64],
    u: &[f64],
    p: &[f64],
    mu: &[f64],
    part: &ActiveSetPartition,
    prob: &ProblemInstance,
) -> ResidualBlocks {
    let n = prob.n;
    let m = prob.m_diag();

    // theta_y = M (y - y_d) + L^T p
    let mut theta_y = prob.l.matvec_transpose_alloc(p);
    for i in 0..n {
        theta_y[i] += m[i] * (y[i] - prob.y_d[i]);
    }

    // theta_u = alpha M u + M mu - Mbar^T p
    let mbar_t_p = prob.mbar.matvec_transpose_alloc(p);
    let theta_u: Vec<f64> = (0..n)
        .map(|i| prob.alpha * m[i] * u[i] + m[i] * mu[i] - mbar_t_p[i])
        .collect();

    // theta_p = L y - Mbar u - f
    let mut theta_p = prob.l.matvec_alloc(y);
    let mbar_u = prob.mbar.matvec_alloc(u);
    for i in 0..n {
        theta_p[i] -= mbar_u[i] + prob.f[i];
    }

    // theta_mu = M F(u, mu)
    let fvec = complementarity(u, mu, part, prob);
    let theta_mu: Vec<f64> = (0..n).map(|i| m[i] * fvec[i]).collect();

    ResidualBlocks {
        theta_y,
        theta_u,
        theta_p,
        theta_mu,
    }
}

/// Computes the residual blocks and refreshes the iterate's caches.
pub fn residual_theta<'a>(x: &'a mut IterateState, prob: &ProblemInstance) -> &'a ResidualBlocks {
    x.refresh(prob)
}

/// The merit value `1/2 ||Theta(x)||^2` from the iterate's cache.
pub fn merit(x: &IterateState) -> f64 {
    x.merit()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_poisson, GridSpec};
    use crate::sparse::SparseMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Small random instance with non-trivial M, Mbar, L for oracle tests.
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
            lt.push((r, r, 3.0 + rng.gen::<f64>()));
            mb.push((r, r, 1.0 + rng.gen::<f64>()));
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
            0.1,
            0.05,
            7.0,
        )
        .unwrap()
    }

    /// Independent per-definition classifier: evaluates the five set
    /// conditions exactly as written, in the same precedence order.
    fn classify_oracle(u: f64, mu: f64, a: f64, b: f64, c: f64, beta: f64) -> SetLabel {
        if c * (mu - beta) + (u - b) > 0.0 {
            SetLabel::Ab
        } else if c * (mu + beta) + (u - a) < 0.0 {
            SetLabel::Aa
        } else if u + c * (mu + beta) >= 0.0 && u + c * (mu - beta) <= 0.0 {
            SetLabel::A0
        } else if u + c * (mu - beta) > 0.0 {
            SetLabel::Iplus
        } else {
            SetLabel::Iminus
        }
    }

    /// Five-term min/max form of F, written straight from its definition.
    fn minmax_f(u: f64, mu: f64, a: f64, b: f64, c: f64, beta: f64) -> f64 {
        u - f64::max(0.0, u + c * (mu - beta)) - f64::min(0.0, u + c * (mu + beta))
            + f64::max(0.0, (u - b) + c * (mu - beta))
            + f64::min(0.0, (u - a) + c * (mu + beta))
    }

    #[test]
    fn zero_iterate_lands_in_sparsity_set() {
        let prob = make_poisson(GridSpec::from_level(2, 2), 1e-2, 1e-4).unwrap();
        let u = vec![0.0; prob.n];
        let mu = vec![0.0; prob.n];
        let part = classify(&u, &mu, &prob);
        assert_eq!(part.a0().len(), prob.n);
        assert_eq!(part.n_active(), prob.n);
        assert_eq!(part.n_inactive(), 0);
        // F vanishes on the all-zero iterate.
        let f = complementarity(&u, &mu, &part, &prob);
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn strict_bound_violation_lands_in_ab() {
        let mut prob = make_poisson(GridSpec::from_level(2, 2), 1e-2, 1e-4).unwrap();
        prob.c = 1.0;
        let mut u = vec![0.0; prob.n];
        let mut mu = vec![0.0; prob.n];
        u[3] = prob.b[3] + 1.0;
        mu[3] = prob.beta + 1.0;
        let part = classify(&u, &mu, &prob);
        assert_eq!(part.label(3), SetLabel::Ab);
        assert_eq!(part.ab(), &[3]);
    }

    #[test]
    fn inactive_plus_fixed_point_zeroes_f() {
        let prob = make_poisson(GridSpec::from_level(2, 2), 1e-2, 1e-4).unwrap();
        let mut u = vec![0.0; prob.n];
        let mut mu = vec![0.0; prob.n];
        u[0] = 1.0;
        mu[0] = prob.beta;
        let part = classify(&u, &mu, &prob);
        assert_eq!(part.label(0), SetLabel::Iplus);
        let f = complementarity(&u, &mu, &part, &prob);
        assert_eq!(f[0], 0.0);
    }

    #[test]
    fn classification_matches_per_definition_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut prob = random_instance(&mut rng, 1000);
        prob.c = 2.5;
        let u: Vec<f64> = (0..1000).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mu: Vec<f64> = (0..1000).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let part = classify(&u, &mu, &prob);
        let mut seen = [0usize; 5];
        for i in 0..1000 {
            let want = classify_oracle(u[i], mu[i], prob.a[i], prob.b[i], prob.c, prob.beta);
            assert_eq!(part.label(i), want, "index {i}");
            seen[match want {
                SetLabel::Ab => 0,
                SetLabel::Aa => 1,
                SetLabel::A0 => 2,
                SetLabel::Iplus => 3,
                SetLabel::Iminus => 4,
            }] += 1;
        }
        // The sample ranges are chosen so every set actually shows up.
        assert!(seen.iter().all(|&s| s > 0), "degenerate sample: {seen:?}");
    }

    #[test]
    fn compact_form_matches_minmax_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let n = 50;
            let mut prob = random_instance(&mut rng, n);
            prob.c = 10f64.powf(rng.gen_range(-1.0..2.0));
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let part = classify(&u, &mu, &prob);
            let f = complementarity(&u, &mu, &part, &prob);
            for i in 0..n {
                let want = minmax_f(u[i], mu[i], prob.a[i], prob.b[i], prob.c, prob.beta);
                assert!(
                    (f[i] - want).abs() <= 1e-14 * (1.0 + want.abs()),
                    "i={i}: compact {} vs minmax {}",
                    f[i],
                    want
                );
            }
        }
    }

    #[test]
    fn residual_blocks_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 20;
        let prob = random_instance(&mut rng, n);
        let mut x = IterateState::new(
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.gen_range(-0.4..0.4)).collect(),
        );
        let blocks = x.refresh(&prob).clone();

        // Dense re-computation with plain row-major arrays.
        let dense = |a: &SparseMatrix| -> Vec<Vec<f64>> {
            let mut d = vec![vec![0.0; a.ncols()]; a.nrows()];
            for (r, c, v) in a.triplets() {
                d[r][c] = v;
            }
            d
        };
        let mv = |d: &[Vec<f64>], v: &[f64]| -> Vec<f64> {
            d.iter()
                .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        };
        let mvt = |d: &[Vec<f64>], v: &[f64]| -> Vec<f64> {
            (0..d[0].len())
                .map(|c| (0..d.len()).map(|r| d[r][c] * v[r]).sum())
                .collect()
        };
        let (ld, mbd) = (dense(&prob.l), dense(&prob.mbar));
        let m = prob.m_diag();
        let part = classify(x.u(), x.mu(), &prob);
        let f = complementarity(x.u(), x.mu(), &part, &prob);

        let lt_p = mvt(&ld, x.p());
        let mb_t_p = mvt(&mbd, x.p());
        let l_y = mv(&ld, x.y());
        let mb_u = mv(&mbd, x.u());
        for i in 0..n {
            let ty = m[i] * (x.y()[i] - prob.y_d[i]) + lt_p[i];
            let tu = prob.alpha * m[i] * x.u()[i] - mb_t_p[i] + m[i] * x.mu()[i];
            let tp = l_y[i] - mb_u[i] - prob.f[i];
            let tm = m[i] * f[i];
            assert!((blocks.theta_y[i] - ty).abs() <= 1e-13 * (1.0 + ty.abs()));
            assert!((blocks.theta_u[i] - tu).abs() <= 1e-13 * (1.0 + tu.abs()));
            assert!((blocks.theta_p[i] - tp).abs() <= 1e-13 * (1.0 + tp.abs()));
            assert!((blocks.theta_mu[i] - tm).abs() <= 1e-13 * (1.0 + tm.abs()));
        }
    }

    #[test]
    fn merit_is_half_squared_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let n = 12;
        let prob = random_instance(&mut rng, n);
        let mut x = IterateState::new(
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        x.refresh(&prob);
        let stacked = x.residual().unwrap().stacked();
        let independent = 0.5 * crate::vecops::dot(&stacked, &stacked);
        assert!((merit(&x) - independent).abs() <= 1e-15 * (1.0 + independent));
        assert!((x.theta_norm() - independent.sqrt() * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "stale")]
    fn merit_panics_on_stale_cache() {
        let prob = make_poisson(GridSpec::from_level(2, 2), 1e-2, 1e-4).unwrap();
        let mut x = IterateState::zeros(prob.n);
        x.refresh(&prob);
        x.set_u(vec![1.0; prob.n]); // invalidates
        let _ = x.merit();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn partition_is_disjoint_and_exhaustive(
            seed in 0u64..1_000_000,
            c in 0.1f64..100.0,
            beta in 1e-6f64..0.1,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 64;
            let mut prob = random_instance(&mut rng, n);
            prob.c = c;
            prob.beta = beta;
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0*beta..3.0*beta)).collect();
            let part = classify(&u, &mu, &prob);

            // Exactly one label per index; the index lists agree with the
            // labels; active/inactive are complementary and sorted.
            let total = part.ab().len() + part.aa().len() + part.a0().len()
                + part.iplus().len() + part.iminus().len();
            prop_assert_eq!(total, n);
            prop_assert_eq!(part.n_active() + part.n_inactive(), n);
            for (list, label) in [
                (part.ab(), SetLabel::Ab),
                (part.aa(), SetLabel::Aa),
                (part.a0(), SetLabel::A0),
                (part.iplus(), SetLabel::Iplus),
                (part.iminus(), SetLabel::Iminus),
            ] {
                prop_assert!(list.windows(2).all(|w| w[0] < w[1]));
                for &i in list {
                    prop_assert_eq!(part.label(i), label);
                }
            }
            // Compact F equals the min/max form everywhere the sample lands.
            let f = complementarity(&u, &mu, &part, &prob);
            for i in 0..n {
                let want = minmax_f(u[i], mu[i], prob.a[i], prob.b[i], prob.c, prob.beta);
                prop_assert!((f[i] - want).abs() <= 1e-13 * (1.0 + want.abs()));
            }
        }
    }
}
