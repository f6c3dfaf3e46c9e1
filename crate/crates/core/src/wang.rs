//! Wang's equation `Δσ u = 2e^u − 4t e^{−2u}|q|²_σ − 2` for the Blaschke family
//! `g_t = e^{u_t} σ`, its `t`-derivative, and the diagnostics along the family.
//!
//! Discretely the equation reads `F(u) = A u + M (2e^u − 4tQe^{−2u} − 2) = 0`
//! with `Q = |q|²_σ` per vertex class. The Jacobian
//! `A + M diag(2e^u + 8tQe^{−2u})` is a symmetric M-matrix, so Newton steps
//! are sparse Cholesky solves and the discrete maximum principle holds.

use rayon::prelude::*;
use serde::Serialize;

use crate::cubicdiff::{find_zeros, nearby_images, CubicDifferential};
use crate::domain::{assemble_laplacian, integrate, ConformalMesh, Laplacian, ScalarField, SURFACE_AREA};
use crate::error::{Error, Result};
use crate::fuchsian::{hyperbolic_distance, FuchsianGroup};
use crate::linalg::{CholeskyPattern, SparseSym};

/// Sup-norm residual target for Newton.
pub const NEWTON_TOLERANCE: f64 = 1e-10;
pub const MAX_NEWTON_ITERATIONS: usize = 60;
/// Slack used by the envelope and monotonicity checks.
pub const INVARIANT_SLACK: f64 = 1e-8;
/// Hyperbolic radius of the disks about zeros excluded from flat-limit errors.
pub const ZERO_EXCLUSION_RADIUS: f64 = 0.2;

/// Everything needed to solve on one mesh with one differential.
#[derive(Clone, Debug)]
pub struct WangProblem {
    pub laplacian: Laplacian,
    /// `|q|²_σ` per class.
    pub q_norm: ScalarField,
    pattern: CholeskyPattern,
}

impl WangProblem {
    pub fn new(mesh: &ConformalMesh, q: &CubicDifferential) -> Result<Self> {
        Self::from_norm(mesh, q.norm_field(mesh))
    }

    /// Builds the problem from precomputed `|q|²_σ` class values.
    pub fn from_norm(mesh: &ConformalMesh, q_norm: ScalarField) -> Result<Self> {
        if q_norm.len() != mesh.class_count() {
            return Err(Error::InvalidArgument("|q|² field does not match the mesh".into()));
        }
        let laplacian = assemble_laplacian(mesh);
        let pattern = CholeskyPattern::analyze(&laplacian.stiffness)?;
        Ok(Self {
            laplacian,
            q_norm,
            pattern,
        })
    }

    pub fn dim(&self) -> usize {
        self.laplacian.dim()
    }

    fn nonlinearity(&self, t: f64, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.q_norm.0)
            .map(|(&ui, &qi)| 2.0 * ui.exp() - 4.0 * t * qi * (-2.0 * ui).exp() - 2.0)
            .collect()
    }

    /// `F(u) = A u + M N(u)`.
    fn residual_vector(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let au = self.laplacian.stiffness.matvec(u);
        let n = self.nonlinearity(t, u);
        au.iter()
            .zip(&n)
            .zip(&self.laplacian.mass)
            .map(|((a, n), m)| a + m * n)
            .collect()
    }

    /// `‖Δσ u − RHS‖_∞ = ‖M⁻¹ F(u)‖_∞`.
    fn residual_sup(&self, f: &[f64]) -> f64 {
        f.iter()
            .zip(&self.laplacian.mass)
            .fold(0.0, |acc, (f, m)| acc.max((f / m).abs()))
    }

    fn jacobian(&self, t: f64, u: &[f64]) -> SparseSym {
        let diag: Vec<f64> = u
            .iter()
            .zip(&self.q_norm.0)
            .zip(&self.laplacian.mass)
            .map(|((&ui, &qi), m)| m * (2.0 * ui.exp() + 8.0 * t * qi * (-2.0 * ui).exp()))
            .collect();
        self.laplacian.stiffness.add_diagonal(&diag)
    }
}

/// A converged Wang solution with its solver record.
#[derive(Clone, Debug)]
pub struct WangSolution {
    pub t: f64,
    pub u: ScalarField,
    pub residual: f64,
    pub iterations: usize,
}

/// Newton iteration with Armijo backtracking on `‖M⁻¹F‖₂`.
pub fn solve_wang(problem: &WangProblem, t: f64, u_init: Option<&ScalarField>) -> Result<WangSolution> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t must be finite and non-negative, got {t}")));
    }
    let n = problem.dim();
    let mut u = match u_init {
        Some(init) if init.len() == n => init.0.clone(),
        Some(_) => return Err(Error::InvalidArgument("initial guess has the wrong size".into())),
        None => vec![0.0; n],
    };
    let weighted_norm = |f: &[f64]| -> f64 {
        f.iter()
            .zip(&problem.laplacian.mass)
            .map(|(f, m)| f * f / m)
            .sum::<f64>()
            .sqrt()
    };
    let mut f = problem.residual_vector(t, &u);
    let mut sup = problem.residual_sup(&f);
    let mut iterations = 0;
    // near-roundoff stagnation is accepted once the residual stops improving
    let mut stalled = 0;
    while sup >= NEWTON_TOLERANCE {
        if iterations >= MAX_NEWTON_ITERATIONS || stalled >= 3 {
            return Err(Error::NonConvergence {
                t,
                residual: sup,
                iterations,
            });
        }
        let factor = problem.pattern.factor(&problem.jacobian(t, &u))?;
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let step = factor.solve(&rhs);
        let base = weighted_norm(&f);
        let mut lambda = 1.0;
        let (mut trial, mut f_trial);
        loop {
            trial = u.iter().zip(&step).map(|(a, d)| a + lambda * d).collect::<Vec<_>>();
            f_trial = problem.residual_vector(t, &trial);
            if weighted_norm(&f_trial) <= (1.0 - 1e-4 * lambda) * base || lambda < 1e-6 {
                break;
            }
            lambda *= 0.5;
        }
        let new_sup = problem.residual_sup(&f_trial);
        if new_sup >= sup {
            stalled += 1;
        } else {
            stalled = 0;
        }
        u = trial;
        f = f_trial;
        sup = new_sup;
        iterations += 1;
    }
    Ok(WangSolution {
        t,
        u: ScalarField(u),
        residual: sup,
        iterations,
    })
}

/// `‖Δσ u − (2e^u − 4t e^{−2u}Q − 2)‖_∞`, assembled triangle by triangle
/// straight from the cotangent formula, independently of the stiffness matrix.
pub fn independent_residual(mesh: &ConformalMesh, q_norm: &ScalarField, t: f64, u: &ScalarField) -> f64 {
    let mut flux = vec![0.0; mesh.class_count()];
    for tri in &mesh.triangles {
        let p = tri.map(|v| mesh.vertices[v]);
        let c = tri.map(|v| mesh.class_of[v]);
        for k in 0..3 {
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            let o = p[k];
            let (a, b) = (p[i] - o, p[j] - o);
            let cot = (a.re * b.re + a.im * b.im) / (a.re * b.im - a.im * b.re).abs();
            let w = 0.5 * cot * (u.0[c[j]] - u.0[c[i]]);
            flux[c[i]] += w;
            flux[c[j]] -= w;
        }
    }
    flux.iter()
        .enumerate()
        .map(|(c, fl)| {
            let lap = fl / mesh.mass[c];
            let ui = u.0[c];
            let rhs = 2.0 * ui.exp() - 4.0 * t * q_norm.0[c] * (-2.0 * ui).exp() - 2.0;
            (lap - rhs).abs()
        })
        .fold(0.0, f64::max)
}

/// `u̇_t` from `(A + M diag(2e^u + 8tQe^{−2u})) u̇ = M·4Qe^{−2u}`, i.e.
/// `Δ_{g_t} u̇ = (2 + 8t|q|²_{g_t}) u̇ − 4|q|²_{g_t}` scaled by `e^{u}`.
pub fn solve_udot(problem: &WangProblem, t: f64, u: &ScalarField) -> Result<ScalarField> {
    let factor = problem.pattern.factor(&problem.jacobian(t, &u.0))?;
    let rhs: Vec<f64> = u
        .0
        .iter()
        .zip(&problem.q_norm.0)
        .zip(&problem.laplacian.mass)
        .map(|((&ui, &qi), m)| m * 4.0 * qi * (-2.0 * ui).exp())
        .collect();
    let x = factor.solve(&rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("u̇ solve produced non-finite values".into()));
    }
    Ok(ScalarField(x))
}

/// The unique positive root of `x³ − x² − 2a` (equivalently the largest root
/// of `2x³ − 2x² − 4a`), by safeguarded Newton on the bracket `[1, 1 + (2a)^{1/3}]`.
pub fn supersolution_root(a: f64) -> f64 {
    assert!(a >= 0.0, "supersolution_root needs a >= 0");
    if a == 0.0 {
        return 1.0;
    }
    let p = |x: f64| x * x * (x - 1.0) - 2.0 * a;
    let (mut lo, mut hi) = (1.0, 1.0 + (2.0 * a).cbrt());
    let mut x = hi;
    for _ in 0..200 {
        let fx = p(x);
        if fx > 0.0 {
            hi = x;
        } else if fx < 0.0 {
            lo = x;
        } else {
            return x;
        }
        let newton = x - fx / (3.0 * x * x - 2.0 * x);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 2.0 * f64::EPSILON * x {
            return next;
        }
        x = next;
    }
    x
}

/// Diagnostics for one point of the family.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub t: f64,
    pub min_u: f64,
    pub max_u: f64,
    /// Newton residual `‖M⁻¹F‖_∞`.
    pub residual: f64,
    /// The independently assembled residual.
    pub certified_residual: f64,
    pub iterations: usize,
    pub area: f64,
    /// `log R(max t|q|²_σ)`.
    pub envelope: f64,
    /// `(∫K dv_g + 4π) / 4π`.
    pub gauss_bonnet_defect: f64,
    /// `max 2t|q|²_{g_t}`; curvature is negative when this is below 1.
    pub max_curvature_ratio: f64,
    pub min_udot: f64,
    pub max_udot: f64,
    /// Smallest `u_t − u_{t_prev}` (zero at the first point).
    pub min_increment: f64,
}

/// Pass/fail record of a family invariant.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    /// Distance to the threshold; positive means passing.
    pub margin: f64,
}

impl InvariantCheck {
    pub fn new(name: &str, margin: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: margin >= 0.0,
            margin,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FamilySweep {
    pub points: Vec<SweepPoint>,
    pub u: Vec<ScalarField>,
    pub udot: Vec<ScalarField>,
    pub checks: Vec<InvariantCheck>,
}

impl FamilySweep {
    pub fn t_grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn csv(&self) -> String {
        let rows: Vec<Vec<f64>> = self
            .points
            .iter()
            .map(|p| {
                vec![
                    p.t,
                    p.min_u,
                    p.max_u,
                    p.area,
                    p.residual,
                    p.certified_residual,
                    p.envelope,
                    p.gauss_bonnet_defect,
                ]
            })
            .collect();
        crate::io::csv_string(
            &["t", "min_u", "max_u", "area", "residual", "certified_residual", "envelope", "gauss_bonnet_defect"],
            &rows,
        )
    }
}

/// Logarithmic grid of `count` points from `start` to `stop`, optionally preceded by 0.
pub fn log_grid(start: f64, stop: f64, count: usize, include_zero: bool) -> Vec<f64> {
    let mut grid = Vec::with_capacity(count + 1);
    if include_zero {
        grid.push(0.0);
    }
    if count == 1 {
        grid.push(start);
    } else {
        let (a, b) = (start.ln(), stop.ln());
        for i in 0..count {
            grid.push((a + (b - a) * i as f64 / (count - 1) as f64).exp());
        }
    }
    grid
}

/// Solves along `t_grid` with warm-started continuation and records every invariant.
pub fn sweep_family(mesh: &ConformalMesh, problem: &WangProblem, t_grid: &[f64]) -> Result<FamilySweep> {
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("t grid is empty".into()));
    }
    if t_grid[0] < 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "t grid must be non-negative and strictly increasing".into(),
        ));
    }
    let q_max = problem.q_norm.max();
    let mut points = Vec::new();
    let mut us: Vec<ScalarField> = Vec::new();
    let mut udots: Vec<ScalarField> = Vec::new();
    for &t in t_grid {
        // extrapolate with the previous derivative for a closer start
        let guess = match (us.last(), udots.last(), points.last()) {
            (Some(u), Some(ud), Some(prev)) => {
                let prev: &SweepPoint = prev;
                let dt = t - prev.t;
                let g = ScalarField(
                    u.0.iter()
                        .zip(&ud.0)
                        .map(|(a, b): (&f64, &f64)| a + (dt * b).min(1.0))
                        .collect(),
                );
                Some(g)
            }
            _ => None,
        };
        let sol = match solve_wang(problem, t, guess.as_ref()) {
            Ok(s) => s,
            Err(_) if guess.is_some() => solve_wang(problem, t, us.last())?,
            Err(e) => return Err(e),
        };
        let udot = solve_udot(problem, t, &sol.u)?;
        let u = &sol.u;
        let exp_u = u.map(f64::exp);
        let area = integrate(mesh, &exp_u);
        let curvature = ScalarField(
            u.0.iter()
                .zip(&problem.q_norm.0)
                .map(|(&ui, &qi)| ui.exp() * (-1.0 + 2.0 * t * qi * (-3.0 * ui).exp()))
                .collect(),
        );
        let gb = integrate(mesh, &curvature);
        let ratio = u
            .0
            .iter()
            .zip(&problem.q_norm.0)
            .map(|(&ui, &qi)| 2.0 * t * qi * (-3.0 * ui).exp())
            .fold(0.0, f64::max);
        let min_increment = match us.last() {
            Some(prev) => u.0.iter().zip(&prev.0).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min),
            None => 0.0,
        };
        points.push(SweepPoint {
            t,
            min_u: u.min(),
            max_u: u.max(),
            residual: sol.residual,
            certified_residual: independent_residual(mesh, &problem.q_norm, t, u),
            iterations: sol.iterations,
            area,
            envelope: supersolution_root(t * q_max).ln(),
            gauss_bonnet_defect: (gb + SURFACE_AREA) / SURFACE_AREA,
            max_curvature_ratio: ratio,
            min_udot: udot.min(),
            max_udot: udot.max(),
            min_increment,
        });
        us.push(sol.u);
        udots.push(udot);
    }
    let checks = family_checks(&points, problem.q_norm.max() > 0.0);
    Ok(FamilySweep {
        points,
        u: us,
        udot: udots,
        checks,
    })
}

fn family_checks(points: &[SweepPoint], q_nonzero: bool) -> Vec<InvariantCheck> {
    let worst = |f: &dyn Fn(&SweepPoint) -> f64| points.iter().map(f).fold(f64::INFINITY, f64::min);
    let mut checks = vec![
        InvariantCheck::new("residual", worst(&|p| NEWTON_TOLERANCE - p.residual)),
        InvariantCheck::new("certified_residual", worst(&|p| 1e-9 - p.certified_residual)),
        InvariantCheck::new("envelope_lower", worst(&|p| p.min_u)),
        InvariantCheck::new("envelope_upper", worst(&|p| p.envelope + INVARIANT_SLACK - p.max_u)),
        InvariantCheck::new("monotone_in_t", worst(&|p| p.min_increment + INVARIANT_SLACK)),
        InvariantCheck::new("gauss_bonnet", worst(&|p| 5e-3 - p.gauss_bonnet_defect.abs())),
        InvariantCheck::new("negative_curvature", worst(&|p| 1.0 - p.max_curvature_ratio)),
    ];
    let area_growth = points
        .windows(2)
        .map(|w| w[1].area - w[0].area + 1e-9 * w[0].area)
        .fold(f64::INFINITY, f64::min);
    checks.push(InvariantCheck::new("area_monotone", if points.len() > 1 { area_growth } else { 0.0 }));
    if q_nonzero {
        checks.push(InvariantCheck::new("udot_positive", worst(&|p| p.min_udot)));
        checks.push(InvariantCheck::new("udot_nonconstant", worst(&|p| p.max_udot - p.min_udot)));
    }
    checks
}

/// Sup relative flat-limit error at one `t`.
#[derive(Clone, Debug, Serialize)]
pub struct FlatLimitRow {
    pub t: f64,
    pub sup_relative_error: f64,
    pub vertices_used: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlatLimitReport {
    pub exclusion_radius: f64,
    /// Zeros (and nearby images) whose disks are excluded.
    pub excluded_centres: usize,
    pub rows: Vec<FlatLimitRow>,
    pub decreasing: bool,
}

/// Classes farther than `radius` from every zero of `q` on the surface.
pub fn zero_free_classes(
    group: &FuchsianGroup,
    mesh: &ConformalMesh,
    q: &CubicDifferential,
    radius: f64,
) -> Result<(Vec<usize>, usize)> {
    let zeros = find_zeros(group, q, mesh);
    let mut centres = zeros.clone();
    // the vertex class is a zero whenever the corners are
    if zeros.iter().any(|&z| (0..8).any(|k| hyperbolic_distance(z, group.vertex(k)) < radius)) {
        centres.extend((0..8).map(|k| group.vertex(k)));
    }
    let images = nearby_images(group, &centres, 4, radius)?;
    let mut free = vec![true; mesh.class_count()];
    for (v, &z) in mesh.vertices.iter().enumerate() {
        if images.iter().any(|&w| hyperbolic_distance(z, w) < radius) {
            free[mesh.class_of[v]] = false;
        }
    }
    let keep: Vec<usize> = (0..free.len()).filter(|&c| free[c]).collect();
    Ok((keep, images.len()))
}

/// `sup |t^{−1/3} e^{u_t} ρ − 2^{1/3}|f|^{2/3}| / (2^{1/3}|f|^{2/3})` away from the
/// zeros of `q`, for every sweep point with `t > 0`.
///
/// Dividing through by `ρ` gives the class-invariant form
/// `|t^{−1/3} e^{u} − (2Q)^{1/3}| / (2Q)^{1/3}` used here.
pub fn flat_limit_report(
    group: &FuchsianGroup,
    mesh: &ConformalMesh,
    q: &CubicDifferential,
    q_norm: &ScalarField,
    sweep: &FamilySweep,
    radius: f64,
) -> Result<FlatLimitReport> {
    let (keep, excluded_centres) = zero_free_classes(group, mesh, q, radius)?;
    let keep: Vec<usize> = keep.into_iter().filter(|&c| q_norm.0[c] > 0.0).collect();
    if keep.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let rows: Vec<FlatLimitRow> = sweep
        .points
        .par_iter()
        .zip(&sweep.u)
        .filter(|(p, _)| p.t > 0.0)
        .map(|(p, u)| {
            let scale = p.t.cbrt().recip();
            let err = keep
                .iter()
                .map(|&c| {
                    let target = (2.0 * q_norm.0[c]).cbrt();
                    (scale * u.0[c].exp() - target).abs() / target
                })
                .fold(0.0, f64::max);
            FlatLimitRow {
                t: p.t,
                sup_relative_error: err,
                vertices_used: keep.len(),
            }
        })
        .collect();
    let decreasing = rows.windows(2).all(|w| w[1].sup_relative_error < w[0].sup_relative_error);
    Ok(FlatLimitReport {
        exclusion_radius: radius,
        excluded_centres,
        rows,
        decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_special_values() {
        assert_eq!(supersolution_root(0.0), 1.0);
        let r = supersolution_root(3.0);
        // bisection oracle
        let (mut lo, mut hi) = (1.0f64, 3.0f64);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if m * m * m - m * m - 6.0 > 0.0 {
                hi = m
            } else {
                lo = m
            }
        }
        assert!((r - lo).abs() < 1e-12);
        assert!((r - 2.2).abs() < 0.05);
        let big = supersolution_root(1e6);
        assert!((big / 2e6f64.cbrt() - 1.0).abs() < 0.01);
    }

    #[test]
    fn root_is_monotone() {
        let mut prev = 0.0;
        for i in 0..200 {
            let a = 1e-4 * 1.15f64.powi(i);
            let r = supersolution_root(a);
            assert!(r >= prev);
            assert!((r * r * (r - 1.0) - 2.0 * a).abs() < 1e-9 * (1.0 + 2.0 * a));
            prev = r;
        }
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-2, 1e4, 20, true);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 1e-2).abs() < 1e-15);
        assert!((g[20] / 1e4 - 1.0).abs() < 1e-12);
    }
}
