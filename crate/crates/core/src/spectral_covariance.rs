//! Low spectrum of `−Δσ`, the fiber-direction covariance value `G(q, q)` via
//! the Gamma-ratio calculus, and covariance-length lower bounds along a
//! Blaschke family.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cubicdiff::CubicDifferential;
use crate::domain::{integrate, ConformalMesh, Laplacian, ScalarField};
use crate::error::{Error, Result};
use crate::gamma::gamma_ratio;
use crate::linalg::{cholesky_solve, conjugate_gradient, dot, CholeskyPattern, SparseSym};
use crate::wang::FamilySweep;

/// Euler characteristic of the genus-2 surface.
pub const EULER_CHARACTERISTIC: f64 = -2.0;
pub const DEFAULT_MODES: usize = 200;
/// Generalized residual `‖Aφ − λMφ‖₂` required of every eigenpair.
pub const EIGEN_TOLERANCE: f64 = 1e-8;
/// Tail-to-variance ratio above which a report is flagged.
pub const TAIL_WARNING_RATIO: f64 = 0.05;

const SHIFT: f64 = 1.0;
const BLOCK: usize = 8;
const EIGEN_SEED: u64 = 0x5eed_0f_1a9;

/// The lowest eigenpairs of `Aφ = λMφ`, M-orthonormal, with `φ₀` constant.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<ScalarField>,
    /// Dimension of the Krylov space used.
    pub basis_size: usize,
    pub max_residual: f64,
}

impl SpectralData {
    /// Number of nonconstant modes.
    pub fn modes(&self) -> usize {
        self.eigenvalues.len() - 1
    }

    /// `max |⟨φ_i, φ_j⟩_M − δ_ij|`.
    pub fn orthonormality_defect(&self, mass: &[f64]) -> f64 {
        let n = self.eigenvectors.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let ip = m_dot(mass, &self.eigenvectors[i].0, &self.eigenvectors[j].0);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }

    /// `‖Aφ_j − λ_j Mφ_j‖₂` per pair.
    pub fn residuals(&self, laplacian: &Laplacian) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .map(|(&l, v)| eigen_residual(laplacian, l, &v.0))
            .collect()
    }

    /// Largest deviation of `φ₀` from its mean.
    pub fn constant_mode_spread(&self) -> f64 {
        let v = &self.eigenvectors[0];
        v.max() - v.min()
    }
}

fn m_dot(mass: &[f64], a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).zip(mass).map(|((x, y), m)| x * y * m).sum()
}

fn eigen_residual(laplacian: &Laplacian, lambda: f64, v: &[f64]) -> f64 {
    let av = laplacian.stiffness.matvec(v);
    av.iter()
        .zip(v)
        .zip(&laplacian.mass)
        .map(|((a, x), m)| (a - lambda * m * x).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Lowest `k + 1` eigenpairs by block shift-invert Krylov iteration on
/// `(A + sM)⁻¹M` with full M-reorthogonalisation and Rayleigh–Ritz on `A`.
///
/// The block start (constant vector plus seeded random vectors) resolves the
/// near-degenerate clusters produced by the octagon's symmetry.
pub fn eigensolve(laplacian: &Laplacian, k: usize) -> Result<SpectralData> {
    let n = laplacian.dim();
    if k < 1 || 4 * k >= n {
        return Err(Error::InvalidArgument(format!(
            "mode count {k} must be at least 1 and below a quarter of the {n} vertices"
        )));
    }
    let mass = &laplacian.mass;
    let shifted = laplacian.stiffness.add_diagonal(&mass.iter().map(|m| SHIFT * m).collect::<Vec<_>>());
    let factor = CholeskyPattern::analyze(&shifted)?.factor(&shifted)?;

    let mut rng = ChaCha8Rng::seed_from_u64(EIGEN_SEED);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut a_basis: Vec<Vec<f64>> = Vec::new();
    let mut block: Vec<Vec<f64>> = (0..BLOCK)
        .map(|i| {
            if i == 0 {
                vec![1.0; n]
            } else {
                (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()
            }
        })
        .collect();
    let cap = n.min(12 * (k + 1) + 400);
    let mut next_check = 2 * (k + 1) + 40;
    let mut last_error = f64::INFINITY;
    loop {
        let mut accepted = Vec::new();
        for mut v in block.drain(..) {
            let before = m_dot(mass, &v, &v).sqrt();
            for _ in 0..2 {
                for q in &basis {
                    let c = m_dot(mass, q, &v);
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let norm = m_dot(mass, &v, &v).sqrt();
            if norm > 1e-10 * before {
                v.iter_mut().for_each(|x| *x /= norm);
                a_basis.push(laplacian.stiffness.matvec(&v));
                basis.push(v.clone());
                accepted.push(v);
            }
        }
        if accepted.is_empty() {
            return Err(Error::Eigen("Krylov space exhausted before convergence".into()));
        }
        let m = basis.len();
        if m >= next_check || m >= cap {
            let data = rayleigh_ritz(laplacian, &basis, &a_basis, k)?;
            if data.max_residual < 0.5 * EIGEN_TOLERANCE {
                return Ok(data);
            }
            last_error = data.max_residual;
            next_check = m + (k + 1) / 2 + 40;
        }
        if m >= cap {
            return Err(Error::Eigen(format!(
                "block Krylov reached {m} vectors with eigen-residual {last_error:e}"
            )));
        }
        block = accepted
            .iter()
            .map(|v| {
                let mv: Vec<f64> = v.iter().zip(mass).map(|(x, m)| x * m).collect();
                factor.solve(&mv)
            })
            .collect();
    }
}

fn rayleigh_ritz(laplacian: &Laplacian, basis: &[Vec<f64>], a_basis: &[Vec<f64>], k: usize) -> Result<SpectralData> {
    let m = basis.len();
    let cols: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| (0..=j).map(|i| dot(&basis[i], &a_basis[j])).collect())
        .collect();
    let h = Mat::from_fn(m, m, |i, j| if i <= j { cols[j][i] } else { cols[i][j] });
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("projected eigenproblem failed: {e:?}")))?;
    let values = evd.S().column_vector();
    let vectors = evd.U();
    let n = laplacian.dim();
    let mut eigenvalues = Vec::with_capacity(k + 1);
    let mut eigenvectors = Vec::with_capacity(k + 1);
    for c in 0..=k {
        let mut v = vec![0.0; n];
        for (j, q) in basis.iter().enumerate() {
            let y = vectors[(j, c)];
            v.iter_mut().zip(q).for_each(|(x, b)| *x += y * b);
        }
        // deterministic sign: positive mass-weighted sum, else positive largest entry
        let s: f64 = v.iter().zip(&laplacian.mass).map(|(x, m)| x * m).sum();
        let pivot = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        let flip = if s.abs() > 1e-8 { s < 0.0 } else { pivot < 0.0 };
        if flip {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let lambda = if c == 0 { values[c].max(0.0) } else { values[c] };
        eigenvalues.push(lambda);
        eigenvectors.push(ScalarField(v));
    }
    let max_residual = eigenvalues
        .par_iter()
        .zip(&eigenvectors)
        .map(|(&l, v)| eigen_residual(laplacian, l, &v.0))
        .reduce(|| 0.0, f64::max);
    Ok(SpectralData {
        eigenvalues,
        eigenvectors,
        basis_size: m,
        max_residual,
    })
}

/// `G(q, q)` split into its mean and variance parts.
#[derive(Clone, Debug, Serialize)]
pub struct CovarianceReport {
    pub variance_term: f64,
    pub mean_term: f64,
    pub total: f64,
    pub modes: usize,
    /// Upper bound on the variance carried by modes beyond the truncation.
    pub tail_estimate: f64,
    pub truncation_warning: bool,
    /// `‖q‖²_σ`.
    pub q_norm_sq: f64,
}

/// `(−Δσ + 2)⁻¹(4|q|²_σ)`, i.e. `(A + 2M) w = 4MQ`, by sparse Cholesky.
pub fn fiber_potential(laplacian: &Laplacian, q_norm: &ScalarField) -> Result<ScalarField> {
    let (matrix, rhs) = fiber_system(laplacian, q_norm);
    Ok(ScalarField(cholesky_solve(&matrix, &rhs)?))
}

/// The same system by conjugate gradients.
pub fn fiber_potential_iterative(laplacian: &Laplacian, q_norm: &ScalarField) -> Result<ScalarField> {
    let (matrix, rhs) = fiber_system(laplacian, q_norm);
    Ok(ScalarField(conjugate_gradient(&matrix, &rhs, 1e-13, 20 * matrix.dim())?))
}

fn fiber_system(laplacian: &Laplacian, q_norm: &ScalarField) -> (SparseSym, Vec<f64>) {
    let two_m: Vec<f64> = laplacian.mass.iter().map(|m| 2.0 * m).collect();
    let rhs = q_norm.0.iter().zip(&laplacian.mass).map(|(q, m)| 4.0 * m * q).collect();
    (laplacian.stiffness.add_diagonal(&two_m), rhs)
}

/// `G = Σ_j 4·Γratio(λ_j)·⟨w, φ_j⟩²/Area + (∫|q|²_σ)²/(π²χ²)`.
///
/// The tail bound is the Parseval gap `‖w − w̄‖² − Σ⟨w, φ_j⟩²` weighted by the
/// multiplier of the last computed mode, which dominates every later one.
pub fn fiber_norm(mesh: &ConformalMesh, q: &CubicDifferential, spectral: &SpectralData) -> Result<CovarianceReport> {
    let laplacian = crate::domain::assemble_laplacian(mesh);
    fiber_norm_from_field(mesh, &laplacian, &q.norm_field(mesh), spectral)
}

pub fn fiber_norm_from_field(
    mesh: &ConformalMesh,
    laplacian: &Laplacian,
    q_norm: &ScalarField,
    spectral: &SpectralData,
) -> Result<CovarianceReport> {
    let area = mesh.total_mass();
    let q_norm_sq = integrate(mesh, q_norm);
    if q_norm_sq == 0.0 {
        return Ok(CovarianceReport {
            variance_term: 0.0,
            mean_term: 0.0,
            total: 0.0,
            modes: spectral.modes(),
            tail_estimate: 0.0,
            truncation_warning: false,
            q_norm_sq,
        });
    }
    let w = fiber_potential(laplacian, q_norm)?;
    let mean_w = integrate(mesh, &w) / area;
    let centred = w.map(|x| x - mean_w);
    let mut variance = 0.0;
    let mut captured = 0.0;
    for (l, phi) in spectral.eigenvalues.iter().zip(&spectral.eigenvectors).skip(1) {
        let c = m_dot(&mesh.mass, &centred.0, &phi.0);
        variance += 4.0 * gamma_ratio(*l)? * c * c / area;
        captured += c * c;
    }
    let gap = (m_dot(&mesh.mass, &centred.0, &centred.0) - captured).max(0.0);
    let last = *spectral.eigenvalues.last().expect("at least one mode");
    let tail_estimate = 4.0 * gamma_ratio(last)? * gap / area;
    let mean_term = q_norm_sq * q_norm_sq / (std::f64::consts::PI.powi(2) * EULER_CHARACTERISTIC.powi(2));
    Ok(CovarianceReport {
        variance_term: variance,
        mean_term,
        total: variance + mean_term,
        modes: spectral.modes(),
        tail_estimate,
        truncation_warning: tail_estimate > TAIL_WARNING_RATIO * variance,
        q_norm_sq,
    })
}

/// `⟨1, u̇_t⟩_{dv_{g_t}} / Area(g_t)` per sweep point.
pub fn mean_term_along_family(mesh: &ConformalMesh, sweep: &FamilySweep) -> Vec<f64> {
    sweep
        .u
        .par_iter()
        .zip(&sweep.udot)
        .map(|(u, udot)| {
            let weight = u.map(f64::exp);
            let area = integrate(mesh, &weight);
            let num: f64 = udot
                .0
                .iter()
                .zip(&weight.0)
                .zip(&mesh.mass)
                .map(|((d, w), m)| d * w * m)
                .sum();
            num / area
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LengthRow {
    pub t: f64,
    pub mean_term: f64,
    pub cumulative_length: f64,
    pub area: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LengthReport {
    pub rows: Vec<LengthRow>,
    /// `L(T) ≈ slope·log T + intercept` over the last two decades.
    pub slope: f64,
    pub intercept: f64,
    /// RMS deviation of the fit.
    pub fit_residual: f64,
    /// `min t·(mean term)` over the last decade.
    pub decay_constant: f64,
    /// `max (Area − 2π|χ|)/t^{1/3}` over the last decade.
    pub area_constant: f64,
    /// Ratio of the smallest to the largest of those quotients.
    pub area_constant_stability: f64,
}

/// Cumulative lower bound `L(T) = ∫₀ᵀ mean(t) dt` on the sweep grid, with its
/// logarithmic fit. Steps between positive grid points use the trapezoid rule
/// in `log t`, the step from 0 the ordinary rule.
pub fn length_lower_bound(t: &[f64], mean: &[f64], area: &[f64]) -> Result<LengthReport> {
    if t.len() != mean.len() || t.len() != area.len() || t.len() < 2 {
        return Err(Error::InvalidArgument("length table needs matching columns".into()));
    }
    let t_max = *t.last().unwrap();
    let t_min = t.iter().copied().find(|&x| x > 0.0).unwrap_or(t_max);
    let decades = (t_max / t_min).log10();
    if !(decades >= 2.0) {
        return Err(Error::InsufficientRange { decades, required: 2.0 });
    }
    let mut rows = Vec::with_capacity(t.len());
    let mut total = 0.0;
    for i in 0..t.len() {
        if i > 0 {
            let (a, b) = (t[i - 1], t[i]);
            total += if a > 0.0 {
                0.5 * (mean[i - 1] * a + mean[i] * b) * (b / a).ln()
            } else {
                0.5 * (mean[i - 1] + mean[i]) * (b - a)
            };
        }
        rows.push(LengthRow {
            t: t[i],
            mean_term: mean[i],
            cumulative_length: total,
            area: area[i],
        });
    }
    let fit: Vec<&LengthRow> = rows.iter().filter(|r| r.t >= t_max / 100.0 * (1.0 - 1e-12)).collect();
    let xs: Vec<f64> = fit.iter().map(|r| r.t.ln()).collect();
    let ys: Vec<f64> = fit.iter().map(|r| r.cumulative_length).collect();
    let nf = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / nf, ys.iter().sum::<f64>() / nf);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let fit_residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / nf)
        .sqrt();
    let last: Vec<&LengthRow> = rows.iter().filter(|r| r.t >= t_max / 10.0 * (1.0 - 1e-12)).collect();
    let decay_constant = last.iter().map(|r| r.t * r.mean_term).fold(f64::INFINITY, f64::min);
    let base_area = 2.0 * std::f64::consts::PI * EULER_CHARACTERISTIC.abs();
    let quotients: Vec<f64> = last.iter().map(|r| (r.area - base_area) / r.t.cbrt()).collect();
    let area_constant = quotients.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let area_min = quotients.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LengthReport {
        rows,
        slope,
        intercept,
        fit_residual,
        decay_constant,
        area_constant,
        area_constant_stability: area_min / area_constant,
    })
}

impl LengthReport {
    pub fn csv(&self) -> String {
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| vec![r.t, r.mean_term, r.cumulative_length, self.slope, r.area])
            .collect();
        crate::io::csv_string(&["t", "mean_term", "L", "fitted_slope", "area"], &rows)
    }
}
