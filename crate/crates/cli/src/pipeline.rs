//! The pipelines behind the subcommands. Each produces reports holding a JSON
//! summary, CSV tables and invariant checks; writing them out is the caller's job.

use std::time::Instant;

use blaschke_core::cubicdiff::{count_zeros, default_differential, poincare_series, CubicDifferential, Seed};
use blaschke_core::domain::{
    assemble_laplacian, build_octagon_mesh, integrate, ConformalMesh, Laplacian, MeshStats, ScalarField,
};
use blaschke_core::flow::{short_geodesics, variance_mc, xray_survey, XrayReport};
use blaschke_core::fuchsian::{octagon_group, FuchsianGroup};
use blaschke_core::gamma::gamma_ratio;
use blaschke_core::io::{csv_float, csv_string, to_json_string};
use blaschke_core::spectral_covariance::{
    eigensolve, fiber_norm_from_field, fiber_potential, fiber_potential_iterative, length_lower_bound,
    mean_term_along_family, CovarianceReport, LengthReport, SpectralData,
};
use blaschke_core::wang::{
    flat_limit_report, log_grid, sweep_family, FamilySweep, FlatLimitReport, InvariantCheck, SweepPoint,
    WangProblem, ZERO_EXCLUSION_RADIUS,
};
use blaschke_core::Error;
use serde::Serialize;

use crate::config::RunConfig;

/// Relative error allowed between the two `t = 0` mean-term solves and the closed form.
pub const MEAN_TERM_TOLERANCE: f64 = 1e-3;
/// Relative deviation allowed from exact quartic scaling of `G` under `q → cq`.
pub const SCALING_TOLERANCE: f64 = 1e-8;
/// Flat-limit error the family should reach at the last grid point.
pub const FLAT_LIMIT_TARGET: f64 = 0.1;
/// Fraction of the slope allowed as RMS residual of the logarithmic length fit.
pub const LENGTH_FIT_TOLERANCE: f64 = 0.1;
/// Standard errors allowed between Monte-Carlo and spectral variances.
pub const MC_SIGMAS: f64 = 3.0;
/// `|I₂(D_σχ)| / ‖χ‖∞` bound on potential tensors.
pub const XRAY_TOLERANCE: f64 = 1e-3;
/// Factor by which the control tensor must clear the X-ray bound on average.
pub const XRAY_CONTROL_FACTOR: f64 = 10.0;
// Continuation points per decade when a grid starts far from t = 0.
const CONTINUATION_PER_DECADE: usize = 4;
const CONTINUATION_START: f64 = 1e-2;

/// A text artifact to be written under the output directory.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// The outcome of one pipeline stage.
#[derive(Clone, Debug)]
pub struct Report {
    pub command: &'static str,
    pub checks: Vec<InvariantCheck>,
    pub artifacts: Vec<Artifact>,
}

impl Report {
    pub fn failures(&self) -> Vec<&InvariantCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

#[derive(Serialize)]
struct Versions {
    core: &'static str,
    cli: &'static str,
}

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'static str,
    config_hash: String,
    config: &'a RunConfig,
    versions: Versions,
}

#[derive(Clone, Debug, Serialize)]
struct Setup {
    polynomial: Seed,
    truncation: usize,
    series_tail: f64,
    q_norm_sq: f64,
    mesh: MeshStats,
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    provenance: Provenance<'a>,
    setup: &'a Setup,
    passed: bool,
    checks: &'a [InvariantCheck],
    result: T,
}

/// Shared state of a run: group, differential, mesh and cached spectral data.
pub struct Session {
    pub config: RunConfig,
    pub group: FuchsianGroup,
    pub q: CubicDifferential,
    pub mesh: ConformalMesh,
    pub laplacian: Laplacian,
    pub q_norm: ScalarField,
    setup: Setup,
    spectral: Option<SpectralData>,
    solve_sweep: Option<FamilySweep>,
    verbose: bool,
    started: Instant,
}

impl Session {
    pub fn new(config: RunConfig, verbose: bool) -> Result<Self, Error> {
        let started = Instant::now();
        let group = octagon_group();
        let (seed, q) = match config.polynomial {
            Some(seed) => (seed, poincare_series(&group, seed, config.truncation)?),
            None => default_differential(&group, config.truncation)?,
        };
        let mesh = build_octagon_mesh(&group, config.h)?;
        let laplacian = assemble_laplacian(&mesh);
        let q_norm = q.norm_field(&mesh);
        let setup = Setup {
            polynomial: seed,
            truncation: config.truncation,
            series_tail: q.tail_estimate,
            q_norm_sq: integrate(&mesh, &q_norm),
            mesh: mesh.stats(),
        };
        let session = Self {
            config,
            group,
            q,
            mesh,
            laplacian,
            q_norm,
            setup,
            spectral: None,
            solve_sweep: None,
            verbose,
            started,
        };
        session.log(&format!(
            "setup: seed {:?}, {} classes, ‖q‖² = {:.6e}",
            seed, session.setup.mesh.classes, session.setup.q_norm_sq
        ));
        Ok(session)
    }

    fn log(&self, message: &str) {
        if self.verbose {
            eprintln!("[{:8.2}s] {message}", self.started.elapsed().as_secs_f64());
        }
    }

    fn problem(&self) -> Result<WangProblem, Error> {
        WangProblem::from_norm(&self.mesh, self.q_norm.clone())
    }

    fn q_is_zero(&self) -> bool {
        self.setup.q_norm_sq == 0.0
    }

    pub fn spectral(&mut self) -> Result<&SpectralData, Error> {
        if self.spectral.is_none() {
            let data = eigensolve(&self.laplacian, self.config.modes)?;
            self.log(&format!(
                "eigensolve: {} modes, basis {}, residual {:.1e}",
                data.modes(),
                data.basis_size,
                data.max_residual
            ));
            self.spectral = Some(data);
        }
        Ok(self.spectral.as_ref().expect("just computed"))
    }

    fn solve_sweep(&mut self) -> Result<&FamilySweep, Error> {
        if self.solve_sweep.is_none() {
            let grid = self.config.t_grid.points();
            let sweep = sweep_family(&self.mesh, &self.problem()?, &grid)?;
            self.log(&format!("solve sweep: {} points", grid.len()));
            self.solve_sweep = Some(sweep);
        }
        Ok(self.solve_sweep.as_ref().expect("just computed"))
    }

    /// Sweeps from small `t` through `grid` and keeps only the points of `grid`.
    fn sweep_through(&self, grid: &[f64]) -> Result<FamilySweep, Error> {
        let top = *grid.last().expect("validated grid is nonempty");
        let mut full = vec![0.0];
        if top > CONTINUATION_START {
            let decades = (top / CONTINUATION_START).log10();
            let count = (decades * CONTINUATION_PER_DECADE as f64).ceil() as usize + 1;
            full.extend(log_grid(CONTINUATION_START, top, count, false));
        }
        full.extend_from_slice(grid);
        full.sort_by(f64::total_cmp);
        full.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        let sweep = sweep_family(&self.mesh, &self.problem()?, &full)?;
        let keep: Vec<usize> = grid
            .iter()
            .map(|t| {
                sweep
                    .points
                    .iter()
                    .position(|p| (p.t - t).abs() <= 1e-12 * t.abs())
                    .expect("grid point is in the continuation grid")
            })
            .collect();
        Ok(FamilySweep {
            points: keep.iter().map(|&i| sweep.points[i].clone()).collect(),
            u: keep.iter().map(|&i| sweep.u[i].clone()).collect(),
            udot: keep.iter().map(|&i| sweep.udot[i].clone()).collect(),
            // invariants are judged on the whole continuation path
            checks: sweep.checks,
        })
    }

    fn report<T: Serialize>(
        &self,
        command: &'static str,
        checks: Vec<InvariantCheck>,
        result: T,
        mut tables: Vec<Artifact>,
    ) -> Result<Report, Error> {
        let summary = Summary {
            provenance: Provenance {
                command,
                config_hash: self.config.hash(),
                config: &self.config,
                versions: Versions {
                    core: blaschke_core::VERSION,
                    cli: env!("CARGO_PKG_VERSION"),
                },
            },
            setup: &self.setup,
            passed: checks.iter().all(|c| c.passed),
            checks: &checks,
            result,
        };
        let mut artifacts = vec![Artifact {
            name: format!("{}.json", command.replace('-', "_")),
            contents: to_json_string(&summary)? + "\n",
        }];
        artifacts.append(&mut tables);
        for c in checks.iter().filter(|c| !c.passed) {
            self.log(&format!("{command}: invariant {} failed (margin {:.3e})", c.name, c.margin));
        }
        Ok(Report {
            command,
            checks,
            artifacts,
        })
    }
}

fn u_table(sweep: &FamilySweep) -> String {
    let mut out = String::from("class");
    for p in &sweep.points {
        out.push(',');
        out.push_str(&format!("u@{}", csv_float(p.t)));
    }
    out.push('\n');
    let n = sweep.u.first().map_or(0, |u| u.len());
    for class in 0..n {
        out.push_str(&class.to_string());
        for u in &sweep.u {
            out.push(',');
            out.push_str(&csv_float(u.0[class]));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct SolveResult<'a> {
    zero_count: Option<f64>,
    points: &'a [SweepPoint],
}

pub fn cmd_solve(session: &mut Session) -> Result<Report, Error> {
    let zero_count = if session.q_is_zero() {
        None
    } else {
        Some(count_zeros(&session.group, &session.q, &session.mesh).total)
    };
    let sweep = session.solve_sweep()?.clone();
    let tables = vec![
        Artifact {
            name: "sweep.csv".into(),
            contents: sweep.csv(),
        },
        Artifact {
            name: "u.csv".into(),
            contents: u_table(&sweep),
        },
    ];
    let result = SolveResult {
        zero_count,
        points: &sweep.points,
    };
    session.report("solve", sweep.checks.clone(), result, tables)
}

#[derive(Serialize)]
struct FlatLimitResult<'a> {
    skipped: Option<&'static str>,
    target: f64,
    below_target: Option<bool>,
    report: Option<&'a FlatLimitReport>,
}

pub fn cmd_flat_limit(session: &mut Session) -> Result<Report, Error> {
    if session.q_is_zero() {
        let result = FlatLimitResult {
            skipped: Some("q vanishes identically"),
            target: FLAT_LIMIT_TARGET,
            below_target: None,
            report: None,
        };
        return session.report("flat-limit", vec![], result, vec![]);
    }
    let grid = session.config.flat_limit_grid.points();
    let sweep = session.sweep_through(&grid)?;
    let report = flat_limit_report(
        &session.group,
        &session.mesh,
        &session.q,
        &session.q_norm,
        &sweep,
        ZERO_EXCLUSION_RADIUS,
    )?;
    session.log(&format!(
        "flat limit: {:?}",
        report.rows.iter().map(|r| r.sup_relative_error).collect::<Vec<_>>()
    ));
    let errors: Vec<f64> = report.rows.iter().map(|r| r.sup_relative_error).collect();
    let decrease = errors.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    let mut checks = sweep.checks.clone();
    let mut decreasing = InvariantCheck::new("flat_limit_decreasing", decrease);
    decreasing.passed = report.decreasing;
    checks.push(decreasing);
    let last = errors.last().copied().unwrap_or(f64::INFINITY);
    let rows: Vec<Vec<f64>> = report
        .rows
        .iter()
        .map(|r| vec![r.t, r.sup_relative_error, r.vertices_used as f64])
        .collect();
    let tables = vec![Artifact {
        name: "flat_limit.csv".into(),
        contents: csv_string(&["t", "sup_relative_error", "vertices_used"], &rows),
    }];
    let result = FlatLimitResult {
        skipped: None,
        target: FLAT_LIMIT_TARGET,
        below_target: Some(last < FLAT_LIMIT_TARGET),
        report: Some(&report),
    };
    session.report("flat-limit", checks, result, tables)
}

#[derive(Serialize)]
struct LengthResult<'a> {
    skipped: Option<&'static str>,
    report: Option<&'a LengthReport>,
}

pub fn cmd_length(session: &mut Session) -> Result<Report, Error> {
    if session.q_is_zero() {
        let result = LengthResult {
            skipped: Some("q vanishes identically"),
            report: None,
        };
        return session.report("length", vec![], result, vec![]);
    }
    let grid = session.config.length_grid.points();
    let sweep = session.sweep_through(&grid)?;
    let mean = mean_term_along_family(&session.mesh, &sweep);
    let area: Vec<f64> = sweep.points.iter().map(|p| p.area).collect();
    let report = length_lower_bound(&grid, &mean, &area)?;
    session.log(&format!(
        "length: slope {:.4e}, residual {:.2e}, t·mean ≥ {:.4e}",
        report.slope, report.fit_residual, report.decay_constant
    ));
    let mut checks = sweep.checks.clone();
    checks.push(InvariantCheck::new("mean_term_decay", report.decay_constant));
    checks.push(InvariantCheck::new("length_slope", report.slope));
    checks.push(InvariantCheck::new(
        "length_fit",
        LENGTH_FIT_TOLERANCE * report.slope - report.fit_residual,
    ));
    let tables = vec![Artifact {
        name: "length.csv".into(),
        contents: report.csv(),
    }];
    let result = LengthResult {
        skipped: None,
        report: Some(&report),
    };
    session.report("length", checks, result, tables)
}

#[derive(Clone, Debug, Serialize)]
struct VarianceRow {
    f_id: usize,
    eigenvalue: f64,
    horizon: f64,
    samples: usize,
    seed: u64,
    estimate: f64,
    stderr: f64,
    /// `4·Γratio(λ)·‖φ‖²` with the probability-normalised norm.
    spectral_prediction: f64,
    spectral_sigmas: f64,
    /// `Γratio(λ)·‖φ‖²`, the integrated autocorrelation of the flow.
    flow_prediction: f64,
    flow_sigmas: f64,
}

pub fn cmd_variance_mc(session: &mut Session) -> Result<Report, Error> {
    let mc = session.config.monte_carlo.clone();
    let seed = session.config.seed;
    session.spectral()?;
    let spectral = session.spectral.as_ref().expect("computed above");
    let area = session.mesh.total_mass();
    let mut rows = Vec::with_capacity(mc.eigenfunctions);
    let mut checks = Vec::new();
    for j in 1..=mc.eigenfunctions {
        let phi = &spectral.eigenvectors[j];
        let lambda = spectral.eigenvalues[j];
        let est = variance_mc(&session.group, &session.mesh, phi, mc.horizon, mc.samples, mc.step, seed)?;
        let norm = integrate(&session.mesh, &phi.map(|x| x * x)) / area;
        let ratio = gamma_ratio(lambda)?;
        let sigmas = |p: f64| (est.estimate - p).abs() / est.standard_error;
        let row = VarianceRow {
            f_id: j,
            eigenvalue: lambda,
            horizon: mc.horizon,
            samples: mc.samples,
            seed,
            estimate: est.estimate,
            stderr: est.standard_error,
            spectral_prediction: 4.0 * ratio * norm,
            spectral_sigmas: sigmas(4.0 * ratio * norm),
            flow_prediction: ratio * norm,
            flow_sigmas: sigmas(ratio * norm),
        };
        session.log(&format!(
            "mc φ_{j}: {:.5} ± {:.5} (spectral {:.5}, flow {:.5})",
            row.estimate, row.stderr, row.spectral_prediction, row.flow_prediction
        ));
        checks.push(InvariantCheck::new(
            &format!("mc_spectral_agreement_{j}"),
            MC_SIGMAS - row.spectral_sigmas,
        ));
        rows.push(row);
    }
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            vec![
                r.f_id as f64,
                r.eigenvalue,
                r.estimate,
                r.stderr,
                r.spectral_prediction,
                r.flow_prediction,
            ]
        })
        .collect();
    let tables = vec![Artifact {
        name: "variance_mc.csv".into(),
        contents: csv_string(
            &["f_id", "eigenvalue", "estimate", "stderr", "spectral_prediction", "flow_prediction"],
            &table,
        ),
    }];
    session.report("variance-mc", checks, rows, tables)
}

#[derive(Serialize)]
struct MeanTermCheck {
    closed_form: f64,
    cholesky: f64,
    conjugate_gradient: f64,
}

#[derive(Serialize)]
struct CovarianceResult<'a> {
    fiber: &'a CovarianceReport,
    scaled_total_ratio: f64,
    mean_term_at_zero: MeanTermCheck,
}

pub fn cmd_covariance(session: &mut Session) -> Result<Vec<Report>, Error> {
    session.spectral()?;
    let spectral = session.spectral.as_ref().expect("computed above");
    let fiber = fiber_norm_from_field(&session.mesh, &session.laplacian, &session.q_norm, spectral)?;
    // q → 2q multiplies |q|² by 4 and G by 16
    let scaled = fiber_norm_from_field(
        &session.mesh,
        &session.laplacian,
        &session.q_norm.map(|x| 4.0 * x),
        spectral,
    )?;
    session.log(&format!(
        "fiber: total {:.6e} (variance {:.6e}, mean {:.6e}, tail {:.2e})",
        fiber.total, fiber.variance_term, fiber.mean_term, fiber.tail_estimate
    ));
    let area = session.mesh.total_mass();
    let mean_of = |w: ScalarField| integrate(&session.mesh, &w) / area;
    let mean_term_at_zero = MeanTermCheck {
        closed_form: session.setup.q_norm_sq / (2.0 * std::f64::consts::PI),
        cholesky: mean_of(fiber_potential(&session.laplacian, &session.q_norm)?),
        conjugate_gradient: mean_of(fiber_potential_iterative(&session.laplacian, &session.q_norm)?),
    };
    let mut checks = Vec::new();
    let scaled_total_ratio;
    if session.q_is_zero() {
        scaled_total_ratio = 0.0;
        checks.push(InvariantCheck::new("fiber_vanishes", -fiber.total.abs()));
    } else {
        scaled_total_ratio = scaled.total / (16.0 * fiber.total);
        checks.push(InvariantCheck::new(
            "fiber_lower_bound",
            (fiber.variance_term - fiber.tail_estimate).min(fiber.tail_estimate),
        ));
        checks.push(InvariantCheck::new(
            "quartic_scaling",
            SCALING_TOLERANCE - (scaled_total_ratio - 1.0).abs(),
        ));
        let m = &mean_term_at_zero;
        let worst = [m.cholesky, m.conjugate_gradient]
            .iter()
            .map(|x| (x / m.closed_form - 1.0).abs())
            .fold((m.cholesky / m.conjugate_gradient - 1.0).abs(), f64::max);
        checks.push(InvariantCheck::new("mean_term_closed_form", MEAN_TERM_TOLERANCE - worst));
    }
    session.solve_sweep()?;
    let sweep = session.solve_sweep.as_ref().expect("computed above");
    let mean_table: Vec<Vec<f64>> = sweep
        .points
        .iter()
        .zip(mean_term_along_family(&session.mesh, sweep))
        .map(|(p, m)| vec![p.t, m, p.area])
        .collect();
    let tables = vec![Artifact {
        name: "mean_term.csv".into(),
        contents: csv_string(&["t", "mean_term", "area"], &mean_table),
    }];
    let result = CovarianceResult {
        fiber: &fiber,
        scaled_total_ratio,
        mean_term_at_zero,
    };
    let covariance = session.report("covariance", checks, result, tables)?;
    let length = cmd_length(session)?;
    let mc = cmd_variance_mc(session)?;
    Ok(vec![covariance, length, mc])
}

#[derive(Serialize)]
struct XrayResult<'a> {
    tolerance: f64,
    control_floor: f64,
    control: &'static str,
    survey: &'a XrayReport,
}

pub fn cmd_xray(session: &mut Session) -> Result<Report, Error> {
    let cfg = session.config.xray.clone();
    let seed = session.config.seed;
    let geodesics = short_geodesics(&session.group, cfg.max_word_length, cfg.geodesics)?;
    let (weight, control) = if session.q_is_zero() {
        (ScalarField::constant(session.mesh.class_count(), 1.0), "sigma")
    } else {
        (session.q_norm.clone(), "q_norm_sigma")
    };
    session.spectral()?;
    let spectral = session.spectral.as_ref().expect("computed above");
    let survey = xray_survey(
        &session.group,
        &session.mesh,
        &spectral.eigenvectors,
        &weight,
        cfg.forms,
        cfg.modes,
        &geodesics,
        seed,
        cfg.points,
    )?;
    session.log(&format!(
        "xray: max potential {:.3e}, mean control {:.3e}",
        survey.max_potential_ratio, survey.mean_control_ratio
    ));
    let floor = XRAY_CONTROL_FACTOR * XRAY_TOLERANCE;
    let checks = vec![
        InvariantCheck::new("xray_potential", XRAY_TOLERANCE - survey.max_potential_ratio),
        InvariantCheck::new("xray_control", survey.mean_control_ratio - floor),
    ];
    let tables = vec![Artifact {
        name: "xray.csv".into(),
        contents: survey.csv(),
    }];
    let result = XrayResult {
        tolerance: XRAY_TOLERANCE,
        control_floor: floor,
        control,
        survey: &survey,
    };
    session.report("xray", checks, result, tables)
}

#[derive(Serialize)]
struct StageSummary<'a> {
    command: &'static str,
    passed: bool,
    failed: Vec<&'a str>,
}

/// Every pipeline in order, followed by a run summary.
pub fn cmd_all(session: &mut Session) -> Result<Vec<Report>, Error> {
    let mut reports = vec![cmd_solve(session)?, cmd_flat_limit(session)?];
    reports.extend(cmd_covariance(session)?);
    reports.push(cmd_xray(session)?);
    let stages: Vec<StageSummary> = reports
        .iter()
        .map(|r| StageSummary {
            command: r.command,
            passed: r.failures().is_empty(),
            failed: r.failures().iter().map(|c| c.name.as_str()).collect(),
        })
        .collect();
    let checks = reports
        .iter()
        .flat_map(|r| {
            r.checks.iter().map(|c| InvariantCheck {
                name: format!("{}/{}", r.command, c.name),
                ..c.clone()
            })
        })
        .collect();
    let summary = session.report("summary", checks, stages, vec![])?;
    reports.push(summary);
    Ok(reports)
}
