//! Cross-module checks on a coarse mesh: group, differential, Wang family and
//! covariance pipeline together.

use std::f64::consts::PI;
use std::sync::OnceLock;

use blaschke_core::cubicdiff::{poincare_series, CubicDifferential, Seed};
use blaschke_core::domain::{assemble_laplacian, build_octagon_mesh, integrate, ConformalMesh, ScalarField};
use blaschke_core::fuchsian::{hyperbolic_distance, octagon_group, reduce_to_domain, FuchsianGroup};
use blaschke_core::spectral_covariance::{eigensolve, fiber_norm_from_field, fiber_potential, mean_term_along_family};
use blaschke_core::wang::{log_grid, sweep_family, WangProblem};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

struct Fixture {
    group: FuchsianGroup,
    q: CubicDifferential,
    mesh: ConformalMesh,
    q_norm: ScalarField,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let group = octagon_group();
        let q = poincare_series(&group, Seed::Linear, 4).unwrap();
        let mesh = build_octagon_mesh(&group, 0.15).unwrap();
        let q_norm = q.norm_field(&mesh);
        Fixture {
            group,
            q,
            mesh,
            q_norm,
        }
    })
}

fn disk_point() -> impl Strategy<Value = C64> {
    (0.0..0.95f64, 0.0..2.0 * PI).prop_map(|(r, a)| C64::from_polar(r, a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generators_are_isometries(z in disk_point(), w in disk_point(), k in 0usize..8) {
        let g = &fixture().group.generators[k];
        let (d0, d1) = (hyperbolic_distance(z, w), hyperbolic_distance(g.apply(z), g.apply(w)));
        prop_assert!((d0 - d1).abs() < 1e-8 * (1.0 + d0));
    }

    #[test]
    fn reduction_lands_in_the_domain(z in disk_point()) {
        let group = &fixture().group;
        let (w, g) = reduce_to_domain(group, z).unwrap();
        prop_assert!(group.contains(w, 1e-9));
        prop_assert!((g.apply(w) - z).norm() < 1e-9);
    }

    #[test]
    fn pointwise_norm_is_invariant(z in (0.0..0.6f64, 0.0..2.0 * PI), k in 0usize..8) {
        let f = fixture();
        let p = C64::from_polar(z.0, z.1);
        let g = &f.group.generators[k];
        let (a, b) = (f.q.pointwise_norm(p), f.q.pointwise_norm(g.apply(p)));
        // truncation breaks exact invariance; the level-4 tail is well below this
        prop_assert!((a - b).abs() < 2e-2 * a.max(1e-6), "{} vs {}", a, b);
    }
}

#[test]
fn coarse_family_satisfies_every_invariant() {
    let f = fixture();
    let problem = WangProblem::from_norm(&f.mesh, f.q_norm.clone()).unwrap();
    let grid = log_grid(1e-2, 1e3, 11, true);
    let sweep = sweep_family(&f.mesh, &problem, &grid).unwrap();
    for c in &sweep.checks {
        assert!(c.passed, "{} failed with margin {}", c.name, c.margin);
    }
    for p in &sweep.points {
        assert!(p.gauss_bonnet_defect.abs() < 5e-3, "t = {}: {}", p.t, p.gauss_bonnet_defect);
    }
    // area grows and the mean term decays like 1/t
    let mean = mean_term_along_family(&f.mesh, &sweep);
    let last = sweep.points.len() - 1;
    assert!(sweep.points[last].area > sweep.points[0].area);
    assert!(mean[last] * sweep.points[last].t > 0.1);
}

#[test]
fn mean_term_at_zero_matches_closed_form() {
    let f = fixture();
    let laplacian = assemble_laplacian(&f.mesh);
    let w = fiber_potential(&laplacian, &f.q_norm).unwrap();
    let area = f.mesh.total_mass();
    let closed = integrate(&f.mesh, &f.q_norm) / (2.0 * PI);
    let mean = integrate(&f.mesh, &w) / area;
    assert!((mean / closed - 1.0).abs() < 1e-2, "{mean} vs {closed}");
}

#[test]
fn fiber_norm_dominates_mean_term_and_scales_quartically() {
    let f = fixture();
    let laplacian = assemble_laplacian(&f.mesh);
    let spectral = eigensolve(&laplacian, 40).unwrap();
    let g = fiber_norm_from_field(&f.mesh, &laplacian, &f.q_norm, &spectral).unwrap();
    let g3 = fiber_norm_from_field(&f.mesh, &laplacian, &f.q_norm.map(|x| 9.0 * x), &spectral).unwrap();
    assert!(g.variance_term > 0.0);
    assert!(g.total > g.mean_term);
    assert!((g3.total / (81.0 * g.total) - 1.0).abs() < 1e-10);
}
