use crate::domain::{ConformalMesh, ScalarField};
use crate::linalg::SparseSym;

/// Discrete `Δσ ≈ -M⁻¹A` on identified vertex classes.
#[derive(Clone, Debug)]
pub struct Laplacian {
    /// Flat cotangent stiffness, symmetric positive semidefinite.
    pub stiffness: SparseSym,
    /// Lumped `ρ`-weighted mass.
    pub mass: Vec<f64>,
}

impl Laplacian {
    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    /// `Δσ u = -M⁻¹ A u`.
    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        let au = self.stiffness.matvec(&u.0);
        ScalarField(au.iter().zip(&self.mass).map(|(a, m)| -a / m).collect())
    }

    /// Smallest off-diagonal-sign violation: the most positive off-diagonal entry.
    pub fn max_offdiagonal(&self) -> f64 {
        (0..self.dim())
            .flat_map(|i| self.stiffness.row(i).filter(move |&(j, _)| j != i).map(|(_, v)| v))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Cotangent weights of a flat triangle: `w[k]` belongs to the edge opposite vertex `k`.
pub(crate) fn cot_weights(p: [crate::fuchsian::C64; 3]) -> [f64; 3] {
    std::array::from_fn(|k| {
        let o = p[k];
        let (u, v) = (p[(k + 1) % 3] - o, p[(k + 2) % 3] - o);
        let dot = u.re * v.re + u.im * v.im;
        let cross = (u.re * v.im - u.im * v.re).abs();
        0.5 * dot / cross
    })
}

/// Assembles the cotangent stiffness and lumped mass over classes.
///
/// The Dirichlet energy is conformally invariant in two dimensions, so the flat
/// weights in disk coordinates already discretise `∫|∇u|²_σ dv_σ`; all metric
/// dependence sits in the mass.
pub fn assemble_laplacian(mesh: &ConformalMesh) -> Laplacian {
    let mut entries = Vec::with_capacity(mesh.triangles.len() * 12);
    for t in &mesh.triangles {
        let w = cot_weights(t.map(|v| mesh.vertices[v]));
        for k in 0..3 {
            let i = mesh.class_of[t[(k + 1) % 3]];
            let j = mesh.class_of[t[(k + 2) % 3]];
            entries.push((i, i, w[k]));
            entries.push((j, j, w[k]));
            entries.push((i, j, -w[k]));
            entries.push((j, i, -w[k]));
        }
    }
    Laplacian {
        stiffness: SparseSym::from_triplets(mesh.class_count(), &entries),
        mass: mesh.mass.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_octagon_mesh, integrate};
    use crate::fuchsian::octagon_group;
    use crate::linalg::cholesky_solve;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constants_are_annihilated_and_divergence_vanishes() {
        let mesh = build_octagon_mesh(&octagon_group(), 0.25).unwrap();
        let lap = assemble_laplacian(&mesh);
        let n = lap.dim();
        let ones = ScalarField::constant(n, 1.0);
        let a1 = lap.stiffness.matvec(&ones.0);
        assert!(a1.iter().all(|v| v.abs() < 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = ScalarField((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        assert!(integrate(&mesh, &lap.apply(&u)).abs() < 1e-10);
    }

    #[test]
    fn stiffness_is_positive_semidefinite_m_matrix() {
        let mesh = build_octagon_mesh(&octagon_group(), 0.3).unwrap();
        let lap = assemble_laplacian(&mesh);
        assert!(lap.max_offdiagonal() <= 1e-12);
        let dense = lap.stiffness.to_dense();
        let eig = dense.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        assert!(eig.iter().all(|&l| l >= -1e-10), "{:?}", &eig[..3]);
    }

    #[test]
    fn discrete_maximum_principle() {
        let mesh = build_octagon_mesh(&octagon_group(), 0.2).unwrap();
        let lap = assemble_laplacian(&mesh);
        let c = 0.5;
        let shifted = lap.stiffness.add_diagonal(&lap.mass.iter().map(|m| c * m).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rhs: Vec<f64> = lap
            .mass
            .iter()
            .map(|m| m * if rng.gen_bool(0.1) { rng.gen_range(0.0..5.0) } else { 0.0 })
            .collect();
        let w = cholesky_solve(&shifted, &rhs).unwrap();
        assert!(w.iter().all(|&x| x >= -1e-10));
    }
}
