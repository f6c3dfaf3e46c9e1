//! Holomorphic cubic differentials `q = f dz³` on the octagon surface, built as
//! truncated weight-6 Poincaré series `f(z) = Σ_γ P(γz) γ'(z)³`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ConformalMesh, ScalarField};
use crate::error::{Error, Result};
use crate::fuchsian::{
    conformal_factor, enumerate_words, FuchsianGroup, MoebiusTransform, C64, DEFAULT_ELEMENT_CAP,
};

/// Default word-length truncation.
pub const DEFAULT_TRUNCATION: usize = 6;
/// Absolute floor below which a series counts as annihilated.
pub const DEGENERATE_ABS: f64 = 1e-14;
/// Relative cancellation floor: `max|f|` against the largest single term.
pub const DEGENERATE_REL: f64 = 1e-10;

/// Seed polynomial `P(z) = c₀ + c₁ z + c₂ z²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Seed {
    Zero,
    Constant,
    Linear,
    Quadratic,
}

impl Seed {
    /// The fallback order used when no seed is specified. The linear seed comes
    /// first: its differential has six simple zeros, while the constant and
    /// quadratic seeds concentrate zeros of order 6 and 4 at the octagon vertex.
    pub const DEFAULT_ORDER: [Seed; 3] = [Seed::Linear, Seed::Constant, Seed::Quadratic];

    /// Degree of the monomial seed (0 for the zero seed).
    pub fn degree(self) -> usize {
        match self {
            Seed::Zero | Seed::Constant => 0,
            Seed::Linear => 1,
            Seed::Quadratic => 2,
        }
    }

    pub fn coefficients(self) -> [C64; 3] {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        match self {
            Seed::Zero => [zero; 3],
            Seed::Constant => [one, zero, zero],
            Seed::Linear => [zero, one, zero],
            Seed::Quadratic => [zero, zero, one],
        }
    }
}

/// `q = s · f dz³` where `f` is the truncated series and `s = modulus · e^{i·phase}`.
///
/// The scale is kept apart from the series so that rotating the phase changes
/// `f` by exactly one complex multiplication and leaves `|q|²` bit-identical.
#[derive(Clone, Debug)]
pub struct CubicDifferential {
    coeffs: [C64; 3],
    truncation: usize,
    elements: Arc<Vec<MoebiusTransform>>,
    /// First index of the top word-length level (for tail estimates).
    top_level: usize,
    modulus: f64,
    phase: f64,
    /// Sup over the probe set of the top-level contribution.
    pub tail_estimate: f64,
}

/// Probe points covering the closed octagon: centre, side midpoints, vertices, polar grid.
pub fn probe_points(group: &FuchsianGroup) -> Vec<C64> {
    let mut pts = vec![C64::new(0.0, 0.0)];
    for k in 0..8 {
        pts.push(group.side_midpoint(k));
        pts.push(group.vertex(k));
        pts.push(group.side_point(k, 0.3 * group.side_length));
    }
    for i in 1..=4 {
        let r = group.side_midpoint_radius * i as f64 / 5.0;
        for j in 0..12 {
            pts.push(C64::from_polar(r, (j as f64 + 0.5) * PI / 6.0));
        }
    }
    pts
}

/// `1/z` with a single division.
#[inline]
fn reciprocal(z: C64) -> C64 {
    z.conj() * (1.0 / z.norm_sqr())
}

fn poly(c: &[C64; 3], w: C64) -> C64 {
    c[0] + w * (c[1] + w * c[2])
}

fn poly_derivative(c: &[C64; 3], w: C64) -> C64 {
    c[1] + w * (2.0 * c[2])
}

/// Builds the series for `seed` truncated at word length `n`.
pub fn poincare_series(group: &FuchsianGroup, seed: Seed, n: usize) -> Result<CubicDifferential> {
    if n < 1 {
        return Err(Error::InvalidArgument("truncation length must be at least 1".into()));
    }
    let table = enumerate_words(group, n, DEFAULT_ELEMENT_CAP)?;
    let top_level = table.level_offsets[n];
    let elements = Arc::new(table.elements);
    let mut q = CubicDifferential {
        coeffs: seed.coefficients(),
        truncation: n,
        elements,
        top_level,
        modulus: 1.0,
        phase: 0.0,
        tail_estimate: 0.0,
    };
    if seed == Seed::Zero {
        return Ok(q);
    }
    let probes = probe_points(group);
    let mut max_abs: f64 = 0.0;
    let mut max_term: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for &z in &probes {
        max_abs = max_abs.max(q.eval(z).norm());
        max_term = max_term.max(q.largest_term(z));
        tail = tail.max(q.partial_sum(z, q.top_level..q.elements.len()).norm());
    }
    if max_abs < DEGENERATE_ABS || max_abs < DEGENERATE_REL * max_term {
        return Err(Error::DegenerateSeed { max_abs });
    }
    q.tail_estimate = tail;
    Ok(q)
}

/// Tries the seeds `1, z, z²` in order and keeps the first non-degenerate series.
pub fn default_differential(group: &FuchsianGroup, n: usize) -> Result<(Seed, CubicDifferential)> {
    let mut last = None;
    for seed in Seed::DEFAULT_ORDER {
        match poincare_series(group, seed, n) {
            Ok(q) => return Ok((seed, q)),
            Err(e @ Error::DegenerateSeed { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("seed list is nonempty"))
}

impl CubicDifferential {
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn is_zero(&self) -> bool {
        self.modulus == 0.0 || self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    /// `c · q` for a real `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.modulus *= c.abs();
        if c < 0.0 {
            out.phase += PI;
        }
        out.tail_estimate *= c.abs();
        out
    }

    /// `e^{2πiθ} q`.
    pub fn rotated(&self, theta: f64) -> Self {
        let mut out = self.clone();
        out.phase += 2.0 * PI * theta;
        out
    }

    /// The overall factor `s`.
    pub fn scale(&self) -> C64 {
        C64::from_polar(self.modulus, self.phase)
    }

    fn partial_sum(&self, z: C64, range: std::ops::Range<usize>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for g in &self.elements[range] {
            let inv = reciprocal(g.c * z + g.d);
            let w = (g.a * z + g.b) * inv;
            let inv2 = inv * inv;
            let inv6 = inv2 * inv2 * inv2;
            acc += poly(&self.coeffs, w) * inv6;
        }
        acc
    }

    fn largest_term(&self, z: C64) -> f64 {
        self.elements
            .iter()
            .map(|g| {
                let inv = (g.c * z + g.d).inv();
                (poly(&self.coeffs, g.apply(z)) * inv.powi(6)).norm()
            })
            .fold(0.0, f64::max)
    }

    /// The unscaled series value.
    fn series(&self, z: C64) -> C64 {
        if self.coeffs.iter().all(|c| c.norm() == 0.0) {
            return C64::new(0.0, 0.0);
        }
        self.partial_sum(z, 0..self.elements.len())
    }

    /// `f(z)`.
    pub fn eval(&self, z: C64) -> C64 {
        self.scale() * self.series(z)
    }

    /// `(f(z), f'(z))`.
    pub fn eval_with_derivative(&self, z: C64) -> (C64, C64) {
        let mut f = C64::new(0.0, 0.0);
        let mut df = C64::new(0.0, 0.0);
        if !self.coeffs.iter().all(|c| c.norm() == 0.0) {
            for g in self.elements.iter() {
                let inv = reciprocal(g.c * z + g.d);
                let w = (g.a * z + g.b) * inv;
                let inv2 = inv * inv;
                let inv6 = inv2 * inv2 * inv2;
                let p = poly(&self.coeffs, w);
                f += p * inv6;
                df += poly_derivative(&self.coeffs, w) * inv6 * inv2 - 6.0 * g.c * p * inv6 * inv;
            }
        }
        let s = self.scale();
        (s * f, s * df)
    }

    /// Values at many points, in parallel, in input order.
    pub fn eval_many(&self, points: &[C64]) -> Vec<C64> {
        points.par_iter().map(|&z| self.eval(z)).collect()
    }

    /// `|q|²_σ = |f|² / ρ³`; independent of the phase.
    pub fn pointwise_norm(&self, z: C64) -> f64 {
        let rho = conformal_factor(z);
        self.modulus * self.modulus * self.series(z).norm_sqr() / (rho * rho * rho)
    }

    /// `|q|²_σ` on every vertex class.
    pub fn norm_field(&self, mesh: &ConformalMesh) -> ScalarField {
        let pts: Vec<C64> = mesh.class_rep.iter().map(|&v| mesh.vertices[v]).collect();
        ScalarField(pts.par_iter().map(|&z| self.pointwise_norm(z)).collect())
    }

    /// Worst relative automorphy defect `|f(γz)γ'(z)³ − f(z)| / (1 + |f(z)|)` over
    /// the generators and the given points.
    pub fn automorphy_residual(&self, group: &FuchsianGroup, points: &[C64]) -> f64 {
        points
            .par_iter()
            .map(|&z| {
                let fz = self.eval(z);
                group
                    .generators
                    .iter()
                    .map(|g| {
                        let d = g.derivative(z);
                        (self.eval(g.apply(z)) * d * d * d - fz).norm() / (1.0 + fz.norm())
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// CSV rows `z_re, z_im, f_re, f_im, |q|²_σ`.
    pub fn samples_csv(&self, points: &[C64]) -> String {
        let rows: Vec<Vec<f64>> = points
            .par_iter()
            .map(|&z| {
                let f = self.eval(z);
                vec![z.re, z.im, f.re, f.im, self.pointwise_norm(z)]
            })
            .collect();
        crate::io::csv_string(&["z_re", "z_im", "f_re", "f_im", "q_norm_sq"], &rows)
    }
}

/// `∫ f₁ f̄₂ / ρ³ dv_σ` with the lumped mesh quadrature.
pub fn l2_inner(q1: &CubicDifferential, q2: &CubicDifferential, mesh: &ConformalMesh) -> C64 {
    let pts: Vec<C64> = mesh.class_rep.iter().map(|&v| mesh.vertices[v]).collect();
    let terms: Vec<C64> = pts
        .par_iter()
        .map(|&z| {
            let rho = conformal_factor(z);
            q1.eval(z) * q2.eval(z).conj() / (rho * rho * rho)
        })
        .collect();
    terms.iter().zip(&mesh.mass).map(|(t, m)| t * m).sum()
}

/// `‖q‖²_σ`, computed from `|q|²_σ` so it is exactly phase-invariant.
pub fn l2_norm_sq(q: &CubicDifferential, mesh: &ConformalMesh) -> f64 {
    crate::domain::integrate(mesh, &q.norm_field(mesh))
}

/// Number of zeros of `f` inside the hyperbolic circle of radius `r` about
/// `centre`, by the argument principle.
pub fn winding_number(q: &CubicDifferential, centre: C64, r: f64) -> f64 {
    let to_centre = MoebiusTransform::to_origin(centre).inverse();
    let er = (r / 2.0).tanh();
    let point = |s: f64| to_centre.apply(C64::from_polar(er, 2.0 * PI * s));
    arg_increment(q, &point) / (2.0 * PI)
}

/// Zeros of `q` on the surface.
#[derive(Clone, Debug, Serialize)]
pub struct ZeroReport {
    /// Zero count in the octagon away from the vertex disk.
    pub interior: f64,
    /// Zero count in the disk about the vertex class (all corners glue to one point).
    pub at_vertex: f64,
    pub total: f64,
    /// Refined zero locations in the closed octagon. Zeros of the truncated
    /// series near the corners are listed per corner, and the vertex itself is
    /// listed when the vertex disk carries zeros.
    pub locations: Vec<[f64; 2]>,
}

/// Hyperbolic radius of the disk about the vertex class used in zero counting.
pub const VERTEX_DISK_RADIUS: f64 = 0.3;
/// Offset of the counting contour from the sides.
const SIDE_SHIFT: f64 = 1e-3;

/// Counts zeros of `q` on the surface by the argument principle.
///
/// The eight corner sectors glue to a full disk about the vertex point; its
/// count is the winding of `f` around one lifted circle. The rest of the
/// surface is bounded by the sides between corner disks, with sides 0..3
/// pushed slightly inwards and sides 4..7 slightly outwards. The generators
/// carry one family onto the other, so the enclosed region is still a
/// fundamental domain, and zeros lying exactly on a side are counted once.
pub fn count_zeros(group: &FuchsianGroup, q: &CubicDifferential, mesh: &ConformalMesh) -> ZeroReport {
    let zeros = find_zeros(group, q, mesh);
    let mut locations: Vec<[f64; 2]> = zeros.iter().map(|z| [z.re, z.im]).collect();
    if q.is_zero() {
        return ZeroReport {
            interior: f64::NAN,
            at_vertex: f64::NAN,
            total: f64::NAN,
            locations,
        };
    }
    let at_vertex = winding_number(q, group.vertex(0), VERTEX_DISK_RADIUS);

    let l = group.side_length;
    let cut = VERTEX_DISK_RADIUS;
    let shift = |k: usize| if k < 4 { SIDE_SHIFT } else { -SIDE_SHIFT };
    let mut total_arg = 0.0;
    for k in 0..8 {
        // side k runs from vertex k-1 (s = -L/2) to vertex k (s = +L/2)
        let (s0, s1) = (-l / 2.0 + cut, l / 2.0 - cut);
        let side = |u: f64| group.offset_side_point(k, s0 + (s1 - s0) * u, shift(k));
        total_arg += arg_increment(q, &side);
        // arc about vertex k from the end of side k to the start of side k+1,
        // through the interior sector (clockwise about the vertex)
        let k1 = (k + 1) % 8;
        let to_v = MoebiusTransform::to_origin(group.vertex(k));
        let start = to_v.apply(group.offset_side_point(k, s1, shift(k)));
        let end = to_v.apply(group.offset_side_point(k1, s0, shift(k1)));
        let (a0, mut a1) = (start.arg(), end.arg());
        while a1 > a0 {
            a1 -= 2.0 * PI;
        }
        let (r0, r1) = (start.norm(), end.norm());
        let back = to_v.inverse();
        let arc = |u: f64| back.apply(C64::from_polar(r0 + (r1 - r0) * u, a0 + (a1 - a0) * u));
        total_arg += arg_increment(q, &arc);
    }
    let interior = total_arg / (2.0 * PI);
    if at_vertex.round() >= 1.0 {
        let v = group.vertex(0);
        if zeros.iter().all(|&z| crate::fuchsian::hyperbolic_distance(z, v) > 1e-6) {
            locations.push([v.re, v.im]);
        }
    }
    ZeroReport {
        interior,
        at_vertex,
        total: interior + at_vertex,
        locations,
    }
}

/// Total change of `arg f` along `path(u)`, `u ∈ [0, 1]`, refined adaptively so
/// successive increments stay below 0.3 rad.
fn arg_increment(q: &CubicDifferential, path: &dyn Fn(f64) -> C64) -> f64 {
    let pieces = 64;
    let mut total = 0.0;
    let mut stack: Vec<(f64, f64, C64, C64)> = (0..pieces)
        .rev()
        .map(|i| {
            let (a, b) = (i as f64 / pieces as f64, (i + 1) as f64 / pieces as f64);
            (a, b, q.eval(path(a)), q.eval(path(b)))
        })
        .collect();
    while let Some((a, b, fa, fb)) = stack.pop() {
        let d = (fb / fa).arg();
        if d.abs() > 0.3 && b - a > 1e-9 {
            let m = 0.5 * (a + b);
            let fm = q.eval(path(m));
            stack.push((m, b, fm, fb));
            stack.push((a, m, fa, fm));
        } else {
            total += d;
        }
    }
    total
}

/// Zeros of `f` in the closed octagon, Newton-refined from local minima of
/// `|q|²_σ` over the mesh. Boundary zeros are reported once, on sides 4..7 or
/// at vertex 0.
pub fn find_zeros(group: &FuchsianGroup, q: &CubicDifferential, mesh: &ConformalMesh) -> Vec<C64> {
    if q.is_zero() {
        return Vec::new();
    }
    let values = mesh.expand(&q.norm_field(mesh));
    let mut neighbours = vec![Vec::new(); mesh.vertices.len()];
    for t in &mesh.triangles {
        for k in 0..3 {
            neighbours[t[k]].push(t[(k + 1) % 3]);
            neighbours[t[k]].push(t[(k + 2) % 3]);
        }
    }
    let peak = values.iter().copied().fold(0.0, f64::max);
    let f_scale = (0..mesh.vertices.len())
        .map(|v| (values[v] * mesh.rho[v].powi(3)).sqrt())
        .fold(0.0, f64::max);
    let mut found: Vec<C64> = Vec::new();
    for v in 0..mesh.vertices.len() {
        if values[v] > 1e-2 * peak || neighbours[v].iter().any(|&w| values[w] < values[v]) {
            continue;
        }
        let mut z = mesh.vertices[v];
        for _ in 0..100 {
            let (f, df) = q.eval_with_derivative(z);
            if df.norm() == 0.0 {
                break;
            }
            let step = f / df;
            z -= step;
            if step.norm() < 1e-15 || z.norm() >= 1.0 {
                break;
            }
        }
        if z.norm() >= 1.0 || q.eval(z).norm() > 1e-10 * f_scale {
            continue;
        }
        let Ok((z0, _)) = crate::fuchsian::reduce_to_domain(group, z) else {
            continue;
        };
        let z0 = canonical_boundary_point(group, z0);
        if found.iter().all(|w| crate::fuchsian::hyperbolic_distance(*w, z0) > 1e-4) {
            found.push(z0);
        }
    }
    found
}

/// Moves points on sides 0..3 to their partners on sides 4..7, and corners to vertex 0.
fn canonical_boundary_point(group: &FuchsianGroup, z: C64) -> C64 {
    // truncation moves zeros that lie on a side a few 1e-6 off it
    const ON: f64 = 1e-4;
    for k in 0..8 {
        if crate::fuchsian::hyperbolic_distance(z, group.vertex(k)) < ON {
            return group.vertex(0);
        }
    }
    for k in 0..4 {
        if group.signed_side_distance(k, z).abs() < ON {
            return group.generators[k + 4].apply(z);
        }
    }
    z
}

/// Images of `points` under all words of length `<= depth` that land within
/// hyperbolic distance `reach` of the octagon.
pub fn nearby_images(group: &FuchsianGroup, points: &[C64], depth: usize, reach: f64) -> Result<Vec<C64>> {
    let table = enumerate_words(group, depth, DEFAULT_ELEMENT_CAP)?;
    let mut out = Vec::new();
    for g in &table.elements {
        for &z in points {
            let w = g.apply(z);
            if group.outside_measure(w).1 <= reach {
                out.push(w);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuchsian::octagon_group;

    #[test]
    fn zero_seed_gives_zero() {
        let g = octagon_group();
        let q = poincare_series(&g, Seed::Zero, 2).unwrap();
        assert!(q.is_zero());
        assert_eq!(q.eval(C64::new(0.1, 0.2)), C64::new(0.0, 0.0));
        assert_eq!(q.pointwise_norm(C64::new(0.1, 0.2)), 0.0);
    }

    #[test]
    fn phase_rotation_scales_values_and_keeps_norms() {
        let g = octagon_group();
        let q = poincare_series(&g, Seed::Constant, 3).unwrap();
        let r = q.rotated(0.37);
        let z = C64::new(0.2, -0.15);
        let expected = C64::from_polar(1.0, 2.0 * PI * 0.37) * q.eval(z);
        assert!((r.eval(z) - expected).norm() < 1e-15 * q.eval(z).norm());
        assert_eq!(r.pointwise_norm(z), q.pointwise_norm(z));
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let g = octagon_group();
        for seed in Seed::DEFAULT_ORDER {
            let q = poincare_series(&g, seed, 3).unwrap();
            let z = C64::new(0.12, 0.31);
            let h = 1e-6;
            let fd = (q.eval(z + h) - q.eval(z - h)) / (2.0 * h);
            let (_, df) = q.eval_with_derivative(z);
            assert!((fd - df).norm() < 1e-6 * (1.0 + df.norm()), "{seed:?}");
        }
    }

    #[test]
    fn rotation_symmetry_of_the_truncated_series() {
        // conjugation by the π/4 rotation permutes the word set, so
        // f(e^{iπ/4} z) = e^{ikπ/4} f(z) for the seed z^k
        let g = octagon_group();
        let rot = C64::from_polar(1.0, PI / 4.0);
        for seed in Seed::DEFAULT_ORDER {
            let k = seed.degree();
            let q = poincare_series(&g, seed, 3).unwrap();
            let z = C64::new(0.21, 0.05);
            let lhs = q.eval(rot * z);
            let rhs = rot.powi(k as i32) * q.eval(z);
            assert!((lhs - rhs).norm() < 1e-10 * rhs.norm(), "{seed:?}");
        }
    }

    #[test]
    fn automorphy_improves_with_truncation() {
        let g = octagon_group();
        let pts: Vec<C64> = (0..8).map(|k| g.side_point(k, 0.4)).collect();
        let mut prev = f64::INFINITY;
        for n in 2..=5 {
            let q = poincare_series(&g, Seed::Constant, n).unwrap();
            let res = q.automorphy_residual(&g, &pts);
            assert!(res < prev, "n={n}: {res} !< {prev}");
            prev = res;
        }
        assert!(prev < 1e-3);
    }
}
