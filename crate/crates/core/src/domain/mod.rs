//! Triangulated fundamental octagon with side-pairing gluing.
//!
//! Vertices live in Poincaré-disk coordinates. Side points are placed at
//! hyperbolic-uniform arclength symmetric about each side midpoint, so the
//! pairing `g_k: side k+4 -> side k` matches them exactly. Fields on the closed
//! surface are stored per identified vertex class.

mod laplacian;
pub(crate) mod locate;
mod recovery;

pub use laplacian::{assemble_laplacian, Laplacian};
pub use locate::{Location, PointLocator};
pub use recovery::{christoffel, vertex_christoffel, ChristoffelSymbols, CubicPatches};

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::Serialize;
use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::fuchsian::{conformal_factor, hyperbolic_distance, FuchsianGroup, MoebiusTransform, C64};

/// Smallest accepted edge length; finer meshes are refused.
pub const MIN_EDGE_LENGTH: f64 = 0.01;
/// Largest edge length that still leaves interior points in the octagon.
pub const MAX_EDGE_LENGTH: f64 = 1.0;
/// Default target hyperbolic edge length (about five thousand vertices).
pub const DEFAULT_EDGE_LENGTH: f64 = 0.054;

/// Exact area of a closed genus-2 hyperbolic surface.
pub const SURFACE_AREA: f64 = 4.0 * PI;

/// One boundary identification: `generator` maps raw vertex `from` (on side
/// `generator + 4`) onto raw vertex `to` (on side `generator`).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct VertexPair {
    pub generator: usize,
    pub from: usize,
    pub to: usize,
}

/// A real value per identified vertex class.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField(pub Vec<f64>);

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }
}

#[derive(Clone, Debug)]
pub struct ConformalMesh {
    pub h: f64,
    pub vertices: Vec<C64>,
    /// Counter-clockwise raw-vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub class_of: Vec<usize>,
    /// A representative raw vertex per class (on sides 0..3 for seam classes).
    pub class_rep: Vec<usize>,
    pub pairs: Vec<VertexPair>,
    /// `ρ` at raw vertices.
    pub rho: Vec<f64>,
    /// Lumped `dv_σ` weight per class.
    pub mass: Vec<f64>,
    /// `ρ`-integral of every triangle.
    pub triangle_mass: Vec<f64>,
    /// Raw vertices along each side, ordered by increasing arclength parameter.
    pub side_vertices: Vec<Vec<usize>>,
    pub segments_per_side: usize,
}

/// Interior angle floor (degrees) enforced on every triangle.
pub const MIN_ANGLE_DEGREES: f64 = 10.0;

pub fn build_octagon_mesh(group: &FuchsianGroup, h: f64) -> Result<ConformalMesh> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("edge length must be positive, got {h}")));
    }
    if h < MIN_EDGE_LENGTH {
        return Err(Error::Mesh(format!(
            "edge length {h} is below the resolution floor {MIN_EDGE_LENGTH}"
        )));
    }
    if h > MAX_EDGE_LENGTH {
        return Err(Error::Mesh(format!(
            "edge length {h} is too coarse (max {MAX_EDGE_LENGTH})"
        )));
    }

    let n_seg = (group.side_length / h).ceil() as usize;
    let params: Vec<f64> = (0..=n_seg)
        .map(|j| -group.side_length / 2.0 + group.side_length * j as f64 / n_seg as f64)
        .collect();

    let mut vertices = Vec::new();
    // corner k sits between side k (at s = +L/2) and side k+1 (at s = -L/2)
    for k in 0..8 {
        vertices.push(group.vertex(k));
    }
    let corner_of = |side: usize, j: usize| -> Option<usize> {
        if j == n_seg {
            Some(side)
        } else if j == 0 {
            Some((side + 7) % 8)
        } else {
            None
        }
    };
    let mut side_index = vec![vec![0usize; n_seg + 1]; 8];
    for k in 0..8 {
        for j in 0..=n_seg {
            side_index[k][j] = match corner_of(k, j) {
                Some(c) => c,
                None => {
                    vertices.push(group.side_point(k, params[j]));
                    vertices.len() - 1
                }
            };
        }
    }

    // offset layer parallel to each side
    let depth = 3f64.sqrt() / 2.0 * h;
    let mut layer: Vec<C64> = Vec::new();
    for k in 0..8 {
        for j in 0..n_seg {
            let s = 0.5 * (params[j] + params[j + 1]);
            let p = group.offset_side_point(k, s, depth);
            let clear_of_sides = (0..8)
                .filter(|&m| m != k)
                .all(|m| group.signed_side_distance(m, p) <= -0.7 * h);
            if clear_of_sides && layer.iter().all(|&q| hyperbolic_distance(p, q) >= 0.7 * h) {
                layer.push(p);
            }
        }
    }

    // rings about the origin
    let circum = 2.0 * group.circumradius.atanh();
    let dr = 3f64.sqrt() / 2.0 * h;
    let mut interior: Vec<C64> = vec![C64::new(0.0, 0.0)];
    let mut j = 1;
    while j as f64 * dr < circum {
        let r = j as f64 * dr;
        let count = ((2.0 * PI * r.sinh() / h).round() as usize).max(3);
        let offset = if j % 2 == 1 { 0.5 } else { 0.0 };
        let er = (r / 2.0).tanh();
        for i in 0..count {
            let theta = 2.0 * PI * (i as f64 + offset) / count as f64;
            let p = C64::from_polar(er, theta);
            let inside = (0..8).all(|m| group.signed_side_distance(m, p) <= -(depth + 0.5 * h));
            if inside && layer.iter().all(|&q| hyperbolic_distance(p, q) >= 0.7 * h) {
                interior.push(p);
            }
        }
        j += 1;
    }
    for p in layer.into_iter().chain(interior) {
        vertices.push(p);
    }

    let points: Vec<Point2<f64>> = vertices.iter().map(|z| Point2::new(z.re, z.im)).collect();
    let dt = DelaunayTriangulation::<Point2<f64>>::bulk_load_stable(points)
        .map_err(|e| Error::Mesh(format!("triangulation failed: {e:?}")))?;
    if dt.num_vertices() != vertices.len() {
        return Err(Error::Mesh("duplicate mesh points".into()));
    }
    let mut triangles = Vec::new();
    for face in dt.inner_faces() {
        let [a, b, c] = face.vertices().map(|v| v.fix().index());
        let centroid = (vertices[a] + vertices[b] + vertices[c]) / 3.0;
        if group.contains(centroid, 0.0) {
            let mut tri = [a, b, c];
            if signed_area(vertices[a], vertices[b], vertices[c]) < 0.0 {
                tri.swap(1, 2);
            }
            triangles.push(tri);
        }
    }

    // identification classes
    let mut class_of = vec![usize::MAX; vertices.len()];
    let mut class_rep = Vec::new();
    for k in 0..8 {
        class_of[k] = 0;
    }
    class_rep.push(0);
    let mut pairs = Vec::new();
    for k in 0..4 {
        for j in 0..=n_seg {
            let to = side_index[k][j];
            let from = side_index[k + 4][n_seg - j];
            pairs.push(VertexPair { generator: k, from, to });
            if j == 0 || j == n_seg {
                continue;
            }
            class_of[to] = class_rep.len();
            class_of[from] = class_rep.len();
            class_rep.push(to);
        }
    }
    for v in 0..vertices.len() {
        if class_of[v] == usize::MAX {
            class_of[v] = class_rep.len();
            class_rep.push(v);
        }
    }

    let rho: Vec<f64> = vertices.iter().map(|&z| conformal_factor(z)).collect();
    let triangle_mass: Vec<f64> = triangles
        .iter()
        .map(|t| rho_integral(vertices[t[0]], vertices[t[1]], vertices[t[2]]))
        .collect();
    let mut mass = vec![0.0; class_rep.len()];
    for (t, &m) in triangles.iter().zip(&triangle_mass) {
        for &v in t {
            mass[class_of[v]] += m / 3.0;
        }
    }

    let mesh = ConformalMesh {
        h,
        vertices,
        triangles,
        class_of,
        class_rep,
        pairs,
        rho,
        mass,
        triangle_mass,
        side_vertices: side_index,
        segments_per_side: n_seg,
    };
    mesh.validate()?;
    Ok(mesh)
}

fn signed_area(a: C64, b: C64, c: C64) -> f64 {
    let (u, v) = (b - a, c - a);
    0.5 * (u.re * v.im - u.im * v.re)
}

// Degree-5 seven-point rule on the reference triangle (barycentric, weight).
const QUAD7: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_82;
    const B1: f64 = 0.470_142_064_105_115_1;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_3;
    const W0: f64 = 0.225;
    const W1: f64 = 0.132_394_152_788_506_2;
    const W2: f64 = 0.125_939_180_544_827_2;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], W0),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// `∫ f dA` over a flat triangle by the seven-point rule.
pub fn triangle_quadrature(a: C64, b: C64, c: C64, f: impl Fn(C64) -> f64) -> f64 {
    let area = signed_area(a, b, c).abs();
    area * QUAD7
        .iter()
        .map(|(l, w)| w * f(a * l[0] + b * l[1] + c * l[2]))
        .sum::<f64>()
}

fn rho_integral(a: C64, b: C64, c: C64) -> f64 {
    triangle_quadrature(a, b, c, conformal_factor)
}

/// Summary of the identified complex.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MeshStats {
    pub raw_vertices: usize,
    pub classes: usize,
    pub edges: usize,
    pub triangles: usize,
    pub euler_characteristic: i64,
    pub total_mass: f64,
    pub min_angle_degrees: f64,
}

impl ConformalMesh {
    pub fn class_count(&self) -> usize {
        self.class_rep.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Class position used for evaluating Γ-invariant quantities.
    pub fn class_point(&self, class: usize) -> C64 {
        self.vertices[self.class_rep[class]]
    }

    /// Evaluates `f` at every class representative.
    pub fn sample(&self, f: impl Fn(C64) -> f64) -> ScalarField {
        ScalarField(self.class_rep.iter().map(|&v| f(self.vertices[v])).collect())
    }

    /// For each raw vertex `v`, the group element carrying `v` to its class
    /// representative (identity off the boundary).
    pub fn class_transforms(&self, group: &FuchsianGroup) -> Vec<MoebiusTransform> {
        let mut links: Vec<Vec<(usize, MoebiusTransform)>> = vec![Vec::new(); self.vertices.len()];
        for p in &self.pairs {
            let g = group.generators[p.generator];
            links[p.from].push((p.to, g));
            links[p.to].push((p.from, g.inverse()));
        }
        // BFS from each representative; `to_rep[v]` maps v to the representative
        let mut to_rep: Vec<Option<MoebiusTransform>> = vec![None; self.vertices.len()];
        for &r in &self.class_rep {
            to_rep[r] = Some(MoebiusTransform::IDENTITY);
            let mut queue = std::collections::VecDeque::from([r]);
            while let Some(v) = queue.pop_front() {
                let tv = to_rep[v].expect("visited");
                for &(w, g) in &links[v] {
                    if to_rep[w].is_none() {
                        // g maps v to w, so w reaches the representative through g⁻¹
                        to_rep[w] = Some(tv.compose(&g.inverse()));
                        queue.push_back(w);
                    }
                }
            }
        }
        to_rep.into_iter().map(|t| t.expect("every vertex belongs to a class")).collect()
    }

    /// Raw-vertex view of a class field.
    pub fn expand(&self, field: &ScalarField) -> Vec<f64> {
        self.class_of.iter().map(|&c| field.0[c]).collect()
    }

    /// Edge count of the identified complex: a segment on side k+4 is glued to
    /// the mirrored segment on side k.
    fn identified_edges(&self) -> usize {
        let n = self.segments_per_side;
        let key = |a: usize, b: usize| (a.min(b), a.max(b));
        let mut glue = HashMap::new();
        for k in 0..4 {
            let (src, dst) = (&self.side_vertices[k + 4], &self.side_vertices[k]);
            for j in 0..n {
                glue.insert(key(src[j], src[j + 1]), key(dst[n - j], dst[n - j - 1]));
            }
        }
        let mut keys = std::collections::HashSet::new();
        for t in &self.triangles {
            for e in 0..3 {
                let k = key(t[e], t[(e + 1) % 3]);
                keys.insert(*glue.get(&k).unwrap_or(&k));
            }
        }
        keys.len()
    }

    pub fn stats(&self) -> MeshStats {
        let edges = self.identified_edges();
        MeshStats {
            raw_vertices: self.vertices.len(),
            classes: self.class_count(),
            edges,
            triangles: self.triangles.len(),
            euler_characteristic: self.class_count() as i64 - edges as i64
                + self.triangles.len() as i64,
            total_mass: self.total_mass(),
            min_angle_degrees: self.min_angle_degrees(),
        }
    }

    pub fn min_angle_degrees(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| {
                (0..3).map(move |i| {
                    let p = self.vertices[t[i]];
                    let u = self.vertices[t[(i + 1) % 3]] - p;
                    let v = self.vertices[t[(i + 2) % 3]] - p;
                    (u.re * v.re + u.im * v.im).atan2(u.re * v.im - u.im * v.re)
                })
            })
            .map(|a| (PI / 2.0 - a).to_degrees())
            .fold(180.0, f64::min)
    }

    fn validate(&self) -> Result<()> {
        let side_index = &self.side_vertices;
        let n = self.segments_per_side;
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for (i, t) in self.triangles.iter().enumerate() {
            if signed_area(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]) <= 0.0 {
                return Err(Error::Mesh(format!("triangle {i} is degenerate")));
            }
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        for k in 0..8 {
            for j in 0..n {
                let (a, b) = (side_index[k][j], side_index[k][j + 1]);
                if edge_count.get(&(a.min(b), a.max(b))) != Some(&1) {
                    return Err(Error::Mesh(format!(
                        "side {k} segment {j} is not a boundary edge of the triangulation"
                    )));
                }
            }
        }
        if edge_count.values().any(|&c| c > 2) {
            return Err(Error::Mesh("non-manifold edge".into()));
        }
        let boundary_edges = edge_count.values().filter(|&&c| c == 1).count();
        if boundary_edges != 8 * n {
            return Err(Error::Mesh(format!(
                "expected {} boundary edges, found {boundary_edges}",
                8 * n
            )));
        }
        let min_angle = self.min_angle_degrees();
        if min_angle < MIN_ANGLE_DEGREES {
            return Err(Error::Mesh(format!(
                "minimum angle {min_angle:.2}° below floor {MIN_ANGLE_DEGREES}°"
            )));
        }
        let chi = self.stats().euler_characteristic;
        if chi != -2 {
            return Err(Error::Mesh(format!("identified complex has Euler characteristic {chi}")));
        }
        Ok(())
    }

    /// Raw integral `Σ field·m`.
    pub fn integrate(&self, field: &ScalarField) -> f64 {
        integrate(self, field)
    }

    pub fn export(&self) -> MeshExport {
        MeshExport {
            h: self.h,
            vertices: self.vertices.iter().map(|z| [z.re, z.im]).collect(),
            triangles: self.triangles.clone(),
            class_of: self.class_of.clone(),
            pairs: self.pairs.clone(),
        }
    }

    /// CSV rows `class, x, y, value` for a class field.
    pub fn field_csv(&self, header: &str, field: &ScalarField) -> String {
        let mut out = format!("class,x,y,{header}\n");
        for (c, &v) in self.class_rep.iter().enumerate() {
            let z = self.vertices[v];
            out.push_str(&format!(
                "{c},{},{},{}\n",
                crate::io::csv_float(z.re),
                crate::io::csv_float(z.im),
                crate::io::csv_float(field.0[c])
            ));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshExport {
    pub h: f64,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub class_of: Vec<usize>,
    pub pairs: Vec<VertexPair>,
}

/// `Σ_v field(v) m(v)`.
pub fn integrate(mesh: &ConformalMesh, field: &ScalarField) -> f64 {
    field.0.iter().zip(&mesh.mass).map(|(f, m)| f * m).sum()
}

/// Integral against the probability measure `dv_σ / Area`.
pub fn integrate_normalized(mesh: &ConformalMesh, field: &ScalarField) -> f64 {
    integrate(mesh, field) / mesh.total_mass()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuchsian::octagon_group;

    fn coarse() -> ConformalMesh {
        build_octagon_mesh(&octagon_group(), 0.3).unwrap()
    }

    #[test]
    fn coarse_mesh_is_a_genus_two_surface() {
        let mesh = coarse();
        let stats = mesh.stats();
        assert_eq!(stats.euler_characteristic, -2);
        assert!(mesh.pairs.len() >= 8);
        assert!(stats.min_angle_degrees > MIN_ANGLE_DEGREES);
    }

    #[test]
    fn class_transforms_reach_representatives() {
        let g = octagon_group();
        let mesh = build_octagon_mesh(&g, 0.3).unwrap();
        let maps = mesh.class_transforms(&g);
        for (v, t) in maps.iter().enumerate() {
            let rep = mesh.vertices[mesh.class_rep[mesh.class_of[v]]];
            assert!((t.apply(mesh.vertices[v]) - rep).norm() < 1e-10, "vertex {v}");
        }
    }

    #[test]
    fn pairs_are_generator_images() {
        let g = octagon_group();
        let mesh = coarse();
        for p in &mesh.pairs {
            let image = g.generators[p.generator].apply(mesh.vertices[p.from]);
            assert!((image - mesh.vertices[p.to]).norm() < 1e-9);
            assert_eq!(mesh.class_of[p.from], mesh.class_of[p.to]);
        }
    }

    #[test]
    fn classes_merge_exactly_the_seams() {
        let mesh = coarse();
        let mut members = vec![0usize; mesh.class_count()];
        for &c in &mesh.class_of {
            members[c] += 1;
        }
        assert_eq!(members[0], 8);
        let seam_pairs = 4 * (mesh.segments_per_side - 1);
        assert_eq!(members.iter().filter(|&&m| m == 2).count(), seam_pairs);
    }

    #[test]
    fn seven_point_rule_is_exact_for_quintics() {
        let (a, b, c) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 1.0));
        // ∫ x⁵ over the unit simplex = 5! 0! / 7! = 1/42
        let v = triangle_quadrature(a, b, c, |z| z.re.powi(5));
        assert!((v - 1.0 / 42.0).abs() < 1e-15);
        let w = triangle_quadrature(a, b, c, |z| z.re * z.re * z.im * z.im * z.im);
        // 2! 3! / 7! = 12 / 5040
        assert!((w - 12.0 / 5040.0).abs() < 1e-15);
    }

    #[test]
    fn integration_is_linear() {
        let mesh = coarse();
        let f = mesh.sample(|z| z.re);
        let g = mesh.sample(|z| z.norm_sqr());
        let combo = ScalarField(f.0.iter().zip(&g.0).map(|(a, b)| 2.0 * a - 3.0 * b).collect());
        let lhs = integrate(&mesh, &combo);
        let rhs = 2.0 * integrate(&mesh, &f) - 3.0 * integrate(&mesh, &g);
        assert!((lhs - rhs).abs() < 1e-12);
        let one = ScalarField::constant(mesh.class_count(), 1.0);
        assert!((integrate_normalized(&mesh, &one) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_edge_lengths() {
        let g = octagon_group();
        assert!(matches!(build_octagon_mesh(&g, -1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_octagon_mesh(&g, 1e-3), Err(Error::Mesh(_))));
    }
}
