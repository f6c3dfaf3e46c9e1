//! The genus-2 Fuchsian group of the regular hyperbolic octagon.
//!
//! All transforms act directly on the Poincaré disk and are stored as
//! SU(1,1)-type complex matrices `[[a, b], [c, d]]` with `ad - bc = 1`,
//! acting by `z -> (a z + b) / (c z + d)`. The disk carries the metric
//! `ρ(z)|dz|²` with `ρ(z) = 4 / (1 - |z|²)²` (curvature -1).
//!
//! The octagon is centred at the origin with side `k` centred on the ray at
//! angle `kπ/4` and vertex `k` at angle `π/8 + kπ/4` (between sides `k` and
//! `k+1`). Generator `g_k` is the hyperbolic translation along the ray at
//! angle `kπ/4` that maps side `k+4` onto side `k`; hence `g_{k+4} = g_k⁻¹`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI, SQRT_2};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Default cap on the number of enumerated group elements.
pub const DEFAULT_ELEMENT_CAP: usize = 4_000_000;

/// Entrywise threshold (up to sign) under which two matrices are the same element.
pub const DEDUP_TOLERANCE: f64 = 1e-8;

const MAX_REDUCTION_STEPS: usize = 10_000;

/// An orientation-preserving isometry of the Poincaré disk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoebiusTransform {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

impl MoebiusTransform {
    pub const IDENTITY: Self = Self {
        a: ONE,
        b: ZERO,
        c: ZERO,
        d: ONE,
    };

    /// Builds `[[a, b], [c, d]]` rescaled to unit determinant.
    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Self { a, b, c, d }.renormalized()
    }

    /// Rotation `z -> e^{iθ} z` about the origin.
    pub fn rotation(theta: f64) -> Self {
        Self {
            a: C64::from_polar(1.0, theta / 2.0),
            b: ZERO,
            c: ZERO,
            d: C64::from_polar(1.0, -theta / 2.0),
        }
    }

    /// Hyperbolic translation by `distance` along the diameter at angle `direction`.
    pub fn translation(direction: f64, distance: f64) -> Self {
        let ch = (distance / 2.0).cosh();
        let sh = (distance / 2.0).sinh();
        let e = C64::from_polar(1.0, direction);
        Self {
            a: C64::new(ch, 0.0),
            b: e * sh,
            c: e.conj() * sh,
            d: C64::new(ch, 0.0),
        }
    }

    /// The translation carrying `p` to the origin along the geodesic through them.
    ///
    /// Its derivative at `p` is real and positive, so directions at `p` are preserved.
    pub fn to_origin(p: C64) -> Self {
        let s = 1.0 / (1.0 - p.norm_sqr()).sqrt();
        Self {
            a: C64::new(s, 0.0),
            b: -p * s,
            c: -p.conj() * s,
            d: C64::new(s, 0.0),
        }
    }

    pub fn apply(&self, z: C64) -> C64 {
        (self.a * z + self.b) / (self.c * z + self.d)
    }

    /// Complex derivative `1 / (c z + d)²`.
    pub fn derivative(&self, z: C64) -> C64 {
        let w = self.c * z + self.d;
        1.0 / (w * w)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
        .renormalized()
    }

    pub fn inverse(&self) -> Self {
        Self {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
    }

    pub fn determinant(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> C64 {
        self.a + self.d
    }

    pub fn entries(&self) -> [C64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    fn renormalized(self) -> Self {
        let s = self.determinant().sqrt();
        if (s - ONE).norm() < 1e-15 {
            return self;
        }
        Self {
            a: self.a / s,
            b: self.b / s,
            c: self.c / s,
            d: self.d / s,
        }
    }

    /// Largest entrywise distance to `other`, minimised over the sign ambiguity.
    pub fn projective_distance(&self, other: &Self) -> f64 {
        let plus = self
            .entries()
            .iter()
            .zip(other.entries())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        let minus = self
            .entries()
            .iter()
            .zip(other.entries())
            .map(|(x, y)| (x + y).norm())
            .fold(0.0, f64::max);
        plus.min(minus)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.projective_distance(&Self::IDENTITY) < tol
    }

    /// Sign-normalised copy: the first entry with non-negligible modulus has positive
    /// real part (ties broken on the imaginary part).
    fn sign_normalized(&self) -> Self {
        let lead = if self.a.norm() > 1e-6 { self.a } else { self.b };
        if lead.re < 0.0 || (lead.re == 0.0 && lead.im < 0.0) {
            Self {
                a: -self.a,
                b: -self.b,
                c: -self.c,
                d: -self.d,
            }
        } else {
            *self
        }
    }
}

/// Hyperbolic distance in the disk of curvature -1.
pub fn hyperbolic_distance(z: C64, w: C64) -> f64 {
    let num = (z - w).norm();
    let den = (ONE - z.conj() * w).norm();
    2.0 * (num / den).min(1.0 - f64::EPSILON).atanh()
}

/// Conformal factor `ρ(z) = 4 / (1 - |z|²)²` of the hyperbolic metric.
pub fn conformal_factor(z: C64) -> f64 {
    let s = 1.0 - z.norm_sqr();
    4.0 / (s * s)
}

/// The regular octagon group together with its fundamental-domain geometry.
#[derive(Clone, Debug)]
pub struct FuchsianGroup {
    pub generators: [MoebiusTransform; 8],
    /// Generator indices whose ordered product is ±identity.
    pub relation: [usize; 8],
    /// Euclidean radius of the octagon vertices.
    pub circumradius: f64,
    /// Euclidean distance from the origin to each side midpoint.
    pub side_midpoint_radius: f64,
    /// Hyperbolic distance from the origin to a side midpoint.
    pub inradius: f64,
    /// Hyperbolic length of one side.
    pub side_length: f64,
    side_maps: [MoebiusTransform; 8],
}

/// Builds the regular octagon group with all interior angles π/4.
pub fn octagon_group() -> FuchsianGroup {
    // For a regular n-gon with interior angle α: cosh(inradius) = cos(α/2)/sin(π/n)
    // and cosh(circumradius) = cot(π/n) cot(α/2). Here n = 8, α = π/4.
    let cot = 1.0 / FRAC_PI_8.tan();
    let inradius = cot.acosh();
    let circum_h = (cot * cot).acosh();
    let circumradius = (circum_h / 2.0).tanh();
    let side_midpoint_radius = (inradius / 2.0).tanh();
    // cosh(side/2) = cos(π/n) / sin(α/2)
    let side_length = 2.0 * (FRAC_PI_8.cos() / FRAC_PI_8.sin()).acosh();

    let translation = MoebiusTransform::translation(0.0, 2.0 * inradius);
    let generators = std::array::from_fn(|k| {
        let r = MoebiusTransform::rotation(k as f64 * FRAC_PI_4);
        r.compose(&translation).compose(&r.inverse())
    });
    let side_maps = std::array::from_fn(|k| {
        MoebiusTransform::translation(0.0, -inradius)
            .compose(&MoebiusTransform::rotation(-(k as f64) * FRAC_PI_4))
    });
    FuchsianGroup {
        generators,
        relation: [0, 3, 6, 1, 4, 7, 2, 5],
        circumradius,
        side_midpoint_radius,
        inradius,
        side_length,
        side_maps,
    }
}

impl FuchsianGroup {
    /// Index of the generator inverse to generator `k`.
    pub fn inverse_index(k: usize) -> usize {
        (k + 4) % 8
    }

    /// Ordered product of the relation word.
    pub fn relation_product(&self) -> MoebiusTransform {
        self.relation
            .iter()
            .fold(MoebiusTransform::IDENTITY, |acc, &k| {
                acc.compose(&self.generators[k])
            })
    }

    pub fn vertex(&self, k: usize) -> C64 {
        C64::from_polar(self.circumradius, FRAC_PI_8 + k as f64 * FRAC_PI_4)
    }

    pub fn side_midpoint(&self, k: usize) -> C64 {
        C64::from_polar(self.side_midpoint_radius, k as f64 * FRAC_PI_4)
    }

    /// Point on side `k` at signed hyperbolic arclength `s` from its midpoint,
    /// positive towards vertex `k`.
    pub fn side_point(&self, k: usize, s: f64) -> C64 {
        let on_axis = C64::new(0.0, (s / 2.0).tanh());
        self.side_maps[k].inverse().apply(on_axis)
    }

    /// Point at hyperbolic distance `depth` inside side `k`, on the perpendicular
    /// through the side point with arclength parameter `s`.
    pub fn offset_side_point(&self, k: usize, s: f64, depth: f64) -> C64 {
        let along = MoebiusTransform::translation(PI / 2.0, s);
        let p = along.apply(C64::new(-(depth / 2.0).tanh(), 0.0));
        self.side_maps[k].inverse().apply(p)
    }

    /// Signed hyperbolic distance from `z` to the geodesic carrying side `k`,
    /// positive on the far side (outside the octagon).
    pub fn signed_side_distance(&self, k: usize, z: C64) -> f64 {
        let w = self.side_maps[k].apply(z);
        (2.0 * w.re / (1.0 - w.norm_sqr())).asinh()
    }

    /// Largest signed side distance and the side attaining it.
    pub fn outside_measure(&self, z: C64) -> (usize, f64) {
        (0..8)
            .map(|k| (k, self.signed_side_distance(k, z)))
            .fold((0, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            })
    }

    /// Whether `z` lies in the closed octagon, up to `tol` in hyperbolic distance.
    pub fn contains(&self, z: C64, tol: f64) -> bool {
        z.norm() < 1.0 && self.outside_measure(z).1 <= tol
    }

    /// Interior angle at a vertex, measured between the tangents of the two side arcs.
    pub fn interior_angle(&self) -> f64 {
        let v = self.vertex(0);
        // Side k sits on the circle |z - C e^{ikπ/4}| = R with C = (m + 1/m)/2,
        // R = (1/m - m)/2 where m is the side-midpoint radius.
        let m = self.side_midpoint_radius;
        let centre_dist = (m + 1.0 / m) / 2.0;
        let tangent = |k: usize| {
            let centre = C64::from_polar(centre_dist, k as f64 * FRAC_PI_4);
            let radial = v - centre;
            C64::new(-radial.im, radial.re)
        };
        let (t0, t1) = (tangent(0), tangent(1));
        let cos = (t0.re * t1.re + t0.im * t1.im) / (t0.norm() * t1.norm());
        let angle = cos.clamp(-1.0, 1.0).acos();
        // The tangent lines meet at angle θ or π - θ; the interior angle is the acute one.
        angle.min(PI - angle)
    }

    /// Serializable description (generator matrices row-major as `[re, im]` pairs).
    pub fn description(&self) -> GroupDescription {
        GroupDescription {
            circumradius: self.circumradius,
            inradius: self.inradius,
            side_length: self.side_length,
            relation: self.relation,
            generators: self
                .generators
                .iter()
                .map(|g| g.entries().map(|e| [e.re, e.im]))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupDescription {
    pub circumradius: f64,
    pub inradius: f64,
    pub side_length: f64,
    pub relation: [usize; 8],
    pub generators: Vec<[[f64; 2]; 4]>,
}

/// Distinct group elements grouped by word length.
#[derive(Clone, Debug)]
pub struct WordTable {
    pub elements: Vec<MoebiusTransform>,
    /// `level_offsets[n]` is the index of the first element of word length `n`;
    /// the final entry equals `elements.len()`.
    pub level_offsets: Vec<usize>,
}

impl WordTable {
    pub fn max_length(&self) -> usize {
        self.level_offsets.len() - 2
    }

    pub fn level(&self, n: usize) -> &[MoebiusTransform] {
        &self.elements[self.level_offsets[n]..self.level_offsets[n + 1]]
    }
}

/// Spatial hash over sign-normalised matrix entries with neighbour-cell lookups.
struct ElementIndex {
    cell: f64,
    map: HashMap<[i64; 4], Vec<usize>>,
}

impl ElementIndex {
    fn new() -> Self {
        Self {
            cell: 1e-6,
            map: HashMap::new(),
        }
    }

    fn coords(m: &MoebiusTransform) -> [f64; 4] {
        let m = m.sign_normalized();
        [m.a.re, m.a.im, m.b.re, m.b.im]
    }

    fn candidate_keys(&self, m: &MoebiusTransform) -> Vec<[i64; 4]> {
        let x = Self::coords(m);
        let mut keys = vec![[0i64; 4]];
        for (i, v) in x.iter().enumerate() {
            let scaled = v / self.cell;
            let base = scaled.floor();
            let frac = scaled - base;
            let mut extra = Vec::new();
            for k in keys.iter_mut() {
                k[i] = base as i64;
                if frac < 0.05 {
                    let mut e = *k;
                    e[i] -= 1;
                    extra.push(e);
                } else if frac > 0.95 {
                    let mut e = *k;
                    e[i] += 1;
                    extra.push(e);
                }
            }
            keys.extend(extra);
        }
        keys
    }

    fn find(&self, m: &MoebiusTransform, elements: &[MoebiusTransform]) -> Option<usize> {
        for key in self.candidate_keys(m) {
            if let Some(bucket) = self.map.get(&key) {
                for &idx in bucket {
                    if elements[idx].projective_distance(m) < DEDUP_TOLERANCE {
                        return Some(idx);
                    }
                }
            }
        }
        None
    }

    fn insert(&mut self, m: &MoebiusTransform, idx: usize) {
        let x = Self::coords(m);
        let key = x.map(|v| (v / self.cell).floor() as i64);
        self.map.entry(key).or_default().push(idx);
    }
}

/// All distinct elements of word length `<= max_len` in the generators.
pub fn enumerate_words(group: &FuchsianGroup, max_len: usize, cap: usize) -> Result<WordTable> {
    let mut elements = vec![MoebiusTransform::IDENTITY];
    let mut index = ElementIndex::new();
    index.insert(&elements[0], 0);
    let mut level_offsets = vec![0, 1];
    for _ in 0..max_len {
        let start = level_offsets[level_offsets.len() - 2];
        let end = elements.len();
        for i in start..end {
            for g in &group.generators {
                let candidate = elements[i].compose(g);
                if index.find(&candidate, &elements).is_none() {
                    let idx = elements.len();
                    if idx >= cap {
                        return Err(Error::ResourceLimit {
                            what: "group elements",
                            count: idx + 1,
                            cap,
                        });
                    }
                    index.insert(&candidate, idx);
                    elements.push(candidate);
                }
            }
        }
        level_offsets.push(elements.len());
    }
    Ok(WordTable {
        elements,
        level_offsets,
    })
}

/// Maps `z` into the closed octagon by greedy side crossings.
///
/// Returns `(z0, word)` with `word(z0) = z`.
pub fn reduce_to_domain(group: &FuchsianGroup, z: C64) -> Result<(C64, MoebiusTransform)> {
    if z.norm() >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "point {z} is not inside the unit disk"
        )));
    }
    let mut z0 = z;
    let mut word = MoebiusTransform::IDENTITY;
    for _ in 0..MAX_REDUCTION_STEPS {
        let (k, excess) = group.outside_measure(z0);
        if excess <= 1e-12 {
            return Ok((z0, word));
        }
        // Beyond side k: pull back with g_k⁻¹ = g_{k+4}.
        z0 = group.generators[FuchsianGroup::inverse_index(k)].apply(z0);
        word = word.compose(&group.generators[k]);
    }
    Err(Error::ReductionDiverged {
        steps: MAX_REDUCTION_STEPS,
    })
}

/// Translation length and boundary fixed points of a hyperbolic element.
#[derive(Clone, Copy, Debug)]
pub struct AxisData {
    pub translation_length: f64,
    pub attracting: C64,
    pub repelling: C64,
}

pub fn axis_data(t: &MoebiusTransform) -> Result<AxisData> {
    let trace_abs = t.trace().norm();
    if trace_abs <= 2.0 + 1e-12 {
        return Err(Error::NonHyperbolic { trace_abs });
    }
    let translation_length = 2.0 * (trace_abs / 2.0).acosh();
    // c z² + (d - a) z - b = 0
    let disc = ((t.a - t.d) * (t.a - t.d) + 4.0 * t.b * t.c).sqrt();
    let (p, q) = if t.c.norm() > 1e-300 {
        (
            ((t.a - t.d) + disc) / (2.0 * t.c),
            ((t.a - t.d) - disc) / (2.0 * t.c),
        )
    } else {
        return Err(Error::NonHyperbolic { trace_abs });
    };
    let (attracting, repelling) = if t.derivative(p).norm() < 1.0 {
        (p, q)
    } else {
        (q, p)
    };
    Ok(AxisData {
        translation_length,
        attracting: attracting / attracting.norm(),
        repelling: repelling / repelling.norm(),
    })
}

/// Translation length of `g_0` from the octagon geometry: `2 arccosh(1 + √2)`.
pub fn octagon_generator_length() -> f64 {
    2.0 * (1.0 + SQRT_2).acosh()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relation_word_is_identity_on_a_point() {
        let g = octagon_group();
        let z = C64::new(0.1, 0.2);
        let w = g.relation_product().apply(z);
        assert!((w - z).norm() < 1e-9);
        assert!(g.relation_product().is_identity(1e-9));
    }

    #[test]
    fn generator_maps_left_side_midpoint_to_right() {
        let g = octagon_group();
        let left = g.side_midpoint(4);
        let right = g.side_midpoint(0);
        assert!((g.generators[0].apply(left) - right).norm() < 1e-9);
        // and the whole side, pointwise mirrored across the imaginary axis
        for s in [-1.2, -0.4, 0.3, 1.1] {
            let p = g.side_point(4, s);
            let image = g.generators[0].apply(p);
            assert!(g.signed_side_distance(0, image).abs() < 1e-9);
            assert!((image - C64::new(-p.re, p.im)).norm() < 1e-9);
        }
    }

    #[test]
    fn rotation_conjugation() {
        let g = octagon_group();
        let r = MoebiusTransform::rotation(PI / 2.0);
        let conj = r.compose(&g.generators[0]).compose(&r.inverse());
        for (x, y) in conj.entries().iter().zip(g.generators[2].entries()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn determinant_stays_one() {
        let g = octagon_group();
        let mut m = MoebiusTransform::IDENTITY;
        for k in [0, 3, 5, 1, 6, 2, 7, 7, 4, 1] {
            m = m.compose(&g.generators[k]);
            assert!((m.determinant() - ONE).norm() < 1e-12);
        }
    }

    #[test]
    fn interior_angles_are_quarter_pi() {
        let g = octagon_group();
        assert!((g.interior_angle() - FRAC_PI_4).abs() < 1e-12);
        assert!((g.circumradius - 2f64.powf(-0.25)).abs() < 1e-12);
        // vertices lie on both adjacent sides
        for k in 0..8 {
            let v = g.vertex(k);
            assert!(g.signed_side_distance(k, v).abs() < 1e-9);
            assert!(g.signed_side_distance((k + 1) % 8, v).abs() < 1e-9);
            assert!((g.side_point((k + 1) % 8, -g.side_length / 2.0) - v).norm() < 1e-9);
            assert!((g.side_point(k, g.side_length / 2.0) - v).norm() < 1e-9);
        }
    }

    #[test]
    fn word_counts() {
        let g = octagon_group();
        let t0 = enumerate_words(&g, 0, DEFAULT_ELEMENT_CAP).unwrap();
        assert_eq!(t0.elements.len(), 1);
        // g_{k+4} = g_k⁻¹, so the 8 generators already contain their inverses.
        let t1 = enumerate_words(&g, 1, DEFAULT_ELEMENT_CAP).unwrap();
        assert_eq!(t1.elements.len(), 9);
        // Brute force at length 2: 9 + 8·8 products minus the 8 cancellations.
        let t2 = enumerate_words(&g, 2, DEFAULT_ELEMENT_CAP).unwrap();
        let mut brute: Vec<MoebiusTransform> = vec![MoebiusTransform::IDENTITY];
        brute.extend(g.generators.iter().copied());
        for x in &g.generators {
            for y in &g.generators {
                brute.push(x.compose(y));
            }
        }
        let mut distinct: Vec<MoebiusTransform> = Vec::new();
        for m in brute {
            if !distinct.iter().any(|d| d.projective_distance(&m) < DEDUP_TOLERANCE) {
                distinct.push(m);
            }
        }
        assert_eq!(t2.elements.len(), distinct.len());
        assert_eq!(t2.elements.len(), 65);
        let t4 = enumerate_words(&g, 4, DEFAULT_ELEMENT_CAP).unwrap();
        // free-group count 1 + 8 + 56 + 392 + 2744 less the 8 half-relation coincidences
        assert_eq!(t4.elements.len(), 1 + 8 + 56 + 392 + 2736);
    }

    #[test]
    fn enumeration_respects_cap() {
        let g = octagon_group();
        assert!(matches!(
            enumerate_words(&g, 3, 100),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn enumeration_closed_under_inverse() {
        let g = octagon_group();
        let t = enumerate_words(&g, 3, DEFAULT_ELEMENT_CAP).unwrap();
        for m in &t.elements {
            let inv = m.inverse();
            assert!(t
                .elements
                .iter()
                .any(|x| x.projective_distance(&inv) < DEDUP_TOLERANCE));
        }
    }

    #[test]
    fn reduction_examples() {
        let g = octagon_group();
        let z = C64::new(0.2, -0.1);
        let (z0, w) = reduce_to_domain(&g, z).unwrap();
        assert_eq!(z0, z);
        assert!(w.is_identity(1e-15));

        let p = g.generators[0].apply(C64::new(0.0, 0.0));
        let (z0, w) = reduce_to_domain(&g, p).unwrap();
        assert!(z0.norm() < 1e-9);
        assert!(w.projective_distance(&g.generators[0]) < 1e-9);
    }

    #[test]
    fn deep_points_reduce_back() {
        let g = octagon_group();
        let words = [[1, 5, 2, 6, 3], [0, 0, 1, 1, 2], [7, 3, 3, 6, 4], [2, 1, 0, 7, 6]];
        for w in words {
            let m = w
                .iter()
                .fold(MoebiusTransform::IDENTITY, |acc, &k| acc.compose(&g.generators[k]));
            let z = m.apply(C64::new(0.0, 0.0));
            let (z0, word) = reduce_to_domain(&g, z).unwrap();
            assert!(z0.norm() <= g.circumradius + 1e-9);
            assert!((word.apply(z0) - z).norm() < 1e-9);
            let (z1, w1) = reduce_to_domain(&g, z0).unwrap();
            assert_eq!(z1, z0);
            assert!(w1.is_identity(1e-15));
        }
    }

    #[test]
    fn reduction_rejects_points_off_the_disk() {
        let g = octagon_group();
        assert!(reduce_to_domain(&g, C64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn axis_of_diagonal_element() {
        // upper-half-plane diag(e^{l/2}, e^{-l/2}) conjugated to the disk is a translation
        let l = 1.7;
        let t = MoebiusTransform::translation(0.3, l);
        let ax = axis_data(&t).unwrap();
        assert!((ax.translation_length - l).abs() < 1e-12);
        assert!((ax.attracting - C64::from_polar(1.0, 0.3)).norm() < 1e-9);
        assert!((ax.repelling + C64::from_polar(1.0, 0.3)).norm() < 1e-9);
    }

    #[test]
    fn octagon_generator_translation_length() {
        let g = octagon_group();
        let ax = axis_data(&g.generators[0]).unwrap();
        assert!((ax.translation_length - octagon_generator_length()).abs() < 1e-12);
        assert!((ax.translation_length - 3.0571).abs() < 1e-3);
    }

    #[test]
    fn elliptic_elements_are_rejected() {
        assert!(matches!(
            axis_data(&MoebiusTransform::rotation(0.4)),
            Err(Error::NonHyperbolic { .. })
        ));
    }

    #[test]
    fn conjugates_share_translation_length() {
        let g = octagon_group();
        let t = g.generators[1].compose(&g.generators[2]);
        let w = g.generators[5].compose(&g.generators[0]).compose(&g.generators[3]);
        let conj = w.compose(&t).compose(&w.inverse());
        let a = axis_data(&t).unwrap().translation_length;
        let b = axis_data(&conj).unwrap().translation_length;
        assert!((a - b).abs() < 1e-9 * a, "{a} {b}");
    }
}
