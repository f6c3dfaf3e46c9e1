//! Geodesic flow of the hyperbolic metric on the unit tangent bundle of the
//! surface, Birkhoff integrals, Monte-Carlo variances and X-ray transforms
//! over closed geodesics.
//!
//! A tangent state is kept as a point of the closed octagon with a direction
//! angle measured in disk coordinates. Steps are exact: conjugate the base
//! point to the origin, move along a diameter, map back and fold into the
//! octagon, carrying the direction with the derivative of each Möbius map.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::locate::{barycentric, interpolate_at};
use crate::domain::{
    christoffel, integrate_normalized, ConformalMesh, CubicPatches, Location, PointLocator, ScalarField,
};
use crate::error::{Error, Result};
use crate::fuchsian::{axis_data, conformal_factor, reduce_to_domain, FuchsianGroup, MoebiusTransform, C64};

/// Largest step accepted by the Birkhoff quadrature.
pub const MAX_STEP: f64 = 0.05;
pub const DEFAULT_HORIZON: f64 = 50.0;
pub const DEFAULT_SAMPLES: usize = 2000;
pub const DEFAULT_STEP: f64 = 0.02;
/// Largest accepted `|mean|` of a function handed to the variance estimator.
pub const MEAN_TOLERANCE: f64 = 1e-6;

/// A unit tangent vector: base point in the closed octagon, direction angle,
/// and the accumulated deck transformation carrying it to its lift in the disk.
#[derive(Clone, Copy, Debug)]
pub struct TangentState {
    pub point: C64,
    pub angle: f64,
    pub lift: MoebiusTransform,
}

impl TangentState {
    pub fn new(point: C64, angle: f64) -> Self {
        Self {
            point,
            angle,
            lift: MoebiusTransform::IDENTITY,
        }
    }

    /// Position of the orbit in the universal cover.
    pub fn lifted_point(&self) -> C64 {
        self.lift.apply(self.point)
    }

    /// Euclidean components of the σ-unit tangent vector.
    pub fn unit_vector(&self) -> [f64; 2] {
        let s = 0.5 * (1.0 - self.point.norm_sqr());
        [s * self.angle.cos(), s * self.angle.sin()]
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Moves the base point along the geodesic in the disk without folding.
fn advance(point: C64, angle: f64, dt: f64) -> (C64, f64) {
    let back = MoebiusTransform::to_origin(point).inverse();
    let w = C64::from_polar((0.5 * dt).tanh(), angle);
    // `to_origin` has real positive derivative at the base point, so the
    // direction at the origin equals the direction at the base point
    (back.apply(w), wrap_angle(angle + back.derivative(w).arg()))
}

/// Exact geodesic step of length `dt`, folded back into the octagon.
pub fn flow_step(group: &FuchsianGroup, state: &TangentState, dt: f64) -> Result<TangentState> {
    if dt == 0.0 {
        return Ok(*state);
    }
    let (z, angle) = advance(state.point, state.angle, dt);
    let (z0, word) = reduce_to_domain(group, z)?;
    if word.is_identity(0.0) {
        return Ok(TangentState {
            point: z,
            angle,
            lift: state.lift,
        });
    }
    let pull = word.inverse();
    Ok(TangentState {
        point: z0,
        angle: wrap_angle(angle + pull.derivative(z).arg()),
        lift: state.lift.compose(&word),
    })
}

/// Piecewise-linear base function sampled along orbits.
pub struct BaseSampler<'a> {
    mesh: &'a ConformalMesh,
    locator: PointLocator,
    raw: Vec<f64>,
}

impl<'a> BaseSampler<'a> {
    pub fn new(mesh: &'a ConformalMesh, field: &ScalarField) -> Self {
        Self {
            mesh,
            locator: PointLocator::new(mesh),
            raw: mesh.expand(field),
        }
    }

    pub fn value(&self, z: C64) -> Result<f64> {
        let loc = self.locator.locate(self.mesh, z)?;
        Ok(interpolate_at(self.mesh, &loc, |v| self.raw[v]))
    }
}

/// `∫₀ᵀ f(φ_t x) dt` by the composite trapezoid rule with step close to `dt`.
pub fn birkhoff_integral(
    group: &FuchsianGroup,
    f: &dyn Fn(&TangentState) -> Result<f64>,
    state: &TangentState,
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    if !(horizon > 0.0) || !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(Error::InvalidArgument(format!(
            "Birkhoff integral needs T > 0 and 0 < Δt ≤ {MAX_STEP}, got T = {horizon}, Δt = {dt}"
        )));
    }
    let steps = (horizon / dt).round().max(1.0) as usize;
    let h = horizon / steps as f64;
    let mut s = *state;
    let mut total = 0.5 * f(&s)?;
    for i in 1..=steps {
        s = flow_step(group, &s, h)?;
        let v = f(&s)?;
        total += if i == steps { 0.5 * v } else { v };
    }
    Ok(total * h)
}

/// Draws base points from `dv_σ / Area` (triangle by hyperbolic mass, then
/// rejection against `ρ` inside the triangle) and angles uniformly.
pub struct LiouvilleSampler<'a> {
    mesh: &'a ConformalMesh,
    cumulative: Vec<f64>,
    rho_max: Vec<f64>,
}

impl<'a> LiouvilleSampler<'a> {
    pub fn new(mesh: &'a ConformalMesh) -> Self {
        let mut acc = 0.0;
        let cumulative = mesh
            .triangle_mass
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        // ρ grows with |z| and |z| peaks at a corner of each triangle
        let rho_max = mesh
            .triangles
            .iter()
            .map(|t| t.iter().map(|&v| mesh.rho[v]).fold(0.0, f64::max))
            .collect();
        Self {
            mesh,
            cumulative,
            rho_max,
        }
    }

    pub fn sample_point<R: Rng>(&self, rng: &mut R) -> C64 {
        let total = *self.cumulative.last().expect("mesh has triangles");
        let target = rng.gen::<f64>() * total;
        let t = self.cumulative.partition_point(|&c| c <= target).min(self.cumulative.len() - 1);
        let [a, b, c] = self.mesh.triangles[t].map(|v| self.mesh.vertices[v]);
        loop {
            let (mut r1, mut r2) = (rng.gen::<f64>(), rng.gen::<f64>());
            if r1 + r2 > 1.0 {
                r1 = 1.0 - r1;
                r2 = 1.0 - r2;
            }
            let z = a + (b - a) * r1 + (c - a) * r2;
            if rng.gen::<f64>() * self.rho_max[t] <= conformal_factor(z) {
                return z;
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> TangentState {
        let z = self.sample_point(rng);
        TangentState::new(z, rng.gen::<f64>() * 2.0 * PI - PI)
    }
}

/// Seeded stream for sample `index` under a master seed.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, Serialize)]
pub struct VarianceEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub horizon: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Monte-Carlo estimate of `(1/T) E[(∫₀ᵀ f∘φ_t dt)²]` under the Liouville measure.
pub fn variance_mc(
    group: &FuchsianGroup,
    mesh: &ConformalMesh,
    f: &ScalarField,
    horizon: f64,
    samples: usize,
    dt: f64,
    seed: u64,
) -> Result<VarianceEstimate> {
    let mean = integrate_normalized(mesh, f);
    if mean.abs() > MEAN_TOLERANCE {
        return Err(Error::NotMeanZero { mean });
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    if f.0.iter().all(|&v| v == 0.0) {
        return Ok(VarianceEstimate {
            estimate: 0.0,
            standard_error: 0.0,
            horizon,
            samples,
            seed,
        });
    }
    let sampler = BaseSampler::new(mesh, f);
    let liouville = LiouvilleSampler::new(mesh);
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let start = liouville.sample(&mut rng);
            let integral = birkhoff_integral(group, &|s| sampler.value(s.point), &start, horizon, dt)?;
            Ok(integral * integral / horizon)
        })
        .collect::<Result<_>>()?;
    let n = samples as f64;
    let estimate = values.iter().sum::<f64>() / n;
    let var = if samples > 1 {
        values.iter().map(|v| (v - estimate).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(VarianceEstimate {
        estimate,
        standard_error: (var / n).sqrt(),
        horizon,
        samples,
        seed,
    })
}

/// A Γ-equivariant 1-form `χ = χ₁dx + χ₂dy` given by its Euclidean components
/// at raw mesh vertices and, optionally, at edge midpoints. Triangles carry
/// quadratic elements; an edge without a midpoint value is linear.
#[derive(Clone, Debug)]
pub struct OneForm {
    pub components: Vec<[f64; 2]>,
    /// Components at chord midpoints, keyed by the sorted vertex pair.
    pub midpoints: HashMap<(usize, usize), [f64; 2]>,
}

fn frame_scale(z: C64) -> f64 {
    0.5 * (1.0 - z.norm_sqr())
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn to_complex(c: [f64; 2]) -> C64 {
    C64::new(c[0], -c[1])
}

fn from_complex(phi: C64) -> [f64; 2] {
    [phi.re, -phi.im]
}

impl OneForm {
    pub fn zero(mesh: &ConformalMesh) -> Self {
        Self {
            components: vec![[0.0; 2]; mesh.vertices.len()],
            midpoints: HashMap::new(),
        }
    }

    /// `df` with the gradient of the class field `f` recovered by cubic patches,
    /// averaged over each identification class through the deck maps so that
    /// `φ(γz)γ′(z) = φ(z)` holds exactly at vertices for `φ = χ₁ − iχ₂`.
    /// Midpoints of paired side edges are averaged the same way, which makes
    /// the two traces of `χ` on each seam agree to third order.
    pub fn exact(group: &FuchsianGroup, mesh: &ConformalMesh, f: &ScalarField) -> Self {
        let raw = mesh.expand(f);
        let patches = CubicPatches::fit(mesh, &raw);
        let mut owner = vec![usize::MAX; mesh.vertices.len()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for &v in tri {
                if owner[v] == usize::MAX {
                    owner[v] = t;
                }
            }
        }
        let local: Vec<C64> = (0..mesh.vertices.len())
            .map(|v| to_complex(patches.evaluate(owner[v], mesh.vertices[v]).1))
            .collect();
        let maps = mesh.class_transforms(group);
        let mut sum = vec![C64::new(0.0, 0.0); mesh.class_count()];
        let mut count = vec![0usize; mesh.class_count()];
        for v in 0..mesh.vertices.len() {
            let c = mesh.class_of[v];
            // φ(rep) = φ(v) / T′(v) with T(v) = rep
            sum[c] += local[v] / maps[v].derivative(mesh.vertices[v]);
            count[c] += 1;
        }
        let components: Vec<[f64; 2]> = (0..mesh.vertices.len())
            .map(|v| {
                let c = mesh.class_of[v];
                from_complex(sum[c] / count[c] as f64 * maps[v].derivative(mesh.vertices[v]))
            })
            .collect();

        // midpoints: average of the patches on both sides of the edge
        let mut acc: HashMap<(usize, usize), (C64, usize)> = HashMap::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let m = 0.5 * (mesh.vertices[a] + mesh.vertices[b]);
                let e = acc.entry(edge_key(a, b)).or_insert((C64::new(0.0, 0.0), 0));
                e.0 += to_complex(patches.evaluate(t, m).1);
                e.1 += 1;
            }
        }
        let mut mid: HashMap<(usize, usize), C64> =
            acc.into_iter().map(|(k, (v, n))| (k, v / n as f64)).collect();
        let n = mesh.segments_per_side;
        for k in 0..group.generators.len() / 2 {
            // g_k carries side k+4 onto side k, vertex j onto vertex n−j
            let g = &group.generators[k];
            let (src, dst) = (&mesh.side_vertices[k + 4], &mesh.side_vertices[k]);
            for j in 0..n {
                let ks = edge_key(src[j], src[j + 1]);
                let kd = edge_key(dst[n - j], dst[n - j - 1]);
                let (a, b) = (mesh.vertices[src[j]], mesh.vertices[src[j + 1]]);
                let d = g.derivative(0.5 * (a + b));
                let centre = 0.5 * (mid[&ks] + mid[&kd] * d);
                mid.insert(ks, centre);
                // g stretches the edge unevenly: the partner's chord midpoint is
                // the image of a point off the native midpoint, so read the
                // native quadratic trace there instead
                let m = 0.5 * (mesh.vertices[dst[n - j]] + mesh.vertices[dst[n - j - 1]]);
                let p = g.inverse().apply(m);
                let t = ((p - a) * (b - a).conj()).re / (b - a).norm_sqr();
                // the trace is quadratic in the σ-frame, where elements live
                let [fa, fb] = [a, b].map(|z| frame_scale(z));
                let fa = to_complex(components[src[j]]) * fa;
                let fb = to_complex(components[src[j + 1]]) * fb;
                let fc = centre * frame_scale(0.5 * (a + b));
                let trace = fa * (1.0 - t) * (1.0 - 2.0 * t) + fc * 4.0 * t * (1.0 - t) + fb * t * (2.0 * t - 1.0);
                mid.insert(kd, trace / frame_scale(a + (b - a) * t) / g.derivative(p));
            }
        }
        let midpoints = mid.into_iter().map(|(k, v)| (k, from_complex(v))).collect();
        Self { components, midpoints }
    }

    /// `sup |χ(v)|` over σ-unit vectors `v`.
    pub fn sup_norm(&self, mesh: &ConformalMesh) -> f64 {
        self.components
            .iter()
            .zip(&mesh.vertices)
            .map(|(c, z)| c[0].hypot(c[1]) * 0.5 * (1.0 - z.norm_sqr()))
            .fold(0.0, f64::max)
    }
}

/// Symmetric 2-tensor fields that can be integrated along closed geodesics.
/// Fields are smooth inside each mesh triangle, so integrands are evaluated
/// together with the triangle that holds the point.
pub trait TensorIntegrand: Sync {
    fn mesh(&self) -> &ConformalMesh;

    fn locator(&self) -> &PointLocator;

    fn locate(&self, z: C64) -> Result<Location> {
        self.locator().locate(self.mesh(), z)
    }

    /// `h(v, v)` at the state's base point for its σ-unit vector `v`.
    fn evaluate_at(&self, state: &TangentState, loc: &Location) -> f64;

    fn evaluate(&self, state: &TangentState) -> Result<f64> {
        let loc = self.locate(state.point)?;
        Ok(self.evaluate_at(state, &loc))
    }
}

/// `D_σχ(v, v) = Σ vᵢvⱼ ∂ᵢχⱼ − χ(Γ(v, v))`, the symmetrised covariant
/// derivative of a 1-form. Along a geodesic it is the derivative of `χ(ċ)`,
/// so its X-ray transform vanishes.
pub struct SymmetrizedDerivative<'a> {
    mesh: &'a ConformalMesh,
    locator: PointLocator,
    // per triangle: nodal values (3 vertices, then edges 01, 12, 20) and ∇λ_k
    nodes: Vec<[[f64; 2]; 6]>,
    grads: Vec<[[f64; 2]; 3]>,
}

impl<'a> SymmetrizedDerivative<'a> {
    pub fn new(mesh: &'a ConformalMesh, form: &OneForm) -> Self {
        let nodes = mesh
            .triangles
            .iter()
            .map(|t| {
                std::array::from_fn(|i| {
                    if i < 3 {
                        let s = frame_scale(mesh.vertices[t[i]]);
                        return form.components[t[i]].map(|c| c * s);
                    }
                    let (a, b) = (t[i - 3], t[(i - 2) % 3]);
                    match form.midpoints.get(&edge_key(a, b)) {
                        Some(c) => c.map(|c| c * frame_scale(0.5 * (mesh.vertices[a] + mesh.vertices[b]))),
                        // no midpoint: linear in the frame
                        None => {
                            let (sa, sb) = (frame_scale(mesh.vertices[a]), frame_scale(mesh.vertices[b]));
                            let (x, y) = (form.components[a], form.components[b]);
                            [0.5 * (sa * x[0] + sb * y[0]), 0.5 * (sa * x[1] + sb * y[1])]
                        }
                    }
                })
            })
            .collect();
        let grads = mesh
            .triangles
            .iter()
            .map(|t| {
                let p = t.map(|v| mesh.vertices[v]);
                let det = (p[1].re - p[0].re) * (p[2].im - p[0].im) - (p[2].re - p[0].re) * (p[1].im - p[0].im);
                std::array::from_fn(|k| {
                    let (b, c) = (p[(k + 1) % 3], p[(k + 2) % 3]);
                    [(b.im - c.im) / det, (c.re - b.re) / det]
                })
            })
            .collect();
        Self {
            mesh,
            locator: PointLocator::new(mesh),
            nodes,
            grads,
        }
    }

    /// Components and their Jacobian `jac[j][i] = ∂ᵢχⱼ` at a located point.
    pub fn form_at(&self, loc: &Location, z: C64) -> ([f64; 2], [[f64; 2]; 2]) {
        // elements carry n = sχ with s = (1 − |z|²)/2, so ∂ᵢχⱼ = (∂ᵢnⱼ − χⱼ∂ᵢs)/s
        let (n, dn) = self.frame_form_at(loc);
        let s = frame_scale(z);
        let ds = [-z.re, -z.im];
        let chi = n.map(|x| x / s);
        let jac = std::array::from_fn(|j| std::array::from_fn(|i| (dn[j][i] - chi[j] * ds[i]) / s));
        (chi, jac)
    }

    fn frame_form_at(&self, loc: &Location) -> ([f64; 2], [[f64; 2]; 2]) {
        let l = loc.bary;
        let dl = &self.grads[loc.triangle];
        let nodes = &self.nodes[loc.triangle];
        let mut value = [0.0; 2];
        let mut jac = [[0.0; 2]; 2];
        let mut add = |w: f64, dw: [f64; 2], node: [f64; 2]| {
            for j in 0..2 {
                value[j] += w * node[j];
                for i in 0..2 {
                    jac[j][i] += dw[i] * node[j];
                }
            }
        };
        for k in 0..3 {
            let c = 4.0 * l[k] - 1.0;
            add(l[k] * (2.0 * l[k] - 1.0), [c * dl[k][0], c * dl[k][1]], nodes[k]);
            let m = (k + 1) % 3;
            add(
                4.0 * l[k] * l[m],
                [0, 1].map(|i| 4.0 * (l[m] * dl[k][i] + l[k] * dl[m][i])),
                nodes[3 + k],
            );
        }
        (value, jac)
    }
}

impl TensorIntegrand for SymmetrizedDerivative<'_> {
    fn mesh(&self) -> &ConformalMesh {
        self.mesh
    }

    fn locator(&self) -> &PointLocator {
        &self.locator
    }

    fn evaluate_at(&self, state: &TangentState, loc: &Location) -> f64 {
        let v = state.unit_vector();
        let (chi, jac) = self.form_at(loc, state.point);
        let mut value = 0.0;
        for (i, vi) in v.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                value += vi * vj * jac[j][i];
            }
        }
        // ∇ log ρ = 4z / (1 − |z|²) for the hyperbolic metric
        let z = state.point;
        let w = 4.0 / (1.0 - z.norm_sqr());
        let gamma = christoffel([w * z.re, w * z.im]);
        let gvv = gamma.contract(v);
        value - chi[0] * gvv[0] - chi[1] * gvv[1]
    }
}

/// `w·σ` for a class scalar field `w`; its X-ray transform is `∫ w`, so it is
/// not a potential tensor whenever `w > 0`.
pub struct ConformalTensor<'a> {
    sampler: BaseSampler<'a>,
}

impl<'a> ConformalTensor<'a> {
    pub fn new(mesh: &'a ConformalMesh, weight: &ScalarField) -> Self {
        Self {
            sampler: BaseSampler::new(mesh, weight),
        }
    }
}

impl TensorIntegrand for ConformalTensor<'_> {
    fn mesh(&self) -> &ConformalMesh {
        self.sampler.mesh
    }

    fn locator(&self) -> &PointLocator {
        &self.sampler.locator
    }

    fn evaluate_at(&self, _state: &TangentState, loc: &Location) -> f64 {
        interpolate_at(self.sampler.mesh, loc, |v| self.sampler.raw[v])
    }
}

/// A closed geodesic: one period of the axis of a hyperbolic deck transformation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ClosedGeodesic {
    pub length: f64,
    #[serde(skip)]
    pub start: C64,
    pub start_angle: f64,
}

/// The closed geodesic of `gamma`, started at the foot of the perpendicular
/// from the origin to the axis and pointing towards the attracting end.
pub fn closed_geodesic(gamma: &MoebiusTransform) -> Result<ClosedGeodesic> {
    let axis = axis_data(gamma)?;
    let (a, r) = (axis.attracting, axis.repelling);
    // the axis is the circle orthogonal to the unit circle through a and r
    let mid = (a + r) / (a + r).norm().max(f64::MIN_POSITIVE);
    let half = 0.5 * (a - r).norm();
    let start = if (a + r).norm() < 1e-12 {
        C64::new(0.0, 0.0)
    } else {
        // distance from the origin to the axis along the bisector
        let cos_half = (1.0 - half * half).max(0.0).sqrt();
        let s = (1.0 - half) / cos_half.max(f64::MIN_POSITIVE);
        mid * s
    };
    // direction: move along the axis towards a
    let to0 = MoebiusTransform::to_origin(start);
    let a0 = to0.apply(a);
    Ok(ClosedGeodesic {
        length: axis.translation_length,
        start,
        start_angle: a0.arg(),
    })
}

// 4-point Gauss–Legendre on [0, 1]
const GAUSS_NODES: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_87,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.173_927_422_568_726_93,
    0.326_072_577_431_273_07,
    0.326_072_577_431_273_07,
    0.173_927_422_568_726_93,
];

/// `I₂(h)(c) = ℓ⁻¹ ∫₀^ℓ h(ċ, ċ) dt`, the average of `h` over one period.
///
/// The orbit is marched in `n_points` steps; every triangle crossing is located
/// by bisection and each piece inside one triangle is integrated by Gauss–Legendre,
/// so the kinks of piecewise-linear fields cost no accuracy.
pub fn xray(
    group: &FuchsianGroup,
    tensor: &dyn TensorIntegrand,
    geodesic: &ClosedGeodesic,
    n_points: usize,
) -> Result<f64> {
    if n_points < 2 {
        return Err(Error::InvalidArgument("X-ray quadrature needs at least two points".into()));
    }
    let (start, word) = reduce_to_domain(group, geodesic.start)?;
    let angle = geodesic.start_angle + word.inverse().derivative(geodesic.start).arg();
    let step = geodesic.length / n_points as f64;
    let piece = |from: &TangentState, len: f64, tri: usize| -> Result<f64> {
        let mut acc = 0.0;
        for (x, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            let s = flow_step(group, from, x * len)?;
            // interior nodes of a piece belong to its triangle
            let loc = Location {
                triangle: tri,
                bary: barycentric(tensor.mesh(), tri, s.point),
            };
            acc += w * tensor.evaluate_at(&s, &loc);
        }
        Ok(acc * len)
    };
    let mut total = 0.0;
    let mut state = TangentState::new(start, angle);
    let mut tri = tensor.locate(state.point)?.triangle;
    let mut travelled = 0.0;
    let mut k = 1;
    while k <= n_points {
        let target = if k == n_points { geodesic.length } else { k as f64 * step };
        let next = flow_step(group, &state, target - travelled)?;
        let next_tri = tensor.locate(next.point)?.triangle;
        if next_tri == tri {
            total += piece(&state, target - travelled, tri)?;
            state = next;
            travelled = target;
            k += 1;
            continue;
        }
        // bisect for the exit time from the current triangle
        let (mut lo, mut hi) = (0.0, target - travelled);
        let mut hi_tri = next_tri;
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            let t = tensor.locate(flow_step(group, &state, mid)?.point)?.triangle;
            if t == tri {
                lo = mid;
            } else {
                hi = mid;
                hi_tri = t;
            }
        }
        total += piece(&state, hi, tri)?;
        state = flow_step(group, &state, hi)?;
        travelled += hi;
        tri = hi_tri;
    }
    Ok(total / geodesic.length)
}

/// `|I₂(D_σχ)|` along the axis of `gamma`.
pub fn xray_check(
    group: &FuchsianGroup,
    mesh: &ConformalMesh,
    chi: &OneForm,
    gamma: &MoebiusTransform,
    n_points: usize,
) -> Result<f64> {
    let geodesic = closed_geodesic(gamma)?;
    let tensor = SymmetrizedDerivative::new(mesh, chi);
    Ok(xray(group, &tensor, &geodesic, n_points)?.abs())
}

/// One (form, geodesic) pair of an X-ray survey; ratios are relative to `‖χ‖∞`.
#[derive(Clone, Debug, Serialize)]
pub struct XrayRow {
    pub form: usize,
    pub word_length: usize,
    pub geodesic_length: f64,
    pub potential_ratio: f64,
    pub control_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct XrayReport {
    pub modes: usize,
    pub seed: u64,
    pub rows: Vec<XrayRow>,
    pub max_potential_ratio: f64,
    pub mean_control_ratio: f64,
}

impl XrayReport {
    pub fn csv(&self) -> String {
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.form as f64,
                    r.word_length as f64,
                    r.geodesic_length,
                    r.potential_ratio,
                    r.control_ratio,
                ]
            })
            .collect();
        crate::io::csv_string(
            &["form", "word_length", "geodesic_length", "potential_ratio", "control_ratio"],
            &rows,
        )
    }
}

/// Closed geodesics of word length `≤ max_len`, spread evenly over the
/// enumeration order of the non-trivial words.
pub fn short_geodesics(group: &FuchsianGroup, max_len: usize, count: usize) -> Result<Vec<(usize, MoebiusTransform)>> {
    let words = crate::fuchsian::enumerate_words(group, max_len, crate::fuchsian::DEFAULT_ELEMENT_CAP)?;
    let all: Vec<(usize, MoebiusTransform)> = (1..=max_len)
        .flat_map(|l| words.level(l).iter().map(move |g| (l, *g)))
        .collect();
    if count == 0 || count > all.len() {
        return Err(Error::InvalidArgument(format!(
            "asked for {count} geodesics among {} words",
            all.len()
        )));
    }
    Ok((0..count).map(|i| all[i * all.len() / count]).collect())
}

/// X-ray transforms of `D_σχ` for `forms` random exact forms `χ = df`, with `f`
/// a combination of eigenfunctions `1..=modes` with coefficients uniform in
/// `[−1, 1]`, against the control tensor `w·σ` with `w` rescaled to peak at `‖χ‖∞`.
#[allow(clippy::too_many_arguments)]
pub fn xray_survey(
    group: &FuchsianGroup,
    mesh: &ConformalMesh,
    eigenvectors: &[ScalarField],
    weight: &ScalarField,
    forms: usize,
    modes: usize,
    geodesics: &[(usize, MoebiusTransform)],
    seed: u64,
    n_points: usize,
) -> Result<XrayReport> {
    if modes == 0 || modes >= eigenvectors.len() {
        return Err(Error::InvalidArgument(format!(
            "X-ray survey needs modes in 1..{}, got {modes}",
            eigenvectors.len()
        )));
    }
    if !(weight.max() > 0.0) {
        return Err(Error::InvalidArgument("control weight must be positive somewhere".into()));
    }
    let curves = geodesics
        .iter()
        .map(|(_, g)| closed_geodesic(g))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(forms * geodesics.len());
    for form in 0..forms {
        let mut rng = sample_rng(seed, form as u64);
        let mut f = ScalarField::zeros(mesh.class_count());
        for phi in &eigenvectors[1..=modes] {
            let c = rng.gen_range(-1.0..=1.0);
            for (a, b) in f.0.iter_mut().zip(&phi.0) {
                *a += c * b;
            }
        }
        let chi = OneForm::exact(group, mesh, &f);
        let sup = chi.sup_norm(mesh);
        let tensor = SymmetrizedDerivative::new(mesh, &chi);
        let control = ConformalTensor::new(mesh, &weight.map(|w| w / weight.max() * sup));
        let pairs = geodesics
            .par_iter()
            .zip(&curves)
            .map(|((len, _), curve)| {
                let i = xray(group, &tensor, curve, n_points)?;
                let c = xray(group, &control, curve, n_points)?;
                Ok(XrayRow {
                    form,
                    word_length: *len,
                    geodesic_length: curve.length,
                    potential_ratio: i.abs() / sup,
                    control_ratio: c.abs() / sup,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(pairs);
    }
    let max_potential_ratio = rows.iter().map(|r| r.potential_ratio).fold(0.0, f64::max);
    let mean_control_ratio = rows.iter().map(|r| r.control_ratio).sum::<f64>() / rows.len().max(1) as f64;
    Ok(XrayReport {
        modes,
        seed,
        rows,
        max_potential_ratio,
        mean_control_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_octagon_mesh;
    use crate::fuchsian::{hyperbolic_distance, octagon_group};

    #[test]
    fn zero_step_is_identity() {
        let g = octagon_group();
        let s = TangentState::new(C64::new(0.1, -0.2), 0.7);
        let t = flow_step(&g, &s, 0.0).unwrap();
        assert_eq!(t.point, s.point);
        assert_eq!(t.angle, s.angle);
    }

    #[test]
    fn origin_flow_reaches_tanh_radius() {
        let g = octagon_group();
        for t in [0.1, 0.5, 1.0] {
            let s = flow_step(&g, &TangentState::new(C64::new(0.0, 0.0), 0.3), t).unwrap();
            assert!((s.point.norm() - (0.5 * t).tanh()).abs() < 1e-14);
            assert!((s.point.arg() - 0.3).abs() < 1e-14);
            assert!((s.angle - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn steps_compose() {
        let g = octagon_group();
        let s = TangentState::new(C64::new(0.2, 0.1), 2.0);
        for (a, b) in [(0.3, 0.4), (1.7, 2.9), (3.0, 5.0)] {
            let two = flow_step(&g, &flow_step(&g, &s, a).unwrap(), b).unwrap();
            let one = flow_step(&g, &s, a + b).unwrap();
            assert!((two.lifted_point() - one.lifted_point()).norm() < 1e-9 * (1.0 + one.lift.entries()[0].norm()));
            assert!((two.point - one.point).norm() < 1e-9, "{a} {b}");
            assert!((wrap_angle(two.angle - one.angle)).abs() < 1e-9);
        }
    }

    #[test]
    fn flow_moves_at_unit_speed_in_the_cover() {
        let g = octagon_group();
        let mut s = TangentState::new(C64::new(-0.1, 0.3), -1.0);
        let start = s.lifted_point();
        for i in 1..=20 {
            s = flow_step(&g, &s, 0.25).unwrap();
            assert!(g.contains(s.point, 1e-9));
            let d = hyperbolic_distance(start, s.lifted_point());
            assert!((d - 0.25 * i as f64).abs() < 1e-8, "{d}");
        }
    }

    #[test]
    fn constant_integrates_exactly() {
        let g = octagon_group();
        let s = TangentState::new(C64::new(0.05, 0.05), 1.0);
        let v = birkhoff_integral(&g, &|_| Ok(2.5), &s, 7.0, 0.02).unwrap();
        assert!((v - 17.5).abs() < 1e-12);
        assert!(birkhoff_integral(&g, &|_| Ok(1.0), &s, 7.0, 0.1).is_err());
    }

    #[test]
    fn zero_function_has_zero_variance() {
        let g = octagon_group();
        let mesh = build_octagon_mesh(&g, 0.3).unwrap();
        let f = ScalarField::zeros(mesh.class_count());
        let v = variance_mc(&g, &mesh, &f, 10.0, 16, 0.02, 1).unwrap();
        assert_eq!((v.estimate, v.standard_error), (0.0, 0.0));
        let c = ScalarField::constant(mesh.class_count(), 1.0);
        assert!(matches!(variance_mc(&g, &mesh, &c, 10.0, 16, 0.02, 1), Err(Error::NotMeanZero { .. })));
    }

    #[test]
    fn closed_geodesic_closes_up() {
        let g = octagon_group();
        for gamma in [g.generators[0], g.generators[1].compose(&g.generators[2])] {
            let c = closed_geodesic(&gamma).unwrap();
            let s = TangentState::new(c.start, c.start_angle);
            let (end, _) = advance(s.point, s.angle, c.length);
            assert!((end - gamma.apply(c.start)).norm() < 1e-9);
        }
    }

    #[test]
    fn exact_form_is_equivariant_at_vertices_and_seam_midpoints() {
        let g = octagon_group();
        let mesh = build_octagon_mesh(&g, 0.15).unwrap();
        let f = mesh.sample(|z| (3.0 * z.re).sin() * z.im + z.norm_sqr());
        let chi = OneForm::exact(&g, &mesh, &f);
        let phi = |c: [f64; 2]| to_complex(c);
        let n = mesh.segments_per_side;
        for k in 0..4 {
            let gk = g.generators[k];
            let (src, dst) = (&mesh.side_vertices[k + 4], &mesh.side_vertices[k]);
            for j in 0..=n {
                let z = mesh.vertices[src[j]];
                let lhs = phi(chi.components[dst[n - j]]) * gk.derivative(z);
                assert!((lhs - phi(chi.components[src[j]])).norm() < 1e-12);
            }
            // the partner midpoint carries the native quadratic trace
            let (a, b) = (mesh.vertices[src[0]], mesh.vertices[src[1]]);
            let native = phi(chi.midpoints[&edge_key(src[0], src[1])]);
            let partner = phi(chi.midpoints[&edge_key(dst[n], dst[n - 1])]);
            assert!((partner * gk.derivative(0.5 * (a + b)) - native).norm() < 0.05 * native.norm().max(1.0));
        }
    }

    #[test]
    fn frame_linear_forms_are_reproduced() {
        // χ = n/s with n linear and s = (1 − |z|²)/2
        let g = octagon_group();
        let mesh = build_octagon_mesh(&g, 0.3).unwrap();
        let n = |z: C64| [1.0 + z.re, 2.0 * z.im];
        let mut chi = OneForm::zero(&mesh);
        for (c, z) in chi.components.iter_mut().zip(&mesh.vertices) {
            *c = n(*z).map(|x| x / frame_scale(*z));
        }
        let d = SymmetrizedDerivative::new(&mesh, &chi);
        let z = C64::new(0.11, -0.07);
        let loc = d.locate(z).unwrap();
        let (value, jac) = d.form_at(&loc, z);
        let s = frame_scale(z);
        let chi_z = n(z).map(|x| x / s);
        let dn = [[1.0, 0.0], [0.0, 2.0]];
        let ds = [-z.re, -z.im];
        for j in 0..2 {
            assert!((value[j] - chi_z[j]).abs() < 1e-12);
            for i in 0..2 {
                let expected = (dn[j][i] - chi_z[j] * ds[i]) / s;
                assert!((jac[j][i] - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn conformal_tensor_averages_its_weight() {
        let g = octagon_group();
        let mesh = build_octagon_mesh(&g, 0.3).unwrap();
        let w = ScalarField::constant(mesh.class_count(), 0.7);
        let tensor = ConformalTensor::new(&mesh, &w);
        let c = closed_geodesic(&g.generators[0]).unwrap();
        assert!((xray(&g, &tensor, &c, 200).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn potentials_have_small_xray_against_control() {
        let g = octagon_group();
        let mesh = build_octagon_mesh(&g, 0.12).unwrap();
        let lap = crate::domain::assemble_laplacian(&mesh);
        let spectral = crate::spectral_covariance::eigensolve(&lap, 4).unwrap();
        let weight = mesh.sample(|z| 1.0 + z.re * z.re);
        let geodesics = short_geodesics(&g, 2, 4).unwrap();
        let report = xray_survey(&g, &mesh, &spectral.eigenvectors, &weight, 2, 3, &geodesics, 3, 600).unwrap();
        assert_eq!(report.rows.len(), 8);
        assert!(report.max_potential_ratio < 2e-2, "{}", report.max_potential_ratio);
        assert!(report.mean_control_ratio > 0.3);
    }
}
