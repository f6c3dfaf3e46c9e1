use crate::domain::{ConformalMesh, ScalarField};
use crate::error::{Error, Result};
use crate::fuchsian::C64;

/// A point inside a mesh triangle with its barycentric coordinates.
#[derive(Clone, Copy, Debug)]
pub struct Location {
    pub triangle: usize,
    pub bary: [f64; 3],
}

/// Uniform-grid bucket search over mesh triangles.
#[derive(Clone, Debug)]
pub struct PointLocator {
    origin: C64,
    cell: f64,
    nx: usize,
    buckets: Vec<Vec<usize>>,
}

const BARY_TOL: f64 = 1e-10;
// Points reduced into the closed octagon may sit a rounding error outside the
// chord polygon near the corners; such points snap to the nearest triangle.
const SNAP_DISTANCE: f64 = 1e-7;

impl PointLocator {
    pub fn new(mesh: &ConformalMesh) -> Self {
        let (mut lo, mut hi) = (C64::new(f64::MAX, f64::MAX), C64::new(f64::MIN, f64::MIN));
        for z in &mesh.vertices {
            lo = C64::new(lo.re.min(z.re), lo.im.min(z.im));
            hi = C64::new(hi.re.max(z.re), hi.im.max(z.im));
        }
        let nx = ((mesh.triangles.len() as f64).sqrt().ceil() as usize).max(1);
        let cell = (hi.re - lo.re).max(hi.im - lo.im) / nx as f64 * (1.0 + 1e-9);
        let mut buckets = vec![Vec::new(); nx * nx];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let p = tri.map(|v| mesh.vertices[v]);
            let cx = |x: f64, o: f64| (((x - o) / cell).floor().max(0.0) as usize).min(nx - 1);
            let (x0, x1) = (
                cx(p.iter().map(|z| z.re).fold(f64::MAX, f64::min), lo.re),
                cx(p.iter().map(|z| z.re).fold(f64::MIN, f64::max), lo.re),
            );
            let (y0, y1) = (
                cx(p.iter().map(|z| z.im).fold(f64::MAX, f64::min), lo.im),
                cx(p.iter().map(|z| z.im).fold(f64::MIN, f64::max), lo.im),
            );
            for iy in y0..=y1 {
                for ix in x0..=x1 {
                    buckets[iy * nx + ix].push(t);
                }
            }
        }
        Self {
            origin: lo,
            cell,
            nx,
            buckets,
        }
    }

    fn bucket(&self, z: C64) -> Option<&[usize]> {
        let fx = (z.re - self.origin.re) / self.cell;
        let fy = (z.im - self.origin.im) / self.cell;
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.nx as f64 {
            return None;
        }
        Some(&self.buckets[fy as usize * self.nx + fx as usize])
    }

    pub fn locate(&self, mesh: &ConformalMesh, z: C64) -> Result<Location> {
        let outside = || Error::OutsideMesh { re: z.re, im: z.im };
        let candidates = self.bucket(z).ok_or_else(outside)?;
        let mut best: Option<(f64, Location)> = None;
        for &t in candidates {
            let bary = barycentric(mesh, t, z);
            let worst = bary.iter().copied().fold(f64::MAX, f64::min);
            if worst >= -BARY_TOL {
                return Ok(Location { triangle: t, bary });
            }
            if best.as_ref().is_none_or(|(w, _)| worst > *w) {
                best = Some((worst, Location { triangle: t, bary }));
            }
        }
        match best {
            Some((worst, loc)) if -worst * mesh_scale(mesh, loc.triangle) < SNAP_DISTANCE => {
                let clamped = loc.bary.map(|b| b.max(0.0));
                let s: f64 = clamped.iter().sum();
                Ok(Location {
                    triangle: loc.triangle,
                    bary: clamped.map(|b| b / s),
                })
            }
            _ => Err(outside()),
        }
    }

    /// P1 interpolation of a class field.
    pub fn interpolate(&self, mesh: &ConformalMesh, field: &ScalarField, z: C64) -> Result<f64> {
        let loc = self.locate(mesh, z)?;
        Ok(interpolate_at(mesh, &loc, |v| field.0[mesh.class_of[v]]))
    }
}

pub(crate) fn interpolate_at(mesh: &ConformalMesh, loc: &Location, f: impl Fn(usize) -> f64) -> f64 {
    let t = mesh.triangles[loc.triangle];
    (0..3).map(|k| loc.bary[k] * f(t[k])).sum()
}

fn mesh_scale(mesh: &ConformalMesh, t: usize) -> f64 {
    let tri = mesh.triangles[t];
    (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]).norm()
}

pub(crate) fn barycentric(mesh: &ConformalMesh, t: usize, z: C64) -> [f64; 3] {
    let [a, b, c] = mesh.triangles[t].map(|v| mesh.vertices[v]);
    let det = (b.re - a.re) * (c.im - a.im) - (c.re - a.re) * (b.im - a.im);
    let l1 = ((z.re - a.re) * (c.im - a.im) - (c.re - a.re) * (z.im - a.im)) / det;
    let l2 = ((b.re - a.re) * (z.im - a.im) - (z.re - a.re) * (b.im - a.im)) / det;
    [1.0 - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_octagon_mesh;
    use crate::fuchsian::octagon_group;

    #[test]
    fn linear_fields_interpolate_exactly() {
        let g = octagon_group();
        let mesh = build_octagon_mesh(&g, 0.3).unwrap();
        let loc = PointLocator::new(&mesh);
        // class fields are single-valued, so test on raw-vertex values instead
        for z in [C64::new(0.0, 0.0), C64::new(0.3, -0.2), C64::new(-0.5, 0.1)] {
            let l = loc.locate(&mesh, z).unwrap();
            let v = interpolate_at(&mesh, &l, |v| 2.0 * mesh.vertices[v].re - mesh.vertices[v].im);
            assert!((v - (2.0 * z.re - z.im)).abs() < 1e-12);
        }
        assert!(loc.locate(&mesh, C64::new(0.95, 0.0)).is_err());
    }

    #[test]
    fn reduced_points_are_always_found() {
        use crate::fuchsian::reduce_to_domain;
        let g = octagon_group();
        let mesh = build_octagon_mesh(&g, 0.3).unwrap();
        let loc = PointLocator::new(&mesh);
        for i in 0..2000 {
            let r = 0.999 * ((i as f64 * 0.618).fract()).sqrt();
            let z = C64::from_polar(r, i as f64 * 2.399);
            let (z0, _) = reduce_to_domain(&g, z).unwrap();
            loc.locate(&mesh, z0).unwrap();
        }
        for k in 0..8 {
            loc.locate(&mesh, g.vertex(k)).unwrap();
        }
    }
}
