//! Exact point-to-mesh distance with a uniform spatial hash.

use super::LevelMesh;
use crate::linalg::{add, dot, scale, sub, Vec3, ZERO3};

/// Distance queries against a fixed mesh.
#[derive(Debug, Clone)]
pub struct MeshDistance<'a> {
    mesh: &'a LevelMesh,
    lower: Vec3,
    size: f64,
    shape: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> MeshDistance<'a> {
    pub fn new(mesh: &'a LevelMesh) -> Self {
        let d = mesh.dim;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &mesh.vertices {
            for a in 0..d {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        let mean_len = if mesh.cells.is_empty() {
            1.0
        } else {
            let m = mesh.total_measure() / mesh.cells.len() as f64;
            if d == 2 {
                m
            } else {
                m.sqrt()
            }
        };
        let extent = (0..d).map(|a| hi[a] - lo[a]).fold(0.0, f64::max).max(1e-12);
        let cap = if d == 2 { 1024.0 } else { 96.0 };
        let size = (2.0 * mean_len).max(extent / cap).max(1e-12);
        let mut shape = [1usize; 3];
        let mut lower = ZERO3;
        for a in 0..d {
            lower[a] = lo[a];
            shape[a] = ((hi[a] - lo[a]) / size).floor() as usize + 1;
        }
        let total: usize = shape.iter().product();
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); total];
        for (ci, cell) in mesh.cells.iter().enumerate() {
            let mut blo = [0usize; 3];
            let mut bhi = [0usize; 3];
            for a in 0..d {
                let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
                for &v in &cell[..d] {
                    mn = mn.min(mesh.vertices[v][a]);
                    mx = mx.max(mesh.vertices[v][a]);
                }
                blo[a] = bucket(mn, lower[a], size, shape[a]);
                bhi[a] = bucket(mx, lower[a], size, shape[a]);
            }
            for z in blo[2]..=bhi[2] {
                for y in blo[1]..=bhi[1] {
                    for x in blo[0]..=bhi[0] {
                        lists[x + shape[0] * (y + shape[1] * z)].push(ci);
                    }
                }
            }
        }
        let mut starts = Vec::with_capacity(total + 1);
        let mut items = Vec::new();
        starts.push(0);
        for l in lists {
            items.extend(l);
            starts.push(items.len());
        }
        Self {
            mesh,
            lower,
            size,
            shape,
            starts,
            items,
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        self.closest(x).0
    }

    /// `(distance, closest point, cell index)`.
    pub fn closest(&self, x: &[f64]) -> (f64, Vec3, usize) {
        let d = self.mesh.dim;
        let mut q = ZERO3;
        q[..d].copy_from_slice(&x[..d]);
        let mut home = [0i64; 3];
        let mut kmax = 0i64;
        for a in 0..d {
            home[a] = ((q[a] - self.lower[a]) / self.size).floor() as i64;
            let far = (home[a])
                .abs()
                .max((self.shape[a] as i64 - 1 - home[a]).abs());
            kmax = kmax.max(far);
        }
        let mut best = (f64::INFINITY, ZERO3, usize::MAX);
        for k in 0..=kmax {
            self.visit_ring(&home, k, |ci| {
                let (dist, p) = self.cell_distance(&q, ci);
                if dist < best.0 || (dist == best.0 && ci < best.2) {
                    best = (dist, p, ci);
                }
            });
            if best.0 <= k as f64 * self.size {
                break;
            }
        }
        best
    }

    /// Mesh cells within `radius` of `x`.
    pub fn cells_within(&self, x: &[f64], radius: f64) -> Vec<usize> {
        let d = self.mesh.dim;
        let mut home = [0i64; 3];
        for a in 0..d {
            home[a] = ((x[a] - self.lower[a]) / self.size).floor() as i64;
        }
        let reach = (radius / self.size).ceil() as i64 + 1;
        let mut out = Vec::new();
        for k in 0..=reach {
            self.visit_ring(&home, k, |ci| out.push(ci));
        }
        out.sort_unstable();
        out.dedup();
        let mut q = ZERO3;
        q[..d].copy_from_slice(&x[..d]);
        out.retain(|&ci| self.cell_distance(&q, ci).0 <= radius);
        out
    }

    /// Distance from `x` to the nearest of the listed cells.
    pub fn distance_among(&self, x: &[f64], cells: &[usize]) -> f64 {
        let d = self.mesh.dim;
        let mut q = ZERO3;
        q[..d].copy_from_slice(&x[..d]);
        cells
            .iter()
            .map(|&ci| self.cell_distance(&q, ci).0)
            .fold(f64::INFINITY, f64::min)
    }

    fn visit_ring(&self, home: &[i64; 3], k: i64, mut f: impl FnMut(usize)) {
        let d = self.mesh.dim;
        let zr = if d == 3 { -k..=k } else { 0..=0 };
        for dz in zr {
            let z_face = dz.abs() == k;
            for dy in -k..=k {
                let full_row = z_face || dy.abs() == k;
                let mut visit = |dx: i64| {
                    let c = [home[0] + dx, home[1] + dy, home[2] + dz];
                    if (0..3).any(|a| c[a] < 0 || c[a] >= self.shape[a] as i64) {
                        return;
                    }
                    let b = c[0] as usize
                        + self.shape[0] * (c[1] as usize + self.shape[1] * c[2] as usize);
                    for &ci in &self.items[self.starts[b]..self.starts[b + 1]] {
                        f(ci);
                    }
                };
                if full_row {
                    for dx in -k..=k {
                        visit(dx);
                    }
                } else {
                    visit(-k);
                    if k > 0 {
                        visit(k);
                    }
                }
            }
        }
    }

    fn cell_distance(&self, q: &Vec3, ci: usize) -> (f64, Vec3) {
        let m = self.mesh;
        let c = &m.cells[ci];
        let p = if m.dim == 2 {
            closest_on_segment(q, &m.vertices[c[0]], &m.vertices[c[1]])
        } else {
            closest_on_triangle(q, &m.vertices[c[0]], &m.vertices[c[1]], &m.vertices[c[2]])
        };
        let r = sub(q, &p);
        (dot(&r, &r, 3).sqrt(), p)
    }
}

fn bucket(v: f64, lo: f64, size: f64, n: usize) -> usize {
    (((v - lo) / size).floor().max(0.0) as usize).min(n - 1)
}

pub(crate) fn closest_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = sub(b, a);
    let den = dot(&ab, &ab, 3);
    if den == 0.0 {
        return *a;
    }
    let t = (dot(&sub(p, a), &ab, 3) / den).clamp(0.0, 1.0);
    add(a, &scale(&ab, t))
}

/// Closest point on triangle `abc` by Voronoi-region classification.
pub(crate) fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(&ab, &ap, 3);
    let d2 = dot(&ac, &ap, 3);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = sub(p, b);
    let d3 = dot(&ab, &bp, 3);
    let d4 = dot(&ac, &bp, 3);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return add(a, &scale(&ab, v));
    }
    let cp = sub(p, c);
    let d5 = dot(&ab, &cp, 3);
    let d6 = dot(&ac, &cp, 3);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return add(a, &scale(&ac, w));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return add(b, &scale(&sub(c, b), w));
    }
    let den = 1.0 / (va + vb + vc);
    let v = vb * den;
    let w = vc * den;
    add(&add(a, &scale(&ab, v)), &scale(&ac, w))
}
