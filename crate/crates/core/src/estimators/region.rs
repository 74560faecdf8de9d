//! Quadrature over the three integration domains: the level mesh, the level
//! band `{c−ε ≤ F ≤ c+ε}` and the distance tube around the mesh.
//!
//! Cells that straddle a band or tube boundary are supersampled on a regular
//! sub-lattice; the band test inside such a cell uses the second-order Taylor
//! model of `F` at the cell center.

use rayon::prelude::*;

use crate::density::{DerivBundle, Field};
use crate::error::{Error, Result};
use crate::linalg::{mat_vec, norm, Vec3};
use crate::surface::{GridSpec, LevelMesh, MeshDistance};

/// Running sum with bookkeeping of skipped (degenerate) points.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    pub sum: f64,
    pub skipped: usize,
    pub total: usize,
    /// Grid cells (or mesh cells) that contributed.
    pub cells: usize,
    pub boundary_cells: usize,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.sum += o.sum;
        self.skipped += o.skipped;
        self.total += o.total;
        self.cells += o.cells;
        self.boundary_cells += o.boundary_cells;
        self
    }

    /// Fails when more than `frac` of the points were skipped, or any point
    /// when `frac` is zero.
    pub fn check(&self, frac: f64) -> Result<f64> {
        let bad = self.skipped as f64 > frac * self.total as f64;
        if self.skipped > 0 && (frac == 0.0 || bad) {
            return Err(Error::DegenerateRegion {
                bad: self.skipped,
                total: self.total,
            });
        }
        Ok(self.sum)
    }
}

/// Point value, or `None` for a point excluded as degenerate.
pub type PointValue = Result<Option<f64>>;

/// Maps degenerate-gradient failures to `None`.
pub fn soften(r: Result<f64>) -> PointValue {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateGradient { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn mesh_sum<P>(m: &LevelMesh, phi: P) -> Result<Tally>
where
    P: Fn(usize, &[f64], &DerivBundle) -> PointValue + Sync,
{
    let raw: Vec<PointValue> = (0..m.vertices.len())
        .into_par_iter()
        .map(|v| phi(v, &m.vertices[v][..m.dim], &m.vertex_attrs[v]))
        .collect();
    let mut vals = Vec::with_capacity(raw.len());
    for (v, r) in raw.into_iter().enumerate() {
        match r {
            Ok(x) => vals.push(x),
            Err(e) => {
                let cell = m
                    .cells
                    .iter()
                    .position(|c| c[..m.dim].contains(&v))
                    .unwrap_or(0);
                return Err(Error::Integrand {
                    cell,
                    source: Box::new(e),
                });
            }
        }
    }
    let mut t = Tally::default();
    let k = m.dim as f64;
    for (ci, cell) in m.cells.iter().enumerate() {
        t.total += 1;
        let mut s = 0.0;
        let mut ok = true;
        for &v in &cell[..m.dim] {
            match vals[v] {
                Some(x) => s += x,
                None => ok = false,
            }
        }
        if ok {
            t.sum += m.cell_measures[ci] * s / k;
            t.cells += 1;
        } else {
            t.skipped += 1;
        }
    }
    Ok(t)
}

/// Offsets of the `s^d` sub-cell centers relative to the cell center.
fn sub_offsets(grid: &GridSpec, s: usize) -> Vec<Vec3> {
    let d = grid.dim;
    let n = s.pow(d as u32);
    (0..n)
        .map(|k| {
            let mut o = [0.0; 3];
            let mut r = k;
            for (a, oa) in o.iter_mut().enumerate().take(d) {
                let i = r % s;
                r /= s;
                *oa = ((i as f64 + 0.5) / s as f64 - 0.5) * grid.step(a);
            }
            o
        })
        .collect()
}

fn add3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// `Σ g ‖∇F‖ dV` over `{c−ε ≤ F ≤ c+ε}` (not yet divided by `2ε`).
///
/// `center(x, b)` gives `g` at a cell center with the field bundle there;
/// `sub(x)` gives `g` at a sub-cell point, or `None` to reuse the center value.
#[allow(clippy::too_many_arguments)]
pub fn band_sum<F, C, S>(
    f: &F,
    grid: &GridSpec,
    vals: &[f64],
    c: f64,
    eps: f64,
    supersample: usize,
    center: C,
    sub: S,
) -> Result<Tally>
where
    F: Field + ?Sized,
    C: Fn(&[f64], &DerivBundle) -> PointValue + Sync,
    S: Fn(&[f64]) -> Option<Result<f64>> + Sync,
{
    let d = grid.dim;
    let (lo, hi) = (c - eps, c + eps);
    let vol = grid.cell_volume();
    let offs = sub_offsets(grid, supersample);
    let sub_vol = vol / offs.len() as f64;
    let n_cells = grid.n_cells();
    let corners = 1usize << d;
    let per_chunk = grid.res[0] * if d == 3 { grid.res[1] } else { 1 };
    let chunks = n_cells / per_chunk;
    let tallies: Vec<Result<Tally>> = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut t = Tally::default();
            for ci in ch * per_chunk..(ch + 1) * per_chunk {
                let ijk = grid.cell_coords(ci);
                let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
                for k in 0..corners {
                    let q = [
                        ijk[0] + (k & 1),
                        ijk[1] + ((k >> 1) & 1),
                        ijk[2] + ((k >> 2) & 1),
                    ];
                    let v = vals[grid.node_index(q)];
                    mn = mn.min(v);
                    mx = mx.max(v);
                }
                let margin = 0.25 * (mx - mn);
                if mx + margin < lo || mn - margin > hi {
                    continue;
                }
                let x = grid.cell_center(ijk);
                let b = f.bundle(&x[..d]);
                let interior = mn - margin >= lo && mx + margin <= hi;
                if interior {
                    t.total += 1;
                    match center(&x[..d], &b)? {
                        Some(g) => {
                            t.sum += g * b.grad_norm * vol;
                            t.cells += 1;
                        }
                        None => t.skipped += 1,
                    }
                    continue;
                }
                t.boundary_cells += 1;
                let mut g0: Option<Option<f64>> = None;
                let mut cell_sum = 0.0;
                let mut hit = false;
                for o in &offs {
                    let ho = mat_vec(&b.hess, o, d);
                    let lin: f64 = (0..d).map(|a| b.grad[a] * o[a]).sum();
                    let quad: f64 = 0.5 * (0..d).map(|a| o[a] * ho[a]).sum::<f64>();
                    let fv = b.value + lin + quad;
                    if fv < lo || fv > hi {
                        continue;
                    }
                    let gn = norm(&add3(&b.grad, &ho), d);
                    let p = add3(&x, o);
                    t.total += 1;
                    let g = match sub(&p[..d]) {
                        Some(r) => Some(r?),
                        None => {
                            if g0.is_none() {
                                g0 = Some(center(&x[..d], &b)?);
                            }
                            g0.unwrap()
                        }
                    };
                    match g {
                        Some(g) => {
                            cell_sum += g * gn * sub_vol;
                            hit = true;
                        }
                        None => t.skipped += 1,
                    }
                }
                if hit {
                    t.sum += cell_sum;
                    t.cells += 1;
                }
            }
            Ok(t)
        })
        .collect();
    let mut out = Tally::default();
    for t in tallies {
        out = out.merge(t?);
    }
    Ok(out)
}

/// Cells per block edge for the coarse tube classification.
fn block_edge(d: usize) -> usize {
    if d == 2 {
        8
    } else {
        4
    }
}

/// Blocks of cells within `reach` of any mesh cell, in index order, as
/// `(lower cell corner, block index)`.
fn tube_blocks(grid: &GridSpec, mesh: &LevelMesh, reach: f64) -> Vec<[usize; 3]> {
    let d = grid.dim;
    let be = block_edge(d);
    let mut nb = [1usize; 3];
    for a in 0..d {
        nb[a] = grid.res[a].div_ceil(be);
    }
    let mut mark = vec![false; nb[0] * nb[1] * nb[2]];
    for cell in &mesh.cells {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..d {
            let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in &cell[..d] {
                mn = mn.min(mesh.vertices[v][a]);
                mx = mx.max(mesh.vertices[v][a]);
            }
            let st = grid.step(a) * be as f64;
            let l = ((mn - reach - grid.lower[a]) / st).floor().max(0.0) as usize;
            let u = ((mx + reach - grid.lower[a]) / st).floor().max(0.0) as usize;
            lo[a] = l.min(nb[a] - 1);
            hi[a] = u.min(nb[a] - 1);
        }
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    mark[x + nb[0] * (y + nb[1] * z)] = true;
                }
            }
        }
    }
    mark.iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(i, _)| {
            let b = [i % nb[0], (i / nb[0]) % nb[1], i / (nb[0] * nb[1])];
            [b[0] * be, b[1] * be, b[2] * be]
        })
        .collect()
}

/// `Σ g dV` over `{x : dist(x, mesh) ≤ ε}` (not yet divided by `2ε`).
///
/// `center(x)` gives `g` at a cell center; `sub(x)` gives `g` at a sub-cell
/// point, or `None` to reuse the center value.
#[allow(clippy::too_many_arguments)]
pub fn tube_sum<C, S>(
    grid: &GridSpec,
    mesh: &LevelMesh,
    md: &MeshDistance,
    eps: f64,
    supersample: usize,
    center: C,
    sub: S,
) -> Result<Tally>
where
    C: Fn(&[f64]) -> PointValue + Sync,
    S: Fn(&[f64]) -> Option<PointValue> + Sync,
{
    let d = grid.dim;
    let hd = grid.half_diag();
    let vol = grid.cell_volume();
    let offs = sub_offsets(grid, supersample);
    let sub_vol = vol / offs.len() as f64;
    let be = block_edge(d);
    let blocks = tube_blocks(grid, mesh, eps + hd);
    let parts: Vec<Result<Tally>> = blocks
        .par_iter()
        .map(|corner| {
            let mut t = Tally::default();
            let mut hi = [1usize; 3];
            let mut mid = [0.0; 3];
            for a in 0..d {
                hi[a] = (corner[a] + be).min(grid.res[a]);
                mid[a] = 0.5 * (corner[a] + hi[a]) as f64;
            }
            let bc = grid.point(&mid);
            let mut bhd = 0.0;
            for a in 0..d {
                bhd += (0.5 * (hi[a] - corner[a]) as f64 * grid.step(a)).powi(2);
            }
            let bhd = bhd.sqrt();
            let db = md.distance(&bc[..d]);
            if db - bhd > eps + hd {
                return Ok(t);
            }
            let all_inside = db + bhd <= eps - hd;
            for z in corner[2]..hi[2] {
                for y in corner[1]..hi[1] {
                    for xi in corner[0]..hi[0] {
                        let x = grid.cell_center([xi, y, z]);
                        let d0 = if all_inside {
                            0.0
                        } else {
                            md.distance(&x[..d])
                        };
                        if d0 > eps + hd {
                            continue;
                        }
                        if d0 <= eps - hd {
                            t.total += 1;
                            match center(&x[..d])? {
                                Some(g) => {
                                    t.sum += g * vol;
                                    t.cells += 1;
                                }
                                None => t.skipped += 1,
                            }
                            continue;
                        }
                        t.boundary_cells += 1;
                        let near = md.cells_within(&x[..d], d0 + 2.0 * hd);
                        let mut g0: Option<Option<f64>> = None;
                        let mut cell_sum = 0.0;
                        let mut hit = false;
                        for o in &offs {
                            let p = add3(&x, o);
                            if md.distance_among(&p[..d], &near) > eps {
                                continue;
                            }
                            t.total += 1;
                            let g = match sub(&p[..d]) {
                                Some(r) => r?,
                                None => {
                                    if g0.is_none() {
                                        g0 = Some(center(&x[..d])?);
                                    }
                                    g0.unwrap()
                                }
                            };
                            match g {
                                Some(g) => {
                                    cell_sum += g * sub_vol;
                                    hit = true;
                                }
                                None => t.skipped += 1,
                            }
                        }
                        if hit {
                            t.sum += cell_sum;
                            t.cells += 1;
                        }
                    }
                }
            }
            Ok(t)
        })
        .collect();
    let mut out = Tally::default();
    for t in parts {
        out = out.merge(t?);
    }
    Ok(out)
}
