//! Marching squares / marching cubes with face-center disambiguation.
//!
//! Cubes are handled without a case table: each face contributes the
//! segments its own 2-D rule produces, every crossing edge then has degree
//! two inside the cube, and the resulting cycles are fan-triangulated.

use rayon::prelude::*;

use super::grid::GridSpec;
use super::LevelMesh;
use crate::density::Field;
use crate::error::{Error, Result};
use crate::linalg::{axpy, Vec3, ZERO3};

const POLISH_STEPS: usize = 20;

/// Node values in node-index order.
pub fn sample_nodes<F: Field + ?Sized>(f: &F, grid: &GridSpec) -> Vec<f64> {
    let n = grid.nodes_per_axis();
    let slab = n[0] * n[1];
    let slabs = if grid.dim == 3 { n[2] } else { n[1] };
    let row = if grid.dim == 3 { slab } else { n[0] };
    (0..slabs)
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut out = Vec::with_capacity(row);
            for r in 0..row {
                let idx = s * row + r;
                let c = grid.node_coords(idx);
                let p = grid.point(&[c[0] as f64, c[1] as f64, c[2] as f64]);
                out.push(f.value(&p[..grid.dim]));
            }
            out
        })
        .collect()
}

/// Segments inside one square given corner flags in cyclic order. Edge `k`
/// joins corners `k` and `k+1`; ambiguous squares consult `center_inside`.
fn square_segments(inside: [bool; 4], center_inside: impl FnOnce() -> bool) -> Vec<(usize, usize)> {
    let crossing: Vec<usize> = (0..4)
        .filter(|&k| inside[k] != inside[(k + 1) % 4])
        .collect();
    match crossing.len() {
        0 => Vec::new(),
        2 => vec![(crossing[0], crossing[1])],
        _ => {
            let ci = center_inside();
            (0..4)
                .filter(|&k| inside[k] != ci)
                .map(|k| ((k + 3) % 4, k))
                .collect()
        }
    }
}

struct CubeTables {
    /// `(corner, axis)` of each of the 12 edges.
    edges: Vec<(usize, usize)>,
    /// For each face: the 4 cyclic corners and the 4 edges between them.
    faces: Vec<([usize; 4], [usize; 4], usize, usize)>,
    /// The two faces each edge lies on.
    edge_faces: Vec<[usize; 2]>,
}

impl CubeTables {
    fn new() -> Self {
        let mut edges = Vec::new();
        for a in 0..3 {
            for c in 0..8 {
                if c & (1 << a) == 0 {
                    edges.push((c, a));
                }
            }
        }
        let eid = |c: usize, a: usize| edges.iter().position(|&e| e == (c, a)).unwrap();
        let mut faces = Vec::new();
        for a in 0..3 {
            let (u, v) = match a {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            for s in 0..2 {
                let base = s << a;
                let cyc = [base, base | 1 << u, base | 1 << u | 1 << v, base | 1 << v];
                let fe = [
                    eid(cyc[0], u),
                    eid(cyc[1], v),
                    eid(cyc[3], u),
                    eid(cyc[0], v),
                ];
                faces.push((cyc, fe, a, s));
            }
        }
        let mut edge_faces = vec![[usize::MAX; 2]; 12];
        for (fi, (_, fe, _, _)) in faces.iter().enumerate() {
            for &e in fe {
                let slot = if edge_faces[e][0] == usize::MAX { 0 } else { 1 };
                edge_faces[e][slot] = fi;
            }
        }
        Self {
            edges,
            faces,
            edge_faces,
        }
    }
}

/// Root of `F = c` on the segment from node `a` to its neighbor along `axis`.
fn polish<F: Field + ?Sized>(
    f: &F,
    grid: &GridSpec,
    node: [usize; 3],
    axis: usize,
    va: f64,
    vb: f64,
    c: f64,
) -> Vec3 {
    let d = grid.dim;
    let p0 = grid.point(&[node[0] as f64, node[1] as f64, node[2] as f64]);
    let h = grid.step(axis);
    let mut dir = ZERO3;
    dir[axis] = h;
    let tol = 1e-10 * c.abs();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (mut flo, fhi) = (va - c, vb - c);
    if flo == 0.0 {
        return p0;
    }
    if fhi == 0.0 {
        return axpy(&p0, 1.0, &dir);
    }
    let mut s = flo / (flo - fhi);
    for _ in 0..POLISH_STEPS {
        let p = axpy(&p0, s, &dir);
        let (v, g) = f.value_grad(&p[..d]);
        let r = v - c;
        if r.abs() <= tol {
            return p;
        }
        if (r > 0.0) == (flo > 0.0) {
            lo = s;
            flo = r;
        } else {
            hi = s;
        }
        let slope = g[axis] * h;
        let newton = s - r / slope;
        s = if slope != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    axpy(&p0, s, &dir)
}

/// Extracts `{F = c}` on the grid.
pub fn extract_level_mesh<F: Field + ?Sized>(f: &F, c: f64, grid: &GridSpec) -> Result<LevelMesh> {
    let vals = sample_nodes(f, grid);
    extract_from_nodes(f, c, grid, &vals)
}

/// As [`extract_level_mesh`], reusing precomputed node values.
pub fn extract_from_nodes<F: Field + ?Sized>(
    f: &F,
    c: f64,
    grid: &GridSpec,
    vals: &[f64],
) -> Result<LevelMesh> {
    let d = grid.dim;
    if f.dim() != d {
        return Err(Error::InvalidArgument(
            "field and grid dimensions differ".into(),
        ));
    }
    let (min, max) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    if !(c > min && c < max) {
        return Err(Error::LevelNotBracketed { level: c, min, max });
    }
    let n = grid.nodes_per_axis();
    let inside = |idx: usize| vals[idx] >= c;

    // crossing edges, sorted by id = node * 3 + axis
    let outer = if d == 3 { n[2] } else { n[1] };
    let per = if d == 3 { n[0] * n[1] } else { n[0] };
    let edges: Vec<usize> = (0..outer)
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut out = Vec::new();
            for r in 0..per {
                let idx = s * per + r;
                let ijk = grid.node_coords(idx);
                for a in 0..d {
                    if ijk[a] + 1 < n[a] {
                        let mut nb = ijk;
                        nb[a] += 1;
                        if inside(idx) != inside(grid.node_index(nb)) {
                            out.push(idx * 3 + a);
                        }
                    }
                }
            }
            out
        })
        .collect();
    if edges.is_empty() {
        return Err(Error::EmptyLevelSet(c));
    }

    let vertices: Vec<Vec3> = edges
        .par_iter()
        .map(|&e| {
            let (idx, a) = (e / 3, e % 3);
            let ijk = grid.node_coords(idx);
            let mut nb = ijk;
            nb[a] += 1;
            polish(f, grid, ijk, a, vals[idx], vals[grid.node_index(nb)], c)
        })
        .collect();
    let vid = |e: usize| edges.binary_search(&e).expect("crossing edge registered");

    let touches_boundary = (0..vals.len()).any(|idx| {
        let ijk = grid.node_coords(idx);
        let on_boundary = (0..d).any(|a| ijk[a] == 0 || ijk[a] == n[a] - 1);
        on_boundary && inside(idx)
    });
    if touches_boundary {
        log::warn!("level set at {c} reaches the grid boundary; the mesh is not closed");
    }

    let cells: Vec<[usize; 3]> = if d == 2 {
        (0..grid.res[1])
            .into_par_iter()
            .flat_map_iter(|j| {
                let mut out = Vec::new();
                for i in 0..grid.res[0] {
                    let cyc = [[i, j, 0], [i + 1, j, 0], [i + 1, j + 1, 0], [i, j + 1, 0]]
                        .map(|q| grid.node_index(q));
                    let fl = cyc.map(inside);
                    if fl.iter().all(|x| *x == fl[0]) {
                        continue;
                    }
                    let ed = [cyc[0] * 3, cyc[1] * 3 + 1, cyc[3] * 3, cyc[0] * 3 + 1];
                    let center =
                        || f.value(&grid.point(&[i as f64 + 0.5, j as f64 + 0.5, 0.0])[..2]) >= c;
                    for (p, q) in square_segments(fl, center) {
                        out.push([vid(ed[p]), vid(ed[q]), 0]);
                    }
                }
                out
            })
            .collect()
    } else {
        let tables = CubeTables::new();
        (0..grid.res[2])
            .into_par_iter()
            .flat_map_iter(|k| {
                let mut out = Vec::new();
                for j in 0..grid.res[1] {
                    for i in 0..grid.res[0] {
                        cube_triangles(
                            f,
                            grid,
                            c,
                            &inside,
                            &tables,
                            [i, j, k],
                            &vertices,
                            &vid,
                            &mut out,
                        );
                    }
                }
                out
            })
            .collect()
    };
    LevelMesh::build(f, c, grid.clone(), vertices, cells, touches_boundary)
}

#[allow(clippy::too_many_arguments)]
fn cube_triangles<F: Field + ?Sized>(
    f: &F,
    grid: &GridSpec,
    c: f64,
    inside: &impl Fn(usize) -> bool,
    t: &CubeTables,
    ijk: [usize; 3],
    vertices: &[Vec3],
    vid: &impl Fn(usize) -> usize,
    out: &mut Vec<[usize; 3]>,
) {
    let corner_node = |cn: usize| {
        grid.node_index([
            ijk[0] + (cn & 1),
            ijk[1] + ((cn >> 1) & 1),
            ijk[2] + ((cn >> 2) & 1),
        ])
    };
    let nodes: [usize; 8] = std::array::from_fn(corner_node);
    let fl: [bool; 8] = nodes.map(inside);
    if fl.iter().all(|x| *x == fl[0]) {
        return;
    }
    // neighbors of each local edge within the cube
    let mut adj = [[usize::MAX; 2]; 12];
    for (cyc, fe, axis, side) in &t.faces {
        let corners = cyc.map(|k| fl[k]);
        let center = || {
            let mut q = [ijk[0] as f64, ijk[1] as f64, ijk[2] as f64];
            for (b, qb) in q.iter_mut().enumerate() {
                if b == *axis {
                    *qb += *side as f64;
                } else {
                    *qb += 0.5;
                }
            }
            f.value(&grid.point(&q)) >= c
        };
        for (p, q) in square_segments(corners, center) {
            let (ep, eq) = (fe[p], fe[q]);
            let sp = if adj[ep][0] == usize::MAX { 0 } else { 1 };
            adj[ep][sp] = eq;
            let sq = if adj[eq][0] == usize::MAX { 0 } else { 1 };
            adj[eq][sq] = ep;
        }
    }
    let mut seen = [false; 12];
    for start in 0..12 {
        if seen[start] || adj[start][0] == usize::MAX {
            continue;
        }
        let mut cycle = vec![start];
        seen[start] = true;
        let (mut prev, mut cur) = (start, adj[start][0]);
        while cur != start {
            seen[cur] = true;
            cycle.push(cur);
            let next = if adj[cur][0] == prev {
                adj[cur][1]
            } else {
                adj[cur][0]
            };
            prev = cur;
            cur = next;
        }
        let gid = |e: usize| {
            let (cn, a) = t.edges[e];
            nodes[cn] * 3 + a
        };
        let verts: Vec<usize> = cycle.iter().map(|&e| vid(gid(e))).collect();
        // outward: from the inside corner toward the outside corner of each edge
        let mut outward = ZERO3;
        for &e in &cycle {
            let (cn, a) = t.edges[e];
            outward[a] += if fl[cn] { 1.0 } else { -1.0 };
        }
        let m = cycle.len();
        let mut newell = ZERO3;
        for k in 0..m {
            let p = vertices[verts[k]];
            let q = vertices[verts[(k + 1) % m]];
            newell[0] += (p[1] - q[1]) * (p[2] + q[2]);
            newell[1] += (p[2] - q[2]) * (p[0] + q[0]);
            newell[2] += (p[0] - q[0]) * (p[1] + q[1]);
        }
        let flip = newell.iter().zip(&outward).map(|(a, b)| a * b).sum::<f64>() < 0.0;
        let (mut cycle, mut verts) = (cycle, verts);
        if flip {
            cycle.reverse();
            verts.reverse();
        }
        // fan root avoiding chords that lie inside a cube face
        let shares_face = |a: usize, b: usize| {
            t.edge_faces[a]
                .iter()
                .any(|fa| t.edge_faces[b].contains(fa))
        };
        let root = (0..m)
            .min_by_key(|&r| {
                (2..m - 1)
                    .filter(|&s| shares_face(cycle[r], cycle[(r + s) % m]))
                    .count()
            })
            .unwrap_or(0);
        for s in 1..m - 1 {
            out.push([
                verts[root],
                verts[(root + s) % m],
                verts[(root + s + 1) % m],
            ]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saddle_square_respects_center() {
        let fl = [true, false, true, false];
        let a = square_segments(fl, || true);
        assert_eq!(a, vec![(0, 1), (2, 3)]);
        let b = square_segments(fl, || false);
        assert_eq!(b, vec![(3, 0), (1, 2)]);
        assert!(square_segments([true; 4], || true).is_empty());
        assert_eq!(
            square_segments([true, true, false, false], || true),
            vec![(1, 3)]
        );
    }

    #[test]
    fn cube_tables_are_consistent() {
        let t = CubeTables::new();
        assert_eq!(t.edges.len(), 12);
        assert_eq!(t.faces.len(), 6);
        for ef in &t.edge_faces {
            assert!(ef[0] != usize::MAX && ef[1] != usize::MAX && ef[0] != ef[1]);
        }
        for (cyc, fe, _, _) in &t.faces {
            for k in 0..4 {
                let (cn, a) = t.edges[fe[k]];
                let ends = [cn, cn | 1 << a];
                assert!(ends.contains(&cyc[k]) && ends.contains(&cyc[(k + 1) % 4]));
            }
        }
    }
}
