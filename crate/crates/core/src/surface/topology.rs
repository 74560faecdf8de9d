use std::collections::HashMap;

use super::LevelMesh;
use crate::error::{Error, Result};

/// Combinatorial topology of a closed mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    pub euler: i64,
    /// Connected components (closed curves for `d = 2`).
    pub components: usize,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}

/// `V − E + F` for triangle meshes; closed curves have `χ = 0`.
pub fn mesh_euler_characteristic(m: &LevelMesh) -> Result<Topology> {
    let nv = m.vertices.len();
    let mut parent: Vec<usize> = (0..nv).collect();
    let mut used = vec![false; nv];
    if m.dim == 2 {
        let mut degree = vec![0usize; nv];
        for c in &m.cells {
            degree[c[0]] += 1;
            degree[c[1]] += 1;
            used[c[0]] = true;
            used[c[1]] = true;
            union(&mut parent, c[0], c[1]);
        }
        if let Some(v) = (0..nv).find(|&v| used[v] && degree[v] != 2) {
            return Err(Error::NonManifold(format!(
                "vertex {v} lies on {} segments",
                degree[v]
            )));
        }
        let components = (0..nv)
            .filter(|&v| used[v] && find(&mut parent, v) == v)
            .count();
        return Ok(Topology {
            euler: 0,
            components,
        });
    }
    let mut edges: HashMap<(usize, usize), usize> = HashMap::with_capacity(m.cells.len() * 2);
    for c in &m.cells {
        for k in 0..3 {
            let (a, b) = (c[k], c[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            used[a] = true;
            union(&mut parent, a, b);
        }
    }
    if let Some((e, n)) = edges.iter().find(|(_, n)| **n != 2) {
        return Err(Error::NonManifold(format!(
            "edge {:?} is shared by {n} triangles",
            e
        )));
    }
    let v = used.iter().filter(|u| **u).count() as i64;
    let components = (0..nv)
        .filter(|&x| used[x] && find(&mut parent, x) == x)
        .count();
    Ok(Topology {
        euler: v - edges.len() as i64 + m.cells.len() as i64,
        components,
    })
}
