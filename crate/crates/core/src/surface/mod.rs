//! Level-set meshes of density fields, surface quadrature, normal
//! projection and combinatorial topology.

mod distance;
mod extract;
mod grid;
mod project;
mod topology;

pub use distance::MeshDistance;
pub use extract::{extract_from_nodes, extract_level_mesh, sample_nodes};
pub use grid::{GridSpec, DEFAULT_RES_2D, DEFAULT_RES_3D};
pub use project::{project_along, project_to_level, project_with, ProjectOptions};
pub use topology::{mesh_euler_characteristic, Topology};

use rayon::prelude::*;

use crate::density::{DerivBundle, Field};
use crate::error::{Error, Result};
use crate::geometry::unit_normal;
use crate::linalg::{norm, sub, Vec3};

/// Polygonal approximation of `{F = c}`: segments for `d = 2`, triangles for `d = 3`.
#[derive(Debug, Clone)]
pub struct LevelMesh {
    pub dim: usize,
    pub level: f64,
    pub vertices: Vec<Vec3>,
    /// Vertex indices per cell; only the first `dim` entries are used.
    pub cells: Vec<[usize; 3]>,
    pub vertex_attrs: Vec<DerivBundle>,
    pub cell_measures: Vec<f64>,
    pub grid: GridSpec,
    /// Whether the super-level set reaches the grid boundary.
    pub touches_boundary: bool,
}

impl LevelMesh {
    pub(crate) fn build<F: Field + ?Sized>(
        f: &F,
        level: f64,
        grid: GridSpec,
        vertices: Vec<Vec3>,
        cells: Vec<[usize; 3]>,
        touches_boundary: bool,
    ) -> Result<Self> {
        let d = grid.dim;
        if cells.is_empty() {
            return Err(Error::EmptyLevelSet(level));
        }
        let vertex_attrs: Vec<DerivBundle> =
            vertices.par_iter().map(|v| f.bundle(&v[..d])).collect();
        let cell_measures = cells
            .iter()
            .map(|c| cell_measure(&vertices, c, d))
            .collect();
        Ok(Self {
            dim: d,
            level,
            vertices,
            cells,
            vertex_attrs,
            cell_measures,
            grid,
            touches_boundary,
        })
    }

    pub fn cell(&self, i: usize) -> &[usize] {
        &self.cells[i][..self.dim]
    }

    pub fn total_measure(&self) -> f64 {
        self.cell_measures.iter().sum()
    }

    /// Outward unit normal `−∇F/‖∇F‖` at a vertex.
    pub fn normal(&self, v: usize) -> Vec3 {
        unit_normal(&self.vertex_attrs[v])
    }

    pub fn grad_norm(&self, v: usize) -> f64 {
        self.vertex_attrs[v].grad_norm
    }

    pub fn min_grad_norm(&self) -> f64 {
        self.vertex_attrs
            .iter()
            .map(|b| b.grad_norm)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `|F(v) − c|` over vertices.
    pub fn max_level_residual(&self) -> f64 {
        self.vertex_attrs
            .iter()
            .map(|b| (b.value - self.level).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn cell_measure(vs: &[Vec3], c: &[usize; 3], d: usize) -> f64 {
    if d == 2 {
        norm(&sub(&vs[c[1]], &vs[c[0]]), 2)
    } else {
        let a = sub(&vs[c[1]], &vs[c[0]]);
        let b = sub(&vs[c[2]], &vs[c[0]]);
        let cr = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        0.5 * norm(&cr, 3)
    }
}

/// `Σ_cells measure × mean of φ over the cell's vertices`, with `φ` called
/// once per vertex as `φ(index, position, bundle)`.
pub fn mesh_integral<P>(m: &LevelMesh, phi: P) -> Result<f64>
where
    P: Fn(usize, &[f64], &DerivBundle) -> Result<f64> + Sync,
{
    let vals: Vec<Result<f64>> = (0..m.vertices.len())
        .into_par_iter()
        .map(|v| phi(v, &m.vertices[v][..m.dim], &m.vertex_attrs[v]))
        .collect();
    let k = m.dim as f64;
    let mut acc = 0.0;
    for (ci, cell) in m.cells.iter().enumerate() {
        let mut s = 0.0;
        for &v in &cell[..m.dim] {
            match &vals[v] {
                Ok(x) => s += x,
                Err(e) => {
                    return Err(Error::Integrand {
                        cell: ci,
                        source: Box::new(clone_error(e)),
                    })
                }
            }
        }
        acc += m.cell_measures[ci] * s / k;
    }
    Ok(acc)
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::DegenerateGradient { norm, floor } => Error::DegenerateGradient {
            norm: *norm,
            floor: *floor,
        },
        Error::FocalPoint(v) => Error::FocalPoint(*v),
        other => Error::Numerical(other.to_string()),
    }
}
