use serde::{Deserialize, Serialize};

use crate::density::Field;
use crate::error::{invalid, Result};
use crate::linalg::{Vec3, ZERO3};

/// Axis-aligned box split into `res` cells per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub res: Vec<usize>,
}

pub const DEFAULT_RES_2D: usize = 512;
pub const DEFAULT_RES_3D: usize = 160;

impl GridSpec {
    pub fn new(lower: &[f64], upper: &[f64], res: &[usize]) -> Result<Self> {
        let dim = lower.len();
        if !(2..=3).contains(&dim) || upper.len() != dim || res.len() != dim {
            return invalid("grid bounds and resolution must share dimension 2 or 3");
        }
        for a in 0..dim {
            if !(upper[a] > lower[a]) || !lower[a].is_finite() || !upper[a].is_finite() {
                return invalid(format!("grid axis {a}: upper must exceed lower"));
            }
            if res[a] < 8 {
                return invalid(format!(
                    "grid resolution must be >= 8 per axis, got {}",
                    res[a]
                ));
            }
        }
        Ok(Self {
            dim,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            res: res.to_vec(),
        })
    }

    pub fn cube(bbox: &[(f64, f64)], res: usize) -> Result<Self> {
        let lo: Vec<f64> = bbox.iter().map(|b| b.0).collect();
        let hi: Vec<f64> = bbox.iter().map(|b| b.1).collect();
        Self::new(&lo, &hi, &vec![res; bbox.len()])
    }

    /// The field's default box at the given (or default) resolution.
    pub fn auto<F: Field + ?Sized>(f: &F, res: Option<usize>) -> Result<Self> {
        let d = f.dim();
        let res = res.unwrap_or(if d == 2 {
            DEFAULT_RES_2D
        } else {
            DEFAULT_RES_3D
        });
        Self::cube(&f.default_bbox(), res)
    }

    pub fn with_res(&self, res: usize) -> Result<Self> {
        Self::new(&self.lower, &self.upper, &vec![res; self.dim])
    }

    pub fn step(&self, a: usize) -> f64 {
        (self.upper[a] - self.lower[a]) / self.res[a] as f64
    }

    pub fn max_step(&self) -> f64 {
        (0..self.dim).map(|a| self.step(a)).fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.step(a)).product()
    }

    /// Half the cell diagonal.
    pub fn half_diag(&self) -> f64 {
        0.5 * (0..self.dim)
            .map(|a| self.step(a).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn n_cells(&self) -> usize {
        self.res.iter().product()
    }

    pub(crate) fn nodes_per_axis(&self) -> [usize; 3] {
        let mut n = [1; 3];
        for a in 0..self.dim {
            n[a] = self.res[a] + 1;
        }
        n
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes_per_axis().iter().product()
    }

    /// Point at fractional grid coordinates.
    #[inline]
    pub fn point(&self, idx: &[f64; 3]) -> Vec3 {
        let mut p = ZERO3;
        for a in 0..self.dim {
            p[a] = self.lower[a] + idx[a] * self.step(a);
        }
        p
    }

    #[inline]
    pub(crate) fn node_index(&self, ijk: [usize; 3]) -> usize {
        let n = self.nodes_per_axis();
        ijk[0] + n[0] * (ijk[1] + n[1] * ijk[2])
    }

    #[inline]
    pub(crate) fn node_coords(&self, idx: usize) -> [usize; 3] {
        let n = self.nodes_per_axis();
        [idx % n[0], (idx / n[0]) % n[1], idx / (n[0] * n[1])]
    }

    #[inline]
    pub(crate) fn cell_coords(&self, idx: usize) -> [usize; 3] {
        let r0 = self.res[0];
        let r1 = self.res[1];
        [idx % r0, (idx / r0) % r1, idx / (r0 * r1)]
    }

    #[inline]
    pub fn cell_center(&self, ijk: [usize; 3]) -> Vec3 {
        let mut f = [0.0; 3];
        for a in 0..self.dim {
            f[a] = ijk[a] as f64 + 0.5;
        }
        self.point(&f)
    }
}
