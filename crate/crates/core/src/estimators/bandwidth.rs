use serde::{Deserialize, Serialize};

use super::region::mesh_sum;
use crate::density::{gradient_floor, Field};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::trace;
use crate::surface::{extract_level_mesh, GridSpec};

/// Closed-form minimizer of `m̃₂(h) = h⁴B + A/(nh^d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub h_opt: f64,
    /// `λ(f, c∫K²/‖∇f‖)`.
    pub a: f64,
    /// `λ(f, (½μ₂ tr∇²f)²/‖∇f‖)`.
    pub b: f64,
    pub n: usize,
    pub dim: usize,
}

impl BandwidthReport {
    pub fn m2_tilde(&self, h: f64) -> f64 {
        h.powi(4) * self.b + self.a / (self.n as f64 * h.powi(self.dim as i32))
    }

    /// `h_opt` for another sample size.
    pub fn at_n(&self, n: usize) -> f64 {
        optimum(self.a, self.b, n, self.dim)
    }
}

fn optimum(a: f64, b: f64, n: usize, d: usize) -> f64 {
    (d as f64 * a / (4.0 * b * n as f64)).powf(1.0 / (d as f64 + 4.0))
}

pub fn bandwidth_opt<F: Field + ?Sized>(
    pilot: &F,
    c: f64,
    grid: &GridSpec,
    kernel: &KernelSpec,
    n: usize,
) -> Result<BandwidthReport> {
    if kernel.order != 2 {
        return Err(Error::InvalidArgument(format!(
            "bandwidth selection uses a second-order kernel, got order {}",
            kernel.order
        )));
    }
    if n == 0 {
        return Err(Error::InsufficientData(
            "sample size must be positive".into(),
        ));
    }
    let d = pilot.dim();
    let floor = gradient_floor(c);
    let mesh = extract_level_mesh(pilot, c, grid)?;
    let k2 = kernel.l2_norm_sq();
    let mu2 = kernel.second_moment();
    let a = mesh_sum(&mesh, |_, _, b| {
        b.check_gradient(floor)?;
        Ok(Some(c * k2 / b.grad_norm))
    })?
    .check(0.0)?;
    let b = mesh_sum(&mesh, |_, _, b| {
        b.check_gradient(floor)?;
        let bias = 0.5 * mu2 * trace(&b.hess, d);
        Ok(Some(bias * bias / b.grad_norm))
    })?
    .check(0.0)?;
    if !(b > 0.0) {
        return Err(Error::Numerical(
            "bias functional vanishes on the level set; the Hessian is flat".into(),
        ));
    }
    Ok(BandwidthReport {
        h_opt: optimum(a, b, n, d),
        a,
        b,
        n,
        dim: d,
    })
}
