//! Asymptotic-variance estimates and normal confidence intervals.

use log::warn;
use statrs::distribution::{ContinuousCDF, Normal};

use super::region::{mesh_sum, tube_sum, Tally};
use super::{check_inputs, EstimateReport};
use crate::density::{gradient_floor, DerivBundle, Field};
use crate::error::{Error, Result};
use crate::geometry::{curvature_bundle, unit_normal, weight_from};
use crate::integrand::Integrand;
use crate::kernels::KernelSpec;
use crate::linalg::{quad_form, trace, unvech, Vec3};
use crate::phi::PhiExpr;
use crate::quadrature::GaussLegendre;
use crate::surface::{extract_level_mesh, GridSpec, MeshDistance};

/// Largest fraction of quadrature points allowed to be degenerate.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.01;

const SLICE_NODES: usize = 64;

/// `σ̂² = c·R(K)·λ̃_τ(F, ŵ_g²)`.
///
/// `τ = 0` integrates over the level mesh; `τ > 0` over the distance tube of
/// half-width `τ`. Plug-in integrands are differentiated by central
/// differences with a quarter grid step.
pub fn variance_hat<F: Field + ?Sized>(
    f: &F,
    g: &Integrand,
    c: f64,
    tau: f64,
    grid: &GridSpec,
    kernel: &KernelSpec,
) -> Result<f64> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "tau must be >= 0, got {tau}"
        )));
    }
    check_inputs(f, g, grid)?;
    let floor = gradient_floor(c);
    let step = 0.25 * grid.max_step();
    let w2 = |x: &[f64], b: &DerivBundle| -> Result<Option<f64>> {
        let Some(cb) = degrade(curvature_bundle(b, floor))? else {
            return Ok(None);
        };
        let Some((gv, gg)) = degrade(g.value_grad(f, x, b, step, floor))? else {
            return Ok(None);
        };
        let w = weight_from(&cb, b.grad_norm, gv, &gg);
        Ok(Some(w * w))
    };
    let mesh = extract_level_mesh(f, c, grid)?;
    let tally: Tally = if tau == 0.0 {
        mesh_sum(&mesh, |_, x, b| w2(x, b))?
    } else {
        let md = MeshDistance::new(&mesh);
        let mut t = tube_sum(
            grid,
            &mesh,
            &md,
            tau,
            super::EstimateOptions::default().supersample(grid.dim),
            |x| w2(x, &f.bundle(x)),
            |_| None,
        )?;
        if t.cells == 0 {
            return Err(Error::EmptyRegion(format!(
                "variance tube with tau = {tau} covers no grid cell"
            )));
        }
        t.sum /= 2.0 * tau;
        t
    };
    let lambda = tally.check(MAX_DEGENERATE_FRACTION)?;
    Ok(c * kernel.roughness() * lambda)
}

fn degrade<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateGradient { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `z_{1−p}`, the upper `p` quantile of the standard normal.
pub fn normal_quantile(p: f64) -> f64 {
    let n = Normal::standard();
    n.inverse_cdf(1.0 - p)
}

/// Attaches `value ∓ z_{α/2}·σ̂/√(nh)` to the report.
pub fn confidence_interval(
    rep: &EstimateReport,
    sigma2: f64,
    alpha: f64,
    h: f64,
) -> Result<EstimateReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "variance estimate must be positive, got {sigma2}"
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    let n = rep.n.ok_or_else(|| {
        Error::InvalidArgument("confidence intervals need a sample-based estimate".into())
    })?;
    let se = sigma2.sqrt() / (n as f64 * h).sqrt();
    let half = normal_quantile(alpha / 2.0) * se;
    let mut out = rep.clone();
    out.std_err = Some(se);
    out.alpha = Some(alpha);
    out.ci = Some((rep.value - half, rep.value + half));
    Ok(out)
}

/// Tabulated slice profiles of a kernel on a Gauss–Legendre rule in the
/// normal offset `t`, used to form the quadratic slice energies `m̂_{K,l}`.
#[derive(Debug, Clone)]
pub struct SliceEnergies {
    c: f64,
    roughness: f64,
    /// `∫ t² S₁(t)² dt`.
    grad_energy: f64,
    /// Gram matrix of `(S₁, t² S₂, S₃)`.
    gram: [[f64; 3]; 3],
    dim: usize,
}

impl SliceEnergies {
    pub fn new(kernel: &KernelSpec) -> Self {
        let gl = GaussLegendre::new(SLICE_NODES);
        let mut gram = [[0.0; 3]; 3];
        let mut grad_energy = 0.0;
        for (t, w) in gl.mapped(-1.0, 1.0) {
            let s1 = kernel.slice_radial(t, |_, dq, _, _| dq);
            let s2 = kernel.slice_radial(t, |_, _, ddq, _| ddq);
            let s3 = kernel.slice_radial(t, |_, _, ddq, r2| r2 * ddq);
            let v = [s1, t * t * s2, s3];
            for i in 0..3 {
                for j in 0..3 {
                    gram[i][j] += w * v[i] * v[j];
                }
            }
            grad_energy += w * t * t * s1 * s1;
        }
        Self {
            c: kernel.norm_const,
            roughness: kernel.roughness(),
            grad_energy,
            gram,
            dim: kernel.dim,
        }
    }

    /// `m̂_{K,0} = φ² R(K)`.
    pub fn value_energy(&self, phi: f64) -> f64 {
        phi * phi * self.roughness
    }

    /// `m̂_{K,1} = ∫ (∫_{slice} aᵀ∇K)² dt` for `a = ∇₁φ` and unit normal `n`.
    pub fn gradient_energy(&self, a: &[f64], n: &Vec3) -> f64 {
        let an: f64 = (0..self.dim).map(|i| a[i] * n[i]).sum();
        (2.0 * self.c * an).powi(2) * self.grad_energy
    }

    /// `m̂_{K,2} = ∫ (∫_{slice} bᵀ vech ∇²K)² dt` for `b = ∇₂φ`.
    pub fn hessian_energy(&self, b: &[f64], n: &Vec3) -> f64 {
        let d = self.dim;
        let mut a = unvech(b, d);
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    a[i][j] *= 0.5;
                }
            }
        }
        let tr = trace(&a, d);
        let nan = quad_form(&a, n, n, d);
        let coef = [
            2.0 * self.c * tr,
            4.0 * self.c * nan,
            4.0 * self.c * (tr - nan) / (d - 1) as f64,
        ];
        let mut m = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                m += coef[i] * self.gram[i][j] * coef[j];
            }
        }
        m
    }
}

/// `σ̂_l² = c·λ(F, m̂_{K,l})` for a plug-in integrand `φ(d_F)`.
///
/// `l = 1` and `l = 2` weight the partials of `φ` in the gradient and Hessian
/// slots; `l = 0` weights `φ` itself, which reproduces the known-integrand
/// variance when `φ = w_g`.
pub fn variance_hat_unknown<F: Field + ?Sized>(
    f: &F,
    expr: &PhiExpr,
    c: f64,
    grid: &GridSpec,
    kernel: &KernelSpec,
    l: usize,
) -> Result<f64> {
    if l > 2 {
        return Err(Error::InvalidArgument(format!(
            "derivative order l must be 0, 1 or 2, got {l}"
        )));
    }
    if kernel.dim != f.dim() {
        return Err(Error::InvalidArgument(
            "kernel and field dimensions differ".into(),
        ));
    }
    expr.validate(f.dim())?;
    if !expr.uses_derivatives() {
        return Err(Error::MalformedExpr(
            "integrand must depend on density derivatives".into(),
        ));
    }
    if l == 2 && !expr.uses_hessian() {
        warn!("integrand does not depend on second derivatives; sigma_2^2 is zero");
        return Ok(0.0);
    }
    let floor = gradient_floor(c);
    let se = SliceEnergies::new(kernel);
    let mesh = extract_level_mesh(f, c, grid)?;
    let t = mesh_sum(&mesh, |_, _, b| {
        let Some((v, g1, g2)) = degrade(expr.eval_partials(b, floor))? else {
            return Ok(None);
        };
        let n = unit_normal(b);
        Ok(Some(match l {
            0 => se.value_energy(v),
            1 => se.gradient_energy(&g1, &n),
            _ => se.hessian_energy(&g2, &n),
        }))
    })?;
    Ok(c * t.check(MAX_DEGENERATE_FRACTION)?)
}
