use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::region::tube_sum;
use super::{estimate, EstimateOptions, EstimatorKind};
use crate::density::{gradient_floor, Field};
use crate::error::{Error, Result};
use crate::geometry::{curvature_bundle, parallel_curvature};
use crate::integrand::Integrand;
use crate::phi::{NamedPhi, PhiExpr};
use crate::surface::{extract_level_mesh, mesh_euler_characteristic, GridSpec, MeshDistance};

/// Gauss–Bonnet constant `s₃ = 1/(2π)` for surfaces in three dimensions.
pub const GAUSS_BONNET_3D: f64 = 0.5 / PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum EulerMethod {
    /// Gauss–Bonnet over the level mesh.
    PluginGb,
    /// Gauss–Bonnet averaged over the level window `[c − ε, c + ε]`.
    BandGb { eps: f64 },
    /// Parallel-surface curvature integrated over the distance tube.
    ParallelGb { eps: f64 },
    /// `V − E + F` of the level mesh.
    Combinatorial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerReport {
    #[serde(flatten)]
    pub method: EulerMethod,
    pub raw: f64,
    pub snapped: i64,
    /// `|raw − snapped|`.
    pub quality: f64,
}

pub fn euler_characteristic<F: Field + ?Sized>(
    f: &F,
    c: f64,
    method: EulerMethod,
    grid: &GridSpec,
) -> Result<EulerReport> {
    if f.dim() != 3 {
        return Err(Error::InvalidArgument(format!(
            "Gauss-Bonnet estimators need odd dimension 3, got {}",
            f.dim()
        )));
    }
    let kappa = Integrand::phi(PhiExpr::named(NamedPhi::GaussCurvature));
    let raw = match method {
        EulerMethod::PluginGb => {
            GAUSS_BONNET_3D * estimate(f, &kappa, c, EstimatorKind::Plugin, grid)?.value
        }
        EulerMethod::BandGb { eps } => {
            GAUSS_BONNET_3D * estimate(f, &kappa, c, EstimatorKind::Band { eps }, grid)?.value
        }
        EulerMethod::ParallelGb { eps } => GAUSS_BONNET_3D * parallel_tube(f, c, eps, grid)?,
        EulerMethod::Combinatorial => {
            let mesh = extract_level_mesh(f, c, grid)?;
            mesh_euler_characteristic(&mesh)?.euler as f64
        }
    };
    if !raw.is_finite() {
        return Err(Error::Numerical(format!(
            "Euler characteristic estimate is {raw}"
        )));
    }
    let snapped = raw.round() as i64;
    Ok(EulerReport {
        method,
        raw,
        snapped,
        quality: (raw - snapped as f64).abs(),
    })
}

/// `(1/2ε) ∫_{tube} κ♯ dx` with `κ♯` the Gauss curvature of the parallel
/// surface through `x`, read off the curvatures at the nearest mesh point.
fn parallel_tube<F: Field + ?Sized>(f: &F, c: f64, eps: f64, grid: &GridSpec) -> Result<f64> {
    EstimatorKind::Tube { eps }.validate()?;
    let mesh = extract_level_mesh(f, c, grid)?;
    let md = MeshDistance::new(&mesh);
    let floor = gradient_floor(c);
    let d = f.dim();
    let kappa_sharp = |x: &[f64]| -> Result<Option<f64>> {
        let (dist, foot, _) = md.closest(x);
        let outward = if f.value(x) >= c { -dist } else { dist };
        let cb = curvature_bundle(&f.bundle(&foot[..d]), floor)?;
        Ok(Some(parallel_curvature(cb.principal(), outward)?.0))
    };
    let t = tube_sum(
        grid,
        &mesh,
        &md,
        eps,
        EstimateOptions::default().supersample(d),
        kappa_sharp,
        |x| Some(kappa_sharp(x)),
    )?;
    if t.cells == 0 {
        return Err(Error::EmptyRegion(format!(
            "tube with eps = {eps} covers no grid cell"
        )));
    }
    Ok(t.check(0.0)? / (2.0 * eps))
}
