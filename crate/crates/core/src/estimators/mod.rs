//! Surface-integral estimators and the inference built on them.
//!
//! The three estimators share a grid: the plug-in integrates over the level
//! mesh, the band averages over a window of levels with the coarea weight
//! `‖∇F‖`, and the tube averages over a distance neighbourhood of the mesh.

mod bandwidth;
mod euler;
mod minkowski;
pub mod region;
mod ustat;
mod variance;

pub use bandwidth::{bandwidth_opt, BandwidthReport};
pub use euler::{euler_characteristic, EulerMethod, EulerReport, GAUSS_BONNET_3D};
pub use minkowski::{minkowski_functionals, minkowski_normalizer, willmore_energy};
pub use ustat::{ustat_integrand_estimate, UstatSpec};
pub use variance::{
    confidence_interval, normal_quantile, variance_hat, variance_hat_unknown, SliceEnergies,
};

use serde::{Deserialize, Serialize};

use crate::density::{gradient_floor, Field};
use crate::error::{Error, Result};
use crate::integrand::Integrand;
use crate::surface::{extract_from_nodes, sample_nodes, GridSpec, LevelMesh, MeshDistance};
use region::{band_sum, mesh_sum, tube_sum, Tally};

/// Sub-lattice size per axis for cells cut by a band or tube boundary.
pub const SUPERSAMPLE_2D: usize = 16;
pub const SUPERSAMPLE_3D: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum EstimatorKind {
    Plugin,
    /// Level window `[c − ε, c + ε]`.
    Band {
        eps: f64,
    },
    /// Distance tube of half-width `ε`.
    Tube {
        eps: f64,
    },
}

impl EstimatorKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorKind::Plugin => Ok(()),
            EstimatorKind::Band { eps } | EstimatorKind::Tube { eps } => {
                if eps > 0.0 && eps.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "{} width must be positive, got {eps}",
                        self.name()
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Plugin => "plugin",
            EstimatorKind::Band { .. } => "band",
            EstimatorKind::Tube { .. } => "tube",
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match *self {
            EstimatorKind::Plugin => None,
            EstimatorKind::Band { eps } | EstimatorKind::Tube { eps } => Some(eps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mesh_measure: f64,
    pub min_grad_on_mesh: f64,
    pub grid_res: Vec<usize>,
    /// Grid cells contributing to a band or tube sum.
    pub band_cell_count: usize,
    /// Contributing cells that were supersampled.
    pub boundary_cell_count: usize,
    pub touches_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    #[serde(flatten)]
    pub kind: EstimatorKind,
    pub value: f64,
    pub level: f64,
    pub integrand: String,
    pub bandwidth: Option<f64>,
    pub n: Option<usize>,
    pub std_err: Option<f64>,
    pub alpha: Option<f64>,
    pub ci: Option<(f64, f64)>,
    #[serde(flatten)]
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EstimateOptions {
    /// Overrides the sub-lattice size of boundary cells.
    pub supersample: Option<usize>,
}

impl EstimateOptions {
    pub(crate) fn supersample(&self, d: usize) -> usize {
        self.supersample
            .unwrap_or(if d == 2 {
                SUPERSAMPLE_2D
            } else {
                SUPERSAMPLE_3D
            })
            .max(1)
    }
}

pub fn estimate<F: Field + ?Sized>(
    f: &F,
    g: &Integrand,
    c: f64,
    kind: EstimatorKind,
    grid: &GridSpec,
) -> Result<EstimateReport> {
    estimate_with(f, g, c, kind, grid, &EstimateOptions::default())
}

pub fn estimate_with<F: Field + ?Sized>(
    f: &F,
    g: &Integrand,
    c: f64,
    kind: EstimatorKind,
    grid: &GridSpec,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    kind.validate()?;
    check_inputs(f, g, grid)?;
    let vals = sample_nodes(f, grid);
    let mesh = extract_from_nodes(f, c, grid, &vals)?;
    let floor = gradient_floor(c);
    let ss = opts.supersample(grid.dim);
    let (value, tally) = match kind {
        EstimatorKind::Plugin => {
            let t = plugin_tally(&mesh, g, floor)?;
            (t.sum, t)
        }
        EstimatorKind::Band { eps } => {
            let t = band_sum(
                f,
                grid,
                &vals,
                c,
                eps,
                ss,
                |x, b| g.eval(x, Some(b), floor).map(Some),
                |x| known_at(g, x),
            )?;
            nonempty(&t, kind)?;
            (t.check(0.0)? / (2.0 * eps), t)
        }
        EstimatorKind::Tube { eps } => {
            let md = MeshDistance::new(&mesh);
            let t = tube_sum(
                grid,
                &mesh,
                &md,
                eps,
                ss,
                |x| eval_at(f, g, x, floor).map(Some),
                |x| known_at(g, x).map(|r| r.map(Some)),
            )?;
            nonempty(&t, kind)?;
            (t.check(0.0)? / (2.0 * eps), t)
        }
    };
    Ok(report(f, g, c, kind, grid, &mesh, value, &tally))
}

pub(crate) fn check_inputs<F: Field + ?Sized>(f: &F, g: &Integrand, grid: &GridSpec) -> Result<()> {
    if grid.dim != f.dim() {
        return Err(Error::InvalidArgument(format!(
            "grid dimension {} does not match field dimension {}",
            grid.dim,
            f.dim()
        )));
    }
    g.validate(f.dim())
}

fn known_at(g: &Integrand, x: &[f64]) -> Option<Result<f64>> {
    match g {
        Integrand::Known { f, .. } => Some(Ok(f(x).0)),
        Integrand::Phi(_) => None,
    }
}

fn eval_at<F: Field + ?Sized>(f: &F, g: &Integrand, x: &[f64], floor: f64) -> Result<f64> {
    match g {
        Integrand::Known { f: k, .. } => Ok(k(x).0),
        Integrand::Phi(e) => e.eval(&f.bundle(x), floor),
    }
}

fn nonempty(t: &Tally, kind: EstimatorKind) -> Result<()> {
    if t.cells == 0 {
        return Err(Error::EmptyRegion(format!(
            "{} with eps = {} covers no grid cell; refine the grid or widen eps",
            kind.name(),
            kind.eps().unwrap_or(0.0)
        )));
    }
    Ok(())
}

/// Plug-in sum over a mesh whose vertex bundles come from the estimating field.
pub(crate) fn plugin_tally(mesh: &LevelMesh, g: &Integrand, floor: f64) -> Result<Tally> {
    let t = mesh_sum(mesh, |_, x, b| g.eval(x, Some(b), floor).map(Some))?;
    t.check(0.0)?;
    Ok(t)
}

/// `∫ g dℋ` over a given mesh with `g` read through the field `f`, which need
/// not be the field that produced the mesh.
pub fn integrate_on_mesh<F: Field + ?Sized>(
    f: &F,
    mesh: &LevelMesh,
    g: &Integrand,
    c: f64,
) -> Result<f64> {
    g.validate(f.dim())?;
    let floor = gradient_floor(c);
    let t = mesh_sum(mesh, |_, x, _| {
        let b = f.bundle(x);
        g.eval(x, Some(&b), floor).map(Some)
    })?;
    t.check(0.0)
}

#[allow(clippy::too_many_arguments)]
fn report<F: Field + ?Sized>(
    f: &F,
    g: &Integrand,
    c: f64,
    kind: EstimatorKind,
    grid: &GridSpec,
    mesh: &LevelMesh,
    value: f64,
    t: &Tally,
) -> EstimateReport {
    let grid_cells = !matches!(kind, EstimatorKind::Plugin);
    EstimateReport {
        kind,
        value,
        level: c,
        integrand: g.label(),
        bandwidth: f.bandwidth(),
        n: f.sample_size(),
        std_err: None,
        alpha: None,
        ci: None,
        diagnostics: Diagnostics {
            mesh_measure: mesh.total_measure(),
            min_grad_on_mesh: mesh.min_grad_norm(),
            grid_res: grid.res.clone(),
            band_cell_count: if grid_cells { t.cells } else { 0 },
            boundary_cell_count: if grid_cells { t.boundary_cells } else { 0 },
            touches_boundary: mesh.touches_boundary,
        },
    }
}

/// Band half-width `max(10·c·h², 3·step·mean‖∇F‖)` over the level mesh.
pub fn default_band_eps<F: Field + ?Sized>(f: &F, mesh: &LevelMesh) -> f64 {
    let h = f.bandwidth().unwrap_or(0.0);
    let n = mesh.vertex_attrs.len().max(1) as f64;
    let mean_grad = mesh.vertex_attrs.iter().map(|b| b.grad_norm).sum::<f64>() / n;
    (10.0 * mesh.level * h * h).max(3.0 * mesh.grid.max_step() * mean_grad)
}

/// Tube half-width of three grid steps.
pub fn default_tube_eps(grid: &GridSpec) -> f64 {
    3.0 * grid.max_step()
}
