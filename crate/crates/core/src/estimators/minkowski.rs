use std::f64::consts::PI;

use rayon::prelude::*;
use statrs::function::gamma::gamma;

use super::{estimate, plugin_tally, EstimatorKind};
use crate::density::{gradient_floor, Field};
use crate::error::Result;
use crate::integrand::Integrand;
use crate::phi::{NamedPhi, PhiExpr};
use crate::surface::{extract_level_mesh, GridSpec};

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `ω′_j C(d, j)` with `ω′_j = 2π^{j/2}/Γ(j/2)`, the area of the unit sphere
/// in `ℝ^j`, so that `V_1` is a quarter of the perimeter in the plane and
/// `V_d` equals the Euler characteristic.
pub fn minkowski_normalizer(d: usize, j: usize) -> f64 {
    let jf = j as f64;
    2.0 * PI.powf(jf / 2.0) / gamma(jf / 2.0) * binomial(d, j)
}

/// `V_0..V_d` of the super-level set `{F ≥ c}`.
pub fn minkowski_functionals<F: Field + ?Sized>(
    f: &F,
    c: f64,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    let mesh = extract_level_mesh(f, c, grid)?;
    let d = f.dim();
    let inside: usize = (0..grid.n_cells())
        .into_par_iter()
        .map(|ci| {
            let x = grid.cell_center(grid.cell_coords(ci));
            usize::from(f.value(&x[..d]) >= c)
        })
        .sum();
    let mut out = vec![inside as f64 * grid.cell_volume()];
    let floor = gradient_floor(c);
    for j in 1..=d {
        let g = Integrand::phi(PhiExpr::named(NamedPhi::MinkowskiF { j }));
        let t = plugin_tally(&mesh, &g, floor)?;
        out.push(t.sum / minkowski_normalizer(d, j));
    }
    Ok(out)
}

/// `∫ H² dℋ` over the level set.
pub fn willmore_energy<F: Field + ?Sized>(f: &F, c: f64, grid: &GridSpec) -> Result<f64> {
    let g = Integrand::phi(PhiExpr::named(NamedPhi::Willmore));
    Ok(estimate(f, &g, c, EstimatorKind::Plugin, grid)?.value)
}
