use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::region::mesh_sum;
use crate::density::{gradient_floor, DerivBundle, Field, Kde};
use crate::error::{Error, Result};
use crate::linalg::{Vec3, ZERO3, ZERO33};
use crate::phi::PhiExpr;
use crate::seeds::mix_seed;
use crate::surface::{extract_level_mesh, GridSpec};

/// Integrand `φ̃(∇f) · ∂^{β₁}f · ∂^{β₂}f` estimated by a leave-two-out
/// permutation average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UstatSpec {
    /// Factor depending on the gradient only.
    pub phi: PhiExpr,
    /// Second-derivative indices `(i, j)` of the two kernel factors.
    pub beta: [(usize, usize); 2],
    /// Ordered pairs sampled per point when more are available.
    #[serde(default = "default_pairs")]
    pub max_pairs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_pairs() -> usize {
    200
}

impl UstatSpec {
    pub fn new(phi: PhiExpr, beta: [(usize, usize); 2]) -> Self {
        Self {
            phi,
            beta,
            max_pairs: default_pairs(),
            seed: 0,
        }
    }
}

struct Local {
    grad: Vec3,
    a: f64,
    b: f64,
}

/// `λ(f, ĝ)` over the level set `{reference = c}`, where `ĝ` averages
/// `φ̃(∇f̂_{−ij}) K_h^{(β₁)}(x − X_i) K_h^{(β₂)}(x − X_j)` over ordered pairs
/// `i ≠ j`.
///
/// Only pairs with both points within `h` of `x` contribute. The pair sum
/// with `φ̃` frozen at the full-sample gradient is computed exactly; the
/// leave-two-out correction is summed over all local pairs, or over a seeded
/// uniform subsample of `max_pairs` of them rescaled by the local pair count.
pub fn ustat_integrand_estimate<R: Field + ?Sized>(
    kde: &Kde,
    spec: &UstatSpec,
    reference: &R,
    c: f64,
    grid: &GridSpec,
) -> Result<f64> {
    let d = kde.dim();
    let n = kde.n_effective();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "permutation averages need at least 3 points, got {n}"
        )));
    }
    if reference.dim() != d {
        return Err(Error::InvalidArgument(
            "reference and kernel fields differ in dimension".into(),
        ));
    }
    spec.phi.validate(d)?;
    if spec.phi.uses_hessian() {
        return Err(Error::MalformedExpr(
            "the leading factor may depend on the gradient only".into(),
        ));
    }
    for &(i, j) in &spec.beta {
        if i >= d || j >= d {
            return Err(Error::InvalidArgument(format!(
                "derivative index ({i}, {j}) out of range"
            )));
        }
    }
    if spec.max_pairs == 0 {
        return Err(Error::InvalidArgument("max_pairs must be positive".into()));
    }
    let mesh = extract_level_mesh(reference, c, grid)?;
    let h = kde.bandwidth();
    let kern = kde.kernel();
    let s1 = h.powi(-(d as i32) - 1);
    let s2 = h.powi(-(d as i32) - 2);
    let nf = n as f64;
    let floor = gradient_floor(c);
    let [(a1, b1), (a2, b2)] = spec.beta;
    let constant_phi = !spec.phi.uses_derivatives();
    let t = mesh_sum(&mesh, |v, x, _| {
        let mut local = Vec::new();
        kde.for_each_in_support(x, |_, u| {
            let (_, g, hs) = kern.eval_all(u);
            local.push(Local {
                grad: g,
                a: s2 * hs[a1][b1],
                b: s2 * hs[a2][b2],
            });
        });
        let m = local.len();
        if m < 2 {
            return Ok(Some(0.0));
        }
        let full = kde.value_grad(x).1;
        let phi_at = |g: Vec3| spec.phi.eval(&DerivBundle::new(d, 0.0, g, ZERO33), floor);
        let phi_full = phi_at(full)?;
        let (sa, sb, sab) = local.iter().fold((0.0, 0.0, 0.0), |acc, l| {
            (acc.0 + l.a, acc.1 + l.b, acc.2 + l.a * l.b)
        });
        let base = phi_full * (sa * sb - sab);
        let correction = |i: usize, j: usize| -> Result<f64> {
            let (li, lj) = (&local[i], &local[j]);
            let mut g = ZERO3;
            for k in 0..d {
                g[k] = (nf * full[k] - s1 * (li.grad[k] + lj.grad[k])) / (nf - 2.0);
            }
            Ok((phi_at(g)? - phi_full) * li.a * lj.b)
        };
        let mut corr = 0.0;
        if !constant_phi {
            let pairs = m * (m - 1);
            if pairs <= spec.max_pairs {
                for i in 0..m {
                    for j in 0..m {
                        if i != j {
                            corr += correction(i, j)?;
                        }
                    }
                }
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, v as u64));
                for _ in 0..spec.max_pairs {
                    let i = rng.random_range(0..m);
                    let mut j = rng.random_range(0..m - 1);
                    if j >= i {
                        j += 1;
                    }
                    corr += correction(i, j)?;
                }
                corr *= pairs as f64 / spec.max_pairs as f64;
            }
        }
        Ok(Some((base + corr) / (nf * (nf - 1.0))))
    })?;
    t.check(0.0)
}
