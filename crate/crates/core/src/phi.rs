//! Integrands built from density derivatives.
//!
//! A [`PhiExpr`] is a composition tree over the derivative vector
//! `d_f = (∇f, vech ∇²f)`. Tree nodes carry exact partial derivatives
//! (forward mode); named curvature nodes fall back to central differences.

use serde::{Deserialize, Serialize};

use crate::density::DerivBundle;
use crate::error::{Error, Result};
use crate::geometry::curvature_bundle;
use crate::linalg::{unvech, vech_index};

/// Largest derivative vector length, `d + d(d+1)/2` for `d = 3`.
pub const MAX_AD: usize = 9;

/// Length of `d_f` in dimension `d`.
pub fn a_dim(d: usize) -> usize {
    d + d * (d + 1) / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PhiExpr {
    Const {
        value: f64,
    },
    /// `∂f/∂x_i`.
    Grad {
        i: usize,
    },
    /// `∂²f/∂x_i∂x_j`.
    Hess {
        i: usize,
        j: usize,
    },
    /// `‖∇f‖^{-power}`.
    InvGradNorm {
        power: i32,
    },
    Sum {
        terms: Vec<PhiExpr>,
    },
    Prod {
        factors: Vec<PhiExpr>,
    },
    Named {
        name: NamedPhi,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NamedPhi {
    Unity,
    MeanCurvature,
    GaussCurvature,
    /// `H²`.
    Willmore,
    /// `F_j`, 1-based.
    MinkowskiF {
        j: usize,
    },
    /// `w_g` for the constant integrand `g`.
    Wg {
        g: f64,
    },
    /// `w_g²` for the constant integrand `g`.
    WgSquared {
        g: f64,
    },
}

/// Value and partials with respect to `d_f`.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: [f64; MAX_AD],
}

impl Dual {
    fn constant(v: f64) -> Self {
        Self {
            v,
            d: [0.0; MAX_AD],
        }
    }
}

impl PhiExpr {
    pub fn named(name: NamedPhi) -> Self {
        PhiExpr::Named { name }
    }

    /// Parses a shortcut name (`unity`, `mean_curvature`, `gauss_curvature`,
    /// `willmore`, `minkowski_f<j>`, `wg`, `wg_squared`) or a JSON tree.
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.starts_with('{') {
            let e: PhiExpr =
                serde_json::from_str(t).map_err(|e| Error::MalformedExpr(e.to_string()))?;
            return Ok(e);
        }
        let lower = t.to_ascii_lowercase();
        let name = match lower.as_str() {
            "unity" | "one" | "1" => NamedPhi::Unity,
            "mean_curvature" | "h" => NamedPhi::MeanCurvature,
            "gauss_curvature" | "gaussian_curvature" => NamedPhi::GaussCurvature,
            "willmore" => NamedPhi::Willmore,
            "wg" => NamedPhi::Wg { g: 1.0 },
            "wg_squared" => NamedPhi::WgSquared { g: 1.0 },
            other => {
                if let Some(j) = other.strip_prefix("minkowski_f") {
                    let j: usize = j
                        .parse()
                        .map_err(|_| Error::MalformedExpr(format!("bad Minkowski index in {s}")))?;
                    NamedPhi::MinkowskiF { j }
                } else {
                    return Err(Error::MalformedExpr(format!(
                        "unknown integrand name {s:?}"
                    )));
                }
            }
        };
        Ok(PhiExpr::Named { name })
    }

    /// Checks indices against the dimension.
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            PhiExpr::Const { value } if !value.is_finite() => {
                Err(Error::MalformedExpr("non-finite constant".into()))
            }
            PhiExpr::Grad { i } if *i >= d => Err(Error::MalformedExpr(format!(
                "gradient index {i} >= dimension {d}"
            ))),
            PhiExpr::Hess { i, j } if *i >= d || *j >= d => Err(Error::MalformedExpr(format!(
                "Hessian index ({i},{j}) out of range for dimension {d}"
            ))),
            PhiExpr::Sum { terms: xs } | PhiExpr::Prod { factors: xs } => {
                if xs.is_empty() {
                    return Err(Error::MalformedExpr("empty sum or product".into()));
                }
                xs.iter().try_for_each(|x| x.validate(d))
            }
            PhiExpr::Named {
                name: NamedPhi::MinkowskiF { j },
            } if *j < 1 || *j > d => Err(Error::MalformedExpr(format!(
                "Minkowski index {j} outside 1..={d}"
            ))),
            _ => Ok(()),
        }
    }

    /// True when the expression depends on some derivative of `f`.
    pub fn uses_derivatives(&self) -> bool {
        match self {
            PhiExpr::Const { .. } => false,
            PhiExpr::Named { name } => {
                !matches!(name, NamedPhi::Unity | NamedPhi::MinkowskiF { j: 1 })
            }
            PhiExpr::Sum { terms: xs } | PhiExpr::Prod { factors: xs } => {
                xs.iter().any(|x| x.uses_derivatives())
            }
            _ => true,
        }
    }

    /// True when the expression depends on second derivatives.
    pub fn uses_hessian(&self) -> bool {
        match self {
            PhiExpr::Hess { .. } => true,
            PhiExpr::Named { name } => {
                !matches!(name, NamedPhi::Unity | NamedPhi::MinkowskiF { j: 1 })
            }
            PhiExpr::Sum { terms: xs } | PhiExpr::Prod { factors: xs } => {
                xs.iter().any(|x| x.uses_hessian())
            }
            _ => false,
        }
    }

    /// Constant value if the expression does not depend on the field.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            PhiExpr::Const { value } => Some(*value),
            PhiExpr::Named {
                name: NamedPhi::Unity | NamedPhi::MinkowskiF { j: 1 },
            } => Some(1.0),
            PhiExpr::Sum { terms } => terms.iter().map(|t| t.as_constant()).sum(),
            PhiExpr::Prod { factors } => factors.iter().map(|t| t.as_constant()).product(),
            _ => None,
        }
    }

    pub fn eval(&self, b: &DerivBundle, floor: f64) -> Result<f64> {
        match self {
            PhiExpr::Const { value } => Ok(*value),
            PhiExpr::Grad { i } => Ok(b.grad[*i]),
            PhiExpr::Hess { i, j } => Ok(b.hess[*i][*j]),
            PhiExpr::InvGradNorm { power } => {
                b.check_gradient(floor)?;
                Ok(b.grad_norm.powi(-*power))
            }
            PhiExpr::Sum { terms } => terms.iter().map(|t| t.eval(b, floor)).sum(),
            PhiExpr::Prod { factors } => factors.iter().map(|t| t.eval(b, floor)).product(),
            PhiExpr::Named { name } => eval_named(*name, b, floor),
        }
    }

    /// Value and the partials `(∇₁φ, ∇₂φ)` with respect to `∇f` and `vech ∇²f`.
    pub fn eval_partials(&self, b: &DerivBundle, floor: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let d = b.dim;
        let r = self.dual(b, floor)?;
        Ok((r.v, r.d[..d].to_vec(), r.d[d..a_dim(d)].to_vec()))
    }

    fn dual(&self, b: &DerivBundle, floor: f64) -> Result<Dual> {
        let d = b.dim;
        Ok(match self {
            PhiExpr::Const { value } => Dual::constant(*value),
            PhiExpr::Grad { i } => {
                let mut r = Dual::constant(b.grad[*i]);
                r.d[*i] = 1.0;
                r
            }
            PhiExpr::Hess { i, j } => {
                let mut r = Dual::constant(b.hess[*i][*j]);
                r.d[d + vech_index(*i, *j, d)] = 1.0;
                r
            }
            PhiExpr::InvGradNorm { power } => {
                b.check_gradient(floor)?;
                let p = *power as f64;
                let v = b.grad_norm.powi(-*power);
                let mut r = Dual::constant(v);
                // ∂‖g‖^{-p}/∂g_i = -p ‖g‖^{-p-2} g_i
                let k = -p * v / (b.grad_norm * b.grad_norm);
                for i in 0..d {
                    r.d[i] = k * b.grad[i];
                }
                r
            }
            PhiExpr::Sum { terms } => {
                let mut acc = Dual::constant(0.0);
                for t in terms {
                    let x = t.dual(b, floor)?;
                    acc.v += x.v;
                    for k in 0..MAX_AD {
                        acc.d[k] += x.d[k];
                    }
                }
                acc
            }
            PhiExpr::Prod { factors } => {
                let mut acc = Dual::constant(1.0);
                for t in factors {
                    let x = t.dual(b, floor)?;
                    for k in 0..MAX_AD {
                        acc.d[k] = acc.d[k] * x.v + acc.v * x.d[k];
                    }
                    acc.v *= x.v;
                }
                acc
            }
            PhiExpr::Named { name } => named_dual(*name, b, floor)?,
        })
    }
}

fn eval_named(name: NamedPhi, b: &DerivBundle, floor: f64) -> Result<f64> {
    if let NamedPhi::Unity = name {
        return Ok(1.0);
    }
    let cb = curvature_bundle(b, floor)?;
    let d = b.dim;
    Ok(match name {
        NamedPhi::Unity => 1.0,
        NamedPhi::MeanCurvature => cb.mean,
        NamedPhi::GaussCurvature => cb.gauss,
        NamedPhi::Willmore => cb.mean * cb.mean,
        NamedPhi::MinkowskiF { j } => cb.f(j),
        NamedPhi::Wg { g } => (d - 1) as f64 * cb.mean * g / b.grad_norm,
        NamedPhi::WgSquared { g } => ((d - 1) as f64 * cb.mean * g / b.grad_norm).powi(2),
    })
}

/// Central differences over the components of `d_f`.
fn named_dual(name: NamedPhi, b: &DerivBundle, floor: f64) -> Result<Dual> {
    let d = b.dim;
    let mut r = Dual::constant(eval_named(name, b, floor)?);
    if let NamedPhi::Unity = name {
        return Ok(r);
    }
    let vech = b.hess_vech().to_vec();
    let hscale = vech
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(b.grad_norm);
    for k in 0..a_dim(d) {
        let (base, scale) = if k < d {
            (b.grad[k], b.grad_norm)
        } else {
            (vech[k - d], hscale)
        };
        let step = 1e-5 * base.abs().max(scale);
        let shifted = |s: f64| -> Result<f64> {
            let mut g = b.grad;
            let mut v = vech.clone();
            if k < d {
                g[k] += s;
            } else {
                v[k - d] += s;
            }
            let nb = DerivBundle::new(d, b.value, g, unvech(&v, d));
            eval_named(name, &nb, floor)
        };
        r.d[k] = (shifted(step)? - shifted(-step)?) / (2.0 * step);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{Analytic, Field};
    use crate::geometry::gauss_curvature_adjugate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_names_and_json() {
        assert_eq!(
            PhiExpr::parse("unity").unwrap(),
            PhiExpr::named(NamedPhi::Unity)
        );
        assert_eq!(
            PhiExpr::parse("minkowski_f2").unwrap(),
            PhiExpr::named(NamedPhi::MinkowskiF { j: 2 })
        );
        let j = r#"{"op":"prod","factors":[{"op":"grad","i":0},{"op":"inv_grad_norm","power":1}]}"#;
        assert!(matches!(PhiExpr::parse(j).unwrap(), PhiExpr::Prod { .. }));
        assert!(PhiExpr::parse("nope").is_err());
        assert!(PhiExpr::parse("{\"op\":\"bogus\"}").is_err());
        assert!(PhiExpr::Grad { i: 2 }.validate(2).is_err());
        assert!(PhiExpr::named(NamedPhi::MinkowskiF { j: 4 })
            .validate(3)
            .is_err());
    }

    #[test]
    fn unity_and_willmore() {
        let f = Analytic::standard_gaussian(3);
        let r = 1.3;
        let b = f.bundle(&[0.0, r, 0.0]);
        assert_eq!(
            PhiExpr::parse("unity").unwrap().eval(&b, 1e-12).unwrap(),
            1.0
        );
        let w = PhiExpr::parse("willmore").unwrap().eval(&b, 1e-12).unwrap();
        assert!((w - 1.0 / (r * r)).abs() < 1e-12);
    }

    #[test]
    fn gauss_name_matches_adjugate() {
        let spec = crate::density::AnalyticSpec::Mixture {
            components: vec![
                crate::density::MixtureComponent {
                    weight: 0.6,
                    mean: vec![0.0, 0.0, 0.0],
                    sd: vec![1.0, 0.8, 1.2],
                },
                crate::density::MixtureComponent {
                    weight: 0.4,
                    mean: vec![1.5, -0.5, 0.3],
                    sd: vec![0.7, 1.0, 0.9],
                },
            ],
        };
        let f = Analytic::new(spec).unwrap();
        let e = PhiExpr::parse("gauss_curvature").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b = f.bundle(&x);
            let a = gauss_curvature_adjugate(&b, 1e-12).unwrap();
            let v = e.eval(&b, 1e-12).unwrap();
            assert!((a - v).abs() <= 1e-8 * a.abs().max(1e-3), "{a} vs {v}");
        }
    }

    #[test]
    fn tree_partials_match_differences() {
        // φ = ∂₁f · ∂₁₂f · ‖∇f‖^{-2}
        let e = PhiExpr::Prod {
            factors: vec![
                PhiExpr::Grad { i: 0 },
                PhiExpr::Hess { i: 0, j: 1 },
                PhiExpr::InvGradNorm { power: 2 },
            ],
        };
        let f = Analytic::standard_gaussian(2);
        let b = f.bundle(&[0.7, -0.4]);
        let (v, p1, p2) = e.eval_partials(&b, 1e-12).unwrap();
        let expect = b.grad[0] * b.hess[0][1] / b.grad_norm.powi(2);
        assert!((v - expect).abs() < 1e-15);
        let named = named_like(&e, &b);
        for (a, n) in p1.iter().chain(&p2).zip(named) {
            assert!((a - n).abs() < 1e-6 * n.abs().max(1e-3));
        }
    }

    fn named_like(e: &PhiExpr, b: &DerivBundle) -> Vec<f64> {
        let d = b.dim;
        let vech = b.hess_vech().to_vec();
        (0..a_dim(d))
            .map(|k| {
                let step = 1e-6;
                let at = |s: f64| {
                    let mut g = b.grad;
                    let mut v = vech.clone();
                    if k < d {
                        g[k] += s
                    } else {
                        v[k - d] += s
                    }
                    e.eval(&DerivBundle::new(d, b.value, g, unvech(&v, d)), 0.0)
                        .unwrap()
                };
                (at(step) - at(-step)) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn derivative_usage_flags() {
        assert!(!PhiExpr::parse("unity").unwrap().uses_derivatives());
        assert!(!PhiExpr::Const { value: 2.0 }.uses_derivatives());
        assert!(PhiExpr::Grad { i: 0 }.uses_derivatives());
        assert!(!PhiExpr::Grad { i: 0 }.uses_hessian());
        assert!(PhiExpr::parse("willmore").unwrap().uses_hessian());
        assert_eq!(
            PhiExpr::parse("minkowski_f1").unwrap().as_constant(),
            Some(1.0)
        );
    }
}
