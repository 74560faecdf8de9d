//! Compactly supported, spherically symmetric kernels of arbitrary even order.
//!
//! Every kernel has the radial form `K(u) = c · p(‖u‖²) · (1 − ‖u‖²)^s` on the
//! closed unit ball and vanishes outside it. The polynomial `p` has degree
//! `ν/2 − 1` and is fixed by requiring the even radial moments of orders
//! `2, 4, …, ν − 2` to vanish; odd moments vanish by symmetry. With `s ≥ 5`
//! the kernel is four times continuously differentiable across the boundary.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat3, Vec3, ZERO3, ZERO33};
use crate::quadrature::GaussLegendre;

/// Nodes per axis for diagnostic tensor-product quadrature.
pub const DIAGNOSTIC_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub dim: usize,
    pub order: usize,
    pub smoothness_exp: u32,
    /// Coefficients of `p(t) = Σ a_k t^k`, with `a_0 = 1`.
    pub radial_coeffs: Vec<f64>,
    pub norm_const: f64,
}

/// Surface area of the unit sphere in `ℝ^k` (so `k = 2` gives `2π`).
pub fn sphere_area(k: usize) -> f64 {
    let k = k as f64;
    2.0 * PI.powf(k / 2.0) / gamma(k / 2.0)
}

/// `∫_0^1 t^{a-1} (1-t)^s dt` for the moment algebra.
fn beta(a: f64, b: f64) -> f64 {
    ln_beta(a, b).exp()
}

/// Builds the kernel of dimension `d`, even order `order` and radial exponent `s`.
pub fn make_kernel(d: usize, order: usize, s: u32) -> Result<KernelSpec> {
    if d < 2 {
        return invalid(format!("kernel dimension must be >= 2, got {d}"));
    }
    if order < 2 || !order.is_multiple_of(2) {
        return invalid(format!("kernel order must be even and >= 2, got {order}"));
    }
    if s < 5 {
        return invalid(format!("kernel smoothness exponent must be >= 5, got {s}"));
    }
    let m = order / 2 - 1;
    let half_d = d as f64 / 2.0;
    let sf = s as f64 + 1.0;
    // radial moment of t^k against t^{j + d/2 - 1} (1-t)^s
    let rm = |j: usize, k: usize| beta((j + k) as f64 + half_d, sf);

    let mut coeffs = vec![1.0];
    if m > 0 {
        // Σ_{k=1..m} a_k rm(j,k) = -rm(j,0), j = 1..m
        let a = DMatrix::from_fn(m, m, |r, c| rm(r + 1, c + 1));
        let b = DVector::from_fn(m, |r, _| -rm(r + 1, 0));
        let sol = a.lu().solve(&b).ok_or_else(|| {
            Error::Numerical(format!("kernel moment system singular for order {order}"))
        })?;
        coeffs.extend(sol.iter().copied());
    }
    let mass: f64 = coeffs.iter().enumerate().map(|(k, a)| a * rm(0, k)).sum();
    let top: f64 = coeffs
        .iter()
        .enumerate()
        .map(|(k, a)| a * rm(m + 1, k))
        .sum();
    if !(mass.is_finite() && mass.abs() > 0.0) {
        return Err(Error::Numerical("kernel normalization degenerate".into()));
    }
    if !top.is_finite() || top.abs() < 1e-14 * mass.abs() {
        return Err(Error::Numerical(format!(
            "order-{order} moment vanishes; moment system unsatisfiable"
        )));
    }
    // ∫K = c |S^{d-1}| (1/2) Σ a_k B(k + d/2, s + 1)
    let norm_const = 1.0 / (sphere_area(d) * 0.5 * mass);
    Ok(KernelSpec {
        dim: d,
        order,
        smoothness_exp: s,
        radial_coeffs: coeffs,
        norm_const,
    })
}

impl KernelSpec {
    /// `(q, q', q'')` of the unnormalized profile `q(t) = p(t)(1-t)^s`; zero for `t ≥ 1`.
    #[inline]
    pub fn profile(&self, t: f64) -> (f64, f64, f64) {
        if t >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
        for a in self.radial_coeffs.iter().rev() {
            ddp = ddp * t + 2.0 * dp;
            dp = dp * t + p;
            p = p * t + a;
        }
        let s = self.smoothness_exp as i32;
        let sf = s as f64;
        let w = 1.0 - t;
        let w2 = w.powi(s - 2);
        let w1 = w2 * w;
        let w0 = w1 * w;
        let q = p * w0;
        let dq = dp * w0 - sf * p * w1;
        let ddq = ddp * w0 - 2.0 * sf * dp * w1 + sf * (sf - 1.0) * p * w2;
        (q, dq, ddq)
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        let t: f64 = u.iter().map(|x| x * x).sum();
        self.norm_const * self.profile(t).0
    }

    pub fn eval_grad(&self, u: &[f64]) -> Vec3 {
        let t: f64 = u.iter().map(|x| x * x).sum();
        let (_, dq, _) = self.profile(t);
        let mut g = ZERO3;
        for (gi, ui) in g.iter_mut().zip(u) {
            *gi = 2.0 * self.norm_const * dq * ui;
        }
        g
    }

    pub fn eval_hess(&self, u: &[f64]) -> Mat3 {
        self.eval_all(u).2
    }

    /// Value, gradient and Hessian in one pass.
    #[inline]
    pub fn eval_all(&self, u: &[f64]) -> (f64, Vec3, Mat3) {
        let d = u.len();
        let t: f64 = u.iter().map(|x| x * x).sum();
        if t >= 1.0 {
            return (0.0, ZERO3, ZERO33);
        }
        let (q, dq, ddq) = self.profile(t);
        let c = self.norm_const;
        let mut g = ZERO3;
        let mut h = ZERO33;
        for i in 0..d {
            g[i] = 2.0 * c * dq * u[i];
            for j in 0..d {
                h[i][j] = 4.0 * c * ddq * u[i] * u[j];
            }
            h[i][i] += 2.0 * c * dq;
        }
        (c * q, g, h)
    }

    /// Max-norm of the moment tensor `∫ u^{⊗l} K(u) du` by tensor-product
    /// Gauss–Legendre quadrature over the unit ball.
    pub fn kernel_moment(&self, l: usize) -> f64 {
        let exps = monomial_exponents(self.dim, l);
        let mut acc = vec![0.0; exps.len()];
        ball_quadrature(self.dim, DIAGNOSTIC_NODES, |u, w| {
            let k = self.eval(u) * w;
            if k == 0.0 {
                return;
            }
            for (a, e) in acc.iter_mut().zip(&exps) {
                let mono: f64 = e.iter().zip(u).map(|(p, x)| x.powi(*p as i32)).product();
                *a += mono * k;
            }
        });
        acc.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `∫ K(u) du` by the same quadrature used for [`Self::kernel_moment`].
    pub fn total_mass(&self) -> f64 {
        let mut acc = 0.0;
        ball_quadrature(self.dim, DIAGNOSTIC_NODES, |u, w| acc += self.eval(u) * w);
        acc
    }

    /// Integral of the (normalized) profile over the hyperplane at signed
    /// offset `t` from the origin.
    pub fn slice_integral(&self, t: f64) -> f64 {
        self.norm_const * self.slice_radial(t, |q, _, _, _| q)
    }

    /// Generic hyperplane-slice integral: integrates `f(q, q', q'', ρ²)` over
    /// the `(d-1)`-dimensional plane at offset `t`, where `ρ` is the in-plane
    /// radius and the profile is evaluated at `t² + ρ²`.
    pub fn slice_radial(&self, t: f64, f: impl Fn(f64, f64, f64, f64) -> f64) -> f64 {
        let rmax2 = 1.0 - t * t;
        if rmax2 <= 0.0 {
            return 0.0;
        }
        let rmax = rmax2.sqrt();
        let k = self.dim - 1;
        let surf = sphere_area(k);
        let gl = slice_rule();
        gl.integrate(0.0, rmax, |rho| {
            let r2 = rho * rho;
            let (q, dq, ddq) = self.profile(t * t + r2);
            surf * rho.powi(k as i32 - 1) * f(q, dq, ddq, r2)
        })
    }

    /// `R(K) = ∫ (∫_{plane at t} K)² dt`, by outer Gauss–Legendre over
    /// `t ∈ [-1, 1]` and an inner radial rule on each slice.
    pub fn roughness(&self) -> f64 {
        let gl = slice_rule();
        gl.integrate(-1.0, 1.0, |t| self.slice_integral(t).powi(2))
    }

    /// `∫ K(u)² du`, from the radial beta integrals.
    pub fn l2_norm_sq(&self) -> f64 {
        let half_d = self.dim as f64 / 2.0;
        let s2 = 2.0 * self.smoothness_exp as f64 + 1.0;
        let a = &self.radial_coeffs;
        let mut acc = 0.0;
        for (i, ai) in a.iter().enumerate() {
            for (j, aj) in a.iter().enumerate() {
                acc += ai * aj * beta((i + j) as f64 + half_d, s2);
            }
        }
        self.norm_const.powi(2) * sphere_area(self.dim) * 0.5 * acc
    }

    /// Per-axis second moment `μ₂ = ∫ u₁² K(u) du`.
    pub fn second_moment(&self) -> f64 {
        let half_d = self.dim as f64 / 2.0;
        let sf = self.smoothness_exp as f64 + 1.0;
        let acc: f64 = self
            .radial_coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| a * beta(k as f64 + 1.0 + half_d, sf))
            .sum();
        self.norm_const * sphere_area(self.dim) * 0.5 * acc / self.dim as f64
    }
}

/// One shared 64-node rule for slice integrals.
fn slice_rule() -> &'static GaussLegendre {
    use std::sync::OnceLock;
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(DIAGNOSTIC_NODES))
}

fn monomial_exponents(d: usize, l: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(d, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, l, &mut Vec::new(), &mut out);
    out
}

/// Tensor-product Gauss–Legendre over the unit ball, with each inner axis
/// clipped to the ball's chord so the rule never straddles the support edge.
pub fn ball_quadrature(d: usize, nodes: usize, mut f: impl FnMut(&[f64], f64)) {
    let gl = GaussLegendre::new(nodes);
    match d {
        2 => {
            for (x, wx) in gl.mapped(-1.0, 1.0) {
                let a = (1.0 - x * x).max(0.0).sqrt();
                for (y, wy) in gl.mapped(-a, a) {
                    f(&[x, y], wx * wy);
                }
            }
        }
        3 => {
            for (x, wx) in gl.mapped(-1.0, 1.0) {
                let a = (1.0 - x * x).max(0.0).sqrt();
                for (y, wy) in gl.mapped(-a, a) {
                    let b = (1.0 - x * x - y * y).max(0.0).sqrt();
                    for (z, wz) in gl.mapped(-b, b) {
                        f(&[x, y, z], wx * wy * wz);
                    }
                }
            }
        }
        _ => panic!("ball quadrature implemented for d in {{2,3}}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_order_kernel_has_unit_polynomial() {
        let k = make_kernel(2, 2, 5).unwrap();
        assert_eq!(k.radial_coeffs, vec![1.0]);
        assert!((k.total_mass() - 1.0).abs() < 1e-8);
        assert!(k.kernel_moment(1) < 1e-10);
        assert!(k.kernel_moment(3) < 1e-10);
        // c = 6/π for d=2, s=5
        assert!((k.norm_const - 6.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(make_kernel(1, 2, 5).is_err());
        assert!(make_kernel(2, 3, 5).is_err());
        assert!(make_kernel(2, 0, 5).is_err());
        assert!(make_kernel(2, 2, 4).is_err());
    }

    #[test]
    fn support_is_unit_ball() {
        let k = make_kernel(3, 4, 6).unwrap();
        for r in [1.0, 1.0001, 1.3, 1.5, 2.0] {
            let u = [r / 3f64.sqrt(); 3];
            assert_eq!(k.eval(&u), 0.0);
            assert_eq!(k.eval_grad(&u), ZERO3);
            assert_eq!(k.eval_hess(&u), ZERO33);
        }
        assert_eq!(k.eval_grad(&[0.0, 0.0, 0.0]), ZERO3);
    }

    #[test]
    fn order_moment_is_positive() {
        for (d, nu) in [(2, 2), (2, 4), (3, 2), (3, 4)] {
            let k = make_kernel(d, nu, 5).unwrap();
            assert!(k.kernel_moment(nu) > 1e-6, "d={d} nu={nu}");
            assert!((k.kernel_moment(0) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn closed_form_moments_match_quadrature() {
        let k = make_kernel(2, 2, 5).unwrap();
        let mut m2 = 0.0;
        let mut l2 = 0.0;
        ball_quadrature(2, 64, |u, w| {
            let v = k.eval(u);
            m2 += u[0] * u[0] * v * w;
            l2 += v * v * w;
        });
        assert!((k.second_moment() - m2).abs() < 1e-10);
        assert!((k.l2_norm_sq() - l2).abs() < 1e-9);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn derivatives_match_finite_differences(
            pick in 0usize..6,
            raw in proptest::array::uniform3(-0.7..0.7f64),
        ) {
            let (d, nu, s) = [(2, 2, 5), (2, 4, 5), (2, 2, 7), (3, 2, 5), (3, 4, 6), (3, 6, 8)][pick];
            let k = make_kernel(d, nu, s).unwrap();
            let u = &raw[..d];
            let (v, g, h) = k.eval_all(u);
            proptest::prop_assert!((v - k.eval(u)).abs() <= 1e-14 * k.norm_const);
            let step = 1e-5;
            let scale = k.norm_const * 10.0;
            for a in 0..d {
                let mut up = raw;
                let mut dn = raw;
                up[a] += step;
                dn[a] -= step;
                let fd = (k.eval(&up[..d]) - k.eval(&dn[..d])) / (2.0 * step);
                proptest::prop_assert!((fd - g[a]).abs() < 1e-6 * scale, "grad {a}: {fd} vs {}", g[a]);
                let gu = k.eval_grad(&up[..d]);
                let gd = k.eval_grad(&dn[..d]);
                for b in 0..d {
                    let fd = (gu[b] - gd[b]) / (2.0 * step);
                    proptest::prop_assert!((fd - h[a][b]).abs() < 1e-5 * scale, "hess {a}{b}: {fd} vs {}", h[a][b]);
                }
            }
        }
    }
}
