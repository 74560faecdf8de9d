//! Pointwise differential geometry of implicit level sets.
//!
//! The unit normal is taken as `N = −∇f/‖∇f‖`, which points out of the
//! super-level set `{f ≥ c}`. With this orientation the shape operator is
//! `S = −‖∇f‖⁻¹ G ∇²f G`, so the level circles and spheres of a unimodal
//! density have positive curvature.

use crate::density::DerivBundle;
use crate::error::{Error, Result};
use crate::linalg::{
    adjugate, det, dot, identity, mat_mul, mat_scale, mat_sub, outer, quad_form, scale, sym_eigen,
    trace, Mat3, Vec3,
};

/// Focal-point guard for parallel surfaces.
pub const FOCAL_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureBundle {
    pub dim: usize,
    pub normal: Vec3,
    pub projector: Mat3,
    pub shape_op: Mat3,
    principal: [f64; 2],
    pub mean: f64,
    pub gauss: f64,
    fj: [f64; 3],
}

impl CurvatureBundle {
    /// The `d − 1` principal curvatures, ascending.
    pub fn principal(&self) -> &[f64] {
        &self.principal[..self.dim - 1]
    }

    /// `F_1..F_d`: coefficients of `Π (x + κ_i)` from the leading one down.
    pub fn fj(&self) -> &[f64] {
        &self.fj[..self.dim]
    }

    /// `F_j` with 1-based `j`.
    pub fn f(&self, j: usize) -> f64 {
        self.fj[j - 1]
    }
}

/// Elementary symmetric polynomials `e_0..e_k` of the given values.
pub fn elementary_symmetric(vals: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; vals.len() + 1];
    e[0] = 1.0;
    for (i, v) in vals.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            e[k] += v * e[k - 1];
        }
    }
    e
}

/// Outward unit normal `−∇f/‖∇f‖`.
pub fn unit_normal(b: &DerivBundle) -> Vec3 {
    scale(&b.grad, -1.0 / b.grad_norm)
}

pub fn curvature_bundle(b: &DerivBundle, floor: f64) -> Result<CurvatureBundle> {
    b.check_gradient(floor)?;
    let d = b.dim;
    let n = unit_normal(b);
    let g = mat_sub(&identity(d), &outer(&n, &n, d));
    let ghg = mat_mul(&mat_mul(&g, &b.hess, d), &g, d);
    let mut s = mat_scale(&ghg, -1.0 / b.grad_norm);
    // symmetrize away rounding
    for i in 0..d {
        for j in 0..i {
            let m = 0.5 * (s[i][j] + s[j][i]);
            s[i][j] = m;
            s[j][i] = m;
        }
    }
    let (vals, vecs) = sym_eigen(&s, d);
    let normal_slot = (0..d)
        .max_by(|&a, &c| {
            dot(&vecs[a], &n, d)
                .abs()
                .total_cmp(&dot(&vecs[c], &n, d).abs())
        })
        .expect("d >= 2");
    let mut k: Vec<f64> = (0..d)
        .filter(|&i| i != normal_slot)
        .map(|i| vals[i])
        .collect();
    k.sort_by(f64::total_cmp);
    let e = elementary_symmetric(&k);
    let mut principal = [0.0; 2];
    principal[..d - 1].copy_from_slice(&k);
    let mut fj = [0.0; 3];
    fj[..d].copy_from_slice(&e[..d]);
    Ok(CurvatureBundle {
        dim: d,
        normal: n,
        projector: g,
        shape_op: s,
        principal,
        mean: e[1] / (d - 1) as f64,
        gauss: e[d - 1],
        fj,
    })
}

/// Sum of all `k × k` principal minors of `m` (`k = 0` gives 1).
pub fn principal_minor_sum(m: &Mat3, d: usize, k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => trace(m, d),
        2 if d == 2 => det(m, 2),
        2 => {
            let mut acc = 0.0;
            for i in 0..d {
                for j in i + 1..d {
                    acc += m[i][i] * m[j][j] - m[i][j] * m[j][i];
                }
            }
            acc
        }
        3 if d == 3 => det(m, 3),
        _ => 0.0,
    }
}

/// `F_j` from principal minors of the shape operator: `F_j` is the sum of the
/// `(j−1) × (j−1)` principal minors.
pub fn fj_from_minors(s: &Mat3, d: usize) -> Vec<f64> {
    (1..=d).map(|j| principal_minor_sum(s, d, j - 1)).collect()
}

/// Coefficients of `det(tI − S)`, highest power first.
pub fn char_poly(s: &Mat3, d: usize) -> Vec<f64> {
    (0..=d)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * principal_minor_sum(s, d, k)
        })
        .collect()
}

/// Gaussian curvature from the adjugate of the Hessian.
pub fn gauss_curvature_adjugate(b: &DerivBundle, floor: f64) -> Result<f64> {
    b.check_gradient(floor)?;
    let d = b.dim;
    let n = unit_normal(b);
    let adj = adjugate(&b.hess, d);
    let sign = if d.is_multiple_of(2) { -1.0 } else { 1.0 };
    Ok(sign * quad_form(&adj, &n, &n, d) / b.grad_norm.powi(d as i32 - 1))
}

/// `‖∇f‖⁻¹ [Nᵀ∇g + (d−1) H g]`.
pub fn weight_wg(b: &DerivBundle, g_val: f64, g_grad: &Vec3, floor: f64) -> Result<f64> {
    let cb = curvature_bundle(b, floor)?;
    Ok(weight_from(&cb, b.grad_norm, g_val, g_grad))
}

pub(crate) fn weight_from(cb: &CurvatureBundle, grad_norm: f64, g_val: f64, g_grad: &Vec3) -> f64 {
    let d = cb.dim;
    (dot(&cb.normal, g_grad, d) + (d - 1) as f64 * cb.mean * g_val) / grad_norm
}

/// Curvatures of the parallel surface at signed outward offset `eps`.
pub fn parallel_curvature(principal: &[f64], eps: f64) -> Result<(f64, Vec<f64>)> {
    let mut gauss = 1.0;
    let mut out = Vec::with_capacity(principal.len());
    for &k in principal {
        let den = 1.0 + eps * k;
        if den.abs() < FOCAL_GUARD {
            return Err(Error::FocalPoint(den));
        }
        let ks = k / den;
        gauss *= ks;
        out.push(ks);
    }
    Ok((gauss, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{Analytic, Field};
    use crate::linalg::{mat_vec, norm, transpose, ZERO33};
    use proptest::prelude::*;

    fn sphere_point(d: usize, r: f64) -> DerivBundle {
        let f = Analytic::standard_gaussian(d);
        let mut x = vec![0.0; d];
        x[0] = r;
        f.bundle(&x)
    }

    #[test]
    fn circle_and_sphere_curvatures() {
        let r = 1.4;
        let c2 = curvature_bundle(&sphere_point(2, r), 1e-12).unwrap();
        assert!((c2.mean - 1.0 / r).abs() < 1e-12);
        assert_eq!(c2.principal().len(), 1);
        let c3 = curvature_bundle(&sphere_point(3, r), 1e-12).unwrap();
        assert!((c3.gauss - 1.0 / (r * r)).abs() < 1e-12);
        assert!((c3.mean - 1.0 / r).abs() < 1e-12);
        assert_eq!(c3.fj().len(), 3);
        assert_eq!(c3.f(1), 1.0);
        assert!((c3.f(2) - 2.0 / r).abs() < 1e-12);
        assert!((c3.f(3) - 1.0 / (r * r)).abs() < 1e-12);
        let sn = mat_vec(&c3.shape_op, &c3.normal, 3);
        assert!(norm(&sn, 3) < 1e-12);
    }

    #[test]
    fn adjugate_route_on_sphere() {
        let r = 0.9;
        assert!(
            (gauss_curvature_adjugate(&sphere_point(3, r), 1e-12).unwrap() - 1.0 / (r * r)).abs()
                < 1e-10
        );
        assert!(
            (gauss_curvature_adjugate(&sphere_point(2, r), 1e-12).unwrap() - 1.0 / r).abs() < 1e-10
        );
    }

    #[test]
    fn weight_of_unit_integrand() {
        let r = 1.52162;
        let b = sphere_point(2, r);
        let w = weight_wg(&b, 1.0, &[0.0; 3], 1e-12).unwrap();
        assert!((w - 1.0 / (r * r * b.value)).abs() < 1e-9);
        assert_eq!(weight_wg(&b, 0.0, &[0.0; 3], 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn parallel_sphere() {
        let r = 2.0;
        let (g, ks) = parallel_curvature(&[1.0 / r, 1.0 / r], 0.3).unwrap();
        for k in &ks {
            assert!((k - 1.0 / 2.3).abs() < 1e-14);
        }
        assert!((g - 1.0 / (2.3 * 2.3)).abs() < 1e-14);
        assert_eq!(
            parallel_curvature(&[0.0, 0.0], 5.0).unwrap().1,
            vec![0.0, 0.0]
        );
        assert_eq!(parallel_curvature(&[0.7], 0.0).unwrap().1, vec![0.7]);
        assert!(matches!(
            parallel_curvature(&[-1.0], 1.0),
            Err(Error::FocalPoint(_))
        ));
    }

    #[test]
    fn degenerate_gradient_is_refused() {
        let b = Analytic::standard_gaussian(2).bundle(&[0.0, 0.0]);
        assert!(matches!(
            curvature_bundle(&b, 1e-8),
            Err(Error::DegenerateGradient { .. })
        ));
    }

    fn rotation(a: f64, b: f64, c: f64) -> Mat3 {
        let rz = [
            [a.cos(), -a.sin(), 0.0],
            [a.sin(), a.cos(), 0.0],
            [0.0, 0.0, 1.0],
        ];
        let ry = [
            [b.cos(), 0.0, b.sin()],
            [0.0, 1.0, 0.0],
            [-b.sin(), 0.0, b.cos()],
        ];
        let rx = [
            [1.0, 0.0, 0.0],
            [0.0, c.cos(), -c.sin()],
            [0.0, c.sin(), c.cos()],
        ];
        mat_mul(&mat_mul(&rz, &ry, 3), &rx, 3)
    }

    fn random_bundle(v: f64, g: [f64; 3], h: [f64; 6]) -> DerivBundle {
        let hess = [[h[0], h[1], h[2]], [h[1], h[3], h[4]], [h[2], h[4], h[5]]];
        DerivBundle::new(3, v, g, hess)
    }

    fn gvec() -> impl Strategy<Value = [f64; 3]> {
        prop::array::uniform3(-2.0..2.0f64).prop_filter("nonzero", |g| norm(g, 3) > 0.3)
    }

    proptest! {
        #[test]
        fn rotation_equivariance(g in gvec(), h in prop::array::uniform6(-2.0..2.0f64),
                                 a in 0.0..6.3f64, b in 0.0..6.3f64, c in 0.0..6.3f64) {
            let q = rotation(a, b, c);
            let base = random_bundle(0.1, g, h);
            let rot = DerivBundle::new(3, 0.1, mat_vec(&q, &g, 3),
                mat_mul(&mat_mul(&q, &base.hess, 3), &transpose(&q), 3));
            let c0 = curvature_bundle(&base, 1e-8).unwrap();
            let c1 = curvature_bundle(&rot, 1e-8).unwrap();
            for (x, y) in c0.principal().iter().zip(c1.principal()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
            prop_assert!((c0.mean - c1.mean).abs() < 1e-10);
            prop_assert!((c0.gauss - c1.gauss).abs() < 1e-10);
            let rn = mat_vec(&q, &c0.normal, 3);
            prop_assert!(norm(&crate::linalg::sub(&rn, &c1.normal), 3) < 1e-10);
        }

        #[test]
        fn scaling_invariance(g in gvec(), h in prop::array::uniform6(-2.0..2.0f64), s in 0.1..10.0f64) {
            let base = random_bundle(0.1, g, h);
            let scaled = DerivBundle::new(3, 0.1 * s, scale(&g, s), mat_scale(&base.hess, s));
            let c0 = curvature_bundle(&base, 1e-8).unwrap();
            let c1 = curvature_bundle(&scaled, 1e-8).unwrap();
            for j in 1..=3 {
                prop_assert!((c0.f(j) - c1.f(j)).abs() < 1e-10);
            }
            prop_assert!((c0.mean - c1.mean).abs() < 1e-10);
            prop_assert!(norm(&crate::linalg::sub(&c0.normal, &c1.normal), 3) < 1e-12);
        }

        #[test]
        fn shape_operator_structure(g in gvec(), h in prop::array::uniform6(-2.0..2.0f64)) {
            let b = random_bundle(0.1, g, h);
            let cb = curvature_bundle(&b, 1e-8).unwrap();
            let gg = mat_mul(&cb.projector, &cb.projector, 3);
            let gn = mat_vec(&cb.projector, &cb.normal, 3);
            prop_assert!(norm(&gn, 3) < 1e-12);
            for i in 0..3 { for j in 0..3 {
                prop_assert!((gg[i][j] - cb.projector[i][j]).abs() < 1e-12);
            }}
            prop_assert!(norm(&mat_vec(&cb.shape_op, &cb.normal, 3), 3) < 1e-12);
            let minors = fj_from_minors(&cb.shape_op, 3);
            let cp = char_poly(&cb.shape_op, 3);
            for j in 1..=3 {
                prop_assert!((minors[j - 1] - cb.f(j)).abs() < 1e-9 * (1.0 + cb.f(j).abs()));
                let sign = if (j - 1) % 2 == 0 { 1.0 } else { -1.0 };
                prop_assert!((cp[j - 1] - sign * cb.f(j)).abs() < 1e-9 * (1.0 + cb.f(j).abs()));
            }
            prop_assert!(cp[3].abs() < 1e-9);
            let adj = gauss_curvature_adjugate(&b, 1e-8).unwrap();
            prop_assert!((adj - cb.gauss).abs() < 1e-8 * (1.0 + cb.gauss.abs()));
        }
    }

    #[test]
    fn zero_matrix_has_no_curvature() {
        let b = DerivBundle::new(2, 1.0, [1.0, 0.0, 0.0], ZERO33);
        let cb = curvature_bundle(&b, 1e-8).unwrap();
        assert_eq!(cb.principal(), &[0.0]);
    }
}
