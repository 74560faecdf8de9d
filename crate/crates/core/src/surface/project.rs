//! Projection of a point onto a level set along the gradient line through it.

use crate::density::{gradient_floor, Field};
use crate::error::{Error, Result};
use crate::linalg::{axpy, from_slice, scale, Vec3};

#[derive(Debug, Clone, Copy)]
pub struct ProjectOptions {
    pub t_max: f64,
    /// Scan steps per side before giving up.
    pub scan_steps: usize,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            scan_steps: 256,
        }
    }
}

/// `(t, foot)` with `foot = x + t ∇F(x)/‖∇F(x)‖` on `{F = c}` and `|t|` smallest.
///
/// `t_max` defaults to 1; use [`project_with`] for the `10h` KDE convention.
pub fn project_to_level<F: Field + ?Sized>(f: &F, x: &[f64], c: f64) -> Result<(f64, Vec3)> {
    project_with(f, x, c, ProjectOptions::default())
}

pub fn project_with<F: Field + ?Sized>(
    f: &F,
    x: &[f64],
    c: f64,
    opt: ProjectOptions,
) -> Result<(f64, Vec3)> {
    let d = f.dim();
    let g = f.value_grad(x).1;
    let gn = (0..d).map(|a| g[a] * g[a]).sum::<f64>().sqrt();
    let floor = gradient_floor(c);
    if gn < floor {
        return Err(Error::DegenerateGradient { norm: gn, floor });
    }
    project_along(f, x, &scale(&g, 1.0 / gn), c, opt)
}

/// Smallest-`|t|` root of `F(x + t·dir) = c` for a unit direction `dir`,
/// which need not come from `F`.
pub fn project_along<F: Field + ?Sized>(
    f: &F,
    x: &[f64],
    dir: &Vec3,
    c: f64,
    opt: ProjectOptions,
) -> Result<(f64, Vec3)> {
    let d = f.dim();
    let dir = *dir;
    let x0 = from_slice(x);
    let at = |t: f64| axpy(&x0, t, &dir);
    let r = |t: f64| f.value(&at(t)[..d]) - c;
    let r0 = f.value(x) - c;
    let tol = 1e-10 * c.abs();
    if r0.abs() <= tol {
        return Ok((0.0, x0));
    }
    let delta = opt.t_max / opt.scan_steps as f64;
    let (mut prev_p, mut prev_m) = (r0, r0);
    for k in 1..=opt.scan_steps {
        let t = k as f64 * delta;
        let rp = r(t);
        let rm = r(-t);
        let hit_p = (rp > 0.0) != (prev_p > 0.0) || rp == 0.0;
        let hit_m = (rm > 0.0) != (prev_m > 0.0) || rm == 0.0;
        let cand_p = hit_p.then(|| refine(c, &at, d, f, &dir, t - delta, t, prev_p, tol));
        let cand_m = hit_m.then(|| refine(c, &at, d, f, &dir, -t + delta, -t, prev_m, tol));
        match (cand_p, cand_m) {
            (Some(a), Some(b)) => {
                return Ok(if b.abs() < a.abs() {
                    (b, at(b))
                } else {
                    (a, at(a))
                })
            }
            (Some(a), None) => return Ok((a, at(a))),
            (None, Some(b)) => return Ok((b, at(b))),
            (None, None) => {}
        }
        prev_p = rp;
        prev_m = rm;
    }
    Err(Error::NoBracket { t_max: opt.t_max })
}

/// Safeguarded Newton inside the bracket `[a, b]` (either order); `ra = r(a)`.
#[allow(clippy::too_many_arguments)]
fn refine<F: Field + ?Sized>(
    c: f64,
    at: &impl Fn(f64) -> Vec3,
    d: usize,
    f: &F,
    dir: &Vec3,
    a: f64,
    b: f64,
    ra: f64,
    tol: f64,
) -> f64 {
    let (mut lo, mut hi) = (a, b);
    let mut rlo = ra;
    let mut t = 0.5 * (a + b);
    for _ in 0..100 {
        let p = at(t);
        let (v, g) = f.value_grad(&p[..d]);
        let rt = v - c;
        if rt.abs() <= tol {
            return t;
        }
        if (rt > 0.0) == (rlo > 0.0) {
            lo = t;
            rlo = rt;
        } else {
            hi = t;
        }
        let slope: f64 = (0..d).map(|k| g[k] * dir[k]).sum();
        let newton = t - rt / slope;
        let (mn, mx) = if lo < hi { (lo, hi) } else { (hi, lo) };
        t = if slope != 0.0 && newton > mn && newton < mx {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo).abs() < 1e-15 * (1.0 + t.abs()) {
            return t;
        }
    }
    t
}
