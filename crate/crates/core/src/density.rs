//! Evaluable density fields: the kernel density estimator with analytic
//! derivatives, and Gaussian-mixture reference densities used as oracles.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::{vech_index, Mat3, Vec3, ZERO3, ZERO33};
use crate::quadrature::GaussLegendre;

/// Threshold below which the gradient is treated as vanishing at level `c`.
pub fn gradient_floor(c: f64) -> f64 {
    1e-8 * c.max(1.0)
}

/// An i.i.d. sample stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoints {
    dim: usize,
    coords: Vec<f64>,
}

impl SamplePoints {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return invalid(format!("sample dimension must be 2 or 3, got {dim}"));
        }
        if !coords.len().is_multiple_of(dim) {
            return invalid("coordinate count is not a multiple of the dimension");
        }
        if let Some(p) = coords.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite coordinate in row {}", p / dim));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(2);
        if rows.iter().any(|r| r.len() != dim) {
            return invalid("rows have inconsistent dimension");
        }
        Self::new(dim, rows.iter().flatten().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Per-axis `(min, max)`.
    pub fn bbox(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|a| {
                self.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                        (lo.min(p[a]), hi.max(p[a]))
                    })
            })
            .collect()
    }

    /// Per-axis sample standard deviation (denominator `n − 1`).
    pub fn std_devs(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.dim)
            .map(|a| {
                let mean = self.iter().map(|p| p[a]).sum::<f64>() / n;
                let ss: f64 = self.iter().map(|p| (p[a] - mean).powi(2)).sum();
                (ss / (n - 1.0).max(1.0)).sqrt()
            })
            .collect()
    }
}

/// Reference bandwidth `n^{-1/(d+4)}` times the mean per-axis standard deviation.
pub fn default_bandwidth(sample: &SamplePoints) -> f64 {
    let n = sample.len() as f64;
    let d = sample.dim() as f64;
    let sd = sample.std_devs();
    let mean_sd = sd.iter().sum::<f64>() / sd.len() as f64;
    n.powf(-1.0 / (d + 4.0)) * mean_sd
}

/// Value, gradient and Hessian of a field at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivBundle {
    pub dim: usize,
    pub value: f64,
    pub grad: Vec3,
    pub hess: Mat3,
    pub grad_norm: f64,
    vech: [f64; 6],
}

impl DerivBundle {
    pub fn new(dim: usize, value: f64, grad: Vec3, hess: Mat3) -> Self {
        let mut vech = [0.0; 6];
        for j in 0..dim {
            for i in j..dim {
                vech[vech_index(i, j, dim)] = hess[i][j];
            }
        }
        let grad_norm = (0..dim).map(|i| grad[i] * grad[i]).sum::<f64>().sqrt();
        Self {
            dim,
            value,
            grad,
            hess,
            grad_norm,
            vech,
        }
    }

    /// Lower-triangular half-vectorization of the Hessian.
    pub fn hess_vech(&self) -> &[f64] {
        &self.vech[..self.dim * (self.dim + 1) / 2]
    }

    pub fn check_gradient(&self, floor: f64) -> Result<()> {
        if self.grad_norm < floor || !self.grad_norm.is_finite() {
            Err(Error::DegenerateGradient {
                norm: self.grad_norm,
                floor,
            })
        } else {
            Ok(())
        }
    }
}

/// A scalar field with analytic first and second derivatives.
pub trait Field: Sync + Send {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn value_grad(&self, x: &[f64]) -> (f64, Vec3);
    fn bundle(&self, x: &[f64]) -> DerivBundle;

    fn grad(&self, x: &[f64]) -> Vec3 {
        self.value_grad(x).1
    }

    fn hess(&self, x: &[f64]) -> Mat3 {
        self.bundle(x).hess
    }

    /// Box that contains essentially all of the field's mass.
    fn default_bbox(&self) -> Vec<(f64, f64)>;

    /// Smoothing bandwidth, for kernel estimates.
    fn bandwidth(&self) -> Option<f64> {
        None
    }

    /// Number of sample points behind the field, for kernel estimates.
    fn sample_size(&self) -> Option<usize> {
        None
    }
}

/// Bundle at `x`, refused when the gradient is below `floor`.
pub fn deriv_bundle<F: Field + ?Sized>(f: &F, x: &[f64], floor: f64) -> Result<DerivBundle> {
    let b = f.bundle(x);
    b.check_gradient(floor)?;
    Ok(b)
}

/// Uniform bins over the sample so a query only visits points within `h`.
#[derive(Debug)]
struct BinIndex {
    dim: usize,
    lower: Vec3,
    bin: f64,
    shape: [usize; 3],
    /// CSR offsets into `order`.
    starts: Vec<usize>,
    /// Points sorted by bin, with their original indices.
    sorted: Vec<f64>,
    order: Vec<usize>,
}

impl BinIndex {
    fn build(sample: &SamplePoints, h: f64) -> Self {
        let dim = sample.dim();
        let bbox = sample.bbox();
        let cap = if dim == 2 { 2048.0 } else { 160.0 };
        let extent = bbox.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
        let bin = h.max(extent / cap).max(1e-300);
        let mut lower = ZERO3;
        let mut shape = [1usize; 3];
        for a in 0..dim {
            lower[a] = bbox[a].0;
            shape[a] = ((bbox[a].1 - bbox[a].0) / bin).floor() as usize + 1;
        }
        let total: usize = shape.iter().product();
        let key = |p: &[f64]| -> usize {
            let mut k = 0;
            for a in (0..dim).rev() {
                let c = (((p[a] - lower[a]) / bin).floor() as usize).min(shape[a] - 1);
                k = k * shape[a] + c;
            }
            k
        };
        let mut counts = vec![0usize; total + 1];
        let keys: Vec<usize> = sample.iter().map(key).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0usize; keys.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k]] = i;
            fill[k] += 1;
        }
        let mut sorted = Vec::with_capacity(sample.coords().len());
        for &i in &order {
            sorted.extend_from_slice(sample.point(i));
        }
        Self {
            dim,
            lower,
            bin,
            shape,
            starts: counts,
            sorted,
            order,
        }
    }

    /// Calls `f(original_index, point)` for every sample point whose bin can
    /// lie within `h` of `x`.
    #[inline]
    fn for_each_near(&self, x: &[f64], h: f64, mut f: impl FnMut(usize, &[f64])) {
        let d = self.dim;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..d {
            let l = ((x[a] - h - self.lower[a]) / self.bin).floor();
            let u = ((x[a] + h - self.lower[a]) / self.bin).floor();
            if u < 0.0 || l > (self.shape[a] - 1) as f64 {
                return;
            }
            lo[a] = l.max(0.0) as usize;
            hi[a] = (u as usize).min(self.shape[a] - 1);
        }
        let (z0, z1) = if d == 3 { (lo[2], hi[2]) } else { (0, 0) };
        for z in z0..=z1 {
            for y in lo[1]..=hi[1] {
                let row = (z * self.shape[1] + y) * self.shape[0];
                let s = self.starts[row + lo[0]];
                let e = self.starts[row + hi[0] + 1];
                for k in s..e {
                    f(self.order[k], &self.sorted[k * d..(k + 1) * d]);
                }
            }
        }
    }
}

/// Kernel density estimator over a (possibly partially excluded) sample.
#[derive(Debug, Clone)]
pub struct Kde {
    sample: Arc<SamplePoints>,
    index: Arc<BinIndex>,
    h: f64,
    kernel: KernelSpec,
    excluded: Option<Arc<Vec<bool>>>,
    n_eff: usize,
}

impl Kde {
    pub fn new(sample: SamplePoints, h: f64, kernel: KernelSpec) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::InsufficientData(
                "KDE needs at least one point".into(),
            ));
        }
        if !(h > 0.0 && h.is_finite()) {
            return invalid(format!("bandwidth must be positive and finite, got {h}"));
        }
        if kernel.dim != sample.dim() {
            return invalid("kernel and sample dimensions differ");
        }
        let index = Arc::new(BinIndex::build(&sample, h));
        let n_eff = sample.len();
        Ok(Self {
            sample: Arc::new(sample),
            index,
            h,
            kernel,
            excluded: None,
            n_eff,
        })
    }

    pub fn sample(&self) -> &SamplePoints {
        &self.sample
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Number of points that contribute to the estimate.
    pub fn n_effective(&self) -> usize {
        self.n_eff
    }

    /// The estimator over the sample with the listed (0-based) points removed.
    pub fn leave_out(&self, idx: &[usize]) -> Result<Self> {
        let n = self.sample.len();
        let mut mask = match &self.excluded {
            Some(m) => (**m).clone(),
            None => vec![false; n],
        };
        for &i in idx {
            if i >= n {
                return invalid(format!("leave-out index {i} out of range for n = {n}"));
            }
            mask[i] = true;
        }
        let n_eff = mask.iter().filter(|e| !**e).count();
        if n_eff == 0 {
            return Err(Error::InsufficientData(
                "leave-out removes every sample point".into(),
            ));
        }
        Ok(Self {
            excluded: Some(Arc::new(mask)),
            n_eff,
            ..self.clone()
        })
    }

    #[inline]
    fn is_excluded(&self, i: usize) -> bool {
        self.excluded.as_ref().is_some_and(|m| m[i])
    }

    /// Calls `f(i, u)` with the scaled offset `u = (x − X_i)/h` for every
    /// included point with `‖u‖ < 1`.
    #[inline]
    pub fn for_each_in_support(&self, x: &[f64], mut f: impl FnMut(usize, &[f64])) {
        let d = self.sample.dim();
        let inv_h = 1.0 / self.h;
        let mut u = [0.0; 3];
        self.index.for_each_near(x, self.h, |i, p| {
            let mut t = 0.0;
            for a in 0..d {
                u[a] = (x[a] - p[a]) * inv_h;
                t += u[a] * u[a];
            }
            if t < 1.0 && !self.is_excluded(i) {
                f(i, &u[..d]);
            }
        });
    }
}

impl Field for Kde {
    fn dim(&self) -> usize {
        self.sample.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        self.for_each_in_support(x, |_, u| {
            let t: f64 = u.iter().map(|v| v * v).sum();
            acc += self.kernel.profile(t).0;
        });
        acc * self.kernel.norm_const / (self.n_eff as f64 * self.h.powi(d as i32))
    }

    fn value_grad(&self, x: &[f64]) -> (f64, Vec3) {
        let d = self.dim();
        let mut v = 0.0;
        let mut g = ZERO3;
        self.for_each_in_support(x, |_, u| {
            let t: f64 = u.iter().map(|v| v * v).sum();
            let (q, dq, _) = self.kernel.profile(t);
            v += q;
            for a in 0..d {
                g[a] += 2.0 * dq * u[a];
            }
        });
        let s = self.kernel.norm_const / (self.n_eff as f64 * self.h.powi(d as i32));
        let sg = s / self.h;
        (v * s, [g[0] * sg, g[1] * sg, g[2] * sg])
    }

    fn bundle(&self, x: &[f64]) -> DerivBundle {
        let d = self.dim();
        let mut v = 0.0;
        let mut g = ZERO3;
        let mut hs = ZERO33;
        self.for_each_in_support(x, |_, u| {
            let t: f64 = u.iter().map(|v| v * v).sum();
            let (q, dq, ddq) = self.kernel.profile(t);
            v += q;
            for a in 0..d {
                g[a] += 2.0 * dq * u[a];
                for b in 0..=a {
                    hs[a][b] += 4.0 * ddq * u[a] * u[b];
                }
                hs[a][a] += 2.0 * dq;
            }
        });
        let s = self.kernel.norm_const / (self.n_eff as f64 * self.h.powi(d as i32));
        let sg = s / self.h;
        let sh = sg / self.h;
        for a in 0..d {
            g[a] *= sg;
            for b in 0..=a {
                hs[a][b] *= sh;
                hs[b][a] = hs[a][b];
            }
        }
        DerivBundle::new(d, v * s, g, hs)
    }

    fn bandwidth(&self) -> Option<f64> {
        Some(self.h)
    }

    fn sample_size(&self) -> Option<usize> {
        Some(self.n_eff)
    }

    fn default_bbox(&self) -> Vec<(f64, f64)> {
        self.sample
            .bbox()
            .into_iter()
            .map(|(lo, hi)| (lo - 3.0 * self.h, hi + 3.0 * self.h))
            .collect()
    }
}

/// Serializable description of a reference density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnalyticSpec {
    /// `N(mean, σ² I)`; `mean` defaults to the origin.
    Isotropic {
        dim: usize,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default)]
        mean: Option<Vec<f64>>,
    },
    /// Mixture of axis-aligned Gaussians.
    Mixture { components: Vec<MixtureComponent> },
    /// Product of independent 1-D Gaussians.
    Product { mean: Vec<f64>, sd: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// A Gaussian mixture with diagonal covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct Analytic {
    spec: AnalyticSpec,
    dim: usize,
    comps: Vec<Comp>,
}

#[derive(Debug, Clone, PartialEq)]
struct Comp {
    weight: f64,
    mean: Vec3,
    sd: Vec3,
    /// weight / ((2π)^{d/2} Π sd)
    scale: f64,
}

impl Analytic {
    pub fn new(spec: AnalyticSpec) -> Result<Self> {
        let raw: Vec<MixtureComponent> = match &spec {
            AnalyticSpec::Isotropic { dim, sigma, mean } => {
                let mean = mean.clone().unwrap_or_else(|| vec![0.0; *dim]);
                vec![MixtureComponent {
                    weight: 1.0,
                    sd: vec![*sigma; mean.len().max(*dim)],
                    mean,
                }]
            }
            AnalyticSpec::Mixture { components } => components.clone(),
            AnalyticSpec::Product { mean, sd } => vec![MixtureComponent {
                weight: 1.0,
                mean: mean.clone(),
                sd: sd.clone(),
            }],
        };
        let dim = raw.first().map(|c| c.mean.len()).unwrap_or(0);
        if !(2..=3).contains(&dim) {
            return invalid(format!(
                "analytic density dimension must be 2 or 3, got {dim}"
            ));
        }
        let mut comps = Vec::with_capacity(raw.len());
        for c in &raw {
            if c.mean.len() != dim || c.sd.len() != dim {
                return invalid("mixture component dimensions are inconsistent");
            }
            if !(c.weight > 0.0) || c.sd.iter().any(|s| !(*s > 0.0)) {
                return invalid("mixture weights and standard deviations must be positive");
            }
            let mut mean = ZERO3;
            let mut sd = [1.0; 3];
            mean[..dim].copy_from_slice(&c.mean);
            sd[..dim].copy_from_slice(&c.sd);
            let prod_sd: f64 = sd[..dim].iter().product();
            comps.push(Comp {
                weight: c.weight,
                mean,
                sd,
                scale: c.weight / ((2.0 * PI).powf(dim as f64 / 2.0) * prod_sd),
            });
        }
        let out = Self { spec, dim, comps };
        let mass = out.quadrature_mass();
        if (mass - 1.0).abs() > 1e-3 {
            return invalid(format!("analytic density integrates to {mass}, not 1"));
        }
        Ok(out)
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        Self::new(AnalyticSpec::Isotropic {
            dim,
            sigma: 1.0,
            mean: None,
        })
        .expect("standard Gaussian is valid")
    }

    pub fn spec(&self) -> &AnalyticSpec {
        &self.spec
    }

    /// Mass by per-component Gauss–Legendre quadrature on ±8 sd; each
    /// component is separable, so the check is a product of 1-D rules.
    fn quadrature_mass(&self) -> f64 {
        let gl = GaussLegendre::new(48);
        let d = self.dim;
        self.comps
            .iter()
            .map(|c| {
                let per_axis: f64 = (0..d)
                    .map(|a| {
                        let (m, s) = (c.mean[a], c.sd[a]);
                        gl.integrate(m - 8.0 * s, m + 8.0 * s, |x| {
                            (-0.5 * ((x - m) / s).powi(2)).exp()
                        }) / ((2.0 * PI).sqrt() * s)
                    })
                    .product();
                c.weight * per_axis
            })
            .sum()
    }

    /// Draws `n` points; reproducible for a given seed.
    pub fn sample(&self, n: usize, seed: u64) -> SamplePoints {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total: f64 = self.comps.iter().map(|c| c.weight).sum();
        let d = self.dim;
        let mut coords = Vec::with_capacity(n * d);
        for _ in 0..n {
            let mut r = rng.random::<f64>() * total;
            let mut pick = self.comps.len() - 1;
            for (k, c) in self.comps.iter().enumerate() {
                if r < c.weight {
                    pick = k;
                    break;
                }
                r -= c.weight;
            }
            let c = &self.comps[pick];
            for a in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                coords.push(c.mean[a] + c.sd[a] * z);
            }
        }
        SamplePoints { dim: d, coords }
    }
}

/// Radius of the level set `{f = c}` of the standard Gaussian in `ℝ^d`.
pub fn gaussian_level_radius(d: usize, c: f64) -> Result<f64> {
    let arg = -2.0 * (c * (2.0 * PI).powf(d as f64 / 2.0)).ln();
    if !(c > 0.0) || !(arg > 0.0) {
        return invalid(format!(
            "level {c} is not attained by the standard Gaussian"
        ));
    }
    Ok(arg.sqrt())
}

impl Field for Analytic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        self.comps
            .iter()
            .map(|c| {
                let q: f64 = (0..d).map(|a| ((x[a] - c.mean[a]) / c.sd[a]).powi(2)).sum();
                c.scale * (-0.5 * q).exp()
            })
            .sum()
    }

    fn value_grad(&self, x: &[f64]) -> (f64, Vec3) {
        let b = self.bundle(x);
        (b.value, b.grad)
    }

    fn bundle(&self, x: &[f64]) -> DerivBundle {
        let d = self.dim;
        let mut v = 0.0;
        let mut g = ZERO3;
        let mut h = ZERO33;
        for c in &self.comps {
            let mut z = ZERO3;
            let mut q = 0.0;
            for a in 0..d {
                let r = (x[a] - c.mean[a]) / c.sd[a];
                q += r * r;
                z[a] = r / c.sd[a];
            }
            let phi = c.scale * (-0.5 * q).exp();
            v += phi;
            for a in 0..d {
                g[a] -= phi * z[a];
                for b in 0..d {
                    h[a][b] += phi * z[a] * z[b];
                }
                h[a][a] -= phi / (c.sd[a] * c.sd[a]);
            }
        }
        DerivBundle::new(d, v, g, h)
    }

    fn default_bbox(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|a| {
                self.comps
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                        (
                            lo.min(c.mean[a] - 6.0 * c.sd[a]),
                            hi.max(c.mean[a] + 6.0 * c.sd[a]),
                        )
                    })
            })
            .collect()
    }
}

/// Either kind of density, for call sites that pick at run time.
#[derive(Debug, Clone)]
pub enum DensityField {
    Kde(Kde),
    Analytic(Analytic),
}

impl DensityField {
    pub fn as_kde(&self) -> Option<&Kde> {
        match self {
            DensityField::Kde(k) => Some(k),
            DensityField::Analytic(_) => None,
        }
    }

    pub fn as_analytic(&self) -> Option<&Analytic> {
        match self {
            DensityField::Analytic(a) => Some(a),
            DensityField::Kde(_) => None,
        }
    }

    pub fn leave_out_field(&self, idx: &[usize]) -> Result<Self> {
        match self {
            DensityField::Kde(k) => Ok(DensityField::Kde(k.leave_out(idx)?)),
            DensityField::Analytic(_) => invalid("leave-out requires a KDE field"),
        }
    }

    pub fn sample_from(&self, n: usize, seed: u64) -> Result<SamplePoints> {
        match self {
            DensityField::Analytic(a) => Ok(a.sample(n, seed)),
            DensityField::Kde(_) => invalid("sampling requires an analytic field"),
        }
    }
}

impl Field for DensityField {
    fn dim(&self) -> usize {
        match self {
            DensityField::Kde(k) => k.dim(),
            DensityField::Analytic(a) => a.dim(),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            DensityField::Kde(k) => k.value(x),
            DensityField::Analytic(a) => a.value(x),
        }
    }

    fn value_grad(&self, x: &[f64]) -> (f64, Vec3) {
        match self {
            DensityField::Kde(k) => k.value_grad(x),
            DensityField::Analytic(a) => a.value_grad(x),
        }
    }

    fn bundle(&self, x: &[f64]) -> DerivBundle {
        match self {
            DensityField::Kde(k) => k.bundle(x),
            DensityField::Analytic(a) => a.bundle(x),
        }
    }

    fn default_bbox(&self) -> Vec<(f64, f64)> {
        match self {
            DensityField::Kde(k) => k.default_bbox(),
            DensityField::Analytic(a) => a.default_bbox(),
        }
    }

    fn bandwidth(&self) -> Option<f64> {
        self.as_kde().map(|k| k.h)
    }

    fn sample_size(&self) -> Option<usize> {
        self.as_kde().map(|k| k.n_eff)
    }
}

impl From<Kde> for DensityField {
    fn from(k: Kde) -> Self {
        DensityField::Kde(k)
    }
}

impl From<Analytic> for DensityField {
    fn from(a: Analytic) -> Self {
        DensityField::Analytic(a)
    }
}
