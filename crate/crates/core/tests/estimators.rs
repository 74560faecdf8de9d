use std::f64::consts::PI;

use lsi_core::density::{gaussian_level_radius, AnalyticSpec, MixtureComponent};
use lsi_core::estimators::{
    bandwidth_opt, confidence_interval, estimate_with, euler_characteristic, integrate_on_mesh,
    minkowski_functionals, normal_quantile, ustat_integrand_estimate, variance_hat,
    variance_hat_unknown, willmore_energy, EstimateOptions, EulerMethod, SliceEnergies, UstatSpec,
};
use lsi_core::linalg::{vech, ZERO3};
use lsi_core::surface::{extract_level_mesh, mesh_integral};
use lsi_core::{
    estimate, make_kernel, Analytic, DerivBundle, Error, EstimatorKind, Field, GridSpec, Integrand,
    Kde, NamedPhi, PhiExpr, SamplePoints,
};

const C2: f64 = 0.05;

fn square(half: f64, res: usize) -> GridSpec {
    GridSpec::cube(&[(-half, half), (-half, half)], res).unwrap()
}

fn cube(half: f64, res: usize) -> GridSpec {
    GridSpec::cube(&[(-half, half), (-half, half), (-half, half)], res).unwrap()
}

fn perimeter() -> f64 {
    2.0 * PI * gaussian_level_radius(2, C2).unwrap()
}

fn one() -> Integrand {
    Integrand::constant(1.0)
}

#[test]
fn plugin_perimeter_of_gaussian_circle() {
    let f = Analytic::standard_gaussian(2);
    let rep = estimate(&f, &one(), C2, EstimatorKind::Plugin, &square(4.0, 512)).unwrap();
    assert!((rep.value - perimeter()).abs() / perimeter() < 3e-3);
    assert_eq!(rep.n, None);
    assert!((rep.diagnostics.mesh_measure - rep.value).abs() < 1e-12);
}

#[test]
fn tube_matches_annulus_identity() {
    let f = Analytic::standard_gaussian(2);
    let r = gaussian_level_radius(2, C2).unwrap();
    let eps = 0.1;
    let annulus = (PI * (r + eps).powi(2) - PI * (r - eps).powi(2)) / (2.0 * eps);
    assert!((annulus - 2.0 * PI * r).abs() < 1e-12);
    let rep = estimate(
        &f,
        &one(),
        C2,
        EstimatorKind::Tube { eps },
        &square(4.0, 256),
    )
    .unwrap();
    assert!(
        (rep.value - annulus).abs() / annulus < 0.01,
        "{}",
        rep.value
    );
    assert!(rep.diagnostics.band_cell_count > 0);
}

#[test]
fn zero_integrand_gives_zero_for_every_kind() {
    let f = Analytic::standard_gaussian(2);
    let g = square(4.0, 128);
    let zero = Integrand::constant(0.0);
    for kind in [
        EstimatorKind::Plugin,
        EstimatorKind::Band { eps: 0.01 },
        EstimatorKind::Tube { eps: 0.1 },
    ] {
        assert_eq!(estimate(&f, &zero, C2, kind, &g).unwrap().value, 0.0);
    }
}

#[test]
fn band_equals_average_of_level_integrals() {
    let f = Analytic::standard_gaussian(2);
    let grid = square(4.0, 512);
    let eps = 0.2 * C2;
    let band = estimate(&f, &one(), C2, EstimatorKind::Band { eps }, &grid)
        .unwrap()
        .value;
    // trapezoidal average over nine levels of the plug-in integral
    let levels: Vec<f64> = (0..9)
        .map(|k| C2 - eps + 2.0 * eps * k as f64 / 8.0)
        .collect();
    let vals: Vec<f64> = levels
        .iter()
        .map(|&l| {
            estimate(&f, &one(), l, EstimatorKind::Plugin, &grid)
                .unwrap()
                .value
        })
        .collect();
    let avg = (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[8])) / 8.0;
    assert!((band - avg).abs() / avg < 0.01, "band {band} avg {avg}");
}

#[test]
fn estimators_are_linear_in_the_integrand() {
    let f = Analytic::standard_gaussian(2);
    let grid = square(4.0, 128);
    let g1 = Integrand::known("1+x^2", |x| (1.0 + x[0] * x[0], [2.0 * x[0], 0.0, 0.0]));
    let g2 = Integrand::known("y", |x| (x[1] + 0.3, [0.0, 1.0, 0.0]));
    let mix = g1.combine(2.0, &g2, -0.5).unwrap();
    for kind in [
        EstimatorKind::Plugin,
        EstimatorKind::Band { eps: 0.01 },
        EstimatorKind::Tube { eps: 0.15 },
    ] {
        let a = estimate(&f, &g1, C2, kind, &grid).unwrap().value;
        let b = estimate(&f, &g2, C2, kind, &grid).unwrap().value;
        let m = estimate(&f, &mix, C2, kind, &grid).unwrap().value;
        assert!((m - (2.0 * a - 0.5 * b)).abs() < 1e-10, "{kind:?}");
    }
    let p1 = Integrand::phi(PhiExpr::named(NamedPhi::MeanCurvature));
    let p2 = Integrand::phi(PhiExpr::InvGradNorm { power: 1 });
    let pm = p1.combine(3.0, &p2, 0.25).unwrap();
    for kind in [EstimatorKind::Plugin, EstimatorKind::Tube { eps: 0.15 }] {
        let a = estimate(&f, &p1, C2, kind, &grid).unwrap().value;
        let b = estimate(&f, &p2, C2, kind, &grid).unwrap().value;
        let m = estimate(&f, &pm, C2, kind, &grid).unwrap().value;
        assert!((m - (3.0 * a + 0.25 * b)).abs() < 1e-10 * (1.0 + m.abs()));
    }
}

#[test]
fn band_and_tube_approach_plugin_quadratically() {
    let f = Analytic::standard_gaussian(2);
    let grid = square(4.0, 1024);
    let g = Integrand::known("1+x^2/2", |x| (1.0 + 0.5 * x[0] * x[0], [x[0], 0.0, 0.0]));
    let plug = estimate(&f, &g, C2, EstimatorKind::Plugin, &grid)
        .unwrap()
        .value;
    let mut band = Vec::new();
    let mut tube = Vec::new();
    for k in 0..4 {
        let s = 0.5f64.powi(k);
        let be = estimate(&f, &g, C2, EstimatorKind::Band { eps: 0.8 * C2 * s }, &grid).unwrap();
        let te = estimate(&f, &g, C2, EstimatorKind::Tube { eps: 0.4 * s }, &grid).unwrap();
        band.push((s.ln(), (be.value - plug).abs().ln()));
        tube.push((s.ln(), (te.value - plug).abs().ln()));
    }
    assert!(slope(&band) >= 1.6, "band slope {}", slope(&band));
    assert!(slope(&tube) >= 1.6, "tube slope {}", slope(&tube));
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn band_too_thin_for_grid_is_rejected() {
    let f = Analytic::standard_gaussian(2);
    let e = estimate(
        &f,
        &one(),
        C2,
        EstimatorKind::Band { eps: 0.0 },
        &square(4.0, 64),
    );
    assert!(matches!(e, Err(Error::InvalidArgument(_))));
    let grid = square(4.0, 64);
    let opts = EstimateOptions {
        supersample: Some(1),
    };
    let e = estimate_with(
        &f,
        &one(),
        C2,
        EstimatorKind::Band { eps: 1e-9 },
        &grid,
        &opts,
    );
    assert!(matches!(e, Err(Error::EmptyRegion(_))), "{e:?}");
}

#[test]
fn variance_of_perimeter_matches_circle_formula() {
    let f = Analytic::standard_gaussian(2);
    let k = make_kernel(2, 2, 5).unwrap();
    let r = gaussian_level_radius(2, C2).unwrap();
    let grid = square(4.0, 512);
    let expect = k.roughness() * 2.0 * PI / (r.powi(3) * C2);
    let s0 = variance_hat(&f, &one(), C2, 0.0, &grid, &k).unwrap();
    assert!((s0 - expect).abs() / expect < 0.02, "{s0} vs {expect}");
    let st = variance_hat(&f, &one(), C2, 0.3, &grid, &k).unwrap();
    assert!((st - s0).abs() / s0 < 0.1, "{st} vs {s0}");
    let sp = variance_hat(
        &f,
        &Integrand::phi(PhiExpr::named(NamedPhi::Unity)),
        C2,
        0.0,
        &grid,
        &k,
    )
    .unwrap();
    assert_eq!(sp, s0);
}

#[test]
fn vanishing_weight_gives_zero_variance_and_no_interval() {
    // g = 1/|x| makes Nᵀ∇g + H g vanish on every level circle
    let f = Analytic::standard_gaussian(2);
    let k = make_kernel(2, 2, 5).unwrap();
    let g = Integrand::known("1/|x|", |x| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        (1.0 / r, [-x[0] / r.powi(3), -x[1] / r.powi(3), 0.0])
    });
    let grid = square(4.0, 256);
    let s = variance_hat(&f, &g, C2, 0.0, &grid, &k).unwrap();
    assert!(s.abs() < 1e-20, "{s}");
    let kde = Kde::new(f.sample(500, 1), 1.0, k).unwrap();
    let rep = estimate(&kde, &g, C2, EstimatorKind::Plugin, &grid).unwrap();
    assert!(confidence_interval(&rep, 0.0, 0.1, 1.0).is_err());
    let (lo, hi) = confidence_interval(&rep, s, 0.1, 1.0).unwrap().ci.unwrap();
    assert!(hi - lo < 1e-9);
}

#[test]
fn confidence_interval_properties() {
    assert!((normal_quantile(0.025) - 1.959964).abs() < 1e-6);
    let f = Analytic::standard_gaussian(2);
    let kde = Kde::new(f.sample(400, 3), 1.0, make_kernel(2, 2, 5).unwrap()).unwrap();
    let rep = estimate(&kde, &one(), C2, EstimatorKind::Plugin, &square(4.0, 128)).unwrap();
    let w = |r: &lsi_core::EstimateReport| r.ci.unwrap().1 - r.ci.unwrap().0;
    let a = confidence_interval(&rep, 2.0, 0.05, 0.5).unwrap();
    let b = confidence_interval(&rep, 2.0, 0.2, 0.5).unwrap();
    assert!(a.ci.unwrap().0 <= b.ci.unwrap().0 && a.ci.unwrap().1 >= b.ci.unwrap().1);
    let (lo, hi) = a.ci.unwrap();
    assert!(lo <= rep.value && rep.value <= hi);
    let tiny = confidence_interval(&rep, 2.0, 1.0 - 1e-12, 0.5).unwrap();
    assert!(w(&tiny) < 1e-9);
    let mut doubled = rep.clone();
    doubled.n = Some(800);
    let d = confidence_interval(&doubled, 2.0, 0.05, 0.5).unwrap();
    assert!((w(&a) / w(&d) - 2f64.sqrt()).abs() < 1e-12);
    assert!(confidence_interval(&rep, -1.0, 0.05, 0.5).is_err());
    assert!(confidence_interval(&rep, 1.0, 0.0, 0.5).is_err());
}

#[test]
fn gauss_bonnet_on_sphere() {
    let f = Analytic::standard_gaussian(3);
    let grid = GridSpec::auto(&f, None).unwrap();
    let c = 0.01;
    let p = euler_characteristic(&f, c, EulerMethod::PluginGb, &grid).unwrap();
    assert!(p.quality <= 0.15 && p.snapped == 2, "{p:?}");
    let comb = euler_characteristic(&f, c, EulerMethod::Combinatorial, &grid).unwrap();
    assert_eq!(comb.snapped, 2);
    let coarse = cube(4.0, 64);
    let b = euler_characteristic(&f, c, EulerMethod::BandGb { eps: 0.002 }, &coarse).unwrap();
    assert_eq!(b.snapped, 2, "{b:?}");
    let t = euler_characteristic(&f, c, EulerMethod::ParallelGb { eps: 0.3 }, &coarse).unwrap();
    assert!((t.raw - 2.0).abs() < 0.05, "{t:?}");
    assert!(euler_characteristic(
        &Analytic::standard_gaussian(2),
        C2,
        EulerMethod::PluginGb,
        &square(4.0, 64)
    )
    .is_err());
}

#[test]
fn gauss_bonnet_counts_two_spheres() {
    let spec = AnalyticSpec::Mixture {
        components: vec![
            MixtureComponent {
                weight: 0.5,
                mean: vec![-3.0, 0.0, 0.0],
                sd: vec![1.0; 3],
            },
            MixtureComponent {
                weight: 0.5,
                mean: vec![3.0, 0.0, 0.0],
                sd: vec![1.0; 3],
            },
        ],
    };
    let f = Analytic::new(spec).unwrap();
    let g = GridSpec::new(&[-7.0, -4.0, -4.0], &[7.0, 4.0, 4.0], &[112, 64, 64]).unwrap();
    let p = euler_characteristic(&f, 0.01, EulerMethod::PluginGb, &g).unwrap();
    let comb = euler_characteristic(&f, 0.01, EulerMethod::Combinatorial, &g).unwrap();
    assert_eq!(p.snapped, 4, "{p:?}");
    assert_eq!(comb.snapped, 4);
}

#[test]
fn willmore_energy_of_sphere_and_circle() {
    let f3 = Analytic::standard_gaussian(3);
    let w = willmore_energy(&f3, 0.01, &GridSpec::auto(&f3, None).unwrap()).unwrap();
    assert!((w - 4.0 * PI).abs() / (4.0 * PI) < 5e-3, "{w}");
    let f2 = Analytic::standard_gaussian(2);
    let r = gaussian_level_radius(2, C2).unwrap();
    let w2 = willmore_energy(&f2, C2, &square(4.0, 512)).unwrap();
    assert!((w2 - 2.0 * PI / r).abs() / (2.0 * PI / r) < 3e-3);
}

/// `(1 − |x|²)³` inside the unit disc, flat zero outside.
struct Bump;

impl Field for Bump {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.bundle(x).value
    }
    fn value_grad(&self, x: &[f64]) -> (f64, [f64; 3]) {
        let b = self.bundle(x);
        (b.value, b.grad)
    }
    fn bundle(&self, x: &[f64]) -> DerivBundle {
        let s = 1.0 - x[0] * x[0] - x[1] * x[1];
        if s <= 0.0 {
            return DerivBundle::new(2, 0.0, ZERO3, [[0.0; 3]; 3]);
        }
        let g = [-6.0 * s * s * x[0], -6.0 * s * s * x[1], 0.0];
        let mut h = [[0.0; 3]; 3];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = 24.0 * s * x[i] * x[j];
            }
            h[i][i] -= 6.0 * s * s;
        }
        DerivBundle::new(2, s * s * s, g, h)
    }
    fn default_bbox(&self) -> Vec<(f64, f64)> {
        vec![(-1.5, 1.5); 2]
    }
}

#[test]
fn willmore_on_degenerate_gradient_is_an_error() {
    let e = willmore_energy(&Bump, 1e-15, &square(1.5, 64)).unwrap_err();
    match e {
        Error::Integrand { source, .. } => {
            assert!(matches!(*source, Error::DegenerateGradient { .. }))
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn minkowski_functionals_of_disc_and_ball() {
    let f = Analytic::standard_gaussian(2);
    let grid = square(4.0, 512);
    let r = gaussian_level_radius(2, C2).unwrap();
    let v = minkowski_functionals(&f, C2, &grid).unwrap();
    assert!((v[0] - PI * r * r).abs() / (PI * r * r) < 0.01);
    let per = estimate(&f, &one(), C2, EstimatorKind::Plugin, &grid)
        .unwrap()
        .value;
    assert!((v[1] - per / 4.0).abs() < 1e-12);
    assert!((v[2] - 1.0).abs() < 1e-3);
    let f3 = Analytic::standard_gaussian(3);
    let v3 = minkowski_functionals(&f3, 0.01, &cube(4.0, 96)).unwrap();
    let r3 = gaussian_level_radius(3, 0.01).unwrap();
    assert!((v3[1] - 4.0 * PI * r3 * r3 / 6.0).abs() / v3[1] < 0.01);
    assert!((v3[2] - 4.0 * r3 / 3.0).abs() / v3[2] < 0.01);
    assert!((v3[3] - 1.0).abs() < 0.01);
}

#[test]
fn bandwidth_selection_minimizes_criterion() {
    let f = Analytic::standard_gaussian(2);
    let k = make_kernel(2, 2, 5).unwrap();
    let grid = square(4.0, 256);
    let rep = bandwidth_opt(&f, C2, &grid, &k, 1000).unwrap();
    assert!(rep.h_opt.is_finite() && rep.h_opt > 0.0);
    assert!((rep.at_n(2000) / rep.h_opt - 2f64.powf(-1.0 / 6.0)).abs() < 1e-12);
    let hs: Vec<f64> = (0..20)
        .map(|i| rep.h_opt * 4f64.powf(i as f64 / 19.0 * 2.0 - 1.0))
        .collect();
    let best = (0..20)
        .min_by(|&a, &b| rep.m2_tilde(hs[a]).total_cmp(&rep.m2_tilde(hs[b])))
        .unwrap();
    let notch = (hs[1] / hs[0]).ln();
    assert!((hs[best] / rep.h_opt).ln().abs() <= notch);
    assert!(bandwidth_opt(&f, C2, &grid, &make_kernel(2, 4, 5).unwrap(), 1000).is_err());
}

/// `∫ (∫_{plane at t} bᵀ vech ∇²K) ² dt` by midpoint sums over `t` and the
/// in-plane coordinates.
fn brute_hessian_energy(k: &lsi_core::KernelSpec, b: &[f64], n: &[f64; 3]) -> f64 {
    let d = k.dim;
    let m = if d == 2 { 1200 } else { 160 };
    let step = 2.0 / m as f64;
    // orthonormal frame completing n
    let mut e1 = if n[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let p: f64 = (0..3).map(|i| e1[i] * n[i]).sum();
    for i in 0..3 {
        e1[i] -= p * n[i];
    }
    let l = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|v| *v /= l);
    let e2 = [
        n[1] * e1[2] - n[2] * e1[1],
        n[2] * e1[0] - n[0] * e1[2],
        n[0] * e1[1] - n[1] * e1[0],
    ];
    let mut total = 0.0;
    for it in 0..m {
        let t = -1.0 + (it as f64 + 0.5) * step;
        let mut s = 0.0;
        let inner = if d == 2 { 1 } else { m };
        for ia in 0..m {
            for ib in 0..inner {
                let ya = -1.0 + (ia as f64 + 0.5) * step;
                let yb = if d == 2 {
                    0.0
                } else {
                    -1.0 + (ib as f64 + 0.5) * step
                };
                let mut u = [0.0; 3];
                for i in 0..d {
                    u[i] = t * n[i] + ya * e1[i] + yb * e2[i];
                }
                let h = k.eval_hess(&u[..d]);
                let v: f64 = vech(&h, d).iter().zip(b).map(|(x, y)| x * y).sum();
                s += v * step.powi(d as i32 - 1);
            }
        }
        total += s * s * step;
    }
    total
}

#[test]
fn slice_energies_match_brute_force() {
    let k2 = make_kernel(2, 2, 5).unwrap();
    let se = SliceEnergies::new(&k2);
    let b = [0.7, -0.4, 1.3];
    let n = [0.6, 0.8, 0.0];
    let exact = se.hessian_energy(&b, &n);
    let brute = brute_hessian_energy(&k2, &b, &n);
    assert!((exact - brute).abs() / brute < 1e-3, "{exact} vs {brute}");
    let k3 = make_kernel(3, 2, 6).unwrap();
    let se3 = SliceEnergies::new(&k3);
    let b3 = [0.5, 0.2, -0.3, -1.0, 0.4, 0.9];
    let n3 = [0.48, 0.6, 0.64];
    let exact3 = se3.hessian_energy(&b3, &n3);
    let brute3 = brute_hessian_energy(&k3, &b3, &n3);
    assert!(
        (exact3 - brute3).abs() / brute3 < 5e-3,
        "{exact3} vs {brute3}"
    );
}

#[test]
fn unknown_integrand_variance() {
    let f = Analytic::standard_gaussian(2);
    let k = make_kernel(2, 2, 5).unwrap();
    let grid = square(4.0, 256);
    let grad_only = PhiExpr::InvGradNorm { power: 1 };
    assert_eq!(
        variance_hat_unknown(&f, &grad_only, C2, &grid, &k, 2).unwrap(),
        0.0
    );
    assert!(variance_hat_unknown(&f, &grad_only, C2, &grid, &k, 1).unwrap() > 0.0);
    let konst = PhiExpr::Const { value: 2.0 };
    assert!(matches!(
        variance_hat_unknown(&f, &konst, C2, &grid, &k, 1),
        Err(Error::MalformedExpr(_))
    ));
    let w = PhiExpr::named(NamedPhi::Wg { g: 1.0 });
    let via_phi = variance_hat_unknown(&f, &w, C2, &grid, &k, 0).unwrap();
    let via_known = variance_hat(&f, &one(), C2, 0.0, &grid, &k).unwrap();
    assert!((via_phi - via_known).abs() / via_known < 0.05);
    // tangential second derivatives integrate to zero over every slice
    let willmore = PhiExpr::named(NamedPhi::Willmore);
    let tangential = variance_hat_unknown(&f, &willmore, C2, &grid, &k, 2).unwrap();
    let fxx = PhiExpr::Hess { i: 0, j: 0 };
    let normal = variance_hat_unknown(&f, &fxx, C2, &grid, &k, 2).unwrap();
    assert!(normal > 0.0);
    assert!(tangential.abs() < 1e-8 * normal);
}

#[test]
fn ustat_is_plugin_without_diagonal_terms() {
    // with constant leading factor, n(n−1)·U = n²·V − Σᵢ K_h''(x − Xᵢ)² pointwise
    let f = Analytic::standard_gaussian(2);
    let n = 1000;
    let h = 1.5;
    let kde = Kde::new(f.sample(n, 5), h, make_kernel(2, 2, 5).unwrap()).unwrap();
    let grid = square(4.0, 128);
    let spec = UstatSpec::new(PhiExpr::Const { value: 1.0 }, [(0, 0), (0, 1)]);
    let u = ustat_integrand_estimate(&kde, &spec, &f, C2, &grid).unwrap();
    let mesh = extract_level_mesh(&f, C2, &grid).unwrap();
    let prod = Integrand::phi(PhiExpr::Prod {
        factors: vec![PhiExpr::Hess { i: 0, j: 0 }, PhiExpr::Hess { i: 0, j: 1 }],
    });
    let v = integrate_on_mesh(&kde, &mesh, &prod, C2).unwrap();
    let s2 = h.powi(-4);
    let diag = mesh_integral(&mesh, |_, x, _| {
        let mut acc = 0.0;
        kde.for_each_in_support(x, |_, w| {
            let hs = kde.kernel().eval_hess(w);
            acc += s2 * hs[0][0] * s2 * hs[0][1];
        });
        Ok(acc)
    })
    .unwrap();
    let nf = n as f64;
    let expect = (nf * nf * v - diag) / (nf * (nf - 1.0));
    assert!(
        (u - expect).abs() <= 1e-9 * (v.abs() + diag.abs() / nf),
        "{u} vs {expect}"
    );
    assert_eq!(
        u,
        ustat_integrand_estimate(&kde, &spec, &f, C2, &grid).unwrap()
    );
}

#[test]
fn ustat_pair_subsample_tracks_full_average() {
    let f = Analytic::standard_gaussian(2);
    let kde = Kde::new(f.sample(1000, 5), 1.5, make_kernel(2, 2, 5).unwrap()).unwrap();
    let grid = square(4.0, 128);
    let mut spec = UstatSpec::new(PhiExpr::InvGradNorm { power: 1 }, [(0, 0), (0, 0)]);
    let sub = ustat_integrand_estimate(&kde, &spec, &f, C2, &grid).unwrap();
    spec.max_pairs = usize::MAX;
    let full = ustat_integrand_estimate(&kde, &spec, &f, C2, &grid).unwrap();
    assert!((sub - full).abs() / full < 0.05, "{sub} vs {full}");
}

#[test]
fn ustat_ignores_points_outside_the_support() {
    let f = Analytic::standard_gaussian(2);
    let far =
        SamplePoints::from_rows(&[vec![20.0, 20.0], vec![21.0, 20.0], vec![20.0, 21.0]]).unwrap();
    let kde = Kde::new(far, 0.5, make_kernel(2, 2, 5).unwrap()).unwrap();
    let spec = UstatSpec::new(PhiExpr::Const { value: 1.0 }, [(0, 1), (1, 1)]);
    let u = ustat_integrand_estimate(&kde, &spec, &f, C2, &square(4.0, 64)).unwrap();
    assert_eq!(u, 0.0);
    let two = SamplePoints::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let small = Kde::new(two, 0.5, make_kernel(2, 2, 5).unwrap()).unwrap();
    assert!(matches!(
        ustat_integrand_estimate(&small, &spec, &f, C2, &square(4.0, 64)),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn ustat_has_smaller_bias_than_plugin() {
    let f = Analytic::standard_gaussian(2);
    let grid = square(4.0, 96);
    let k = make_kernel(2, 2, 5).unwrap();
    let mesh = extract_level_mesh(&f, C2, &grid).unwrap();
    let sq = Integrand::phi(PhiExpr::Prod {
        factors: vec![PhiExpr::Hess { i: 0, j: 0 }, PhiExpr::Hess { i: 0, j: 0 }],
    });
    let truth = integrate_on_mesh(&f, &mesh, &sq, C2).unwrap();
    let spec = UstatSpec::new(PhiExpr::Const { value: 1.0 }, [(0, 0), (0, 0)]);
    let (mut u_sum, mut p_sum) = (0.0, 0.0);
    let reps = 50;
    for r in 0..reps {
        let kde = Kde::new(f.sample(500, 100 + r), 0.5, k.clone()).unwrap();
        u_sum += ustat_integrand_estimate(&kde, &spec, &f, C2, &grid).unwrap();
        p_sum += integrate_on_mesh(&kde, &mesh, &sq, C2).unwrap();
    }
    let u_bias = (u_sum / reps as f64 - truth).abs();
    let p_bias = (p_sum / reps as f64 - truth).abs();
    assert!(u_bias < p_bias, "ustat bias {u_bias} plugin bias {p_bias}");
}
