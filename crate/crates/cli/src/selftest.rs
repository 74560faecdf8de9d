use std::f64::consts::PI;
use std::time::Instant;

use anyhow::{ensure, Result};

use lsi_core::density::{gaussian_level_radius, gradient_floor, AnalyticSpec};
use lsi_core::estimators::{euler_characteristic, EulerMethod};
use lsi_core::geometry::{curvature_bundle, fj_from_minors, gauss_curvature_adjugate};
use lsi_core::linalg::{mat_vec, norm, trace};
use lsi_core::{estimate, make_kernel, Analytic, EstimatorKind, Field, GridSpec, Integrand};

type Check = fn() -> Result<String>;

const CHECKS: [(&str, Check); 4] = [
    ("kernel moments", kernel_moments),
    ("shape operator identities", shape_operator),
    ("circle perimeter", circle_perimeter),
    ("gauss-bonnet snap", gauss_bonnet),
];

/// Runs every check, prints one line each, and returns the number of failures.
pub fn run() -> usize {
    let mut failures = 0;
    for (name, check) in CHECKS {
        let t0 = Instant::now();
        let outcome = check();
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.2}s]"),
            Err(e) => {
                failures += 1;
                println!("FAIL {name}: {e:#} [{secs:.2}s]");
            }
        }
    }
    failures
}

fn kernel_moments() -> Result<String> {
    let mut worst: f64 = 0.0;
    for (d, order) in [(2, 2), (2, 4), (3, 2), (3, 4)] {
        let k = make_kernel(d, order, 5)?;
        let mass = k.total_mass();
        ensure!(
            (mass - 1.0).abs() < 1e-8,
            "d={d} order={order}: mass {mass}"
        );
        for l in 1..order {
            let m = k.kernel_moment(l);
            ensure!(m < 1e-8, "d={d} order={order}: moment {l} is {m:e}");
            worst = worst.max(m);
        }
        let top = k.kernel_moment(order);
        ensure!(top > 1e-6, "d={d} order={order}: leading moment vanishes");
    }
    Ok(format!("max vanishing moment {worst:.1e}"))
}

fn shape_operator() -> Result<String> {
    let f = Analytic::new(AnalyticSpec::Product {
        mean: vec![0.0, 0.0, 0.0],
        sd: vec![1.0, 1.5, 0.8],
    })?;
    let floor = gradient_floor(0.0);
    let mut worst: f64 = 0.0;
    for x in [[0.7, -0.4, 0.3], [-1.1, 0.9, 0.5], [0.2, 1.6, -0.9]] {
        let b = f.bundle(&x);
        let cb = curvature_bundle(&b, floor)?;
        let residuals = [
            trace(&cb.shape_op, 3) - 2.0 * cb.mean,
            norm(&mat_vec(&cb.shape_op, &cb.normal, 3), 3),
            cb.gauss - gauss_curvature_adjugate(&b, floor)?,
            cb.gauss - cb.principal()[0] * cb.principal()[1],
        ];
        let minors = fj_from_minors(&cb.shape_op, 3);
        let scale = 1.0 + cb.mean.abs() + cb.gauss.abs();
        for r in residuals
            .iter()
            .copied()
            .chain(minors.iter().zip(cb.fj()).map(|(a, b)| a - b))
        {
            worst = worst.max(r.abs() / scale);
        }
    }
    ensure!(worst < 1e-9, "largest relative residual {worst:e}");
    Ok(format!("largest relative residual {worst:.1e}"))
}

fn circle_perimeter() -> Result<String> {
    let c = 0.05;
    let f = Analytic::standard_gaussian(2);
    let grid = GridSpec::auto(&f, Some(512))?;
    let got = estimate(
        &f,
        &Integrand::constant(1.0),
        c,
        EstimatorKind::Plugin,
        &grid,
    )?
    .value;
    let want = 2.0 * PI * gaussian_level_radius(2, c)?;
    let rel = (got - want).abs() / want;
    ensure!(rel < 3e-3, "perimeter {got} vs {want} (rel {rel:e})");
    Ok(format!("{got:.5} vs {want:.5}, rel {rel:.1e}"))
}

fn gauss_bonnet() -> Result<String> {
    let f = Analytic::standard_gaussian(3);
    let grid = GridSpec::auto(&f, Some(96))?;
    let rep = euler_characteristic(&f, 0.01, EulerMethod::PluginGb, &grid)?;
    ensure!(
        rep.snapped == 2 && rep.quality < 0.1,
        "raw {} snapped {}",
        rep.raw,
        rep.snapped
    );
    Ok(format!("raw {:.4} snaps to {}", rep.raw, rep.snapped))
}
