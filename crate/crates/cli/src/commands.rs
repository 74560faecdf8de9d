use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::warn;
use serde::Serialize;
use serde_json::{json, Map, Value};

use lsi_core::density::{default_bandwidth, gradient_floor};
use lsi_core::estimators::{
    bandwidth_opt, confidence_interval, default_band_eps, default_tube_eps, euler_characteristic,
    minkowski_functionals, variance_hat, variance_hat_unknown, willmore_energy,
};
use lsi_core::geometry::curvature_bundle;
use lsi_core::io::{read_samples, write_csv, write_mesh_file, write_samples, SampleFormat};
use lsi_core::montecarlo::{reference_value, write_study};
use lsi_core::surface::{extract_level_mesh, DEFAULT_RES_2D, DEFAULT_RES_3D};
use lsi_core::{
    estimate, make_kernel, run_study, Analytic, DensityField, Error, Field, GridSpec, Integrand,
    Kde, KernelSpec, McConfig, PhiExpr,
};

use crate::config::{BandwidthRule, Bbox, Estimator, RunConfig};

const DEFAULT_ALPHA: f64 = 0.10;

pub struct Setup {
    pub field: DensityField,
    pub kernel: Option<KernelSpec>,
    pub grid: GridSpec,
}

impl Setup {
    fn kde(&self) -> Option<&Kde> {
        self.field.as_kde()
    }
}

/// Builds the field and grid, writing every defaulted choice back into `cfg`.
pub fn setup(cfg: &mut RunConfig) -> Result<Setup> {
    let (field, kernel) = match (&cfg.input, &cfg.truth) {
        (Some(path), None) => {
            let sample =
                read_samples(path).with_context(|| format!("reading {}", path.display()))?;
            let d = sample.dim();
            let order = *cfg.kernel_order.get_or_insert(2);
            let smooth = *cfg.kernel_smoothness.get_or_insert(5);
            let kernel = make_kernel(d, order, smooth)?;
            let h = match cfg.bandwidth {
                Some(h) => h,
                None => {
                    let rule = *cfg.bandwidth_rule.get_or_insert(BandwidthRule::Reference);
                    let h0 = default_bandwidth(&sample);
                    match rule {
                        BandwidthRule::Reference => h0,
                        BandwidthRule::Optimal => {
                            let n = sample.len();
                            let pilot = Kde::new(sample.clone(), h0, kernel.clone())?;
                            let grid = make_grid(cfg, &pilot)?;
                            bandwidth_opt(&pilot, cfg.level()?, &grid, &kernel, n)?.h_opt
                        }
                    }
                }
            };
            cfg.bandwidth = Some(h);
            let kde = Kde::new(sample, h, kernel.clone())?;
            (DensityField::Kde(kde), Some(kernel))
        }
        (None, Some(spec)) => (DensityField::Analytic(Analytic::new(spec.clone())?), None),
        (Some(_), Some(_)) => {
            return Err(
                Error::InvalidArgument("give either --input or --truth, not both".into()).into(),
            )
        }
        (None, None) => {
            return Err(
                Error::InvalidArgument("one of --input or --truth is required".into()).into(),
            )
        }
    };
    let grid = make_grid(cfg, &field)?;
    cfg.bbox = Some(Bbox(
        grid.lower
            .iter()
            .zip(&grid.upper)
            .map(|(a, b)| [*a, *b])
            .collect(),
    ));
    cfg.grid_res = Some(grid.res[0]);
    Ok(Setup {
        field,
        kernel,
        grid,
    })
}

fn make_grid<F: Field + ?Sized>(cfg: &RunConfig, f: &F) -> Result<GridSpec> {
    let d = f.dim();
    let res = cfg.grid_res.unwrap_or(if d == 2 {
        DEFAULT_RES_2D
    } else {
        DEFAULT_RES_3D
    });
    let bbox: Vec<(f64, f64)> = match &cfg.bbox {
        Some(b) if b.0.len() != d => {
            return Err(Error::InvalidArgument(format!(
                "bbox has {} axes but the field has {d}",
                b.0.len()
            ))
            .into())
        }
        Some(b) => b.0.iter().map(|[a, b]| (*a, *b)).collect(),
        None => f.default_bbox(),
    };
    Ok(GridSpec::cube(&bbox, res)?)
}

fn integrand(cfg: &mut RunConfig) -> Result<PhiExpr> {
    let text = cfg.integrand.get_or_insert_with(|| "unity".into());
    Ok(PhiExpr::parse(text)?)
}

pub fn cmd_estimate(mut cfg: RunConfig) -> Result<()> {
    let c = cfg.level()?;
    let expr = integrand(&mut cfg)?;
    let s = setup(&mut cfg)?;
    let d = s.field.dim();
    let g = Integrand::phi(expr.clone());
    g.validate(d)?;
    let choice = *cfg.estimator.get_or_insert(Estimator::Plugin);
    if choice != Estimator::Plugin && cfg.eps.is_none() {
        cfg.eps = Some(match choice {
            Estimator::Band => {
                default_band_eps(&s.field, &extract_level_mesh(&s.field, c, &s.grid)?)
            }
            _ => default_tube_eps(&s.grid),
        });
    }
    let kind = cfg.estimator_kind()?;
    let mut rep = estimate(&s.field, &g, c, kind, &s.grid)?;
    let mut extra = Map::new();
    if let (Some(kde), Some(kernel)) = (s.kde(), &s.kernel) {
        let alpha = *cfg.alpha.get_or_insert(DEFAULT_ALPHA);
        let h = kde.bandwidth();
        let (sigma2, scale, order) = if expr.uses_derivatives() {
            unknown_variance(&s, &expr, c, kernel, h)?
        } else {
            let tau = *cfg.tau.get_or_insert(h);
            let s2 = variance_hat(&s.field, &g, c, tau, &s.grid, kernel)?;
            (s2, h, 0)
        };
        extra.insert("sigma2".into(), json!(sigma2));
        extra.insert("variance_order".into(), json!(order));
        if sigma2 > 0.0 {
            rep = confidence_interval(&rep, sigma2, alpha, scale)?;
        } else {
            warn!("variance estimate is zero; no interval attached");
        }
    }
    if let Some(path) = &cfg.mesh {
        write_mesh_file(path, &extract_level_mesh(&s.field, c, &s.grid)?)?;
    }
    let mut out = to_object(&rep)?;
    out.extend(extra);
    emit_json(&cfg, out)
}

/// Variance of a density-derivative integrand at the highest derivative order
/// with a nonzero slice energy; the interval then scales with `√(n h^{1+2l})`.
fn unknown_variance(
    s: &Setup,
    expr: &PhiExpr,
    c: f64,
    kernel: &KernelSpec,
    h: f64,
) -> Result<(f64, f64, usize)> {
    let top = if expr.uses_hessian() { 2 } else { 1 };
    for l in (1..=top).rev() {
        let s2 = variance_hat_unknown(&s.field, expr, c, &s.grid, kernel, l)?;
        if s2 > 0.0 {
            return Ok((s2, h.powi(1 + 2 * l as i32), l));
        }
    }
    Ok((0.0, h, 0))
}

pub fn cmd_curvature(mut cfg: RunConfig) -> Result<()> {
    let points_path = cfg
        .points
        .clone()
        .ok_or_else(|| Error::InvalidArgument("--points is required".into()))?;
    let points =
        read_samples(&points_path).with_context(|| format!("reading {}", points_path.display()))?;
    let s = setup(&mut cfg)?;
    let d = s.field.dim();
    if points.dim() != d {
        return Err(Error::InvalidArgument(format!(
            "points have dimension {} but the field has {d}",
            points.dim()
        ))
        .into());
    }
    let floor = gradient_floor(cfg.level.unwrap_or(0.0));
    let mut buf = config_comment(&cfg)?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
        header.extend(["value".into(), "grad_norm".into()]);
        header.extend((1..d).map(|i| format!("k{i}")));
        header.extend(["mean".into(), "gauss".into()]);
        header.extend((1..=d).map(|j| format!("f{j}")));
        header.push("status".into());
        w.write_record(&header)?;
        let width = header.len() - d - 3;
        for x in points.iter() {
            let b = s.field.bundle(x);
            let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
            row.push(b.value.to_string());
            row.push(b.grad_norm.to_string());
            match curvature_bundle(&b, floor) {
                Ok(cb) => {
                    row.extend(cb.principal().iter().map(f64::to_string));
                    row.push(cb.mean.to_string());
                    row.push(cb.gauss.to_string());
                    row.extend(cb.fj().iter().map(f64::to_string));
                    row.push("ok".into());
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n("NaN".to_string(), width));
                    row.push(e.to_string());
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    emit_bytes(cfg.out.as_deref(), &buf)
}

pub fn cmd_euler(mut cfg: RunConfig) -> Result<()> {
    let c = cfg.level()?;
    let method = cfg.euler_method()?;
    cfg.method
        .get_or_insert(crate::config::EulerChoice::PluginGb);
    let s = setup(&mut cfg)?;
    let rep = euler_characteristic(&s.field, c, method, &s.grid)?;
    if let Some(path) = &cfg.mesh {
        write_mesh_file(path, &extract_level_mesh(&s.field, c, &s.grid)?)?;
    }
    emit_json(&cfg, to_object(&rep)?)
}

pub fn cmd_minkowski(mut cfg: RunConfig) -> Result<()> {
    let c = cfg.level()?;
    let s = setup(&mut cfg)?;
    let v = minkowski_functionals(&s.field, c, &s.grid)?;
    let willmore = willmore_energy(&s.field, c, &s.grid)?;
    if let Some(path) = &cfg.mesh {
        write_mesh_file(path, &extract_level_mesh(&s.field, c, &s.grid)?)?;
    }
    let mut out = Map::new();
    out.insert("level".into(), json!(c));
    out.insert("dim".into(), json!(s.field.dim()));
    out.insert("minkowski".into(), json!(v));
    out.insert("willmore".into(), json!(willmore));
    emit_json(&cfg, out)
}

pub fn cmd_sample(mut cfg: RunConfig, n: usize) -> Result<()> {
    let spec = cfg
        .truth
        .clone()
        .ok_or_else(|| Error::InvalidArgument("--truth is required".into()))?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::InvalidArgument("--out is required".into()))?;
    let seed = *cfg.seed.get_or_insert(0);
    let sample = Analytic::new(spec)?.sample(n, seed);
    match SampleFormat::from_path(&out) {
        SampleFormat::Csv => {
            let mut buf = config_comment(&cfg)?;
            write_csv(&mut buf, &sample)?;
            emit_bytes(Some(&out), &buf)
        }
        SampleFormat::Ndjson => Ok(write_samples(&out, &sample)?),
    }
}

pub struct SimulateArgs {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub replicates: Option<usize>,
    pub base_seed: Option<u64>,
    pub histograms: bool,
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .map_err(Error::Io)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg: McConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", args.config.display())))?;
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = args.base_seed {
        cfg.base_seed = s;
    }
    cfg.validate()?;
    fs::create_dir_all(&args.out_dir).map_err(Error::Io)?;
    let truth = reference_value(&cfg)?;
    let res = run_study(&cfg)?;
    write_study(&res, &args.out_dir, args.histograms)?;
    let echo = json!({ "config": cfg, "truth": truth });
    fs::write(
        args.out_dir.join("config.json"),
        serde_json::to_string_pretty(&echo)? + "\n",
    )
    .map_err(Error::Io)?;
    let mut stdout = io::stdout().lock();
    writeln!(
        stdout,
        "truth {:.6} (richardson error {:.2e})",
        truth.value, truth.richardson_error
    )?;
    writeln!(
        stdout,
        "{:>7} {:<14} {:>10} {:>10} {:>10} {:>8}",
        "n", "estimator", "mean", "bias", "rmse", "coverage"
    )?;
    for row in &res.rows {
        let cov = row.coverage.map_or("-".to_string(), |c| format!("{c:.3}"));
        writeln!(
            stdout,
            "{:>7} {:<14} {:>10.5} {:>10.5} {:>10.5} {:>8}",
            row.n, row.estimator, row.mean, row.bias, row.rmse, cov
        )?;
    }
    for fit in &res.rate_fits {
        writeln!(
            stdout,
            "rate {}: slope {:.3} (theory {:.3})",
            fit.estimator, fit.slope, fit.theory_slope
        )?;
    }
    Ok(())
}

fn to_object<T: Serialize>(v: &T) -> Result<Map<String, Value>> {
    match serde_json::to_value(v)? {
        Value::Object(m) => Ok(m),
        other => Ok(Map::from_iter([("value".to_string(), other)])),
    }
}

/// Writes `{"config": …, …fields}` to `--out` or stdout.
fn emit_json(cfg: &RunConfig, fields: Map<String, Value>) -> Result<()> {
    let mut out = Map::new();
    out.insert("config".into(), serde_json::to_value(cfg)?);
    out.extend(fields);
    let text = serde_json::to_string_pretty(&Value::Object(out))? + "\n";
    emit_bytes(cfg.out.as_deref(), text.as_bytes())
}

fn config_comment(cfg: &RunConfig) -> Result<Vec<u8>> {
    Ok(format!("# config: {}\n", serde_json::to_string(cfg)?).into_bytes())
}

fn emit_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes)
            .map_err(Error::Io)
            .with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}
