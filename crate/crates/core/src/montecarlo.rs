//! Seeded replication studies: sampling distributions, interval coverage and
//! convergence rates of the estimators against an analytic truth.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{Analytic, AnalyticSpec, Field, Kde};
use crate::error::{Error, Result};
use crate::estimators::{confidence_interval, estimate, variance_hat, EstimatorKind};
use crate::integrand::Integrand;
use crate::io::csv_err;
use crate::kernels::{make_kernel, KernelSpec};
use crate::phi::{NamedPhi, PhiExpr};
use crate::seeds::mix_seed;
use crate::surface::GridSpec;

/// Largest tolerated fraction of failed replicates per summary row.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

/// Bandwidth as a function of the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum HRule {
    Fixed {
        h: f64,
    },
    /// `h = scale · n^{−exponent}`.
    Power {
        scale: f64,
        exponent: f64,
    },
}

impl HRule {
    pub fn bandwidth(&self, n: usize) -> f64 {
        match *self {
            HRule::Fixed { h } => h,
            HRule::Power { scale, exponent } => scale * (n as f64).powf(-exponent),
        }
    }

    /// `a` in `h ∝ n^{−a}`.
    pub fn exponent(&self) -> f64 {
        match *self {
            HRule::Fixed { .. } => 0.0,
            HRule::Power { exponent, .. } => exponent,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            HRule::Fixed { h } => h > 0.0 && h.is_finite(),
            HRule::Power { scale, exponent } => {
                scale > 0.0 && scale.is_finite() && exponent.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid bandwidth rule {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub truth: AnalyticSpec,
    pub level: f64,
    #[serde(default = "unity")]
    pub integrand: PhiExpr,
    pub estimators: Vec<EstimatorKind>,
    pub n_list: Vec<usize>,
    pub h_rule: HRule,
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Estimation grid; defaults to the truth's box at the default resolution.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Variance tube half-width; `None` uses `τ = h`.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Attach variance estimates and intervals to every replicate.
    #[serde(default = "yes")]
    pub intervals: bool,
    #[serde(default = "two")]
    pub kernel_order: usize,
    #[serde(default = "five")]
    pub kernel_smoothness: u32,
    /// Resolution multiplier of the reference quadrature; defaults to 4 in
    /// 2-D and 2 in 3-D.
    #[serde(default)]
    pub truth_factor: Option<usize>,
}

fn unity() -> PhiExpr {
    PhiExpr::named(NamedPhi::Unity)
}
fn default_alpha() -> f64 {
    0.10
}
fn yes() -> bool {
    true
}
fn two() -> usize {
    2
}
fn five() -> u32 {
    5
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be >= 1".into()));
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "n_list must be nonempty and strictly ascending".into(),
            ));
        }
        if self.n_list[0] < 2 {
            return Err(Error::InvalidArgument("sample sizes must be >= 2".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one estimator is required".into(),
            ));
        }
        for k in &self.estimators {
            k.validate()?;
        }
        if let Some(t) = self.tau {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument(format!("tau must be >= 0, got {t}")));
            }
        }
        if self.truth_factor == Some(0) {
            return Err(Error::InvalidArgument("truth_factor must be >= 1".into()));
        }
        self.h_rule.validate()
    }

    fn resolve(&self) -> Result<Setup> {
        self.validate()?;
        let field = Analytic::new(self.truth.clone())?;
        let d = field.dim();
        let integrand = Integrand::phi(self.integrand.clone());
        integrand.validate(d)?;
        let kernel = make_kernel(d, self.kernel_order, self.kernel_smoothness)?;
        let grid = match &self.grid {
            Some(g) if g.dim != d => {
                return Err(Error::InvalidArgument(
                    "grid and truth dimensions differ".into(),
                ))
            }
            Some(g) => g.clone(),
            None => GridSpec::auto(&field, None)?,
        };
        Ok(Setup {
            field,
            integrand,
            kernel,
            grid,
        })
    }
}

struct Setup {
    field: Analytic,
    integrand: Integrand,
    kernel: KernelSpec,
    grid: GridSpec,
}

/// Short label such as `plugin` or `band(0.05)`.
pub fn estimator_label(k: &EstimatorKind) -> String {
    match k.eps() {
        None => k.name().to_string(),
        Some(e) => format!("{}({e})", k.name()),
    }
}

/// Reference value of `λ(f, g)` from the analytic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub value: f64,
    /// Same quadrature at half the resolution.
    pub coarse: f64,
    /// Second-order Richardson error estimate `|fine − coarse| / 3`.
    pub richardson_error: f64,
    pub res: usize,
}

pub fn reference_value(cfg: &McConfig) -> Result<Truth> {
    let s = cfg.resolve()?;
    truth_from(cfg, &s)
}

fn truth_from(cfg: &McConfig, s: &Setup) -> Result<Truth> {
    let d = s.field.dim();
    let factor = cfg.truth_factor.unwrap_or(if d == 2 { 4 } else { 2 });
    let base = *s.grid.res.iter().max().expect("grid has axes");
    let res = base * factor;
    let fine = s.grid.with_res(res)?;
    let coarse = s.grid.with_res((res / 2).max(8))?;
    let c = cfg.level;
    let value = estimate(&s.field, &s.integrand, c, EstimatorKind::Plugin, &fine)?.value;
    let coarse = estimate(&s.field, &s.integrand, c, EstimatorKind::Plugin, &coarse)?.value;
    Ok(Truth {
        value,
        coarse,
        richardson_error: (value - coarse).abs() / 3.0,
        res,
    })
}

/// One estimator applied to one replicate sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub n: usize,
    pub estimator: String,
    pub replicate: usize,
    pub seed: u64,
    pub h: f64,
    pub value: Option<f64>,
    pub sigma2: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub covered: Option<bool>,
    pub error: Option<String>,
    #[serde(skip)]
    pub runtime_s: f64,
}

/// Aggregates over the replicates of one `(n, estimator)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub estimator: String,
    pub h: f64,
    pub replicates: usize,
    pub failures: usize,
    pub mean: f64,
    pub variance: f64,
    pub bias: f64,
    pub mean_abs_error: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    /// Mean of `σ̂/√(nh)` over replicates with an interval.
    pub mean_std_err: Option<f64>,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    #[serde(skip)]
    pub mean_runtime_s: f64,
}

/// Log-log least-squares fit of mean absolute error against `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub estimator: String,
    pub slope: f64,
    pub intercept: f64,
    /// Slope of the leading stochastic term `1/√(nh)` under the bandwidth rule.
    pub theory_slope: f64,
}

/// Rate components `1/(nh^{d+2})`, `h^ν`, `1/√(nh)` and the uniform
/// derivative rates `γ^{(k)} = √(log n / (n h^{d+2k}))` at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateComponents {
    pub n: usize,
    pub h: f64,
    pub second_order: f64,
    pub smoothing_bias: f64,
    pub stochastic: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub config: McConfig,
    pub truth: Truth,
    pub records: Vec<ReplicateRecord>,
    pub rows: Vec<SummaryRow>,
    pub rate_fits: Vec<RateFit>,
    pub theory: Vec<RateComponents>,
}

pub fn run_study(cfg: &McConfig) -> Result<McResult> {
    let s = cfg.resolve()?;
    let truth = truth_from(cfg, &s)?;
    let jobs: Vec<(usize, usize)> = cfg
        .n_list
        .iter()
        .flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r)))
        .collect();
    let records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|&(n, r)| run_replicate_with(cfg, &s, &truth, n, r))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        for k in &cfg.estimators {
            let label = estimator_label(k);
            let recs: Vec<&ReplicateRecord> = records
                .iter()
                .filter(|r| r.n == n && r.estimator == label)
                .collect();
            rows.push(summarize(
                n,
                &label,
                cfg.h_rule.bandwidth(n),
                &recs,
                truth.value,
            )?);
        }
    }
    let d = s.field.dim();
    let theory = cfg
        .n_list
        .iter()
        .map(|&n| rate_components(n, cfg.h_rule.bandwidth(n), d, cfg.kernel_order))
        .collect();
    let rate_fits = if cfg.n_list.len() >= 3 {
        fit_rates(cfg, &rows)
    } else {
        Vec::new()
    };
    Ok(McResult {
        config: cfg.clone(),
        truth,
        records,
        rows,
        rate_fits,
        theory,
    })
}

/// Records of replicate `r` at sample size `n`, one per configured estimator.
pub fn run_replicate(cfg: &McConfig, n: usize, r: usize) -> Result<Vec<ReplicateRecord>> {
    let s = cfg.resolve()?;
    let truth = truth_from(cfg, &s)?;
    Ok(run_replicate_with(cfg, &s, &truth, n, r))
}

fn run_replicate_with(
    cfg: &McConfig,
    s: &Setup,
    truth: &Truth,
    n: usize,
    r: usize,
) -> Vec<ReplicateRecord> {
    let seed = mix_seed(cfg.base_seed, r as u64);
    let h = cfg.h_rule.bandwidth(n);
    let blank = |label: String| ReplicateRecord {
        n,
        estimator: label,
        replicate: r,
        seed,
        h,
        value: None,
        sigma2: None,
        ci_lo: None,
        ci_hi: None,
        covered: None,
        error: None,
        runtime_s: 0.0,
    };
    let kde = match Kde::new(s.field.sample(n, seed), h, s.kernel.clone()) {
        Ok(k) => k,
        Err(e) => {
            return cfg
                .estimators
                .iter()
                .map(|k| ReplicateRecord {
                    error: Some(e.to_string()),
                    ..blank(estimator_label(k))
                })
                .collect()
        }
    };
    let c = cfg.level;
    let tau = cfg.tau.unwrap_or(h);
    let mut sigma2: Option<Result<f64>> = None;
    cfg.estimators
        .iter()
        .map(|k| {
            let start = Instant::now();
            let mut rec = blank(estimator_label(k));
            match estimate(&kde, &s.integrand, c, *k, &s.grid) {
                Err(e) => rec.error = Some(e.to_string()),
                Ok(rep) => {
                    rec.value = Some(rep.value);
                    if cfg.intervals {
                        let v = sigma2.get_or_insert_with(|| {
                            variance_hat(&kde, &s.integrand, c, tau, &s.grid, &s.kernel)
                        });
                        match v.as_ref().map_err(|e| e.to_string()).and_then(|&v| {
                            confidence_interval(&rep, v, cfg.alpha, h)
                                .map(|ci| (v, ci))
                                .map_err(|e| e.to_string())
                        }) {
                            Ok((v, ci)) => {
                                let (lo, hi) = ci.ci.expect("interval attached");
                                rec.sigma2 = Some(v);
                                rec.ci_lo = Some(lo);
                                rec.ci_hi = Some(hi);
                                rec.covered = Some(lo <= truth.value && truth.value <= hi);
                            }
                            Err(e) => rec.error = Some(format!("variance: {e}")),
                        }
                    }
                }
            }
            rec.runtime_s = start.elapsed().as_secs_f64();
            rec
        })
        .collect()
}

fn summarize(
    n: usize,
    label: &str,
    h: f64,
    recs: &[&ReplicateRecord],
    truth: f64,
) -> Result<SummaryRow> {
    let total = recs.len();
    let vals: Vec<f64> = recs.iter().filter_map(|r| r.value).collect();
    let failures = total - vals.len();
    if failures as f64 > MAX_FAILURE_FRACTION * total as f64 {
        let reason = recs
            .iter()
            .find_map(|r| r.error.clone())
            .unwrap_or_default();
        return Err(Error::Numerical(format!(
            "{failures} of {total} replicates failed for {label} at n = {n}; first failure: {reason}"
        )));
    }
    let m = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / m;
    let central = |p: i32| vals.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / m;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let variance = if vals.len() > 1 {
        m2 * m / (m - 1.0)
    } else {
        0.0
    };
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let mean_abs_error = vals.iter().map(|v| (v - truth).abs()).sum::<f64>() / m;
    let rmse = (vals.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / m).sqrt();
    let covered: Vec<bool> = recs.iter().filter_map(|r| r.covered).collect();
    let coverage = (!covered.is_empty())
        .then(|| covered.iter().filter(|&&b| b).count() as f64 / covered.len() as f64);
    let ses: Vec<f64> = recs
        .iter()
        .filter_map(|r| r.sigma2.map(|s2| (s2 / (n as f64 * r.h)).sqrt()))
        .collect();
    let mean_std_err = (!ses.is_empty()).then(|| ses.iter().sum::<f64>() / ses.len() as f64);
    Ok(SummaryRow {
        n,
        estimator: label.to_string(),
        h,
        replicates: total,
        failures,
        mean,
        variance,
        bias: mean - truth,
        mean_abs_error,
        rmse,
        coverage,
        mean_std_err,
        skewness,
        excess_kurtosis,
        mean_runtime_s: recs.iter().map(|r| r.runtime_s).sum::<f64>() / total as f64,
    })
}

pub fn rate_components(n: usize, h: f64, d: usize, order: usize) -> RateComponents {
    let nf = n as f64;
    let gamma = |k: i32| ((nf.ln()) / (nf * h.powi(d as i32 + 2 * k))).sqrt();
    RateComponents {
        n,
        h,
        second_order: 1.0 / (nf * h.powi(d as i32 + 2)),
        smoothing_bias: h.powi(order as i32),
        stochastic: 1.0 / (nf * h).sqrt(),
        gamma0: gamma(0),
        gamma1: gamma(1),
        gamma2: gamma(2),
    }
}

/// Slope in `n` of `1/√(nh)` when `h ∝ n^{−a}`.
pub fn stochastic_slope(rule: &HRule) -> f64 {
    -(1.0 - rule.exponent()) / 2.0
}

/// Least-squares `(slope, intercept)` of `y` on `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Slope of `log(mean error)` against `log n`. A curve that is zero at every
/// `n` has slope 0.
pub fn fit_error_curve(ns: &[usize], errs: &[f64]) -> (f64, f64) {
    if errs.iter().all(|&e| e == 0.0) {
        return (0.0, f64::NEG_INFINITY);
    }
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    fit_line(&x, &y)
}

fn fit_rates(cfg: &McConfig, rows: &[SummaryRow]) -> Vec<RateFit> {
    cfg.estimators
        .iter()
        .map(|k| {
            let label = estimator_label(k);
            let (ns, errs): (Vec<usize>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.estimator == label)
                .map(|r| (r.n, r.mean_abs_error))
                .unzip();
            let (slope, intercept) = fit_error_curve(&ns, &errs);
            RateFit {
                estimator: label,
                slope,
                intercept,
                theory_slope: stochastic_slope(&cfg.h_rule),
            }
        })
        .collect()
}

/// Fitted and theoretical slopes side by side, as CSV.
pub fn rate_report(res: &McResult) -> Result<String> {
    if res.config.n_list.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rate fits need at least 3 sample sizes, got {}",
            res.config.n_list.len()
        )));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "estimator",
        "fitted_slope",
        "intercept",
        "theory_slope",
        "difference",
    ])
    .map_err(csv_err)?;
    for f in &res.rate_fits {
        w.write_record([
            f.estimator.clone(),
            f.slope.to_string(),
            f.intercept.to_string(),
            f.theory_slope.to_string(),
            (f.slope - f.theory_slope).to_string(),
        ])
        .map_err(csv_err)?;
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Numerical(format!("csv flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    into_string(w)
}

/// Per-replicate records; deterministic for a given configuration.
pub fn study_csv(res: &McResult) -> Result<String> {
    to_csv(&res.records)
}

/// Aggregated rows; deterministic for a given configuration.
pub fn summary_csv(res: &McResult) -> Result<String> {
    to_csv(&res.rows)
}

/// Wall-clock times, kept apart from the reproducible outputs.
pub fn timing_csv(res: &McResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "estimator", "replicate", "runtime_s"])
        .map_err(csv_err)?;
    for r in &res.records {
        w.write_record([
            r.n.to_string(),
            r.estimator.clone(),
            r.replicate.to_string(),
            r.runtime_s.to_string(),
        ])
        .map_err(csv_err)?;
    }
    into_string(w)
}

/// Standardized values `(v − mean)/sd` of one summary row's replicates.
pub fn standardized(res: &McResult, row: &SummaryRow) -> Vec<f64> {
    let sd = row.variance.sqrt();
    res.records
        .iter()
        .filter(|r| r.n == row.n && r.estimator == row.estimator)
        .filter_map(|r| r.value)
        .map(|v| if sd > 0.0 { (v - row.mean) / sd } else { 0.0 })
        .collect()
}

/// Histogram of standardized values with the standard normal density overlaid.
pub fn histogram_svg(z: &[f64], title: &str) -> String {
    const W: f64 = 480.0;
    const H: f64 = 300.0;
    const PAD: f64 = 30.0;
    const BINS: usize = 24;
    const LIM: f64 = 4.0;
    let width = 2.0 * LIM / BINS as f64;
    let mut counts = [0usize; BINS];
    for &v in z {
        let b = ((v + LIM) / width).floor();
        if b >= 0.0 && (b as usize) < BINS {
            counts[b as usize] += 1;
        }
    }
    let total = z.len().max(1) as f64;
    let dens: Vec<f64> = counts.iter().map(|&k| k as f64 / (total * width)).collect();
    let peak = dens.iter().copied().fold(0.45_f64, f64::max);
    let sx = |x: f64| PAD + (x + LIM) / (2.0 * LIM) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y / peak * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    for (i, &d) in dens.iter().enumerate() {
        let x0 = sx(-LIM + i as f64 * width);
        let x1 = sx(-LIM + (i + 1) as f64 * width);
        let _ = writeln!(
            s,
            r##"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#3182bd"/>"##,
            sy(d),
            x1 - x0,
            sy(0.0) - sy(d)
        );
    }
    let pts: Vec<String> = (0..=200)
        .map(|i| {
            let x = -LIM + 2.0 * LIM * i as f64 / 200.0;
            let y = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            format!("{:.2},{:.2}", sx(x), sy(y))
        })
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#de2d26" stroke-width="2"/>"##,
        pts.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="black"/>"#,
        sy(0.0),
        W - PAD
    );
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes `study.csv`, `summary.csv`, `timing.csv`, `rates.csv` (with three
/// or more sample sizes) and optionally one histogram per summary row.
pub fn write_study(res: &McResult, dir: &Path, histograms: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put("study.csv".into(), study_csv(res)?)?;
    put("summary.csv".into(), summary_csv(res)?)?;
    put("timing.csv".into(), timing_csv(res)?)?;
    if res.config.n_list.len() >= 3 {
        put("rates.csv".into(), rate_report(res)?)?;
    }
    if histograms {
        for row in &res.rows {
            let name: String = format!("hist_n{}_{}.svg", row.n, row.estimator)
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '.' || c == '_' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            let title = format!("{} at n = {}", row.estimator, row.n);
            put(name, histogram_svg(&standardized(res, row), &title))?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_exact_power_law() {
        let ns = [100, 200, 400, 800];
        let errs: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(-0.4)).collect();
        let (slope, icpt) = fit_error_curve(&ns, &errs);
        assert!((slope + 0.4).abs() < 1e-12);
        assert!((icpt - 3.0_f64.ln()).abs() < 1e-10);
        assert_eq!(fit_error_curve(&ns, &[0.0; 4]).0, 0.0);
    }

    #[test]
    fn stochastic_slope_for_sixth_root_rule() {
        let rule = HRule::Power {
            scale: 1.0,
            exponent: 1.0 / 6.0,
        };
        assert!((stochastic_slope(&rule) + 5.0 / 12.0).abs() < 1e-15);
        assert_eq!(stochastic_slope(&HRule::Fixed { h: 0.5 }), -0.5);
    }

    #[test]
    fn histogram_is_well_formed() {
        let svg = histogram_svg(&[-1.0, 0.0, 0.2, 1.5, 9.0], "a<b");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("polyline"));
    }
}
