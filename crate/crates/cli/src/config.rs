use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use lsi_core::estimators::EulerMethod;
use lsi_core::{AnalyticSpec, Error, EstimatorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Plugin,
    Band,
    Tube,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `n^{-1/(d+4)}` times the mean per-axis standard deviation.
    Reference,
    /// Closed-form minimizer of the plug-in mean squared error, from a
    /// reference-bandwidth pilot.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EulerChoice {
    PluginGb,
    BandGb,
    ParallelGb,
    Combinatorial,
}

/// Axis ranges, written `lo,hi,lo,hi[,lo,hi]` on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bbox(pub Vec<[f64; 2]>);

impl FromStr for Bbox {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        if v.len() != 4 && v.len() != 6 {
            return Err("expected 4 or 6 numbers: lo,hi per axis".into());
        }
        Ok(Bbox(v.chunks(2).map(|p| [p[0], p[1]]).collect()))
    }
}

impl fmt::Display for Bbox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|[a, b]| format!("{a},{b}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Everything a single-shot run needs. Command-line flags override values
/// read from `--config`; the resolved form is echoed into every output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<AnalyticSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<Estimator>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth_rule: Option<BandwidthRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_smoothness: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_res: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Bbox>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integrand: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<EulerChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl RunConfig {
    /// Fields set in `flags` replace those in `self`.
    pub fn overlay(mut self, flags: RunConfig) -> Self {
        overlay!(self, flags; input, truth, level, estimator, eps, tau, bandwidth,
            bandwidth_rule, kernel_order, kernel_smoothness, grid_res, bbox, integrand,
            alpha, seed, method, points, out, mesh);
        self
    }

    /// Reads a run config, or the `config` block echoed inside a report.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(Error::Io)
            .with_context(|| format!("reading {}", path.display()))?;
        let mut v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if let Some(inner) = v.get_mut("config") {
            v = inner.take();
        }
        serde_json::from_value(v)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())).into())
    }

    pub fn level(&self) -> Result<f64> {
        match self.level {
            Some(c) => Ok(c),
            None => Err(Error::InvalidArgument("--level is required".into()).into()),
        }
    }

    pub fn estimator_kind(&self) -> Result<EstimatorKind> {
        let kind = match self.estimator.unwrap_or(Estimator::Plugin) {
            Estimator::Plugin => EstimatorKind::Plugin,
            Estimator::Band => EstimatorKind::Band {
                eps: self.need_eps()?,
            },
            Estimator::Tube => EstimatorKind::Tube {
                eps: self.need_eps()?,
            },
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn euler_method(&self) -> Result<EulerMethod> {
        Ok(match self.method.unwrap_or(EulerChoice::PluginGb) {
            EulerChoice::PluginGb => EulerMethod::PluginGb,
            EulerChoice::BandGb => EulerMethod::BandGb {
                eps: self.need_eps()?,
            },
            EulerChoice::ParallelGb => EulerMethod::ParallelGb {
                eps: self.need_eps()?,
            },
            EulerChoice::Combinatorial => EulerMethod::Combinatorial,
        })
    }

    fn need_eps(&self) -> Result<f64> {
        match self.eps {
            Some(e) if e > 0.0 && e.is_finite() => Ok(e),
            Some(e) => bail!(Error::InvalidArgument(format!(
                "width must be positive, got {e}"
            ))),
            None => bail!(Error::InvalidArgument("missing --eps".into())),
        }
    }
}

/// Flags shared by the single-shot subcommands; each mirrors a [`RunConfig`] field.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// JSON run config, or a previous report whose `config` block is reused.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sample file (.csv, or .ndjson with one {"x": [...]} per line).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Analytic density as inline JSON or a path to a JSON file.
    #[arg(long)]
    pub truth: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub level: Option<f64>,
    #[arg(long, value_enum)]
    pub estimator: Option<Estimator>,
    /// Band or tube half-width.
    #[arg(long, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    /// Variance tube half-width; defaults to the bandwidth.
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub bandwidth: Option<f64>,
    #[arg(long, value_enum)]
    pub bandwidth_rule: Option<BandwidthRule>,
    #[arg(long)]
    pub kernel_order: Option<usize>,
    #[arg(long)]
    pub kernel_smoothness: Option<u32>,
    #[arg(long)]
    pub grid_res: Option<usize>,
    /// `lo,hi` per axis, e.g. `-4,4,-4,4`.
    #[arg(long, allow_hyphen_values = true)]
    pub bbox: Option<Bbox>,
    /// Integrand name (unity, mean_curvature, gauss_curvature, willmore,
    /// minkowski_f<j>, wg, wg_squared) or a JSON expression tree.
    #[arg(long)]
    pub integrand: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the level mesh (OBJ in 3-D, segment CSV in 2-D).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
}

impl RunFlags {
    /// File values first, then flags on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let truth = self.truth.as_deref().map(parse_truth).transpose()?;
        Ok(base.overlay(RunConfig {
            input: self.input.clone(),
            truth,
            level: self.level,
            estimator: self.estimator,
            eps: self.eps,
            tau: self.tau,
            bandwidth: self.bandwidth,
            bandwidth_rule: self.bandwidth_rule,
            kernel_order: self.kernel_order,
            kernel_smoothness: self.kernel_smoothness,
            grid_res: self.grid_res,
            bbox: self.bbox.clone(),
            integrand: self.integrand.clone(),
            alpha: self.alpha,
            seed: self.seed,
            method: None,
            points: None,
            out: self.out.clone(),
            mesh: self.mesh.clone(),
        }))
    }
}

/// Inline JSON when the text starts with `{`, otherwise a file path.
pub fn parse_truth(s: &str) -> Result<AnalyticSpec> {
    let text = if s.trim_start().starts_with('{') {
        s.to_string()
    } else {
        fs::read_to_string(s)
            .map_err(Error::Io)
            .with_context(|| format!("reading {s}"))?
    };
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("analytic density: {e}")).into())
}
