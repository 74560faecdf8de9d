//! Kernel plug-in estimation of surface integrals over density level sets.

pub mod density;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod integrand;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod montecarlo;
pub mod phi;
pub mod quadrature;
pub mod seeds;
pub mod surface;

pub use density::{Analytic, AnalyticSpec, DensityField, DerivBundle, Field, Kde, SamplePoints};
pub use error::{Error, Result};
pub use estimators::{estimate, EstimateReport, EstimatorKind};
pub use integrand::Integrand;
pub use kernels::{make_kernel, KernelSpec};
pub use montecarlo::{run_study, HRule, McConfig, McResult};
pub use phi::{NamedPhi, PhiExpr};
pub use surface::{GridSpec, LevelMesh};
