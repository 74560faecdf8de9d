//! Integrands `g` for surface integrals: known functions or plug-in
//! compositions of density derivatives.

use std::fmt;
use std::sync::Arc;

use crate::density::{DerivBundle, Field};
use crate::error::{Error, Result};
use crate::linalg::{Vec3, ZERO3};
use crate::phi::PhiExpr;

type KnownFn = dyn Fn(&[f64]) -> (f64, Vec3) + Send + Sync;

#[derive(Clone)]
pub enum Integrand {
    /// A known function returning its value and gradient.
    Known { label: String, f: Arc<KnownFn> },
    /// `φ(d_F(x))` evaluated on the field's derivative bundle.
    Phi(PhiExpr),
}

impl fmt::Debug for Integrand {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Integrand::Known { label, .. } => write!(fm, "Known({label})"),
            Integrand::Phi(e) => write!(fm, "Phi({e:?})"),
        }
    }
}

impl Integrand {
    pub fn constant(v: f64) -> Self {
        Integrand::Known {
            label: format!("const({v})"),
            f: Arc::new(move |_| (v, ZERO3)),
        }
    }

    pub fn known(
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> (f64, Vec3) + Send + Sync + 'static,
    ) -> Self {
        Integrand::Known {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    /// Builds from an expression; field-independent expressions become constants.
    pub fn phi(e: PhiExpr) -> Self {
        match e.as_constant() {
            Some(v) => Integrand::constant(v),
            None => Integrand::Phi(e),
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Integrand, b: f64) -> Result<Integrand> {
        match (self, other) {
            (Integrand::Known { f: f1, label: l1 }, Integrand::Known { f: f2, label: l2 }) => {
                let (f1, f2) = (f1.clone(), f2.clone());
                Ok(Integrand::known(format!("{a}*{l1}+{b}*{l2}"), move |x| {
                    let (v1, g1) = f1(x);
                    let (v2, g2) = f2(x);
                    let mut g = ZERO3;
                    for i in 0..3 {
                        g[i] = a * g1[i] + b * g2[i];
                    }
                    (a * v1 + b * v2, g)
                }))
            }
            (Integrand::Phi(e1), Integrand::Phi(e2)) => Ok(Integrand::Phi(PhiExpr::Sum {
                terms: vec![
                    PhiExpr::Prod {
                        factors: vec![PhiExpr::Const { value: a }, e1.clone()],
                    },
                    PhiExpr::Prod {
                        factors: vec![PhiExpr::Const { value: b }, e2.clone()],
                    },
                ],
            })),
            _ => Err(Error::InvalidArgument(
                "cannot combine a known integrand with a plug-in expression".into(),
            )),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Integrand::Known { label, .. } => label.clone(),
            Integrand::Phi(e) => serde_json::to_string(e).unwrap_or_default(),
        }
    }

    pub fn needs_bundle(&self) -> bool {
        matches!(self, Integrand::Phi(_))
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            Integrand::Known { .. } => Ok(()),
            Integrand::Phi(e) => e.validate(d),
        }
    }

    /// Value at `x`; plug-in expressions read `b`, which must be the field's
    /// bundle at `x`.
    #[inline]
    pub fn eval(&self, x: &[f64], b: Option<&DerivBundle>, floor: f64) -> Result<f64> {
        match self {
            Integrand::Known { f, .. } => Ok(f(x).0),
            Integrand::Phi(e) => {
                let b = b.ok_or_else(|| {
                    Error::InvalidArgument("plug-in integrand evaluated without a bundle".into())
                })?;
                e.eval(b, floor)
            }
        }
    }

    /// Value and spatial gradient. Plug-in expressions are differentiated by
    /// central differences of `x ↦ φ(d_F(x))` with the given step.
    pub fn value_grad<F: Field + ?Sized>(
        &self,
        field: &F,
        x: &[f64],
        b: &DerivBundle,
        step: f64,
        floor: f64,
    ) -> Result<(f64, Vec3)> {
        match self {
            Integrand::Known { f, .. } => Ok(f(x)),
            Integrand::Phi(e) => {
                let v = e.eval(b, floor)?;
                let d = field.dim();
                let mut g = ZERO3;
                let mut p = x.to_vec();
                for a in 0..d {
                    p[a] = x[a] + step;
                    let up = e.eval(&field.bundle(&p), floor)?;
                    p[a] = x[a] - step;
                    let dn = e.eval(&field.bundle(&p), floor)?;
                    p[a] = x[a];
                    g[a] = (up - dn) / (2.0 * step);
                }
                Ok((v, g))
            }
        }
    }
}
