//! Both sides of the U-bound, Hardy, Caffarelli-Kohn-Nirenberg,
//! super-Poincaré, F-Sobolev and Cheeger inequalities, evaluated on test
//! functions against `μ`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::measures::{IntegralEstimate, Integrator, JointEstimate, MeasureSpec};

mod family;
mod ratios;
mod spi;

pub use family::{cheeger_family, standard_family, tube_family, Family, RadialShape, TestFunction};
pub use ratios::{
    almost_hardy_ratio, cheeger_ratio, ckn_ratio, fsobolev_majorant, fsobolev_ratio, fsobolev_theta, hardy_ratio,
    merged_ubound_ratio, ratio_suite, spi_required_beta, spi_required_beta_from, ubound_ratio, AffineMajorant,
    RatioKind,
};
pub use spi::{constructive_beta_curve, sandwich_constant, spi_optimality_probe, GrowthFit, ProbeOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhsTerm {
    pub label: String,
    pub coefficient: f64,
    pub estimate: IntegralEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub inequality: String,
    pub function: String,
    pub lhs: IntegralEstimate,
    pub rhs_terms: Vec<RhsTerm>,
    /// The combined right-hand side the ratio divides by.
    pub rhs: f64,
    pub ratio: f64,
    /// Delta-method standard error of `ratio`.
    pub stderr: f64,
    pub q: f64,
    pub params: BTreeMap<String, f64>,
}

/// Pointwise integrands built from `f`, `|∇f|`, `|x|` and `N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Quantity {
    /// `|f|^q`
    AbsQ,
    /// `|∇f|^q`
    GradQ,
    /// `|f|^{q/2}`
    HalfQ,
    /// `|f|^q U_q`, `U_q = |x|^{qα} N^{q(p-α-1)}`
    UWeighted,
    /// `|f|^q N^{q(p-α-1)/(α+1)}`
    Merged,
    /// `|f|^q |x|^{-q}`
    Hardy,
    /// `|f|^q |x|^{qα}`
    Ckn,
    /// `|f|`
    Abs1,
    /// `|∇f|`
    Grad1,
    /// `|f| U_1`
    U1,
    /// `|f| |x|^{-(1-δ)}`
    AlmostHardy(f64),
    /// `|f| log(1 + |f|)^θ`
    Entropic(f64),
}

impl Quantity {
    fn label(&self) -> String {
        match self {
            Quantity::AbsQ => "∫|f|^q".into(),
            Quantity::GradQ => "∫|∇f|^q".into(),
            Quantity::HalfQ => "∫|f|^(q/2)".into(),
            Quantity::UWeighted => "∫|f|^q U_q".into(),
            Quantity::Merged => "∫|f|^q N^(q(p-α-1)/(α+1))".into(),
            Quantity::Hardy => "∫|f|^q |x|^-q".into(),
            Quantity::Ckn => "∫|f|^q |x|^(qα)".into(),
            Quantity::Abs1 => "∫|f|".into(),
            Quantity::Grad1 => "∫|∇f|".into(),
            Quantity::U1 => "∫|f| U_1".into(),
            Quantity::AlmostHardy(_) => "∫|f| |x|^-(1-δ)".into(),
            Quantity::Entropic(_) => "∫|f| log(1+|f|)^θ".into(),
        }
    }

    #[inline]
    fn eval(&self, q: f64, alpha: f64, p: f64, f: f64, grad: f64, x: f64, n: f64) -> f64 {
        let af = f.abs();
        match self {
            Quantity::AbsQ => af.powf(q),
            Quantity::GradQ => grad.powf(q),
            Quantity::HalfQ => af.powf(0.5 * q),
            Quantity::UWeighted => af.powf(q) * x.powf(q * alpha) * n.powf(q * (p - alpha - 1.0)),
            Quantity::Merged => af.powf(q) * n.powf(q * (p - alpha - 1.0) / (alpha + 1.0)),
            Quantity::Hardy => {
                if af == 0.0 {
                    0.0
                } else {
                    af.powf(q) / x.powf(q)
                }
            }
            Quantity::Ckn => af.powf(q) * x.powf(q * alpha),
            Quantity::Abs1 => af,
            Quantity::Grad1 => grad,
            Quantity::U1 => af * x.powf(alpha) * n.powf(p - alpha - 1.0),
            Quantity::AlmostHardy(delta) => {
                if af == 0.0 {
                    0.0
                } else {
                    af / x.powf(1.0 - delta)
                }
            }
            Quantity::Entropic(theta) => af * af.ln_1p().powf(*theta),
        }
    }
}

/// Joint estimate of several quantities for one test function.
pub(crate) fn integrate_quantities(
    spec: &MeasureSpec,
    integrator: &Integrator<'_>,
    f: &TestFunction,
    q: f64,
    quantities: &[Quantity],
) -> Result<JointEstimate> {
    let space = &spec.space;
    let alpha = space.alpha();
    let p = spec.p;
    let needs_grad = quantities.iter().any(|k| matches!(k, Quantity::GradQ | Quantity::Grad1));
    let g = |xi: &[f64], out: &mut [f64]| {
        let (fv, gn) = if needs_grad {
            f.value_and_gradient_norm(space, xi)
        } else {
            (f.evaluate(space, xi), 0.0)
        };
        let x = space.first_layer_norm(xi);
        let n = space.hom_norm(xi);
        for (o, k) in out.iter_mut().zip(quantities) {
            *o = k.eval(q, alpha, p, fv, gn, x, n);
        }
    };
    integrator
        .integrate_vector(spec, quantities.len(), &g)
        .map_err(|e| match e {
            LabError::Divergent(msg) => LabError::Divergent(format!("{}: {msg}", f.label())),
            other => other,
        })
}

/// `value` and delta-method standard error of `h(mean)` for a smooth `h`.
pub(crate) fn delta_method(est: &JointEstimate, h: &dyn Fn(&[f64]) -> f64) -> (f64, f64) {
    let value = h(&est.mean);
    let k = est.len();
    let mut grad = vec![0.0; k];
    for i in 0..k {
        let step = 1e-6 * est.mean[i].abs().max(1e-12);
        let mut up = est.mean.clone();
        let mut down = est.mean.clone();
        up[i] += step;
        down[i] -= step;
        grad[i] = (h(&up) - h(&down)) / (2.0 * step);
    }
    let se = if grad.iter().all(|g| g.is_finite()) {
        est.linear_stderr(&grad)
    } else {
        f64::INFINITY
    };
    (value, se)
}

/// Least-squares slope and RMS residual of `y` against `x`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}
