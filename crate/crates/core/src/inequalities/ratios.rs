use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{delta_method, integrate_quantities, linear_fit, Quantity, RatioReport, RhsTerm, TestFunction};
use crate::error::{invalid, LabError, Result};
use crate::measures::{IntegralEstimate, Integrator, JointEstimate, MeasureSpec};

/// Margin applied to the fitted F-Sobolev constants.
const MAJORANT_MARGIN: f64 = 1.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioKind {
    Ubound,
    MergedUbound,
    Hardy,
    Ckn,
}

impl RatioKind {
    pub fn name(&self) -> &'static str {
        match self {
            RatioKind::Ubound => "ubound",
            RatioKind::MergedUbound => "merged_ubound",
            RatioKind::Hardy => "hardy",
            RatioKind::Ckn => "ckn",
        }
    }

    fn quantities(&self) -> &'static [Quantity] {
        match self {
            RatioKind::Ubound => &[Quantity::UWeighted, Quantity::GradQ, Quantity::AbsQ],
            RatioKind::MergedUbound => &[Quantity::Merged, Quantity::GradQ, Quantity::AbsQ],
            RatioKind::Hardy => &[Quantity::Hardy, Quantity::GradQ, Quantity::AbsQ],
            RatioKind::Ckn => &[Quantity::AbsQ, Quantity::Ckn, Quantity::GradQ],
        }
    }

    fn check(&self, spec: &MeasureSpec, q: f64) -> Result<()> {
        if !q.is_finite() {
            return Err(invalid("q", "must be finite"));
        }
        match self {
            RatioKind::Ubound | RatioKind::Ckn => {
                if !(1.0..=2.0).contains(&q) {
                    return Err(invalid("q", format!("{q} is outside [1, 2]")));
                }
                spec.require_p_at_least_alpha_plus_one(false)
            }
            RatioKind::MergedUbound => {
                if !(1.0..2.0).contains(&q) {
                    return Err(invalid("q", format!("{q} is outside [1, 2)")));
                }
                spec.require_p_at_least_alpha_plus_one(true)
            }
            RatioKind::Hardy => {
                let n1 = spec.space.first_layer_dim();
                if n1 < 2 {
                    return Err(invalid("space", format!("hardy needs a first layer of dimension ≥ 2, got {n1}")));
                }
                if q == 2.0 && n1 == 2 {
                    return Err(invalid("q", "q = 2 needs a first layer of dimension > 2"));
                }
                if !(1.0..=2.0).contains(&q) {
                    return Err(invalid("q", format!("{q} is outside [1, 2)")));
                }
                Ok(())
            }
        }
    }

    /// Ratio `lhs / rhs` as a function of the component means.
    fn ratio(&self, alpha: f64, v: &[f64]) -> f64 {
        match self {
            RatioKind::Ckn => v[0] / ckn_rhs(alpha, v[1], v[2], v[0]),
            _ => v[0] / (v[1] + v[2]),
        }
    }

    fn rhs(&self, alpha: f64, v: &[f64]) -> f64 {
        match self {
            RatioKind::Ckn => ckn_rhs(alpha, v[1], v[2], v[0]),
            _ => v[1] + v[2],
        }
    }
}

fn ckn_rhs(alpha: f64, weighted: f64, grad: f64, plain: f64) -> f64 {
    weighted.powf(1.0 / (alpha + 1.0)) * (grad + plain).powf(alpha / (alpha + 1.0))
}

fn base_params(spec: &MeasureSpec) -> BTreeMap<String, f64> {
    BTreeMap::from([("p".to_string(), spec.p), ("alpha".to_string(), spec.space.alpha())])
}

/// Sub-estimate of the quantities at `idx` as its own joint estimate.
fn select(est: &JointEstimate, idx: &[usize]) -> JointEstimate {
    let k = idx.len();
    let mut cov = vec![0.0; k * k];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            cov[a * k + b] = est.cov(i, j);
        }
    }
    JointEstimate {
        mean: idx.iter().map(|&i| est.mean[i]).collect(),
        cov,
        method: est.method,
        n: est.n,
    }
}

fn finish(
    inequality: &str,
    f: &TestFunction,
    q: f64,
    est: &JointEstimate,
    labels: &[(String, f64)],
    rhs: f64,
    ratio_of: &dyn Fn(&[f64]) -> f64,
    params: BTreeMap<String, f64>,
) -> Result<RatioReport> {
    if rhs == 0.0 {
        return Err(LabError::Divergent(format!(
            "{inequality}: right-hand side of {} vanishes on the integration nodes",
            f.label()
        )));
    }
    let (ratio, stderr) = delta_method(est, ratio_of);
    Ok(RatioReport {
        inequality: inequality.to_string(),
        function: f.label(),
        lhs: est.estimate(0),
        rhs_terms: labels
            .iter()
            .enumerate()
            .map(|(i, (label, coefficient))| RhsTerm {
                label: label.clone(),
                coefficient: *coefficient,
                estimate: est.estimate(i + 1),
            })
            .collect(),
        rhs,
        ratio,
        stderr,
        q,
        params,
    })
}

fn report_for(
    kind: RatioKind,
    spec: &MeasureSpec,
    q: f64,
    f: &TestFunction,
    all: &[Quantity],
    est: &JointEstimate,
) -> Result<RatioReport> {
    let alpha = spec.space.alpha();
    let qs = kind.quantities();
    let idx: Vec<usize> = qs
        .iter()
        .map(|k| all.iter().position(|a| a == k).expect("quantity was integrated"))
        .collect();
    let sub = select(est, &idx);
    let labels: Vec<(String, f64)> = qs[1..].iter().map(|k| (k.label(), 1.0)).collect();
    let rhs = kind.rhs(alpha, &sub.mean);
    let mut params = base_params(spec);
    if kind == RatioKind::Ckn {
        params.insert("exponent_weighted".into(), 1.0 / (alpha + 1.0));
        params.insert("exponent_energy".into(), alpha / (alpha + 1.0));
    }
    finish(kind.name(), f, q, &sub, &labels, rhs, &|v| kind.ratio(alpha, v), params)
}

/// Every ratio in `kinds` for every member of `family`, member-major, each
/// member integrated once.
pub fn ratio_suite(
    spec: &MeasureSpec,
    q: f64,
    family: &[TestFunction],
    kinds: &[RatioKind],
    integrator: &Integrator<'_>,
) -> Result<Vec<RatioReport>> {
    for k in kinds {
        k.check(spec, q)?;
    }
    let mut all: Vec<Quantity> = Vec::new();
    for k in kinds {
        for qt in k.quantities() {
            if !all.contains(qt) {
                all.push(*qt);
            }
        }
    }
    let mut out = Vec::with_capacity(family.len() * kinds.len());
    for f in family {
        let est = integrate_quantities(spec, integrator, f, q, &all)?;
        for k in kinds {
            out.push(report_for(*k, spec, q, f, &all, &est)?);
        }
    }
    Ok(out)
}

fn single(kind: RatioKind, spec: &MeasureSpec, q: f64, f: &TestFunction, integrator: &Integrator<'_>) -> Result<RatioReport> {
    Ok(ratio_suite(spec, q, std::slice::from_ref(f), &[kind], integrator)?.remove(0))
}

/// `∫|f|^q |x|^{qα} N^{q(p-α-1)} dμ` against `∫|∇f|^q dμ + ∫|f|^q dμ`.
pub fn ubound_ratio(spec: &MeasureSpec, q: f64, f: &TestFunction, integrator: &Integrator<'_>) -> Result<RatioReport> {
    single(RatioKind::Ubound, spec, q, f, integrator)
}

/// `∫|f|^q N^{q(p-α-1)/(α+1)} dμ` against `∫|∇f|^q dμ + ∫|f|^q dμ`.
pub fn merged_ubound_ratio(
    spec: &MeasureSpec,
    q: f64,
    f: &TestFunction,
    integrator: &Integrator<'_>,
) -> Result<RatioReport> {
    single(RatioKind::MergedUbound, spec, q, f, integrator)
}

/// `∫|f|^q |x|^{-q} dμ` against `∫|∇f|^q dμ + ∫|f|^q dμ`.
pub fn hardy_ratio(spec: &MeasureSpec, q: f64, f: &TestFunction, integrator: &Integrator<'_>) -> Result<RatioReport> {
    single(RatioKind::Hardy, spec, q, f, integrator)
}

/// `∫|f|^q dμ` against `(∫|f|^q|x|^{qα})^{1/(α+1)} (∫|∇f|^q + ∫|f|^q)^{α/(α+1)}`.
pub fn ckn_ratio(spec: &MeasureSpec, q: f64, f: &TestFunction, integrator: &Integrator<'_>) -> Result<RatioReport> {
    single(RatioKind::Ckn, spec, q, f, integrator)
}

/// `∫|f| |x|^{-(1-δ)} dμ` against
/// `R₀^δ/δ ∫|∇f| + R₀^δ/δ ∫|f| U_1 + R₀^{-(1-δ)} ∫|f|`.
pub fn almost_hardy_ratio(
    spec: &MeasureSpec,
    delta: f64,
    r0: f64,
    f: &TestFunction,
    integrator: &Integrator<'_>,
) -> Result<RatioReport> {
    if spec.space.first_layer_dim() != 1 {
        return Err(invalid("space", "the almost Hardy inequality needs a one-dimensional first layer"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("{delta} is outside (0, 1)")));
    }
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(invalid("r0", format!("{r0} must be positive")));
    }
    let qs = [Quantity::AlmostHardy(delta), Quantity::Grad1, Quantity::U1, Quantity::Abs1];
    let est = integrate_quantities(spec, integrator, f, 1.0, &qs)?;
    let c = [r0.powf(delta) / delta, r0.powf(delta) / delta, r0.powf(-(1.0 - delta))];
    let labels: Vec<(String, f64)> = qs[1..].iter().zip(c).map(|(k, c)| (k.label(), c)).collect();
    let combine = move |v: &[f64]| c[0] * v[1] + c[1] * v[2] + c[2] * v[3];
    let rhs = combine(&est.mean);
    let mut params = base_params(spec);
    params.insert("delta".into(), delta);
    params.insert("r0".into(), r0);
    finish("almost_hardy", f, 1.0, &est, &labels, rhs, &|v| v[0] / combine(v), params)
}

/// Smallest `β` with `∫|f|^q ≤ ε∫|∇f|^q + β (∫|f|^{q/2})²`, from the three
/// integrals.
pub fn spi_required_beta_from(abs_q: f64, grad_q: f64, half_q: f64, epsilon: f64) -> Result<f64> {
    if half_q == 0.0 {
        return Err(LabError::ZeroDenominator("∫|f|^(q/2) dμ"));
    }
    Ok(((abs_q - epsilon * grad_q) / (half_q * half_q)).max(0.0))
}

/// Required `β` for `f` at each `ε` in `epsilons`, sharing one integration.
pub fn spi_required_beta(
    spec: &MeasureSpec,
    q: f64,
    f: &TestFunction,
    epsilons: &[f64],
    integrator: &Integrator<'_>,
) -> Result<Vec<f64>> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(invalid("q", format!("{q} must be at least 1")));
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0)) {
        return Err(invalid("epsilon", format!("{e} must be positive")));
    }
    let est = integrate_quantities(spec, integrator, f, q, &[Quantity::AbsQ, Quantity::GradQ, Quantity::HalfQ])?;
    epsilons
        .iter()
        .map(|&e| spi_required_beta_from(est.mean[0], est.mean[1], est.mean[2], e))
        .collect()
}

/// `θ = (p-α-1) / (p(α+1))`.
pub fn fsobolev_theta(spec: &MeasureSpec) -> f64 {
    let alpha = spec.space.alpha();
    (spec.p - alpha - 1.0) / (spec.p * (alpha + 1.0))
}

/// `∫|f| log(1+|f|)^θ dμ` against `∫|∇f| dμ + 1`, after scaling `f` to
/// `∫|f| dμ = 1`.
pub fn fsobolev_ratio(
    spec: &MeasureSpec,
    f: &TestFunction,
    theta: f64,
    integrator: &Integrator<'_>,
) -> Result<RatioReport> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid("theta", format!("{theta} must be positive")));
    }
    let mass = integrate_quantities(spec, integrator, f, 1.0, &[Quantity::Abs1])?.mean[0];
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(LabError::Divergent(format!("{} is not normalizable (∫|f| = {mass})", f.label())));
    }
    let g = f.scaled(1.0 / mass);
    let est = integrate_quantities(spec, integrator, &g, 1.0, &[Quantity::Entropic(theta), Quantity::Grad1])?;
    let mut params = base_params(spec);
    params.insert("theta".into(), theta);
    params.insert("normalization".into(), mass);
    let labels = [(Quantity::Grad1.label(), 1.0)];
    let rhs = est.mean[1] + 1.0;
    let mut report = finish("fsobolev", f, 1.0, &est, &labels, rhs, &|v| v[0] / (v[1] + 1.0), params)?;
    report.rhs_terms.push(RhsTerm {
        label: "1".into(),
        coefficient: 1.0,
        estimate: IntegralEstimate::exact(1.0),
    });
    Ok(report)
}

/// Affine majorant `lhs ≤ c₁ ∫|∇f| + c₂` over a set of F-Sobolev reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMajorant {
    pub c1: f64,
    pub c2: f64,
    /// Least-squares slope and intercept before clamping and the margin.
    pub c1_fit: f64,
    pub c2_fit: f64,
    pub members: usize,
}

impl AffineMajorant {
    pub fn is_finite(&self) -> bool {
        self.c1.is_finite() && self.c2.is_finite()
    }
}

/// Least-squares fit of lhs against `∫|∇f|`, slope clamped at zero, intercept
/// raised until every member lies below, both inflated by 10%.
pub fn fsobolev_majorant(reports: &[RatioReport]) -> Result<AffineMajorant> {
    if reports.is_empty() {
        return Err(invalid("reports", "need at least one F-Sobolev report"));
    }
    if let Some(r) = reports.iter().find(|r| r.inequality != "fsobolev") {
        return Err(invalid("reports", format!("expected fsobolev reports, got {}", r.inequality)));
    }
    let g: Vec<f64> = reports.iter().map(|r| r.rhs_terms[0].estimate.value).collect();
    let l: Vec<f64> = reports.iter().map(|r| r.lhs.value).collect();
    let (c1_fit, c2_fit) = if reports.len() >= 2 && g.iter().any(|v| (v - g[0]).abs() > 0.0) {
        let (slope, intercept, _) = linear_fit(&g, &l);
        (slope, intercept)
    } else {
        (0.0, l.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    };
    let c1 = c1_fit.max(0.0) * MAJORANT_MARGIN;
    let c2 = g
        .iter()
        .zip(&l)
        .map(|(gi, li)| li - c1 * gi)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0)
        * MAJORANT_MARGIN;
    Ok(AffineMajorant {
        c1,
        c2,
        c1_fit,
        c2_fit,
        members: reports.len(),
    })
}

/// `∫|f - m| dμ` against `∫|∇f| dμ` at the endpoint `p = α+1`.
///
/// With `m = None` the median of `f` under the samples is used; quadrature
/// needs an explicit `m`.
pub fn cheeger_ratio(
    spec: &MeasureSpec,
    f: &TestFunction,
    m: Option<f64>,
    integrator: &Integrator<'_>,
) -> Result<RatioReport> {
    let alpha = spec.space.alpha();
    if (spec.p - alpha - 1.0).abs() > 1e-12 {
        return Err(invalid("p", format!("the Cheeger ratio needs p = α+1 = {}, got {}", alpha + 1.0, spec.p)));
    }
    if f.is_constant() {
        return Err(LabError::ZeroDenominator("∫|∇f| dμ of a constant"));
    }
    let m = match (m, integrator) {
        (Some(m), _) => m,
        (None, Integrator::Mc(set)) => {
            set.check_spec(spec)?;
            let mut values: Vec<f64> = set.points().iter().map(|xi| f.evaluate(&spec.space, xi)).collect();
            values.sort_by(f64::total_cmp);
            let n = values.len();
            if n % 2 == 1 {
                values[n / 2]
            } else {
                0.5 * (values[n / 2 - 1] + values[n / 2])
            }
        }
        (None, Integrator::Quadrature(_)) => {
            return Err(invalid("m", "the median needs a sample set; pass m explicitly for quadrature"));
        }
    };
    let centred = f.shifted(-m);
    let est = integrate_quantities(spec, integrator, &centred, 1.0, &[Quantity::Abs1, Quantity::Grad1])?;
    let mut params = base_params(spec);
    params.insert("m".into(), m);
    let labels = [(Quantity::Grad1.label(), 1.0)];
    finish("cheeger", f, 1.0, &est, &labels, est.mean[1], &|v| v[0] / v[1], params)
}
