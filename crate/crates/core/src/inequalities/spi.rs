//! Growth of the super-Poincaré function `β_q(ε)`: the upper-bound curve
//! built from measured constants, and the lower-bound probe with bumps
//! pushed out along the second layer.

use serde::{Deserialize, Serialize};

use super::{linear_fit, Family, TestFunction};
use crate::calculus::cc_sandwich;
use crate::error::{invalid, LabError, Result};
use crate::geometry::{Point, Space, SpaceKind};
use crate::measures::{quadrature_z, MeasureSpec};
use crate::quadrature::{integrate_box, Tolerance, MAX_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub t: f64,
    pub radius: f64,
    pub epsilon: f64,
    /// `∫φ² e^{-(N^p - t^p)} dξ`.
    pub a_hat: f64,
    /// `∫|∇φ|² e^{-(N^p - t^p)} dξ`.
    pub g_hat: f64,
    /// `∫|φ| e^{-(N^p - t^p)} dξ`.
    pub b_hat: f64,
    /// `ln(Â / r^Q)`, bounded below when the mass bound holds.
    pub log_mass_over_volume: f64,
    /// `r² Ĝ / Â`, bounded above when `|∇φ| ≲ 1/r`.
    pub gradient_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    /// `ln β(ε)`; `β` itself overflows for the larger probe parameters.
    pub log_betas: Vec<f64>,
    /// Exponent `σ` in `β(ε) = exp(C ε^{-σ})`.
    pub fitted_sigma: f64,
    /// Slope of `ln ln β` against `ln(1/ε)` with nothing subtracted.
    pub raw_sigma: f64,
    pub fit_residual: f64,
    /// `p(α+1) / (q(p-α-1))`.
    pub target_sigma: f64,
    /// The constant `C` used (upper curve) or fitted (probe).
    pub constant: f64,
    /// `β` nondecreasing as `ε` decreases.
    pub monotone: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probe: Vec<ProbePoint>,
}

fn target_sigma(spec: &MeasureSpec, q: f64) -> f64 {
    let alpha = spec.space.alpha();
    spec.p * (alpha + 1.0) / (q * (spec.p - alpha - 1.0))
}

fn is_monotone(log_betas: &[f64]) -> bool {
    log_betas.windows(2).all(|w| w[1] >= w[0])
}

/// `max (N / upper)^p` over `cloud`, with `upper` the length of a
/// constructed horizontal path: the measured comparison constant.
pub fn sandwich_constant(space: &Space, p: f64, cloud: &[Point], path_budget: usize) -> Result<f64> {
    if cloud.is_empty() {
        return Err(LabError::EmptyCloud(0.0));
    }
    let mut c: f64 = 0.0;
    for pt in cloud {
        let (_, upper) = cc_sandwich(space, pt, path_budget)?;
        let n = space.hom_norm(pt);
        if upper > 0.0 {
            c = c.max((n / upper).powf(p));
        }
    }
    Ok(c)
}

/// `ln β(ε) = ln(1 + ε^{-Q}) + C ε^{-p/γ}` with `γ = q(p-α-1)/(α+1)`: the
/// curve obtained by taking `R = ε^{-1/γ}` in the local inequality.
pub fn constructive_beta_curve(spec: &MeasureSpec, q: f64, epsilons: &[f64], constant: f64) -> Result<GrowthFit> {
    spec.require_p_at_least_alpha_plus_one(true)?;
    if !(1.0..=2.0).contains(&q) {
        return Err(invalid("q", format!("{q} is outside [1, 2]")));
    }
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(invalid("constant", format!("{constant} must be positive")));
    }
    check_epsilons(epsilons, 2)?;
    let alpha = spec.space.alpha();
    let big_q = spec.space.homogeneous_dim();
    let gamma = q * (spec.p - alpha - 1.0) / (alpha + 1.0);
    let local: Vec<f64> = epsilons.iter().map(|e| e.powf(-big_q).ln_1p()).collect();
    let growth: Vec<f64> = epsilons.iter().map(|e| constant * e.powf(-spec.p / gamma)).collect();
    let log_betas: Vec<f64> = local.iter().zip(&growth).map(|(a, b)| a + b).collect();
    let x: Vec<f64> = epsilons.iter().map(|e| -e.ln()).collect();
    let y: Vec<f64> = log_betas.iter().zip(&local).map(|(b, l)| (b - l).ln()).collect();
    let (sigma, intercept, residual) = linear_fit(&x, &y);
    let raw_y: Vec<f64> = log_betas.iter().map(|b| b.ln()).collect();
    let (raw_sigma, _, _) = linear_fit(&x, &raw_y);
    Ok(GrowthFit {
        epsilons: epsilons.to_vec(),
        monotone: is_monotone(&log_betas),
        log_betas,
        fitted_sigma: sigma,
        raw_sigma,
        fit_residual: residual,
        target_sigma: target_sigma(spec, q),
        constant: intercept.exp(),
        probe: Vec::new(),
    })
}

fn check_epsilons(epsilons: &[f64], needed: usize) -> Result<()> {
    if epsilons.len() < needed {
        return Err(LabError::ShortGrid {
            needed,
            got: epsilons.len(),
        });
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(invalid("epsilons", format!("{e} must be positive")));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("epsilons", "must be strictly decreasing"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    /// `ε(t) = c_ε t^{-(p-2)}`.
    pub epsilon_scale: f64,
    pub rel_tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            epsilon_scale: 0.01,
            rel_tol: 1e-6,
        }
    }
}

/// Point on the last axis with `N = 1`.
fn probe_direction(space: &Space) -> Vec<f64> {
    let d = space.ambient_dim();
    let mut e = vec![0.0; d];
    e[d - 1] = 1.0;
    let n = space.hom_norm(&e);
    space.dilate(1.0 / n, &e).expect("nonzero direction")
}

/// Lower-bound probe at `q = 2`: `φ_t` is a `C¹` cubic bump of quasi-radius
/// `r = t^{1-p/(α+1)}` centred at `δ_t ξ₀`, `N(ξ₀) = 1`, on the second
/// layer. The three integrals are computed by local quadrature over the bump
/// and `σ` is the slope of `ln ln β` against `ln(1/ε)`.
pub fn spi_optimality_probe(spec: &MeasureSpec, q: f64, t_grid: &[f64], opts: &ProbeOptions) -> Result<GrowthFit> {
    let space = &spec.space;
    match space.kind() {
        SpaceKind::StepTwo { .. } if space.is_h_type() => {}
        SpaceKind::Grushin { .. } => {}
        other => {
            return Err(LabError::KindMismatch {
                op: "spi_optimality_probe",
                kind: other.name(),
            })
        }
    }
    if q != 2.0 {
        return Err(invalid("q", format!("the probe is defined at q = 2, got {q}")));
    }
    spec.require_p_at_least_alpha_plus_one(true)?;
    if t_grid.len() < 4 {
        return Err(LabError::ShortGrid {
            needed: 4,
            got: t_grid.len(),
        });
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
        return Err(invalid("t_grid", "must be positive and strictly increasing"));
    }
    let d = space.ambient_dim();
    if d > MAX_DIM {
        return Err(LabError::Quadrature(format!(
            "the probe integrates locally by quadrature; ambient dimension {d} exceeds {MAX_DIM}"
        )));
    }
    let log_z = match &spec.z {
        Some(z) => z.estimate.ln(),
        None => {
            let tol = Tolerance {
                rel: opts.rel_tol,
                ..Tolerance::default()
            };
            quadrature_z(spec, &tol)?.value.ln()
        }
    };
    let alpha = space.alpha();
    let p = spec.p;
    let big_q = space.homogeneous_dim();
    let xi0 = probe_direction(space);
    let mut probe = Vec::with_capacity(t_grid.len());
    let mut log_betas = Vec::with_capacity(t_grid.len());
    let mut epsilons = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let r = t.powf(1.0 - p / (alpha + 1.0));
        let epsilon = opts.epsilon_scale * t.powf(-(p - 2.0));
        let centre = space.dilate(t, &xi0)?;
        let phi = TestFunction::new(Family::PhiProbe {
            t,
            center: centre.clone(),
            radius: r,
        });
        let upper = spec.coordinate_extent(r);
        let lower: Vec<f64> = upper.iter().map(|u| -u).collect();
        let tp = t.powf(p);
        let tol = Tolerance {
            abs: 0.0,
            rel: opts.rel_tol,
            ..Tolerance::default()
        };
        let res = integrate_box(
            |h| {
                if space.hom_norm(h) >= r {
                    return vec![0.0; 3];
                }
                let xi = space.translate(&centre, h);
                let w = (tp - space.hom_norm(&xi).powf(p)).exp();
                let (v, g) = phi.value_and_gradient_norm(space, &xi);
                vec![v * v * w, g * g * w, v.abs() * w]
            },
            &lower,
            &upper,
            3,
            &tol,
        )?;
        let (a_hat, g_hat, b_hat) = (res.value[0], res.value[1], res.value[2]);
        let reduced = a_hat - epsilon * g_hat;
        if reduced <= 0.0 {
            return Err(invalid(
                "epsilon_scale",
                format!("∫φ² - ε∫|∇φ|² is not positive at t = {t}; lower the ε scale"),
            ));
        }
        // β = Z e^{t^p} (Â - εĜ) / B̂² once the μ-normalisation is undone.
        log_betas.push(log_z + tp + reduced.ln() - 2.0 * b_hat.ln());
        epsilons.push(epsilon);
        probe.push(ProbePoint {
            t,
            radius: r,
            epsilon,
            a_hat,
            g_hat,
            b_hat,
            log_mass_over_volume: (a_hat / r.powf(big_q)).ln(),
            gradient_scale: r * r * g_hat / a_hat,
        });
    }
    if let Some(b) = log_betas.iter().find(|b| **b <= 0.0) {
        return Err(invalid("t_grid", format!("ln β = {b} is not positive; start the grid at larger t")));
    }
    let x: Vec<f64> = epsilons.iter().map(|e| -e.ln()).collect();
    let y: Vec<f64> = log_betas.iter().map(|b| b.ln()).collect();
    let (sigma, intercept, residual) = linear_fit(&x, &y);
    Ok(GrowthFit {
        epsilons,
        monotone: is_monotone(&log_betas),
        log_betas,
        fitted_sigma: sigma,
        raw_sigma: sigma,
        fit_residual: residual,
        target_sigma: target_sigma(spec, q),
        constant: intercept.exp(),
        probe,
    })
}
