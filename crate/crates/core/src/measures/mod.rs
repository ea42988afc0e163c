//! The measures `dμ = Z^{-1} e^{-N^p} dξ`: normalising constants, samplers and
//! integration against `μ`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::calculus::ScalarField;
use crate::error::{invalid, LabError, Result};
use crate::geometry::Space;
use crate::quadrature::{integrate_box, Tolerance, MAX_DIM};
use crate::rng::{stream_rng, streams};

mod importance;
mod mcmc;
mod sample_file;

pub use importance::{estimate_z, ZEstimate, IS_BLOCKS};
pub use mcmc::{integrated_autocorrelation_time, sample, sample_with, ChainMeta, SampleSet, SamplerOptions};
pub use sample_file::{read_sample_file, write_sample_file};

/// Tail mass `μ{N > R}` tolerated by quadrature truncation.
pub const QUADRATURE_TAIL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub space: Space,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<ZEstimate>,
}

impl MeasureSpec {
    pub fn new(space: Space, p: f64) -> Result<MeasureSpec> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(invalid("p", format!("need p >= 1, got {p}")));
        }
        Ok(MeasureSpec { space, p, z: None })
    }

    pub fn with_z(mut self, z: ZEstimate) -> Self {
        self.z = Some(z);
        self
    }

    /// Rejects `p < α + 1`, the range where the inequalities are asserted.
    pub fn require_p_at_least_alpha_plus_one(&self, strict: bool) -> Result<()> {
        let bound = self.space.alpha() + 1.0;
        let ok = if strict { self.p > bound } else { self.p >= bound };
        if ok {
            Ok(())
        } else {
            Err(invalid(
                "p",
                format!("need p {} α + 1 = {bound}, got {}", if strict { ">" } else { ">=" }, self.p),
            ))
        }
    }

    /// Typical radius of `μ`, `max(1, (Q/p)^{1/p})`.
    pub fn typical_radius(&self) -> f64 {
        (self.space.homogeneous_dim() / self.p).powf(1.0 / self.p).max(1.0)
    }

    /// Per-coordinate extent of the ball of radius `r`: `b_k r^{w_k}`.
    pub fn coordinate_extent(&self, r: f64) -> Vec<f64> {
        self.space
            .coordinate_bounds()
            .iter()
            .zip(self.space.dilation_weights())
            .map(|(b, w)| b * r.powf(*w))
            .collect()
    }

    /// Radius `R` with `μ{N > R} <= tail`, from `μ{N > R} = Γ(Q/p, R^p)/Γ(Q/p)`.
    pub fn truncation_radius(&self, tail: f64) -> f64 {
        let a = self.space.homogeneous_dim() / self.p;
        let mass = |r: f64| gamma_ur(a, r.powf(self.p));
        let mut hi = self.typical_radius();
        while mass(hi) > tail {
            hi *= 1.5;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass(mid) > tail {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// `-N(ξ)^p`.
#[inline]
pub fn log_density_unnormalized(spec: &MeasureSpec, xi: &[f64]) -> f64 {
    -spec.space.hom_norm(xi).powf(spec.p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mc,
    Quadrature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: Method,
    pub n: usize,
}

impl IntegralEstimate {
    pub fn exact(value: f64) -> Self {
        IntegralEstimate {
            value,
            stderr: 0.0,
            method: Method::Quadrature,
            n: 0,
        }
    }
}

/// Several integrals against `μ` with their joint covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct JointEstimate {
    pub mean: Vec<f64>,
    /// Row-major `k × k` covariance of `mean`.
    pub cov: Vec<f64>,
    pub method: Method,
    pub n: usize,
}

impl JointEstimate {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.mean.len() + j]
    }

    pub fn stderr(&self, i: usize) -> f64 {
        self.cov(i, i).max(0.0).sqrt()
    }

    pub fn estimate(&self, i: usize) -> IntegralEstimate {
        IntegralEstimate {
            value: self.mean[i],
            stderr: self.stderr(i),
            method: self.method,
            n: self.n,
        }
    }

    /// Standard error of `Σ_i c_i mean_i`.
    pub fn linear_stderr(&self, c: &[f64]) -> f64 {
        let k = self.mean.len();
        let mut v = 0.0;
        for i in 0..k {
            for j in 0..k {
                v += c[i] * c[j] * self.cov(i, j);
            }
        }
        v.max(0.0).sqrt()
    }
}

pub type Integrand<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);
/// Writes `k` integrand values at `ξ` into the output slice.
pub type VectorIntegrand<'a> = &'a (dyn Fn(&[f64], &mut [f64]) + Sync);

/// How integrals against `μ` are evaluated.
#[derive(Clone, Copy, Debug)]
pub enum Integrator<'a> {
    Mc(&'a SampleSet),
    Quadrature(Tolerance),
}

/// Batches per chain used for batch-means standard errors.
const BATCHES_PER_CHAIN: usize = 25;

impl Integrator<'_> {
    pub fn method(&self) -> Method {
        match self {
            Integrator::Mc(_) => Method::Mc,
            Integrator::Quadrature(_) => Method::Quadrature,
        }
    }

    /// `∫ g dμ` for a vector integrand `g: ℝ^d → ℝ^k`, jointly.
    pub fn integrate_vector(&self, spec: &MeasureSpec, k: usize, g: VectorIntegrand<'_>) -> Result<JointEstimate> {
        let est = match self {
            Integrator::Mc(set) => mc_vector(spec, set, k, g)?,
            Integrator::Quadrature(tol) => quadrature_vector(spec, k, g, tol)?,
        };
        if let Some(i) = est.mean.iter().position(|m| !m.is_finite()) {
            return Err(LabError::Divergent(format!("integrand component {i} is not finite")));
        }
        Ok(est)
    }

    /// `∫ f_i dμ` for every `f_i`, jointly.
    pub fn integrate_many(&self, spec: &MeasureSpec, fs: &[Integrand<'_>]) -> Result<JointEstimate> {
        let g = |xi: &[f64], out: &mut [f64]| {
            for (o, f) in out.iter_mut().zip(fs) {
                *o = f(xi);
            }
        };
        self.integrate_vector(spec, fs.len(), &g)
    }
}

/// `∫ f dμ`.
pub fn integrate(spec: &MeasureSpec, f: &ScalarField, method: &Integrator<'_>) -> Result<IntegralEstimate> {
    let g = |xi: &[f64]| f.evaluate(xi);
    Ok(method.integrate_many(spec, &[&g])?.estimate(0))
}

fn mc_vector(spec: &MeasureSpec, set: &SampleSet, k: usize, g: VectorIntegrand<'_>) -> Result<JointEstimate> {
    set.check_spec(spec)?;
    let batches = set.batches(BATCHES_PER_CHAIN);
    let sums: Vec<(usize, Vec<f64>)> = batches
        .par_iter()
        .map(|range| {
            let mut acc = vec![0.0; k];
            let mut buf = vec![0.0; k];
            for pt in &set.points()[range.clone()] {
                g(pt, &mut buf);
                for (a, v) in acc.iter_mut().zip(&buf) {
                    *a += v;
                }
            }
            (range.len(), acc)
        })
        .collect();
    let n: usize = sums.iter().map(|(c, _)| c).sum();
    let mut mean = vec![0.0; k];
    for (_, acc) in &sums {
        for (m, a) in mean.iter_mut().zip(acc) {
            *m += a;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let b = sums.len() as f64;
    let mut cov = vec![0.0; k * k];
    for (count, acc) in &sums {
        let w = *count as f64 / n as f64;
        let dev: Vec<f64> = acc.iter().zip(&mean).map(|(a, m)| a / *count as f64 - m).collect();
        for i in 0..k {
            for j in 0..k {
                cov[i * k + j] += w * w * dev[i] * dev[j];
            }
        }
    }
    let correction = if b > 1.0 { b / (b - 1.0) } else { f64::INFINITY };
    cov.iter_mut().for_each(|c| *c *= correction);
    Ok(JointEstimate {
        mean,
        cov,
        method: Method::Mc,
        n,
    })
}

/// `∫ g e^{-N^p} dξ` over the truncated box, unnormalised, with error bounds.
pub fn quadrature_unnormalized(
    spec: &MeasureSpec,
    k: usize,
    g: VectorIntegrand<'_>,
    tol: &Tolerance,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = spec.space.ambient_dim();
    if d > MAX_DIM {
        return Err(LabError::Quadrature(format!(
            "ambient dimension {d} exceeds the quadrature limit {MAX_DIM}"
        )));
    }
    let r = spec.truncation_radius(QUADRATURE_TAIL);
    let upper = spec.coordinate_extent(r);
    let lower: Vec<f64> = upper.iter().map(|u| -u).collect();
    let res = integrate_box(
        |xi| {
            let mut out = vec![0.0; k];
            let w = log_density_unnormalized(spec, xi).exp();
            if w > 0.0 {
                g(xi, &mut out);
                out.iter_mut().for_each(|v| *v *= w);
            }
            out
        },
        &lower,
        &upper,
        k,
        tol,
    )?;
    Ok((res.value, res.error))
}

fn quadrature_vector(spec: &MeasureSpec, k: usize, g: VectorIntegrand<'_>, tol: &Tolerance) -> Result<JointEstimate> {
    let with_one = |xi: &[f64], out: &mut [f64]| {
        out[0] = 1.0;
        g(xi, &mut out[1..]);
    };
    let (value, error) = quadrature_unnormalized(spec, k + 1, &with_one, tol)?;
    let z = value[0];
    let mean: Vec<f64> = value[1..].iter().map(|v| v / z).collect();
    let mut cov = vec![0.0; k * k];
    for i in 0..k {
        let e = error[i + 1] / z + mean[i].abs() * error[0] / z;
        cov[i * k + i] = e * e;
    }
    Ok(JointEstimate {
        mean,
        cov,
        method: Method::Quadrature,
        n: 0,
    })
}

/// `Z = ∫ e^{-N^p} dξ` by quadrature.
pub fn quadrature_z(spec: &MeasureSpec, tol: &Tolerance) -> Result<IntegralEstimate> {
    let one = |_: &[f64], out: &mut [f64]| out[0] = 1.0;
    let (v, e) = quadrature_unnormalized(spec, 1, &one, tol)?;
    Ok(IntegralEstimate {
        value: v[0],
        stderr: e[0],
        method: Method::Quadrature,
        n: 0,
    })
}

/// Lebesgue volume of `{N < λ}` by hit-or-miss sampling in the enclosing box.
pub fn ball_volume(space: &Space, lambda: f64, n: usize, seed: u64) -> Result<IntegralEstimate> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", "must be positive"));
    }
    if n == 0 {
        return Err(invalid("n", "need at least one point"));
    }
    let extent: Vec<f64> = space
        .coordinate_bounds()
        .iter()
        .zip(space.dilation_weights())
        .map(|(b, w)| b * lambda.powf(*w))
        .collect();
    let box_volume: f64 = extent.iter().map(|e| 2.0 * e).product();
    let per = n.div_ceil(IS_BLOCKS);
    let hits: usize = (0..IS_BLOCKS)
        .into_par_iter()
        .map(|block| {
            let count = per.min(n.saturating_sub(block * per));
            let mut rng = stream_rng(seed, streams::VOLUME + block as u64);
            let mut xi = vec![0.0; extent.len()];
            let mut hits = 0;
            for _ in 0..count {
                for (x, e) in xi.iter_mut().zip(&extent) {
                    *x = e * rng.random_range(-1.0..1.0);
                }
                if space.hom_norm(&xi) < lambda {
                    hits += 1;
                }
            }
            hits
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let frac = hits as f64 / n as f64;
    Ok(IntegralEstimate {
        value: frac * box_volume,
        stderr: (frac * (1.0 - frac) / n as f64).sqrt() * box_volume,
        method: Method::Mc,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_space, SpaceKind};

    fn h1() -> Space {
        make_space(SpaceKind::heisenberg(1, 16.0)).unwrap()
    }

    #[test]
    fn log_density_examples() {
        let spec = MeasureSpec::new(h1(), 2.0).unwrap();
        assert_eq!(log_density_unnormalized(&spec, &[0.0, 0.0, 0.0]), 0.0);
        assert!((log_density_unnormalized(&spec, &[2.0, 0.0, 0.0]) + 4.0).abs() < 1e-14);
        let a = log_density_unnormalized(&spec, &[0.3, 0.4, 0.1]);
        let b = log_density_unnormalized(&spec, &[0.5, 0.0, 0.1]);
        assert!((a - b).abs() < 1e-14);
        assert!(MeasureSpec::new(h1(), 0.5).is_err());
    }

    #[test]
    fn quadrature_z_matches_closed_form_on_h1() {
        // Z = |B_1| Γ(1 + Q/p) with |B_1| = π²/8 for the κ = 16 Kaplan ball.
        let spec = MeasureSpec::new(h1(), 2.0).unwrap();
        let z = quadrature_z(&spec, &Tolerance::default()).unwrap();
        let exact = std::f64::consts::PI.powi(2) / 4.0;
        assert!((z.value - exact).abs() < 1e-7, "{} vs {exact}", z.value);
    }

    #[test]
    fn truncation_radius_meets_tail() {
        let spec = MeasureSpec::new(h1(), 3.0).unwrap();
        let r = spec.truncation_radius(1e-12);
        assert!(gamma_ur(4.0 / 3.0, r.powf(3.0)) <= 1e-12);
        assert!(gamma_ur(4.0 / 3.0, (0.99 * r).powf(3.0)) > 1e-12);
    }

    #[test]
    fn ball_volume_is_homogeneous() {
        let g = make_space(SpaceKind::Grushin { n: 1, m: 1, eta: 1.0 }).unwrap();
        let v1 = ball_volume(&g, 1.0, 200_000, 1).unwrap();
        let v2 = ball_volume(&g, 2.0, 200_000, 1).unwrap();
        assert!((v2.value / v1.value - 8.0).abs() < 0.1);
    }
}
