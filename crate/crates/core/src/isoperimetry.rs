//! Surface measure by enlargement, the one-dimensional model profile `𝒰_r`
//! and the candidate-set scan `μ⁺(A) ≳ 𝒰_r(μ(A))`.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::calculus::{subgradient, DiffMode, ScalarField};
use crate::error::{invalid, LabError, Result};
use crate::geometry::{Space, SpaceKind};
use crate::measures::{MeasureSpec, SampleSet};
use crate::rng::{stream_rng, streams};

/// Default enlargement radii.
pub const DEFAULT_EPS_GRID: [f64; 3] = [0.08, 0.04, 0.02];
const BATCHES_PER_CHAIN: usize = 25;
const ORACLE_BATCHES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ProfileVariant {
    Main,
    /// Softened weight `|x|^{-(1-δ)}` for a one-dimensional first layer.
    Almost { delta: f64 },
    Filiform,
}

/// Exponent `r` of the model profile the isoperimetric lower bound uses.
pub fn r_exponent(space: &Space, p: f64, variant: ProfileVariant) -> Result<f64> {
    let alpha = space.alpha();
    if !(p >= alpha + 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("need p >= α + 1 = {}, got {p}", alpha + 1.0)));
    }
    match variant {
        ProfileVariant::Main => Ok((alpha + 1.0) * p / ((alpha + 1.0) + alpha * p)),
        ProfileVariant::Almost { delta } => {
            if !(delta > 0.0 && delta <= 1.0) {
                return Err(invalid("delta", format!("{delta} is outside (0, 1]")));
            }
            let a = alpha + 1.0 - delta;
            Ok(a * p / (a + alpha * (p - delta)))
        }
        ProfileVariant::Filiform => match space.kind() {
            SpaceKind::Filiform { n } => {
                let n = *n as f64;
                Ok(p * n / (n + p * (n - 1.0)))
            }
            other => Err(LabError::KindMismatch {
                op: "r_exponent(filiform)",
                kind: other.name(),
            }),
        },
    }
}

/// Isoperimetric function of `dν_r = e^{-|x|^r} dx / Z_r` on the line:
/// `𝒰_r(t) = ρ_r(F_r^{-1}(t))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub r: f64,
    /// `ln Z_r = ln(2 Γ(1 + 1/r))`.
    pub log_z: f64,
}

impl ModelProfile {
    pub fn new(r: f64) -> Result<ModelProfile> {
        if !(1.0..=2.0).contains(&r) {
            return Err(invalid("r", format!("{r} is outside [1, 2]")));
        }
        Ok(ModelProfile {
            r,
            log_z: std::f64::consts::LN_2 + ln_gamma(1.0 + 1.0 / r),
        })
    }

    pub fn density(&self, x: f64) -> f64 {
        (-x.abs().powf(self.r) - self.log_z).exp()
    }

    /// `ν_r(x, ∞) = Γ(1/r, x^r) / 2` for `x >= 0`.
    fn upper_tail(&self, x: f64) -> f64 {
        0.5 * gamma_ur(1.0 / self.r, x.powf(self.r))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x >= 0.0 {
            1.0 - self.upper_tail(x)
        } else {
            self.upper_tail(-x)
        }
    }

    /// `x >= 0` with `ν_r(x, ∞) = s`, for `s ∈ (0, 1/2]`.
    fn tail_quantile(&self, s: f64) -> f64 {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.upper_tail(hi) > s {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.upper_tail(mid) > s {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn quantile(&self, t: f64) -> f64 {
        if t <= 0.5 {
            -self.tail_quantile(t)
        } else {
            self.tail_quantile(1.0 - t)
        }
    }

    /// `𝒰_r(t)`; zero outside `(0, 1)`.
    pub fn evaluate(&self, t: f64) -> f64 {
        if !(t > 0.0 && t < 1.0) {
            return 0.0;
        }
        self.density(self.tail_quantile(t.min(1.0 - t)))
    }
}

/// Candidate sets, each described by a defining function `g` and a level:
/// the set is `{g < level}` (or its complement).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum SetSpec {
    /// `{N < c}`.
    NormSublevel { c: f64 },
    /// `{ξ_k < threshold}`.
    Halfspace { coordinate: usize, threshold: f64 },
    /// `{|x| < c}`.
    Tube { c: f64 },
    Complement { of: Box<SetSpec> },
}

impl SetSpec {
    pub fn complement(&self) -> SetSpec {
        match self {
            SetSpec::Complement { of } => (**of).clone(),
            other => SetSpec::Complement {
                of: Box::new(other.clone()),
            },
        }
    }

    pub fn label(&self) -> String {
        match self {
            SetSpec::NormSublevel { c } => format!("N<{c:.6}"),
            SetSpec::Halfspace { coordinate, threshold } => format!("xi{coordinate}<{threshold:.6}"),
            SetSpec::Tube { c } => format!("|x|<{c:.6}"),
            SetSpec::Complement { of } => format!("not({})", of.label()),
        }
    }

    fn validate(&self, space: &Space) -> Result<()> {
        match self {
            SetSpec::NormSublevel { c } | SetSpec::Tube { c } if !(*c > 0.0 && c.is_finite()) => {
                Err(invalid("set.c", format!("{c} must be positive")))
            }
            SetSpec::Halfspace { coordinate, threshold } => {
                if *coordinate >= space.ambient_dim() {
                    Err(invalid("set.coordinate", format!("{coordinate} is out of range")))
                } else if !threshold.is_finite() {
                    Err(invalid("set.threshold", "must be finite"))
                } else {
                    Ok(())
                }
            }
            SetSpec::Complement { of } => of.validate(space),
            _ => Ok(()),
        }
    }

    pub fn contains(&self, space: &Space, xi: &[f64]) -> bool {
        match self {
            SetSpec::NormSublevel { c } => space.hom_norm(xi) < *c,
            SetSpec::Halfspace { coordinate, threshold } => xi[*coordinate] < *threshold,
            SetSpec::Tube { c } => space.first_layer_norm(xi) < *c,
            SetSpec::Complement { of } => !of.contains(space, xi),
        }
    }

    /// Linearised horizontal signed distance `(g(ξ) - level) / |∇g|(ξ)`,
    /// negative inside the set.
    pub fn signed_distance(&self, space: &Space, xi: &[f64]) -> f64 {
        let (value, level, grad) = match self {
            SetSpec::NormSublevel { c } => {
                let f = ScalarField::hom_norm(space);
                let mode = if f.has_analytic_subgradient() {
                    DiffMode::Exact
                } else {
                    DiffMode::Fd
                };
                let g = subgradient(space, &f, xi, mode).unwrap_or_default();
                (space.hom_norm(xi), *c, norm(&g))
            }
            SetSpec::Halfspace { coordinate, threshold } => {
                let d = space.ambient_dim();
                let mut coef = vec![0.0; space.n_fields() * d];
                space.frame_coefficients(xi, &mut coef);
                let g: f64 = (0..space.n_fields()).map(|j| coef[j * d + coordinate].powi(2)).sum();
                (xi[*coordinate], *threshold, g.sqrt())
            }
            SetSpec::Tube { c } => {
                let f = ScalarField::first_layer_norm(space);
                let g = subgradient(space, &f, xi, DiffMode::Fd).unwrap_or_default();
                (space.first_layer_norm(xi), *c, norm(&g))
            }
            SetSpec::Complement { of } => return -of.signed_distance(space, xi),
        };
        let diff = value - level;
        if grad > 0.0 && grad.is_finite() {
            diff / grad
        } else if diff < 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEstimate {
    /// `μ(A)`.
    pub mass: f64,
    pub mass_stderr: f64,
    pub mu_plus: f64,
    pub stderr: f64,
    /// False when the grid estimates are not monotone within their errors
    /// or the extrapolation left `[0, ∞)`; `mu_plus` is then the smallest
    /// grid value.
    pub reliable: bool,
    pub eps_grid: Vec<f64>,
    /// `(μ(A_ε) - μ(A)) / ε` on the grid.
    pub grid_values: Vec<f64>,
    pub grid_stderr: Vec<f64>,
}

fn check_eps_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.len() < 3 {
        return Err(LabError::ShortGrid {
            needed: 3,
            got: eps_grid.len(),
        });
    }
    if eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) || eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("eps_grid", "must be positive and strictly decreasing"));
    }
    Ok(())
}

/// Enlargement estimate from signed distances to `A` (negative inside) and
/// the batches used for standard errors.
pub fn surface_measure_from_distances(
    signed: &[f64],
    batches: &[Range<usize>],
    eps_grid: &[f64],
) -> Result<SurfaceEstimate> {
    check_eps_grid(eps_grid)?;
    if signed.is_empty() || batches.len() < 2 {
        return Err(invalid("samples", "need at least two nonempty batches"));
    }
    let k = eps_grid.len();
    // Per batch: mass followed by the k shell quotients.
    let per_batch: Vec<Vec<f64>> = batches
        .iter()
        .map(|b| {
            let n = b.len() as f64;
            let mut out = vec![0.0; k + 1];
            for &s in &signed[b.clone()] {
                if s < 0.0 {
                    out[0] += 1.0;
                } else {
                    for (o, e) in out[1..].iter_mut().zip(eps_grid) {
                        if s < *e {
                            *o += 1.0;
                        }
                    }
                }
            }
            out[0] /= n;
            for (o, e) in out[1..].iter_mut().zip(eps_grid) {
                *o /= n * e;
            }
            out
        })
        .collect();
    let weights: Vec<f64> = batches.iter().map(|b| b.len() as f64).collect();
    let (mean, cov) = batch_mean_cov(&per_batch, &weights);
    let se = |i: usize| cov[i * (k + 1) + i].max(0.0).sqrt();
    let grid_values = mean[1..].to_vec();
    let grid_stderr: Vec<f64> = (1..=k).map(se).collect();

    // Least-squares line through (ε, value); the intercept is a fixed linear
    // combination of the grid values.
    let ne = k as f64;
    let me = eps_grid.iter().sum::<f64>() / ne;
    let see: f64 = eps_grid.iter().map(|e| (e - me).powi(2)).sum();
    let w: Vec<f64> = eps_grid.iter().map(|e| 1.0 / ne - me * (e - me) / see).collect();
    let intercept: f64 = w.iter().zip(&grid_values).map(|(a, b)| a * b).sum();
    let mut var = 0.0;
    for i in 0..k {
        for j in 0..k {
            var += w[i] * w[j] * cov[(i + 1) * (k + 1) + (j + 1)];
        }
    }
    let intercept_se = var.max(0.0).sqrt();

    let diffs: Vec<f64> = grid_values.windows(2).map(|p| p[1] - p[0]).collect();
    let tol: Vec<f64> = (0..k - 1)
        .map(|i| 2.0 * (grid_stderr[i].powi(2) + grid_stderr[i + 1].powi(2)).sqrt())
        .collect();
    let up = diffs.iter().zip(&tol).any(|(d, t)| *d > *t);
    let down = diffs.iter().zip(&tol).any(|(d, t)| *d < -*t);
    let reliable = !(up && down) && intercept >= 0.0;
    let (mu_plus, stderr) = if reliable {
        (intercept, intercept_se)
    } else {
        let (i, v) = grid_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty grid");
        (*v, grid_stderr[i])
    };
    Ok(SurfaceEstimate {
        mass: mean[0],
        mass_stderr: se(0),
        mu_plus,
        stderr,
        reliable,
        eps_grid: eps_grid.to_vec(),
        grid_values,
        grid_stderr,
    })
}

/// Weighted mean over batches and the covariance of that mean.
fn batch_mean_cov(rows: &[Vec<f64>], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = rows[0].len();
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; k];
    for (row, w) in rows.iter().zip(weights) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += w * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let b = rows.len() as f64;
    let mut cov = vec![0.0; k * k];
    for (row, w) in rows.iter().zip(weights) {
        let scale = w * b / total;
        for i in 0..k {
            for j in 0..k {
                cov[i * k + j] += scale * scale * (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= b * (b - 1.0));
    (mean, cov)
}

/// `μ⁺(A)` by enlargement in the linearised horizontal distance, from the
/// samples of `μ`.
pub fn surface_measure(
    spec: &MeasureSpec,
    set: &SetSpec,
    eps_grid: &[f64],
    samples: &SampleSet,
) -> Result<SurfaceEstimate> {
    samples.check_spec(spec)?;
    set.validate(&spec.space)?;
    let signed: Vec<f64> = samples
        .points()
        .par_iter()
        .map(|xi| set.signed_distance(&spec.space, xi))
        .collect();
    surface_measure_from_distances(&signed, &samples.batches(BATCHES_PER_CHAIN), eps_grid)
}

/// Enlargement estimate for the half-line `(-∞, F_r^{-1}(t))` under `ν_r`
/// from `n` exact draws: the one-dimensional oracle.
pub fn model_halfline_surface(r: f64, t: f64, eps_grid: &[f64], n: usize, seed: u64) -> Result<SurfaceEstimate> {
    let model = ModelProfile::new(r)?;
    if !(t > 0.0 && t < 1.0) {
        return Err(invalid("t", format!("{t} is outside (0, 1)")));
    }
    if n < 2 * ORACLE_BATCHES {
        return Err(invalid("n", format!("need at least {} draws", 2 * ORACLE_BATCHES)));
    }
    let a = model.quantile(t);
    let gamma = Gamma::new(1.0 / r, 1.0).expect("positive shape");
    let per = n / ORACLE_BATCHES;
    let signed: Vec<f64> = (0..ORACLE_BATCHES)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = stream_rng(seed, streams::ORACLE + b as u64);
            (0..per)
                .map(|_| {
                    let mag: f64 = gamma.sample(&mut rng).powf(1.0 / r);
                    let x = if rng.random::<bool>() { mag } else { -mag };
                    x - a
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let batches: Vec<Range<usize>> = (0..ORACLE_BATCHES).map(|b| b * per..(b + 1) * per).collect();
    surface_measure_from_distances(&signed, &batches, eps_grid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub set: String,
    pub t: f64,
    pub t_stderr: f64,
    pub mu_plus: f64,
    pub stderr: f64,
    pub model: f64,
    pub ratio: f64,
    pub reliable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileScan {
    pub r: f64,
    pub points: Vec<ProfilePoint>,
    pub c_min: f64,
    pub worst_set: String,
    pub all_reliable: bool,
}

impl ProfileScan {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("set,t,mu_plus,stderr,model,ratio\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                p.set, p.t, p.mu_plus, p.stderr, p.model, p.ratio
            ));
        }
        s
    }
}

/// `μ⁺(A) / 𝒰_r(μ(A))` for every set in `zoo`.
pub fn profile_scan(
    spec: &MeasureSpec,
    zoo: &[SetSpec],
    r: f64,
    eps_grid: &[f64],
    samples: &SampleSet,
) -> Result<ProfileScan> {
    if zoo.is_empty() {
        return Err(invalid("zoo", "must contain at least one set"));
    }
    let model = ModelProfile::new(r)?;
    let mut points = Vec::with_capacity(zoo.len());
    for set in zoo {
        let est = surface_measure(spec, set, eps_grid, samples)?;
        let m = model.evaluate(est.mass);
        if !(m > 0.0) {
            return Err(invalid("zoo", format!("{} has mass {} outside (0, 1)", set.label(), est.mass)));
        }
        points.push(ProfilePoint {
            set: set.label(),
            t: est.mass,
            t_stderr: est.mass_stderr,
            mu_plus: est.mu_plus,
            stderr: est.stderr,
            model: m,
            ratio: est.mu_plus / m,
            reliable: est.reliable,
        });
    }
    let worst = points
        .iter()
        .min_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .expect("nonempty zoo");
    Ok(ProfileScan {
        r,
        c_min: worst.ratio,
        worst_set: worst.set.clone(),
        all_reliable: points.iter().all(|p| p.reliable),
        points,
    })
}

fn sample_quantile(mut values: Vec<f64>, t: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let i = ((values.len() - 1) as f64 * t).round() as usize;
    values[i]
}

/// Twelve candidate sets: five sublevel sets of `N` at masses
/// 0.1, 0.3, 0.5, 0.7, 0.9 (from the exact law `N^p ~ Gamma(Q/p)`), four
/// half-spaces in `ξ_0` at sample masses 0.15, 0.35, 0.65, 0.85, two tubes
/// at masses 0.3 and 0.7 and one half-space in the last coordinate at
/// mass 0.25.
pub fn standard_zoo(spec: &MeasureSpec, samples: &SampleSet) -> Result<Vec<SetSpec>> {
    samples.check_spec(spec)?;
    if samples.is_empty() {
        return Err(invalid("samples", "need samples to place the zoo"));
    }
    let space = &spec.space;
    let law = GammaDist::new(space.homogeneous_dim() / spec.p, 1.0)
        .map_err(|e| invalid("p", format!("radial law: {e}")))?;
    let mut zoo = Vec::with_capacity(12);
    for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
        zoo.push(SetSpec::NormSublevel {
            c: law.inverse_cdf(t).powf(1.0 / spec.p),
        });
    }
    let first: Vec<f64> = samples.points().iter().map(|p| p[0]).collect();
    for t in [0.15, 0.35, 0.65, 0.85] {
        zoo.push(SetSpec::Halfspace {
            coordinate: 0,
            threshold: sample_quantile(first.clone(), t),
        });
    }
    let radial: Vec<f64> = samples.points().iter().map(|p| space.first_layer_norm(p)).collect();
    for t in [0.3, 0.7] {
        zoo.push(SetSpec::Tube {
            c: sample_quantile(radial.clone(), t),
        });
    }
    let last = space.ambient_dim() - 1;
    let last_values: Vec<f64> = samples.points().iter().map(|p| p[last]).collect();
    zoo.push(SetSpec::Halfspace {
        coordinate: last,
        threshold: sample_quantile(last_values, 0.25),
    });
    Ok(zoo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_space;

    #[test]
    fn exponents() {
        let h = make_space(SpaceKind::heisenberg(1, 16.0)).unwrap();
        assert!((r_exponent(&h, 2.0, ProfileVariant::Main).unwrap() - 1.0).abs() < 1e-15);
        assert!((r_exponent(&h, 4.0, ProfileVariant::Main).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!(r_exponent(&h, 1.5, ProfileVariant::Main).is_err());
        let g = make_space(SpaceKind::Greiner { n: 1, zeta: 2 }).unwrap();
        assert!((r_exponent(&g, 4.0, ProfileVariant::Main).unwrap() - 1.0).abs() < 1e-15);
        let gr = make_space(SpaceKind::Grushin { n: 1, m: 1, eta: 1.0 }).unwrap();
        let almost = r_exponent(&gr, 3.0, ProfileVariant::Almost { delta: 1e-12 }).unwrap();
        assert!((almost - r_exponent(&gr, 3.0, ProfileVariant::Main).unwrap()).abs() < 1e-10);
        assert!(r_exponent(&gr, 3.0, ProfileVariant::Almost { delta: 0.0 }).is_err());
        assert!(r_exponent(&gr, 3.0, ProfileVariant::Filiform).is_err());
    }

    #[test]
    fn model_profile_closed_forms() {
        let m1 = ModelProfile::new(1.0).unwrap();
        for i in 1..20 {
            let t = 0.05 * i as f64;
            assert!((m1.evaluate(t) - t.min(1.0 - t)).abs() < 1e-9);
        }
        let m2 = ModelProfile::new(2.0).unwrap();
        assert!((m2.evaluate(0.5) - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let m = ModelProfile::new(1.5).unwrap();
        for t in [0.1, 0.3] {
            assert!((m.evaluate(t) - m.evaluate(1.0 - t)).abs() < 1e-12);
            assert!((m.cdf(m.quantile(t)) - t).abs() < 1e-12);
        }
        assert!(ModelProfile::new(2.5).is_err());
    }

    #[test]
    fn batch_statistics_of_constant_rows() {
        let rows = vec![vec![1.0, 2.0]; 5];
        let (mean, cov) = batch_mean_cov(&rows, &[1.0; 5]);
        assert_eq!(mean, vec![1.0, 2.0]);
        assert!(cov.iter().all(|c| c.abs() < 1e-30));
    }
}
