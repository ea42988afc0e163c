//! Horizontal derivatives of scalar fields.
//!
//! Subgradients are evaluated either from a closed form or by central
//! differences along each frame field; sublaplacians always go through nested
//! central differences.

use std::fmt;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::geometry::{Space, SpaceKind};

mod estimates;
mod paths;

pub use estimates::{check_estimates, sample_cloud, EstimateEntry, EstimateReport};
pub use paths::{cc_sandwich, horizontal_path, HorizontalPath, Move};

/// Relative step of the first-order stencils.
pub const FD_STEP: f64 = 1e-5;
/// Relative step of the outer stencil in the nested sublaplacian.
pub const LAPLACIAN_OUTER_STEP: f64 = 1e-4;

type Eval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradEval = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A scalar function on a space, optionally with a closed-form subgradient.
#[derive(Clone)]
pub struct ScalarField {
    label: String,
    eval: Eval,
    grad: Option<GradEval>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("label", &self.label)
            .field("analytic_subgradient", &self.grad.is_some())
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffMode {
    Exact,
    Fd,
}

impl ScalarField {
    pub fn new(label: impl Into<String>, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField {
            label: label.into(),
            eval: Arc::new(eval),
            grad: None,
        }
    }

    pub fn with_subgradient(mut self, grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_analytic_subgradient(&self) -> bool {
        self.grad.is_some()
    }

    #[inline]
    pub fn evaluate(&self, p: &[f64]) -> f64 {
        (self.eval)(p)
    }

    pub fn constant(value: f64) -> Self {
        ScalarField::new(format!("const({value})"), move |_| value)
    }

    /// The coordinate function `ξ ↦ ξ_k`.
    pub fn coordinate(space: &Space, k: usize) -> Self {
        let s = space.clone();
        ScalarField::new(format!("coord({k})"), move |p| p[k]).with_subgradient(move |p| {
            let d = s.ambient_dim();
            let mut frame = vec![0.0; s.n_fields() * d];
            s.frame_coefficients(p, &mut frame);
            (0..s.n_fields()).map(|i| frame[i * d + k]).collect()
        })
    }

    /// `|x|`, the euclidean norm of the first block.
    pub fn first_layer_norm(space: &Space) -> Self {
        let s = space.clone();
        let s2 = space.clone();
        ScalarField::new("|x|", move |p| s.first_layer_norm(p)).with_subgradient(move |p| {
            let d = s2.ambient_dim();
            let n1 = s2.first_layer_dim();
            let r = s2.first_layer_norm(p);
            let mut frame = vec![0.0; s2.n_fields() * d];
            s2.frame_coefficients(p, &mut frame);
            (0..s2.n_fields())
                .map(|i| (0..n1).map(|k| frame[i * d + k] * p[k]).sum::<f64>() / r)
                .collect()
        })
    }

    /// The homogeneous norm `N`, with a closed-form subgradient wherever the
    /// gauge is a smooth power sum (step-two, Grushin, Greiner).
    pub fn hom_norm(space: &Space) -> Self {
        let s = space.clone();
        let field = ScalarField::new("N", move |p| s.hom_norm(p));
        let s = space.clone();
        match space.kind() {
            SpaceKind::Filiform { .. } => field,
            _ => field.with_subgradient(move |p| norm_subgradient(&s, p)),
        }
    }
}

/// Closed-form `∇N` for the power-sum gauges: `X_i N = X_i(N^a) / (a N^{a-1})`.
fn norm_subgradient(space: &Space, p: &[f64]) -> Vec<f64> {
    let nval = space.hom_norm(p);
    let d = space.ambient_dim();
    let ell = space.n_fields();
    // Euclidean gradient of N^a and the exponent a.
    let (euclid, a) = match space.kind() {
        SpaceKind::StepTwo { n, kappa, .. } => {
            let x2: f64 = p[..*n].iter().map(|v| v * v).sum();
            let mut g: Vec<f64> = p[..*n].iter().map(|v| 4.0 * x2 * v).collect();
            g.extend(p[*n..].iter().map(|t| 2.0 * kappa * t));
            (g, 4.0)
        }
        SpaceKind::Grushin { n, eta, .. } => {
            let a = 1.0 + eta;
            let x2: f64 = p[..*n].iter().map(|v| v * v).sum();
            let mut g: Vec<f64> = p[..*n].iter().map(|v| 2.0 * a * x2.powf(*eta) * v).collect();
            g.extend(p[*n..].iter().map(|y| 2.0 * a * a * y));
            (g, 2.0 * a)
        }
        SpaceKind::Greiner { n, zeta } => {
            let z = *zeta as i32;
            let r2: f64 = p[..2 * n].iter().map(|v| v * v).sum();
            let mut g: Vec<f64> = p[..2 * n]
                .iter()
                .map(|v| 4.0 * *zeta as f64 * r2.powi(2 * z - 1) * v)
                .collect();
            g.push(2.0 * p[2 * n]);
            (g, 4.0 * *zeta as f64)
        }
        SpaceKind::Filiform { .. } => unreachable!("filiform gauge has no closed-form gradient here"),
    };
    let mut frame = vec![0.0; ell * d];
    space.frame_coefficients(p, &mut frame);
    let denom = a * nval.powf(a - 1.0);
    (0..ell)
        .map(|i| (0..d).map(|k| frame[i * d + k] * euclid[k]).sum::<f64>() / denom)
        .collect()
}

/// Step scale `max(1, N(p))` shared by all stencils.
#[inline]
fn step_scale(space: &Space, p: &[f64]) -> f64 {
    space.hom_norm(p).max(1.0)
}

fn finite_or(label: &str, p: &[f64], v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LabError::NonFinite {
            label: label.to_string(),
            point: p.to_vec(),
        })
    }
}

/// Fourth-order central difference of `f` along the coefficient vector `a`.
#[inline]
fn directional(f: &dyn Fn(&[f64]) -> f64, p: &[f64], a: &[f64], h: f64, buf: &mut Vec<f64>) -> f64 {
    let mut at = |s: f64| {
        buf.clear();
        buf.extend(p.iter().zip(a).map(|(x, c)| x + s * c));
        f(buf)
    };
    let near = at(h) - at(-h);
    let far = at(2.0 * h) - at(-2.0 * h);
    (8.0 * near - far) / (12.0 * h)
}

/// FD subgradient of an arbitrary closure; the workhorse behind [`subgradient`].
pub fn fd_subgradient(space: &Space, f: &dyn Fn(&[f64]) -> f64, p: &[f64]) -> Vec<f64> {
    let d = space.ambient_dim();
    let ell = space.n_fields();
    let mut frame = vec![0.0; ell * d];
    space.frame_coefficients(p, &mut frame);
    let h = FD_STEP * step_scale(space, p);
    let mut buf = Vec::with_capacity(d);
    (0..ell)
        .map(|i| directional(f, p, &frame[i * d..(i + 1) * d], h, &mut buf))
        .collect()
}

/// Euclidean length of the FD subgradient, `|∇f|(p)`.
pub fn fd_subgradient_norm(space: &Space, f: &dyn Fn(&[f64]) -> f64, p: &[f64]) -> f64 {
    fd_subgradient(space, f, p).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `(X_1 f, …, X_ℓ f)(p)`.
pub fn subgradient(space: &Space, f: &ScalarField, p: &[f64], mode: DiffMode) -> Result<Vec<f64>> {
    space.check_dim(p)?;
    let g = match mode {
        DiffMode::Exact => {
            let grad = f
                .grad
                .as_ref()
                .ok_or_else(|| LabError::MissingGradient(f.label.clone()))?;
            grad(p)
        }
        DiffMode::Fd => fd_subgradient(space, &|q| f.evaluate(q), p),
    };
    for v in &g {
        finite_or(&f.label, p, *v)?;
    }
    Ok(g)
}

/// `Δf(p) = Σ_i X_i(X_i f)(p)` by nested central differences.
pub fn sublaplacian(space: &Space, f: &ScalarField, p: &[f64]) -> Result<f64> {
    space.check_dim(p)?;
    let v = fd_sublaplacian(space, &|q| f.evaluate(q), p);
    finite_or(&f.label, p, v)
}

pub fn fd_sublaplacian(space: &Space, f: &dyn Fn(&[f64]) -> f64, p: &[f64]) -> f64 {
    let d = space.ambient_dim();
    let ell = space.n_fields();
    let scale = step_scale(space, p);
    let h = FD_STEP * scale;
    let outer = LAPLACIAN_OUTER_STEP * scale;
    let mut frame = vec![0.0; ell * d];
    let mut inner_frame = vec![0.0; ell * d];
    space.frame_coefficients(p, &mut frame);
    let mut buf = Vec::with_capacity(d);
    let mut q = vec![0.0; d];
    let mut total = 0.0;
    for i in 0..ell {
        let a = &frame[i * d..(i + 1) * d];
        let mut side = [0.0; 2];
        for (slot, sign) in side.iter_mut().zip([1.0, -1.0]) {
            for k in 0..d {
                q[k] = p[k] + sign * outer * a[k];
            }
            space.frame_coefficients(&q, &mut inner_frame);
            *slot = directional(f, &q, &inner_frame[i * d..(i + 1) * d], h, &mut buf);
        }
        total += (side[0] - side[1]) / (2.0 * outer);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_space, SpaceKind};
    use crate::rng::stream_rng;
    use rand::Rng;

    fn h1() -> Space {
        make_space(SpaceKind::heisenberg(1, 16.0)).unwrap()
    }

    #[test]
    fn kaplan_gradient_identity_is_exact() {
        let h = h1();
        let n = ScalarField::hom_norm(&h);
        for p in [[0.3, -0.4, 0.2], [1.0, 2.0, -3.0], [0.01, 0.02, 0.5]] {
            let g = subgradient(&h, &n, &p, DiffMode::Exact).unwrap();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let expected = h.first_layer_norm(&p) / h.hom_norm(&p);
            assert!((norm - expected).abs() < 1e-13, "{norm} vs {expected}");
        }
    }

    #[test]
    fn constant_and_coordinate_fields() {
        let g = make_space(SpaceKind::Grushin { n: 2, m: 1, eta: 1.5 }).unwrap();
        let c = ScalarField::constant(3.0);
        let p = [0.5, -0.2, 1.0];
        assert!(subgradient(&g, &c, &p, DiffMode::Fd).unwrap().iter().all(|v| *v == 0.0));
        let x1 = ScalarField::new("x1", |p| p[0]);
        let grad = subgradient(&g, &x1, &p, DiffMode::Fd).unwrap();
        assert!((grad[0] - 1.0).abs() < 1e-10);
        assert!(grad[1].abs() < 1e-10 && grad[2].abs() < 1e-10);
        assert!(matches!(
            subgradient(&g, &x1, &p, DiffMode::Exact),
            Err(LabError::MissingGradient(_))
        ));
    }

    #[test]
    fn nan_is_reported() {
        let h = h1();
        let f = ScalarField::new("bad", |_| f64::NAN);
        assert!(matches!(
            subgradient(&h, &f, &[1.0, 0.0, 0.0], DiffMode::Fd),
            Err(LabError::NonFinite { .. })
        ));
    }

    #[test]
    fn sublaplacian_examples() {
        let h = h1();
        let sq = ScalarField::new("|x|^2", |p| p[0] * p[0] + p[1] * p[1]);
        let v = sublaplacian(&h, &sq, &[0.4, -1.3, 2.0]).unwrap();
        assert!((v - 4.0).abs() < 1e-5, "{v}");
        let abs = ScalarField::first_layer_norm(&h);
        let v = sublaplacian(&h, &abs, &[2.0, 0.0, 0.7]).unwrap();
        assert!((v - 0.5).abs() < 1e-5, "{v}");
        // N^{2-Q} = N^{-2} is the fundamental solution on H^1.
        let hs = h.clone();
        let fs = ScalarField::new("N^-2", move |p| hs.hom_norm(p).powi(-2));
        for p in [[0.5, 0.3, 0.2], [1.0, -0.5, 1.5], [0.2, 0.9, -0.4]] {
            let v = sublaplacian(&h, &fs, &p).unwrap();
            assert!(v.abs() < 1e-4, "ΔN^-2 = {v} at {p:?}");
        }
    }

    #[test]
    fn exact_matches_fd_on_all_power_sum_gauges() {
        let spaces = [
            h1(),
            make_space(SpaceKind::Grushin { n: 2, m: 1, eta: 2.0 }).unwrap(),
            make_space(SpaceKind::Grushin { n: 1, m: 2, eta: 0.5 }).unwrap(),
            make_space(SpaceKind::Greiner { n: 1, zeta: 2 }).unwrap(),
            make_space(SpaceKind::StepTwo {
                n: 3,
                m: 1,
                b: vec![vec![vec![0.0, 1.0, 2.0], vec![-1.0, 0.0, 0.5], vec![-2.0, -0.5, 0.0]]],
                kappa: 3.0,
                h_type: false,
            })
            .unwrap(),
        ];
        let mut rng = stream_rng(11, 0);
        for s in &spaces {
            let n = ScalarField::hom_norm(s);
            let abs = ScalarField::first_layer_norm(s);
            for _ in 0..200 {
                let z: Vec<f64> = (0..s.ambient_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let lam = 10f64.powf(rng.random_range(-1.0..1.0)) / s.hom_norm(&z);
                let p = s.dilate(lam, &z).unwrap();
                for f in [&n, &abs] {
                    let e = subgradient(s, f, &p, DiffMode::Exact).unwrap();
                    let d = subgradient(s, f, &p, DiffMode::Fd).unwrap();
                    let scale = e.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
                    for (a, b) in e.iter().zip(&d) {
                        assert!((a - b).abs() / scale < 1e-5, "{:?} {} {a} {b} at {p:?}", s.kind().name(), f.label());
                    }
                }
            }
        }
    }

    #[test]
    fn step_two_frame_is_left_invariant() {
        let h = h1();
        let f = |p: &[f64]| (p[0] * 1.3).sin() + p[1] * p[2] + (0.5 * p[2]).cos() * p[0];
        let mut rng = stream_rng(5, 1);
        for _ in 0..50 {
            let g: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let gq = h.group_mul(&g, &q).unwrap();
            let lhs = fd_subgradient(&h, &f, &gq);
            let hh = h.clone();
            let gg = g.clone();
            let translated = move |p: &[f64]| f(&hh.group_mul(&gg, p).unwrap());
            let rhs = fd_subgradient(&h, &translated, &q);
            for (a, b) in lhs.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn frames_are_divergence_free() {
        let spaces = [
            h1(),
            make_space(SpaceKind::Grushin { n: 2, m: 2, eta: 1.5 }).unwrap(),
            make_space(SpaceKind::Greiner { n: 2, zeta: 3 }).unwrap(),
            make_space(SpaceKind::Filiform { n: 5 }).unwrap(),
        ];
        let mut rng = stream_rng(9, 2);
        for s in &spaces {
            let d = s.ambient_dim();
            let ell = s.n_fields();
            for _ in 0..20 {
                let p: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                for i in 0..ell {
                    let h = 1e-5;
                    let mut div = 0.0;
                    for k in 0..d {
                        let mut a = p.clone();
                        let mut b = p.clone();
                        a[k] += h;
                        b[k] -= h;
                        let mut fa = vec![0.0; ell * d];
                        let mut fb = vec![0.0; ell * d];
                        s.frame_coefficients(&a, &mut fa);
                        s.frame_coefficients(&b, &mut fb);
                        div += (fa[i * d + k] - fb[i * d + k]) / (2.0 * h);
                    }
                    assert!(div.abs() < 1e-7, "{} field {i}: div = {div}", s.kind().name());
                }
            }
        }
    }

    #[test]
    fn gradient_norm_is_dilation_invariant() {
        let g = make_space(SpaceKind::Grushin { n: 2, m: 1, eta: 2.0 }).unwrap();
        let n = ScalarField::hom_norm(&g);
        let p = [0.3, 0.2, -0.4];
        let base = subgradient(&g, &n, &p, DiffMode::Exact).unwrap();
        for lam in [0.5, 3.0, 7.0] {
            let q = g.dilate(lam, &p).unwrap();
            let v = subgradient(&g, &n, &q, DiffMode::Exact).unwrap();
            let a: f64 = base.iter().map(|v| v * v).sum::<f64>().sqrt();
            let b: f64 = v.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((a - b).abs() < 1e-8 * a);
            let l0 = sublaplacian(&g, &n, &p).unwrap();
            let l1 = sublaplacian(&g, &n, &q).unwrap();
            assert!((l1 * lam - l0).abs() < 1e-6 * l0.abs().max(1.0), "{l0} {l1}");
        }
    }
}
