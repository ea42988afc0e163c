//! Subelliptic model spaces: step-two stratified groups, Grushin spaces,
//! Heisenberg-Greiner spaces and filiform groups.
//!
//! Every space lives on a euclidean coordinate chart `ξ = (x, x')`, where the
//! first block `x` is the one whose euclidean norm `|x|` enters the gauge
//! estimates. Each space carries its anisotropic dilation weights, its
//! homogeneous norm `N` and its horizontal frame `X_1, …, X_ℓ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

const SKEW_TOL: f64 = 1e-12;
const HTYPE_TOL: f64 = 1e-10;

fn default_kappa() -> f64 {
    16.0
}

/// Descriptor of a space, as read from and written to JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceKind {
    /// Step-two group on `R^n_x × R^m_t` with structure matrices `b[j]` (each `n × n`).
    StepTwo {
        n: usize,
        m: usize,
        b: Vec<Vec<Vec<f64>>>,
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default)]
        h_type: bool,
    },
    /// Grushin space `R^n_x × R^m_y` with fields `(∇_x, |x|^η ∇_y)`.
    Grushin { n: usize, m: usize, eta: f64 },
    /// Heisenberg-Greiner space `(R^n_x × R^n_y) × R_t`.
    Greiner { n: usize, zeta: u32 },
    /// Filiform group of step `n` on `R^{n+1}`.
    Filiform { n: usize },
}

impl SpaceKind {
    pub fn name(&self) -> &'static str {
        match self {
            SpaceKind::StepTwo { .. } => "step_two",
            SpaceKind::Grushin { .. } => "grushin",
            SpaceKind::Greiner { .. } => "greiner",
            SpaceKind::Filiform { .. } => "filiform",
        }
    }

    /// The Heisenberg group `H^k` as an H-type step-two group with the Kaplan
    /// parameter `kappa`. The structure matrix is the standard symplectic
    /// matrix, which is orthogonal.
    pub fn heisenberg(k: usize, kappa: f64) -> SpaceKind {
        let n = 2 * k;
        let mut b = vec![vec![0.0; n]; n];
        for i in 0..k {
            b[i][k + i] = 1.0;
            b[k + i][i] = -1.0;
        }
        SpaceKind::StepTwo {
            n,
            m: 1,
            b: vec![b],
            kappa,
            h_type: true,
        }
    }
}

/// A validated space with its derived constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceKind", into = "SpaceKind")]
pub struct Space {
    kind: SpaceKind,
    ambient_dim: usize,
    n1: usize,
    alpha: f64,
    q: f64,
    weights: Vec<f64>,
    /// Flattened structure matrices, `b[(j * n + r) * n + c]`, step-two only.
    b_flat: Vec<f64>,
}

impl TryFrom<SpaceKind> for Space {
    type Error = LabError;
    fn try_from(kind: SpaceKind) -> Result<Self> {
        make_space(kind)
    }
}

impl From<Space> for SpaceKind {
    fn from(space: Space) -> SpaceKind {
        space.kind
    }
}

/// Validates a descriptor and derives `α`, `Q` and the dilation weights.
pub fn make_space(kind: SpaceKind) -> Result<Space> {
    match &kind {
        SpaceKind::StepTwo {
            n,
            m,
            b,
            kappa,
            h_type,
        } => {
            let (n, m) = (*n, *m);
            if n < 2 {
                return Err(LabError::InvalidSpace(format!(
                    "step-two first layer needs n >= 2, got {n}"
                )));
            }
            if m < 1 {
                return Err(LabError::InvalidSpace("step-two needs m >= 1".into()));
            }
            if !(kappa.is_finite() && *kappa > 0.0) {
                return Err(LabError::InvalidSpace(format!("kappa must be positive, got {kappa}")));
            }
            if b.len() != m {
                return Err(LabError::InvalidSpace(format!(
                    "expected {m} structure matrices, got {}",
                    b.len()
                )));
            }
            let mut b_flat = Vec::with_capacity(m * n * n);
            for (j, mat) in b.iter().enumerate() {
                if mat.len() != n || mat.iter().any(|row| row.len() != n) {
                    return Err(LabError::InvalidSpace(format!("B[{j}] is not {n}x{n}")));
                }
                for r in 0..n {
                    for c in 0..n {
                        let v = mat[r][c];
                        if !v.is_finite() {
                            return Err(LabError::InvalidSpace(format!("B[{j}] has non-finite entries")));
                        }
                        if (v + mat[c][r]).abs() > SKEW_TOL {
                            return Err(LabError::InvalidSpace(format!(
                                "B[{j}] is not skew-symmetric at ({r},{c})"
                            )));
                        }
                        b_flat.push(v);
                    }
                }
            }
            let rows = DMatrix::from_fn(m, n * n, |j, k| b_flat[j * n * n + k]);
            let rank = rows.rank(1e-10);
            if rank < m {
                return Err(LabError::InvalidSpace(format!(
                    "structure matrices are linearly dependent (rank {rank} < {m})"
                )));
            }
            if *h_type {
                check_h_type(n, m, &b_flat)?;
            }
            let mut weights = vec![1.0; n];
            weights.extend(std::iter::repeat_n(2.0, m));
            Ok(Space {
                ambient_dim: n + m,
                n1: n,
                alpha: 1.0,
                q: (n + 2 * m) as f64,
                weights,
                b_flat,
                kind,
            })
        }
        SpaceKind::Grushin { n, m, eta } => {
            if *n < 1 || *m < 1 {
                return Err(LabError::InvalidSpace("grushin needs n >= 1 and m >= 1".into()));
            }
            if !(eta.is_finite() && *eta > 0.0) {
                return Err(LabError::InvalidSpace(format!("eta must be positive, got {eta}")));
            }
            let mut weights = vec![1.0; *n];
            weights.extend(std::iter::repeat_n(1.0 + eta, *m));
            Ok(Space {
                ambient_dim: n + m,
                n1: *n,
                alpha: *eta,
                q: *n as f64 + (1.0 + eta) * *m as f64,
                weights,
                b_flat: Vec::new(),
                kind,
            })
        }
        SpaceKind::Greiner { n, zeta } => {
            if *n < 1 || *zeta < 1 {
                return Err(LabError::InvalidSpace("greiner needs n >= 1 and zeta >= 1".into()));
            }
            let mut weights = vec![1.0; 2 * n];
            weights.push(2.0 * *zeta as f64);
            Ok(Space {
                ambient_dim: 2 * n + 1,
                n1: 2 * n,
                alpha: 2.0 * *zeta as f64 - 1.0,
                q: 2.0 * *n as f64 + 2.0 * *zeta as f64,
                weights,
                b_flat: Vec::new(),
                kind,
            })
        }
        SpaceKind::Filiform { n } => {
            if *n < 3 {
                return Err(LabError::InvalidSpace(format!("filiform step must be >= 3, got {n}")));
            }
            let mut weights = vec![1.0, 1.0];
            weights.extend((3..=n + 1).map(|j| (j - 1) as f64));
            let q = weights.iter().sum();
            Ok(Space {
                ambient_dim: n + 1,
                n1: 1,
                alpha: *n as f64 - 1.0,
                q,
                weights,
                b_flat: Vec::new(),
                kind,
            })
        }
    }
}

fn check_h_type(n: usize, m: usize, b: &[f64]) -> Result<()> {
    let mat = |j: usize| DMatrix::from_fn(n, n, |r, c| b[(j * n + r) * n + c]);
    let id = DMatrix::<f64>::identity(n, n);
    for i in 0..m {
        let bi = mat(i);
        if (bi.transpose() * &bi - &id).amax() > HTYPE_TOL {
            return Err(LabError::InvalidSpace(format!("H-type: B[{i}] is not orthogonal")));
        }
        for j in (i + 1)..m {
            let bj = mat(j);
            if (&bi * &bj + &bj * &bi).amax() > HTYPE_TOL {
                return Err(LabError::InvalidSpace(format!(
                    "H-type: B[{i}] and B[{j}] do not anticommute"
                )));
            }
        }
    }
    Ok(())
}

/// A point of a space, owned coordinates plus the block split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    coords: Vec<f64>,
    n1: usize,
}

impl Point {
    pub fn new(space: &Space, coords: Vec<f64>) -> Result<Point> {
        space.check_dim(&coords)?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("point", "coordinates must be finite"));
        }
        Ok(Point {
            coords,
            n1: space.n1,
        })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// The first-layer block `x`.
    pub fn x(&self) -> &[f64] {
        &self.coords[..self.n1]
    }

    /// The complementary block `x'`.
    pub fn x_prime(&self) -> &[f64] {
        &self.coords[self.n1..]
    }
}

impl std::ops::Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.coords
    }
}

/// One horizontal vector field of a space's frame.
#[derive(Clone, Copy, Debug)]
pub struct VectorField<'a> {
    space: &'a Space,
    index: usize,
}

impl VectorField<'_> {
    pub fn index(&self) -> usize {
        self.index
    }

    /// Coefficients of the field at `p` in the coordinate basis `∂_1, …, ∂_d`.
    pub fn coefficients(&self, p: &[f64]) -> Vec<f64> {
        let d = self.space.ambient_dim;
        let mut all = vec![0.0; self.space.n_fields() * d];
        self.space.frame_coefficients(p, &mut all);
        all[self.index * d..(self.index + 1) * d].to_vec()
    }
}

impl Space {
    pub fn kind(&self) -> &SpaceKind {
        &self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Dimension `n_1` of the block carrying `|x|`.
    pub fn first_layer_dim(&self) -> usize {
        self.n1
    }

    pub fn split(&self) -> (usize, usize) {
        (self.n1, self.ambient_dim - self.n1)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn homogeneous_dim(&self) -> f64 {
        self.q
    }

    pub fn dilation_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number `ℓ` of horizontal fields.
    pub fn n_fields(&self) -> usize {
        match &self.kind {
            SpaceKind::StepTwo { n, .. } => *n,
            SpaceKind::Grushin { n, m, .. } => n + m,
            SpaceKind::Greiner { n, .. } => 2 * n,
            SpaceKind::Filiform { .. } => 2,
        }
    }

    /// Number of leading coordinates moved at unit speed by the frame; their
    /// euclidean norm is 1-Lipschitz for the Carnot-Carathéodory distance.
    pub fn horizontal_coordinate_dim(&self) -> usize {
        match &self.kind {
            SpaceKind::StepTwo { n, .. } => *n,
            SpaceKind::Grushin { n, .. } => *n,
            SpaceKind::Greiner { n, .. } => 2 * n,
            SpaceKind::Filiform { .. } => 2,
        }
    }

    pub fn is_h_type(&self) -> bool {
        matches!(self.kind, SpaceKind::StepTwo { h_type: true, .. })
    }

    pub fn check_dim(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.ambient_dim {
            return Err(LabError::DimensionMismatch {
                expected: self.ambient_dim,
                got: p.len(),
            });
        }
        Ok(())
    }

    pub fn identity(&self) -> Vec<f64> {
        vec![0.0; self.ambient_dim]
    }

    /// Euclidean norm of the first block, `|x|`.
    pub fn first_layer_norm(&self, p: &[f64]) -> f64 {
        p[..self.n1].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn b(&self, j: usize, r: usize, c: usize) -> f64 {
        let n = self.n1;
        self.b_flat[(j * n + r) * n + c]
    }

    /// `(B^{(j)} x)` for all `j`, written into `out[j * n + i]`.
    fn b_times(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n1;
        let m = self.ambient_dim - n;
        for j in 0..m {
            for r in 0..n {
                let mut acc = 0.0;
                for c in 0..n {
                    acc += self.b(j, r, c) * x[c];
                }
                out[j * n + r] = acc;
            }
        }
    }

    /// Step-two group law `(x, t)∘(ξ, τ) = (x + ξ, t + τ + ½⟨B x, ξ⟩)`.
    pub fn group_mul(&self, g: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        let SpaceKind::StepTwo { n, m, .. } = self.kind else {
            return Err(LabError::KindMismatch {
                op: "group_mul",
                kind: self.kind.name(),
            });
        };
        self.check_dim(g)?;
        self.check_dim(h)?;
        let mut bx = vec![0.0; n * m];
        self.b_times(&g[..n], &mut bx);
        let mut out = Vec::with_capacity(n + m);
        out.extend((0..n).map(|i| g[i] + h[i]));
        for j in 0..m {
            let pairing: f64 = (0..n).map(|i| bx[j * n + i] * h[i]).sum();
            out.push(g[n + j] + h[n + j] + 0.5 * pairing);
        }
        Ok(out)
    }

    /// Step-two inverse `(x, t)^{-1} = (-x, -t)`.
    pub fn inverse(&self, g: &[f64]) -> Result<Vec<f64>> {
        if !matches!(self.kind, SpaceKind::StepTwo { .. }) {
            return Err(LabError::KindMismatch {
                op: "inverse",
                kind: self.kind.name(),
            });
        }
        self.check_dim(g)?;
        Ok(g.iter().map(|v| -v).collect())
    }

    /// Anisotropic dilation `δ_λ`.
    pub fn dilate(&self, lambda: f64, p: &[f64]) -> Result<Vec<f64>> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(invalid("lambda", format!("dilation factor must be positive, got {lambda}")));
        }
        self.check_dim(p)?;
        Ok(self.dilate_unchecked(lambda, p))
    }

    pub(crate) fn dilate_unchecked(&self, lambda: f64, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.weights)
            .map(|(v, w)| v * lambda.powf(*w))
            .collect()
    }

    /// Homogeneous norm `N`. Assumes `p` has the ambient dimension.
    pub fn hom_norm(&self, p: &[f64]) -> f64 {
        match &self.kind {
            SpaceKind::StepTwo { n, kappa, .. } => {
                let x2: f64 = p[..*n].iter().map(|v| v * v).sum();
                let t2: f64 = p[*n..].iter().map(|v| v * v).sum();
                (x2 * x2 + kappa * t2).sqrt().sqrt()
            }
            SpaceKind::Grushin { n, eta, .. } => {
                let x2: f64 = p[..*n].iter().map(|v| v * v).sum();
                let y2: f64 = p[*n..].iter().map(|v| v * v).sum();
                let a = 1.0 + eta;
                (x2.powf(a) + a * a * y2).powf(1.0 / (2.0 * a))
            }
            SpaceKind::Greiner { n, zeta } => {
                let r2: f64 = p[..2 * n].iter().map(|v| v * v).sum();
                let t = p[2 * n];
                let z = *zeta as i32;
                (r2.powi(2 * z) + t * t).powf(1.0 / (4.0 * *zeta as f64))
            }
            SpaceKind::Filiform { n } => {
                let nf = *n as f64;
                let a1 = p[0].abs().powf((nf + 1.0) / 2.0);
                let a2 = p[1].abs().powf((nf + 1.0) / 2.0);
                let outer = 2.0 * nf / (nf + 1.0);
                let mut norm_pow = 0.0;
                for j in 2..=*n {
                    let aj = p[j - 1].abs().powf((nf + 1.0) / (2.0 * (j as f64 - 1.0)));
                    norm_pow += (a1 + a2 + aj).powf(outer);
                }
                (norm_pow + p[*n].abs()).powf(1.0 / nf)
            }
        }
    }

    /// Writes the frame coefficients at `p` into `out` (row `i` holds `X_i`).
    pub fn frame_coefficients(&self, p: &[f64], out: &mut [f64]) {
        let d = self.ambient_dim;
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.kind {
            SpaceKind::StepTwo { n, m, .. } => {
                let mut bx = vec![0.0; n * m];
                self.b_times(&p[..*n], &mut bx);
                for i in 0..*n {
                    out[i * d + i] = 1.0;
                    for j in 0..*m {
                        out[i * d + n + j] = 0.5 * bx[j * n + i];
                    }
                }
            }
            SpaceKind::Grushin { n, m, eta } => {
                let xn = self.first_layer_norm(p).powf(*eta);
                for i in 0..*n {
                    out[i * d + i] = 1.0;
                }
                for k in 0..*m {
                    out[(n + k) * d + n + k] = xn;
                }
            }
            SpaceKind::Greiner { n, zeta } => {
                let z = *zeta as i32;
                let r2: f64 = p[..2 * n].iter().map(|v| v * v).sum();
                let c = 2.0 * *zeta as f64 * r2.powi(z - 1);
                for i in 0..*n {
                    out[i * d + i] = 1.0;
                    out[i * d + 2 * n] = c * p[n + i];
                    out[(n + i) * d + n + i] = 1.0;
                    out[(n + i) * d + 2 * n] = -c * p[i];
                }
            }
            SpaceKind::Filiform { n } => {
                out[0] = 1.0;
                out[d + 1] = 1.0;
                let mut coeff = 1.0;
                for k in 1..*n {
                    coeff *= p[0] / k as f64;
                    out[d + k + 1] = coeff;
                }
            }
        }
    }

    /// The horizontal frame as a list of fields.
    pub fn frame(&self) -> Vec<VectorField<'_>> {
        (0..self.n_fields())
            .map(|index| VectorField { space: self, index })
            .collect()
    }

    /// Quasi-distance induced by `N`: `N(a^{-1}∘b)` on groups, `N(b - a)` on
    /// the Grushin and Greiner charts (translation-invariant along `x'`).
    pub fn quasi_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let diff = self.translate_inverse(a, b);
        self.hom_norm(&diff)
    }

    /// `a^{-1}∘b` on step-two groups, coordinate difference otherwise.
    pub fn translate_inverse(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        if let SpaceKind::StepTwo { .. } = self.kind {
            let inv: Vec<f64> = a.iter().map(|v| -v).collect();
            self.group_mul(&inv, b).expect("dimensions checked by caller")
        } else {
            b.iter().zip(a).map(|(u, v)| u - v).collect()
        }
    }

    /// `c∘h` on step-two groups, coordinate sum otherwise.
    pub fn translate(&self, c: &[f64], h: &[f64]) -> Vec<f64> {
        if let SpaceKind::StepTwo { .. } = self.kind {
            self.group_mul(c, h).expect("dimensions checked by caller")
        } else {
            c.iter().zip(h).map(|(u, v)| u + v).collect()
        }
    }

    /// `sup { |ξ_k| : N(ξ) <= 1 }` for every coordinate `k`.
    pub fn coordinate_bounds(&self) -> Vec<f64> {
        match &self.kind {
            SpaceKind::StepTwo { n, m, kappa, .. } => {
                let mut b = vec![1.0; *n];
                b.extend(std::iter::repeat_n(1.0 / kappa.sqrt(), *m));
                b
            }
            SpaceKind::Grushin { n, m, eta } => {
                let mut b = vec![1.0; *n];
                b.extend(std::iter::repeat_n(1.0 / (1.0 + eta), *m));
                b
            }
            SpaceKind::Greiner { .. } | SpaceKind::Filiform { .. } => vec![1.0; self.ambient_dim],
        }
    }

    /// Distance to the loci where `N` (or the frame) fails to be smooth,
    /// beyond `{x = 0}` and the origin. Only the filiform gauge has such loci
    /// (the hyperplanes `x_j = 0` for `j >= 3`).
    pub fn extra_singular_distance(&self, p: &[f64]) -> f64 {
        match &self.kind {
            SpaceKind::Filiform { n } => {
                let mut d = f64::INFINITY;
                for j in 3..=*n {
                    if (*n as f64 + 1.0) / (2.0 * (j as f64 - 1.0)) < 2.0 {
                        d = d.min(p[j - 1].abs());
                    }
                }
                d.min(p[*n].abs())
            }
            _ => f64::INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h1() -> Space {
        make_space(SpaceKind::heisenberg(1, 16.0)).unwrap()
    }

    #[test]
    fn derived_constants() {
        let h = h1();
        assert_eq!((h.alpha(), h.homogeneous_dim()), (1.0, 4.0));
        let g = make_space(SpaceKind::Grushin { n: 1, m: 1, eta: 1.0 }).unwrap();
        assert_eq!((g.alpha(), g.homogeneous_dim()), (1.0, 3.0));
        let gr = make_space(SpaceKind::Greiner { n: 1, zeta: 2 }).unwrap();
        assert_eq!((gr.alpha(), gr.homogeneous_dim()), (3.0, 6.0));
        assert_eq!(gr.dilation_weights(), &[1.0, 1.0, 4.0]);
        let f = make_space(SpaceKind::Filiform { n: 3 }).unwrap();
        assert_eq!(f.alpha(), 2.0);
        assert_eq!(f.dilation_weights(), &[1.0, 1.0, 2.0, 3.0]);
        assert_eq!(f.homogeneous_dim(), 7.0);
    }

    #[test]
    fn rejects_bad_structure_matrices() {
        let not_skew = SpaceKind::StepTwo {
            n: 2,
            m: 1,
            b: vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]]],
            kappa: 16.0,
            h_type: false,
        };
        assert!(matches!(make_space(not_skew), Err(LabError::InvalidSpace(_))));

        let j = vec![vec![0.0, 1.0], vec![-1.0, 0.0]];
        let j2 = vec![vec![0.0, 2.0], vec![-2.0, 0.0]];
        let dependent = SpaceKind::StepTwo {
            n: 2,
            m: 2,
            b: vec![j.clone(), j2.clone()],
            kappa: 16.0,
            h_type: false,
        };
        assert!(make_space(dependent).is_err());

        // Skew but not orthogonal: fine as a step-two group, not as H-type.
        let mut scaled = SpaceKind::StepTwo {
            n: 2,
            m: 1,
            b: vec![j2],
            kappa: 16.0,
            h_type: false,
        };
        assert!(make_space(scaled.clone()).is_ok());
        if let SpaceKind::StepTwo { h_type, .. } = &mut scaled {
            *h_type = true;
        }
        assert!(make_space(scaled).is_err());
    }

    #[test]
    fn rejects_commuting_h_type_pair() {
        // Two orthogonal skew matrices on R^4 that commute instead of anticommuting.
        let a = vec![
            vec![0.0, 1.0, 0.0, 0.0],
            vec![-1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, -1.0, 0.0],
        ];
        let b = vec![
            vec![0.0, 1.0, 0.0, 0.0],
            vec![-1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, -1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        let kind = SpaceKind::StepTwo {
            n: 4,
            m: 2,
            b: vec![a, b],
            kappa: 16.0,
            h_type: true,
        };
        assert!(make_space(kind).is_err());
    }

    #[test]
    fn quaternionic_h_type_accepted() {
        // H-type group with 3-dimensional centre built from quaternion units.
        let i = vec![
            vec![0.0, -1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, -1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        let j = vec![
            vec![0.0, 0.0, -1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0, 0.0],
        ];
        let k = vec![
            vec![0.0, 0.0, 0.0, -1.0],
            vec![0.0, 0.0, -1.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
        ];
        let kind = SpaceKind::StepTwo {
            n: 4,
            m: 3,
            b: vec![i, j, k],
            kappa: 16.0,
            h_type: true,
        };
        let s = make_space(kind).unwrap();
        assert_eq!(s.homogeneous_dim(), 10.0);
    }

    #[test]
    fn group_law_examples() {
        let h = h1();
        let p = [0.3, -1.2, 0.7];
        assert_eq!(h.group_mul(&h.identity(), &p).unwrap(), p.to_vec());
        let inv = h.inverse(&p).unwrap();
        let e = h.group_mul(&p, &inv).unwrap();
        assert!(e.iter().all(|v| v.abs() < 1e-15));
        // (e1, 0)∘(e2, 0): t = ½⟨B e1, e2⟩ = ½ B[1][0] = -½.
        let prod = h.group_mul(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(prod, vec![1.0, 1.0, -0.5]);
        let g = make_space(SpaceKind::Grushin { n: 1, m: 1, eta: 1.0 }).unwrap();
        assert!(matches!(g.group_mul(&[0.0, 0.0], &[0.0, 0.0]), Err(LabError::KindMismatch { .. })));
    }

    #[test]
    fn dilation_examples() {
        let g = make_space(SpaceKind::Grushin { n: 1, m: 1, eta: 1.0 }).unwrap();
        assert_eq!(g.dilate(2.0, &[1.0, 1.0]).unwrap(), vec![2.0, 4.0]);
        assert_eq!(g.dilate(1.0, &[0.4, -3.0]).unwrap(), vec![0.4, -3.0]);
        assert!(g.dilate(0.0, &[1.0, 1.0]).is_err());
        assert!(g.dilate(-1.0, &[1.0, 1.0]).is_err());
        let gr = make_space(SpaceKind::Greiner { n: 1, zeta: 2 }).unwrap();
        assert_eq!(gr.dilate(2.0, &[0.0, 0.0, 1.0]).unwrap()[2], 16.0);
    }

    #[test]
    fn norm_examples() {
        let h = h1();
        assert!((h.hom_norm(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((h.hom_norm(&[0.0, 0.0, 1.0]) - 2.0).abs() < 1e-15);
        let g = make_space(SpaceKind::Grushin { n: 1, m: 1, eta: 1.0 }).unwrap();
        assert!((g.hom_norm(&[0.0, 1.0]) - 2f64.sqrt()).abs() < 1e-15);
        // Filiform n = 3 at e_1: both summands of the displayed sum equal 1,
        // so N = 2^{1/3}.
        let f = make_space(SpaceKind::Filiform { n: 3 }).unwrap();
        assert!((f.hom_norm(&[1.0, 0.0, 0.0, 0.0]) - 2f64.powf(1.0 / 3.0)).abs() < 1e-14);
        assert_eq!(f.hom_norm(&[0.0; 4]), 0.0);
    }

    #[test]
    fn frame_examples() {
        let g = make_space(SpaceKind::Grushin { n: 1, m: 1, eta: 1.0 }).unwrap();
        let fr = g.frame();
        assert_eq!(fr[0].coefficients(&[3.0, 5.0]), vec![1.0, 0.0]);
        assert_eq!(fr[1].coefficients(&[3.0, 5.0]), vec![0.0, 3.0]);
        // Greiner ζ = 1 on f = t at y_1 = 2: X^1 t = 2ζ y_1 |r|^0 = 4.
        let gr = make_space(SpaceKind::Greiner { n: 1, zeta: 1 }).unwrap();
        let c = gr.frame()[0].coefficients(&[0.7, 2.0, -1.0]);
        assert_eq!(c[2], 4.0);
    }

    #[test]
    fn heisenberg_with_doubled_structure_matches_greiner() {
        // X = ∂x + 2y∂t, Y = ∂y - 2x∂t is the step-two frame for B = 4J.
        let s = make_space(SpaceKind::StepTwo {
            n: 2,
            m: 1,
            b: vec![vec![vec![0.0, 4.0], vec![-4.0, 0.0]]],
            kappa: 1.0,
            h_type: false,
        })
        .unwrap();
        let gr = make_space(SpaceKind::Greiner { n: 1, zeta: 1 }).unwrap();
        let p = [0.3, -0.8, 1.1];
        let mut a = vec![0.0; 6];
        let mut b = vec![0.0; 6];
        s.frame_coefficients(&p, &mut a);
        gr.frame_coefficients(&p, &mut b);
        assert_eq!(a, b);
        // With κ = 1 the Kaplan gauge is the Greiner gauge at ζ = 1.
        assert!((s.hom_norm(&p) - gr.hom_norm(&p)).abs() < 1e-15);
    }

    #[test]
    fn filiform_second_field() {
        let f = make_space(SpaceKind::Filiform { n: 4 }).unwrap();
        let c = f.frame()[1].coefficients(&[2.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(c, vec![0.0, 1.0, 2.0, 2.0, 8.0 / 6.0]);
    }

    #[test]
    fn json_roundtrip() {
        let h = h1();
        let s = serde_json::to_string(&h).unwrap();
        assert!(s.contains("\"kind\":\"step_two\""));
        let back: Space = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
        let bad = r#"{"kind":"grushin","n":1,"m":1,"eta":-1.0}"#;
        assert!(serde_json::from_str::<Space>(bad).is_err());
    }
}
