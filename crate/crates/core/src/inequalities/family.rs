//! Test functions `f ∈ W^{1,2}(μ)` and the standard families built from them.

use serde::{Deserialize, Serialize};

use crate::calculus::{fd_subgradient, ScalarField};
use crate::geometry::Space;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum RadialShape {
    /// `exp(-(N/s)^2)`.
    Gaussian { scale: f64 },
    /// `exp(-N/s)`.
    Exponential { scale: f64 },
    /// `N^k`.
    Power { k: u32 },
    /// `1 / (1 + exp((N - c)/w))`, a smoothed indicator of `{N < c}`.
    Logistic { center: f64, width: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Constant,
    /// `(1 - s²)^k_+` with `s` the quasi-distance to `center` over `radius`.
    Bump { center: Vec<f64>, radius: f64, exponent: u32 },
    /// `ξ^m (1 - (N/R)²)³_+`.
    PolynomialCutoff { exponents: Vec<u32>, cutoff: f64 },
    RadialInN(RadialShape),
    /// `(1 - (|x|/c)²)²_+`, supported in the tube `{|x| < c}`.
    Tube { radius: f64 },
    /// `(1 + tanh((ξ_k - a)/w)) / 2`.
    SmoothedHalfspace { coordinate: usize, threshold: f64, width: f64 },
    /// C¹ cubic bump `1 - 3s² + 2s³` in quasi-distance, the optimality probe.
    PhiProbe { t: f64, center: Vec<f64>, radius: f64 },
}

/// `amplitude · g + offset` for a family member `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub family: Family,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

fn cubic_cutoff(s: f64) -> f64 {
    if s < 1.0 {
        (1.0 - s * s).powi(3)
    } else {
        0.0
    }
}

impl TestFunction {
    pub fn new(family: Family) -> Self {
        TestFunction {
            family,
            amplitude: 1.0,
            offset: 0.0,
        }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        TestFunction {
            amplitude: self.amplitude * lambda,
            offset: self.offset * lambda,
            ..self.clone()
        }
    }

    pub fn shifted(&self, c: f64) -> Self {
        TestFunction {
            offset: self.offset + c,
            ..self.clone()
        }
    }

    pub fn is_constant(&self) -> bool {
        self.amplitude == 0.0 || matches!(self.family, Family::Constant)
    }

    pub fn label(&self) -> String {
        let base = match &self.family {
            Family::Constant => "constant".to_string(),
            Family::Bump { center, radius, exponent } => format!("bump(c={center:?},r={radius},k={exponent})"),
            Family::PolynomialCutoff { exponents, cutoff } => format!("poly(m={exponents:?},R={cutoff})"),
            Family::RadialInN(shape) => format!("radial({shape:?})"),
            Family::Tube { radius } => format!("tube(c={radius})"),
            Family::SmoothedHalfspace {
                coordinate,
                threshold,
                width,
            } => format!("halfspace(k={coordinate},a={threshold},w={width})"),
            Family::PhiProbe { t, radius, .. } => format!("phi(t={t},r={radius})"),
        };
        if self.amplitude == 1.0 && self.offset == 0.0 {
            base
        } else {
            format!("{}*{base}+{}", self.amplitude, self.offset)
        }
    }

    /// The family member `g` itself.
    fn base(&self, space: &Space, xi: &[f64]) -> f64 {
        match &self.family {
            Family::Constant => 1.0,
            Family::Bump { center, radius, exponent } => {
                let s = space.quasi_distance(center, xi) / radius;
                if s < 1.0 {
                    (1.0 - s * s).powi(*exponent as i32)
                } else {
                    0.0
                }
            }
            Family::PolynomialCutoff { exponents, cutoff } => {
                let chi = cubic_cutoff(space.hom_norm(xi) / cutoff);
                if chi == 0.0 {
                    return 0.0;
                }
                exponents
                    .iter()
                    .zip(xi)
                    .map(|(m, v)| v.powi(*m as i32))
                    .product::<f64>()
                    * chi
            }
            Family::RadialInN(shape) => {
                let n = space.hom_norm(xi);
                match shape {
                    RadialShape::Gaussian { scale } => (-(n / scale).powi(2)).exp(),
                    RadialShape::Exponential { scale } => (-n / scale).exp(),
                    RadialShape::Power { k } => n.powi(*k as i32),
                    RadialShape::Logistic { center, width } => 1.0 / (1.0 + ((n - center) / width).exp()),
                }
            }
            Family::Tube { radius } => {
                let s = space.first_layer_norm(xi) / radius;
                if s < 1.0 {
                    (1.0 - s * s).powi(2)
                } else {
                    0.0
                }
            }
            Family::SmoothedHalfspace {
                coordinate,
                threshold,
                width,
            } => 0.5 * (1.0 + ((xi[*coordinate] - threshold) / width).tanh()),
            Family::PhiProbe { center, radius, .. } => {
                let s = space.quasi_distance(center, xi) / radius;
                if s < 1.0 {
                    1.0 - 3.0 * s * s + 2.0 * s * s * s
                } else {
                    0.0
                }
            }
        }
    }

    pub fn evaluate(&self, space: &Space, xi: &[f64]) -> f64 {
        self.amplitude * self.base(space, xi) + self.offset
    }

    /// `∇f(ξ)` by central differences along the frame.
    pub fn subgradient(&self, space: &Space, xi: &[f64]) -> Vec<f64> {
        if self.is_constant() {
            return vec![0.0; space.n_fields()];
        }
        let mut g = fd_subgradient(space, &|q| self.base(space, q), xi);
        g.iter_mut().for_each(|v| *v *= self.amplitude);
        g
    }

    /// `(f(ξ), |∇f|(ξ))`.
    pub fn value_and_gradient_norm(&self, space: &Space, xi: &[f64]) -> (f64, f64) {
        let g = self.subgradient(space, xi);
        (self.evaluate(space, xi), g.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    pub fn to_scalar_field(&self, space: &Space) -> ScalarField {
        let s = space.clone();
        let f = self.clone();
        ScalarField::new(self.label(), move |xi| f.evaluate(&s, xi))
    }
}

fn unit_direction(space: &Space, dir: &[f64], norm: f64) -> Vec<f64> {
    let n = space.hom_norm(dir);
    space
        .dilate(norm / n, dir)
        .expect("positive dilation of a nonzero direction")
}

fn axis(space: &Space, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; space.ambient_dim()];
    e[k] = 1.0;
    e
}

/// Bump centres: two on `{x = 0}` (along the last coordinate), two off it.
fn bump_centres(space: &Space) -> Vec<Vec<f64>> {
    let d = space.ambient_dim();
    let last = axis(space, d - 1);
    let first = axis(space, 0);
    let mut mixed = first.clone();
    mixed[d - 1] = 1.0;
    vec![
        unit_direction(space, &last, 1.0),
        unit_direction(space, &last, 1.5),
        unit_direction(space, &first, 1.0),
        unit_direction(space, &mixed, 1.5),
    ]
}

/// The 50-member standard family: 20 bumps, 16 polynomial×cutoff members and
/// 14 radial profiles in `N`.
pub fn standard_family(space: &Space) -> Vec<TestFunction> {
    let d = space.ambient_dim();
    let mut out = Vec::with_capacity(50);
    for radius in [0.5, 1.0, 2.0, 4.0, 8.0] {
        for center in bump_centres(space) {
            out.push(TestFunction::new(Family::Bump {
                center,
                radius,
                exponent: 2,
            }));
        }
    }
    let (a, b, z) = (0, 1.min(d - 1), d - 1);
    let monomial = |idx: &[usize]| {
        let mut m = vec![0u32; d];
        for i in idx {
            m[*i] += 1;
        }
        m
    };
    let monomials = [
        monomial(&[]),
        monomial(&[a]),
        monomial(&[b]),
        monomial(&[z]),
        monomial(&[a, a]),
        monomial(&[a, b]),
        monomial(&[a, z]),
        monomial(&[a, b, z]),
    ];
    for cutoff in [1.5, 3.0] {
        for exponents in &monomials {
            out.push(TestFunction::new(Family::PolynomialCutoff {
                exponents: exponents.clone(),
                cutoff,
            }));
        }
    }
    for scale in [0.5, 1.0, 2.0] {
        out.push(TestFunction::new(Family::RadialInN(RadialShape::Gaussian { scale })));
    }
    for scale in [0.5, 1.0, 2.0] {
        out.push(TestFunction::new(Family::RadialInN(RadialShape::Exponential { scale })));
    }
    for k in 1..=3 {
        out.push(TestFunction::new(Family::RadialInN(RadialShape::Power { k })));
    }
    for center in [0.5, 1.0, 1.5, 2.0, 3.0] {
        out.push(TestFunction::new(Family::RadialInN(RadialShape::Logistic { center, width: 0.2 })));
    }
    out
}

/// Twenty nonconstant members for the Cheeger check, mixing bumps,
/// half-space indicators, sublevel indicators and odd polynomials.
pub fn cheeger_family(space: &Space) -> Vec<TestFunction> {
    let d = space.ambient_dim();
    let centres = bump_centres(space);
    let mut out = Vec::with_capacity(20);
    for radius in [1.0, 2.0, 4.0, 8.0] {
        for c in [&centres[0], &centres[2]] {
            out.push(TestFunction::new(Family::Bump {
                center: c.clone(),
                radius,
                exponent: 2,
            }));
        }
    }
    for (coordinate, threshold) in [(0, 0.0), (0, 0.5), (0, -1.0), (1.min(d - 1), 0.0), (d - 1, 0.0), (d - 1, 0.3)] {
        out.push(TestFunction::new(Family::SmoothedHalfspace {
            coordinate,
            threshold,
            width: 0.25,
        }));
    }
    for center in [0.5, 1.0, 1.5, 2.0] {
        out.push(TestFunction::new(Family::RadialInN(RadialShape::Logistic { center, width: 0.2 })));
    }
    let mut x1 = vec![0u32; d];
    x1[0] = 1;
    let mut x1t = x1.clone();
    x1t[d - 1] += 1;
    for exponents in [x1, x1t] {
        out.push(TestFunction::new(Family::PolynomialCutoff { exponents, cutoff: 3.0 }));
    }
    out
}

/// Tubes `{|x| < c}` shrinking onto the degeneracy locus.
pub fn tube_family(radii: &[f64]) -> Vec<TestFunction> {
    radii
        .iter()
        .map(|&radius| TestFunction::new(Family::Tube { radius }))
        .collect()
}
