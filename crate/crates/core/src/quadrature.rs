//! Nested adaptive Gauss-Kronrod (7-15) quadrature of vector integrands over
//! boxes of dimension at most three.

use crate::error::{LabError, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

pub const MAX_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    /// Maximum number of subintervals per one-dimensional rule.
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-13,
            rel: 1e-9,
            max_intervals: 400,
        }
    }
}

/// Integral of every component together with a Kronrod error bound.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorIntegral {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
}

fn gk15<F>(f: &mut F, a: f64, b: f64, k: usize, evals: &mut usize) -> Panel
where
    F: FnMut(f64) -> (Vec<f64>, Vec<f64>),
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; k];
    let mut gauss = vec![0.0; k];
    let mut inner_err = vec![0.0; k];
    let mut add = |x: f64, wk: f64, wg: f64, kron: &mut [f64], gauss: &mut [f64], inner: &mut [f64]| {
        let (v, e) = f(x);
        *evals += 1;
        for j in 0..k {
            kron[j] += wk * v[j];
            gauss[j] += wg * v[j];
            inner[j] += wk * e[j];
        }
    };
    add(c, WGK[7], WG[3], &mut kron, &mut gauss, &mut inner_err);
    for i in 0..7 {
        let wg = if i % 2 == 1 { WG[i / 2] } else { 0.0 };
        add(c - h * XGK[i], WGK[i], wg, &mut kron, &mut gauss, &mut inner_err);
        add(c + h * XGK[i], WGK[i], wg, &mut kron, &mut gauss, &mut inner_err);
    }
    let value: Vec<f64> = kron.iter().map(|v| v * h).collect();
    let error = kron
        .iter()
        .zip(&gauss)
        .zip(&inner_err)
        .map(|((kv, gv), ie)| ((kv - gv) * h).abs() + ie * h.abs())
        .collect();
    Panel { a, b, value, error }
}

/// Per-component stopping targets of one nesting level.
struct Targets {
    abs: Vec<f64>,
    rel: f64,
    max_intervals: usize,
}

impl Targets {
    fn target(&self, j: usize, value: f64) -> f64 {
        self.abs[j].max(self.rel * value.abs())
    }
}

/// Adaptive one-dimensional rule for an integrand returning `(value, error)`
/// pairs; the error of inner integrals is carried through the weights.
fn adaptive_1d<F>(mut f: F, breaks: &[f64], k: usize, tol: &Targets, evals: &mut usize) -> (Vec<f64>, Vec<f64>)
where
    F: FnMut(f64) -> (Vec<f64>, Vec<f64>),
{
    let mut panels: Vec<Panel> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gk15(&mut f, w[0], w[1], k, evals))
        .collect();
    let totals = |panels: &[Panel]| {
        let mut v = vec![0.0; k];
        let mut e = vec![0.0; k];
        for p in panels {
            for j in 0..k {
                v[j] += p.value[j];
                e[j] += p.error[j];
            }
        }
        (v, e)
    };
    loop {
        let (v, e) = totals(&panels);
        let target: Vec<f64> = (0..k).map(|j| tol.target(j, v[j])).collect();
        if e.iter().zip(&target).all(|(e, t)| e <= t) || panels.len() >= tol.max_intervals {
            return (v, e);
        }
        // Split the panel with the largest error relative to its component's target.
        let worst = panels
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let score = p
                    .error
                    .iter()
                    .zip(&target)
                    .map(|(e, t)| e / t)
                    .fold(0.0f64, f64::max);
                (i, score)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // Panel is at floating-point resolution; keep it as is.
            panels.push(p);
            return totals(&panels);
        }
        panels.push(gk15(&mut f, p.a, mid, k, evals));
        panels.push(gk15(&mut f, mid, p.b, k, evals));
    }
}

fn breaks_for(lo: f64, hi: f64) -> Vec<f64> {
    if lo < 0.0 && hi > 0.0 {
        vec![lo, 0.0, hi]
    } else {
        vec![lo, hi]
    }
}

/// `∫_box F(ξ) dξ` for `F: ℝ^d → ℝ^k`, `d ≤ 3`, by nesting one-dimensional
/// adaptive rules. Coordinate zero is used as a breakpoint in every direction.
///
/// A coarse pass fixes the magnitude of each component; the refined pass then
/// converts the relative tolerance into absolute targets, shared out across
/// the nesting levels in proportion to the box widths.
pub fn integrate_box<F>(f: F, lower: &[f64], upper: &[f64], k: usize, tol: &Tolerance) -> Result<VectorIntegral>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let d = lower.len();
    if d == 0 || d > MAX_DIM || upper.len() != d {
        return Err(LabError::Quadrature(format!(
            "nested quadrature supports 1 to {MAX_DIM} dimensions, got {d}"
        )));
    }
    if lower.iter().zip(upper).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
        return Err(LabError::Quadrature("box bounds must be finite and ordered".into()));
    }
    let mut evals = 0;
    let mut point = vec![0.0; d];
    let coarse = Targets {
        abs: vec![tol.abs; k],
        rel: 1e-4,
        max_intervals: tol.max_intervals,
    };
    let (scale, _) = nest(&f, lower, upper, k, &coarse, 0, &mut point, &mut evals);
    let fine = Targets {
        abs: scale.iter().map(|s| tol.abs.max(0.5 * tol.rel * s.abs())).collect(),
        rel: tol.rel,
        max_intervals: tol.max_intervals,
    };
    let (value, error) = nest(&f, lower, upper, k, &fine, 0, &mut point, &mut evals);
    Ok(VectorIntegral {
        value,
        error,
        evaluations: evals,
    })
}

#[allow(clippy::too_many_arguments)]
fn nest<F>(
    f: &F,
    lower: &[f64],
    upper: &[f64],
    k: usize,
    tol: &Targets,
    axis: usize,
    point: &mut Vec<f64>,
    evals: &mut usize,
) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let d = lower.len();
    let breaks = breaks_for(lower[axis], upper[axis]);
    let width = upper[axis] - lower[axis];
    let inner = Targets {
        abs: tol.abs.iter().map(|a| a / width).collect(),
        rel: tol.rel,
        max_intervals: tol.max_intervals,
    };
    let mut inner_evals = 0;
    let out = adaptive_1d(
        |x| {
            point[axis] = x;
            if axis + 1 == d {
                (f(point), vec![0.0; k])
            } else {
                let mut local = point.clone();
                nest(f, lower, upper, k, &inner, axis + 1, &mut local, &mut inner_evals)
            }
        },
        &breaks,
        k,
        tol,
        evals,
    );
    *evals += inner_evals;
    out
}
