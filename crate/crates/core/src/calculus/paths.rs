//! Piecewise-horizontal paths and the Carnot-Carathéodory sandwich.
//!
//! Paths are built for the normalised target `δ_{1/N(p)} p` and then dilated,
//! so the constructed length is exactly homogeneous of degree one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::geometry::{Space, SpaceKind};

/// RK4 substeps per move; the frames are polynomial in the coordinates.
const SUBSTEPS: usize = 64;
/// Polygon used to approximate circles around the Greiner centre.
const GREINER_POLYGON: usize = 16;

/// Constant control `u` held for `duration`: `ξ' = Σ_i u_i X_i(ξ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub control: Vec<f64>,
    pub duration: f64,
}

impl Move {
    fn along(ell: usize, field: usize, signed_length: f64) -> Move {
        let mut control = vec![0.0; ell];
        control[field] = signed_length.signum();
        Move {
            control,
            duration: signed_length.abs(),
        }
    }

    pub fn length(&self) -> f64 {
        self.control.iter().map(|c| c * c).sum::<f64>().sqrt() * self.duration
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizontalPath {
    pub moves: Vec<Move>,
}

impl HorizontalPath {
    pub fn length(&self) -> f64 {
        self.moves.iter().map(Move::length).sum()
    }

    /// Integrates the moves from the origin.
    pub fn endpoint(&self, space: &Space) -> Vec<f64> {
        let mut xi = space.identity();
        for m in &self.moves {
            flow(space, &mut xi, &m.control, m.duration);
        }
        xi
    }

    fn dilate(mut self, lambda: f64) -> Self {
        for m in &mut self.moves {
            m.duration *= lambda;
        }
        self
    }
}

fn velocity(space: &Space, xi: &[f64], control: &[f64], frame: &mut [f64], out: &mut [f64]) {
    let d = space.ambient_dim();
    space.frame_coefficients(xi, frame);
    out.iter_mut().for_each(|v| *v = 0.0);
    for (i, c) in control.iter().enumerate() {
        if *c != 0.0 {
            for k in 0..d {
                out[k] += c * frame[i * d + k];
            }
        }
    }
}

fn flow(space: &Space, xi: &mut [f64], control: &[f64], duration: f64) {
    if duration == 0.0 {
        return;
    }
    let d = space.ambient_dim();
    let mut frame = vec![0.0; space.n_fields() * d];
    let mut k = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut tmp = vec![0.0; d];
    let h = duration / SUBSTEPS as f64;
    for _ in 0..SUBSTEPS {
        velocity(space, xi, control, &mut frame, &mut k[0]);
        for s in 1..4 {
            let c = if s == 3 { h } else { 0.5 * h };
            for j in 0..d {
                tmp[j] = xi[j] + c * k[s - 1][j];
            }
            let (_, rest) = k.split_at_mut(s);
            velocity(space, &tmp, control, &mut frame, &mut rest[0]);
        }
        for j in 0..d {
            xi[j] += h / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Log-spaced trial scales for the one-parameter path families.
fn scale_grid() -> impl Iterator<Item = f64> {
    (0..=240).map(|i| 10f64.powf(-3.0 + 4.0 * i as f64 / 240.0))
}

fn straight(ell: usize, dir: &[f64]) -> Option<Move> {
    let len = norm(dir);
    (len > 0.0).then(|| {
        let mut control = vec![0.0; ell];
        for (c, v) in control.iter_mut().zip(dir) {
            *c = v / len;
        }
        Move { control, duration: len }
    })
}

fn step_two_path(space: &Space, q: &[f64], n: usize, m: usize) -> Result<HorizontalPath> {
    let mut moves: Vec<Move> = straight(n, &q[..n]).into_iter().collect();
    let target = &q[n..];
    if norm(target) == 0.0 {
        return Ok(HorizontalPath { moves });
    }
    // t-increment of the unit square loop in each coordinate plane.
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let mut k = DMatrix::zeros(m, pairs.len());
    for (col, &(a, b)) in pairs.iter().enumerate() {
        let inc = HorizontalPath { moves: square(n, a, b, 1.0) }.endpoint(space);
        for j in 0..m {
            k[(j, col)] = inc[n + j];
        }
    }
    let svd = k.svd(true, true);
    let areas = svd
        .solve(&DVector::from_column_slice(target), 1e-12)
        .map_err(|e| LabError::PathConstruction(e.to_string()))?;
    for (col, &(a, b)) in pairs.iter().enumerate() {
        let area = areas[col];
        if area.abs() > 1e-300 {
            let side = area.abs().sqrt();
            moves.extend(if area > 0.0 { square(n, a, b, side) } else { square(n, b, a, side) });
        }
    }
    Ok(HorizontalPath { moves })
}

fn square(ell: usize, a: usize, b: usize, side: f64) -> Vec<Move> {
    vec![
        Move::along(ell, a, side),
        Move::along(ell, b, side),
        Move::along(ell, a, -side),
        Move::along(ell, b, -side),
    ]
}

fn grushin_path(q: &[f64], n: usize, m: usize, eta: f64) -> HorizontalPath {
    let ell = n + m;
    let x = &q[..n];
    let y = &q[n..];
    let ylen = norm(y);
    let pad = |v: &[f64]| {
        let mut c = v.to_vec();
        c.resize(ell, 0.0);
        c
    };
    let xmove = |dir: &[f64]| straight(ell, &pad(dir));
    if ylen == 0.0 {
        return HorizontalPath { moves: xmove(x).into_iter().collect() };
    }
    let xlen = norm(x);
    let u: Vec<f64> = if xlen > 0.0 {
        x.iter().map(|v| v / xlen).collect()
    } else {
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        e
    };
    let cost = |s: f64| {
        let back: f64 = x.iter().zip(&u).map(|(a, b)| (a - s * b).powi(2)).sum::<f64>().sqrt();
        s + ylen / s.powf(eta) + back
    };
    let s = scale_grid().fold(f64::NAN, |best, s| if best.is_nan() || cost(s) < cost(best) { s } else { best });
    let su: Vec<f64> = u.iter().map(|v| s * v).collect();
    let mut moves = Vec::new();
    moves.extend(xmove(&su));
    let mut control = vec![0.0; ell];
    for (k, v) in y.iter().enumerate() {
        control[n + k] = v / ylen;
    }
    moves.push(Move {
        control,
        duration: ylen / s.powf(eta),
    });
    let back: Vec<f64> = x.iter().zip(&su).map(|(a, b)| a - b).collect();
    moves.extend(xmove(&back));
    HorizontalPath { moves }
}

fn greiner_polygon(n: usize, radius: f64, clockwise: bool) -> Vec<Move> {
    let ell = 2 * n;
    let k = GREINER_POLYGON;
    let vertex = |i: usize| {
        let th = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
        let th = if clockwise { -th } else { th };
        (radius * th.cos(), radius * th.sin())
    };
    (0..k)
        .filter_map(|i| {
            let (a0, b0) = vertex(i);
            let (a1, b1) = vertex(i + 1);
            let mut dir = vec![0.0; ell];
            dir[0] = a1 - a0;
            dir[n] = b1 - b0;
            straight(ell, &dir)
        })
        .collect()
}

fn greiner_path(space: &Space, q: &[f64], n: usize, zeta: u32) -> HorizontalPath {
    let ell = 2 * n;
    let t = q[2 * n];
    let mut moves = Vec::new();
    if t != 0.0 {
        // t-increment of the unit counter-clockwise polygon.
        let mut unit = vec![Move::along(ell, 0, 1.0)];
        unit.extend(greiner_polygon(n, 1.0, false));
        let c = HorizontalPath { moves: unit }.endpoint(space)[2 * n];
        let clockwise = (t > 0.0) != (c > 0.0);
        let rho = (t.abs() / c.abs()).powf(1.0 / (2.0 * zeta as f64));
        moves.push(Move::along(ell, 0, rho));
        moves.extend(greiner_polygon(n, rho, clockwise));
        moves.push(Move::along(ell, 0, -rho));
    }
    moves.extend(straight(ell, &q[..2 * n]));
    HorizontalPath { moves }
}

fn filiform_path(q: &[f64], n: usize) -> Result<HorizontalPath> {
    let x1 = q[0];
    let x2 = q[1];
    let deficits: Vec<f64> = (1..n)
        .map(|k| {
            let mut fact = 1.0;
            for j in 1..=k {
                fact *= j as f64;
            }
            q[k + 1] - x2 * x1.powi(k as i32) / fact
        })
        .collect();
    let mut tail = Vec::new();
    if x1 != 0.0 {
        tail.push(Move::along(2, 0, x1));
    }
    if x2 != 0.0 {
        tail.push(Move::along(2, 1, x2));
    }
    if deficits.iter().all(|d| *d == 0.0) {
        return Ok(HorizontalPath { moves: tail });
    }
    let dim = n - 1;
    let loops_for = |scale: f64| -> Option<Vec<(f64, f64)>> {
        let nodes: Vec<f64> = (1..=dim).map(|i| scale * i as f64 / dim as f64).collect();
        let mut a = DMatrix::zeros(dim, dim);
        let mut fact = 1.0;
        for k in 1..=dim {
            fact *= k as f64;
            for (i, node) in nodes.iter().enumerate() {
                a[(k - 1, i)] = node.powi(k as i32) / fact;
            }
        }
        let lens = a.lu().solve(&DVector::from_column_slice(&deficits))?;
        Some(nodes.into_iter().zip(lens.iter().copied()).collect())
    };
    let cost = |loops: &[(f64, f64)]| loops.iter().map(|(a, l)| 2.0 * a + 2.0 * l.abs()).sum::<f64>();
    let best = scale_grid()
        .filter_map(loops_for)
        .filter(|l| l.iter().all(|(_, len)| len.is_finite()))
        .min_by(|a, b| cost(a).total_cmp(&cost(b)))
        .ok_or_else(|| LabError::PathConstruction("singular filiform loop system".into()))?;
    let mut moves = Vec::new();
    for (a, len) in best {
        moves.push(Move::along(2, 0, a));
        moves.push(Move::along(2, 1, len));
        moves.push(Move::along(2, 0, -a));
        moves.push(Move::along(2, 1, -len));
    }
    moves.extend(tail);
    Ok(HorizontalPath { moves })
}

/// A piecewise-horizontal path from the origin to `p` with at most `budget`
/// constant-control segments.
pub fn horizontal_path(space: &Space, p: &[f64], budget: usize) -> Result<HorizontalPath> {
    space.check_dim(p)?;
    let scale = space.hom_norm(p);
    if scale == 0.0 {
        return Ok(HorizontalPath { moves: Vec::new() });
    }
    let q = space.dilate(1.0 / scale, p)?;
    let path = match space.kind() {
        SpaceKind::StepTwo { n, m, .. } => step_two_path(space, &q, *n, *m)?,
        SpaceKind::Grushin { n, m, eta } => grushin_path(&q, *n, *m, *eta),
        SpaceKind::Greiner { n, zeta } => greiner_path(space, &q, *n, *zeta),
        SpaceKind::Filiform { n } => filiform_path(&q, *n)?,
    };
    if path.moves.len() > budget {
        return Err(LabError::PathConstruction(format!(
            "needs {} segments, budget is {budget}",
            path.moves.len()
        )));
    }
    let end = path.endpoint(space);
    let miss = norm(&end.iter().zip(&q).map(|(a, b)| a - b).collect::<Vec<_>>());
    if !(miss < 1e-7) {
        return Err(LabError::PathConstruction(format!(
            "integrated endpoint misses the target by {miss:e}"
        )));
    }
    Ok(path.dilate(scale))
}

/// `(lower, upper)` bounds for `d(0, p)`: the euclidean length of the
/// unit-speed coordinates of `p`, and the length of a constructed path.
pub fn cc_sandwich(space: &Space, p: &[f64], path_budget: usize) -> Result<(f64, f64)> {
    space.check_dim(p)?;
    if p.iter().all(|v| *v == 0.0) {
        return Err(invalid("p", "the sandwich is taken at a point other than the origin"));
    }
    let lower = norm(&p[..space.horizontal_coordinate_dim()]);
    let upper = horizontal_path(space, p, path_budget)?.length();
    if lower > upper * (1.0 + 1e-12) {
        return Err(LabError::PathConstruction(format!(
            "path length {upper} below the projection bound {lower}"
        )));
    }
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::sample_cloud;
    use crate::geometry::make_space;

    #[test]
    fn first_layer_points_are_straight_segments() {
        let h = make_space(SpaceKind::heisenberg(1, 16.0)).unwrap();
        let (lo, up) = cc_sandwich(&h, &[0.6, -0.8, 0.0], 64).unwrap();
        assert!((lo - 1.0).abs() < 1e-15 && (up - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vertical_points_scale_with_the_norm() {
        let h = make_space(SpaceKind::heisenberg(1, 16.0)).unwrap();
        let ratios: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|t| {
                let p = [0.0, 0.0, *t];
                cc_sandwich(&h, &p, 64).unwrap().1 / h.hom_norm(&p)
            })
            .collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-9 * ratios[0]);
        }
        // unit square loop encloses area 1 and lifts t by 1 for B = J.
        let area_one = cc_sandwich(&h, &[0.0, 0.0, 1.0], 64).unwrap().1;
        assert!((area_one - 4.0).abs() < 1e-9, "{area_one}");
    }

    #[test]
    fn budget_is_enforced() {
        let h = make_space(SpaceKind::heisenberg(1, 16.0)).unwrap();
        assert!(matches!(
            cc_sandwich(&h, &[1.0, 0.0, 1.0], 3),
            Err(LabError::PathConstruction(_))
        ));
        assert!(cc_sandwich(&h, &[0.0, 0.0, 0.0], 64).is_err());
    }

    #[test]
    fn sandwich_ratios_are_bounded_on_every_kind() {
        let spaces = [
            make_space(SpaceKind::heisenberg(2, 16.0)).unwrap(),
            make_space(SpaceKind::Grushin { n: 2, m: 1, eta: 2.0 }).unwrap(),
            make_space(SpaceKind::Greiner { n: 1, zeta: 2 }).unwrap(),
            make_space(SpaceKind::Filiform { n: 4 }).unwrap(),
        ];
        for s in &spaces {
            let cloud = sample_cloud(s, 200, 0.1, 10.0, 17).unwrap();
            let mut hi: f64 = 0.0;
            let mut lo_max: f64 = 0.0;
            for p in &cloud {
                let (lo, up) = cc_sandwich(s, p, 64).unwrap();
                let n = s.hom_norm(p);
                hi = hi.max(up / n);
                lo_max = lo_max.max(lo / n);
                assert!(lo <= up);
            }
            assert!(hi.is_finite() && hi < 100.0, "{}: upper/N up to {hi}", s.kind().name());
            assert!(lo_max <= 1.0 + 1e-12);
        }
    }
}
