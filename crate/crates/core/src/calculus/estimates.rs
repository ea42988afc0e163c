//! Pointwise certification of the gauge estimates over a point cloud.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fd_subgradient, fd_sublaplacian, FD_STEP, LAPLACIAN_OUTER_STEP};
use crate::error::{invalid, LabError, Result};
use crate::geometry::{Point, Space};
use crate::rng::{stream_rng, streams};

/// Number of RNG shards a cloud is split into; fixed so that the cloud does
/// not depend on the worker count.
const CLOUD_SHARDS: usize = 64;

pub const ESTIMATE_NAMES: [&str; 5] = [
    "grad_lower",
    "grad_upper",
    "laplacian_upper",
    "cross_upper",
    "comparison_upper",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    pub name: String,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub argmin: Vec<f64>,
    pub argmax: Vec<f64>,
    pub sample_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub space: String,
    pub alpha: f64,
    pub exclusion_radius: f64,
    /// Points dropped because they fell inside the buffer.
    pub excluded: usize,
    pub entries: Vec<EstimateEntry>,
}

impl EstimateReport {
    pub fn entry(&self, name: &str) -> Option<&EstimateEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn all_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.min_ratio.is_finite() && e.max_ratio.is_finite())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,min,max,n,exclusion_radius\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{:e},{:e},{},{:e}\n",
                e.name, e.min_ratio, e.max_ratio, e.sample_count, self.exclusion_radius
            ));
        }
        out
    }
}

/// How far the nested stencils reach from `p`.
fn stencil_reach(space: &Space, p: &[f64]) -> f64 {
    let d = space.ambient_dim();
    let mut frame = vec![0.0; space.n_fields() * d];
    space.frame_coefficients(p, &mut frame);
    let amax = frame.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = space.hom_norm(p).max(1.0);
    2.0 * (FD_STEP + LAPLACIAN_OUTER_STEP) * scale * amax.max(1.0)
}

/// Evaluates the five ratios at one point.
fn ratios(space: &Space, alpha: f64, p: &[f64]) -> [f64; 5] {
    let norm = |q: &[f64]| space.hom_norm(q);
    let abs_x = |q: &[f64]| space.first_layer_norm(q);
    let nval = norm(p);
    let x = abs_x(p);
    let grad_n = fd_subgradient(space, &norm, p);
    let grad_x = fd_subgradient(space, &abs_x, p);
    let grad_len = grad_n.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cross: f64 = grad_n.iter().zip(&grad_x).map(|(a, b)| a * b).sum();
    let lap = fd_sublaplacian(space, &norm, p);
    let grad_ratio = grad_len * (nval / x).powf(alpha);
    [
        grad_ratio,
        grad_ratio,
        lap * nval.powf(2.0 * alpha + 1.0) / x.powf(2.0 * alpha),
        cross * nval.powf(2.0 * alpha + 1.0) / x.powf(2.0 * alpha + 1.0),
        x / nval,
    ]
}

/// Min/max of the gauge estimate ratios over the admissible part of `cloud`.
///
/// A point is admissible when `|x|` and `N` exceed `exclusion_radius` and the
/// FD stencils stay clear of any further non-smooth locus of the gauge.
pub fn check_estimates(
    space: &Space,
    alpha: f64,
    cloud: &[Point],
    exclusion_radius: f64,
) -> Result<EstimateReport> {
    if !(exclusion_radius >= 0.0 && exclusion_radius.is_finite()) {
        return Err(invalid("exclusion_radius", "must be finite and non-negative"));
    }
    if !alpha.is_finite() {
        return Err(invalid("alpha", "must be finite"));
    }
    for pt in cloud {
        space.check_dim(pt)?;
    }
    let evaluated: Vec<Option<[f64; 5]>> = cloud
        .par_iter()
        .map(|pt| {
            let p = pt.coords();
            let reach = stencil_reach(space, p);
            if space.first_layer_norm(p) <= exclusion_radius
                || space.hom_norm(p) <= exclusion_radius
                || space.extra_singular_distance(p) <= exclusion_radius.max(reach)
            {
                return None;
            }
            Some(ratios(space, alpha, p))
        })
        .collect();

    let mut entries: Vec<EstimateEntry> = ESTIMATE_NAMES
        .iter()
        .map(|name| EstimateEntry {
            name: name.to_string(),
            min_ratio: f64::INFINITY,
            max_ratio: f64::NEG_INFINITY,
            argmin: Vec::new(),
            argmax: Vec::new(),
            sample_count: 0,
        })
        .collect();
    let mut excluded = 0;
    for (pt, r) in cloud.iter().zip(&evaluated) {
        let Some(r) = r else {
            excluded += 1;
            continue;
        };
        for (e, v) in entries.iter_mut().zip(r) {
            if !v.is_finite() {
                return Err(LabError::NonFinite {
                    label: e.name.clone(),
                    point: pt.coords().to_vec(),
                });
            }
            e.sample_count += 1;
            if *v < e.min_ratio {
                e.min_ratio = *v;
                e.argmin = pt.coords().to_vec();
            }
            if *v > e.max_ratio {
                e.max_ratio = *v;
                e.argmax = pt.coords().to_vec();
            }
        }
    }
    if entries[0].sample_count == 0 {
        return Err(LabError::EmptyCloud(exclusion_radius));
    }
    Ok(EstimateReport {
        space: space.kind().name().to_string(),
        alpha,
        exclusion_radius,
        excluded,
        entries,
    })
}

/// `count` points with `N` log-uniform in `[n_min, n_max]` and a gaussian
/// angular profile scaled to the unit ball's coordinate extents.
pub fn sample_cloud(space: &Space, count: usize, n_min: f64, n_max: f64, seed: u64) -> Result<Vec<Point>> {
    if !(n_min > 0.0 && n_max >= n_min && n_max.is_finite()) {
        return Err(invalid("cloud", format!("need 0 < n_min <= n_max, got [{n_min}, {n_max}]")));
    }
    let bounds = space.coordinate_bounds();
    let per = count.div_ceil(CLOUD_SHARDS);
    let shards: Vec<Vec<Point>> = (0..CLOUD_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let start = shard * per;
            let end = ((shard + 1) * per).min(count);
            let mut rng = stream_rng(seed, streams::CLOUD + shard as u64);
            let mut out = Vec::with_capacity(end.saturating_sub(start));
            for _ in start..end {
                let point = loop {
                    let z: Vec<f64> = bounds
                        .iter()
                        .map(|b| b * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    let nz = space.hom_norm(&z);
                    if nz > 0.0 && nz.is_finite() {
                        let u: f64 = rng.random();
                        let target = n_min * (n_max / n_min).powf(u);
                        break space.dilate_unchecked(target / nz, &z);
                    }
                };
                out.push(Point::new(space, point).expect("finite coordinates"));
            }
            out
        })
        .collect();
    Ok(shards.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_space, SpaceKind};

    #[test]
    fn kaplan_ratios_are_exactly_one() {
        let h = make_space(SpaceKind::heisenberg(1, 16.0)).unwrap();
        let cloud = sample_cloud(&h, 500, 0.1, 10.0, 3).unwrap();
        let rep = check_estimates(&h, 1.0, &cloud, 1e-3).unwrap();
        let g = rep.entry("grad_upper").unwrap();
        assert!((g.min_ratio - 1.0).abs() < 1e-8 && (g.max_ratio - 1.0).abs() < 1e-8, "{g:?}");
        assert!(rep.all_finite());
        assert!(rep.to_csv().lines().count() == 6);
    }

    #[test]
    fn cloud_norms_in_range_and_deterministic() {
        let g = make_space(SpaceKind::Grushin { n: 2, m: 1, eta: 2.0 }).unwrap();
        let a = sample_cloud(&g, 300, 0.1, 10.0, 7).unwrap();
        let b = sample_cloud(&g, 300, 0.1, 10.0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
        for p in &a {
            let n = g.hom_norm(p);
            assert!((0.1 - 1e-12..=10.0 + 1e-9).contains(&n));
        }
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let h = make_space(SpaceKind::heisenberg(1, 16.0)).unwrap();
        let cloud = vec![Point::new(&h, vec![0.0, 0.0, 1.0]).unwrap()];
        assert!(matches!(check_estimates(&h, 1.0, &cloud, 1e-3), Err(LabError::EmptyCloud(_))));
    }
}
