//! Importance-sampling estimate of `Z = ∫ e^{-N^p} dξ`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::MeasureSpec;
use crate::error::{invalid, LabError, Result};
use crate::rng::{stream_rng, streams};

/// Fixed number of independent proposal blocks.
pub const IS_BLOCKS: usize = 32;
const STUDENT_NU: f64 = 3.0;
const MIN_BUDGET: usize = 10_000;
/// Hill tail index below which the weight variance is treated as infinite.
const MIN_TAIL_INDEX: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Kish effective sample size `(Σw)² / Σw²`.
    pub ess: f64,
    pub tail_index: f64,
    pub budget: usize,
}

impl ZEstimate {
    pub fn relative_stderr(&self) -> f64 {
        self.stderr / self.estimate
    }
}

/// Product proposal: `∝ exp(-|x|^p / 2)` on the first block, Student-t on the
/// remaining coordinates with scales matched to the dilation weights.
struct Proposal {
    n1: usize,
    p: f64,
    /// `ln ∫ exp(-|x|^p/2) dx`.
    log_first_norm: f64,
    radial: Gamma<f64>,
    t: StudentT<f64>,
    scales: Vec<f64>,
    log_t_const: f64,
}

impl Proposal {
    fn new(spec: &MeasureSpec) -> Proposal {
        let n1 = spec.space.first_layer_dim() as f64;
        let p = spec.p;
        let log_sphere = std::f64::consts::LN_2 + 0.5 * n1 * std::f64::consts::PI.ln() - ln_gamma(0.5 * n1);
        let log_first_norm = log_sphere + n1 / p * std::f64::consts::LN_2 + ln_gamma(n1 / p) - p.ln();
        let r = spec.typical_radius();
        let scales = spec.coordinate_extent(r)[spec.space.first_layer_dim()..].to_vec();
        let nu = STUDENT_NU;
        let log_t_const = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI).ln();
        Proposal {
            n1: spec.space.first_layer_dim(),
            p,
            log_first_norm,
            radial: Gamma::new(n1 / p, 1.0).expect("positive shape"),
            t: StudentT::new(nu).expect("positive degrees of freedom"),
            scales,
            log_t_const,
        }
    }

    /// Draws into `xi` and returns `ln q(ξ)`.
    fn draw<R: Rng>(&self, rng: &mut R, xi: &mut [f64]) -> f64 {
        let g = self.radial.sample(rng);
        let r = (2.0 * g).powf(1.0 / self.p);
        let mut len = 0.0;
        for v in xi[..self.n1].iter_mut() {
            *v = rng.sample(StandardNormal);
            len += *v * *v;
        }
        let len = len.sqrt();
        for v in xi[..self.n1].iter_mut() {
            *v *= r / len;
        }
        let mut logq = -0.5 * r.powf(self.p) - self.log_first_norm;
        for (v, s) in xi[self.n1..].iter_mut().zip(&self.scales) {
            let z: f64 = self.t.sample(rng);
            *v = s * z;
            logq += self.log_t_const - s.ln() - 0.5 * (STUDENT_NU + 1.0) * (z * z / STUDENT_NU).ln_1p();
        }
        logq
    }
}

/// Hill estimator of the tail index of the largest weights.
fn hill_tail_index(log_weights: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = log_weights.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = ((sorted.len() as f64).sqrt() as usize).clamp(10, sorted.len() - 1);
    let threshold = sorted[k];
    let mean_excess: f64 = sorted[..k].iter().map(|lw| lw - threshold).sum::<f64>() / k as f64;
    if mean_excess > 0.0 {
        1.0 / mean_excess
    } else {
        f64::INFINITY
    }
}

/// Importance-sampling estimate of `Z` from `budget` proposal draws.
pub fn estimate_z(spec: &MeasureSpec, budget: usize, seed: u64) -> Result<ZEstimate> {
    if budget < MIN_BUDGET {
        return Err(invalid("budget", format!("need at least {MIN_BUDGET} draws, got {budget}")));
    }
    let proposal = Proposal::new(spec);
    let d = spec.space.ambient_dim();
    let per = budget.div_ceil(IS_BLOCKS);
    let blocks: Vec<Vec<f64>> = (0..IS_BLOCKS)
        .into_par_iter()
        .map(|block| {
            let count = per.min(budget.saturating_sub(block * per));
            let mut rng = stream_rng(seed, streams::IMPORTANCE + block as u64);
            let mut xi = vec![0.0; d];
            (0..count)
                .map(|_| {
                    let logq = proposal.draw(&mut rng, &mut xi);
                    -spec.space.hom_norm(&xi).powf(spec.p) - logq
                })
                .collect()
        })
        .collect();
    let lw: Vec<f64> = blocks.into_iter().flatten().collect();
    if let Some(bad) = lw.iter().find(|v| !v.is_finite()) {
        return Err(LabError::DegenerateProposal(format!("non-finite log weight {bad}")));
    }
    let n = lw.len() as f64;
    let shift = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|v| (v - shift).exp()).collect();
    let sum: f64 = w.iter().sum();
    let sum_sq: f64 = w.iter().map(|v| v * v).sum();
    let mean = sum / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let tail_index = hill_tail_index(&lw);
    if tail_index < MIN_TAIL_INDEX {
        return Err(LabError::DegenerateProposal(format!(
            "weight tail index {tail_index:.3} < {MIN_TAIL_INDEX}: the weight variance is likely infinite"
        )));
    }
    let scale = shift.exp();
    Ok(ZEstimate {
        estimate: mean * scale,
        stderr: (var / n).sqrt() * scale,
        ess: sum * sum / sum_sq,
        tail_index,
        budget,
    })
}
