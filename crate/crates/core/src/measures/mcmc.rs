//! Random-walk Metropolis sampling of `μ` in dilation-adapted coordinates.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{log_density_unnormalized, MeasureSpec};
use crate::error::{invalid, LabError, Result};
use crate::geometry::{Point, Space};
use crate::rng::{stream_rng, streams, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    pub chains: usize,
    pub burn_in: usize,
    /// Steps after burn-in used to measure acceptance and autocorrelation.
    pub pilot: usize,
    pub target_acceptance: f64,
    /// Thinning is chosen so that the thinned chain has IAT about this value.
    pub thinned_iat: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            chains: 4,
            burn_in: 10_000,
            pilot: 5_000,
            target_acceptance: 0.3,
            thinned_iat: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub acceptance_rate: f64,
    pub ess_per_coordinate: Vec<f64>,
    pub burn_in: usize,
    pub thinning: usize,
    pub chain_lengths: Vec<usize>,
    /// Frozen proposal multiplier of each chain.
    pub step_multipliers: Vec<f64>,
}

impl ChainMeta {
    pub fn min_ess(&self) -> f64 {
        self.ess_per_coordinate.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Draws from `μ`, concatenated chain by chain.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    space: Space,
    p: f64,
    seed: u64,
    points: Vec<Point>,
    meta: ChainMeta,
}

impl SampleSet {
    pub(crate) fn from_parts(space: Space, p: f64, seed: u64, points: Vec<Point>, meta: ChainMeta) -> Result<Self> {
        if meta.chain_lengths.iter().sum::<usize>() != points.len() {
            return Err(LabError::SampleFile("chain lengths do not add up to the point count".into()));
        }
        Ok(SampleSet {
            space,
            p,
            seed,
            points,
            meta,
        })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn meta(&self) -> &ChainMeta {
        &self.meta
    }

    pub fn check_spec(&self, spec: &MeasureSpec) -> Result<()> {
        if self.space != spec.space || self.p != spec.p {
            return Err(LabError::SpecMismatch(format!(
                "samples drawn for {} with p = {}, integrand wants {} with p = {}",
                self.space.kind().name(),
                self.p,
                spec.space.kind().name(),
                spec.p
            )));
        }
        Ok(())
    }

    /// Contiguous index ranges, `per_chain` per chain, never straddling chains.
    pub fn batches(&self, per_chain: usize) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for len in &self.meta.chain_lengths {
            let k = per_chain.min(*len).max(1);
            for b in 0..k {
                let lo = start + b * len / k;
                let hi = start + (b + 1) * len / k;
                if hi > lo {
                    out.push(lo..hi);
                }
            }
            start += len;
        }
        out
    }

    /// Index ranges of the individual chains.
    pub fn chain_ranges(&self) -> Vec<Range<usize>> {
        self.batches(1)
    }
}

/// Integrated autocorrelation time with Sokal's adaptive window `M >= 5 τ(M)`.
pub fn integrated_autocorrelation_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0 = dev.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for t in 1..n / 2 {
        let ct = dev[..n - t].iter().zip(&dev[t..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        tau += 2.0 * ct / c0;
        if t as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

struct Chain<'a> {
    spec: &'a MeasureSpec,
    rng: StreamRng,
    xi: Vec<f64>,
    proposal: Vec<f64>,
    logp: f64,
    scales: Vec<f64>,
    log_mult: f64,
}

impl Chain<'_> {
    /// One Metropolis step; returns whether the move was accepted.
    fn step(&mut self) -> bool {
        let mult = self.log_mult.exp();
        for ((q, x), s) in self.proposal.iter_mut().zip(&self.xi).zip(&self.scales) {
            let z: f64 = self.rng.sample(StandardNormal);
            *q = x + mult * s * z;
        }
        let lp = log_density_unnormalized(self.spec, &self.proposal);
        let u: f64 = self.rng.random();
        if u.ln() < lp - self.logp {
            std::mem::swap(&mut self.xi, &mut self.proposal);
            self.logp = lp;
            true
        } else {
            false
        }
    }
}

struct Warm<'a> {
    chain: Chain<'a>,
    pilot_acceptance: f64,
    iat: f64,
}

const ADAPT_BATCH: usize = 100;

fn warm_up<'a>(spec: &'a MeasureSpec, seed: u64, k: usize, opts: &SamplerOptions) -> Result<Warm<'a>> {
    let mut rng = stream_rng(seed, streams::CHAIN + k as u64);
    let scales = spec.coordinate_extent(spec.typical_radius());
    let d = scales.len();
    let xi: Vec<f64> = scales.iter().map(|s| 0.5 * s * rng.sample::<f64, _>(StandardNormal)).collect();
    let logp = log_density_unnormalized(spec, &xi);
    let mut chain = Chain {
        spec,
        rng,
        xi,
        proposal: vec![0.0; d],
        logp,
        scales,
        log_mult: (2.38 / (d as f64).sqrt()).ln(),
    };
    let mut batch_acc = 0;
    for it in 0..opts.burn_in {
        batch_acc += chain.step() as usize;
        if (it + 1) % ADAPT_BATCH == 0 {
            let j = (it + 1) / ADAPT_BATCH;
            let rate = batch_acc as f64 / ADAPT_BATCH as f64;
            chain.log_mult += 2.0 * (rate - opts.target_acceptance) / (j as f64).sqrt();
            batch_acc = 0;
        }
    }
    let mut traces = vec![Vec::with_capacity(opts.pilot); d + 1];
    let mut accepted = 0;
    for _ in 0..opts.pilot {
        accepted += chain.step() as usize;
        for (tr, v) in traces.iter_mut().zip(&chain.xi) {
            tr.push(*v);
        }
        traces[d].push(chain.logp);
    }
    let pilot_acceptance = accepted as f64 / opts.pilot.max(1) as f64;
    if !(pilot_acceptance > 0.1 && pilot_acceptance < 0.7) {
        return Err(LabError::Adaptation(format!(
            "chain {k}: acceptance {pilot_acceptance:.3} after {} adaptive steps (step multiplier {:.3e})",
            opts.burn_in,
            chain.log_mult.exp()
        )));
    }
    let iat = traces
        .iter()
        .map(|t| integrated_autocorrelation_time(t))
        .fold(1.0, f64::max);
    Ok(Warm {
        chain,
        pilot_acceptance,
        iat,
    })
}

/// `n` draws from `μ` with the default sampler settings.
pub fn sample(spec: &MeasureSpec, n: usize, seed: u64) -> Result<SampleSet> {
    sample_with(spec, n, seed, &SamplerOptions::default())
}

pub fn sample_with(spec: &MeasureSpec, n: usize, seed: u64, opts: &SamplerOptions) -> Result<SampleSet> {
    if n == 0 {
        return Err(invalid("n", "need at least one sample"));
    }
    if opts.chains == 0 {
        return Err(invalid("chains", "need at least one chain"));
    }
    let warm: Vec<Warm<'_>> = (0..opts.chains)
        .into_par_iter()
        .map(|k| warm_up(spec, seed, k, opts))
        .collect::<Result<_>>()?;
    let thinning = warm
        .iter()
        .map(|w| (w.iat / opts.thinned_iat).ceil() as usize)
        .max()
        .unwrap_or(1)
        .max(1);
    let lengths: Vec<usize> = (0..opts.chains)
        .map(|k| n / opts.chains + usize::from(k < n % opts.chains))
        .collect();
    let step_multipliers: Vec<f64> = warm.iter().map(|w| w.chain.log_mult.exp()).collect();
    let pilot_rates: Vec<f64> = warm.iter().map(|w| w.pilot_acceptance).collect();
    let runs: Vec<(Vec<Point>, usize, usize)> = warm
        .into_par_iter()
        .zip(lengths.par_iter())
        .map(|(w, len)| {
            let mut chain = w.chain;
            let mut pts = Vec::with_capacity(*len);
            let mut acc = 0;
            for _ in 0..*len {
                for _ in 0..thinning {
                    acc += chain.step() as usize;
                }
                pts.push(Point::new(&spec.space, chain.xi.clone()).expect("finite chain state"));
            }
            (pts, acc, len * thinning)
        })
        .collect();
    let (acc, steps) = runs.iter().fold((0, 0), |(a, s), r| (a + r.1, s + r.2));
    let acceptance_rate = if steps > 0 {
        acc as f64 / steps as f64
    } else {
        pilot_rates.iter().sum::<f64>() / pilot_rates.len() as f64
    };
    let d = spec.space.ambient_dim();
    let ess_per_coordinate = (0..d)
        .map(|c| {
            runs.iter()
                .map(|(pts, _, _)| {
                    let series: Vec<f64> = pts.iter().map(|p| p[c]).collect();
                    series.len() as f64 / integrated_autocorrelation_time(&series)
                })
                .sum()
        })
        .collect();
    let points: Vec<Point> = runs.into_iter().flat_map(|r| r.0).collect();
    Ok(SampleSet {
        space: spec.space.clone(),
        p: spec.p,
        seed,
        points,
        meta: ChainMeta {
            acceptance_rate,
            ess_per_coordinate,
            burn_in: opts.burn_in,
            thinning,
            chain_lengths: lengths,
            step_multipliers,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_space, SpaceKind};

    #[test]
    fn iat_of_white_noise_is_about_one() {
        let mut rng = stream_rng(1, 0);
        let s: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        let tau = integrated_autocorrelation_time(&s);
        assert!((tau - 1.0).abs() < 0.1, "{tau}");
        // AR(1) with φ = 0.8 has τ = (1 + φ)/(1 - φ) = 9.
        let mut x = 0.0;
        let ar: Vec<f64> = s
            .iter()
            .map(|e| {
                x = 0.8 * x + e;
                x
            })
            .collect();
        let tau = integrated_autocorrelation_time(&ar);
        assert!((tau - 9.0).abs() < 1.5, "{tau}");
    }

    #[test]
    fn sampler_is_deterministic_and_well_mixed() {
        let spec = MeasureSpec::new(make_space(SpaceKind::heisenberg(1, 16.0)).unwrap(), 2.0).unwrap();
        let a = sample(&spec, 4_000, 5).unwrap();
        let b = sample(&spec, 4_000, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4_000);
        let m = a.meta();
        assert!(m.acceptance_rate > 0.1 && m.acceptance_rate < 0.7);
        assert!(m.min_ess() > 0.1 * 4_000.0, "{m:?}");
    }
}
