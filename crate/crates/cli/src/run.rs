//! Command dispatch: each command turns a validated config into a JSON
//! report (plus CSV where defined) and a pass/fail status.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use subelliptic_core::calculus::{check_estimates, sample_cloud};
use subelliptic_core::inequalities::{
    almost_hardy_ratio, cheeger_family, cheeger_ratio, constructive_beta_curve, fsobolev_majorant, fsobolev_ratio,
    fsobolev_theta, ratio_suite, sandwich_constant, spi_optimality_probe, spi_required_beta, standard_family,
    tube_family, GrowthFit, ProbeOptions, RatioKind, RatioReport, TestFunction,
};
use subelliptic_core::isoperimetry::{profile_scan, r_exponent, standard_zoo, ProfileVariant};
use subelliptic_core::measures::{
    estimate_z, quadrature_z, read_sample_file, sample, write_sample_file, Integrator, MeasureSpec, SampleSet,
    ZEstimate,
};
use subelliptic_core::quadrature::Tolerance;

use crate::command::{Command, Verify};
use crate::config::{FamilyChoice, MethodChoice, RunConfig, SCHEMA_VERSION};
use crate::error::{CliError, Result};
use crate::manifest::{manifest_path, write_atomic, write_json, RunManifest, ZCacheEntry};

/// Tolerance on the constructive growth exponent, which is formula-driven.
const CONSTRUCTIVE_SIGMA_TOL: f64 = 1e-9;
/// Tolerance on the Kaplan gradient identity of H-type groups.
const KAPLAN_TOL: f64 = 1e-5;
const MIN_ESS: f64 = 100.0;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    /// Exponent of the model isoperimetric profile, where defined.
    pub r: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub passed: bool,
    /// Asserted invariants that did not hold.
    pub failures: Vec<String>,
    /// Estimates flagged as unreliable.
    pub unreliable: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub manifest_hash: String,
    pub exponents: Exponents,
    pub status: Status,
    pub result: Value,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub command: Command,
    pub manifest_hash: String,
    pub status: Status,
    pub report_path: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.status.passed {
            0
        } else {
            1
        }
    }
}

#[derive(Default)]
struct Produced {
    result: Value,
    csv: Option<String>,
    r: Option<f64>,
    failures: Vec<String>,
    unreliable: Vec<String>,
    extra_files: Vec<PathBuf>,
}

struct Ctx {
    config: RunConfig,
    spec: MeasureSpec,
    manifest: RunManifest,
}

impl Ctx {
    fn samples(&mut self) -> Result<SampleSet> {
        let set = match &self.config.samples_file {
            Some(path) => {
                let set = self.manifest.stage("read_samples", || read_sample_file(path))?;
                set.check_spec(&self.spec)?;
                set
            }
            None => {
                let (spec, n, seed) = (&self.spec, self.config.budgets.n_samples, self.config.seed);
                self.manifest.stage("sample", || sample(spec, n, seed))?
            }
        };
        let ess = set.meta().min_ess();
        if ess < MIN_ESS {
            self.manifest
                .warnings
                .push(format!("sample set has effective size {ess:.0} below {MIN_ESS}"));
        }
        Ok(set)
    }

    /// Normaliser of `μ`, recorded in the manifest cache.
    fn normaliser(&mut self, prefer_quadrature: bool) -> Result<ZEstimate> {
        let spec = &self.spec;
        let use_quadrature = prefer_quadrature && spec.space.ambient_dim() <= subelliptic_core::quadrature::MAX_DIM;
        let (z, method) = if use_quadrature {
            let q = self.manifest.stage("z_quadrature", || quadrature_z(spec, &Tolerance::default()))?;
            let z = ZEstimate {
                estimate: q.value,
                stderr: q.stderr,
                ess: 0.0,
                tail_index: 0.0,
                budget: q.n,
            };
            (z, "quadrature")
        } else {
            let (budget, seed) = (self.config.budgets.z_budget, self.config.seed);
            let z = self.manifest.stage("z_importance", || estimate_z(spec, budget, seed))?;
            (z, "importance")
        };
        self.manifest.z_cache.push(ZCacheEntry {
            space: spec.space.kind().name().to_string(),
            p: spec.p,
            method: method.to_string(),
            value: z.estimate,
            stderr: z.stderr,
        });
        Ok(z)
    }

    fn family(&self) -> Vec<TestFunction> {
        let space = &self.spec.space;
        match self.config.inequality.family {
            FamilyChoice::Standard => standard_family(space),
            FamilyChoice::Cheeger => cheeger_family(space),
            FamilyChoice::Tubes => tube_family(&self.config.inequality.tube_radii),
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Runs `command` under `config` with `opts` overriding seed and output
/// directory. The manifest is written first; the report embeds its hash.
pub fn run(command: Command, config: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(out) = &opts.out {
        config.out = out.clone();
    }
    let space = config.validate(&command)?;
    let spec = MeasureSpec::new(space, config.p)?;
    let manifest = RunManifest::new(&config, &command);
    let out = config.out.clone();
    let mpath = manifest_path(&out, &command);
    write_json(&mpath, &manifest)?;

    let mut ctx = Ctx { config, spec, manifest };
    let produced = match command {
        Command::CheckEstimates => check_estimates_cmd(&mut ctx),
        Command::Sample => sample_cmd(&mut ctx, &out),
        Command::Verify(v) => verify_cmd(&mut ctx, v),
        Command::SpiScan => spi_scan_cmd(&mut ctx),
        Command::SpiProbe => spi_probe_cmd(&mut ctx),
        Command::Isoperimetry => isoperimetry_cmd(&mut ctx),
        Command::Cheeger => cheeger_cmd(&mut ctx),
        Command::Report => report_cmd(&out),
    }?;

    let alpha = ctx.spec.space.alpha();
    let r = produced
        .r
        .or_else(|| r_exponent(&ctx.spec.space, ctx.spec.p, ProfileVariant::Main).ok());
    let status = Status {
        passed: produced.failures.is_empty() && produced.unreliable.is_empty(),
        failures: produced.failures,
        unreliable: produced.unreliable,
    };
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: command.to_string(),
        manifest_hash: ctx.manifest.manifest_hash.clone(),
        exponents: Exponents {
            alpha,
            p: ctx.spec.p,
            q: ctx.config.q,
            r,
        },
        status: status.clone(),
        result: produced.result,
    };
    let stem = command.stem();
    let report_path = out.join(format!("{stem}.json"));
    write_json(&report_path, &report)?;
    let mut files = vec![mpath.clone(), report_path.clone()];
    if let Some(csv) = produced.csv {
        let path = out.join(format!("{stem}.csv"));
        write_atomic(&path, csv.as_bytes())?;
        files.push(path);
    }
    files.extend(produced.extra_files);
    write_json(&mpath, &ctx.manifest)?;
    Ok(Outcome {
        command,
        manifest_hash: ctx.manifest.manifest_hash,
        status,
        report_path,
        files,
    })
}

/// Runs `command` inside a dedicated pool of `threads` workers (all cores
/// when `None`).
pub fn run_with_threads(
    command: Command,
    config: &RunConfig,
    opts: &RunOptions,
    threads: Option<usize>,
) -> Result<Outcome> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Threads(e.to_string()))?;
    pool.install(|| run(command, config, opts))
}

fn check_estimates_cmd(ctx: &mut Ctx) -> Result<Produced> {
    let space = &ctx.spec.space;
    let e = &ctx.config.estimates;
    let alpha = e.alpha.unwrap_or(space.alpha());
    let (count, seed) = (ctx.config.budgets.cloud_size, ctx.config.seed);
    let cloud = ctx
        .manifest
        .stage("cloud", || sample_cloud(space, count, e.n_min, e.n_max, seed))?;
    let report = ctx
        .manifest
        .stage("estimates", || check_estimates(space, alpha, &cloud, e.exclusion_radius))?;
    let mut failures = Vec::new();
    for entry in &report.entries {
        if !(entry.min_ratio.is_finite() && entry.max_ratio.is_finite()) {
            failures.push(format!("{}: non-finite ratio range [{}, {}]", entry.name, entry.min_ratio, entry.max_ratio));
        }
    }
    if let Some(lower) = report.entry("grad_lower") {
        if !(lower.min_ratio > 0.0) {
            failures.push(format!("grad_lower: minimum ratio {} is not positive", lower.min_ratio));
        }
        if space.is_h_type() && e.alpha.is_none() {
            let dev = (lower.max_ratio - 1.0).abs().max((lower.min_ratio - 1.0).abs());
            if !(dev < KAPLAN_TOL) {
                failures.push(format!("grad_lower: |∇N| N/|x| deviates from 1 by {dev:e} on an H-type group"));
            }
        }
    }
    Ok(Produced {
        result: serde_json::to_value(&report)?,
        csv: Some(report.to_csv()),
        failures,
        ..Produced::default()
    })
}

fn sample_cmd(ctx: &mut Ctx, out: &Path) -> Result<Produced> {
    let z = ctx.normaliser(false)?;
    let set = ctx.samples()?;
    let path = out.join("samples.bin");
    write_sample_file(&path, &set)?;
    let meta = set.meta();
    let mut failures = Vec::new();
    if !(meta.acceptance_rate > 0.1 && meta.acceptance_rate < 0.7) {
        failures.push(format!("acceptance rate {} is outside (0.1, 0.7)", meta.acceptance_rate));
    }
    if !(meta.min_ess() > MIN_ESS) {
        failures.push(format!("effective sample size {} is not above {MIN_ESS}", meta.min_ess()));
    }
    Ok(Produced {
        result: json!({
            "n": set.len(),
            "seed": set.seed(),
            "file": "samples.bin",
            "chain_meta": meta,
            "z": z,
        }),
        failures,
        extra_files: vec![path],
        ..Produced::default()
    })
}

#[derive(Serialize)]
struct RatioSummary {
    members: usize,
    max_ratio: f64,
    argmax: String,
    min_ratio: f64,
    argmin: String,
}

fn summarize(reports: &[RatioReport]) -> (RatioSummary, Vec<String>) {
    let max = reports.iter().max_by(|a, b| a.ratio.total_cmp(&b.ratio));
    let min = reports.iter().min_by(|a, b| a.ratio.total_cmp(&b.ratio));
    let failures = reports
        .iter()
        .filter(|r| !r.ratio.is_finite())
        .map(|r| format!("{} on {}: ratio {}", r.inequality, r.function, r.ratio))
        .collect();
    let summary = RatioSummary {
        members: reports.len(),
        max_ratio: max.map_or(f64::NAN, |r| r.ratio),
        argmax: max.map(|r| r.function.clone()).unwrap_or_default(),
        min_ratio: min.map_or(f64::NAN, |r| r.ratio),
        argmin: min.map(|r| r.function.clone()).unwrap_or_default(),
    };
    (summary, failures)
}

fn ratio_csv(reports: &[RatioReport]) -> String {
    let mut s = String::from("function,ratio,stderr,lhs,rhs\n");
    for r in reports {
        s.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            csv_field(&r.function),
            r.ratio,
            r.stderr,
            r.lhs.value,
            r.rhs
        ));
    }
    s
}

fn verify_cmd(ctx: &mut Ctx, v: Verify) -> Result<Produced> {
    let family = ctx.family();
    let set;
    let integ = match ctx.config.method {
        MethodChoice::Mc => {
            set = ctx.samples()?;
            Integrator::Mc(&set)
        }
        MethodChoice::Quadrature => Integrator::Quadrature(Tolerance::default()),
    };
    let spec = &ctx.spec;
    let q = ctx.config.q;
    let ineq = &ctx.config.inequality;
    let kind = match v {
        Verify::Ubound => Some(RatioKind::Ubound),
        Verify::MergedUbound => Some(RatioKind::MergedUbound),
        Verify::Hardy => Some(RatioKind::Hardy),
        Verify::Ckn => Some(RatioKind::Ckn),
        _ => None,
    };
    if let Some(kind) = kind {
        let reports = ctx
            .manifest
            .stage("ratios", || ratio_suite(spec, q, &family, &[kind], &integ))?;
        let (summary, failures) = summarize(&reports);
        return Ok(Produced {
            result: json!({ "inequality": kind.name(), "summary": summary, "reports": reports }),
            csv: Some(ratio_csv(&reports)),
            failures,
            ..Produced::default()
        });
    }
    match v {
        Verify::AlmostHardy => {
            let reports = ctx.manifest.stage("ratios", || {
                family
                    .iter()
                    .map(|f| almost_hardy_ratio(spec, ineq.delta, ineq.r0, f, &integ))
                    .collect::<subelliptic_core::Result<Vec<_>>>()
            })?;
            let (summary, failures) = summarize(&reports);
            Ok(Produced {
                result: json!({ "inequality": "almost_hardy", "summary": summary, "reports": reports }),
                csv: Some(ratio_csv(&reports)),
                failures,
                ..Produced::default()
            })
        }
        Verify::Fsobolev => {
            let theta = ineq.theta.unwrap_or_else(|| fsobolev_theta(spec));
            let reports = ctx.manifest.stage("ratios", || {
                family
                    .iter()
                    .map(|f| fsobolev_ratio(spec, f, theta, &integ))
                    .collect::<subelliptic_core::Result<Vec<_>>>()
            })?;
            let majorant = fsobolev_majorant(&reports)?;
            let (summary, mut failures) = summarize(&reports);
            if !majorant.is_finite() {
                failures.push(format!("no finite affine majorant: c1 = {}, c2 = {}", majorant.c1, majorant.c2));
            }
            Ok(Produced {
                result: json!({
                    "inequality": "fsobolev",
                    "theta": theta,
                    "theta_of_measure": fsobolev_theta(spec),
                    "majorant": majorant,
                    "summary": summary,
                    "reports": reports,
                }),
                csv: Some(ratio_csv(&reports)),
                failures,
                ..Produced::default()
            })
        }
        Verify::Spi => {
            let eps = &ineq.eps_grid;
            let betas = ctx.manifest.stage("required_beta", || {
                family
                    .iter()
                    .map(|f| spi_required_beta(spec, q, f, eps, &integ))
                    .collect::<subelliptic_core::Result<Vec<_>>>()
            })?;
            let mut failures = Vec::new();
            let mut order: Vec<usize> = (0..eps.len()).collect();
            order.sort_by(|&a, &b| eps[b].total_cmp(&eps[a]));
            let mut csv = String::from("function,epsilon,beta\n");
            let mut rows = Vec::with_capacity(family.len());
            for (f, b) in family.iter().zip(&betas) {
                let label = f.label();
                if b.iter().any(|v| !v.is_finite()) {
                    failures.push(format!("{label}: non-finite required β"));
                }
                if order.windows(2).any(|w| b[w[1]] < b[w[0]]) {
                    failures.push(format!("{label}: required β decreases as ε decreases"));
                }
                for (e, v) in eps.iter().zip(b) {
                    csv.push_str(&format!("{},{:.12e},{:.12e}\n", csv_field(&label), e, v));
                }
                rows.push(json!({ "function": label, "betas": b }));
            }
            let sup: Vec<f64> = (0..eps.len())
                .map(|i| betas.iter().map(|b| b[i]).fold(0.0, f64::max))
                .collect();
            Ok(Produced {
                result: json!({ "inequality": "spi", "epsilons": eps, "sup_beta": sup, "members": rows }),
                csv: Some(csv),
                failures,
                ..Produced::default()
            })
        }
        _ => unreachable!("ratio kinds handled above"),
    }
}

fn growth_csv(fit: &GrowthFit) -> String {
    let mut s = String::from("epsilon,log_beta\n");
    for (e, b) in fit.epsilons.iter().zip(&fit.log_betas) {
        s.push_str(&format!("{e:.12e},{b:.12e}\n"));
    }
    s
}

fn spi_scan_cmd(ctx: &mut Ctx) -> Result<Produced> {
    let constant = match ctx.config.spi.constant {
        Some(c) => c,
        None => {
            let space = &ctx.spec.space;
            let e = &ctx.config.estimates;
            let b = &ctx.config.budgets;
            let cloud = ctx
                .manifest
                .stage("cloud", || sample_cloud(space, b.cloud_size, e.n_min, e.n_max, ctx.config.seed))?;
            ctx.manifest
                .stage("sandwich", || sandwich_constant(space, ctx.spec.p, &cloud, b.path_budget))?
        }
    };
    let fit = constructive_beta_curve(&ctx.spec, ctx.config.q, &ctx.config.spi.eps_grid, constant)?;
    let mut failures = Vec::new();
    let err = (fit.fitted_sigma - fit.target_sigma).abs();
    if !(err <= CONSTRUCTIVE_SIGMA_TOL * fit.target_sigma.max(1.0)) {
        failures.push(format!("fitted σ {} differs from {} by {err:e}", fit.fitted_sigma, fit.target_sigma));
    }
    if !fit.monotone {
        failures.push("β is not monotone along the ε grid".into());
    }
    Ok(Produced {
        result: serde_json::to_value(&fit)?,
        csv: Some(growth_csv(&fit)),
        failures,
        ..Produced::default()
    })
}

fn spi_probe_cmd(ctx: &mut Ctx) -> Result<Produced> {
    let z = ctx.normaliser(true)?;
    let spec = ctx.spec.clone().with_z(z);
    let opts = ProbeOptions {
        epsilon_scale: ctx.config.spi.epsilon_scale,
        ..ProbeOptions::default()
    };
    let t_grid = &ctx.config.spi.t_grid;
    let fit = ctx
        .manifest
        .stage("probe", || spi_optimality_probe(&spec, 2.0, t_grid, &opts))?;
    let mut failures = Vec::new();
    let floor = fit.target_sigma - ctx.config.spi.sigma_tolerance;
    if !(fit.fitted_sigma >= floor) {
        failures.push(format!("fitted σ {} is below {floor}", fit.fitted_sigma));
    }
    let mut unreliable = Vec::new();
    if !fit.monotone {
        unreliable.push("β is not monotone along the t grid".into());
    }
    Ok(Produced {
        result: serde_json::to_value(&fit)?,
        csv: Some(growth_csv(&fit)),
        failures,
        unreliable,
        ..Produced::default()
    })
}

fn isoperimetry_cmd(ctx: &mut Ctx) -> Result<Produced> {
    let set = ctx.samples()?;
    let spec = &ctx.spec;
    let iso = &ctx.config.isoperimetry;
    let r = r_exponent(&spec.space, spec.p, iso.variant)?;
    let zoo = match &iso.zoo {
        Some(z) => z.clone(),
        None => standard_zoo(spec, &set)?,
    };
    let scan = ctx
        .manifest
        .stage("scan", || profile_scan(spec, &zoo, r, &iso.eps_grid, &set))?;
    let mut failures = Vec::new();
    if !(scan.c_min > 0.0) {
        failures.push(format!("c_min = {} on {} is not positive", scan.c_min, scan.worst_set));
    }
    let unreliable = scan
        .points
        .iter()
        .filter(|p| !p.reliable)
        .map(|p| format!("{}: enlargement estimates are not monotone", p.set))
        .collect();
    Ok(Produced {
        result: json!({
            "r": scan.r,
            "c_min": scan.c_min,
            "worst_set": scan.worst_set,
            "all_reliable": scan.all_reliable,
            "zoo": zoo,
            "points": scan.points,
        }),
        csv: Some(scan.to_csv()),
        r: Some(r),
        failures,
        unreliable,
        ..Produced::default()
    })
}

fn cheeger_cmd(ctx: &mut Ctx) -> Result<Produced> {
    let family: Vec<TestFunction> = ctx.family().into_iter().filter(|f| !f.is_constant()).collect();
    let set;
    let integ = match ctx.config.method {
        MethodChoice::Mc => {
            set = ctx.samples()?;
            Integrator::Mc(&set)
        }
        MethodChoice::Quadrature => Integrator::Quadrature(Tolerance::default()),
    };
    let spec = &ctx.spec;
    let m = ctx.config.cheeger.median;
    let reports = ctx.manifest.stage("ratios", || {
        family
            .iter()
            .map(|f| cheeger_ratio(spec, f, m, &integ))
            .collect::<subelliptic_core::Result<Vec<_>>>()
    })?;
    let (summary, failures) = summarize(&reports);
    Ok(Produced {
        result: json!({ "inequality": "cheeger", "summary": summary, "reports": reports }),
        csv: Some(ratio_csv(&reports)),
        failures,
        ..Produced::default()
    })
}

/// Collects the status of every report already in `out`.
fn report_cmd(out: &Path) -> Result<Produced> {
    let io = |source| CliError::Io {
        path: out.to_path_buf(),
        source,
    };
    let mut names: Vec<String> = Vec::new();
    if out.is_dir() {
        for entry in std::fs::read_dir(out).map_err(io)? {
            let name = entry.map_err(io)?.file_name().to_string_lossy().into_owned();
            if name.ends_with(".json") && !name.ends_with(".manifest.json") && name != "report.json" {
                names.push(name);
            }
        }
    }
    names.sort();
    let mut rows = Vec::with_capacity(names.len());
    let mut failures = Vec::new();
    let mut unreliable = Vec::new();
    for name in names {
        let path = out.join(&name);
        let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io { path, source })?;
        let Ok(report) = serde_json::from_str::<Report>(&text) else {
            continue;
        };
        if !report.status.failures.is_empty() {
            failures.push(format!("{}: {}", report.command, report.status.failures.join("; ")));
        }
        if !report.status.unreliable.is_empty() {
            unreliable.push(format!("{}: {}", report.command, report.status.unreliable.join("; ")));
        }
        rows.push(json!({
            "file": name,
            "command": report.command,
            "manifest_hash": report.manifest_hash,
            "passed": report.status.passed,
        }));
    }
    Ok(Produced {
        result: json!({ "reports": rows }),
        failures,
        unreliable,
        ..Produced::default()
    })
}
