//! The JSON run configuration and its validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use subelliptic_core::isoperimetry::{ProfileVariant, SetSpec, DEFAULT_EPS_GRID};
use subelliptic_core::{make_space, Space, SpaceKind};

use crate::command::{Command, Verify};
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub space: SpaceKind,
    pub p: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub method: MethodChoice,
    /// Samples of `μ` reused by MC commands instead of drawing fresh ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_file: Option<PathBuf>,
    #[serde(default)]
    pub estimates: EstimatesBlock,
    #[serde(default)]
    pub inequality: InequalityBlock,
    #[serde(default)]
    pub spi: SpiBlock,
    #[serde(default)]
    pub isoperimetry: IsoperimetryBlock,
    #[serde(default)]
    pub cheeger: CheegerBlock,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_q() -> f64 {
    2.0
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    /// Importance samples for the normaliser `Z`.
    pub z_budget: usize,
    /// Draws from `μ` for MC commands.
    pub n_samples: usize,
    /// Points of the gauge-estimate cloud.
    pub cloud_size: usize,
    /// Segments allowed when building horizontal paths.
    pub path_budget: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            z_budget: 100_000,
            n_samples: 200_000,
            cloud_size: 10_000,
            path_budget: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    #[default]
    Mc,
    Quadrature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatesBlock {
    pub n_min: f64,
    pub n_max: f64,
    pub exclusion_radius: f64,
    /// Overrides the exponent of the space, e.g. to probe a wrong `α`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl Default for EstimatesBlock {
    fn default() -> Self {
        EstimatesBlock {
            n_min: 0.1,
            n_max: 10.0,
            exclusion_radius: 1e-3,
            alpha: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyChoice {
    #[default]
    Standard,
    Cheeger,
    Tubes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InequalityBlock {
    pub family: FamilyChoice,
    /// Radii for the tube family.
    pub tube_radii: Vec<f64>,
    /// Weight softening of the almost Hardy inequality.
    pub delta: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    /// Growth exponent of the F-Sobolev check; the exponent of the measure when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// `ε` values at which `verify:spi` reports the required `β`.
    pub eps_grid: Vec<f64>,
}

impl Default for InequalityBlock {
    fn default() -> Self {
        InequalityBlock {
            family: FamilyChoice::Standard,
            tube_radii: vec![2.0, 1.0, 0.5, 0.25, 0.125],
            delta: 0.5,
            r0: 1.0,
            theta: None,
            eps_grid: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpiBlock {
    /// Strictly decreasing `ε` values for the constructive curve.
    pub eps_grid: Vec<f64>,
    /// Dilation parameters of the optimality probe.
    pub t_grid: Vec<f64>,
    pub epsilon_scale: f64,
    /// Constant of the constructive curve; measured from a cloud when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    /// Allowed shortfall of the probe exponent below its target.
    pub sigma_tolerance: f64,
}

impl Default for SpiBlock {
    fn default() -> Self {
        SpiBlock {
            eps_grid: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            t_grid: vec![2.0, 3.0, 4.0, 6.0],
            epsilon_scale: 0.01,
            constant: None,
            sigma_tolerance: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsoperimetryBlock {
    pub eps_grid: Vec<f64>,
    pub variant: ProfileVariant,
    /// Replaces the standard twelve-set zoo.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zoo: Option<Vec<SetSpec>>,
}

impl Default for IsoperimetryBlock {
    fn default() -> Self {
        IsoperimetryBlock {
            eps_grid: DEFAULT_EPS_GRID.to_vec(),
            variant: ProfileVariant::Main,
            zoo: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheegerBlock {
    /// Fixed centring constant; the sample median of each member when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median: Option<f64>,
}

fn bad(path: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_string(),
        reason: reason.into(),
    }
}

fn check_grid(path: &str, grid: &[f64], min_len: usize) -> Result<()> {
    if grid.len() < min_len {
        return Err(bad(path, format!("needs at least {min_len} values, got {}", grid.len())));
    }
    if let Some(i) = grid.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(bad(&format!("{path}[{i}]"), format!("{} must be positive", grid[i])));
    }
    Ok(())
}

fn check_decreasing(path: &str, grid: &[f64]) -> Result<()> {
    if let Some(i) = grid.windows(2).position(|w| w[1] >= w[0]) {
        return Err(bad(&format!("{path}[{}]", i + 1), "values must be strictly decreasing"));
    }
    Ok(())
}

impl RunConfig {
    /// Parses a JSON document, reporting the path of the offending field.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            bad(&path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        RunConfig::from_json(&text)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Input of the config hash: the canonical form without the output
    /// directory, which does not affect any result.
    pub fn hash_input(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.canonical_json()
    }

    /// Builds the space, checking everything `command` relies on.
    pub fn validate(&self, command: &Command) -> Result<Space> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let space = make_space(self.space.clone()).map_err(|e| bad("space", e.to_string()))?;
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(bad("p", format!("need p >= 1, got {}", self.p)));
        }
        if !self.q.is_finite() {
            return Err(bad("q", "must be finite"));
        }
        let b = &self.budgets;
        for (name, v) in [
            ("budgets.z_budget", b.z_budget),
            ("budgets.n_samples", b.n_samples),
            ("budgets.cloud_size", b.cloud_size),
            ("budgets.path_budget", b.path_budget),
        ] {
            if v == 0 {
                return Err(bad(name, "must be positive"));
            }
        }
        if let Some(path) = &self.samples_file {
            if command.uses_samples() && !path.is_file() {
                return Err(bad("samples_file", format!("{} does not exist", path.display())));
            }
        }
        let alpha = space.alpha();
        let need_p = |strict: bool| -> Result<()> {
            let ok = if strict { self.p > alpha + 1.0 } else { self.p >= alpha + 1.0 };
            if ok {
                Ok(())
            } else {
                let op = if strict { ">" } else { ">=" };
                Err(bad("p", format!("this command needs p {op} α + 1 = {}, got {}", alpha + 1.0, self.p)))
            }
        };
        let q_in = |lo: f64, hi: f64, closed: bool| -> Result<()> {
            let ok = self.q >= lo && if closed { self.q <= hi } else { self.q < hi };
            if ok {
                Ok(())
            } else {
                let r = if closed { "]" } else { ")" };
                Err(bad("q", format!("{} is outside [{lo}, {hi}{r} for {}", self.q, command)))
            }
        };
        match command {
            Command::CheckEstimates => {
                let e = &self.estimates;
                if !(e.n_min > 0.0 && e.n_max >= e.n_min && e.n_max.is_finite()) {
                    return Err(bad("estimates.n_min", format!("need 0 < n_min <= n_max, got [{}, {}]", e.n_min, e.n_max)));
                }
                if !(e.exclusion_radius >= 0.0 && e.exclusion_radius.is_finite()) {
                    return Err(bad("estimates.exclusion_radius", "must be finite and non-negative"));
                }
                if let Some(a) = e.alpha {
                    if !a.is_finite() {
                        return Err(bad("estimates.alpha", "must be finite"));
                    }
                }
            }
            Command::Sample | Command::Report => {}
            Command::Verify(v) => match v {
                Verify::Ubound | Verify::Ckn => {
                    q_in(1.0, 2.0, true)?;
                    need_p(false)?;
                }
                Verify::MergedUbound => {
                    q_in(1.0, 2.0, false)?;
                    need_p(true)?;
                }
                Verify::Hardy => {
                    q_in(1.0, 2.0, true)?;
                    let n1 = space.first_layer_dim();
                    if n1 < 2 {
                        return Err(bad("space", format!("hardy needs a first layer of dimension >= 2, got {n1}")));
                    }
                    if self.q == 2.0 && n1 == 2 {
                        return Err(bad("q", "q = 2 needs a first layer of dimension > 2"));
                    }
                }
                Verify::AlmostHardy => {
                    if space.first_layer_dim() != 1 {
                        return Err(bad("space", "almost_hardy needs a one-dimensional first layer"));
                    }
                    let i = &self.inequality;
                    if !(i.delta > 0.0 && i.delta < 1.0) {
                        return Err(bad("inequality.delta", format!("{} is outside (0, 1)", i.delta)));
                    }
                    if !(i.r0 > 0.0 && i.r0.is_finite()) {
                        return Err(bad("inequality.R0", format!("{} must be positive", i.r0)));
                    }
                }
                Verify::Fsobolev => {
                    need_p(true)?;
                    if let Some(t) = self.inequality.theta {
                        if !(t > 0.0 && t.is_finite()) {
                            return Err(bad("inequality.theta", format!("{t} must be positive")));
                        }
                    }
                }
                Verify::Spi => {
                    q_in(1.0, 2.0, true)?;
                    check_grid("inequality.eps_grid", &self.inequality.eps_grid, 1)?;
                }
            },
            Command::SpiScan => {
                q_in(1.0, 2.0, true)?;
                need_p(true)?;
                check_grid("spi.eps_grid", &self.spi.eps_grid, 2)?;
                check_decreasing("spi.eps_grid", &self.spi.eps_grid)?;
                if let Some(c) = self.spi.constant {
                    if !(c > 0.0 && c.is_finite()) {
                        return Err(bad("spi.constant", format!("{c} must be positive")));
                    }
                }
            }
            Command::SpiProbe => {
                if self.q != 2.0 {
                    return Err(bad("q", format!("the probe is defined at q = 2, got {}", self.q)));
                }
                need_p(true)?;
                check_grid("spi.t_grid", &self.spi.t_grid, 4)?;
                if !(self.spi.epsilon_scale > 0.0 && self.spi.epsilon_scale.is_finite()) {
                    return Err(bad("spi.epsilon_scale", "must be positive"));
                }
                if !(self.spi.sigma_tolerance >= 0.0) {
                    return Err(bad("spi.sigma_tolerance", "must be non-negative"));
                }
            }
            Command::Isoperimetry => {
                need_p(false)?;
                check_grid("isoperimetry.eps_grid", &self.isoperimetry.eps_grid, 3)?;
                check_decreasing("isoperimetry.eps_grid", &self.isoperimetry.eps_grid)?;
                if let Some(zoo) = &self.isoperimetry.zoo {
                    if zoo.is_empty() {
                        return Err(bad("isoperimetry.zoo", "must contain at least one set"));
                    }
                }
            }
            Command::Cheeger => {
                if (self.p - alpha - 1.0).abs() > 1e-12 {
                    return Err(bad("p", format!("cheeger needs p = α + 1 = {}, got {}", alpha + 1.0, self.p)));
                }
                if self.method == MethodChoice::Quadrature && self.cheeger.median.is_none() {
                    return Err(bad("cheeger.median", "quadrature needs an explicit median"));
                }
            }
        }
        Ok(space)
    }
}
