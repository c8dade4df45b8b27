//! Experiment configuration: a TOML (or JSON) file, then `-s key=value`
//! overrides, then defaults for anything still missing.

use std::fs;
use std::path::Path;

use num_complex::Complex64 as C64;
use quasiloc::analysis::Observable;
use quasiloc::model::fibonacci_approx;
use quasiloc::{BoundaryCondition, ModelKind, ModelSpec, TauMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauChoice {
    /// `(√5 − 1)/2` in double precision.
    Golden,
    /// `F_{j−1}/F_j`, with `j` taken from the top level.
    Fibonacci,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_kind")]
    pub kind: ModelKind,
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub h: f64,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_tau")]
    pub tau: TauChoice,
    /// Fibonacci index; sets `N = F_j` when `size` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(default = "default_bc")]
    pub bc: BoundaryCondition,
    #[serde(default)]
    pub lyapunov: LyapunovBlock,
    #[serde(default)]
    pub duality: DualityBlock,
    #[serde(default)]
    pub fit: FitBlock,
    #[serde(default)]
    pub scaling: ScalingBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovBlock {
    /// `[re, im]` pairs.
    pub energies: Vec<[f64; 2]>,
    /// Use every eigenvalue of the configured lattice instead.
    pub from_spectrum: bool,
    pub steps: usize,
    pub epsilon_zero: f64,
}

impl Default for LyapunovBlock {
    fn default() -> Self {
        LyapunovBlock { energies: Vec::new(), from_spectrum: false, steps: 10946, epsilon_zero: 0.02 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualityBlock {
    pub fd_loc_max: f64,
    pub fd_ext_min: f64,
    pub match_tol: f64,
    pub min_matched_fraction: f64,
}

impl Default for DualityBlock {
    fn default() -> Self {
        let t = quasiloc::duality::DualityThresholds::default();
        DualityBlock {
            fd_loc_max: t.fd_loc_max,
            fd_ext_min: t.fd_ext_min,
            match_tol: t.match_tol,
            min_matched_fraction: t.min_matched_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitBlock {
    /// Target energies; the eigenstate nearest each one is fitted.
    pub energies: Vec<[f64; 2]>,
    /// Nonreciprocities to scan; empty means the top-level `g` only.
    pub g_values: Vec<f64>,
    pub window: usize,
    /// Lyapunov steps; defaults to the lattice size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub epsilon_zero: f64,
}

impl Default for FitBlock {
    fn default() -> Self {
        FitBlock {
            energies: Vec::new(),
            g_values: Vec::new(),
            window: quasiloc::analysis::DEFAULT_WINDOW,
            steps: None,
            epsilon_zero: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingBlock {
    pub j_range: Vec<usize>,
    pub reference: [f64; 2],
    pub observable: Observable,
    /// Largest accepted distance between the tracked eigenvalue and `reference`.
    pub window: f64,
    pub epsilon_zero: f64,
}

impl Default for ScalingBlock {
    fn default() -> Self {
        ScalingBlock {
            j_range: Vec::new(),
            reference: [0.0, 0.0],
            observable: Observable::TrackedFd,
            window: 0.05,
            epsilon_zero: 0.02,
        }
    }
}

fn default_kind() -> ModelKind {
    ModelKind::H1
}

fn default_a() -> f64 {
    3.0
}

fn default_tau() -> TauChoice {
    TauChoice::Golden
}

fn default_bc() -> BoundaryCondition {
    BoundaryCondition::Pbc
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// `a.b.c=value`; the value is read as a TOML literal, or as a bare string
/// if it does not parse as one.
fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_error(format!("override `{assignment}` is not of the form key=value")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields one item");
    let mut table = root;
    for part in parents {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut root = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| config_error(format!("cannot read {}: {e}", p.display())))?;
                if p.extension().is_some_and(|e| e == "json") {
                    let v: serde_json::Value =
                        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
                    toml::Table::try_from(v).map_err(|e| config_error(format!("{}: {e}", p.display())))?
                } else {
                    text.parse::<toml::Table>().map_err(|e| config_error(format!("{}: {e}", p.display())))?
                }
            }
        };
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let config: ExperimentConfig =
            toml::Value::Table(root).try_into().map_err(|e: toml::de::Error| config_error(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.kind == ModelKind::Generic {
            return Err(config_error("kind = \"generic\" needs an amplitude rule and is library-only"));
        }
        if self.tau == TauChoice::Fibonacci && self.j.is_none() {
            return Err(config_error("tau = \"fibonacci\" needs j"));
        }
        if let Some(j) = self.j {
            fibonacci_approx(j).map_err(|e| config_error(e.to_string()))?;
        }
        Ok(())
    }

    pub fn tau_mode(&self) -> TauMode {
        match (self.tau, self.j) {
            (TauChoice::Fibonacci, Some(j)) => TauMode::RationalApprox(j),
            _ => TauMode::Irrational,
        }
    }

    pub fn model(&self) -> ModelSpec {
        let base = match self.kind {
            ModelKind::H2 => ModelSpec::h2(self.g, self.h),
            ModelKind::UniformChain => ModelSpec::uniform_chain(),
            ModelKind::HatanoNelson => ModelSpec::hatano_nelson(self.g),
            ModelKind::H1 | ModelKind::Generic => ModelSpec::h1(self.g, self.h),
        };
        ModelSpec { a: self.a, ..base }.with_tau(self.tau_mode())
    }

    pub fn size(&self) -> Result<usize, CliError> {
        match (self.size, self.j) {
            (Some(n), _) => Ok(n),
            (None, Some(j)) => Ok(fibonacci_approx(j).map_err(|e| config_error(e.to_string()))?.current as usize),
            (None, None) => Err(config_error("set size or j")),
        }
    }

    pub fn j(&self) -> Result<usize, CliError> {
        self.j.ok_or_else(|| config_error("this command needs j"))
    }

    /// One line of compact JSON; loading it back as a `.json` config
    /// reproduces the run.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

pub fn energies(pairs: &[[f64; 2]]) -> Vec<C64> {
    pairs.iter().map(|p| C64::new(p[0], p[1])).collect()
}
