//! Experiment configuration: one TOML file per run, with dotted-path overrides.

use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::boltzmann::{CollisionKernel, KernelKind};
use crate::deformation::DeformationMatrix;
use crate::hydro::ViscosityLaw;
use crate::omd::{PairPotential, PotentialKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Omd,
    Meanfield,
    Dsmc,
    Hydro,
    Compare,
}

impl Level {
    pub fn name(&self) -> &'static str {
        match self {
            Level::Omd => "omd",
            Level::Meanfield => "meanfield",
            Level::Dsmc => "dsmc",
            Level::Hydro => "hydro",
            Level::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationConfig {
    /// Row-major entries of `A`.
    #[serde(rename = "A")]
    pub a: [f64; 9],
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub cutoff: f64,
    #[serde(default = "one")]
    pub epsilon_scale: f64,
}

impl PotentialConfig {
    pub fn build(&self) -> Result<PairPotential, HarnessError> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| {
                HarnessError::Config(format!(
                    "potential.{name} is required for kind {}",
                    self.kind
                ))
            })
        };
        let extra = |names: &[(&str, Option<f64>)]| -> Result<(), HarnessError> {
            match names.iter().find(|(_, v)| v.is_some()) {
                Some((n, _)) => Err(HarnessError::Config(format!(
                    "potential.{n} does not apply to kind {}",
                    self.kind
                ))),
                None => Ok(()),
            }
        };
        let kind = match self.kind.as_str() {
            "inverse_power" => {
                extra(&[
                    ("k", self.k),
                    ("r0", self.r0),
                    ("depth", self.depth),
                    ("sigma", self.sigma),
                ])?;
                PotentialKind::InversePower {
                    alpha: need(self.alpha, "alpha")?,
                    strength: need(self.strength, "strength")?,
                }
            }
            "harmonic" => {
                extra(&[
                    ("alpha", self.alpha),
                    ("strength", self.strength),
                    ("depth", self.depth),
                    ("sigma", self.sigma),
                ])?;
                PotentialKind::Harmonic {
                    k: need(self.k, "k")?,
                    r0: self.r0.unwrap_or(0.0),
                }
            }
            "truncated_lj" => {
                extra(&[
                    ("alpha", self.alpha),
                    ("strength", self.strength),
                    ("k", self.k),
                    ("r0", self.r0),
                ])?;
                PotentialKind::TruncatedLj {
                    depth: need(self.depth, "depth")?,
                    sigma: need(self.sigma, "sigma")?,
                }
            }
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown potential kind {other:?}"
                )))
            }
        };
        Ok(PairPotential::new(kind, self.cutoff)?.with_epsilon_scale(self.epsilon_scale))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingConfig {
    Unit,
    MeanField,
    Boltzmann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmdConfig {
    pub lattice_extent: usize,
    #[serde(default = "default_scaling")]
    pub scaling: ScalingConfig,
    /// Explicit positions; if absent, `n_particles` uniform in the unit cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<[f64; 3]>>,
    /// Explicit peculiar velocities; if absent, Gaussian with variance `temperature`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_particles: Option<usize>,
    #[serde(default = "one")]
    pub temperature: f64,
    /// `[i, n1, n2, n3]`: also follow image `(i, n)` directly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_image: Option<[i64; 4]>,
}

fn default_scaling() -> ScalingConfig {
    ScalingConfig::Unit
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanfieldStudy {
    Evolve,
    Stability,
    Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceConfig {
    ExactTransport,
    HighN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanfieldConfig {
    pub study: MeanfieldStudy,
    /// Sampled initial data: independent Gaussians in `x` and `w`.
    pub n_particles: usize,
    #[serde(default = "one")]
    pub x_std: f64,
    #[serde(default = "one")]
    pub w_std: f64,
    /// Stability: standard deviation of the per-particle perturbation.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Convergence: particle numbers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_ref: Option<usize>,
}

fn default_perturbation() -> f64 {
    0.01
}

fn default_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsmcConfig {
    pub n_particles: usize,
    #[serde(default = "one")]
    pub number_density: f64,
    /// Row-major covariance of the initial Gaussian (default identity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<[f64; 9]>,
    pub kernel: KernelKind,
    #[serde(default = "one")]
    pub knudsen: f64,
    #[serde(default)]
    pub selfsimilar: bool,
}

impl DsmcConfig {
    pub fn kernel(&self) -> Result<CollisionKernel, HarnessError> {
        Ok(CollisionKernel::new(self.kernel, self.knudsen)?)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        self.covariance
            .map(|c| Matrix3::from_row_slice(&c))
            .unwrap_or_else(Matrix3::identity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroConfig {
    #[serde(default = "one")]
    pub rho0: f64,
    #[serde(default = "one")]
    pub theta0: f64,
    /// Absent: Euler; present: Navier-Stokes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viscosity: Option<ViscosityLaw>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmKind {
    Dsmc,
    Bgk,
    Euler,
    NavierStokes,
    ExactTransport,
    DeformationSubstep,
}

impl ArmKind {
    pub fn name(&self) -> &'static str {
        match self {
            ArmKind::Dsmc => "dsmc",
            ArmKind::Bgk => "bgk",
            ArmKind::Euler => "euler",
            ArmKind::NavierStokes => "navier_stokes",
            ArmKind::ExactTransport => "exact_transport",
            ArmKind::DeformationSubstep => "deformation_substep",
        }
    }

    pub fn is_distribution(&self) -> bool {
        matches!(self, ArmKind::ExactTransport | ArmKind::DeformationSubstep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    SupRelDev,
    W1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Shear rate of the training run.
    #[serde(rename = "K")]
    pub k: f64,
    pub horizon: f64,
    /// Samples before this time are ignored in the fit.
    #[serde(default)]
    pub t_min: f64,
    #[serde(default = "one")]
    pub omega_exp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub arm_a: ArmKind,
    pub arm_b: ArmKind,
    pub metric: MetricKind,
    pub tolerance: f64,
    /// Calibrate `mu0` from a DSMC run before building the NS arm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    pub deformation: DeformationConfig,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omd: Option<OmdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meanfield: Option<MeanfieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsmc: Option<DsmcConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hydro: Option<HydroConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
}

fn default_stride() -> usize {
    1
}

/// Parse the right-hand side of `--set key=value` as a TOML value, falling
/// back to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Apply `key.path=value` to a parsed TOML table, creating tables on the way.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), HarnessError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(HarnessError::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            HarnessError::Config(format!("override path {key:?} crosses non-table {p:?}"))
        })?;
    }
    cur.insert(
        parts[parts.len() - 1].to_string(),
        parse_override_value(raw.trim()),
    );
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into::<ExperimentConfig>()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn deformation(&self) -> Result<DeformationMatrix, HarnessError> {
        Ok(DeformationMatrix::from_row_major(&self.deformation.a)?)
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring `output_dir` so the
    /// same experiment hashes the same wherever it is written.
    pub fn hash(&self) -> String {
        let mut canonical = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = canonical.as_object_mut() {
            obj.remove("output_dir");
        }
        let canonical = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn level(&self) -> Result<Level, HarnessError> {
        self.level
            .ok_or_else(|| HarnessError::Config("no level given".into()))
    }

    /// Check the invariants needed by the requested level.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let level = self.level()?;
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(HarnessError::Config(format!(
                "dt = {} and horizon = {} must be positive",
                self.dt, self.horizon
            )));
        }
        if self.stride == 0 {
            return Err(HarnessError::Config("stride must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        let def = self.deformation()?;
        if let Some(ts) = def.t_star() {
            if self.horizon >= ts {
                return Err(HarnessError::Config(format!(
                    "horizon {} is not below the blow-up time {ts}",
                    self.horizon
                )));
            }
        }
        let missing = |name: &str| {
            HarnessError::Config(format!("level {} requires a [{name}] block", level.name()))
        };
        match level {
            Level::Omd => {
                self.omd.as_ref().ok_or_else(|| missing("omd"))?;
                self.potential
                    .as_ref()
                    .ok_or_else(|| missing("potential"))?
                    .build()?;
            }
            Level::Meanfield => {
                let m = self
                    .meanfield
                    .as_ref()
                    .ok_or_else(|| missing("meanfield"))?;
                if let Some(p) = &self.potential {
                    p.build()?;
                }
                if m.study == MeanfieldStudy::Convergence
                    && m.n_list.as_ref().is_none_or(|v| v.is_empty())
                {
                    return Err(HarnessError::Config(
                        "meanfield.n_list is required for the convergence study".into(),
                    ));
                }
            }
            Level::Dsmc => {
                self.dsmc
                    .as_ref()
                    .ok_or_else(|| missing("dsmc"))?
                    .kernel()?;
            }
            Level::Hydro => {
                self.hydro.as_ref().ok_or_else(|| missing("hydro"))?;
            }
            Level::Compare => {
                let c = self.compare.as_ref().ok_or_else(|| missing("compare"))?;
                for arm in [c.arm_a, c.arm_b] {
                    match arm {
                        ArmKind::Dsmc | ArmKind::Bgk => {
                            self.dsmc
                                .as_ref()
                                .ok_or_else(|| missing("dsmc"))?
                                .kernel()?;
                        }
                        ArmKind::Euler => {
                            self.hydro.as_ref().ok_or_else(|| missing("hydro"))?;
                        }
                        ArmKind::NavierStokes => {
                            let h = self.hydro.as_ref().ok_or_else(|| missing("hydro"))?;
                            if h.viscosity.is_none() && c.calibration.is_none() {
                                return Err(HarnessError::Config("navier_stokes arm needs hydro.viscosity or compare.calibration".into()));
                            }
                            if c.calibration.is_some() {
                                self.dsmc.as_ref().ok_or_else(|| missing("dsmc"))?;
                            }
                        }
                        ArmKind::ExactTransport | ArmKind::DeformationSubstep => {
                            self.meanfield
                                .as_ref()
                                .ok_or_else(|| missing("meanfield"))?;
                        }
                    }
                }
                if c.arm_a.is_distribution() != c.arm_b.is_distribution() {
                    return Err(HarnessError::Config(
                        "cannot compare a scalar arm with a distributional arm".into(),
                    ));
                }
                let want = if c.arm_a.is_distribution() {
                    MetricKind::W1
                } else {
                    MetricKind::SupRelDev
                };
                if c.metric != want {
                    return Err(HarnessError::Config(format!(
                        "metric {:?} does not fit arms {:?}/{:?}",
                        c.metric, c.arm_a, c.arm_b
                    )));
                }
            }
        }
        Ok(())
    }
}
