//! Run configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use valdesign::distribution::{Distribution, DistributionSpec};
use valdesign::param::Bounds;
use valdesign::transport::{InflowSampling, Rect};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    Projectile,
    Transport,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilyId,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub qoi: String,
    #[serde(default)]
    pub observables: Vec<String>,
    pub x_pred: Vec<f64>,
    #[serde(default)]
    pub x_lab: Option<Vec<[f64; 2]>>,
    /// Fixed validation scenario; skips the scenario search when set.
    #[serde(default)]
    pub x_val: Option<Vec<f64>>,
    pub theta: DistributionSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub sensor: Option<SensorConfig>,
    #[serde(default)]
    pub validation: Option<ValidationConfig>,
    #[serde(default)]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub propagate: PropagateConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub fine_model: FineModelConfig,
}

fn default_seed() -> u64 {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_evals: Option<usize>,
    pub n_starts: Option<usize>,
    pub n_samples: Option<usize>,
    pub initial_mesh: Option<f64>,
    pub min_mesh: Option<f64>,
    pub rotated_poll: Option<bool>,
    pub shake_radii: Option<Vec<f64>>,
    pub max_failed_shakes: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// Cartesian product of evenly spaced axes.
    pub grid: Option<Vec<Axis>>,
    /// Explicit sensor points.
    pub points: Option<Vec<Vec<f64>>>,
    /// Box for a pattern search instead of a grid.
    #[serde(rename = "box")]
    pub search_box: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    FineModel,
    Model,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioMode {
    #[default]
    Optimize,
    Fixed,
}

/// A sensor point, or a name resolved by the model family.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SensorPoint {
    Point(Vec<f64>),
    Named(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSensor {
    pub observable: String,
    pub z: SensorPoint,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    pub epsilon: f64,
    pub eta: f64,
    #[serde(default = "default_cov")]
    pub cov_budget: f64,
    #[serde(default = "default_n")]
    pub n_exp: usize,
    #[serde(default = "default_n")]
    pub n_model: usize,
    pub source: SourceKind,
    /// Observation file for `source = "csv"`.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub scenario: ScenarioMode,
    /// Fixed observable and sensor point; optimized when absent.
    #[serde(default)]
    pub sensor: Option<FixedSensor>,
    /// Run the calibration section before validating.
    #[serde(default)]
    pub calibrate: bool,
}

fn default_cov() -> f64 {
    valdesign::validation::COV_BUDGET
}

fn default_n() -> usize {
    valdesign::validation::N_EXP
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub sigma: f64,
    pub observable: String,
    /// CSV with `x…, z…, y` columns.
    #[serde(default)]
    pub observations: Option<PathBuf>,
    #[serde(default = "default_chain")]
    pub chain_length: usize,
    pub proposal_scale: Vec<f64>,
}

fn default_chain() -> usize {
    20_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub x_full: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagateConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    /// Scenario to propagate at; defaults to `x_pred`.
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    #[serde(default = "default_cov")]
    pub cov_budget: f64,
}

impl Default for PropagateConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            x: None,
            cov_budget: default_cov(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
    pub v_max: f64,
    /// Solid rectangles; needs `velocity_file`.
    pub docks: Vec<Rect>,
    pub velocity_file: Option<PathBuf>,
    pub inflow_sampling: InflowSampling,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 32,
            width: 5.0,
            height: 2.0,
            v_max: 1.0,
            docks: vec![],
            velocity_file: None,
            inflow_sampling: InflowSampling::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineModelConfig {
    pub g: f64,
    pub visc: f64,
    pub rho: f64,
    pub step: f64,
    pub noise: f64,
}

impl Default for FineModelConfig {
    fn default() -> Self {
        let f = valdesign::projectile::FineModel::default();
        Self {
            g: f.g,
            visc: f.visc,
            rho: f.rho,
            step: f.step,
            noise: valdesign::projectile::SYNTHETIC_NOISE,
        }
    }
}

pub fn bounds(what: &str, iv: &[[f64; 2]]) -> Result<Bounds, CliError> {
    let pairs: Vec<(f64, f64)> = iv.iter().map(|p| (p[0], p[1])).collect();
    Bounds::from_intervals(&pairs).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

/// A parsed config with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub path: PathBuf,
    pub base: PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = parse(&text).map_err(|m| CliError::Config(format!("{}: {m}", path.display())))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            config,
            path: path.to_path_buf(),
            base,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn theta(&self) -> Result<Distribution, CliError> {
        Distribution::try_from(self.config.theta.clone())
            .map_err(|e| CliError::Config(format!("theta: {e}")))
    }
}

/// Parse config text, reporting the failing field path.
pub fn parse(text: &str) -> Result<RunConfig, String> {
    let de = toml::Deserializer::parse(text).map_err(|e| e.to_string())?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        format!("at `{path}`: {}", e.into_inner().message().trim())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
family = "projectile"
qoi = "max_altitude"
x_pred = [0.05, 0.01, 1.0, 100.0]
[theta]
type = "dirac"
point = [9.81, -11.5]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.family, FamilyId::Projectile);
        assert_eq!(c.seed, 1);
        assert_eq!(c.transport.nx, 64);
        assert_eq!(c.propagate.n, 10_000);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = MINIMAL.replace("point = [9.81, -11.5]", "point = \"x\"");
        let e = parse(&bad).unwrap_err();
        assert!(e.contains("theta"), "{e}");
        let bad = format!("{MINIMAL}\n[validation]\nepsilon = \"one\"\neta = 0.9\nsource = \"model\"\n");
        let e = parse(&bad).unwrap_err();
        assert!(e.contains("validation.epsilon"), "{e}");
        let bad = MINIMAL.replace("family = \"projectile\"", "family = \"rocket\"");
        assert!(parse(&bad).unwrap_err().contains("family"));
    }

    #[test]
    fn sensor_point_forms() {
        let s: FixedSensor = toml::from_str("observable = \"altitude\"\nz = \"time_of_max\"").unwrap();
        assert_eq!(s.z, SensorPoint::Named("time_of_max".into()));
        let s: FixedSensor = toml::from_str("observable = \"obs\"\nz = [1.0, 0.5]").unwrap();
        assert_eq!(s.z, SensorPoint::Point(vec![1.0, 0.5]));
    }
}
