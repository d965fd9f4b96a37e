//! Uncertainty propagation, discrepancy, validation metrics, and the full
//! validation workflow.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{posterior_sample, LikelihoodSpec};
use crate::design::{optimize_scenario, optimize_sensor, OptimizerOptions, SensorSearch};
use crate::distribution::Distribution;
use crate::ecdf::EmpiricalCdf;
use crate::error::{Error, Result, Stage};
use crate::functional::ModelFunctional;
use crate::io::{fmt_f64, write_csv, write_json};
use crate::param::Bounds;
use crate::projectile::FineModel;
use crate::rng::RngSpec;

/// Default sample counts for experimental and model draws.
pub const N_EXP: usize = 10_000;
pub const N_MODEL: usize = 10_000;
/// Default admissible coefficient of variation of the QoI.
pub const COV_BUDGET: f64 = 0.5;

fn evaluate_all(
    h: &dyn ModelFunctional,
    x: &[f64],
    z: &[f64],
    thetas: &[Vec<f64>],
) -> Result<Vec<f64>> {
    thetas
        .par_iter()
        .enumerate()
        .map(|(index, th)| {
            let v = h.evaluate(x, th, z).map_err(|e| Error::Evaluation {
                index,
                source: Box::new(e),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Evaluation {
                    index,
                    source: Box::new(Error::NonFinite(h.id().to_string())),
                })
            }
        })
        .collect()
}

/// Samples of `h(x, Θ, z)` with summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Propagation {
    pub functional: String,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// `std / |mean|`; infinite when the mean is 0 and the spread is not.
    pub cov: f64,
    pub q025: f64,
    pub q975: f64,
}

impl Propagation {
    pub fn distribution(&self) -> Result<Distribution> {
        Distribution::empirical(self.values.clone())
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| vec![k.to_string(), fmt_f64(*v)])
            .collect();
        write_csv(path, &["sample".into(), self.functional.clone()], &rows)
    }
}

/// Push `n` draws of `theta` through `h` at `(x, z)`.
pub fn propagate(
    h: &dyn ModelFunctional,
    x: &[f64],
    z: &[f64],
    theta: &Distribution,
    n: usize,
    rng: RngSpec,
) -> Result<Propagation> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let thetas = theta.sample(n, rng)?;
    let values = evaluate_all(h, x, z, &thetas)?;
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let std = var.sqrt();
    let cov = if std == 0.0 { 0.0 } else { std / mean.abs() };
    let cdf = EmpiricalCdf::new(&values)?;
    Ok(Propagation {
        functional: h.id().to_string(),
        x: x.to_vec(),
        z: z.to_vec(),
        mean,
        std,
        cov,
        q025: cdf.quantile(0.025),
        q975: cdf.quantile(0.975),
        values,
    })
}

/// Realizations of `E = Y_exp − h_obs(x, Θ, z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancySample {
    pub e_values: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub n_exp: usize,
    pub n_model: usize,
    pub seed: RngSpec,
}

impl DiscrepancySample {
    pub fn new(e_values: Vec<f64>) -> Result<Self> {
        if e_values.is_empty() {
            return Err(Error::EmptySamples);
        }
        if e_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("discrepancy".into()));
        }
        Ok(Self {
            n_exp: e_values.len(),
            n_model: e_values.len(),
            e_values,
            x: vec![],
            z: vec![],
            seed: RngSpec::seeded(0),
        })
    }

    /// Empirical CDF of `|E|`.
    pub fn abs_cdf(&self) -> Result<EmpiricalCdf> {
        let a: Vec<f64> = self.e_values.iter().map(|e| e.abs()).collect();
        EmpiricalCdf::new(&a)
    }

    /// `|e|, F_|E|(|e|)` at every sorted sample.
    pub fn write_abs_cdf_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let cdf = self.abs_cdf()?;
        let n = cdf.len() as f64;
        let rows: Vec<Vec<String>> = cdf
            .samples()
            .iter()
            .enumerate()
            .map(|(k, s)| vec![fmt_f64(*s), fmt_f64((k + 1) as f64 / n)])
            .collect();
        write_csv(path, &["abs_e".into(), "cdf".into()], &rows)
    }
}

/// Discrepancy samples from experimental values and model draws.
///
/// `n` model values are computed from θ drawn with `rng.child(1)`. When
/// `y_exp` has exactly `n` entries it is paired with them in order (the two
/// sets are independent draws); otherwise each model value is paired with
/// an experimental value picked uniformly with `rng.child(0)`.
pub fn discrepancy(
    y_exp: &[f64],
    h_obs: &dyn ModelFunctional,
    x: &[f64],
    z: &[f64],
    theta: &Distribution,
    n: usize,
    rng: RngSpec,
) -> Result<DiscrepancySample> {
    if y_exp.is_empty() {
        return Err(Error::EmptySamples);
    }
    if y_exp.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("experimental observations".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let thetas = theta.sample(n, rng.child(1))?;
    let model = evaluate_all(h_obs, x, z, &thetas)?;
    let e_values = if y_exp.len() == n {
        y_exp.iter().zip(&model).map(|(y, m)| y - m).collect()
    } else {
        let mut g = rng.child(0).rng();
        model
            .iter()
            .map(|m| y_exp[g.random_range(0..y_exp.len())] - m)
            .collect()
    };
    Ok(DiscrepancySample {
        e_values,
        x: x.to_vec(),
        z: z.to_vec(),
        n_exp: y_exp.len(),
        n_model: n,
        seed: rng,
    })
}

/// `γ = #{|e| < ε} / n`.
pub fn reliability_metric(d: &DiscrepancySample, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {epsilon}")));
    }
    let inside = d.e_values.iter().filter(|e| e.abs() < epsilon).count();
    Ok(inside as f64 / d.e_values.len() as f64)
}

/// `∫ |F₁ − F₂| ds` for two step CDFs, summed exactly interval by interval
/// over the merged jump locations.
pub fn area_metric(f1: &EmpiricalCdf, f2: &EmpiricalCdf) -> f64 {
    let (a, b) = (f1.samples(), f2.samples());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    while i < a.len() || j < b.len() {
        let s = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            total += (i as f64 / na - j as f64 / nb).abs() * (s - p);
        }
        while i < a.len() && a[i] == s {
            i += 1;
        }
        while j < b.len() && b[j] == s {
            j += 1;
        }
        prev = Some(s);
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    NotInvalidated,
    Invalidated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagationFlag {
    Proceed,
    UncertaintyTooLarge,
}

/// Outcome of the workflow. `gamma` and `verdict` are absent when the
/// workflow stopped after propagation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationVerdict {
    pub gamma: Option<f64>,
    pub epsilon: f64,
    pub eta: f64,
    pub verdict: Option<Verdict>,
    pub propagation_flag: PropagationFlag,
    pub qoi_mean: f64,
    pub qoi_std: f64,
    pub qoi_cov: f64,
    pub cov_budget: f64,
    pub x_val: Option<Vec<f64>>,
    pub observable: Option<String>,
    pub z_val: Option<Vec<f64>>,
    /// Area between the experimental and model CDFs of the observation.
    pub area_metric: Option<f64>,
    pub n_exp: usize,
    pub n_model: usize,
    pub calibrated: bool,
    pub experiment_source: String,
}

impl ValidationVerdict {
    pub fn decide(gamma: f64, eta: f64) -> Verdict {
        if gamma >= eta {
            Verdict::NotInvalidated
        } else {
            Verdict::Invalidated
        }
    }
}

/// Where the experimental observations come from.
pub trait ExperimentSource: Send + Sync {
    fn describe(&self) -> String;

    /// `n` observations of `h_obs` at `(x, z)`.
    fn acquire(
        &self,
        h_obs: &dyn ModelFunctional,
        x: &[f64],
        z: &[f64],
        n: usize,
        rng: RngSpec,
    ) -> Result<Vec<f64>>;
}

/// Manufactured altitude data from the projectile fine model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineModelSource {
    pub model: FineModel,
    pub noise: f64,
}

impl Default for FineModelSource {
    fn default() -> Self {
        Self {
            model: FineModel::default(),
            noise: crate::projectile::SYNTHETIC_NOISE,
        }
    }
}

impl ExperimentSource for FineModelSource {
    fn describe(&self) -> String {
        format!("projectile fine model, multiplicative noise {}", self.noise)
    }

    fn acquire(
        &self,
        h_obs: &dyn ModelFunctional,
        x: &[f64],
        z: &[f64],
        n: usize,
        rng: RngSpec,
    ) -> Result<Vec<f64>> {
        if h_obs.id() != "altitude" {
            return Err(Error::InvalidArgument(format!(
                "the fine model only measures altitude, not `{}`",
                h_obs.id()
            )));
        }
        self.model.observations(x, z[0], n, self.noise, rng)
    }
}

/// Synthetic data from the model itself with θ drawn from a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSource {
    pub theta: Distribution,
}

impl ExperimentSource for ModelSource {
    fn describe(&self) -> String {
        "model observations".into()
    }

    fn acquire(
        &self,
        h_obs: &dyn ModelFunctional,
        x: &[f64],
        z: &[f64],
        n: usize,
        rng: RngSpec,
    ) -> Result<Vec<f64>> {
        let thetas = self.theta.sample(n, rng)?;
        evaluate_all(h_obs, x, z, &thetas)
    }
}

/// Recorded observations; the design point and count are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedSource {
    pub values: Vec<f64>,
    pub origin: String,
}

impl RecordedSource {
    /// Read the `y` column of a CSV file, or its only column.
    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = match headers.iter().position(|h| h.trim() == "y") {
            Some(c) => c,
            None if headers.len() == 1 => 0,
            None => {
                return Err(Error::Parse(format!(
                    "{}: expected a `y` column",
                    path.display()
                )))
            }
        };
        let mut values = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let s = rec.get(col).unwrap_or("").trim();
            values.push(
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: cannot parse `{s}`", k + 1)))?,
            );
        }
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        Ok(Self {
            values,
            origin: path.display().to_string(),
        })
    }
}

impl ExperimentSource for RecordedSource {
    fn describe(&self) -> String {
        format!("recorded observations from {}", self.origin)
    }

    fn acquire(
        &self,
        _h_obs: &dyn ModelFunctional,
        _x: &[f64],
        _z: &[f64],
        _n: usize,
        _rng: RngSpec,
    ) -> Result<Vec<f64>> {
        Ok(self.values.clone())
    }
}

/// Calibration run before validation; the retained chain replaces the
/// prior downstream.
pub struct CalibrationStage<'a> {
    pub likelihood: LikelihoodSpec,
    pub h_obs: &'a dyn ModelFunctional,
    pub n: usize,
    pub proposal_scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioChoice {
    /// Solve the scenario problem over this box.
    Optimize(Bounds),
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorChoice {
    Optimize(SensorSearch),
    /// Observable `index` of `h_lab` at `z`.
    Fixed { index: usize, z: Vec<f64> },
}

pub struct Workflow<'a> {
    pub h_qoi: &'a dyn ModelFunctional,
    pub x_pred: Vec<f64>,
    pub prior: Distribution,
    pub calibration: Option<CalibrationStage<'a>>,
    pub scenario: ScenarioChoice,
    pub h_lab: Vec<&'a dyn ModelFunctional>,
    pub sensor: SensorChoice,
    pub source: &'a dyn ExperimentSource,
    pub epsilon: f64,
    pub eta: f64,
    pub cov_budget: f64,
    pub n_exp: usize,
    pub n_model: usize,
    pub opts: OptimizerOptions,
    /// Streams: calibration `child(0)`, propagation `child(1)`, data
    /// `child(2)`, discrepancy `child(3)`. Design uses `opts.rng`.
    pub rng: RngSpec,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkflowReport {
    pub verdict: ValidationVerdict,
    pub artifacts: Vec<PathBuf>,
}

impl Workflow<'_> {
    fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("tolerance epsilon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidArgument("threshold eta must lie in [0, 1]".into()));
        }
        if !(self.cov_budget > 0.0) {
            return Err(Error::InvalidArgument("uncertainty budget must be positive".into()));
        }
        if self.n_exp == 0 || self.n_model == 0 {
            return Err(Error::InvalidArgument("sample counts must be at least 1".into()));
        }
        if self.h_lab.is_empty() {
            return Err(Error::InvalidArgument("no candidate observables".into()));
        }
        if let SensorChoice::Fixed { index, .. } = self.sensor {
            if index >= self.h_lab.len() {
                return Err(Error::InvalidArgument(format!(
                    "observable index {index} out of range"
                )));
            }
        }
        Ok(())
    }

    fn artifact(&self, name: &str, list: &mut Vec<PathBuf>) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| {
            let p = d.join(name);
            list.push(p.clone());
            p
        })
    }

    /// Run calibration (if configured), propagation with the CoV gate,
    /// scenario and sensor design, data acquisition, and the verdict.
    pub fn run(&self) -> Result<WorkflowReport> {
        self.check()?;
        let mut artifacts = Vec::new();
        if let Some(d) = &self.out_dir {
            std::fs::create_dir_all(d)?;
        }

        let mut theta = self.prior.clone();
        if let Some(c) = &self.calibration {
            let chain = posterior_sample(
                &c.likelihood,
                c.h_obs,
                &self.prior,
                c.n,
                &c.proposal_scale,
                self.rng.child(0),
            )
            .map_err(|e| e.at_stage(Stage::Calibration))?;
            let labels = self.h_qoi.layout().model.clone();
            if let Some(p) = self.artifact("posterior_chain.csv", &mut artifacts) {
                chain.write_csv(p, &labels)?;
            }
            if let Some(p) = self.artifact("posterior_summary.json", &mut artifacts) {
                chain.write_summary_json(p, &labels)?;
            }
            theta = chain.posterior().map_err(|e| e.at_stage(Stage::Calibration))?;
        }

        let q = propagate(self.h_qoi, &self.x_pred, &[], &theta, self.n_model, self.rng.child(1))
            .map_err(|e| e.at_stage(Stage::Propagation))?;
        if let Some(p) = self.artifact("qoi_samples.csv", &mut artifacts) {
            q.write_csv(p)?;
        }
        let mut verdict = ValidationVerdict {
            gamma: None,
            epsilon: self.epsilon,
            eta: self.eta,
            verdict: None,
            propagation_flag: PropagationFlag::Proceed,
            qoi_mean: q.mean,
            qoi_std: q.std,
            qoi_cov: q.cov,
            cov_budget: self.cov_budget,
            x_val: None,
            observable: None,
            z_val: None,
            area_metric: None,
            n_exp: self.n_exp,
            n_model: self.n_model,
            calibrated: self.calibration.is_some(),
            experiment_source: self.source.describe(),
        };
        if q.cov > self.cov_budget {
            verdict.propagation_flag = PropagationFlag::UncertaintyTooLarge;
            if let Some(p) = self.artifact("verdict.json", &mut artifacts) {
                write_json(p, &verdict)?;
            }
            return Ok(WorkflowReport { verdict, artifacts });
        }

        let x_val = match &self.scenario {
            ScenarioChoice::Fixed(x) => x.clone(),
            ScenarioChoice::Optimize(b) => {
                let r = optimize_scenario(self.h_qoi, &self.x_pred, &theta, b, &self.opts)
                    .map_err(|e| e.at_stage(Stage::ScenarioDesign))?;
                if let Some(p) = self.artifact("scenario_design.csv", &mut artifacts) {
                    r.write_csv(p)?;
                }
                if let Some(p) = self.artifact("scenario_design.json", &mut artifacts) {
                    r.write_json(p)?;
                }
                r.best_point
            }
        };

        let (index, z_val) = match &self.sensor {
            SensorChoice::Fixed { index, z } => (*index, z.clone()),
            SensorChoice::Optimize(search) => {
                let r = optimize_sensor(&self.h_lab, search, &x_val, self.h_qoi, &theta, &self.opts)
                    .map_err(|e| e.at_stage(Stage::SensorDesign))?;
                if let Some(p) = self.artifact("sensor_design.json", &mut artifacts) {
                    r.write_json(p)?;
                }
                (r.index, r.z)
            }
        };
        let h_obs = self.h_lab[index];

        let y_exp = self
            .source
            .acquire(h_obs, &x_val, &z_val, self.n_exp, self.rng.child(2))
            .map_err(|e| e.at_stage(Stage::Acquisition))?;
        if let Some(p) = self.artifact("experimental_data.csv", &mut artifacts) {
            let rows: Vec<Vec<String>> = y_exp
                .iter()
                .enumerate()
                .map(|(k, y)| vec![k.to_string(), fmt_f64(*y)])
                .collect();
            write_csv(p, &["sample".into(), "y".into()], &rows)?;
        }

        let metric = || -> Result<(DiscrepancySample, f64, f64)> {
            let d = discrepancy(&y_exp, h_obs, &x_val, &z_val, &theta, self.n_model, self.rng.child(3))?;
            let gamma = reliability_metric(&d, self.epsilon)?;
            let model = propagate(h_obs, &x_val, &z_val, &theta, self.n_model, self.rng.child(3).child(1))?;
            let area = area_metric(&EmpiricalCdf::new(&y_exp)?, &EmpiricalCdf::new(&model.values)?);
            Ok((d, gamma, area))
        };
        let (d, gamma, area) = metric().map_err(|e| e.at_stage(Stage::Metric))?;
        if let Some(p) = self.artifact("abs_discrepancy_cdf.csv", &mut artifacts) {
            d.write_abs_cdf_csv(p)?;
        }

        verdict.gamma = Some(gamma);
        verdict.verdict = Some(ValidationVerdict::decide(gamma, self.eta));
        verdict.x_val = Some(x_val);
        verdict.observable = Some(h_obs.id().to_string());
        verdict.z_val = Some(z_val);
        verdict.area_metric = Some(area);
        if let Some(p) = self.artifact("verdict.json", &mut artifacts) {
            write_json(p, &verdict)?;
        }
        Ok(WorkflowReport { verdict, artifacts })
    }
}
