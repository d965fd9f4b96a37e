//! Selection of the observable and sensor location.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::pattern::{multistart, OptimizerOptions};
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::functional::ModelFunctional;
use crate::io::{fmt_f64, fmt_opt, write_csv, write_json};
use crate::param::Bounds;
use crate::rng::RngSpec;
use crate::sampling::lhs_sample;
use crate::sensitivity::{
    influence_matrix_with_samples, normalized_distance, pin_samples, InfluenceMatrix,
};

/// `z ↦ ‖M_obs(x_val, z)/Tr − M_qoi(x_val)/Tr‖₂` over pinned θ draws.
pub struct SensorObjective {
    x_val: Vec<f64>,
    samples: Vec<Vec<f64>>,
    target: InfluenceMatrix,
}

impl SensorObjective {
    pub fn new(
        h_qoi: &dyn ModelFunctional,
        x_val: &[f64],
        theta: &Distribution,
        n_samples: usize,
        rng: RngSpec,
    ) -> Result<Self> {
        let samples = pin_samples(theta, n_samples, rng)?;
        let target = influence_matrix_with_samples(h_qoi, x_val, &[], &samples)?;
        if !(target.trace() > 0.0) {
            return Err(Error::ZeroTrace(h_qoi.id().to_string()));
        }
        Ok(Self {
            x_val: x_val.to_vec(),
            samples,
            target,
        })
    }

    pub fn target(&self) -> &InfluenceMatrix {
        &self.target
    }

    pub fn matrix(&self, h_obs: &dyn ModelFunctional, z: &[f64]) -> Result<InfluenceMatrix> {
        influence_matrix_with_samples(h_obs, &self.x_val, z, &self.samples)
    }

    pub fn value(&self, h_obs: &dyn ModelFunctional, z: &[f64]) -> Result<f64> {
        normalized_distance(&self.matrix(h_obs, z)?, &self.target)
    }
}

/// Search space for the sensor parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorSearch {
    /// Multistart pattern search over a box.
    Box(Bounds),
    /// Exhaustive evaluation of a list of points.
    Grid(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateResult {
    pub functional: String,
    pub z: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorDesign {
    pub functional: String,
    pub index: usize,
    pub z: Vec<f64>,
    pub objective: f64,
    pub candidates: Vec<CandidateResult>,
}

impl SensorDesign {
    pub fn write_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        write_json(path, self)
    }
}

fn best_on_grid(
    obj: &SensorObjective,
    h: &dyn ModelFunctional,
    grid: &[Vec<f64>],
) -> Result<(Vec<f64>, f64)> {
    let vals: Vec<Result<f64>> = grid.par_iter().map(|z| obj.value(h, z)).collect();
    let mut best: Option<(usize, f64)> = None;
    let mut last_err = None;
    for (k, v) in vals.into_iter().enumerate() {
        match v {
            Ok(v) if best.is_none_or(|b| v < b.1) => best = Some((k, v)),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((k, v)) => Ok((grid[k].clone(), v)),
        None => Err(last_err.unwrap_or(Error::AllStartsFailed)),
    }
}

fn best_in_box(
    obj: &SensorObjective,
    h: &dyn ModelFunctional,
    bounds: &Bounds,
    opts: &OptimizerOptions,
    rng: RngSpec,
) -> Result<(Vec<f64>, f64)> {
    let starts = lhs_sample(bounds, opts.n_starts, rng)?;
    let f = |z: &[f64]| obj.value(h, z);
    let runs = multistart(&f, &starts, bounds, opts)?;
    runs.into_iter()
        .flatten()
        .map(|r| (r.x, r.value))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::AllStartsFailed)
}

/// Pick the observable in `h_lab` and sensor point `z` whose normalized
/// influence matrix best matches that of `h_qoi` at `x_val`.
///
/// Each candidate is optimized separately; the θ draws come from
/// `opts.rng.child(0)` and the starts of candidate `k` from
/// `opts.rng.child(2 + k)`.
pub fn optimize_sensor(
    h_lab: &[&dyn ModelFunctional],
    search: &SensorSearch,
    x_val: &[f64],
    h_qoi: &dyn ModelFunctional,
    theta: &Distribution,
    opts: &OptimizerOptions,
) -> Result<SensorDesign> {
    opts.validate()?;
    if h_lab.is_empty() {
        return Err(Error::InvalidArgument("no candidate observables".into()));
    }
    if let SensorSearch::Grid(g) = search {
        if g.is_empty() {
            return Err(Error::InvalidArgument("empty sensor grid".into()));
        }
    }
    let obj = SensorObjective::new(h_qoi, x_val, theta, opts.n_samples, opts.rng.child(0))?;
    let mut candidates = Vec::with_capacity(h_lab.len());
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    for (k, h) in h_lab.iter().enumerate() {
        let r = match search {
            SensorSearch::Grid(g) => best_on_grid(&obj, *h, g),
            SensorSearch::Box(b) => best_in_box(&obj, *h, b, opts, opts.rng.child(2 + k as u64)),
        };
        match r {
            Ok((z, v)) => {
                if best.as_ref().is_none_or(|b| v < b.2) {
                    best = Some((k, z.clone(), v));
                }
                candidates.push(CandidateResult {
                    functional: h.id().to_string(),
                    z: Some(z),
                    objective: Some(v),
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("observable {} failed: {e}", h.id());
                candidates.push(CandidateResult {
                    functional: h.id().to_string(),
                    z: None,
                    objective: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (index, z, objective) = best.ok_or_else(|| {
        Error::ZeroTrace(format!(
            "every observable candidate ({})",
            h_lab.iter().map(|h| h.id()).collect::<Vec<_>>().join(", ")
        ))
    })?;
    Ok(SensorDesign {
        functional: h_lab[index].id().to_string(),
        index,
        z,
        objective,
        candidates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorScan {
    pub functional: String,
    pub grid: Vec<Vec<f64>>,
    /// `None` where the objective could not be evaluated.
    pub values: Vec<Option<f64>>,
}

impl SensorScan {
    /// Grid index and value of the smallest recorded objective.
    pub fn argmin(&self) -> Option<(usize, f64)> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let dz = self.grid.first().map_or(0, Vec::len);
        let mut header: Vec<String> = (0..dz).map(|i| format!("z{i}")).collect();
        header.push("objective".into());
        let rows: Vec<Vec<String>> = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(z, v)| {
                let mut r: Vec<String> = z.iter().map(|v| fmt_f64(*v)).collect();
                r.push(fmt_opt(*v));
                r
            })
            .collect();
        write_csv(path, &header, &rows)
    }
}

/// Evaluate the sensor objective of `h_obs` at every grid point.
pub fn sensor_scan(
    h_obs: &dyn ModelFunctional,
    x_val: &[f64],
    h_qoi: &dyn ModelFunctional,
    theta: &Distribution,
    grid: &[Vec<f64>],
    n_samples: usize,
    rng: RngSpec,
) -> Result<SensorScan> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty sensor grid".into()));
    }
    let obj = SensorObjective::new(h_qoi, x_val, theta, n_samples, rng)?;
    Ok(scan_with(&obj, h_obs, grid))
}

/// Scan with an existing objective (shared θ draws and target).
pub fn scan_with(obj: &SensorObjective, h_obs: &dyn ModelFunctional, grid: &[Vec<f64>]) -> SensorScan {
    let values = grid
        .par_iter()
        .map(|z| match obj.value(h_obs, z) {
            Ok(v) => Some(v),
            Err(e) => {
                log::debug!("scan point {z:?} failed: {e}");
                None
            }
        })
        .collect();
    SensorScan {
        functional: h_obs.id().to_string(),
        grid: grid.to_vec(),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{ClosureFunctional, FunctionalKind};
    use crate::param::ParameterLayout;

    fn layout() -> ParameterLayout {
        ParameterLayout::new(&["a"], &["t"], &["s"])
    }

    fn qoi() -> ClosureFunctional {
        ClosureFunctional::new("q", layout(), FunctionalKind::Qoi, |x, th, _| {
            Ok(x[0] * th[0])
        })
        .with_gradient(|x, th, _| Ok(vec![th[0], x[0]]))
    }

    /// Matches the QoI exactly at s = 0.3.
    fn obs() -> ClosureFunctional {
        ClosureFunctional::new("o", layout(), FunctionalKind::Observable, |x, th, z| {
            Ok(x[0] * th[0] + (z[0] - 0.3) * th[0])
        })
        .with_gradient(|x, th, z| Ok(vec![th[0], x[0] + z[0] - 0.3]))
    }

    #[test]
    fn qoi_as_observable_is_zero_everywhere() {
        let q = qoi();
        let th = Distribution::normal(1.0, 0.2).unwrap();
        let grid: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64]).collect();
        let s = sensor_scan(&q, &[1.0], &q, &th, &grid, 100, RngSpec::seeded(1)).unwrap();
        assert!(s.values.iter().all(|v| v.unwrap() == 0.0));
    }

    #[test]
    fn finds_matching_sensor() {
        let (q, o) = (qoi(), obs());
        let th = Distribution::normal(1.0, 0.2).unwrap();
        let opts = OptimizerOptions {
            n_starts: 3,
            n_samples: 100,
            min_mesh: 1e-8,
            ..Default::default()
        };
        let b = Bounds::from_intervals(&[(0.0, 1.0)]).unwrap();
        let d = optimize_sensor(&[&o], &SensorSearch::Box(b), &[1.0], &q, &th, &opts).unwrap();
        assert_eq!(d.functional, "o");
        assert!((d.z[0] - 0.3).abs() < 1e-6, "{:?}", d.z);
        assert!(d.objective < 1e-6);
    }

    #[test]
    fn grid_search_and_single_point_scan() {
        let (q, o) = (qoi(), obs());
        let th = Distribution::normal(1.0, 0.2).unwrap();
        let opts = OptimizerOptions {
            n_samples: 100,
            ..Default::default()
        };
        let grid: Vec<Vec<f64>> = (0..11).map(|k| vec![0.1 * k as f64]).collect();
        let d =
            optimize_sensor(&[&o, &q], &SensorSearch::Grid(grid), &[1.0], &q, &th, &opts).unwrap();
        assert_eq!(d.candidates.len(), 2);
        assert_eq!(d.objective, 0.0);
        let obj = SensorObjective::new(&q, &[1.0], &th, 100, opts.rng.child(0)).unwrap();
        let one = scan_with(&obj, &o, &[vec![0.7]]);
        assert_eq!(one.values[0].unwrap(), obj.value(&o, &[0.7]).unwrap());
    }

    #[test]
    fn degenerate_candidates_error() {
        let q = qoi();
        let zero = ClosureFunctional::new("zero", layout(), FunctionalKind::Observable, |_, _, _| {
            Ok(0.0)
        })
        .with_gradient(|_, _, _| Ok(vec![0.0, 0.0]));
        let th = Distribution::normal(1.0, 0.2).unwrap();
        let opts = OptimizerOptions {
            n_samples: 10,
            ..Default::default()
        };
        let grid = vec![vec![0.0]];
        let r = optimize_sensor(&[&zero], &SensorSearch::Grid(grid), &[1.0], &q, &th, &opts);
        assert!(matches!(r, Err(Error::ZeroTrace(_))));
    }
}
