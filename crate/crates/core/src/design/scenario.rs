//! Selection of the validation scenario.

use std::path::Path;

use serde::Serialize;

use crate::design::pattern::{multistart, OptimizerOptions};
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::functional::ModelFunctional;
use crate::io::{fmt_f64, write_csv, write_json};
use crate::param::Bounds;
use crate::rng::RngSpec;
use crate::sampling::lhs_sample;
use crate::sensitivity::{
    influence_matrix_with_samples, pin_samples, spectral_distance, InfluenceMatrix,
};

/// `x ↦ ‖M_h(x) − M_h(x_pred)‖₂` over one pinned set of θ draws.
pub struct ScenarioObjective<'a> {
    h: &'a dyn ModelFunctional,
    samples: Vec<Vec<f64>>,
    target: InfluenceMatrix,
    target_norm: f64,
}

impl<'a> ScenarioObjective<'a> {
    pub fn new(
        h: &'a dyn ModelFunctional,
        x_pred: &[f64],
        theta: &Distribution,
        n_samples: usize,
        rng: RngSpec,
    ) -> Result<Self> {
        let samples = pin_samples(theta, n_samples, rng)?;
        Self::with_samples(h, x_pred, samples)
    }

    pub fn with_samples(
        h: &'a dyn ModelFunctional,
        x_pred: &[f64],
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let target = influence_matrix_with_samples(h, x_pred, &[], &samples)?;
        let target_norm = target.norm2();
        Ok(Self {
            h,
            samples,
            target,
            target_norm,
        })
    }

    pub fn target(&self) -> &InfluenceMatrix {
        &self.target
    }

    pub fn target_norm(&self) -> f64 {
        self.target_norm
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn matrix(&self, x: &[f64]) -> Result<InfluenceMatrix> {
        influence_matrix_with_samples(self.h, x, &[], &self.samples)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        spectral_distance(&self.matrix(x)?, &self.target)
    }

    /// Objective divided by `‖M_h(x_pred)‖₂`.
    pub fn normalized(&self, x: &[f64]) -> Result<f64> {
        Ok(self.normalize(self.value(x)?))
    }

    pub fn normalize(&self, v: f64) -> f64 {
        if self.target_norm > 0.0 {
            v / self.target_norm
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartResult {
    pub start: Vec<f64>,
    /// `None` when this start failed.
    pub optimum: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub normalized_objective: Option<f64>,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignResult {
    pub functional: String,
    pub labels: Vec<String>,
    pub best_point: Vec<f64>,
    pub best_objective: f64,
    pub normalized_objective: f64,
    pub target_norm: f64,
    pub per_start: Vec<StartResult>,
    /// Coordinates along which the objective does not change at the optimum.
    pub flat_coordinates: Vec<String>,
}

impl DesignResult {
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut header = vec!["start".to_string()];
        header.extend(self.labels.iter().map(|l| format!("init_{l}")));
        header.extend(self.labels.iter().map(|l| format!("opt_{l}")));
        header.extend(["objective", "normalized_objective", "evals"].map(String::from));
        let rows: Vec<Vec<String>> = self
            .per_start
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let mut r = vec![(k + 1).to_string()];
                r.extend(s.start.iter().map(|v| fmt_f64(*v)));
                match &s.optimum {
                    Some(o) => r.extend(o.iter().map(|v| fmt_f64(*v))),
                    None => r.extend(std::iter::repeat_n(String::new(), s.start.len())),
                }
                r.push(s.objective.map(fmt_f64).unwrap_or_default());
                r.push(s.normalized_objective.map(fmt_f64).unwrap_or_default());
                r.push(s.evals.to_string());
                r
            })
            .collect();
        write_csv(path, &header, &rows)
    }

    pub fn write_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        write_json(path, self)
    }
}

/// Flag coordinates where moving 1% of the box width changes the
/// normalized objective by less than `1e-10` in both directions.
pub(crate) fn flat_coordinates(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    base: f64,
    bounds: &Bounds,
) -> Vec<usize> {
    let mut flat = Vec::new();
    for i in 0..bounds.dim() {
        let w = bounds.width(i);
        if w == 0.0 {
            flat.push(i);
            continue;
        }
        let mut is_flat = true;
        for s in [1.0, -1.0] {
            let mut p = x.to_vec();
            p[i] = (x[i] + s * 0.01 * w).clamp(bounds.lower()[i], bounds.upper()[i]);
            if p[i] == x[i] {
                continue;
            }
            match f(&p) {
                Ok(v) if (v - base).abs() < 1e-10 => {}
                _ => is_flat = false,
            }
        }
        if is_flat {
            flat.push(i);
        }
    }
    flat
}

/// Choose the scenario in `x_lab` whose influence matrix best matches the
/// one at `x_pred`.
///
/// The θ draws come from stream `opts.rng.child(0)` and are shared by every
/// candidate; the LHS starts come from `opts.rng.child(1)`.
pub fn optimize_scenario(
    h_qoi: &dyn ModelFunctional,
    x_pred: &[f64],
    theta: &Distribution,
    x_lab: &Bounds,
    opts: &OptimizerOptions,
) -> Result<DesignResult> {
    let starts = lhs_sample(x_lab, opts.n_starts, opts.rng.child(1))?;
    optimize_scenario_from(h_qoi, x_pred, theta, x_lab, &starts, opts)
}

/// [`optimize_scenario`] with caller-chosen starts.
pub fn optimize_scenario_from(
    h_qoi: &dyn ModelFunctional,
    x_pred: &[f64],
    theta: &Distribution,
    x_lab: &Bounds,
    starts: &[Vec<f64>],
    opts: &OptimizerOptions,
) -> Result<DesignResult> {
    opts.validate()?;
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no start points".into()));
    }
    let obj = ScenarioObjective::new(h_qoi, x_pred, theta, opts.n_samples, opts.rng.child(0))?;
    let f = |x: &[f64]| obj.value(x);
    let runs = multistart(&f, starts, x_lab, opts)?;
    let mut per_start = Vec::with_capacity(runs.len());
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (start, run) in starts.iter().zip(runs) {
        match run {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.value < b.1) {
                    best = Some((r.x.clone(), r.value));
                }
                per_start.push(StartResult {
                    start: start.clone(),
                    normalized_objective: Some(obj.normalize(r.value)),
                    objective: Some(r.value),
                    optimum: Some(r.x),
                    evals: r.evals,
                });
            }
            Err(e) => {
                log::warn!("scenario start {start:?} failed: {e}");
                per_start.push(StartResult {
                    start: start.clone(),
                    optimum: None,
                    objective: None,
                    normalized_objective: None,
                    evals: 0,
                });
            }
        }
    }
    let (best_point, best_objective) = best.ok_or(Error::AllStartsFailed)?;
    let labels: Vec<String> = h_qoi.layout().control.clone();
    let nf = |x: &[f64]| obj.normalized(x);
    let flat = flat_coordinates(&nf, &best_point, obj.normalize(best_objective), x_lab)
        .into_iter()
        .map(|i| labels[i].clone())
        .collect();
    Ok(DesignResult {
        functional: h_qoi.id().to_string(),
        labels,
        normalized_objective: obj.normalize(best_objective),
        best_point,
        best_objective,
        target_norm: obj.target_norm(),
        per_start,
        flat_coordinates: flat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{ClosureFunctional, FunctionalKind};
    use crate::param::ParameterLayout;

    fn toy() -> ClosureFunctional {
        // h = x0² θ + x1, gradient (2 x0 θ, 1, x0²)
        ClosureFunctional::new(
            "toy",
            ParameterLayout::new(&["a", "b"], &["t"], &[]),
            FunctionalKind::Qoi,
            |x, th, _| Ok(x[0] * x[0] * th[0] + x[1]),
        )
        .with_gradient(|x, th, _| Ok(vec![2.0 * x[0] * th[0], 1.0, x[0] * x[0]]))
    }

    fn opts() -> OptimizerOptions {
        OptimizerOptions {
            n_starts: 4,
            n_samples: 200,
            rng: RngSpec::seeded(17),
            ..Default::default()
        }
    }

    #[test]
    fn recovers_prediction_and_flags_affine_direction() {
        let h = toy();
        let th = Distribution::normal(1.0, 0.1).unwrap();
        let b = Bounds::from_intervals(&[(0.1, 3.0), (0.0, 1.0)]).unwrap();
        let r = optimize_scenario(&h, &[1.3, 0.5], &th, &b, &opts()).unwrap();
        assert!((r.best_point[0] - 1.3).abs() < 1e-4, "{:?}", r.best_point);
        assert!(r.normalized_objective < 1e-6);
        assert_eq!(r.flat_coordinates, vec!["b".to_string()]);
        for s in &r.per_start {
            assert!(b.contains(s.optimum.as_ref().unwrap()));
            assert!(s.objective.unwrap() >= r.best_objective);
        }
    }

    #[test]
    fn objective_zero_at_prediction() {
        let h = toy();
        let th = Distribution::normal(1.0, 0.1).unwrap();
        let o = ScenarioObjective::new(&h, &[1.3, 0.5], &th, 100, RngSpec::seeded(1)).unwrap();
        assert_eq!(o.value(&[1.3, 0.5]).unwrap(), 0.0);
        assert!(o.value(&[2.0, 0.5]).unwrap() > 0.0);
    }

    #[test]
    fn reruns_are_identical() {
        let h = toy();
        let th = Distribution::normal(1.0, 0.1).unwrap();
        let b = Bounds::from_intervals(&[(0.1, 3.0), (0.0, 1.0)]).unwrap();
        let a = optimize_scenario(&h, &[1.3, 0.5], &th, &b, &opts()).unwrap();
        let c = optimize_scenario(&h, &[1.3, 0.5], &th, &b, &opts()).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn start_order_does_not_change_best() {
        let h = toy();
        let th = Distribution::normal(1.0, 0.1).unwrap();
        let b = Bounds::from_intervals(&[(0.1, 3.0), (0.0, 1.0)]).unwrap();
        let starts = lhs_sample(&b, 4, RngSpec::seeded(2)).unwrap();
        let mut rev = starts.clone();
        rev.reverse();
        let a = optimize_scenario_from(&h, &[1.3, 0.5], &th, &b, &starts, &opts()).unwrap();
        let c = optimize_scenario_from(&h, &[1.3, 0.5], &th, &b, &rev, &opts()).unwrap();
        assert_eq!(a.best_objective, c.best_objective);
    }

    #[test]
    fn csv_has_one_row_per_start() {
        let h = toy();
        let th = Distribution::dirac_scalar(1.0).unwrap();
        let b = Bounds::from_intervals(&[(0.1, 3.0), (0.0, 1.0)]).unwrap();
        let r = optimize_scenario(&h, &[1.3, 0.5], &th, &b, &opts()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.write_csv(dir.path().join("d.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("start,init_a,init_b,opt_a,opt_b,objective"));
    }
}
