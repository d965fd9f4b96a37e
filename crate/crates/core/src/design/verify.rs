//! Recovery experiments: search the full control space for the prediction
//! scenario itself.

use std::path::Path;

use serde::Serialize;

use crate::design::pattern::OptimizerOptions;
use crate::design::scenario::optimize_scenario;
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::functional::ModelFunctional;
use crate::io::{fmt_f64, write_csv, write_json};
use crate::param::Bounds;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationRow {
    pub initial: Vec<f64>,
    pub optimal: Option<Vec<f64>>,
    /// Euclidean distance from the optimum to `x_pred`.
    pub error: Option<f64>,
    pub normalized_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationTable {
    pub functional: String,
    pub labels: Vec<String>,
    pub x_pred: Vec<f64>,
    pub rows: Vec<VerificationRow>,
    pub flat_coordinates: Vec<String>,
}

impl VerificationTable {
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut header = vec!["run".to_string()];
        header.extend(self.labels.iter().map(|l| format!("init_{l}")));
        header.extend(self.labels.iter().map(|l| format!("opt_{l}")));
        header.push("error".into());
        header.push("normalized_objective".into());
        let d = self.labels.len();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let mut out = vec![(k + 1).to_string()];
                out.extend(r.initial.iter().map(|v| fmt_f64(*v)));
                match &r.optimal {
                    Some(o) => out.extend(o.iter().map(|v| fmt_f64(*v))),
                    None => out.extend(std::iter::repeat_n(String::new(), d)),
                }
                out.push(r.error.map(fmt_f64).unwrap_or_default());
                out.push(r.normalized_objective.map(fmt_f64).unwrap_or_default());
                out
            })
            .collect();
        write_csv(path, &header, &rows)
    }

    pub fn write_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        write_json(path, self)
    }
}

/// Run the scenario problem over `x_full ∋ x_pred` from `opts.n_starts`
/// LHS starts and tabulate how well each start recovers `x_pred`.
pub fn verify_recovery(
    h_qoi: &dyn ModelFunctional,
    x_pred: &[f64],
    theta: &Distribution,
    x_full: &Bounds,
    opts: &OptimizerOptions,
) -> Result<VerificationTable> {
    if !x_full.contains(x_pred) {
        return Err(Error::InvalidArgument(
            "the verification box must contain the prediction scenario".into(),
        ));
    }
    let r = optimize_scenario(h_qoi, x_pred, theta, x_full, opts)?;
    let rows = r
        .per_start
        .into_iter()
        .map(|s| VerificationRow {
            error: s.optimum.as_ref().map(|o| {
                o.iter()
                    .zip(x_pred)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }),
            initial: s.start,
            optimal: s.optimum,
            normalized_objective: s.normalized_objective,
        })
        .collect();
    Ok(VerificationTable {
        functional: r.functional,
        labels: r.labels,
        x_pred: x_pred.to_vec(),
        rows,
        flat_coordinates: r.flat_coordinates,
    })
}
