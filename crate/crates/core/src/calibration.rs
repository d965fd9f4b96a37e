//! Bayesian calibration: Gaussian likelihood, random-walk Metropolis, and
//! D-optimal calibration design.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::{multistart, OptimizerOptions};
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::functional::ModelFunctional;
use crate::io::{fmt_f64, write_csv, write_json};
use crate::param::{check_len, Bounds};
use crate::rng::RngSpec;
use crate::sampling::lhs_sample;

/// One calibration measurement `y` taken at scenario `x` and sensor `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub x: Vec<f64>,
    #[serde(default)]
    pub z: Vec<f64>,
    pub y: f64,
}

/// i.i.d. Gaussian observation noise of standard deviation `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodSpec {
    pub sigma: f64,
    pub observations: Vec<Observation>,
}

impl LikelihoodSpec {
    pub fn new(sigma: f64, observations: Vec<Observation>) -> Result<Self> {
        let s = Self {
            sigma,
            observations,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise standard deviation must be positive, got {}",
                self.sigma
            )));
        }
        if self.observations.is_empty() {
            return Err(Error::EmptySamples);
        }
        if self.observations.iter().any(|o| !o.y.is_finite()) {
            return Err(Error::NonFinite("observation".into()));
        }
        Ok(())
    }

    /// Read `x…, z…, y` rows, with `dx` control and `dz` sensor columns.
    pub fn read_csv<P: AsRef<Path>>(path: P, sigma: f64, dx: usize, dz: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut obs = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != dx + dz + 1 {
                return Err(Error::Parse(format!(
                    "observation row {} has {} columns, expected {}",
                    k + 1,
                    rec.len(),
                    dx + dz + 1
                )));
            }
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("row {}: cannot parse `{s}`", k + 1)))
                })
                .collect::<Result<_>>()?;
            obs.push(Observation {
                x: vals[..dx].to_vec(),
                z: vals[dx..dx + dz].to_vec(),
                y: vals[dx + dz],
            });
        }
        Self::new(sigma, obs)
    }
}

/// `Σ −ln(√(2π)σ) − (h(x, θ, z) − y)² / (2σ²)` over the observations.
pub fn log_likelihood(spec: &LikelihoodSpec, h_obs: &dyn ModelFunctional, theta: &[f64]) -> Result<f64> {
    spec.validate()?;
    let s = spec.sigma;
    let norm = -(s * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let mut total = 0.0;
    for (k, o) in spec.observations.iter().enumerate() {
        let v = h_obs
            .evaluate(&o.x, theta, &o.z)
            .map_err(|e| Error::Evaluation {
                index: k,
                source: Box::new(e),
            })?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("model observation {k}")));
        }
        let r = v - o.y;
        total += norm - r * r / (2.0 * s * s);
    }
    Ok(total)
}

/// A Metropolis chain. `samples[i]` is the state after step `i`; the first
/// `burn_in` states are discarded by [`PosteriorChain::retained`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorChain {
    pub samples: Vec<Vec<f64>>,
    /// Unnormalized log posterior of each state.
    pub log_density: Vec<f64>,
    pub accepted: Vec<bool>,
    pub acceptance_rate: f64,
    pub burn_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    pub labels: Vec<String>,
    pub n_retained: usize,
    pub burn_in: usize,
    pub acceptance_rate: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub q025: Vec<f64>,
    pub q50: Vec<f64>,
    pub q975: Vec<f64>,
}

impl PosteriorChain {
    pub fn retained(&self) -> &[Vec<f64>] {
        &self.samples[self.burn_in..]
    }

    /// The retained draws as a resampling distribution.
    pub fn posterior(&self) -> Result<Distribution> {
        Distribution::joint_empirical(self.retained().to_vec())
    }

    pub fn mean(&self) -> Vec<f64> {
        let r = self.retained();
        let d = r[0].len();
        (0..d)
            .map(|i| r.iter().map(|s| s[i]).sum::<f64>() / r.len() as f64)
            .collect()
    }

    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let r = self.retained();
        let m = self.mean();
        let d = m.len();
        let denom = (r.len().max(2) - 1) as f64;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| r.iter().map(|s| (s[i] - m[i]) * (s[j] - m[j])).sum::<f64>() / denom)
                    .collect()
            })
            .collect()
    }

    pub fn summary(&self, labels: &[String]) -> PosteriorSummary {
        let r = self.retained();
        let d = r[0].len();
        let q = |p: f64| -> Vec<f64> {
            (0..d)
                .map(|i| {
                    let mut c: Vec<f64> = r.iter().map(|s| s[i]).collect();
                    c.sort_by(f64::total_cmp);
                    let k = ((p * c.len() as f64).ceil() as usize).clamp(1, c.len()) - 1;
                    c[k]
                })
                .collect()
        };
        PosteriorSummary {
            labels: labels.to_vec(),
            n_retained: r.len(),
            burn_in: self.burn_in,
            acceptance_rate: self.acceptance_rate,
            mean: self.mean(),
            covariance: self.covariance(),
            q025: q(0.025),
            q50: q(0.5),
            q975: q(0.975),
        }
    }

    /// One row per step: `step, θ…, log_density, accepted`.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P, labels: &[String]) -> Result<()> {
        let mut header = vec!["step".to_string()];
        header.extend(labels.iter().cloned());
        header.push("log_density".into());
        header.push("accepted".into());
        let rows: Vec<Vec<String>> = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut row = vec![i.to_string()];
                row.extend(s.iter().map(|v| fmt_f64(*v)));
                row.push(fmt_f64(self.log_density[i]));
                row.push(u8::from(self.accepted[i]).to_string());
                row
            })
            .collect();
        write_csv(path, &header, &rows)
    }

    pub fn write_summary_json<P: AsRef<Path>>(&self, path: P, labels: &[String]) -> Result<()> {
        write_json(path, &self.summary(labels))
    }
}

/// Random-walk Metropolis targeting likelihood × prior, started at the prior
/// mean. Proposals add `proposal_scale ⊙ N(0, I)`. The chain has `n` steps,
/// the first 20% of which are marked as burn-in.
pub fn posterior_sample(
    spec: &LikelihoodSpec,
    h_obs: &dyn ModelFunctional,
    prior: &Distribution,
    n: usize,
    proposal_scale: &[f64],
    rng: RngSpec,
) -> Result<PosteriorChain> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("chain length must be at least 1".into()));
    }
    let d = prior.dim();
    check_len("proposal scales", d, proposal_scale.len())?;
    if proposal_scale.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument("proposal scales must be finite and nonnegative".into()));
    }
    let mut theta = prior.mean();
    let lp0 = prior.log_density(&theta)?;
    if lp0 == f64::NEG_INFINITY {
        return Err(Error::ZeroPriorDensity);
    }
    let mut lpost = lp0 + log_likelihood(spec, h_obs, &theta)?;
    let mut g = rng.rng();
    let mut samples = Vec::with_capacity(n);
    let mut log_density = Vec::with_capacity(n);
    let mut accepted = Vec::with_capacity(n);
    for _ in 0..n {
        let prop: Vec<f64> = theta
            .iter()
            .zip(proposal_scale)
            .map(|(t, s)| t + s * g.sample::<f64, _>(StandardNormal))
            .collect();
        let u: f64 = g.random();
        let lp = prior.log_density(&prop)?;
        let mut acc = false;
        if lp > f64::NEG_INFINITY {
            let cand = lp + log_likelihood(spec, h_obs, &prop)?;
            if u.ln() < cand - lpost {
                theta = prop;
                lpost = cand;
                acc = true;
            }
        }
        samples.push(theta.clone());
        log_density.push(lpost);
        accepted.push(acc);
    }
    let acceptance_rate = accepted.iter().filter(|a| **a).count() as f64 / n as f64;
    Ok(PosteriorChain {
        samples,
        log_density,
        accepted,
        acceptance_rate,
        burn_in: n / 5,
    })
}

/// Fisher information `∇_θh ∇_θhᵀ / σ²` of one observation.
pub fn observation_fisher(
    h_obs: &dyn ModelFunctional,
    x: &[f64],
    theta: &[f64],
    z: &[f64],
    sigma: f64,
) -> Result<DMatrix<f64>> {
    let g = h_obs.gradient(x, theta, z)?;
    let gt = nalgebra::DVector::from_column_slice(&g[x.len()..x.len() + theta.len()]);
    Ok(&gt * gt.transpose() / (sigma * sigma))
}

/// `ln det` of a symmetric matrix, `None` unless it is positive definite.
pub fn log_det(m: &DMatrix<f64>) -> Option<f64> {
    let scale = m.amax();
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let ch = nalgebra::Cholesky::new(m.clone())?;
    let l = ch.l();
    let mut s = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        // pivots at round-off level mean the matrix is numerically singular
        if !(d * d > 1e-12 * scale) {
            return None;
        }
        s += 2.0 * d.ln();
    }
    Some(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DOptimalResult {
    pub point: Vec<f64>,
    pub log_det: f64,
    /// Per start: `(start, ln det at start, ln det at optimum)`; `None`
    /// where the Fisher matrix was singular at the start.
    pub per_start: Vec<(Vec<f64>, Option<f64>, Option<f64>)>,
}

/// Maximize `ln det I(p)` over `bounds` with multistart pattern search from
/// `opts.n_starts` LHS starts drawn from `opts.rng.child(1)`.
pub fn d_optimal_design(
    fisher: &(dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Sync),
    bounds: &Bounds,
    opts: &OptimizerOptions,
) -> Result<DOptimalResult> {
    opts.validate()?;
    let f = |p: &[f64]| -> Result<f64> {
        let m = fisher(p)?;
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidArgument("Fisher matrix must be square".into()));
        }
        log_det(&m).map(|v| -v).ok_or(Error::NonIdentifiable)
    };
    let starts = lhs_sample(bounds, opts.n_starts, opts.rng.child(1))?;
    let runs = match multistart(&f, &starts, bounds, opts) {
        Err(Error::AllStartsFailed) => return Err(Error::NonIdentifiable),
        other => other?,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut per_start = Vec::with_capacity(starts.len());
    for (s, r) in starts.iter().zip(runs) {
        let at_start = f(s).ok().map(|v| -v);
        match r {
            Ok(r) => {
                let ld = -r.value;
                if best.as_ref().is_none_or(|(_, b)| ld > *b) {
                    best = Some((r.x.clone(), ld));
                }
                per_start.push((s.clone(), at_start, Some(ld)));
            }
            Err(_) => per_start.push((s.clone(), at_start, None)),
        }
    }
    let (point, log_det) = best.ok_or(Error::NonIdentifiable)?;
    Ok(DOptimalResult {
        point,
        log_det,
        per_start,
    })
}
