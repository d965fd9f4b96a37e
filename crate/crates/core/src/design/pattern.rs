//! Pattern search on a box.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::Bounds;
use crate::rng::RngSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Objective evaluations per start.
    pub max_evals: usize,
    /// Starting poll step as a fraction of each box width.
    pub initial_mesh: f64,
    /// Search stops once the step falls below this fraction.
    pub min_mesh: f64,
    pub n_starts: usize,
    /// θ draws per influence-matrix estimate.
    pub n_samples: usize,
    /// After a failed compass poll, also poll a random orthonormal basis.
    pub rotated_poll: bool,
    /// Shake radii (fractions of the box) of the variable-neighbourhood
    /// search run after local convergence; empty disables it.
    pub shake_radii: Vec<f64>,
    /// Consecutive unsuccessful shakes, cycling through `shake_radii`,
    /// before a start stops early.
    pub max_failed_shakes: usize,
    pub rng: RngSpec,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            initial_mesh: 0.25,
            min_mesh: 1e-7,
            n_starts: 10,
            n_samples: 1000,
            rotated_poll: true,
            shake_radii: vec![0.1, 0.2, 0.4, 0.8],
            max_failed_shakes: 12,
            rng: RngSpec::seeded(0),
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_evals == 0 {
            return Err(Error::InvalidArgument("max_evals must be at least 1".into()));
        }
        if !(self.min_mesh > 0.0 && self.min_mesh < self.initial_mesh && self.initial_mesh <= 1.0)
        {
            return Err(Error::InvalidArgument(format!(
                "mesh sizes need 0 < min_mesh < initial_mesh <= 1, got {} and {}",
                self.min_mesh, self.initial_mesh
            )));
        }
        if self.n_starts == 0 {
            return Err(Error::InvalidArgument("n_starts must be at least 1".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
        }
        if self.shake_radii.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(Error::InvalidArgument(
                "shake radii must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    /// Objective after every accepted step, starting with `f(x0)`.
    pub trace: Vec<f64>,
}

/// Objective signature used by the design problems.
pub type Objective<'a> = dyn Fn(&[f64]) -> Result<f64> + Sync + 'a;

/// Minimize `f` over `bounds` from `x0`.
///
/// Each iteration polls `x ± mesh·width_i·e_i` in coordinate order and moves
/// to the first improving point. With `rotated_poll`, a failed compass poll
/// is followed by a poll along `±` the columns of a random Householder
/// basis drawn from `opts.rng`, scaled to unit max-norm; this keeps the
/// search from stalling on kinks that no coordinate direction descends
/// from. The mesh doubles (up to `initial_mesh`) after a successful poll and
/// halves after a failed one, and the local search ends when it drops below
/// `min_mesh`.
///
/// Then, while budget remains, the incumbent is shaken uniformly within
/// `shake_radii` in turn (cycling) and a fresh local search runs from the
/// shaken point. An improvement is accepted and the radii restart from the
/// first; `max_failed_shakes` failures in a row end the start.
///
/// Candidates are clamped into the box. Points where `f` errs or returns a
/// non-finite value are rejected.
pub fn pattern_search(
    f: &Objective<'_>,
    x0: &[f64],
    bounds: &Bounds,
    opts: &OptimizerOptions,
) -> Result<PatternResult> {
    opts.validate()?;
    if !bounds.contains(x0) {
        return Err(Error::InvalidArgument("start point lies outside the box".into()));
    }
    let f0 = f(x0)?;
    if !f0.is_finite() {
        return Err(Error::NonFinite("objective at the start point".into()));
    }
    let mut s = Search {
        f,
        bounds,
        opts,
        rng: opts.rng.rng(),
        evals: 1,
        trace: vec![f0],
    };
    let (mut u, mut x, mut best) = s.local(bounds.to_unit(x0), x0.to_vec(), f0);
    let active: Vec<usize> = (0..bounds.dim()).filter(|&i| bounds.width(i) > 0.0).collect();
    let mut r = 0;
    while r < opts.max_failed_shakes
        && !opts.shake_radii.is_empty()
        && s.evals < opts.max_evals
        && !active.is_empty()
    {
        let rad = opts.shake_radii[r % opts.shake_radii.len()];
        let mut cu = u.clone();
        for &i in &active {
            cu[i] = (u[i] + rad * (2.0 * s.rng.random::<f64>() - 1.0)).clamp(0.0, 1.0);
        }
        let cx = bounds.from_unit(&cu);
        s.evals += 1;
        let v = match f(&cx) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => {
                r += 1;
                continue;
            }
            Err(e) => {
                log::debug!("rejected shake {cx:?}: {e}");
                r += 1;
                continue;
            }
        };
        let (lu, lx, lv) = s.local(cu, cx, v);
        if lv < best {
            u = lu;
            x = lx;
            best = lv;
            s.trace.push(lv);
            r = 0;
        } else {
            r += 1;
        }
    }
    Ok(PatternResult {
        x,
        value: best,
        evals: s.evals,
        trace: s.trace,
    })
}

struct Search<'a, 'f, R> {
    f: &'a Objective<'f>,
    bounds: &'a Bounds,
    opts: &'a OptimizerOptions,
    rng: R,
    evals: usize,
    trace: Vec<f64>,
}

impl<R: Rng> Search<'_, '_, R> {
    /// Poll until the mesh collapses or the budget runs out, starting from
    /// `x` (unit-box image `u`) with value `best`. Improvements are traced only
    /// while they improve on the trace's last entry.
    fn local(&mut self, mut u: Vec<f64>, mut x: Vec<f64>, mut best: f64) -> (Vec<f64>, Vec<f64>, f64) {
        let (bounds, opts) = (self.bounds, self.opts);
        let active: Vec<usize> = (0..bounds.dim()).filter(|&i| bounds.width(i) > 0.0).collect();
        let compass: Vec<Vec<f64>> = active
            .iter()
            .flat_map(|&i| {
                [1.0, -1.0].map(|s| {
                    let mut d = vec![0.0; bounds.dim()];
                    d[i] = s;
                    d
                })
            })
            .collect();
        let mut mesh = opts.initial_mesh;
        'outer: while mesh >= opts.min_mesh && self.evals < opts.max_evals {
            let mut improved = false;
            let rotated = if opts.rotated_poll && active.len() > 1 {
                householder_poll(&active, bounds.dim(), &mut self.rng)
            } else {
                Vec::new()
            };
            for d in compass.iter().chain(&rotated) {
                if self.evals >= opts.max_evals {
                    break 'outer;
                }
                let cu: Vec<f64> = u
                    .iter()
                    .zip(d)
                    .map(|(a, b)| (a + mesh * b).clamp(0.0, 1.0))
                    .collect();
                if cu == u {
                    continue;
                }
                let cx = bounds.from_unit(&cu);
                self.evals += 1;
                match (self.f)(&cx) {
                    Ok(v) if v.is_finite() && v < best => {
                        best = v;
                        u = cu;
                        x = cx;
                        if self.trace.last().is_some_and(|t| v < *t) {
                            self.trace.push(v);
                        }
                        improved = true;
                        break;
                    }
                    Ok(_) => {}
                    Err(e) => log::debug!("rejected candidate {cx:?}: {e}"),
                }
            }
            mesh = if improved {
                (2.0 * mesh).min(opts.initial_mesh)
            } else {
                0.5 * mesh
            };
        }
        (u, x, best)
    }
}

/// `±` columns of `I − 2vvᵀ` for a random unit `v` on the active
/// coordinates, each scaled to max-norm 1.
fn householder_poll<R: Rng>(active: &[usize], dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let v: Vec<f64> = active.iter().map(|_| rng.sample(StandardNormal)).collect();
    let n2: f64 = v.iter().map(|a| a * a).sum();
    if !(n2 > 0.0) {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(2 * active.len());
    for j in 0..active.len() {
        let mut d = vec![0.0; dim];
        for (k, &i) in active.iter().enumerate() {
            let e = if k == j { 1.0 } else { 0.0 };
            d[i] = e - 2.0 * v[k] * v[j] / n2;
        }
        let m = d.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        d.iter_mut().for_each(|a| *a /= m);
        let neg = d.iter().map(|a| -a).collect();
        out.push(d);
        out.push(neg);
    }
    out
}

/// Direction stream for a start in [`multistart`]. It depends on the start
/// point itself, so a run does not depend on where its start sits in the list.
pub fn start_stream(rng: RngSpec, x0: &[f64]) -> RngSpec {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for v in x0 {
        v.to_bits().hash(&mut h);
    }
    rng.child(POLL_STREAM).child(h.finish())
}

const POLL_STREAM: u64 = 0x0b5e;

/// Run [`pattern_search`] from every start in parallel, each drawing its
/// directions from [`start_stream`].
///
/// Results come back in start order. Fails only if every start fails.
pub fn multistart(
    f: &Objective<'_>,
    starts: &[Vec<f64>],
    bounds: &Bounds,
    opts: &OptimizerOptions,
) -> Result<Vec<Result<PatternResult>>> {
    opts.validate()?;
    let runs: Vec<Result<PatternResult>> = starts
        .par_iter()
        .map(|x0| {
            let o = OptimizerOptions {
                rng: start_stream(opts.rng, x0),
                ..opts.clone()
            };
            pattern_search(f, x0, bounds, &o)
        })
        .collect();
    if runs.iter().all(|r| r.is_err()) {
        for (k, r) in runs.iter().enumerate() {
            if let Err(e) = r {
                log::warn!("start {k} failed: {e}");
            }
        }
        return Err(Error::AllStartsFailed);
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::lhs_sample;

    fn opts() -> OptimizerOptions {
        OptimizerOptions {
            min_mesh: 1e-6,
            ..Default::default()
        }
    }

    #[test]
    fn convex_quadratic() {
        let b = Bounds::from_intervals(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let f = |x: &[f64]| Ok((x[0] - 0.3).powi(2) + (x[1] - 0.7).powi(2));
        let r = pattern_search(&f, &[0.0, 0.0], &b, &opts()).unwrap();
        assert!((r.x[0] - 0.3).abs() < 10.0 * 1e-6);
        assert!((r.x[1] - 0.7).abs() < 10.0 * 1e-6);
        assert!(r.value <= r.trace[0]);
    }

    #[test]
    fn flat_objective_returns_start() {
        let b = Bounds::from_intervals(&[(0.0, 1.0), (-1.0, 1.0)]).unwrap();
        let f = |_: &[f64]| Ok(2.0);
        let o = opts();
        let r = pattern_search(&f, &[0.4, 0.1], &b, &o).unwrap();
        assert_eq!(r.x, vec![0.4, 0.1]);
        // mesh 0.25 halves down below 1e-6: 18 failed polls of 4 points
        assert!(r.evals < o.max_evals);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let b = Bounds::from_intervals(&[(0.0, 1.0)]).unwrap();
        let f = |_: &[f64]| Ok(f64::NAN);
        assert!(pattern_search(&f, &[0.5], &b, &opts()).is_err());
        assert!(pattern_search(&|_: &[f64]| Ok(0.0), &[2.0], &b, &opts()).is_err());
    }

    #[test]
    fn rejected_points_are_skipped() {
        let b = Bounds::from_intervals(&[(0.0, 1.0)]).unwrap();
        let f = |x: &[f64]| {
            if x[0] > 0.6 {
                Err(Error::InvalidArgument("out".into()))
            } else {
                Ok((x[0] - 0.8).powi(2))
            }
        };
        let r = pattern_search(&f, &[0.1], &b, &opts()).unwrap();
        assert!(r.x[0] <= 0.6 && r.x[0] > 0.59);
    }

    #[test]
    fn budget_respected() {
        let b = Bounds::from_intervals(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let f = |x: &[f64]| Ok((x[0] - 0.3).powi(2) + (x[1] - 0.7).powi(2));
        let o = OptimizerOptions {
            max_evals: 7,
            ..opts()
        };
        assert_eq!(pattern_search(&f, &[0.0, 0.0], &b, &o).unwrap().evals, 7);
    }

    #[test]
    fn invalid_options() {
        let mut o = opts();
        o.min_mesh = 0.5;
        o.initial_mesh = 0.25;
        assert!(o.validate().is_err());
        o = opts();
        o.max_evals = 0;
        assert!(o.validate().is_err());
    }

    #[test]
    fn rastrigin_multistart() {
        let b = Bounds::from_intervals(&[(-5.12, 5.12), (-5.12, 5.12)]).unwrap();
        let tau = std::f64::consts::TAU;
        let f = move |x: &[f64]| {
            Ok(20.0
                + x.iter()
                    .map(|v| v * v - 10.0 * (tau * v).cos())
                    .sum::<f64>())
        };
        let starts = lhs_sample(&b, 10, RngSpec::seeded(3)).unwrap();
        let runs = multistart(&f, &starts, &b, &opts()).unwrap();
        let vals: Vec<f64> = runs.iter().map(|r| r.as_ref().unwrap().value).collect();
        for r in &runs {
            assert!(b.contains(&r.as_ref().unwrap().x));
        }
        let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let worst = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(worst - best > 0.0);
        // brute-force grid reference
        let mut grid_min = f64::INFINITY;
        for i in 0..=512 {
            for j in 0..=512 {
                let p = [-5.12 + 0.02 * i as f64, -5.12 + 0.02 * j as f64];
                grid_min = grid_min.min(f(&p).unwrap());
            }
        }
        assert!(best <= grid_min + 2.0, "best {best}, grid {grid_min}");
    }
}
