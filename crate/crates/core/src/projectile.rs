//! Vertical launch of a sphere with linear (Stokes) drag, and a nonlinear
//! drag model used to manufacture data.
//!
//! Controls are `x = (m, ℓ, u₀, v₀)`, model parameters `θ = (g, μ)` with
//! viscosity `e^μ`, and the sensor parameter is the time `t`. With
//! `β = 3π e^μ ℓ / m` and `s = βt`, the altitude is
//!
//! ```text
//! u(t) = u₀ + v₀ t φ₁(s) − g t² φ₂(s),
//! φ₁(s) = (1 − e^{−s})/s,   φ₂(s) = (s − 1 + e^{−s})/s².
//! ```
//!
//! Written this way the solution stays accurate when `s` is tiny, which is
//! the usual case here (`β ≈ 3·10⁻⁵ s⁻¹` at the prediction scenario).

use std::f64::consts::PI;
use std::path::Path;

use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{FunctionalKind, GradientSource, ModelFunctional};
use crate::io::{fmt_f64, write_csv};
use crate::param::ParameterLayout;
use crate::rng::RngSpec;

/// Air density of the Reynolds number and of the fine model.
pub const RHO_AIR: f64 = 1.2;
/// Laminar limit of the drag correlation.
pub const RE_LAMINAR_MAX: f64 = 2e5;

pub fn layout() -> ParameterLayout {
    ParameterLayout::new(&["m", "ell", "u0", "v0"], &["g", "mu"], &["t"])
}

fn check(x: &[f64], theta: &[f64]) -> Result<()> {
    if x.len() != 4 || theta.len() != 2 {
        return Err(Error::DimensionMismatch {
            what: "projectile parameters",
            expected: 6,
            got: x.len() + theta.len(),
        });
    }
    if !(x[0] > 0.0 && x[1] > 0.0 && x[3] > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "projectile needs m > 0, ell > 0, v0 > 0; got {x:?}"
        )));
    }
    if !(theta[0] > 0.0) || !theta[1].is_finite() {
        return Err(Error::InvalidArgument(format!(
            "projectile needs g > 0 and finite mu; got {theta:?}"
        )));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")))
    }
}

fn beta(x: &[f64], theta: &[f64]) -> f64 {
    3.0 * PI * theta[1].exp() * x[1] / x[0]
}

/// `(φ₁, φ₂, φ₁', φ₂')` at `s ≥ 0`.
fn phis(s: f64) -> (f64, f64, f64, f64) {
    if s < 1.0 {
        phis_series(s)
    } else {
        phis_closed(s)
    }
}

fn phis_series(s: f64) -> (f64, f64, f64, f64) {
    // Σ (−s)^j/(j+1)!, Σ (−s)^j/(j+2)! and their derivatives
    let (mut p1, mut p2, mut d1, mut d2) = (0.0, 0.0, 0.0, 0.0);
    let mut pow = 1.0; // (−s)^j
    let mut fact1 = 1.0; // (j+1)!
    for j in 0..30 {
        let fact2 = fact1 * (j as f64 + 2.0);
        p1 += pow / fact1;
        p2 += pow / fact2;
        let jf = (j + 1) as f64;
        // derivative term j+1: (j+1)(−1)^{j+1} s^j/(j+2)!, (j+1)(−1)^{j+1} s^j/(j+3)!
        d1 -= jf * pow / fact2;
        d2 -= jf * pow / (fact2 * (j as f64 + 3.0));
        pow *= -s;
        fact1 = fact2;
    }
    (p1, p2, d1, d2)
}

fn phis_closed(s: f64) -> (f64, f64, f64, f64) {
    let em = (-s).exp();
    let p1 = -(-s).exp_m1() / s;
    let p2 = (s + (-s).exp_m1()) / (s * s);
    (p1, p2, (em - p1) / s, (p1 - 2.0 * p2) / s)
}

/// `ψ(χ) = (χ − ln(1+χ))/χ²` and its derivative.
fn psi(chi: f64) -> (f64, f64) {
    if chi < 0.1 {
        psi_series(chi)
    } else {
        psi_closed(chi)
    }
}

fn psi_series(chi: f64) -> (f64, f64) {
    let (mut p, mut d) = (0.0, 0.0);
    let mut pow = 1.0; // (−χ)^k
    for k in 0..24 {
        p += pow / (k as f64 + 2.0);
        // k+1 term of the derivative: (k+1)(−1)^{k+1}χ^k/(k+3)
        d -= (k as f64 + 1.0) * pow / (k as f64 + 3.0);
        pow *= -chi;
    }
    (p, d)
}

fn psi_closed(chi: f64) -> (f64, f64) {
    let p = (chi - chi.ln_1p()) / (chi * chi);
    (p, (1.0 / (1.0 + chi) - 2.0 * p) / chi)
}

/// `χ − ln(1+χ)` without cancellation.
pub fn chi_minus_log1p(chi: f64) -> f64 {
    psi(chi).0 * chi * chi
}

pub fn altitude(x: &[f64], theta: &[f64], t: f64) -> Result<f64> {
    check(x, theta)?;
    check_t(t)?;
    let (p1, p2, _, _) = phis(beta(x, theta) * t);
    Ok(x[2] + x[3] * t * p1 - theta[0] * t * t * p2)
}

pub fn velocity(x: &[f64], theta: &[f64], t: f64) -> Result<f64> {
    check(x, theta)?;
    check_t(t)?;
    let s = beta(x, theta) * t;
    let (p1, _, _, _) = phis(s);
    Ok(x[3] * (-s).exp() - theta[0] * t * p1)
}

pub fn acceleration(x: &[f64], theta: &[f64], t: f64) -> Result<f64> {
    check(x, theta)?;
    check_t(t)?;
    let b = beta(x, theta);
    Ok(-(-b * t).exp() * (theta[0] + x[3] * b))
}

/// Gradient of the altitude with respect to `(m, ℓ, u₀, v₀, g, μ)`.
pub fn grad_altitude(x: &[f64], theta: &[f64], t: f64) -> Result<Vec<f64>> {
    check(x, theta)?;
    check_t(t)?;
    let (v0, g) = (x[3], theta[0]);
    let s = beta(x, theta) * t;
    let (p1, p2, d1, d2) = phis(s);
    let du_ds = v0 * t * d1 - g * t * t * d2;
    Ok(vec![
        -du_ds * s / x[0],
        du_ds * s / x[1],
        1.0,
        t * p1,
        -t * t * p2,
        du_ds * s,
    ])
}

/// Gradient of the acceleration with respect to `(m, ℓ, u₀, v₀, g, μ)`.
pub fn grad_acceleration(x: &[f64], theta: &[f64], t: f64) -> Result<Vec<f64>> {
    check(x, theta)?;
    check_t(t)?;
    let (v0, g) = (x[3], theta[0]);
    let b = beta(x, theta);
    let e = (-b * t).exp();
    let da_db = e * (t * g + t * v0 * b - v0);
    Ok(vec![
        -da_db * b / x[0],
        da_db * b / x[1],
        0.0,
        -b * e,
        -e,
        da_db * b,
    ])
}

/// Maximal altitude `q = u₀ + (v₀²/g) ψ(χ)` with `χ = v₀β/g`.
pub fn qoi_max_altitude(x: &[f64], theta: &[f64]) -> Result<f64> {
    check(x, theta)?;
    let (v0, g) = (x[3], theta[0]);
    let chi = v0 * beta(x, theta) / g;
    Ok(x[2] + v0 * v0 / g * psi(chi).0)
}

/// Gradient of the maximal altitude with respect to `(m, ℓ, u₀, v₀, g, μ)`.
pub fn grad_qoi(x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    check(x, theta)?;
    let (v0, g) = (x[3], theta[0]);
    let chi = v0 * beta(x, theta) / g;
    let (p, dp) = psi(chi);
    let k = v0 * v0 / g * dp * chi;
    Ok(vec![
        -k / x[0],
        k / x[1],
        1.0,
        v0 / g * (2.0 * p + chi * dp),
        -v0 * v0 / (g * g) * (p + chi * dp),
        k,
    ])
}

/// Time at which the altitude peaks, `t* = ln(1+χ)/β`.
pub fn time_of_max(x: &[f64], theta: &[f64]) -> Result<f64> {
    check(x, theta)?;
    let (v0, g) = (x[3], theta[0]);
    let chi = v0 * beta(x, theta) / g;
    let ratio = if chi == 0.0 { 1.0 } else { chi.ln_1p() / chi };
    Ok(v0 / g * ratio)
}

/// `Re(t) = ρ ℓ |u'(t)| / e^μ` under the linear model.
pub fn reynolds(x: &[f64], theta: &[f64], t: f64, rho: f64) -> Result<f64> {
    Ok(rho * x[1] * velocity(x, theta, t)?.abs() / theta[1].exp())
}

/// Drag coefficient of the fine model (laminar correlation).
pub fn drag_coefficient(re: f64) -> f64 {
    24.0 / re * (1.0 + 0.15 * re.powf(0.681)) + 0.407 / (1.0 + 8710.0 / re)
}

/// Constants of the fine model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineModel {
    pub g: f64,
    pub visc: f64,
    pub rho: f64,
    /// RK4 step in seconds; the result is checked against half this step.
    pub step: f64,
}

impl Default for FineModel {
    fn default() -> Self {
        Self {
            g: 9.81,
            visc: 1.8e-5,
            rho: RHO_AIR,
            step: 1e-3,
        }
    }
}

impl FineModel {
    /// `θ = (g, ln visc)` of the linear model with the same physics.
    pub fn theta(&self) -> [f64; 2] {
        [self.g, self.visc.ln()]
    }

    /// Right-hand side `(u', u'')`. The drag `(ρπℓ²c_D/8) v|v|` is expanded
    /// so that it stays finite at `v = 0`.
    fn rhs(&self, x: &[f64], v: f64) -> f64 {
        let (m, ell) = (x[0], x[1]);
        let re = self.rho * ell * v.abs() / self.visc;
        let bracket = 24.0 * self.visc / (self.rho * ell) * (1.0 + 0.15 * re.powf(0.681))
            + 0.407 * v.abs() * re / (re + 8710.0);
        -self.g - self.rho * PI * ell * ell / 8.0 * v * bracket / m
    }

    fn integrate(&self, x: &[f64], times: &[f64], dt: f64) -> (Vec<f64>, f64) {
        let (mut t, mut u, mut v) = (0.0, x[2], x[3]);
        let mut out = Vec::with_capacity(times.len());
        let mut max_re = self.rho * x[1] * v.abs() / self.visc;
        for &target in times {
            while t < target {
                let h = dt.min(target - t);
                let k1u = v;
                let k1v = self.rhs(x, v);
                let k2u = v + 0.5 * h * k1v;
                let k2v = self.rhs(x, k2u);
                let k3u = v + 0.5 * h * k2v;
                let k3v = self.rhs(x, k3u);
                let k4u = v + h * k3v;
                let k4v = self.rhs(x, k4u);
                u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
                v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                t = if h < dt { target } else { t + h };
                max_re = max_re.max(self.rho * x[1] * v.abs() / self.visc);
            }
            out.push(u);
        }
        (out, max_re)
    }

    /// Fine-model altitude at each time of `times`.
    ///
    /// Fails when halving the step moves any value by more than `1e-6`
    /// relative to `max(|ũ|, 1)`. Logs a warning when the Reynolds number
    /// leaves the laminar range of the drag correlation.
    pub fn trajectory(&self, x: &[f64], times: &[f64]) -> Result<Vec<f64>> {
        if x.len() != 4 || !(x[0] > 0.0 && x[1] > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid projectile control {x:?}")));
        }
        if !(self.step > 0.0 && self.visc > 0.0 && self.rho > 0.0) {
            return Err(Error::InvalidArgument("fine model needs positive constants".into()));
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let sorted: Vec<f64> = order.iter().map(|&k| times[k]).collect();
        if sorted.first().is_some_and(|t| !(*t >= 0.0)) || sorted.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("times must be finite and nonnegative".into()));
        }
        let (coarse, _) = self.integrate(x, &sorted, self.step);
        let (fine, max_re) = self.integrate(x, &sorted, 0.5 * self.step);
        let worst = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        if worst >= 1e-6 {
            return Err(Error::StepSize(worst));
        }
        if max_re > RE_LAMINAR_MAX {
            log::warn!(
                "fine model: Reynolds number reaches {max_re:.3e}, beyond the laminar range of the drag law"
            );
        }
        let mut out = vec![0.0; times.len()];
        for (k, &i) in order.iter().enumerate() {
            out[i] = fine[k];
        }
        Ok(out)
    }

    /// `n` draws of `ũ(x, t)·N(1, noise²)`.
    pub fn observations(
        &self,
        x: &[f64],
        t: f64,
        n: usize,
        noise: f64,
        rng: RngSpec,
    ) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidArgument("observation count must be at least 1".into()));
        }
        if !(noise >= 0.0) {
            return Err(Error::InvalidArgument("noise level must be nonnegative".into()));
        }
        let u = self.trajectory(x, &[t])?[0];
        let mut g = rng.rng();
        Ok((0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut g);
                u * (1.0 + noise * z)
            })
            .collect())
    }
}

/// Multiplicative noise level of the manufactured data.
pub const SYNTHETIC_NOISE: f64 = 0.05;

/// Write `t, u, ũ` rows for a time grid.
pub fn write_trajectory_csv<P: AsRef<Path>>(
    path: P,
    x: &[f64],
    theta: &[f64],
    fine: &FineModel,
    times: &[f64],
) -> Result<()> {
    let ufine = fine.trajectory(x, times)?;
    let rows = times
        .iter()
        .zip(&ufine)
        .map(|(t, uf)| Ok(vec![fmt_f64(*t), fmt_f64(altitude(x, theta, *t)?), fmt_f64(*uf)]))
        .collect::<Result<Vec<_>>>()?;
    write_csv(path, &["t".into(), "model".into(), "fine".into()], &rows)
}

macro_rules! functional {
    ($name:ident, $id:literal, $kind:expr, |$x:ident, $th:ident, $z:ident| $eval:expr, $grad:expr) => {
        #[derive(Debug, Clone)]
        pub struct $name {
            layout: ParameterLayout,
        }

        impl Default for $name {
            fn default() -> Self {
                Self { layout: layout() }
            }
        }

        impl ModelFunctional for $name {
            fn id(&self) -> &str {
                $id
            }

            fn layout(&self) -> &ParameterLayout {
                &self.layout
            }

            fn kind(&self) -> FunctionalKind {
                $kind
            }

            fn evaluate(&self, $x: &[f64], $th: &[f64], $z: &[f64]) -> Result<f64> {
                self.check_args($x, $th, $z)?;
                $eval
            }

            fn gradient(&self, $x: &[f64], $th: &[f64], $z: &[f64]) -> Result<Vec<f64>> {
                self.check_args($x, $th, $z)?;
                $grad
            }

            fn gradient_source(&self) -> GradientSource {
                GradientSource::Analytic
            }
        }
    };
}

functional!(
    MaxAltitude,
    "max_altitude",
    FunctionalKind::Qoi,
    |x, th, _z| qoi_max_altitude(x, th),
    grad_qoi(x, th)
);

functional!(
    Altitude,
    "altitude",
    FunctionalKind::Observable,
    |x, th, z| altitude(x, th, z[0]),
    grad_altitude(x, th, z[0])
);

functional!(
    Acceleration,
    "acceleration",
    FunctionalKind::Observable,
    |x, th, z| acceleration(x, th, z[0]),
    grad_acceleration(x, th, z[0])
);

/// Look up a projectile functional by id.
pub fn functional(id: &str) -> Option<Box<dyn ModelFunctional>> {
    match id {
        "max_altitude" => Some(Box::new(MaxAltitude::default())),
        "altitude" => Some(Box::new(Altitude::default())),
        "acceleration" => Some(Box::new(Acceleration::default())),
        _ => None,
    }
}
