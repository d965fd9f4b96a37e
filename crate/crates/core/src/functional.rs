//! The model-functional contract shared by every model family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{check_len, ParameterLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    /// Measurable `h_obs(x, θ, z)`.
    Observable,
    /// Quantity of interest `h_qoi(x, θ)`; sensor arguments are ignored.
    Qoi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientSource {
    Analytic,
    Adjoint,
    FiniteDifference,
}

/// A scalar functional `h(x, θ, z)` of a model.
///
/// Gradients are taken with respect to `(x, θ)` in that order. The default
/// gradient is a central finite difference with step
/// `max(1e-6, 1e-6 |p_i|)` per coordinate.
pub trait ModelFunctional: Send + Sync {
    fn id(&self) -> &str;

    fn layout(&self) -> &ParameterLayout;

    fn kind(&self) -> FunctionalKind;

    fn evaluate(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Result<f64>;

    fn gradient(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        fd_gradient(self, x, theta, z)
    }

    fn gradient_source(&self) -> GradientSource {
        GradientSource::FiniteDifference
    }

    /// `(dim x, dim θ, dim z)`; a QoI reports `dim z = 0`.
    fn arity(&self) -> (usize, usize, usize) {
        let (dx, dt, dz) = self.layout().dims();
        match self.kind() {
            FunctionalKind::Qoi => (dx, dt, 0),
            FunctionalKind::Observable => (dx, dt, dz),
        }
    }

    /// Check argument lengths against [`arity`](Self::arity).
    fn check_args(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Result<()> {
        let (dx, dt, dz) = self.arity();
        check_len("control parameters", dx, x.len())?;
        check_len("model parameters", dt, theta.len())?;
        if self.kind() == FunctionalKind::Observable {
            check_len("sensor parameters", dz, z.len())?;
        }
        Ok(())
    }
}

/// Central finite-difference gradient of `f` with respect to `(x, θ)`.
pub fn fd_gradient<F: ModelFunctional + ?Sized>(
    f: &F,
    x: &[f64],
    theta: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    let mut p: Vec<f64> = x.iter().chain(theta).copied().collect();
    let dx = x.len();
    let mut g = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        let h = 1e-6f64.max(1e-6 * orig.abs());
        p[i] = orig + h;
        let fp = f.evaluate(&p[..dx], &p[dx..], z)?;
        p[i] = orig - h;
        let fm = f.evaluate(&p[..dx], &p[dx..], z)?;
        p[i] = orig;
        let d = (fp - fm) / (2.0 * h);
        if !d.is_finite() {
            return Err(Error::NonFinite(format!("finite-difference gradient of {}", f.id())));
        }
        g.push(d);
    }
    Ok(g)
}

type EvalFn = dyn Fn(&[f64], &[f64], &[f64]) -> Result<f64> + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync;

/// A functional assembled from closures, handy for ad hoc models.
pub struct ClosureFunctional {
    id: String,
    layout: ParameterLayout,
    kind: FunctionalKind,
    eval: Box<EvalFn>,
    grad: Option<Box<GradFn>>,
}

impl ClosureFunctional {
    pub fn new(
        id: impl Into<String>,
        layout: ParameterLayout,
        kind: FunctionalKind,
        eval: impl Fn(&[f64], &[f64], &[f64]) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            layout,
            kind,
            eval: Box::new(eval),
            grad: None,
        }
    }

    pub fn with_gradient(
        mut self,
        grad: impl Fn(&[f64], &[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Box::new(grad));
        self
    }
}

impl std::fmt::Debug for ClosureFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosureFunctional")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

impl ModelFunctional for ClosureFunctional {
    fn id(&self) -> &str {
        &self.id
    }

    fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    fn kind(&self) -> FunctionalKind {
        self.kind
    }

    fn evaluate(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Result<f64> {
        (self.eval)(x, theta, z)
    }

    fn gradient(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        match &self.grad {
            Some(g) => g(x, theta, z),
            None => fd_gradient(self, x, theta, z),
        }
    }

    fn gradient_source(&self) -> GradientSource {
        if self.grad.is_some() {
            GradientSource::Analytic
        } else {
            GradientSource::FiniteDifference
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> ClosureFunctional {
        ClosureFunctional::new(
            "quad",
            ParameterLayout::new(&["x"], &["a", "b"], &["t"]),
            FunctionalKind::Observable,
            |x, th, z| Ok(th[0] * x[0] * x[0] + th[1] * z[0]),
        )
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let f = quadratic();
        let g = f.gradient(&[3.0], &[2.0, 5.0], &[7.0]).unwrap();
        assert!((g[0] - 12.0).abs() < 1e-6);
        assert!((g[1] - 9.0).abs() < 1e-6);
        assert!((g[2] - 7.0).abs() < 1e-6);
        assert_eq!(f.gradient_source(), GradientSource::FiniteDifference);
    }

    #[test]
    fn qoi_arity_drops_sensor_block() {
        let f = ClosureFunctional::new(
            "q",
            ParameterLayout::new(&["x"], &["a"], &["t"]),
            FunctionalKind::Qoi,
            |x, th, _| Ok(x[0] + th[0]),
        );
        assert_eq!(f.arity(), (1, 1, 0));
        assert!(f.check_args(&[1.0], &[1.0], &[0.5, 0.5]).is_ok());
        assert!(quadratic().check_args(&[1.0], &[1.0, 2.0], &[]).is_err());
    }
}
