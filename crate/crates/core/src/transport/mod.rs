//! Contaminant transport in a harbour channel.
//!
//! Control `x = (z₀, L, c)` shapes the inflow profile, the model parameter
//! is the log-diffusivity `k`, and observations average the concentration
//! over a small square centred on the sensor `z = (z₁, z₂)`.

mod band;
mod grid;
mod model;
mod mollifier;
mod velocity;

use std::sync::Arc;

pub use band::{BandLu, BandMatrix};
pub use grid::{default_docks, Grid, Rect};
pub use model::{discrete_divergence, AdjointField, ConcentrationField, TransportModel};
pub use mollifier::{inflow_gradients, inflow_values, mollifier, mollifier_grad, InflowSampling};
pub use velocity::VelocityField;

use crate::error::Result;
use crate::functional::{FunctionalKind, GradientSource, ModelFunctional};
use crate::param::ParameterLayout;

/// Nominal log-diffusivity, `ln 0.01`.
pub const K0: f64 = -2.0 * std::f64::consts::LN_10;

/// Side of the observation square.
pub const OBS_SIDE: f64 = 0.1;

pub fn layout() -> ParameterLayout {
    ParameterLayout::new(&["z0", "L", "c"], &["k"], &["z1", "z2"])
}

/// First averaging region, downstream of the first dock.
pub fn omega1() -> Rect {
    Rect {
        x0: 1.7,
        x1: 2.3,
        y0: 0.1,
        y1: 0.5,
    }
}

/// Second averaging region, near the far bank.
pub fn omega2() -> Rect {
    Rect {
        x0: 3.4,
        x1: 4.0,
        y0: 1.5,
        y1: 1.9,
    }
}

/// Mean concentration over a fixed region, as a quantity of interest.
#[derive(Debug, Clone)]
pub struct RegionMean {
    id: String,
    model: Arc<TransportModel>,
    region: Rect,
    layout: ParameterLayout,
}

impl RegionMean {
    pub fn new(id: impl Into<String>, model: Arc<TransportModel>, region: Rect) -> Self {
        Self {
            id: id.into(),
            model,
            region,
            layout: layout(),
        }
    }

    pub fn qoi1(model: Arc<TransportModel>) -> Self {
        Self::new("qoi1", model, omega1())
    }

    pub fn qoi2(model: Arc<TransportModel>) -> Self {
        Self::new("qoi2", model, omega2())
    }

    pub fn region(&self) -> &Rect {
        &self.region
    }
}

impl ModelFunctional for RegionMean {
    fn id(&self) -> &str {
        &self.id
    }

    fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    fn kind(&self) -> FunctionalKind {
        FunctionalKind::Qoi
    }

    fn evaluate(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Result<f64> {
        self.check_args(x, theta, z)?;
        let f = self.model.solve(x, theta[0])?;
        self.model.mean_concentration(&f, &self.region)
    }

    fn gradient(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.check_args(x, theta, z)?;
        Ok(self.model.value_and_gradient(x, theta[0], &self.region)?.1.to_vec())
    }

    fn gradient_source(&self) -> GradientSource {
        GradientSource::Adjoint
    }
}

/// Mean concentration over the observation square at the sensor, clipped to
/// the channel.
#[derive(Debug, Clone)]
pub struct SensorMean {
    model: Arc<TransportModel>,
    side: f64,
    layout: ParameterLayout,
}

impl SensorMean {
    pub fn new(model: Arc<TransportModel>) -> Self {
        Self::with_side(model, OBS_SIDE)
    }

    pub fn with_side(model: Arc<TransportModel>, side: f64) -> Self {
        Self {
            model,
            side,
            layout: layout(),
        }
    }

    pub fn region(&self, z: &[f64]) -> Result<Rect> {
        let g = self.model.grid();
        let s = Rect::square(z[0], z[1], self.side)?;
        Rect::new(
            s.x0.max(0.0),
            s.x1.min(g.width()),
            s.y0.max(0.0),
            s.y1.min(g.height()),
        )
    }
}

impl ModelFunctional for SensorMean {
    fn id(&self) -> &str {
        "obs"
    }

    fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    fn kind(&self) -> FunctionalKind {
        FunctionalKind::Observable
    }

    fn evaluate(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Result<f64> {
        self.check_args(x, theta, z)?;
        let f = self.model.solve(x, theta[0])?;
        self.model.mean_concentration(&f, &self.region(z)?)
    }

    fn gradient(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.check_args(x, theta, z)?;
        let r = self.region(z)?;
        Ok(self.model.value_and_gradient(x, theta[0], &r)?.1.to_vec())
    }

    fn gradient_source(&self) -> GradientSource {
        GradientSource::Adjoint
    }
}
