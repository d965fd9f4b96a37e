//! Parameter blocks and rectangular constraint sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names of the control, model and sensor coordinates of a model family.
///
/// The influence-matrix coordinate order is always the control block
/// followed by the model block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub control: Vec<String>,
    pub model: Vec<String>,
    pub sensor: Vec<String>,
}

impl ParameterLayout {
    pub fn new(control: &[&str], model: &[&str], sensor: &[&str]) -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            control: own(control),
            model: own(model),
            sensor: own(sensor),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.control.len(), self.model.len(), self.sensor.len())
    }

    /// Labels of the `(x, θ)` coordinates in influence-matrix order.
    pub fn gradient_labels(&self) -> Vec<String> {
        self.control.iter().chain(&self.model).cloned().collect()
    }
}

/// Control, model and sensor values of one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    control: Vec<f64>,
    model: Vec<f64>,
    sensor: Vec<f64>,
}

impl ParameterVector {
    pub fn new(control: Vec<f64>, model: Vec<f64>, sensor: Vec<f64>) -> Result<Self> {
        for (name, block) in [("control", &control), ("model", &model), ("sensor", &sensor)] {
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{name} parameters")));
            }
        }
        Ok(Self {
            control,
            model,
            sensor,
        })
    }

    /// Build a vector whose block sizes must match `layout`.
    pub fn for_layout(
        layout: &ParameterLayout,
        control: Vec<f64>,
        model: Vec<f64>,
        sensor: Vec<f64>,
    ) -> Result<Self> {
        let (dx, dt, dz) = layout.dims();
        check_len("control parameters", dx, control.len())?;
        check_len("model parameters", dt, model.len())?;
        check_len("sensor parameters", dz, sensor.len())?;
        Self::new(control, model, sensor)
    }

    pub fn control(&self) -> &[f64] {
        &self.control
    }

    pub fn model(&self) -> &[f64] {
        &self.model
    }

    pub fn sensor(&self) -> &[f64] {
        &self.sensor
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Closed axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidBounds(format!(
                "lower has {} entries, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(Error::InvalidBounds("zero-dimensional box".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidBounds(format!("coordinate {i} is not finite")));
            }
            if lo > hi {
                return Err(Error::InvalidBounds(format!(
                    "coordinate {i}: lower {lo} exceeds upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Convenience constructor from `(lo, hi)` pairs.
    pub fn from_intervals(intervals: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            intervals.iter().map(|p| p.0).collect(),
            intervals.iter().map(|p| p.1).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(p, (lo, hi))| *lo <= *p && *p <= *hi)
    }

    pub fn clamp(&self, point: &mut [f64]) {
        for (p, (lo, hi)) in point.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *p = p.clamp(*lo, *hi);
        }
    }

    /// Map a point of the unit cube onto the box.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .enumerate()
            .map(|(i, u)| {
                if self.width(i) == 0.0 {
                    self.lower[i]
                } else {
                    (self.lower[i] + u * self.width(i)).clamp(self.lower[i], self.upper[i])
                }
            })
            .collect()
    }

    pub fn to_unit(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let w = self.width(i);
                if w == 0.0 {
                    0.0
                } else {
                    (p - self.lower[i]) / w
                }
            })
            .collect()
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &Bounds) -> Bounds {
        Bounds {
            lower: self.lower.iter().chain(&other.lower).copied().collect(),
            upper: self.upper.iter().chain(&other.upper).copied().collect(),
        }
    }
}

impl<'de> Deserialize<'de> for Bounds {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lower: Vec<f64>,
            upper: Vec<f64>,
        }
        let raw = Raw::deserialize(d)?;
        Bounds::new(raw.lower, raw.upper).map_err(serde::de::Error::custom)
    }
}
