//! Empirical cumulative distribution functions.

use crate::error::{Error, Result};

/// Right-continuous step CDF `F(s) = #{samples <= s} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("CDF samples".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s.is_nan() {
            return f64::NAN;
        }
        let k = self.sorted.partition_point(|v| *v <= s);
        k as f64 / self.sorted.len() as f64
    }

    /// Sorted samples, i.e. the jump locations with multiplicity.
    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Sample quantile by the inverse-CDF rule `inf { s : F(s) >= p }`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((p.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }
}
