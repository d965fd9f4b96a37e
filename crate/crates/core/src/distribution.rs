//! Parameter distributions.
//!
//! A [`Distribution`] is an immutable value object. All parameter checks
//! happen at construction; sampling never fails.

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub struct Distribution {
    kind: Kind,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Dirac(Vec<f64>),
    /// Sorted scalar samples.
    Empirical(Vec<f64>),
    /// Joint samples, one row per draw (e.g. a posterior chain).
    JointEmpirical(Vec<Vec<f64>>),
    Product(Vec<Distribution>),
}

/// Serialized form of a [`Distribution`], used in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Dirac { point: Vec<f64> },
    Empirical { samples: Vec<f64> },
    JointEmpirical { rows: Vec<Vec<f64>> },
    Product { components: Vec<DistributionSpec> },
}

impl TryFrom<DistributionSpec> for Distribution {
    type Error = Error;

    fn try_from(spec: DistributionSpec) -> Result<Self> {
        match spec {
            DistributionSpec::Normal { mean, std } => Distribution::normal(mean, std),
            DistributionSpec::Uniform { lo, hi } => Distribution::uniform(lo, hi),
            DistributionSpec::Dirac { point } => Distribution::dirac(point),
            DistributionSpec::Empirical { samples } => Distribution::empirical(samples),
            DistributionSpec::JointEmpirical { rows } => Distribution::joint_empirical(rows),
            DistributionSpec::Product { components } => Distribution::product(
                components
                    .into_iter()
                    .map(Distribution::try_from)
                    .collect::<Result<Vec<_>>>()?,
            ),
        }
    }
}

impl From<Distribution> for DistributionSpec {
    fn from(d: Distribution) -> Self {
        match d.kind {
            Kind::Normal { mean, std } => DistributionSpec::Normal { mean, std },
            Kind::Uniform { lo, hi } => DistributionSpec::Uniform { lo, hi },
            Kind::Dirac(point) => DistributionSpec::Dirac { point },
            Kind::Empirical(samples) => DistributionSpec::Empirical { samples },
            Kind::JointEmpirical(rows) => DistributionSpec::JointEmpirical { rows },
            Kind::Product(c) => DistributionSpec::Product {
                components: c.into_iter().map(Into::into).collect(),
            },
        }
    }
}

fn finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!("{what} is not finite")))
    }
}

impl Distribution {
    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        finite("normal mean", mean)?;
        finite("normal stddev", std)?;
        if std <= 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "normal stddev must be positive, got {std}"
            )));
        }
        Ok(Self {
            kind: Kind::Normal { mean, std },
        })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        finite("uniform bound", lo)?;
        finite("uniform bound", hi)?;
        if lo >= hi {
            return Err(Error::InvalidDistribution(format!(
                "uniform requires lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            kind: Kind::Uniform { lo, hi },
        })
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        if point.is_empty() {
            return Err(Error::InvalidDistribution("dirac point is empty".into()));
        }
        for &v in &point {
            finite("dirac point", v)?;
        }
        Ok(Self {
            kind: Kind::Dirac(point),
        })
    }

    pub fn dirac_scalar(point: f64) -> Result<Self> {
        Self::dirac(vec![point])
    }

    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidDistribution("empirical sample list is empty".into()));
        }
        for &v in &samples {
            finite("empirical sample", v)?;
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self {
            kind: Kind::Empirical(samples),
        })
    }

    pub fn joint_empirical(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidDistribution("empirical sample list is empty".into()));
        };
        let d = first.len();
        if d == 0 {
            return Err(Error::InvalidDistribution("empirical rows are empty".into()));
        }
        for r in &rows {
            if r.len() != d {
                return Err(Error::InvalidDistribution("empirical rows differ in length".into()));
            }
            for &v in r {
                finite("empirical sample", v)?;
            }
        }
        Ok(Self {
            kind: Kind::JointEmpirical(rows),
        })
    }

    pub fn product(components: Vec<Distribution>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDistribution("product of zero components".into()));
        }
        Ok(Self {
            kind: Kind::Product(components),
        })
    }

    /// Dimension of one draw.
    pub fn dim(&self) -> usize {
        match &self.kind {
            Kind::Normal { .. } | Kind::Uniform { .. } | Kind::Empirical(_) => 1,
            Kind::Dirac(p) => p.len(),
            Kind::JointEmpirical(rows) => rows[0].len(),
            Kind::Product(c) => c.iter().map(Distribution::dim).sum(),
        }
    }

    /// True when every draw is the same point.
    pub fn is_deterministic(&self) -> bool {
        match &self.kind {
            Kind::Dirac(_) => true,
            Kind::Empirical(s) => s.first() == s.last(),
            Kind::JointEmpirical(rows) => rows.iter().all(|r| r == &rows[0]),
            Kind::Product(c) => c.iter().all(Distribution::is_deterministic),
            _ => false,
        }
    }

    /// Componentwise mean.
    pub fn mean(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Normal { mean, .. } => vec![*mean],
            Kind::Uniform { lo, hi } => vec![0.5 * (lo + hi)],
            Kind::Dirac(p) => p.clone(),
            Kind::Empirical(s) => vec![s.iter().sum::<f64>() / s.len() as f64],
            Kind::JointEmpirical(rows) => {
                let mut m = vec![0.0; rows[0].len()];
                for r in rows {
                    for (a, b) in m.iter_mut().zip(r) {
                        *a += b;
                    }
                }
                m.iter().map(|v| v / rows.len() as f64).collect()
            }
            Kind::Product(c) => c.iter().flat_map(Distribution::mean).collect(),
        }
    }

    fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match &self.kind {
            Kind::Normal { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                out.push(mean + std * z);
            }
            Kind::Uniform { lo, hi } => out.push(rng.random_range(*lo..*hi)),
            Kind::Dirac(p) => out.extend_from_slice(p),
            Kind::Empirical(s) => out.push(s[rng.random_range(0..s.len())]),
            Kind::JointEmpirical(rows) => {
                out.extend_from_slice(&rows[rng.random_range(0..rows.len())])
            }
            Kind::Product(c) => {
                for d in c {
                    d.draw_into(rng, out);
                }
            }
        }
    }

    /// One draw from a caller-owned generator.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        self.draw_into(rng, &mut out);
        out
    }

    /// `n` independent draws from the stream `rng`.
    pub fn sample(&self, n: usize, rng: RngSpec) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        let mut g = rng.rng();
        Ok((0..n).map(|_| self.draw(&mut g)).collect())
    }

    /// Log density at `point`. Dirac components contribute 0 at their atom
    /// and `-inf` elsewhere; empirical distributions have no density.
    pub fn log_density(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "distribution point",
                expected: self.dim(),
                got: point.len(),
            });
        }
        Ok(match &self.kind {
            Kind::Normal { mean, std } => {
                let r = (point[0] - mean) / std;
                -0.5 * r * r - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Kind::Uniform { lo, hi } => {
                if *lo <= point[0] && point[0] <= *hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Kind::Dirac(p) => {
                if p.as_slice() == point {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Kind::Empirical(_) | Kind::JointEmpirical(_) => {
                return Err(Error::NoDensity("empirical"))
            }
            Kind::Product(c) => {
                let mut total = 0.0;
                let mut offset = 0;
                for d in c {
                    let k = d.dim();
                    total += d.log_density(&point[offset..offset + k])?;
                    offset += k;
                }
                total
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_validate() {
        assert!(Distribution::normal(0.0, 0.0).is_err());
        assert!(Distribution::normal(0.0, -1.0).is_err());
        assert!(Distribution::uniform(1.0, 1.0).is_err());
        assert!(Distribution::empirical(vec![]).is_err());
        assert!(Distribution::empirical(vec![f64::NAN]).is_err());
        assert!(Distribution::dirac(vec![]).is_err());
        assert!(Distribution::joint_empirical(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Distribution::product(vec![]).is_err());
    }

    #[test]
    fn dirac_returns_point() {
        let p = -2.0 * 10f64.ln();
        let d = Distribution::dirac_scalar(p).unwrap();
        let s = d.sample(3, RngSpec::seeded(1)).unwrap();
        assert_eq!(s, vec![vec![p]; 3]);
        assert!((p + 4.605_170_185_988_091).abs() < 1e-15);
        assert!(d.is_deterministic());
    }

    #[test]
    fn zero_samples_rejected() {
        let d = Distribution::normal(0.0, 1.0).unwrap();
        assert!(d.sample(0, RngSpec::seeded(1)).is_err());
    }

    #[test]
    fn normal_mean_within_clt_bound() {
        let n = 100_000;
        let d = Distribution::normal(9.81, 0.01).unwrap();
        let s = d.sample(n, RngSpec::seeded(42)).unwrap();
        let mean = s.iter().map(|v| v[0]).sum::<f64>() / n as f64;
        assert!((mean - 9.81).abs() < 4.0 * 0.01 / (n as f64).sqrt());
    }

    #[test]
    fn product_concatenates() {
        let d = Distribution::product(vec![
            Distribution::normal(0.0, 1.0).unwrap(),
            Distribution::dirac(vec![3.0, 4.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(d.dim(), 3);
        let s = d.sample(5, RngSpec::seeded(3)).unwrap();
        assert!(s.iter().all(|r| r.len() == 3 && r[1] == 3.0 && r[2] == 4.0));
        assert!(!d.is_deterministic());
        let ld = d.log_density(&[0.0, 3.0, 4.0]).unwrap();
        assert!((ld + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        assert_eq!(d.log_density(&[0.0, 3.0, 4.5]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn empirical_has_no_density_and_resamples_its_atoms() {
        let d = Distribution::empirical(vec![3.0, 1.0, 2.0]).unwrap();
        assert!(matches!(d.log_density(&[1.0]), Err(Error::NoDensity(_))));
        let s = d.sample(100, RngSpec::seeded(9)).unwrap();
        assert!(s.iter().all(|v| [1.0, 2.0, 3.0].contains(&v[0])));
    }

    #[test]
    fn spec_round_trip() {
        let text = r#"{"type":"product","components":[
            {"type":"normal","mean":9.81,"std":0.01},
            {"type":"uniform","lo":0.0,"hi":1.0}]}"#;
        let d: Distribution = serde_json::from_str(text).unwrap();
        assert_eq!(d.dim(), 2);
        let back = serde_json::to_string(&d).unwrap();
        let again: Distribution = serde_json::from_str(&back).unwrap();
        assert_eq!(d, again);
        let bad = r#"{"type":"normal","mean":0.0,"std":-1.0}"#;
        assert!(serde_json::from_str::<Distribution>(bad).is_err());
    }
}
