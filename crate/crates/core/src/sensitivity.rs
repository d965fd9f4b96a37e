//! Influence matrices and the distances between them.
//!
//! The influence matrix of a functional `h` at `(x, z)` is the expectation
//! over `Θ` of `∇h ∇hᵀ`, where the gradient runs over `(x, θ)`. It is
//! estimated by Monte Carlo.

use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::functional::ModelFunctional;
use crate::rng::RngSpec;

const SYMMETRY_TOL: f64 = 1e-12;

/// Provenance of an influence matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InfluenceMeta {
    pub functional: String,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub n_samples: usize,
    pub seed: Option<RngSpec>,
    /// `‖M_n − M_{n−k}‖₂ / ‖M_n‖₂` with `k` the last tenth of the samples.
    pub convergence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    entries: DMatrix<f64>,
    labels: Vec<String>,
    meta: InfluenceMeta,
}

impl InfluenceMatrix {
    /// Wrap a symmetric matrix. Fails when the matrix is not square, does
    /// not match `labels`, or is asymmetric beyond round-off.
    pub fn new(entries: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                what: "influence matrix columns",
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        if labels.len() != entries.nrows() {
            return Err(Error::DimensionMismatch {
                what: "influence matrix labels",
                expected: entries.nrows(),
                got: labels.len(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("influence matrix".into()));
        }
        check_symmetric(&entries)?;
        Ok(Self {
            entries,
            labels,
            meta: InfluenceMeta::default(),
        })
    }

    /// Unlabelled matrix from row-major data, labels `c0, c1, ...`.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let entries = DMatrix::from_fn(n, n, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN));
        Self::new(entries, (0..n).map(|i| format!("c{i}")).collect())
    }

    pub fn with_meta(mut self, meta: InfluenceMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn meta(&self) -> &InfluenceMeta {
        &self.meta
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Spectral norm.
    pub fn norm2(&self) -> f64 {
        sym_norm2(&self.entries)
    }

    /// Plain-text form: `#` header lines followed by one row per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.meta;
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(s, "# functional {}", m.functional);
        let _ = writeln!(s, "# x {}", join(&m.x));
        let _ = writeln!(s, "# z {}", join(&m.z));
        let _ = writeln!(s, "# n {}", m.n_samples);
        match m.seed {
            Some(r) => {
                let _ = writeln!(s, "# seed {} {}", r.master_seed, r.stream_id);
            }
            None => {
                let _ = writeln!(s, "# seed none");
            }
        }
        let _ = writeln!(s, "# labels {}", self.labels.join(" "));
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|j| format!("{:.16e}", self.entries[(i, j)]))
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut meta = InfluenceMeta::default();
        let mut labels = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let num = |t: &str| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t}: {e}")));
        for line in text.as_bytes().lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let mut it = h.split_whitespace();
                let key = it.next().unwrap_or("");
                let rest: Vec<&str> = it.collect();
                match key {
                    "functional" => meta.functional = rest.join(" "),
                    "x" => meta.x = rest.iter().map(|t| num(t)).collect::<Result<_>>()?,
                    "z" => meta.z = rest.iter().map(|t| num(t)).collect::<Result<_>>()?,
                    "n" => {
                        meta.n_samples = rest
                            .first()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| Error::Parse("bad sample count".into()))?
                    }
                    "seed" => {
                        meta.seed = match rest.as_slice() {
                            [a, b] => Some(RngSpec::new(
                                a.parse().map_err(|_| Error::Parse("bad seed".into()))?,
                                b.parse().map_err(|_| Error::Parse("bad stream".into()))?,
                            )),
                            _ => None,
                        }
                    }
                    "labels" => labels = rest.iter().map(|s| s.to_string()).collect(),
                    _ => {}
                }
                continue;
            }
            rows.push(line.split_whitespace().map(num).collect::<Result<_>>()?);
        }
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("influence matrix is not square".into()));
        }
        let entries = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Ok(Self::new(entries, labels)?.with_meta(meta))
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax();
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(())
}

fn sym_norm2(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Eigenvalues sorted descending with matching orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Column `i` belongs to `eigenvalues[i]`; its largest-magnitude
    /// component is positive.
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i).iter().copied().collect()
    }
}

pub fn eig_sym(m: &InfluenceMatrix) -> Result<EigenDecomposition> {
    eig_sym_matrix(&m.entries)
}

/// Symmetric eigendecomposition of a raw matrix.
pub fn eig_sym_matrix(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    check_symmetric(m)?;
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (k, &i) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[i]);
        let mut v: DVector<f64> = eig.eigenvectors.column(i).into_owned();
        let lead = v.iter().copied().fold(0.0f64, |a, c| if c.abs() > a.abs() { c } else { a });
        if lead < 0.0 {
            v.neg_mut();
        }
        vecs.set_column(k, &v);
    }
    Ok(EigenDecomposition {
        eigenvalues: vals,
        eigenvectors: vecs,
    })
}

fn check_compatible(a: &InfluenceMatrix, b: &InfluenceMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            what: "influence matrix",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.labels != b.labels {
        return Err(Error::LabelMismatch);
    }
    Ok(())
}

/// `‖M1 − M2‖₂`.
pub fn spectral_distance(m1: &InfluenceMatrix, m2: &InfluenceMatrix) -> Result<f64> {
    check_compatible(m1, m2)?;
    Ok(sym_norm2(&(&m1.entries - &m2.entries)))
}

/// `‖M1/Tr(M1) − M2/Tr(M2)‖₂`.
pub fn normalized_distance(m1: &InfluenceMatrix, m2: &InfluenceMatrix) -> Result<f64> {
    check_compatible(m1, m2)?;
    let (t1, t2) = (m1.trace(), m2.trace());
    if !(t1 > 0.0) {
        return Err(Error::ZeroTrace(m1.meta.functional.clone()));
    }
    if !(t2 > 0.0) {
        return Err(Error::ZeroTrace(m2.meta.functional.clone()));
    }
    Ok(sym_norm2(&(&m1.entries / t1 - &m2.entries / t2)))
}

/// Draw the θ samples used for an influence-matrix estimate.
///
/// A deterministic distribution yields a single sample, since every draw
/// would give the same gradient.
pub fn pin_samples(theta: &Distribution, n: usize, rng: RngSpec) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    if theta.is_deterministic() {
        return theta.sample(1, rng);
    }
    theta.sample(n, rng)
}

/// Monte-Carlo influence matrix of `f` at `(x, z)` with `n` draws of `theta`.
pub fn influence_matrix(
    f: &dyn ModelFunctional,
    x: &[f64],
    z: &[f64],
    theta: &Distribution,
    n: usize,
    rng: RngSpec,
) -> Result<InfluenceMatrix> {
    let samples = pin_samples(theta, n, rng)?;
    let mut m = influence_matrix_with_samples(f, x, z, &samples)?;
    m.meta.seed = Some(rng);
    Ok(m)
}

/// Influence matrix over a fixed set of θ samples (common random numbers).
///
/// Gradients are evaluated in parallel; the accumulation runs in sample
/// order so the result does not depend on the thread count.
pub fn influence_matrix_with_samples(
    f: &dyn ModelFunctional,
    x: &[f64],
    z: &[f64],
    samples: &[Vec<f64>],
) -> Result<InfluenceMatrix> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    f.check_args(x, &samples[0], z)?;
    let grads: Vec<Vec<f64>> = samples
        .par_iter()
        .enumerate()
        .map(|(index, th)| {
            let g = f.gradient(x, th, z).map_err(|e| Error::Gradient {
                index,
                source: Box::new(e),
            })?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Gradient {
                    index,
                    source: Box::new(Error::NonFinite(format!("gradient of {}", f.id()))),
                });
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    let d = x.len() + samples[0].len();
    let n = grads.len();
    let tail = n - n / 10;
    let mut sum = DMatrix::<f64>::zeros(d, d);
    let mut head_sum = None;
    for (k, g) in grads.iter().enumerate() {
        if k == tail && k > 0 {
            head_sum = Some(sum.clone());
        }
        if g.len() != d {
            return Err(Error::DimensionMismatch {
                what: "gradient",
                expected: d,
                got: g.len(),
            });
        }
        for i in 0..d {
            for j in 0..=i {
                let v = g[i] * g[j];
                sum[(i, j)] += v;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            sum[(j, i)] = sum[(i, j)];
        }
    }
    let mean = &sum / n as f64;
    let convergence = head_sum.map(|h| {
        let mut h = h;
        for i in 0..d {
            for j in 0..i {
                h[(j, i)] = h[(i, j)];
            }
        }
        let prev = h / tail as f64;
        let scale = sym_norm2(&mean);
        if scale > 0.0 {
            sym_norm2(&(&mean - prev)) / scale
        } else {
            0.0
        }
    });
    let m = InfluenceMatrix::new(mean, f.layout().gradient_labels())?;
    Ok(m.with_meta(InfluenceMeta {
        functional: f.id().to_string(),
        x: x.to_vec(),
        z: z.to_vec(),
        n_samples: n,
        seed: None,
        convergence,
    }))
}
