//! Nodal velocity fields: the analytic channel profile and loaded fields.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::transport::grid::Grid;

/// Nodal velocity `(v₁, v₂)` in grid node order.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    v: Vec<[f64; 2]>,
    loaded: bool,
}

impl VelocityField {
    /// Plane Poiseuille flow `v₁ = v_max·(2/H)²·(H − y)·y`, `v₂ = 0`.
    pub fn poiseuille(grid: &Grid, v_max: f64) -> Self {
        let h = grid.height();
        let v = (0..grid.n_nodes())
            .map(|n| {
                let (_, y) = grid.node_xy(n);
                [v_max * (2.0 / h).powi(2) * (h - y) * y, 0.0]
            })
            .collect();
        Self { v, loaded: false }
    }

    pub fn zero(grid: &Grid) -> Self {
        Self {
            v: vec![[0.0; 2]; grid.n_nodes()],
            loaded: false,
        }
    }

    /// Build from nodal values; nodes touching solid cells are zeroed.
    pub fn from_nodes(grid: &Grid, v: Vec<[f64; 2]>) -> Result<Self> {
        if v.len() != grid.n_nodes() {
            return Err(Error::Velocity(format!(
                "expected {} nodal values, got {}",
                grid.n_nodes(),
                v.len()
            )));
        }
        if v.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Velocity("non-finite velocity value".into()));
        }
        let mut v = v;
        for i in 0..=grid.nx() {
            for j in 0..=grid.ny() {
                if grid.node_touches_solid(i, j) {
                    v[grid.node(i, j)] = [0.0; 2];
                }
            }
        }
        Ok(Self { v, loaded: true })
    }

    /// Parse the text format: a header line `nx ny W H`, then one `v1 v2`
    /// line per node with `j` outermost and `i` innermost.
    pub fn parse(grid: &Grid, text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Velocity("missing header".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 {
            return Err(Error::Velocity(format!("bad header `{header}`")));
        }
        let bad = |s: &str| Error::Velocity(format!("cannot parse `{s}`"));
        let nx: usize = h[0].parse().map_err(|_| bad(h[0]))?;
        let ny: usize = h[1].parse().map_err(|_| bad(h[1]))?;
        let w: f64 = h[2].parse().map_err(|_| bad(h[2]))?;
        let hh: f64 = h[3].parse().map_err(|_| bad(h[3]))?;
        if nx != grid.nx()
            || ny != grid.ny()
            || (w - grid.width()).abs() > 1e-12 * w.abs().max(1.0)
            || (hh - grid.height()).abs() > 1e-12 * hh.abs().max(1.0)
        {
            return Err(Error::Velocity(format!(
                "file is for a {nx}x{ny} grid on {w} x {hh}, the model grid is {}x{} on {} x {}",
                grid.nx(),
                grid.ny(),
                grid.width(),
                grid.height()
            )));
        }
        let mut v = vec![[0.0; 2]; grid.n_nodes()];
        let mut count = 0;
        for (k, line) in lines.enumerate() {
            if k >= grid.n_nodes() {
                return Err(Error::Velocity("too many velocity rows".into()));
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(Error::Velocity(format!("bad row `{line}`")));
            }
            let (i, j) = (k % (nx + 1), k / (nx + 1));
            v[grid.node(i, j)] = [
                parts[0].parse().map_err(|_| bad(parts[0]))?,
                parts[1].parse().map_err(|_| bad(parts[1]))?,
            ];
            count += 1;
        }
        if count != grid.n_nodes() {
            return Err(Error::Velocity(format!(
                "expected {} velocity rows, got {count}",
                grid.n_nodes()
            )));
        }
        Self::from_nodes(grid, v)
    }

    pub fn load<P: AsRef<Path>>(grid: &Grid, path: P) -> Result<Self> {
        Self::parse(grid, &std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self, grid: &Grid) -> String {
        let mut s = format!(
            "{} {} {} {}\n",
            grid.nx(),
            grid.ny(),
            grid.width(),
            grid.height()
        );
        for j in 0..=grid.ny() {
            for i in 0..=grid.nx() {
                let [a, b] = self.v[grid.node(i, j)];
                let _ = writeln!(s, "{a:.16e} {b:.16e}");
            }
        }
        s
    }

    pub fn is_loaded(&self) -> bool {
        self.loaded
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn node(&self, n: usize) -> [f64; 2] {
        self.v[n]
    }

    /// Bilinear interpolation at a point inside cell `(ci, cj)`.
    pub fn at(&self, grid: &Grid, ci: usize, cj: usize, x: f64, y: f64) -> [f64; 2] {
        let xi = x / grid.dx() - ci as f64;
        let eta = y / grid.dy() - cj as f64;
        let c = [
            ((1.0 - xi) * (1.0 - eta), grid.node(ci, cj)),
            (xi * (1.0 - eta), grid.node(ci + 1, cj)),
            ((1.0 - xi) * eta, grid.node(ci, cj + 1)),
            (xi * eta, grid.node(ci + 1, cj + 1)),
        ];
        let mut out = [0.0; 2];
        for (w, n) in c {
            out[0] += w * self.v[n][0];
            out[1] += w * self.v[n][1];
        }
        out
    }

    pub(crate) fn hash_into<H: std::hash::Hasher>(&self, h: &mut H) {
        use std::hash::Hash;
        for [a, b] in &self.v {
            (a.to_bits(), b.to_bits()).hash(h);
        }
    }
}
