//! Rectangular channel grid with optional solid docks, and averaging regions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0 < x1 && y0 < y1) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rectangle [{x0}, {x1}] x [{y0}, {y1}] is empty or non-finite"
            )));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    /// Square of side `side` centred on `(cx, cy)`.
    pub fn square(cx: f64, cy: f64, side: f64) -> Result<Self> {
        Self::new(cx - side / 2.0, cx + side / 2.0, cy - side / 2.0, cy + side / 2.0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// The two docks of the harbour geometry.
pub fn default_docks() -> Vec<Rect> {
    vec![
        Rect {
            x0: 1.4,
            x1: 1.6,
            y0: 0.0,
            y1: 0.4,
        },
        Rect {
            x0: 2.6,
            x1: 2.8,
            y0: 0.0,
            y1: 0.8,
        },
    ]
}

/// `nx × ny` cells on `[0, W] × [0, H]`. Nodes `(i, j)`, `0 ≤ i ≤ nx`,
/// `0 ≤ j ≤ ny`, are numbered `i·(ny+1) + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
    solid: Vec<bool>,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, width: f64, height: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 4x4 cells, got {nx}x{ny}"
            )));
        }
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "channel size {width} x {height} must be positive"
            )));
        }
        Ok(Self {
            nx,
            ny,
            width,
            height,
            solid: vec![false; nx * ny],
        })
    }

    /// Mark every cell whose centre lies in one of `docks` as solid.
    pub fn with_docks(mut self, docks: &[Rect]) -> Result<Self> {
        for ci in 0..self.nx {
            for cj in 0..self.ny {
                let (cx, cy) = (
                    (ci as f64 + 0.5) * self.dx(),
                    (cj as f64 + 0.5) * self.dy(),
                );
                if docks.iter().any(|d| d.contains(cx, cy)) {
                    self.solid[ci * self.ny + cj] = true;
                }
            }
        }
        if (0..self.ny).any(|cj| self.solid[cj]) {
            return Err(Error::InvalidArgument(
                "docks may not touch the inflow boundary".into(),
            ));
        }
        Ok(self)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn dx(&self) -> f64 {
        self.width / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.height / self.ny as f64
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i * (self.ny + 1) + j
    }

    pub fn node_xy(&self, n: usize) -> (f64, f64) {
        let (i, j) = (n / (self.ny + 1), n % (self.ny + 1));
        (i as f64 * self.dx(), j as f64 * self.dy())
    }

    pub fn has_solid(&self) -> bool {
        self.solid.iter().any(|&s| s)
    }

    pub fn is_solid(&self, ci: usize, cj: usize) -> bool {
        self.solid[ci * self.ny + cj]
    }

    /// A node is active when at least one adjacent cell is fluid.
    pub fn node_active(&self, i: usize, j: usize) -> bool {
        self.adjacent_cells(i, j).any(|(ci, cj)| !self.is_solid(ci, cj))
    }

    /// Whether a node touches a solid cell.
    pub fn node_touches_solid(&self, i: usize, j: usize) -> bool {
        self.adjacent_cells(i, j).any(|(ci, cj)| self.is_solid(ci, cj))
    }

    fn adjacent_cells(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cis = [i.checked_sub(1), (i < self.nx).then_some(i)];
        let cjs = [j.checked_sub(1), (j < self.ny).then_some(j)];
        cis.into_iter()
            .flatten()
            .flat_map(move |ci| cjs.into_iter().flatten().map(move |cj| (ci, cj)))
    }

    /// Weights `w` such that `wᵀφ` is the mean of the bilinear interpolant
    /// of nodal values `φ` over the fluid part of `region`.
    pub fn region_weights(&self, region: &Rect) -> Result<Vec<f64>> {
        let (dx, dy) = (self.dx(), self.dy());
        let mut w = vec![0.0; self.n_nodes()];
        let mut area = 0.0;
        for ci in 0..self.nx {
            let (xa, xb) = (ci as f64 * dx, (ci + 1) as f64 * dx);
            let (s0, s1) = (region.x0.max(xa), region.x1.min(xb));
            if s1 <= s0 {
                continue;
            }
            let (s0, s1) = ((s0 - xa) / dx, (s1 - xa) / dx);
            for cj in 0..self.ny {
                if self.is_solid(ci, cj) {
                    continue;
                }
                let (ya, yb) = (cj as f64 * dy, (cj + 1) as f64 * dy);
                let (t0, t1) = (region.y0.max(ya), region.y1.min(yb));
                if t1 <= t0 {
                    continue;
                }
                let (t0, t1) = ((t0 - ya) / dy, (t1 - ya) / dy);
                // ∫ξ and ∫(1−ξ) over the overlap, in cell units
                let ix1 = (s1 * s1 - s0 * s0) / 2.0;
                let ix0 = (s1 - s0) - ix1;
                let iy1 = (t1 * t1 - t0 * t0) / 2.0;
                let iy0 = (t1 - t0) - iy1;
                let a = dx * dy;
                w[self.node(ci, cj)] += a * ix0 * iy0;
                w[self.node(ci + 1, cj)] += a * ix1 * iy0;
                w[self.node(ci, cj + 1)] += a * ix0 * iy1;
                w[self.node(ci + 1, cj + 1)] += a * ix1 * iy1;
                area += a * (s1 - s0) * (t1 - t0);
            }
        }
        if !(area > 0.0) {
            return Err(Error::SolidRegion);
        }
        w.iter_mut().for_each(|v| *v /= area);
        Ok(w)
    }

    pub(crate) fn hash_into<H: std::hash::Hasher>(&self, h: &mut H) {
        use std::hash::Hash;
        (self.nx, self.ny, self.width.to_bits(), self.height.to_bits()).hash(h);
        self.solid.hash(h);
    }
}
