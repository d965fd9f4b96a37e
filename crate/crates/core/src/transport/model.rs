//! Steady advection-diffusion on the channel, its adjoint, and gradients.
//!
//! Vertex-centred finite volumes: each node owns the dual cell made of the
//! fluid quarter-cells around it. Diffusion uses two-point fluxes and
//! advection first-order upwinding with the velocity interpolated to face
//! midpoints. The west edge carries the Dirichlet inflow profile; every
//! other edge, and every dock wall, is a zero-diffusive-flux boundary with
//! outflow where the velocity leaves the domain.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_csv};
use crate::transport::band::{BandLu, BandMatrix};
use crate::transport::grid::{Grid, Rect};
use crate::transport::mollifier::{inflow_gradients, inflow_values, InflowSampling};
use crate::transport::velocity::VelocityField;

type Rows = Vec<Vec<(usize, f64)>>;

fn add(rows: &mut Rows, r: usize, c: usize, v: f64) {
    if v == 0.0 {
        return;
    }
    match rows[r].iter_mut().find(|(cc, _)| *cc == c) {
        Some(e) => e.1 += v,
        None => rows[r].push((c, v)),
    }
}

/// Unit-diffusivity and advection parts of the operator, `A = eᵏ·A_diff + A_adv`.
struct Assembly {
    diff: Rows,
    adv: Rows,
    net_outflow: Vec<f64>,
}

fn assemble(grid: &Grid, vel: &VelocityField) -> Assembly {
    let n = grid.n_nodes();
    let (dx, dy) = (grid.dx(), grid.dy());
    let mut a = Assembly {
        diff: vec![Vec::new(); n],
        adv: vec![Vec::new(); n],
        net_outflow: vec![0.0; n],
    };
    // interior half-face between p and q; `f` is the flux from p to q
    let pair = |a: &mut Assembly, p: usize, q: usize, d: f64, f: f64| {
        add(&mut a.diff, p, p, d);
        add(&mut a.diff, p, q, -d);
        add(&mut a.diff, q, q, d);
        add(&mut a.diff, q, p, -d);
        add(&mut a.adv, p, p, f.max(0.0));
        add(&mut a.adv, p, q, f.min(0.0));
        add(&mut a.adv, q, q, (-f).max(0.0));
        add(&mut a.adv, q, p, (-f).min(0.0));
        a.net_outflow[p] += f;
        a.net_outflow[q] -= f;
    };
    let boundary = |a: &mut Assembly, p: usize, f: f64| {
        add(&mut a.adv, p, p, f.max(0.0));
        a.net_outflow[p] += f;
    };
    for ci in 0..grid.nx() {
        for cj in 0..grid.ny() {
            if grid.is_solid(ci, cj) {
                continue;
            }
            let (x0, y0) = (ci as f64 * dx, cj as f64 * dy);
            let sw = grid.node(ci, cj);
            let se = grid.node(ci + 1, cj);
            let nw = grid.node(ci, cj + 1);
            let ne = grid.node(ci + 1, cj + 1);
            let at = |x: f64, y: f64| vel.at(grid, ci, cj, x, y);
            let (dv, dh) = ((dy / 2.0) / dx, (dx / 2.0) / dy);
            pair(&mut a, sw, se, dv, at(x0 + dx / 2.0, y0 + dy / 4.0)[0] * dy / 2.0);
            pair(&mut a, nw, ne, dv, at(x0 + dx / 2.0, y0 + 3.0 * dy / 4.0)[0] * dy / 2.0);
            pair(&mut a, sw, nw, dh, at(x0 + dx / 4.0, y0 + dy / 2.0)[1] * dx / 2.0);
            pair(&mut a, se, ne, dh, at(x0 + 3.0 * dx / 4.0, y0 + dy / 2.0)[1] * dx / 2.0);
            if ci == 0 {
                boundary(&mut a, sw, -at(x0, y0 + dy / 4.0)[0] * dy / 2.0);
                boundary(&mut a, nw, -at(x0, y0 + 3.0 * dy / 4.0)[0] * dy / 2.0);
            }
            if ci + 1 == grid.nx() {
                let x1 = x0 + dx;
                boundary(&mut a, se, at(x1, y0 + dy / 4.0)[0] * dy / 2.0);
                boundary(&mut a, ne, at(x1, y0 + 3.0 * dy / 4.0)[0] * dy / 2.0);
            }
            if cj == 0 {
                boundary(&mut a, sw, -at(x0 + dx / 4.0, y0)[1] * dx / 2.0);
                boundary(&mut a, se, -at(x0 + 3.0 * dx / 4.0, y0)[1] * dx / 2.0);
            }
            if cj + 1 == grid.ny() {
                let y1 = y0 + dy;
                boundary(&mut a, nw, at(x0 + dx / 4.0, y1)[1] * dx / 2.0);
                boundary(&mut a, ne, at(x0 + 3.0 * dx / 4.0, y1)[1] * dx / 2.0);
            }
        }
    }
    a
}

/// Net outflow of each dual cell, including boundary faces. Zero for a
/// discretely divergence-free field.
pub fn discrete_divergence(grid: &Grid, vel: &VelocityField) -> Vec<f64> {
    assemble(grid, vel).net_outflow
}

/// Concentration at every node, tagged with the operator it solves.
#[derive(Debug, Clone)]
pub struct ConcentrationField {
    pub phi: Vec<f64>,
    pub k: f64,
    /// Control `(z₀, L, c)` of the inflow profile, if it came from one.
    pub control: Option<[f64; 3]>,
    fingerprint: u64,
}

impl ConcentrationField {
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

/// Adjoint state for one averaging region; zero on Dirichlet nodes.
#[derive(Debug, Clone)]
pub struct AdjointField {
    pub lambda: Vec<f64>,
    pub weights: Vec<f64>,
    pub k: f64,
    fingerprint: u64,
}

impl AdjointField {
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

/// Operator for one grid and velocity field. Factorizations are cached per
/// diffusivity and shared between threads.
pub struct TransportModel {
    grid: Grid,
    velocity: VelocityField,
    diff: Rows,
    adv: Rows,
    sampling: InflowSampling,
    base_hash: u64,
    cache: Mutex<Vec<(u64, Arc<BandLu>)>>,
}

impl std::fmt::Debug for TransportModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransportModel")
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

const CACHE_SIZE: usize = 8;

impl TransportModel {
    pub fn new(grid: Grid, velocity: VelocityField) -> Result<Self> {
        if velocity.len() != grid.n_nodes() {
            return Err(Error::Velocity(format!(
                "field has {} nodes, grid has {}",
                velocity.len(),
                grid.n_nodes()
            )));
        }
        if grid.has_solid() && !velocity.is_loaded() {
            return Err(Error::Velocity(
                "docks need a loaded velocity field; the analytic profile ignores them".into(),
            ));
        }
        let a = assemble(&grid, &velocity);
        let mut h = DefaultHasher::new();
        grid.hash_into(&mut h);
        velocity.hash_into(&mut h);
        Ok(Self {
            base_hash: h.finish(),
            grid,
            velocity,
            diff: a.diff,
            adv: a.adv,
            sampling: InflowSampling::default(),
            cache: Mutex::new(Vec::new()),
        })
    }

    pub fn with_inflow_sampling(mut self, sampling: InflowSampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn inflow_sampling(&self) -> InflowSampling {
        self.sampling
    }

    /// 64 × 32 cells on the 5 × 2 channel with unit-peak Poiseuille flow.
    pub fn default_channel() -> Result<Self> {
        let grid = Grid::new(64, 32, 5.0, 2.0)?;
        let v = VelocityField::poiseuille(&grid, 1.0);
        Self::new(grid, v)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn velocity(&self) -> &VelocityField {
        &self.velocity
    }

    pub fn fingerprint(&self, k: f64) -> u64 {
        let mut h = DefaultHasher::new();
        (self.base_hash, k.to_bits()).hash(&mut h);
        h.finish()
    }

    fn offset(&self) -> usize {
        self.grid.ny() + 1
    }

    fn active(&self, n: usize) -> bool {
        let ny1 = self.offset();
        self.grid.node_active(n / ny1, n % ny1)
    }

    fn check_k(k: f64) -> Result<()> {
        if !k.is_finite() {
            return Err(Error::NonFinite("log-diffusivity".into()));
        }
        Ok(())
    }

    fn factor(&self, k: f64) -> Result<Arc<BandLu>> {
        let key = k.to_bits();
        {
            let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
            if let Some((_, lu)) = cache.iter().find(|(kk, _)| *kk == key) {
                return Ok(lu.clone());
            }
        }
        let off = self.offset();
        let nu = self.grid.n_nodes() - off;
        let ek = k.exp();
        let mut m = BandMatrix::zeros(nu, off);
        for r in 0..nu {
            let n = r + off;
            if !self.active(n) {
                m.add(r, r, 1.0);
                continue;
            }
            for &(c, v) in &self.diff[n] {
                if c >= off {
                    m.add(r, c - off, ek * v);
                }
            }
            for &(c, v) in &self.adv[n] {
                if c >= off {
                    m.add(r, c - off, v);
                }
            }
        }
        let lu = Arc::new(m.factor()?);
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if !cache.iter().any(|(kk, _)| *kk == key) {
            if cache.len() == CACHE_SIZE {
                cache.remove(0);
            }
            cache.push((key, lu.clone()));
        }
        Ok(lu)
    }

    /// Inflow profile at the west nodes.
    pub fn dirichlet_profile(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::param::check_len("transport control", 3, x.len())?;
        if !(x[1] > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mollifier half-width must be positive, got {}",
                x[1]
            )));
        }
        Ok(inflow_values(x, self.grid.ny(), self.grid.dy(), self.sampling))
    }

    /// Solve with the inflow profile of control `x = (z₀, L, c)`.
    pub fn solve(&self, x: &[f64], k: f64) -> Result<ConcentrationField> {
        let d = self.dirichlet_profile(x)?;
        let mut f = self.solve_dirichlet(k, &d)?;
        f.control = Some([x[0], x[1], x[2]]);
        Ok(f)
    }

    /// Solve with arbitrary west-edge values (one per node, south to north).
    pub fn solve_dirichlet(&self, k: f64, phi_d: &[f64]) -> Result<ConcentrationField> {
        Self::check_k(k)?;
        let off = self.offset();
        crate::param::check_len("Dirichlet values", off, phi_d.len())?;
        let lu = self.factor(k)?;
        let ek = k.exp();
        let nu = self.grid.n_nodes() - off;
        let mut rhs = vec![0.0; nu];
        for (r, b) in rhs.iter_mut().enumerate() {
            let n = r + off;
            if n >= 2 * off || !self.active(n) {
                continue;
            }
            for &(c, v) in &self.diff[n] {
                if c < off {
                    *b -= ek * v * phi_d[c];
                }
            }
            for &(c, v) in &self.adv[n] {
                if c < off {
                    *b -= v * phi_d[c];
                }
            }
        }
        let u = lu.solve(&rhs)?;
        let mut phi = phi_d.to_vec();
        phi.extend(u);
        Ok(ConcentrationField {
            phi,
            k,
            control: None,
            fingerprint: self.fingerprint(k),
        })
    }

    pub fn region_weights(&self, region: &Rect) -> Result<Vec<f64>> {
        self.grid.region_weights(region)
    }

    /// Mean concentration over the fluid part of `region`.
    pub fn mean_concentration(&self, field: &ConcentrationField, region: &Rect) -> Result<f64> {
        let w = self.region_weights(region)?;
        Ok(w.iter().zip(&field.phi).map(|(a, b)| a * b).sum())
    }

    /// Solve `A_uuᵀ λ = −w_u` for the region average.
    pub fn adjoint(&self, k: f64, region: &Rect) -> Result<AdjointField> {
        Self::check_k(k)?;
        let weights = self.region_weights(region)?;
        let off = self.offset();
        let rhs: Vec<f64> = weights[off..].iter().map(|w| -w).collect();
        let lu = self.factor(k)?;
        let mut lambda = vec![0.0; off];
        lambda.extend(lu.solve_transpose(&rhs)?);
        Ok(AdjointField {
            lambda,
            weights,
            k,
            fingerprint: self.fingerprint(k),
        })
    }

    fn check_pair(&self, field: &ConcentrationField, adj: &AdjointField) -> Result<()> {
        let fp = self.fingerprint(field.k);
        if field.fingerprint != fp || adj.fingerprint != fp {
            return Err(Error::StaleAdjoint);
        }
        Ok(())
    }

    /// `dh/d(z₀, L, c)` of the region average.
    pub fn gradient_control(
        &self,
        field: &ConcentrationField,
        adj: &AdjointField,
    ) -> Result<[f64; 3]> {
        self.check_pair(field, adj)?;
        let x = field.control.ok_or_else(|| {
            Error::InvalidArgument("field was not computed from a control vector".into())
        })?;
        let off = self.offset();
        let ek = field.k.exp();
        // total sensitivity to each Dirichlet value: w_D + (λᵀ A_uD)
        let mut s = adj.weights[..off].to_vec();
        for n in off..(2 * off).min(self.grid.n_nodes()) {
            let l = adj.lambda[n];
            if l == 0.0 || !self.active(n) {
                continue;
            }
            for &(c, v) in &self.diff[n] {
                if c < off {
                    s[c] += l * ek * v;
                }
            }
            for &(c, v) in &self.adv[n] {
                if c < off {
                    s[c] += l * v;
                }
            }
        }
        let dphi = inflow_gradients(&x, self.grid.ny(), self.grid.dy(), self.sampling);
        let mut g = [0.0; 3];
        for (sj, d) in s.iter().zip(&dphi) {
            for p in 0..3 {
                g[p] += sj * d[p];
            }
        }
        Ok(g)
    }

    /// `dh/dk` of the region average.
    pub fn gradient_diffusivity(
        &self,
        field: &ConcentrationField,
        adj: &AdjointField,
    ) -> Result<f64> {
        self.check_pair(field, adj)?;
        let ek = field.k.exp();
        let mut g = 0.0;
        for n in self.offset()..self.grid.n_nodes() {
            let l = adj.lambda[n];
            if l == 0.0 || !self.active(n) {
                continue;
            }
            let r: f64 = self.diff[n].iter().map(|&(c, v)| v * field.phi[c]).sum();
            g += l * ek * r;
        }
        Ok(g)
    }

    /// Region average and its gradient in `(z₀, L, c, k)`.
    pub fn value_and_gradient(&self, x: &[f64], k: f64, region: &Rect) -> Result<(f64, [f64; 4])> {
        let field = self.solve(x, k)?;
        let adj = self.adjoint(k, region)?;
        let h = adj.weights.iter().zip(&field.phi).map(|(a, b)| a * b).sum();
        let gx = self.gradient_control(&field, &adj)?;
        let gk = self.gradient_diffusivity(&field, &adj)?;
        Ok((h, [gx[0], gx[1], gx[2], gk]))
    }

    /// Write nodal values as `x,y,value` rows.
    pub fn write_field_csv<P: AsRef<Path>>(&self, path: P, name: &str, values: &[f64]) -> Result<()> {
        crate::param::check_len("nodal values", self.grid.n_nodes(), values.len())?;
        let header = vec!["x".to_string(), "y".to_string(), name.to_string()];
        let rows: Vec<Vec<String>> = values
            .iter()
            .enumerate()
            .map(|(n, v)| {
                let (x, y) = self.grid.node_xy(n);
                vec![fmt_f64(x), fmt_f64(y), fmt_f64(*v)]
            })
            .collect();
        write_csv(path, &header, &rows)
    }

    /// Apply the full operator `eᵏ·A_diff + A_adv` to nodal values; Dirichlet
    /// and inactive rows return 0.
    pub fn apply(&self, k: f64, phi: &[f64]) -> Vec<f64> {
        let ek = k.exp();
        (0..self.grid.n_nodes())
            .map(|n| {
                if n < self.offset() || !self.active(n) {
                    return 0.0;
                }
                let d: f64 = self.diff[n].iter().map(|&(c, v)| v * phi[c]).sum();
                let a: f64 = self.adv[n].iter().map(|&(c, v)| v * phi[c]).sum();
                ek * d + a
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::grid::default_docks;
    use rand::Rng;

    fn small() -> TransportModel {
        let g = Grid::new(20, 10, 5.0, 2.0).unwrap();
        let v = VelocityField::poiseuille(&g, 1.0);
        TransportModel::new(g, v).unwrap()
    }

    #[test]
    fn poiseuille_is_discretely_divergence_free() {
        let g = Grid::new(20, 10, 5.0, 2.0).unwrap();
        let v = VelocityField::poiseuille(&g, 1.0);
        for d in discrete_divergence(&g, &v) {
            assert!(d.abs() < 1e-14);
        }
    }

    #[test]
    fn constant_inflow_without_flow_is_constant() {
        let g = Grid::new(16, 8, 5.0, 2.0).unwrap();
        let m = TransportModel::new(g.clone(), VelocityField::zero(&g)).unwrap();
        let f = m.solve_dirichlet(-1.0, &vec![0.7; 9]).unwrap();
        for p in &f.phi {
            assert!((p - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_inflow_with_flow_is_constant() {
        let m = small();
        let f = m.solve_dirichlet(-3.0, &vec![2.0; 11]).unwrap();
        for p in &f.phi {
            assert!((p - 2.0).abs() < 1e-11);
        }
    }

    #[test]
    fn zero_amplitude_gives_zero_field() {
        let m = small();
        let f = m.solve(&[1.0, 0.5, 0.0], -2.0).unwrap();
        assert!(f.phi.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn maximum_principle() {
        let m = small();
        let f = m.solve(&[1.0, 0.6, 3.0], -4.6).unwrap();
        let top = 3.0 * (-1.0f64).exp();
        for p in &f.phi {
            assert!(*p >= -1e-12 && *p <= top + 1e-12);
        }
    }

    #[test]
    fn residual_vanishes() {
        let m = small();
        let f = m.solve(&[0.8, 0.5, 1.0], -2.0).unwrap();
        let r = m.apply(-2.0, &f.phi);
        let scale: f64 = f.phi.iter().fold(0.0, |a, b| a.max(b.abs()));
        for v in r {
            assert!(v.abs() < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn adjoint_matches_direct_sensitivity_to_dirichlet_values() {
        // h(φ_D) is linear, so its gradient is exact for a unit-vector probe
        let m = small();
        let region = Rect::new(1.7, 2.3, 0.1, 0.5).unwrap();
        let k = -2.0;
        let adj = m.adjoint(k, &region).unwrap();
        let mut rng = crate::rng::RngSpec::seeded(5).rng();
        let base: Vec<f64> = (0..11).map(|_| rng.random::<f64>()).collect();
        let f0 = m.solve_dirichlet(k, &base).unwrap();
        let h0: f64 = adj.weights.iter().zip(&f0.phi).map(|(a, b)| a * b).sum();
        let mut probe = base.clone();
        probe[4] += 1.0;
        let f1 = m.solve_dirichlet(k, &probe).unwrap();
        let h1: f64 = adj.weights.iter().zip(&f1.phi).map(|(a, b)| a * b).sum();
        // sensitivity to node 4 from the adjoint
        let ek = k.exp();
        let mut s = adj.weights[4];
        for n in 11..22 {
            for &(c, v) in m.diff[n].iter() {
                if c == 4 {
                    s += adj.lambda[n] * ek * v;
                }
            }
            for &(c, v) in m.adv[n].iter() {
                if c == 4 {
                    s += adj.lambda[n] * v;
                }
            }
        }
        assert!((h1 - h0 - s).abs() < 1e-12 * s.abs().max(1e-12), "{} vs {s}", h1 - h0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = small();
        let region = Rect::new(1.7, 2.3, 0.1, 0.5).unwrap();
        let x = [0.83, 0.61, 2.0];
        let k = -4.0;
        let (_, g) = m.value_and_gradient(&x, k, &region).unwrap();
        let h = |x: &[f64], k: f64| {
            let f = m.solve(x, k).unwrap();
            m.mean_concentration(&f, &region).unwrap()
        };
        for p in 0..4 {
            let e = 1e-5;
            let fd = if p < 3 {
                let (mut a, mut b) = (x, x);
                a[p] += e;
                b[p] -= e;
                (h(&a, k) - h(&b, k)) / (2.0 * e)
            } else {
                (h(&x, k + e) - h(&x, k - e)) / (2.0 * e)
            };
            assert!((fd - g[p]).abs() < 1e-6 * g[p].abs(), "p={p} fd={fd} adj={}", g[p]);
        }
    }

    #[test]
    fn stale_adjoint_rejected() {
        let m = small();
        let region = Rect::new(1.7, 2.3, 0.1, 0.5).unwrap();
        let f = m.solve(&[1.0, 0.5, 1.0], -2.0).unwrap();
        let a = m.adjoint(-2.5, &region).unwrap();
        assert!(matches!(m.gradient_control(&f, &a), Err(Error::StaleAdjoint)));
        assert!(matches!(m.gradient_diffusivity(&f, &a), Err(Error::StaleAdjoint)));
        let other = TransportModel::default_channel().unwrap();
        let a2 = other.adjoint(-2.0, &region).unwrap();
        assert!(matches!(m.gradient_control(&f, &a2), Err(Error::StaleAdjoint)));
    }

    #[test]
    fn profile_outside_channel_gives_zero() {
        let m = small();
        let region = Rect::new(1.7, 2.3, 0.1, 0.5).unwrap();
        let (h, g) = m.value_and_gradient(&[5.0, 1.0, 1.0], -2.0, &region).unwrap();
        assert_eq!(h, 0.0);
        assert_eq!(g, [0.0; 4]);
    }

    #[test]
    fn docks_need_loaded_field() {
        let g = Grid::new(50, 20, 5.0, 2.0)
            .unwrap()
            .with_docks(&default_docks())
            .unwrap();
        let v = VelocityField::poiseuille(&g, 1.0);
        assert!(TransportModel::new(g.clone(), v.clone()).is_err());
        let loaded = VelocityField::parse(&g, &v.to_text(&g)).unwrap();
        let m = TransportModel::new(g, loaded).unwrap();
        let f = m.solve(&[0.3, 0.3, 1.0], -2.0).unwrap();
        assert!(f.phi.iter().all(|p| p.is_finite()));
        let region = Rect::new(1.7, 2.3, 0.1, 0.5).unwrap();
        let (_, g) = m.value_and_gradient(&[0.3, 0.3, 1.0], -2.0, &region).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
    }
}
