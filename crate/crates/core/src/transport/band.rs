//! Banded LU without pivoting, for the M-matrices of the upwind scheme.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    /// Row-major, `2·bw + 1` slots per row; slot `j − i + bw` holds `a[i][j]`.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "({i}, {j}) outside band {}", self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw).min(self.n - 1);
            for j in lo..=hi {
                y[j] += self.get(i, j) * x[i];
            }
        }
        y
    }

    /// Factor in place. Fails on a pivot below `1e-14` times the largest
    /// entry of its row.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, bw) = (self.n, self.bw);
        let original = self.clone();
        for k in 0..n {
            let scale = (k.saturating_sub(bw)..=(k + bw).min(n - 1))
                .map(|j| self.get(k, j).abs())
                .fold(0.0, f64::max);
            let pivot = self.get(k, k);
            if !(pivot.abs() > 1e-14 * scale) || !pivot.is_finite() {
                return Err(Error::SingularSystem { row: k, pivot });
            }
            let end = (k + bw).min(n - 1);
            for i in (k + 1)..=end {
                let sik = self.slot(i, k);
                let l = self.data[sik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[sik] = l;
                for j in (k + 1)..=end {
                    let kj = self.data[self.slot(k, j)];
                    let sij = self.slot(i, j);
                    self.data[sij] -= l * kj;
                }
            }
        }
        Ok(BandLu {
            lu: self,
            a: original,
        })
    }
}

/// `A = LU` with unit lower `L`, stored in one band.
#[derive(Debug, Clone)]
pub struct BandLu {
    lu: BandMatrix,
    a: BandMatrix,
}

impl BandLu {
    pub fn matrix(&self) -> &BandMatrix {
        &self.a
    }

    fn forward_unit(&self, b: &mut [f64]) {
        let (n, bw) = (self.lu.n, self.lu.bw);
        for i in 0..n {
            let mut s = b[i];
            for j in i.saturating_sub(bw)..i {
                s -= self.lu.get(i, j) * b[j];
            }
            b[i] = s;
        }
    }

    fn backward_upper(&self, b: &mut [f64]) {
        let (n, bw) = (self.lu.n, self.lu.bw);
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in (i + 1)..=(i + bw).min(n - 1) {
                s -= self.lu.get(i, j) * b[j];
            }
            b[i] = s / self.lu.get(i, i);
        }
    }

    /// `Uᵀ` is lower triangular with the pivots on its diagonal.
    fn forward_upper_t(&self, b: &mut [f64]) {
        let (n, bw) = (self.lu.n, self.lu.bw);
        for i in 0..n {
            let mut s = b[i];
            for j in i.saturating_sub(bw)..i {
                s -= self.lu.get(j, i) * b[j];
            }
            b[i] = s / self.lu.get(i, i);
        }
    }

    fn backward_unit_t(&self, b: &mut [f64]) {
        let (n, bw) = (self.lu.n, self.lu.bw);
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in (i + 1)..=(i + bw).min(n - 1) {
                s -= self.lu.get(j, i) * b[j];
            }
            b[i] = s;
        }
    }

    fn check(&self, x: &[f64], b: &[f64], transpose: bool) -> Result<()> {
        let ax = if transpose {
            self.a.matvec_transpose(x)
        } else {
            self.a.matvec(x)
        };
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rn = ax
            .iter()
            .zip(b)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if !(rn <= 1e-10 * bn) && !(bn == 0.0 && rn == 0.0) {
            return Err(Error::NotConverged(if bn > 0.0 { rn / bn } else { rn }));
        }
        Ok(())
    }

    /// Solve `A x = b` and verify the residual.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.forward_unit(&mut x);
        self.backward_upper(&mut x);
        self.check(&x, b, false)?;
        Ok(x)
    }

    /// Solve `Aᵀ x = b` and verify the residual.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.forward_upper_t(&mut x);
        self.backward_unit_t(&mut x);
        self.check(&x, b, true)?;
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn random_m_matrix(n: usize, bw: usize, seed: u64) -> (BandMatrix, DMatrix<f64>) {
        let mut g = crate::rng::RngSpec::seeded(seed).rng();
        let mut b = BandMatrix::zeros(n, bw);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut off = 0.0;
            for j in i.saturating_sub(bw)..=(i + bw).min(n - 1) {
                if j != i && g.random::<f64>() < 0.6 {
                    let v = -g.random::<f64>();
                    b.add(i, j, v);
                    d[(i, j)] = v;
                    off -= v;
                }
            }
            let diag = off + 0.1 + g.random::<f64>();
            b.add(i, i, diag);
            d[(i, i)] = diag;
        }
        (b, d)
    }

    #[test]
    fn solves_match_dense_lu() {
        let (b, d) = random_m_matrix(40, 5, 3);
        let rhs: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let lu = b.factor().unwrap();
        let x = lu.solve(&rhs).unwrap();
        let xd = d.clone().lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        for (a, b) in x.iter().zip(xd.iter()) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
        let xt = lu.solve_transpose(&rhs).unwrap();
        let xtd = d.transpose().lu().solve(&DVector::from_vec(rhs)).unwrap();
        for (a, b) in xt.iter().zip(xtd.iter()) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn transpose_identity() {
        let (b, _) = random_m_matrix(30, 4, 9);
        let mut g = crate::rng::RngSpec::seeded(1).rng();
        let x: Vec<f64> = (0..30).map(|_| g.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..30).map(|_| g.random::<f64>() - 0.5).collect();
        let lhs: f64 = y.iter().zip(b.matvec(&x)).map(|(a, b)| a * b).sum();
        let rhs: f64 = b.matvec_transpose(&y).iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn singular_pivot_reported() {
        let mut b = BandMatrix::zeros(3, 1);
        b.add(0, 0, 1.0);
        b.add(1, 1, 0.0);
        b.add(2, 2, 1.0);
        match b.factor() {
            Err(Error::SingularSystem { row, .. }) => assert_eq!(row, 1),
            other => panic!("{other:?}"),
        }
    }
}
