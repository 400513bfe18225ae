//! Banded LU factorization with partial pivoting.
//!
//! Column-major band storage in the LAPACK `gbtrf` layout: entry `(i, j)`
//! lives at row `kl + ku + i − j` of column `j`, leaving `kl` extra
//! superdiagonals for the fill caused by row interchanges.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// `(2kl + ku + 1) × n`, column-major.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![0.0; (2 * kl + ku + 1) * n] }
    }

    fn ld(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        j * self.ld() + (self.kl + self.ku + i - j)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.pos(i, j)]
        } else {
            0.0
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let p = self.pos(i, j);
        self.data[p] += v;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            *yi = (lo..=hi).map(|j| self.data[self.pos(i, j)] * x[j]).sum();
        }
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    factors: BandMatrix,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &BandMatrix) -> Result<Self> {
        let mut f = a.clone();
        let (n, kl, ku) = (f.n, f.kl, f.ku);
        let mut pivots = vec![0; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = f.data[f.pos(k, k)].abs();
            for i in k + 1..=last_row {
                let v = f.data[f.pos(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 0.0 && best.is_finite()) {
                return Err(Error::SolverFailure(format!("singular pivot at row {k}")));
            }
            pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (f.pos(k, j), f.pos(p, j));
                    f.data.swap(a, b);
                }
            }
            let piv = f.data[f.pos(k, k)];
            for i in k + 1..=last_row {
                let pik = f.pos(i, k);
                let l = f.data[pik] / piv;
                f.data[pik] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let pkj = f.pos(k, j);
                        let pij = f.pos(i, j);
                        f.data[pij] -= l * f.data[pkj];
                    }
                }
            }
        }
        Ok(Self { factors: f, pivots })
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let f = &self.factors;
        let (n, kl, ku) = (f.n, f.kl, f.ku);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= f.data[f.pos(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                s -= f.data[f.pos(k, j)] * b[j];
            }
            b[k] = s / f.data[f.pos(k, k)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, rng: &mut ChaCha8Rng) -> (BandMatrix, DMatrix<f64>) {
        let mut b = BandMatrix::zeros(n, kl, ku);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = rng.gen_range(-1.0..1.0);
                b.add(i, j, v);
                d[(i, j)] = v;
            }
        }
        (b, d)
    }

    #[test]
    fn solves_random_banded_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 1), (40, 3, 5), (60, 7, 2)] {
            let (b, d) = random_band(n, kl, ku, &mut rng);
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lu = BandedLu::factor(&b).unwrap();
            let mut x = rhs.clone();
            lu.solve(&mut x);
            let expect = d.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
            for (a, e) in x.iter().zip(expect.iter()) {
                assert!((a - e).abs() < 1e-9 * e.abs().max(1.0), "{a} vs {e}");
            }
            let mut y = vec![0.0; n];
            b.matvec(&x, &mut y);
            for (a, e) in y.iter().zip(&rhs) {
                assert!((a - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let mut b = BandMatrix::zeros(3, 1, 1);
        b.add(0, 1, 1.0);
        b.add(1, 0, 1.0);
        b.add(1, 2, 2.0);
        b.add(2, 1, 3.0);
        b.add(2, 2, 1.0);
        let lu = BandedLu::factor(&b).unwrap();
        let mut x = vec![1.0, 2.0, 3.0];
        lu.solve(&mut x);
        let mut y = vec![0.0; 3];
        b.matvec(&x, &mut y);
        assert!(y.iter().zip([1.0, 2.0, 3.0]).all(|(a, e)| (a - e).abs() < 1e-14));
    }

    #[test]
    fn singular_matrix_is_reported() {
        let b = BandMatrix::zeros(4, 1, 1);
        assert!(matches!(BandedLu::factor(&b), Err(Error::SolverFailure(_))));
    }
}
