//! Dense matrices over exact rationals.

use std::fmt;

use num::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::poly::{Poly, PolyMat, Rat};

#[derive(Clone, Debug, PartialEq)]
pub struct RatMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Rat>,
}

impl RatMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMat { rows, cols, data: vec![Rat::zero(); rows * cols] }
    }
    pub fn identity(n: usize) -> Self {
        let mut m = RatMat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Rat::one();
        }
        m
    }
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Rat) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        RatMat { rows, cols, data }
    }
    pub fn get(&self, i: usize, j: usize) -> &Rat {
        &self.data[i * self.cols + j]
    }
    pub fn set(&mut self, i: usize, j: usize, v: Rat) {
        self.data[i * self.cols + j] = v;
    }
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    /// Constant polynomial matrix to rationals; `None` if any entry is not constant.
    pub fn from_polymat(m: &PolyMat) -> Option<Self> {
        let vals = m.as_consts()?;
        Some(RatMat { rows: m.rows, cols: m.cols, data: vals })
    }
    pub fn to_polymat(&self) -> PolyMat {
        PolyMat::from_fn(self.rows, self.cols, |i, j| Poly::constant(self.get(i, j).clone()))
    }

    pub fn transpose(&self) -> Self {
        RatMat::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }
    pub fn add(&self, o: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols), "RatMat::add dims");
        RatMat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect() }
    }
    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    pub fn neg(&self) -> Self {
        RatMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| -a).collect() }
    }
    pub fn scale(&self, s: &Rat) -> Self {
        RatMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }
    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.cols, o.rows, "RatMat::mul dims");
        let mut r = RatMat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let b = o.get(k, j);
                    if !b.is_zero() {
                        r.data[i * o.cols + j] += a * b;
                    }
                }
            }
        }
        r
    }
    pub fn submatrix(&self, r0: usize, nr: usize, c0: usize, nc: usize) -> Self {
        RatMat::from_fn(nr, nc, |i, j| self.get(r0 + i, c0 + j).clone())
    }
    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self.set(r0 + i, c0 + j, b.get(i, j).clone());
            }
        }
    }

    /// Row echelon reduction; returns (reduced matrix, pivot columns).
    pub fn rref(&self) -> (Self, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| !m.get(i, c).is_zero()) else {
                continue;
            };
            if p != r {
                for j in 0..m.cols {
                    m.data.swap(p * m.cols + j, r * m.cols + j);
                }
            }
            let inv = m.get(r, c).recip();
            for j in 0..m.cols {
                let v = m.get(r, j) * &inv;
                m.set(r, j, v);
            }
            for i in 0..m.rows {
                if i == r || m.get(i, c).is_zero() {
                    continue;
                }
                let f = m.get(i, c).clone();
                for j in 0..m.cols {
                    let v = m.get(i, j) - &f * m.get(r, j);
                    m.set(i, j, v);
                }
            }
            pivots.push(c);
            r += 1;
        }
        (m, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Exact inverse; `None` when singular.
    pub fn inverse(&self) -> Option<Self> {
        if self.rows != self.cols {
            return None;
        }
        let n = self.rows;
        let mut aug = RatMat::zeros(n, 2 * n);
        aug.set_block(0, 0, self);
        aug.set_block(0, n, &RatMat::identity(n));
        let (r, piv) = aug.rref();
        if piv.len() < n || (n > 0 && piv[n - 1] >= n) {
            return None;
        }
        Some(r.submatrix(0, n, n, n))
    }

    /// Inverse, with an error naming the matrix on failure.
    pub fn inverse_named(&self, name: &str) -> Result<Self> {
        self.inverse().ok_or_else(|| Error::Singular(name.to_string()))
    }

    pub fn max_abs(&self) -> Rat {
        self.data.iter().map(|v| v.abs()).max().unwrap_or_else(Rat::zero)
    }
}

impl fmt::Display for RatMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat;

    #[test]
    fn inverse_roundtrip() {
        let m = RatMat::from_fn(3, 3, |i, j| rat((i * 3 + j) as i64 % 5 + if i == j { 4 } else { 0 }, 1));
        let inv = m.inverse().unwrap();
        assert_eq!(m.mul(&inv), RatMat::identity(3));
        assert_eq!(inv.mul(&m), RatMat::identity(3));
    }

    #[test]
    fn singular_detected() {
        let m = RatMat::from_fn(2, 2, |i, _| rat(i as i64 + 1, 1));
        assert!(m.inverse().is_none());
        assert_eq!(m.rank(), 1);
        assert!(RatMat::zeros(0, 0).inverse().is_some());
    }
}
