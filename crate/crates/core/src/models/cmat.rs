//! Complex matrices with affine entries, used to write Ohm's law.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::conic::{Affine, HermExpr};

#[derive(Debug, Clone, Default)]
pub(crate) struct CAff {
    pub re: Affine<f64>,
    pub im: Affine<f64>,
}

impl CAff {
    pub fn zero() -> Self {
        CAff {
            re: Affine::zero(),
            im: Affine::zero(),
        }
    }

    pub fn new(re: Affine<f64>, im: Affine<f64>) -> Self {
        CAff { re, im }
    }

    /// `self += other * c`.
    pub fn add_scaled(&mut self, other: &CAff, c: Complex64) {
        self.re.add(&other.re, c.re);
        self.re.add(&other.im, -c.im);
        self.im.add(&other.re, c.im);
        self.im.add(&other.im, c.re);
    }

    pub fn conj(&self) -> CAff {
        CAff {
            re: self.re.clone(),
            im: self.im.scaled(-1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CMat {
    pub rows: usize,
    pub cols: usize,
    e: Vec<CAff>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            e: vec![CAff::zero(); rows * cols],
        }
    }

    pub fn at(&self, i: usize, j: usize) -> &CAff {
        &self.e[i * self.cols + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut CAff {
        &mut self.e[i * self.cols + j]
    }

    pub fn from_herm(h: &HermExpr<f64>) -> Self {
        let mut m = CMat::zeros(h.dim, h.dim);
        for i in 0..h.dim {
            for j in 0..h.dim {
                let (re, im) = h.get(i, j);
                *m.at_mut(i, j) = CAff::new(re, im);
            }
        }
        m
    }

    pub fn adjoint(&self) -> CMat {
        let mut m = CMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *m.at_mut(j, i) = self.at(i, j).conj();
            }
        }
        m
    }

    /// `self * z`.
    pub fn mul_right(&self, z: &DMatrix<Complex64>) -> CMat {
        let mut m = CMat::zeros(self.rows, z.ncols());
        for i in 0..self.rows {
            for j in 0..z.ncols() {
                let mut acc = CAff::zero();
                for k in 0..self.cols {
                    if z[(k, j)] != Complex64::new(0.0, 0.0) {
                        acc.add_scaled(self.at(i, k), z[(k, j)]);
                    }
                }
                *m.at_mut(i, j) = acc;
            }
        }
        m
    }

    /// `z * self`.
    pub fn mul_left(&self, z: &DMatrix<Complex64>) -> CMat {
        let mut m = CMat::zeros(z.nrows(), self.cols);
        for i in 0..z.nrows() {
            for j in 0..self.cols {
                let mut acc = CAff::zero();
                for k in 0..self.rows {
                    if z[(i, k)] != Complex64::new(0.0, 0.0) {
                        acc.add_scaled(self.at(k, j), z[(i, k)]);
                    }
                }
                *m.at_mut(i, j) = acc;
            }
        }
        m
    }

    /// `self += other * s`.
    pub fn add(&mut self, other: &CMat, s: f64) {
        for (a, b) in self.e.iter_mut().zip(&other.e) {
            a.add_scaled(b, Complex64::new(s, 0.0));
        }
    }
}
