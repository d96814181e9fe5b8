//! Dense symmetric matrices and Cholesky solves for the small systems of
//! the central update.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    dim: usize,
    entries: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        SquareMatrix {
            dim,
            entries: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::domain("matrix rows must all have length equal to the row count"));
        }
        Ok(SquareMatrix {
            dim,
            entries: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.entries[i * self.dim + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.entries.chunks(self.dim.max(1)).map(<[T]>::to_vec).take(self.dim).collect()
    }

    /// `self += scale * v v^T`
    pub fn add_outer(&mut self, scale: T, v: &[T]) {
        debug_assert_eq!(v.len(), self.dim);
        for (i, &vi) in v.iter().enumerate() {
            let s = scale * vi;
            let row = &mut self.entries[i * self.dim..(i + 1) * self.dim];
            for (e, &vj) in row.iter_mut().zip(v) {
                *e = *e + s * vj;
            }
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, scale: T, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            *a = *a + scale * b;
        }
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.dim {
            self.entries[i * self.dim + i] = self.entries[i * self.dim + i] + v;
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        self.entries
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    /// `v^T M v`
    pub fn quadratic_form(&self, v: &[T]) -> T {
        crate::scalar::dot(v, &self.mul_vec(v))
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    lower: SquareMatrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors a symmetric positive-definite matrix, reading only its lower
    /// triangle. Fails with the offending pivot when a pivot is not safely
    /// positive.
    pub fn factor(a: &SquareMatrix<T>) -> Result<Self> {
        let n = a.dim();
        let max_diag = (0..n).fold(T::zero(), |m, i| m.max(a.get(i, i).abs()));
        let tol = T::epsilon() * T::of_count(n.max(1)) * max_diag;
        let mut l = SquareMatrix::zeros(n);
        for j in 0..n {
            let mut pivot = a.get(j, j);
            for k in 0..j {
                pivot = pivot - l.get(j, k) * l.get(j, k);
            }
            if !(pivot > tol) {
                return Err(Error::NotPositiveDefinite {
                    pivot: pivot.as_f64(),
                    column: j,
                });
            }
            let ljj = pivot.sqrt();
            l.set(j, j, ljj);
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s = s - l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / ljj);
            }
        }
        Ok(Cholesky { lower: l })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lower.dim();
        debug_assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.lower.get(i, k) * y[k];
            }
            y[i] = s / self.lower.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - self.lower.get(k, i) * y[k];
            }
            y[i] = s / self.lower.get(i, i);
        }
        y
    }
}
