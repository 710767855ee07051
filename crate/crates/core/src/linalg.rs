//! Small dense matrices and Gaussian elimination with partial pivoting.

use crate::error::{Error, Result};

/// Pivots smaller than this in magnitude are treated as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Sub-matrix keeping the given indices, in the order given.
    pub fn select(&self, keep: &[usize]) -> Self {
        let mut s = Self::zeros(keep.len());
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                s[(a, b)] = self[(i, j)];
            }
        }
        s
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Matrix, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.dim;
    assert_eq!(
        b.len(),
        n,
        "right-hand side length must match matrix dimension"
    );

    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|i| (i, a[(i, col)]))
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .expect("non-empty pivot range");
        if pivot.is_nan() || pivot.abs() < PIVOT_TOLERANCE {
            return Err(Error::SingularSystem {
                dim: n,
                column: col,
                pivot,
            });
        }
        if pivot_row != col {
            for j in 0..n {
                a.data.swap(col * n + j, pivot_row * n + j);
            }
            b.swap(col, pivot_row);
        }
        let (upper, lower) = a.data.split_at_mut((col + 1) * n);
        let pivot_tail = &upper[col * n + col + 1..col * n + n];
        for (off, row) in lower.chunks_exact_mut(n).enumerate() {
            let factor = row[col] / pivot;
            if factor == 0.0 {
                continue;
            }
            row[col] = 0.0;
            for (x, &p) in row[col + 1..].iter_mut().zip(pivot_tail) {
                *x -= factor * p;
            }
            b[col + 1 + off] -= factor * b[col];
        }
    }

    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|j| a[(i, j)] * x[j]).sum();
        x[i] = (b[i] - tail) / a[(i, i)];
    }
    Ok(x)
}

/// Solves `(I - q) x = e` for the expected number of visits to transient
/// states before absorption.
pub fn expected_absorption_times(q: &Matrix) -> Result<Vec<f64>> {
    let n = q.dim();
    let mut a = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= q[(i, j)];
        }
    }
    solve(a, vec![1.0; n])
}
