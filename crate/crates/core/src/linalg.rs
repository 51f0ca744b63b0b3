//! Small dense complex matrices.
//!
//! Sizes here never exceed `2n + 1` for a handful of variables, so plain
//! row-major storage with Gauss-Jordan elimination is all that is needed.

use std::ops::{Index, IndexMut, Mul};

use serde::{Deserialize, Serialize};

use crate::scalar::{cr, cz, Real, C};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![cz(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = cr(T::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<C<T>>]) -> Option<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return None;
        }
        Some(Self { rows: r, cols: c, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[C<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<C<T>>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<C<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)].conj())
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] + other[(i, j)])
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - other[(i, j)])
    }

    pub fn mul_vec(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).fold(cz(), |acc, (a, b)| acc + a * b))
            .collect()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, x| acc.max(x.norm()))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr()).sqrt()
    }

    /// Extracts the sub-block with the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    ///
    /// Returns `None` when a pivot falls below `1e-300` relative to the
    /// matrix scale.
    pub fn inverse(&self) -> Option<Self> {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let scale = self.max_abs().max(T::min_positive_value());
        for col in 0..n {
            let (piv, piv_abs) = (col..n)
                .map(|r| (r, a[(r, col)].norm()))
                .fold((col, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if piv_abs <= scale * T::epsilon() * T::lit(1e-4) {
                return None;
            }
            if piv != col {
                a.swap_rows(piv, col);
                inv.swap_rows(piv, col);
            }
            let d = a[(col, col)].inv();
            for j in 0..n {
                a[(col, j)] *= d;
                inv[(col, j)] *= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == cz() {
                    continue;
                }
                for j in 0..n {
                    let ac = a[(col, j)];
                    let ic = inv[(col, j)];
                    a[(r, j)] -= f * ac;
                    inv[(r, j)] -= f * ic;
                }
            }
        }
        Some(inv)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    /// `‖A*A − I‖_max`.
    pub fn unitarity_defect(&self) -> T {
        self.adjoint().mul(self).sub(&Self::identity(self.cols)).max_abs()
    }

    /// Unitary factor of the polar decomposition, by the Newton iteration
    /// `X ← (X + X^{-*}) / 2`. Converges quadratically for invertible input.
    pub fn unitary_polar(&self) -> Option<Self> {
        let mut x = self.clone();
        for _ in 0..60 {
            let next = x.add(&x.adjoint().inverse()?).scale(cr(T::lit(0.5)));
            let delta = next.sub(&x).max_abs();
            x = next;
            if delta <= T::epsilon() * T::lit(16.0) {
                break;
            }
        }
        Some(x)
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = C<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn mul(self, rhs: &CMatrix<T>) -> CMatrix<T> {
        assert_eq!(self.cols, rhs.rows);
        CMatrix::from_fn(self.rows, rhs.cols, |i, j| {
            (0..self.cols).fold(cz(), |acc, k| acc + self[(i, k)] * rhs[(k, j)])
        })
    }
}

impl<T: Real> CMatrix<T> {
    pub fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
}

/// Real linear least squares `min ‖A x − b‖₂` by modified Gram-Schmidt QR.
///
/// `a` is row-major with `cols` columns. Returns `None` if a column is
/// numerically dependent on the previous ones.
pub fn lstsq<T: Real>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    if m < n || b.len() != m {
        return None;
    }
    // column-major copy
    let mut q: Vec<Vec<T>> = (0..n).map(|j| a.iter().map(|row| row[j]).collect()).collect();
    let mut r = vec![vec![T::zero(); n]; n];
    let col_scale: Vec<T> = q.iter().map(|c| norm2(c)).collect();
    for j in 0..n {
        for k in 0..j {
            let d = dot(&q[k], &q[j]);
            r[k][j] = d;
            let qk = q[k].clone();
            for (x, y) in q[j].iter_mut().zip(&qk) {
                *x -= d * *y;
            }
        }
        let nrm = norm2(&q[j]);
        if nrm <= col_scale[j].max(T::min_positive_value()) * T::lit(1e-12) {
            return None;
        }
        r[j][j] = nrm;
        for x in q[j].iter_mut() {
            *x /= nrm;
        }
    }
    let qtb: Vec<T> = q.iter().map(|c| dot(c, b)).collect();
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for k in i + 1..n {
            s -= r[i][k] * x[k];
        }
        x[i] = s / r[i][i];
    }
    Some(x)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
