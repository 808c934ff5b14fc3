//! Minimal compressed-sparse-column matrices over `f64` and `Complex64`.
//!
//! The derivative algebra in this crate only ever combines incidence
//! matrices, diagonal scalings, transposes and sums, so a small purpose-built
//! CSC type is used instead of a general sparse library. Construction goes
//! through [`Coo`] triplets; duplicate entries are summed and exact zeros are
//! dropped, so no matrix stores explicit zeros.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::Zero;
use std::ops::{Add, Mul, Neg, Sub};

/// Scalar types the sparse containers work with.
pub trait Element:
    Copy
    + PartialEq
    + std::fmt::Debug
    + Zero
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    fn conj(self) -> Self;
}

impl Element for f64 {
    fn conj(self) -> f64 {
        self
    }
}

impl Element for Complex64 {
    fn conj(self) -> Complex64 {
        Complex64::conj(&self)
    }
}

/// Triplet (coordinate) builder.
#[derive(Debug, Clone)]
pub struct Coo<T> {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Element> Coo<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Coo {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if !value.is_zero() {
            self.entries.push((row, col, value));
        }
    }

    pub fn to_csc(&self) -> Csc<T> {
        let mut entries = self.entries.clone();
        // column-major order, rows sorted within a column
        entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));

        let mut col_ptr = vec![0usize; self.ncols + 1];
        let mut row_ind = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;

        for &(r, c, v) in &entries {
            if last == Some((r, c)) {
                let lv = values.last_mut().unwrap();
                *lv = *lv + v;
            } else {
                row_ind.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }

        for c in 0..self.ncols {
            col_ptr[c + 1] += col_ptr[c];
        }

        let mut out = Csc {
            nrows: self.nrows,
            ncols: self.ncols,
            col_ptr,
            row_ind,
            values,
        };
        out.drop_zeros();
        out
    }
}

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csc<T> {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_ind: Vec<usize>,
    values: Vec<T>,
}

impl<T: Element> Csc<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Csc {
            nrows,
            ncols,
            col_ptr: vec![0; ncols + 1],
            row_ind: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let mut coo = Coo::new(nrows, ncols);
        for (r, c, v) in triplets {
            coo.push(r, c, v);
        }
        coo.to_csc()
    }

    pub fn identity(n: usize, one: T) -> Self {
        Csc::from_triplets(n, n, (0..n).map(|i| (i, i, one)))
    }

    pub fn from_diag(d: &[T]) -> Self {
        Csc::from_triplets(d.len(), d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        assert!(row < self.nrows && col < self.ncols);
        let lo = self.col_ptr[col];
        let hi = self.col_ptr[col + 1];
        match self.row_ind[lo..hi].binary_search(&row) {
            Ok(k) => self.values[lo + k],
            Err(_) => T::zero(),
        }
    }

    /// Iterate the stored entries of one column as `(row, value)`.
    pub fn col(&self, col: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        assert!(col < self.ncols);
        (self.col_ptr[col]..self.col_ptr[col + 1]).map(move |k| (self.row_ind[k], self.values[k]))
    }

    /// Iterate stored entries as `(row, col, value)` in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.ncols).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |k| (self.row_ind[k], c, self.values[k]))
        })
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|v| !v.is_zero()) {
            return;
        }
        let mut col_ptr = vec![0usize; self.ncols + 1];
        let mut row_ind = Vec::with_capacity(self.row_ind.len());
        let mut values = Vec::with_capacity(self.values.len());
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                if !self.values[k].is_zero() {
                    row_ind.push(self.row_ind[k]);
                    values.push(self.values[k]);
                    col_ptr[c + 1] += 1;
                }
            }
        }
        for c in 0..self.ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        self.col_ptr = col_ptr;
        self.row_ind = row_ind;
        self.values = values;
    }

    pub fn transpose(&self) -> Csc<T> {
        Csc::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().map(|(r, c, v)| (c, r, v)),
        )
    }

    pub fn map<F: Fn(T) -> T>(&self, f: F) -> Csc<T> {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = f(*v);
        }
        out.drop_zeros();
        out
    }

    /// Entrywise complex conjugate (identity for real matrices).
    pub fn conj(&self) -> Csc<T> {
        self.map(Element::conj)
    }

    pub fn scale(&self, s: T) -> Csc<T> {
        self.map(|v| v * s)
    }

    /// `diag(d) * self` — scales row `i` by `d[i]`.
    pub fn scale_rows(&self, d: &[T]) -> Csc<T> {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for c in 0..out.ncols {
            for k in out.col_ptr[c]..out.col_ptr[c + 1] {
                out.values[k] = d[out.row_ind[k]] * out.values[k];
            }
        }
        out.drop_zeros();
        out
    }

    /// `self * diag(d)` — scales column `j` by `d[j]`.
    pub fn scale_cols(&self, d: &[T]) -> Csc<T> {
        assert_eq!(d.len(), self.ncols);
        let mut out = self.clone();
        for c in 0..out.ncols {
            for k in out.col_ptr[c]..out.col_ptr[c + 1] {
                out.values[k] = out.values[k] * d[c];
            }
        }
        out.drop_zeros();
        out
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![T::zero(); self.nrows];
        for c in 0..self.ncols {
            let xc = x[c];
            if xc.is_zero() {
                continue;
            }
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_ind[k]] = y[self.row_ind[k]] + self.values[k] * xc;
            }
        }
        y
    }

    /// `selfᵀ * x` without forming the transpose.
    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::zero(); self.ncols];
        for c in 0..self.ncols {
            let mut acc = T::zero();
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc = acc + self.values[k] * x[self.row_ind[k]];
            }
            y[c] = acc;
        }
        y
    }

    pub fn add(&self, other: &Csc<T>) -> Csc<T> {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Csc::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets().chain(other.triplets()),
        )
    }

    pub fn sub(&self, other: &Csc<T>) -> Csc<T> {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Csc::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets().chain(other.triplets().map(|(r, c, v)| (r, c, -v))),
        )
    }

    /// Keep the listed columns, in the given order.
    pub fn select_cols(&self, cols: &[usize]) -> Csc<T> {
        let mut coo = Coo::new(self.nrows, cols.len());
        for (new_c, &c) in cols.iter().enumerate() {
            assert!(c < self.ncols);
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                coo.push(self.row_ind[k], new_c, self.values[k]);
            }
        }
        coo.to_csc()
    }

    /// Keep the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Csc<T> {
        let mut pos = vec![usize::MAX; self.nrows];
        for (new_r, &r) in rows.iter().enumerate() {
            assert!(r < self.nrows);
            pos[r] = new_r;
        }
        Csc::from_triplets(
            rows.len(),
            self.ncols,
            self.triplets()
                .filter(|&(r, _, _)| pos[r] != usize::MAX)
                .map(|(r, c, v)| (pos[r], c, v)),
        )
    }

    pub fn to_dense(&self) -> DMatrix<T>
    where
        T: nalgebra::Scalar,
    {
        let mut d = DMatrix::from_element(self.nrows, self.ncols, T::zero());
        for (r, c, v) in self.triplets() {
            d[(r, c)] = d[(r, c)] + v;
        }
        d
    }

    /// Max absolute difference against `other` (both treated dense).
    pub fn max_abs_diff(&self, other: &Csc<T>, abs: impl Fn(T) -> f64) -> f64 {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let diff = self.sub(other);
        diff.values.iter().map(|&v| abs(v)).fold(0.0, f64::max)
    }
}

impl Csc<Complex64> {
    pub fn re(&self) -> Csc<f64> {
        Csc::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets().map(|(r, c, v)| (r, c, v.re)),
        )
    }

    pub fn im(&self) -> Csc<f64> {
        Csc::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets().map(|(r, c, v)| (r, c, v.im)),
        )
    }
}

impl Csc<f64> {
    pub fn to_complex(&self) -> Csc<Complex64> {
        Csc::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets().map(|(r, c, v)| (r, c, Complex64::new(v, 0.0))),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = Csc::from_triplets(
            2,
            2,
            vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, 5.0), (1, 1, -5.0), (1, 0, 0.0)],
        );
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 1);
    }

    #[test]
    fn matvec_and_transpose_agree() {
        let m = Csc::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, -3.0)]);
        let x = [1.0, 2.0, 3.0];
        assert_eq!(m.mul_vec(&x), vec![7.0, -6.0]);
        let y = [4.0, 5.0];
        assert_eq!(m.tr_mul_vec(&y), m.transpose().mul_vec(&y));
    }

    #[test]
    fn row_col_scaling() {
        let m = Csc::from_triplets(2, 2, vec![(0, 0, c(1.0, 0.0)), (1, 0, c(0.0, 1.0))]);
        let scaled = m.scale_rows(&[c(2.0, 0.0), c(0.0, 1.0)]);
        assert_eq!(scaled.get(0, 0), c(2.0, 0.0));
        assert_eq!(scaled.get(1, 0), c(-1.0, 0.0));
        let scaled = m.scale_cols(&[c(0.0, 2.0), c(1.0, 0.0)]);
        assert_eq!(scaled.get(0, 0), c(0.0, 2.0));
    }

    #[test]
    fn add_sub_select() {
        let a = Csc::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 2.0)]);
        let b = Csc::from_triplets(2, 2, vec![(0, 0, -1.0), (0, 1, 4.0)]);
        let s = a.add(&b);
        assert_eq!(s.get(0, 0), 0.0);
        assert_eq!(s.nnz(), 2);
        assert_eq!(a.sub(&a).nnz(), 0);
        let sel = b.select_cols(&[1]);
        assert_eq!(sel.ncols(), 1);
        assert_eq!(sel.get(0, 0), 4.0);
        let selr = b.select_rows(&[1, 0]);
        assert_eq!(selr.get(1, 1), 4.0);
    }

    #[test]
    fn conj_and_parts() {
        let m = Csc::from_triplets(1, 1, vec![(0, 0, c(1.0, -2.0))]);
        assert_eq!(m.conj().get(0, 0), c(1.0, 2.0));
        assert_eq!(m.re().get(0, 0), 1.0);
        assert_eq!(m.im().get(0, 0), -2.0);
    }
}
