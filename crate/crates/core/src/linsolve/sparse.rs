use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Coordinate-format accumulator. Duplicate entries are summed on compression.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl Triplets {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, ..Default::default() }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, capacity: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            rows: Vec::with_capacity(capacity),
            cols: Vec::with_capacity(capacity),
            values: Vec::with_capacity(capacity),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Adds `value` at `(row, col)`. Explicit zeros are kept so that matrices
    /// assembled with different coefficients share one sparsity pattern.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.rows.push(row);
        self.cols.push(col);
        self.values.push(value);
    }

    /// Appends every entry of `other`, shifted by the given offsets.
    pub fn extend_shifted(&mut self, other: &Triplets, row_offset: usize, col_offset: usize) {
        for k in 0..other.len() {
            self.push(other.rows[k] + row_offset, other.cols[k] + col_offset, other.values[k]);
        }
    }

    /// Appends the transpose of `other`, scaled and shifted.
    pub fn extend_transposed(&mut self, other: &Triplets, row_offset: usize, col_offset: usize, scale: f64) {
        for k in 0..other.len() {
            self.push(other.cols[k] + row_offset, other.rows[k] + col_offset, scale * other.values[k]);
        }
    }

    /// Appends `scale * other`, shifted.
    pub fn extend_scaled(&mut self, other: &Triplets, row_offset: usize, col_offset: usize, scale: f64) {
        for k in 0..other.len() {
            self.push(other.rows[k] + row_offset, other.cols[k] + col_offset, scale * other.values[k]);
        }
    }

    /// Appends every stored entry of `m` (explicit zeros included), scaled and shifted.
    pub fn extend_csc(&mut self, m: &CscMatrix, row_offset: usize, col_offset: usize, scale: f64) {
        for j in 0..m.n_cols {
            for (i, v) in m.column(j) {
                self.push(i + row_offset, j + col_offset, scale * v);
            }
        }
    }

    /// Appends the transpose of `m`, scaled and shifted.
    pub fn extend_csc_transposed(&mut self, m: &CscMatrix, row_offset: usize, col_offset: usize, scale: f64) {
        for j in 0..m.n_cols {
            for (i, v) in m.column(j) {
                self.push(j + row_offset, i + col_offset, scale * v);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.len()).map(move |k| (self.rows[k], self.cols[k], self.values[k]))
    }

    /// Compresses to CSC with sorted row indices. The result does not depend on
    /// the order in which entries were pushed.
    pub fn to_csc(&self) -> CscMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.cols {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut order = vec![0usize; self.len()];
        for k in 0..self.len() {
            let c = self.cols[k];
            order[next[c]] = k;
            next[c] += 1;
        }
        let mut col_ptr = Vec::with_capacity(self.n_cols + 1);
        let mut row_idx = Vec::with_capacity(self.len());
        let mut values = Vec::with_capacity(self.len());
        col_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for j in 0..self.n_cols {
            scratch.clear();
            scratch.extend(order[counts[j]..counts[j + 1]].iter().map(|&k| (self.rows[k], self.values[k])));
            scratch.sort_by_key(|&(r, _)| r);
            let mut last = usize::MAX;
            for &(r, v) in scratch.iter() {
                if r == last {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                    last = r;
                }
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix { n_rows: self.n_rows, n_cols: self.n_cols, col_ptr, row_idx, values }
    }
}

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn identity(n: usize) -> Self {
        Self { n_rows: n, n_cols: n, col_ptr: (0..=n).collect(), row_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn same_pattern(&self, other: &CscMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.col_ptr == other.col_ptr
            && self.row_idx == other.row_idx
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        match self.row_idx[range.clone()].binary_search(&row) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_acc(x, 1.0, &mut y);
        y
    }

    /// `y += alpha A x`
    pub fn mul_vec_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (i, a) in self.column(j) {
                y[i] += alpha * a * xj;
            }
        }
    }

    /// `y = A^T x`
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows);
        (0..self.n_cols).map(|j| self.column(j).map(|(i, a)| a * x[i]).sum()).collect()
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut t = Triplets::with_capacity(self.n_cols, self.n_rows, self.nnz());
        for j in 0..self.n_cols {
            for (i, a) in self.column(j) {
                t.push(j, i, a);
            }
        }
        t.to_csc()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Structural and numerical symmetry within `tol` (absolute).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        (0..self.n_cols).all(|j| self.column(j).all(|(i, a)| (self.get(j, i) - a).abs() <= tol))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for j in 0..self.n_cols {
            for (i, a) in self.column(j) {
                d[i][j] += a;
            }
        }
        d
    }

    /// Extracts the submatrix with the given rows and columns. `row_map[i]` is
    /// the new index of row `i` (or `usize::MAX` to drop it), likewise for columns.
    pub fn select(&self, row_map: &[usize], n_rows: usize, col_map: &[usize], n_cols: usize) -> CscMatrix {
        let mut t = Triplets::new(n_rows, n_cols);
        for j in 0..self.n_cols {
            let cj = col_map[j];
            if cj == usize::MAX {
                continue;
            }
            for (i, a) in self.column(j) {
                let ri = row_map[i];
                if ri != usize::MAX {
                    t.push(ri, cj, a);
                }
            }
        }
        t.to_csc()
    }

    pub(crate) fn check_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::Dimension { expected: self.n_rows, found: self.n_cols })
        }
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}
