//! Sparse LDL^T factorization (up-looking, elimination-tree based).
//!
//! Suitable for symmetric quasi-definite matrices, which factor stably under
//! any symmetric permutation. Saddle-point constraint rows with a zero
//! diagonal must be passed as `delayed` so that they are eliminated last.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::ordering::nested_dissection;
use super::sparse::{norm_inf, CscMatrix};
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Relative pivot threshold below which the matrix is reported singular.
pub const PIVOT_TOLERANCE: f64 = 1e-13;

/// Relative residual every solve must reach (after refinement).
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Elimination ordering, elimination tree and column counts of `L`, shared by
/// every matrix with the same sparsity pattern.
#[derive(Debug, Clone)]
pub struct SymbolicLdl {
    pattern: CscMatrix,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    parent: Vec<usize>,
    l_ptr: Vec<usize>,
}

impl SymbolicLdl {
    /// Analyzes the pattern of a symmetric matrix (both triangles stored).
    pub fn analyze(pattern: &CscMatrix, delayed: &[usize]) -> Result<Self> {
        pattern.check_square()?;
        let perm = nested_dissection(pattern, delayed);
        Self::with_ordering(pattern, perm)
    }

    /// Analysis with a caller-supplied elimination order.
    pub fn with_ordering(pattern: &CscMatrix, perm: Vec<usize>) -> Result<Self> {
        pattern.check_square()?;
        let n = pattern.n_cols;
        if perm.len() != n {
            return Err(Error::Dimension { expected: n, found: perm.len() });
        }
        let mut inv_perm = vec![NONE; n];
        for (k, &p) in perm.iter().enumerate() {
            if p >= n || inv_perm[p] != NONE {
                return Err(Error::Dimension { expected: n, found: p });
            }
            inv_perm[p] = k;
        }
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut counts = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for (row, _) in pattern.column(perm[k]) {
                let mut i = inv_perm[row];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        counts[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut l_ptr = Vec::with_capacity(n + 1);
        l_ptr.push(0);
        for k in 0..n {
            l_ptr.push(l_ptr[k] + counts[k]);
        }
        let mut pattern = pattern.clone();
        pattern.values.iter_mut().for_each(|v| *v = 0.0);
        Ok(Self { pattern, perm, inv_perm, parent, l_ptr })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of strictly-lower nonzeros in `L`.
    pub fn fill(&self) -> usize {
        self.l_ptr[self.dim()]
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn matches(&self, a: &CscMatrix) -> bool {
        self.pattern.same_pattern(a)
    }
}

/// Numeric factor `P A P^T = L D L^T`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    symbolic: Arc<SymbolicLdl>,
    matrix: CscMatrix,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    d: Vec<f64>,
}

impl LdlFactor {
    pub fn factor(symbolic: Arc<SymbolicLdl>, a: &CscMatrix) -> Result<Self> {
        if !symbolic.matches(a) {
            return Err(Error::PatternMismatch);
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("matrix"));
        }
        let n = symbolic.dim();
        let sym = &*symbolic;
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let fill = sym.fill();
        let mut l_idx = vec![0usize; fill];
        let mut l_val = vec![0.0; fill];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![NONE; n];
        let mut l_nz = vec![0usize; n];

        for k in 0..n {
            y[k] = 0.0;
            let mut top = n;
            flag[k] = k;
            for (row, value) in a.column(sym.perm[k]) {
                let mut i = sym.inv_perm[row];
                if i <= k {
                    y[i] += value;
                    let mut len = 0;
                    while flag[i] != k {
                        pattern[len] = i;
                        len += 1;
                        flag[i] = k;
                        i = sym.parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        pattern[top] = pattern[len];
                    }
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let start = sym.l_ptr[i];
                let end = start + l_nz[i];
                for p in start..end {
                    y[l_idx[p]] -= l_val[p] * yi;
                }
                let lki = yi / d[i];
                d[k] -= lki * yi;
                l_idx[end] = k;
                l_val[end] = lki;
                l_nz[i] += 1;
            }
            if !d[k].is_finite() || d[k].abs() <= PIVOT_TOLERANCE * scale {
                return Err(Error::Singular { pivot: sym.perm[k], value: d[k] });
            }
        }
        Ok(Self { symbolic, matrix: a.clone(), l_idx, l_val, d })
    }

    /// Analyze and factor in one go.
    pub fn new(a: &CscMatrix, delayed: &[usize]) -> Result<Self> {
        let symbolic = Arc::new(SymbolicLdl::analyze(a, delayed)?);
        Self::factor(symbolic, a)
    }

    pub fn symbolic(&self) -> &Arc<SymbolicLdl> {
        &self.symbolic
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.d
    }

    /// Number of negative pivots (inertia of the factored matrix).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    fn solve_once(&self, b: &[f64]) -> Vec<f64> {
        let sym = &*self.symbolic;
        let n = self.dim();
        let mut x: Vec<f64> = (0..n).map(|k| b[sym.perm[k]]).collect();
        for j in 0..n {
            let xj = x[j];
            for p in sym.l_ptr[j]..sym.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut xj = x[j];
            for p in sym.l_ptr[j]..sym.l_ptr[j + 1] {
                xj -= self.l_val[p] * x[self.l_idx[p]];
            }
            x[j] = xj;
        }
        let mut out = vec![0.0; n];
        for k in 0..n {
            out[sym.perm[k]] = x[k];
        }
        out
    }

    /// Solves `A x = b` with up to two steps of iterative refinement and
    /// verifies `||A x - b|| <= RESIDUAL_TOLERANCE ||b||` (infinity norms,
    /// measured against `||A|| ||x||` when `b` vanishes).
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::Dimension { expected: n, found: b.len() });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        let b_norm = norm_inf(b);
        if b_norm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x = self.solve_once(b);
        let mut residual = self.residual(&x, b);
        let mut rel = norm_inf(&residual) / b_norm;
        let mut sweeps = 0;
        while rel > 1e-14 && sweeps < 2 {
            let dx = self.solve_once(&residual);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            residual = self.residual(&x, b);
            rel = norm_inf(&residual) / b_norm;
            sweeps += 1;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("solution"));
        }
        if rel > RESIDUAL_TOLERANCE {
            return Err(Error::Residual { residual: rel, tolerance: RESIDUAL_TOLERANCE });
        }
        Ok(x)
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = b.to_vec();
        self.matrix.mul_vec_acc(x, -1.0, &mut r);
        r
    }
}
