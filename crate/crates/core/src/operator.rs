//! Compressed sparse row operators over complex amplitudes.
//!
//! Every operator of the reduced master equation (J components, dipole
//! direction cosines, Raman Hamiltonian, jump operators) couples each
//! rotational state to a handful of neighbours, so they are stored in CSR
//! form. Density matrices and propagators stay dense.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Sparse complex matrix in CSR layout. Rows are sorted by column index and
/// carry no explicit zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOp {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<C64>,
}

impl SparseOp {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseOp { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        Self::from_triplets(
            diag.len(),
            diag.len(),
            diag.iter().enumerate().map(|(i, &d)| (i, i, C64::new(d, 0.0))),
        )
    }

    /// Builds an operator from `(row, col, value)` entries; duplicates are summed.
    pub fn from_triplets<T>(nrows: usize, ncols: usize, triplets: T) -> Self
    where
        T: IntoIterator<Item = (usize, usize, C64)>,
    {
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); nrows];
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut acc = ZERO;
                while k < row.len() && row[k].0 == c {
                    acc += row[k].1;
                    k += 1;
                }
                if acc != ZERO {
                    indices.push(c);
                    data.push(acc);
                }
            }
            indptr.push(indices.len());
        }
        SparseOp { nrows, ncols, indptr, indices, data }
    }

    /// Sparse copy of a dense matrix, dropping entries with modulus `<= drop_below`.
    pub fn from_dense(m: &ArrayView2<C64>, drop_below: f64) -> Self {
        let (nr, nc) = m.dim();
        Self::from_triplets(
            nr,
            nc,
            m.indexed_iter()
                .filter(|(_, v)| v.norm() > drop_below)
                .map(|((r, c), &v)| (r, c, v)),
        )
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Iterates over the stored entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.data[span].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.data[span.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.iter().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn scale(&self, s: C64) -> Self {
        if s == ZERO {
            return Self::zeros(self.nrows, self.ncols);
        }
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Returns `Σ_k coeffs[k] · ops[k]`; all operators must share a shape.
    pub fn linear_combination(terms: &[(C64, &SparseOp)]) -> Self {
        let (nr, nc) = terms.first().map(|(_, op)| (op.nrows, op.ncols)).unwrap_or((0, 0));
        for (_, op) in terms {
            assert_eq!((op.nrows, op.ncols), (nr, nc), "shape mismatch in linear combination");
        }
        Self::from_triplets(
            nr,
            nc,
            terms
                .iter()
                .filter(|(s, _)| *s != ZERO)
                .flat_map(|(s, op)| op.iter().map(move |(r, c, v)| (r, c, *s * v))),
        )
    }

    pub fn add(&self, other: &SparseOp) -> Self {
        Self::linear_combination(&[(ONE, self), (ONE, other)])
    }

    /// Sparse product `self · rhs`.
    pub fn matmul(&self, rhs: &SparseOp) -> Self {
        assert_eq!(self.ncols, rhs.nrows, "inner dimensions differ");
        let mut acc = vec![ZERO; rhs.ncols];
        let mut touched = vec![false; rhs.ncols];
        let mut cols = Vec::new();
        let mut triplets = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if !touched[c] {
                        touched[c] = true;
                        cols.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &cols {
                triplets.push((r, c, acc[c]));
                acc[c] = ZERO;
                touched[c] = false;
            }
            cols.clear();
        }
        Self::from_triplets(self.nrows, rhs.ncols, triplets)
    }

    /// `y = self · x`.
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).fold(ZERO, |s, (c, v)| s + v * x[c]);
        }
    }

    /// Dense product `self · b`, written into `out` (overwritten).
    pub fn mul_dense_into(&self, b: &ArrayView2<C64>, out: &mut Array2<C64>) {
        let (bn, bm) = b.dim();
        assert_eq!(bn, self.ncols);
        assert_eq!(out.dim(), (self.nrows, bm));
        let b = b.as_standard_layout();
        let bs = b.as_slice().expect("standard layout");
        let os = out.as_slice_mut().expect("output must be in standard layout");
        for r in 0..self.nrows {
            let orow = &mut os[r * bm..(r + 1) * bm];
            orow.fill(ZERO);
            for (k, v) in self.row(r) {
                axpy_c64(v, &bs[k * bm..(k + 1) * bm], orow);
            }
        }
    }

    pub fn mul_dense(&self, b: &ArrayView2<C64>) -> Array2<C64> {
        let mut out = Array2::zeros((self.nrows, b.ncols()));
        self.mul_dense_into(b, &mut out);
        out
    }

    /// `⟨x| self |x⟩` for a square operator.
    pub fn expectation(&self, x: &[C64]) -> C64 {
        assert!(self.is_square());
        (0..self.nrows).fold(ZERO, |s, r| {
            s + x[r].conj() * self.row(r).fold(ZERO, |t, (c, v)| t + v * x[c])
        })
    }

    /// `Tr(self · rho)` for a dense `rho`.
    pub fn trace_with(&self, rho: &ArrayView2<C64>) -> C64 {
        self.iter().fold(ZERO, |s, (r, c, v)| s + v * rho[[c, r]])
    }

    /// Induced 1-norm (largest column sum of moduli).
    pub fn norm1(&self) -> f64 {
        let mut cols = vec![0.0; self.ncols];
        for (_, c, v) in self.iter() {
            cols[c] += v.norm();
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    /// Induced ∞-norm (largest row sum of moduli).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest modulus of `self - self†`.
    pub fn hermiticity_residual(&self) -> f64 {
        assert!(self.is_square());
        self.iter().map(|(r, c, v)| (v - self.get(c, r).conj()).norm()).fold(0.0, f64::max)
    }

    /// Sub-block on the given row and column index lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let triplets = rows.iter().enumerate().flat_map(|(nr, &r)| {
            let col_map = &col_map;
            self.row(r).filter_map(move |(c, v)| {
                let nc = col_map[c];
                (nc != usize::MAX).then_some((nr, nc, v))
            })
        });
        Self::from_triplets(rows.len(), cols.len(), triplets.collect::<Vec<_>>())
    }

    pub fn restrict(&self, indices: &[usize]) -> Self {
        self.submatrix(indices, indices)
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }
}

/// `y += a x`, written on the real and imaginary parts separately so the
/// loop vectorizes.
#[inline]
fn axpy_c64(a: C64, x: &[C64], y: &mut [C64]) {
    let (ar, ai) = (a.re, a.im);
    for (o, v) in y.iter_mut().zip(x) {
        let re = o.re + (ar * v.re - ai * v.im);
        let im = o.im + (ar * v.im + ai * v.re);
        *o = C64::new(re, im);
    }
}

/// Writes `m†` into `out`.
pub fn adjoint_into(m: &ArrayView2<C64>, out: &mut Array2<C64>) {
    let (r, c) = m.dim();
    assert_eq!(out.dim(), (c, r));
    for ((i, j), v) in m.indexed_iter() {
        out[[j, i]] = v.conj();
    }
}

/// Largest entry modulus of a dense matrix.
pub fn max_abs(m: &ArrayView2<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Largest modulus of `m - m†`.
pub fn hermiticity_residual(m: &ArrayView2<C64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for c in r..n {
            worst = worst.max((m[[r, c]] - m[[c, r]].conj()).norm());
        }
    }
    worst
}

pub fn adjoint(m: &ArrayView2<C64>) -> Array2<C64> {
    m.t().mapv(|v| v.conj())
}

pub fn trace(m: &ArrayView2<C64>) -> C64 {
    m.diag().iter().copied().fold(ZERO, |a, b| a + b)
}

pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

pub fn normalize(x: &mut [C64]) -> f64 {
    let n = norm_sqr(x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Connected components reachable from `seeds` in the union sparsity graph of
/// `ops`, returned as a sorted index list. An operator entry `(r, c)` lets
/// amplitude flow from `c` to `r`; the closure is taken in both directions so
/// the set is invariant under every operator and its adjoint.
pub fn closure(dim: usize, seeds: impl IntoIterator<Item = usize>, ops: &[&SparseOp]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); dim];
    for op in ops {
        assert_eq!((op.nrows, op.ncols), (dim, dim));
        for (r, c, _) in op.iter() {
            if r != c {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
    }
    let mut seen = vec![false; dim];
    let mut stack: Vec<usize> = seeds.into_iter().collect();
    while let Some(i) = stack.pop() {
        if std::mem::replace(&mut seen[i], true) {
            continue;
        }
        stack.extend(adj[i].iter().copied().filter(|&k| !seen[k]));
    }
    (0..dim).filter(|&i| seen[i]).collect()
}

/// Partition of `0..dim` into the connected components of the sparsity graph.
pub fn components(dim: usize, ops: &[&SparseOp]) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; dim];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for start in 0..dim {
        if label[start] != usize::MAX {
            continue;
        }
        let comp = closure(dim, [start], ops);
        for &i in &comp {
            label[i] = out.len();
        }
        out.push(comp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let op = SparseOp::from_triplets(
            2,
            2,
            [(0, 1, c(1.0, 0.0)), (0, 1, c(2.0, 1.0)), (1, 0, c(1.0, 0.0)), (1, 0, c(-1.0, 0.0))],
        );
        assert_eq!(op.nnz(), 1);
        assert_eq!(op.get(0, 1), c(3.0, 1.0));
        assert_eq!(op.get(1, 0), ZERO);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = array![[c(1.0, 2.0), ZERO, c(0.5, 0.0)], [ZERO, c(0.0, -1.0), c(3.0, 0.0)]];
        let b = array![[c(1.0, 0.0), c(2.0, 0.0)], [c(0.0, 1.0), ZERO], [c(-1.0, 0.0), c(1.0, 1.0)]];
        let sa = SparseOp::from_dense(&a.view(), 0.0);
        let sb = SparseOp::from_dense(&b.view(), 0.0);
        let dense = a.dot(&b);
        assert!(max_abs(&(sa.matmul(&sb).to_dense() - &dense).view()) < 1e-15);
        assert!(max_abs(&(sa.mul_dense(&b.view()) - &dense).view()) < 1e-15);
        let x = vec![c(1.0, -1.0), c(0.0, 2.0), c(0.5, 0.5)];
        let y = sa.mul_vec(&x);
        let yd = a.dot(&ndarray::Array1::from(x));
        for (u, v) in y.iter().zip(yd.iter()) {
            assert!((u - v).norm() < 1e-15);
        }
    }

    #[test]
    fn adjoint_and_restrict() {
        let op = SparseOp::from_triplets(3, 3, [(0, 2, c(1.0, 1.0)), (2, 1, c(0.0, 3.0))]);
        let adj = op.adjoint();
        assert_eq!(adj.get(2, 0), c(1.0, -1.0));
        assert_eq!(adj.get(1, 2), c(0.0, -3.0));
        let sub = op.restrict(&[0, 2]);
        assert_eq!(sub.nrows(), 2);
        assert_eq!(sub.get(0, 1), c(1.0, 1.0));
        assert_eq!(sub.nnz(), 1);
    }

    #[test]
    fn closure_follows_both_directions() {
        let op = SparseOp::from_triplets(5, 5, [(1, 0, ONE), (3, 1, ONE)]);
        assert_eq!(closure(5, [3], &[&op]), vec![0, 1, 3]);
        let comps = components(5, &[&op]);
        assert_eq!(comps, vec![vec![0, 1, 3], vec![2], vec![4]]);
    }
}
