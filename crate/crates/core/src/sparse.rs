//! Symmetric sparse matrices in CSR form, used for normalized adjacencies.
//!
//! A time step of the transaction graph has a few thousand nodes but the
//! full dataset has two hundred thousand, so adjacencies are never
//! materialized densely outside of tests.

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rayon::prelude::*;

/// Symmetric sparse matrix, CSR layout, both triangles stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSym<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

/// Nonzero threshold for running `spmm` row-parallel.
const PAR_NNZ_THRESHOLD: usize = 1 << 16;

impl<T: Scalar> SparseSym<T> {
    /// Build the normalized adjacency `D^{-1/2} (A + I) D^{-1/2}` of an
    /// undirected graph on `n` nodes. `edges` may contain duplicates,
    /// reversed copies, and self-loops; each unordered pair contributes a
    /// single unit entry to `A`, and the identity is added on top.
    pub fn normalized_adjacency(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::shape(
                    "normalized_adjacency",
                    format!("edge ({u}, {v}) out of range for {n} nodes"),
                ));
            }
        }
        // Dedup into adjacency sets, both directions, plus the self-loop.
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u == v {
                continue;
            }
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for (i, adj) in neighbors.iter_mut().enumerate() {
            adj.push(i);
            adj.sort_unstable();
            adj.dedup();
        }
        // Degrees of A + I; each entry becomes 1/sqrt(d_u·d_v).
        let degree: Vec<T> = neighbors.iter().map(|a| T::from_usize(a.len())).collect();
        let nnz: usize = neighbors.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (u, adj) in neighbors.iter().enumerate() {
            for &v in adj {
                col_idx.push(v);
                values.push(T::one() / (degree[u] * degree[v]).sqrt());
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { n, row_ptr, col_idx, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => T::zero(),
        }
    }

    /// `self · x` for dense `x`; deterministic for any thread count
    /// because each output row is accumulated sequentially.
    pub fn spmm(&self, x: &Dense<T>) -> Result<Dense<T>> {
        if x.rows() != self.n {
            return Err(Error::shape(
                "spmm",
                format!("{0}x{0} · {1}x{2}", self.n, x.rows(), x.cols()),
            ));
        }
        let cols = x.cols();
        let mut out = Dense::zeros(self.n, cols);
        let body = |i: usize, out_row: &mut [T]| {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[k];
                let src = x.row(self.col_idx[k]);
                for (o, &v) in out_row.iter_mut().zip(src) {
                    *o += a * v;
                }
            }
        };
        if self.nnz() * cols >= PAR_NNZ_THRESHOLD {
            out.data_mut()
                .par_chunks_mut(cols)
                .enumerate()
                .for_each(|(i, row)| body(i, row));
        } else {
            for (i, row) in out.data_mut().chunks_mut(cols).enumerate() {
                body(i, row);
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Dense<T> {
        let mut out = Dense::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.set(i, self.col_idx[k], self.values[k]);
            }
        }
        out
    }

    /// Row iteration as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .zip(&self.values[lo..hi])
            .map(|(&c, &v)| (c, v))
    }

    /// Raw CSR views `(row_ptr, col_idx, values)`, for serialization.
    pub fn csr(&self) -> (&[usize], &[usize], &[T]) {
        (&self.row_ptr, &self.col_idx, &self.values)
    }

    /// Rebuilds a matrix from raw CSR parts, checking the structural
    /// invariants the accessors rely on: monotone row pointers, sorted
    /// column indices within each row, and bit-exact symmetry.
    pub fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        let fail = |detail: String| Err(Error::shape("from_csr", detail));
        if row_ptr.len() != n + 1 {
            return fail(format!("{} row pointers for {n} rows", row_ptr.len()));
        }
        if row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return fail("row pointers must start at 0 and end at nnz".into());
        }
        if col_idx.len() != values.len() {
            return fail(format!(
                "{} column indices for {} values",
                col_idx.len(),
                values.len()
            ));
        }
        for i in 0..n {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            if lo > hi {
                return fail(format!("row {i} has negative extent"));
            }
            let row = &col_idx[lo..hi];
            if row.iter().any(|&j| j >= n) {
                return fail(format!("row {i} has a column out of range"));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return fail(format!("row {i} columns are not strictly increasing"));
            }
        }
        let m = Self { n, row_ptr, col_idx, values };
        for i in 0..n {
            for (j, v) in m.row(i) {
                if m.get(j, i) != v {
                    return Err(Error::shape(
                        "from_csr",
                        format!("entry ({i}, {j}) breaks symmetry"),
                    ));
                }
            }
        }
        Ok(m)
    }
}
