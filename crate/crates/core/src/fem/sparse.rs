//! Compressed sparse row matrices for the assembled systems.

use crate::util::fmt_e17;
use crate::{Error, Result};
use nalgebra::DMatrix;
use std::collections::HashMap;

/// Sparse matrix in CSR layout with a structurally symmetric pattern.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Triplet accumulator; duplicate entries are summed on build.
pub struct CooBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        CooBuilder { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Accumulates duplicates and drops an entry only when both it and its
    /// transpose partner are exactly zero, keeping the pattern structurally
    /// symmetric without storing gratuitous zeros.
    pub fn build(self) -> SparseMatrix {
        let mut accumulated: HashMap<(usize, usize), f64> = HashMap::new();
        for (i, j, v) in self.entries {
            *accumulated.entry((i, j)).or_insert(0.0) += v;
        }
        let mut keys: Vec<(usize, usize)> = accumulated
            .iter()
            .filter(|(&(i, j), &v)| {
                v != 0.0 || accumulated.get(&(j, i)).copied().unwrap_or(0.0) != 0.0
            })
            .map(|(&k, _)| k)
            .collect();
        keys.sort_unstable();
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(keys.len());
        let mut values = Vec::with_capacity(keys.len());
        for &(i, j) in &keys {
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(accumulated[&(i, j)]);
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }
}

impl SparseMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch(format!(
                "matvec: vector length {} vs {} columns",
                x.len(),
                self.ncols
            )));
        }
        let mut y = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            y[i] = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
        Ok(y)
    }

    /// Quadratic form `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        let y = self.matvec(x)?;
        Ok(x.iter().zip(&y).map(|(a, b)| a * b).sum())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Extracts the square submatrix on the given index subset.
    pub fn restrict(&self, indices: &[usize]) -> SparseMatrix {
        let mut position = vec![usize::MAX; self.ncols];
        for (k, &i) in indices.iter().enumerate() {
            position[i] = k;
        }
        let mut builder = CooBuilder::new(indices.len(), indices.len());
        for (k, &i) in indices.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if position[j] != usize::MAX {
                    builder.push(k, position[j], v);
                }
            }
        }
        builder.build()
    }

    /// Maximum absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Coordinate text export: one `row col value` triple per line,
    /// zero-based, sorted by (row, col), 17 significant digits.
    pub fn write_coo(&self, out: &mut impl std::io::Write) -> Result<()> {
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(out, "{i} {j} {}", fmt_e17(v))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_accumulates_and_sorts() {
        let mut b = CooBuilder::new(3, 3);
        b.push(1, 2, 0.5);
        b.push(0, 0, 1.0);
        b.push(1, 2, 0.25);
        b.push(2, 1, -1.0);
        let m = b.build();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 2), 0.75);
        assert_eq!(m.get(2, 1), -1.0);
        assert_eq!(m.get(0, 1), 0.0);
        let y = m.matvec(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.25, -2.0]);
    }

    #[test]
    fn zero_entry_kept_when_transpose_partner_is_nonzero() {
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 1, 0.0);
        b.push(1, 0, 2.0);
        b.push(0, 0, 0.0); // dropped: no partner
        let m = b.build();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 0.0);
        let (cols, _) = m.row(0);
        assert_eq!(cols, &[1]);
    }

    #[test]
    fn coo_export_is_sorted_with_17_digits() {
        let mut b = CooBuilder::new(2, 2);
        b.push(1, 0, 0.25);
        b.push(0, 1, -3.0);
        let m = b.build();
        let mut buf = Vec::new();
        m.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "0 1 -3.0000000000000000e0\n1 0 2.5000000000000000e-1\n");
    }
}
