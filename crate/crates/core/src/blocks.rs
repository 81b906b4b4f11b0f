//! Helpers for dense matrices organized in equal-size blocks.

use nalgebra::{DMatrix, DVector, DVectorView};

/// Stacks equally sized vectors into one column.
pub(crate) fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    let d = parts.first().map_or(0, |v| v.len());
    let mut out = DVector::zeros(d * parts.len());
    for (i, v) in parts.iter().enumerate() {
        out.rows_mut(i * d, d).copy_from(v);
    }
    out
}

/// Stacks `weights[i] * parts[i]`.
pub(crate) fn stack_weighted(parts: &[DVector<f64>], weights: &[f64]) -> DVector<f64> {
    let d = parts.first().map_or(0, |v| v.len());
    let mut out = DVector::zeros(d * parts.len());
    for (i, (v, w)) in parts.iter().zip(weights).enumerate() {
        out.rows_mut(i * d, d).copy_from(&(v * *w));
    }
    out
}

pub(crate) fn unstack(v: &DVector<f64>, d: usize) -> Vec<DVector<f64>> {
    (0..v.len() / d).map(|i| v.rows(i * d, d).into_owned()).collect()
}

pub(crate) fn segment(v: &DVector<f64>, i: usize, d: usize) -> DVectorView<'_, f64> {
    v.rows(i * d, d)
}

/// Block `(i, j)` of size `r x c`, copied out.
pub(crate) fn block(m: &DMatrix<f64>, i: usize, j: usize, r: usize, c: usize) -> DMatrix<f64> {
    m.view((i * r, j * c), (r, c)).into_owned()
}

pub(crate) fn set_block(m: &mut DMatrix<f64>, i: usize, j: usize, value: &DMatrix<f64>) {
    let (r, c) = value.shape();
    m.view_mut((i * r, j * c), (r, c)).copy_from(value);
}

/// Multiplies block column `j` (width `c`) by `weights[j]`.
pub(crate) fn scale_block_columns(m: &DMatrix<f64>, c: usize, weights: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, w) in weights.iter().enumerate() {
        let mut col = out.columns_mut(j * c, c);
        col *= *w;
    }
    out
}

/// Block-diagonal matrix with `count` copies of `m`.
pub(crate) fn block_diagonal(m: &DMatrix<f64>, count: usize) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(r * count, c * count);
    for i in 0..count {
        set_block(&mut out, i, i, m);
    }
    out
}

/// Largest Frobenius norm among the `r x c` blocks.
pub(crate) fn max_block_norm(m: &DMatrix<f64>, r: usize, c: usize) -> f64 {
    let mut best = 0.0f64;
    for i in 0..m.nrows() / r {
        for j in 0..m.ncols() / c {
            best = best.max(m.view((i * r, j * c), (r, c)).norm());
        }
    }
    best
}
