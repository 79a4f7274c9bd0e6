//! Small helpers for probability vectors and tables.

use nalgebra::{DMatrix, DVector};

/// Entries below this are clamped when a value is used as a divisor.
pub const FLOOR: f64 = 1e-300;

/// Scales `v` to sum 1 and returns the previous sum. A zero vector is left
/// untouched.
pub fn normalize(v: &mut DVector<f64>) -> f64 {
    let total = v.sum();
    if total > 0.0 && total.is_finite() {
        *v /= total;
    }
    total
}

/// Normalizes and clamps every entry to at least [`FLOOR`].
pub fn normalize_floored(v: &mut DVector<f64>) {
    normalize(v);
    v.apply(|x| *x = x.max(FLOOR));
}

pub fn normalize_matrix(m: &mut DMatrix<f64>) -> f64 {
    let total = m.sum();
    if total > 0.0 && total.is_finite() {
        *m /= total;
    }
    total
}

/// Rescales each row of `m` to sum 1; rows with zero mass are left as-is.
pub fn normalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let total = row.sum();
        if total > 0.0 && total.is_finite() {
            row /= total;
        }
    }
}

pub fn uniform(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0 / n as f64)
}

pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `Σ x ln x` with `0 ln 0 = 0`.
pub fn neg_entropy<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    values
        .into_iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum()
}

/// Column sums of a matrix, as a column vector.
pub fn col_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

/// Row sums of a matrix, as a column vector.
pub fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()))
}

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
