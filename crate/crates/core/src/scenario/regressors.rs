//! Real-valued network inputs and labels, and max-magnitude normalization.

use std::ops::{Div, Mul, Range};

use ndarray::{Array2, ArrayView1};
use num_complex::Complex64;

use super::CliDataset;
use crate::error::{invalid, Error, Result};
use crate::signal::ComplexSequence;

/// Sliding windows over the transmit streams.
///
/// Row `i` is the window ending at sample `first_index + i`, laid out
/// antenna-major:
/// `[Re d_1[n], Im d_1[n], Re d_1[n-1], Im d_1[n-1], ..., Re d_Na[n-depth+1], Im d_Na[n-depth+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressors {
    pub depth: usize,
    pub first_index: usize,
    pub data: Array2<f64>,
}

impl Regressors {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn window(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }
}

/// Windows for label indices in `rows`, every entry divided by `scale`.
pub fn regressor_matrix(
    tx: &[ComplexSequence],
    depth: usize,
    rows: Range<usize>,
    scale: f64,
) -> Result<Array2<f64>> {
    if depth == 0 {
        return Err(invalid("depth", "must be at least 1"));
    }
    let n = crate::signal::common_length(tx)?;
    if rows.start + 1 < depth || rows.end > n || rows.start > rows.end {
        return Err(Error::Dimension(format!(
            "rows {rows:?} need {depth}-sample history inside {n} samples"
        )));
    }
    let width = 2 * tx.len() * depth;
    let mut out = Array2::<f64>::zeros((rows.len(), width));
    for (i, n) in rows.enumerate() {
        let mut row = out.row_mut(i);
        let mut col = 0;
        for stream in tx {
            for m in 0..depth {
                let v = stream[n - m] / scale;
                row[col] = v.re;
                row[col + 1] = v.im;
                col += 2;
            }
        }
    }
    Ok(out)
}

/// One window per sample index `n >= depth - 1`.
pub fn build_regressors(ds: &CliDataset, depth: usize) -> Result<Regressors> {
    if depth == 0 {
        return Err(invalid("depth", "must be at least 1"));
    }
    if depth > ds.n_samples() {
        return Err(invalid(
            "depth",
            format!("{depth} exceeds the {} available samples", ds.n_samples()),
        ));
    }
    let data = regressor_matrix(&ds.tx, depth, depth - 1..ds.n_samples(), 1.0)?;
    Ok(Regressors {
        depth,
        first_index: depth - 1,
        data,
    })
}

/// Label rows `[Re s_1[n], Im s_1[n], ..., Re s_N0[n], Im s_N0[n]]` divided by `scale`.
pub fn label_matrix(rx: &[ComplexSequence], rows: Range<usize>, scale: f64) -> Result<Array2<f64>> {
    let n = crate::signal::common_length(rx)?;
    if rows.end > n || rows.start > rows.end {
        return Err(Error::Dimension(format!("rows {rows:?} outside {n} samples")));
    }
    let mut out = Array2::<f64>::zeros((rows.len(), 2 * rx.len()));
    for (i, n) in rows.enumerate() {
        for (r, stream) in rx.iter().enumerate() {
            let v = stream[n] / scale;
            out[[i, 2 * r]] = v.re;
            out[[i, 2 * r + 1]] = v.im;
        }
    }
    Ok(out)
}

/// Inverse of [`label_matrix`]: rows back to per-antenna streams, times `scale`.
pub fn streams_from_labels(labels: &Array2<f64>, scale: f64) -> Vec<ComplexSequence> {
    let n_rx = labels.ncols() / 2;
    (0..n_rx)
        .map(|r| {
            labels
                .rows()
                .into_iter()
                .map(|row| Complex64::new(row[2 * r], row[2 * r + 1]) * scale)
                .collect()
        })
        .collect()
}

fn check_scale(m: f64) -> Result<()> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(invalid("m", format!("normalization constant must be positive, got {m}")))
    }
}

/// `x / m`.
pub fn normalize<T>(x: &[T], m: f64) -> Result<Vec<T>>
where
    T: Copy + Div<f64, Output = T>,
{
    check_scale(m)?;
    Ok(x.iter().map(|&v| v / m).collect())
}

/// `m * y`.
pub fn denormalize<T>(y: &[T], m: f64) -> Result<Vec<T>>
where
    T: Copy + Mul<f64, Output = T>,
{
    check_scale(m)?;
    Ok(y.iter().map(|&v| v * m).collect())
}
