//! Polynomial (PC) and linear (TC) cancellers.
//!
//! The CLI at receive antenna `n0` is modelled as
//! `s[n] = sum_{tx} sum_{p odd} sum_{q=0..=p} sum_{m<depth} w[tx,p,q,m] * Phi(d_tx[n-m], p, q)`
//! with `Phi(x, p, q) = x^q (x*)^(p-q)`. TC keeps only `(p, q) = (1, 1)`.

use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::container::{self, Magic, PayloadReader, PayloadWriter};
use crate::error::{invalid, Error, FormatError, Result};
use crate::signal::{common_length, energy, ComplexSequence};

/// One column of the basis matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisTerm {
    pub tx: usize,
    pub p: usize,
    pub q: usize,
    pub lag: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    order: usize,
    depth: usize,
    n_tx: usize,
    linear_only: bool,
}

impl BasisSpec {
    /// Full basis of odd orders up to `order`.
    pub fn new(order: usize, depth: usize, n_tx: usize) -> Result<Self> {
        if order == 0 || order.is_multiple_of(2) {
            return Err(invalid("order", format!("must be odd and positive, got {order}")));
        }
        if depth == 0 || n_tx == 0 {
            return Err(invalid("depth", "depth and transmit antenna count must be positive"));
        }
        Ok(Self {
            order,
            depth,
            n_tx,
            linear_only: false,
        })
    }

    /// Only the `(p, q) = (1, 1)` terms: a plain FIR channel estimate.
    pub fn linear(depth: usize, n_tx: usize) -> Result<Self> {
        Ok(Self {
            linear_only: true,
            ..Self::new(1, depth, n_tx)?
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn is_linear_only(&self) -> bool {
        self.linear_only
    }

    /// `(p, q)` pairs in column order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        if self.linear_only {
            return vec![(1, 1)];
        }
        (1..=self.order)
            .step_by(2)
            .flat_map(|p| (0..=p).map(move |q| (p, q)))
            .collect()
    }

    /// Columns ordered by transmit antenna, then `(p, q)`, then lag.
    pub fn terms(&self) -> Vec<BasisTerm> {
        let pairs = self.pairs();
        let mut out = Vec::with_capacity(self.n_terms());
        for tx in 0..self.n_tx {
            for &(p, q) in &pairs {
                for lag in 0..self.depth {
                    out.push(BasisTerm { tx, p, q, lag });
                }
            }
        }
        out
    }

    /// Complex coefficients per receive antenna.
    pub fn n_terms(&self) -> usize {
        self.n_tx * self.depth * self.pairs().len()
    }
}

fn phi(x: Complex64, p: usize, q: usize) -> Complex64 {
    x.powu(q as u32) * x.conj().powu((p - q) as u32)
}

/// `x^q (x*)^(p-q)`.
pub fn basis_phi(x: Complex64, p: usize, q: usize) -> Result<Complex64> {
    if q > p {
        return Err(invalid("q", format!("q = {q} exceeds p = {p}")));
    }
    Ok(phi(x, p, q))
}

/// Per-sample basis values `Phi(d[n], p, q)` for every pair of `spec`,
/// laid out `[pair][n]`.
fn phi_table(stream: &[Complex64], spec: &BasisSpec, span: Range<usize>) -> Vec<Vec<Complex64>> {
    spec.pairs()
        .into_iter()
        .map(|(p, q)| stream[span.clone()].iter().map(|&x| phi(x, p, q)).collect())
        .collect()
}

fn check_rows(d: &[ComplexSequence], spec: &BasisSpec, rows: &Range<usize>) -> Result<usize> {
    if d.len() != spec.n_tx {
        return Err(Error::Dimension(format!(
            "basis expects {} transmit streams, got {}",
            spec.n_tx,
            d.len()
        )));
    }
    let n = common_length(d)?;
    if rows.start + 1 < spec.depth || rows.end > n || rows.start > rows.end {
        return Err(Error::Dimension(format!(
            "rows {rows:?} need {}-sample history inside {n} samples",
            spec.depth
        )));
    }
    Ok(n)
}

/// Basis matrix for label indices `rows`; entry `(i, term)` is
/// `Phi(d_tx[rows.start + i - lag], p, q)`.
pub fn build_basis_matrix_rows(
    d: &[ComplexSequence],
    spec: &BasisSpec,
    rows: Range<usize>,
) -> Result<DMatrix<Complex64>> {
    check_rows(d, spec, &rows)?;
    let span = rows.start + 1 - spec.depth..rows.end;
    let n_pairs = spec.pairs().len();
    let mut out = DMatrix::<Complex64>::zeros(rows.len(), spec.n_terms());
    let mut col = 0;
    for stream in d {
        let table = phi_table(stream, spec, span.clone());
        for values in table.iter().take(n_pairs) {
            for lag in 0..spec.depth {
                let offset = spec.depth - 1 - lag;
                out.column_mut(col)
                    .iter_mut()
                    .zip(&values[offset..offset + rows.len()])
                    .for_each(|(o, v)| *o = *v);
                col += 1;
            }
        }
    }
    Ok(out)
}

/// Basis matrix over every sample with a full history window.
pub fn build_basis_matrix(d: &[ComplexSequence], spec: &BasisSpec) -> Result<DMatrix<Complex64>> {
    let n = common_length(d)?;
    if n < spec.depth {
        return Err(Error::Dimension(format!(
            "{n} samples are shorter than the basis depth {}",
            spec.depth
        )));
    }
    build_basis_matrix_rows(d, spec, spec.depth - 1..n)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LsOptions {
    /// Tikhonov weight applied to the column-equilibrated problem.
    pub ridge: f64,
}

#[derive(Debug, Clone)]
pub struct LsSolution {
    /// One coefficient vector per right-hand side.
    pub coefficients: Vec<Vec<Complex64>>,
    /// `||A w - y|| / ||y||` per right-hand side (zero for a zero label).
    pub relative_residual: Vec<f64>,
    /// Ratio of the largest to the smallest `|R_ii|` after equilibration.
    pub condition_estimate: f64,
}

/// Least squares via Householder QR of the column-equilibrated basis; all
/// right-hand sides share the factorization.
pub fn ls_fit(basis: DMatrix<Complex64>, labels: &[ComplexSequence], opts: LsOptions) -> Result<LsSolution> {
    let (rows, cols) = basis.shape();
    if cols == 0 {
        return Err(Error::Dimension("basis has no columns".into()));
    }
    if rows < cols {
        return Err(Error::Dimension(format!(
            "underdetermined fit: {rows} rows for {cols} unknowns"
        )));
    }
    if let Some(bad) = labels.iter().find(|l| l.len() != rows) {
        return Err(Error::Dimension(format!(
            "label has {} samples, basis has {rows} rows",
            bad.len()
        )));
    }
    if !(opts.ridge >= 0.0 && opts.ridge.is_finite()) {
        return Err(invalid("ridge", "must be finite and non-negative"));
    }

    let norms: Vec<f64> = basis.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|&n| !(n > 0.0) || !n.is_finite()) {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    let extra = if opts.ridge > 0.0 { cols } else { 0 };
    let mut a = DMatrix::<Complex64>::zeros(rows + extra, cols);
    for (j, col) in basis.column_iter().enumerate() {
        let inv = 1.0 / norms[j];
        a.view_mut((0, j), (rows, 1))
            .iter_mut()
            .zip(col.iter())
            .for_each(|(o, v)| *o = v * inv);
        if extra > 0 {
            a[(rows + j, j)] = Complex64::new(opts.ridge.sqrt(), 0.0);
        }
    }
    drop(basis);

    let mut b = DMatrix::<Complex64>::zeros(rows + extra, labels.len());
    for (k, l) in labels.iter().enumerate() {
        b.view_mut((0, k), (rows, 1))
            .iter_mut()
            .zip(l)
            .for_each(|(o, v)| *o = *v);
    }

    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..cols).map(|i| r[(i, i)].norm()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = max / min;
    let tol = max * (rows.max(cols) as f64) * f64::EPSILON;
    if !(min > tol) {
        return Err(Error::Singular { condition });
    }

    qr.q_tr_mul(&mut b);
    let head = b.rows(0, cols).into_owned();
    let x = r
        .solve_upper_triangular(&head)
        .ok_or(Error::Singular { condition })?;

    let mut coefficients = Vec::with_capacity(labels.len());
    let mut relative_residual = Vec::with_capacity(labels.len());
    for (k, label) in labels.iter().enumerate() {
        coefficients.push(
            x.column(k)
                .iter()
                .zip(&norms)
                .map(|(v, n)| v / *n)
                .collect(),
        );
        let tail = b.view((cols, k), (rows + extra - cols, 1)).norm();
        let scale = energy(label).sqrt();
        relative_residual.push(if scale > 0.0 { tail / scale } else { 0.0 });
    }
    Ok(LsSolution {
        coefficients,
        relative_residual,
        condition_estimate: condition,
    })
}

/// Estimated coefficients for every receive antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoefficients {
    pub spec: BasisSpec,
    /// `omega[n0][term]`, terms ordered as [`BasisSpec::terms`].
    pub omega: Vec<Vec<Complex64>>,
}

impl PolyCoefficients {
    pub fn new(spec: BasisSpec, omega: Vec<Vec<Complex64>>) -> Result<Self> {
        if omega.is_empty() || omega.iter().any(|w| w.len() != spec.n_terms()) {
            return Err(Error::Dimension(format!(
                "each receive antenna needs {} coefficients",
                spec.n_terms()
            )));
        }
        Ok(Self { spec, omega })
    }

    pub fn zeros(spec: BasisSpec, n_rx: usize) -> Self {
        Self {
            spec,
            omega: vec![vec![Complex64::default(); spec.n_terms()]; n_rx],
        }
    }

    pub fn n_rx(&self) -> usize {
        self.omega.len()
    }

    /// Coefficient of `term` at receive antenna `rx`.
    pub fn get(&self, rx: usize, term: BasisTerm) -> Complex64 {
        let pairs = self.spec.pairs();
        let pair = pairs
            .iter()
            .position(|&pq| pq == (term.p, term.q))
            .expect("term belongs to the basis");
        let col = (term.tx * pairs.len() + pair) * self.spec.depth + term.lag;
        self.omega[rx][col]
    }
}

/// Diagnostics of a fit alongside the coefficients.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub coefficients: PolyCoefficients,
    pub relative_residual: Vec<f64>,
    pub condition_estimate: f64,
}

/// Fits `spec` to the labels at indices `rows`.
pub fn fit(
    d: &[ComplexSequence],
    labels: &[ComplexSequence],
    spec: &BasisSpec,
    rows: Range<usize>,
    opts: LsOptions,
) -> Result<FitReport> {
    let basis = build_basis_matrix_rows(d, spec, rows.clone())?;
    if let Some(bad) = labels.iter().find(|l| l.len() < rows.end) {
        return Err(Error::Dimension(format!(
            "label of {} samples does not cover rows {rows:?}",
            bad.len()
        )));
    }
    let targets: Vec<ComplexSequence> = labels.iter().map(|l| l[rows.clone()].to_vec()).collect();
    let sol = ls_fit(basis, &targets, opts)?;
    Ok(FitReport {
        coefficients: PolyCoefficients::new(*spec, sol.coefficients)?,
        relative_residual: sol.relative_residual,
        condition_estimate: sol.condition_estimate,
    })
}

/// Linear-only fit with window `depth`.
pub fn tc_fit(
    d: &[ComplexSequence],
    labels: &[ComplexSequence],
    depth: usize,
    rows: Range<usize>,
    opts: LsOptions,
) -> Result<FitReport> {
    let spec = BasisSpec::linear(depth, d.len())?;
    fit(d, labels, &spec, rows, opts)
}

/// Reconstructed CLI at indices `rows`, one stream per receive antenna.
pub fn reconstruct(
    coeffs: &PolyCoefficients,
    d: &[ComplexSequence],
    rows: Range<usize>,
) -> Result<Vec<ComplexSequence>> {
    let spec = &coeffs.spec;
    check_rows(d, spec, &rows)?;
    let span = rows.start + 1 - spec.depth..rows.end;
    let n_pairs = spec.pairs().len();
    let mut out = vec![vec![Complex64::default(); rows.len()]; coeffs.n_rx()];
    for (tx, stream) in d.iter().enumerate() {
        let table = phi_table(stream, spec, span.clone());
        for (pair, values) in table.iter().enumerate() {
            for lag in 0..spec.depth {
                let col = (tx * n_pairs + pair) * spec.depth + lag;
                let offset = spec.depth - 1 - lag;
                let src = &values[offset..offset + rows.len()];
                for (acc, omega) in out.iter_mut().zip(&coeffs.omega) {
                    let w = omega[col];
                    if w == Complex64::default() {
                        continue;
                    }
                    acc.iter_mut().zip(src).for_each(|(a, v)| *a += w * v);
                }
            }
        }
    }
    Ok(out)
}

fn check_odd(order: u64) -> Result<()> {
    if order % 2 == 1 {
        Ok(())
    } else {
        Err(invalid("order", format!("must be odd, got {order}")))
    }
}

/// Real-valued parameters of PC: `N0 Na (M+L) (P+1)(P+3) / 2`.
pub fn count_params_pc(n_rx: u64, n_tx: u64, memory: u64, taps: u64, order: u64) -> Result<u64> {
    check_odd(order)?;
    let overflow = || Error::Overflow("PC parameter count");
    let bracket = (order + 1).checked_mul(order + 3).ok_or_else(overflow)? / 2;
    n_rx.checked_mul(n_tx)
        .and_then(|v| v.checked_mul(memory + taps))
        .and_then(|v| v.checked_mul(bracket))
        .ok_or_else(overflow)
}

/// Real additions and multiplications to reconstruct with PC:
/// `N0 Na (M+L) [((35P+33) 6^(P+2) + 12) / 35^2 + (P+1)(P+3)/2] - 2 N0`,
/// evaluated in exact rational arithmetic and rounded to the nearest integer.
pub fn count_complexity_pc(n_rx: u64, n_tx: u64, memory: u64, taps: u64, order: u64) -> Result<u64> {
    check_odd(order)?;
    let overflow = || Error::Overflow("PC complexity count");
    let order = u128::from(order);
    let exponent = u32::try_from(order + 2).map_err(|_| overflow())?;
    let power = 6u128.checked_pow(exponent).ok_or_else(overflow)?;
    const DEN: u128 = 35 * 35;
    // Bracket as a fraction over 35^2.
    let numerator = (35 * order + 33)
        .checked_mul(power)
        .and_then(|v| v.checked_add(12))
        .and_then(|v| v.checked_add(DEN * ((order + 1) * (order + 3) / 2)))
        .ok_or_else(overflow)?;
    let scale = u128::from(n_rx) * u128::from(n_tx) * u128::from(memory + taps);
    let total = numerator.checked_mul(scale).ok_or_else(overflow)?;
    let rounded = (total + DEN / 2) / DEN;
    let result = rounded
        .checked_sub(2 * u128::from(n_rx))
        .ok_or(Error::Overflow("PC complexity count is negative"))?;
    u64::try_from(result).map_err(|_| overflow())
}

pub const POLY_MAGIC: &Magic = b"CLIPOLY\0";
pub const POLY_FORMAT_VERSION: u32 = 1;

pub fn encode_coefficients(coeffs: &PolyCoefficients) -> Vec<u8> {
    let meta = serde_json::to_string(&coeffs.spec).expect("basis spec serializes");
    let mut w = PayloadWriter::default();
    w.u64(coeffs.n_rx() as u64).u64(coeffs.spec.n_terms() as u64);
    for omega in &coeffs.omega {
        w.complexes(omega);
    }
    container::encode(POLY_MAGIC, POLY_FORMAT_VERSION, &meta, &w.finish())
}

pub fn decode_coefficients(bytes: &[u8]) -> Result<PolyCoefficients, FormatError> {
    let body = container::decode(bytes, POLY_MAGIC, POLY_FORMAT_VERSION)?;
    let spec: BasisSpec =
        serde_json::from_str(body.meta).map_err(|e| FormatError::Metadata(e.to_string()))?;
    let mut r = PayloadReader::new(body.payload);
    let n_rx = r.usize()?;
    let n_terms = r.usize()?;
    if n_terms != spec.n_terms() {
        return Err(FormatError::Payload(format!(
            "{n_terms} terms stored, basis has {}",
            spec.n_terms()
        )));
    }
    let omega = (0..n_rx).map(|_| r.complexes(n_terms)).collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(PolyCoefficients { spec, omega })
}

pub fn save_coefficients(coeffs: &PolyCoefficients, path: &Path) -> Result<()> {
    container::write_atomic(path, &encode_coefficients(coeffs))
}

pub fn load_coefficients(path: &Path) -> Result<PolyCoefficients> {
    decode_coefficients(&container::read_file(path)?).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_streams(rng: &mut ChaCha8Rng, n_tx: usize, len: usize) -> Vec<ComplexSequence> {
        (0..n_tx)
            .map(|_| {
                (0..len)
                    .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn phi_values() {
        let x = c(0.4, -1.3);
        assert_eq!(basis_phi(x, 1, 1).unwrap(), x);
        assert_eq!(basis_phi(x, 1, 0).unwrap(), x.conj());
        let v = basis_phi(c(1.0, 1.0), 3, 2).unwrap();
        assert!((v - c(2.0, 2.0)).norm() < 1e-15);
        assert!(basis_phi(x, 1, 2).is_err());
    }

    #[test]
    fn spec_term_counts() {
        let s = BasisSpec::new(3, 1, 1).unwrap();
        assert_eq!(s.pairs().len(), 6);
        let s = BasisSpec::new(3, 9, 4).unwrap();
        assert_eq!(s.n_terms(), 216);
        for p in [1usize, 3, 5, 7] {
            let s = BasisSpec::new(p, 9, 4).unwrap();
            assert_eq!(s.n_terms(), 4 * 9 * (p + 1) * (p + 3) / 4);
        }
        assert!(BasisSpec::new(2, 1, 1).is_err());
        assert_eq!(BasisSpec::linear(9, 4).unwrap().n_terms(), 36);
    }

    #[test]
    fn first_order_basis_columns() {
        let d = vec![vec![c(1.0, 2.0), c(-0.5, 0.25)]];
        let spec = BasisSpec::new(1, 1, 1).unwrap();
        let m = build_basis_matrix(&d, &spec).unwrap();
        assert_eq!(m.shape(), (2, 2));
        for n in 0..2 {
            assert_eq!(m[(n, 0)], d[0][n].conj());
            assert_eq!(m[(n, 1)], d[0][n]);
        }
    }

    #[test]
    fn third_order_row_by_hand() {
        let x = c(1.0, 1.0);
        let spec = BasisSpec::new(3, 1, 1).unwrap();
        let m = build_basis_matrix(&[vec![x]], &spec).unwrap();
        // (p, q): (1,0) x*, (1,1) x, (3,0) x*^3, (3,1) x|x|^2 conj..., computed directly.
        let xc = c(1.0, -1.0);
        let want = [xc, x, xc * xc * xc, x * xc * xc, x * x * xc, x * x * x];
        for (k, w) in want.iter().enumerate() {
            assert!((m[(0, k)] - w).norm() < 1e-14, "column {k}");
        }
    }

    #[test]
    fn matrix_lags_line_up() {
        let d = vec![(0..6).map(|n| c(n as f64, 0.0)).collect::<Vec<_>>()];
        let spec = BasisSpec::linear(3, 1).unwrap();
        let m = build_basis_matrix_rows(&d, &spec, 2..6).unwrap();
        for i in 0..4 {
            for lag in 0..3 {
                assert_eq!(m[(i, lag)].re, (i + 2 - lag) as f64);
            }
        }
        assert!(build_basis_matrix_rows(&d, &spec, 1..6).is_err());
    }

    #[test]
    fn recovers_known_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_streams(&mut rng, 2, 600);
        let spec = BasisSpec::new(3, 3, 2).unwrap();
        let truth: Vec<Vec<Complex64>> = (0..2)
            .map(|_| {
                (0..spec.n_terms())
                    .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let coeffs = PolyCoefficients::new(spec, truth.clone()).unwrap();
        let rows = 2..600;
        let labels_rows = reconstruct(&coeffs, &d, rows.clone()).unwrap();
        // pad back to full-length streams so `fit` can index by sample.
        let labels: Vec<ComplexSequence> = labels_rows
            .iter()
            .map(|l| {
                let mut full = vec![Complex64::default(); 2];
                full.extend_from_slice(l);
                full
            })
            .collect();
        let rep = fit(&d, &labels, &spec, rows, LsOptions::default()).unwrap();
        for (est, want) in rep.coefficients.omega.iter().zip(&truth) {
            let err: f64 = est.iter().zip(want).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let norm: f64 = want.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
            assert!(err / norm < 1e-6, "relative error {}", err / norm);
        }
        assert!(rep.relative_residual.iter().all(|&r| r < 1e-10));
    }

    #[test]
    fn residual_is_orthogonal_to_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = random_streams(&mut rng, 1, 300);
        let y = random_streams(&mut rng, 1, 300);
        let spec = BasisSpec::new(3, 2, 1).unwrap();
        let rows = 1..300;
        let rep = fit(&d, &y, &spec, rows.clone(), LsOptions::default()).unwrap();
        let a = build_basis_matrix_rows(&d, &spec, rows.clone()).unwrap();
        let fitted = reconstruct(&rep.coefficients, &d, rows.clone()).unwrap();
        let resid: Vec<Complex64> = y[0][rows].iter().zip(&fitted[0]).map(|(u, v)| u - v).collect();
        let rnorm = energy(&resid).sqrt();
        for col in a.column_iter() {
            let dot: Complex64 = col.iter().zip(&resid).map(|(a, r)| a.conj() * r).sum();
            assert!(dot.norm() <= 1e-8 * col.norm() * rnorm);
        }
    }

    #[test]
    fn zero_labels_give_zero_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_streams(&mut rng, 2, 200);
        let zeros = vec![vec![Complex64::default(); 200]];
        let rep = tc_fit(&d, &zeros, 4, 3..200, LsOptions::default()).unwrap();
        assert!(rep.coefficients.omega[0].iter().all(|w| w.norm() == 0.0));
    }

    #[test]
    fn underdetermined_and_singular_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_streams(&mut rng, 1, 10);
        let spec = BasisSpec::new(3, 3, 1).unwrap();
        assert!(matches!(
            fit(&d, &d, &spec, 2..10, LsOptions::default()),
            Err(Error::Dimension(_))
        ));
        // Two identical transmit streams make the basis rank deficient.
        let twin = vec![d[0].clone(), d[0].clone()];
        assert!(matches!(
            tc_fit(&twin, &d, 2, 1..10, LsOptions::default()),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn ridge_shrinks_toward_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = random_streams(&mut rng, 1, 100);
        let y = random_streams(&mut rng, 1, 100);
        let plain = tc_fit(&d, &y, 3, 2..100, LsOptions::default()).unwrap();
        let ridged = tc_fit(&d, &y, 3, 2..100, LsOptions { ridge: 10.0 }).unwrap();
        let norm = |w: &[Complex64]| energy(w);
        assert!(norm(&ridged.coefficients.omega[0]) < norm(&plain.coefficients.omega[0]));
    }

    #[test]
    fn zero_coefficients_reconstruct_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_streams(&mut rng, 2, 50);
        let z = PolyCoefficients::zeros(BasisSpec::new(3, 4, 2).unwrap(), 3);
        let out = reconstruct(&z, &d, 3..50).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().flatten().all(|v| *v == Complex64::default()));
        let wrong = PolyCoefficients::zeros(BasisSpec::new(3, 4, 3).unwrap(), 1);
        assert!(reconstruct(&wrong, &d, 3..50).is_err());
    }

    #[test]
    fn counting_golden_values() {
        assert_eq!(count_params_pc(4, 4, 2, 7, 3).unwrap(), 1728);
        assert_eq!(count_params_pc(1, 1, 0, 1, 1).unwrap(), 4);
        assert_eq!(count_complexity_pc(4, 4, 2, 7, 3).unwrap(), 127_864);
        assert_eq!(count_params_pc(4, 8, 2, 7, 3).unwrap(), 2 * 1728);
        assert!(count_params_pc(4, 4, 2, 7, 2).is_err());
        assert!(count_complexity_pc(4, 4, 2, 7, 4).is_err());
    }

    #[test]
    fn complexity_grows_with_order() {
        let values: Vec<u64> = [1, 3, 5, 7]
            .iter()
            .map(|&p| count_complexity_pc(4, 4, 2, 7, p).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]));
        // Linear in N0*Na*(M+L) up to the -2 N0 correction.
        let base = count_complexity_pc(4, 4, 2, 7, 3).unwrap() + 8;
        let doubled = count_complexity_pc(4, 8, 2, 7, 3).unwrap() + 8;
        assert_eq!(doubled, 2 * base);
    }

    #[test]
    fn linear_restriction_matches_tc_count() {
        // (p, q) = (1, 1) keeps one complex coefficient per tap: half the P = 1 count.
        for (n0, na, m, l) in [(4, 4, 2, 7), (1, 1, 0, 1), (2, 3, 1, 5)] {
            let full = count_params_pc(n0, na, m, l, 1).unwrap();
            assert_eq!(full / 2, 2 * n0 * na * (m + l));
        }
    }

    #[test]
    fn coefficient_container_roundtrip() {
        let spec = BasisSpec::new(3, 2, 2).unwrap();
        let omega = vec![(0..spec.n_terms()).map(|k| c(k as f64, -0.5)).collect()];
        let coeffs = PolyCoefficients::new(spec, omega).unwrap();
        let bytes = encode_coefficients(&coeffs);
        assert_eq!(decode_coefficients(&bytes).unwrap(), coeffs);
        let mut bad = bytes.clone();
        let k = bad.len() - 10;
        bad[k] ^= 1;
        assert!(matches!(decode_coefficients(&bad), Err(FormatError::Checksum { .. })));
    }
}
