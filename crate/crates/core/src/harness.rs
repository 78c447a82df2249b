//! Fitting, evaluation and resource accounting for the four cancellers.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fnn::{self, EpochRecord, FnnModel, TrainConfig, TrainingData};
use crate::poly::{self, BasisSpec, LsOptions, PolyCoefficients};
use crate::scenario::{label_matrix, regressor_matrix, streams_from_labels, CliDataset, ScenarioConfig};
use crate::signal::{common_length, energy, measure_power_dbm_multi, ComplexSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CancellerKind {
    Tc,
    Pc,
    Nnc,
    Hc,
}

impl CancellerKind {
    pub const ALL: [CancellerKind; 4] = [Self::Tc, Self::Pc, Self::Nnc, Self::Hc];

    pub fn id(self) -> &'static str {
        match self {
            Self::Tc => "tc",
            Self::Pc => "pc",
            Self::Nnc => "nnc",
            Self::Hc => "hc",
        }
    }

    pub fn uses_network(self) -> bool {
        matches!(self, Self::Nnc | Self::Hc)
    }
}

impl fmt::Display for CancellerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for CancellerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tc" => Ok(Self::Tc),
            "pc" => Ok(Self::Pc),
            "nnc" => Ok(Self::Nnc),
            "hc" => Ok(Self::Hc),
            other => Err(invalid(
                "canceller",
                format!("unknown canceller '{other}', expected tc, pc, nnc or hc"),
            )),
        }
    }
}

/// Cancellation in dB, or a marker when the residual is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CancellationDb {
    Ratio(f64),
    AboveRange,
}

impl CancellationDb {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Ratio(v) => Some(v),
            Self::AboveRange => None,
        }
    }

    /// Orders `AboveRange` above every finite value.
    pub fn sort_key(self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for CancellationDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ratio(v) => write!(f, "{v:.2}"),
            Self::AboveRange => f.write_str("above measurable range"),
        }
    }
}

fn residual(s: &[ComplexSequence], s_hat: &[ComplexSequence]) -> Result<Vec<ComplexSequence>> {
    if s.len() != s_hat.len() || common_length(s)? != common_length(s_hat)? {
        return Err(Error::Dimension(
            "signal and estimate differ in antennas or samples".into(),
        ));
    }
    Ok(s.iter()
        .zip(s_hat)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect())
}

/// `10 log10(sum |s|^2 / sum |s - s_hat|^2)` over all antennas and samples.
pub fn c_db(s: &[ComplexSequence], s_hat: &[ComplexSequence]) -> Result<CancellationDb> {
    let r = residual(s, s_hat)?;
    let signal: f64 = s.iter().map(|x| energy(x)).sum();
    let error: f64 = r.iter().map(|x| energy(x)).sum();
    if !(signal > 0.0) {
        return Err(invalid("signal", "has zero energy"));
    }
    if error == 0.0 {
        return Ok(CancellationDb::AboveRange);
    }
    Ok(CancellationDb::Ratio(10.0 * (signal / error).log10()))
}

/// Mean per-antenna power of `s - s_hat` in dBm.
pub fn residual_power_dbm(s: &[ComplexSequence], s_hat: &[ComplexSequence]) -> Result<f64> {
    measure_power_dbm_multi(&residual(s, s_hat)?)
}

/// Hyper-parameters of the cancellers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CancellerSettings {
    /// Highest odd nonlinearity order `P` of PC.
    pub pc_order: usize,
    pub nnc_hidden: usize,
    pub hc_hidden: usize,
    pub train: TrainConfig,
    /// Tikhonov weight for the LS fits; zero is plain least squares.
    pub ridge: f64,
}

impl Default for CancellerSettings {
    fn default() -> Self {
        Self {
            pc_order: 3,
            nnc_hidden: 300,
            hc_hidden: 200,
            train: TrainConfig::default(),
            ridge: 0.0,
        }
    }
}

impl CancellerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.pc_order.is_multiple_of(2) {
            return Err(invalid("pc_order", format!("must be odd, got {}", self.pc_order)));
        }
        if self.nnc_hidden == 0 || self.hc_hidden == 0 {
            return Err(invalid("nnc_hidden", "hidden layer widths must be positive"));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(invalid("ridge", "must be finite and non-negative"));
        }
        self.train.validate()
    }

    fn ls(&self) -> LsOptions {
        LsOptions { ridge: self.ridge }
    }
}

/// Dimensions entering the counting formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountDims {
    pub n_rx: u64,
    pub n_tx: u64,
    pub memory: u64,
    pub taps: u64,
}

impl CountDims {
    pub fn of(ds: &CliDataset) -> Self {
        Self {
            n_rx: ds.n_rx() as u64,
            n_tx: ds.n_tx() as u64,
            ..Self::from_scenario(&ds.meta.scenario)
        }
    }

    pub fn from_scenario(s: &ScenarioConfig) -> Self {
        Self {
            n_rx: s.n_rx as u64,
            n_tx: s.n_tx as u64,
            memory: s.pa_memory() as u64,
            taps: s.n_taps as u64,
        }
    }

    pub fn depth(&self) -> u64 {
        self.memory + self.taps
    }

    fn linear_terms(&self) -> Result<u64> {
        self.n_rx
            .checked_mul(self.n_tx)
            .and_then(|v| v.checked_mul(self.depth()))
            .ok_or(Error::Overflow("linear term count"))
    }
}

/// Real parameters of TC: a complex FIR per antenna pair.
pub fn count_params_tc(d: CountDims) -> Result<u64> {
    d.linear_terms()?
        .checked_mul(2)
        .ok_or(Error::Overflow("TC parameter count"))
}

pub fn count_complexity_tc(d: CountDims) -> Result<u64> {
    d.linear_terms()?
        .checked_mul(8)
        .and_then(|v| v.checked_sub(2 * d.n_rx))
        .ok_or(Error::Overflow("TC complexity count"))
}

pub fn count_params_hc(d: CountDims, n_hidden: u64) -> Result<u64> {
    count_params_tc(d)?
        .checked_add(fnn::count_params_nnc(d.n_rx, d.n_tx, d.depth(), n_hidden)?)
        .ok_or(Error::Overflow("HC parameter count"))
}

pub fn count_complexity_hc(d: CountDims, n_hidden: u64) -> Result<u64> {
    count_complexity_tc(d)?
        .checked_add(fnn::count_complexity_nnc(d.n_rx, d.n_tx, d.depth(), n_hidden, 1)?)
        .ok_or(Error::Overflow("HC complexity count"))
}

/// `(n_params, complexity)` for a canceller; `size` is `P` for PC and the
/// hidden width for NNC and HC, and is ignored for TC.
pub fn resource_counts(kind: CancellerKind, d: CountDims, size: u64) -> Result<(u64, u64)> {
    match kind {
        CancellerKind::Tc => Ok((count_params_tc(d)?, count_complexity_tc(d)?)),
        CancellerKind::Pc => Ok((
            poly::count_params_pc(d.n_rx, d.n_tx, d.memory, d.taps, size)?,
            poly::count_complexity_pc(d.n_rx, d.n_tx, d.memory, d.taps, size)?,
        )),
        CancellerKind::Nnc => Ok((
            fnn::count_params_nnc(d.n_rx, d.n_tx, d.depth(), size)?,
            fnn::count_complexity_nnc(d.n_rx, d.n_tx, d.depth(), size, 1)?,
        )),
        CancellerKind::Hc => Ok((count_params_hc(d, size)?, count_complexity_hc(d, size)?)),
    }
}

/// Fitted state of a canceller.
#[derive(Debug, Clone)]
pub enum Fitted {
    Poly(PolyCoefficients),
    Network(FnnModel),
    Hybrid {
        linear: PolyCoefficients,
        network: FnnModel,
    },
}

#[derive(Debug, Clone)]
pub struct CancellerResult {
    pub kind: CancellerKind,
    /// `P` for PC, hidden width for NNC and HC, `1` for TC.
    pub size: usize,
    pub c_db: CancellationDb,
    pub residual_dbm: f64,
    pub n_params: u64,
    pub complexity: u64,
    /// Per-epoch losses and test C_dB; empty for the LS cancellers.
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were kept; zero for the LS cancellers.
    pub best_epoch: usize,
    /// Reconstructed CLI over the test partition.
    pub estimate: Vec<ComplexSequence>,
    /// Measured CLI over the test partition.
    pub reference: Vec<ComplexSequence>,
    pub fitted: Fitted,
}

fn finish(
    kind: CancellerKind,
    size: usize,
    ds: &CliDataset,
    estimate: Vec<ComplexSequence>,
    fitted: Fitted,
    history: Vec<EpochRecord>,
    best_epoch: usize,
) -> Result<CancellerResult> {
    let reference = ds.labels(ds.test_rows());
    let (n_params, complexity) = resource_counts(kind, CountDims::of(ds), size as u64)?;
    Ok(CancellerResult {
        kind,
        size,
        c_db: c_db(&reference, &estimate)?,
        residual_dbm: residual_power_dbm(&reference, &estimate)?,
        n_params,
        complexity,
        history,
        best_epoch,
        estimate,
        reference,
        fitted,
    })
}

fn linear_fit(ds: &CliDataset, settings: &CancellerSettings) -> Result<PolyCoefficients> {
    let depth = ds.depth();
    Ok(poly::tc_fit(&ds.tx, &ds.rx, depth, ds.train_rows(depth), settings.ls())?.coefficients)
}

pub fn run_tc(ds: &CliDataset, settings: &CancellerSettings) -> Result<CancellerResult> {
    let coeffs = linear_fit(ds, settings)?;
    let estimate = poly::reconstruct(&coeffs, &ds.tx, ds.test_rows())?;
    finish(CancellerKind::Tc, 1, ds, estimate, Fitted::Poly(coeffs), Vec::new(), 0)
}

pub fn run_pc(ds: &CliDataset, settings: &CancellerSettings) -> Result<CancellerResult> {
    let depth = ds.depth();
    let spec = BasisSpec::new(settings.pc_order, depth, ds.n_tx())?;
    let coeffs = poly::fit(&ds.tx, &ds.rx, &spec, ds.train_rows(depth), settings.ls())?.coefficients;
    let estimate = poly::reconstruct(&coeffs, &ds.tx, ds.test_rows())?;
    finish(
        CancellerKind::Pc,
        settings.pc_order,
        ds,
        estimate,
        Fitted::Poly(coeffs),
        Vec::new(),
        0,
    )
}

fn peak(labels: &[ComplexSequence], rows: Range<usize>) -> f64 {
    labels
        .iter()
        .flat_map(|s| s[rows.clone()].iter())
        .map(|v| v.norm())
        .fold(0.0, f64::max)
}

/// Trains a network on `targets` (full-length streams) and returns it with
/// its test-partition output, unnormalized.
fn train_network(
    ds: &CliDataset,
    targets: &[ComplexSequence],
    output_scale: f64,
    n_hidden: usize,
    settings: &CancellerSettings,
    seed: u64,
    offset: &[ComplexSequence],
) -> Result<(FnnModel, Vec<ComplexSequence>, Vec<EpochRecord>, usize)> {
    let depth = ds.depth();
    let train = ds.train_rows(depth);
    let test = ds.test_rows();
    let data = TrainingData {
        x_train: regressor_matrix(&ds.tx, depth, train.clone(), ds.m1)?,
        y_train: label_matrix(targets, train, output_scale)?,
        x_test: regressor_matrix(&ds.tx, depth, test.clone(), ds.m1)?,
        y_test: label_matrix(targets, test.clone(), output_scale)?,
    };
    let reference = ds.labels(test);
    let model = FnnModel::new(data.x_train.ncols(), n_hidden, 2 * ds.n_rx(), seed)?
        .with_scales(ds.m1, output_scale)?;
    let estimate_from = |m: &FnnModel, x: &Array2<f64>| -> Result<Vec<ComplexSequence>> {
        let mut streams = streams_from_labels(&m.forward_batch(x.view())?, output_scale);
        for (s, o) in streams.iter_mut().zip(offset) {
            s.iter_mut().zip(o).for_each(|(v, b)| *v += b);
        }
        Ok(streams)
    };
    let outcome = fnn::train(model, &data, &settings.train, seed, |_, m| {
        let est = estimate_from(m, &data.x_test)?;
        Ok(c_db(&reference, &est)?.value())
    })?;
    let estimate = estimate_from(&outcome.model, &data.x_test)?;
    Ok((outcome.model, estimate, outcome.history, outcome.best_epoch))
}

pub fn run_nnc(ds: &CliDataset, settings: &CancellerSettings, seed: u64) -> Result<CancellerResult> {
    let zeros = vec![vec![Default::default(); ds.test_rows().len()]; ds.n_rx()];
    let (model, estimate, history, best) =
        train_network(ds, &ds.rx, ds.m2, settings.nnc_hidden, settings, seed, &zeros)?;
    finish(
        CancellerKind::Nnc,
        settings.nnc_hidden,
        ds,
        estimate,
        Fitted::Network(model),
        history,
        best,
    )
}

/// TC followed by a network trained on the TC residual.
pub fn run_hc(ds: &CliDataset, settings: &CancellerSettings, seed: u64) -> Result<CancellerResult> {
    let depth = ds.depth();
    let linear = linear_fit(ds, settings)?;
    let all = depth - 1..ds.n_samples();
    let linear_out = poly::reconstruct(&linear, &ds.tx, all.clone())?;
    // Residual streams indexed like the dataset; the leading depth-1 samples are never used.
    let targets: Vec<ComplexSequence> = ds
        .rx
        .iter()
        .zip(&linear_out)
        .map(|(s, l)| {
            let mut r = s.clone();
            r[all.clone()].iter_mut().zip(l).for_each(|(v, e)| *v -= e);
            r
        })
        .collect();
    let m2_hc = peak(&targets, ds.train_rows(depth));
    if !(m2_hc > 0.0) {
        return Err(invalid("dataset", "linear canceller leaves no residual to learn"));
    }
    let test_start = ds.split_index - all.start;
    let linear_test: Vec<ComplexSequence> = linear_out.iter().map(|l| l[test_start..].to_vec()).collect();
    let (network, estimate, history, best) =
        train_network(ds, &targets, m2_hc, settings.hc_hidden, settings, seed, &linear_test)?;
    finish(
        CancellerKind::Hc,
        settings.hc_hidden,
        ds,
        estimate,
        Fitted::Hybrid { linear, network },
        history,
        best,
    )
}

pub fn run(kind: CancellerKind, ds: &CliDataset, settings: &CancellerSettings, seed: u64) -> Result<CancellerResult> {
    settings.validate()?;
    match kind {
        CancellerKind::Tc => run_tc(ds, settings),
        CancellerKind::Pc => run_pc(ds, settings),
        CancellerKind::Nnc => run_nnc(ds, settings, seed),
        CancellerKind::Hc => run_hc(ds, settings, seed),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub size: usize,
    pub n_params: u64,
    pub complexity: u64,
    /// Present when the sweep evaluated the canceller.
    pub c_db: Option<CancellationDb>,
}

/// Data and settings for sweeps that also evaluate cancellation.
#[derive(Debug, Clone, Copy)]
pub struct SweepEval<'a> {
    pub dataset: &'a CliDataset,
    pub settings: &'a CancellerSettings,
    pub seed: u64,
}

fn sweep_point(kind: CancellerKind, size: usize, dims: CountDims, eval: Option<SweepEval<'_>>) -> Result<SweepPoint> {
    let (n_params, complexity) = resource_counts(kind, dims, size as u64)?;
    let c_db = match eval {
        Some(e) => {
            let mut s = *e.settings;
            match kind {
                CancellerKind::Pc => s.pc_order = size,
                CancellerKind::Nnc => s.nnc_hidden = size,
                _ => s.hc_hidden = size,
            }
            Some(run(kind, e.dataset, &s, e.seed)?.c_db)
        }
        None => None,
    };
    Ok(SweepPoint {
        size,
        n_params,
        complexity,
        c_db,
    })
}

/// Counts (and, given `eval`, cancellation) over a range of sizes: `P` for
/// PC, hidden width for NNC and HC. Values are spread over `jobs` threads;
/// each value is computed independently, so the output does not depend on `jobs`.
pub fn sweep(
    kind: CancellerKind,
    sizes: &[usize],
    dims: CountDims,
    eval: Option<SweepEval<'_>>,
    jobs: usize,
) -> Result<Vec<SweepPoint>> {
    if kind == CancellerKind::Tc {
        return Err(invalid("canceller", "TC has no size to sweep"));
    }
    let jobs = jobs.clamp(1, sizes.len().max(1));
    if jobs == 1 {
        return sizes
            .iter()
            .map(|&size| sweep_point(kind, size, dims, eval))
            .collect();
    }
    let chunk = sizes.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = sizes
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&size| sweep_point(kind, size, dims, eval))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(sizes.len());
        for h in handles {
            out.extend(h.join().expect("sweep worker panicked")?);
        }
        Ok(out)
    })
}

/// Median of a non-empty set; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(invalid("values", "contain NaN"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("HC".parse::<CancellerKind>().unwrap(), CancellerKind::Hc);
        assert_eq!(" pc".parse::<CancellerKind>().unwrap(), CancellerKind::Pc);
        assert!("dpd".parse::<CancellerKind>().is_err());
        for k in CancellerKind::ALL {
            assert_eq!(k.to_string().parse::<CancellerKind>().unwrap(), k);
        }
    }

    #[test]
    fn cancellation_values() {
        let s = vec![vec![c(1.0), c(1.0)]];
        let half = vec![vec![c(0.9), c(0.9)]];
        // Residual energy is 1% of the signal energy.
        match c_db(&s, &half).unwrap() {
            CancellationDb::Ratio(v) => assert!((v - 20.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        assert_eq!(c_db(&s, &s).unwrap(), CancellationDb::AboveRange);
        assert_eq!(c_db(&s, &s).unwrap().to_string(), "above measurable range");
        let zero = vec![vec![c(0.0), c(0.0)]];
        assert_eq!(c_db(&s, &zero).unwrap(), CancellationDb::Ratio(0.0));
        assert!(c_db(&zero, &s).is_err());
        assert!(c_db(&s, &[vec![c(0.0)]]).is_err());
    }

    #[test]
    fn half_estimate_and_scale_invariance() {
        let s = vec![vec![Complex64::new(0.3, -1.2), c(2.0)], vec![c(-0.7), Complex64::new(0.0, 0.4)]];
        let half: Vec<ComplexSequence> = s.iter().map(|x| x.iter().map(|v| v / 2.0).collect()).collect();
        let v = c_db(&s, &half).unwrap().value().unwrap();
        assert!((v - 10.0 * 4f64.log10()).abs() < 1e-12);
        let k = Complex64::new(-3.0, 1.5);
        let scale = |x: &[ComplexSequence]| -> Vec<ComplexSequence> {
            x.iter().map(|a| a.iter().map(|v| v * k).collect()).collect()
        };
        let w = c_db(&scale(&s), &scale(&half)).unwrap().value().unwrap();
        assert!((v - w).abs() < 1e-12);
    }

    #[test]
    fn residual_power_is_per_antenna_mean() {
        // 1 mW residual on each of two antennas.
        let s = vec![vec![c(0.1 * 0.1f64.sqrt()); 4]; 2];
        let z = vec![vec![c(0.0); 4]; 2];
        assert!(residual_power_dbm(&s, &z).unwrap().abs() < 1e-9);
    }

    #[test]
    fn counts_at_default_dimensions() {
        let d = CountDims {
            n_rx: 4,
            n_tx: 4,
            memory: 2,
            taps: 7,
        };
        assert_eq!(count_params_tc(d).unwrap(), 288);
        assert_eq!(count_complexity_tc(d).unwrap(), 1144);
        assert_eq!(resource_counts(CancellerKind::Pc, d, 3).unwrap(), (1728, 127_864));
        assert_eq!(resource_counts(CancellerKind::Nnc, d, 300).unwrap(), (24_310, 48_380));
        assert_eq!(count_params_hc(d, 200).unwrap(), 16_498);
        assert_eq!(count_complexity_hc(d, 200).unwrap(), 33_424);
        assert_eq!(count_complexity_hc(d, 300).unwrap(), 49_524);
    }

    #[test]
    fn count_sweeps() {
        let dims = CountDims::from_scenario(&ScenarioConfig::default());
        assert!(sweep(CancellerKind::Pc, &[], dims, None, 1).unwrap().is_empty());
        assert!(sweep(CancellerKind::Tc, &[1], dims, None, 1).is_err());
        let one = sweep(CancellerKind::Nnc, &[50, 100, 150, 200, 250], dims, None, 1).unwrap();
        let many = sweep(CancellerKind::Nnc, &[50, 100, 150, 200, 250], dims, None, 3).unwrap();
        assert_eq!(one, many);
        assert_eq!(one[0].n_params, 81 * 50 + 10);
        assert!(one.iter().all(|p| p.c_db.is_none()));
        let pc = sweep(CancellerKind::Pc, &[1, 3, 5, 7], dims, None, 2).unwrap();
        assert_eq!(pc[1].n_params, 1728);
        assert!(sweep(CancellerKind::Pc, &[2], dims, None, 1).is_err());
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
        assert!(median(&[]).is_err());
        assert!(median(&[f64::NAN]).is_err());
    }

    #[test]
    fn settings_validation() {
        assert!(CancellerSettings::default().validate().is_ok());
        let even = CancellerSettings {
            pc_order: 4,
            ..CancellerSettings::default()
        };
        assert!(even.validate().is_err());
    }
}
