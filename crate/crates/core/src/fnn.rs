//! Feed-forward network with one ReLU hidden layer, trained with Adam.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{self, Magic, PayloadReader, PayloadWriter};
use crate::error::{invalid, Error, FormatError, Result};
use crate::seed::{derive_seed, Purpose};

/// Weights are stored output-major: `w1` is `n_hidden x n_in`, `w2` is `n_out x n_hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnModel {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// Inputs are divided by this before the first layer.
    pub input_scale: f64,
    /// Outputs are multiplied by this to undo label normalization.
    pub output_scale: f64,
}

fn glorot(rng: &mut ChaCha8Rng, fan_out: usize, fan_in: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-limit..limit))
}

impl FnnModel {
    /// Glorot-uniform weights and zero biases.
    pub fn new(n_in: usize, n_hidden: usize, n_out: usize, seed: u64) -> Result<Self> {
        if n_in == 0 || n_hidden == 0 || n_out == 0 {
            return Err(invalid("n_hidden", "layer widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Purpose::Init, 0));
        let w1 = glorot(&mut rng, n_hidden, n_in);
        let w2 = glorot(&mut rng, n_out, n_hidden);
        Ok(Self {
            w1,
            b1: Array1::zeros(n_hidden),
            w2,
            b2: Array1::zeros(n_out),
            input_scale: 1.0,
            output_scale: 1.0,
        })
    }

    pub fn with_scales(mut self, input_scale: f64, output_scale: f64) -> Result<Self> {
        for (name, v) in [("input_scale", input_scale), ("output_scale", output_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        self.input_scale = input_scale;
        self.output_scale = output_scale;
        Ok(self)
    }

    pub fn n_in(&self) -> usize {
        self.w1.ncols()
    }

    pub fn n_hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.w2.nrows()
    }

    /// Trainable weights and biases.
    pub fn n_params(&self) -> usize {
        (self.n_in() + 1) * self.n_hidden() + (self.n_hidden() + 1) * self.n_out()
    }

    fn hidden(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut h = x.dot(&self.w1.t());
        h += &self.b1;
        h.mapv_inplace(|v| v.max(0.0));
        h
    }

    /// Network output for already-normalized rows.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_in() {
            return Err(Error::Dimension(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.n_in()
            )));
        }
        let mut y = self.hidden(x).dot(&self.w2.t());
        y += &self.b2;
        Ok(y)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Unnormalized inputs in, unnormalized outputs out.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let scaled = x.mapv(|v| v / self.input_scale);
        Ok(self.forward_batch(scaled.view())? * self.output_scale)
    }

    /// Mean over rows of the squared output error.
    pub fn loss(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
        let out = self.forward_batch(x)?;
        check_labels(&out, y)?;
        Ok(squared_error(&out, y) / x.nrows().max(1) as f64)
    }

    /// Loss and its gradient for one batch.
    pub fn backward(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, Gradients)> {
        if x.nrows() == 0 {
            return Err(Error::Empty("batch"));
        }
        let h = self.hidden(x);
        let mut out = h.dot(&self.w2.t());
        out += &self.b2;
        check_labels(&out, y)?;
        let n = x.nrows() as f64;
        let loss = squared_error(&out, y) / n;

        let mut d_out = out;
        Zip::from(&mut d_out).and(&y).for_each(|o, &t| *o = 2.0 * (*o - t) / n);
        let w2 = d_out.t().dot(&h);
        let b2 = d_out.sum_axis(Axis(0));
        let mut d_h = d_out.dot(&self.w2);
        Zip::from(&mut d_h).and(&h).for_each(|g, &a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        let w1 = d_h.t().dot(&x);
        let b1 = d_h.sum_axis(Axis(0));
        Ok((loss, Gradients { w1, b1, w2, b2 }))
    }
}

fn check_labels(out: &Array2<f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if out.dim() != y.dim() {
        return Err(Error::Dimension(format!(
            "labels are {:?}, outputs are {:?}",
            y.dim(),
            out.dim()
        )));
    }
    Ok(())
}

fn squared_error(out: &Array2<f64>, y: ArrayView2<'_, f64>) -> f64 {
    Zip::from(out).and(&y).fold(0.0, |acc, &o, &t| acc + (o - t) * (o - t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl AdamState {
    pub fn new(model: &FnnModel) -> Self {
        let zeros = Gradients {
            w1: Array2::zeros(model.w1.dim()),
            b1: Array1::zeros(model.b1.dim()),
            w2: Array2::zeros(model.w2.dim()),
            b2: Array1::zeros(model.b2.dim()),
        };
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }
}

fn adam_update<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    cfg: &AdamConfig,
    step_size: f64,
    eps_hat: f64,
) {
    Zip::from(param).and(grad).and(m).and(v).for_each(|p, &g, m, v| {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *p -= step_size * *m / (v.sqrt() + eps_hat);
    });
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut FnnModel, grads: &Gradients, state: &mut AdamState, cfg: &AdamConfig) {
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step);
    let bc2 = 1.0 - cfg.beta2.powi(state.step);
    // lr * m_hat / (sqrt(v_hat) + eps), folded into the raw moments.
    let step_size = cfg.learning_rate * bc2.sqrt() / bc1;
    let eps_hat = cfg.epsilon * bc2.sqrt();
    let (m, v) = (&mut state.m, &mut state.v);
    adam_update(&mut model.w1, &grads.w1, &mut m.w1, &mut v.w1, cfg, step_size, eps_hat);
    adam_update(&mut model.b1, &grads.b1, &mut m.b1, &mut v.b1, cfg, step_size, eps_hat);
    adam_update(&mut model.w2, &grads.w2, &mut m.w2, &mut v.w2, cfg, step_size, eps_hat);
    adam_update(&mut model.b2, &grads.b2, &mut m.b2, &mut v.b2, cfg, step_size, eps_hat);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(flatten)]
    pub adam: AdamConfig,
    /// Keep the weights of the epoch with the lowest test loss.
    pub retain_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 60,
            adam: AdamConfig::default(),
            retain_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs", "must be positive"));
        }
        let a = &self.adam;
        if !(a.learning_rate >= 0.0 && a.learning_rate.is_finite()) {
            return Err(invalid("learning_rate", "must be finite and non-negative"));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err(invalid("beta1", "moment decay rates must lie in [0, 1)"));
        }
        if !(a.epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        Ok(())
    }
}

/// Normalized training and test pairs.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub x_train: Array2<f64>,
    pub y_train: Array2<f64>,
    pub x_test: Array2<f64>,
    pub y_test: Array2<f64>,
}

impl TrainingData {
    fn validate(&self, model: &FnnModel) -> Result<()> {
        if self.x_train.nrows() == 0 {
            return Err(Error::Empty("training set"));
        }
        if self.x_test.nrows() == 0 {
            return Err(Error::Empty("test set"));
        }
        let ok = self.x_train.nrows() == self.y_train.nrows()
            && self.x_test.nrows() == self.y_test.nrows()
            && self.x_train.ncols() == model.n_in()
            && self.x_test.ncols() == model.n_in()
            && self.y_train.ncols() == model.n_out()
            && self.y_test.ncols() == model.n_out();
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("training data does not match the network shape".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the batch losses seen during the epoch.
    pub train_loss: f64,
    pub test_loss: f64,
    /// Whatever the monitor reported after the epoch.
    pub metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FnnModel,
    pub history: Vec<EpochRecord>,
    /// Epoch (1-based) whose weights were kept.
    pub best_epoch: usize,
}

/// Mini-batch Adam over shuffled training rows. `monitor` is called after
/// every epoch with the current weights.
pub fn train<F>(
    mut model: FnnModel,
    data: &TrainingData,
    cfg: &TrainConfig,
    seed: u64,
    mut monitor: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &FnnModel) -> Result<Option<f64>>,
{
    cfg.validate()?;
    data.validate(&model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Purpose::Shuffle, 0));
    let mut state = AdamState::new(&model);
    let mut order: Vec<usize> = (0..data.x_train.nrows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, FnnModel)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = data.x_train.select(Axis(0), batch);
            let yb = data.y_train.select(Axis(0), batch);
            let (loss, grads) = model.backward(xb.view(), yb.view())?;
            adam_step(&mut model, &grads, &mut state, &cfg.adam);
            total += loss * batch.len() as f64;
        }
        let train_loss = total / order.len() as f64;
        let test_loss = model.loss(data.x_test.view(), data.y_test.view())?;
        if !train_loss.is_finite() || !test_loss.is_finite() {
            return Err(Error::InvalidParameter {
                name: "learning_rate",
                reason: format!("training diverged at epoch {epoch}"),
            });
        }
        let metric = monitor(epoch, &model)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            test_loss,
            metric,
        });
        if cfg.retain_best && best.as_ref().is_none_or(|(l, _, _)| test_loss < *l) {
            best = Some((test_loss, epoch, model.clone()));
        }
    }
    let (model, best_epoch) = match best {
        Some((_, epoch, m)) => (m, epoch),
        None => (model, cfg.epochs),
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Real-valued parameter count of a network canceller with `n_hidden` units.
pub fn count_params_nnc(n_rx: u64, n_tx: u64, depth: u64, n_hidden: u64) -> Result<u64> {
    let overflow = || Error::Overflow("network parameter count");
    let per_unit = depth
        .checked_mul(n_tx)
        .and_then(|v| v.checked_mul(2))
        .and_then(|v| v.checked_add(2 * n_rx + 1))
        .ok_or_else(overflow)?;
    n_hidden
        .checked_mul(per_unit)
        .and_then(|v| v.checked_add(2 * n_rx + 2))
        .ok_or_else(overflow)
}

/// Real operations per reconstructed sample; `c_sigma` is the cost of one activation.
pub fn count_complexity_nnc(n_rx: u64, n_tx: u64, depth: u64, n_hidden: u64, c_sigma: u64) -> Result<u64> {
    let overflow = || Error::Overflow("network complexity count");
    let width = n_tx
        .checked_mul(depth)
        .and_then(|v| v.checked_add(n_rx))
        .ok_or_else(overflow)?;
    n_hidden
        .checked_mul(2)
        .and_then(|v| v.checked_add(1))
        .and_then(|v| v.checked_mul(2))
        .and_then(|v| v.checked_mul(width))
        .and_then(|v| v.checked_add(c_sigma.checked_mul(n_hidden)?))
        .ok_or_else(overflow)
}

pub const FNN_MAGIC: &Magic = b"CLIFNN\0\0";
pub const FNN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FnnMeta {
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
}

pub fn encode_model(model: &FnnModel) -> Vec<u8> {
    let meta = FnnMeta {
        n_in: model.n_in(),
        n_hidden: model.n_hidden(),
        n_out: model.n_out(),
    };
    let meta = serde_json::to_string(&meta).expect("network shape serializes");
    let mut w = PayloadWriter::default();
    w.f64(model.input_scale).f64(model.output_scale);
    // Standard layout iterates row-major.
    w.f64s(model.w1.iter())
        .f64s(model.b1.iter())
        .f64s(model.w2.iter())
        .f64s(model.b2.iter());
    container::encode(FNN_MAGIC, FNN_FORMAT_VERSION, &meta, &w.finish())
}

pub fn decode_model(bytes: &[u8]) -> Result<FnnModel, FormatError> {
    let body = container::decode(bytes, FNN_MAGIC, FNN_FORMAT_VERSION)?;
    let meta: FnnMeta =
        serde_json::from_str(body.meta).map_err(|e| FormatError::Metadata(e.to_string()))?;
    if meta.n_in == 0 || meta.n_hidden == 0 || meta.n_out == 0 {
        return Err(FormatError::Metadata("layer widths must be positive".into()));
    }
    let mut r = PayloadReader::new(body.payload);
    let input_scale = r.f64()?;
    let output_scale = r.f64()?;
    let matrix = |r: &mut PayloadReader<'_>, rows: usize, cols: usize| {
        let v = r.f64s(rows * cols)?;
        Array2::from_shape_vec((rows, cols), v).map_err(|e| FormatError::Payload(e.to_string()))
    };
    let w1 = matrix(&mut r, meta.n_hidden, meta.n_in)?;
    let b1 = Array1::from(r.f64s(meta.n_hidden)?);
    let w2 = matrix(&mut r, meta.n_out, meta.n_hidden)?;
    let b2 = Array1::from(r.f64s(meta.n_out)?);
    r.finish()?;
    Ok(FnnModel {
        w1,
        b1,
        w2,
        b2,
        input_scale,
        output_scale,
    })
}

pub fn save_model(model: &FnnModel, path: &Path) -> Result<()> {
    container::write_atomic(path, &encode_model(model))
}

pub fn load_model(path: &Path) -> Result<FnnModel> {
    decode_model(&container::read_file(path)?).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, s};

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn shapes_and_param_count() {
        let m = FnnModel::new(72, 300, 8, 0).unwrap();
        assert_eq!(m.w1.dim(), (300, 72));
        assert_eq!(m.w2.dim(), (8, 300));
        assert_eq!(m.n_params(), 73 * 300 + 301 * 8);
        assert!(FnnModel::new(0, 3, 1, 0).is_err());
    }

    #[test]
    fn glorot_limits_and_seeding() {
        let a = FnnModel::new(20, 30, 4, 7).unwrap();
        let b = FnnModel::new(20, 30, 4, 7).unwrap();
        let c = FnnModel::new(20, 30, 4, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let limit = (6.0f64 / 50.0).sqrt();
        assert!(a.w1.iter().all(|w| w.abs() <= limit));
        assert!(a.b1.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn forward_by_hand() {
        let m = FnnModel {
            w1: array![[1.0, -1.0], [0.5, 0.5]],
            b1: array![0.0, -1.0],
            w2: array![[2.0, 3.0]],
            b2: array![0.25],
            input_scale: 1.0,
            output_scale: 1.0,
        };
        // hidden = relu([1 - 2, 1.5 - 1]) = [0, 0.5]; out = 1.5 + 0.25.
        assert_eq!(m.forward(&[1.0, 2.0]).unwrap(), vec![1.75]);
        assert!(m.forward(&[1.0]).is_err());
        let scaled = m.clone().with_scales(2.0, 10.0).unwrap();
        let p = scaled.predict(array![[2.0, 4.0]].view()).unwrap();
        assert!((p[[0, 0]] - 17.5).abs() < 1e-12);
    }

    #[test]
    fn trivial_forward_cases() {
        let mut m = FnnModel::new(3, 4, 2, 0).unwrap();
        m.w1.fill(0.0);
        m.w2.fill(0.0);
        m.b2 = array![0.5, -2.0];
        assert_eq!(m.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5, -2.0]);
        let relu = FnnModel {
            w1: array![[1.0]],
            b1: array![0.0],
            w2: array![[2.0]],
            b2: array![0.0],
            input_scale: 1.0,
            output_scale: 1.0,
        };
        assert_eq!(relu.forward(&[-3.0]).unwrap(), vec![0.0]);
        assert_eq!(relu.forward(&[3.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn forward_matches_straight_line_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut m = FnnModel::new(5, 3, 2, 4).unwrap();
        m.b1 = array![0.1, -0.2, 0.05];
        m.b2 = array![0.3, -0.4];
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut want = vec![0.0; 2];
        for (o, w) in want.iter_mut().enumerate() {
            let mut acc = m.b2[o];
            for h in 0..3 {
                let mut z = m.b1[h];
                for i in 0..5 {
                    z += m.w1[[h, i]] * x[i];
                }
                acc += m.w2[[o, h]] * z.max(0.0);
            }
            *w = acc;
        }
        let got = m.forward(&x).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        // Scaling the output layer scales the output.
        let mut doubled = m.clone();
        doubled.w2 *= 2.0;
        doubled.b2 *= 2.0;
        let twice = doubled.forward(&x).unwrap();
        for (t, g) in twice.iter().zip(&got) {
            assert!((t - 2.0 * g).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = FnnModel::new(3, 5, 2, 2).unwrap();
        let x = random_matrix(&mut rng, 2, 3);
        let y = m.forward_batch(x.view()).unwrap();
        let (loss, g) = m.backward(x.view(), y.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.w1.iter().chain(g.w2.iter()).all(|v| *v == 0.0));

        let y = random_matrix(&mut rng, 2, 2);
        let (_, both) = m.backward(x.view(), y.view()).unwrap();
        let (_, first) = m.backward(x.slice(s![0..1, ..]), y.slice(s![0..1, ..])).unwrap();
        let (_, second) = m.backward(x.slice(s![1..2, ..]), y.slice(s![1..2, ..])).unwrap();
        let mean = (&first.w1 + &second.w1) / 2.0;
        assert!((&both.w1 - &mean).iter().all(|d| d.abs() < 1e-14));
        let mean = (&first.b2 + &second.b2) / 2.0;
        assert!((&both.b2 - &mean).iter().all(|d| d.abs() < 1e-14));
        assert!(m.backward(x.slice(s![0..0, ..]), y.slice(s![0..0, ..])).is_err());
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut model = FnnModel::new(2, 3, 1, 0).unwrap();
        let before = model.clone();
        let mut state = AdamState::new(&model);
        let zero = state.m.clone();
        adam_step(&mut model, &zero, &mut state, &AdamConfig::default());
        assert_eq!(model, before);
        assert_eq!(state.steps(), 1);
    }

    #[test]
    fn model_count_excludes_normalization_constants() {
        for h in [1usize, 50, 200, 300] {
            let m = FnnModel::new(72, h, 8, 0).unwrap();
            assert_eq!(m.n_params() as u64 + 2, count_params_nnc(4, 4, 9, h as u64).unwrap());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut model = FnnModel::new(4, 2, 2, 3).unwrap();
        model.b1 = array![0.1, -0.05];
        model.b2 = array![0.2, 0.3];
        let x = random_matrix(&mut rng, 5, 4);
        let y = random_matrix(&mut rng, 5, 2);
        let (_, g) = model.backward(x.view(), y.view()).unwrap();
        let h = 1e-6;
        let loss = |m: &FnnModel| m.loss(x.view(), y.view()).unwrap();
        let check = |analytic: f64, plus: f64, minus: f64| {
            let numeric = (plus - minus) / (2.0 * h);
            assert!((analytic - numeric).abs() <= 1e-5 * (1.0 + numeric.abs()), "{analytic} vs {numeric}");
        };
        for idx in [(0, 0), (1, 3), (0, 2)] {
            let (mut p, mut q) = (model.clone(), model.clone());
            p.w1[idx] += h;
            q.w1[idx] -= h;
            check(g.w1[idx], loss(&p), loss(&q));
        }
        for idx in [(0, 0), (1, 1)] {
            let (mut p, mut q) = (model.clone(), model.clone());
            p.w2[idx] += h;
            q.w2[idx] -= h;
            check(g.w2[idx], loss(&p), loss(&q));
        }
        for k in 0..2 {
            let (mut p, mut q) = (model.clone(), model.clone());
            p.b1[k] += h;
            q.b1[k] -= h;
            check(g.b1[k], loss(&p), loss(&q));
            let (mut p, mut q) = (model.clone(), model.clone());
            p.b2[k] += h;
            q.b2[k] -= h;
            check(g.b2[k], loss(&p), loss(&q));
        }
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut model = FnnModel::new(2, 2, 1, 0).unwrap();
        let before = model.clone();
        let grads = Gradients {
            w1: array![[0.5, -2.0], [1e-3, 0.0]],
            b1: array![1.0, -1.0],
            w2: array![[3.0, -0.1]],
            b2: array![0.0],
        };
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(&model);
        adam_step(&mut model, &grads, &mut state, &cfg);
        // With bias correction the first step is lr * sign(g) for |g| >> eps.
        let moved = &before.w1 - &model.w1;
        assert!((moved[[0, 0]] - 0.01).abs() < 1e-6);
        assert!((moved[[0, 1]] + 0.01).abs() < 1e-6);
        assert!((moved[[1, 0]] - 0.01).abs() < 1e-6);
        assert_eq!(moved[[1, 1]], 0.0);
        assert_eq!(model.b2, before.b2);
        assert_eq!(state.steps(), 1);
    }

    fn linear_task(seed: u64, rows: usize) -> TrainingData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(&mut rng, 3, 2) * 0.5;
        let make = |rng: &mut ChaCha8Rng, n| {
            let x = random_matrix(rng, n, 3);
            let y = x.dot(&a);
            (x, y)
        };
        let (x_train, y_train) = make(&mut rng, rows);
        let (x_test, y_test) = make(&mut rng, rows / 4);
        TrainingData {
            x_train,
            y_train,
            x_test,
            y_test,
        }
    }

    #[test]
    fn zero_learning_rate_freezes_weights() {
        let data = linear_task(1, 64);
        let model = FnnModel::new(3, 8, 2, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            adam: AdamConfig {
                learning_rate: 0.0,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let out = train(model.clone(), &data, &cfg, 0, |_, _| Ok(None)).unwrap();
        assert_eq!(out.model, model);
        assert_eq!(out.history.len(), 2);
    }

    #[test]
    fn learns_a_linear_map() {
        let data = linear_task(2, 512);
        let model = FnnModel::new(3, 32, 2, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            adam: AdamConfig {
                learning_rate: 5e-3,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let mut calls = 0;
        let out = train(model, &data, &cfg, 0, |_, _| {
            calls += 1;
            Ok(Some(calls as f64))
        })
        .unwrap();
        assert_eq!(calls, 50);
        let best = out.history[out.best_epoch - 1].test_loss;
        assert!(best < 1e-3, "test loss {best}");
        assert!(out.history.iter().all(|r| best <= r.test_loss));
        assert_eq!(out.model.loss(data.x_test.view(), data.y_test.view()).unwrap(), best);
    }

    #[test]
    fn training_is_deterministic() {
        let data = linear_task(3, 128);
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let run = || train(FnnModel::new(3, 8, 2, 5).unwrap(), &data, &cfg, 9, |_, _| Ok(None)).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn bad_training_inputs() {
        let data = linear_task(3, 16);
        let model = FnnModel::new(4, 8, 2, 5).unwrap();
        assert!(train(model, &data, &TrainConfig::default(), 0, |_, _| Ok(None)).is_err());
        let model = FnnModel::new(3, 8, 2, 5).unwrap();
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train(model, &data, &cfg, 0, |_, _| Ok(None)).is_err());
    }

    #[test]
    fn counting_golden_values() {
        assert_eq!(count_params_nnc(4, 4, 9, 300).unwrap(), 24_310);
        assert_eq!(count_complexity_nnc(4, 4, 9, 300, 1).unwrap(), 48_380);
        assert_eq!(count_params_nnc(4, 4, 9, 0).unwrap(), 10);
        assert!(count_params_nnc(4, 4, 9, u64::MAX).is_err());
    }

    #[test]
    fn model_container_roundtrip() {
        let model = FnnModel::new(6, 5, 2, 11)
            .unwrap()
            .with_scales(0.3, 1.7e-3)
            .unwrap();
        let bytes = encode_model(&model);
        assert_eq!(decode_model(&bytes).unwrap(), model);
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 1]),
            Err(FormatError::Checksum { .. } | FormatError::Truncated { .. })
        ));
        assert!(matches!(
            decode_model(&crate::poly::encode_coefficients(&crate::poly::PolyCoefficients::zeros(
                crate::poly::BasisSpec::linear(1, 1).unwrap(),
                1
            ))),
            Err(FormatError::BadMagic { .. })
        ));
    }
}
