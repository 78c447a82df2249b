//! BS-to-BS propagation: Rayleigh multipath FIR MIMO channel, AWGN, ADC
//! quantization and received-power calibration.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::{common_length, dbm_to_watts, energy, watts_to_dbm, ComplexSequence};

/// Complex FIR taps for every (receive, transmit) antenna pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathChannel {
    n_rx: usize,
    n_tx: usize,
    n_taps: usize,
    /// Row-major `[rx][tx][tap]`.
    taps: Vec<Complex64>,
}

impl MultipathChannel {
    /// Builds a channel from nested `[rx][tx][tap]` vectors.
    pub fn new(taps: Vec<Vec<Vec<Complex64>>>) -> Result<Self> {
        let n_rx = taps.len();
        let n_tx = taps.first().map_or(0, Vec::len);
        let n_taps = taps.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if n_rx == 0 || n_tx == 0 || n_taps == 0 {
            return Err(Error::Dimension("channel needs at least one tap per link".into()));
        }
        for row in &taps {
            if row.len() != n_tx || row.iter().any(|link| link.len() != n_taps) {
                return Err(Error::Dimension(format!(
                    "channel taps must form a {n_rx}x{n_tx}x{n_taps} array"
                )));
            }
        }
        let flat: Vec<Complex64> = taps.into_iter().flatten().flatten().collect();
        if flat.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(invalid("taps", "all channel taps must be finite"));
        }
        Ok(Self {
            n_rx,
            n_tx,
            n_taps,
            taps: flat,
        })
    }

    /// Unit gain on the matching antenna pair, zero elsewhere.
    pub fn identity(n_antennas: usize, n_taps: usize) -> Result<Self> {
        if n_antennas == 0 || n_taps == 0 {
            return Err(Error::Dimension("identity channel needs nonzero dimensions".into()));
        }
        let taps = (0..n_antennas)
            .map(|r| {
                (0..n_antennas)
                    .map(|t| {
                        let mut link = vec![Complex64::default(); n_taps];
                        if r == t {
                            link[0] = Complex64::new(1.0, 0.0);
                        }
                        link
                    })
                    .collect()
            })
            .collect();
        Self::new(taps)
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    /// Maximum multipath count `L`.
    pub fn n_taps(&self) -> usize {
        self.n_taps
    }

    /// Impulse response from transmit antenna `tx` to receive antenna `rx`.
    pub fn link(&self, rx: usize, tx: usize) -> &[Complex64] {
        let start = (rx * self.n_tx + tx) * self.n_taps;
        &self.taps[start..start + self.n_taps]
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    /// Every tap multiplied by one real factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            taps: self.taps.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Distance-based path loss `h = r^{-gamma/2} * h_small_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLoss {
    /// Link distance in meters.
    pub distance_m: f64,
    /// Path-loss exponent.
    pub exponent: f64,
}

impl PathLoss {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_m.is_finite() && self.distance_m > 0.0) {
            return Err(invalid("distance_m", "must be finite and positive"));
        }
        if !(self.exponent.is_finite() && self.exponent >= 0.0) {
            return Err(invalid("exponent", "must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn amplitude_scale(&self) -> f64 {
        self.distance_m.powf(-self.exponent / 2.0)
    }
}

impl Default for PathLoss {
    fn default() -> Self {
        Self {
            distance_m: 1.0,
            exponent: 0.0,
        }
    }
}

/// Receiver AWGN level. `-inf` disables the noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub power_dbm: f64,
}

impl NoiseModel {
    pub const fn disabled() -> Self {
        Self {
            power_dbm: f64::NEG_INFINITY,
        }
    }

    pub fn is_disabled(&self) -> bool {
        self.power_dbm == f64::NEG_INFINITY
    }
}

/// Uniform mid-rise ADC applied separately to I and Q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcConfig {
    pub bits: u32,
    /// Clipping amplitude per rail.
    pub full_scale: f64,
}

impl AdcConfig {
    pub fn new(bits: u32, full_scale: f64) -> Result<Self> {
        if !(1..=52).contains(&bits) {
            return Err(invalid("bits", format!("must be in 1..=52, got {bits}")));
        }
        if !(full_scale.is_finite() && full_scale > 0.0) {
            return Err(invalid("full_scale", "must be finite and positive"));
        }
        Ok(Self { bits, full_scale })
    }

    /// Quantization step `2 * full_scale / 2^bits`.
    pub fn step(&self) -> f64 {
        2.0 * self.full_scale / (1u64 << self.bits) as f64
    }

    fn quantize_rail(&self, v: f64) -> f64 {
        let levels = (1u64 << self.bits) as f64;
        let step = self.step();
        let index = ((v + self.full_scale) / step).floor().clamp(0.0, levels - 1.0);
        -self.full_scale + (index + 0.5) * step
    }
}

fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let sigma = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * sigma, im * sigma)
}

/// Draws i.i.d. `CN(0, 1)` small-scale taps scaled by the path loss.
pub fn draw_channel(
    seed: u64,
    n_rx: usize,
    n_tx: usize,
    n_taps: usize,
    pathloss: &PathLoss,
) -> Result<MultipathChannel> {
    if n_rx == 0 || n_tx == 0 || n_taps == 0 {
        return Err(Error::Dimension(format!(
            "channel dimensions must be positive, got {n_rx}x{n_tx}x{n_taps}"
        )));
    }
    pathloss.validate()?;
    let scale = pathloss.amplitude_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taps = (0..n_rx * n_tx * n_taps)
        .map(|_| complex_gaussian(&mut rng, 1.0) * scale)
        .collect();
    Ok(MultipathChannel {
        n_rx,
        n_tx,
        n_taps,
        taps,
    })
}

/// `rx[r][n] = sum_t sum_l h[r][t][l] tx[t][n-l]` with zero history.
pub fn propagate(tx: &[ComplexSequence], ch: &MultipathChannel) -> Result<Vec<ComplexSequence>> {
    if tx.len() != ch.n_tx {
        return Err(Error::Dimension(format!(
            "channel expects {} transmit streams, got {}",
            ch.n_tx,
            tx.len()
        )));
    }
    let len = common_length(tx)?;
    let mut rx = vec![vec![Complex64::default(); len]; ch.n_rx];
    for (r, out) in rx.iter_mut().enumerate() {
        for (t, input) in tx.iter().enumerate() {
            for (l, &h) in ch.link(r, t).iter().enumerate() {
                if h == Complex64::default() || l >= len {
                    continue;
                }
                for (o, &x) in out[l..].iter_mut().zip(input) {
                    *o += h * x;
                }
            }
        }
    }
    Ok(rx)
}

/// Adds circularly-symmetric white Gaussian noise of the configured total power.
pub fn add_awgn(x: &[Complex64], noise: &NoiseModel, seed: u64) -> ComplexSequence {
    if noise.is_disabled() {
        return x.to_vec();
    }
    let variance = dbm_to_watts(noise.power_dbm);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.iter()
        .map(|&v| v + complex_gaussian(&mut rng, variance))
        .collect()
}

pub fn quantize_adc(x: &[Complex64], adc: &AdcConfig) -> ComplexSequence {
    x.iter()
        .map(|v| Complex64::new(adc.quantize_rail(v.re), adc.quantize_rail(v.im)))
        .collect()
}

/// Largest `|I|` or `|Q|` over all streams.
pub fn peak_rail_amplitude(streams: &[ComplexSequence]) -> f64 {
    streams
        .iter()
        .flatten()
        .map(|v| v.re.abs().max(v.im.abs()))
        .fold(0.0, f64::max)
}

/// Outcome of [`calibrate_channel_gain`].
#[derive(Debug, Clone)]
pub struct Calibration {
    pub channel: MultipathChannel,
    /// Real amplitude factor applied to every tap.
    pub scale: f64,
}

/// Scales the channel by one real factor so that the probe, propagated
/// through it, arrives with mean per-antenna power `target_rx_power_dbm`.
///
/// Power is measured on samples `settle..`, after the channel memory has
/// filled.
pub fn calibrate_channel_gain(
    ch: &MultipathChannel,
    probe: &[ComplexSequence],
    target_rx_power_dbm: f64,
    settle: usize,
) -> Result<Calibration> {
    if !target_rx_power_dbm.is_finite() {
        return Err(invalid("target_rx_power_dbm", "must be finite"));
    }
    let rx = propagate(probe, ch)?;
    let len = rx[0].len();
    if settle >= len {
        return Err(Error::Dimension(format!(
            "probe of {len} samples is shorter than the settling time {settle}"
        )));
    }
    let total: f64 = rx.iter().map(|s| energy(&s[settle..])).sum();
    let measured = total / (rx.len() * (len - settle)) as f64;
    if !(measured > 0.0) {
        return Err(invalid("probe", "probe produces no received energy"));
    }
    let scale = (dbm_to_watts(target_rx_power_dbm) / measured).sqrt();
    debug_assert!((watts_to_dbm(measured * scale * scale) - target_rx_power_dbm).abs() < 1e-9);
    Ok(Calibration {
        channel: ch.scaled(scale),
        scale,
    })
}
