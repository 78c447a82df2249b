//! OFDM baseband generator for the interfering base station's downlink.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::{dbm_to_watts, mean_power, ComplexSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmConfig {
    pub fft_size: usize,
    /// Active subcarriers, centred on DC.
    pub occupied_subcarriers: usize,
    pub cp_len: usize,
    /// Square QAM order (4, 16, 64, ...).
    pub qam_order: u32,
    pub sample_rate_hz: f64,
    pub bandwidth_hz: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            occupied_subcarriers: 111,
            cp_len: 72,
            qam_order: 16,
            sample_rate_hz: 120e6,
            bandwidth_hz: 13e6,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 {
            return Err(invalid("fft_size", "must be at least 2"));
        }
        if self.occupied_subcarriers == 0 || self.occupied_subcarriers >= self.fft_size {
            return Err(invalid(
                "occupied_subcarriers",
                format!("must be in 1..{}", self.fft_size),
            ));
        }
        if self.cp_len >= self.fft_size {
            return Err(invalid("cp_len", "must be shorter than the FFT"));
        }
        let side = (self.qam_order as f64).sqrt() as u32;
        if self.qam_order < 4 || side * side != self.qam_order || !side.is_power_of_two() {
            return Err(invalid(
                "qam_order",
                format!("must be a square power of four, got {}", self.qam_order),
            ));
        }
        if !(self.sample_rate_hz > 0.0 && self.bandwidth_hz > 0.0) {
            return Err(invalid("sample_rate_hz", "rates must be positive"));
        }
        let occupied = self.occupied_bandwidth_hz();
        if (occupied - self.bandwidth_hz).abs() > 0.05 * self.bandwidth_hz {
            return Err(invalid(
                "occupied_subcarriers",
                format!(
                    "occupy {:.3} MHz, more than 5% away from the {:.3} MHz bandwidth",
                    occupied / 1e6,
                    self.bandwidth_hz / 1e6
                ),
            ));
        }
        Ok(())
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.sample_rate_hz / self.fft_size as f64
    }

    pub fn occupied_bandwidth_hz(&self) -> f64 {
        self.occupied_subcarriers as f64 * self.subcarrier_spacing_hz()
    }

    /// Signed subcarrier indices in use, lowest first.
    pub fn subcarriers(&self) -> impl Iterator<Item = i64> {
        let low = -((self.occupied_subcarriers / 2) as i64);
        low..low + self.occupied_subcarriers as i64
    }

    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_len
    }
}

/// Uniformly drawn square-QAM point, unit average energy.
fn qam_symbol(rng: &mut ChaCha8Rng, order: u32) -> Complex64 {
    let side = (order as f64).sqrt() as u32;
    // Mean energy of the unnormalized grid {±1, ±3, ...}^2.
    let norm = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
    let level = |k: u32| (2 * k) as f64 - (side - 1) as f64;
    Complex64::new(
        level(rng.random_range(0..side)),
        level(rng.random_range(0..side)),
    ) / norm
}

/// Independent random-QAM OFDM streams, one per antenna, each scaled to
/// `tx_power_dbm` measured over the returned samples.
pub fn gen_ofdm(
    cfg: &OfdmConfig,
    n_antennas: usize,
    n_samples: usize,
    tx_power_dbm: f64,
    seed: u64,
) -> Result<Vec<ComplexSequence>> {
    cfg.validate()?;
    if n_antennas == 0 {
        return Err(Error::Dimension("need at least one antenna".into()));
    }
    if n_samples < cfg.symbol_len() {
        return Err(invalid(
            "n_samples",
            format!("need at least one symbol ({} samples)", cfg.symbol_len()),
        ));
    }
    if !tx_power_dbm.is_finite() {
        return Err(invalid("tx_power_dbm", "must be finite"));
    }
    let n_fft = cfg.fft_size;
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n_fft);
    let n_symbols = n_samples.div_ceil(cfg.symbol_len());
    let target = dbm_to_watts(tx_power_dbm);

    let mut streams = Vec::with_capacity(n_antennas);
    for antenna in 0..n_antennas {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(antenna as u64);
        let mut out = Vec::with_capacity(n_symbols * cfg.symbol_len());
        let mut grid = vec![Complex64::default(); n_fft];
        for _ in 0..n_symbols {
            grid.fill(Complex64::default());
            for k in cfg.subcarriers() {
                grid[k.rem_euclid(n_fft as i64) as usize] = qam_symbol(&mut rng, cfg.qam_order);
            }
            ifft.process(&mut grid);
            out.extend_from_slice(&grid[n_fft - cfg.cp_len..]);
            out.extend_from_slice(&grid);
        }
        out.truncate(n_samples);
        let gain = (target / mean_power(&out)).sqrt();
        out.iter_mut().for_each(|v| *v *= gain);
        streams.push(out);
    }
    Ok(streams)
}
