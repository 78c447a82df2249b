//! Dataset factory: waveform, RF chain and channel composed into aligned
//! (transmit data, received CLI) records.

mod io;
mod regressors;

use serde::{Deserialize, Serialize};

use crate::channel::{
    add_awgn, calibrate_channel_gain, draw_channel, peak_rail_amplitude, propagate, quantize_adc,
    AdcConfig, MultipathChannel, NoiseModel, PathLoss,
};
use crate::error::{invalid, Error, Result};
use crate::rf_chain::{transmit_chain, RfChainParams};
use crate::seed::{derive_seed, Purpose};
use crate::signal::{dbm_to_watts, ComplexSequence};
use crate::waveform::{gen_ofdm, OfdmConfig};

pub use io::{
    decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_FORMAT_VERSION, DATASET_MAGIC,
};
pub use regressors::{
    build_regressors, denormalize, label_matrix, normalize, regressor_matrix, streams_from_labels,
    Regressors,
};

/// Fraction of samples used for fitting; the rest is the test partition.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Small-scale fading of the BS-to-BS links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    #[default]
    Rayleigh,
    /// Unit gain between equally indexed antennas; requires `n_rx == n_tx`.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcSettings {
    pub bits: u32,
    /// Fixed clipping level; when absent it is `headroom` times the peak
    /// rail amplitude of the pre-ADC capture.
    pub full_scale: Option<f64>,
    pub headroom: f64,
}

impl Default for AdcSettings {
    fn default() -> Self {
        Self {
            bits: 12,
            full_scale: None,
            headroom: 1.2,
        }
    }
}

/// Everything needed to synthesize one clean-period capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Receive antennas at the interfered BS (`N0`).
    pub n_rx: usize,
    /// Transmit antennas at the interfering BS (`N_alpha`).
    pub n_tx: usize,
    /// Maximum multipath count `L`.
    pub n_taps: usize,
    /// Usable samples per antenna after the transient is dropped.
    pub n_samples: usize,
    pub tx_power_dbm: f64,
    /// Target mean per-antenna CLI power; `None` leaves the drawn channel unscaled.
    pub rx_cli_power_dbm: Option<f64>,
    /// AWGN power; `None` disables the noise.
    pub noise_power_dbm: Option<f64>,
    /// `None` disables quantization.
    pub adc: Option<AdcSettings>,
    pub ofdm: OfdmConfig,
    /// Impairments shared by every transmit antenna.
    pub rf: RfChainParams,
    /// Per-antenna impairments; overrides `rf` when present.
    pub per_antenna_rf: Option<Vec<RfChainParams>>,
    pub fading: Fading,
    pub pathloss: PathLoss,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_rx: 4,
            n_tx: 4,
            n_taps: 7,
            n_samples: 50_000,
            tx_power_dbm: 47.0,
            rx_cli_power_dbm: Some(-52.1),
            noise_power_dbm: Some(-90.0),
            adc: Some(AdcSettings::default()),
            ofdm: OfdmConfig::default(),
            rf: RfChainParams::default(),
            per_antenna_rf: None,
            fading: Fading::Rayleigh,
            pathloss: PathLoss::default(),
        }
    }
}

impl ScenarioConfig {
    /// Ideal RF, no noise, no ADC.
    pub fn noiseless_linear() -> Self {
        Self {
            noise_power_dbm: None,
            adc: None,
            rf: RfChainParams::ideal(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rx == 0 || self.n_tx == 0 {
            return Err(invalid("n_rx", "antenna counts must be positive"));
        }
        if self.n_taps == 0 {
            return Err(invalid("n_taps", "must be at least 1"));
        }
        if !self.tx_power_dbm.is_finite() {
            return Err(invalid("tx_power_dbm", "must be finite"));
        }
        if let Some(p) = self.rx_cli_power_dbm {
            if !p.is_finite() {
                return Err(invalid("rx_cli_power_dbm", "must be finite"));
            }
        }
        if let Some(p) = self.noise_power_dbm {
            if !p.is_finite() {
                return Err(invalid("noise_power_dbm", "must be finite (use null to disable)"));
            }
        }
        if let Some(adc) = &self.adc {
            AdcConfig::new(adc.bits, adc.full_scale.unwrap_or(1.0))?;
            if !(adc.headroom.is_finite() && adc.headroom > 0.0) {
                return Err(invalid("headroom", "must be finite and positive"));
            }
        }
        self.ofdm.validate()?;
        self.pathloss.validate()?;
        if let Some(per) = &self.per_antenna_rf {
            if per.len() != self.n_tx {
                return Err(invalid(
                    "per_antenna_rf",
                    format!("has {} entries for {} transmit antennas", per.len(), self.n_tx),
                ));
            }
        }
        for antenna in 0..self.n_tx {
            let rf = self.rf_for(antenna);
            crate::rf_chain::IqImbalance::new(rf.iq.gain, rf.iq.phase)?;
        }
        if self.fading == Fading::Identity && self.n_rx != self.n_tx {
            return Err(invalid("fading", "identity fading needs n_rx == n_tx"));
        }
        let depth = self.canceller_depth();
        let split = train_split(self.n_samples);
        if split < depth || self.n_samples - split < 1 {
            return Err(invalid(
                "n_samples",
                format!("{} samples leave no room for windows of depth {depth}", self.n_samples),
            ));
        }
        if self.n_samples + self.transient() < self.ofdm.symbol_len() {
            return Err(invalid("n_samples", "shorter than one OFDM symbol"));
        }
        Ok(())
    }

    pub fn rf_for(&self, antenna: usize) -> &RfChainParams {
        match &self.per_antenna_rf {
            Some(per) => &per[antenna],
            None => &self.rf,
        }
    }

    /// Largest PA memory `M` over the transmit antennas.
    pub fn pa_memory(&self) -> usize {
        (0..self.n_tx)
            .map(|a| self.rf_for(a).pa.memory())
            .max()
            .unwrap_or(0)
    }

    /// Highest PA nonlinearity order over the transmit antennas.
    pub fn pa_order(&self) -> usize {
        (0..self.n_tx)
            .map(|a| self.rf_for(a).pa.order())
            .max()
            .unwrap_or(1)
    }

    /// Memory span `M + L` of the composed chain.
    pub fn canceller_depth(&self) -> usize {
        self.pa_memory() + self.n_taps
    }

    /// Leading samples whose labels depend on pre-history zeros.
    pub fn transient(&self) -> usize {
        self.canceller_depth() - 1
    }
}

pub fn train_split(n_samples: usize) -> usize {
    (TRAIN_FRACTION * n_samples as f64).floor() as usize
}

/// Provenance stored alongside the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    /// Real factor applied to the drawn channel by the power calibration.
    pub channel_gain: f64,
    /// ADC clipping level actually used.
    pub adc_full_scale: Option<f64>,
}

/// Aligned transmit data and received CLI labels with normalization constants.
#[derive(Debug, Clone, PartialEq)]
pub struct CliDataset {
    /// `d[n_alpha][n]`.
    pub tx: Vec<ComplexSequence>,
    /// `s[n0][n]`.
    pub rx: Vec<ComplexSequence>,
    /// `max |d|` over the training partition.
    pub m1: f64,
    /// `max |s|` over the training partition.
    pub m2: f64,
    pub split_index: usize,
    pub meta: DatasetMeta,
}

pub(crate) fn peak_magnitude(streams: &[ComplexSequence], end: usize) -> f64 {
    streams
        .iter()
        .flat_map(|s| s[..end].iter())
        .map(|v| v.norm())
        .fold(0.0, f64::max)
}

impl CliDataset {
    /// Assembles a dataset, computing the split and the training-partition maxima.
    pub fn new(tx: Vec<ComplexSequence>, rx: Vec<ComplexSequence>, meta: DatasetMeta) -> Result<Self> {
        let n = crate::signal::common_length(&tx)?;
        if crate::signal::common_length(&rx)? != n {
            return Err(Error::Dimension("transmit and receive streams differ in length".into()));
        }
        let split_index = train_split(n);
        let m1 = peak_magnitude(&tx, split_index);
        let m2 = peak_magnitude(&rx, split_index);
        if !(m1 > 0.0 && m2 > 0.0) {
            return Err(invalid("dataset", "training partition is all zero"));
        }
        Ok(Self {
            tx,
            rx,
            m1,
            m2,
            split_index,
            meta,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.tx[0].len()
    }

    pub fn n_tx(&self) -> usize {
        self.tx.len()
    }

    pub fn n_rx(&self) -> usize {
        self.rx.len()
    }

    /// Window depth `M + L` for the generating scenario.
    pub fn depth(&self) -> usize {
        self.meta.scenario.canceller_depth()
    }

    /// Label indices whose full window lies in the training partition.
    pub fn train_rows(&self, depth: usize) -> std::ops::Range<usize> {
        depth.saturating_sub(1)..self.split_index
    }

    pub fn test_rows(&self) -> std::ops::Range<usize> {
        self.split_index..self.n_samples()
    }

    /// Labels restricted to `rows`, one stream per receive antenna.
    pub fn labels(&self, rows: std::ops::Range<usize>) -> Vec<ComplexSequence> {
        self.rx.iter().map(|s| s[rows.clone()].to_vec()).collect()
    }
}

/// A generated dataset with the ground truth that produced it.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: CliDataset,
    /// Channel after power calibration.
    pub channel: MultipathChannel,
    /// Per-antenna impairments with the PA referenced to the transmit power.
    pub rf: Vec<RfChainParams>,
    /// Labels before noise and quantization.
    pub clean_rx: Vec<ComplexSequence>,
}

pub fn generate_dataset(cfg: &ScenarioConfig, seed: u64) -> Result<CliDataset> {
    simulate(cfg, seed).map(|s| s.dataset)
}

pub fn simulate(cfg: &ScenarioConfig, seed: u64) -> Result<Simulation> {
    cfg.validate()?;
    let transient = cfg.transient();
    let raw_len = cfg.n_samples + transient;

    let d = gen_ofdm(
        &cfg.ofdm,
        cfg.n_tx,
        raw_len,
        cfg.tx_power_dbm,
        derive_seed(seed, Purpose::Waveform, 0),
    )?;

    let tx_watts = dbm_to_watts(cfg.tx_power_dbm);
    let rf = (0..cfg.n_tx)
        .map(|a| {
            let params = cfg.rf_for(a);
            Ok(RfChainParams {
                iq: params.iq,
                pa: params.pa.referenced_to(tx_watts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let radiated: Vec<ComplexSequence> = d
        .iter()
        .zip(&rf)
        .map(|(stream, p)| transmit_chain(stream, &p.iq, &p.pa))
        .collect();

    let drawn = match cfg.fading {
        Fading::Rayleigh => draw_channel(
            derive_seed(seed, Purpose::Channel, 0),
            cfg.n_rx,
            cfg.n_tx,
            cfg.n_taps,
            &cfg.pathloss,
        )?,
        Fading::Identity => MultipathChannel::identity(cfg.n_tx, cfg.n_taps)?
            .scaled(cfg.pathloss.amplitude_scale()),
    };
    let (channel, channel_gain) = match cfg.rx_cli_power_dbm {
        Some(target) => {
            let cal = calibrate_channel_gain(&drawn, &radiated, target, transient)?;
            (cal.channel, cal.scale)
        }
        None => (drawn, 1.0),
    };

    let clean = propagate(&radiated, &channel)?;
    let noise = NoiseModel {
        power_dbm: cfg.noise_power_dbm.unwrap_or(f64::NEG_INFINITY),
    };
    let mut received: Vec<ComplexSequence> = clean
        .iter()
        .enumerate()
        .map(|(r, s)| add_awgn(s, &noise, derive_seed(seed, Purpose::Noise, r as u32)))
        .collect();

    let adc_full_scale = match &cfg.adc {
        Some(settings) => {
            let kept: Vec<ComplexSequence> = received.iter().map(|s| s[transient..].to_vec()).collect();
            let full_scale = settings
                .full_scale
                .unwrap_or_else(|| settings.headroom * peak_rail_amplitude(&kept));
            let adc = AdcConfig::new(settings.bits, full_scale)?;
            received = received.iter().map(|s| quantize_adc(s, &adc)).collect();
            Some(full_scale)
        }
        None => None,
    };

    let trim = |streams: Vec<ComplexSequence>| -> Vec<ComplexSequence> {
        streams.into_iter().map(|s| s[transient..].to_vec()).collect()
    };
    let meta = DatasetMeta {
        seed,
        scenario: cfg.clone(),
        channel_gain,
        adc_full_scale,
    };
    let dataset = CliDataset::new(trim(d), trim(received), meta)?;
    Ok(Simulation {
        dataset,
        channel,
        rf,
        clean_rx: trim(clean),
    })
}
