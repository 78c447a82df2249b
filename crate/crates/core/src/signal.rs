//! Baseband sample containers and power bookkeeping.
//!
//! Linear power is in watts (mean `|x|^2` of a sequence); logarithmic power
//! is in dBm.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Time-domain complex baseband samples of one antenna.
pub type ComplexSequence = Vec<Complex64>;

/// Converts dBm to watts. `-inf` maps to zero.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts watts to dBm. Zero maps to `-inf`.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Sum of `|x[n]|^2`.
pub fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

/// Mean of `|x[n]|^2`, or zero for an empty slice.
pub fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        energy(x) / x.len() as f64
    }
}

/// `10 log10(mean |x|^2) + 30`.
pub fn measure_power_dbm(x: &[Complex64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Empty("power measurement needs at least one sample"));
    }
    Ok(watts_to_dbm(mean_power(x)))
}

/// Power averaged over antennas (each antenna weighted by its sample count).
pub fn measure_power_dbm_multi(streams: &[ComplexSequence]) -> Result<f64> {
    let count: usize = streams.iter().map(Vec::len).sum();
    if count == 0 {
        return Err(Error::Empty("power measurement needs at least one sample"));
    }
    let total: f64 = streams.iter().map(|s| energy(s)).sum();
    Ok(watts_to_dbm(total / count as f64))
}

/// Checks that every stream has the same length and returns it.
pub fn common_length(streams: &[ComplexSequence]) -> Result<usize> {
    let first = streams
        .first()
        .ok_or(Error::Empty("at least one antenna stream is required"))?
        .len();
    if let Some((i, s)) = streams.iter().enumerate().find(|(_, s)| s.len() != first) {
        return Err(Error::Dimension(format!(
            "stream {i} has {} samples, stream 0 has {first}",
            s.len()
        )));
    }
    Ok(first)
}
