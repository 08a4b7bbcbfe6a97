//! Quasi-periodic XR downlink traffic.
//!
//! One video frame every `frame_interval_ms` (60 fps), each frame one MAC
//! SDU whose size and arrival jitter are truncated Gaussians. The generator
//! is a pure function of (params, rng stream), so per-UE generators run
//! independently.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SimError};

/// Parameters of the XR arrival process.
#[derive(Debug, Clone, PartialEq)]
pub struct XrTrafficParams {
    /// Nominal frame interval in milliseconds (16.6 ms = 60 fps).
    pub frame_interval_ms: f64,
    /// Mean SDU size in bits.
    pub mean_packet_bits: f64,
    /// Size standard deviation as a fraction of the mean.
    pub size_std_frac: f64,
    /// Lower size truncation as a fraction of the mean.
    pub size_min_frac: f64,
    /// Upper size truncation as a fraction of the mean.
    pub size_max_frac: f64,
    pub jitter_std_ms: f64,
    pub jitter_min_ms: f64,
    pub jitter_max_ms: f64,
}

impl Default for XrTrafficParams {
    fn default() -> Self {
        XrTrafficParams {
            frame_interval_ms: 16.6,
            mean_packet_bits: 1e6,
            size_std_frac: 0.105,
            size_min_frac: 0.5,
            size_max_frac: 1.5,
            jitter_std_ms: 2.0,
            jitter_min_ms: -4.0,
            jitter_max_ms: 4.0,
        }
    }
}

impl XrTrafficParams {
    pub fn validate(&self) -> Result<()> {
        if self.frame_interval_ms <= 0.0 {
            return Err(SimError::InvalidParameter("frame_interval_ms must be > 0".into()));
        }
        if !(self.size_min_frac < 1.0 && 1.0 < self.size_max_frac) {
            return Err(SimError::InvalidParameter(
                "size truncation must straddle the mean (size_min_frac < 1 < size_max_frac)".into(),
            ));
        }
        if self.jitter_min_ms >= self.jitter_max_ms {
            return Err(SimError::InvalidParameter("jitter_min_ms must be < jitter_max_ms".into()));
        }
        if self.size_std_frac < 0.0 || self.jitter_std_ms < 0.0 {
            return Err(SimError::InvalidParameter("std values must be >= 0".into()));
        }
        Ok(())
    }
}

/// One generated SDU arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SduArrival {
    /// First whole TTI at which the SDU exists and may be scheduled.
    pub arrival_tti: u64,
    pub size_bits: u64,
}

/// Gaussian(mean, std) conditioned on [lo, hi], via rejection sampling.
///
/// Rejection (rather than clipping) keeps the distribution free of
/// probability atoms at the bounds. `std = 0` returns `mean` clamped-checked
/// against the interval.
pub fn sample_truncated_gaussian<R: Rng + ?Sized>(
    mean: f64,
    std: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    if lo > hi {
        return Err(SimError::InvalidParameter(format!(
            "truncation interval is empty: lo={lo} > hi={hi}"
        )));
    }
    if std < 0.0 {
        return Err(SimError::InvalidParameter("std must be >= 0".into()));
    }
    if std == 0.0 {
        // Degenerate distribution; the conditioned value is the mean.
        if mean < lo || mean > hi {
            return Err(SimError::InvalidParameter(format!(
                "zero-variance Gaussian with mean {mean} outside [{lo}, {hi}]"
            )));
        }
        return Ok(mean);
    }
    let normal = Normal::new(mean, std)
        .map_err(|e| SimError::InvalidParameter(format!("bad Gaussian parameters: {e}")))?;
    loop {
        let x = normal.sample(rng);
        if (lo..=hi).contains(&x) {
            return Ok(x);
        }
    }
}

/// Generates the full arrival sequence for one UE over `horizon_ttis` TTIs.
///
/// Frame `n` (n >= 1) nominally lands at `n * frame_interval_ms + jitter_n`
/// and is stamped with the ceiling of that time in ms (1 TTI = 1 ms). Frames
/// past the horizon are dropped. With |jitter| bounded below half the frame
/// interval the arrival order is always preserved.
pub fn generate_arrivals<R: Rng + ?Sized>(
    params: &XrTrafficParams,
    horizon_ttis: u64,
    rng: &mut R,
) -> Result<Vec<SduArrival>> {
    params.validate()?;
    let size_mean = params.mean_packet_bits;
    let size_std = params.size_std_frac * size_mean;
    let size_lo = params.size_min_frac * size_mean;
    let size_hi = params.size_max_frac * size_mean;

    let mut out = Vec::with_capacity((horizon_ttis as f64 / params.frame_interval_ms) as usize + 2);
    let mut n = 1u64;
    loop {
        let jitter = sample_truncated_gaussian(
            0.0,
            params.jitter_std_ms,
            params.jitter_min_ms,
            params.jitter_max_ms,
            rng,
        )?;
        let nominal_ms = n as f64 * params.frame_interval_ms + jitter;
        let tti = nominal_ms.ceil().max(0.0) as u64;
        if tti > horizon_ttis {
            // Frames whose TTI exceeds the horizon are dropped; later frames
            // can only land later (order-preserving jitter), so stop.
            break;
        }
        let size = sample_truncated_gaussian(size_mean, size_std, size_lo, size_hi, rng)?;
        out.push(SduArrival { arrival_tti: tti, size_bits: size.round() as u64 });
        n += 1;
    }
    Ok(out)
}
