//! V2I link model: SNR, Shannon rate, slot-wise transmission-time inversion,
//! and the distributionally-robust reliability constraint with its
//! minimum-power solver.
//!
//! The reliability constraint is evaluated with the tight one-sided Chebyshev
//! (Cantelli) bound over all fading distributions with the configured mean
//! and variance: for the event |h|^2 >= a with a < mu the worst-case
//! probability is (mu - a)^2 / (sigma + (mu - a)^2), and 0 once a >= mu.

use thiserror::Error;

use crate::domain::ChannelConfig;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("distance must be > 0 (path loss singular at 0)")]
    ZeroDistance,
    #[error("payload size must be > 0 (got {0})")]
    NonPositiveSize(f64),
    #[error("no power satisfies the reliability constraint at delta = {delta}")]
    Infeasible { delta: f64 },
}

/// One vehicle-RSU link allocation at a slot.
#[derive(Debug, Clone, Copy)]
pub struct LinkAllocation {
    /// Transmission power in watts.
    pub tx_power: f64,
    /// Allocated bandwidth in Hz.
    pub bandwidth: f64,
    /// Fading gain sample |h|^2.
    pub fading_gain: f64,
    /// Vehicle-RSU distance in meters.
    pub distance: f64,
}

/// Linear SNR = |h|^2 * tau * dis^-phi * pi / N0.
pub fn snr(alloc: &LinkAllocation, params: &ChannelConfig) -> Result<f64, ChannelError> {
    if alloc.distance <= 0.0 {
        return Err(ChannelError::ZeroDistance);
    }
    Ok(alloc.fading_gain * params.antenna_const * alloc.distance.powf(-params.path_loss_exp)
        * alloc.tx_power
        / params.noise_w)
}

/// Shannon rate z = b * log2(1 + SNR) in bits/s.
pub fn rate(alloc: &LinkAllocation, params: &ChannelConfig) -> Result<f64, ChannelError> {
    Ok(alloc.bandwidth * (1.0 + snr(alloc, params)?).log2())
}

/// Outcome of inverting the cumulative-bits curve for one upload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    /// Duration g in seconds from the transmission start.
    Delivered { duration: f64 },
    /// The rate sequence ended (horizon or coverage loss) with bits left.
    Undelivered { remaining_bits: f64 },
}

/// Exact piecewise-linear inversion of the cumulative-bits integral for a
/// quasi-static channel: the rate is constant within each slot.
///
/// `start` is the absolute transmission start moment k (seconds); `rate_at`
/// maps a slot index to that slot's rate in bits/s, or `None` once the link
/// no longer exists.
pub fn transmission_time(
    size_bits: f64,
    start: f64,
    slot_length: f64,
    mut rate_at: impl FnMut(usize) -> Option<f64>,
) -> Result<Delivery, ChannelError> {
    if size_bits <= 0.0 {
        return Err(ChannelError::NonPositiveSize(size_bits));
    }
    let mut remaining = size_bits;
    let mut slot = (start / slot_length).floor() as usize;
    let mut cursor = start;
    loop {
        let Some(z) = rate_at(slot) else {
            return Ok(Delivery::Undelivered {
                remaining_bits: remaining,
            });
        };
        let slot_end = (slot as f64 + 1.0) * slot_length;
        let span = slot_end - cursor;
        if z > 0.0 && remaining <= z * span {
            let duration = cursor + remaining / z - start;
            return Ok(Delivery::Delivered { duration });
        }
        remaining -= z * span;
        cursor = slot_end;
        slot += 1;
    }
}

/// a(pi): the fading-gain level the channel must reach for SNR >= SNR_tgt.
fn required_gain(tx_power: f64, distance: f64, params: &ChannelConfig) -> f64 {
    if tx_power <= 0.0 {
        return f64::INFINITY;
    }
    params.noise_w * params.snr_target * distance.powf(params.path_loss_exp)
        / (params.antenna_const * tx_power)
}

/// Worst-case Pr(SNR >= SNR_tgt) over the moment-constrained ambiguity set.
pub fn worst_case_reliability(tx_power: f64, distance: f64, params: &ChannelConfig) -> f64 {
    if params.snr_target <= 0.0 {
        return 1.0;
    }
    let a = required_gain(tx_power, distance, params);
    let gap = params.fading_mean - a;
    if gap <= 0.0 {
        return 0.0;
    }
    gap * gap / (params.fading_variance + gap * gap)
}

/// Whether the reliability constraint inf Pr(SNR >= SNR_tgt) >= delta holds.
pub fn reliability_holds(tx_power: f64, distance: f64, params: &ChannelConfig) -> bool {
    worst_case_reliability(tx_power, distance, params) >= params.reliability
}

/// Smallest power with [`reliability_holds`] true, by inverting the Cantelli
/// bound: a* = mu - sqrt(delta * sigma / (1 - delta)), pi* = N0 * SNR_tgt *
/// dis^phi / (tau * a*). Infeasible when a* <= 0.
pub fn min_reliable_power(distance: f64, params: &ChannelConfig) -> Result<f64, ChannelError> {
    if params.snr_target <= 0.0 {
        return Ok(0.0);
    }
    let delta = params.reliability;
    let a_star =
        params.fading_mean - (delta * params.fading_variance / (1.0 - delta)).sqrt();
    if a_star <= 0.0 {
        return Err(ChannelError::Infeasible { delta });
    }
    let power = params.noise_w * params.snr_target * distance.powf(params.path_loss_exp)
        / (params.antenna_const * a_star);
    // nudge past the boundary so reliability_holds(pi*) is true despite rounding
    Ok(power * (1.0 + 1e-9))
}
