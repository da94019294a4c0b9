//! Rate, Fisher information / CRB, beamspace channels and the C-S correlation.

mod beamspace;
mod fisher;
mod rate;

pub use beamspace::{
    beamspace_channels, beamspace_profile, cs_correlation, kl_divergence, BeamspaceDictionary,
    BeamspaceProfile, EquivalentBeamspace, KL_FLOOR, KL_SMOOTHING,
};
pub use fisher::{
    crb, crb_from_fisher, fisher_blocks, fisher_from_factor, fisher_matrix, fisher_result,
    ridge_inverse_trace, unit_power_crb_weights, weighted_inverse_trace, FisherResult, CONDITION_CAP, RIDGE_FACTOR,
};
pub use rate::{effective_gains, rate};

use serde::{Deserialize, Serialize};

use crate::model::{ChannelRealization, SystemConfig};
use crate::precoder::PrecoderState;
use crate::Result;

/// Rate (bits per OFDM symbol), angle CRB (rad²) and C-S correlation of one precoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformancePoint {
    pub rate: f64,
    pub crb: f64,
    pub correlation: f64,
}

/// Scores `state` on `realization` with the critically-sampled dictionary of `cfg`.
pub fn evaluate(
    realization: &ChannelRealization,
    state: &PrecoderState,
    cfg: &SystemConfig,
) -> Result<PerformancePoint> {
    let dict = BeamspaceDictionary::uniform(cfg);
    evaluate_with(realization, state, &dict, cfg)
}

pub fn evaluate_with(
    realization: &ChannelRealization,
    state: &PrecoderState,
    dict: &BeamspaceDictionary,
    cfg: &SystemConfig,
) -> Result<PerformancePoint> {
    let rate = rate(&realization.comm, state, cfg);
    let crb = crb(&realization.scene, state, cfg)?;
    let (hc, hs) = beamspace_channels(&realization.comm, &realization.scene, Some(&state.ttd), dict, cfg)?;
    let correlation = cs_correlation(&hc, &hs)?;
    Ok(PerformancePoint { rate, crb, correlation })
}
