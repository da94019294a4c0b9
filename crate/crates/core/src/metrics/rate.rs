use crate::model::{CommChannel, SystemConfig};
use crate::precoder::{effective_precoder_at, PrecoderState};
use crate::C64;

/// Equivalent scalar channels `h_m^H F_TD,m f_PS`, one per subcarrier.
pub fn effective_gains(comm: &CommChannel, state: &PrecoderState, cfg: &SystemConfig) -> Vec<C64> {
    (0..cfg.subcarriers)
        .map(|m| comm.h[m].dotc(&effective_precoder_at(state, m, cfg)))
        .collect()
}

/// Achievable rate `Σ_m log2(1 + p_m |h_m^H F_TD,m f_PS|² / σ_c²)`, bits per OFDM symbol.
pub fn rate(comm: &CommChannel, state: &PrecoderState, cfg: &SystemConfig) -> f64 {
    effective_gains(comm, state, cfg)
        .iter()
        .zip(&state.power.p)
        .map(|(g, p)| (1.0 + p * g.norm_sqr() / cfg.sigma_c2).log2())
        .sum()
}
