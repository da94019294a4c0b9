//! Hybrid TTD + phase-shifter + per-subcarrier power hardware model.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::SystemConfig;
use crate::{CVector, Error, Result, RMatrix, C64};

/// Nearest TTD grid value to `t`; midpoints round down, out-of-range inputs clamp first.
pub fn ttd_quantize(t: f64, cfg: &SystemConfig) -> f64 {
    let step = cfg.ttd_step();
    let top = (cfg.ttd_levels() - 1) as f64;
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, cfg.t_max) };
    let x = t / step;
    let lower = x.floor();
    let b = if x - lower > 0.5 { lower + 1.0 } else { lower };
    b.min(top) * step
}

/// Delay matrix `T` of size `Q_th × Q_tv`, seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TtdGrid {
    pub delays: RMatrix,
}

impl TtdGrid {
    pub fn zeros(cfg: &SystemConfig) -> Self {
        Self { delays: RMatrix::zeros(cfg.q_th, cfg.q_tv) }
    }

    /// Delay of the subarray with row-major index `q`.
    pub fn get(&self, q: usize) -> f64 {
        let cols = self.delays.ncols();
        self.delays[(q / cols, q % cols)]
    }

    pub fn set(&mut self, q: usize, t: f64) {
        let cols = self.delays.ncols();
        self.delays[(q / cols, q % cols)] = t;
    }

    pub fn quantized(&self, cfg: &SystemConfig) -> Self {
        Self { delays: self.delays.map(|t| ttd_quantize(t, cfg)) }
    }

    pub fn is_quantized(&self, cfg: &SystemConfig) -> bool {
        self.delays.iter().all(|&t| ttd_quantize(t, cfg) == t)
    }
}

/// Frequency-flat phase shifters, one per antenna, radians in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShifters {
    pub phases: Vec<f64>,
}

impl PhaseShifters {
    pub fn zeros(cfg: &SystemConfig) -> Self {
        Self { phases: vec![0.0; cfg.n_t()] }
    }

    /// Wraps arbitrary phases into `[0, 2π)`.
    pub fn from_phases(phases: impl IntoIterator<Item = f64>) -> Self {
        Self { phases: phases.into_iter().map(wrap_phase).collect() }
    }

    pub fn weights(&self) -> CVector {
        CVector::from_iterator(self.phases.len(), self.phases.iter().map(|&p| C64::from_polar(1.0, p)))
    }
}

pub(crate) fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI { 0.0 } else { w }
}

/// Per-subcarrier power, linear.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub p: Vec<f64>,
}

impl PowerAllocation {
    /// `P_t / (N_t M)` on every subcarrier.
    pub fn uniform(cfg: &SystemConfig) -> Self {
        Self { p: vec![cfg.power_budget() / cfg.subcarriers as f64; cfg.subcarriers] }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { p: self.p.iter().map(|v| v * c).collect() }
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// Full decision variable of every scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderState {
    pub ttd: TtdGrid,
    pub ps: PhaseShifters,
    pub power: PowerAllocation,
}

impl PrecoderState {
    /// Checks every hardware invariant: quantized delays, wrapped phases, feasible power.
    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.ttd.delays.shape() != (cfg.q_th, cfg.q_tv) {
            return Err(Error::Dimension(format!(
                "TTD grid is {:?}, expected ({}, {})",
                self.ttd.delays.shape(),
                cfg.q_th,
                cfg.q_tv
            )));
        }
        if !self.ttd.is_quantized(cfg) {
            return Err(Error::InvalidInput("TTD delays are not on the quantization grid".into()));
        }
        if self.ps.phases.len() != cfg.n_t() {
            return Err(Error::Dimension(format!("{} phases for {} antennas", self.ps.phases.len(), cfg.n_t())));
        }
        if self.ps.phases.iter().any(|p| !(0.0..2.0 * PI).contains(p)) {
            return Err(Error::InvalidInput("phase shifts must lie in [0, 2π)".into()));
        }
        if self.power.p.len() != cfg.subcarriers {
            return Err(Error::Dimension(format!("{} powers for {} subcarriers", self.power.p.len(), cfg.subcarriers)));
        }
        if self.power.p.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidInput("powers must be finite and non-negative".into()));
        }
        let budget = cfg.power_budget();
        if self.power.total() > budget * (1.0 + 1e-9) {
            return Err(Error::InvalidInput(format!(
                "total power {} exceeds budget {budget}",
                self.power.total()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&StateRecord::from(self))?)
    }

    pub fn from_json(text: &str, cfg: &SystemConfig) -> Result<Self> {
        let rec: StateRecord = serde_json::from_str(text)?;
        rec.into_state(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// JSON form `{ "T": [[seconds; Q_tv]; Q_th], "varphi": [radians; N_t], "p": [M] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRecord {
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
    pub varphi: Vec<f64>,
    pub p: Vec<f64>,
}

impl From<&PrecoderState> for StateRecord {
    fn from(s: &PrecoderState) -> Self {
        let d = &s.ttd.delays;
        Self {
            t: (0..d.nrows()).map(|r| (0..d.ncols()).map(|c| d[(r, c)]).collect()).collect(),
            varphi: s.ps.phases.clone(),
            p: s.power.p.clone(),
        }
    }
}

impl StateRecord {
    /// Converts to a state and checks it against the hardware invariants of `cfg`.
    pub fn into_state(self, cfg: &SystemConfig) -> Result<PrecoderState> {
        if self.t.len() != cfg.q_th || self.t.iter().any(|r| r.len() != cfg.q_tv) {
            return Err(Error::Dimension(format!("T must be {}x{}", cfg.q_th, cfg.q_tv)));
        }
        let delays = RMatrix::from_fn(cfg.q_th, cfg.q_tv, |r, c| self.t[r][c]);
        let state = PrecoderState {
            ttd: TtdGrid { delays },
            ps: PhaseShifters { phases: self.varphi },
            power: PowerAllocation { p: self.p },
        };
        state.validate(cfg)?;
        Ok(state)
    }
}

/// Diagonal of `F_TD` at frequency `f`: `e^{j2π f T[q_h, q_v]}` on every antenna of the subarray.
pub fn ttd_phase_profile(ttd: &TtdGrid, f: f64, cfg: &SystemConfig) -> CVector {
    let n_t = cfg.n_t();
    CVector::from_iterator(
        n_t,
        (0..n_t).map(|n| {
            let (qh, qv) = cfg.subarray_of(n);
            C64::from_polar(1.0, 2.0 * PI * f * ttd.delays[(qh, qv)])
        }),
    )
}

/// `F_TD,m f_PS` at 0-based subcarrier `m`; power is not applied.
pub(crate) fn effective_precoder_at(state: &PrecoderState, m: usize, cfg: &SystemConfig) -> CVector {
    let profile = ttd_phase_profile(&state.ttd, cfg.freq(m), cfg);
    profile.component_mul(&state.ps.weights())
}

/// `F_TD,m f_PS` at the 1-based subcarrier `m`.
pub fn effective_precoder(state: &PrecoderState, m: usize, cfg: &SystemConfig) -> Result<CVector> {
    if m == 0 || m > cfg.subcarriers {
        return Err(Error::SubcarrierIndex { index: m, count: cfg.subcarriers });
    }
    Ok(effective_precoder_at(state, m - 1, cfg))
}
