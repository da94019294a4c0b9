//! Precoder design procedures: the squint-aware optimizer, the controlled-squint
//! benchmark, the dedicated and TTD-free baselines, and their shared solvers.

mod cbs;
mod pipelines;
mod power;
mod ps;
mod ttd_search;

pub use cbs::{choose_cbs_directions, fit_objective, fit_ttd_ps, fit_ttd_ps_alternating, FitReport};
pub use pipelines::{
    cbs_isac, com_dedicated, opt_without_ttd, sa_opt, sa_opt_with_report, sensing_dedicated, SaOptReport,
};
pub use power::{allocate_power, kkt_residuals, power_objective, water_filling, KktResiduals};
pub use ps::{ps_objective, update_ps};
pub use ttd_search::{optimize_ttd_correlation, optimize_ttd_from, TtdSearch};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{ChannelRealization, SystemConfig};
use crate::precoder::PrecoderState;
use crate::{Error, Result};

/// Knobs shared by every scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Weight of the echo array gain in the phase-shifter objective.
    pub eta: f64,
    /// Per-subcarrier user SNR threshold, linear.
    pub gamma: f64,
    /// Sweeps of the TTD coordinate search.
    pub n_iter: usize,
    /// Alternating phase-shifter / power rounds; 0 skips the stage entirely.
    pub n_ao: usize,
    /// Stationarity tolerance of the alternating TTD/PS fit.
    pub fit_tol: f64,
    /// Iteration cap of the alternating TTD/PS fit.
    pub fit_max_iter: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { eta: 1.0, gamma: 0.0, n_iter: 3, n_ao: 5, fit_tol: 1e-8, fit_max_iter: 100_000 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::Config(format!("eta must be finite and non-negative, got {}", self.eta)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be finite and non-negative, got {}", self.gamma)));
        }
        if self.n_iter == 0 {
            return Err(Error::Config("n_iter must be at least 1".into()));
        }
        if !(self.fit_tol > 0.0) || self.fit_max_iter == 0 {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn with_eta_gamma(&self, eta: f64, gamma: f64) -> Self {
        Self { eta, gamma, ..self.clone() }
    }
}

/// Registry of the schemes the CLI can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    SaOpt,
    Cbs,
    Com,
    Sense,
    NoTtd,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::SaOpt, Scheme::Cbs, Scheme::Com, Scheme::Sense, Scheme::NoTtd];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::SaOpt => "sa-opt",
            Scheme::Cbs => "cbs",
            Scheme::Com => "com",
            Scheme::Sense => "sense",
            Scheme::NoTtd => "no-ttd",
        }
    }

    /// Whether the scheme reads `eta` or `gamma`, i.e. whether sweeping them can trace a boundary.
    pub fn is_tunable(self) -> bool {
        matches!(self, Scheme::SaOpt | Scheme::Cbs | Scheme::NoTtd)
    }

    pub fn run(self, realization: &ChannelRealization, cfg: &SystemConfig, opt: &OptimizerConfig) -> Result<PrecoderState> {
        match self {
            Scheme::SaOpt => sa_opt(realization, cfg, opt),
            Scheme::Cbs => cbs_isac(realization, cfg, opt),
            Scheme::Com => com_dedicated(realization, cfg, opt),
            Scheme::Sense => sensing_dedicated(realization, cfg, opt),
            Scheme::NoTtd => opt_without_ttd(realization, cfg, opt),
        }
    }

    /// Runs the scheme, halving `gamma` on infeasibility until it succeeds or reaches 0.
    ///
    /// Returns the state and the threshold actually used.
    pub fn run_with_backoff(
        self,
        realization: &ChannelRealization,
        cfg: &SystemConfig,
        opt: &OptimizerConfig,
    ) -> Result<(PrecoderState, f64)> {
        with_gamma_backoff(opt, |o| self.run(realization, cfg, o))
    }
}

/// Retries `f` with `gamma` halved on [`Error::Infeasible`], finishing with `gamma = 0`.
pub fn with_gamma_backoff<T>(
    opt: &OptimizerConfig,
    mut f: impl FnMut(&OptimizerConfig) -> Result<T>,
) -> Result<(T, f64)> {
    let mut o = opt.clone();
    for _ in 0..40 {
        match f(&o) {
            Err(Error::Infeasible { .. }) if o.gamma > 0.0 => {
                log::debug!("gamma {} infeasible, halving", o.gamma);
                o.gamma /= 2.0;
            }
            other => return other.map(|v| (v, o.gamma)),
        }
    }
    o.gamma = 0.0;
    f(&o).map(|v| (v, 0.0))
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::UnknownScheme(s.to_string()))
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.name().to_string()
    }
}
