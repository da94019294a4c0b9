use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::metrics::{effective_gains, unit_power_crb_weights};
use crate::model::{ChannelRealization, Direction, SystemConfig};
use crate::precoder::{PhaseShifters, PowerAllocation, PrecoderState, TtdGrid};
use crate::schemes::cbs::sweep_directions;
use crate::schemes::{
    allocate_power, choose_cbs_directions, fit_ttd_ps, optimize_ttd_correlation, power_objective, ps_objective,
    update_ps, water_filling, OptimizerConfig, TtdSearch,
};
use crate::Result;

/// Salt mixed into the realization seed for the optimizers' random starts.
const INIT_SALT: u64 = 0x5EED_1A17_0000_0001;

fn init_rng(realization: &ChannelRealization) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(realization.seed ^ INIT_SALT)
}

fn random_phases<R: Rng>(rng: &mut R, cfg: &SystemConfig) -> PhaseShifters {
    PhaseShifters::from_phases((0..cfg.n_t()).map(|_| rng.random_range(0.0..std::f64::consts::TAU)))
}

/// Squint-aware optimizer output with per-round diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SaOptReport {
    pub state: PrecoderState,
    pub ttd_search: TtdSearch,
    /// Phase-shifter objective after each PS update.
    pub ps_objective: Vec<f64>,
    /// `Σ q_m / p_m` after each power update.
    pub power_objective: Vec<f64>,
}

/// Rate-constrained CRB-minimizing power for the current analog precoder.
fn crb_power(
    realization: &ChannelRealization,
    state: &PrecoderState,
    gamma: f64,
    cfg: &SystemConfig,
) -> Result<(PowerAllocation, f64)> {
    let q = unit_power_crb_weights(&realization.scene, state, cfg);
    let hbar = effective_gains(&realization.comm, state, cfg);
    let p = allocate_power(&q, &hbar, gamma * cfg.sigma_c2, cfg.power_budget())?;
    let obj = power_objective(&q, &p.p);
    Ok((p, obj))
}

/// `n_ao` rounds of the closed-form PS update followed by the power update.
fn alternate(
    realization: &ChannelRealization,
    mut state: PrecoderState,
    cfg: &SystemConfig,
    opt: &OptimizerConfig,
    ps_trace: &mut Vec<f64>,
    power_trace: &mut Vec<f64>,
) -> Result<PrecoderState> {
    for _ in 0..opt.n_ao {
        state.ps = update_ps(realization, &state.ttd, &state.power, opt.eta, cfg);
        ps_trace.push(ps_objective(realization, &state.ttd, &state.ps, &state.power, opt.eta, cfg));
        let (p, obj) = crb_power(realization, &state, opt.gamma, cfg)?;
        state.power = p;
        power_trace.push(obj);
    }
    Ok(state)
}

/// Squint-aware optimization: TTD correlation search, then alternating PS and power updates.
pub fn sa_opt(realization: &ChannelRealization, cfg: &SystemConfig, opt: &OptimizerConfig) -> Result<PrecoderState> {
    Ok(sa_opt_with_report(realization, cfg, opt)?.state)
}

pub fn sa_opt_with_report(
    realization: &ChannelRealization,
    cfg: &SystemConfig,
    opt: &OptimizerConfig,
) -> Result<SaOptReport> {
    opt.validate()?;
    let mut rng = init_rng(realization);
    let ttd_search = optimize_ttd_correlation(realization, cfg, opt, &mut rng)?;
    let state = PrecoderState {
        ttd: ttd_search.ttd.clone(),
        ps: random_phases(&mut rng, cfg),
        power: PowerAllocation::uniform(cfg),
    };
    let (mut ps_objective, mut power_objective) = (Vec::new(), Vec::new());
    let state = alternate(realization, state, cfg, opt, &mut ps_objective, &mut power_objective)?;
    Ok(SaOptReport { state, ttd_search, ps_objective, power_objective })
}

/// The same alternation with every delay held at zero.
pub fn opt_without_ttd(
    realization: &ChannelRealization,
    cfg: &SystemConfig,
    opt: &OptimizerConfig,
) -> Result<PrecoderState> {
    opt.validate()?;
    let mut rng = init_rng(realization);
    let state = PrecoderState {
        ttd: TtdGrid::zeros(cfg),
        ps: random_phases(&mut rng, cfg),
        power: PowerAllocation::uniform(cfg),
    };
    alternate(realization, state, cfg, opt, &mut Vec::new(), &mut Vec::new())
}

fn fitted_state(directions: &[Direction], cfg: &SystemConfig) -> Result<PrecoderState> {
    let fit = fit_ttd_ps(directions, cfg)?;
    Ok(PrecoderState { ttd: fit.ttd, ps: fit.ps, power: PowerAllocation::uniform(cfg) })
}

/// Controlled beam squint: per-subcarrier sweep over the user and targets, then CRB power.
pub fn cbs_isac(realization: &ChannelRealization, cfg: &SystemConfig, opt: &OptimizerConfig) -> Result<PrecoderState> {
    opt.validate()?;
    let mut state = fitted_state(&choose_cbs_directions(realization, cfg), cfg)?;
    state.power = crb_power(realization, &state, opt.gamma, cfg)?.0;
    Ok(state)
}

/// All beams on the user with water-filling power.
pub fn com_dedicated(
    realization: &ChannelRealization,
    cfg: &SystemConfig,
    opt: &OptimizerConfig,
) -> Result<PrecoderState> {
    opt.validate()?;
    let mut state = fitted_state(&vec![realization.comm.user; cfg.subcarriers], cfg)?;
    let gains: Vec<f64> = effective_gains(&realization.comm, &state, cfg)
        .iter()
        .map(|g| g.norm_sqr() / cfg.sigma_c2)
        .collect();
    state.power = water_filling(&gains, cfg.power_budget())?;
    Ok(state)
}

/// Beams swept over the targets only, with unconstrained CRB power.
pub fn sensing_dedicated(
    realization: &ChannelRealization,
    cfg: &SystemConfig,
    opt: &OptimizerConfig,
) -> Result<PrecoderState> {
    opt.validate()?;
    let targets: Vec<Direction> = realization.scene.targets.iter().map(|t| t.dir).collect();
    let dirs = if targets.is_empty() {
        vec![realization.comm.user; cfg.subcarriers]
    } else {
        sweep_directions(&targets, cfg.subcarriers)
    };
    let mut state = fitted_state(&dirs, cfg)?;
    state.power = crb_power(realization, &state, 0.0, cfg)?.0;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{evaluate, rate};
    use crate::model::sample_realization;

    #[test]
    fn states_satisfy_hardware_invariants() {
        let cfg = SystemConfig::desk().with_snr_db(10.0);
        let opt = OptimizerConfig { gamma: 0.5, ..Default::default() };
        for seed in 0..5 {
            let r = sample_realization(seed, &cfg, 0.1).unwrap();
            for s in crate::schemes::Scheme::ALL {
                let (state, _) = s.run_with_backoff(&r, &cfg, &opt).unwrap();
                state.validate(&cfg).unwrap();
                assert!(state.power.total() <= cfg.power_budget() * (1.0 + 1e-9));
                evaluate(&r, &state, &cfg).unwrap();
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SystemConfig::desk();
        let r = sample_realization(11, &cfg, 0.1).unwrap();
        let opt = OptimizerConfig::default();
        assert_eq!(sa_opt(&r, &cfg, &opt).unwrap(), sa_opt(&r, &cfg, &opt).unwrap());
        assert_eq!(cbs_isac(&r, &cfg, &opt).unwrap(), cbs_isac(&r, &cfg, &opt).unwrap());
    }

    #[test]
    fn report_is_consistent() {
        let cfg = SystemConfig::desk();
        let r = sample_realization(12, &cfg, 0.1).unwrap();
        let opt = OptimizerConfig::default();
        let rep = sa_opt_with_report(&r, &cfg, &opt).unwrap();
        assert_eq!(rep.ps_objective.len(), opt.n_ao);
        assert_eq!(rep.power_objective.len(), opt.n_ao);
        assert_eq!(rep.state.ttd, rep.ttd_search.ttd);
        let ablation = sa_opt_with_report(&r, &cfg, &OptimizerConfig { n_ao: 0, ..opt }).unwrap();
        assert!(ablation.ps_objective.is_empty());
        assert_eq!(ablation.state.ttd, rep.state.ttd);
        assert_eq!(ablation.state.power, PowerAllocation::uniform(&cfg));
    }

    #[test]
    fn single_subcarrier_makes_delays_irrelevant() {
        let cfg = SystemConfig { subcarriers: 1, ..SystemConfig::desk() };
        let opt = OptimizerConfig::default();
        for seed in 0..5 {
            let r = sample_realization(seed, &cfg, 0.1).unwrap();
            let a = evaluate(&r, &sa_opt(&r, &cfg, &opt).unwrap(), &cfg).unwrap();
            let b = evaluate(&r, &opt_without_ttd(&r, &cfg, &opt).unwrap(), &cfg).unwrap();
            assert!((a.rate - b.rate).abs() <= 1e-9 * a.rate);
            assert!((a.crb - b.crb).abs() <= 1e-9 * a.crb);
        }
    }

    #[test]
    fn com_dedicated_without_targets_is_squint_compensated() {
        let cfg = SystemConfig::desk().with_snr_db(10.0);
        let opt = OptimizerConfig::default();
        let mut r = sample_realization(2, &cfg, 0.1).unwrap();
        let com = com_dedicated(&r, &cfg, &opt).unwrap();
        r.scene = crate::model::SensingScene::new(vec![], &cfg).unwrap();
        let dirs = choose_cbs_directions(&r, &cfg);
        let fit = fit_ttd_ps(&dirs, &cfg).unwrap();
        assert_eq!(fit.ttd, com.ttd);
        assert!(rate(&r.comm, &com, &cfg) > 0.0);
    }
}
