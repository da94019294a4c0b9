use rand::Rng;

use crate::metrics::{BeamspaceDictionary, EquivalentBeamspace};
use crate::model::{ChannelRealization, SystemConfig};
use crate::precoder::TtdGrid;
use crate::schemes::OptimizerConfig;
use crate::Result;

/// Outcome of the TTD coordinate search.
#[derive(Debug, Clone, PartialEq)]
pub struct TtdSearch {
    pub ttd: TtdGrid,
    pub correlation: f64,
    /// Correlation at the start and after every single-coordinate update.
    pub trace: Vec<f64>,
}

/// Coordinate search from a random on-grid start drawn from `rng`.
pub fn optimize_ttd_correlation<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    cfg: &SystemConfig,
    opt: &OptimizerConfig,
    rng: &mut R,
) -> Result<TtdSearch> {
    let grid = cfg.ttd_grid();
    let mut init = TtdGrid::zeros(cfg);
    for q in 0..cfg.q_t() {
        init.set(q, grid[rng.random_range(0..grid.len())]);
    }
    optimize_ttd_from(realization, init, &BeamspaceDictionary::uniform(cfg), cfg, opt)
}

/// `n_iter` sweeps over the subarrays in row-major order; each entry moves to the
/// grid value with the highest C-S correlation, keeping the current value on ties.
pub fn optimize_ttd_from(
    realization: &ChannelRealization,
    init: TtdGrid,
    dict: &BeamspaceDictionary,
    cfg: &SystemConfig,
    opt: &OptimizerConfig,
) -> Result<TtdSearch> {
    let grid = cfg.ttd_grid();
    let mut eq = EquivalentBeamspace::new(&realization.comm, &realization.scene, Some(&init), dict, cfg)?;
    let mut ttd = init;
    let mut best = eq.correlation()?;
    let mut trace = vec![best];
    for _ in 0..opt.n_iter {
        for q in 0..cfg.q_t() {
            let current = eq.delay(q);
            let mut choice = (current, eq.correlation_with(q, current)?);
            for &t in &grid {
                if t == current {
                    continue;
                }
                let c = eq.correlation_with(q, t)?;
                if c > choice.1 {
                    choice = (t, c);
                }
            }
            eq.set_delay(q, choice.0);
            ttd.set(q, choice.0);
            debug_assert!(choice.1 >= best * (1.0 - 1e-12), "coordinate update lowered the correlation");
            best = choice.1;
            trace.push(best);
        }
    }
    Ok(TtdSearch { ttd, correlation: best, trace })
}
