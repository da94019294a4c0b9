use crate::model::{ChannelRealization, SystemConfig};
use crate::precoder::{ttd_phase_profile, PhaseShifters, PowerAllocation, TtdGrid};
use crate::{CVector, C64};

/// Closed-form phase-shifter update:
/// `φ = ∠ Σ_m √p_m (h̃_m + (η/N_r) G̃_m^H 1)` with `h̃ = F^H h` and `G̃ = G F`.
///
/// Entries whose aggregate vanishes get phase 0.
pub fn update_ps(
    realization: &ChannelRealization,
    ttd: &TtdGrid,
    power: &PowerAllocation,
    eta: f64,
    cfg: &SystemConfig,
) -> PhaseShifters {
    let n_t = cfg.n_t();
    let weight = eta / cfg.n_r() as f64;
    let mut agg = CVector::zeros(n_t);
    for m in 0..cfg.subcarriers {
        let geom = &realization.scene.geometry[m];
        // G^H 1 = Σ_k conj(α_k) a_t,k (a_r,k^H 1)
        let mut echo = CVector::zeros(n_t);
        for k in 0..geom.alpha.len() {
            let rx_sum: C64 = geom.ar.column(k).iter().map(|v| v.conj()).sum();
            echo += geom.at.column(k) * (geom.alpha[k].conj() * rx_sum);
        }
        let v = &realization.comm.h[m] + echo * C64::from(weight);
        let profile = ttd_phase_profile(ttd, cfg.freq(m), cfg);
        agg += v.component_mul(&profile.map(|c| c.conj())) * C64::from(power.p[m].max(0.0).sqrt());
    }
    let zeros = agg.iter().filter(|v| v.norm() == 0.0).count();
    if zeros > 0 {
        log::warn!("phase-shifter aggregate vanishes on {zeros} antennas, using phase 0");
    }
    PhaseShifters::from_phases(agg.iter().map(|v| if v.norm() == 0.0 { 0.0 } else { v.arg() }))
}

/// `Σ_m p_m [|h̃_m^H f|² + (η/N_r) ‖G̃_m f‖²]`, the quantity the PS update targets.
pub fn ps_objective(
    realization: &ChannelRealization,
    ttd: &TtdGrid,
    ps: &PhaseShifters,
    power: &PowerAllocation,
    eta: f64,
    cfg: &SystemConfig,
) -> f64 {
    let f = ps.weights();
    (0..cfg.subcarriers)
        .map(|m| {
            let w = ttd_phase_profile(ttd, cfg.freq(m), cfg).component_mul(&f);
            let comm = realization.comm.h[m].dotc(&w).norm_sqr();
            let echo = (realization.scene.response(m) * &w).norm_squared();
            power.p[m] * (comm + eta / cfg.n_r() as f64 * echo)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_realization, SensingScene};
    use crate::precoder::wrap_phase;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn communication_only_alignment_reaches_l1_norm() {
        let cfg = SystemConfig { subcarriers: 1, targets: 1, ..SystemConfig::desk() };
        let mut r = sample_realization(8, &cfg, 0.1).unwrap();
        r.scene = SensingScene::new(vec![], &cfg).unwrap();
        let mut ttd = TtdGrid::zeros(&cfg);
        ttd.set(2, cfg.ttd_step() * 5.0);
        let power = PowerAllocation { p: vec![0.7] };
        let ps = update_ps(&r, &ttd, &power, 0.0, &cfg);
        let profile = ttd_phase_profile(&ttd, cfg.freq(0), &cfg);
        let h_eq = r.comm.h[0].component_mul(&profile.map(|c| c.conj()));
        let gain = h_eq.dotc(&ps.weights()).norm();
        let l1: f64 = h_eq.iter().map(|v| v.norm()).sum();
        assert!((gain - l1).abs() < 1e-12 * l1);
        assert!(ps.phases.iter().all(|p| (0.0..2.0 * std::f64::consts::PI).contains(p)));
    }

    #[test]
    fn beats_random_phases() {
        let cfg = SystemConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..100 {
            let r = sample_realization(seed, &cfg, 0.1).unwrap();
            let mut ttd = TtdGrid::zeros(&cfg);
            for q in 0..cfg.q_t() {
                ttd.set(q, cfg.ttd_grid()[rng.random_range(0..16)]);
            }
            let power = PowerAllocation { p: (0..cfg.subcarriers).map(|_| rng.random_range(0.1..1.0)).collect() };
            let eta = rng.random_range(0.0..3.0);
            let ps = update_ps(&r, &ttd, &power, eta, &cfg);
            let random = PhaseShifters::from_phases((0..cfg.n_t()).map(|_| rng.random_range(0.0..7.0)));
            assert!(ps_objective(&r, &ttd, &ps, &power, eta, &cfg) >= ps_objective(&r, &ttd, &random, &power, eta, &cfg));
        }
    }

    #[test]
    fn common_power_scale_is_irrelevant() {
        let cfg = SystemConfig::desk();
        let r = sample_realization(2, &cfg, 0.2).unwrap();
        let ttd = TtdGrid::zeros(&cfg);
        let power = PowerAllocation { p: (0..cfg.subcarriers).map(|m| 0.1 + m as f64).collect() };
        let a = update_ps(&r, &ttd, &power, 1.0, &cfg);
        let b = update_ps(&r, &ttd, &power.scaled(37.0), 1.0, &cfg);
        for (x, y) in a.phases.iter().zip(&b.phases) {
            let d = wrap_phase(x - y);
            assert!(d.min(2.0 * std::f64::consts::PI - d) < 1e-12);
        }
    }

    #[test]
    fn matches_dense_echo_sum() {
        let cfg = SystemConfig::desk();
        let r = sample_realization(9, &cfg, 0.3).unwrap();
        let ttd = TtdGrid::zeros(&cfg);
        let power = PowerAllocation::uniform(&cfg);
        let ps = update_ps(&r, &ttd, &power, 2.0, &cfg);
        let mut agg = CVector::zeros(cfg.n_t());
        for m in 0..cfg.subcarriers {
            let g = r.scene.response(m);
            let ones = CVector::from_element(cfg.n_r(), C64::new(1.0, 0.0));
            agg += (&r.comm.h[m] + g.adjoint() * ones * C64::from(2.0 / cfg.n_r() as f64)) * C64::from(power.p[m].sqrt());
        }
        for (p, a) in ps.phases.iter().zip(agg.iter()) {
            let d = wrap_phase(p - a.arg());
            assert!(d.min(2.0 * std::f64::consts::PI - d) < 1e-10);
        }
    }
}
