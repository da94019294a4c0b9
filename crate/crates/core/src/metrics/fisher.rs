use nalgebra::SymmetricEigen;
use twofloat::TwoFloat;

use crate::model::{SensingScene, SubcarrierGeometry, SystemConfig};
use crate::precoder::{effective_precoder_at, PrecoderState};
use crate::{CMatrix, Error, RMatrix, Result, C64};

/// Ridge added before inversion, relative to `Tr(J) / 2K`.
pub const RIDGE_FACTOR: f64 = 1e-10;
/// Condition number of the Fisher matrix above which the geometry is unobservable.
pub const CONDITION_CAP: f64 = 1e12;

/// Per-subcarrier Fisher matrices, their sum and the resulting CRB.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherResult {
    pub per_subcarrier: Vec<RMatrix>,
    pub total: RMatrix,
    pub crb: f64,
}

/// Complex `K × K` blocks `J_m(a, b)` for the parameter pairs (θθ, θφ, φφ).
///
/// The transmit covariance is passed as a factor `X` with `R_x = X X^H`, which
/// keeps the transmit-side products at `O(N_t K r)`.
pub fn fisher_blocks(geom: &SubcarrierGeometry, x: &CMatrix) -> [CMatrix; 3] {
    let k = geom.alpha.len();
    // transmit side: Σ^* conj(W1^H W2) Σ with W = X^H B, i.e. entries conj(α_i) α_j Σ_l W1[l,i] conj(W2[l,j])
    let w_a = x.adjoint() * &geom.at;
    let w_th = x.adjoint() * &geom.at_dtheta;
    let w_ph = x.adjoint() * &geom.at_dphi;
    let tx = |w1: &CMatrix, w2: &CMatrix| {
        let mut out = w1.transpose() * w2.map(|v| v.conj());
        for i in 0..k {
            for j in 0..k {
                out[(i, j)] *= geom.alpha[i].conj() * geom.alpha[j];
            }
        }
        out
    };
    let rx = |a1: &CMatrix, a2: &CMatrix| a1.adjoint() * a2;
    let block = |ar_a: &CMatrix, ar_b: &CMatrix, w_ta: &CMatrix, w_tb: &CMatrix| -> CMatrix {
        rx(ar_a, ar_b).component_mul(&tx(&w_a, &w_a))
            + rx(ar_a, &geom.ar).component_mul(&tx(&w_a, w_tb))
            + rx(&geom.ar, ar_b).component_mul(&tx(w_ta, &w_a))
            + rx(&geom.ar, &geom.ar).component_mul(&tx(w_ta, w_tb))
    };
    [
        block(&geom.ar_dtheta, &geom.ar_dtheta, &w_th, &w_th),
        block(&geom.ar_dtheta, &geom.ar_dphi, &w_th, &w_ph),
        block(&geom.ar_dphi, &geom.ar_dphi, &w_ph, &w_ph),
    ]
}

/// Real `2K × 2K` Fisher matrix for transmit covariance `X X^H`, parameters ordered (θ_1..θ_K, φ_1..φ_K).
pub fn fisher_from_factor(geom: &SubcarrierGeometry, x: &CMatrix, sigma_s2: f64) -> RMatrix {
    let k = geom.alpha.len();
    let [tt, tp, pp] = fisher_blocks(geom, x);
    let pt = tp.adjoint();
    let scale = 2.0 / sigma_s2;
    RMatrix::from_fn(2 * k, 2 * k, |i, j| {
        let v: C64 = match (i < k, j < k) {
            (true, true) => tt[(i, j)],
            (true, false) => tp[(i, j - k)],
            (false, true) => pt[(i - k, j)],
            (false, false) => pp[(i - k, j - k)],
        };
        scale * v.re
    })
}

/// Unit-power Fisher matrix of subcarrier `m` (0-based); `J_m` is linear in `p_m`.
fn unit_fisher(scene: &SensingScene, state: &PrecoderState, m: usize, cfg: &SystemConfig) -> RMatrix {
    let w = effective_precoder_at(state, m, cfg);
    let x = CMatrix::from_column_slice(w.len(), 1, w.as_slice());
    fisher_from_factor(&scene.geometry[m], &x, cfg.sigma_s2)
}

/// `J_m` at the 1-based subcarrier `m` with `R_x = p_m (F f)(F f)^H`.
pub fn fisher_matrix(scene: &SensingScene, state: &PrecoderState, m: usize, cfg: &SystemConfig) -> Result<RMatrix> {
    if m == 0 || m > cfg.subcarriers {
        return Err(Error::SubcarrierIndex { index: m, count: cfg.subcarriers });
    }
    Ok(unit_fisher(scene, state, m - 1, cfg) * state.power.p[m - 1])
}

/// Trace of `(J + λI)^{-1}` with `λ = RIDGE_FACTOR · Tr(J) / dim`, and the
/// condition number of the unridged `J`.
pub fn ridge_inverse_trace(j: &RMatrix) -> (f64, f64) {
    weighted_inverse_trace(std::slice::from_ref(j), &[1.0])
}

/// [`ridge_inverse_trace`] of `J = Σ_m w_m J_m`.
///
/// The sum and the inversion run in double-double arithmetic. Near-singular
/// Fisher matrices otherwise lose digits to rounding in the sum, which breaks
/// the exact `CRB(c·p) = CRB(p)/c` scaling long before the condition cap.
pub fn weighted_inverse_trace(units: &[RMatrix], weights: &[f64]) -> (f64, f64) {
    let n = units.first().map_or(0, RMatrix::nrows);
    let mut acc = vec![TwoFloat::from(0.0); n * n];
    for (u, &w) in units.iter().zip(weights) {
        for r in 0..n {
            for c in 0..n {
                // symmetrize while accumulating
                let v = TwoFloat::from(u[(r, c)]) * 0.5 + TwoFloat::from(u[(c, r)]) * 0.5;
                acc[r * n + c] += v * w;
            }
        }
    }
    let tr = (0..n).fold(TwoFloat::from(0.0), |t, i| t + acc[i * n + i]);
    if n == 0 || !(f64::from(tr) > 0.0) || !f64::from(tr).is_finite() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let sym = RMatrix::from_fn(n, n, |r, c| f64::from(acc[r * n + c]));
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    let ridge = tr * RIDGE_FACTOR / n as f64;
    for i in 0..n {
        acc[i * n + i] += ridge;
    }
    let inv_trace = equilibrated_cholesky_trace(&acc, n)
        .unwrap_or_else(|| eig.eigenvalues.iter().map(|l| 1.0 / (l.max(0.0) + f64::from(ridge))).sum());
    (inv_trace, cond)
}

/// `Tr(A^{-1})` of a symmetric positive-definite row-major matrix, after
/// scaling to unit diagonal; `None` when the factorization breaks down.
fn equilibrated_cholesky_trace(a: &[TwoFloat], n: usize) -> Option<f64> {
    let d: Vec<TwoFloat> = (0..n).map(|i| a[i * n + i].sqrt()).collect();
    let mut l = vec![TwoFloat::from(0.0); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j] / (d[i] * d[j]);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(f64::from(s) > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // column i of L^{-1} by forward substitution; (A^{-1})_ii = ‖L^{-1} e_i‖² / d_i²
    let mut total = TwoFloat::from(0.0);
    for i in 0..n {
        let mut x = vec![TwoFloat::from(0.0); n];
        for r in i..n {
            let mut s = TwoFloat::from(if r == i { 1.0 } else { 0.0 });
            for k in i..r {
                s -= l[r * n + k] * x[k];
            }
            x[r] = s / l[r * n + r];
        }
        let col = x.iter().fold(TwoFloat::from(0.0), |acc, v| acc + *v * *v);
        total += col / (d[i] * d[i]);
    }
    let out = f64::from(total);
    out.is_finite().then_some(out)
}

/// `Tr(J^{-1})`, failing with [`Error::SingularFisher`] past [`CONDITION_CAP`].
pub fn crb_from_fisher(j: &RMatrix) -> Result<f64> {
    let (trace, cond) = ridge_inverse_trace(j);
    if !(cond <= CONDITION_CAP) {
        return Err(Error::SingularFisher(cond));
    }
    Ok(trace)
}

pub fn fisher_result(scene: &SensingScene, state: &PrecoderState, cfg: &SystemConfig) -> Result<FisherResult> {
    let units: Vec<RMatrix> = (0..cfg.subcarriers).map(|m| unit_fisher(scene, state, m, cfg)).collect();
    let per_subcarrier: Vec<RMatrix> = units.iter().zip(&state.power.p).map(|(u, p)| u * *p).collect();
    let dim = 2 * scene.k();
    let total = per_subcarrier.iter().fold(RMatrix::zeros(dim, dim), |acc, j| acc + j);
    let (trace, cond) = weighted_inverse_trace(&units, &state.power.p);
    if !(cond <= CONDITION_CAP) {
        return Err(Error::SingularFisher(cond));
    }
    let crb = trace;
    Ok(FisherResult { per_subcarrier, total, crb })
}

/// Angle CRB `Tr((Σ_m J_m)^{-1})`, rad².
pub fn crb(scene: &SensingScene, state: &PrecoderState, cfg: &SystemConfig) -> Result<f64> {
    Ok(fisher_result(scene, state, cfg)?.crb)
}

/// `q_m = Tr(J_m^{-1})` evaluated at unit subcarrier power (ridge-stabilized).
pub fn unit_power_crb_weights(scene: &SensingScene, state: &PrecoderState, cfg: &SystemConfig) -> Vec<f64> {
    (0..cfg.subcarriers)
        .map(|m| ridge_inverse_trace(&unit_fisher(scene, state, m, cfg)).0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_realization, Direction, Target};
    use crate::precoder::{PhaseShifters, PowerAllocation, TtdGrid};
    use crate::CVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(cfg: &SystemConfig, seed: u64) -> PrecoderState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ttd = TtdGrid::zeros(cfg);
        for q in 0..cfg.q_t() {
            ttd.set(q, cfg.ttd_grid()[rng.random_range(0..cfg.ttd_levels())]);
        }
        PrecoderState {
            ttd,
            ps: PhaseShifters::from_phases((0..cfg.n_t()).map(|_| rng.random_range(0.0..6.28))),
            power: PowerAllocation {
                p: (0..cfg.subcarriers).map(|_| rng.random_range(0.01..0.1)).collect(),
            },
        }
    }

    /// Numerical Fisher matrix from central differences of the noiseless echo `μ = G x`.
    fn fd_fisher(targets: &[Target], x: &CVector, m: usize, cfg: &SystemConfig) -> RMatrix {
        let k = targets.len();
        let h = 1e-6;
        let mu = |ts: &[Target]| {
            let ratio = cfg.freq(m) / cfg.fc;
            let mut out = CVector::zeros(cfg.n_r());
            for t in ts {
                let ar = cfg.rx_array().steering(t.dir, ratio);
                let at = cfg.tx_array().steering(t.dir, ratio);
                out += ar * (at.dotc(x) * t.alpha[m]);
            }
            out
        };
        let mut cols = Vec::new();
        for p in 0..2 * k {
            let shift = |d: f64| {
                let mut ts = targets.to_vec();
                if p < k {
                    ts[p].dir.theta += d;
                } else {
                    ts[p - k].dir.phi += d;
                }
                ts
            };
            cols.push((mu(&shift(h)) - mu(&shift(-h))) / C64::from(2.0 * h));
        }
        RMatrix::from_fn(2 * k, 2 * k, |i, j| 2.0 / cfg.sigma_s2 * cols[i].dotc(&cols[j]).re)
    }

    #[test]
    fn matches_finite_difference_oracle() {
        let cfg = SystemConfig { n_th: 2, n_tv: 2, n_rh: 2, n_rv: 2, q_th: 1, q_tv: 1, subcarriers: 1, targets: 1, ..SystemConfig::desk() };
        for seed in 0..20 {
            let r = sample_realization(seed, &cfg, 0.2).unwrap();
            let state = random_state(&cfg, seed + 100);
            let j = fisher_matrix(&r.scene, &state, 1, &cfg).unwrap();
            let x = effective_precoder_at(&state, 0, &cfg) * C64::from(state.power.p[0].sqrt());
            let oracle = fd_fisher(&r.scene.targets, &x, 0, &cfg);
            let rel = (&j - &oracle).norm() / oracle.norm();
            assert!(rel < 1e-4, "seed {seed}: rel err {rel}");
            let crb_oracle = oracle.clone().try_inverse().unwrap().trace();
            let got = crb(&r.scene, &state, &cfg).unwrap();
            assert!((got - crb_oracle).abs() / crb_oracle < 1e-3);
        }
    }

    #[test]
    fn matches_oracle_on_desk_array_with_three_targets() {
        let cfg = SystemConfig { targets: 3, ..SystemConfig::desk() };
        let r = sample_realization(77, &cfg, 0.3).unwrap();
        let state = random_state(&cfg, 5);
        for m in [0, 3, 7] {
            let j = fisher_matrix(&r.scene, &state, m + 1, &cfg).unwrap();
            let x = effective_precoder_at(&state, m, &cfg) * C64::from(state.power.p[m].sqrt());
            let oracle = fd_fisher(&r.scene.targets, &x, m, &cfg);
            assert!((&j - &oracle).norm() / oracle.norm() < 1e-4);
        }
    }

    #[test]
    fn symmetric_psd_and_linear_in_power() {
        let cfg = SystemConfig::desk();
        for seed in 0..30 {
            let r = sample_realization(seed, &cfg, 0.1).unwrap();
            let state = random_state(&cfg, seed);
            let j = fisher_matrix(&r.scene, &state, 2, &cfg).unwrap();
            assert!((&j - j.transpose()).amax() < 1e-10 * j.amax().max(1.0));
            let eig = SymmetricEigen::new((&j + j.transpose()) * 0.5).eigenvalues;
            assert!(eig.min() > -1e-10 * eig.max().abs());
            let mut scaled = state.clone();
            scaled.power.p[1] *= 3.0;
            let j3 = fisher_matrix(&r.scene, &scaled, 2, &cfg).unwrap();
            assert!((&j3 - &j * 3.0).amax() <= 1e-12 * j3.amax());
            let mut zero = state.clone();
            zero.power.p[1] = 0.0;
            assert_eq!(fisher_matrix(&r.scene, &zero, 2, &cfg).unwrap().amax(), 0.0);
        }
    }

    #[test]
    fn crb_scales_inversely_with_power() {
        let cfg = SystemConfig::desk();
        for seed in 0..30 {
            let r = sample_realization(seed, &cfg, 0.1).unwrap();
            let state = random_state(&cfg, seed + 7);
            let base = crb(&r.scene, &state, &cfg).unwrap();
            for c in [2.0, 10.0] {
                let mut s = state.clone();
                s.power = s.power.scaled(c);
                let scaled = crb(&r.scene, &s, &cfg).unwrap();
                assert!((scaled - base / c).abs() <= 1e-12 * base / c, "c={c}: {scaled} vs {}", base / c);
            }
        }
    }

    #[test]
    fn coinciding_targets_are_singular() {
        let cfg = SystemConfig::desk();
        let dir = Direction::new(1.1, 0.3);
        let alpha: Vec<C64> = (0..cfg.subcarriers).map(|m| C64::new(0.5, 0.1 * m as f64)).collect();
        let scene = SensingScene::new(
            vec![Target { dir, alpha: alpha.clone() }, Target { dir, alpha }],
            &cfg,
        )
        .unwrap();
        let state = random_state(&cfg, 1);
        assert!(matches!(crb(&scene, &state, &cfg), Err(Error::SingularFisher(_))));
    }
}
