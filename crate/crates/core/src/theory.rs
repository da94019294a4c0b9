//! Closed-form Pareto analysis: covariance basis, channel-dependent weights,
//! the optimal weight matrix, and a Monte-Carlo check that higher C-S
//! correlation pushes the boundary outward.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{beamspace_channels, beamspace_profile, cs_correlation, BeamspaceDictionary};
use crate::model::{derive_seed, sample_realization, ChannelRealization, SystemConfig};
use crate::{CMatrix, Error, Result, C64};

/// Rank correlation both links must exceed for the check to pass.
pub const SPEARMAN_THRESHOLD: f64 = 0.8;

fn check_subcarrier(m: usize, cfg: &SystemConfig) -> Result<()> {
    if m == 0 || m > cfg.subcarriers {
        return Err(Error::SubcarrierIndex { index: m, count: cfg.subcarriers });
    }
    Ok(())
}

/// Basis `U_m = [A_t, Ȧ_θ, Ȧ_φ, a_t(θ_c, φ_c, f_m)]` at the 1-based subcarrier `m`.
///
/// The target columns are not conjugated: with `G = A_r Σ A_t^H` a target is
/// illuminated through `a_t^H x`, so `A_t` itself spans the useful directions.
pub fn basis(realization: &ChannelRealization, m: usize, cfg: &SystemConfig) -> Result<CMatrix> {
    check_subcarrier(m, cfg)?;
    let geom = &realization.scene.geometry[m - 1];
    let k = realization.scene.k();
    let n_t = cfg.n_t();
    let mut u = CMatrix::zeros(n_t, 3 * k + 1);
    for j in 0..k {
        u.set_column(j, &geom.at.column(j));
        u.set_column(k + j, &geom.at_dtheta.column(j));
        u.set_column(2 * k + j, &geom.at_dphi.column(j));
    }
    let a_c = cfg.tx_array().steering(realization.comm.user, cfg.freq(m - 1) / cfg.fc);
    u.set_column(3 * k, &a_c);
    Ok(u)
}

/// `(Ξ_c, Ξ_s)` at the 1-based subcarrier `m`.
///
/// `Ξ_c[n₁, n₂] = (v^H u_{n₁})(u_{n₂}^H v)` with `v = D_t D_t^H h_m`, the user
/// channel passed through its beamspace image; `Ξ_s = (Σ^H A_t^H U)^H (Σ^H A_t^H U)`.
pub fn xi_matrices(
    realization: &ChannelRealization,
    dict: &BeamspaceDictionary,
    m: usize,
    cfg: &SystemConfig,
) -> Result<(CMatrix, CMatrix)> {
    let u = basis(realization, m, cfg)?;
    let geom = &realization.scene.geometry[m - 1];
    let h = &realization.comm.h[m - 1];
    let v = &dict.dt * (dict.dt.adjoint() * h);
    let c = u.adjoint() * v;
    let xi_c = &c * c.adjoint();
    let sigma_h = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        geom.alpha.len(),
        geom.alpha.iter().map(|a| a.conj()),
    ));
    let b = sigma_h * geom.at.adjoint() * &u;
    let xi_s = b.adjoint() * b;
    Ok((xi_c, xi_s))
}

/// `Λ = (Ξ_c + γΞ_s) √P_t / ‖Ξ_c + γΞ_s‖_F`, projected onto the PSD cone first.
///
/// Negative eigenvalues of the combination are clipped to zero and the result
/// renormalized, so the Frobenius norm is `√P_t` whenever the output exists.
pub fn optimal_lambda(xi_c: &CMatrix, xi_s: &CMatrix, gamma: f64, p_t: f64) -> Result<CMatrix> {
    if !(gamma >= 0.0) || !(p_t > 0.0) {
        return Err(Error::InvalidInput(format!("need gamma >= 0 and P_t > 0, got {gamma}, {p_t}")));
    }
    if xi_c.shape() != xi_s.shape() || !xi_c.is_square() {
        return Err(Error::Dimension("weight matrices must be square and equally sized".into()));
    }
    let combined = xi_c + xi_s * C64::from(gamma);
    let herm = (&combined + combined.adjoint()) * C64::from(0.5);
    let eig = SymmetricEigen::new(herm);
    let floored = eig.eigenvalues.map(|l| C64::from(l.max(0.0)));
    let psd = &eig.eigenvectors * CMatrix::from_diagonal(&floored) * eig.eigenvectors.adjoint();
    let norm = psd.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Degenerate("Ξ_c + γΞ_s has no positive part".into()));
    }
    Ok(psd * C64::from(p_t.sqrt() / norm))
}

/// Per-subcarrier rate and CRB from the closed-form boundary expressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormPoint {
    pub rate: f64,
    pub crb: f64,
    /// `Σ λ ξ_s` before inversion; the CRB expression needs it positive.
    pub sensing_term: f64,
    pub valid: bool,
}

fn entrywise_sum(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<C64>().re
}

/// Rate and CRB on the boundary for weight `γ`, evaluated from the expanded
/// double sums `Σ √P_t (ξ_c² + γ ξ_s ξ_c) / ‖·‖_F` and `N_R² [Σ √P_t (γ ξ_s² + ξ_s ξ_c) / ‖·‖_F]⁻¹`.
///
/// Products are entrywise without conjugation, as in `Σ λ_{n₁n₂} Ξ[n₁, n₂]`.
/// A non-positive sensing term marks the point invalid and reports an infinite CRB.
pub fn pareto_closed_form(
    xi_c: &CMatrix,
    xi_s: &CMatrix,
    gamma: f64,
    p_t: f64,
    sigma_c2: f64,
    n_r: usize,
) -> Result<ClosedFormPoint> {
    if xi_c.shape() != xi_s.shape() || xi_c.nrows() != n_r {
        return Err(Error::Dimension(format!("weights are {:?}, basis size {n_r}", xi_c.shape())));
    }
    let combined = xi_c + xi_s * C64::from(gamma);
    let norm = combined.norm();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("Ξ_c + γΞ_s vanishes".into()));
    }
    let scale = p_t.sqrt() / norm;
    let comm = scale * (entrywise_sum(xi_c, xi_c) + gamma * entrywise_sum(xi_s, xi_c));
    let sensing_term = scale * (gamma * entrywise_sum(xi_s, xi_s) + entrywise_sum(xi_s, xi_c));
    let rate = (1.0 + comm.max(0.0) / sigma_c2).log2();
    let valid = sensing_term > 0.0;
    let crb = if valid { (n_r * n_r) as f64 / sensing_term } else { f64::INFINITY };
    Ok(ClosedFormPoint { rate, crb, sensing_term, valid })
}

/// Same point computed through `Λ` from [`optimal_lambda`]: `Σ λ Ξ_c` and `Σ λ Ξ_s`.
pub fn pareto_via_lambda(
    xi_c: &CMatrix,
    xi_s: &CMatrix,
    gamma: f64,
    p_t: f64,
    sigma_c2: f64,
) -> Result<ClosedFormPoint> {
    let lambda = optimal_lambda(xi_c, xi_s, gamma, p_t)?;
    let n_r = lambda.nrows();
    let comm = entrywise_sum(&lambda, xi_c);
    let sensing_term = entrywise_sum(&lambda, xi_s);
    let valid = sensing_term > 0.0;
    Ok(ClosedFormPoint {
        rate: (1.0 + comm.max(0.0) / sigma_c2).log2(),
        crb: if valid { (n_r * n_r) as f64 / sensing_term } else { f64::INFINITY },
        sensing_term,
        valid,
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best }).0
}

/// Number of `(k, m)` pairs whose sensing peak shares the user's dictionary index.
///
/// `hb_c` is indexed `[m][g]`, `hb_s` is `[k][m][g]`; ties resolve to the lowest index.
pub fn peak_similarity(hb_c: &[Vec<f64>], hb_s: &[Vec<Vec<f64>>]) -> usize {
    let peaks_c: Vec<usize> = hb_c.iter().map(|v| argmax(v)).collect();
    hb_s.iter()
        .map(|target| target.iter().zip(&peaks_c).filter(|(v, &pc)| argmax(v) == pc).count())
        .sum()
}

/// Sparse-peak approximation of `(Ξ_c, Ξ_s)` at one subcarrier.
///
/// `matches[k]` says whether target `k` peaks on the user's index and
/// `gains[k] = |Σ[k, k]|²`. The user entry sits in the last row and column, `N_R = 3K + 1`.
pub fn xi_approximation(matches: &[bool], gains: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = matches.len();
    let n_r = 3 * k + 1;
    let s_m = matches.iter().filter(|b| **b).count() as f64;
    let power: f64 = gains.iter().sum();
    let matched_power: f64 = matches.iter().zip(gains).filter(|(b, _)| **b).map(|(_, g)| g).sum();
    let mut c = DMatrix::zeros(n_r, n_r);
    let mut s = DMatrix::zeros(n_r, n_r);
    c[(n_r - 1, n_r - 1)] = 1.0;
    s[(n_r - 1, n_r - 1)] = matched_power;
    for n1 in 0..k {
        c[(n1, n_r - 1)] = 2.0 * s_m;
        for n2 in 0..k {
            c[(n1, n2)] = s_m * s_m;
            s[(n1, n2)] = power;
        }
    }
    (c, s)
}

/// Closed-form rate (summed over subcarriers) and CRB of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizationBound {
    pub rate: f64,
    /// Sum of the per-subcarrier inverse CRBs.
    pub inv_crb: f64,
    pub crb: f64,
}

/// Sums the per-subcarrier closed forms; Fisher information adds across subcarriers,
/// so inverse CRBs are summed. Invalid subcarriers contribute no sensing information.
pub fn realization_bound(
    realization: &ChannelRealization,
    dict: &BeamspaceDictionary,
    gamma: f64,
    cfg: &SystemConfig,
) -> Result<RealizationBound> {
    let n_r = 3 * realization.scene.k() + 1;
    let mut rate = 0.0;
    let mut inv_crb = 0.0;
    for m in 1..=cfg.subcarriers {
        let (xc, xs) = xi_matrices(realization, dict, m, cfg)?;
        let pt = pareto_closed_form(&xc, &xs, gamma, cfg.p_t, cfg.sigma_c2, n_r)?;
        rate += pt.rate;
        if pt.valid {
            inv_crb += 1.0 / pt.crb;
        }
    }
    let crb = if inv_crb > 0.0 { 1.0 / inv_crb } else { f64::INFINITY };
    Ok(RealizationBound { rate, inv_crb, crb })
}

/// Spearman rank correlation with averaged ranks for ties; `NaN` when undefined.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &t in &idx[i..=j] {
                r[t] = avg;
            }
            i = j + 1;
        }
        r
    }
    if x.len() != y.len() || x.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelations {
    pub cor_rate: f64,
    pub cor_inv_crb: f64,
}

/// Group means per angular offset and their rank correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub offsets: Vec<f64>,
    pub mean_correlation: Vec<f64>,
    #[serde(rename = "mean_R_star")]
    pub mean_r_star: Vec<f64>,
    #[serde(rename = "mean_CRB_star")]
    pub mean_crb_star: Vec<f64>,
    pub mean_inv_crb_star: Vec<f64>,
    pub mean_similarity: Vec<f64>,
    pub spearman: RankCorrelations,
    pub pass: bool,
}

/// Settings of the Monte-Carlo check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub trials: usize,
    pub offsets: Vec<f64>,
    pub gamma: f64,
    pub base_seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { trials: 50, offsets: vec![0.0, 0.05, 0.1, 0.2, 0.4], gamma: 1.0, base_seed: 0 }
    }
}

struct Trial {
    correlation: f64,
    bound: RealizationBound,
    similarity: usize,
}

fn run_trial(seed: u64, offset: f64, gamma: f64, dict: &BeamspaceDictionary, cfg: &SystemConfig) -> Result<Trial> {
    let r = sample_realization(seed, cfg, offset)?;
    let (hc, hs) = beamspace_channels(&r.comm, &r.scene, None, dict, cfg)?;
    let profile = beamspace_profile(&r.comm, &r.scene, None, dict, cfg)?;
    Ok(Trial {
        correlation: cs_correlation(&hc, &hs)?,
        bound: realization_bound(&r, dict, gamma, cfg)?,
        similarity: peak_similarity(&profile.comm, &profile.sensing_per_target),
    })
}

/// Averages correlation, `R⋆`, `CRB⋆` and `1/CRB⋆` per angular offset (used as the MSIA
/// of the sampled scenes) and checks that both boundary metrics rank-correlate with
/// the C-S correlation above [`SPEARMAN_THRESHOLD`].
pub fn verify_correlation_trend(cfg: &SystemConfig, verify: &VerifyConfig) -> Result<VerificationReport> {
    if verify.trials == 0 || verify.offsets.is_empty() {
        return Err(Error::Config("verification needs at least one trial and one offset".into()));
    }
    if verify.offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("angular offsets must be sorted ascending".into()));
    }
    let dict = BeamspaceDictionary::uniform(cfg);
    let cells: Vec<(usize, usize)> =
        (0..verify.offsets.len()).flat_map(|g| (0..verify.trials).map(move |t| (g, t))).collect();
    let trials: Vec<Trial> = cells
        .par_iter()
        .map(|&(g, t)| {
            // trial t shares its seed across offsets, so groups differ only in target placement
            let seed = derive_seed(verify.base_seed, &[t as u64]);
            run_trial(seed, verify.offsets[g], verify.gamma, &dict, cfg)
        })
        .collect::<Result<_>>()?;
    let n = verify.trials as f64;
    let mut report = VerificationReport {
        offsets: verify.offsets.clone(),
        mean_correlation: Vec::new(),
        mean_r_star: Vec::new(),
        mean_crb_star: Vec::new(),
        mean_inv_crb_star: Vec::new(),
        mean_similarity: Vec::new(),
        spearman: RankCorrelations { cor_rate: f64::NAN, cor_inv_crb: f64::NAN },
        pass: false,
    };
    for group in trials.chunks(verify.trials) {
        report.mean_correlation.push(group.iter().map(|t| t.correlation).sum::<f64>() / n);
        report.mean_r_star.push(group.iter().map(|t| t.bound.rate).sum::<f64>() / n);
        report.mean_inv_crb_star.push(group.iter().map(|t| t.bound.inv_crb).sum::<f64>() / n);
        report.mean_similarity.push(group.iter().map(|t| t.similarity as f64).sum::<f64>() / n);
        let finite: Vec<f64> = group.iter().map(|t| t.bound.crb).filter(|c| c.is_finite()).collect();
        report.mean_crb_star.push(if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        });
    }
    report.spearman = RankCorrelations {
        cor_rate: spearman(&report.mean_correlation, &report.mean_r_star),
        cor_inv_crb: spearman(&report.mean_correlation, &report.mean_inv_crb_star),
    };
    report.pass = report.spearman.cor_rate > SPEARMAN_THRESHOLD && report.spearman.cor_inv_crb > SPEARMAN_THRESHOLD;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{steering_derivatives, CommChannel, Direction, SensingScene, Target};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k1() -> SystemConfig {
        SystemConfig { targets: 1, ..SystemConfig::desk() }
    }

    /// User and `targets` at fixed directions, unit gains.
    fn fixed(cfg: &SystemConfig, user: Direction, targets: &[Direction], alpha: f64) -> ChannelRealization {
        let comm = CommChannel::new(user, 0.0, vec![C64::from(1.0); cfg.subcarriers], cfg).unwrap();
        let t = targets.iter().map(|&dir| Target { dir, alpha: vec![C64::from(alpha); cfg.subcarriers] }).collect();
        let scene = SensingScene::new(t, cfg).unwrap();
        ChannelRealization::new(0, comm, scene)
    }

    fn random_hermitian_psd(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        &a * a.adjoint()
    }

    #[test]
    fn basis_layout() {
        let cfg = k1();
        let r = sample_realization(3, &cfg, 0.1).unwrap();
        let u = basis(&r, 2, &cfg).unwrap();
        assert_eq!(u.ncols(), 4);
        let f = cfg.freq(1);
        let t = r.scene.targets[0].dir;
        let (dt, dp) = steering_derivatives(t.theta, t.phi, f, &cfg).unwrap();
        assert!((u.column(1) - dt).norm() < 1e-12);
        assert!((u.column(2) - dp).norm() < 1e-12);
        let a_c = crate::model::steering_vector(r.comm.user.theta, r.comm.user.phi, f, &cfg).unwrap();
        assert!((u.column(3) - a_c).norm() < 1e-12);
        let cfg3 = SystemConfig::desk();
        let r3 = sample_realization(3, &cfg3, 0.1).unwrap();
        assert_eq!(basis(&r3, 1, &cfg3).unwrap().ncols(), 3 * cfg3.targets + 1);
        assert!(matches!(basis(&r3, 0, &cfg3), Err(Error::SubcarrierIndex { .. })));
    }

    #[test]
    fn xi_structure() {
        let cfg = SystemConfig::desk();
        let dict = BeamspaceDictionary::uniform(&cfg);
        let r = sample_realization(11, &cfg, 0.1).unwrap();
        for m in 1..=cfg.subcarriers {
            let (xc, xs) = xi_matrices(&r, &dict, m, &cfg).unwrap();
            assert!((&xc - xc.adjoint()).norm() < 1e-12 * xc.norm().max(1.0));
            assert!((&xs - xs.adjoint()).norm() < 1e-12 * xs.norm().max(1.0));
            let eig = SymmetricEigen::new(xs.clone()).eigenvalues;
            assert!(eig.iter().all(|l| *l > -1e-10 * xs.norm()));
        }
        // silent targets give no sensing weight
        let user = Direction::new(1.2, 0.3);
        let silent = fixed(&cfg, user, &[Direction::new(1.0, 0.1), Direction::new(1.4, 0.5)], 0.0);
        let (_, xs) = xi_matrices(&silent, &dict, 1, &cfg).unwrap();
        assert_eq!(xs.norm(), 0.0);
    }

    #[test]
    fn coincident_geometry_peaks_on_the_user_column() {
        let cfg = k1();
        let dict = BeamspaceDictionary::uniform(&cfg);
        let dir = Direction::new(1.3, 0.2);
        let r = fixed(&cfg, dir, &[dir], 1.0);
        let (xc, xs) = xi_matrices(&r, &dict, 4, &cfg).unwrap();
        let last = xc.nrows() - 1;
        // derivative columns carry an aperture-sized norm, so only the steering block is compared
        let block = [0, last];
        for xi in [&xc, &xs] {
            let corner = xi[(last, last)].norm();
            assert!(corner > 0.0);
            for &i in &block {
                for &j in &block {
                    assert!(xi[(i, j)].norm() <= corner * (1.0 + 1e-9), "({i},{j})");
                }
            }
            for i in 0..xi.nrows() {
                for j in 0..i {
                    let coherence = xi[(i, j)].norm() / (xi[(i, i)].norm() * xi[(j, j)].norm()).sqrt();
                    assert!(coherence <= 1.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn lambda_normalization_and_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let xc = random_hermitian_psd(4, &mut rng);
            let xs = random_hermitian_psd(4, &mut rng);
            let p_t = rng.random_range(0.1..100.0);
            let l = optimal_lambda(&xc, &xs, rng.random_range(0.0..5.0), p_t).unwrap();
            assert!((l.norm() - p_t.sqrt()).abs() < 1e-12 * p_t.sqrt());
            let l0 = optimal_lambda(&xc, &xs, 0.0, 1.0).unwrap();
            assert!((l0 - &xc * C64::from(1.0 / xc.norm())).norm() < 1e-10);
            let big = optimal_lambda(&xc, &xs, 1e8, 1.0).unwrap();
            assert!((big - &xs * C64::from(1.0 / xs.norm())).norm() < 1e-6);
        }
        // indefinite input is floored to its positive part
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::from(2.0), C64::from(-1.0)]));
        let l = optimal_lambda(&d, &CMatrix::zeros(2, 2), 0.0, 4.0).unwrap();
        assert!((l[(0, 0)].re - 2.0).abs() < 1e-12 && l[(1, 1)].norm() < 1e-12);
        assert!(optimal_lambda(&CMatrix::zeros(2, 2), &CMatrix::zeros(2, 2), 1.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_matches_lambda_path() {
        let cfg = SystemConfig::desk();
        let dict = BeamspaceDictionary::uniform(&cfg);
        let r = sample_realization(21, &cfg, 0.1).unwrap();
        let n_r = 3 * cfg.targets + 1;
        for m in 1..=cfg.subcarriers {
            let (xc, xs) = xi_matrices(&r, &dict, m, &cfg).unwrap();
            for gamma in [0.0, 0.3, 1.0, 10.0] {
                let a = pareto_closed_form(&xc, &xs, gamma, cfg.p_t, cfg.sigma_c2, n_r).unwrap();
                let b = pareto_via_lambda(&xc, &xs, gamma, cfg.p_t, cfg.sigma_c2).unwrap();
                assert!((a.rate - b.rate).abs() <= 1e-9 * a.rate.abs().max(1e-300));
                assert!((a.sensing_term - b.sensing_term).abs() <= 1e-9 * a.sensing_term.abs());
            }
        }
    }

    #[test]
    fn closed_form_scaling_and_validity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xc = random_hermitian_psd(4, &mut rng);
        let xs = random_hermitian_psd(4, &mut rng);
        let a = pareto_closed_form(&xc, &xs, 0.7, 1.0, 1.0, 4).unwrap();
        let b = pareto_closed_form(&xc, &xs, 0.7, 2.0, 1.0, 4).unwrap();
        assert!(b.rate > a.rate);
        assert!((b.sensing_term / a.sensing_term - 2f64.sqrt()).abs() < 1e-12);
        assert!((a.crb / b.crb - 2f64.sqrt()).abs() < 1e-12);
        let none = pareto_closed_form(&xc, &CMatrix::zeros(4, 4), 0.0, 1.0, 1.0, 4).unwrap();
        assert!(!none.valid && none.crb.is_infinite());
    }

    #[test]
    fn similarity_counts() {
        let cfg = k1();
        let dict = BeamspaceDictionary::uniform(&cfg);
        let dir = Direction::new(1.3, 0.2);
        let r = fixed(&cfg, dir, &[dir], 0.8);
        let p = beamspace_profile(&r.comm, &r.scene, None, &dict, &cfg).unwrap();
        assert_eq!(peak_similarity(&p.comm, &p.sensing_per_target), cfg.subcarriers);
        // broadside user against a target several beamwidths away
        let far = fixed(&cfg, Direction::new(std::f64::consts::FRAC_PI_2, 0.0), &[Direction::new(0.6, 0.9)], 0.8);
        let p = beamspace_profile(&far.comm, &far.scene, None, &dict, &cfg).unwrap();
        assert_eq!(peak_similarity(&p.comm, &p.sensing_per_target), 0);
        // target order does not matter
        let cfg2 = SystemConfig::desk();
        let dict2 = BeamspaceDictionary::uniform(&cfg2);
        let r = sample_realization(4, &cfg2, 0.05).unwrap();
        let p = beamspace_profile(&r.comm, &r.scene, None, &dict2, &cfg2).unwrap();
        let mut swapped = p.sensing_per_target.clone();
        swapped.reverse();
        assert_eq!(peak_similarity(&p.comm, &p.sensing_per_target), peak_similarity(&p.comm, &swapped));
    }

    #[test]
    fn approximation_structure() {
        let (c, s) = xi_approximation(&[false, false], &[0.5, 0.25]);
        assert_eq!(c.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(c[(6, 6)], 1.0);
        assert_eq!(s[(6, 6)], 0.0);
        assert_eq!(s[(0, 1)], 0.75);
    }

    /// At coincident K = 1 geometry the nonzero diagonal entries of the sparse-peak
    /// approximation track the exact weights once `Ξ_c` is normalized by its user entry.
    #[test]
    fn approximation_tracks_exact_at_coincidence() {
        let cfg = k1();
        let dict = BeamspaceDictionary::uniform(&cfg);
        let dir = Direction::new(1.1, -0.4);
        let r = fixed(&cfg, dir, &[dir], 0.6);
        let p = beamspace_profile(&r.comm, &r.scene, None, &dict, &cfg).unwrap();
        assert_eq!(peak_similarity(&p.comm, &p.sensing_per_target), cfg.subcarriers);
        for m in 1..=cfg.subcarriers {
            let (xc, xs) = xi_matrices(&r, &dict, m, &cfg).unwrap();
            let (ac, as_) = xi_approximation(&[true], &[0.36]);
            let norm = xc[(3, 3)].re;
            for n in [0, 3] {
                assert!((xc[(n, n)].re / norm - ac[(n, n)]).abs() <= 0.2 * ac[(n, n)]);
                assert!((xs[(n, n)].re - as_[(n, n)]).abs() <= 0.2 * as_[(n, n)]);
            }
        }
    }

    #[test]
    fn spearman_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-12);
        assert!(spearman(&[1.0], &[2.0]).is_nan());
    }

    #[test]
    fn single_group_is_degenerate() {
        let cfg = k1();
        let rep = verify_correlation_trend(&cfg, &VerifyConfig { trials: 2, offsets: vec![0.0], ..Default::default() }).unwrap();
        assert_eq!(rep.mean_correlation.len(), 1);
        assert!(rep.spearman.cor_rate.is_nan() && !rep.pass);
        assert!(verify_correlation_trend(&cfg, &VerifyConfig { trials: 2, offsets: vec![0.2, 0.1], ..Default::default() }).is_err());
    }
}
