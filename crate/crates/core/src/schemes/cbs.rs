use std::f64::consts::PI;

use crate::model::{ChannelRealization, Direction, SystemConfig};
use crate::precoder::{PhaseShifters, TtdGrid};
use crate::{Error, Result};

/// Per-subcarrier beam directions covering the user and every target.
///
/// Directions are sorted by spatial frequency and given contiguous blocks of
/// subcarriers in frequency order, `⌊M/(K+1)⌋` each; leftover subcarriers go one
/// at a time to the user first, then to the targets.
pub fn choose_cbs_directions(realization: &ChannelRealization, cfg: &SystemConfig) -> Vec<Direction> {
    let mut dirs = vec![realization.comm.user];
    dirs.extend(realization.scene.targets.iter().map(|t| t.dir));
    sweep_directions(&dirs, cfg.subcarriers)
}

/// Spreads `dirs` over `m` subcarriers; the first entry receives leftovers first.
pub(crate) fn sweep_directions(dirs: &[Direction], m: usize) -> Vec<Direction> {
    if dirs.is_empty() {
        return Vec::new();
    }
    let n = dirs.len();
    let mut counts = vec![m / n; n];
    for c in counts.iter_mut().take(m % n) {
        *c += 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ua, ub) = (dirs[a].spatial_freq(), dirs[b].spatial_freq());
        ua.0.total_cmp(&ub.0).then(ua.1.total_cmp(&ub.1))
    });
    order.iter().flat_map(|&i| std::iter::repeat_n(dirs[i], counts[i])).collect()
}

/// Continuous and quantized solutions of the TTD/PS phase fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub ttd: TtdGrid,
    pub ps: PhaseShifters,
    /// Unquantized delays, row-major over subarrays.
    pub continuous: Vec<f64>,
    /// Objective at the continuous optimum.
    pub objective: f64,
    /// Objective after quantizing `T` and re-fitting the phases.
    pub quantized_objective: f64,
}

/// Target phases in units of π, `ψ[m][n] = (f_m/f_c)(s_n − min_n' s_n')` with
/// `s_n = sinθ sinφ i_h + cosθ i_v`.
///
/// Shifting each subcarrier's target by a constant leaves the beam unchanged and
/// keeps the delays the fit asks for non-negative.
struct FitProblem {
    freqs: Vec<f64>,
    psi: Vec<Vec<f64>>,
    subarray: Vec<usize>,
    q_t: usize,
    t_max: f64,
}

impl FitProblem {
    fn new(directions: &[Direction], cfg: &SystemConfig) -> Result<Self> {
        if directions.len() != cfg.subcarriers {
            return Err(Error::Dimension(format!(
                "{} directions for {} subcarriers",
                directions.len(),
                cfg.subcarriers
            )));
        }
        let arr = cfg.tx_array();
        let psi = directions
            .iter()
            .enumerate()
            .map(|(m, d)| {
                let (uh, uv) = d.spatial_freq();
                let s: Vec<f64> = (0..arr.len())
                    .map(|n| {
                        let (ih, iv) = arr.position(n);
                        uh * ih as f64 + uv * iv as f64
                    })
                    .collect();
                let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
                let ratio = cfg.freq(m) / cfg.fc;
                s.into_iter().map(|v| ratio * (v - lo)).collect()
            })
            .collect();
        let subarray = (0..cfg.n_t())
            .map(|n| {
                let (qh, qv) = cfg.subarray_of(n);
                cfg.subarray_index(qh, qv)
            })
            .collect();
        Ok(Self { freqs: cfg.frequencies(), psi, subarray, q_t: cfg.q_t(), t_max: cfg.t_max })
    }

    fn objective(&self, t: &[f64], x: &[f64]) -> f64 {
        let total: f64 = self
            .freqs
            .iter()
            .zip(&self.psi)
            .map(|(f, psi)| {
                psi.iter()
                    .enumerate()
                    .map(|(n, p)| (x[n] + 2.0 * f * t[self.subarray[n]] - p).powi(2))
                    .sum::<f64>()
            })
            .sum();
        total / self.freqs.len() as f64
    }

    /// Exact phase block: `x_n = mean_m(ψ[m][n] − 2 f_m T_q)`.
    fn best_phases(&self, t: &[f64]) -> Vec<f64> {
        let m = self.freqs.len() as f64;
        (0..self.subarray.len())
            .map(|n| {
                let tq = t[self.subarray[n]];
                self.freqs.iter().zip(&self.psi).map(|(f, psi)| psi[n] - 2.0 * f * tq).sum::<f64>() / m
            })
            .collect()
    }

    /// Exact delay block: per subarray, the clamped least-squares slope.
    fn best_delays(&self, x: &[f64]) -> Vec<f64> {
        let mut num = vec![0.0; self.q_t];
        let mut den = vec![0.0; self.q_t];
        for (f, psi) in self.freqs.iter().zip(&self.psi) {
            for (n, p) in psi.iter().enumerate() {
                num[self.subarray[n]] += 2.0 * f * (p - x[n]);
                den[self.subarray[n]] += 4.0 * f * f;
            }
        }
        num.iter().zip(&den).map(|(a, b)| (a / b).clamp(0.0, self.t_max)).collect()
    }

    /// Joint optimum: with the phases profiled out, each subarray's delay solves
    /// a scalar least-squares problem in the centred frequencies.
    fn joint_delays(&self) -> Vec<f64> {
        let m = self.freqs.len() as f64;
        let fbar = self.freqs.iter().sum::<f64>() / m;
        let spread: f64 = self.freqs.iter().map(|f| (f - fbar).powi(2)).sum();
        if spread == 0.0 {
            return vec![0.0; self.q_t];
        }
        let mut num = vec![0.0; self.q_t];
        let mut count = vec![0usize; self.q_t];
        for n in 0..self.subarray.len() {
            let mean = self.psi.iter().map(|psi| psi[n]).sum::<f64>() / m;
            let cov: f64 = self.freqs.iter().zip(&self.psi).map(|(f, psi)| (f - fbar) * (psi[n] - mean)).sum();
            num[self.subarray[n]] += cov;
            count[self.subarray[n]] += 1;
        }
        num.iter()
            .zip(&count)
            .map(|(c, k)| (c / (2.0 * *k as f64 * spread)).clamp(0.0, self.t_max))
            .collect()
    }
}

/// `(1/M) Σ_m Σ_n (φ_n/π + 2 f_m T_q(n) − ψ[m][n])²` for a TTD grid and phases.
pub fn fit_objective(directions: &[Direction], ttd: &TtdGrid, ps: &PhaseShifters, cfg: &SystemConfig) -> Result<f64> {
    let problem = FitProblem::new(directions, cfg)?;
    let t: Vec<f64> = (0..cfg.q_t()).map(|q| ttd.get(q)).collect();
    let x: Vec<f64> = ps.phases.iter().map(|p| p / PI).collect();
    Ok(problem.objective(&t, &x))
}

/// Fits TTDs and phase shifters so that `F_TD,m f_PS` approximates the steering
/// vector towards `directions[m]` on every subcarrier, then quantizes `T` and
/// re-fits the phases to the quantized delays.
pub fn fit_ttd_ps(directions: &[Direction], cfg: &SystemConfig) -> Result<FitReport> {
    let problem = FitProblem::new(directions, cfg)?;
    let continuous = problem.joint_delays();
    let objective = problem.objective(&continuous, &problem.best_phases(&continuous));
    let mut ttd = TtdGrid::zeros(cfg);
    for (q, t) in continuous.iter().enumerate() {
        ttd.set(q, *t);
    }
    let ttd = ttd.quantized(cfg);
    let tq: Vec<f64> = (0..cfg.q_t()).map(|q| ttd.get(q)).collect();
    let x = problem.best_phases(&tq);
    let quantized_objective = problem.objective(&tq, &x);
    let ps = PhaseShifters::from_phases(x.iter().map(|v| v * PI));
    Ok(FitReport { ttd, ps, continuous, objective, quantized_objective })
}

/// Block-coordinate descent on the same objective from `(φ, T) = (0, 0)`, alternating
/// exact phase and delay updates until the relative decrease drops below `tol`.
///
/// Returns the delays, the phases over π, and the objective after every half-step.
pub fn fit_ttd_ps_alternating(
    directions: &[Direction],
    cfg: &SystemConfig,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let problem = FitProblem::new(directions, cfg)?;
    let mut t = vec![0.0; cfg.q_t()];
    let mut x = vec![0.0; cfg.n_t()];
    let mut trace = vec![problem.objective(&t, &x)];
    for _ in 0..max_iter {
        x = problem.best_phases(&t);
        trace.push(problem.objective(&t, &x));
        t = problem.best_delays(&x);
        let current = problem.objective(&t, &x);
        let previous = trace[trace.len() - 2];
        trace.push(current);
        if previous - current <= tol * previous.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok((t, x, trace))
}
