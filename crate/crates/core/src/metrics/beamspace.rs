use std::f64::consts::PI;

use crate::model::{CommChannel, SensingScene, SystemConfig};
use crate::precoder::TtdGrid;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Mixing weight of the uniform distribution added to the second KL argument.
pub const KL_SMOOTHING: f64 = 1e-9;
/// Lower bound on the KL divergence, capping the correlation at `1 / KL_FLOOR`.
pub const KL_FLOOR: f64 = 1e-6;

/// Transmit and receive dictionaries sampled on a uniform spatial-frequency grid at `f_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamspaceDictionary {
    pub dt: CMatrix,
    pub dr: CMatrix,
}

impl BeamspaceDictionary {
    /// Grid `u ∈ {-1 + 2i/(o·N)}` per axis; column `g = i_h · (o·N_v) + i_v`.
    ///
    /// With `o = 1` the transmit dictionary is the unitary 2-D DFT basis.
    pub fn uniform(cfg: &SystemConfig) -> Self {
        let o = cfg.dict_oversample;
        let (gh, gv) = (o * cfg.n_th, o * cfg.n_tv);
        let grid: Vec<(f64, f64)> = (0..gh)
            .flat_map(|i| {
                (0..gv).map(move |j| (-1.0 + 2.0 * i as f64 / gh as f64, -1.0 + 2.0 * j as f64 / gv as f64))
            })
            .collect();
        let (tx, rx) = (cfg.tx_array(), cfg.rx_array());
        let mut dt = CMatrix::zeros(tx.len(), grid.len());
        let mut dr = CMatrix::zeros(rx.len(), grid.len());
        for (g, &(uh, uv)) in grid.iter().enumerate() {
            dt.set_column(g, &tx.steering_uv(uh, uv, 1.0));
            dr.set_column(g, &rx.steering_uv(uh, uv, 1.0));
        }
        Self { dt, dr }
    }

    pub fn from_columns(dt: CMatrix, dr: CMatrix) -> Result<Self> {
        if dt.ncols() != dr.ncols() {
            return Err(Error::Dimension(format!(
                "dictionaries have {} and {} columns",
                dt.ncols(),
                dr.ncols()
            )));
        }
        Ok(Self { dt, dr })
    }

    pub fn size(&self) -> usize {
        self.dt.ncols()
    }
}

/// Unnormalized per-subcarrier beamspace magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamspaceProfile {
    /// `|D_t^H h̃_m|` per subcarrier.
    pub comm: Vec<Vec<f64>>,
    /// `|diag(D_r^H G̃_m D_t)|` per subcarrier.
    pub sensing: Vec<Vec<f64>>,
    /// Single-target contributions `|α_k (d_g^H a_r)(a_t^H F d_g)|`, indexed `[k][m][g]`.
    pub sensing_per_target: Vec<Vec<Vec<f64>>>,
}

/// Beamspace images of the TTD-equivalent channels, kept in a form that makes
/// single-subarray delay changes cheap.
///
/// For every subcarrier `m` and stream `s` (the user channel, then each target's
/// transmit steering vector) it stores the per-subarray partial projections
/// `P[m][s][q] = Σ_{n ∈ q} conj(D_t[n, :]) v_{m,s}[n]`, so that
/// `D_t^H F_m^H v = Σ_q e^{-j2π f_m T_q} P[m][s][q]`.
#[derive(Debug, Clone)]
pub struct EquivalentBeamspace {
    freqs: Vec<f64>,
    partial: Vec<Vec<Vec<CVector>>>,
    /// `z[m][s] = D_t^H F_m^H v_{m,s}` for the current delays.
    current: Vec<Vec<CVector>>,
    /// `α_{k,m} · D_r^H a_r(k)`, indexed `[m][k]`.
    receive: Vec<Vec<CVector>>,
    delays: Vec<f64>,
}

impl EquivalentBeamspace {
    pub fn new(
        comm: &CommChannel,
        scene: &SensingScene,
        ttd: Option<&TtdGrid>,
        dict: &BeamspaceDictionary,
        cfg: &SystemConfig,
    ) -> Result<Self> {
        if dict.dt.nrows() != cfg.n_t() || dict.dr.nrows() != cfg.n_r() {
            return Err(Error::Dimension("dictionary does not match the array sizes".into()));
        }
        let subarrays: Vec<Vec<usize>> = (0..cfg.q_th)
            .flat_map(|qh| (0..cfg.q_tv).map(move |qv| (qh, qv)))
            .map(|(qh, qv)| cfg.subarray_antennas(qh, qv))
            .collect();
        let g_t = dict.size();
        let dt_conj = dict.dt.map(|v| v.conj());
        let project = |v: &CVector| -> Vec<CVector> {
            subarrays
                .iter()
                .map(|ants| {
                    let mut acc = CVector::zeros(g_t);
                    for &n in ants {
                        let vn = v[n];
                        for g in 0..g_t {
                            acc[g] += dt_conj[(n, g)] * vn;
                        }
                    }
                    acc
                })
                .collect()
        };
        let mut partial = Vec::with_capacity(cfg.subcarriers);
        let mut receive = Vec::with_capacity(cfg.subcarriers);
        for m in 0..cfg.subcarriers {
            let geom = &scene.geometry[m];
            let mut streams = vec![project(&comm.h[m])];
            for k in 0..scene.k() {
                streams.push(project(&geom.at.column(k).into_owned()));
            }
            partial.push(streams);
            let dr_h = dict.dr.adjoint();
            receive.push((0..scene.k()).map(|k| &dr_h * geom.ar.column(k) * geom.alpha[k]).collect());
        }
        let delays = match ttd {
            Some(t) => (0..cfg.q_t()).map(|q| t.get(q)).collect(),
            None => vec![0.0; cfg.q_t()],
        };
        let mut out = Self { freqs: cfg.frequencies(), partial, current: Vec::new(), receive, delays };
        out.rebuild();
        Ok(out)
    }

    fn rebuild(&mut self) {
        self.current = self
            .partial
            .iter()
            .zip(&self.freqs)
            .map(|(streams, &f)| {
                streams
                    .iter()
                    .map(|parts| {
                        parts.iter().zip(&self.delays).fold(CVector::zeros(parts[0].len()), |acc, (p, &t)| {
                            acc + p * C64::from_polar(1.0, -2.0 * PI * f * t)
                        })
                    })
                    .collect()
            })
            .collect();
    }

    pub fn delay(&self, q: usize) -> f64 {
        self.delays[q]
    }

    fn accumulate(&self, z: &[CVector], receive: &[CVector], hc: &mut [f64], hs: &mut [f64]) {
        for g in 0..hc.len() {
            hc[g] += z[0][g].norm();
            let mut s = C64::new(0.0, 0.0);
            for (k, r) in receive.iter().enumerate() {
                s += r[g] * z[k + 1][g].conj();
            }
            hs[g] += s.norm();
        }
    }

    /// Unnormalized `(Σ_m |h^b_c,m|, Σ_m |h^b_s,m|)` at the current delays.
    pub fn sums(&self) -> (Vec<f64>, Vec<f64>) {
        let g_t = self.current[0][0].len();
        let (mut hc, mut hs) = (vec![0.0; g_t], vec![0.0; g_t]);
        for (z, r) in self.current.iter().zip(&self.receive) {
            self.accumulate(z, r, &mut hc, &mut hs);
        }
        (hc, hs)
    }

    /// Unnormalized sums with subarray `q` temporarily set to delay `t`.
    pub fn sums_with(&self, q: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
        let g_t = self.current[0][0].len();
        let (mut hc, mut hs) = (vec![0.0; g_t], vec![0.0; g_t]);
        let old = self.delays[q];
        for m in 0..self.freqs.len() {
            let f = self.freqs[m];
            let delta = C64::from_polar(1.0, -2.0 * PI * f * t) - C64::from_polar(1.0, -2.0 * PI * f * old);
            let z: Vec<CVector> = self.current[m]
                .iter()
                .zip(&self.partial[m])
                .map(|(cur, parts)| cur + &parts[q] * delta)
                .collect();
            self.accumulate(&z, &self.receive[m], &mut hc, &mut hs);
        }
        (hc, hs)
    }

    pub fn set_delay(&mut self, q: usize, t: f64) {
        let old = self.delays[q];
        for m in 0..self.freqs.len() {
            let f = self.freqs[m];
            let delta = C64::from_polar(1.0, -2.0 * PI * f * t) - C64::from_polar(1.0, -2.0 * PI * f * old);
            for (cur, parts) in self.current[m].iter_mut().zip(&self.partial[m]) {
                *cur += &parts[q] * delta;
            }
        }
        self.delays[q] = t;
    }

    /// Normalized `(ĥ_c^b, ĥ_s^b)`.
    pub fn distributions(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (hc, hs) = self.sums();
        Ok((normalize(hc)?, normalize(hs)?))
    }

    pub fn correlation(&self) -> Result<f64> {
        let (p, q) = self.distributions()?;
        cs_correlation(&p, &q)
    }

    /// C-S correlation if subarray `q` were set to delay `t`.
    pub fn correlation_with(&self, q: usize, t: f64) -> Result<f64> {
        let (hc, hs) = self.sums_with(q, t);
        cs_correlation(&normalize(hc)?, &normalize(hs)?)
    }

    pub fn profile(&self) -> BeamspaceProfile {
        let k = self.receive.first().map_or(0, Vec::len);
        let comm = self.current.iter().map(|z| z[0].iter().map(|v| v.norm()).collect()).collect();
        let mut sensing = Vec::with_capacity(self.current.len());
        let mut per_target = vec![Vec::with_capacity(self.current.len()); k];
        for (z, r) in self.current.iter().zip(&self.receive) {
            let g_t = z[0].len();
            let mut total = vec![C64::new(0.0, 0.0); g_t];
            for kk in 0..k {
                let mut single = Vec::with_capacity(g_t);
                for g in 0..g_t {
                    let v = r[kk][g] * z[kk + 1][g].conj();
                    total[g] += v;
                    single.push(v.norm());
                }
                per_target[kk].push(single);
            }
            sensing.push(total.iter().map(|v| v.norm()).collect());
        }
        BeamspaceProfile { comm, sensing, sensing_per_target: per_target }
    }
}

fn normalize(v: Vec<f64>) -> Result<Vec<f64>> {
    let s: f64 = v.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::ZeroChannel);
    }
    Ok(v.into_iter().map(|x| x / s).collect())
}

/// Normalized beamspace channels `(ĥ_c^b, ĥ_s^b)`; with `ttd` the equivalent
/// channels `F^H h` and `G F` are projected instead.
pub fn beamspace_channels(
    comm: &CommChannel,
    scene: &SensingScene,
    ttd: Option<&TtdGrid>,
    dict: &BeamspaceDictionary,
    cfg: &SystemConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    EquivalentBeamspace::new(comm, scene, ttd, dict, cfg)?.distributions()
}

/// Per-subcarrier magnitudes behind [`beamspace_channels`].
pub fn beamspace_profile(
    comm: &CommChannel,
    scene: &SensingScene,
    ttd: Option<&TtdGrid>,
    dict: &BeamspaceDictionary,
    cfg: &SystemConfig,
) -> Result<BeamspaceProfile> {
    Ok(EquivalentBeamspace::new(comm, scene, ttd, dict, cfg)?.profile())
}

/// `KL(p ‖ q̃)` with `q̃ = (1-δ) q + δ/N`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Dimension(format!("KL arguments have lengths {} and {}", p.len(), q.len())));
    }
    for v in [p, q] {
        let s: f64 = v.iter().sum();
        if v.iter().any(|x| !(*x >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("KL arguments must lie on the probability simplex".into()));
        }
    }
    let uniform = 1.0 / p.len() as f64;
    // non-negative by Gibbs' inequality; the clamp removes roundoff below zero
    let kl: f64 = p
        .iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| {
            let qs = (1.0 - KL_SMOOTHING) * qi + KL_SMOOTHING * uniform;
            pi * (pi / qs).ln()
        })
        .sum();
    Ok(kl.max(0.0))
}

/// C-S channel correlation `1 / max(KL(ĥ_c ‖ ĥ_s), ε)`; not symmetric in its arguments.
pub fn cs_correlation(hb_c: &[f64], hb_s: &[f64]) -> Result<f64> {
    Ok(1.0 / kl_divergence(hb_c, hb_s)?.max(KL_FLOOR))
}
