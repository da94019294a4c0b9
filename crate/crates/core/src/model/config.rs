use serde::{Deserialize, Serialize};

use crate::model::array::Upa;
use crate::{Error, Result};

/// Array geometry, subcarrier grid, TTD hardware limits and noise/power levels.
///
/// Powers are linear and normalized to the noise floor of the profile
/// (0 dBm noise maps to `1.0`), so `p_t / sigma_c2` is the SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Transmit UPA, horizontal antennas.
    pub n_th: usize,
    /// Transmit UPA, vertical antennas.
    pub n_tv: usize,
    /// Receive UPA, horizontal antennas.
    pub n_rh: usize,
    /// Receive UPA, vertical antennas.
    pub n_rv: usize,
    /// TTD sub-arrays along the horizontal axis.
    pub q_th: usize,
    /// TTD sub-arrays along the vertical axis.
    pub q_tv: usize,
    /// Number of OFDM subcarriers.
    pub subcarriers: usize,
    /// Center frequency, Hz.
    pub fc: f64,
    /// Bandwidth, Hz.
    pub bandwidth: f64,
    /// TTD resolution in bits.
    pub ttd_bits: u32,
    /// Largest TTD delay, seconds.
    pub t_max: f64,
    /// Total transmit power budget.
    pub p_t: f64,
    pub sigma_c2: f64,
    pub sigma_s2: f64,
    pub sigma_beta: f64,
    pub sigma_alpha: f64,
    /// Largest user propagation delay, seconds.
    pub tau_max: f64,
    /// Number of sensing targets.
    pub targets: usize,
    /// Beamspace dictionary oversampling per axis (1 = critically sampled).
    pub dict_oversample: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl SystemConfig {
    /// Full-scale profile: 16x16 UPA, 8x8 TTDs, 32 subcarriers at 100 GHz.
    pub fn paper() -> Self {
        Self {
            n_th: 16,
            n_tv: 16,
            n_rh: 16,
            n_rv: 16,
            q_th: 8,
            q_tv: 8,
            subcarriers: 32,
            fc: 100e9,
            bandwidth: 8e9,
            ttd_bits: 4,
            t_max: 100e-12,
            p_t: 10.0,
            sigma_c2: 1.0,
            sigma_s2: 1.0,
            sigma_beta: 1.0,
            sigma_alpha: 0.6,
            tau_max: 100e-9,
            targets: 3,
            dict_oversample: 1,
        }
    }

    /// Laptop-scale profile: 4x4 UPA, 2x2 TTDs, 8 subcarriers, two targets.
    pub fn desk() -> Self {
        Self {
            n_th: 4,
            n_tv: 4,
            n_rh: 4,
            n_rv: 4,
            q_th: 2,
            q_tv: 2,
            subcarriers: 8,
            targets: 2,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_th", self.n_th),
            ("n_tv", self.n_tv),
            ("n_rh", self.n_rh),
            ("n_rv", self.n_rv),
            ("q_th", self.q_th),
            ("q_tv", self.q_tv),
            ("subcarriers", self.subcarriers),
            ("targets", self.targets),
            ("dict_oversample", self.dict_oversample),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.n_th % self.q_th != 0 || self.n_tv % self.q_tv != 0 {
            return Err(Error::Config(format!(
                "antenna counts {}x{} are not divisible by sub-array counts {}x{}",
                self.n_th, self.n_tv, self.q_th, self.q_tv
            )));
        }
        if self.ttd_bits == 0 || self.ttd_bits > 24 {
            return Err(Error::Config("ttd_bits must be in 1..=24".into()));
        }
        let positives = [
            ("fc", self.fc),
            ("bandwidth", self.bandwidth),
            ("t_max", self.t_max),
            ("p_t", self.p_t),
            ("sigma_c2", self.sigma_c2),
            ("sigma_s2", self.sigma_s2),
            ("sigma_beta", self.sigma_beta),
            ("sigma_alpha", self.sigma_alpha),
            ("tau_max", self.tau_max),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if self.bandwidth >= 2.0 * self.fc {
            return Err(Error::Config("bandwidth must be below twice the center frequency".into()));
        }
        Ok(())
    }

    pub fn n_t(&self) -> usize {
        self.n_th * self.n_tv
    }

    pub fn n_r(&self) -> usize {
        self.n_rh * self.n_rv
    }

    pub fn l_h(&self) -> usize {
        self.n_th / self.q_th
    }

    pub fn l_v(&self) -> usize {
        self.n_tv / self.q_tv
    }

    pub fn q_t(&self) -> usize {
        self.q_th * self.q_tv
    }

    /// Beamspace dictionary size.
    pub fn g_t(&self) -> usize {
        self.n_t() * self.dict_oversample * self.dict_oversample
    }

    pub fn tx_array(&self) -> Upa {
        Upa::new(self.n_th, self.n_tv)
    }

    pub fn rx_array(&self) -> Upa {
        Upa::new(self.n_rh, self.n_rv)
    }

    /// Number of TTD levels, `2^B_t`.
    pub fn ttd_levels(&self) -> usize {
        1usize << self.ttd_bits
    }

    /// Spacing of the TTD grid, `t_max / 2^B_t`.
    pub fn ttd_step(&self) -> f64 {
        self.t_max / self.ttd_levels() as f64
    }

    /// All admissible TTD values in ascending order.
    pub fn ttd_grid(&self) -> Vec<f64> {
        (0..self.ttd_levels()).map(|b| b as f64 * self.ttd_step()).collect()
    }

    /// Frequency of 0-based subcarrier `m`.
    pub fn freq(&self, m: usize) -> f64 {
        let mm = self.subcarriers as f64;
        self.fc + self.bandwidth / mm * ((m + 1) as f64 - (mm + 1.0) / 2.0)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.subcarriers).map(|m| self.freq(m)).collect()
    }

    /// Sets `p_t` so that `p_t / sigma_c2` equals the given SNR.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.p_t = self.sigma_c2 * 10f64.powf(snr_db / 10.0);
        self
    }

    /// Per-antenna power budget `P_t / N_t` on the subcarrier power vector.
    pub fn power_budget(&self) -> f64 {
        self.p_t / self.n_t() as f64
    }

    /// Subarray `(q_h, q_v)` that drives transmit antenna `n`.
    pub fn subarray_of(&self, n: usize) -> (usize, usize) {
        let (ih, iv) = self.tx_array().position(n);
        (ih / self.l_h(), iv / self.l_v())
    }

    /// Row-major index of a subarray in the TTD grid.
    pub fn subarray_index(&self, qh: usize, qv: usize) -> usize {
        qh * self.q_tv + qv
    }

    /// Antennas driven by subarray `(q_h, q_v)`.
    pub fn subarray_antennas(&self, qh: usize, qv: usize) -> Vec<usize> {
        let arr = self.tx_array();
        let mut out = Vec::with_capacity(self.l_h() * self.l_v());
        for lh in 0..self.l_h() {
            for lv in 0..self.l_v() {
                out.push(arr.index(qh * self.l_h() + lh, qv * self.l_v() + lv));
            }
        }
        out
    }
}

/// Frequency of the 1-based subcarrier `m`, `f_c + (B/M)(m - (M+1)/2)`.
pub fn subcarrier_frequency(cfg: &SystemConfig, m: usize) -> Result<f64> {
    if m == 0 || m > cfg.subcarriers {
        return Err(Error::SubcarrierIndex { index: m, count: cfg.subcarriers });
    }
    Ok(cfg.freq(m - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_subcarrier_is_fc_for_odd_m() {
        let cfg = SystemConfig { subcarriers: 9, ..SystemConfig::desk() };
        assert_eq!(subcarrier_frequency(&cfg, 5).unwrap(), cfg.fc);
    }

    #[test]
    fn paper_grid_edges() {
        let cfg = SystemConfig::paper();
        let f1 = subcarrier_frequency(&cfg, 1).unwrap();
        let f32 = subcarrier_frequency(&cfg, 32).unwrap();
        assert!((f1 - 96.125e9).abs() < 1e-3);
        assert!((f32 - 103.875e9).abs() < 1e-3);
        assert!((f1 + f32 - 2.0 * cfg.fc).abs() < 1e-3);
        let fs = cfg.frequencies();
        assert!(fs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn subcarrier_index_range() {
        let cfg = SystemConfig::desk();
        assert!(matches!(subcarrier_frequency(&cfg, 0), Err(Error::SubcarrierIndex { .. })));
        assert!(subcarrier_frequency(&cfg, 9).is_err());
    }

    #[test]
    fn validation_rejects_bad_partition() {
        let mut cfg = SystemConfig::desk();
        cfg.q_th = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::desk();
        cfg.bandwidth = 3.0 * cfg.fc;
        assert!(cfg.validate().is_err());
        SystemConfig::paper().validate().unwrap();
        SystemConfig::desk().validate().unwrap();
    }

    #[test]
    fn subarray_partition_is_horizontal_major() {
        let cfg = SystemConfig { n_th: 4, n_tv: 1, n_rh: 4, n_rv: 1, q_th: 2, q_tv: 1, ..SystemConfig::desk() };
        assert_eq!(cfg.subarray_antennas(0, 0), vec![0, 1]);
        assert_eq!(cfg.subarray_antennas(1, 0), vec![2, 3]);
        let cfg = SystemConfig::desk();
        assert_eq!(cfg.subarray_antennas(0, 1), vec![2, 3, 6, 7]);
        assert_eq!(cfg.subarray_of(7), (0, 1));
    }
}
