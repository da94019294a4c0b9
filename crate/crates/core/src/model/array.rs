use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::model::SystemConfig;
use crate::{CVector, Error, Result, C64};

/// Admissible elevation range, radians.
pub const THETA_RANGE: (f64, f64) = (0.0, PI);
/// Admissible azimuth range, radians.
pub const PHI_RANGE: (f64, f64) = (-FRAC_PI_2, FRAC_PI_2);

/// Elevation / azimuth pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn in_domain(&self) -> bool {
        (THETA_RANGE.0..=THETA_RANGE.1).contains(&self.theta)
            && (PHI_RANGE.0..=PHI_RANGE.1).contains(&self.phi)
    }

    pub fn check(&self) -> Result<()> {
        if self.in_domain() {
            Ok(())
        } else {
            Err(Error::AngleDomain { theta: self.theta, phi: self.phi })
        }
    }

    /// Spatial frequencies `(sin(phi) sin(theta), cos(theta))` along the two axes.
    pub fn spatial_freq(&self) -> (f64, f64) {
        (self.phi.sin() * self.theta.sin(), self.theta.cos())
    }
}

/// Uniform planar array with half-wavelength spacing at `f_c`.
///
/// Antenna `(i_h, i_v)` sits at vector index `i_h * nv + i_v`, which is the
/// ordering of `a^h ⊗ a^v`. Every module that maps antennas to indices goes
/// through [`Upa::index`] / [`Upa::position`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Upa {
    pub nh: usize,
    pub nv: usize,
}

impl Upa {
    pub fn new(nh: usize, nv: usize) -> Self {
        Self { nh, nv }
    }

    pub fn len(&self) -> usize {
        self.nh * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ih: usize, iv: usize) -> usize {
        ih * self.nv + iv
    }

    pub fn position(&self, n: usize) -> (usize, usize) {
        (n / self.nv, n % self.nv)
    }

    /// Steering vector for spatial frequencies `(u_h, u_v)` scaled by `ratio = f / f_c`.
    pub fn steering_uv(&self, uh: f64, uv: f64, ratio: f64) -> CVector {
        let norm = 1.0 / (self.len() as f64).sqrt();
        CVector::from_iterator(
            self.len(),
            (0..self.len()).map(|n| {
                let (ih, iv) = self.position(n);
                let psi = PI * ratio * (uh * ih as f64 + uv * iv as f64);
                C64::from_polar(norm, psi)
            }),
        )
    }

    pub fn steering(&self, dir: Direction, ratio: f64) -> CVector {
        let (uh, uv) = dir.spatial_freq();
        self.steering_uv(uh, uv, ratio)
    }

    /// Analytic `(∂a/∂θ, ∂a/∂φ)` at `dir`.
    pub fn steering_derivatives(&self, dir: Direction, ratio: f64) -> (CVector, CVector) {
        let a = self.steering(dir, ratio);
        let (st, ct) = dir.theta.sin_cos();
        let (sp, cp) = dir.phi.sin_cos();
        let mut d_theta = a.clone();
        let mut d_phi = a;
        for n in 0..self.len() {
            let (ih, iv) = self.position(n);
            let (ih, iv) = (ih as f64, iv as f64);
            let rate_theta = PI * ratio * (sp * ct * ih - st * iv);
            let rate_phi = PI * ratio * cp * st * ih;
            d_theta[n] *= C64::new(0.0, rate_theta);
            d_phi[n] *= C64::new(0.0, rate_phi);
        }
        (d_theta, d_phi)
    }
}

/// Transmit steering vector `a_t(θ, φ, f)`.
pub fn steering_vector(theta: f64, phi: f64, f: f64, cfg: &SystemConfig) -> Result<CVector> {
    let dir = Direction::new(theta, phi);
    dir.check()?;
    Ok(cfg.tx_array().steering(dir, f / cfg.fc))
}

/// Analytic derivatives of the transmit steering vector w.r.t. elevation and azimuth.
pub fn steering_derivatives(
    theta: f64,
    phi: f64,
    f: f64,
    cfg: &SystemConfig,
) -> Result<(CVector, CVector)> {
    let dir = Direction::new(theta, phi);
    dir.check()?;
    Ok(cfg.tx_array().steering_derivatives(dir, f / cfg.fc))
}
