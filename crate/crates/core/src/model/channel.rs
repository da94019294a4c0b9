use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::array::{Direction, PHI_RANGE, THETA_RANGE};
use crate::model::SystemConfig;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Draws from CN(0, σ²): variance σ²/2 on each real component.
pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> C64 {
    let s = sigma / 2f64.sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

/// Line-of-sight user channel across all subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct CommChannel {
    pub user: Direction,
    pub tau: f64,
    pub beta: Vec<C64>,
    /// Materialized `h_m = β_m e^{-j2π f_m τ} a_t(θ_c, φ_c, f_m)`.
    pub h: Vec<CVector>,
}

impl CommChannel {
    pub fn new(user: Direction, tau: f64, beta: Vec<C64>, cfg: &SystemConfig) -> Result<Self> {
        user.check()?;
        if beta.len() != cfg.subcarriers {
            return Err(Error::Dimension(format!(
                "{} user gains for {} subcarriers",
                beta.len(),
                cfg.subcarriers
            )));
        }
        let arr = cfg.tx_array();
        let h = beta
            .iter()
            .enumerate()
            .map(|(m, b)| {
                let f = cfg.freq(m);
                let g = b * C64::from_polar(1.0, -2.0 * PI * f * tau);
                arr.steering(user, f / cfg.fc) * g
            })
            .collect();
        Ok(Self { user, tau, beta, h })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub dir: Direction,
    /// Reflection coefficient per subcarrier.
    pub alpha: Vec<C64>,
}

/// Steering matrices of all targets at one subcarrier.
///
/// Columns follow target order. `ar*` use the receive array, `at*` the transmit array.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierGeometry {
    pub at: CMatrix,
    pub at_dtheta: CMatrix,
    pub at_dphi: CMatrix,
    pub ar: CMatrix,
    pub ar_dtheta: CMatrix,
    pub ar_dphi: CMatrix,
    pub alpha: Vec<C64>,
}

/// K point targets and their per-subcarrier steering geometry.
///
/// The echo model is `y_m = G_m x_m` with `G_m = Σ_k α_{k,m} a_r(k) a_t(k)^H`,
/// so a target is illuminated through `a_t^H x`, the same inner product that
/// carries data to the user.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingScene {
    pub targets: Vec<Target>,
    pub geometry: Vec<SubcarrierGeometry>,
}

impl SensingScene {
    pub fn new(targets: Vec<Target>, cfg: &SystemConfig) -> Result<Self> {
        for t in &targets {
            t.dir.check()?;
            if t.alpha.len() != cfg.subcarriers {
                return Err(Error::Dimension(format!(
                    "{} reflection coefficients for {} subcarriers",
                    t.alpha.len(),
                    cfg.subcarriers
                )));
            }
        }
        let (tx, rx) = (cfg.tx_array(), cfg.rx_array());
        let k = targets.len();
        let geometry = (0..cfg.subcarriers)
            .map(|m| {
                let ratio = cfg.freq(m) / cfg.fc;
                let mut g = SubcarrierGeometry {
                    at: CMatrix::zeros(tx.len(), k),
                    at_dtheta: CMatrix::zeros(tx.len(), k),
                    at_dphi: CMatrix::zeros(tx.len(), k),
                    ar: CMatrix::zeros(rx.len(), k),
                    ar_dtheta: CMatrix::zeros(rx.len(), k),
                    ar_dphi: CMatrix::zeros(rx.len(), k),
                    alpha: targets.iter().map(|t| t.alpha[m]).collect(),
                };
                for (j, t) in targets.iter().enumerate() {
                    g.at.set_column(j, &tx.steering(t.dir, ratio));
                    let (dt, dp) = tx.steering_derivatives(t.dir, ratio);
                    g.at_dtheta.set_column(j, &dt);
                    g.at_dphi.set_column(j, &dp);
                    g.ar.set_column(j, &rx.steering(t.dir, ratio));
                    let (dt, dp) = rx.steering_derivatives(t.dir, ratio);
                    g.ar_dtheta.set_column(j, &dt);
                    g.ar_dphi.set_column(j, &dp);
                }
                g
            })
            .collect();
        Ok(Self { targets, geometry })
    }

    pub fn k(&self) -> usize {
        self.targets.len()
    }

    /// `G_m` as a sum of outer products (0-based subcarrier).
    pub fn response(&self, m: usize) -> CMatrix {
        let g = &self.geometry[m];
        let mut out = CMatrix::zeros(g.ar.nrows(), g.at.nrows());
        for k in 0..self.k() {
            out += g.ar.column(k) * g.at.column(k).adjoint() * g.alpha[k];
        }
        out
    }

    /// `G_m = A_r Σ A_t^H` in factored form (0-based subcarrier).
    pub fn response_factored(&self, m: usize) -> CMatrix {
        let g = &self.geometry[m];
        let sigma = CMatrix::from_diagonal(&CVector::from_vec(g.alpha.clone()));
        &g.ar * sigma * g.at.adjoint()
    }
}

/// One user channel plus one sensing scene, tagged with the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub seed: u64,
    pub comm: CommChannel,
    pub scene: SensingScene,
    pub msia: f64,
}

impl ChannelRealization {
    pub fn new(seed: u64, comm: CommChannel, scene: SensingScene) -> Self {
        let msia = msia(&comm, &scene);
        Self { seed, comm, scene, msia }
    }
}

/// Samples the user: uniform angles, delay in `(0, τ_max]`, i.i.d. CN(0, σ_β²) gains.
pub fn sample_comm_channel<R: Rng + ?Sized>(rng: &mut R, cfg: &SystemConfig) -> Result<CommChannel> {
    let theta = rng.random_range(THETA_RANGE.0..=THETA_RANGE.1);
    let phi = rng.random_range(PHI_RANGE.0..=PHI_RANGE.1);
    let tau = cfg.tau_max * (1.0 - rng.random::<f64>());
    let beta = (0..cfg.subcarriers).map(|_| complex_normal(rng, cfg.sigma_beta)).collect();
    CommChannel::new(Direction::new(theta, phi), tau, beta, cfg)
}

const PLACEMENT_ATTEMPTS: usize = 512;

/// Places `K` targets so that their MSIA to the user equals `msia_target`.
///
/// Every target sits at the same radial offset `√2·msia_target` from the user
/// on the (θ, φ) plane, along an independently drawn direction. Draws that
/// leave the angle domains are rejected and redrawn.
pub fn sample_sensing_scene<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &SystemConfig,
    comm: &CommChannel,
    msia_target: f64,
) -> Result<SensingScene> {
    if !(msia_target.is_finite() && msia_target >= 0.0) {
        return Err(Error::InvalidInput(format!("msia target must be non-negative, got {msia_target}")));
    }
    let radius = 2f64.sqrt() * msia_target;
    let user = comm.user;
    let mut dirs = None;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let cand: Vec<Direction> = (0..cfg.targets)
            .map(|_| {
                let psi = rng.random_range(0.0..2.0 * PI);
                Direction::new(user.theta + radius * psi.cos(), user.phi + radius * psi.sin())
            })
            .collect();
        if cand.iter().all(Direction::in_domain) {
            dirs = Some(cand);
            break;
        }
    }
    let dirs = dirs.ok_or(Error::MsiaUnreachable(msia_target))?;
    let targets = dirs
        .into_iter()
        .map(|dir| Target {
            dir,
            alpha: (0..cfg.subcarriers).map(|_| complex_normal(rng, cfg.sigma_alpha)).collect(),
        })
        .collect();
    SensingScene::new(targets, cfg)
}

/// Deterministic realization for `seed`; redraws the user when the MSIA cannot be met.
pub fn sample_realization(seed: u64, cfg: &SystemConfig, msia_target: f64) -> Result<ChannelRealization> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = Error::MsiaUnreachable(msia_target);
    for _ in 0..64 {
        let comm = sample_comm_channel(&mut rng, cfg)?;
        match sample_sensing_scene(&mut rng, cfg, &comm, msia_target) {
            Ok(scene) => return Ok(ChannelRealization::new(seed, comm, scene)),
            Err(e @ Error::MsiaUnreachable(_)) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Seed for one cell of a batch, a pure function of the base seed and the cell coordinates.
///
/// Chains the splitmix64 finalizer so that neighbouring indices land far apart.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// Root-mean-square angular interval between the user and the targets.
pub fn msia(comm: &CommChannel, scene: &SensingScene) -> f64 {
    if scene.k() == 0 {
        return 0.0;
    }
    let sum: f64 = scene
        .targets
        .iter()
        .map(|t| (t.dir.theta - comm.user.theta).powi(2) + (t.dir.phi - comm.user.phi).powi(2))
        .sum();
    (sum / (2.0 * scene.k() as f64)).sqrt()
}

/// Target response matrix `G_m` at the 1-based subcarrier `m`.
pub fn target_response(scene: &SensingScene, m: usize, cfg: &SystemConfig) -> Result<CMatrix> {
    if m == 0 || m > cfg.subcarriers || m > scene.geometry.len() {
        return Err(Error::SubcarrierIndex { index: m, count: cfg.subcarriers });
    }
    Ok(scene.response(m - 1))
}
