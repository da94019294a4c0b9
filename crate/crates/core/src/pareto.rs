//! Rate-CRB boundary tracing and the dual-functional gain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{effective_gains, evaluate_with, BeamspaceDictionary};
use crate::model::{ChannelRealization, SystemConfig};
use crate::schemes::{OptimizerConfig, Scheme};
use crate::{Error, Result};

/// Points within this fraction of the rectangle of the reference chord count as on it.
const CHORD_TOLERANCE: f64 = 1e-12;
/// Largest reported gain; a boundary through the ideal corner maps here.
pub const RHO_CAP: f64 = 1.0 - 1e-12;

/// One scheme run on the `(eta, gamma)` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub eta: f64,
    pub gamma: f64,
    pub rate: f64,
    pub crb: f64,
    pub dominated: bool,
}

/// Dedicated-scheme operating points spanning the reference rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub r_sen: f64,
    pub crb_min: f64,
    pub r_max: f64,
    pub crb_com: f64,
}

impl Endpoints {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.r_sen, self.crb_min, self.r_max, self.crb_com].iter().all(|v| v.is_finite());
        if !finite || !(self.r_max > self.r_sen) || !(self.crb_com > self.crb_min) {
            return Err(Error::Degenerate(format!(
                "reference rectangle rate [{}, {}] x crb [{}, {}] is empty",
                self.r_sen, self.r_max, self.crb_min, self.crb_com
            )));
        }
        Ok(())
    }

    /// Rate and CRB of the communication- and sensing-dedicated schemes on `realization`.
    pub fn from_dedicated(realization: &ChannelRealization, cfg: &SystemConfig, opt: &OptimizerConfig) -> Result<Self> {
        let dict = BeamspaceDictionary::uniform(cfg);
        let com = evaluate_with(realization, &Scheme::Com.run(realization, cfg, opt)?, &dict, cfg)?;
        let sen = evaluate_with(realization, &Scheme::Sense.run(realization, cfg, opt)?, &dict, cfg)?;
        Ok(Self { r_sen: sen.rate, crb_min: sen.crb, r_max: com.rate, crb_com: com.crb })
    }
}

/// Traced boundary of one scheme on one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRegion {
    pub scheme: Scheme,
    /// Every feasible sweep point, flagged when dominated.
    pub sweep: Vec<BoundaryPoint>,
    pub endpoints: Endpoints,
    pub rho: f64,
}

impl ParetoRegion {
    /// Non-dominated `(rate, crb)` pairs sorted by rate.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self.sweep.iter().filter(|p| !p.dominated).map(|p| (p.rate, p.crb)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts
    }
}

/// `a` dominates `b`: no worse on both axes and strictly better on one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 >= b.0 && a.1 <= b.1 && (a.0 > b.0 || a.1 < b.1)
}

/// Flags for each point, `true` when some other point dominates it.
pub fn dominated_flags(points: &[(f64, f64)]) -> Vec<bool> {
    points.iter().map(|&p| points.iter().any(|&o| dominates(o, p))).collect()
}

/// Non-dominated subset sorted by rate; exact duplicates are kept once.
pub fn non_dominated(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let flags = dominated_flags(points);
    let mut out: Vec<(f64, f64)> = points.iter().zip(&flags).filter(|(_, d)| !**d).map(|(p, _)| *p).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out.dedup();
    out
}

/// `n` log-spaced values over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Default sensing weights: 9 points log-spaced over `[1e-2, 1e2]`.
pub fn default_eta_grid() -> Vec<f64> {
    log_grid(1e-2, 1e2, 9)
}

/// `n` thresholds from 0 to the largest one the scheme's `gamma = 0` precoder can serve.
///
/// The ceiling is `budget / (σ_c² Σ_m 1/|h̄_m|²)`, the threshold at which the
/// per-subcarrier minimum powers exhaust the budget.
pub fn gamma_grid(
    realization: &ChannelRealization,
    scheme: Scheme,
    cfg: &SystemConfig,
    opt: &OptimizerConfig,
    n: usize,
) -> Result<Vec<f64>> {
    let state = scheme.run(realization, cfg, &opt.with_eta_gamma(opt.eta, 0.0))?;
    let inv: f64 = effective_gains(&realization.comm, &state, cfg).iter().map(|h| 1.0 / h.norm_sqr()).sum();
    let top = if inv.is_finite() && inv > 0.0 { cfg.power_budget() / (cfg.sigma_c2 * inv) } else { 0.0 };
    if n <= 1 {
        return Ok(vec![0.0]);
    }
    Ok((0..n).map(|i| top * i as f64 / (n - 1) as f64).collect())
}

/// Runs `scheme` on every `(eta, gamma)` pair and flags dominated results.
///
/// Infeasible thresholds and precoders with unobservable targets are skipped.
pub fn trace_boundary(
    realization: &ChannelRealization,
    scheme: Scheme,
    etas: &[f64],
    gammas: &[f64],
    cfg: &SystemConfig,
    opt: &OptimizerConfig,
) -> Result<Vec<BoundaryPoint>> {
    if etas.is_empty() || gammas.is_empty() {
        return Err(Error::InvalidInput("boundary grids must be non-empty".into()));
    }
    let dict = BeamspaceDictionary::uniform(cfg);
    let grid: Vec<(f64, f64)> = etas.iter().flat_map(|&e| gammas.iter().map(move |&g| (e, g))).collect();
    let results: Vec<Option<BoundaryPoint>> = grid
        .par_iter()
        .map(|&(eta, gamma)| -> Result<Option<BoundaryPoint>> {
            let o = opt.with_eta_gamma(eta, gamma);
            let state = match scheme.run(realization, cfg, &o) {
                Ok(s) => s,
                Err(Error::Infeasible { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            match evaluate_with(realization, &state, &dict, cfg) {
                Ok(p) => Ok(Some(BoundaryPoint { eta, gamma, rate: p.rate, crb: p.crb, dominated: false })),
                Err(Error::SingularFisher(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut points: Vec<BoundaryPoint> = results.into_iter().flatten().collect();
    if points.is_empty() {
        return Err(Error::NoFeasiblePoint(scheme.name().into()));
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.rate, p.crb)).collect();
    for (p, d) in points.iter_mut().zip(dominated_flags(&pairs)) {
        p.dominated = d;
    }
    Ok(points)
}

/// Traces a scheme's boundary with the default grids and scores it against `endpoints`.
///
/// CBS ignores `eta`, so only the threshold is swept for it.
pub fn trace_region(
    realization: &ChannelRealization,
    scheme: Scheme,
    endpoints: Endpoints,
    n_gamma: usize,
    cfg: &SystemConfig,
    opt: &OptimizerConfig,
) -> Result<ParetoRegion> {
    let etas = if scheme == Scheme::Cbs { vec![opt.eta] } else { default_eta_grid() };
    let gammas = gamma_grid(realization, scheme, cfg, opt, n_gamma)?;
    let sweep = trace_boundary(realization, scheme, &etas, &gammas, cfg, opt)?;
    let pts: Vec<(f64, f64)> = sweep.iter().filter(|p| !p.dominated).map(|p| (p.rate, p.crb)).collect();
    let rho = dual_gain(&pts, &endpoints)?;
    Ok(ParetoRegion { scheme, sweep, endpoints, rho })
}

/// Normalized area by which the achievable region extends past the chord
/// between the dedicated endpoints.
///
/// Coordinates are mapped onto the unit square with the chord on the diagonal.
/// Points are clipped to the square, extended by free disposal (any point with
/// lower rate and higher CRB is achievable) and by time sharing (the lower convex
/// hull). The area between the hull and the chord is integrated exactly and
/// divided by the half-square.
pub fn dual_gain(boundary: &[(f64, f64)], endpoints: &Endpoints) -> Result<f64> {
    endpoints.validate()?;
    let (w, h) = (endpoints.r_max - endpoints.r_sen, endpoints.crb_com - endpoints.crb_min);
    let norm = |(r, c): (f64, f64)| {
        (((r - endpoints.r_sen) / w).clamp(0.0, 1.0), ((c - endpoints.crb_min) / h).clamp(0.0, 1.0))
    };
    let mut pts = vec![(0.0, 0.0), (1.0, 1.0)];
    for &p in boundary.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
        let (x, y) = norm(p);
        pts.push((x, y));
        pts.push((0.0, y));
    }
    let hull = lower_hull(pts);
    let mut area = 0.0;
    for seg in hull.windows(2) {
        let ((x0, y0), (x1, y1)) = (seg[0], seg[1]);
        let snap = |d: f64| if d.abs() <= CHORD_TOLERANCE { 0.0 } else { d };
        area += positive_part_integral(snap(x0 - y0), snap(x1 - y1), x1 - x0);
    }
    Ok((area / 0.5).clamp(0.0, RHO_CAP))
}

/// `∫ max(0, d(x)) dx` for `d` linear over an interval of length `len` with end values `d0`, `d1`.
fn positive_part_integral(d0: f64, d1: f64, len: f64) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    match (d0 > 0.0, d1 > 0.0) {
        (true, true) => 0.5 * (d0 + d1) * len,
        (false, false) => 0.0,
        (true, false) => 0.5 * d0 * len * d0 / (d0 - d1),
        (false, true) => 0.5 * d1 * len * d1 / (d1 - d0),
    }
}

/// Lower convex hull over `x`, keeping the lowest point per abscissa.
fn lower_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|b, a| a.0 == b.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}
