use crate::precoder::PowerAllocation;
use crate::{Error, Result, C64};

/// Minimizes `Σ_m q_m / p_m` subject to `p_m ≥ Γ / |h̄_m|²` and `Σ_m p_m ≤ budget`.
///
/// The KKT point is `p_m = max(l_m, ν √q_m)` with the budget active; `ν` is found
/// exactly by walking the breakpoints `l_m / √q_m` of the piecewise-linear budget map.
pub fn allocate_power(q: &[f64], hbar: &[C64], gamma: f64, budget: f64) -> Result<PowerAllocation> {
    if q.len() != hbar.len() || q.is_empty() {
        return Err(Error::Dimension(format!("{} CRB weights for {} gains", q.len(), hbar.len())));
    }
    if q.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("CRB weights must be positive and finite".into()));
    }
    if !(budget > 0.0) {
        return Err(Error::InvalidInput(format!("power budget must be positive, got {budget}")));
    }
    let lower: Vec<f64> = hbar
        .iter()
        .map(|h| if gamma > 0.0 { gamma / h.norm_sqr() } else { 0.0 })
        .collect();
    let required: f64 = lower.iter().sum();
    if !(required <= budget) {
        return Err(Error::Infeasible { required, budget });
    }
    let sq: Vec<f64> = q.iter().map(|v| v.sqrt()).collect();
    let breaks: Vec<f64> = lower.iter().zip(&sq).map(|(l, s)| l / s).collect();
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| breaks[a].total_cmp(&breaks[b]));
    let (mut s_free, mut l_bound) = (0.0, required);
    let mut nu = 0.0;
    for (i, &idx) in order.iter().enumerate() {
        s_free += sq[idx];
        l_bound -= lower[idx];
        nu = (budget - l_bound.max(0.0)) / s_free;
        let next = order.get(i + 1).map_or(f64::INFINITY, |&j| breaks[j]);
        if nu <= next {
            break;
        }
    }
    Ok(PowerAllocation { p: lower.iter().zip(&sq).map(|(l, s)| l.max(nu * s)).collect() })
}

pub fn power_objective(q: &[f64], p: &[f64]) -> f64 {
    q.iter().zip(p).map(|(q, p)| q / p).sum()
}

/// Relative KKT residuals of an [`allocate_power`] solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// Spread of `q_m / p_m²` over unconstrained entries and sign violations of the bound multipliers.
    pub stationarity: f64,
    /// Budget slack and bound multiplier times bound slack.
    pub complementary: f64,
    /// Violations of the bounds and the budget.
    pub primal: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.complementary).max(self.primal)
    }
}

/// KKT residuals of `p` for the problem solved by [`allocate_power`], all relative.
pub fn kkt_residuals(q: &[f64], lower: &[f64], budget: f64, p: &[f64]) -> KktResiduals {
    let free: Vec<usize> = (0..p.len()).filter(|&m| p[m] > lower[m] * (1.0 + 1e-12)).collect();
    let mu = if free.is_empty() {
        0.0
    } else {
        free.iter().map(|&m| q[m] / (p[m] * p[m])).sum::<f64>() / free.len() as f64
    };
    let scale = mu.max(f64::MIN_POSITIVE);
    let mut stationarity: f64 = free.iter().map(|&m| (q[m] / (p[m] * p[m]) - mu).abs() / scale).fold(0.0, f64::max);
    let mut complementary = 0.0f64;
    for m in (0..p.len()).filter(|m| !free.contains(m)) {
        let lambda = mu - q[m] / (p[m] * p[m]);
        stationarity = stationarity.max((-lambda).max(0.0) / scale);
        complementary = complementary.max((lambda * (p[m] - lower[m])).abs() / (scale * budget));
    }
    let total: f64 = p.iter().sum();
    complementary = complementary.max((budget - total).abs() / budget);
    let primal = (0..p.len())
        .map(|m| (lower[m] - p[m]).max(0.0) / budget)
        .fold((total - budget).max(0.0) / budget, f64::max);
    KktResiduals { stationarity, complementary, primal }
}

/// Rate-maximizing water-filling over gains `g_m = |h̄_m|² / σ_c²` with `Σ p_m = budget`.
pub fn water_filling(gains: &[f64], budget: f64) -> Result<PowerAllocation> {
    if gains.iter().all(|g| !(*g > 0.0)) {
        return Err(Error::ZeroChannel);
    }
    let mut inv: Vec<(usize, f64)> =
        gains.iter().enumerate().filter(|(_, g)| **g > 0.0).map(|(m, g)| (m, 1.0 / g)).collect();
    inv.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut level = 0.0;
    let mut acc = 0.0;
    for (i, &(_, v)) in inv.iter().enumerate() {
        acc += v;
        let candidate = (budget + acc) / (i + 1) as f64;
        let next = inv.get(i + 1).map_or(f64::INFINITY, |e| e.1);
        level = candidate;
        if candidate <= next {
            break;
        }
    }
    let mut p = vec![0.0; gains.len()];
    for &(m, v) in &inv {
        p[m] = (level - v).max(0.0);
    }
    Ok(PowerAllocation { p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ones(n: usize) -> Vec<C64> {
        vec![C64::new(1.0, 0.0); n]
    }

    #[test]
    fn hand_examples() {
        let p = allocate_power(&[1.0, 1.0], &ones(2), 0.0, 2.0).unwrap();
        assert!((p.p[0] - 1.0).abs() < 1e-12 && (p.p[1] - 1.0).abs() < 1e-12);
        let p = allocate_power(&[4.0, 1.0], &ones(2), 0.0, 3.0).unwrap();
        assert!((p.p[0] - 2.0).abs() < 1e-12 && (p.p[1] - 1.0).abs() < 1e-12);
        // 200-point grid search along the budget line
        let grid = (1..200)
            .map(|i| 3.0 * i as f64 / 200.0)
            .map(|a| power_objective(&[4.0, 1.0], &[a, 3.0 - a]))
            .fold(f64::INFINITY, f64::min);
        assert!(grid >= 3.0 && grid <= 3.0 * (1.0 + 1e-3));
    }

    #[test]
    fn bound_becomes_active() {
        // unconstrained optimum would give p_2 = 1, the threshold forces 1.5
        let hbar = [C64::new(10.0, 0.0), C64::new(0.0, 2.0)];
        let p = allocate_power(&[4.0, 1.0], &hbar, 6.0, 3.0).unwrap();
        assert!((p.p[1] - 1.5).abs() < 1e-12);
        assert!((p.p[0] - 1.5).abs() < 1e-12);
        assert!(matches!(allocate_power(&[4.0, 1.0], &hbar, 6.0, 1.0), Err(Error::Infeasible { .. })));
    }

    /// Dense grid over the simplex slice of the feasible set for M = 4.
    fn grid_oracle(q: &[f64], lower: &[f64], budget: f64) -> f64 {
        let n = 60;
        let free = budget - lower.iter().sum::<f64>();
        let mut best = f64::INFINITY;
        for a in 0..=n {
            for b in 0..=(n - a) {
                for c in 0..=(n - a - b) {
                    let d = n - a - b - c;
                    let w = [a, b, c, d].map(|v| v as f64 / n as f64);
                    let p: Vec<f64> = (0..4).map(|m| lower[m] + free * w[m]).collect();
                    if p.iter().all(|v| *v > 0.0) {
                        best = best.min(power_objective(q, &p));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn matches_grid_oracle_on_four_subcarriers() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..10.0)).collect();
            let hbar: Vec<C64> = (0..4).map(|_| C64::new(rng.random_range(1.0..2.0), rng.random_range(-1.0..1.0))).collect();
            let gamma = rng.random_range(0.0..0.2);
            let p = allocate_power(&q, &hbar, gamma, 1.0).unwrap();
            let lower: Vec<f64> = hbar.iter().map(|h| gamma / h.norm_sqr()).collect();
            let exact = power_objective(&q, &p.p);
            let oracle = grid_oracle(&q, &lower, 1.0);
            assert!(exact <= oracle * (1.0 + 1e-12));
            // grid spacing of 1/60 leaves the oracle within a few percent
            assert!(oracle <= exact * 1.05);
        }
    }

    proptest! {
        #[test]
        fn kkt_holds(
            q in prop::collection::vec(0.01f64..100.0, 1..16),
            gains in prop::collection::vec(0.1f64..10.0, 16),
            gamma in 0.0f64..0.05,
            budget in 0.5f64..5.0,
        ) {
            let hbar: Vec<C64> = gains[..q.len()].iter().map(|g| C64::new(g.sqrt(), 0.0)).collect();
            let p = allocate_power(&q, &hbar, gamma, budget).unwrap();
            let lower: Vec<f64> = hbar.iter().map(|h| gamma / h.norm_sqr()).collect();
            let r = kkt_residuals(&q, &lower, budget, &p.p);
            prop_assert!(r.max() < 1e-7, "{:?}", r);
            prop_assert!(p.p.iter().zip(&lower).all(|(p, l)| *p >= *l));
            prop_assert!((p.total() - budget).abs() <= 1e-9 * budget);
        }
    }

    #[test]
    fn water_filling_hand_values() {
        // levels 1/g = [0.5, 1, 4]; budget 2.5 fills the first two to 2
        let p = water_filling(&[2.0, 1.0, 0.25], 2.5).unwrap();
        assert!((p.p[0] - 1.5).abs() < 1e-12);
        assert!((p.p[1] - 1.0).abs() < 1e-12);
        assert_eq!(p.p[2], 0.0);
        assert!(matches!(water_filling(&[0.0, 0.0], 1.0), Err(Error::ZeroChannel)));
    }

    #[test]
    fn water_filling_beats_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rate = |g: &[f64], p: &[f64]| g.iter().zip(p).map(|(g, p)| (1.0 + g * p).log2()).sum::<f64>();
        for _ in 0..50 {
            let g: Vec<f64> = (0..6).map(|_| rng.random_range(0.01..5.0)).collect();
            let p = water_filling(&g, 2.0).unwrap();
            assert!((p.total() - 2.0).abs() < 1e-12);
            let (i, j) = (rng.random_range(0..6), rng.random_range(0..6));
            let d = rng.random_range(0.0..0.1f64).min(p.p[i]);
            let mut moved = p.p.clone();
            moved[i] -= d;
            moved[j] += d;
            assert!(rate(&g, &p.p) >= rate(&g, &moved) - 1e-12);
        }
    }
}
