//! Confidence multiplier `β_τ`, cell-variation bound `V_h` and depth limit.

use super::EngineError;
use crate::kernels::SmoothnessConstants;
use serde::Serialize;
use std::f64::consts::PI;

/// Deepest level searched for `h_max`.
pub const H_MAX_SEARCH_CAP: u32 = 64;

/// Inputs to the schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleParams {
    pub objectives: usize,
    pub branching: usize,
    pub delta: f64,
    pub epsilon: Vec<f64>,
    pub smoothness: SmoothnessConstants,
    pub metric_dimension: f64,
    pub v1: f64,
    pub v2: f64,
    pub rho: f64,
    pub c1: f64,
    pub q: f64,
    /// `V_h` is zero at and below this depth.
    pub h_max_override: Option<u32>,
    /// Depth used inside `β_τ` instead of the computed `h_max`.
    pub beta_h_max: Option<u32>,
}

/// Resolved schedule constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedules {
    params: ScheduleParams,
    eta1: f64,
    eta2: f64,
    c2: f64,
    c3: f64,
    h_max: u32,
}

/// `Σ_{n≥1} 2^{-(n-1)} g(n)`, truncated once the remaining weight is negligible.
fn geometric_series(g: impl Fn(f64) -> f64) -> f64 {
    // 2^{-(n-1)} √n < 1e-16 well before n = 80
    (1..=120).map(|n| 0.5f64.powi(n - 1) * g(n as f64)).sum()
}

impl Schedules {
    pub fn new(params: ScheduleParams) -> Result<Self, EngineError> {
        validate(&params)?;
        let eta1 = geometric_series(|n| n.ln().sqrt());
        let eta2 = geometric_series(f64::sqrt);
        let c2 = 2.0 * (2.0 * params.c1 * params.c1 * PI * PI / 6.0).ln();
        let c3 = eta1 + eta2 * (2.0 * params.metric_dimension * params.smoothness.alpha * 2f64.ln()).sqrt();
        let mut s = Self {
            params,
            eta1,
            eta2,
            c2,
            c3,
            h_max: 0,
        };
        s.h_max = s.compute_h_max()?;
        Ok(s)
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn eta1(&self) -> f64 {
        self.eta1
    }

    pub fn eta2(&self) -> f64 {
        self.eta2
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn c3(&self) -> f64 {
        self.c3
    }

    /// Smallest `h` with `16 m V_h² ≤ ε²`, from the unmodified `V_h`.
    pub fn h_max(&self) -> u32 {
        self.h_max
    }

    /// Depth used in `β_τ`.
    pub fn beta_h_max(&self) -> u32 {
        self.params.beta_h_max.unwrap_or(self.h_max)
    }

    /// Deepest level a node may reach: `min(h_max, override)`.
    pub fn depth_cap(&self) -> u32 {
        match self.params.h_max_override {
            Some(o) => o.min(self.h_max),
            None => self.h_max,
        }
    }

    pub fn min_epsilon(&self) -> f64 {
        self.params.epsilon.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `β_τ = 2 log(2 m π² N^{h_max+1} (τ+1)² / (3δ))`.
    pub fn beta(&self, tau: usize) -> f64 {
        let p = &self.params;
        let log_n = (p.branching as f64).ln() * (self.beta_h_max() as f64 + 1.0);
        let t1 = (tau as f64 + 1.0).ln();
        2.0 * ((2.0 * p.objectives as f64 * PI * PI / (3.0 * p.delta)).ln() + log_n + 2.0 * t1)
    }

    /// `V_h`, zero at and beyond the override depth.
    pub fn v_h(&self, h: u32) -> f64 {
        match self.params.h_max_override {
            Some(o) if h >= o => 0.0,
            _ => self.v_h_unmodified(h),
        }
    }

    /// `V_h` without the override.
    pub fn v_h_unmodified(&self, h: u32) -> f64 {
        let p = &self.params;
        let SmoothnessConstants { c_k, alpha } = p.smoothness;
        let scale = c_k * (p.v1 * p.rho.powi(h as i32)).powf(alpha);
        let hl = h.max(1) as f64;
        let union = 2.0 * (2.0 * hl * hl * PI * PI * p.objectives as f64 / (6.0 * p.delta)).ln();
        let tail = (-4.0 * (p.metric_dimension / alpha) * scale.ln()).max(0.0);
        let inner = self.c2 + union + h as f64 * (p.branching as f64).ln() + tail;
        4.0 * scale * (inner.max(0.0).sqrt() + self.c3)
    }

    fn compute_h_max(&self) -> Result<u32, EngineError> {
        let eps = self.min_epsilon();
        let m = self.params.objectives as f64;
        (0..=H_MAX_SEARCH_CAP)
            .find(|&h| {
                let v = self.v_h_unmodified(h);
                16.0 * m * v * v <= eps * eps
            })
            .ok_or(EngineError::HMaxUnreachable {
                cap: H_MAX_SEARCH_CAP,
                epsilon: eps,
            })
    }

    /// Cap `σ² β_τ / V_h²` on evaluations at a depth-`h` node before it is
    /// refined. Infinite when `V_h = 0`.
    pub fn evaluation_cap(&self, h: u32, tau: usize, noise_var: f64) -> f64 {
        let v = self.v_h(h);
        if v == 0.0 {
            f64::INFINITY
        } else {
            noise_var * self.beta(tau) / (v * v)
        }
    }

    /// `N_1 = ρ^{-α}`.
    pub fn n1(&self) -> f64 {
        self.params.rho.powf(-self.params.smoothness.alpha)
    }

    /// `L = m (4N1² + 4N1²(2N1+2) + (2N1+2)²)`.
    pub fn metric_gap_constant(&self) -> f64 {
        let n1 = self.n1();
        self.params.objectives as f64 * (4.0 * n1 * n1 + 4.0 * n1 * n1 * (2.0 * n1 + 2.0) + (2.0 * n1 + 2.0).powi(2))
    }

    /// Left side of the dimension-type sample bound at `T` evaluations, with
    /// `D̄ = D1`.
    pub fn dimension_bound_lhs(&self, t: f64, noise_var: f64) -> f64 {
        let p = &self.params;
        let SmoothnessConstants { c_k, alpha } = p.smoothness;
        let d = p.metric_dimension;
        let sqrt_l = self.metric_gap_constant().sqrt();
        let beta = self.beta(t as usize);
        let k1 = sqrt_l * p.q * noise_var * beta
            / (c_k * p.v1.powf(alpha) * p.v2.powf(d) * (p.rho.powf(-(d + alpha)) - 1.0));
        let log_t = t.ln();
        let h = ((log_t - log_t.ln()) / ((1.0 / p.rho).ln() * (d + 2.0 * alpha)))
            .floor()
            .max(0.0) as u32;
        let v_h = self.v_h_unmodified(h);
        let scale_h = c_k * (p.v1 * p.rho.powi(h as i32)).powf(alpha);
        // K2 = 4√L C_K v1^α (√(...) + C3) = √L V_H / ρ^{Hα}
        let k2 = sqrt_l * v_h * c_k * p.v1.powf(alpha) / scale_h;
        let a = alpha / (d + 2.0 * alpha);
        k1 * t.powf(-a) * log_t.powf(-(d + alpha) / (d + 2.0 * alpha)) + k2 * t.powf(-a) * log_t.powf(a)
    }

    /// Smallest `T` at which [`Self::dimension_bound_lhs`] drops to `min ε`,
    /// searched by doubling then bisection up to `2^62`.
    pub fn dimension_sample_bound(&self, noise_var: f64) -> Option<u64> {
        let eps = self.min_epsilon();
        let ok = |t: u64| self.dimension_bound_lhs(t as f64, noise_var) <= eps;
        let mut hi = 4u64;
        while !ok(hi) {
            hi = hi.checked_mul(2)?;
            if hi > 1 << 62 {
                return None;
            }
        }
        let mut lo = (hi / 2).max(3);
        if ok(lo) {
            return Some(lo);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }

    pub fn table(&self, taus: &[usize], noise_var: f64) -> ScheduleTable {
        let h_top = self.h_max;
        ScheduleTable {
            beta: taus.iter().map(|&t| (t, self.beta(t))).collect(),
            v_h: (0..=h_top)
                .map(|h| VRow {
                    h,
                    v_h: self.v_h_unmodified(h),
                    v_h_effective: self.v_h(h),
                    evaluation_cap: self.evaluation_cap(h, 0, noise_var),
                })
                .collect(),
            h_max: self.h_max,
            beta_h_max: self.beta_h_max(),
            h_max_override: self.params.h_max_override,
            eta1: self.eta1,
            eta2: self.eta2,
            c2: self.c2,
            c3: self.c3,
            c_k: self.params.smoothness.c_k,
            alpha: self.params.smoothness.alpha,
            dimension_sample_bound: self.dimension_sample_bound(noise_var),
        }
    }
}

fn validate(p: &ScheduleParams) -> Result<(), EngineError> {
    let bad = |what: &str| Err(EngineError::Config(what.to_string()));
    if p.objectives == 0 {
        return bad("at least one objective is required");
    }
    if p.epsilon.len() != p.objectives {
        return Err(EngineError::Config(format!(
            "epsilon has {} entries for {} objectives",
            p.epsilon.len(),
            p.objectives
        )));
    }
    if !p.epsilon.iter().all(|e| *e > 0.0 && e.is_finite()) {
        return bad("every epsilon entry must be positive and finite");
    }
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return bad("delta must lie in (0, 1)");
    }
    if !(p.smoothness.c_k > 0.0 && p.smoothness.alpha > 0.0 && p.smoothness.alpha <= 1.0) {
        return bad("smoothness constants need C_K > 0 and 0 < alpha <= 1");
    }
    if !(p.c1 > 0.0 && p.q > 0.0) {
        return bad("covering constants C1 and Q must be positive");
    }
    Ok(())
}

/// Printable schedule summary.
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleTable {
    pub beta: Vec<(usize, f64)>,
    pub v_h: Vec<VRow>,
    pub h_max: u32,
    pub beta_h_max: u32,
    pub h_max_override: Option<u32>,
    pub eta1: f64,
    pub eta2: f64,
    pub c2: f64,
    pub c3: f64,
    pub c_k: f64,
    pub alpha: f64,
    pub dimension_sample_bound: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VRow {
    pub h: u32,
    pub v_h: f64,
    pub v_h_effective: f64,
    pub evaluation_cap: f64,
}
