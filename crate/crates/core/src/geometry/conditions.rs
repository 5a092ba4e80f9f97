//! Constants `c0`, `c̃0`, `c1`, the three parameter conditions on `(α, β, T)`
//! and the search for the smallest admissible `β`.

use super::weights::sigma_exceeds;
use super::{compute_report_with, GeometrySpec};
use crate::error::{Error, Result};

/// Parameters of the weight `θ = exp(λ e^{μσ})` and of the cut-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarlemanParams {
    pub beta: f64,
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub c0: f64,
    pub c0_tilde: f64,
    pub c1: f64,
    pub eps: f64,
    pub delta: f64,
    pub r2: f64,
}

/// Truth values and minimal slacks of the three conditions. A condition holds iff
/// its margin is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    pub cond1: bool,
    pub margin1: f64,
    pub cond2: bool,
    pub margin2: f64,
    pub cond3: bool,
    pub margin3: f64,
}

impl ConditionReport {
    pub fn all(&self) -> bool {
        self.cond1 && self.cond2 && self.cond3
    }
}

/// Search settings for [`choose_beta_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSearch {
    pub lambda: f64,
    pub mu: f64,
    /// samples per axis of the closed box
    pub space_samples: usize,
    /// samples of `[0, T]`
    pub time_samples: usize,
    pub beta_cap: f64,
    pub max_halvings: usize,
}

impl BetaSearch {
    pub fn for_dim(dim: usize) -> Self {
        Self {
            lambda: 1.0,
            mu: 1.0,
            space_samples: if dim == 1 { 2001 } else { 301 },
            time_samples: 4001,
            beta_cap: 1e9,
            max_halvings: 400,
        }
    }
}

struct Constants {
    c0: f64,
    c0_tilde: f64,
    c1: f64,
    max_sq: f64,
}

fn constants(geom: &GeometrySpec, samples: usize) -> Constants {
    let k2 = geom.kappa * geom.kappa;
    let n = geom.dim();
    let mut min_sq = f64::INFINITY;
    let mut min_max = f64::INFINITY;
    let mut max_sq: f64 = 0.0;
    let mut min_sum = f64::INFINITY;
    for x in geom.dense_points(samples) {
        let (mn, mx) = geom.min_max_sq(&x[..n]);
        min_sq = min_sq.min(mn);
        min_max = min_max.min(mx);
        max_sq = max_sq.max(mx);
        let d = geom.sq_dist(&x[..n]);
        min_sum = min_sum.min(d[..n].iter().map(|v| v.exp()).sum::<f64>());
    }
    Constants {
        c0: 0.5 * (1.0 - k2) * min_sq,
        c0_tilde: (1.0 - k2) / (2.0 * k2) * min_max,
        c1: min_sum - n as f64,
        max_sq,
    }
}

fn time_samples(t_final: f64, count: usize) -> Vec<f64> {
    let count = count.max(3);
    (0..count).map(|j| t_final * j as f64 / (count - 1) as f64).collect()
}

/// Minimal slack of `min_i d_i^2 - nα^2 (t - T/2)^2 - c0` over sampled points of `{σ > 0}`.
fn condition2_margin(p: &CarlemanParams, geom: &GeometrySpec, space: usize, times: usize) -> f64 {
    let n = geom.dim();
    let half = 0.5 * geom.t_final;
    let mut s2: Vec<f64> = time_samples(geom.t_final, times).iter().map(|t| (t - half).powi(2)).collect();
    s2.sort_by(f64::total_cmp);
    s2.dedup();
    let mut margin = f64::INFINITY;
    for x in geom.dense_points(space) {
        let x = &x[..n];
        // σ is non-increasing in |t - T/2|: find the widest sampled time still in {σ > 0}
        let inside = s2.partition_point(|&v| sigma_exceeds(p.beta, p.alpha, geom, 0.0, half + v.sqrt(), x));
        if inside == 0 {
            continue;
        }
        let (mn, _) = geom.min_max_sq(x);
        let slack = mn - n as f64 * p.alpha * p.alpha * s2[inside - 1] - p.c0;
        margin = margin.min(slack);
    }
    margin
}

/// Evaluates the three conditions at the default sampling density.
pub fn verify_conditions(params: &CarlemanParams, geom: &GeometrySpec) -> ConditionReport {
    let s = BetaSearch::for_dim(geom.dim());
    verify_conditions_sampled(params, geom, s.space_samples, s.time_samples)
}

pub fn verify_conditions_sampled(params: &CarlemanParams, geom: &GeometrySpec, space: usize, times: usize) -> ConditionReport {
    let t = geom.t_final;
    let max_sq = geom
        .dense_points(space)
        .iter()
        .map(|x| geom.min_max_sq(&x[..geom.dim()]).1)
        .fold(0.0, f64::max);
    let margin1 = params.alpha * t * t / 4.0 - max_sq;
    let margin2 = condition2_margin(params, geom, space, times);
    let b = params.beta;
    let margin3 = 4.0 * params.c0 * b * b + 2.0 * b * (1.0 - params.alpha) - 4.0 * params.r2 * b * t - params.c0_tilde;
    ConditionReport {
        cond1: margin1 > 0.0,
        margin1,
        cond2: margin2 > 0.0,
        margin2,
        cond3: margin3 > 0.0,
        margin3,
    }
}

/// Parameters for a prescribed `β`, with the constants and `ε`, `δ` recomputed.
pub fn params_with_beta(geom: &GeometrySpec, r2: f64, beta: f64, search: &BetaSearch) -> Result<CarlemanParams> {
    let report = compute_report_with(geom, search.space_samples)?;
    let c = constants(geom, search.space_samples);
    let mut p = CarlemanParams {
        beta,
        lambda: search.lambda,
        mu: search.mu,
        alpha: report.alpha,
        c0: c.c0,
        c0_tilde: c.c0_tilde,
        c1: c.c1,
        eps: 0.0,
        delta: 0.0,
        r2,
    };
    // a forced β may admit no cut-off; ε = δ = 0 then marks it and the cut-off builder refuses it
    match choose_eps_delta(&p, geom, search) {
        Ok((eps, delta)) => {
            p.eps = eps;
            p.delta = delta;
        }
        Err(Error::BetaSearchFailed { .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(p)
}

pub fn choose_beta(geom: &GeometrySpec, r2: f64) -> Result<CarlemanParams> {
    choose_beta_with(geom, r2, &BetaSearch::for_dim(geom.dim()))
}

/// Smallest `β = 2^k (1 + r2)`, `k ≥ 1`, for which all three conditions verify.
pub fn choose_beta_with(geom: &GeometrySpec, r2: f64, search: &BetaSearch) -> Result<CarlemanParams> {
    if !(r2 >= 0.0) || !r2.is_finite() {
        return Err(Error::InvalidInput(format!("r2 must be finite and non-negative, got {r2}")));
    }
    let report = compute_report_with(geom, search.space_samples)?;
    let kappa_t = geom.kappa * geom.t_final;
    if kappa_t <= report.tstar {
        return Err(Error::HorizonTooShort { kappa_t, tstar: report.tstar });
    }
    let c = constants(geom, search.space_samples);
    let mut p = CarlemanParams {
        beta: 0.0,
        lambda: search.lambda,
        mu: search.mu,
        alpha: report.alpha,
        c0: c.c0,
        c0_tilde: c.c0_tilde,
        c1: c.c1,
        eps: 0.0,
        delta: 0.0,
        r2,
    };
    let margin1 = p.alpha * geom.t_final.powi(2) / 4.0 - c.max_sq;
    if margin1 <= 0.0 {
        return Err(Error::BetaSearchFailed {
            cap: search.beta_cap,
            reason: format!("condition (1) fails independently of beta (margin {margin1:e})"),
        });
    }
    let mut reason = String::from("cap reached before the first candidate");
    for k in 1..=200 {
        let beta = 2f64.powi(k) * (1.0 + r2);
        if beta > search.beta_cap {
            break;
        }
        p.beta = beta;
        let v = verify_conditions_sampled(&p, geom, search.space_samples, search.time_samples);
        if v.all() {
            let (eps, delta) = choose_eps_delta(&p, geom, search)?;
            p.eps = eps;
            p.delta = delta;
            return Ok(p);
        }
        reason = format!(
            "beta={beta}: cond1={} ({:e}), cond2={} ({:e}), cond3={} ({:e})",
            v.cond1, v.margin1, v.cond2, v.margin2, v.cond3, v.margin3
        );
    }
    Err(Error::BetaSearchFailed { cap: search.beta_cap, reason })
}

/// Halves `ε = δ = e^{-β}` until `Q0 ⊂ Q(c1 + 2δ)` and `Q(c1) ⊂ (ε, T - ε) × G`
/// hold at every sample.
fn choose_eps_delta(p: &CarlemanParams, geom: &GeometrySpec, search: &BetaSearch) -> Result<(f64, f64)> {
    let t = geom.t_final;
    let half = 0.5 * t;
    let times = time_samples(t, search.time_samples);
    let points = geom.dense_points(search.space_samples);
    let n = geom.dim();
    let mut eps = (-p.beta).exp().max(f64::MIN_POSITIVE);
    let mut delta = eps;
    for _ in 0..=search.max_halvings {
        // σ is monotone in |t - T/2|, so the extreme sampled times on each side decide
        let inner: Vec<f64> = extreme(&times, |s| s.abs() < eps, true, half);
        let outer: Vec<f64> = extreme(&times, |s| s.abs() >= half - eps, false, half);
        let q0_ok = inner.iter().all(|&tt| {
            points.iter().all(|x| sigma_exceeds(p.beta, p.alpha, geom, p.c1 + 2.0 * delta, tt, &x[..n]))
        });
        let q1_ok = q0_ok
            && outer.iter().all(|&tt| {
                points.iter().all(|x| !sigma_exceeds(p.beta, p.alpha, geom, p.c1, tt, &x[..n]))
            });
        if q0_ok && q1_ok {
            return Ok((eps, delta));
        }
        eps *= 0.5;
        delta *= 0.5;
        if eps == 0.0 {
            break;
        }
    }
    Err(Error::BetaSearchFailed {
        cap: search.beta_cap,
        reason: format!("no eps, delta found for beta={} within {} halvings", p.beta, search.max_halvings),
    })
}

// For each side of T/2, the sampled time satisfying `keep(t - T/2)` that is
// farthest from (`far`) or closest to (`!far`) the middle.
fn extreme(times: &[f64], keep: impl Fn(f64) -> bool, far: bool, half: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for side in [-1.0, 1.0] {
        let cand = times
            .iter()
            .cloned()
            .filter(|&t| (t - half) * side >= 0.0 && keep(t - half))
            .max_by(|a, b| {
                let (da, db) = ((a - half).abs(), (b - half).abs());
                if far { da.total_cmp(&db) } else { db.total_cmp(&da) }
            });
        out.extend(cand);
    }
    out
}
