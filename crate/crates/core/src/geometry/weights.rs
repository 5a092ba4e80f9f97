//! The weight `σ`, its exponentials `φ = e^{μσ}`, `ℓ = λφ`, `θ = e^ℓ` and
//! closed-form partial derivatives.

use super::{CarlemanParams, GeometrySpec};
use crate::discretization::Grid;
use rayon::prelude::*;

/// Largest exponent for which `exp` stays finite.
const EXP_BUDGET: f64 = 709.0;

/// `σ(t, x) = Σ_i e^{β(x_i - x0_i)^2} - n e^{αβ(t - T/2)^2}` together with its
/// partials up to third order. `σ` is separable, so mixed partials vanish.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaJet {
    pub value: f64,
    /// `[σ_t, σ_tt, σ_ttt]`
    pub t: [f64; 3],
    /// per axis `[σ_i, σ_ii, σ_iii]`
    pub x: [[f64; 3]; 2],
    /// `Σ_i e^{β d_i^2}`
    pub space_sum: f64,
    /// `e^{αβ s^2}` with `s = t - T/2`
    pub time_exp: f64,
    pub dim: usize,
}

impl SigmaJet {
    pub fn eval(beta: f64, alpha: f64, geom: &GeometrySpec, t: f64, x: &[f64]) -> Self {
        let n = geom.dim();
        let mut jet = SigmaJet { value: 0.0, t: [0.0; 3], x: [[0.0; 3]; 2], space_sum: 0.0, time_exp: 0.0, dim: n };
        for a in 0..n {
            let d = x[a] - geom.x0[a];
            let g = (beta * d * d).exp();
            jet.space_sum += g;
            jet.x[a] = derivs(beta, d, g);
        }
        let s = t - 0.5 * geom.t_final;
        let ab = alpha * beta;
        let e = (ab * s * s).exp();
        jet.time_exp = e;
        let dt = derivs(ab, s, e);
        let nf = n as f64;
        jet.t = [-nf * dt[0], -nf * dt[1], -nf * dt[2]];
        jet.value = jet.space_sum - nf * e;
        jet
    }

    pub fn grad_sq(&self) -> f64 {
        (0..self.dim).map(|a| self.x[a][0].powi(2)).sum()
    }

    pub fn lap(&self) -> f64 {
        (0..self.dim).map(|a| self.x[a][1]).sum()
    }
}

// first three derivatives of e^{c d^2} in d, given g = e^{c d^2}
fn derivs(c: f64, d: f64, g: f64) -> [f64; 3] {
    [
        2.0 * c * d * g,
        (2.0 * c + 4.0 * c * c * d * d) * g,
        (12.0 * c * c * d + 8.0 * c * c * c * d * d * d) * g,
    ]
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `σ(t, x) > b`, decided in log space when the exponentials overflow.
pub fn sigma_exceeds(beta: f64, alpha: f64, geom: &GeometrySpec, b: f64, t: f64, x: &[f64]) -> bool {
    let n = geom.dim();
    let mut logs = [0.0; 2];
    for a in 0..n {
        logs[a] = beta * (x[a] - geom.x0[a]).powi(2);
    }
    let s = t - 0.5 * geom.t_final;
    let log_time = (n as f64).ln() + alpha * beta * s * s;
    let log_space = log_sum_exp(&logs[..n]);
    if log_space < EXP_BUDGET && log_time < EXP_BUDGET {
        return SigmaJet::eval(beta, alpha, geom, t, x).value > b;
    }
    if b > 0.0 {
        log_space > log_sum_exp(&[b.ln(), log_time])
    } else {
        // |b| is negligible next to an overflowing exponential
        log_space > log_time
    }
}

/// True iff `σ(t, x) > b` for the weight defined by `params`.
pub fn level_set_membership(params: &CarlemanParams, geom: &GeometrySpec, b: f64, t: f64, x: &[f64]) -> bool {
    sigma_exceeds(params.beta, params.alpha, geom, b, t, x)
}

/// Weight values and partials of `ℓ` at one space-time node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPoint {
    pub sigma: f64,
    pub phi: f64,
    /// `ℓ = λφ = ln θ`
    pub ell: f64,
    /// `e^ℓ`, infinite when saturated
    pub theta: f64,
    pub ell_t: f64,
    pub ell_tt: f64,
    pub grad_ell: [f64; 2],
    pub hess_ell: [[f64; 2]; 2],
    pub grad_ell_t: [f64; 2],
    pub lap_ell: f64,
}

impl WeightPoint {
    pub fn from_jet(jet: &SigmaJet, lambda: f64, mu: f64) -> Self {
        let phi = (mu * jet.value).exp();
        let l = lambda * phi;
        let mut p = WeightPoint {
            sigma: jet.value,
            phi,
            ell: l,
            theta: if l < EXP_BUDGET { l.exp() } else { f64::INFINITY },
            ell_t: mu * jet.t[0] * l,
            ell_tt: (mu * mu * jet.t[0] * jet.t[0] + mu * jet.t[1]) * l,
            grad_ell: [0.0; 2],
            hess_ell: [[0.0; 2]; 2],
            grad_ell_t: [0.0; 2],
            lap_ell: 0.0,
        };
        for i in 0..jet.dim {
            p.grad_ell[i] = mu * jet.x[i][0] * l;
            p.grad_ell_t[i] = mu * mu * jet.t[0] * jet.x[i][0] * l;
            for j in 0..jet.dim {
                let diag = if i == j { mu * jet.x[i][1] } else { 0.0 };
                p.hess_ell[i][j] = (mu * mu * jet.x[i][0] * jet.x[j][0] + diag) * l;
            }
            p.lap_ell += p.hess_ell[i][i];
        }
        p
    }

    pub fn saturated(&self) -> bool {
        !self.theta.is_finite()
    }
}

/// Weight fields on every node of a space-time grid, stored level by level.
#[derive(Debug, Clone)]
pub struct WeightField {
    pub grid: Grid,
    pub points: Vec<WeightPoint>,
    /// `(time level, node)` pairs where `θ` exceeds the floating-point range;
    /// `ell` still holds `ln θ` there.
    pub saturated: Vec<(usize, usize)>,
}

impl WeightField {
    pub fn at(&self, level: usize, node: usize) -> &WeightPoint {
        &self.points[level * self.grid.space.node_count() + node]
    }

    pub fn level(&self, level: usize) -> &[WeightPoint] {
        let m = self.grid.space.node_count();
        &self.points[level * m..(level + 1) * m]
    }
}

pub fn eval_weights(params: &CarlemanParams, geom: &GeometrySpec, grid: &Grid) -> WeightField {
    let m = grid.space.node_count();
    let points: Vec<WeightPoint> = (0..grid.time.levels())
        .into_par_iter()
        .flat_map_iter(|k| {
            let t = grid.time.t(k);
            (0..m).map(move |i| {
                let x = grid.space.coord(i);
                let jet = SigmaJet::eval(params.beta, params.alpha, geom, t, &x);
                WeightPoint::from_jet(&jet, params.lambda, params.mu)
            })
        })
        .collect();
    let saturated = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.saturated())
        .map(|(idx, _)| (idx / m, idx % m))
        .collect();
    WeightField { grid: grid.clone(), points, saturated }
}
