//! Both sides of the weighted estimate for a transformed adjoint solution,
//! without the unknown constant.

use super::identity::Transformed;
use crate::adjoint::AdjointTrajectory;
use crate::discretization::{Face, Grid, SpaceGrid};
use crate::error::{Error, Result};
use crate::geometry::{CarlemanParams, CutoffFunction, GeometrySpec, SigmaJet, WeightPoint};
use rayon::prelude::*;

/// Below this the right-hand side is treated as zero.
pub const DEGENERATE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarlemanRatio {
    pub lambda: f64,
    pub mu: f64,
    pub lhs: f64,
    /// cut-off energy, observation combinations, boundary trace
    pub rhs_terms: [f64; 3],
    pub rhs: f64,
    pub ratio: f64,
    /// both sides are multiplied by `e^{-log_scale}`
    pub log_scale: f64,
    /// largest change of `ℓ` across one cell or one step; the weighted
    /// integrals are only meaningful when this is well below one
    pub resolution: f64,
    pub degenerate: bool,
}

fn centred_grad_sq(s: &SpaceGrid, f: &[f64], i: usize) -> f64 {
    (0..s.dim())
        .map(|a| {
            let st = s.stride(a);
            ((f[i + st] - f[i - st]) / (2.0 * s.spacing(a))).powi(2)
        })
        .sum()
}

pub fn carleman_ratio(
    params: &CarlemanParams,
    geom: &GeometrySpec,
    grid: &Grid,
    adj: &AdjointTrajectory,
    tr: &Transformed,
    cutoff: &CutoffFunction,
    observed: &[Face],
    lambda: f64,
    mu: f64,
) -> Result<CarlemanRatio> {
    let levels = grid.time.levels();
    if adj.levels() != levels || tr.u.len() != levels || cutoff.grid.time.levels() != levels {
        return Err(Error::InvalidGrid("ratio inputs live on different time grids".into()));
    }
    let s = &grid.space;
    let m = s.node_count();
    let weights: Vec<WeightPoint> = (0..levels)
        .into_par_iter()
        .flat_map_iter(|k| {
            let t = grid.time.t(k);
            (0..m).map(move |i| {
                WeightPoint::from_jet(&SigmaJet::eval(params.beta, params.alpha, geom, t, &s.coord(i)[..grid.dim()]), lambda, mu)
            })
        })
        .collect();
    let (dt, vol) = (grid.time.dt, s.cell_volume());
    let resolution = weights
        .iter()
        .map(|w| (0..grid.dim()).map(|a| s.spacing(a) * w.grad_ell[a].abs()).fold(dt * w.ell_t.abs(), f64::max))
        .fold(0.0, f64::max);
    let log_scale = 2.0 * weights.iter().map(|w| w.ell).fold(f64::NEG_INFINITY, f64::max);
    let theta2 = |w: &WeightPoint| (2.0 * w.ell - log_scale).exp();
    let (mu4, mu15) = (mu.powi(4), mu.powf(1.5));
    let sums: Vec<[f64; 4]> = (0..levels)
        .into_par_iter()
        .map(|k| {
            let wk = if k == 0 || k == levels - 1 { 0.5 } else { 1.0 } * dt;
            let w = &weights[k * m..(k + 1) * m];
            let (z, zh, a4z, a5zh) = (&adj.z[k], &adj.zhat[k], &adj.a4z[k], &adj.a5zhat[k]);
            let mut acc = [0.0; 4];
            for &i in s.interior() {
                let (p, c) = (&w[i], cutoff.at(k, i));
                let th2 = theta2(p);
                if th2 == 0.0 {
                    continue;
                }
                let l3 = p.ell.powi(3);
                let u = tr.u[k][i];
                acc[0] += th2 * (mu4 * l3 * u * u + lambda * mu * p.phi * (centred_grad_sq(s, &tr.u[k], i) + tr.uhat[k][i].powi(2)));
                acc[1] += c.big_theta * th2 * (mu4 * l3 * z[i] * z[i] + p.phi * (centred_grad_sq(s, z, i) + zh[i] * zh[i]));
                acc[2] += (c.big_theta + c.chi * c.chi)
                    * th2
                    * (mu4 * l3 * a4z[i] * a4z[i] + lambda * mu15 * p.phi * (centred_grad_sq(s, a4z, i) + a5zh[i] * a5zh[i]));
            }
            for &f in observed {
                if let Some(j) = adj.face_index(f) {
                    let tr_f = &adj.trace[k][j];
                    let b: f64 = s.face_nodes(f).iter().zip(tr_f).map(|(&n, d)| w[n].phi * theta2(&w[n]) * d * d).sum();
                    acc[3] += lambda * mu * s.face_measure(f) * b;
                }
            }
            [acc[0] * vol * wk, acc[1] * vol * wk, acc[2] * vol * wk, acc[3] * wk]
        })
        .collect();
    let mut tot = [0.0; 4];
    for r in &sums {
        for j in 0..4 {
            tot[j] += r[j];
        }
    }
    let rhs_terms = [tot[1], tot[2], tot[3]];
    let rhs = rhs_terms.iter().sum::<f64>();
    let degenerate = !(rhs > DEGENERATE_FLOOR);
    let ratio = if degenerate { if tot[0] > 0.0 { f64::INFINITY } else { 0.0 } } else { tot[0] / rhs };
    Ok(CarlemanRatio { lambda, mu, lhs: tot[0], rhs_terms, rhs, ratio, log_scale, resolution, degenerate })
}

/// Ratios over the product of the `λ` and `μ` ladders, `μ` varying fastest.
pub fn carleman_sweep(
    params: &CarlemanParams,
    geom: &GeometrySpec,
    grid: &Grid,
    adj: &AdjointTrajectory,
    tr: &Transformed,
    cutoff: &CutoffFunction,
    observed: &[Face],
    lambdas: &[f64],
    mus: &[f64],
) -> Result<Vec<CarlemanRatio>> {
    let pairs: Vec<(f64, f64)> = lambdas.iter().flat_map(|&l| mus.iter().map(move |&m| (l, m))).collect();
    pairs
        .par_iter()
        .map(|&(l, m)| carleman_ratio(params, geom, grid, adj, tr, cutoff, observed, l, m))
        .collect()
}
