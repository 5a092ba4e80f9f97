//! The cut-off transform, the terms of the pointwise weighted identity and its
//! numerical residuals.
//!
//! With `v = θu`, `v̂ = θû + ℓ_t v` and `I = -2ℓ_t v̂ + 2∇ℓ·∇v + Ψv` the identity reads
//! `θ I (dû - Δu dt) + div V dt + dℳ = R dt + 𝒩 + (martingale)`.
//! Spatial derivatives are central differences; `div V` uses `V` at neighbours,
//! so residuals are evaluated on nodes at least two cells from the boundary.

use super::node::{IdentityField, NodeCoefficients};
use crate::adjoint::AdjointTrajectory;
use crate::coefficients::{CoefficientMode, CoefficientSet};
use crate::discretization::{laplacian, Grid, SpaceGrid};
use crate::error::{Error, Result};
use crate::geometry::CutoffFunction;
use crate::noise::{Ensemble, McEstimate};
use rayon::prelude::*;

/// `(u, û) = (χz, χ_t z + χẑ)` on every time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub u: Vec<Vec<f64>>,
    pub uhat: Vec<Vec<f64>>,
}

pub fn transform(adj: &AdjointTrajectory, cutoff: &CutoffFunction) -> Result<Transformed> {
    let m = cutoff.grid.space.node_count();
    if adj.levels() != cutoff.grid.time.levels() || adj.z.first().map_or(0, Vec::len) != m {
        return Err(Error::InvalidGrid(format!(
            "adjoint has {} levels, cut-off has {} levels of {m} nodes",
            adj.levels(),
            cutoff.grid.time.levels()
        )));
    }
    let mut u = Vec::with_capacity(adj.levels());
    let mut uhat = Vec::with_capacity(adj.levels());
    for k in 0..adj.levels() {
        let (z, zh) = (&adj.z[k], &adj.zhat[k]);
        u.push((0..m).map(|i| cutoff.at(k, i).chi * z[i]).collect());
        uhat.push(
            (0..m)
                .map(|i| {
                    let c = cutoff.at(k, i);
                    c.chi_t * z[i] + c.chi * zh[i]
                })
                .collect(),
        );
    }
    Ok(Transformed { u, uhat })
}

/// Discrete `L²(Q)` norm of `(u^{k+1} - u^k)/dt - (û^k + û^{k+1})/2`.
pub fn transform_residual(grid: &Grid, tr: &Transformed) -> f64 {
    let dt = grid.time.dt;
    let vol = grid.space.cell_volume();
    let mut acc = 0.0;
    for k in 0..tr.u.len().saturating_sub(1) {
        for i in 0..tr.u[k].len() {
            let r = (tr.u[k + 1][i] - tr.u[k][i]) / dt - 0.5 * (tr.uhat[k][i] + tr.uhat[k + 1][i]);
            acc += dt * vol * r * r;
        }
    }
    acc.sqrt()
}

/// `v`, `v̂` and `∇v` at one node.
#[derive(Debug, Clone, Copy, Default)]
struct Local {
    v: f64,
    vhat: f64,
    grad: [f64; 2],
}

fn dot2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn multiplier(c: &NodeCoefficients, l: &Local) -> f64 {
    -2.0 * c.ell_t * l.vhat + 2.0 * dot2(&c.grad_ell, &l.grad) + c.psi * l.v
}

fn m_density(c: &NodeCoefficients, l: &Local) -> f64 {
    let g2 = dot2(&l.grad, &l.grad);
    c.ell_t * (g2 + l.vhat * l.vhat) - 2.0 * dot2(&c.grad_ell, &l.grad) * l.vhat - c.psi * l.v * l.vhat
        + (c.a * c.ell_t + 0.5 * c.psi_t) * l.v * l.v
}

fn v_flux(c: &NodeCoefficients, l: &Local) -> [f64; 2] {
    let g2 = dot2(&l.grad, &l.grad);
    let gl = dot2(&c.grad_ell, &l.grad);
    let mut out = [0.0; 2];
    for a in 0..c.dim {
        out[a] = c.grad_ell[a] * l.vhat * l.vhat - 2.0 * c.ell_t * l.vhat * l.grad[a] + 2.0 * gl * l.grad[a]
            - c.grad_ell[a] * g2
            + c.psi * l.v * l.grad[a]
            - 0.5 * c.grad_psi[a] * l.v * l.v
            - c.a * c.grad_ell[a] * l.v * l.v;
    }
    out
}

fn rhs_drift(c: &NodeCoefficients, l: &Local) -> f64 {
    let g2 = dot2(&l.grad, &l.grad);
    let mut hess = 0.0;
    for j in 0..c.dim {
        for k in 0..c.dim {
            hess += c.hess_ell[j][k] * l.grad[j] * l.grad[k];
        }
    }
    let i = multiplier(c, l);
    (c.ell_tt + c.lap_ell - c.psi) * l.vhat * l.vhat + (c.ell_tt - c.lap_ell + c.psi) * g2 + 2.0 * hess
        - 4.0 * dot2(&c.grad_ell_t, &l.grad) * l.vhat
        + c.b * l.v * l.v
        + i * i
}

/// Quadratic-variation density of `ℳ` per unit time, given the `dW`
/// coefficients of `v`, `v̂` and `∇v`.
fn n_density(c: &NodeCoefficients, sv: f64, svhat: f64, sgrad: &[f64; 2]) -> f64 {
    c.ell_t * svhat * svhat - 2.0 * dot2(&c.grad_ell, sgrad) * svhat - c.psi * sv * svhat + c.ell_t * dot2(sgrad, sgrad)
        + (c.a * c.ell_t + 0.5 * c.psi_t) * sv * sv
}

fn centred_grad(s: &SpaceGrid, f: &[f64], i: usize) -> [f64; 2] {
    let mut g = [0.0; 2];
    for a in 0..s.dim() {
        let st = s.stride(a);
        g[a] = (f[i + st] - f[i - st]) / (2.0 * s.spacing(a));
    }
    g
}

/// Nodes at least two cells away from every face.
pub fn deep_nodes(s: &SpaceGrid) -> Vec<usize> {
    (0..s.node_count())
        .filter(|&i| {
            let mi = s.multi_index(i);
            (0..s.dim()).all(|a| mi[a] >= 2 && mi[a] + 2 <= s.cells(a))
        })
        .collect()
}

/// A realisation of `du = û dt + U dW`, `dû = F dt` on the grid levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ItoRealization {
    pub u: Vec<Vec<f64>>,
    pub uhat: Vec<Vec<f64>>,
    /// drift `F` of `û`
    pub uhat_drift: Vec<Vec<f64>>,
    /// time-independent diffusion `U`; `None` means `U = 0`
    pub diffusion: Option<Vec<f64>>,
}

/// `u = u_d(t, x) + U(x) W(t)` with deterministic `u_d`, `û = ∂_t u_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedProcess {
    pub base: ItoRealization,
}

impl ManufacturedProcess {
    /// `u_d = t · Π s(1-s) · exp(-|s - 1/2|² / 0.08)` in box coordinates `s`,
    /// and `U` equal to the same profile when `noisy`.
    pub fn polynomial_bump(grid: &Grid, noisy: bool) -> Self {
        let s = &grid.space;
        let (lo, hi) = (s.lo().to_vec(), s.hi().to_vec());
        let shape = |x: &[f64]| -> f64 {
            let mut p = 1.0;
            let mut r2 = 0.0;
            for a in 0..x.len() {
                let y = (x[a] - lo[a]) / (hi[a] - lo[a]);
                p *= y * (1.0 - y);
                r2 += (y - 0.5).powi(2);
            }
            p * (-r2 / 0.08).exp()
        };
        let profile = s.sample(shape);
        let levels = grid.time.levels();
        let u = (0..levels).map(|k| profile.iter().map(|p| grid.time.t(k) * p).collect()).collect();
        let uhat = vec![profile.clone(); levels];
        let uhat_drift = vec![s.zeros(); levels];
        let diffusion = noisy.then(|| profile.clone());
        Self { base: ItoRealization { u, uhat, uhat_drift, diffusion } }
    }

    pub fn zero(grid: &Grid, noisy: bool) -> Self {
        let levels = grid.time.levels();
        let z = vec![grid.space.zeros(); levels];
        Self {
            base: ItoRealization {
                u: z.clone(),
                uhat: z.clone(),
                uhat_drift: z,
                diffusion: noisy.then(|| grid.space.zeros()),
            },
        }
    }

    /// Adds `U · W(t_k)` to `u`, given `W` on every level.
    pub fn realize(&self, w: &[f64]) -> ItoRealization {
        let mut r = self.base.clone();
        if let Some(d) = &self.base.diffusion {
            for (uk, wk) in r.u.iter_mut().zip(w) {
                for (a, b) in uk.iter_mut().zip(d) {
                    *a += b * wk;
                }
            }
        }
        r
    }
}

/// `ℳ` and the drift part of `LHS - RHS` (everything except `dℳ`) on the deep nodes of one level.
struct LevelTerms {
    m: Vec<f64>,
    drift: Vec<f64>,
    rhs: Vec<f64>,
}

fn level_terms(field: &IdentityField, real: &ItoRealization, k: usize, deep: &[usize]) -> LevelTerms {
    let s = &field.grid.space;
    let co = field.level(k);
    let (u, uh, f) = (&real.u[k], &real.uhat[k], &real.uhat_drift[k]);
    let nodes = s.node_count();
    let v: Vec<f64> = (0..nodes).map(|i| co[i].theta * u[i]).collect();
    let vhat: Vec<f64> = (0..nodes).map(|i| co[i].theta * uh[i] + co[i].ell_t * v[i]).collect();
    let theta_u: Option<Vec<f64>> = real.diffusion.as_ref().map(|d| (0..nodes).map(|i| co[i].theta * d[i]).collect());
    let mut local = vec![Local::default(); nodes];
    let mut flux = vec![[0.0; 2]; nodes];
    for &i in s.interior() {
        local[i] = Local { v: v[i], vhat: vhat[i], grad: centred_grad(s, &v, i) };
        flux[i] = v_flux(&co[i], &local[i]);
    }
    let lap = laplacian(s, u);
    let mut out = LevelTerms { m: Vec::with_capacity(deep.len()), drift: Vec::with_capacity(deep.len()), rhs: Vec::with_capacity(deep.len()) };
    for &i in deep {
        let (c, l) = (&co[i], &local[i]);
        let mut div = 0.0;
        for a in 0..s.dim() {
            let st = s.stride(a);
            div += (flux[i + st][a] - flux[i - st][a]) / (2.0 * s.spacing(a));
        }
        let n = match &theta_u {
            Some(tu) => n_density(c, tu[i], c.ell_t * tu[i], &centred_grad(s, tu, i)),
            None => 0.0,
        };
        let rhs = rhs_drift(c, l) + n;
        out.m.push(m_density(c, l));
        out.drift.push(c.theta * multiplier(c, l) * (f[i] - lap[i]) + div - rhs);
        out.rhs.push(rhs);
    }
    out
}

/// Pathwise interior residual of the identity for `U = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorResidual {
    /// discrete `L²` norm of `LHS - RHS` over deep nodes and inner time levels
    pub residual: f64,
    /// the same norm of the right-hand side, for scale
    pub scale: f64,
    pub nodes: usize,
}

pub fn interior_residual(field: &IdentityField, real: &ItoRealization) -> Result<InteriorResidual> {
    if real.diffusion.as_ref().is_some_and(|d| d.iter().any(|&x| x != 0.0)) {
        return Err(Error::InvalidInput("the pathwise residual needs U = 0; use the expected residual for U ≠ 0".into()));
    }
    check_shapes(field, real)?;
    let g = &field.grid;
    let deep = deep_nodes(&g.space);
    let levels = g.time.levels();
    let terms: Vec<LevelTerms> = (0..levels).into_par_iter().map(|k| level_terms(field, real, k, &deep)).collect();
    let (dt, vol) = (g.time.dt, g.space.cell_volume());
    let (mut res, mut scale) = (0.0, 0.0);
    for k in 1..levels - 1 {
        for j in 0..deep.len() {
            let r = terms[k].drift[j] + (terms[k + 1].m[j] - terms[k - 1].m[j]) / (2.0 * dt);
            res += dt * vol * r * r;
            scale += dt * vol * terms[k].rhs[j].powi(2);
        }
    }
    Ok(InteriorResidual { residual: res.sqrt(), scale: scale.sqrt(), nodes: deep.len() * (levels.saturating_sub(2)) })
}

fn check_shapes(field: &IdentityField, real: &ItoRealization) -> Result<()> {
    let g = &field.grid;
    let ok = [&real.u, &real.uhat, &real.uhat_drift]
        .iter()
        .all(|f| f.len() == g.time.levels() && f.iter().all(|l| l.len() == g.space.node_count()))
        && real.diffusion.as_ref().is_none_or(|d| d.len() == g.space.node_count());
    if !ok || g.time.levels() < 3 {
        return Err(Error::InvalidGrid("realisation does not match the identity grid".into()));
    }
    Ok(())
}

/// Space-time integral of `LHS - RHS` without the martingale term, on one path:
/// `Σ_deep vol [ℳ(T) - ℳ(0) + ∫ drift dt]`, trapezoid in time.
pub fn integrated_residual(field: &IdentityField, real: &ItoRealization) -> Result<f64> {
    check_shapes(field, real)?;
    let g = &field.grid;
    let deep = deep_nodes(&g.space);
    let last = g.time.steps;
    let (dt, vol) = (g.time.dt, g.space.cell_volume());
    let mut total = 0.0;
    for k in 0..=last {
        let t = level_terms(field, real, k, &deep);
        let wk = if k == 0 || k == last { 0.5 } else { 1.0 };
        let mut s: f64 = t.drift.iter().sum::<f64>() * wk * dt;
        if k == 0 {
            s -= t.m.iter().sum::<f64>();
        }
        if k == last {
            s += t.m.iter().sum::<f64>();
        }
        total += vol * s;
    }
    Ok(total)
}

/// Monte Carlo mean of [`integrated_residual`] over the ensemble.
pub fn expected_integrated_residual(field: &IdentityField, process: &ManufacturedProcess, ensemble: &Ensemble) -> Result<McEstimate> {
    if ensemble.steps != field.grid.time.steps || (ensemble.dt - field.grid.time.dt).abs() > 1e-15 * ensemble.dt {
        return Err(Error::InvalidGrid("ensemble time grid differs from the identity grid".into()));
    }
    ensemble.map_stats(|_, path| integrated_residual(field, &process.realize(&path.cumulative())))?.estimate()
}

/// Both residuals of the identity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual {
    pub interior: InteriorResidual,
    pub expected_integrated: Option<McEstimate>,
}

/// Pathwise residual of the drift-only part of `process` and, when `process`
/// carries a diffusion and an ensemble is given, the expected integrated residual.
pub fn identity_residual(field: &IdentityField, process: &ManufacturedProcess, ensemble: Option<&Ensemble>) -> Result<IdentityResidual> {
    let mut det = process.base.clone();
    det.diffusion = None;
    let interior = interior_residual(field, &det)?;
    let expected_integrated = match (ensemble, &process.base.diffusion) {
        (Some(e), Some(_)) => Some(expected_integrated_residual(field, process, e)?),
        _ => None,
    };
    Ok(IdentityResidual { interior, expected_integrated })
}

/// Fields of the identity for the transformed adjoint solution, level by level.
/// `v`-dependent fields are evaluated on interior nodes and vanish on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityIngredients {
    pub psi: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    /// `dt`-density of `𝒩` with the `dW` coefficients `-a4 v + 𝒦` and `-a5 v̂ + 𝒦̂`
    pub n_dt: Vec<Vec<f64>>,
    pub v_flux: Vec<Vec<[f64; 2]>>,
    pub v: Vec<Vec<f64>>,
    pub vhat: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub khat: Vec<Vec<f64>>,
    /// `θ` is carried as `e^{ℓ - shift}`
    pub shift: f64,
}

pub fn assemble_ingredients(
    field: &IdentityField,
    tr: &Transformed,
    adj: &AdjointTrajectory,
    cutoff: &CutoffFunction,
    coeffs: &CoefficientSet,
) -> Result<IdentityIngredients> {
    if coeffs.mode() == CoefficientMode::Stochastic {
        return Err(Error::UnsupportedMode("ingredients need the deterministic adjoint (Z = Ẑ = 0)".into()));
    }
    let g = &field.grid;
    let s = &g.space;
    let levels = g.time.levels();
    if tr.u.len() != levels || adj.levels() != levels || cutoff.grid.time.levels() != levels {
        return Err(Error::InvalidGrid("ingredient inputs live on different time grids".into()));
    }
    let sampler = coeffs.sampler(s)?;
    let nodes = s.node_count();
    let per_level: Vec<_> = (0..levels)
        .into_par_iter()
        .map(|k| -> Result<_> {
            let t = g.time.t(k);
            let a4 = sampler.get(4, t, 0.0)?;
            let a5 = sampler.get(5, t, 0.0)?;
            let co = field.level(k);
            let (z, zh) = (&adj.z[k], &adj.zhat[k]);
            let v: Vec<f64> = (0..nodes).map(|i| co[i].theta * tr.u[k][i]).collect();
            let vhat: Vec<f64> = (0..nodes).map(|i| co[i].theta * tr.uhat[k][i] + co[i].ell_t * v[i]).collect();
            let mut kk = vec![0.0; nodes];
            let mut kh = vec![0.0; nodes];
            let mut sv = vec![0.0; nodes];
            let mut svh = vec![0.0; nodes];
            for i in 0..nodes {
                let (c, x) = (&co[i], cutoff.at(k, i));
                kk[i] = c.theta * x.chi * a4[i] * z[i];
                kh[i] = c.theta * x.chi_t * a5[i] * z[i] + c.theta * x.chi * a5[i] * zh[i] + c.theta * x.chi * c.ell_t * a5[i] * z[i];
                sv[i] = -a4[i] * v[i] + kk[i];
                svh[i] = -a5[i] * vhat[i] + kh[i];
            }
            let mut m = vec![0.0; nodes];
            let mut n = vec![0.0; nodes];
            let mut flux = vec![[0.0; 2]; nodes];
            for &i in s.interior() {
                let l = Local { v: v[i], vhat: vhat[i], grad: centred_grad(s, &v, i) };
                m[i] = m_density(&co[i], &l);
                flux[i] = v_flux(&co[i], &l);
                n[i] = n_density(&co[i], sv[i], svh[i], &centred_grad(s, &sv, i));
            }
            let psi = co.iter().map(|c| c.psi).collect();
            let a = co.iter().map(|c| c.a).collect();
            let b = co.iter().map(|c| c.b).collect();
            Ok((psi, a, b, m, n, flux, v, vhat, kk, kh))
        })
        .collect::<Result<_>>()?;
    let mut out = IdentityIngredients {
        psi: Vec::new(),
        a: Vec::new(),
        b: Vec::new(),
        m: Vec::new(),
        n_dt: Vec::new(),
        v_flux: Vec::new(),
        v: Vec::new(),
        vhat: Vec::new(),
        k: Vec::new(),
        khat: Vec::new(),
        shift: field.shift,
    };
    for (psi, a, b, m, n, flux, v, vhat, kk, kh) in per_level {
        out.psi.push(psi);
        out.a.push(a);
        out.b.push(b);
        out.m.push(m);
        out.n_dt.push(n);
        out.v_flux.push(flux);
        out.v.push(v);
        out.vhat.push(vhat);
        out.k.push(kk);
        out.khat.push(kh);
    }
    Ok(out)
}
