//! Path-wise solver for the controlled forward system
//!
//! ```text
//! dy = (ŷ + a5 f) dt + (a3 y + f) dW
//! dŷ - Δy dt = (a1 y + a4 g) dt + (a2 y + g) dW      in G
//! y = χ_{Γ0} h                                         on Γ
//! ```
//!
//! The wave part uses the implicit midpoint rule with `a1` frozen at the interval
//! midpoint; controls, `a2..a5` and the noise enter explicitly. Controls `f`, `g`
//! are constant on each interval and `h` is given at the time nodes.

use crate::coefficients::CoefficientSet;
use crate::discretization::{dot, hm1_norm, l2_norm, laplacian, masked_interior, poisson_solve, solve_shifted, Face, Grid, SpaceGrid};
use crate::error::{Error, Result};
use crate::noise::{BrownianPath, Ensemble};

/// Default cap on `|y|_{L²} + |ŷ|_{L²}` before a path is declared blown up.
pub const BLOWUP_CAP: f64 = 1e12;

/// The three controls. Empty vectors stand for zero controls.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlTriple {
    /// `f^k` on interval `k`, one grid field per step
    pub f: Vec<Vec<f64>>,
    /// `g^k` on interval `k`
    pub g: Vec<Vec<f64>>,
    /// `h` at every time level, one value vector per face in `faces`
    pub h: Vec<Vec<Vec<f64>>>,
    /// faces carrying `h` (a subset of `Γ0`)
    pub faces: Vec<Face>,
}

impl ControlTriple {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        let z = |v: &Vec<f64>| v.iter().all(|x| *x == 0.0);
        self.f.iter().all(z) && self.g.iter().all(z) && self.h.iter().flatten().all(z)
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        let steps = grid.time.steps;
        let m = grid.space.node_count();
        for (name, v) in [("f", &self.f), ("g", &self.g)] {
            if !v.is_empty() && (v.len() != steps || v.iter().any(|x| x.len() != m)) {
                return Err(Error::InvalidInput(format!("control {name} needs {steps} fields of {m} nodes")));
            }
        }
        if !self.h.is_empty() {
            if self.h.len() != steps + 1 {
                return Err(Error::InvalidInput(format!("control h needs {} time levels", steps + 1)));
            }
            for level in &self.h {
                if level.len() != self.faces.len()
                    || level.iter().zip(&self.faces).any(|(v, &f)| v.len() != grid.space.face_nodes(f).len())
                {
                    return Err(Error::InvalidInput("control h does not match its faces".into()));
                }
            }
        }
        Ok(())
    }

    /// `|f|^2_{L²(Q)} + |g|^2_{L²(0,T;H⁻¹)} + |h|^2_{L²(Σ0)}` with trapezoid weights for `h`.
    pub fn norm_sq(&self, grid: &Grid) -> Result<f64> {
        let dt = grid.time.dt;
        let s = &grid.space;
        let mut total: f64 = self.f.iter().map(|f| dt * dot(s, f, f)).sum();
        for g in &self.g {
            total += dt * hm1_norm(s, g)?.powi(2);
        }
        let n = self.h.len();
        for (k, level) in self.h.iter().enumerate() {
            let w = if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
            total += w * dt * crate::discretization::face_dot(s, &self.faces, level, level);
        }
        Ok(total)
    }
}

/// `(y, ŷ)` at time level `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    pub y: Vec<f64>,
    pub yhat: Vec<f64>,
    pub k: usize,
}

/// Coefficient samples used by one step.
#[derive(Debug, Clone, Copy)]
pub struct StepCoefficients<'a> {
    pub a1_mid: &'a [f64],
    pub a2: &'a [f64],
    pub a3: &'a [f64],
    pub a4_mid: &'a [f64],
    pub a5_mid: &'a [f64],
}

/// Controls acting on one step.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepControls<'a> {
    pub f: Option<&'a [f64]>,
    pub g: Option<&'a [f64]>,
    pub faces: &'a [Face],
    pub h_now: Option<&'a [Vec<f64>]>,
    pub h_next: Option<&'a [Vec<f64>]>,
}

/// Writes face values into the boundary nodes of `u`.
pub fn set_boundary(grid: &SpaceGrid, u: &mut [f64], faces: &[Face], values: Option<&[Vec<f64>]>) {
    for i in 0..grid.node_count() {
        if grid.is_boundary(i) {
            u[i] = 0.0;
        }
    }
    if let Some(values) = values {
        for (&f, v) in faces.iter().zip(values) {
            for (b, x) in grid.face_nodes(f).into_iter().zip(v) {
                u[b] = *x;
            }
        }
    }
}

/// Advances `(y^k, ŷ^k)` to level `k + 1` with increment `dw = W(t_{k+1}) - W(t_k)`.
pub fn step(
    grid: &SpaceGrid,
    dt: f64,
    state: &ForwardState,
    co: &StepCoefficients<'_>,
    ctl: &StepControls<'_>,
    dw: f64,
) -> Result<ForwardState> {
    let y = &state.y;
    let yh = &state.yhat;
    let mut p = grid.zeros();
    let mut q = grid.zeros();
    for &i in grid.interior() {
        let f = ctl.f.map_or(0.0, |f| f[i]);
        let g = ctl.g.map_or(0.0, |g| g[i]);
        p[i] = dt * co.a5_mid[i] * f + (co.a3[i] * y[i] + f) * dw;
        q[i] = dt * co.a4_mid[i] * g + (co.a2[i] * y[i] + g) * dw;
    }
    // interior contribution of the averaged boundary data to Δ_h
    let mut hb = grid.zeros();
    if ctl.h_now.is_some() || ctl.h_next.is_some() {
        let mut hn = grid.zeros();
        let mut hx = grid.zeros();
        set_boundary(grid, &mut hn, ctl.faces, ctl.h_now);
        set_boundary(grid, &mut hx, ctl.faces, ctl.h_next);
        for i in 0..hb.len() {
            hb[i] = 0.5 * (hn[i] + hx[i]);
        }
    }
    let bh = laplacian(grid, &hb);
    let mut v = grid.zeros();
    for &i in grid.interior() {
        v[i] = y[i] + 0.25 * dt * yh[i] + 0.5 * p[i];
    }
    let av = laplacian(grid, &v);
    let mut rhs = grid.zeros();
    for &i in grid.interior() {
        rhs[i] = yh[i] + dt * (av[i] + co.a1_mid[i] * v[i]) + dt * bh[i] + q[i];
    }
    let yhat = solve_shifted(grid, 0.25 * dt * dt, co.a1_mid, &rhs)?;
    let mut ynew = grid.zeros();
    for &i in grid.interior() {
        ynew[i] = y[i] + 0.5 * dt * (yh[i] + yhat[i]) + p[i];
    }
    set_boundary(grid, &mut ynew, ctl.faces, ctl.h_next);
    Ok(ForwardState { y: ynew, yhat, k: state.k + 1 })
}

/// Full trajectory `(y^k, ŷ^k)`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrajectory {
    pub y: Vec<Vec<f64>>,
    pub yhat: Vec<Vec<f64>>,
}

impl ForwardTrajectory {
    pub fn terminal(&self) -> ForwardState {
        let k = self.y.len() - 1;
        ForwardState { y: self.y[k].clone(), yhat: self.yhat[k].clone(), k }
    }
}

pub fn solve_forward(
    grid: &Grid,
    y0: &[f64],
    yhat0: &[f64],
    controls: &ControlTriple,
    coeffs: &CoefficientSet,
    path: &BrownianPath,
) -> Result<ForwardTrajectory> {
    let mut y = Vec::with_capacity(grid.time.levels());
    let mut yhat = Vec::with_capacity(grid.time.levels());
    run(grid, y0, yhat0, controls, coeffs, path, BLOWUP_CAP, |s| {
        y.push(s.y.clone());
        yhat.push(s.yhat.clone());
    })?;
    Ok(ForwardTrajectory { y, yhat })
}

/// Like [`solve_forward`] but keeps only the final state.
pub fn solve_forward_terminal(
    grid: &Grid,
    y0: &[f64],
    yhat0: &[f64],
    controls: &ControlTriple,
    coeffs: &CoefficientSet,
    path: &BrownianPath,
) -> Result<ForwardState> {
    run(grid, y0, yhat0, controls, coeffs, path, BLOWUP_CAP, |_| {})
}

/// Time loop; `visit` sees every level including the initial one.
#[allow(clippy::too_many_arguments)]
pub fn run<V: FnMut(&ForwardState)>(
    grid: &Grid,
    y0: &[f64],
    yhat0: &[f64],
    controls: &ControlTriple,
    coeffs: &CoefficientSet,
    path: &BrownianPath,
    cap: f64,
    mut visit: V,
) -> Result<ForwardState> {
    let s = &grid.space;
    let (dt, steps) = (grid.time.dt, grid.time.steps);
    if y0.len() != s.node_count() || yhat0.len() != s.node_count() {
        return Err(Error::InvalidInput("initial data does not match the grid".into()));
    }
    if path.steps() != steps || (path.dt - dt).abs() > 1e-12 * dt {
        return Err(Error::InvalidInput(format!(
            "Brownian path has {} steps of {} but the grid has {steps} of {dt}",
            path.steps(),
            path.dt
        )));
    }
    controls.check(grid)?;
    let sampler = coeffs.sampler(s)?;
    let w = path.cumulative();
    let hs = |k: usize| (!controls.h.is_empty()).then(|| controls.h[k].as_slice());
    let mut state = ForwardState { y: y0.to_vec(), yhat: masked_interior(s, yhat0), k: 0 };
    set_boundary(s, &mut state.y, &controls.faces, hs(0));
    visit(&state);
    let mut cursor = path.cursor();
    for k in 0..steps {
        let (t, tm) = (grid.time.t(k), grid.time.t(k) + 0.5 * dt);
        let a1 = sampler.get(1, tm, w[k])?;
        let a2 = sampler.get(2, t, w[k])?;
        let a3 = sampler.get(3, t, w[k])?;
        let a4 = sampler.get(4, tm, w[k])?;
        let a5 = sampler.get(5, tm, w[k])?;
        let co = StepCoefficients { a1_mid: &a1, a2: &a2, a3: &a3, a4_mid: &a4, a5_mid: &a5 };
        let ctl = StepControls {
            f: controls.f.get(k).map(|v| v.as_slice()),
            g: controls.g.get(k).map(|v| v.as_slice()),
            faces: &controls.faces,
            h_now: hs(k),
            h_next: hs(k + 1),
        };
        let dw = cursor.take(k);
        state = step(s, dt, &state, &co, &ctl, dw)?;
        let norm = l2_norm(s, &state.y) + l2_norm(s, &state.yhat);
        if !norm.is_finite() || norm > cap {
            return Err(Error::BlowUp { step: k + 1, norm, cap });
        }
        visit(&state);
    }
    Ok(state)
}

/// `|y|^2_{L²} + |ŷ|^2_{H⁻¹}`, conserved by the free midpoint scheme.
pub fn state_energy(grid: &SpaceGrid, y: &[f64], yhat: &[f64]) -> Result<f64> {
    let y = masked_interior(grid, y);
    let w = poisson_solve(grid, yhat)?;
    Ok(dot(grid, &y, &y) + dot(grid, yhat, &w))
}

/// Outcome of [`wellposedness_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellposednessProbe {
    /// `sup_t (E[|y|^2 + |ŷ|^2_{H⁻¹}])^{1/2}` over the data-and-controls norm
    pub ratio: f64,
    pub degenerate: bool,
    pub sup_state: f64,
    pub data_norm: f64,
}

pub fn wellposedness_probe(
    grid: &Grid,
    y0: &[f64],
    yhat0: &[f64],
    controls: &ControlTriple,
    coeffs: &CoefficientSet,
    ensemble: &Ensemble,
) -> Result<WellposednessProbe> {
    let s = &grid.space;
    let data = state_energy(s, y0, yhat0)? + controls.norm_sq(grid)?;
    if data <= 1e-300 {
        return Ok(WellposednessProbe { ratio: f64::NAN, degenerate: true, sup_state: 0.0, data_norm: 0.0 });
    }
    let deterministic = !coeffs.noise_coupled() && controls.f.is_empty() && controls.g.is_empty();
    let paths = if deterministic { 1 } else { ensemble.paths };
    use rayon::prelude::*;
    let per_path: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let path = if deterministic { BrownianPath::zero(grid.time.dt, grid.time.steps) } else { ensemble.path(i) };
            let mut energies = Vec::with_capacity(grid.time.levels());
            let mut err = None;
            run(grid, y0, yhat0, controls, coeffs, &path, BLOWUP_CAP, |st| match state_energy(s, &st.y, &st.yhat) {
                Ok(e) => energies.push(e),
                Err(e) => err = Some(e),
            })?;
            err.map_or(Ok(energies), Err)
        })
        .collect::<Result<_>>()?;
    let levels = grid.time.levels();
    let mut sup: f64 = 0.0;
    for k in 0..levels {
        let mean = per_path.iter().map(|e| e[k]).sum::<f64>() / paths as f64;
        sup = sup.max(mean);
    }
    Ok(WellposednessProbe { ratio: (sup / data).sqrt(), degenerate: false, sup_state: sup.sqrt(), data_norm: data.sqrt() })
}
