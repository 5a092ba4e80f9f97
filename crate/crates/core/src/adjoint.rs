//! Backward system with deterministic data
//!
//! ```text
//! dz = ẑ dt,   dẑ - Δz dt = a1 z dt   in (0, τ) × G,   z = 0 on Γ,
//! (z, ẑ)(τ) = (z^τ, ẑ^τ)
//! ```
//!
//! With deterministic coefficients and terminal data the martingale parts vanish
//! identically. The scheme is the time reversal of the forward midpoint scheme,
//! so the discrete forward/backward duality holds exactly.

use crate::coefficients::{CoefficientMode, CoefficientSet};
use crate::discretization::{
    dot, face_dot, flux_trace, grad_norm_sq, laplacian, masked_interior, normal_trace, solve_shifted, Face, Grid, SpaceGrid,
};
use crate::error::{Error, Result};
use crate::forward::{ControlTriple, ForwardTrajectory};

/// Denominator floor of relative residuals.
pub const RESIDUAL_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalData {
    pub z: Vec<f64>,
    pub zhat: Vec<f64>,
}

impl TerminalData {
    pub fn new(grid: &SpaceGrid, z: Vec<f64>, zhat: Vec<f64>) -> Result<Self> {
        if z.len() != grid.node_count() || zhat.len() != grid.node_count() {
            return Err(Error::InvalidInput("terminal data does not match the grid".into()));
        }
        let scale = z.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if (0..grid.node_count()).any(|i| grid.is_boundary(i) && z[i].abs() > 1e-12 * scale) {
            return Err(Error::InvalidInput("terminal z must vanish on the boundary".into()));
        }
        Ok(Self { z: masked_interior(grid, &z), zhat: masked_interior(grid, &zhat) })
    }

    /// `|∇z|^2 + |ẑ|^2`.
    pub fn energy(&self, grid: &SpaceGrid) -> f64 {
        grad_norm_sq(grid, &self.z) + dot(grid, &self.zhat, &self.zhat)
    }
}

/// `(z, ẑ)` on levels `0..=tau_level`, the boundary traces, and the
/// observation fields `a4 z + Z`, `a5 ẑ + Ẑ` (with `Z = Ẑ = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub z: Vec<Vec<f64>>,
    pub zhat: Vec<Vec<f64>>,
    pub faces: Vec<Face>,
    /// second-order outward normal derivative per level and face
    pub trace: Vec<Vec<Vec<f64>>>,
    /// `a4 z` at each level
    pub a4z: Vec<Vec<f64>>,
    /// `a5 ẑ` at each level
    pub a5zhat: Vec<Vec<f64>>,
    /// `a1` at each interval midpoint, as used by the scheme
    pub a1_mid: Vec<Vec<f64>>,
}

impl AdjointTrajectory {
    pub fn levels(&self) -> usize {
        self.z.len()
    }

    /// Martingale part `Z` (identically zero in the supported mode).
    pub fn big_z(&self, grid: &SpaceGrid) -> Vec<f64> {
        grid.zeros()
    }

    /// Martingale part `Ẑ` (identically zero in the supported mode).
    pub fn big_zhat(&self, grid: &SpaceGrid) -> Vec<f64> {
        grid.zeros()
    }

    pub fn face_index(&self, face: Face) -> Option<usize> {
        self.faces.iter().position(|&f| f == face)
    }
}

/// Solves backward from level `tau_level` to level 0.
pub fn solve_adjoint(grid: &Grid, terminal: &TerminalData, coeffs: &CoefficientSet, tau_level: usize) -> Result<AdjointTrajectory> {
    if coeffs.mode() == CoefficientMode::Stochastic {
        return Err(Error::UnsupportedMode(
            "backward solves need deterministic coefficients; a coefficient depends on the Brownian path, so Z and Ẑ would not vanish"
                .into(),
        ));
    }
    if tau_level > grid.time.steps || tau_level == 0 {
        return Err(Error::InvalidInput(format!("tau level {tau_level} must lie in 1..={}", grid.time.steps)));
    }
    let s = &grid.space;
    let dt = grid.time.dt;
    let sampler = coeffs.sampler(s)?;
    let n = tau_level + 1;
    let mut z = vec![Vec::new(); n];
    let mut zhat = vec![Vec::new(); n];
    let mut a1_mid = vec![Vec::new(); tau_level];
    z[tau_level] = terminal.z.clone();
    zhat[tau_level] = terminal.zhat.clone();
    for k in (0..tau_level).rev() {
        let a1 = sampler.get(1, grid.time.t(k) + 0.5 * dt, 0.0)?.into_owned();
        let (zn, zhn) = (&z[k + 1], &zhat[k + 1]);
        let mut v = s.zeros();
        for &i in s.interior() {
            v[i] = zn[i] - 0.25 * dt * zhn[i];
        }
        let av = laplacian(s, &v);
        let mut rhs = s.zeros();
        for &i in s.interior() {
            rhs[i] = zhn[i] - dt * (av[i] + a1[i] * v[i]);
        }
        let zh = solve_shifted(s, 0.25 * dt * dt, &a1, &rhs)?;
        let mut zk = s.zeros();
        for &i in s.interior() {
            zk[i] = zn[i] - 0.5 * dt * (zh[i] + zhn[i]);
        }
        z[k] = zk;
        zhat[k] = zh;
        a1_mid[k] = a1;
    }
    let faces = s.faces();
    let trace = z.iter().map(|zk| normal_trace(s, zk, &faces)).collect();
    let mut a4z = Vec::with_capacity(n);
    let mut a5zhat = Vec::with_capacity(n);
    for k in 0..n {
        let t = grid.time.t(k);
        let a4 = sampler.get(4, t, 0.0)?;
        let a5 = sampler.get(5, t, 0.0)?;
        a4z.push(z[k].iter().zip(a4.iter()).map(|(a, b)| a * b).collect());
        a5zhat.push(zhat[k].iter().zip(a5.iter()).map(|(a, b)| a * b).collect());
    }
    Ok(AdjointTrajectory { z, zhat, faces, trace, a4z, a5zhat, a1_mid })
}

// trapezoid weight of level k on 0..=last
fn trap(k: usize, last: usize) -> f64 {
    if k == 0 || k == last {
        0.5
    } else {
        1.0
    }
}

fn select_faces(traj: &AdjointTrajectory, level: usize, faces: &[Face]) -> Vec<Vec<f64>> {
    faces
        .iter()
        .map(|&f| traj.face_index(f).map(|j| traj.trace[level][j].clone()).unwrap_or_default())
        .collect()
}

/// `L²(Σ')` norm of `∂z/∂ν` over the listed faces, trapezoid in time.
pub fn hidden_regularity_norm(grid: &Grid, traj: &AdjointTrajectory, faces: &[Face]) -> f64 {
    let last = traj.levels() - 1;
    let dt = grid.time.dt;
    (0..=last)
        .map(|k| {
            let tr = select_faces(traj, k, faces);
            trap(k, last) * dt * face_dot(&grid.space, faces, &tr, &tr)
        })
        .sum::<f64>()
        .sqrt()
}

/// Both sides of the duality identity between forward and backward solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranspositionReport {
    /// `E[<ŷ(τ), z^τ> - <y(τ), ẑ^τ>] - <ŷ0, z(0)> + <y0, ẑ(0)>`
    pub lhs: f64,
    /// `E ∫ <g, a4 z> - <f, a5 ẑ> - ∫_{Σ0} h ∂z/∂ν`
    pub rhs: f64,
    pub residual: f64,
    pub degenerate: bool,
}

/// Evaluates the identity with quadratures independent of the scheme: interval
/// averages for `f` and `g`, the trapezoid rule and the second-order trace for `h`.
/// Several forward paths may be given, in which case the left side is averaged.
pub fn transposition_residual(
    grid: &Grid,
    forward: &[ForwardTrajectory],
    adjoint: &AdjointTrajectory,
    controls: &ControlTriple,
    coeffs: &CoefficientSet,
) -> Result<TranspositionReport> {
    duality_sides(grid, forward, adjoint, controls, coeffs, false)
}

/// The identity as the scheme satisfies it: `h` is paired with the one-cell flux
/// of the interval-averaged `z`. Holds to rounding for deterministic paths.
pub fn discrete_duality_defect(
    grid: &Grid,
    forward: &ForwardTrajectory,
    adjoint: &AdjointTrajectory,
    controls: &ControlTriple,
    coeffs: &CoefficientSet,
) -> Result<TranspositionReport> {
    duality_sides(grid, std::slice::from_ref(forward), adjoint, controls, coeffs, true)
}

fn duality_sides(
    grid: &Grid,
    forward: &[ForwardTrajectory],
    adjoint: &AdjointTrajectory,
    controls: &ControlTriple,
    coeffs: &CoefficientSet,
    exact: bool,
) -> Result<TranspositionReport> {
    if forward.is_empty() {
        return Err(Error::InvalidInput("need at least one forward trajectory".into()));
    }
    let s = &grid.space;
    let dt = grid.time.dt;
    let tau = adjoint.levels() - 1;
    if forward.iter().any(|f| f.y.len() <= tau) {
        return Err(Error::InvalidInput("forward trajectory is shorter than the adjoint horizon".into()));
    }
    let pair = |f: &ForwardTrajectory, k: usize| dot(s, &f.yhat[k], &adjoint.z[k]) - dot(s, &f.y[k], &adjoint.zhat[k]);
    let lhs = forward.iter().map(|f| pair(f, tau) - pair(f, 0)).sum::<f64>() / forward.len() as f64;

    let sampler = coeffs.sampler(s)?;
    let mut rhs = 0.0;
    for k in 0..tau {
        let tm = grid.time.t(k) + 0.5 * dt;
        let zbar: Vec<f64> = adjoint.z[k].iter().zip(&adjoint.z[k + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
        let zhbar: Vec<f64> = adjoint.zhat[k].iter().zip(&adjoint.zhat[k + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
        if let Some(g) = controls.g.get(k) {
            let a4 = sampler.get(4, tm, 0.0)?;
            let a4z: Vec<f64> = zbar.iter().zip(a4.iter()).map(|(a, b)| a * b).collect();
            rhs += dt * dot(s, g, &a4z);
        }
        if let Some(f) = controls.f.get(k) {
            let a5 = sampler.get(5, tm, 0.0)?;
            let a5z: Vec<f64> = zhbar.iter().zip(a5.iter()).map(|(a, b)| a * b).collect();
            rhs -= dt * dot(s, f, &a5z);
        }
        if exact && !controls.h.is_empty() {
            let hbar: Vec<Vec<f64>> = controls.h[k]
                .iter()
                .zip(&controls.h[k + 1])
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
                .collect();
            let tr = flux_trace(s, &zbar, &controls.faces);
            rhs -= dt * face_dot(s, &controls.faces, &hbar, &tr);
        }
    }
    if !exact && !controls.h.is_empty() {
        for k in 0..=tau {
            let tr = select_faces(adjoint, k, &controls.faces);
            rhs -= trap(k, tau) * dt * face_dot(s, &controls.faces, &controls.h[k], &tr);
        }
    }
    let scale = lhs.abs().max(rhs.abs());
    let degenerate = scale < RESIDUAL_FLOOR;
    let residual = if degenerate { 0.0 } else { (lhs - rhs).abs() / scale.max(RESIDUAL_FLOOR) };
    Ok(TranspositionReport { lhs, rhs, residual, degenerate })
}

/// Result of [`energy_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub forward_bound_ok: bool,
    pub backward_bound_ok: bool,
    /// smallest `C` for which both bounds hold at every level
    pub fitted_c: f64,
    /// `|ẑ|^2 + |∇z|^2` per level
    pub energy: Vec<f64>,
    /// `∫_t^τ [(a4 z)^2 + |∇(a4 z)|^2 + (a5 ẑ)^2]` per level
    pub observation: Vec<f64>,
}

/// Checks, at every level `t`, the two-sided bounds
/// `E(τ) ≤ e^{C(r2+1)τ} (E(t) + obs(t))` and `E(τ) ≥ e^{-C(r2+1)τ} E(t)`,
/// with `C` given or, when `None`, fitted.
pub fn energy_check(grid: &Grid, traj: &AdjointTrajectory, r2: f64, c: Option<f64>) -> EnergyReport {
    let s = &grid.space;
    let dt = grid.time.dt;
    let last = traj.levels() - 1;
    let tau = grid.time.t(last);
    let energy: Vec<f64> = (0..=last)
        .map(|k| dot(s, &traj.zhat[k], &traj.zhat[k]) + grad_norm_sq(s, &traj.z[k]))
        .collect();
    let density: Vec<f64> = (0..=last)
        .map(|k| {
            let a4z = masked_interior(s, &traj.a4z[k]);
            dot(s, &a4z, &a4z) + grad_norm_sq(s, &a4z) + dot(s, &traj.a5zhat[k], &traj.a5zhat[k])
        })
        .collect();
    let mut observation = vec![0.0; last + 1];
    for k in (0..last).rev() {
        observation[k] = observation[k + 1] + 0.5 * dt * (density[k] + density[k + 1]);
    }
    let et = energy[last];
    let scale = (r2 + 1.0) * tau;
    let mut needed: f64 = 0.0;
    for k in 0..=last {
        if et > 0.0 {
            needed = needed.max((et / (energy[k] + observation[k])).ln());
            needed = needed.max((energy[k] / et).ln());
        } else if energy[k] > 0.0 {
            needed = f64::INFINITY;
        }
    }
    let fitted_c = if needed > 0.0 { needed / scale } else { 0.0 };
    let cc = c.unwrap_or(fitted_c);
    let tol = 1e-12;
    let forward_bound_ok = (0..=last).all(|k| et <= (cc * scale).exp() * (energy[k] + observation[k]) * (1.0 + tol));
    let backward_bound_ok = (0..=last).all(|k| et * (1.0 + tol) >= (-cc * scale).exp() * energy[k]);
    EnergyReport { forward_bound_ok, backward_bound_ok, fitted_c, energy, observation }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Coefficient;
    use crate::discretization::{Side, TimeGrid};
    use crate::forward::solve_forward;
    use crate::noise::BrownianPath;
    use std::f64::consts::PI;

    fn grid(nx: usize, dt: f64, t: f64) -> Grid {
        Grid::new(SpaceGrid::new(&[0.0], &[1.0], &[nx]).unwrap(), TimeGrid::covering(t, dt).unwrap())
    }

    fn sine(g: &Grid) -> TerminalData {
        TerminalData::new(&g.space, g.space.sample(|x| (PI * x[0]).sin()), g.space.zeros()).unwrap()
    }

    #[test]
    fn zero_terminal_data_gives_zero() {
        let g = grid(10, 0.1, 1.0);
        let td = TerminalData::new(&g.space, g.space.zeros(), g.space.zeros()).unwrap();
        let tr = solve_adjoint(&g, &td, &CoefficientSet::zero(), g.time.steps).unwrap();
        assert!(tr.z.iter().chain(&tr.zhat).flatten().all(|v| *v == 0.0));
        assert_eq!(hidden_regularity_norm(&g, &tr, &g.space.faces()), 0.0);
    }

    fn reversed_wave_errors(nx: usize) -> (f64, f64) {
        let h = 1.0 / nx as f64;
        let g = grid(nx, h / 2.0, 2.0);
        let tr = solve_adjoint(&g, &sine(&g), &CoefficientSet::zero(), g.time.steps).unwrap();
        let t_end = g.time.t_end();
        let (mut ez, mut et): (f64, f64) = (0.0, 0.0);
        let right = tr.face_index(Face::new(0, Side::High)).unwrap();
        for k in 0..tr.levels() {
            let t = g.time.t(k);
            let exact = g.space.sample(|x| (PI * (t_end - t)).cos() * (PI * x[0]).sin());
            for i in 0..exact.len() {
                ez = ez.max((tr.z[k][i] - exact[i]).abs());
            }
            et = et.max((tr.trace[k][right][0] + PI * (PI * (t_end - t)).cos()).abs());
        }
        (ez, et)
    }

    #[test]
    fn reversed_standing_wave_and_trace() {
        let e: Vec<(f64, f64)> = [20, 40, 80].iter().map(|&n| reversed_wave_errors(n)).collect();
        for w in e.windows(2) {
            assert!((w[0].0 / w[1].0).log2() > 1.9, "{e:?}");
            assert!((w[0].1 / w[1].1).log2() > 1.9, "{e:?}");
        }
    }

    #[test]
    fn hidden_regularity_closed_form() {
        let g = grid(200, 0.0025, 2.0);
        let tr = solve_adjoint(&g, &sine(&g), &CoefficientSet::zero(), g.time.steps).unwrap();
        let n = hidden_regularity_norm(&g, &tr, &[Face::new(0, Side::High)]);
        assert!((n * n - PI * PI).abs() < 1e-3 * PI * PI, "{}", n * n);
        let coarse = grid(100, 0.005, 2.0);
        let tc = solve_adjoint(&coarse, &sine(&coarse), &CoefficientSet::zero(), coarse.time.steps).unwrap();
        let nc = hidden_regularity_norm(&coarse, &tc, &[Face::new(0, Side::High)]);
        assert!((nc / n - 1.0).abs() < 0.15);
    }

    #[test]
    fn rejects_path_dependent_coefficients() {
        let g = grid(10, 0.1, 1.0);
        let mut set = CoefficientSet::zero();
        set.a2 = Coefficient::parse("w").unwrap();
        assert!(matches!(solve_adjoint(&g, &sine(&g), &set, g.time.steps), Err(Error::UnsupportedMode(_))));
    }

    #[test]
    fn time_reversal_round_trip() {
        let g = grid(80, 1.0 / 160.0, 1.0);
        let mut set = CoefficientSet::zero();
        set.a1 = Coefficient::parse("1 + x").unwrap();
        let td = TerminalData::new(&g.space, g.space.sample(|x| (PI * x[0]).sin()), g.space.sample_interior(|x| x[0] * (1.0 - x[0]))).unwrap();
        let tr = solve_adjoint(&g, &td, &set, g.time.steps).unwrap();
        let fw = solve_forward(&g, &tr.z[0], &tr.zhat[0], &ControlTriple::zero(), &set, &BrownianPath::zero(g.time.dt, g.time.steps)).unwrap();
        let last = g.time.steps;
        for i in 0..g.space.node_count() {
            assert!((fw.y[last][i] - td.z[i]).abs() < 1e-10);
            assert!((fw.yhat[last][i] - td.zhat[i]).abs() < 1e-9);
        }
    }

    fn benchmark(nx: usize) -> (TranspositionReport, TranspositionReport) {
        let h = 1.0 / nx as f64;
        let g = grid(nx, h / 2.0, 1.0);
        let s = &g.space;
        let mut set = CoefficientSet::zero();
        set.a1 = Coefficient::parse("cos(x + t)").unwrap();
        set.a4 = Coefficient::parse("x * (1 - x)").unwrap();
        set.a5 = Coefficient::constant(0.7);
        let face = Face::new(0, Side::High);
        let tm = |k: usize| g.time.t(k) + 0.5 * g.time.dt;
        let controls = ControlTriple {
            f: (0..g.time.steps).map(|k| s.sample_interior(|x| (2.0 * x[0] + tm(k)).sin())).collect(),
            g: (0..g.time.steps).map(|k| s.sample_interior(|x| x[0] * (1.0 + tm(k)))).collect(),
            h: (0..g.time.levels()).map(|k| vec![vec![(3.0 * g.time.t(k)).sin()]]).collect(),
            faces: vec![face],
        };
        let y0 = s.sample(|x| x[0] * (1.0 - x[0]));
        let yh0 = s.sample_interior(|x| (PI * x[0]).sin());
        let fw = solve_forward(&g, &y0, &yh0, &controls, &set, &BrownianPath::zero(g.time.dt, g.time.steps)).unwrap();
        let td = TerminalData::new(s, s.sample(|x| (PI * x[0]).sin() + (2.0 * PI * x[0]).sin()), s.sample_interior(|x| 0.5 * (3.0 * PI * x[0]).sin())).unwrap();
        let adj = solve_adjoint(&g, &td, &set, g.time.steps).unwrap();
        (
            transposition_residual(&g, &[fw.clone()], &adj, &controls, &set).unwrap(),
            discrete_duality_defect(&g, &fw, &adj, &controls, &set).unwrap(),
        )
    }

    #[test]
    fn duality_is_exact_and_identity_converges() {
        let r: Vec<_> = [25, 50, 100].iter().map(|&n| benchmark(n)).collect();
        for (res, exact) in &r {
            assert!(exact.residual < 1e-11, "{exact:?}");
            assert!(!res.degenerate);
        }
        for w in r.windows(2) {
            let order = (w[0].0.residual / w[1].0.residual).log2();
            assert!(order > 1.8, "order {order}: {r:?}");
        }
    }

    #[test]
    fn energy_band() {
        let g = grid(50, 0.01, 2.0);
        let free = solve_adjoint(&g, &sine(&g), &CoefficientSet::zero(), g.time.steps).unwrap();
        let rep = energy_check(&g, &free, 0.0, None);
        assert!(rep.fitted_c < 1e-10 && rep.forward_bound_ok && rep.backward_bound_ok);
        let mut set = CoefficientSet::zero();
        set.a1 = Coefficient::constant(5.0);
        let tr = solve_adjoint(&g, &sine(&g), &set, g.time.steps).unwrap();
        let rep = energy_check(&g, &tr, 25.0, None);
        assert!(rep.fitted_c.is_finite() && rep.fitted_c > 0.0);
        assert!(rep.forward_bound_ok && rep.backward_bound_ok);
        let tight = energy_check(&g, &tr, 25.0, Some(0.5 * rep.fitted_c));
        assert!(!(tight.forward_bound_ok && tight.backward_bound_ok));
        let td = TerminalData::new(&g.space, g.space.zeros(), g.space.zeros()).unwrap();
        let zero = solve_adjoint(&g, &td, &set, g.time.steps).unwrap();
        let rep = energy_check(&g, &zero, 25.0, None);
        assert!(rep.forward_bound_ok && rep.backward_bound_ok && rep.fitted_c == 0.0);
    }
}
