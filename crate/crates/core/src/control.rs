//! Empirical observability constants, the duality Gramian and control synthesis
//! by preconditioned conjugate residuals.
//!
//! For adjoint terminal data `ξ = (z^T, ẑ^T)` the controls are
//! `f = -a5 ẑ`, `g = -Δ_h(a4 z)` and `h = -∂z/∂ν` on the observed faces. Driving
//! the forward system from rest with them gives `Λξ = (ŷ(T), -y(T))`, and the
//! discrete duality identity makes `<Λξ, ξ>` the sum of the three observation norms.

use crate::adjoint::{hidden_regularity_norm, solve_adjoint, AdjointTrajectory, TerminalData};
use crate::coefficients::CoefficientSet;
use crate::discretization::{
    dot, face_dot, flux_trace, grad_norm_sq, laplacian, masked_interior, poisson_solve, Face, Grid, LowPass, SpaceGrid, TimeGrid,
};
use crate::error::{Error, Result};
use crate::geometry::smoothstep;
use crate::forward::{solve_forward_terminal, ControlTriple, ForwardState};
use crate::noise::BrownianPath;
use crate::presets::DataPreset;
use rayon::prelude::*;

/// Below this the observation side is treated as zero.
pub const OBSERVATION_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservabilityReport {
    pub t_final: f64,
    /// `|∇z^T|² + |ẑ^T|²`
    pub lhs: f64,
    /// boundary trace on the observed faces, `∫|∇(a4 z)|²`, `∫|a5 ẑ|²`
    pub rhs_terms: [f64; 3],
    pub rhs: f64,
    pub ratio: f64,
    pub degenerate: bool,
}

fn trapezoid(levels: usize, dt: f64, f: impl Fn(usize) -> f64) -> f64 {
    (0..levels).map(|k| if k == 0 || k + 1 == levels { 0.5 } else { 1.0 } * dt * f(k)).sum()
}

/// Observation terms of an adjoint trajectory with the second-order trace.
pub fn observation_terms(grid: &Grid, adj: &AdjointTrajectory, observed: &[Face]) -> [f64; 3] {
    let s = &grid.space;
    let levels = adj.levels();
    let dt = grid.time.dt;
    let trace = hidden_regularity_norm(grid, adj, observed).powi(2);
    let a4 = trapezoid(levels, dt, |k| grad_norm_sq(s, &masked_interior(s, &adj.a4z[k])));
    let a5 = trapezoid(levels, dt, |k| dot(s, &adj.a5zhat[k], &adj.a5zhat[k]));
    [trace, a4, a5]
}

/// Solves the adjoint on the whole of `grid` and compares the terminal energy with
/// the observation terms.
pub fn observability_ratio(grid: &Grid, terminal: &TerminalData, coeffs: &CoefficientSet, observed: &[Face]) -> Result<ObservabilityReport> {
    let adj = solve_adjoint(grid, terminal, coeffs, grid.time.steps)?;
    let lhs = terminal.energy(&grid.space);
    let rhs_terms = observation_terms(grid, &adj, observed);
    let rhs: f64 = rhs_terms.iter().sum();
    let degenerate = rhs_terms.iter().all(|&r| r < OBSERVATION_FLOOR);
    let ratio = if degenerate { if lhs > 0.0 { f64::INFINITY } else { 0.0 } } else { lhs / rhs };
    Ok(ObservabilityReport { t_final: grid.time.t_end(), lhs, rhs_terms, rhs, ratio, degenerate })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub t_final: f64,
    pub worst_ratio: f64,
    /// label of the family member attaining the worst ratio
    pub worst_member: String,
    /// members whose observation side vanished
    pub degenerate: usize,
    pub members: usize,
}

impl ScanRow {
    pub fn all_degenerate(&self) -> bool {
        self.degenerate == self.members
    }
}

/// Worst observability ratio over `family` for each horizon. Every horizon uses
/// its own time grid with step at most `dt_max`; scan points run in parallel.
pub fn tstar_scan(
    space: &SpaceGrid,
    dt_max: f64,
    coeffs: &CoefficientSet,
    observed: &[Face],
    family: &[DataPreset],
    horizons: &[f64],
) -> Result<Vec<ScanRow>> {
    let terminals: Vec<TerminalData> = family.iter().map(|p| p.terminal(space)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..horizons.len()).flat_map(|i| (0..family.len()).map(move |j| (i, j))).collect();
    let reports: Vec<ObservabilityReport> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let grid = Grid::new(space.clone(), TimeGrid::covering(horizons[i], dt_max)?);
            observability_ratio(&grid, &terminals[j], coeffs, observed)
        })
        .collect::<Result<_>>()?;
    Ok(horizons
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let rows = &reports[i * family.len()..(i + 1) * family.len()];
            let degenerate = rows.iter().filter(|r| r.degenerate).count();
            let (mut worst, mut member) = (f64::NEG_INFINITY, String::new());
            for (r, p) in rows.iter().zip(family) {
                if !r.degenerate && r.ratio > worst {
                    worst = r.ratio;
                    member = p.label();
                }
            }
            if degenerate == rows.len() {
                worst = f64::NAN;
            }
            ScanRow { t_final: t, worst_ratio: worst, worst_member: member, degenerate, members: rows.len() }
        })
        .collect())
}

/// Window `η(t) = S(t/τ) S((T - t)/τ)` applied to the controls. Switching the
/// boundary control on abruptly launches a jump that the scheme cannot resolve;
/// tapering both ends keeps the controlled state smooth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Taper {
    /// ramp width `τ`; `None` means `η = 1`
    pub width: Option<f64>,
}

impl Taper {
    pub fn none() -> Self {
        Self { width: None }
    }

    pub fn new(width: f64) -> Self {
        Self { width: Some(width) }
    }

    pub fn weight(&self, t: f64, t_final: f64) -> f64 {
        match self.width {
            Some(w) if w > 0.0 => smoothstep(t / w)[0] * smoothstep((t_final - t) / w)[0],
            _ => 1.0,
        }
    }
}

/// Controls induced by an adjoint trajectory, with `z̄^k`, `ẑ̄^k` the interval
/// averages and `η` taken at interval midpoints: `f^k = -η a5 ẑ̄^k`,
/// `g^k = -η Δ_h(a4 z̄^k)`, and node values of `h` whose interval averages are
/// `-η ∂z̄^k/∂ν` for the one-cell flux the scheme pairs with boundary data. With
/// this choice `<Λξ, ξ>` is an exact sum of squares.
pub fn synthesize_controls(grid: &Grid, adj: &AdjointTrajectory, coeffs: &CoefficientSet, observed: &[Face], taper: Taper) -> Result<ControlTriple> {
    let s = &grid.space;
    let dt = grid.time.dt;
    let steps = adj.levels() - 1;
    let t_final = grid.time.t(steps);
    let sampler = coeffs.sampler(s)?;
    let mut f = Vec::with_capacity(steps);
    let mut g = Vec::with_capacity(steps);
    let flux: Vec<Vec<Vec<f64>>> = adj.z.iter().map(|zk| flux_trace(s, zk, observed)).collect();
    let mut h: Vec<Vec<Vec<f64>>> = Vec::with_capacity(steps + 1);
    let eta0 = taper.weight(0.0, t_final);
    h.push(flux[0].iter().map(|v| v.iter().map(|x| -eta0 * x).collect()).collect());
    for k in 0..steps {
        let tm = grid.time.t(k) + 0.5 * dt;
        let eta = taper.weight(tm, t_final);
        let a4 = sampler.get(4, tm, 0.0)?;
        let a5 = sampler.get(5, tm, 0.0)?;
        let mut fk = s.zeros();
        let mut w = s.zeros();
        for &i in s.interior() {
            fk[i] = -0.5 * eta * a5[i] * (adj.zhat[k][i] + adj.zhat[k + 1][i]);
            w[i] = 0.5 * a4[i] * (adj.z[k][i] + adj.z[k + 1][i]);
        }
        let gk = masked_interior(s, &laplacian(s, &w)).into_iter().map(|v| -eta * v).collect();
        f.push(fk);
        g.push(gk);
        // h^{k+1} = 2 (average) - h^k
        let next = (0..observed.len())
            .map(|j| {
                (0..flux[k][j].len())
                    .map(|n| -eta * (flux[k][j][n] + flux[k + 1][j][n]) - h[k][j][n])
                    .collect()
            })
            .collect();
        h.push(next);
    }
    Ok(ControlTriple { f, g, h, faces: observed.to_vec() })
}

/// Weighted observation norms exactly as the scheme pairs them; `<Λξ, ξ>` reproduces their sum.
pub fn scheme_observation_terms(grid: &Grid, adj: &AdjointTrajectory, coeffs: &CoefficientSet, observed: &[Face], taper: Taper) -> Result<[f64; 3]> {
    let s = &grid.space;
    let dt = grid.time.dt;
    let steps = adj.levels() - 1;
    let t_final = grid.time.t(steps);
    let sampler = coeffs.sampler(s)?;
    let mut out = [0.0; 3];
    for k in 0..steps {
        let tm = grid.time.t(k) + 0.5 * dt;
        let eta = taper.weight(tm, t_final);
        let a4 = sampler.get(4, tm, 0.0)?;
        let a5 = sampler.get(5, tm, 0.0)?;
        let zbar: Vec<f64> = (0..s.node_count()).map(|i| 0.5 * (adj.z[k][i] + adj.z[k + 1][i])).collect();
        let tr = flux_trace(s, &zbar, observed);
        out[0] += dt * eta * face_dot(s, observed, &tr, &tr);
        let w: Vec<f64> = zbar.iter().zip(a4.iter()).map(|(z, a)| a * z).collect();
        out[1] += dt * eta * grad_norm_sq(s, &masked_interior(s, &w));
        let v: Vec<f64> = (0..s.node_count()).map(|i| 0.5 * a5[i] * (adj.zhat[k][i] + adj.zhat[k + 1][i])).collect();
        out[2] += dt * eta * dot(s, &v, &v);
    }
    Ok(out)
}

/// One application of the Gramian.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianApplication {
    pub xi: TerminalData,
    pub controls: ControlTriple,
    /// `(ŷ(T), -y(T))` for the forward solution from rest
    pub output: (Vec<f64>, Vec<f64>),
    /// trace, `|∇(a4 z)|²` and `|a5 ẑ|²` integrals as the scheme pairs them
    pub observation: [f64; 3],
}

impl GramianApplication {
    /// `<Λξ, η>` in the volume-weighted pairing.
    pub fn pairing(&self, grid: &SpaceGrid, eta: &TerminalData) -> f64 {
        dot(grid, &self.output.0, &eta.z) + dot(grid, &self.output.1, &eta.zhat)
    }
}

pub fn apply_gramian(grid: &Grid, xi: &TerminalData, coeffs: &CoefficientSet, observed: &[Face], taper: Taper) -> Result<GramianApplication> {
    let s = &grid.space;
    let adj = solve_adjoint(grid, xi, coeffs, grid.time.steps)?;
    let controls = synthesize_controls(grid, &adj, coeffs, observed, taper)?;
    let observation = scheme_observation_terms(grid, &adj, coeffs, observed, taper)?;
    let end = solve_forward_terminal(grid, &s.zeros(), &s.zeros(), &controls, coeffs, &BrownianPath::zero(grid.time.dt, grid.time.steps))?;
    let output = (masked_interior(s, &end.yhat), masked_interior(s, &end.y).into_iter().map(|v| -v).collect());
    Ok(GramianApplication { xi: xi.clone(), controls, output, observation })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumOptions {
    /// relative residual at which the iteration stops
    pub tol: f64,
    pub max_iter: usize,
    /// fraction of the sine band kept in the iterates; `None` disables filtering
    pub filter: Option<f64>,
    pub taper: Taper,
}

impl Default for HumOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, filter: Some(0.6), taper: Taper::new(0.2) }
    }
}

/// One iteration of the control solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgRecord {
    pub iteration: usize,
    /// `|r|/|b|` of the filtered system in the `H⁻¹ × L²` norm
    pub residual: f64,
    /// `|(y(T) - y1, ŷ(T) - ŷ1)|` in `L² × H⁻¹` for the current controls
    pub terminal_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumOutcome {
    pub xi: TerminalData,
    pub controls: ControlTriple,
    pub iterations: usize,
    /// terminal mismatch of a fresh forward run with the final controls
    pub achieved_error: f64,
    /// terminal mismatch without control
    pub uncontrolled_error: f64,
    pub history: Vec<CgRecord>,
}

/// A pair `(z, ẑ)` in the data space of `Λ`.
#[derive(Debug, Clone, PartialEq)]
struct Pair(Vec<f64>, Vec<f64>);

impl Pair {
    fn zeros(s: &SpaceGrid) -> Self {
        Pair(s.zeros(), s.zeros())
    }

    fn dot(&self, s: &SpaceGrid, o: &Pair) -> f64 {
        dot(s, &self.0, &o.0) + dot(s, &self.1, &o.1)
    }

    fn axpy(&mut self, a: f64, x: &Pair) {
        for (u, v) in self.0.iter_mut().zip(&x.0) {
            *u += a * v;
        }
        for (u, v) in self.1.iter_mut().zip(&x.1) {
            *u += a * v;
        }
    }

    fn plus_scaled(&self, b: f64, x: &Pair) -> Pair {
        let mut out = self.clone();
        for (u, v) in out.0.iter_mut().zip(&x.0) {
            *u += b * v;
        }
        for (u, v) in out.1.iter_mut().zip(&x.1) {
            *u += b * v;
        }
        out
    }
}

struct HumSystem<'a> {
    grid: &'a Grid,
    coeffs: &'a CoefficientSet,
    observed: &'a [Face],
    filter: Option<LowPass>,
    taper: Taper,
}

impl HumSystem<'_> {
    fn project(&self, p: &Pair) -> Pair {
        let s = &self.grid.space;
        match &self.filter {
            Some(f) => Pair(f.apply(s, &p.0), f.apply(s, &p.1)),
            None => Pair(masked_interior(s, &p.0), masked_interior(s, &p.1)),
        }
    }

    /// `Λ F p`, unfiltered output.
    fn gramian(&self, p: &Pair) -> Result<Pair> {
        let fp = self.project(p);
        let xi = TerminalData { z: fp.0, zhat: fp.1 };
        let app = apply_gramian(self.grid, &xi, self.coeffs, self.observed, self.taper)?;
        Ok(Pair(app.output.0, app.output.1))
    }

    /// `diag((-Δ_h)⁻¹, I)`, mapping residuals back to the data space.
    fn precondition(&self, r: &Pair) -> Result<Pair> {
        let s = &self.grid.space;
        Ok(Pair(poisson_solve(s, &r.0)?, masked_interior(s, &r.1)))
    }

    fn norm(&self, r: &Pair) -> Result<f64> {
        pair_norm(&self.grid.space, r)
    }
}

/// `L² × H⁻¹` norm of a residual pair stored as `(ŷ-part, y-part)`.
fn pair_norm(s: &SpaceGrid, r: &Pair) -> Result<f64> {
    let pre = Pair(poisson_solve(s, &r.0)?, masked_interior(s, &r.1));
    Ok(r.dot(s, &pre).max(0.0).sqrt())
}

/// `|(y - y1, ŷ - ŷ1)|` in `L² × H⁻¹`, the error HUM minimises.
pub fn terminal_error(s: &SpaceGrid, end: &ForwardState, target: (&[f64], &[f64])) -> Result<f64> {
    pair_norm(s, &terminal_mismatch(s, end, target)?)
}

fn terminal_mismatch(s: &SpaceGrid, end: &ForwardState, target: (&[f64], &[f64])) -> Result<Pair> {
    let y: Vec<f64> = (0..s.node_count()).map(|i| end.y[i] - target.0[i]).collect();
    let yh: Vec<f64> = (0..s.node_count()).map(|i| end.yhat[i] - target.1[i]).collect();
    Ok(Pair(masked_interior(s, &yh), masked_interior(s, &y)))
}

/// Steers `(y0, ŷ0)` towards `target` at the final time of `grid`.
///
/// The Gramian system `F Λ F ξ = F b` is solved by conjugate residuals
/// preconditioned with `diag((-Δ_h)⁻¹, I)`, which minimises the filtered terminal
/// mismatch in `L² × H⁻¹` at every iteration. `log` sees every iteration.
#[allow(clippy::too_many_arguments)]
pub fn hum_solve(
    grid: &Grid,
    y0: &[f64],
    yhat0: &[f64],
    target: (&[f64], &[f64]),
    coeffs: &CoefficientSet,
    observed: &[Face],
    opts: &HumOptions,
    mut log: impl FnMut(&CgRecord),
) -> Result<HumOutcome> {
    let s = &grid.space;
    let m = s.node_count();
    if [y0.len(), yhat0.len(), target.0.len(), target.1.len()].iter().any(|&l| l != m) {
        return Err(Error::InvalidInput("data and target must match the grid".into()));
    }
    let sys = HumSystem { grid, coeffs, observed, filter: opts.filter.map(|f| LowPass::new(s, f)), taper: opts.taper };
    let path = BrownianPath::zero(grid.time.dt, grid.time.steps);
    let free = solve_forward_terminal(grid, y0, yhat0, &ControlTriple::zero(), coeffs, &path)?;
    // Λξ = (ŷ_c(T), -y_c(T)) must equal (ŷ1 - ŷ_free(T), -(y1 - y_free(T)))
    let miss = terminal_mismatch(s, &free, target)?;
    let b = Pair(miss.0.iter().map(|v| -v).collect(), miss.1.clone());
    let uncontrolled_error = sys.norm(&b)?;

    let bf = sys.project(&b);
    let b_norm = sys.norm(&bf)?;
    let mut x = Pair::zeros(s);
    let mut lam_x = Pair::zeros(s);
    let mut history = Vec::new();
    let mut iterations = 0;
    if b_norm > 0.0 {
        let mut r = bf.clone();
        let mut z = sys.precondition(&r)?;
        let mut raw_z = sys.gramian(&z)?;
        let mut az = sys.project(&raw_z);
        let mut p = z.clone();
        let mut raw_p = raw_z.clone();
        let mut ap = az.clone();
        let mut rho = z.dot(s, &az);
        let mut rel = 1.0;
        while rel > opts.tol {
            if iterations >= opts.max_iter {
                return Err(Error::CgNotConverged { iterations, residual: rel });
            }
            let q = sys.precondition(&ap)?;
            let denom = ap.dot(s, &q);
            if !(denom > 0.0) || !(rho > 0.0) {
                return Err(Error::CgNotConverged { iterations, residual: rel });
            }
            let alpha = rho / denom;
            x.axpy(alpha, &p);
            lam_x.axpy(alpha, &raw_p);
            r.axpy(-alpha, &ap);
            z.axpy(-alpha, &q);
            iterations += 1;
            rel = sys.norm(&r)? / b_norm;
            let mut true_r = b.clone();
            true_r.axpy(-1.0, &lam_x);
            let rec = CgRecord { iteration: iterations, residual: rel, terminal_error: sys.norm(&true_r)? };
            log(&rec);
            history.push(rec);
            if rel <= opts.tol {
                break;
            }
            raw_z = sys.gramian(&z)?;
            az = sys.project(&raw_z);
            let rho_new = z.dot(s, &az);
            let beta = rho_new / rho;
            rho = rho_new;
            p = z.plus_scaled(beta, &p);
            raw_p = raw_z.plus_scaled(beta, &raw_p);
            ap = az.plus_scaled(beta, &ap);
        }
    }
    let xf = sys.project(&x);
    let xi = TerminalData { z: xf.0, zhat: xf.1 };
    let adj = solve_adjoint(grid, &xi, coeffs, grid.time.steps)?;
    let controls = synthesize_controls(grid, &adj, coeffs, observed, opts.taper)?;
    let end = solve_forward_terminal(grid, y0, yhat0, &controls, coeffs, &path)?;
    let achieved_error = sys.norm(&terminal_mismatch(s, &end, target)?)?;
    Ok(HumOutcome { xi, controls, iterations, achieved_error, uncontrolled_error, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Coefficient;
    use crate::discretization::Side;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn line(nx: usize, t: f64) -> Grid {
        let s = SpaceGrid::new(&[0.0], &[1.0], &[nx]).unwrap();
        Grid::with_cfl(s, t, 0.5).unwrap()
    }

    fn right() -> Vec<Face> {
        vec![Face::new(0, Side::High)]
    }

    fn random_smooth(s: &SpaceGrid, rng: &mut ChaCha8Rng) -> TerminalData {
        let cz: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ch: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let series = |c: &[f64]| s.sample_interior(|x| c.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * PI * x[0]).sin()).sum());
        TerminalData::new(s, series(&cz), series(&ch)).unwrap()
    }

    #[test]
    fn zero_terminal_data_is_degenerate() {
        let g = line(20, 2.5);
        let r = observability_ratio(&g, &DataPreset::Zero.terminal(&g.space).unwrap(), &CoefficientSet::zero(), &right()).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn combination_terms_enter_the_observation_side() {
        let g = line(40, 2.5);
        let mut c = CoefficientSet::zero();
        c.a4 = Coefficient::parse("x*(1-x)").unwrap();
        c.a5 = Coefficient::constant(1.0);
        let term = DataPreset::Sine { modes: vec![1] }.terminal(&g.space).unwrap();
        let r = observability_ratio(&g, &term, &c, &right()).unwrap();
        assert!(r.rhs_terms.iter().all(|&v| v > 0.0) && r.ratio.is_finite());
        let bare = observability_ratio(&g, &term, &CoefficientSet::zero(), &right()).unwrap();
        assert_eq!(bare.rhs_terms[1..], [0.0, 0.0]);
        assert!(r.ratio < bare.ratio);
    }

    #[test]
    fn ratio_is_non_increasing_in_the_horizon() {
        let s = SpaceGrid::new(&[0.0], &[1.0], &[40]).unwrap();
        let fam = vec![DataPreset::Sine { modes: vec![2] }, DataPreset::Bump { center: vec![0.3], radius: 0.1 }];
        let rows = tstar_scan(&s, 0.0125, &CoefficientSet::zero(), &right(), &fam, &[0.5, 1.0, 1.5, 2.0, 2.5]).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].worst_ratio <= w[0].worst_ratio * (1.0 + 1e-12), "{rows:?}");
        }
    }

    #[test]
    fn gramian_of_zero_is_zero() {
        let g = line(20, 2.5);
        let app = apply_gramian(&g, &DataPreset::Zero.terminal(&g.space).unwrap(), &CoefficientSet::zero(), &right(), Taper::new(0.2)).unwrap();
        assert!(app.controls.is_zero());
        assert!(app.output.0.iter().chain(&app.output.1).all(|v| *v == 0.0));
    }

    #[test]
    fn gramian_is_symmetric_and_reproduces_observation_norms() {
        let g = line(40, 2.5);
        let mut c = CoefficientSet::zero();
        c.a1 = Coefficient::parse("1 + x").unwrap();
        c.a4 = Coefficient::parse("x*(1-x)").unwrap();
        c.a5 = Coefficient::constant(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for taper in [Taper::none(), Taper::new(0.2), Taper::new(0.2), Taper::none()] {
            let (a, b) = (random_smooth(&g.space, &mut rng), random_smooth(&g.space, &mut rng));
            let la = apply_gramian(&g, &a, &c, &right(), taper).unwrap();
            let lb = apply_gramian(&g, &b, &c, &right(), taper).unwrap();
            let (ab, ba) = (la.pairing(&g.space, &b), lb.pairing(&g.space, &a));
            let scale = (la.pairing(&g.space, &a) * lb.pairing(&g.space, &b)).sqrt();
            assert!((ab - ba).abs() <= 1e-10 * scale, "{ab} vs {ba}");
            let obs: f64 = la.observation.iter().sum();
            assert!((la.pairing(&g.space, &a) - obs).abs() <= 1e-10 * obs);
            assert!(la.observation.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn zero_data_needs_no_iterations() {
        let g = line(20, 2.5);
        let z = g.space.zeros();
        let out = hum_solve(&g, &z, &z, (&z, &z), &CoefficientSet::zero(), &right(), &HumOptions::default(), |_| {}).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.controls.is_zero());
        assert_eq!(out.achieved_error, 0.0);
    }

    #[test]
    fn uncontrolled_target_needs_no_control() {
        let g = line(20, 2.5);
        let (y0, yh0) = DataPreset::Sine { modes: vec![1] }.fields(&g.space).unwrap();
        let path = BrownianPath::zero(g.time.dt, g.time.steps);
        let end = solve_forward_terminal(&g, &y0, &yh0, &ControlTriple::zero(), &CoefficientSet::zero(), &path).unwrap();
        let out = hum_solve(&g, &y0, &yh0, (&end.y, &end.yhat), &CoefficientSet::zero(), &right(), &HumOptions::default(), |_| {}).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.achieved_error <= 1e-12);
    }

    #[test]
    fn sine_is_driven_to_rest() {
        let g = line(50, 2.5);
        let (y0, yh0) = DataPreset::Sine { modes: vec![1] }.fields(&g.space).unwrap();
        let z = g.space.zeros();
        let mut seen = Vec::new();
        let out = hum_solve(&g, &y0, &yh0, (&z, &z), &CoefficientSet::zero(), &right(), &HumOptions::default(), |r| seen.push(*r)).unwrap();
        assert!(out.iterations <= 200);
        assert!(out.achieved_error <= 1e-2 * out.uncontrolled_error, "{} vs {}", out.achieved_error, out.uncontrolled_error);
        for w in seen.windows(2) {
            assert!(w[1].residual <= w[0].residual * (1.0 + 1e-9));
        }
    }

    #[test]
    fn short_horizon_stagnates() {
        let g = line(40, 0.6);
        let (y0, yh0) = DataPreset::Sine { modes: vec![1] }.fields(&g.space).unwrap();
        let z = g.space.zeros();
        let opts = HumOptions { tol: 1e-12, max_iter: 15, ..HumOptions::default() };
        let r = hum_solve(&g, &y0, &yh0, (&z, &z), &CoefficientSet::zero(), &right(), &opts, |_| {});
        assert!(matches!(r, Err(Error::CgNotConverged { .. })), "{r:?}");
    }
}
