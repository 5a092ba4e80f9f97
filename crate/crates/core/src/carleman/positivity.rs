//! Node-by-node checks of the three positivity bounds on the level set `σ > c1`.

use super::node::{peval_over_cube, NodeCoefficients};
use crate::discretization::Grid;
use crate::geometry::{level_set_membership, CarlemanParams, GeometrySpec, SigmaJet, WeightPoint};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Relative slack allowed for rounding when a bound is attained with equality.
const ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    pub name: &'static str,
    /// nodes of the level set that were checked
    pub nodes: usize,
    pub violations: usize,
    /// nodes where the exponentials leave the floating-point range
    pub unevaluated: usize,
    /// smallest `(lhs - bound) / |bound|` seen
    pub worst_margin: f64,
}

impl PositivityReport {
    pub fn passed(&self) -> bool {
        self.nodes > 0 && self.violations == 0 && self.unevaluated == 0
    }
}

/// Space-time nodes `(level, node)` with `σ > c1`.
pub fn level_set_nodes(params: &CarlemanParams, geom: &GeometrySpec, grid: &Grid) -> Vec<(usize, usize)> {
    let m = grid.space.node_count();
    (0..grid.time.levels())
        .into_par_iter()
        .flat_map_iter(|k| {
            let t = grid.time.t(k);
            (0..m).filter_map(move |i| {
                level_set_membership(params, geom, params.c1, t, &grid.space.coord(i)[..grid.dim()]).then_some((k, i))
            })
        })
        .collect()
}

fn collect(name: &'static str, margins: Vec<f64>) -> PositivityReport {
    let finite: Vec<f64> = margins.iter().cloned().filter(|m| m.is_finite()).collect();
    PositivityReport {
        name,
        nodes: margins.len(),
        violations: finite.iter().filter(|&&m| m < -ROUNDING).count(),
        unevaluated: margins.len() - finite.len(),
        worst_margin: finite.iter().cloned().fold(f64::INFINITY, f64::min),
    }
}

fn jet_at(params: &CarlemanParams, geom: &GeometrySpec, grid: &Grid, k: usize, i: usize) -> (SigmaJet, [f64; 2]) {
    let x = grid.space.coord(i);
    (SigmaJet::eval(params.beta, params.alpha, geom, grid.time.t(k), &x[..grid.dim()]), x)
}

/// Matrix of the quadratic form in `(v̂, ∇v)` divided by `λμφ`.
pub fn bv2_matrix(c: &NodeCoefficients, mu: f64) -> DMatrix<f64> {
    let n = c.dim;
    let scale = mu * c.ell;
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m[(0, 0)] = (c.ell_tt + c.lap_ell - c.psi) / scale;
    for i in 0..n {
        m[(0, i + 1)] = -2.0 * c.grad_ell_t[i] / scale;
        m[(i + 1, 0)] = m[(0, i + 1)];
        for j in 0..n {
            let diag = if i == j { c.ell_tt - c.lap_ell + c.psi } else { 0.0 };
            m[(i + 1, j + 1)] = (diag + 2.0 * c.hess_ell[i][j]) / scale;
        }
    }
    m
}

/// `(4c0β² + 2β(1-α)) Σ e^{βd_i²}`, the lower bound per unit `λμφ`.
pub fn bv2_bound(params: &CarlemanParams, jet: &SigmaJet) -> f64 {
    (4.0 * params.c0 * params.beta * params.beta + 2.0 * params.beta * (1.0 - params.alpha)) * jet.space_sum
}

/// Checks the quadratic-form bound through its smallest eigenvalue and along
/// `directions` random unit vectors per node.
pub fn check_bv2(params: &CarlemanParams, geom: &GeometrySpec, grid: &Grid, directions: usize, seed: u64) -> PositivityReport {
    let nodes = level_set_nodes(params, geom, grid);
    let margins = nodes
        .par_iter()
        .enumerate()
        .map(|(idx, &(k, i))| {
            let (jet, _) = jet_at(params, geom, grid, k, i);
            let c = NodeCoefficients::new(&jet, params.lambda, params.mu, 0.0);
            let m = bv2_matrix(&c, params.mu);
            let bound = bv2_bound(params, &jet);
            let eig = m.clone().symmetric_eigen().eigenvalues.min();
            let mut worst = eig;
            let mut rng = ChaCha8Rng::seed_from_u64(crate::noise::path_seed(seed, idx as u64));
            for _ in 0..directions {
                let xi: Vec<f64> = (0..m.nrows()).map(|_| StandardNormal.sample(&mut rng)).collect();
                let xi = nalgebra::DVector::from_vec(xi);
                let q = xi.dot(&(&m * &xi)) / xi.norm_squared();
                worst = worst.min(q);
            }
            (worst - bound) / bound.abs()
        })
        .collect();
    collect("quadratic form", margins)
}

/// `Σ e^{2βd²} d² - α²n² E² s²` against `(c0 c1/√n)[(Σ e^{2βd²})^{1/2} + √n E]`.
pub fn check_zd1(params: &CarlemanParams, geom: &GeometrySpec, grid: &Grid) -> PositivityReport {
    let n = geom.dim() as f64;
    let nodes = level_set_nodes(params, geom, grid);
    let margins = nodes
        .par_iter()
        .map(|&(k, i)| {
            let x = grid.space.coord(i);
            let s = grid.time.t(k) - 0.5 * geom.t_final;
            let e = (params.alpha * params.beta * s * s).exp();
            let (mut sum2, mut sum2d) = (0.0, 0.0);
            for a in 0..geom.dim() {
                let d = x[a] - geom.x0[a];
                let g = (2.0 * params.beta * d * d).exp();
                sum2 += g;
                sum2d += g * d * d;
            }
            let lhs = sum2d - (params.alpha * n * e * s).powi(2);
            let rhs = params.c0 * params.c1 / n.sqrt() * (sum2.sqrt() + n.sqrt() * e);
            (lhs - rhs) / rhs.abs()
        })
        .collect();
    collect("exponential chain", margins)
}

/// `ℬ ≥ (16 c0² c1²/n) λ³μ⁴β⁴φ³ Σ e^{2βd²}`, compared after dividing by `L³ = λ³φ³`.
pub fn check_zd3(params: &CarlemanParams, geom: &GeometrySpec, grid: &Grid) -> PositivityReport {
    let n = geom.dim() as f64;
    let nodes = level_set_nodes(params, geom, grid);
    let margins = nodes
        .par_iter()
        .map(|&(k, i)| {
            let (jet, x) = jet_at(params, geom, grid, k, i);
            let c = NodeCoefficients::new(&jet, params.lambda, params.mu, 0.0);
            let sum2: f64 = (0..geom.dim()).map(|a| (2.0 * params.beta * (x[a] - geom.x0[a]).powi(2)).exp()).sum();
            let bound = 16.0 * (params.c0 * params.c1).powi(2) / n * params.mu.powi(4) * params.beta.powi(4) * sum2;
            (peval_over_cube(&c.b_poly, c.ell) - bound) / bound
        })
        .collect();
    collect("zero-order coefficient", margins)
}

/// Smallest `μ` on a doubling ladder from `mu_start` at which [`check_zd3`]
/// passes for the given `λ`, if any below `mu_cap`.
pub fn zd3_threshold(params: &CarlemanParams, geom: &GeometrySpec, grid: &Grid, mu_start: f64, mu_cap: f64) -> Option<f64> {
    let mut p = *params;
    p.mu = mu_start;
    while p.mu <= mu_cap {
        if check_zd3(&p, geom, grid).passed() {
            return Some(p.mu);
        }
        p.mu *= 2.0;
    }
    None
}

/// The weight partials used by the checks, for reports.
pub fn weight_at(params: &CarlemanParams, geom: &GeometrySpec, t: f64, x: &[f64]) -> WeightPoint {
    WeightPoint::from_jet(&SigmaJet::eval(params.beta, params.alpha, geom, t, x), params.lambda, params.mu)
}
