//! Weight-only coefficients of the pointwise identity at one space-time node.
//!
//! With `L = λφ`, every coefficient is a polynomial in `L` whose coefficients
//! depend on the partials of `σ` only. Writing `P = σ_t² - |∇σ|²` and
//! `Q = Δσ - σ_tt`, the multiplier choice gives `Ψ = -μ² P L` and
//! `𝒜 = μ² P L² + μ Q L`; `ℬ` is assembled from these by the product rule
//! `∂(c L^k) = (∂c + k μ σ_∂ c) L^k`.

use crate::discretization::Grid;
use crate::geometry::{CarlemanParams, GeometrySpec, SigmaJet, WeightPoint};
use rayon::prelude::*;

/// Largest `ln θ` kept unscaled; beyond it a constant shift is applied.
pub const LOG_HEADROOM: f64 = 200.0;

/// Polynomial in `L` up to degree three.
pub type LPoly = [f64; 4];

fn pmul(a: &LPoly, b: &LPoly) -> LPoly {
    let mut out = [0.0; 4];
    for i in 0..4 {
        for j in 0..4 - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

fn padd(acc: &mut LPoly, p: &LPoly, s: f64) {
    for k in 0..4 {
        acc[k] += s * p[k];
    }
}

pub fn peval(p: &LPoly, l: f64) -> f64 {
    ((p[3] * l + p[2]) * l + p[1]) * l + p[0]
}

/// `Σ p_k L^{k-3}`, finite even where `L³` would overflow.
pub fn peval_over_cube(p: &LPoly, l: f64) -> f64 {
    p[3] + (p[2] + (p[1] + p[0] / l) / l) / l
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCoefficients {
    pub phi: f64,
    /// `L = λφ = ln θ`
    pub ell: f64,
    /// `e^{ℓ - shift}` for the field-wide shift
    pub theta: f64,
    pub ell_t: f64,
    pub ell_tt: f64,
    pub grad_ell: [f64; 2],
    pub hess_ell: [[f64; 2]; 2],
    pub grad_ell_t: [f64; 2],
    pub lap_ell: f64,
    pub psi: f64,
    pub psi_t: f64,
    pub grad_psi: [f64; 2],
    pub a: f64,
    pub b: f64,
    pub b_poly: LPoly,
    pub dim: usize,
}

impl NodeCoefficients {
    pub fn new(jet: &SigmaJet, lambda: f64, mu: f64, shift: f64) -> Self {
        let w = WeightPoint::from_jet(jet, lambda, mu);
        let l = w.ell;
        let mu2 = mu * mu;
        let [st, stt, sttt] = jet.t;
        let p = st * st - jet.grad_sq();
        let q = jet.lap() - stt;
        let pt = 2.0 * st * stt;
        let ptt = 2.0 * stt * stt + 2.0 * st * sttt;
        let qt = -sttt;

        let psi1 = -mu2 * p;
        let psi_t1 = -mu2 * (pt + mu * st * p);
        let psi_tt1 = -mu2 * (ptt + mu * stt * p + 2.0 * mu * st * pt + mu2 * st * st * p);
        let a_poly: LPoly = [0.0, mu * q, mu2 * p, 0.0];
        let a_t: LPoly = [0.0, mu * (qt + mu * st * q), mu2 * (pt + 2.0 * mu * st * p), 0.0];
        let psi_poly: LPoly = [0.0, psi1, 0.0, 0.0];
        let ell_t: LPoly = [0.0, mu * st, 0.0, 0.0];
        let ell_tt: LPoly = [0.0, mu2 * st * st + mu * stt, 0.0, 0.0];
        let lap_ell: LPoly = [0.0, mu2 * jet.grad_sq() + mu * jet.lap(), 0.0, 0.0];

        let mut b = pmul(&a_poly, &psi_poly);
        padd(&mut b, &pmul(&a_t, &ell_t), 1.0);
        padd(&mut b, &pmul(&a_poly, &ell_tt), 1.0);
        padd(&mut b, &pmul(&a_poly, &lap_ell), -1.0);
        let mut grad_psi = [0.0; 2];
        let mut lap_psi1 = 0.0;
        for i in 0..jet.dim {
            let [si, sii, siii] = jet.x[i];
            let pi = -2.0 * si * sii;
            let pii = -2.0 * sii * sii - 2.0 * si * siii;
            let a_i: LPoly = [0.0, mu * (siii + mu * si * q), mu2 * (pi + 2.0 * mu * si * p), 0.0];
            let ell_i: LPoly = [0.0, mu * si, 0.0, 0.0];
            padd(&mut b, &pmul(&a_i, &ell_i), -1.0);
            grad_psi[i] = -mu2 * (pi + mu * si * p) * l;
            lap_psi1 += -mu2 * (pii + mu * sii * p + 2.0 * mu * si * pi + mu2 * si * si * p);
        }
        b[1] += 0.5 * (psi_tt1 - lap_psi1);

        NodeCoefficients {
            phi: w.phi,
            ell: l,
            theta: (l - shift).exp(),
            ell_t: w.ell_t,
            ell_tt: w.ell_tt,
            grad_ell: w.grad_ell,
            hess_ell: w.hess_ell,
            grad_ell_t: w.grad_ell_t,
            lap_ell: w.lap_ell,
            psi: psi1 * l,
            psi_t: psi_t1 * l,
            grad_psi,
            a: peval(&a_poly, l),
            b: peval(&b, l),
            b_poly: b,
            dim: jet.dim,
        }
    }
}

/// `Ψ` assembled term by term from the closed-form partials of `ℓ`, with no
/// use of the compact `P`, `Q` notation.
pub fn psi_expanded(beta: f64, alpha: f64, geom: &GeometrySpec, w: &WeightPoint, t: f64, x: &[f64], mu: f64) -> f64 {
    let n = geom.dim() as f64;
    let lm_phi = w.ell * mu;
    let s = t - 0.5 * geom.t_final;
    let e = (alpha * beta * s * s).exp();
    let mut space = 0.0;
    let mut space_d2 = 0.0;
    for a in 0..geom.dim() {
        let d = x[a] - geom.x0[a];
        let g = (beta * d * d).exp();
        space += g;
        space_d2 += g * d * d;
    }
    -w.ell_tt + w.lap_ell
        - 4.0 * n * lm_phi * alpha * alpha * beta * beta * e * s * s
        - 2.0 * n * lm_phi * alpha * beta * e
        - 4.0 * lm_phi * beta * beta * space_d2
        - 2.0 * lm_phi * beta * space
}

/// Identity coefficients on every node of a space-time grid.
#[derive(Debug, Clone)]
pub struct IdentityField {
    pub grid: Grid,
    pub lambda: f64,
    pub mu: f64,
    /// `θ` is stored as `e^{ℓ - shift}`; the identity is homogeneous of degree
    /// two in `θ`, so a constant shift rescales both sides alike.
    pub shift: f64,
    pub points: Vec<NodeCoefficients>,
}

impl IdentityField {
    pub fn at(&self, level: usize, node: usize) -> &NodeCoefficients {
        &self.points[level * self.grid.space.node_count() + node]
    }

    pub fn level(&self, level: usize) -> &[NodeCoefficients] {
        let m = self.grid.space.node_count();
        &self.points[level * m..(level + 1) * m]
    }
}

fn jets(params: &CarlemanParams, geom: &GeometrySpec, grid: &Grid) -> Vec<SigmaJet> {
    let m = grid.space.node_count();
    (0..grid.time.levels())
        .into_par_iter()
        .flat_map_iter(|k| {
            let t = grid.time.t(k);
            (0..m).map(move |i| SigmaJet::eval(params.beta, params.alpha, geom, t, &grid.space.coord(i)[..grid.dim()]))
        })
        .collect()
}

/// Evaluates the identity coefficients for `params.lambda`, `params.mu`.
pub fn identity_field(params: &CarlemanParams, geom: &GeometrySpec, grid: &Grid) -> IdentityField {
    let js = jets(params, geom, grid);
    let (lambda, mu) = (params.lambda, params.mu);
    let max_ell = js.iter().map(|j| lambda * (mu * j.value).exp()).fold(f64::NEG_INFINITY, f64::max);
    let shift = (max_ell - LOG_HEADROOM).max(0.0);
    let points = js.par_iter().map(|j| NodeCoefficients::new(j, lambda, mu, shift)).collect();
    IdentityField { grid: grid.clone(), lambda, mu, shift, points }
}
