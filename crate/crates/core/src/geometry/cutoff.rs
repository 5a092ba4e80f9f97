//! Cut-off `χ = S((σ - c1)/δ)` with the quintic smoothstep `S`.

use super::weights::{sigma_exceeds, SigmaJet};
use super::{CarlemanParams, GeometrySpec};
use crate::discretization::Grid;
use crate::error::{Error, Result};
use rayon::prelude::*;

/// `S(u) = 6u^5 - 15u^4 + 10u^3` clamped to `[0, 1]`, with `S'` and `S''`.
/// `S` is C² and non-decreasing.
pub fn smoothstep(u: f64) -> [f64; 3] {
    if u <= 0.0 {
        return [0.0, 0.0, 0.0];
    }
    if u >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let w = 1.0 - u;
    [
        u * u * u * (10.0 - 15.0 * u + 6.0 * u * u),
        30.0 * u * u * w * w,
        60.0 * u * w * (1.0 - 2.0 * u),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CutoffPoint {
    pub chi: f64,
    pub chi_t: f64,
    pub chi_tt: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
    /// `|∇χ|^2 + χ_t^2 + Σ_jk χ_jk^2`
    pub big_theta: f64,
}

impl CutoffPoint {
    pub fn from_jet(jet: &SigmaJet, c1: f64, delta: f64) -> Self {
        let [s, s1, s2] = smoothstep((jet.value - c1) / delta);
        let (d1, d2) = (s1 / delta, s2 / (delta * delta));
        let mut p = CutoffPoint {
            chi: s,
            chi_t: d1 * jet.t[0],
            chi_tt: d2 * jet.t[0] * jet.t[0] + d1 * jet.t[1],
            ..Default::default()
        };
        for i in 0..jet.dim {
            p.grad[i] = d1 * jet.x[i][0];
            for j in 0..jet.dim {
                let diag = if i == j { d1 * jet.x[i][1] } else { 0.0 };
                p.hess[i][j] = d2 * jet.x[i][0] * jet.x[j][0] + diag;
            }
        }
        let g2: f64 = p.grad.iter().map(|v| v * v).sum();
        let h2: f64 = p.hess.iter().flatten().map(|v| v * v).sum();
        p.big_theta = g2 + p.chi_t * p.chi_t + h2;
        p
    }

    pub fn lap(&self) -> f64 {
        self.hess[0][0] + self.hess[1][1]
    }
}

#[derive(Debug, Clone)]
pub struct CutoffFunction {
    pub grid: Grid,
    pub points: Vec<CutoffPoint>,
}

impl CutoffFunction {
    pub fn at(&self, level: usize, node: usize) -> &CutoffPoint {
        &self.points[level * self.grid.space.node_count() + node]
    }
}

pub fn build_cutoff(params: &CarlemanParams, geom: &GeometrySpec, grid: &Grid) -> Result<CutoffFunction> {
    if !(params.delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {}", params.delta)));
    }
    let m = grid.space.node_count();
    let points: Vec<(CutoffPoint, bool)> = (0..grid.time.levels())
        .into_par_iter()
        .flat_map_iter(|k| {
            let t = grid.time.t(k);
            (0..m).map(move |i| {
                let x = grid.space.coord(i);
                let x = &x[..grid.dim()];
                let plateau = sigma_exceeds(params.beta, params.alpha, geom, params.c1 + params.delta, t, x);
                let jet = SigmaJet::eval(params.beta, params.alpha, geom, t, x);
                let p = if jet.value.is_finite() {
                    CutoffPoint::from_jet(&jet, params.c1, params.delta)
                } else {
                    CutoffPoint { chi: if plateau { 1.0 } else { 0.0 }, ..Default::default() }
                };
                (p, plateau)
            })
        })
        .collect();
    if !points.iter().any(|(_, plateau)| *plateau) {
        return Err(Error::EmptyPlateau { delta: params.delta });
    }
    Ok(CutoffFunction { grid: grid.clone(), points: points.into_iter().map(|(p, _)| p).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{SpaceGrid, TimeGrid};
    use crate::geometry::choose_beta;

    #[test]
    fn smoothstep_shape() {
        assert_eq!(smoothstep(-1.0)[0], 0.0);
        assert_eq!(smoothstep(2.0)[0], 1.0);
        assert_eq!(smoothstep(0.5)[0], 0.5);
        let mut prev = 0.0;
        for k in 0..=1000 {
            let u = k as f64 / 1000.0;
            let [s, s1, _] = smoothstep(u);
            assert!(s >= prev && s1 >= 0.0);
            prev = s;
        }
        // value, slope and curvature are continuous at both ends
        for u in [0.0, 1.0] {
            let a = smoothstep(u - 1e-7);
            let b = smoothstep(u + 1e-7);
            for o in 0..3 {
                assert!((a[o] - b[o]).abs() < 1e-5, "u={u} order {o}");
            }
        }
        let h = 1e-5;
        for &u in &[0.2, 0.5, 0.77] {
            let [_, s1, s2] = smoothstep(u);
            assert!(((smoothstep(u + h)[0] - smoothstep(u - h)[0]) / (2.0 * h) - s1).abs() < 1e-8);
            assert!(((smoothstep(u + h)[1] - smoothstep(u - h)[1]) / (2.0 * h) - s2).abs() < 1e-7);
        }
    }

    #[test]
    fn plateau_support_and_big_theta() {
        let g = GeometrySpec::unit_interval(-0.1, 0.95, 2.5).unwrap();
        let mut p = choose_beta(&g, 0.0).unwrap();
        p.delta = p.delta.max(0.05);
        let space = SpaceGrid::new(&[0.0], &[1.0], &[40]).unwrap();
        let grid = Grid::new(space, TimeGrid::covering(2.5, 0.01).unwrap());
        let cut = build_cutoff(&p, &g, &grid).unwrap();
        let mut partial = 0;
        for k in 0..grid.time.levels() {
            for i in 0..grid.space.node_count() {
                let x = grid.space.coord(i);
                let s = SigmaJet::eval(p.beta, p.alpha, &g, grid.time.t(k), &x[..1]).value;
                let c = cut.at(k, i);
                assert!((0.0..=1.0).contains(&c.chi) && c.big_theta >= 0.0);
                if s > p.c1 + p.delta {
                    assert_eq!((c.chi, c.big_theta), (1.0, 0.0));
                } else if s < p.c1 {
                    assert_eq!((c.chi, c.big_theta), (0.0, 0.0));
                } else {
                    partial += 1;
                }
            }
        }
        assert!(partial > 0);
    }

    #[test]
    fn midpoint_level_gives_half() {
        let g = GeometrySpec::unit_interval(-1.0, 0.9, 4.0).unwrap();
        let jet = SigmaJet::eval(1.0, 0.5, &g, 2.0, &[0.0]);
        let c1 = jet.value - 0.05;
        let c = CutoffPoint::from_jet(&jet, c1, 0.1);
        assert!((c.chi - 0.5).abs() < 1e-12);
        assert!(c.chi > 0.0 && c.chi < 1.0);
    }

    #[test]
    fn empty_plateau_is_reported() {
        let g = GeometrySpec::unit_interval(-0.1, 0.95, 2.5).unwrap();
        let mut p = choose_beta(&g, 0.0).unwrap();
        p.delta = 1e6;
        let space = SpaceGrid::new(&[0.0], &[1.0], &[10]).unwrap();
        let grid = Grid::new(space, TimeGrid::covering(2.5, 0.1).unwrap());
        assert!(matches!(build_cutoff(&p, &g, &grid), Err(Error::EmptyPlateau { .. })));
    }
}
