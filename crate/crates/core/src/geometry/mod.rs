//! Geometric constants of the box domain, the parameter conditions behind the
//! weight function, the weight fields themselves and the cut-off function.

mod conditions;
mod cutoff;
mod weights;

pub use conditions::{choose_beta, choose_beta_with, params_with_beta, verify_conditions, verify_conditions_sampled, BetaSearch, CarlemanParams, ConditionReport};
pub use cutoff::{build_cutoff, smoothstep, CutoffFunction, CutoffPoint};
pub use weights::{eval_weights, level_set_membership, sigma_exceeds, SigmaJet, WeightField, WeightPoint};

use crate::discretization::{Face, Side};
use crate::error::{Error, Result};

/// Default number of samples per axis for maxima and minima over the closed box.
pub const DENSE_SAMPLES: usize = 2001;

/// Box domain `G`, observation point `x0`, closeness parameter `kappa` and horizon `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub x0: Vec<f64>,
    pub kappa: f64,
    pub t_final: f64,
}

impl GeometrySpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, x0: Vec<f64>, kappa: f64, t_final: f64) -> Result<Self> {
        let g = Self { lo, hi, x0, kappa, t_final };
        g.validate()?;
        Ok(g)
    }

    /// Unit interval `(0, 1)` with the given point and horizon.
    pub fn unit_interval(x0: f64, kappa: f64, t_final: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![1.0], vec![x0], kappa, t_final)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lo.len();
        if !(1..=2).contains(&n) || self.hi.len() != n || self.x0.len() != n {
            return Err(Error::InvalidGeometry(format!(
                "dimension must be 1 or 2 with matching lo/hi/x0 lengths (got {}, {}, {})",
                self.lo.len(),
                self.hi.len(),
                self.x0.len()
            )));
        }
        for a in 0..n {
            if !(self.hi[a] > self.lo[a]) {
                return Err(Error::InvalidGeometry(format!(
                    "axis {} has zero or negative width [{}, {}]",
                    a + 1,
                    self.lo[a],
                    self.hi[a]
                )));
            }
        }
        if !self.x0.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGeometry("x0 must be finite".into()));
        }
        let inside_closure = (0..n).all(|a| self.x0[a] >= self.lo[a] && self.x0[a] <= self.hi[a]);
        if inside_closure {
            return Err(Error::InvalidGeometry(format!("x0 = {:?} lies in the closure of G", self.x0)));
        }
        // every coordinate distance must stay away from zero over the closed box
        for a in 0..n {
            if self.x0[a] >= self.lo[a] && self.x0[a] <= self.hi[a] {
                return Err(Error::InvalidGeometry(format!(
                    "x0 coordinate {} = {} lies within [{}, {}], so min |x_i - x0_i| over the box is zero",
                    a + 1,
                    self.x0[a],
                    self.lo[a],
                    self.hi[a]
                )));
            }
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::InvalidGeometry(format!("kappa must lie in (0, 1), got {}", self.kappa)));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::InvalidGeometry(format!("T must be positive, got {}", self.t_final)));
        }
        Ok(())
    }

    /// Squared coordinate distances `(x_i - x0_i)^2`.
    pub fn sq_dist(&self, x: &[f64]) -> [f64; 2] {
        let mut d = [0.0; 2];
        for a in 0..self.dim() {
            d[a] = (x[a] - self.x0[a]).powi(2);
        }
        d
    }

    /// Samples of the closed box with `samples` points per axis, endpoints included.
    pub fn dense_points(&self, samples: usize) -> Vec<[f64; 2]> {
        let samples = samples.max(2);
        let axis = |a: usize| -> Vec<f64> {
            (0..samples)
                .map(|k| self.lo[a] + (self.hi[a] - self.lo[a]) * k as f64 / (samples - 1) as f64)
                .collect()
        };
        let ax0 = axis(0);
        if self.dim() == 1 {
            return ax0.into_iter().map(|x| [x, 0.0]).collect();
        }
        let ax1 = axis(1);
        ax1.iter().flat_map(|&y| ax0.iter().map(move |&x| [x, y])).collect()
    }

    pub(crate) fn min_max_sq(&self, x: &[f64]) -> (f64, f64) {
        let d = self.sq_dist(x);
        let d = &d[..self.dim()];
        (
            d.iter().cloned().fold(f64::INFINITY, f64::min),
            d.iter().cloned().fold(0.0, f64::max),
        )
    }
}

/// Waiting time, exponent `alpha` and observed faces for a geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTimeReport {
    pub r1: f64,
    pub tstar: f64,
    pub alpha: f64,
    pub gamma0: Vec<Face>,
}

pub fn compute_report(geom: &GeometrySpec) -> Result<ControlTimeReport> {
    compute_report_with(geom, DENSE_SAMPLES)
}

/// Computes `R1`, `T*`, `alpha` and `Γ0` by dense search over the closed box.
pub fn compute_report_with(geom: &GeometrySpec, samples: usize) -> Result<ControlTimeReport> {
    geom.validate()?;
    let n = geom.dim() as f64;
    let mut r1: f64 = 0.0;
    let mut max_ratio: f64 = 0.0;
    let mut min_ratio = f64::INFINITY;
    for x in geom.dense_points(samples) {
        let (mn, mx) = geom.min_max_sq(&x[..geom.dim()]);
        r1 = r1.max(mx.sqrt());
        max_ratio = max_ratio.max(mx / mn);
        min_ratio = min_ratio.min(mn / mx);
    }
    let tstar = 2.0 * n.sqrt() * r1 * max_ratio.sqrt();
    let alpha = geom.kappa * geom.kappa / n * min_ratio;

    let mut gamma0 = Vec::new();
    for axis in 0..geom.dim() {
        for side in [Side::Low, Side::High] {
            let face = Face::new(axis, side);
            let fixed = match side {
                Side::Low => geom.lo[axis],
                Side::High => geom.hi[axis],
            };
            let positive = geom
                .dense_points(samples.min(201))
                .into_iter()
                .map(|mut x| {
                    x[axis] = fixed;
                    x
                })
                .all(|x| face.normal_sign() * (x[axis] - geom.x0[axis]) > 0.0);
            if positive {
                gamma0.push(face);
            }
        }
    }
    Ok(ControlTimeReport { r1, tstar, alpha, gamma0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_waiting_time() {
        let g = GeometrySpec::unit_interval(-0.1, 0.95, 2.5).unwrap();
        let r = compute_report(&g).unwrap();
        assert!((r.r1 - 1.1).abs() < 1e-15);
        assert!((r.tstar - 2.2).abs() < 4.0 * f64::EPSILON);
        assert_eq!(r.gamma0, vec![Face::new(0, Side::High)]);
        assert!((r.alpha - 0.95f64.powi(2)).abs() < 1e-15);

        let g = GeometrySpec::unit_interval(-1.0, 0.95, 5.0).unwrap();
        let r = compute_report(&g).unwrap();
        assert_eq!(r.r1, 2.0);
        assert_eq!(r.tstar, 4.0);
    }

    #[test]
    fn square_observed_faces() {
        let g = GeometrySpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![-0.1, -0.1], 0.9, 4.0).unwrap();
        let r = compute_report_with(&g, 201).unwrap();
        assert_eq!(r.gamma0, vec![Face::new(0, Side::High), Face::new(1, Side::High)]);
        // ratio max/min is attained at the corners (1, 0) and (0, 1)
        let expected = 2.0 * 2f64.sqrt() * 1.1 * (1.21f64 / 0.01).sqrt();
        assert!((r.tstar - expected).abs() < 1e-12);
        assert!(r.tstar > 2.0 * r.r1);
        assert!(r.alpha <= 0.81 / 2.0);
    }

    #[test]
    fn rejects_bad_geometries() {
        assert!(GeometrySpec::unit_interval(0.5, 0.9, 3.0).is_err());
        assert!(GeometrySpec::unit_interval(0.0, 0.9, 3.0).is_err());
        assert!(GeometrySpec::unit_interval(-0.1, 1.0, 3.0).is_err());
        assert!(GeometrySpec::unit_interval(-0.1, 0.9, 0.0).is_err());
        assert!(GeometrySpec::new(vec![0.0], vec![0.0], vec![-1.0], 0.9, 1.0).is_err());
        // outside the box but with one coordinate inside the projection
        assert!(GeometrySpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, -0.2], 0.9, 4.0).is_err());
    }
}
