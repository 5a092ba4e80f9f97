//! Named data fields used as initial data, targets and adjoint terminal data.

use crate::adjoint::TerminalData;
use crate::coefficients::Coefficient;
use crate::discretization::SpaceGrid;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A pair of fields `(u, û)` on a box grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataPreset {
    Zero,
    /// `(Π sin(k_a π s_a), 0)` in box coordinates `s`
    Sine { modes: Vec<usize> },
    /// `(B, 0)` with a smooth compactly supported bump `B`
    Bump { center: Vec<f64>, radius: f64 },
    /// `(B, -c ∂_1 B)`: a pulse that moves along the first axis with velocity `c = ±1`
    Travelling { center: Vec<f64>, radius: f64, velocity: f64 },
    /// expressions in `x`, `y` for both fields
    Expression { u: String, uhat: String },
}

/// `exp(1 - 1/(1 - r²))` for `r < 1`, zero outside, with its radial derivative.
fn bump_profile(r: f64) -> (f64, f64) {
    if r >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - r * r;
    let b = (1.0 - 1.0 / q).exp();
    (b, -2.0 * r / (q * q) * b)
}

impl DataPreset {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        match self {
            DataPreset::Zero => Ok(()),
            DataPreset::Expression { u, uhat } => {
                for e in [u, uhat] {
                    if Coefficient::parse(e)?.depends_on_noise() {
                        return bad(format!("data expression `{e}` may not depend on w"));
                    }
                }
                Ok(())
            }
            DataPreset::Sine { modes } => {
                if modes.len() != dim || modes.contains(&0) {
                    return bad(format!("sine preset needs {dim} positive mode numbers, got {modes:?}"));
                }
                Ok(())
            }
            DataPreset::Bump { center, radius } | DataPreset::Travelling { center, radius, .. } => {
                if center.len() != dim || !(*radius > 0.0) {
                    return bad(format!("bump preset needs a {dim}-dimensional center and a positive radius"));
                }
                if let DataPreset::Travelling { velocity, .. } = self {
                    if velocity.abs() != 1.0 {
                        return bad(format!("travelling velocity must be +1 or -1, got {velocity}"));
                    }
                }
                Ok(())
            }
        }
    }

    /// Samples `(u, û)`; boundary values are zeroed.
    pub fn fields(&self, grid: &SpaceGrid) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate(grid.dim())?;
        let (lo, hi) = (grid.lo().to_vec(), grid.hi().to_vec());
        Ok(match self {
            DataPreset::Zero => (grid.zeros(), grid.zeros()),
            DataPreset::Expression { u, uhat } => {
                let (cu, ch) = (Coefficient::parse(u)?, Coefficient::parse(uhat)?);
                let mut fu = grid.zeros();
                let mut fh = grid.zeros();
                for &i in grid.interior() {
                    let x = grid.coord(i);
                    fu[i] = cu.eval(0.0, &x, 0.0)?;
                    fh[i] = ch.eval(0.0, &x, 0.0)?;
                }
                (fu, fh)
            }
            DataPreset::Sine { modes } => {
                let u = grid.sample_interior(|x| {
                    (0..x.len()).map(|a| (modes[a] as f64 * PI * (x[a] - lo[a]) / (hi[a] - lo[a])).sin()).product()
                });
                (u, grid.zeros())
            }
            DataPreset::Bump { center, radius } => {
                let u = grid.sample_interior(|x| bump_profile(dist(x, center) / radius).0);
                (u, grid.zeros())
            }
            DataPreset::Travelling { center, radius, velocity } => {
                let u = grid.sample_interior(|x| bump_profile(dist(x, center) / radius).0);
                let uh = grid.sample_interior(|x| {
                    let r = dist(x, center);
                    if r == 0.0 {
                        return 0.0;
                    }
                    let db = bump_profile(r / radius).1 / radius;
                    -velocity * db * (x[0] - center[0]) / r
                });
                (u, uh)
            }
        })
    }

    pub fn terminal(&self, grid: &SpaceGrid) -> Result<TerminalData> {
        let (z, zh) = self.fields(grid)?;
        TerminalData::new(grid, z, zh)
    }

    pub fn label(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(";");
        match self {
            DataPreset::Zero => "zero".into(),
            DataPreset::Expression { u, uhat } => format!("expr[{u}|{uhat}]"),
            DataPreset::Sine { modes } => format!("sine[{}]", modes.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";")),
            DataPreset::Bump { center, radius } => format!("bump[{}|{radius}]", join(center)),
            DataPreset::Travelling { center, radius, velocity } => format!("travelling[{}|{radius}|{velocity:+}]", join(center)),
        }
    }
}

fn dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Low sine modes and bumps spread over the box, in both travel directions.
pub fn default_family(dim: usize) -> Vec<DataPreset> {
    let mut out = Vec::new();
    for k in 1..=3 {
        out.push(DataPreset::Sine { modes: vec![k; dim] });
    }
    for c in [0.25, 0.5, 0.75] {
        let center = vec![c; dim];
        out.push(DataPreset::Bump { center: center.clone(), radius: 0.15 });
        for velocity in [1.0, -1.0] {
            out.push(DataPreset::Travelling { center: center.clone(), radius: 0.15, velocity });
        }
    }
    out
}
