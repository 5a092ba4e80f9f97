//! Sine-mode projection for interior fields on a box.
//!
//! The discrete Dirichlet Laplacian on a uniform box grid is diagonalised by
//! tensor products of `sin(k π j / N)`, so projecting onto the low modes commutes
//! with `Δ_h` and its inverse, and is symmetric in the volume-weighted inner product.

use super::grid::SpaceGrid;
use std::f64::consts::PI;

/// Orthogonal projection onto sine modes with `k / N <= fraction` on every axis.
#[derive(Debug, Clone)]
pub struct LowPass {
    fraction: f64,
    tables: Vec<Table>,
}

#[derive(Debug, Clone)]
struct Table {
    n: usize,
    keep: usize,
    // sines[k-1][j-1] = sin(k π j / n)
    sines: Vec<Vec<f64>>,
}

impl LowPass {
    pub fn new(grid: &SpaceGrid, fraction: f64) -> Self {
        let fraction = fraction.clamp(0.0, 1.0);
        let tables = (0..grid.dim())
            .map(|a| {
                let n = grid.cells(a);
                let keep = ((fraction * n as f64).floor() as usize).min(n - 1);
                let sines = (1..=keep)
                    .map(|k| (1..n).map(|j| (PI * (k * j) as f64 / n as f64).sin()).collect())
                    .collect();
                Table { n, keep, sines }
            })
            .collect();
        Self { fraction, tables }
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    /// Highest retained mode number on `axis`.
    pub fn kept_modes(&self, axis: usize) -> usize {
        self.tables[axis].keep
    }

    pub fn apply(&self, grid: &SpaceGrid, u: &[f64]) -> Vec<f64> {
        let mut out = grid.zeros();
        for &i in grid.interior() {
            out[i] = u[i];
        }
        for (axis, table) in self.tables.iter().enumerate() {
            let other = if grid.dim() == 2 { 1 - axis } else { 1 };
            let lines = if grid.dim() == 2 { grid.cells(other) - 1 } else { 1 };
            let mut line = vec![0.0; table.n - 1];
            for l in 0..lines {
                let base = |j: usize| {
                    let mut mi = [0usize; 2];
                    mi[axis] = j;
                    if grid.dim() == 2 {
                        mi[other] = l + 1;
                    }
                    grid.index(mi)
                };
                for j in 1..table.n {
                    line[j - 1] = out[base(j)];
                }
                let projected = table.project(&line);
                for j in 1..table.n {
                    out[base(j)] = projected[j - 1];
                }
            }
        }
        out
    }
}

impl Table {
    fn project(&self, line: &[f64]) -> Vec<f64> {
        let scale = 2.0 / self.n as f64;
        let mut out = vec![0.0; line.len()];
        for s in &self.sines {
            let c = scale * s.iter().zip(line).map(|(a, b)| a * b).sum::<f64>();
            for (o, v) in out.iter_mut().zip(s) {
                *o += c * v;
            }
        }
        out
    }
}
