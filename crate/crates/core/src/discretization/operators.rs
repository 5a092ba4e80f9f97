use super::grid::{Face, SpaceGrid};
use crate::error::{Error, Result};

/// Relative residual target for Poisson solves.
pub const POISSON_TOL: f64 = 1e-10;

/// Relative residual target for the implicit time-step systems.
const STEP_TOL: f64 = 1e-14;

/// Discrete Dirichlet norms of an interior field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h01: f64,
    pub hm1: f64,
}

/// Second-order `2n+1`-point Laplacian on interior nodes; boundary entries are zero.
///
/// Boundary values of `u` enter through the stencil, so nonhomogeneous Dirichlet
/// data is honoured.
pub fn laplacian(grid: &SpaceGrid, u: &[f64]) -> Vec<f64> {
    let mut out = grid.zeros();
    laplacian_into(grid, u, &mut out);
    out
}

pub fn laplacian_into(grid: &SpaceGrid, u: &[f64], out: &mut [f64]) {
    let dim = grid.dim();
    let mut inv_h2 = [0.0; 2];
    let mut stride = [0usize; 2];
    for a in 0..dim {
        inv_h2[a] = 1.0 / (grid.spacing(a) * grid.spacing(a));
        stride[a] = grid.stride(a);
    }
    for v in out.iter_mut() {
        *v = 0.0;
    }
    for &i in grid.interior() {
        let mut acc = 0.0;
        for a in 0..dim {
            let s = stride[a];
            acc += (u[i - s] - 2.0 * u[i] + u[i + s]) * inv_h2[a];
        }
        out[i] = acc;
    }
}

/// Volume-weighted inner product over interior nodes.
pub fn dot(grid: &SpaceGrid, u: &[f64], v: &[f64]) -> f64 {
    grid.interior().iter().map(|&i| u[i] * v[i]).sum::<f64>() * grid.cell_volume()
}

pub fn l2_norm(grid: &SpaceGrid, u: &[f64]) -> f64 {
    dot(grid, u, u).sqrt()
}

/// Squared norm of the one-sided difference gradient, summed over every grid edge.
///
/// For fields vanishing on the boundary this equals `<-Δ_h u, u>` exactly.
pub fn grad_norm_sq(grid: &SpaceGrid, u: &[f64]) -> f64 {
    grad_dot(grid, u, u)
}

pub fn grad_dot(grid: &SpaceGrid, u: &[f64], v: &[f64]) -> f64 {
    let dim = grid.dim();
    let mut total = 0.0;
    for a in 0..dim {
        let s = grid.stride(a);
        let inv_h2 = 1.0 / (grid.spacing(a) * grid.spacing(a));
        let mut acc = 0.0;
        for i in 0..grid.node_count() {
            let mi = grid.multi_index(i);
            if mi[a] == grid.cells(a) {
                continue;
            }
            acc += (u[i + s] - u[i]) * (v[i + s] - v[i]);
        }
        total += acc * inv_h2;
    }
    total * grid.cell_volume()
}

/// Solves `-Δ_h u = f` with `u = 0` on the boundary by conjugate gradients.
pub fn poisson_solve(grid: &SpaceGrid, f: &[f64]) -> Result<Vec<f64>> {
    let rhs: Vec<f64> = masked_interior(grid, f);
    cg(grid, &rhs, POISSON_TOL, 20 * grid.interior().len() + 100, |u, out| {
        laplacian_into(grid, u, out);
        for &i in grid.interior() {
            out[i] = -out[i];
        }
    })
}

pub fn norms(grid: &SpaceGrid, u: &[f64]) -> Result<Norms> {
    let u = masked_interior(grid, u);
    let l2 = l2_norm(grid, &u);
    let h01 = grad_norm_sq(grid, &u).sqrt();
    let hm1 = hm1_norm(grid, &u)?;
    Ok(Norms { l2, h01, hm1 })
}

pub fn hm1_norm(grid: &SpaceGrid, u: &[f64]) -> Result<f64> {
    let w = poisson_solve(grid, u)?;
    Ok(dot(grid, u, &w).max(0.0).sqrt())
}

/// Copy of `u` with boundary entries zeroed.
pub fn masked_interior(grid: &SpaceGrid, u: &[f64]) -> Vec<f64> {
    let mut out = grid.zeros();
    for &i in grid.interior() {
        out[i] = u[i];
    }
    out
}

/// Solves `(I - c (Δ_h + diag(a))) x = rhs` on interior nodes with zero Dirichlet data.
///
/// Tridiagonal elimination in one dimension, conjugate gradients in two. Requires
/// `1 - c * a > 0` so the operator stays positive definite.
pub fn solve_shifted(grid: &SpaceGrid, c: f64, a: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    if grid.dim() == 1 {
        return Ok(thomas_shifted(grid, c, a, rhs));
    }
    let b = masked_interior(grid, rhs);
    cg(grid, &b, STEP_TOL, 10 * grid.interior().len() + 100, |u, out| {
        laplacian_into(grid, u, out);
        for &i in grid.interior() {
            out[i] = u[i] - c * (out[i] + a[i] * u[i]);
        }
    })
}

fn thomas_shifted(grid: &SpaceGrid, c: f64, a: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = grid.cells(0) - 1;
    let off = -c / (grid.spacing(0) * grid.spacing(0));
    let mut diag: Vec<f64> = (1..=n).map(|j| 1.0 - 2.0 * off - c * a[j]).collect();
    let mut d: Vec<f64> = (1..=n).map(|j| rhs[j]).collect();
    for k in 1..n {
        let m = off / diag[k - 1];
        diag[k] -= m * off;
        d[k] -= m * d[k - 1];
    }
    let mut out = grid.zeros();
    let mut next = 0.0;
    for k in (0..n).rev() {
        let val = (d[k] - off * next) / diag[k];
        out[k + 1] = val;
        next = val;
    }
    out
}

/// Matrix-free conjugate gradients over interior nodes for an SPD operator.
fn cg<F: FnMut(&[f64], &mut [f64])>(
    grid: &SpaceGrid,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    mut apply: F,
) -> Result<Vec<f64>> {
    let interior = grid.interior();
    let ip = |u: &[f64], v: &[f64]| interior.iter().map(|&i| u[i] * v[i]).sum::<f64>();
    let mut x = grid.zeros();
    let bnorm = ip(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = grid.zeros();
    let mut rr = ip(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let pap = ip(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for &i in interior {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = ip(&r, &r);
        let beta = rr_new / rr;
        for &i in interior {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    if rr.sqrt() <= tol * bnorm {
        return Ok(x);
    }
    Err(Error::CgNotConverged {
        iterations: max_iter,
        residual: rr.sqrt() / bnorm,
    })
}

/// Outward normal derivative on each face by the second-order one-sided formula.
///
/// Returns one vector per face, aligned with [`SpaceGrid::face_nodes`].
pub fn normal_trace(grid: &SpaceGrid, u: &[f64], faces: &[Face]) -> Vec<Vec<f64>> {
    faces
        .iter()
        .map(|&f| {
            let h = grid.spacing(f.axis);
            grid.face_nodes(f)
                .into_iter()
                .map(|b| {
                    let u1 = u[grid.inward(f, b, 1)];
                    let u2 = u[grid.inward(f, b, 2)];
                    (3.0 * u[b] - 4.0 * u1 + u2) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

/// Outward normal derivative by the one-cell difference `(u_b - u_1) / h`.
///
/// This is the flux that the Laplacian stencil exchanges with boundary data, so
/// it is the trace that makes the discrete forward/adjoint duality exact.
pub fn flux_trace(grid: &SpaceGrid, u: &[f64], faces: &[Face]) -> Vec<Vec<f64>> {
    faces
        .iter()
        .map(|&f| {
            let h = grid.spacing(f.axis);
            grid.face_nodes(f)
                .into_iter()
                .map(|b| (u[b] - u[grid.inward(f, b, 1)]) / h)
                .collect()
        })
        .collect()
}

/// Surface integral `∫ p q dΓ` over the listed faces for face-indexed values.
pub fn face_dot(grid: &SpaceGrid, faces: &[Face], p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    faces
        .iter()
        .zip(p.iter().zip(q.iter()))
        .map(|(&f, (pf, qf))| grid.face_measure(f) * pf.iter().zip(qf).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::grid::Side;
    use std::f64::consts::PI;

    fn unit(n: usize) -> SpaceGrid {
        SpaceGrid::new(&[0.0], &[1.0], &[n]).unwrap()
    }

    #[test]
    fn laplacian_of_constant_and_quadratic() {
        let g = unit(10);
        let c = g.sample(|_| 3.0);
        assert!(laplacian(&g, &c).iter().all(|v| v.abs() < 1e-12));
        let q = g.sample(|x| x[0] * (1.0 - x[0]));
        let lq = laplacian(&g, &q);
        for &i in g.interior() {
            assert!((lq[i] + 2.0).abs() < 1e-11);
        }
    }

    #[test]
    fn laplacian_discrete_eigenvalue() {
        let n = 16;
        let g = unit(n);
        let h = 1.0 / n as f64;
        let u = g.sample(|x| (PI * x[0]).sin());
        let lu = laplacian(&g, &u);
        let lam = -(4.0 / (h * h)) * (PI * h / 2.0).sin().powi(2);
        for &i in g.interior() {
            assert!((lu[i] - lam * u[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn poisson_zero_and_quadratic() {
        let g = unit(20);
        let z = poisson_solve(&g, &g.zeros()).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        let f = g.sample_interior(|_| 2.0);
        let u = poisson_solve(&g, &f).unwrap();
        for i in 0..g.node_count() {
            let x = g.coord(i)[0];
            assert!((u[i] - x * (1.0 - x)).abs() < 1e-10);
        }
    }

    #[test]
    fn poisson_round_trip_2d() {
        let g = SpaceGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[16, 12]).unwrap();
        let f = g.sample_interior(|x| (3.0 * x[0]).exp() * (x[1] - 0.3).powi(2) + 1.0);
        let u = poisson_solve(&g, &f).unwrap();
        let lu = laplacian(&g, &u);
        let err: f64 = g.interior().iter().map(|&i| (lu[i] + f[i]).powi(2)).sum::<f64>().sqrt();
        let fn_: f64 = g.interior().iter().map(|&i| f[i].powi(2)).sum::<f64>().sqrt();
        assert!(err / fn_ < 1e-9, "{}", err / fn_);
    }

    #[test]
    fn summation_by_parts_duality_and_symmetry() {
        let g = SpaceGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[9, 7]).unwrap();
        let u = g.sample_interior(|x| (x[0] * 7.0).sin() + x[1] * x[0]);
        let v = g.sample_interior(|x| (x[1] * 5.0).cos() * x[0]);
        let lhs = -dot(&g, &laplacian(&g, &u), &v);
        let rhs = grad_dot(&g, &u, &v);
        assert!((lhs - rhs).abs() < 1e-11 * rhs.abs().max(1.0));
        let sym = dot(&g, &laplacian(&g, &u), &v) - dot(&g, &u, &laplacian(&g, &v));
        assert!(sym.abs() < 1e-10);
        assert!(dot(&g, &laplacian(&g, &u), &u) < 0.0);
    }

    #[test]
    fn norms_of_zero_and_sine_mode() {
        let g = unit(64);
        let n0 = norms(&g, &g.zeros()).unwrap();
        assert_eq!((n0.l2, n0.h01, n0.hm1), (0.0, 0.0, 0.0));
        let mut prev_err = f64::INFINITY;
        for n in [32, 64, 128] {
            let g = unit(n);
            let u = g.sample(|x| (PI * x[0]).sin());
            let nm = norms(&g, &u).unwrap();
            let err = (nm.h01 / nm.l2 - PI).abs() + (nm.hm1 / nm.l2 - 1.0 / PI).abs();
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err < 1e-3);
    }

    #[test]
    fn hm1_bounded_by_smallest_eigenvalue() {
        let n = 40;
        let g = unit(n);
        let h = 1.0 / n as f64;
        let lam1 = (4.0 / (h * h)) * (PI * h / 2.0).sin().powi(2);
        let u = g.sample_interior(|x| (13.0 * x[0]).sin() + x[0].powi(3));
        let nm = norms(&g, &u).unwrap();
        assert!(nm.hm1 <= nm.l2 / lam1.sqrt() + 1e-12);
    }

    #[test]
    fn traces() {
        let faces = [Face::new(0, Side::Low), Face::new(0, Side::High)];
        let g = unit(50);
        let q = g.sample(|x| x[0] * (1.0 - x[0]));
        let tr = normal_trace(&g, &q, &faces);
        assert!((tr[0][0] + 1.0).abs() < 1e-12);
        assert!((tr[1][0] + 1.0).abs() < 1e-12);
        let z = normal_trace(&g, &g.zeros(), &faces);
        assert_eq!(z[0][0], 0.0);
        let mut errs = Vec::new();
        for n in [20, 40, 80] {
            let g = unit(n);
            let s = g.sample(|x| (PI * x[0]).sin());
            let tr = normal_trace(&g, &s, &faces[1..]);
            errs.push((tr[0][0] + PI).abs());
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.9);
        }
    }

    #[test]
    fn shifted_solve_matches_operator() {
        for g in [unit(30), SpaceGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[10, 12]).unwrap()] {
            let a = g.sample(|x| 1.0 + x[0]);
            let rhs = g.sample_interior(|x| (4.0 * x[0]).sin() + 0.5);
            let c = 0.01;
            let x = solve_shifted(&g, c, &a, &rhs).unwrap();
            let lx = laplacian(&g, &x);
            for &i in g.interior() {
                let r = x[i] - c * (lx[i] + a[i] * x[i]) - rhs[i];
                assert!(r.abs() < 1e-12, "{r}");
            }
        }
    }
}
