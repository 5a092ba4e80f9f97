use crate::error::{Error, Result};

/// Side of a box face along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Low,
    High,
}

/// A face of the box `G`, identified by the axis it is normal to and its side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

impl Face {
    pub fn new(axis: usize, side: Side) -> Self {
        Self { axis, side }
    }

    /// Outward unit normal component along `self.axis`.
    pub fn normal_sign(&self) -> f64 {
        match self.side {
            Side::Low => -1.0,
            Side::High => 1.0,
        }
    }

    pub fn label(&self) -> String {
        let side = match self.side {
            Side::Low => "lo",
            Side::High => "hi",
        };
        format!("x{}_{}", self.axis + 1, side)
    }
}

/// Uniform node grid on a box in one or two dimensions, boundary nodes included.
///
/// Node `(i0, i1)` lives at flat index `i0 + (cells[0] + 1) * i1`. In one dimension
/// the second axis is degenerate with a single node.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceGrid {
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    cells: [usize; 2],
    h: [f64; 2],
    interior: Vec<usize>,
}

impl SpaceGrid {
    pub fn new(lo: &[f64], hi: &[f64], cells: &[usize]) -> Result<Self> {
        let dim = lo.len();
        if !(1..=2).contains(&dim) || hi.len() != dim || cells.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2 with matching bounds/cells (got lo={}, hi={}, cells={})",
                lo.len(),
                hi.len(),
                cells.len()
            )));
        }
        let mut g = SpaceGrid {
            dim,
            lo: [0.0; 2],
            hi: [0.0; 2],
            cells: [0; 2],
            h: [1.0; 2],
            interior: Vec::new(),
        };
        for a in 0..dim {
            if !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
                return Err(Error::InvalidGrid(format!("axis {a} has degenerate interval [{}, {}]", lo[a], hi[a])));
            }
            if cells[a] < 2 {
                return Err(Error::InvalidGrid(format!("axis {a} needs at least 2 cells, got {}", cells[a])));
            }
            g.lo[a] = lo[a];
            g.hi[a] = hi[a];
            g.cells[a] = cells[a];
            g.h[a] = (hi[a] - lo[a]) / cells[a] as f64;
        }
        g.interior = (0..g.node_count()).filter(|&i| !g.is_boundary(i)).collect();
        Ok(g)
    }

    /// Same box refined by an integer factor on every axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let cells: Vec<usize> = (0..self.dim).map(|a| self.cells[a] * factor).collect();
        Self::new(&self.lo[..self.dim], &self.hi[..self.dim], &cells)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo[..self.dim]
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi[..self.dim]
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn min_spacing(&self) -> f64 {
        self.h[..self.dim].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn nodes_per_axis(&self, axis: usize) -> usize {
        if axis < self.dim {
            self.cells[axis] + 1
        } else {
            1
        }
    }

    pub fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.cells[0] + 1
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis(0) * self.nodes_per_axis(1)
    }

    /// Volume weight of one node in discrete integrals.
    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        let n0 = self.cells[0] + 1;
        [idx % n0, idx / n0]
    }

    pub fn index(&self, mi: [usize; 2]) -> usize {
        mi[0] + (self.cells[0] + 1) * mi[1]
    }

    pub fn coord(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        let mut x = [0.0; 2];
        for a in 0..self.dim {
            x[a] = self.lo[a] + mi[a] as f64 * self.h[a];
        }
        x
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        (0..self.dim).any(|a| mi[a] == 0 || mi[a] == self.cells[a])
    }

    /// Flat indices of all interior nodes, in increasing order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.node_count()]
    }

    /// Evaluates `f` at every node, boundary included.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.node_count())
            .map(|i| {
                let x = self.coord(i);
                f(&x[..self.dim])
            })
            .collect()
    }

    /// Evaluates `f` at interior nodes; boundary nodes are set to zero.
    pub fn sample_interior<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let mut u = self.zeros();
        for &i in &self.interior {
            let x = self.coord(i);
            u[i] = f(&x[..self.dim]);
        }
        u
    }

    pub fn faces(&self) -> Vec<Face> {
        (0..self.dim)
            .flat_map(|a| [Face::new(a, Side::Low), Face::new(a, Side::High)])
            .collect()
    }

    /// Boundary nodes on `face` that have an interior neighbour along the normal
    /// (corners are excluded).
    pub fn face_nodes(&self, face: Face) -> Vec<usize> {
        let a = face.axis;
        let fixed = match face.side {
            Side::Low => 0,
            Side::High => self.cells[a],
        };
        if self.dim == 1 {
            return vec![fixed];
        }
        let b = 1 - a;
        (1..self.cells[b])
            .map(|j| {
                let mut mi = [0usize; 2];
                mi[a] = fixed;
                mi[b] = j;
                self.index(mi)
            })
            .collect()
    }

    /// Surface weight of one face node (1 in one dimension).
    pub fn face_measure(&self, face: Face) -> f64 {
        (0..self.dim).filter(|&b| b != face.axis).map(|b| self.h[b]).product()
    }

    /// Interior neighbour of a face node, `depth` steps inward along the normal.
    pub fn inward(&self, face: Face, node: usize, depth: usize) -> usize {
        let s = self.stride(face.axis) * depth;
        match face.side {
            Side::Low => node + s,
            Side::High => node - s,
        }
    }

    /// Mask that is 1 on face nodes of the given faces and 0 elsewhere.
    pub fn face_mask(&self, faces: &[Face]) -> Vec<f64> {
        let mut m = self.zeros();
        for &f in faces {
            for i in self.face_nodes(f) {
                m[i] = 1.0;
            }
        }
        m
    }
}

/// Uniform time grid `t_k = k * dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// Uniform grid on `[0, t_end]` with a step no larger than `dt_max`.
    pub fn covering(t_end: f64, dt_max: f64) -> Result<Self> {
        if !(t_end > 0.0) || !(dt_max > 0.0) {
            return Err(Error::InvalidGrid(format!("need T > 0 and dt > 0 (T={t_end}, dt={dt_max})")));
        }
        // a tiny slack keeps T/dt that are integers up to rounding from gaining a step
        let steps = ((t_end / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(TimeGrid {
            dt: t_end / steps as f64,
            steps,
        })
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn levels(&self) -> usize {
        self.steps + 1
    }
}

/// Space-time grid for `Q = (0, T) x G`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub space: SpaceGrid,
    pub time: TimeGrid,
}

impl Grid {
    pub fn new(space: SpaceGrid, time: TimeGrid) -> Self {
        Self { space, time }
    }

    /// Builds a grid with `dt = cfl * min h`, rounded down to divide `t_end`.
    pub fn with_cfl(space: SpaceGrid, t_end: f64, cfl: f64) -> Result<Self> {
        let time = TimeGrid::covering(t_end, cfl * space.min_spacing())?;
        Ok(Self { space, time })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }
}
