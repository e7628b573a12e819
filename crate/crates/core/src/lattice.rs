//! Finite-difference magnetic Laplacians with Peierls phases.
//!
//! The box `Q_k` carries the vertex grid `x_i = -(k+1/2) + i h`, `h = 1/M`,
//! `i = 0..=L M`. The Neumann operator lives on all nodes with missing links
//! dropped; the Dirichlet operator lives on the interior nodes and is the
//! corresponding principal submatrix, so the two bracket each other exactly.
//! Both are `(1/h^2) Σ_edges |u(x) − e^{−iθ_{x→y}} u(y)|^2` as forms.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::winding;
use crate::geometry::{BoxGeometry, FluxConfiguration, FluxPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

/// Uniform vertex grid on a box with `M` subdivisions per unit length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub geometry: BoxGeometry,
    pub m: u32,
}

impl Grid {
    pub fn new(geometry: BoxGeometry, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("mesh subdivisions M must be at least 1".into()));
        }
        Ok(Self { geometry, m })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Number of mesh intervals along one edge, `L M`.
    pub fn intervals(&self) -> usize {
        self.geometry.edge() as usize * self.m as usize
    }

    /// Number of vertices along one edge.
    pub fn vertices(&self) -> usize {
        self.intervals() + 1
    }

    /// Coordinate of the `i`-th grid line.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 / self.m as f64 - self.geometry.half_width()
    }

    /// Side length of the node array for a boundary condition.
    pub fn side_nodes(&self, boundary: Boundary) -> usize {
        match boundary {
            Boundary::Neumann => self.vertices(),
            Boundary::Dirichlet => self.intervals() - 1,
        }
    }

    fn first_index(boundary: Boundary) -> usize {
        match boundary {
            Boundary::Neumann => 0,
            Boundary::Dirichlet => 1,
        }
    }
}

/// Shifts flux coordinates lying on a grid line by `1e-6 h` toward the cell centre.
///
/// Returns the adjusted points and the number of moved coordinates.
pub fn move_off_grid_lines(points: &[FluxPoint], grid: &Grid) -> (Vec<FluxPoint>, usize) {
    let h = grid.h();
    let half = grid.geometry.half_width();
    let mut moved = 0;
    let adjust = |v: f64, centre: f64, moved: &mut usize| -> f64 {
        let s = (v + half) * grid.m as f64;
        let near = s.round();
        if (s - near).abs() * h <= 1e-9 * h {
            *moved += 1;
            let dir = if centre - v >= 0.0 { 1.0 } else { -1.0 };
            v + dir * 1e-6 * h
        } else {
            v
        }
    };
    let out = points
        .iter()
        .map(|p| {
            let cell = p.cell();
            let mut q = *p;
            q.x = adjust(p.x, cell.0 as f64, &mut moved);
            q.y = adjust(p.y, cell.1 as f64, &mut moved);
            q
        })
        .collect();
    if moved > 0 {
        log::warn!("moved {moved} flux coordinate(s) off grid lines by 1e-6 h");
    }
    (out, moved)
}

/// Sparse Hermitian five-point operator on a rectangular node array.
///
/// Nodes are numbered row-major, `p = j nx + i`. `east[p]` is the entry
/// `H[p, p+1]` and `north[p]` is `H[p, p+nx]`; entries across the array edge
/// are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeOperator {
    pub nx: usize,
    pub ny: usize,
    pub diag: Vec<f64>,
    pub east: Vec<Complex64>,
    pub north: Vec<Complex64>,
    pub grid: Option<Grid>,
    pub boundary: Option<Boundary>,
    /// Flux coordinates moved off grid lines during assembly.
    pub perturbed: usize,
}

/// The magnetic Laplacian is a lattice operator with Peierls hopping.
pub type MagneticLaplacian = LatticeOperator;

impl LatticeOperator {
    pub fn dim(&self) -> usize {
        self.nx * self.ny
    }

    /// True when every hopping amplitude is real.
    pub fn is_real(&self) -> bool {
        self.east.iter().chain(&self.north).all(|z| z.im == 0.0)
    }

    /// Gershgorin bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        let mut best: f64 = 0.0;
        for p in 0..self.dim() {
            let (i, j) = (p % self.nx, p / self.nx);
            let mut s = self.diag[p].abs() + self.east[p].norm() + self.north[p].norm();
            if i > 0 {
                s += self.east[p - 1].norm();
            }
            if j > 0 {
                s += self.north[p - self.nx].norm();
            }
            best = best.max(s);
        }
        best
    }

    /// Matrix-free product `H u`.
    pub fn apply(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.apply_into(u, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, u: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let n = self.dim();
        if u.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: u.len() });
        }
        if out.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: out.len() });
        }
        let nx = self.nx;
        for p in 0..n {
            let mut acc = u[p] * self.diag[p];
            let i = p % nx;
            if i + 1 < nx {
                acc += self.east[p] * u[p + 1];
            }
            if i > 0 {
                acc += self.east[p - 1].conj() * u[p - 1];
            }
            if p + nx < n {
                acc += self.north[p] * u[p + nx];
            }
            if p >= nx {
                acc += self.north[p - nx].conj() * u[p - nx];
            }
            out[p] = acc;
        }
        Ok(())
    }

    /// Real-arithmetic product, valid when [`LatticeOperator::is_real`].
    pub fn apply_real(&self, u: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let nx = self.nx;
        for p in 0..n {
            let mut acc = u[p] * self.diag[p];
            let i = p % nx;
            if i + 1 < nx {
                acc += self.east[p].re * u[p + 1];
            }
            if i > 0 {
                acc += self.east[p - 1].re * u[p - 1];
            }
            if p + nx < n {
                acc += self.north[p].re * u[p + nx];
            }
            if p >= nx {
                acc += self.north[p - nx].re * u[p - nx];
            }
            out[p] = acc;
        }
    }

    /// Coordinate-format entries `(row, col, re, im)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64, f64)> {
        let n = self.dim();
        let mut t = Vec::with_capacity(5 * n);
        for p in 0..n {
            t.push((p, p, self.diag[p], 0.0));
            if p % self.nx + 1 < self.nx {
                let e = self.east[p];
                t.push((p, p + 1, e.re, e.im));
                t.push((p + 1, p, e.re, -e.im));
            }
            if p + self.nx < n {
                let e = self.north[p];
                t.push((p, p + self.nx, e.re, e.im));
                t.push((p + self.nx, p, e.re, -e.im));
            }
        }
        t
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for (r, c, re, im) in self.triplets() {
            m[(r, c)] = Complex64::new(re, im);
        }
        m
    }

    pub fn to_dense_real(&self) -> Option<DMatrix<f64>> {
        if !self.is_real() {
            return None;
        }
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (r, c, re, _) in self.triplets() {
            m[(r, c)] = re;
        }
        Some(m)
    }

    /// `a H + diag(b)` with the same sparsity.
    pub fn scaled_plus_diagonal(&self, a: f64, b: &[f64]) -> Result<Self> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: b.len() });
        }
        let mut op = self.clone();
        for (d, v) in op.diag.iter_mut().zip(b) {
            *d = a * *d + v;
        }
        op.east.iter_mut().for_each(|z| *z *= a);
        op.north.iter_mut().for_each(|z| *z *= a);
        Ok(op)
    }

    /// Node coordinates in operator order.
    pub fn node_coords(&self) -> Option<Vec<(f64, f64)>> {
        let grid = self.grid?;
        let first = Grid::first_index(self.boundary?);
        Some(
            (0..self.dim())
                .map(|p| (grid.coord(p % self.nx + first), grid.coord(p / self.nx + first)))
                .collect(),
        )
    }
}

/// Peierls magnetic Laplacian of `config` on `grid`.
pub fn assemble(config: &FluxConfiguration, grid: &Grid, boundary: Boundary) -> Result<LatticeOperator> {
    if config.geometry() != grid.geometry {
        return Err(Error::InvalidParameter(format!(
            "grid box k={} does not match configuration box k={}",
            grid.geometry.k(),
            config.geometry().k()
        )));
    }
    let (points, perturbed) = move_off_grid_lines(config.points(), grid);
    let fluxes: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.flux() != 0.0)
        .map(|p| (p.x, p.y, p.flux()))
        .collect();
    let mut op = free_operator(grid, boundary);
    op.perturbed = perturbed;
    if fluxes.is_empty() {
        return Ok(op);
    }
    let h2 = grid.h() * grid.h();
    let first = Grid::first_index(boundary);
    let (nx, ny) = (op.nx, op.ny);
    let phase = |ax: f64, ay: f64, bx: f64, by: f64| -> f64 {
        let a = Complex64::new(ax, ay);
        let b = Complex64::new(bx, by);
        fluxes.iter().map(|&(gx, gy, f)| f * winding(gx, gy, a, b)).sum()
    };
    for j in 0..ny {
        let y = grid.coord(j + first);
        for i in 0..nx {
            let x = grid.coord(i + first);
            let p = j * nx + i;
            if i + 1 < nx {
                let th = phase(x, y, grid.coord(i + 1 + first), y);
                op.east[p] = -Complex64::from_polar(1.0, -th) / h2;
            }
            if j + 1 < ny {
                let th = phase(x, y, x, grid.coord(j + 1 + first));
                op.north[p] = -Complex64::from_polar(1.0, -th) / h2;
            }
        }
    }
    Ok(op)
}

/// Free Laplacian `−Δ` on the grid.
pub fn assemble_free(grid: &Grid, boundary: Boundary) -> LatticeOperator {
    free_operator(grid, boundary)
}

fn free_operator(grid: &Grid, boundary: Boundary) -> LatticeOperator {
    let n = grid.side_nodes(boundary);
    let h2 = grid.h() * grid.h();
    let hop = Complex64::new(-1.0 / h2, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut diag = vec![0.0; n * n];
    let mut east = vec![zero; n * n];
    let mut north = vec![zero; n * n];
    for j in 0..n {
        for i in 0..n {
            let p = j * n + i;
            diag[p] = match boundary {
                Boundary::Dirichlet => 4.0 / h2,
                Boundary::Neumann => {
                    let deg = [i > 0, i + 1 < n, j > 0, j + 1 < n].iter().filter(|b| **b).count();
                    deg as f64 / h2
                }
            };
            if i + 1 < n {
                east[p] = hop;
            }
            if j + 1 < n {
                north[p] = hop;
            }
        }
    }
    LatticeOperator { nx: n, ny: n, diag, east, north, grid: Some(*grid), boundary: Some(boundary), perturbed: 0 }
}

/// `(1/2)(−Δ_N + t diag V)` with `V` given at the Neumann nodes.
pub fn assemble_comparison(grid: &Grid, potential: &[f64], t: f64) -> Result<LatticeOperator> {
    if !(t.abs() <= 1.0) {
        return Err(Error::InvalidParameter(format!("coupling t = {t} must satisfy |t| <= 1")));
    }
    let free = free_operator(grid, Boundary::Neumann);
    let shifted: Vec<f64> = potential.iter().map(|v| 0.5 * t * v).collect();
    free.scaled_plus_diagonal(0.5, &shifted)
}

/// Closed-form eigenvalues of the free Dirichlet operator on an `n × n`
/// interior grid with spacing `h`, in ascending order.
pub fn free_dirichlet_eigenvalues(n: usize, h: f64) -> Vec<f64> {
    let big_n = (n + 1) as f64;
    let one: Vec<f64> = (1..=n)
        .map(|p| 4.0 / (h * h) * (std::f64::consts::PI * p as f64 / (2.0 * big_n)).sin().powi(2))
        .collect();
    let mut all: Vec<f64> = one.iter().flat_map(|a| one.iter().map(move |b| a + b)).collect();
    all.sort_by(f64::total_cmp);
    all
}

/// Closed-form eigenvalues of the free Neumann (dropped-link) operator on an
/// `n × n` vertex array with spacing `h`, in ascending order.
pub fn free_neumann_eigenvalues(n: usize, h: f64) -> Vec<f64> {
    let one: Vec<f64> = (0..n)
        .map(|p| 4.0 / (h * h) * (std::f64::consts::PI * p as f64 / (2.0 * n as f64)).sin().powi(2))
        .collect();
    let mut all: Vec<f64> = one.iter().flat_map(|a| one.iter().map(move |b| a + b)).collect();
    all.sort_by(f64::total_cmp);
    all
}
