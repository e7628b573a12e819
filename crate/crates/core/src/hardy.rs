//! The comparison potential `V_ω` and the Hardy and diamagnetic checks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::{dense_resolvent, lowest_eigenvalue};
use crate::error::{Error, Result};
use crate::geometry::{distance_to_cell_boundary, Cell, FluxConfiguration, FluxPoint};
use crate::lattice::{assemble, assemble_comparison, assemble_free, Boundary, Grid};
use crate::rng::aux_stream;

/// `ρ(α) = min_n |n − α|^2`.
pub fn rho(alpha: f64) -> f64 {
    let d = alpha - alpha.round();
    d * d
}

/// Half the smallest distance from a point of the cell to the cell boundary
/// or to another point of the cell; `None` for an empty cell.
pub fn delta_m(points: &[FluxPoint], cell: Cell) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    let mut best = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        best = best.min(distance_to_cell_boundary(p.x, p.y, cell));
        for q in &points[i + 1..] {
            best = best.min((p.x - q.x).hypot(p.y - q.y));
        }
    }
    Some(0.5 * best)
}

/// Disc of the comparison potential around one flux point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialDisc {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    /// `min(ρ(α)/δ^2, 1)`.
    pub height: f64,
}

/// `V_ω` sampled at the Neumann nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonPotential {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub discs: Vec<PotentialDisc>,
    /// `δ_m` per cell in box order; `None` for empty cells.
    pub deltas: Vec<Option<f64>>,
}

impl ComparisonPotential {
    /// Smallest `δ_m` over nonempty cells.
    pub fn min_delta(&self) -> Option<f64> {
        self.deltas.iter().flatten().copied().reduce(f64::min)
    }

    /// Exact value of `V_ω` at a point.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        self.discs
            .iter()
            .find(|d| (x - d.x).hypot(y - d.y) < d.radius)
            .map_or(0.0, |d| d.height)
    }
}

/// Discs of `V_ω` for every flux point of the configuration.
pub fn potential_discs(config: &FluxConfiguration) -> Result<(Vec<PotentialDisc>, Vec<Option<f64>>)> {
    let mut discs = Vec::with_capacity(config.len());
    let mut deltas = Vec::with_capacity(config.geometry().cell_count());
    for cell in config.geometry().cells() {
        let pts = config.points_in_cell(cell)?;
        let delta = delta_m(pts, cell);
        deltas.push(delta);
        if let Some(d) = delta {
            for p in pts {
                discs.push(PotentialDisc { x: p.x, y: p.y, radius: d, height: (rho(p.alpha) / (d * d)).min(1.0) });
            }
        }
    }
    Ok((discs, deltas))
}

/// Node-sampled comparison potential.
pub fn build_potential(config: &FluxConfiguration, grid: &Grid) -> Result<ComparisonPotential> {
    if config.geometry() != grid.geometry {
        return Err(Error::InvalidParameter("grid and configuration boxes differ".into()));
    }
    let (discs, deltas) = potential_discs(config)?;
    let nv = grid.vertices();
    let mut values = vec![0.0; nv * nv];
    let half = grid.geometry.half_width();
    let m = grid.m as f64;
    for d in &discs {
        if d.height == 0.0 {
            continue;
        }
        let lo = |c: f64| (((c - d.radius + half) * m).floor().max(0.0)) as usize;
        let hi = |c: f64| ((((c + d.radius + half) * m).ceil()) as usize).min(nv - 1);
        for j in lo(d.y)..=hi(d.y) {
            let y = grid.coord(j);
            for i in lo(d.x)..=hi(d.x) {
                let x = grid.coord(i);
                if (x - d.x).hypot(y - d.y) < d.radius {
                    values[j * nv + i] = d.height;
                }
            }
        }
    }
    Ok(ComparisonPotential { grid: *grid, values, discs, deltas })
}

/// Outcome of the discrete Hardy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyReport {
    pub e1_magnetic: f64,
    pub e1_comparison: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub min_delta: Option<f64>,
    pub skipped: bool,
    pub pass: bool,
}

/// Minimal `δ_m / h` for a configuration to enter the Hardy comparison.
pub const HARDY_MIN_RESOLUTION: f64 = 1.0;

/// Compares `E_1(H_N)` with `E_1((−Δ_N + V_ω)/2)` on the same grid.
///
/// Passes when the slack is at least `−10 h`. Configurations whose smallest
/// disc radius is below `HARDY_MIN_RESOLUTION · h` are reported as skipped.
pub fn verify_hardy_bound(config: &FluxConfiguration, grid: &Grid) -> Result<HardyReport> {
    let potential = build_potential(config, grid)?;
    let min_delta = potential.min_delta();
    let tolerance = 10.0 * grid.h();
    if let Some(d) = min_delta {
        if d < HARDY_MIN_RESOLUTION * grid.h() {
            return Ok(HardyReport {
                e1_magnetic: f64::NAN,
                e1_comparison: f64::NAN,
                slack: f64::NAN,
                tolerance,
                min_delta,
                skipped: true,
                pass: true,
            });
        }
    }
    let e1_magnetic = lowest_eigenvalue(&assemble(config, grid, Boundary::Neumann)?)?;
    let e1_comparison = lowest_eigenvalue(&assemble_comparison(grid, &potential.values, 1.0)?)?;
    let slack = e1_magnetic - e1_comparison;
    Ok(HardyReport { e1_magnetic, e1_comparison, slack, tolerance, min_delta, skipped: false, pass: slack >= -tolerance })
}

/// Outcome of the resolvent domination checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiamagneticReport {
    /// Smallest entry of `(−Δ_N+λ)^{-1}|u| − |(H+λ)^{-1}u|` over all trials.
    pub min_slack: f64,
    pub hs_magnetic: f64,
    pub hs_free: f64,
    pub entrywise_pass: bool,
    pub hs_pass: bool,
}

/// Entrywise and Hilbert–Schmidt resolvent comparison on the Neumann grid.
pub fn verify_diamagnetic(
    config: &FluxConfiguration,
    grid: &Grid,
    lambda: f64,
    trials: usize,
    seed: u64,
) -> Result<DiamagneticReport> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must be positive")));
    }
    let magnetic = dense_resolvent(&assemble(config, grid, Boundary::Neumann)?, lambda)?;
    let free = dense_resolvent(&assemble_free(grid, Boundary::Neumann), lambda)?;
    let free_re: DMatrix<f64> = free.map(|z| z.re);
    let n = magnetic.nrows();
    let mut rng = aux_stream(seed, 0xD1A);
    let mut min_slack = f64::INFINITY;
    for _ in 0..trials {
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let uc = nalgebra::DVector::from_iterator(n, u.iter().map(|a| Complex64::new(*a, 0.0)));
        let ua = nalgebra::DVector::from_column_slice(&u);
        let lhs = &magnetic * uc;
        let rhs = &free_re * ua;
        for i in 0..n {
            min_slack = min_slack.min(rhs[i] - lhs[i].norm());
        }
    }
    let hs_magnetic = magnetic.norm();
    let hs_free = free_re.norm();
    Ok(DiamagneticReport {
        min_slack,
        hs_magnetic,
        hs_free,
        entrywise_pass: min_slack >= -1e-12,
        hs_pass: hs_magnetic <= hs_free * (1.0 + 1e-12),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoxGeometry, ModelTag};

    fn cfg(points: Vec<FluxPoint>, k: u32) -> FluxConfiguration {
        FluxConfiguration::new(BoxGeometry::new(k), ModelTag::Explicit, 0, points).unwrap()
    }

    #[test]
    fn rho_values() {
        assert_eq!(rho(0.0), 0.0);
        assert_eq!(rho(0.5), 0.25);
        assert!((rho(0.8) - 0.04).abs() < 1e-15);
        assert!((rho(1.3) - rho(0.3)).abs() < 1e-15);
    }

    #[test]
    fn delta_values() {
        assert_eq!(delta_m(&[FluxPoint::new(0.0, 0.0, 0.5)], (0, 0)), Some(0.25));
        let two = [FluxPoint::new(-0.05, 0.0, 0.5), FluxPoint::new(0.05, 0.0, 0.5)];
        assert!((delta_m(&two, (0, 0)).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(delta_m(&[], (0, 0)), None);
    }

    #[test]
    fn potential_heights() {
        let g = Grid::new(BoxGeometry::new(0), 16).unwrap();
        let p = build_potential(&cfg(vec![FluxPoint::new(0.01, 0.02, 0.5)], 0), &g).unwrap();
        assert!(p.values.iter().all(|v| *v == 0.0 || *v == 1.0));
        assert!(p.values.contains(&1.0));
        let zero = build_potential(&cfg(vec![FluxPoint::new(0.01, 0.02, 0.0)], 0), &g).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_flux_hardy_slack_vanishes() {
        let g = Grid::new(BoxGeometry::new(0), 8).unwrap();
        let r = verify_hardy_bound(&cfg(vec![FluxPoint::new(0.01, 0.02, 0.0)], 0), &g).unwrap();
        assert!(r.slack.abs() < 1e-9 && r.pass);
    }

    #[test]
    fn zero_flux_resolvents_coincide() {
        let g = Grid::new(BoxGeometry::new(0), 7).unwrap();
        let r = verify_diamagnetic(&FluxConfiguration::empty(BoxGeometry::new(0)), &g, 1.0, 5, 1).unwrap();
        assert!(r.min_slack >= -1e-12);
        assert!((r.hs_magnetic - r.hs_free).abs() < 1e-10);
    }
}
