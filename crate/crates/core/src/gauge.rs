//! The singular gauge field of a finite flux set.
//!
//! With `ψ(z) = Σ α_γ / (z − γ)` and `Ψ(z) = Π |z − γ|^{α_γ}`, the vector
//! potential is `a = (Im ψ, Re ψ) = Σ α_γ ∇ arg(z − γ)`, so line integrals of
//! `a` are sums of winding angles.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{FluxConfiguration, FluxPoint};

/// Gauge field generated by the fluxes of one box (the in-box gauge).
#[derive(Debug, Clone)]
pub struct GaugeField {
    points: Vec<FluxPoint>,
}

impl GaugeField {
    pub fn new(config: &FluxConfiguration) -> Self {
        Self { points: config.points().to_vec() }
    }

    pub fn from_points(points: Vec<FluxPoint>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[FluxPoint] {
        &self.points
    }

    /// `ψ(z)`; zero when there are no fluxes.
    pub fn psi(&self, z: Complex64) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, p) in self.points.iter().enumerate() {
            let f = p.flux();
            if f == 0.0 {
                continue;
            }
            let d = z - p.z();
            if d.re == 0.0 && d.im == 0.0 {
                return Err(Error::AtFluxPoint(i));
            }
            acc += f / d;
        }
        Ok(acc)
    }

    /// `log Ψ(z) = Σ α_γ log|z − γ|`. Fails exactly at a flux point of nonzero flux.
    pub fn log_psi_modulus(&self, z: Complex64) -> Result<f64> {
        let mut acc = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            let f = p.flux();
            if f == 0.0 {
                continue;
            }
            let d = z - p.z();
            if d.re == 0.0 && d.im == 0.0 {
                return Err(Error::AtFluxPoint(i));
            }
            acc += 0.5 * f * d.norm_sqr().ln();
        }
        Ok(acc)
    }

    /// `(Ψ(z), ψ(z))` in one pass.
    pub fn psi_pair(&self, z: Complex64) -> Result<(f64, Complex64)> {
        Ok((self.log_psi_modulus(z)?.exp(), self.psi(z)?))
    }

    /// `∫_a^b a·dl` along the straight segment from `a` to `b`.
    pub fn link_phase(&self, a: Complex64, b: Complex64) -> Result<f64> {
        let len = (b - a).norm();
        if len == 0.0 {
            return Err(Error::InvalidParameter("degenerate segment".into()));
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.flux() != 0.0 && distance_to_segment(p.z(), a, b) <= 1e-12 * len {
                return Err(Error::SegmentThroughFlux(i));
            }
        }
        Ok(self.link_phase_unchecked(a, b))
    }

    /// As [`GaugeField::link_phase`] without the through-flux test.
    pub fn link_phase_unchecked(&self, a: Complex64, b: Complex64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.flux() != 0.0)
            .map(|p| p.flux() * winding(p.x, p.y, a, b))
            .sum()
    }

    /// Counter-clockwise circulation around the square with lower-left corner
    /// `(x0, y0)` and edge `side`.
    pub fn plaquette_phase(&self, x0: f64, y0: f64, side: f64) -> Result<f64> {
        let c = [
            Complex64::new(x0, y0),
            Complex64::new(x0 + side, y0),
            Complex64::new(x0 + side, y0 + side),
            Complex64::new(x0, y0 + side),
        ];
        let mut total = 0.0;
        for i in 0..4 {
            total += self.link_phase(c[i], c[(i + 1) % 4])?;
        }
        Ok(total)
    }
}

/// `arg((b − γ)/(a − γ))`: the angle swept by `z − γ` along the segment.
#[inline]
pub(crate) fn winding(gx: f64, gy: f64, a: Complex64, b: Complex64) -> f64 {
    let (ax, ay) = (a.re - gx, a.im - gy);
    let (bx, by) = (b.re - gx, b.im - gy);
    (ax * by - ay * bx).atan2(ax * bx + ay * by)
}

fn distance_to_segment(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let t = (((p - a) * ab.conj()).re / ab.norm_sqr()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Copy of `config` with the flux of point `index` shifted by the integer `n`.
pub fn gauge_shift(config: &FluxConfiguration, index: usize, n: i64) -> Result<FluxConfiguration> {
    let mut points = config.points().to_vec();
    let len = points.len();
    let p = points
        .get_mut(index)
        .ok_or_else(|| Error::InvalidParameter(format!("point index {index} out of range ({len} points)")))?;
    p.shift += n;
    config.with_points(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(x: f64, y: f64) -> Complex64 {
        Complex64::new(x, y)
    }

    #[test]
    fn psi_values() {
        let g = GaugeField::from_points(vec![FluxPoint::new(0.0, 0.0, 0.5)]);
        assert_eq!(g.psi(c(1.0, 0.0)).unwrap(), c(0.5, 0.0));
        assert_eq!(GaugeField::from_points(vec![]).psi(c(0.3, 0.1)).unwrap(), c(0.0, 0.0));
        assert!(matches!(g.psi(c(0.0, 0.0)), Err(Error::AtFluxPoint(0))));
        let g2 = GaugeField::from_points(vec![FluxPoint::new(0.0, 0.0, 0.3), FluxPoint::new(1.0, 0.0, 0.2)]);
        let z = c(0.0, 1.0);
        let expected = c(0.3, 0.0) / (z - c(0.0, 0.0)) + c(0.2, 0.0) / (z - c(1.0, 0.0));
        assert!((g2.psi(z).unwrap() - expected).norm() < 1e-15);
    }

    #[test]
    fn log_modulus() {
        let g = GaugeField::from_points(vec![FluxPoint::new(0.0, 0.0, 0.5)]);
        assert!((g.log_psi_modulus(c(2.0, 0.0)).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(GaugeField::from_points(vec![]).log_psi_modulus(c(1.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn quarter_turn_phase() {
        let g = GaugeField::from_points(vec![FluxPoint::new(0.0, 0.0, 0.4)]);
        let ph = g.link_phase(c(1.0, 0.0), c(0.0, 1.0)).unwrap();
        assert!((ph - 0.4 * PI / 2.0).abs() < 1e-15);
        let back = g.link_phase(c(0.0, 1.0), c(1.0, 0.0)).unwrap();
        assert_eq!(ph, -back);
        assert!(g.link_phase(c(-1.0, 0.0), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn far_flux_phase_decays() {
        let g = GaugeField::from_points(vec![FluxPoint::new(0.0, 0.0, 0.7)]);
        for d in [10.0, 100.0, 1000.0] {
            let ph = g.link_phase(c(d, 0.0), c(d, 0.1)).unwrap();
            assert!(ph.abs() <= 0.7 * 0.1 / d + 1e-15);
        }
    }

    #[test]
    fn plaquette_circulation() {
        let g = GaugeField::from_points(vec![FluxPoint::new(0.3, 0.3, 0.25)]);
        assert!((g.plaquette_phase(0.0, 0.0, 1.0).unwrap() - PI / 2.0).abs() < 1e-14);
        assert!(g.plaquette_phase(1.0, 0.0, 1.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn shift_changes_circulation_by_two_pi() {
        use crate::geometry::{BoxGeometry, ModelTag};
        let cfg = FluxConfiguration::new(BoxGeometry::new(0), ModelTag::Explicit, 0, vec![FluxPoint::new(0.1, 0.1, 0.3)])
            .unwrap();
        let shifted = gauge_shift(&cfg, 0, 1).unwrap();
        let a = GaugeField::new(&cfg).plaquette_phase(0.0, 0.0, 0.2).unwrap();
        let b = GaugeField::new(&shifted).plaquette_phase(0.0, 0.0, 0.2).unwrap();
        assert!((b - a - 2.0 * PI).abs() < 1e-13);
        assert_eq!(gauge_shift(&cfg, 0, 0).unwrap(), cfg);
    }
}
