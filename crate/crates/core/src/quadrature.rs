//! Adaptive two-dimensional quadrature for integrands with algebraic point
//! singularities `|z − γ|^β`, `β > −2`.
//!
//! Rectangles without a singular point use tensor Gauss–Legendre rules.
//! A rectangle holding exactly one singular point is split into four
//! triangles fanning out from the point and integrated in polar
//! coordinates with geometric radial grading. Every value is paired with
//! the difference between two rule orders as its error estimate.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A quadrature value and its a-posteriori error estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadValue {
    pub value: f64,
    pub error: f64,
}

impl QuadValue {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }

    /// `value + error`.
    pub fn upper(&self) -> f64 {
        self.value + self.error
    }

    /// `value − error`.
    pub fn lower(&self) -> f64 {
        self.value - self.error
    }

    /// Square root of a non-negative integral with first-order error propagation.
    pub fn sqrt(&self) -> QuadValue {
        let v = self.value.max(0.0).sqrt();
        let e = if v > 0.0 { self.error / (2.0 * v) } else { self.error.sqrt() };
        QuadValue::new(v, e.min(self.error.sqrt()))
    }
}

impl Add for QuadValue {
    type Output = QuadValue;
    fn add(self, o: QuadValue) -> QuadValue {
        QuadValue::new(self.value + o.value, self.error + o.error)
    }
}

impl AddAssign for QuadValue {
    fn add_assign(&mut self, o: QuadValue) {
        self.value += o.value;
        self.error += o.error;
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    /// Square of edge `side` centred at `(cx, cy)`.
    pub fn centered(cx: f64, cy: f64, side: f64) -> Self {
        let h = 0.5 * side;
        Self::new(cx - h, cx + h, cy - h, cy + h)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn half_diagonal(&self) -> f64 {
        0.5 * (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }

    fn holds(&self, x: f64, y: f64) -> bool {
        let tx = 1e-14 * (self.x1 - self.x0).max(1.0);
        let ty = 1e-14 * (self.y1 - self.y0).max(1.0);
        x >= self.x0 - tx && x <= self.x1 + tx && y >= self.y0 - ty && y <= self.y1 + ty
    }

    fn quarters(&self) -> [Rect; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        [
            Rect::new(self.x0, xm, self.y0, ym),
            Rect::new(xm, self.x1, self.y0, ym),
            Rect::new(self.x0, xm, ym, self.y1),
            Rect::new(xm, self.x1, ym, self.y1),
        ]
    }

    /// Splits the rectangle along every break coordinate that crosses it.
    pub fn split_at(&self, xs: &[f64], ys: &[f64]) -> Vec<Rect> {
        let cuts = |lo: f64, hi: f64, br: &[f64]| {
            let mut c = vec![lo];
            let mut inner: Vec<f64> = br.iter().copied().filter(|b| *b > lo && *b < hi).collect();
            inner.sort_by(f64::total_cmp);
            c.extend(inner);
            c.push(hi);
            c
        };
        let cx = cuts(self.x0, self.x1, xs);
        let cy = cuts(self.y0, self.y1, ys);
        let mut out = Vec::with_capacity((cx.len() - 1) * (cy.len() - 1));
        for wy in cy.windows(2) {
            for wx in cx.windows(2) {
                out.push(Rect::new(wx[0], wx[1], wy[0], wy[1]));
            }
        }
        out
    }
}

/// Point where the integrand behaves like `|z − (x, y)|^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub x: f64,
    pub y: f64,
    pub exponent: f64,
    /// Polar refinement radius `r_γ`.
    pub radius: f64,
}

/// Rule orders and tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureScheme {
    pub order_low: usize,
    pub order_high: usize,
    /// Absolute tolerance for the whole integral.
    pub tol: f64,
    /// Relative tolerance accepted on a single rectangle.
    pub rel_tol: f64,
    pub max_depth: u32,
    /// Ratio between consecutive radial breakpoints of the polar rule.
    pub radial_ratio: f64,
    /// Maximal number of radial pieces.
    pub radial_levels: usize,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        Self { order_low: 10, order_high: 16, tol: 1e-9, rel_tol: 1e-9, max_depth: 30, radial_ratio: 0.25, radial_levels: 40 }
    }
}

impl QuadratureScheme {
    pub fn validate(&self) -> Result<()> {
        if self.order_low < 2 || self.order_high <= self.order_low || self.order_high > 64 {
            return Err(Error::InvalidParameter("quadrature orders must satisfy 2 <= low < high <= 64".into()));
        }
        if !(self.tol > 0.0) || !(self.radial_ratio > 0.0 && self.radial_ratio < 1.0) || self.radial_levels < 2 {
            return Err(Error::InvalidParameter("invalid quadrature tolerance or radial grading".into()));
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * t * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { t } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (t * p - pm) / (t * t - 1.0);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let wt = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = wt;
        w[n - 1 - i] = wt;
    }
    (x, w)
}

struct Rule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Rule {
    fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Self { x, w }
    }

    /// Nodes and weights mapped to `[a, b]`.
    fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.x.iter().zip(&self.w).map(move |(x, w)| (c + h * x, h * w))
    }
}

/// Splits `[lo, hi] ⊂ (−π/2, π/2)` so that every piece is no longer than its
/// distance to `±π/2`, where `1/cos` blows up.
fn angular_pieces(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let half = std::f64::consts::FRAC_PI_2;
    let mut out = Vec::new();
    let mut stack = vec![(lo, hi)];
    while let Some((a, b)) = stack.pop() {
        let gap = half - a.abs().max(b.abs());
        if b - a <= gap || out.len() + stack.len() > 200 {
            out.push((a, b));
        } else {
            let m = 0.5 * (a + b);
            stack.push((m, b));
            stack.push((a, m));
        }
    }
    out
}

struct Integrator<'a, F: Fn(f64, f64) -> f64> {
    f: &'a F,
    low: Rule,
    high: Rule,
    scheme: QuadratureScheme,
    density: f64,
}

impl<F: Fn(f64, f64) -> f64> Integrator<'_, F> {
    fn tensor(&self, r: &Rect, rule: &Rule) -> f64 {
        let mut s = 0.0;
        for (y, wy) in rule.mapped(r.y0, r.y1) {
            for (x, wx) in rule.mapped(r.x0, r.x1) {
                s += wx * wy * (self.f)(x, y);
            }
        }
        s
    }

    fn fan(&self, r: &Rect, s: &Singularity, rule: &Rule) -> f64 {
        let corners = [(r.x0, r.y0), (r.x1, r.y0), (r.x1, r.y1), (r.x0, r.y1)];
        // Outward normals of the sides bottom, right, top, left.
        let normals = [-std::f64::consts::FRAC_PI_2, 0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI];
        let dists = [s.y - r.y0, r.x1 - s.x, r.y1 - s.y, s.x - r.x0];
        let scale = r.half_diagonal();
        let mut total = 0.0;
        for side in 0..4 {
            let d = dists[side];
            if d <= 1e-14 * scale {
                continue;
            }
            let (ax, ay) = corners[side];
            let (bx, by) = corners[(side + 1) % 4];
            let ta = (ay - s.y).atan2(ax - s.x);
            let mut tb = (by - s.y).atan2(bx - s.x);
            while tb <= ta {
                tb += 2.0 * std::f64::consts::PI;
            }
            let mut lo = ta - normals[side];
            while lo < -std::f64::consts::PI {
                lo += 2.0 * std::f64::consts::PI;
            }
            let hi = lo + (tb - ta);
            for (a, b) in angular_pieces(lo, hi) {
                for (t, wt) in rule.mapped(a, b) {
                    total += wt * self.radial(s, normals[side] + t, d / t.cos(), rule);
                }
            }
        }
        total
    }

    /// `∫_0^{rmax} f(γ + r e^{iθ}) r dr`.
    fn radial(&self, s: &Singularity, theta: f64, rmax: f64, rule: &Rule) -> f64 {
        let (sn, cs) = theta.sin_cos();
        let at = |r: f64| (self.f)(s.x + r * cs, s.y + r * sn);
        let q = self.scheme.radial_ratio;
        // Below this radius the offset from γ loses relative precision.
        let floor = 1e-7 * s.x.abs().max(s.y.abs()).max(1.0);
        let mut sum = 0.0;
        let mut hi = rmax;
        for _ in 1..self.scheme.radial_levels {
            if hi * q < floor {
                break;
            }
            let lo = hi * q;
            for (r, w) in rule.mapped(lo, hi) {
                sum += w * r * at(r);
            }
            hi = lo;
        }
        // Innermost piece: f = r^β (c0 + c1 r + c2 r²) interpolated at r0/4, r0/2, r0.
        let beta = s.exponent;
        let r0 = hi;
        let g = |r: f64| at(r) * r.powf(-beta);
        let (g1, g2, g4) = (g(0.25 * r0), g(0.5 * r0), g(r0));
        let (u1, u2, u4) = (0.25 * r0, 0.5 * r0, r0);
        let d12 = (g2 - g1) / (u2 - u1);
        let d24 = (g4 - g2) / (u4 - u2);
        let c2 = (d24 - d12) / (u4 - u1);
        let c1 = d12 - c2 * (u1 + u2);
        let c0 = g1 - c1 * u1 - c2 * u1 * u1;
        sum + c0 * r0.powf(beta + 2.0) / (beta + 2.0)
            + c1 * r0.powf(beta + 3.0) / (beta + 3.0)
            + c2 * r0.powf(beta + 4.0) / (beta + 4.0)
    }

    fn run(&self, r: &Rect, sing: &[Singularity], depth: u32) -> QuadValue {
        let inside: Vec<Singularity> = sing.iter().copied().filter(|s| r.holds(s.x, s.y)).collect();
        let at_limit = depth >= self.scheme.max_depth;
        let must_split = match inside.len() {
            0 => false,
            1 => r.half_diagonal() > inside[0].radius,
            _ => true,
        };
        if must_split && !at_limit {
            return self.children(r, &inside, depth);
        }
        let (a, b) = match inside.first() {
            None => (self.tensor(r, &self.low), self.tensor(r, &self.high)),
            Some(s) => (self.fan(r, s, &self.low), self.fan(r, s, &self.high)),
        };
        let err = (b - a).abs();
        if err <= self.density * r.area() || err <= self.scheme.rel_tol * b.abs() || at_limit {
            QuadValue::new(b, err)
        } else {
            self.children(r, &inside, depth)
        }
    }

    fn children(&self, r: &Rect, inside: &[Singularity], depth: u32) -> QuadValue {
        let mut acc = QuadValue::default();
        for c in r.quarters() {
            acc += self.run(&c, inside, depth + 1);
        }
        acc
    }
}

/// Integrates `f` over the union of non-overlapping rectangles.
///
/// Every singular exponent must exceed −2.
pub fn integrate<F: Fn(f64, f64) -> f64>(
    f: &F,
    rects: &[Rect],
    singularities: &[Singularity],
    scheme: &QuadratureScheme,
) -> Result<QuadValue> {
    scheme.validate()?;
    if let Some(s) = singularities.iter().find(|s| !(s.exponent > -2.0) || !(s.radius > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "singularity at ({}, {}) has exponent {} and radius {}",
            s.x, s.y, s.exponent, s.radius
        )));
    }
    let area: f64 = rects.iter().map(Rect::area).sum();
    if !(area > 0.0) {
        return Ok(QuadValue::default());
    }
    let it = Integrator {
        f,
        low: Rule::new(scheme.order_low),
        high: Rule::new(scheme.order_high),
        scheme: *scheme,
        density: scheme.tol / area,
    };
    let mut acc = QuadValue::default();
    for r in rects {
        acc += it.run(r, singularities, 0);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rules_integrate_polynomials() {
        for n in [1, 2, 5, 10, 16] {
            let (x, w) = gauss_legendre(n);
            for p in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn monomials_over_rectangle() {
        let s = QuadratureScheme::default();
        let r = [Rect::new(-0.5, 1.5, 0.25, 2.0)];
        for (a, b) in [(0, 0), (3, 2), (9, 7), (15, 1)] {
            let q = integrate(&|x: f64, y: f64| x.powi(a) * y.powi(b), &r, &[], &s).unwrap();
            let ix = (1.5f64.powi(a + 1) - (-0.5f64).powi(a + 1)) / (a + 1) as f64;
            let iy = (2.0f64.powi(b + 1) - 0.25f64.powi(b + 1)) / (b + 1) as f64;
            assert!((q.value - ix * iy).abs() < 1e-12 * (ix * iy).abs().max(1.0));
            assert!(q.error < 1e-10);
        }
    }

    fn square_power(beta: f64) -> f64 {
        // 8/(β+2) ∫_0^{π/4} (1/(2 cos θ))^{β+2} dθ
        let rule = Rule::new(40);
        8.0 / (beta + 2.0)
            * rule.mapped(0.0, std::f64::consts::FRAC_PI_4).map(|(t, w)| w * (0.5 / t.cos()).powf(beta + 2.0)).sum::<f64>()
    }

    #[test]
    fn point_singularity_at_centre_and_corner() {
        let s = QuadratureScheme::default();
        for beta in [-1.9, -1.5, -0.5, 0.3, 1.0] {
            let f = |x: f64, y: f64| (x * x + y * y).powf(0.5 * beta);
            let sing = [Singularity { x: 0.0, y: 0.0, exponent: beta, radius: 0.1 }];
            let q = integrate(&f, &[Rect::centered(0.0, 0.0, 1.0)], &sing, &s).unwrap();
            let exact = square_power(beta);
            assert!((q.value - exact).abs() < 1e-8 * exact, "beta={beta}: {} vs {exact}", q.value);
            let corner = integrate(&f, &[Rect::new(0.0, 0.5, 0.0, 0.5)], &sing, &s).unwrap();
            assert!((4.0 * corner.value - exact).abs() < 1e-8 * exact);
        }
    }

    #[test]
    fn nearby_singularities_are_separated() {
        let s = QuadratureScheme::default();
        let f = |x: f64, y: f64| (x * x + y * y).powf(-0.25) + ((x - 1e-3).powi(2) + y * y).powf(-0.25);
        let sing = [
            Singularity { x: 0.0, y: 0.0, exponent: -0.5, radius: 5e-4 },
            Singularity { x: 1e-3, y: 0.0, exponent: -0.5, radius: 5e-4 },
        ];
        let q = integrate(&f, &[Rect::centered(0.0, 0.0, 1.0)], &sing, &s).unwrap();
        let one = square_power(-0.5);
        let shifted = integrate(
            &|x: f64, y: f64| (x * x + y * y).powf(-0.25),
            &[Rect::new(-0.501, 0.499, -0.5, 0.5)],
            &[Singularity { x: 0.0, y: 0.0, exponent: -0.5, radius: 0.1 }],
            &s,
        )
        .unwrap();
        assert!((q.value - one - shifted.value).abs() < 1e-8);
    }

    #[test]
    fn additivity_over_split_rectangles() {
        let s = QuadratureScheme::default();
        let f = |x: f64, y: f64| ((x - 0.1).powi(2) + (y + 0.2).powi(2)).powf(0.3) * (x + 2.0);
        let sing = [Singularity { x: 0.1, y: -0.2, exponent: 0.6, radius: 0.1 }];
        let whole = Rect::new(-1.0, 1.0, -1.0, 1.0);
        let a = integrate(&f, &[whole], &sing, &s).unwrap();
        let b = integrate(&f, &whole.split_at(&[-0.3, 0.1, 0.7], &[0.0]), &sing, &s).unwrap();
        assert!((a.value - b.value).abs() < 1e-10 * a.value.abs());
    }

    #[test]
    fn rejects_non_integrable_exponent() {
        let sing = [Singularity { x: 0.0, y: 0.0, exponent: -2.0, radius: 0.1 }];
        assert!(integrate(&|_, _| 1.0, &[Rect::centered(0.0, 0.0, 1.0)], &sing, &QuadratureScheme::default()).is_err());
    }
}
