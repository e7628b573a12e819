//! Boxes, flux configurations and the random flux models.
//!
//! A configuration is a finite list of flux points inside the half-open box
//! `Q_k = [-k-1/2, k+1/2)^2`, each carrying a flux in `[0, 1)`. Points are
//! kept sorted by unit cell so per-cell queries are slices.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{cell_stream, sample_seed};
use crate::stats::Proportion;

/// Integer index `n` of the unit cell `n + Q_0`.
pub type Cell = (i64, i64);

/// Largest number of points a sampled configuration may materialize.
pub const MAX_MATERIALIZED_POINTS: usize = 4_000_000;

/// Truncation of the accumulating-lattice index; the tail mass is folded here.
pub const ACCUMULATING_M_MAX: u64 = 1_000_000;

/// The square `Q_k` of edge length `2k+1` centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxGeometry {
    k: u32,
}

impl BoxGeometry {
    pub fn new(k: u32) -> Self {
        Self { k }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Edge length `2k+1` as an integer.
    pub fn edge(&self) -> u32 {
        2 * self.k + 1
    }

    pub fn side(&self) -> f64 {
        self.edge() as f64
    }

    pub fn half_width(&self) -> f64 {
        self.k as f64 + 0.5
    }

    pub fn area(&self) -> f64 {
        self.side() * self.side()
    }

    /// `diam Q_k = sqrt(2) (2k+1)`.
    pub fn diameter(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.side()
    }

    pub fn cell_count(&self) -> usize {
        (self.edge() as usize).pow(2)
    }

    /// Boundary margin used when validating interiority.
    pub fn margin(&self) -> f64 {
        1e-9 * self.side()
    }

    /// Cells of the box in row-major order (x fastest).
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let k = self.k as i64;
        (-k..=k).flat_map(move |n2| (-k..=k).map(move |n1| (n1, n2)))
    }

    pub fn contains_cell(&self, cell: Cell) -> bool {
        let k = self.k as i64;
        cell.0.abs() <= k && cell.1.abs() <= k
    }

    /// Position of `cell` in [`BoxGeometry::cells`] order.
    pub fn cell_ordinal(&self, cell: Cell) -> Option<usize> {
        if !self.contains_cell(cell) {
            return None;
        }
        let k = self.k as i64;
        let e = self.edge() as i64;
        Some(((cell.1 + k) * e + (cell.0 + k)) as usize)
    }

    /// Half-open membership test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let h = self.half_width();
        (-h..h).contains(&x) && (-h..h).contains(&y)
    }
}

/// Cell `n` with `x ∈ n + Q_0` (half-open).
pub fn cell_of(x: f64, y: f64) -> Cell {
    ((x + 0.5).floor() as i64, (y + 0.5).floor() as i64)
}

/// Euclidean distance from `(x, y)` to the boundary of the cell `n + Q_0`.
pub fn distance_to_cell_boundary(x: f64, y: f64, cell: Cell) -> f64 {
    let dx = 0.5 - (x - cell.0 as f64).abs();
    let dy = 0.5 - (y - cell.1 as f64).abs();
    dx.min(dy)
}

fn is_zero(v: &i64) -> bool {
    *v == 0
}

/// A δ-flux at `(x, y)` with flux `alpha ∈ [0, 1)`.
///
/// `shift` is an integer gauge offset; the physical flux entering the vector
/// potential is `alpha + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxPoint {
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub shift: i64,
}

impl FluxPoint {
    pub fn new(x: f64, y: f64, alpha: f64) -> Self {
        Self { x, y, alpha, shift: 0 }
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }

    /// Flux including the gauge offset.
    pub fn flux(&self) -> f64 {
        self.alpha + self.shift as f64
    }

    pub fn cell(&self) -> Cell {
        cell_of(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    PerturbedLattice,
    Poisson,
    AccumulatingLattice,
    Explicit,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    box_k: u32,
    model: ModelTag,
    seed: u64,
    points: Vec<FluxPoint>,
}

/// A realization of the random flux set restricted to a box.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxConfiguration {
    geometry: BoxGeometry,
    model: ModelTag,
    seed: u64,
    points: Vec<FluxPoint>,
    cell_start: Vec<usize>,
}

impl FluxConfiguration {
    /// Validates and indexes a list of points.
    pub fn new(geometry: BoxGeometry, model: ModelTag, seed: u64, mut points: Vec<FluxPoint>) -> Result<Self> {
        let margin = geometry.margin();
        for (index, p) in points.iter().enumerate() {
            let bad = |reason: &str| Error::InvalidPoint { index, x: p.x, y: p.y, reason: reason.to_string() };
            if !(p.x.is_finite() && p.y.is_finite() && p.alpha.is_finite()) {
                return Err(bad("non-finite value"));
            }
            if !(0.0..1.0).contains(&p.alpha) {
                return Err(bad("flux outside [0, 1)"));
            }
            if !geometry.contains(p.x, p.y) {
                return Err(bad("outside the box"));
            }
            if distance_to_cell_boundary(p.x, p.y, p.cell()) <= margin {
                return Err(bad("on or too close to a cell boundary"));
            }
        }
        points.sort_by(|a, b| {
            let ca = geometry.cell_ordinal(a.cell()).unwrap_or(usize::MAX);
            let cb = geometry.cell_ordinal(b.cell()).unwrap_or(usize::MAX);
            ca.cmp(&cb).then(a.x.total_cmp(&b.x)).then(a.y.total_cmp(&b.y))
        });
        for (i, w) in points.windows(2).enumerate() {
            if w[0].x == w[1].x && w[0].y == w[1].y {
                return Err(Error::InvalidPoint {
                    index: i + 1,
                    x: w[1].x,
                    y: w[1].y,
                    reason: "duplicate position".into(),
                });
            }
        }
        let mut cell_start = vec![0usize; geometry.cell_count() + 1];
        for p in &points {
            let o = geometry.cell_ordinal(p.cell()).expect("validated inside box");
            cell_start[o + 1] += 1;
        }
        for i in 0..geometry.cell_count() {
            cell_start[i + 1] += cell_start[i];
        }
        Ok(Self { geometry, model, seed, points, cell_start })
    }

    pub fn empty(geometry: BoxGeometry) -> Self {
        Self::new(geometry, ModelTag::Explicit, 0, Vec::new()).expect("empty configuration is valid")
    }

    pub fn geometry(&self) -> BoxGeometry {
        self.geometry
    }

    pub fn model(&self) -> ModelTag {
        self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn points(&self) -> &[FluxPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points of the half-open cell `n + Q_0`.
    pub fn points_in_cell(&self, cell: Cell) -> Result<&[FluxPoint]> {
        let o = self
            .geometry
            .cell_ordinal(cell)
            .ok_or(Error::CellOutsideBox(cell.0, cell.1))?;
        Ok(&self.points[self.cell_start[o]..self.cell_start[o + 1]])
    }

    /// Index range of the points of a cell inside [`FluxConfiguration::points`].
    pub fn cell_range(&self, cell: Cell) -> Result<std::ops::Range<usize>> {
        let o = self
            .geometry
            .cell_ordinal(cell)
            .ok_or(Error::CellOutsideBox(cell.0, cell.1))?;
        Ok(self.cell_start[o]..self.cell_start[o + 1])
    }

    /// `Φ(n + Q_0)`: the sum of the fluxes inside the cell.
    pub fn cell_flux(&self, cell: Cell) -> Result<f64> {
        Ok(self.points_in_cell(cell)?.iter().map(|p| p.alpha).sum())
    }

    /// `Φ(Q_k)`.
    pub fn total_flux(&self) -> f64 {
        self.points.iter().map(|p| p.alpha).sum()
    }

    /// Same points with every gauge offset removed.
    pub fn with_points(&self, points: Vec<FluxPoint>) -> Result<Self> {
        Self::new(self.geometry, self.model, self.seed, points)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ConfigDocument {
            box_k: self.geometry.k,
            model: self.model,
            seed: self.seed,
            points: self.points.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ConfigDocument = serde_json::from_str(text)?;
        Self::new(BoxGeometry::new(doc.box_k), doc.model, doc.seed, doc.points)
    }
}

impl Serialize for FluxConfiguration {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConfigDocument {
            box_k: self.geometry.k,
            model: self.model,
            seed: self.seed,
            points: self.points.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FluxConfiguration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ConfigDocument::deserialize(d)?;
        Self::new(BoxGeometry::new(doc.box_k), doc.model, doc.seed, doc.points).map_err(serde::de::Error::custom)
    }
}

/// Law of the flux carried by each point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum FluxLaw {
    Constant { value: f64 },
    /// Uniform on `[0, upper)`.
    Uniform { upper: f64 },
    /// `P{α < ε} = ε^delta` on `[0, 1)`.
    PowerTail { delta: f64 },
}

impl FluxLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            FluxLaw::Constant { value } => (0.0..1.0).contains(&value),
            FluxLaw::Uniform { upper } => upper > 0.0 && upper <= 1.0,
            FluxLaw::PowerTail { delta } => delta > 0.0 && delta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("flux law {self:?} is not supported in [0, 1)")))
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            FluxLaw::Constant { value } => value,
            FluxLaw::Uniform { upper } => upper * rng.random::<f64>(),
            FluxLaw::PowerTail { delta } => rng.random::<f64>().powf(1.0 / delta),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            FluxLaw::Constant { value } => value,
            FluxLaw::Uniform { upper } => upper / 2.0,
            FluxLaw::PowerTail { delta } => delta / (delta + 1.0),
        }
    }

    /// `P{α < ε}`.
    pub fn prob_below(&self, eps: f64) -> f64 {
        match *self {
            FluxLaw::Constant { value } => {
                if value < eps {
                    1.0
                } else {
                    0.0
                }
            }
            FluxLaw::Uniform { upper } => (eps / upper).clamp(0.0, 1.0),
            FluxLaw::PowerTail { delta } => eps.clamp(0.0, 1.0).powf(delta),
        }
    }
}

/// Law of the displacement `f_n` of a lattice point inside its cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisplacementLaw {
    Constant { x: f64, y: f64 },
    /// Uniform on the open square `(-half_width, half_width)^2`.
    UniformSquare { half_width: f64 },
}

impl DisplacementLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DisplacementLaw::Constant { x, y } => x.abs() < 0.5 - 1e-9 && y.abs() < 0.5 - 1e-9,
            DisplacementLaw::UniformSquare { half_width } => (0.0..0.5).contains(&half_width),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "displacement law {self:?} reaches the cell boundary"
            )))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        match *self {
            DisplacementLaw::Constant { x, y } => (x, y),
            DisplacementLaw::UniformSquare { half_width } => {
                let x = half_width * (2.0 * rng.random::<f64>() - 1.0);
                let y = half_width * (2.0 * rng.random::<f64>() - 1.0);
                (x, y)
            }
        }
    }
}

/// The random flux models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    PerturbedLattice { displacement: DisplacementLaw, flux: FluxLaw },
    Poisson { rho: f64, flux: FluxLaw },
    AccumulatingLattice,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::PerturbedLattice { displacement, flux } => {
                displacement.validate()?;
                flux.validate()
            }
            ModelSpec::Poisson { rho, flux } => {
                if !(*rho > 0.0 && rho.is_finite()) {
                    return Err(Error::InvalidParameter(format!("Poisson intensity {rho} must be positive")));
                }
                flux.validate()
            }
            ModelSpec::AccumulatingLattice => Ok(()),
        }
    }

    pub fn tag(&self) -> ModelTag {
        match self {
            ModelSpec::PerturbedLattice { .. } => ModelTag::PerturbedLattice,
            ModelSpec::Poisson { .. } => ModelTag::Poisson,
            ModelSpec::AccumulatingLattice => ModelTag::AccumulatingLattice,
        }
    }

    pub fn sample(&self, seed: u64, geometry: BoxGeometry) -> Result<FluxConfiguration> {
        match *self {
            ModelSpec::PerturbedLattice { displacement, flux } => {
                sample_perturbed_lattice(seed, geometry, displacement, flux)
            }
            ModelSpec::Poisson { rho, flux } => sample_poisson(seed, geometry, rho, flux),
            ModelSpec::AccumulatingLattice => sample_accumulating_lattice(seed, geometry),
        }
    }
}

/// Uniform point strictly inside a cell, redrawn when within `margin` of its boundary.
fn uniform_in_cell(rng: &mut ChaCha8Rng, cell: Cell, margin: f64) -> (f64, f64) {
    loop {
        let x = cell.0 as f64 - 0.5 + rng.random::<f64>();
        let y = cell.1 as f64 - 0.5 + rng.random::<f64>();
        if distance_to_cell_boundary(x, y, cell) > margin && cell_of(x, y) == cell {
            return (x, y);
        }
    }
}

/// One point per cell at `n + f_n`, with i.i.d. displacements and fluxes.
pub fn sample_perturbed_lattice(
    seed: u64,
    geometry: BoxGeometry,
    displacement: DisplacementLaw,
    flux: FluxLaw,
) -> Result<FluxConfiguration> {
    displacement.validate()?;
    flux.validate()?;
    let margin = geometry.margin();
    let mut points = Vec::with_capacity(geometry.cell_count());
    for cell in geometry.cells() {
        let mut rng = cell_stream(seed, cell);
        let (x, y) = loop {
            let (dx, dy) = displacement.sample(&mut rng);
            let (x, y) = (cell.0 as f64 + dx, cell.1 as f64 + dy);
            if distance_to_cell_boundary(x, y, cell) > margin {
                break (x, y);
            }
        };
        let alpha = flux.sample(&mut rng);
        points.push(FluxPoint::new(x, y, alpha));
    }
    FluxConfiguration::new(geometry, ModelTag::PerturbedLattice, seed, points)
}

/// Poisson configuration of intensity `rho` with i.i.d. fluxes.
pub fn sample_poisson(seed: u64, geometry: BoxGeometry, rho: f64, flux: FluxLaw) -> Result<FluxConfiguration> {
    ModelSpec::Poisson { rho, flux }.validate()?;
    let law = Poisson::new(rho).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let margin = geometry.margin();
    let mut points = Vec::new();
    for cell in geometry.cells() {
        let mut rng = cell_stream(seed, cell);
        let count = law.sample(&mut rng) as usize;
        if points.len() + count > MAX_MATERIALIZED_POINTS {
            return Err(Error::TooManyPoints { points: points.len() + count, limit: MAX_MATERIALIZED_POINTS });
        }
        for _ in 0..count {
            let (x, y) = uniform_in_cell(&mut rng, cell, margin);
            let alpha = flux.sample(&mut rng);
            points.push(FluxPoint::new(x, y, alpha));
        }
    }
    FluxConfiguration::new(geometry, ModelTag::Poisson, seed, points)
}

/// Trigamma function for `x >= 1`.
fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = x * x;
    let inv = 1.0 / x;
    let inv2 = 1.0 / x2;
    acc + inv
        + 0.5 * inv2
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))))
}

/// `P{m > j}` under `P{m} = 6/(m π)^2`.
pub fn accumulating_tail(j: u64) -> f64 {
    6.0 / (PI * PI) * trigamma(j as f64 + 1.0)
}

/// Draws the accumulating-lattice index `m ≥ 1`, truncated at [`ACCUMULATING_M_MAX`].
pub fn sample_accumulating_index(rng: &mut ChaCha8Rng) -> u64 {
    let v = 1.0 - rng.random::<f64>();
    let guess = 6.0 / (PI * PI * v) - 0.5;
    if !(guess < ACCUMULATING_M_MAX as f64) {
        return ACCUMULATING_M_MAX;
    }
    let mut m = (guess.floor() as u64).max(1);
    while m < ACCUMULATING_M_MAX && accumulating_tail(m) > v {
        m += 1;
    }
    while m > 1 && accumulating_tail(m - 1) <= v {
        m -= 1;
    }
    m
}

/// The scaled lattice `Γ_m` with flux `(2m+1)^{-3}` placed in every cell.
pub fn sample_accumulating_lattice(seed: u64, geometry: BoxGeometry) -> Result<FluxConfiguration> {
    let mut indices = Vec::with_capacity(geometry.cell_count());
    let mut total = 0usize;
    for cell in geometry.cells() {
        let m = sample_accumulating_index(&mut cell_stream(seed, cell));
        let side = 2 * m as usize + 1;
        total = total.saturating_add(side.saturating_mul(side));
        if total > MAX_MATERIALIZED_POINTS {
            return Err(Error::TooManyPoints { points: total, limit: MAX_MATERIALIZED_POINTS });
        }
        indices.push((cell, m));
    }
    let mut points = Vec::with_capacity(total);
    for (cell, m) in indices {
        points.extend(accumulating_cell_points(cell, m));
    }
    FluxConfiguration::new(geometry, ModelTag::AccumulatingLattice, seed, points)
}

/// Points of `Γ_m` shifted to `cell`.
pub fn accumulating_cell_points(cell: Cell, m: u64) -> impl Iterator<Item = FluxPoint> {
    let side = (2 * m + 1) as f64;
    let alpha = side.powi(-3);
    let m = m as i64;
    (-m..=m).flat_map(move |j| {
        (-m..=m).map(move |i| FluxPoint::new(cell.0 as f64 + i as f64 / side, cell.1 as f64 + j as f64 / side, alpha))
    })
}

/// Which small-flux event of the model assumptions to test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventKind {
    /// Small total flux with separated discs of radius `c sqrt(α)`.
    A { c: f64 },
    /// Small sum of square-root fluxes.
    B,
}

/// Event (a) on one cell: `Φ < ε` and the discs `B_γ(c sqrt α_γ)` are
/// pairwise disjoint and miss the cell boundary.
pub fn event_a_holds(points: &[FluxPoint], cell: Cell, eps: f64, c: f64) -> bool {
    let flux: f64 = points.iter().map(|p| p.alpha).sum();
    if !(flux < eps) {
        return false;
    }
    let radii: Vec<f64> = points.iter().map(|p| c * p.alpha.sqrt()).collect();
    for (i, p) in points.iter().enumerate() {
        if distance_to_cell_boundary(p.x, p.y, cell) < radii[i] {
            return false;
        }
        for (j, q) in points.iter().enumerate().skip(i + 1) {
            if (p.x - q.x).hypot(p.y - q.y) < radii[i] + radii[j] {
                return false;
            }
        }
    }
    true
}

/// Event (b) on one cell: `Σ sqrt(α_γ) < ε`.
pub fn event_b_holds(points: &[FluxPoint], eps: f64) -> bool {
    points.iter().map(|p| p.alpha.sqrt()).sum::<f64>() < eps
}

/// Per-cell event (a), in [`BoxGeometry::cells`] order.
pub fn check_event_a(config: &FluxConfiguration, eps: f64, c: f64) -> Result<Vec<bool>> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidParameter(format!("separation constant c = {c} must lie in (0, 1]")));
    }
    config
        .geometry()
        .cells()
        .map(|cell| Ok(event_a_holds(config.points_in_cell(cell)?, cell, eps, c)))
        .collect()
}

/// Per-cell event (b), in [`BoxGeometry::cells`] order.
pub fn check_event_b(config: &FluxConfiguration, eps: f64) -> Result<Vec<bool>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {eps} must be positive")));
    }
    config
        .geometry()
        .cells()
        .map(|cell| Ok(event_b_holds(config.points_in_cell(cell)?, eps)))
        .collect()
}

/// Event evaluation for an accumulating-lattice cell directly from `m`.
pub fn accumulating_event(m: u64, event: EventKind, eps: f64) -> bool {
    let side = (2 * m + 1) as f64;
    match event {
        EventKind::A { c } => 1.0 / side < eps && 2.0 * c <= side.sqrt(),
        EventKind::B => side.sqrt() < eps,
    }
}

/// Fraction of independently sampled unit cells on which the event holds.
///
/// The accumulating lattice is evaluated from its cell index `m` so that
/// large-`m` cells never need to be materialized.
pub fn empirical_event_probability(
    model: &ModelSpec,
    event: EventKind,
    eps: f64,
    trials: u64,
    seed: u64,
) -> Result<Proportion> {
    model.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if let EventKind::A { c } = event {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::InvalidParameter(format!("separation constant c = {c} must lie in (0, 1]")));
        }
    }
    let unit = BoxGeometry::new(0);
    let mut hits = 0u64;
    for t in 0..trials {
        let s = sample_seed(seed, t);
        let holds = match model {
            ModelSpec::AccumulatingLattice => {
                let m = sample_accumulating_index(&mut cell_stream(s, (0, 0)));
                accumulating_event(m, event, eps)
            }
            _ => {
                let config = model.sample(s, unit)?;
                let pts = config.points_in_cell((0, 0))?;
                match event {
                    EventKind::A { c } => event_a_holds(pts, (0, 0), eps, c),
                    EventKind::B => event_b_holds(pts, eps),
                }
            }
        };
        hits += holds as u64;
    }
    Ok(Proportion::new(hits, trials))
}
