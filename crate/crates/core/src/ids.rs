//! Monte Carlo estimation of the integrated density of states on finite boxes.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{count_below_many, lowest_eigenvalue};
use crate::error::{Error, Result};
use crate::geometry::{BoxGeometry, ModelSpec};
use crate::lattice::{assemble, free_neumann_eigenvalues, Boundary, Grid};
use crate::rng::sample_seed;
use crate::stats::{fit_line, t975, wilson_interval, Z95};

/// Geometric grid from 0.02 to 4 with 25 points.
pub fn default_energies() -> Vec<f64> {
    geometric_grid(0.02, 4.0, 25)
}

/// `n` points from `lo` to `hi` in geometric progression.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo * (r * i as f64).exp() }).collect()
}

/// Everything that determines the eigenvalue counts of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdsParams {
    pub model: ModelSpec,
    pub k: u32,
    pub m: u32,
    pub boundary: Boundary,
    pub energies: Vec<f64>,
    pub seed: u64,
}

impl IdsParams {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        Grid::new(BoxGeometry::new(self.k), self.m)?;
        if self.energies.is_empty() || !self.energies.iter().all(|e| e.is_finite()) {
            return Err(Error::InvalidParameter("energy grid must be non-empty and finite".into()));
        }
        if !self.energies.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter("energy grid must be strictly ascending".into()));
        }
        Ok(())
    }

    /// Eigenvalue counts of sample `index` at every energy.
    pub fn sample_counts(&self, index: u64) -> Result<Vec<usize>> {
        let g = BoxGeometry::new(self.k);
        let config = self.model.sample(sample_seed(self.seed, index), g)?;
        let op = assemble(&config, &Grid::new(g, self.m)?, self.boundary)?;
        count_below_many(&op, &self.energies)
    }
}

/// Exact integer sums of per-sample counts.
///
/// Accumulators over disjoint index ranges merge to the same value in any order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdsAccumulator {
    pub params: IdsParams,
    /// Half-open sample index ranges already folded in, sorted and coalesced.
    pub ranges: Vec<(u64, u64)>,
    pub samples: u64,
    pub failures: u64,
    pub failed_indices: Vec<u64>,
    pub sum: Vec<u64>,
    pub sum_sq: Vec<u128>,
}

impl IdsAccumulator {
    pub fn new(params: IdsParams) -> Result<Self> {
        params.validate()?;
        let n = params.energies.len();
        Ok(Self { params, ranges: vec![], samples: 0, failures: 0, failed_indices: vec![], sum: vec![0; n], sum_sq: vec![0; n] })
    }

    /// Runs the samples of `range` in parallel and folds them in.
    pub fn run(&mut self, range: Range<u64>) -> Result<()> {
        if range.is_empty() {
            return Ok(());
        }
        if self.overlaps(range.start, range.end) {
            return Err(Error::InvalidParameter(format!("samples {range:?} overlap already accumulated ranges")));
        }
        let results: Vec<(u64, Result<Vec<usize>>)> =
            range.clone().into_par_iter().map(|i| (i, self.params.sample_counts(i))).collect();
        for (i, r) in results {
            match r {
                Ok(counts) => {
                    self.samples += 1;
                    for (j, c) in counts.into_iter().enumerate() {
                        self.sum[j] += c as u64;
                        self.sum_sq[j] += (c as u128) * (c as u128);
                    }
                }
                Err(e) => {
                    log::warn!("sample {i} failed: {e}");
                    self.failures += 1;
                    self.failed_indices.push(i);
                }
            }
        }
        self.add_range(range.start, range.end);
        Ok(())
    }

    fn overlaps(&self, a: u64, b: u64) -> bool {
        self.ranges.iter().any(|&(s, e)| a < e && s < b)
    }

    fn add_range(&mut self, a: u64, b: u64) {
        self.ranges.push((a, b));
        self.ranges.sort_unstable();
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(self.ranges.len());
        for &(s, e) in &self.ranges {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        self.ranges = merged;
    }

    /// Adds another accumulator over disjoint samples with identical parameters.
    pub fn merge(&mut self, other: &IdsAccumulator) -> Result<()> {
        if self.params != other.params {
            return Err(Error::InvalidParameter("cannot merge accumulators with different parameters".into()));
        }
        if other.ranges.iter().any(|&(a, b)| self.overlaps(a, b)) {
            return Err(Error::InvalidParameter("cannot merge accumulators over overlapping samples".into()));
        }
        self.samples += other.samples;
        self.failures += other.failures;
        self.failed_indices.extend_from_slice(&other.failed_indices);
        self.failed_indices.sort_unstable();
        for j in 0..self.sum.len() {
            self.sum[j] += other.sum[j];
            self.sum_sq[j] += other.sum_sq[j];
        }
        for &(a, b) in &other.ranges {
            self.add_range(a, b);
        }
        Ok(())
    }

    /// Fails when more than 1% of the attempted samples failed.
    pub fn check_failures(&self) -> Result<()> {
        let total = self.samples + self.failures;
        if self.failures * 100 > total {
            return Err(Error::TooManyFailures { failed: self.failures as usize, total: total as usize });
        }
        Ok(())
    }

    pub fn curve(&self) -> IdsCurve {
        let area = BoxGeometry::new(self.params.k).area();
        let s = self.samples as f64;
        let mut n_hat = Vec::with_capacity(self.sum.len());
        let mut stderr = Vec::with_capacity(self.sum.len());
        let mut upper95 = Vec::with_capacity(self.sum.len());
        for j in 0..self.sum.len() {
            let sum = self.sum[j] as f64;
            let mean = if s > 0.0 { sum / s } else { f64::NAN };
            let var = if s > 1.0 { ((self.sum_sq[j] as f64) - sum * sum / s).max(0.0) / (s - 1.0) } else { f64::NAN };
            let se = (var / s).sqrt() / area;
            n_hat.push(mean / area);
            stderr.push(se);
            // One-sided rule of three when no eigenvalue was seen.
            upper95.push(if self.sum[j] == 0 { 3.0 / (s * area) } else { mean / area + Z95 * se });
        }
        IdsCurve {
            energies: self.params.energies.clone(),
            n_hat,
            stderr,
            upper95,
            samples: self.samples,
            failures: self.failures,
            boundary: self.params.boundary,
            k: self.params.k,
            m: self.params.m,
            seed: self.params.seed,
        }
    }
}

/// `N̂(E)` per unit area on a grid of energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsCurve {
    pub energies: Vec<f64>,
    pub n_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    /// 95% upper bound; `3/(samples |Q_k|)` where no eigenvalue was counted.
    pub upper95: Vec<f64>,
    pub samples: u64,
    pub failures: u64,
    pub boundary: Boundary,
    pub k: u32,
    pub m: u32,
    pub seed: u64,
}

impl IdsCurve {
    /// CSV with columns `E,N_hat,stderr,n_samples,bc,k,M`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["E", "N_hat", "stderr", "n_samples", "bc", "k", "M"])?;
        let bc = match self.boundary {
            Boundary::Dirichlet => "dirichlet",
            Boundary::Neumann => "neumann",
        };
        for i in 0..self.energies.len() {
            w.write_record([
                self.energies[i].to_string(),
                self.n_hat[i].to_string(),
                self.stderr[i].to_string(),
                self.samples.to_string(),
                bc.to_string(),
                self.k.to_string(),
                self.m.to_string(),
            ])?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

/// Averages eigenvalue counts of `samples` boxes.
pub fn estimate_ids(
    model: &ModelSpec,
    k: u32,
    boundary: Boundary,
    m: u32,
    samples: u64,
    energies: &[f64],
    seed: u64,
) -> Result<IdsCurve> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    let params = IdsParams { model: *model, k, m, boundary, energies: energies.to_vec(), seed };
    let mut acc = IdsAccumulator::new(params)?;
    acc.run(0..samples)?;
    acc.check_failures()?;
    Ok(acc.curve())
}

/// Dirichlet and Neumann curves on identical samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub dirichlet: IdsCurve,
    pub neumann: IdsCurve,
    /// Energies where the Dirichlet estimate exceeds the Neumann one.
    pub violations: Vec<f64>,
}

pub fn bracket(model: &ModelSpec, k: u32, m: u32, samples: u64, energies: &[f64], seed: u64) -> Result<Bracket> {
    let dirichlet = estimate_ids(model, k, Boundary::Dirichlet, m, samples, energies, seed)?;
    let neumann = estimate_ids(model, k, Boundary::Neumann, m, samples, energies, seed)?;
    let violations = bracket_violations(&dirichlet, &neumann);
    Ok(Bracket { dirichlet, neumann, violations })
}

/// Energies where the Dirichlet curve lies above the Neumann curve.
pub fn bracket_violations(dirichlet: &IdsCurve, neumann: &IdsCurve) -> Vec<f64> {
    (0..dirichlet.energies.len())
        .filter(|&i| dirichlet.n_hat[i] > neumann.n_hat[i])
        .map(|i| dirichlet.energies[i])
        .collect()
}

/// `4 Σ_j (λ_j + 1)^{-2} / |Q_k|` over the free Neumann grid spectrum.
///
/// Bounds the Neumann count per unit area at every `E ≤ 1` through the
/// discrete resolvent domination.
pub fn rough_bound_constant(k: u32, m: u32) -> Result<f64> {
    let g = BoxGeometry::new(k);
    let grid = Grid::new(g, m)?;
    let s: f64 = free_neumann_eigenvalues(grid.vertices(), grid.h()).iter().map(|l| (l + 1.0).powi(-2)).sum();
    Ok(4.0 * s / g.area())
}

/// `P̂{E_1(H_D) ≤ ε}` with Wilson intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityCurve {
    pub epsilons: Vec<f64>,
    pub successes: Vec<u64>,
    pub trials: u64,
    pub frequency: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub failures: u64,
}

pub fn small_e1_probability(
    model: &ModelSpec,
    k: u32,
    m: u32,
    epsilons: &[f64],
    samples: Range<u64>,
    seed: u64,
) -> Result<ProbabilityCurve> {
    let g = BoxGeometry::new(k);
    let grid = Grid::new(g, m)?;
    let (start, total) = (samples.start, samples.end.saturating_sub(samples.start));
    let e1: Vec<Result<f64>> = samples
        .into_par_iter()
        .map(|i| lowest_eigenvalue(&assemble(&model.sample(sample_seed(seed, i), g)?, &grid, Boundary::Dirichlet)?))
        .collect();
    let mut values = Vec::with_capacity(e1.len());
    let mut failures = 0;
    for (i, r) in e1.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(e) => {
                log::warn!("sample {} failed: {e}", start + i as u64);
                failures += 1;
            }
        }
    }
    if failures * 100 > total {
        return Err(Error::TooManyFailures { failed: failures as usize, total: total as usize });
    }
    let trials = values.len() as u64;
    let successes: Vec<u64> = epsilons.iter().map(|&e| values.iter().filter(|&&v| v <= e).count() as u64).collect();
    let (low, high): (Vec<f64>, Vec<f64>) = successes.iter().map(|&s| wilson_interval(s, trials, Z95)).unzip();
    Ok(ProbabilityCurve {
        epsilons: epsilons.to_vec(),
        frequency: successes.iter().map(|&s| s as f64 / trials.max(1) as f64).collect(),
        successes,
        trials,
        low,
        high,
        failures,
    })
}

/// Tail fits of `N̂` on an energy window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifshitzFit {
    /// Slope of `log|log N̂|` against `log E`.
    pub slope: f64,
    pub slope_ci: (f64, f64),
    pub slope_residuals: Vec<f64>,
    /// `C` in `log N̂ = −C/E + c`.
    pub c: f64,
    pub c_ci: (f64, f64),
    pub intercept: f64,
    pub c_residuals: Vec<f64>,
    /// `C > 0` at 95% confidence.
    pub c_positive: bool,
    /// Exponent of the competing power law `log N̂ = a log E + c`.
    pub power_exponent: f64,
    /// The `−C/E` form has the smaller residual sum of squares.
    pub tail_form_preferred: bool,
    pub used_energies: Vec<f64>,
    /// Energies dropped because `N̂` was 0 or not below 1.
    pub excluded_energies: Vec<f64>,
}

/// Fits `log|log N̂|` and `log N̂ = −C/E + c` over `window = (E_min, E_max)`.
pub fn lifshitz_fit(energies: &[f64], values: &[f64], window: (f64, f64)) -> Result<LifshitzFit> {
    if energies.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: energies.len(), got: values.len() });
    }
    let mut used = Vec::new();
    let mut logs = Vec::new();
    let mut excluded = Vec::new();
    for (&e, &v) in energies.iter().zip(values) {
        if !(e >= window.0 && e <= window.1) {
            continue;
        }
        if v > 0.0 && v < 1.0 && e > 0.0 {
            used.push(e);
            logs.push(v.ln());
        } else {
            excluded.push(e);
        }
    }
    if used.len() < 3 {
        return Err(Error::Fit(format!(
            "{} usable energies in [{}, {}] ({} excluded); need at least 3",
            used.len(),
            window.0,
            window.1,
            excluded.len()
        )));
    }
    let log_e: Vec<f64> = used.iter().map(|e| e.ln()).collect();
    let inv_e: Vec<f64> = used.iter().map(|e| 1.0 / e).collect();
    let loglog: Vec<f64> = logs.iter().map(|l| (-l).ln()).collect();
    let a = fit_line(&log_e, &loglog).ok_or_else(|| Error::Fit("degenerate log|log| fit".into()))?;
    let b = fit_line(&inv_e, &logs).ok_or_else(|| Error::Fit("degenerate −C/E fit".into()))?;
    let p = fit_line(&log_e, &logs).ok_or_else(|| Error::Fit("degenerate power-law fit".into()))?;
    let t = t975(used.len() - 2);
    let c = -b.slope;
    let rss = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    Ok(LifshitzFit {
        slope: a.slope,
        slope_ci: (a.slope - t * a.slope_se, a.slope + t * a.slope_se),
        slope_residuals: a.residuals,
        c,
        c_ci: (c - t * b.slope_se, c + t * b.slope_se),
        intercept: b.intercept,
        c_positive: c - t * b.slope_se > 0.0,
        tail_form_preferred: rss(&b.residuals) < rss(&p.residuals),
        c_residuals: b.residuals,
        power_exponent: p.slope,
        used_energies: used,
        excluded_energies: excluded,
    })
}

/// Number of samples with each eigenvalue count at energy `e`, for diagnostics.
pub fn count_histogram(params: &IdsParams, samples: Range<u64>, energy_index: usize) -> Result<BTreeMap<usize, u64>> {
    let mut h = BTreeMap::new();
    for i in samples {
        *h.entry(params.sample_counts(i)?[energy_index]).or_insert(0) += 1;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FluxLaw;

    fn poisson() -> ModelSpec {
        ModelSpec::Poisson { rho: 1.0, flux: FluxLaw::Constant { value: 0.5 } }
    }

    fn params(seed: u64) -> IdsParams {
        IdsParams { model: poisson(), k: 1, m: 4, boundary: Boundary::Neumann, energies: geometric_grid(0.1, 8.0, 6), seed }
    }

    #[test]
    fn grid_endpoints() {
        let g = default_energies();
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], 0.02);
        assert_eq!(g[24], 4.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn shards_merge_exactly() {
        let mut whole = IdsAccumulator::new(params(3)).unwrap();
        whole.run(0..12).unwrap();
        let mut a = IdsAccumulator::new(params(3)).unwrap();
        a.run(5..12).unwrap();
        let mut b = IdsAccumulator::new(params(3)).unwrap();
        b.run(0..5).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a, whole);
        assert!(a.merge(&b).is_err());
        assert!(IdsAccumulator::new(params(4)).unwrap().merge(&b).is_err());
    }

    #[test]
    fn curve_monotone_and_rule_of_three() {
        let mut acc = IdsAccumulator::new(params(9)).unwrap();
        acc.run(0..10).unwrap();
        let c = acc.curve();
        assert!(c.n_hat.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(c.n_hat[0], 0.0);
        assert!((c.upper95[0] - 3.0 / (10.0 * 9.0)).abs() < 1e-15);
    }

    #[test]
    fn synthetic_tail_fits() {
        let e = geometric_grid(0.1, 1.0, 10);
        let n: Vec<f64> = e.iter().map(|e| (-1.0 / e).exp()).collect();
        let f = lifshitz_fit(&e, &n, (0.0, 2.0)).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-6 && (f.c - 1.0).abs() < 1e-9 && f.c_positive && f.tail_form_preferred);
        let f = lifshitz_fit(&e, &e, (0.0, 2.0)).unwrap();
        assert!(!f.tail_form_preferred);
        assert!(lifshitz_fit(&e, &n, (5.0, 6.0)).is_err());
        let mut z = n.clone();
        z[3] = 0.0;
        assert_eq!(lifshitz_fit(&e, &z, (0.0, 2.0)).unwrap().excluded_energies, vec![e[3]]);
    }

    #[test]
    fn rough_constant_bounds_neumann_counts() {
        let c6 = rough_bound_constant(1, 4).unwrap();
        let mut acc = IdsAccumulator::new(IdsParams { energies: vec![0.5, 1.0], ..params(1) }).unwrap();
        acc.run(0..8).unwrap();
        assert!(acc.curve().n_hat.iter().all(|n| *n <= c6));
    }
}
