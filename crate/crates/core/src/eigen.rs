//! Eigenvalues and eigenvalue counts of lattice operators.
//!
//! Three tools: a dense Hermitian oracle, a Lanczos solver with full
//! reorthogonalization and locking for the bottom of the spectrum, and exact
//! eigenvalue counting by the inertia of a banded `LDL^H` factorization.

use std::ops::{Add, Div, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeOperator};
use crate::rng::aux_stream;

/// Largest dimension accepted by the dense oracle.
pub const DENSE_LIMIT: usize = 6000;

/// Below this dimension [`lowest_eigenvalue`] diagonalizes densely.
pub const SMALL_DENSE: usize = 600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub dim: usize,
    pub boundary: Option<Boundary>,
    pub k: Option<u32>,
    pub m: Option<u32>,
    pub h: Option<f64>,
}

impl OperatorMeta {
    pub fn of(op: &LatticeOperator) -> Self {
        Self {
            dim: op.dim(),
            boundary: op.boundary,
            k: op.grid.map(|g| g.geometry.k()),
            m: op.grid.map(|g| g.m),
            h: op.grid.map(|g| g.h()),
        }
    }
}

/// Sorted eigenvalues with residual norms `‖Hv − λv‖/‖v‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub meta: OperatorMeta,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub count_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub count: Option<usize>,
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<Complex64>>,
}

impl SpectralResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_dense(op: &LatticeOperator) -> Result<()> {
    if op.dim() > DENSE_LIMIT {
        return Err(Error::TooLarge { dim: op.dim(), limit: DENSE_LIMIT });
    }
    Ok(())
}

/// All eigenvalues, ascending, by dense Hermitian reduction.
pub fn dense_eigenvalues(op: &LatticeOperator) -> Result<Vec<f64>> {
    check_dense(op)?;
    let mut v: Vec<f64> = match op.to_dense_real() {
        Some(m) => m.symmetric_eigenvalues().iter().copied().collect(),
        None => op.to_dense().symmetric_eigenvalues().iter().copied().collect(),
    };
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Full spectrum with eigenvectors and residuals.
pub fn dense_spectrum(op: &LatticeOperator) -> Result<SpectralResult> {
    check_dense(op)?;
    let n = op.dim();
    let (values, vectors): (Vec<f64>, DMatrix<Complex64>) = match op.to_dense_real() {
        Some(m) => {
            let e = m.symmetric_eigen();
            (e.eigenvalues.iter().copied().collect(), e.eigenvectors.map(|x| Complex64::new(x, 0.0)))
        }
        None => {
            let e = op.to_dense().symmetric_eigen();
            (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut eigenvalues = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    let mut eigenvectors = Vec::with_capacity(n);
    let mut hv = vec![Complex64::new(0.0, 0.0); n];
    for &i in &order {
        let v: Vec<Complex64> = vectors.column(i).iter().copied().collect();
        op.apply_into(&v, &mut hv)?;
        eigenvalues.push(values[i]);
        residuals.push(residual(&hv, &v, values[i]));
        eigenvectors.push(v);
    }
    Ok(SpectralResult {
        eigenvalues,
        residuals,
        meta: OperatorMeta::of(op),
        count_threshold: None,
        count: None,
        eigenvectors,
    })
}

fn residual(hv: &[Complex64], v: &[Complex64], lambda: f64) -> f64 {
    let r: f64 = hv.iter().zip(v).map(|(a, b)| (a - b * lambda).norm_sqr()).sum();
    (r / norm_sqr(v)).sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

fn axpy(y: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn orthogonalize(w: &mut [Complex64], basis: &[Vec<Complex64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            axpy(w, -c, q);
        }
    }
}

/// Number of eigenvalues of the symmetric tridiagonal `(a, b)` below `x`.
fn sturm_count(a: &[f64], b: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..a.len() {
        let off = if i == 0 { 0.0 } else { b[i - 1] * b[i - 1] };
        d = a[i] - x - if i == 0 { 0.0 } else { off / d };
        if d == 0.0 {
            d = -f64::EPSILON * (a[i].abs() + x.abs() + 1.0);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `idx`-th smallest eigenvalue of a symmetric tridiagonal by bisection.
fn tridiagonal_eigenvalue(a: &[f64], b: &[f64], idx: usize) -> f64 {
    let n = a.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { b[i - 1].abs() } else { 0.0 } + if i + 1 < n { b[i].abs() } else { 0.0 };
        lo = lo.min(a[i] - r);
        hi = hi.max(a[i] + r);
    }
    let pad = 1e-12 * (lo.abs().max(hi.abs()) + 1.0);
    lo -= pad;
    hi += pad;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(a, b, mid) > idx {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvector of a symmetric tridiagonal for the eigenvalue `theta`, by
/// inverse iteration with a pivoted tridiagonal solve.
fn tridiagonal_eigenvector(a: &[f64], b: &[f64], theta: f64) -> Vec<f64> {
    let n = a.len();
    if n == 1 {
        return vec![1.0];
    }
    let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max) + b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let eps = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    // LU with partial pivoting of T - theta I: rows carry up to three entries.
    let mut d: Vec<f64> = a.iter().map(|x| x - theta).collect();
    let mut du: Vec<f64> = b.to_vec();
    let mut dl: Vec<f64> = b.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut swap = vec![false; n - 1];
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                d[i] = eps;
            }
            let f = dl[i] / d[i];
            dl[i] = f;
            d[i + 1] -= f * du[i];
        } else {
            let f = d[i] / dl[i];
            d[i] = dl[i];
            dl[i] = f;
            let tmp = du[i];
            du[i] = d[i + 1];
            d[i + 1] = tmp - f * d[i + 1];
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] *= -f;
            }
            swap[i] = true;
        }
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = eps;
    }
    let mut x = vec![1.0; n];
    for _ in 0..3 {
        for i in 0..n - 1 {
            if swap[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= dl[i] * x[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            if i + 1 < n {
                s -= du[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= du2[i] * x[i + 2];
            }
            let piv = if d[i].abs() < eps { eps.copysign(d[i]) } else { d[i] };
            x[i] = s / piv;
        }
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(nrm > 0.0 && nrm.is_finite()) {
            break;
        }
        x.iter_mut().for_each(|v| *v /= nrm);
    }
    x
}

struct Ritz {
    value: f64,
    vector: Vec<Complex64>,
    estimate: f64,
}

/// Lowest `wanted` Ritz pairs of one Lanczos run in the complement of `locked`.
///
/// Returns converged leading pairs, or the best unconverged pair on restart.
fn lanczos_run(
    op: &LatticeOperator,
    start: Vec<Complex64>,
    locked: &[Vec<Complex64>],
    wanted: usize,
    tol: f64,
    cap: usize,
    norm: f64,
) -> Result<(Vec<Ritz>, bool)> {
    let n = op.dim();
    let free = n - locked.len();
    let mut basis: Vec<Vec<Complex64>> = vec![start];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    loop {
        let j = basis.len() - 1;
        op.apply_into(&basis[j], &mut w)?;
        let a = dot(&basis[j], &w).re;
        axpy(&mut w, Complex64::new(-a, 0.0), &basis[j]);
        if j > 0 {
            axpy(&mut w, Complex64::new(-beta[j - 1], 0.0), &basis[j - 1]);
        }
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &basis);
        alpha.push(a);
        let b = norm_sqr(&w).sqrt();
        let size = basis.len();
        let breakdown = b <= 1e-13 * norm.max(1.0) || size >= free;
        let full = size >= cap;
        if breakdown || full || size.is_multiple_of(10) || size == wanted {
            let take = wanted.min(size);
            let mut ritz = Vec::with_capacity(take);
            for idx in 0..take {
                let theta = tridiagonal_eigenvalue(&alpha, &beta, idx);
                let s = tridiagonal_eigenvector(&alpha, &beta, theta);
                let estimate = if breakdown { 0.0 } else { b * s[size - 1].abs() };
                ritz.push((theta, s, estimate));
            }
            let leading = ritz.iter().take_while(|r| r.2 <= 0.5 * tol).count();
            let keep = if leading == take && take == wanted {
                Some((leading, true))
            } else if breakdown {
                Some((take, true))
            } else if full {
                Some(if leading > 0 { (leading, true) } else { (1, false) })
            } else {
                None
            };
            if let Some((keep, converged)) = keep {
                let out = ritz
                    .into_iter()
                    .take(keep)
                    .map(|(value, s, estimate)| {
                        let mut v = vec![Complex64::new(0.0, 0.0); n];
                        for (q, c) in basis.iter().zip(&s) {
                            axpy(&mut v, Complex64::new(*c, 0.0), q);
                        }
                        Ritz { value, vector: v, estimate }
                    })
                    .collect();
                return Ok((out, converged));
            }
        }
        beta.push(b);
        let inv = 1.0 / b;
        basis.push(w.iter().map(|x| x * inv).collect());
    }
}

fn random_start(n: usize, locked: &[Vec<Complex64>], seed: u64) -> Vec<Complex64> {
    let mut rng = aux_stream(0x1A2B_3C4D, seed);
    loop {
        let mut v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        orthogonalize(&mut v, locked);
        let nrm = norm_sqr(&v).sqrt();
        if nrm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nrm);
            return v;
        }
    }
}

/// Orthonormalizes new Ritz vectors against locked ones and refines their values.
fn lock(
    op: &LatticeOperator,
    locked: &mut Vec<Vec<Complex64>>,
    values: &mut Vec<f64>,
    new: Vec<Ritz>,
) -> Result<()> {
    for r in new {
        let mut v = r.vector;
        orthogonalize(&mut v, locked);
        let nrm = norm_sqr(&v).sqrt();
        if nrm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nrm);
        let hv = op.apply(&v)?;
        values.push(dot(&v, &hv).re);
        locked.push(v);
    }
    Ok(())
}

/// The `m` smallest eigenpairs by Lanczos with locking.
///
/// Residual norms are recomputed explicitly and must be at most `tol`.
pub fn lowest_eigenpairs(op: &LatticeOperator, m: usize, tol: f64) -> Result<SpectralResult> {
    let n = op.dim();
    if m == 0 || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("need m >= 1 and tol > 0 (got m={m}, tol={tol})")));
    }
    if m > n {
        return Err(Error::InvalidParameter(format!("requested {m} eigenpairs of a {n}-dimensional operator")));
    }
    let norm = op.norm_bound();
    let cap = n.min(2000).min((300_000_000 / (16 * n)).max(60));
    let mut locked: Vec<Vec<Complex64>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut runs = 0u64;
    let mut restarts = 0usize;
    let mut best = f64::INFINITY;
    let mut start: Option<Vec<Complex64>> = None;
    let mut verified = false;
    while !verified {
        while locked.len() < m {
            let wanted = m - locked.len();
            let v0 = match start.take() {
                Some(v) => v,
                None => {
                    runs += 1;
                    random_start(n, &locked, runs)
                }
            };
            let (ritz, converged) = lanczos_run(op, v0, &locked, wanted, tol, cap, norm)?;
            if converged {
                lock(op, &mut locked, &mut values, ritz)?;
                restarts = 0;
            } else {
                restarts += 1;
                best = best.min(ritz[0].estimate);
                if restarts > 40 {
                    return Err(Error::NoConvergence { iterations: restarts * cap, residual: best });
                }
                let mut v = ritz.into_iter().next().expect("one Ritz pair").vector;
                orthogonalize(&mut v, &locked);
                let nrm = norm_sqr(&v).sqrt();
                v.iter_mut().for_each(|x| *x /= nrm);
                start = Some(v);
            }
        }
        // A single Krylov space sees one vector per eigenspace; look for missed copies.
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if locked.len() >= n {
            break;
        }
        runs += 1;
        let mut probe_start = Some(random_start(n, &locked, runs));
        let mut probe_restarts = 0;
        loop {
            let (ritz, converged) = lanczos_run(op, probe_start.take().expect("start"), &locked, 1, tol, cap, norm)?;
            let r = ritz.into_iter().next().expect("one Ritz pair");
            if converged {
                if r.value < top - 10.0 * tol {
                    lock(op, &mut locked, &mut values, vec![r])?;
                    let worst = (0..values.len()).max_by(|&a, &b| values[a].total_cmp(&values[b])).expect("nonempty");
                    values.remove(worst);
                    locked.remove(worst);
                } else {
                    verified = true;
                }
                break;
            }
            probe_restarts += 1;
            if r.value >= top + 10.0 * tol.max(r.estimate) || probe_restarts > 40 {
                verified = r.value >= top;
                if !verified {
                    return Err(Error::NoConvergence { iterations: probe_restarts * cap, residual: r.estimate });
                }
                break;
            }
            let mut v = r.vector;
            orthogonalize(&mut v, &locked);
            let nrm = norm_sqr(&v).sqrt();
            v.iter_mut().for_each(|x| *x /= nrm);
            probe_start = Some(v);
        }
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut result = SpectralResult {
        eigenvalues: Vec::with_capacity(m),
        residuals: Vec::with_capacity(m),
        meta: OperatorMeta::of(op),
        count_threshold: None,
        count: None,
        eigenvectors: Vec::with_capacity(m),
    };
    let mut worst: f64 = 0.0;
    for &i in order.iter().take(m) {
        let hv = op.apply(&locked[i])?;
        let r = residual(&hv, &locked[i], values[i]);
        worst = worst.max(r);
        result.eigenvalues.push(values[i]);
        result.residuals.push(r);
        result.eigenvectors.push(locked[i].clone());
    }
    if worst > tol {
        return Err(Error::NoConvergence { iterations: runs as usize, residual: worst });
    }
    Ok(result)
}

/// Smallest eigenvalue, dense for small operators and inertia-certified
/// inverse iteration otherwise.
pub fn lowest_eigenvalue(op: &LatticeOperator) -> Result<f64> {
    if op.dim() <= SMALL_DENSE {
        return Ok(dense_eigenvalues(op)?[0]);
    }
    Ok(ground_state(op, 1e-9 * op.norm_bound().max(1.0))?.eigenvalues[0])
}

/// Lowest eigenpair with explicit residual at most `tol`.
pub fn ground_state(op: &LatticeOperator, tol: f64) -> Result<SpectralResult> {
    let (value, vector, res) = if op.is_real() {
        ground_by_inverse_iteration::<f64>(op, tol)?
    } else {
        ground_by_inverse_iteration::<Complex64>(op, tol)?
    };
    Ok(SpectralResult {
        eigenvalues: vec![value],
        residuals: vec![res],
        meta: OperatorMeta::of(op),
        count_threshold: None,
        count: None,
        eigenvectors: vec![vector],
    })
}

trait Scalar:
    Copy
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + Send
    + Sync
{
    const ZERO: Self;
    fn conj(self) -> Self;
    fn re(self) -> f64;
    fn abs2(self) -> f64;
    fn from_complex(z: Complex64) -> Self;
    fn to_complex(self) -> Complex64;
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    fn conj(self) -> Self {
        self
    }
    fn re(self) -> f64 {
        self
    }
    fn abs2(self) -> f64 {
        self * self
    }
    fn from_complex(z: Complex64) -> Self {
        z.re
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    const ZERO: Self = Complex64::new(0.0, 0.0);
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn from_complex(z: Complex64) -> Self {
        z
    }
    fn to_complex(self) -> Complex64 {
        self
    }
}

/// Unpivoted banded `LDL^H` factorization of `H − σ I`.
///
/// Row `p` of `band` holds the eliminated upper row `U[p, p..=p+b]`, so that
/// `H − σ I = U^H D^{-1} U` with `D = diag(d)`.
struct BandLdl<T> {
    n: usize,
    b: usize,
    band: Vec<T>,
    d: Vec<f64>,
    negatives: usize,
    growth: f64,
}

impl<T: Scalar> BandLdl<T> {
    fn factor(op: &LatticeOperator, sigma: f64, norm: f64) -> Self {
        let n = op.dim();
        let b = op.nx.min(n.saturating_sub(1)).max(1);
        let w = b + 1;
        let mut band = vec![T::ZERO; n * w];
        for p in 0..n {
            band[p * w] = T::from_complex(Complex64::new(op.diag[p] - sigma, 0.0));
            if p % op.nx + 1 < op.nx && p + 1 < n {
                band[p * w + 1] = T::from_complex(op.east[p]);
            }
            if p + op.nx < n && op.nx <= b {
                band[p * w + op.nx] = T::from_complex(op.north[p]);
            }
        }
        let tiny = f64::EPSILON * norm.max(f64::MIN_POSITIVE);
        let mut d_all = vec![0.0; n];
        let mut negatives = 0;
        let mut growth: f64 = 0.0;
        for p in 0..n {
            let mut d = band[p * w].re();
            growth = growth.max(d.abs());
            if d.abs() < tiny {
                d = if d < 0.0 { -tiny } else { tiny };
            }
            if d < 0.0 {
                negatives += 1;
            }
            d_all[p] = d;
            let last = b.min(n - 1 - p);
            let (head, tail) = band.split_at_mut((p + 1) * w);
            let row = &head[p * w..];
            for s in 1..=last {
                let a = row[s];
                if a == T::ZERO {
                    continue;
                }
                let f = a.conj() / d;
                let target = &mut tail[(s - 1) * w..(s - 1) * w + (last - s + 1)];
                for (t, src) in target.iter_mut().zip(&row[s..=last]) {
                    *t = *t - f * *src;
                }
            }
        }
        Self { n, b, band, d: d_all, negatives, growth }
    }

    /// Overwrites `x` with `(H − σ I)^{-1} x`.
    fn solve(&self, x: &mut [T]) {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        for p in 0..n {
            let last = b.min(n - 1 - p);
            let xp = x[p];
            for s in 1..=last {
                let a = self.band[p * w + s];
                x[p + s] = x[p + s] - a.conj() * xp / self.d[p];
            }
        }
        for p in 0..n {
            x[p] = x[p] / self.d[p];
        }
        for p in (0..n).rev() {
            let last = b.min(n - 1 - p);
            let mut acc = x[p];
            for s in 1..=last {
                acc = acc - self.band[p * w + s] * x[p + s] / self.d[p];
            }
            x[p] = acc;
        }
    }
}

fn negative_inertia<T: Scalar>(op: &LatticeOperator, sigma: f64, norm: f64) -> (usize, f64) {
    let f = BandLdl::<T>::factor(op, sigma, norm);
    (f.negatives, f.growth)
}

fn apply_t<T: Scalar>(op: &LatticeOperator, u: &[T], out: &mut [T]) {
    let n = op.dim();
    let nx = op.nx;
    for p in 0..n {
        let mut acc = u[p] * op.diag[p];
        let i = p % nx;
        if i + 1 < nx {
            acc = acc + T::from_complex(op.east[p]) * u[p + 1];
        }
        if i > 0 {
            acc = acc + T::from_complex(op.east[p - 1].conj()) * u[p - 1];
        }
        if p + nx < n {
            acc = acc + T::from_complex(op.north[p]) * u[p + nx];
        }
        if p >= nx {
            acc = acc + T::from_complex(op.north[p - nx].conj()) * u[p - nx];
        }
        out[p] = acc;
    }
}

/// Ground pair by shifted inverse iteration with shifts certified below `E_1`
/// by inertia.
fn ground_by_inverse_iteration<T: Scalar>(op: &LatticeOperator, tol: f64) -> Result<(f64, Vec<Complex64>, f64)> {
    let n = op.dim();
    let norm = op.norm_bound();
    let mut sigma = (0..n)
        .map(|p| {
            let (i, j) = (p % op.nx, p / op.nx);
            let mut r = op.east[p].norm() + op.north[p].norm();
            if i > 0 {
                r += op.east[p - 1].norm();
            }
            if j > 0 {
                r += op.north[p - op.nx].norm();
            }
            op.diag[p] - r
        })
        .fold(f64::INFINITY, f64::min)
        - 1e-3 * norm.max(1.0);
    let mut rng = aux_stream(0x600D, n as u64);
    let mut v: Vec<T> = (0..n)
        .map(|_| T::from_complex(Complex64::new(1.0 + 0.1 * (rng.random::<f64>() - 0.5), 0.0)))
        .collect();
    let mut hv = vec![T::ZERO; n];
    let mut factor = BandLdl::<T>::factor(op, sigma, norm);
    let mut theta = f64::INFINITY;
    let mut res = f64::INFINITY;
    for _ in 0..200 {
        for _ in 0..3 {
            factor.solve(&mut v);
            let nrm = v.iter().map(|x| x.abs2()).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x = *x / nrm);
        }
        apply_t(op, &v, &mut hv);
        theta = v.iter().zip(&hv).map(|(a, b)| (a.conj() * *b).re()).sum::<f64>();
        res = v.iter().zip(&hv).map(|(a, b)| (*b - *a * theta).abs2()).sum::<f64>().sqrt();
        if res <= tol {
            return Ok((theta, v.iter().map(|x| x.to_complex()).collect(), res));
        }
        // Move the shift toward the Rayleigh quotient while inertia certifies it below E_1.
        let mut step = 0.9;
        loop {
            let trial = sigma + step * (theta - res - sigma).max(0.0);
            if trial <= sigma {
                break;
            }
            let f = BandLdl::<T>::factor(op, trial, norm);
            if f.negatives == 0 {
                sigma = trial;
                factor = f;
                break;
            }
            step *= 0.5;
            if step < 1e-3 {
                break;
            }
        }
    }
    Err(Error::NoConvergence { iterations: 600, residual: res.min(theta.abs() + res) })
}

/// Relative shift used to count ties at the threshold as "≤ E".
pub const TIE_SHIFT: f64 = 1e-9;

/// Number of eigenvalues `≤ e`, with multiplicity.
pub fn count_below(op: &LatticeOperator, e: f64) -> Result<usize> {
    Ok(count_below_shifted(op, e)?.0)
}

/// Count of eigenvalues below `e + shift` together with the shift used.
///
/// The factorization is unpivoted; when a pivot grows so large that rounding
/// could flip the sign of a pivot near the threshold, the shift is enlarged
/// tenfold (at most three times).
pub fn count_below_shifted(op: &LatticeOperator, e: f64) -> Result<(usize, f64)> {
    if !e.is_finite() {
        return Err(Error::InvalidParameter(format!("threshold {e} is not finite")));
    }
    let norm = op.norm_bound();
    if e >= norm {
        return Ok((op.dim(), TIE_SHIFT * norm));
    }
    let mut shift = TIE_SHIFT * norm;
    let real = op.is_real();
    for attempt in 0..4 {
        let (count, growth) = if real {
            negative_inertia::<f64>(op, e + shift, norm)
        } else {
            negative_inertia::<Complex64>(op, e + shift, norm)
        };
        if 1e3 * f64::EPSILON * growth < shift || attempt == 3 {
            if attempt == 3 && 1e3 * f64::EPSILON * growth >= shift {
                log::warn!("inertia count at E={e} has pivot growth {growth:e}; count may be inexact");
            }
            return Ok((count, shift));
        }
        shift *= 10.0;
    }
    unreachable!("loop returns on the last attempt")
}

/// Counts for an ascending list of thresholds.
pub fn count_below_many(op: &LatticeOperator, energies: &[f64]) -> Result<Vec<usize>> {
    energies.iter().map(|&e| count_below(op, e)).collect()
}

/// Dense count of eigenvalues below `e + shift`.
pub fn dense_count_below(eigenvalues: &[f64], e: f64, shift: f64) -> usize {
    eigenvalues.iter().filter(|&&l| l < e + shift).count()
}

/// Dense solution of `(H + λ) X = B` used by the resolvent checks.
pub fn dense_resolvent(op: &LatticeOperator, lambda: f64) -> Result<DMatrix<Complex64>> {
    check_dense(op)?;
    let mut m = op.to_dense();
    for i in 0..m.nrows() {
        m[(i, i)] += Complex64::new(lambda, 0.0);
    }
    m.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::InvalidParameter(format!("H + {lambda} is not positive definite")))
}

/// Rayleigh quotient `⟨v, H v⟩ / ⟨v, v⟩`.
pub fn rayleigh_quotient(op: &LatticeOperator, v: &[Complex64]) -> Result<f64> {
    let hv = op.apply(v)?;
    Ok(dot(v, &hv).re / norm_sqr(v))
}

/// Converts a vector to an nalgebra column.
pub fn to_dvector(v: &[Complex64]) -> DVector<Complex64> {
    DVector::from_column_slice(v)
}
