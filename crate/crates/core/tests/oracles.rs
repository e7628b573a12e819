use abflux::bounds::{
    estimate_s0, feynman_hellmann_potential, norm_psi_psi, residual_at, s0_from_betas, trial_at, WeylTrial,
    beta_samples, FH_TAU,
};
use abflux::geometry::{BoxGeometry, FluxConfiguration, FluxLaw, FluxPoint, ModelSpec, ModelTag};
use abflux::hardy::build_potential;
use abflux::ids::{bracket, estimate_ids, rough_bound_constant, small_e1_probability};
use abflux::lattice::{free_dirichlet_eigenvalues, Boundary, Grid};
use abflux::quadrature::QuadratureScheme;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn explicit(k: u32, points: Vec<FluxPoint>) -> FluxConfiguration {
    FluxConfiguration::new(BoxGeometry::new(k), ModelTag::Explicit, 0, points).unwrap()
}

fn poisson(rho: f64, alpha: f64) -> ModelSpec {
    ModelSpec::Poisson { rho, flux: FluxLaw::Constant { value: alpha } }
}

#[test]
fn psi_psi_single_flux_matches_monte_carlo() {
    let alpha = 0.75;
    let config = explicit(0, vec![FluxPoint::new(0.0, 0.0, alpha)]);
    let quad = norm_psi_psi(&config, &QuadratureScheme::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let x: f64 = rng.random::<f64>() - 0.5;
        let y: f64 = rng.random::<f64>() - 0.5;
        let f = alpha * alpha * (x * x + y * y).powf(alpha - 1.0);
        s += f;
        s2 += f * f;
    }
    let mean = s / n as f64;
    let sigma = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    let q2 = quad.value * quad.value;
    assert!((q2 - mean).abs() <= 3.0 * sigma, "quadrature {q2} vs Monte Carlo {mean} ± {sigma}");
}

/// `(−i∇ − a)² v − ξ² v` by central differences, with `a = Σ α (−y, x)/r²` around each point.
fn fd_residual(config: &FluxConfiguration, trial: &WeylTrial, x: f64, y: f64, h: f64) -> Complex64 {
    let v = |a: f64, b: f64| trial_at(config, trial, a, b).unwrap();
    let c = v(x, y);
    let lap = (v(x + h, y) + v(x - h, y) + v(x, y + h) + v(x, y - h) - 4.0 * c) / (h * h);
    let vx = (v(x + h, y) - v(x - h, y)) / (2.0 * h);
    let vy = (v(x, y + h) - v(x, y - h)) / (2.0 * h);
    let (mut ax, mut ay) = (0.0, 0.0);
    for p in config.points() {
        let (dx, dy) = (x - p.x, y - p.y);
        let r2 = dx * dx + dy * dy;
        ax -= p.alpha * dy / r2;
        ay += p.alpha * dx / r2;
    }
    -lap + 2.0 * Complex64::i() * (ax * vx + ay * vy) + (ax * ax + ay * ay - trial.xi * trial.xi) * c
}

#[test]
fn residual_identity_matches_finite_differences() {
    let config = explicit(
        1,
        vec![FluxPoint::new(0.1, 0.2, 0.3), FluxPoint::new(-0.9, 0.8, 0.45), FluxPoint::new(1.2, -1.1, 0.7)],
    );
    let trial = WeylTrial::new(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut errors = [0.0f64; 2];
    let mut scale = 0.0f64;
    let mut used = 0;
    while used < 1000 {
        let x = rng.random_range(-1.1..1.1);
        let y = rng.random_range(-1.1..1.1);
        // Stay off the flux points and off the lines where the cutoff's third derivative jumps.
        let near_kink = |t: f64| [0.5, 1.0].iter().any(|b| (t.abs() - b).abs() < 0.01);
        if config.points().iter().any(|p| (x - p.x).hypot(y - p.y) < 0.15) || near_kink(x) || near_kink(y) {
            continue;
        }
        let exact = residual_at(&config, &trial, x, y).unwrap();
        scale = scale.max(exact.norm());
        for (i, h) in [2e-3, 1e-3].into_iter().enumerate() {
            errors[i] = errors[i].max((fd_residual(&config, &trial, x, y, h) - exact).norm());
        }
        used += 1;
    }
    let order = (errors[0] / errors[1]).log2();
    assert!(order > 1.8 && order < 2.2, "observed order {order}, errors {errors:?}");
    assert!(errors[1] < 1e-4 * scale, "error {} against scale {scale}", errors[1]);
}

#[test]
fn feynman_hellmann_is_second_order_in_tau() {
    let grid = Grid::new(BoxGeometry::new(0), 19).unwrap();
    let config = explicit(0, vec![FluxPoint::new(0.05, -0.1, 0.5), FluxPoint::new(-0.2, 0.25, 0.3)]);
    let v = build_potential(&config, &grid).unwrap().values;
    assert!(v.iter().any(|x| *x > 0.0));
    let coarse = feynman_hellmann_potential(&v, &grid, 8.0 * FH_TAU).unwrap();
    let mid = feynman_hellmann_potential(&v, &grid, 4.0 * FH_TAU).unwrap();
    let fine = feynman_hellmann_potential(&v, &grid, FH_TAU).unwrap();
    assert!(fine.abs_error <= 1e-4);
    // Richardson: halving τ divides the O(τ²) error by four.
    let richardson = (4.0 * mid.derivative - coarse.derivative) / 3.0;
    assert!((richardson - fine.mean_v_half).abs() <= (coarse.derivative - fine.mean_v_half).abs().max(1e-9));
    assert!(coarse.abs_error >= mid.abs_error - 1e-9);
}

#[test]
fn s0_estimate_contains_large_sample_value() {
    let model = poisson(1.0, 0.5);
    let small = estimate_s0(&model, 2000, 3).unwrap();
    let large = s0_from_betas(&beta_samples(&model, 1_000_000, 99).unwrap(), 99).unwrap();
    assert!(
        small.ci_low <= large.s0 && large.s0 <= small.ci_high,
        "{:?} does not contain {}",
        (small.ci_low, small.ci_high),
        large.s0
    );
}

#[test]
fn small_e1_frequency_against_empty_box_probability() {
    let k = 1;
    let m = 4;
    let grid = Grid::new(BoxGeometry::new(k), m).unwrap();
    let free_e1 = free_dirichlet_eigenvalues(grid.side_nodes(Boundary::Dirichlet), grid.h())[0];
    let eps = [0.5 * free_e1, 0.9 * free_e1, 1.1 * free_e1, 2.0 * free_e1];

    let zero = small_e1_probability(&poisson(1.0, 0.0), k, m, &eps, 0..50, 1).unwrap();
    assert_eq!(zero.frequency, vec![0.0, 0.0, 1.0, 1.0]);

    let rho = 0.1;
    let p = small_e1_probability(&poisson(rho, 0.5), k, m, &eps, 0..2000, 2).unwrap();
    assert!(p.frequency.windows(2).all(|w| w[0] <= w[1]));
    let empty = (-rho * 9.0_f64).exp();
    for i in 2..4 {
        assert!(p.high[i] >= empty, "{} < {empty}", p.high[i]);
    }
}

#[test]
fn doubling_samples_reduces_stderr_by_root_two() {
    let model = poisson(1.0, 0.5);
    let e = [0.8, 1.2, 1.6, 2.0];
    let mut ratios = Vec::new();
    for rep in 0..4u64 {
        let a = estimate_ids(&model, 1, Boundary::Neumann, 4, 200, &e, 100 + rep).unwrap();
        let b = estimate_ids(&model, 1, Boundary::Neumann, 4, 400, &e, 200 + rep).unwrap();
        for i in 0..e.len() {
            ratios.push(b.stderr[i] / a.stderr[i]);
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((0.6..=0.85).contains(&mean), "mean stderr ratio {mean}");
}

#[test]
fn raising_flux_never_raises_the_count() {
    let e = [0.3, 0.6, 1.0, 1.5, 2.5, 4.0];
    for bc in [Boundary::Neumann, Boundary::Dirichlet] {
        let free = estimate_ids(&poisson(1.0, 0.0), 1, bc, 6, 100, &e, 4).unwrap();
        let half = estimate_ids(&poisson(1.0, 0.5), 1, bc, 6, 100, &e, 4).unwrap();
        for (i, x) in e.iter().enumerate() {
            assert!(half.n_hat[i] <= free.n_hat[i], "{bc:?} E={x}: {} > {}", half.n_hat[i], free.n_hat[i]);
        }
    }
}

#[test]
fn ids_vanishes_below_the_free_dirichlet_ground_energy() {
    let grid = Grid::new(BoxGeometry::new(2), 4).unwrap();
    let e1 = free_dirichlet_eigenvalues(grid.side_nodes(Boundary::Dirichlet), grid.h())[0];
    let c = estimate_ids(&poisson(1.0, 0.3), 2, Boundary::Dirichlet, 4, 20, &[0.99 * e1], 8).unwrap();
    assert_eq!(c.n_hat, vec![0.0]);
}

#[test]
fn bracket_gap_shrinks_like_inverse_box_size() {
    let e = [1.0, 1.5, 2.0];
    let gap = |k: u32| {
        let b = bracket(&poisson(1.0, 0.0), k, 4, 1, &e, 0).unwrap();
        assert!(b.violations.is_empty());
        e.iter()
            .enumerate()
            .map(|(i, _)| (b.neumann.n_hat[i] - b.dirichlet.n_hat[i]) / b.neumann.n_hat[i])
            .sum::<f64>()
            / e.len() as f64
    };
    let (g3, g6) = (gap(3), gap(6));
    let ratio = g3 / g6;
    assert!((1.5..2.6).contains(&ratio), "gap ratio {ratio} ({g3}, {g6})");
}

#[test]
fn neumann_counts_stay_below_rough_bound() {
    let c6 = rough_bound_constant(2, 4).unwrap();
    let e = [0.25, 0.5, 1.0];
    let c = estimate_ids(&poisson(1.0, 0.5), 2, Boundary::Neumann, 4, 50, &e, 6).unwrap();
    assert!(c.n_hat.iter().all(|n| *n <= c6), "{:?} vs {c6}", c.n_hat);
}
