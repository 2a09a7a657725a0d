use std::time::Instant;

use geoses::spatial::{
    gwr_fit, grid_polygons, morans_i, morans_i_statistic, ols_simple, queen_contiguity, GwrConfig, Kernel,
    MoranConfig, SpatialError, SpatialWeights, DEFAULT_QUANTUM,
};
use geoses::stats;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("u{i}")).collect()
}

fn grid_weights(cols: usize, rows: usize) -> SpatialWeights {
    queen_contiguity(&ids(cols * rows), &grid_polygons(cols, rows), DEFAULT_QUANTUM)
        .unwrap()
        .0
}

fn path(n: usize) -> SpatialWeights {
    let nb = (0..n)
        .map(|i| [i.checked_sub(1), (i + 1 < n).then_some(i + 1)].into_iter().flatten().collect())
        .collect();
    SpatialWeights::from_neighbors(ids(n), nb).unwrap()
}

/// Queen degree of cell (c, r) on a cols × rows grid, counted directly.
fn expected_degree(c: usize, r: usize, cols: usize, rows: usize) -> usize {
    let span = |v: usize, len: usize| (v.saturating_sub(1)..=(v + 1).min(len - 1)).count();
    span(c, cols) * span(r, rows) - 1
}

#[test]
fn three_by_three_degrees() {
    let w = grid_weights(3, 3);
    assert_eq!(w.degrees(), vec![3, 5, 3, 5, 8, 5, 3, 5, 3]);
    assert!(w.is_symmetric());
}

#[test]
fn alternating_path() {
    let i = morans_i_statistic(&[1.0, -1.0, 1.0, -1.0], &path(4)).unwrap();
    assert!((i + 1.0).abs() < 1e-12);
}

#[test]
fn permutation_p_is_seeded_and_thread_independent() {
    let w = grid_weights(8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v: Vec<f64> = (0..64).map(|i| (i % 8) as f64 + rng.gen_range(0.0..3.0)).collect();
    let cfg = MoranConfig::seeded(99);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| morans_i(&v, &w, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    let p = a.pseudo_p.unwrap();
    assert!((1.0 / 1000.0..=1.0).contains(&p));
    assert!(p <= 0.05);
    let other = morans_i(&v, &w, &MoranConfig::seeded(100)).unwrap();
    assert_eq!(other.i, a.i);
}

#[test]
fn permutation_test_is_calibrated_under_the_null() {
    let w = grid_weights(7, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let base: Vec<f64> = (0..49).map(|_| rng.gen_range(0.0..1.0)).collect();
    let trials = 100;
    let mut above = 0;
    for t in 0..trials {
        let mut v = base.clone();
        v.shuffle(&mut rng);
        let p = morans_i(&v, &w, &MoranConfig::seeded(t)).unwrap().pseudo_p.unwrap();
        if p > 0.01 {
            above += 1;
        }
    }
    assert!(above >= 95, "{above} of {trials}");
}

#[test]
fn ols_on_noise_has_slope_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..400).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..400).map(|_| rng.gen_range(0.0..1.0)).collect();
    let f = ols_simple(&y, &x).unwrap();
    let mx = stats::mean(&x);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let se = (f.rss / (400.0 - 2.0) / sxx).sqrt();
    assert!(f.coefficients[0][1].abs() < 3.0 * se);
}

fn scattered(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)])
        .collect()
}

#[test]
fn uniform_full_support_equals_ols() {
    let n = 80;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.7 * v + rng.gen_range(-1.0..1.0)).collect();
    let cfg = GwrConfig {
        neighbor_count: n,
        kernel: Kernel::Uniform,
    };
    let g = gwr_fit(&y, &x, &scattered(n, 4), &cfg).unwrap();
    let o = ols_simple(&y, &x).unwrap();
    for c in &g.coefficients {
        assert!((c[0] - o.coefficients[0][0]).abs() < 1e-9);
        assert!((c[1] - o.coefficients[0][1]).abs() < 1e-9);
    }
    for (a, b) in g.fitted.iter().zip(&o.fitted) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn exact_line_is_reproduced_for_any_k() {
    let n = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let coords = scattered(n, 5);
    for k in [5, 12, 30, 59] {
        let g = gwr_fit(&y, &x, &coords, &GwrConfig::new(k)).unwrap();
        assert!(g.residuals.iter().all(|r| r.abs() < 1e-9), "k = {k}");
        assert!(g.coefficients.iter().all(|c| (c[1] - 2.0).abs() < 1e-9 && (c[0] - 1.0).abs() < 1e-9));
    }
}

/// Two clusters far apart: slope 1 on the left, slope 3 on the right.
fn two_regimes(n_per: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<[f64; 2]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for (offset, slope, icpt) in [(0.0, 1.0, 0.5), (1000.0, 3.0, -2.0)] {
        for _ in 0..n_per {
            let xi = rng.gen_range(0.0..10.0);
            x.push(xi);
            y.push(icpt + slope * xi + 0.05 * rng.gen_range(-1.0..1.0));
            c.push([offset + rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0)]);
        }
    }
    (y, x, c)
}

#[test]
fn two_regime_recovery_at_n_500() {
    let (y, x, c) = two_regimes(250, 8);
    let start = Instant::now();
    let g = gwr_fit(&y, &x, &c, &GwrConfig::new(50)).unwrap();
    let o = ols_simple(&y, &x).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    for (i, coef) in g.coefficients.iter().enumerate() {
        let target = if i < 250 { 1.0 } else { 3.0 };
        assert!((coef[1] - target).abs() < 0.05, "unit {i}: {}", coef[1]);
    }
    assert!(g.aicc < o.aicc);
    assert!(g.hat_trace >= 2.0 - 1e-9 && g.hat_trace <= 500.0);
    assert!(elapsed < 30.0);
}

#[test]
fn too_flexible_model_is_rejected() {
    let n = 6;
    let x: Vec<f64> = (0..n).map(|i| (i * i) as f64).collect();
    let y: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64).collect();
    let coords: Vec<[f64; 2]> = (0..n).map(|i| [i as f64 * 100.0, 0.0]).collect();
    let err = gwr_fit(&y, &x, &coords, &GwrConfig::new(3)).unwrap_err();
    assert!(matches!(err, SpatialError::TooFlexible { .. } | SpatialError::SingularLocalDesign { .. }));
}

#[test]
fn duplicate_coordinates_are_jittered_with_a_warning() {
    let n = 40;
    let mut coords = scattered(n, 9);
    coords[7] = coords[3];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| v + rng.gen_range(0.0..0.1)).collect();
    let a = gwr_fit(&y, &x, &coords, &GwrConfig::new(10)).unwrap();
    assert_eq!(a.warnings.len(), 1);
    assert_eq!(a, gwr_fit(&y, &x, &coords, &GwrConfig::new(10)).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn queen_grid_matches_counting(cols in 1usize..7, rows in 1usize..7) {
        let w = grid_weights(cols, rows);
        prop_assert!(w.is_symmetric());
        prop_assert_eq!(w.degrees().iter().sum::<usize>() % 2, 0);
        for r in 0..rows {
            for c in 0..cols {
                prop_assert_eq!(w.degree(r * cols + c), expected_degree(c, r, cols, rows));
            }
        }
    }

    #[test]
    fn moran_is_affine_invariant(
        v in prop::collection::vec(-100.0f64..100.0, 16),
        a in prop::sample::select(vec![-7.5, -1.0, 0.5, 3.0, 250.0]),
        b in -1e3f64..1e3,
    ) {
        let w = grid_weights(4, 4);
        if let Ok(i0) = morans_i_statistic(&v, &w) {
            let t: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            let i1 = morans_i_statistic(&t, &w).unwrap();
            prop_assert!((i0 - i1).abs() < 1e-12, "{} vs {}", i0, i1);
        }
    }

    #[test]
    fn pseudo_p_is_bounded(v in prop::collection::vec(-10.0f64..10.0, 9), seed in any::<u64>()) {
        let w = grid_weights(3, 3);
        let cfg = MoranConfig { permutations: 99, ..MoranConfig::seeded(seed) };
        if let Ok(r) = morans_i(&v, &w, &cfg) {
            let p = r.pseudo_p.unwrap();
            prop_assert!((0.01..=1.0).contains(&p));
        }
    }

    #[test]
    fn gwr_hat_trace_is_bounded(seed in 0u64..1000, k in 6usize..30) {
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        match gwr_fit(&y, &x, &scattered(n, seed), &GwrConfig::new(k)) {
            Ok(f) => {
                prop_assert!(f.hat_trace >= 2.0 - 1e-9 && f.hat_trace <= n as f64 + 1e-9);
                for (i, r) in f.residuals.iter().enumerate() {
                    prop_assert!((r - (f.observed[i] - f.fitted[i])).abs() == 0.0);
                }
                let sd = stats::std_dev(&f.standardized_residuals);
                prop_assert!((sd - 1.0).abs() < 1e-12);
            }
            Err(SpatialError::TooFlexible { hat_trace, .. }) => prop_assert!(hat_trace > 2.0),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }
}
