//! Monte Carlo agreement with the closed-form accuracies, unimodality of
//! the offset curve, and the high-dimensional reduction.

use panda_core::debias::normalize;
use panda_core::rng::substream;
use panda_core::theory::{
    acc_no_offset, acc_with_offset, mc_accuracy, optimal_beta, reduce_high_d, GaussianWorld,
};
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn mc_agrees_with_analytics_on_a_small_grid() {
    let samples = 400_000;
    let mut failures = Vec::new();
    for (ci, &s) in [0.5, 2.0].iter().enumerate() {
        for (cj, &r) in [0.0, 0.6].iter().enumerate() {
            for (ck, &beta) in [0.0, 0.6, 0.9].iter().enumerate() {
                let cell_seed = 3_000 + (ci * 100 + cj * 10 + ck) as u64;
                let world = GaussianWorld::scalar(s, r, beta).unwrap();
                let analytic = world.analytic_accuracy().unwrap();
                let (est, se) = mc_accuracy(&world, samples, cell_seed).unwrap();
                if (est - analytic).abs() > 3.0 * se {
                    failures.push(format!(
                        "s={s} r={r} beta={beta}: |{est} - {analytic}| > 3*{se}"
                    ));
                }
            }
        }
    }
    assert!(failures.is_empty(), "cells outside 3 sigma: {failures:?}");
}

#[test]
fn mc_agrees_in_eight_dimensions_with_isotropic_correlation() {
    let dim = 8;
    let mut rng = substream(4, "theory-highd");
    for (idx, &(s, r, beta)) in [(1.0, 0.6, 0.6), (2.0, 0.3, 0.5), (0.8, 0.0, 0.0)]
        .iter()
        .enumerate()
    {
        let mut r_matrix = vec![0.0f64; dim * dim];
        for i in 0..dim {
            r_matrix[i * dim + i] = r;
        }
        let t = {
            let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            normalize(&raw).unwrap()
        };
        let world = GaussianWorld::high_d(s, beta, t, r_matrix).unwrap();
        let analytic = acc_with_offset(s, world.correlation(), beta).unwrap();
        let (est, se) = mc_accuracy(&world, 400_000, 8_000 + idx as u64).unwrap();
        assert!(
            (est - analytic).abs() < 3.0 * se,
            "dim-8 cell {idx}: {est} vs {analytic} (se {se})"
        );
    }
}

#[test]
fn mc_peaks_at_beta_equals_r() {
    // At (s = 2, r = 0.6) the estimate at beta = r beats beta = r ± 0.3.
    // Common random numbers (same seed) keep the comparison tight.
    let samples = 10_000_000;
    let seed = 31;
    let at = |beta: f64| {
        let world = GaussianWorld::scalar(2.0, 0.6, beta).unwrap();
        mc_accuracy(&world, samples, seed).unwrap().0
    };
    let peak = at(0.6);
    assert!(peak > at(0.3), "beta = r must beat beta = r - 0.3");
    assert!(peak > at(0.9), "beta = r must beat beta = r + 0.3");
}

#[test]
fn analytic_beta_grid_argmax_lands_nearest_r() {
    let mut rng = substream(17, "theory-grid");
    for _ in 0..20 {
        let s: f64 = rng.random_range(0.3..4.0);
        let r: f64 = rng.random_range(0.0..0.95);
        let mut best = (0usize, f64::NEG_INFINITY);
        for k in 0..=10 {
            let beta = k as f64 / 10.0;
            let acc = acc_with_offset(s, r, beta).unwrap();
            if acc > best.1 {
                best = (k, acc);
            }
        }
        let nearest = (r * 10.0).round() as usize;
        assert_eq!(
            best.0, nearest,
            "grid argmax must be the point nearest r = {r} (s = {s})"
        );
    }
}

#[test]
fn offset_curve_is_unimodal_on_grids() {
    let mut rng = substream(23, "theory-unimodal");
    for _ in 0..10 {
        let s: f64 = rng.random_range(0.3..4.0);
        let r: f64 = rng.random_range(0.0..0.95);
        let accs: Vec<f64> = (0..=40)
            .map(|k| acc_with_offset(s, r, k as f64 / 20.0).unwrap())
            .collect();
        // strictly increasing up to the max, strictly decreasing after
        let peak = accs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        for k in 1..=peak {
            assert!(accs[k] >= accs[k - 1]);
        }
        for k in peak + 1..accs.len() {
            assert!(accs[k] <= accs[k - 1]);
        }
        let _ = optimal_beta(&GaussianWorld::scalar(s, r, 0.0).unwrap()).unwrap();
    }
}

#[test]
fn quadratic_form_is_rotation_invariant() {
    let dim = 6;
    let mut rng = substream(29, "theory-rotation");
    for _ in 0..10 {
        // random symmetric R with spectral radius < 1
        let mut r_matrix = vec![0.0f64; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let x: f64 = rng.sample::<f64, _>(StandardNormal) * 0.15;
                r_matrix[i * dim + j] = x;
                r_matrix[j * dim + i] = x;
            }
        }
        let t = {
            let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            normalize(&raw).unwrap()
        };
        // random orthogonal Q via Gram-Schmidt of a Gaussian matrix
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(dim);
        while q.len() < dim {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            for prev in &q {
                let proj: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (x, p) in v.iter_mut().zip(prev) {
                    *x -= proj * p;
                }
            }
            if let Ok(u) = normalize(&v) {
                q.push(u);
            }
        }
        // t' = Q t, R' = Q R Qᵀ
        let t_rot: Vec<f64> = (0..dim)
            .map(|i| q[i].iter().zip(&t).map(|(a, b)| a * b).sum())
            .collect();
        let mut r_rot = vec![0.0f64; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = 0.0;
                for a in 0..dim {
                    for b in 0..dim {
                        acc += q[i][a] * r_matrix[a * dim + b] * q[j][b];
                    }
                }
                r_rot[i * dim + j] = acc;
            }
        }
        // symmetrize away rounding before validation
        for i in 0..dim {
            for j in 0..i {
                let mean = 0.5 * (r_rot[i * dim + j] + r_rot[j * dim + i]);
                r_rot[i * dim + j] = mean;
                r_rot[j * dim + i] = mean;
            }
        }
        let base = reduce_high_d(&t, &r_matrix).unwrap();
        let rotated = reduce_high_d(&t_rot, &r_rot).unwrap();
        assert!(
            (base - rotated).abs() < 1e-10,
            "rotation must preserve the effective correlation: {base} vs {rotated}"
        );
    }
}

#[test]
fn severity_two_matches_monte_carlo_tightly() {
    // generous budget pins the no-offset curve at s = 2
    let world = GaussianWorld::scalar(2.0, 0.0, 0.0).unwrap();
    let analytic = acc_no_offset(2.0).unwrap();
    let (est, se) = mc_accuracy(&world, 10_000_000, 77).unwrap();
    assert!(
        (est - analytic).abs() < 3.0 * se,
        "{est} vs {analytic} (se {se})"
    );
}

#[test]
fn five_cubed_grid_stays_within_three_sigma() {
    // the module's own acceptance oracle: a full 5x5x5 parameter grid
    let s_grid = [0.5, 1.0, 2.0, 3.0, 4.0];
    let r_grid = [0.0, 0.2, 0.4, 0.6, 0.8];
    let beta_grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let samples = 200_000;
    let mut cell = 0u64;
    for &s in &s_grid {
        for &r in &r_grid {
            for &beta in &beta_grid {
                let world = GaussianWorld::scalar(s, r, beta).unwrap();
                let analytic = acc_with_offset(s, r, beta).unwrap();
                let (est, se) =
                    mc_accuracy(&world, samples, 40_000 + cell).unwrap();
                assert!(
                    (est - analytic).abs() < 3.0 * se,
                    "cell (s={s}, r={r}, beta={beta}): {est} vs {analytic} (se {se})"
                );
                cell += 1;
            }
        }
    }
}
