//! Analytic affine gradients vs. central finite differences.
//!
//! The oracle re-implements the forward pass from public pieces only
//! (projection, affine, normalize, offset, direct-formula entropy), so it
//! stays independent of the gradient code it checks.

use panda_core::adapt::{generate_negatives, loss_and_grad, Ablation, AdaptState};
use panda_core::debias::{normalize, TextBank};
use panda_core::rng::substream;
use panda_core::tensor::ImageTensor;
use panda_core::world::{affine_normalize, make_world, sample_stream, FrozenEncoder, World, WorldSpec};
use rand::Rng;
use rand_distr::StandardNormal;

const EPS: f64 = 1e-4;
const REL_TOL: f64 = 1e-4;
// Central differences at eps = 1e-4 carry ~1e-6 truncation noise of their
// own; coordinates below this floor are checked absolutely against it.
const DENOM_FLOOR: f64 = 1e-2;

/// Bank whose class directions are tightly clustered, so similarity gaps
/// are small and the softmax sits in its responsive range.
fn tight_bank(dim: usize, num_classes: usize, rng: &mut impl Rng) -> TextBank {
    let hub: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let hub = normalize(&hub).unwrap();
    let vectors: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| {
            let jitter: Vec<f64> = (0..dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 0.05)
                .collect();
            let mixed: Vec<f64> = hub.iter().zip(&jitter).map(|(h, j)| h + j).collect();
            normalize(&mixed).unwrap()
        })
        .collect();
    let names = (0..num_classes).map(|c| format!("c{c}")).collect();
    TextBank::new(vectors, names).unwrap()
}

/// Independent forward: mean entropy of the batch under given affine
/// parameters. Recomputes the prototype from the negatives at those same
/// parameters (the canonical gradient-through-prototype path).
fn oracle_loss(
    encoder: &FrozenEncoder,
    bank_vectors: &[Vec<f64>],
    batch: &[ImageTensor],
    negatives: &[ImageTensor],
    gamma: &[f64],
    delta: &[f64],
    beta: f64,
) -> f64 {
    let embed = |img: &ImageTensor| -> Vec<f64> {
        let z = encoder.project(img).unwrap();
        affine_normalize(&z, gamma, delta).unwrap()
    };
    let vs: Vec<Vec<f64>> = batch.iter().map(embed).collect();
    let prototype: Option<Vec<f64>> = if negatives.is_empty() {
        None
    } else {
        let ns: Vec<Vec<f64>> = negatives.iter().map(embed).collect();
        let dim = ns[0].len();
        let mut acc = vec![0.0f64; dim];
        for n in &ns {
            for (a, x) in acc.iter_mut().zip(n) {
                *a += x;
            }
        }
        for a in acc.iter_mut() {
            *a /= ns.len() as f64;
        }
        Some(acc)
    };
    let mut total = 0.0f64;
    for v in &vs {
        let d: Vec<f64> = match &prototype {
            Some(p) => v.iter().zip(p).map(|(x, n)| x - beta * n).collect(),
            None => v.clone(),
        };
        let logits: Vec<f64> = bank_vectors
            .iter()
            .map(|t| 100.0 * d.iter().zip(t).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        // direct-formula entropy; logits stay well inside exp range here
        let denom: f64 = logits.iter().map(|&l| l.exp()).sum();
        let h: f64 = -logits
            .iter()
            .map(|&l| {
                let p = l.exp() / denom;
                if p > 0.0 {
                    p * p.ln()
                } else {
                    0.0
                }
            })
            .sum::<f64>();
        total += h;
    }
    total / vs.len() as f64
}

fn check_config(
    world: &World,
    bank: &TextBank,
    config_idx: u64,
    beta: f64,
    m: usize,
    batch_size: usize,
) {
    let stream = sample_stream(world, batch_size, "d0", 1000 + config_idx).unwrap();
    let images: Vec<ImageTensor> = stream.iter().map(|s| s.image.clone()).collect();
    let ablation = if m == 0 {
        Ablation::NoPanda
    } else {
        Ablation::Full
    };
    let state = AdaptState::new(world.encoder(), 1e-3, beta, m, ablation).unwrap();
    let (negatives, _) = generate_negatives(&state, &images, 8, 77 + config_idx).unwrap();
    let (_, grad_gamma, grad_delta) =
        loss_and_grad(&state, &images, &negatives, world.encoder(), bank, true).unwrap();
    let bank_vectors: Vec<Vec<f64>> = bank.embeddings().to_vec();
    let dim = state.gamma.len();
    let f = |gamma: &[f64], delta: &[f64]| {
        oracle_loss(
            world.encoder(),
            &bank_vectors,
            &images,
            &negatives,
            gamma,
            delta,
            beta,
        )
    };
    for k in 0..dim {
        let mut g_plus = state.gamma.clone();
        let mut g_minus = state.gamma.clone();
        g_plus[k] += EPS;
        g_minus[k] -= EPS;
        let fd = (f(&g_plus, &state.delta) - f(&g_minus, &state.delta)) / (2.0 * EPS);
        let rel = (grad_gamma[k] - fd).abs() / grad_gamma[k].abs().max(fd.abs()).max(DENOM_FLOOR);
        assert!(
            rel < REL_TOL,
            "config {config_idx} gamma[{k}]: analytic {} vs fd {fd} (rel {rel})",
            grad_gamma[k]
        );
        let mut d_plus = state.delta.clone();
        let mut d_minus = state.delta.clone();
        d_plus[k] += EPS;
        d_minus[k] -= EPS;
        let fd = (f(&state.gamma, &d_plus) - f(&state.gamma, &d_minus)) / (2.0 * EPS);
        let rel = (grad_delta[k] - fd).abs() / grad_delta[k].abs().max(fd.abs()).max(DENOM_FLOOR);
        assert!(
            rel < REL_TOL,
            "config {config_idx} delta[{k}]: analytic {} vs fd {fd} (rel {rel})",
            grad_delta[k]
        );
    }
}

fn random_world(rng: &mut impl Rng, seed: u64) -> World {
    make_world(&WorldSpec {
        num_classes: rng.random_range(2..=4),
        image_size: 16,
        channels: 1,
        feature_dim: rng.random_range(6..=9),
        corruption_strength: rng.random_range(0.0..2.0),
        spurious_align: rng.random_range(0.0..1.0),
        seed,
    })
    .unwrap()
}

#[test]
fn gradients_match_finite_differences_across_configurations() {
    let mut rng = substream(99, "gradcheck");
    for idx in 0..12u64 {
        let world = random_world(&mut rng, 500 + idx);
        let beta = if idx % 4 == 0 {
            0.0
        } else {
            rng.random_range(0.1..1.0)
        };
        let m = if idx % 5 == 0 {
            0
        } else {
            rng.random_range(1..=3)
        };
        let batch = rng.random_range(4..=8);
        // alternate between the world's own bank (sharp similarity gaps)
        // and a tightly clustered bank (softmax in its responsive range)
        if idx % 2 == 0 {
            let bank = world.bank().clone();
            check_config(&world, &bank, idx, beta, m, batch);
        } else {
            let bank = tight_bank(world.encoder().feature_dim(), 4, &mut rng);
            check_config(&world, &bank, idx, beta, m, batch);
        }
    }
}

#[test]
fn stopped_prototype_gradients_match_frozen_prototype_differences() {
    // With the prototype branch stopped, the analytic gradients must match
    // finite differences of a loss whose prototype is pinned at the base
    // parameters.
    let mut rng = substream(123, "gradcheck-frozen");
    let world = random_world(&mut rng, 900);
    let stream = sample_stream(&world, 6, "d1", 77).unwrap();
    let images: Vec<ImageTensor> = stream.iter().map(|s| s.image.clone()).collect();
    let state = AdaptState::new(world.encoder(), 1e-3, 0.6, 2, Ablation::Full).unwrap();
    let (negatives, _) = generate_negatives(&state, &images, 8, 3).unwrap();
    let (_, grad_gamma, grad_delta) = loss_and_grad(
        &state,
        &images,
        &negatives,
        world.encoder(),
        world.bank(),
        false,
    )
    .unwrap();
    // frozen prototype at base parameters
    let embed_base = |img: &ImageTensor| {
        let z = world.encoder().project(img).unwrap();
        affine_normalize(&z, &state.gamma, &state.delta).unwrap()
    };
    let ns: Vec<Vec<f64>> = negatives.iter().map(embed_base).collect();
    let dim = ns[0].len();
    let mut frozen = vec![0.0f64; dim];
    for n in &ns {
        for (a, x) in frozen.iter_mut().zip(n) {
            *a += x;
        }
    }
    for a in frozen.iter_mut() {
        *a /= ns.len() as f64;
    }
    let bank_vectors: Vec<Vec<f64>> = world.bank().embeddings().to_vec();
    let loss_frozen = |gamma: &[f64], delta: &[f64]| -> f64 {
        let mut total = 0.0;
        for img in &images {
            let z = world.encoder().project(img).unwrap();
            let v = affine_normalize(&z, gamma, delta).unwrap();
            let d: Vec<f64> = v.iter().zip(&frozen).map(|(x, n)| x - 0.6 * n).collect();
            let logits: Vec<f64> = bank_vectors
                .iter()
                .map(|t| 100.0 * d.iter().zip(t).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let denom: f64 = logits.iter().map(|&l| l.exp()).sum();
            total += -logits
                .iter()
                .map(|&l| {
                    let p = l.exp() / denom;
                    p * p.ln()
                })
                .sum::<f64>();
        }
        total / images.len() as f64
    };
    for k in 0..dim {
        let mut g_plus = state.gamma.clone();
        let mut g_minus = state.gamma.clone();
        g_plus[k] += EPS;
        g_minus[k] -= EPS;
        let fd = (loss_frozen(&g_plus, &state.delta) - loss_frozen(&g_minus, &state.delta))
            / (2.0 * EPS);
        let rel = (grad_gamma[k] - fd).abs() / grad_gamma[k].abs().max(fd.abs()).max(1e-3);
        assert!(rel < REL_TOL, "gamma[{k}] frozen-prototype mismatch: rel {rel}");
        let mut d_plus = state.delta.clone();
        let mut d_minus = state.delta.clone();
        d_plus[k] += EPS;
        d_minus[k] -= EPS;
        let fd = (loss_frozen(&state.gamma, &d_plus) - loss_frozen(&state.gamma, &d_minus))
            / (2.0 * EPS);
        let rel = (grad_delta[k] - fd).abs() / grad_delta[k].abs().max(fd.abs()).max(1e-3);
        assert!(rel < REL_TOL, "delta[{k}] frozen-prototype mismatch: rel {rel}");
    }
}

#[test]
fn no_averaging_with_m_one_matches_full() {
    let world = random_world(&mut substream(5, "gradcheck-pick"), 901);
    let stream = sample_stream(&world, 8, "d0", 55).unwrap();
    let images: Vec<ImageTensor> = stream.iter().map(|s| s.image.clone()).collect();
    let labels: Vec<usize> = stream.iter().map(|s| s.label).collect();
    let full = AdaptState::new(world.encoder(), 1e-3, 0.5, 1, Ablation::Full).unwrap();
    let pick = AdaptState::new(world.encoder(), 1e-3, 0.5, 1, Ablation::NoAveraging).unwrap();
    let (next_full, rep_full) = panda_core::adapt::adapt_step(
        &full,
        &images,
        &labels,
        world.encoder(),
        world.bank(),
        8,
        42,
        true,
    )
    .unwrap();
    let (next_pick, rep_pick) = panda_core::adapt::adapt_step(
        &pick,
        &images,
        &labels,
        world.encoder(),
        world.bank(),
        8,
        42,
        true,
    )
    .unwrap();
    assert_eq!(next_full.gamma, next_pick.gamma);
    assert_eq!(next_full.delta, next_pick.delta);
    assert_eq!(rep_full.predictions, rep_pick.predictions);
}
