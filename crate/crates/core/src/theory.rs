//! Closed-form accuracy of the Gaussian corruption model, with an
//! independent Monte Carlo verifier.
//!
//! The model: a class-relevant component `v_cls ~ N(0, 1)` plus an
//! independent corruption component `v_corr ~ N(0, s²)`, label
//! `y = sign(v_cls)`, classifier `sign(v)`. A negatively augmented feature
//! `n ~ N(0, s²)` is uncorrelated with `v_cls` and correlated with `v_corr`
//! at level `r`. Without offset the accuracy is
//! `1/2 + arctan(1/s)/π`; offsetting by `β·n` changes the effective
//! severity to `s·√(1−r²+(β−r)²)`, which is minimized — and the accuracy
//! maximized — at `β = r`.
//!
//! In D dimensions with correlation matrix `R` and unit classifier
//! direction `t`, everything reduces to the scalar case with
//! `r = tᵀRt`.
//!
//! `mc_accuracy` estimates the same probability by sampling the exact
//! reparametrization used in the model's derivation:
//! `v_cls = z₁`, `v_corr = s·z₂`, `n = s·r·z₂ + s·√(1−r²)·z₃` with
//! `z₁,z₂,z₃` i.i.d. standard normal. Sampling is sharded into
//! fixed-size blocks with per-shard substreams, so the merged estimate is
//! independent of worker-thread count.

use crate::debias::dot;
use crate::error::{Error, Result};
use crate::rng::substream_indexed;
use rand::Rng;
use rand_distr::StandardNormal;

/// Minimum Monte Carlo budget.
pub const MC_MIN_SAMPLES: usize = 10_000;

/// Samples per shard; fixed so results never depend on thread count.
const MC_SHARD_SIZE: usize = 1 << 18;

/// Parameters of the Gaussian corruption model.
#[derive(Debug, Clone)]
pub struct GaussianWorld {
    severity: f64,
    beta: f64,
    dim: usize,
    classifier: Vec<f64>,
    correlation: Vec<f64>, // dim × dim, row-major; [r] when dim == 1
}

impl GaussianWorld {
    /// One-dimensional model with scalar correlation `r`.
    pub fn scalar(severity: f64, r: f64, beta: f64) -> Result<Self> {
        validate_severity(severity)?;
        validate_correlation(r)?;
        if !beta.is_finite() {
            return Err(Error::NonFiniteLogits);
        }
        Ok(Self {
            severity,
            beta,
            dim: 1,
            classifier: vec![1.0],
            correlation: vec![r],
        })
    }

    /// D-dimensional model with unit classifier direction `t` and symmetric
    /// correlation matrix `r_matrix` (row-major D×D, entries in [−1, 1]).
    pub fn high_d(severity: f64, beta: f64, t: Vec<f64>, r_matrix: Vec<f64>) -> Result<Self> {
        validate_severity(severity)?;
        if !beta.is_finite() {
            return Err(Error::NonFiniteLogits);
        }
        let dim = t.len();
        let r = reduce_high_d(&t, &r_matrix)?;
        validate_correlation(r)?;
        Ok(Self {
            severity,
            beta,
            dim,
            classifier: t,
            correlation: r_matrix,
        })
    }

    pub fn severity(&self) -> f64 {
        self.severity
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classifier(&self) -> &[f64] {
        &self.classifier
    }

    /// Effective scalar correlation: `r` itself in one dimension, `tᵀRt`
    /// otherwise.
    pub fn correlation(&self) -> f64 {
        if self.dim == 1 {
            self.correlation[0]
        } else {
            quadratic_form(&self.classifier, &self.correlation)
        }
    }

    /// Analytic accuracy for this world's `(s, r, β)`.
    pub fn analytic_accuracy(&self) -> Result<f64> {
        acc_with_offset(self.severity, self.correlation(), self.beta)
    }

    /// Same world with a different offset ratio.
    pub fn with_beta(&self, beta: f64) -> Self {
        let mut w = self.clone();
        w.beta = beta;
        w
    }
}

fn validate_severity(s: f64) -> Result<()> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::NonPositiveSeverity(s));
    }
    Ok(())
}

fn validate_correlation(r: f64) -> Result<()> {
    if !(r.is_finite() && (0.0..1.0).contains(&r)) {
        return Err(Error::CorrelationOutOfRange(r));
    }
    Ok(())
}

/// Accuracy without offset: `1/2 + arctan(1/s)/π`, strictly in (1/2, 1).
pub fn acc_no_offset(severity: f64) -> Result<f64> {
    validate_severity(severity)?;
    Ok(0.5 + (1.0 / severity).atan() / std::f64::consts::PI)
}

/// Accuracy with offset ratio `beta`:
/// `1/2 + arctan(1 / (s·√(1−r²+(β−r)²)))/π`.
pub fn acc_with_offset(severity: f64, r: f64, beta: f64) -> Result<f64> {
    validate_severity(severity)?;
    validate_correlation(r)?;
    if !beta.is_finite() {
        return Err(Error::NonFiniteLogits);
    }
    if beta == 0.0 {
        // (1−r²) + r² is algebraically 1; short-circuit so the identity with
        // the no-offset formula holds exactly in floating point.
        return acc_no_offset(severity);
    }
    let effective = (1.0 - r * r + (beta - r) * (beta - r)).sqrt();
    Ok(0.5 + (1.0 / (severity * effective)).atan() / std::f64::consts::PI)
}

/// The offset ratio that maximizes accuracy: `r` (scalar) or `tᵀRt`
/// (high-dimensional).
///
/// Also sanity-checks on a β grid that no grid point beats `β = r`.
pub fn optimal_beta(world: &GaussianWorld) -> Result<f64> {
    let r = world.correlation();
    validate_correlation(r)?;
    let best = acc_with_offset(world.severity, r, r)?;
    for k in 0..=20 {
        let beta = k as f64 * 0.05;
        let acc = acc_with_offset(world.severity, r, beta)?;
        debug_assert!(
            acc <= best + 1e-15,
            "grid point beta={beta} beat the closed-form maximizer"
        );
        let _ = acc;
    }
    Ok(r)
}

/// Reduce the D-dimensional model to its effective scalar correlation
/// `tᵀRt`. Requires `t` unit-norm and `R` symmetric with entries in
/// [−1, 1].
pub fn reduce_high_d(t: &[f64], r_matrix: &[f64]) -> Result<f64> {
    let dim = t.len();
    if r_matrix.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: format!("{dim}x{dim} matrix"),
            actual: format!("{} entries", r_matrix.len()),
        });
    }
    let norm = dot(t, t).sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NotUnitVector(norm));
    }
    for i in 0..dim {
        for j in 0..dim {
            let a = r_matrix[i * dim + j];
            if !a.is_finite() || a.abs() > 1.0 + 1e-12 {
                return Err(Error::CorrelationOutOfRange(a));
            }
            if (a - r_matrix[j * dim + i]).abs() > 1e-9 {
                return Err(Error::AsymmetricMatrix);
            }
        }
    }
    Ok(quadratic_form(t, r_matrix))
}

fn quadratic_form(t: &[f64], m: &[f64]) -> f64 {
    let dim = t.len();
    let mut acc = 0.0;
    for i in 0..dim {
        let mut row = 0.0;
        for j in 0..dim {
            row += m[i * dim + j] * t[j];
        }
        acc += t[i] * row;
    }
    acc
}

/// Monte Carlo estimate of the offset classifier's accuracy.
///
/// Returns `(estimate, standard_error)` where the standard error is the
/// binomial `√(p(1−p)/n)`. The estimate is bit-identical for any worker
/// count because samples are drawn in fixed shards seeded from
/// `(seed, shard index)`.
pub fn mc_accuracy(world: &GaussianWorld, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    if n_samples < MC_MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            requested: n_samples,
            minimum: MC_MIN_SAMPLES,
        });
    }
    let num_shards = n_samples.div_ceil(MC_SHARD_SIZE);
    let shard_hits = run_shards(world, n_samples, seed, num_shards);
    let hits: u64 = shard_hits.iter().sum();
    let estimate = hits as f64 / n_samples as f64;
    let std_err = (estimate * (1.0 - estimate) / n_samples as f64).sqrt();
    Ok((estimate, std_err))
}

fn run_shards(world: &GaussianWorld, n_samples: usize, seed: u64, num_shards: usize) -> Vec<u64> {
    let workers = worker_threads().min(num_shards).max(1);
    let mut hits = vec![0u64; num_shards];
    if workers == 1 {
        for (idx, slot) in hits.iter_mut().enumerate() {
            *slot = run_shard(world, n_samples, seed, idx);
        }
        return hits;
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut hits);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= num_shards {
                    break;
                }
                let h = run_shard(world, n_samples, seed, idx);
                slots.lock().unwrap()[idx] = h;
            });
        }
    });
    hits
}

fn shard_len(n_samples: usize, shard_idx: usize) -> usize {
    let start = shard_idx * MC_SHARD_SIZE;
    MC_SHARD_SIZE.min(n_samples - start)
}

fn run_shard(world: &GaussianWorld, n_samples: usize, seed: u64, shard_idx: usize) -> u64 {
    let len = shard_len(n_samples, shard_idx);
    let mut rng = substream_indexed(seed, "mc", shard_idx as u64);
    if world.dim == 1 {
        shard_scalar(world, len, &mut rng)
    } else {
        shard_high_d(world, len, &mut rng)
    }
}

/// Sign with zero classified as positive; measure-zero choice fixed for
/// determinism.
#[inline]
fn positive(x: f64) -> bool {
    x >= 0.0
}

fn shard_scalar(world: &GaussianWorld, len: usize, rng: &mut impl Rng) -> u64 {
    let s = world.severity;
    let r = world.correlation[0];
    let beta = world.beta;
    let resid = (1.0 - r * r).sqrt();
    let mut hits = 0u64;
    for _ in 0..len {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let z3: f64 = rng.sample(StandardNormal);
        let v = z1 + s * z2;
        let neg = s * r * z2 + s * resid * z3;
        if positive(v - beta * neg) == positive(z1) {
            hits += 1;
        }
    }
    hits
}

fn shard_high_d(world: &GaussianWorld, len: usize, rng: &mut impl Rng) -> u64 {
    let dim = world.dim;
    let s = world.severity;
    let beta = world.beta;
    let t = &world.classifier;
    // n = s·R·z₂ + s·(I − R²)^½·z₃, so along the classifier direction only
    // tᵀR and tᵀ(I − R²)^½ matter.
    let t_r = mat_vec(&world.correlation, t, dim);
    let sqrt_resid = sqrt_residual(&world.correlation, dim);
    let t_q = mat_vec(&sqrt_resid, t, dim);
    let mut z1 = vec![0.0f64; dim];
    let mut z2 = vec![0.0f64; dim];
    let mut z3 = vec![0.0f64; dim];
    let mut hits = 0u64;
    for _ in 0..len {
        for v in z1.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for v in z2.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for v in z3.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let label = positive(dot(t, &z1));
        let proj = dot(t, &z1) + s * dot(t, &z2) - beta * s * (dot(&t_r, &z2) + dot(&t_q, &z3));
        if positive(proj) == label {
            hits += 1;
        }
    }
    hits
}

/// `M·v` for a row-major square matrix (symmetric here, so transposition is
/// immaterial).
fn mat_vec(m: &[f64], v: &[f64], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..dim {
                acc += m[i * dim + j] * v[j];
            }
            acc
        })
        .collect()
}

/// Symmetric square root of `I − R²`, clamping tiny negative eigenvalues.
fn sqrt_residual(r_matrix: &[f64], dim: usize) -> Vec<f64> {
    // M = I − R·R
    let mut m = vec![0.0f64; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let mut rr = 0.0;
            for k in 0..dim {
                rr += r_matrix[i * dim + k] * r_matrix[k * dim + j];
            }
            m[i * dim + j] = if i == j { 1.0 - rr } else { -rr };
        }
    }
    let (eigvals, eigvecs) = jacobi_eigen(&m, dim);
    // V · diag(√λ) · Vᵀ with eigenvectors as columns of V
    let mut out = vec![0.0f64; dim * dim];
    for (k, &lambda) in eigvals.iter().enumerate() {
        let root = lambda.max(0.0).sqrt();
        for i in 0..dim {
            for j in 0..dim {
                out[i * dim + j] += root * eigvecs[i * dim + k] * eigvecs[j * dim + k];
            }
        }
    }
    out
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// `(eigenvalues, eigenvectors)` with eigenvector `k` stored as column `k`.
/// Adequate for the small dimensions this crate works at.
fn jacobi_eigen(sym: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = sym.to_vec();
    let mut v = vec![0.0f64; dim * dim];
    for i in 0..dim {
        v[i * dim + i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..dim {
            for j in (i + 1)..dim {
                off += a[i * dim + j] * a[i * dim + j];
            }
        }
        if off <= 1e-28 {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[p * dim + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * dim + q] - a[p * dim + p]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let tan = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cos = 1.0 / (tan * tan + 1.0).sqrt();
                let sin = tan * cos;
                for k in 0..dim {
                    let akp = a[k * dim + p];
                    let akq = a[k * dim + q];
                    a[k * dim + p] = cos * akp - sin * akq;
                    a[k * dim + q] = sin * akp + cos * akq;
                }
                for k in 0..dim {
                    let apk = a[p * dim + k];
                    let aqk = a[q * dim + k];
                    a[p * dim + k] = cos * apk - sin * aqk;
                    a[q * dim + k] = sin * apk + cos * aqk;
                }
                for k in 0..dim {
                    let vkp = v[k * dim + p];
                    let vkq = v[k * dim + q];
                    v[k * dim + p] = cos * vkp - sin * vkq;
                    v[k * dim + q] = sin * vkp + cos * vkq;
                }
            }
        }
    }
    let eigvals = (0..dim).map(|i| a[i * dim + i]).collect();
    (eigvals, v)
}

/// Worker threads for sample sharding: `PANDA_THREADS` when set, otherwise
/// available parallelism capped at 8. Thread count never changes results.
pub fn worker_threads() -> usize {
    if let Ok(raw) = std::env::var("PANDA_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(8)
}
