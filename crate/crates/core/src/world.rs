//! Synthetic classification world with a frozen linear encoder.
//!
//! The construction is the minimal one under which patch shuffling provably
//! destroys class-discriminative structure while preserving corruption
//! statistics:
//!
//! * class signal — a low-frequency global cosine layout per class
//!   (distinct spatial frequency and phase). Zero-mean waves lose their
//!   global phase coherence when patches are rearranged.
//! * corruption — a fixed per-domain pattern built from a spatial-mean
//!   shift (the all-ones direction, which every patch carries and shuffling
//!   preserves exactly) plus per-pixel i.i.d. texture orthogonalized
//!   against the feature span.
//!
//! The frozen encoder projects pixels onto orthonormal rows: one per class
//! template, one for the mean-shift (corruption) axis, and random filler
//! rows. Its trainable part is the per-feature affine `(γ, δ)` applied
//! before L2 normalization. The text bank aligns each class with its
//! feature axis, except that the corruption axis is mixed into class 0's
//! direction with cosine `spurious_align` — which is what manufactures the
//! prediction bias toward class 0 under corruption.

use crate::debias::{normalize, TextBank};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tensor::{matrix_from_tns1, matrix_to_tns1, ImageTensor};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Patch edge used by default when augmenting images from this world.
pub const WORLD_DEFAULT_PATCH: usize = 8;

/// Template amplitude in feature units (projection of a class sample onto
/// its own axis).
const CLASS_SIGNAL: f64 = 1.0;

/// Corruption projection onto the mean-shift axis per unit strength.
const CORR_MEAN_PROJ: f64 = 0.8;

/// Per-pixel sigma of the per-domain i.i.d. texture.
const CORR_TEXTURE_SIGMA: f64 = 0.1;

/// Jitter sigma along each feature axis: 0.1 of the template amplitude.
const JITTER_FEATURE_SIGMA: f64 = 0.1 * CLASS_SIGNAL;

/// Residual i.i.d. pixel jitter off the feature span.
const JITTER_PIXEL_SIGMA: f64 = 0.02;

/// Corrupted domain count (besides "clean").
const NUM_CORRUPT_DOMAINS: usize = 3;

/// Full description of a synthetic world; everything else is derived
/// deterministically from these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub num_classes: usize,
    pub image_size: usize,
    pub channels: usize,
    pub feature_dim: usize,
    pub corruption_strength: f64,
    pub spurious_align: f64,
    pub seed: u64,
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.feature_dim < self.num_classes + 1 {
            return Err(Error::InvalidSpec(format!(
                "feature_dim {} too small: need num_classes + 1 = {} for the corruption axis",
                self.feature_dim,
                self.num_classes + 1
            )));
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(WORLD_DEFAULT_PATCH) {
            return Err(Error::InvalidSpec(format!(
                "image_size {} must be a positive multiple of the default patch size {}",
                self.image_size, WORLD_DEFAULT_PATCH
            )));
        }
        if self.image_size <= self.num_classes {
            return Err(Error::InvalidSpec(format!(
                "image_size {} must exceed num_classes {} for distinct template frequencies",
                self.image_size, self.num_classes
            )));
        }
        if self.channels == 0 {
            return Err(Error::InvalidSpec("channels must be positive".into()));
        }
        if !(self.corruption_strength.is_finite() && self.corruption_strength >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "corruption_strength must be finite and >= 0, got {}",
                self.corruption_strength
            )));
        }
        if !(0.0..=1.0).contains(&self.spurious_align) {
            return Err(Error::InvalidSpec(format!(
                "spurious_align must lie in [0, 1], got {}",
                self.spurious_align
            )));
        }
        Ok(())
    }
}

/// One sample of the stream.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image: ImageTensor,
    pub label: usize,
    pub domain: String,
}

/// Frozen linear projection with a trainable per-feature affine.
///
/// `encode(x) = normalize(γ ⊙ (P·flatten(x)) + δ)`.
#[derive(Debug, Clone)]
pub struct FrozenEncoder {
    feature_dim: usize,
    input_dim: usize,
    projection: Vec<f64>, // feature_dim × input_dim, row-major, unit-norm rows
    gamma: Vec<f64>,
    delta: Vec<f64>,
}

impl FrozenEncoder {
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    /// Initial affine scale (all ones).
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Initial affine shift (all zeros).
    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// `P · flatten(x)` — the frozen part of the forward pass.
    pub fn project(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        let x = image.flatten_f64();
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: format!("{} pixels", self.input_dim),
                actual: format!("{} pixels", x.len()),
            });
        }
        Ok((0..self.feature_dim)
            .map(|d| {
                let row = &self.projection[d * self.input_dim..(d + 1) * self.input_dim];
                let mut acc = 0.0;
                for (a, b) in row.iter().zip(&x) {
                    acc += a * b;
                }
                acc
            })
            .collect())
    }

    /// Unit-norm embedding with this encoder's own affine parameters.
    pub fn encode(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        self.encode_with(image, &self.gamma, &self.delta)
    }

    /// Unit-norm embedding with externally supplied affine parameters (the
    /// adaptation loop owns its own copies).
    pub fn encode_with(&self, image: &ImageTensor, gamma: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
        let z = self.project(image)?;
        affine_normalize(&z, gamma, delta)
    }
}

/// `normalize(γ ⊙ z + δ)` over a cached projection.
pub fn affine_normalize(z: &[f64], gamma: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
    if gamma.len() != z.len() || delta.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}-dim affine", z.len()),
            actual: format!("{}/{}-dim affine", gamma.len(), delta.len()),
        });
    }
    let u: Vec<f64> = z
        .iter()
        .zip(gamma.iter().zip(delta))
        .map(|(zi, (g, d))| g * zi + d)
        .collect();
    normalize(&u)
}

/// A fully constructed world: encoder, text bank, class templates and
/// per-domain corruption patterns.
#[derive(Debug, Clone)]
pub struct World {
    spec: WorldSpec,
    encoder: FrozenEncoder,
    bank: TextBank,
    templates: Vec<Vec<f64>>, // per class, flattened pixel space
    domains: Vec<String>,
    patterns: Vec<Vec<f64>>, // per domain, flattened, unit strength
}

impl World {
    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn encoder(&self) -> &FrozenEncoder {
        &self.encoder
    }

    pub fn bank(&self) -> &TextBank {
        &self.bank
    }

    pub fn domains(&self) -> &[String] {
        &self.domains
    }

    /// Flattened class template (pixel space).
    pub fn template(&self, class: usize) -> &[f64] {
        &self.templates[class]
    }

    /// Flattened unit-strength corruption pattern for a domain.
    pub fn pattern(&self, domain: &str) -> Result<&[f64]> {
        let idx = self
            .domains
            .iter()
            .position(|d| d == domain)
            .ok_or_else(|| Error::UnknownDomain(domain.to_string()))?;
        Ok(&self.patterns[idx])
    }

    /// Feature-axis index of the corruption (mean-shift) direction.
    pub fn corruption_axis(&self) -> usize {
        self.spec.num_classes
    }
}

fn gram_schmidt_against(v: &mut [f64], rows: &[Vec<f64>]) {
    for row in rows {
        let mut proj = 0.0;
        for (a, b) in v.iter().zip(row) {
            proj += a * b;
        }
        for (a, b) in v.iter_mut().zip(row) {
            *a -= proj * b;
        }
    }
}

/// Deterministically construct the world for a spec.
pub fn make_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let h = spec.image_size;
    let w = spec.image_size;
    let ch = spec.channels;
    let input_dim = h * w * ch;
    let c = spec.num_classes;
    let d = spec.feature_dim;
    let mut rng = substream(spec.seed, "world");

    // Class templates: distinct 2-D cosine modes, one phase per class.
    // Distinct integer frequencies keep them exactly orthogonal and
    // zero-mean over the full grid.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    for k in 0..c {
        let freq_col = (k + 1) as f64;
        let phase = 2.0 * std::f64::consts::PI * 0.381_966_011_250_105 * k as f64;
        let mut wave = vec![0.0f64; input_dim];
        for row in 0..h {
            for col in 0..w {
                let angle = 2.0 * std::f64::consts::PI * (row as f64 + freq_col * col as f64)
                    / h as f64
                    + phase;
                let value = angle.cos();
                for cc in 0..ch {
                    wave[(row * w + col) * ch + cc] = value;
                }
            }
        }
        rows.push(normalize(&wave)?);
    }

    // Corruption axis: the constant (spatial mean) direction.
    let constant = normalize(&vec![1.0; input_dim])?;
    rows.push(constant.clone());

    // Filler axes: random directions orthonormalized against everything.
    while rows.len() < d {
        let mut v: Vec<f64> = (0..input_dim).map(|_| rng.sample(StandardNormal)).collect();
        gram_schmidt_against(&mut v, &rows);
        match normalize(&v) {
            Ok(u) => rows.push(u),
            Err(_) => continue,
        }
    }

    let mut projection = Vec::with_capacity(d * input_dim);
    for row in &rows {
        projection.extend_from_slice(row);
    }
    let encoder = FrozenEncoder {
        feature_dim: d,
        input_dim,
        projection,
        gamma: vec![1.0; d],
        delta: vec![0.0; d],
    };

    // Templates in pixel space at the class amplitude.
    let templates: Vec<Vec<f64>> = rows[..c]
        .iter()
        .map(|r| r.iter().map(|x| x * CLASS_SIGNAL).collect())
        .collect();

    // Per-domain patterns: mean shift along the constant direction plus
    // i.i.d. texture orthogonalized against the feature span, so the
    // feature-space footprint of corruption is exactly the corruption axis.
    let mut domains = vec!["clean".to_string()];
    let mut patterns = vec![vec![0.0f64; input_dim]];
    for dom in 0..NUM_CORRUPT_DOMAINS {
        let mut texture: Vec<f64> = (0..input_dim).map(|_| rng.sample(StandardNormal)).collect();
        gram_schmidt_against(&mut texture, &rows);
        let pattern: Vec<f64> = constant
            .iter()
            .zip(&texture)
            .map(|(cst, tex)| CORR_MEAN_PROJ * cst + CORR_TEXTURE_SIGMA * tex)
            .collect();
        domains.push(format!("d{dom}"));
        patterns.push(pattern);
    }

    // Text bank: class axes, with the corruption axis mixed into class 0.
    let alpha = spec.spurious_align;
    let mut bank_vectors = Vec::with_capacity(c);
    for class in 0..c {
        let mut t = vec![0.0f64; d];
        if class == 0 {
            t[0] = (1.0 - alpha * alpha).sqrt();
            t[c] = alpha;
        } else {
            t[class] = 1.0;
        }
        bank_vectors.push(normalize(&t)?);
    }
    let names = (0..c).map(|k| format!("class_{k}")).collect();
    let bank = TextBank::new(bank_vectors, names)?;

    Ok(World {
        spec: spec.clone(),
        encoder,
        bank,
        templates,
        domains,
        patterns,
    })
}

/// Draw `n` labeled images from one corruption domain.
///
/// Each sample is its class template, plus Gaussian jitter (sigma 0.1 of
/// the template amplitude along every feature axis, plus faint residual
/// pixel noise), plus the domain pattern scaled by the world's corruption
/// strength. Order and content are fully determined by `seed`.
pub fn sample_stream(world: &World, n: usize, domain: &str, seed: u64) -> Result<Vec<LabeledImage>> {
    let pattern = world.pattern(domain)?;
    let spec = world.spec();
    let c = spec.num_classes;
    let d = spec.feature_dim;
    let input_dim = world.encoder.input_dim;
    let strength = spec.corruption_strength;
    let mut rng = substream(seed, "stream");
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..c);
        let mut flat = world.templates[label].clone();
        for axis in 0..d {
            let coef: f64 = rng.sample::<f64, _>(StandardNormal) * JITTER_FEATURE_SIGMA;
            let row = &world.encoder.projection[axis * input_dim..(axis + 1) * input_dim];
            for (x, r) in flat.iter_mut().zip(row) {
                *x += coef * r;
            }
        }
        for x in flat.iter_mut() {
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * JITTER_PIXEL_SIGMA;
            *x += noise;
        }
        if strength > 0.0 {
            for (x, p) in flat.iter_mut().zip(pattern) {
                *x += strength * p;
            }
        }
        let data: Vec<f32> = flat.iter().map(|&x| x as f32).collect();
        out.push(LabeledImage {
            image: ImageTensor::new(spec.image_size, spec.image_size, spec.channels, data)?,
            label,
            domain: domain.to_string(),
        });
    }
    Ok(out)
}

const SPEC_FILE: &str = "spec.json";
const PROJECTION_FILE: &str = "projection.tns";
const TEXTBANK_FILE: &str = "textbank.tns";

/// Serialize a world to a directory: `spec.json`, `projection.tns`,
/// `textbank.tns`.
pub fn save_world(world: &World, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let spec_json = serde_json::to_string_pretty(world.spec())
        .map_err(|e| Error::Parse(format!("spec serialization: {e}")))?;
    std::fs::write(dir.join(SPEC_FILE), spec_json + "\n")?;
    let enc = world.encoder();
    std::fs::write(
        dir.join(PROJECTION_FILE),
        matrix_to_tns1(enc.feature_dim(), enc.input_dim(), enc.projection())?,
    )?;
    let bank = world.bank();
    let mut bank_values = Vec::with_capacity(bank.num_classes() * bank.dim());
    for t in bank.embeddings() {
        bank_values.extend_from_slice(t);
    }
    std::fs::write(
        dir.join(TEXTBANK_FILE),
        matrix_to_tns1(bank.num_classes(), bank.dim(), &bank_values)?,
    )?;
    Ok(())
}

/// Load a world from a directory written by [`save_world`].
///
/// The world is rebuilt deterministically from `spec.json`; the tensor
/// files are verified against the reconstruction so a tampered directory
/// fails loudly instead of silently diverging.
pub fn load_world(dir: &Path) -> Result<World> {
    let spec_raw = std::fs::read_to_string(dir.join(SPEC_FILE))?;
    let spec: WorldSpec = serde_json::from_str(&spec_raw)
        .map_err(|e| Error::Parse(format!("{}: {e}", dir.join(SPEC_FILE).display())))?;
    let world = make_world(&spec)?;

    let proj_bytes = std::fs::read(dir.join(PROJECTION_FILE))?;
    let (rows, cols, values) = matrix_from_tns1(&proj_bytes)?;
    let enc = world.encoder();
    if rows != enc.feature_dim() || cols != enc.input_dim() {
        return Err(Error::Parse(format!(
            "projection.tns is {rows}x{cols}, spec implies {}x{}",
            enc.feature_dim(),
            enc.input_dim()
        )));
    }
    for (stored, rebuilt) in values.iter().zip(enc.projection()) {
        if (*stored - *rebuilt as f32 as f64).abs() > 0.0 {
            return Err(Error::Parse(
                "projection.tns does not match the world derived from spec.json".into(),
            ));
        }
    }
    Ok(world)
}
