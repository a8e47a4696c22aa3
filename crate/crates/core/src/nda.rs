//! Negative data augmentation: patch pools shared across a batch.
//!
//! A batch of images is cut into non-overlapping patches, all patches are
//! shuffled into one pool, and `m` new images are recomposed from the pool
//! prefix so that no patch is used twice within the batch. The recomposed
//! images keep the original H×W×C size while their object layout is
//! destroyed; per-pixel statistics of the batch survive.
//!
//! Operations act on whatever tensors they are handed; any resizing belongs
//! upstream, and non-divisible patch grids are a hard error rather than an
//! implicit crop.

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tensor::ImageTensor;
use rand::seq::SliceRandom;

/// Non-overlapping partition geometry of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    patch_height: usize,
    patch_width: usize,
    rows: usize,
    cols: usize,
}

impl PatchGrid {
    /// Grid of `patch_height × patch_width` patches over an `height × width`
    /// image. The patch must divide the image exactly.
    pub fn new(
        image_height: usize,
        image_width: usize,
        patch_height: usize,
        patch_width: usize,
    ) -> Result<Self> {
        if patch_height == 0
            || patch_width == 0
            || !image_height.is_multiple_of(patch_height)
            || !image_width.is_multiple_of(patch_width)
        {
            return Err(Error::DimensionMismatch {
                expected: format!("patch dividing {image_height}x{image_width} exactly"),
                actual: format!("{patch_height}x{patch_width}"),
            });
        }
        Ok(Self {
            patch_height,
            patch_width,
            rows: image_height / patch_height,
            cols: image_width / patch_width,
        })
    }

    pub fn patch_height(&self) -> usize {
        self.patch_height
    }

    pub fn patch_width(&self) -> usize {
        self.patch_width
    }

    /// Grid rows (H / H_p).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Grid columns (W / W_p).
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Patches per image.
    pub fn patches_per_image(&self) -> usize {
        self.rows * self.cols
    }

    fn matches(&self, image: &ImageTensor) -> bool {
        image.height() == self.rows * self.patch_height
            && image.width() == self.cols * self.patch_width
    }
}

/// The shuffled multiset of patches cut from one batch.
#[derive(Debug, Clone)]
pub struct PatchPool {
    patches: Vec<ImageTensor>,
    source_batch_size: usize,
    channels: usize,
    permutation_seed: u64,
}

impl PatchPool {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn source_batch_size(&self) -> usize {
        self.source_batch_size
    }

    pub fn permutation_seed(&self) -> u64 {
        self.permutation_seed
    }

    pub fn patches(&self) -> &[ImageTensor] {
        &self.patches
    }
}

/// Cut an image into `rows × cols` patches in row-major grid order.
///
/// Concatenating the result back in order (see [`depatchify`]) reconstructs
/// the input bit-exactly.
pub fn patchify(image: &ImageTensor, grid: &PatchGrid) -> Result<Vec<ImageTensor>> {
    if !grid.matches(image) {
        return Err(Error::DimensionMismatch {
            expected: format!(
                "image of {}x{}",
                grid.rows * grid.patch_height,
                grid.cols * grid.patch_width
            ),
            actual: format!("{}x{}", image.height(), image.width()),
        });
    }
    let (hp, wp, c) = (grid.patch_height, grid.patch_width, image.channels());
    let mut out = Vec::with_capacity(grid.patches_per_image());
    for gr in 0..grid.rows {
        for gc in 0..grid.cols {
            let mut patch = ImageTensor::zeros(hp, wp, c);
            for r in 0..hp {
                for col in 0..wp {
                    for ch in 0..c {
                        patch.set(r, col, ch, image.get(gr * hp + r, gc * wp + col, ch));
                    }
                }
            }
            out.push(patch);
        }
    }
    Ok(out)
}

/// Reassemble patches (row-major grid order) into one image.
pub fn depatchify(patches: &[ImageTensor], grid: &PatchGrid, channels: usize) -> Result<ImageTensor> {
    if patches.len() != grid.patches_per_image() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} patches", grid.patches_per_image()),
            actual: format!("{} patches", patches.len()),
        });
    }
    let (hp, wp) = (grid.patch_height, grid.patch_width);
    let mut out = ImageTensor::zeros(grid.rows * hp, grid.cols * wp, channels);
    for (idx, patch) in patches.iter().enumerate() {
        if patch.shape() != (hp, wp, channels) {
            return Err(Error::DimensionMismatch {
                expected: format!("{hp}x{wp}x{channels} patch"),
                actual: format!(
                    "{}x{}x{} patch at index {idx}",
                    patch.height(),
                    patch.width(),
                    patch.channels()
                ),
            });
        }
        let gr = idx / grid.cols;
        let gc = idx % grid.cols;
        for r in 0..hp {
            for col in 0..wp {
                for ch in 0..channels {
                    out.set(gr * hp + r, gc * wp + col, ch, patch.get(r, col, ch));
                }
            }
        }
    }
    Ok(out)
}

/// Cut every image of the batch and shuffle all patches into one pool.
///
/// The shuffle is a Fisher–Yates permutation over the concatenated patch
/// list, driven deterministically by `seed`.
pub fn build_pool(batch: &[ImageTensor], grid: &PatchGrid, seed: u64) -> Result<PatchPool> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let first_shape = batch[0].shape();
    for img in batch.iter().skip(1) {
        if img.shape() != first_shape {
            return Err(Error::HeterogeneousBatch {
                first: format!("{first_shape:?}"),
                offending: format!("{:?}", img.shape()),
            });
        }
    }
    let mut patches = Vec::with_capacity(batch.len() * grid.patches_per_image());
    for img in batch {
        patches.extend(patchify(img, grid)?);
    }
    let mut rng = substream(seed, "pool-shuffle");
    patches.shuffle(&mut rng);
    Ok(PatchPool {
        patches,
        source_batch_size: batch.len(),
        channels: first_shape.2,
        permutation_seed: seed,
    })
}

/// Recompose `m` images of the original size from the pool prefix.
///
/// The `m · rows · cols` patches consumed are the first that many entries of
/// the shuffled pool, so no patch appears twice across the outputs.
pub fn recompose(pool: &PatchPool, grid: &PatchGrid, m: usize) -> Result<Vec<ImageTensor>> {
    let per_image = grid.patches_per_image();
    let needed = m * per_image;
    if needed > pool.len() {
        return Err(Error::PoolExhausted {
            requested: needed,
            available: pool.len(),
        });
    }
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let slice = &pool.patches[j * per_image..(j + 1) * per_image];
        out.push(depatchify(slice, grid, pool.channels)?);
    }
    Ok(out)
}

/// Default number of negative augmentations: ⌈B/10⌉, always at least 1.
pub fn default_m(batch_size: usize) -> usize {
    batch_size.div_ceil(10).max(1)
}
