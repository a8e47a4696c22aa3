//! `panda nda` — cut a batch into patches, shuffle, recompose.

use crate::manifest::RunManifest;
use clap::Args;
use panda_core::error::{Error, Result};
use panda_core::nda::{build_pool, default_m, recompose, PatchGrid};
use panda_core::rng::derive_seed;
use panda_core::tensor::ImageTensor;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Args)]
pub struct NdaArgs {
    /// Input images (TNS1 or binary PPM), one flag per file or repeated
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Patch height H_p (must divide the image height exactly)
    #[arg(long, default_value_t = 32)]
    pub patch_height: usize,
    /// Patch width W_p (must divide the image width exactly)
    #[arg(long, default_value_t = 32)]
    pub patch_width: usize,
    /// Number of negative augmentations; defaults to ceil(B/10)
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for the recomposed TNS1 images and manifest
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: &NdaArgs) -> Result<()> {
    let start = Instant::now();
    let mut images = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let img = ImageTensor::load(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        images.push(img);
    }
    if images.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let first = &images[0];
    let grid = PatchGrid::new(
        first.height(),
        first.width(),
        args.patch_height,
        args.patch_width,
    )
    .map_err(|e| {
        Error::Parse(format!(
            "{}: {e}",
            args.inputs[0].display()
        ))
    })?;
    let m = args.m.unwrap_or_else(|| default_m(images.len()));
    let pool = build_pool(&images, &grid, derive_seed(args.seed, "nda", 0))?;
    let negatives = recompose(&pool, &grid, m)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let mut outputs = Vec::with_capacity(negatives.len());
    for (j, img) in negatives.iter().enumerate() {
        let name = format!("nda_{j:04}.tns");
        img.save_tns1(&args.out_dir.join(&name))?;
        outputs.push(name);
    }

    let mut argv = vec!["nda".to_string()];
    for path in &args.inputs {
        argv.push("--input".into());
        argv.push(path.display().to_string());
    }
    argv.extend([
        "--patch-height".into(),
        args.patch_height.to_string(),
        "--patch-width".into(),
        args.patch_width.to_string(),
        "--m".into(),
        m.to_string(),
        "--seed".into(),
        args.seed.to_string(),
        "--out-dir".into(),
        args.out_dir.display().to_string(),
    ]);
    let mut manifest = RunManifest::new("nda", argv, args.seed);
    manifest.inputs = args.inputs.iter().map(|p| p.display().to_string()).collect();
    manifest.outputs = outputs;
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.write(&args.out_dir)?;
    println!(
        "nda: {} inputs -> {} negative augmentations in {}",
        images.len(),
        negatives.len(),
        args.out_dir.display()
    );
    Ok(())
}
