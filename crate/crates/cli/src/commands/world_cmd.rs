//! `panda world-make` / `panda world-inspect` — build and examine synthetic
//! worlds.

use crate::manifest::RunManifest;
use clap::Args;
use panda_core::error::Result;
use panda_core::world::{load_world, make_world, save_world, WorldSpec};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Args)]
pub struct WorldMakeArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 32)]
    pub image_size: usize,
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    #[arg(long, default_value_t = 8)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 1.5)]
    pub corruption_strength: f64,
    /// Cosine between the corruption axis and class 0's text direction
    #[arg(long, default_value_t = 0.8)]
    pub spurious_align: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving spec.json, projection.tns, textbank.tns
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run_make(args: &WorldMakeArgs) -> Result<()> {
    let start = Instant::now();
    let spec = WorldSpec {
        num_classes: args.classes,
        image_size: args.image_size,
        channels: args.channels,
        feature_dim: args.feature_dim,
        corruption_strength: args.corruption_strength,
        spurious_align: args.spurious_align,
        seed: args.seed,
    };
    let world = make_world(&spec)?;
    save_world(&world, &args.out_dir)?;
    let argv = vec![
        "world-make".to_string(),
        "--classes".into(),
        args.classes.to_string(),
        "--image-size".into(),
        args.image_size.to_string(),
        "--channels".into(),
        args.channels.to_string(),
        "--feature-dim".into(),
        args.feature_dim.to_string(),
        "--corruption-strength".into(),
        args.corruption_strength.to_string(),
        "--spurious-align".into(),
        args.spurious_align.to_string(),
        "--seed".into(),
        args.seed.to_string(),
        "--out-dir".into(),
        args.out_dir.display().to_string(),
    ];
    let mut manifest = RunManifest::new("world-make", argv, args.seed);
    manifest.outputs = vec![
        "spec.json".to_string(),
        "projection.tns".to_string(),
        "textbank.tns".to_string(),
    ];
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.write(&args.out_dir)?;
    println!(
        "world-make: {} classes, {}x{}x{} images, {} features, domains: {}",
        args.classes,
        args.image_size,
        args.image_size,
        args.channels,
        args.feature_dim,
        world.domains().join(",")
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct WorldInspectArgs {
    #[arg(long)]
    pub world_dir: PathBuf,
}

#[derive(serde::Serialize)]
struct WorldSummary<'a> {
    spec: &'a WorldSpec,
    domains: &'a [String],
    class_names: &'a [String],
    input_dim: usize,
    feature_dim: usize,
    corruption_axis: usize,
}

pub fn run_inspect(args: &WorldInspectArgs) -> Result<()> {
    let world = load_world(&args.world_dir)?;
    let summary = WorldSummary {
        spec: world.spec(),
        domains: world.domains(),
        class_names: world.bank().class_names(),
        input_dim: world.encoder().input_dim(),
        feature_dim: world.encoder().feature_dim(),
        corruption_axis: world.corruption_axis(),
    };
    println!("{}", panda_core::report::to_json_pretty(&summary)?.trim_end());
    Ok(())
}
