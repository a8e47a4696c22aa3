//! `panda sweep` — offset-ratio and M:B-ratio grids over one stream.

use crate::commands::parse_grid;
use crate::manifest::RunManifest;
use clap::Args;
use panda_core::adapt::{run_stream, Ablation, Method, StreamConfig};
use panda_core::error::{Error, Result};
use panda_core::report::{sweep_csv, write_text, SweepCell};
use panda_core::world::{load_world, sample_stream};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub world_dir: PathBuf,
    /// Offset ratios to sweep
    #[arg(long, default_value = "0,0.2,0.4,0.6,0.8,1")]
    pub beta_grid: String,
    /// M:B ratios to sweep; M = ceil(ratio * batch), at least 1
    #[arg(long, default_value = "0.01,0.05,0.1,0.2,0.5")]
    pub m_ratio_grid: String,
    #[arg(long, default_value_t = 2000)]
    pub stream_len: usize,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// zero_shot | panda_only | tent | tent_panda
    #[arg(long, default_value = "tent_panda")]
    pub method: String,
    #[arg(long, default_value = "d0")]
    pub domain: String,
    #[arg(long, default_value_t = 8)]
    pub patch_size: usize,
    /// Output directory for sweep.csv
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: &SweepArgs) -> Result<()> {
    let start = Instant::now();
    let method: Method = args.method.parse()?;
    let beta_grid = parse_grid(&args.beta_grid, "--beta-grid")?;
    let ratio_grid = parse_grid(&args.m_ratio_grid, "--m-ratio-grid")?;
    for &ratio in &ratio_grid {
        if !(ratio.is_finite() && ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::Parse(format!(
                "--m-ratio-grid: ratio {ratio} outside (0, 1]"
            )));
        }
    }
    let world = load_world(&args.world_dir)?;
    // one stream, shared across every grid cell, so rows compare paired
    let stream = sample_stream(&world, args.stream_len, &args.domain, args.seed)?;
    let mut cells = Vec::new();
    for &beta in &beta_grid {
        for &ratio in &ratio_grid {
            let m = ((ratio * args.batch_size as f64).ceil() as usize).max(1);
            let config = StreamConfig {
                method,
                ablation: Ablation::Full,
                beta,
                m: Some(m),
                learning_rate: args.lr,
                batch_size: args.batch_size,
                chunk_size: args.stream_len,
                patch: args.patch_size,
                seed: args.seed,
                grad_through_prototype: true,
            };
            let report = run_stream(&config, world.encoder(), world.bank(), &stream)?;
            cells.push(SweepCell {
                beta,
                m_ratio: ratio,
                m,
                accuracy: report.final_report.accuracy,
                l1_bias: report.final_report.l1_bias,
                mean_entropy: report.final_report.mean_entropy,
            });
        }
    }
    write_text(&args.out_dir.join("sweep.csv"), &sweep_csv(&cells))?;
    let argv = vec![
        "sweep".to_string(),
        "--world-dir".into(),
        args.world_dir.display().to_string(),
        "--beta-grid".into(),
        args.beta_grid.clone(),
        "--m-ratio-grid".into(),
        args.m_ratio_grid.clone(),
        "--stream-len".into(),
        args.stream_len.to_string(),
        "--batch-size".into(),
        args.batch_size.to_string(),
        "--lr".into(),
        args.lr.to_string(),
        "--seed".into(),
        args.seed.to_string(),
        "--method".into(),
        args.method.clone(),
        "--domain".into(),
        args.domain.clone(),
        "--patch-size".into(),
        args.patch_size.to_string(),
        "--out-dir".into(),
        args.out_dir.display().to_string(),
    ];
    let mut manifest = RunManifest::new("sweep", argv, args.seed);
    manifest.inputs = vec![args.world_dir.display().to_string()];
    manifest.outputs = vec!["sweep.csv".to_string()];
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.write(&args.out_dir)?;
    println!(
        "sweep[{}]: {} cells -> {}",
        method.as_str(),
        cells.len(),
        args.out_dir.join("sweep.csv").display()
    );
    Ok(())
}
