//! `panda verify-theorem` — Monte Carlo verification of the closed-form
//! accuracy grid.

use crate::commands::parse_grid;
use crate::manifest::RunManifest;
use clap::Args;
use panda_core::error::{Error, Result};
use panda_core::report::{theorem_csv, write_text, TheoremCell};
use panda_core::rng::derive_seed;
use panda_core::theory::{acc_with_offset, mc_accuracy, GaussianWorld};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Severity grid (comma-separated)
    #[arg(long, default_value = "0.5,1,2,4")]
    pub s_grid: String,
    /// Correlation grid (comma-separated, each in [0,1))
    #[arg(long, default_value = "0,0.3,0.6,0.9")]
    pub r_grid: String,
    /// Offset-ratio grid; entries may be absolute numbers or relative to
    /// the cell's r: `r`, `r/2`, `r+0.2`, `r-0.1`
    #[arg(long, default_value = "0,r/2,r,r+0.2,1")]
    pub beta_grid: String,
    /// Monte Carlo samples per grid cell
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for theorem.csv and manifest.json
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy)]
enum BetaSpec {
    Absolute(f64),
    R,
    ROver(f64),
    RPlus(f64),
}

fn parse_beta_grid(raw: &str) -> Result<Vec<BetaSpec>> {
    raw.split(',')
        .map(|tok| {
            let tok = tok.trim();
            if tok == "r" {
                Ok(BetaSpec::R)
            } else if let Some(denom) = tok.strip_prefix("r/") {
                denom
                    .parse::<f64>()
                    .ok()
                    .filter(|d| *d != 0.0)
                    .map(BetaSpec::ROver)
                    .ok_or_else(|| Error::Parse(format!("--beta-grid: bad entry '{tok}'")))
            } else if let Some(off) = tok.strip_prefix("r+") {
                off.parse::<f64>()
                    .map(BetaSpec::RPlus)
                    .map_err(|_| Error::Parse(format!("--beta-grid: bad entry '{tok}'")))
            } else if let Some(off) = tok.strip_prefix("r-") {
                off.parse::<f64>()
                    .map(|x| BetaSpec::RPlus(-x))
                    .map_err(|_| Error::Parse(format!("--beta-grid: bad entry '{tok}'")))
            } else {
                tok.parse::<f64>()
                    .map(BetaSpec::Absolute)
                    .map_err(|_| Error::Parse(format!("--beta-grid: bad entry '{tok}'")))
            }
        })
        .collect()
}

fn resolve(spec: BetaSpec, r: f64) -> f64 {
    match spec {
        BetaSpec::Absolute(b) => b,
        BetaSpec::R => r,
        BetaSpec::ROver(d) => r / d,
        BetaSpec::RPlus(off) => r + off,
    }
}

pub fn run(args: &VerifyArgs) -> Result<bool> {
    let start = Instant::now();
    let s_grid = parse_grid(&args.s_grid, "--s-grid")?;
    let r_grid = parse_grid(&args.r_grid, "--r-grid")?;
    let beta_grid = parse_beta_grid(&args.beta_grid)?;

    let mut cells = Vec::new();
    let mut cell_index = 0u64;
    for &s in &s_grid {
        for &r in &r_grid {
            for &spec in &beta_grid {
                let beta = resolve(spec, r);
                let world = GaussianWorld::scalar(s, r, beta)?;
                let analytic = acc_with_offset(s, r, beta)?;
                let cell_seed = derive_seed(args.seed, "mc-cell", cell_index);
                let (est, se) = mc_accuracy(&world, args.samples, cell_seed)?;
                let pass = (est - analytic).abs() <= 3.0 * se;
                cells.push(TheoremCell {
                    s,
                    r,
                    beta,
                    analytic,
                    mc_estimate: est,
                    mc_stderr: se,
                    pass,
                });
                cell_index += 1;
            }
        }
    }
    let passed = cells.iter().filter(|c| c.pass).count();
    let all_pass = passed == cells.len();

    write_text(&args.out_dir.join("theorem.csv"), &theorem_csv(&cells))?;
    let argv = vec![
        "verify-theorem".to_string(),
        "--s-grid".into(),
        args.s_grid.clone(),
        "--r-grid".into(),
        args.r_grid.clone(),
        "--beta-grid".into(),
        args.beta_grid.clone(),
        "--samples".into(),
        args.samples.to_string(),
        "--seed".into(),
        args.seed.to_string(),
        "--out-dir".into(),
        args.out_dir.display().to_string(),
    ];
    let mut manifest = RunManifest::new("verify-theorem", argv, args.seed);
    manifest.outputs = vec!["theorem.csv".to_string()];
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.write(&args.out_dir)?;
    println!(
        "verify-theorem: {passed}/{} cells within 3 sigma ({} samples each)",
        cells.len(),
        args.samples
    );
    Ok(all_pass)
}
