pub mod nda;
pub mod simulate;
pub mod sweep;
pub mod verify_theorem;
pub mod world_cmd;

use panda_core::error::{Error, Result};

/// Parse a comma-separated list of floats.
pub fn parse_grid(raw: &str, flag: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = raw
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("{flag}: bad number '{tok}'")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::Parse(format!("{flag}: empty grid")));
    }
    Ok(values)
}
