//! Plot-ready report serialization: JSON for nested reports, CSV twins.
//!
//! All float formatting goes through Rust's shortest round-trip `Display`,
//! so identical values always serialize to identical bytes.

use crate::adapt::StreamReport;
use crate::error::{Error, Result};
use std::path::Path;

/// CSV twin of a stream report: `chunk_index,n,accuracy,l1_bias,mean_entropy`.
pub fn stream_report_csv(report: &StreamReport) -> String {
    let mut out = String::from("chunk_index,n,accuracy,l1_bias,mean_entropy\n");
    for chunk in &report.per_chunk {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            chunk.chunk_index, chunk.n, chunk.accuracy, chunk.l1_bias, chunk.mean_entropy
        ));
    }
    out
}

/// Histogram CSV: `class_index,count`.
pub fn histogram_csv(counts: &[usize]) -> String {
    let mut out = String::from("class_index,count\n");
    for (class, count) in counts.iter().enumerate() {
        out.push_str(&format!("{class},{count}\n"));
    }
    out
}

/// One row of the theorem-verification grid.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TheoremCell {
    pub s: f64,
    pub r: f64,
    pub beta: f64,
    pub analytic: f64,
    pub mc_estimate: f64,
    pub mc_stderr: f64,
    pub pass: bool,
}

/// CSV for theorem verification:
/// `s,r,beta,analytic,mc_estimate,mc_stderr,pass`.
pub fn theorem_csv(cells: &[TheoremCell]) -> String {
    let mut out = String::from("s,r,beta,analytic,mc_estimate,mc_stderr,pass\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.s, c.r, c.beta, c.analytic, c.mc_estimate, c.mc_stderr, c.pass
        ));
    }
    out
}

/// One row of the beta × m-ratio sweep grid.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepCell {
    pub beta: f64,
    pub m_ratio: f64,
    pub m: usize,
    pub accuracy: f64,
    pub l1_bias: f64,
    pub mean_entropy: f64,
}

/// CSV for sweeps: `beta,m_ratio,m,accuracy,l1_bias,mean_entropy`.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("beta,m_ratio,m,accuracy,l1_bias,mean_entropy\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.beta, c.m_ratio, c.m, c.accuracy, c.l1_bias, c.mean_entropy
        ));
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_json_pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Parse(format!("json serialization: {e}")))
}

/// Write bytes, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::{ChunkReport, FinalReport};

    #[test]
    fn csv_layout_is_stable() {
        let report = StreamReport {
            per_chunk: vec![ChunkReport {
                chunk_index: 0,
                n: 10,
                accuracy: 0.5,
                l1_bias: 0.25,
                mean_entropy: 1.5,
            }],
            final_report: FinalReport {
                samples: 10,
                batches: 1,
                accuracy: 0.5,
                l1_bias: 0.25,
                mean_entropy: 1.5,
                encoder_forwards: 11,
                prediction_histogram: vec![4, 6],
            },
        };
        let csv = stream_report_csv(&report);
        assert_eq!(
            csv,
            "chunk_index,n,accuracy,l1_bias,mean_entropy\n0,10,0.5,0.25,1.5\n"
        );
        let json = to_json_pretty(&report).unwrap();
        assert!(json.contains("\"per_chunk\""));
        assert!(json.contains("\"final\""));
        assert!(json.contains("\"encoder_forwards\": 11"));
    }

    #[test]
    fn histogram_csv_lists_all_classes() {
        assert_eq!(
            histogram_csv(&[3, 0, 7]),
            "class_index,count\n0,3\n1,0\n2,7\n"
        );
    }
}
