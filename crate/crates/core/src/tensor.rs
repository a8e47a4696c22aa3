//! Dense image tensors and their on-disk formats.
//!
//! The unit of augmentation is an `H × W × C` tensor of `f32` values in
//! row-major `(row, col, channel)` order. Two formats are supported:
//!
//! * TNS1 — little-endian binary: magic `"TNS1"`, then `u32` H, `u32` W,
//!   `u32` C, then `H·W·C` IEEE-754 `f32` values row-major.
//! * Binary PPM (`P6`, 8-bit), converted to `f32` in `[0, 1]` on read.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const TNS1_MAGIC: &[u8; 4] = b"TNS1";

/// A dense H×W×C real-valued image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    /// Build a tensor from raw row-major data.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::DimensionMismatch {
                expected: "positive height, width and channels".into(),
                actual: format!("{height}x{width}x{channels}"),
            });
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values", height * width * channels),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)` triple.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f32) {
        self.data[(row * self.width + col) * self.channels + ch] = value;
    }

    /// Row-major flattening promoted to f64 for numeric work.
    pub fn flatten_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&x| f64::from(x)).collect()
    }

    /// Raw little-endian bytes of the payload, used for content hashing.
    pub fn byte_view(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4 + 12);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Serialize to TNS1 bytes.
    pub fn to_tns1(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.data.len() * 4);
        out.extend_from_slice(TNS1_MAGIC);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parse TNS1 bytes.
    pub fn from_tns1(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Parse("TNS1 payload shorter than header".into()));
        }
        if &bytes[0..4] != TNS1_MAGIC {
            return Err(Error::Parse(format!(
                "bad magic {:?}, expected \"TNS1\"",
                &bytes[0..4]
            )));
        }
        let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let c = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let n = h
            .checked_mul(w)
            .and_then(|hw| hw.checked_mul(c))
            .ok_or_else(|| Error::Parse("TNS1 dimensions overflow".into()))?;
        let expected = 16 + n * 4;
        if bytes.len() != expected {
            return Err(Error::Parse(format!(
                "TNS1 payload length {} does not match header ({} expected)",
                bytes.len(),
                expected
            )));
        }
        let mut data = Vec::with_capacity(n);
        for chunk in bytes[16..].chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        ImageTensor::new(h, w, c, data)
    }

    /// Write TNS1 to a file.
    pub fn save_tns1(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_tns1())?;
        Ok(())
    }

    /// Read a tensor from a file, dispatching on magic: TNS1 or binary PPM.
    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.starts_with(TNS1_MAGIC) {
            Self::from_tns1(&bytes)
        } else if bytes.starts_with(b"P6") {
            Self::from_ppm(&bytes)
        } else {
            Err(Error::Parse(format!(
                "{}: unrecognized format (expected TNS1 or P6 PPM)",
                path.display()
            )))
        }
    }

    /// Parse binary PPM (P6, maxval <= 255) into f32 values in [0, 1].
    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        // Header: "P6", width, height, maxval, separated by whitespace and
        // optional '#' comments, then a single whitespace byte before data.
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Parse("truncated PPM header".into()));
            }
            fields.push(&bytes[start..pos]);
        }
        if fields[0] != b"P6" {
            return Err(Error::Parse("not a binary P6 PPM".into()));
        }
        let parse_dim = |s: &[u8], what: &str| -> Result<usize> {
            std::str::from_utf8(s)
                .ok()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| Error::Parse(format!("bad PPM {what}")))
        };
        let width = parse_dim(fields[1], "width")?;
        let height = parse_dim(fields[2], "height")?;
        let maxval = parse_dim(fields[3], "maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Parse(format!(
                "unsupported PPM maxval {maxval} (8-bit only)"
            )));
        }
        pos += 1; // single whitespace after maxval
        let n = height * width * 3;
        if bytes.len() < pos + n {
            return Err(Error::Parse("PPM pixel data truncated".into()));
        }
        let scale = 1.0f32 / maxval as f32;
        let data: Vec<f32> = bytes[pos..pos + n]
            .iter()
            .map(|&b| f32::from(b) * scale)
            .collect();
        ImageTensor::new(height, width, 3, data)
    }
}

/// Serialize a row-major `rows × cols` f64 matrix as TNS1 (H=rows, W=cols,
/// C=1). Values are stored as f32; used for embedding banks and projections.
pub fn matrix_to_tns1(rows: usize, cols: usize, values: &[f64]) -> Result<Vec<u8>> {
    let data: Vec<f32> = values.iter().map(|&x| x as f32).collect();
    Ok(ImageTensor::new(rows, cols, 1, data)?.to_tns1())
}

/// Inverse of [`matrix_to_tns1`]: returns `(rows, cols, values)`.
pub fn matrix_from_tns1(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let t = ImageTensor::from_tns1(bytes)?;
    if t.channels() != 1 {
        return Err(Error::Parse(format!(
            "matrix TNS1 must have C=1, got C={}",
            t.channels()
        )));
    }
    let vals = t.data().iter().map(|&x| f64::from(x)).collect();
    Ok((t.height(), t.width(), vals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tns1_round_trip_is_bit_exact() {
        let data: Vec<f32> = (0..24).map(|i| (i as f32).sin()).collect();
        let t = ImageTensor::new(2, 4, 3, data).unwrap();
        let back = ImageTensor::from_tns1(&t.to_tns1()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn tns1_rejects_bad_magic_and_truncation() {
        let t = ImageTensor::zeros(2, 2, 1);
        let mut bytes = t.to_tns1();
        bytes[0] = b'X';
        assert!(matches!(
            ImageTensor::from_tns1(&bytes),
            Err(Error::Parse(_))
        ));
        let bytes = t.to_tns1();
        assert!(matches!(
            ImageTensor::from_tns1(&bytes[..bytes.len() - 1]),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn ppm_parses_and_scales_to_unit_interval() {
        let mut ppm = b"P6\n# comment\n2 2\n255\n".to_vec();
        ppm.extend_from_slice(&[0, 128, 255, 10, 20, 30, 40, 50, 60, 70, 80, 90]);
        let t = ImageTensor::from_ppm(&ppm).unwrap();
        assert_eq!(t.shape(), (2, 2, 3));
        assert!((t.get(0, 0, 2) - 1.0).abs() < 1e-6);
        assert!((t.get(0, 0, 1) - 128.0 / 255.0).abs() < 1e-6);
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn shape_validation() {
        assert!(ImageTensor::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageTensor::new(0, 2, 1, vec![]).is_err());
    }
}
