//! Detector input export.
//!
//! Layout of `PREFIX.bin`: `rows * cols` little-endian IEEE-754 `f32` values,
//! row-major, no header or padding. `PREFIX.json` describes it:
//!
//! ```json
//! {"rows": 2, "cols": 14, "column_names": ["x", ...], "dtype": "f32le"}
//! ```
//!
//! Columns, in order: `x y z`, `scale_x scale_y scale_z`, `rot_w rot_x rot_y
//! rot_z`, `r g b`, `opacity`. Rows follow ascending blob index.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sampler::SampledScene;
use crate::error::{Error, Result};

pub const FEATURE_COLUMNS: [&str; 14] = [
    "x", "y", "z", "scale_x", "scale_y", "scale_z", "rot_w", "rot_x", "rot_y", "rot_z", "r", "g", "b",
    "opacity",
];

pub const DTYPE_F32LE: &str = "f32le";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub column_names: Vec<String>,
    /// Row-major values.
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Bitwise equality, so that NaN payloads and signed zeros count.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.column_names == other.column_names
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorHeader {
    pub rows: usize,
    pub cols: usize,
    pub column_names: Vec<String>,
    pub dtype: String,
}

pub fn concat_features(sample: &SampledScene) -> FeatureMatrix {
    let cols = FEATURE_COLUMNS.len();
    let mut data = Vec::with_capacity(sample.blobs.len() * cols);
    for b in &sample.blobs {
        let p = &b.position;
        let s = &b.scale;
        let q = &b.rotation;
        let c = &b.color;
        data.extend(
            [p.x, p.y, p.z, s.x, s.y, s.z, q[0], q[1], q[2], q[3], c.x, c.y, c.z, b.opacity]
                .iter()
                .map(|&v| v as f32),
        );
    }
    FeatureMatrix {
        rows: sample.blobs.len(),
        cols,
        column_names: FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        data,
    }
}

/// `PREFIX.bin` and `PREFIX.json` for an output prefix.
pub fn detector_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let with = |ext: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".bin"), with(".json"))
}

pub fn encode_detector_input(matrix: &FeatureMatrix) -> Result<(Vec<u8>, String)> {
    if matrix.rows == 0 || matrix.cols == 0 {
        return Err(Error::validation("refusing to export an empty feature matrix"));
    }
    if matrix.data.len() != matrix.rows * matrix.cols || matrix.column_names.len() != matrix.cols {
        return Err(Error::validation(format!(
            "matrix shape {}x{} disagrees with {} values and {} column names",
            matrix.rows,
            matrix.cols,
            matrix.data.len(),
            matrix.column_names.len()
        )));
    }
    if let Some(i) = matrix.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data {
            index: i / matrix.cols,
            message: format!("non-finite value in column {}", matrix.column_names[i % matrix.cols]),
        });
    }
    let bytes = matrix.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let header = DetectorHeader {
        rows: matrix.rows,
        cols: matrix.cols,
        column_names: matrix.column_names.clone(),
        dtype: DTYPE_F32LE.to_string(),
    };
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    Ok((bytes, json))
}

pub fn parse_detector_header(text: &str) -> Result<DetectorHeader> {
    let header: DetectorHeader = serde_json::from_str(text).map_err(|e| crate::io::json_error(text, e))?;
    if header.dtype != DTYPE_F32LE {
        return Err(Error::validation(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.column_names.len() != header.cols {
        return Err(Error::validation(format!(
            "header lists {} column names for {} columns",
            header.column_names.len(),
            header.cols
        )));
    }
    Ok(header)
}

pub fn decode_detector_input(header: &DetectorHeader, bytes: &[u8]) -> Result<FeatureMatrix> {
    let expected = header
        .rows
        .checked_mul(header.cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::validation("header shape overflows"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            bytes.len().min(expected),
            format!("expected {expected} bytes for {}x{} f32, found {}", header.rows, header.cols, bytes.len()),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(FeatureMatrix {
        rows: header.rows,
        cols: header.cols,
        column_names: header.column_names.clone(),
        data,
    })
}

pub fn export_detector_input(matrix: &FeatureMatrix, prefix: &Path) -> Result<(PathBuf, PathBuf)> {
    let (bytes, json) = encode_detector_input(matrix)?;
    let (bin, hdr) = detector_paths(prefix);
    std::fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    std::fs::write(&hdr, json).map_err(|e| Error::io(&hdr, e))?;
    Ok((bin, hdr))
}

pub fn read_detector_input(prefix: &Path) -> Result<FeatureMatrix> {
    let (bin, hdr) = detector_paths(prefix);
    let text = std::fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let header = parse_detector_header(&text)?;
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    decode_detector_input(&header, &bytes)
}
