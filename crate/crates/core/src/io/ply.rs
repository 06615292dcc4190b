//! Binary little-endian splat PLY, the layout written by the reference
//! Gaussian-splatting trainer.
//!
//! Stored-domain transforms:
//!
//! | field    | stored                    | decoded                         |
//! |----------|---------------------------|---------------------------------|
//! | opacity  | logit                      | logistic(stored)                |
//! | scale    | log                        | exp(stored)                     |
//! | rotation | raw quaternion `rot_0..3`  | normalized `(w, x, y, z)`       |
//! | color    | SH DC `f_dc_0..2`          | `0.5 + SH_C0 * f_dc`, clamped   |
//!
//! Normals and `f_rest_*` are ignored on read and written as zeros.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::model::{
    color_to_dc, dc_to_color, quaternion_norm, GaussianBlob, GaussianScene, QUAT_NORM_TOLERANCE,
};

pub const DEFAULT_MAX_VERTICES: usize = 50_000_000;
const MAX_HEADER_BYTES: usize = 1 << 16;
const REST_COEFFS: usize = 45;
/// Opacities of exactly 0 or 1 are moved this far inside (0, 1) before the logit.
pub const OPACITY_CLAMP: f64 = 1e-6;

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
];

#[derive(Debug, Clone)]
pub struct PlyReadOptions {
    /// Upper bound on the declared vertex count.
    pub max_vertices: usize,
}

impl Default for PlyReadOptions {
    fn default() -> Self {
        Self {
            max_vertices: DEFAULT_MAX_VERTICES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlyWriteReport {
    /// Blobs whose opacity had to be pulled inside (0, 1) before the logit.
    pub clamped_opacity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, ScalarType)>,
    has_list: bool,
}

impl Element {
    fn stride(&self) -> usize {
        self.properties.iter().map(|p| p.1.size()).sum()
    }
}

struct Header {
    data_offset: usize,
    elements: Vec<Element>,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0usize;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(Error::format(bytes.len(), "header is not terminated by end_header"));
        };
        let raw = &rest[..nl];
        let line_start = pos;
        pos += nl + 1;
        if pos > MAX_HEADER_BYTES {
            return Err(Error::format(line_start, "header exceeds 64 KiB"));
        }
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::format(line_start, "header line is not UTF-8"))?
            .trim_end_matches('\r');
        if line == "end_header" {
            break;
        }
        lines.push((line_start, line));
    }

    let mut iter = lines.into_iter();
    match iter.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::format(0, "missing 'ply' magic")),
    }
    let mut format_seen = false;
    let mut elements: Vec<Element> = Vec::new();
    for (offset, line) in iter {
        let mut words = line.split_ascii_whitespace();
        match words.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                let kind = words.next();
                let version = words.next();
                if kind != Some("binary_little_endian") || version != Some("1.0") {
                    return Err(Error::format(
                        offset,
                        format!("unsupported format line '{line}', expected binary_little_endian 1.0"),
                    ));
                }
                format_seen = true;
            }
            Some("element") => {
                let (Some(name), Some(count), None) = (words.next(), words.next(), words.next())
                else {
                    return Err(Error::format(offset, format!("malformed element line '{line}'")));
                };
                let count = count
                    .parse::<usize>()
                    .map_err(|_| Error::format(offset, format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            Some("property") => {
                let Some(element) = elements.last_mut() else {
                    return Err(Error::format(offset, "property before any element"));
                };
                let ty = words.next();
                if ty == Some("list") {
                    element.has_list = true;
                    continue;
                }
                let (Some(ty), Some(name), None) = (ty, words.next(), words.next()) else {
                    return Err(Error::format(offset, format!("malformed property line '{line}'")));
                };
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| Error::format(offset, format!("unknown property type '{ty}'")))?;
                if element.properties.iter().any(|p| p.0 == name) {
                    return Err(Error::format(offset, format!("duplicate property '{name}'")));
                }
                element.properties.push((name.to_string(), ty));
            }
            Some(other) => {
                return Err(Error::format(offset, format!("unknown header keyword '{other}'")));
            }
        }
    }
    if !format_seen {
        return Err(Error::format(0, "missing format line"));
    }
    Ok(Header {
        data_offset: pos,
        elements,
    })
}

#[inline]
fn logistic(s: f64) -> f64 {
    let a = if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    };
    // Keep the result strictly inside (0, 1).
    if a >= 1.0 {
        1.0 - f64::EPSILON / 2.0
    } else if a <= 0.0 {
        f64::MIN_POSITIVE
    } else {
        a
    }
}

#[inline]
fn logit(a: f64) -> f64 {
    (a / (1.0 - a)).ln()
}

#[inline]
fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn decode_opacity(stored: f32) -> f64 {
    logistic(stored as f64)
}

fn decode_scale(stored: f32) -> f64 {
    (stored as f64).exp()
}

fn decode_color(stored: f32) -> f64 {
    dc_to_color(stored as f64)
}

/// Decodes quaternion components; when normalization is needed the result is
/// rounded to f32 precision so that writing and re-reading is a fixed point.
fn decode_rotation(stored: [f32; 4]) -> Option<[f64; 4]> {
    let q = stored.map(|v| v as f64);
    let norm = quaternion_norm(&q);
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    if (norm - 1.0).abs() <= QUAT_NORM_TOLERANCE {
        return Some(q);
    }
    Some(q.map(|v| (v / norm) as f32 as f64))
}

/// Decodes a splat PLY held in memory.
pub fn decode_gaussian_ply(
    bytes: &[u8],
    options: &PlyReadOptions,
    source: &str,
) -> Result<GaussianScene> {
    let header = parse_header(bytes)?;
    let mut offset = header.data_offset;
    let mut vertex = None;
    for element in &header.elements {
        if element.name == "vertex" {
            vertex = Some(element);
            break;
        }
        if element.has_list {
            return Err(Error::format(
                offset,
                format!("element '{}' before vertex has list properties", element.name),
            ));
        }
        let size = element
            .count
            .checked_mul(element.stride())
            .ok_or_else(|| Error::format(offset, "element size overflows"))?;
        offset = offset
            .checked_add(size)
            .ok_or_else(|| Error::format(offset, "element size overflows"))?;
    }
    let vertex = vertex.ok_or_else(|| Error::format(header.data_offset, "no vertex element"))?;
    if vertex.has_list {
        return Err(Error::format(header.data_offset, "vertex element has list properties"));
    }
    if vertex.count > options.max_vertices {
        return Err(Error::format(
            header.data_offset,
            format!(
                "vertex count {} exceeds the cap of {}",
                vertex.count, options.max_vertices
            ),
        ));
    }

    let mut columns = [0usize; REQUIRED.len()];
    for (slot, name) in columns.iter_mut().zip(REQUIRED) {
        let mut at = 0;
        let mut found = None;
        for (prop, ty) in &vertex.properties {
            if prop == name {
                found = Some((at, *ty));
                break;
            }
            at += ty.size();
        }
        match found {
            Some((at, ScalarType::F32)) => *slot = at,
            Some(_) => {
                return Err(Error::format(
                    header.data_offset,
                    format!("property '{name}' must be float"),
                ))
            }
            None => {
                return Err(Error::format(
                    header.data_offset,
                    format!("missing required property '{name}'"),
                ))
            }
        }
    }

    let stride = vertex.stride();
    let needed = vertex
        .count
        .checked_mul(stride)
        .and_then(|n| n.checked_add(offset))
        .ok_or_else(|| Error::format(offset, "vertex data size overflows"))?;
    if bytes.len() < needed {
        let complete = bytes.len().saturating_sub(offset) / stride.max(1);
        return Err(Error::format(
            bytes.len(),
            format!(
                "truncated vertex data: {} of {} vertices present",
                complete, vertex.count
            ),
        ));
    }

    let mut blobs = Vec::with_capacity(vertex.count);
    for index in 0..vertex.count {
        let base = offset + index * stride;
        let v: [f32; REQUIRED.len()] = std::array::from_fn(|k| f32_at(bytes, base + columns[k]));
        if let Some(k) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data {
                index,
                message: format!("non-finite value in property '{}'", REQUIRED[k]),
            });
        }
        let scale = Vector3::new(decode_scale(v[7]), decode_scale(v[8]), decode_scale(v[9]));
        if !scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::Data {
                index,
                message: "decoded scale is zero or infinite".into(),
            });
        }
        let rotation = decode_rotation([v[10], v[11], v[12], v[13]]).ok_or_else(|| Error::Data {
            index,
            message: "zero-norm quaternion".into(),
        })?;
        blobs.push(GaussianBlob {
            position: Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64),
            scale,
            rotation,
            color: Vector3::new(decode_color(v[3]), decode_color(v[4]), decode_color(v[5])),
            opacity: decode_opacity(v[6]),
        });
    }
    Ok(GaussianScene {
        blobs,
        source_path: source.to_string(),
    })
}

pub fn read_gaussian_ply(path: impl AsRef<Path>) -> Result<GaussianScene> {
    read_gaussian_ply_with(path, &PlyReadOptions::default())
}

pub fn read_gaussian_ply_with(
    path: impl AsRef<Path>,
    options: &PlyReadOptions,
) -> Result<GaussianScene> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_gaussian_ply(&bytes, options, &path.display().to_string())
}

/// Picks the stored f32 whose decoding reproduces `field` exactly, searching a
/// few ulps around the analytic inverse; falls back to the inverse itself.
fn encode_exact(field: f64, inverse: f64, decode: impl Fn(f32) -> f64) -> f32 {
    let s0 = inverse as f32;
    if decode(s0) == field {
        return s0;
    }
    let (mut up, mut down) = (s0, s0);
    for _ in 0..4 {
        up = up.next_up();
        down = down.next_down();
        if decode(up) == field {
            return up;
        }
        if decode(down) == field {
            return down;
        }
    }
    s0
}

/// Encodes a scene in the splat PLY layout.
pub fn encode_gaussian_ply(scene: &GaussianScene) -> (Vec<u8>, PlyWriteReport) {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", scene.len()));
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..REST_COEFFS).map(|i| format!("f_rest_{i}")));
    names.extend(
        ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
            .iter()
            .map(|s| s.to_string()),
    );
    for n in &names {
        header.push_str(&format!("property float {n}\n"));
    }
    header.push_str("end_header\n");

    let mut report = PlyWriteReport::default();
    let mut out = Vec::with_capacity(header.len() + scene.len() * names.len() * 4);
    out.extend_from_slice(header.as_bytes());
    let push = |out: &mut Vec<u8>, v: f32| out.extend_from_slice(&v.to_le_bytes());
    for blob in &scene.blobs {
        for k in 0..3 {
            push(&mut out, blob.position[k] as f32);
        }
        for _ in 0..3 {
            push(&mut out, 0.0);
        }
        for k in 0..3 {
            let c = blob.color[k];
            push(&mut out, encode_exact(c, color_to_dc(c), decode_color));
        }
        for _ in 0..REST_COEFFS {
            push(&mut out, 0.0);
        }
        let mut a = blob.opacity;
        if a <= 0.0 || a >= 1.0 {
            report.clamped_opacity += 1;
            a = a.clamp(OPACITY_CLAMP, 1.0 - OPACITY_CLAMP);
        }
        push(&mut out, encode_exact(a, logit(a), decode_opacity));
        for k in 0..3 {
            let s = blob.scale[k];
            push(&mut out, encode_exact(s, s.ln(), decode_scale));
        }
        for k in 0..4 {
            push(&mut out, blob.rotation[k] as f32);
        }
    }
    (out, report)
}

pub fn write_gaussian_ply(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<PlyWriteReport> {
    let path = path.as_ref();
    let (bytes, report) = encode_gaussian_ply(scene);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(report)
}
