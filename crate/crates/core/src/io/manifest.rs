//! JSON manifests: cameras, detection boxes and category palettes.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CameraView, DEFAULT_Z_MAX, DEFAULT_Z_MIN, QUAT_NORM_TOLERANCE};

/// Rotation tolerance accepted from camera manifests. Rotations between this
/// and the in-memory tolerance are re-orthonormalized on load.
pub const MANIFEST_ORTHO_TOLERANCE: f64 = 1e-4;

pub(crate) fn json_error(text: &str, err: serde_json::Error) -> Error {
    let offset = text
        .split_inclusive('\n')
        .take(err.line().saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + err.column().saturating_sub(1);
    Error::format(offset, err.to_string())
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::format(e.utf8_error().valid_up_to(), "not UTF-8"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- cameras

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRecord {
    #[serde(rename = "K")]
    k: Vec<f64>,
    world_to_camera: Vec<f64>,
    width: u32,
    height: u32,
    #[serde(default = "default_z_min")]
    z_min: f64,
    #[serde(default = "default_z_max")]
    z_max: f64,
}

fn default_z_min() -> f64 {
    DEFAULT_Z_MIN
}

fn default_z_max() -> f64 {
    DEFAULT_Z_MAX
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraFile {
    views: Vec<CameraRecord>,
}

/// Nearest rotation to `r` (polar factor via SVD).
fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut q = u * vt;
    if q.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        q = u * vt;
    }
    q
}

pub fn parse_cameras(text: &str) -> Result<Vec<CameraView>> {
    let file: CameraFile = serde_json::from_str(text).map_err(|e| json_error(text, e))?;
    file.views
        .into_iter()
        .enumerate()
        .map(|(i, rec)| {
            let err = |m: String| Error::validation(format!("view {i}: {m}"));
            if rec.k.len() != 9 {
                return Err(err(format!("K has {} entries, expected 9", rec.k.len())));
            }
            if rec.world_to_camera.len() != 16 {
                return Err(err(format!(
                    "world_to_camera has {} entries, expected 16",
                    rec.world_to_camera.len()
                )));
            }
            let mut view = CameraView {
                intrinsics: Matrix3::from_row_slice(&rec.k),
                world_to_camera: Matrix4::from_row_slice(&rec.world_to_camera),
                width: rec.width,
                height: rec.height,
                z_min: rec.z_min,
                z_max: rec.z_max,
            };
            view.validate(MANIFEST_ORTHO_TOLERANCE)
                .map_err(|e| err(e.to_string()))?;
            if view.validate(QUAT_NORM_TOLERANCE).is_err() {
                let r = orthonormalize(&view.rotation());
                view.world_to_camera.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
            }
            Ok(view)
        })
        .collect()
}

pub fn read_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraView>> {
    parse_cameras(&read_text(path.as_ref())?)
}

pub fn cameras_to_json(views: &[CameraView]) -> String {
    let file = CameraFile {
        views: views
            .iter()
            .map(|v| CameraRecord {
                k: v.intrinsics.transpose().iter().copied().collect(),
                world_to_camera: v.world_to_camera.transpose().iter().copied().collect(),
                width: v.width,
                height: v.height,
                z_min: v.z_min,
                z_max: v.z_max,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("camera manifest serializes")
}

pub fn write_cameras(views: &[CameraView], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &cameras_to_json(views))
}

// ---------------------------------------------------------------- palette

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub rgb: [u8; 3],
}

/// Ordered categories; entry `k - 1` is category id `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryPalette {
    pub categories: Vec<Category>,
}

impl CategoryPalette {
    pub fn new(categories: Vec<Category>) -> Result<Self> {
        let palette = Self { categories };
        palette.validate()?;
        Ok(palette)
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.len() > 255 {
            return Err(Error::validation("palettes hold at most 255 categories"));
        }
        for (i, a) in self.categories.iter().enumerate() {
            for b in &self.categories[..i] {
                if a.rgb == b.rgb {
                    return Err(Error::validation(format!(
                        "categories '{}' and '{}' share color {:?}",
                        b.name, a.name, a.rgb
                    )));
                }
                if a.name == b.name {
                    return Err(Error::validation(format!("duplicate category '{}'", a.name)));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// Color of category id `id` (1-based).
    pub fn color(&self, id: u8) -> [u8; 3] {
        self.categories[id as usize - 1].rgb
    }

    pub fn id_of(&self, name: &str) -> Option<u8> {
        self.categories
            .iter()
            .position(|c| c.name == name)
            .map(|i| (i + 1) as u8)
    }

    fn names(&self) -> String {
        self.categories
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

pub fn parse_palette(text: &str) -> Result<CategoryPalette> {
    let palette: CategoryPalette = serde_json::from_str(text).map_err(|e| json_error(text, e))?;
    palette.validate()?;
    Ok(palette)
}

pub fn read_palette(path: impl AsRef<Path>) -> Result<CategoryPalette> {
    parse_palette(&read_text(path.as_ref())?)
}

pub fn write_palette(palette: &CategoryPalette, path: impl AsRef<Path>) -> Result<()> {
    write_text(
        path.as_ref(),
        &serde_json::to_string_pretty(palette).expect("palette serializes"),
    )
}

// ---------------------------------------------------------------- boxes

/// A 2D detection. Coordinates are pixels, inclusive-exclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    /// One probability per palette category, in palette order.
    pub probs: Vec<f64>,
}

impl DetectionBox {
    /// Highest category probability.
    pub fn p_max(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Category id (1-based) of the highest probability; ties go to the lowest id.
    pub fn argmax(&self) -> Option<u8> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if best.map_or(true, |(_, b)| p > b) {
                best = Some((i, p));
            }
        }
        best.map(|(i, _)| (i + 1) as u8)
    }

    #[inline]
    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= self.x_min && u < self.x_max && v >= self.y_min && v < self.y_max
    }

    fn check(&self) -> Result<()> {
        let c = [self.x_min, self.y_min, self.x_max, self.y_max];
        if !c.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("box coordinates must be finite"));
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(Error::validation(format!("degenerate box {c:?}")));
        }
        Ok(())
    }
}

/// Boxes grouped per view, aligned with the camera manifest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionBoxSet {
    pub views: Vec<Vec<DetectionBox>>,
}

impl DetectionBoxSet {
    /// Clamps every box to its view's image bounds; returns how many boxes
    /// were changed.
    pub fn clamp_to_views(&mut self, views: &[CameraView]) -> Result<usize> {
        if views.len() != self.views.len() {
            return Err(Error::validation(format!(
                "box manifest has {} views but camera manifest has {}",
                self.views.len(),
                views.len()
            )));
        }
        let mut clamped = 0;
        for (v, (boxes, view)) in self.views.iter_mut().zip(views).enumerate() {
            let (w, h) = (view.width as f64, view.height as f64);
            for (b, bx) in boxes.iter_mut().enumerate() {
                let before = [bx.x_min, bx.y_min, bx.x_max, bx.y_max];
                bx.x_min = bx.x_min.clamp(0.0, w);
                bx.x_max = bx.x_max.clamp(0.0, w);
                bx.y_min = bx.y_min.clamp(0.0, h);
                bx.y_max = bx.y_max.clamp(0.0, h);
                if before != [bx.x_min, bx.y_min, bx.x_max, bx.y_max] {
                    clamped += 1;
                }
                bx.check()
                    .map_err(|e| Error::validation(format!("view {v} box {b} after clamping: {e}")))?;
            }
        }
        Ok(clamped)
    }

    pub fn box_count(&self) -> usize {
        self.views.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxRecord {
    #[serde(rename = "box")]
    bounds: [f64; 4],
    probs: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxView {
    boxes: Vec<BoxRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxFile {
    views: Vec<BoxView>,
}

pub fn parse_boxes(text: &str, palette: &CategoryPalette) -> Result<DetectionBoxSet> {
    let file: BoxFile = serde_json::from_str(text).map_err(|e| json_error(text, e))?;
    let mut views = Vec::with_capacity(file.views.len());
    for (v, view) in file.views.into_iter().enumerate() {
        let mut boxes = Vec::with_capacity(view.boxes.len());
        for (b, rec) in view.boxes.into_iter().enumerate() {
            let mut probs = vec![0.0; palette.len()];
            for (name, p) in &rec.probs {
                let id = palette.id_of(name).ok_or_else(|| {
                    Error::validation(format!(
                        "view {v} box {b}: unknown category '{name}' (palette: {})",
                        palette.names()
                    ))
                })?;
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::validation(format!(
                        "view {v} box {b}: probability {p} for '{name}' outside [0, 1]"
                    )));
                }
                probs[id as usize - 1] = *p;
            }
            let [x_min, y_min, x_max, y_max] = rec.bounds;
            let bx = DetectionBox {
                x_min,
                y_min,
                x_max,
                y_max,
                probs,
            };
            bx.check()
                .map_err(|e| Error::validation(format!("view {v} box {b}: {e}")))?;
            boxes.push(bx);
        }
        views.push(boxes);
    }
    Ok(DetectionBoxSet { views })
}

pub fn read_boxes(path: impl AsRef<Path>, palette: &CategoryPalette) -> Result<DetectionBoxSet> {
    parse_boxes(&read_text(path.as_ref())?, palette)
}

pub fn boxes_to_json(boxes: &DetectionBoxSet, palette: &CategoryPalette) -> String {
    let file = BoxFile {
        views: boxes
            .views
            .iter()
            .map(|bs| BoxView {
                boxes: bs
                    .iter()
                    .map(|b| BoxRecord {
                        bounds: [b.x_min, b.y_min, b.x_max, b.y_max],
                        probs: b
                            .probs
                            .iter()
                            .zip(&palette.categories)
                            .filter(|(p, _)| **p > 0.0)
                            .map(|(p, c)| (c.name.clone(), *p))
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("box manifest serializes")
}

pub fn write_boxes(
    boxes: &DetectionBoxSet,
    palette: &CategoryPalette,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_text(path.as_ref(), &boxes_to_json(boxes, palette))
}
