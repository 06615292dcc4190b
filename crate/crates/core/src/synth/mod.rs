//! Deterministic synthetic scenes with ground-truth labels.
//!
//! World frame: `z` up, room spanning `[0, room.x] × [0, room.y] × [0, room.z]`.
//! Objects are axis-aligned boxes of blobs placed on a horizontal circle
//! around the room center at mid height; the background is a shell of blobs
//! on the walls, floor and ceiling; cameras sit on a larger circle looking at
//! the center.

pub mod oracle;

use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{Category, CategoryPalette, DetectionBox, DetectionBoxSet, Image, LabelRaster};
use crate::model::{normalize_quaternion, CameraView, GaussianBlob, GaussianScene, IDENTITY_ROTATION};
use crate::render::{render_view_full, RenderConfig};
use crate::sampling::SampledScene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub blobs: usize,
    /// Box side lengths in meters.
    pub extent: [f64; 3],
    /// 1-based palette id.
    pub category: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub objects: Vec<ObjectSpec>,
    pub background_blobs: usize,
    pub room: [f64; 3],
    /// Distance of object centers from the room's vertical axis.
    pub object_ring_radius: f64,
    pub camera_ring_radius: f64,
    /// Camera azimuths in degrees, measured from `+x` toward `+y`.
    pub camera_angles_deg: Vec<f64>,
    pub image_width: u32,
    pub image_height: u32,
    pub focal: f64,
    pub palette: CategoryPalette,
    /// Probability of the true category on every emitted box.
    pub box_prob: f64,
    /// Slack around the object depth span when setting per-view depth limits.
    pub depth_margin: f64,
}

pub fn default_palette() -> CategoryPalette {
    let cats = [
        ("chair", [230, 25, 75]),
        ("table", [60, 180, 75]),
        ("sofa", [0, 130, 200]),
        ("bed", [255, 225, 25]),
    ];
    CategoryPalette {
        categories: cats
            .iter()
            .map(|(n, c)| Category {
                name: n.to_string(),
                rgb: *c,
            })
            .collect(),
    }
}

/// `n` azimuths evenly spread over the full circle.
pub fn ring_angles(n: usize) -> Vec<f64> {
    (0..n).map(|i| 360.0 * i as f64 / n as f64).collect()
}

impl SyntheticSceneSpec {
    /// 4 objects × 250 blobs, 9000 background blobs, 8 ring cameras, 6×6×3 m room.
    pub fn canonical() -> Self {
        Self {
            objects: (0..4)
                .map(|i| ObjectSpec {
                    blobs: 250,
                    extent: [0.5, 0.5, 0.5],
                    category: i as u8 + 1,
                })
                .collect(),
            background_blobs: 9000,
            room: [6.0, 6.0, 3.0],
            object_ring_radius: 0.9,
            camera_ring_radius: 2.4,
            camera_angles_deg: ring_angles(8),
            image_width: 320,
            image_height: 240,
            focal: 300.0,
            palette: default_palette(),
            box_prob: 1.0,
            depth_margin: 0.25,
        }
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(self.room[0] / 2.0, self.room[1] / 2.0, self.room[2] / 2.0)
    }

    pub fn object_center(&self, j: usize) -> Vector3<f64> {
        let n = self.objects.len() as f64;
        let a = std::f64::consts::TAU * (j as f64 + 0.5) / n;
        self.center() + self.object_ring_radius * Vector3::new(a.cos(), a.sin(), 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.room.iter().all(|&r| r > 0.0 && r.is_finite()) {
            return Err(Error::invalid("room extents must be positive"));
        }
        if !(self.box_prob > 0.0 && self.box_prob <= 1.0) {
            return Err(Error::invalid(format!("box_prob {} outside (0, 1]", self.box_prob)));
        }
        if self.image_width == 0 || self.image_height == 0 || !(self.focal > 0.0) {
            return Err(Error::invalid("image size and focal length must be positive"));
        }
        if !(self.object_ring_radius >= 0.0 && self.depth_margin >= 0.0) {
            return Err(Error::invalid("object ring radius and depth margin must be non-negative"));
        }
        let half = self.room[0].min(self.room[1]) / 2.0;
        if !self.camera_angles_deg.is_empty() && !(self.camera_ring_radius > 0.0 && self.camera_ring_radius < half) {
            return Err(Error::validation(format!(
                "camera ring radius {} must lie inside the room (half width {half})",
                self.camera_ring_radius
            )));
        }
        self.palette.validate()?;
        let lo = Vector3::zeros();
        let hi = Vector3::from(self.room);
        for (j, o) in self.objects.iter().enumerate() {
            if !o.extent.iter().all(|&e| e > 0.0 && e.is_finite()) {
                return Err(Error::invalid(format!("object {j} extent must be positive")));
            }
            if o.category == 0 || o.category as usize > self.palette.len() {
                return Err(Error::validation(format!(
                    "object {j} has category {} outside 1..={}",
                    o.category,
                    self.palette.len()
                )));
            }
            let c = self.object_center(j);
            let e = Vector3::from(o.extent) / 2.0;
            let fits = (0..3).all(|a| c[a] - e[a] > lo[a] && c[a] + e[a] < hi[a]);
            let reach = self.object_ring_radius + e.x.hypot(e.y);
            if !fits || (!self.camera_angles_deg.is_empty() && reach >= self.camera_ring_radius) {
                return Err(Error::validation(format!(
                    "object {j} of extent {:?} does not fit the room inside the camera ring",
                    o.extent
                )));
            }
        }
        Ok(())
    }
}

/// A scene with per-blob ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScene {
    pub scene: GaussianScene,
    pub is_object: Vec<bool>,
    /// Palette id per blob, 0 for background.
    pub category: Vec<u8>,
}

impl LabeledScene {
    pub fn object_count(&self) -> usize {
        self.is_object.iter().filter(|&&o| o).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub labeled: LabeledScene,
    pub cameras: Vec<CameraView>,
    pub boxes: DetectionBoxSet,
    pub palette: CategoryPalette,
}

/// Camera at `eye` looking at `target` with `-z` world as image down.
pub fn look_at(
    eye: Vector3<f64>,
    target: Vector3<f64>,
    width: u32,
    height: u32,
    focal: f64,
    z_min: f64,
    z_max: f64,
) -> Result<CameraView> {
    let forward = (target - eye).normalize();
    let right = forward.cross(&Vector3::z());
    if !(right.norm() > 1e-9) {
        return Err(Error::validation("look_at direction is vertical"));
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let t = -(r * eye);
    let mut w2c = Matrix4::identity();
    w2c.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    w2c.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    let k = Matrix3::new(
        focal,
        0.0,
        width as f64 / 2.0,
        0.0,
        focal,
        height as f64 / 2.0,
        0.0,
        0.0,
        1.0,
    );
    CameraView::new(k, w2c, width, height, z_min, z_max)
}

fn random_rotation(rng: &mut impl Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2: f64 = q.iter().map(|v| v * v).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            return normalize_quaternion(q).unwrap_or(IDENTITY_ROTATION);
        }
    }
}

fn object_blob(rng: &mut impl Rng, center: Vector3<f64>, half: Vector3<f64>, rgb: [u8; 3]) -> GaussianBlob {
    let pos = Vector3::from_fn(|a, _| center[a] + rng.gen_range(-half[a]..=half[a]));
    let scale = Vector3::from_fn(|_, _| rng.gen_range(0.01..0.03));
    let color = Vector3::from_fn(|a, _| (rgb[a] as f64 / 255.0 + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0));
    GaussianBlob {
        position: pos,
        scale,
        rotation: random_rotation(rng),
        color,
        opacity: rng.gen_range(0.6..0.95),
    }
}

fn background_blob(rng: &mut impl Rng, room: [f64; 3]) -> GaussianBlob {
    let [x, y, z] = room;
    // Faces: floor, ceiling, x = 0, x = X, y = 0, y = Y.
    let areas = [x * y, x * y, y * z, y * z, x * z, x * z];
    let total: f64 = areas.iter().sum();
    let mut r = rng.gen_range(0.0..total);
    let mut face = 5;
    for (i, a) in areas.iter().enumerate() {
        if r < *a {
            face = i;
            break;
        }
        r -= a;
    }
    let inset = rng.gen_range(0.0..0.02);
    let (u, v) = (rng.gen::<f64>(), rng.gen::<f64>());
    let pos = match face {
        0 => Vector3::new(u * x, v * y, inset),
        1 => Vector3::new(u * x, v * y, z - inset),
        2 => Vector3::new(inset, u * y, v * z),
        3 => Vector3::new(x - inset, u * y, v * z),
        4 => Vector3::new(u * x, inset, v * z),
        _ => Vector3::new(u * x, y - inset, v * z),
    };
    let gray = rng.gen_range(0.3..0.7);
    GaussianBlob {
        position: pos,
        scale: Vector3::from_fn(|_, _| rng.gen_range(0.05..0.12)),
        rotation: random_rotation(rng),
        color: Vector3::new(gray, gray, gray + rng.gen_range(-0.05..0.05)),
        opacity: rng.gen_range(0.7..0.95),
    }
}

/// Builds the scene, ring cameras and exact per-view boxes for `spec`.
///
/// Each view's depth limits span the depths of all object blob centers it
/// sees, widened by `depth_margin`. A view's box for an object bounds the
/// projected centers, `[floor(min), floor(max) + 1)` per axis, clipped to the
/// image; objects with no center in front of the camera get no box.
pub fn generate_scene(spec: &SyntheticSceneSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut tagged: Vec<(GaussianBlob, u8, usize)> = Vec::new();
    for (j, o) in spec.objects.iter().enumerate() {
        let c = spec.object_center(j);
        let half = Vector3::from(o.extent) / 2.0;
        let rgb = spec.palette.color(o.category);
        for _ in 0..o.blobs {
            tagged.push((object_blob(&mut rng, c, half, rgb), o.category, j));
        }
    }
    for _ in 0..spec.background_blobs {
        tagged.push((background_blob(&mut rng, spec.room), 0, usize::MAX));
    }
    tagged.shuffle(&mut rng);
    // Centers at f32 precision so boxes stay exact after a PLY round trip.
    for (b, _, _) in tagged.iter_mut() {
        b.position = b.position.map(|v| v as f32 as f64);
    }
    for (i, (b, _, _)) in tagged.iter().enumerate() {
        b.validate().map_err(|e| Error::validation(format!("generated blob {i} invalid: {e}")))?;
    }

    let center = spec.center();
    let mut cameras = Vec::with_capacity(spec.camera_angles_deg.len());
    let mut boxes = Vec::with_capacity(spec.camera_angles_deg.len());
    for &deg in &spec.camera_angles_deg {
        let a = deg.to_radians();
        let eye = center + spec.camera_ring_radius * Vector3::new(a.cos(), a.sin(), 0.0);
        let probe = look_at(eye, center, spec.image_width, spec.image_height, spec.focal, 0.1, 1.0)?;
        let depths: Vec<f64> = tagged
            .iter()
            .filter(|t| t.1 != 0)
            .map(|t| probe.to_camera(&t.0.position).z)
            .filter(|&z| z > 0.0)
            .collect();
        let (z_min, z_max) = if depths.is_empty() {
            (crate::model::DEFAULT_Z_MIN, crate::model::DEFAULT_Z_MAX)
        } else {
            let lo = depths.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = depths.iter().cloned().fold(0.0, f64::max);
            ((lo - spec.depth_margin).max(0.05), hi + spec.depth_margin)
        };
        let view = look_at(eye, center, spec.image_width, spec.image_height, spec.focal, z_min, z_max)?;
        let mut view_boxes = Vec::new();
        for (j, o) in spec.objects.iter().enumerate() {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for t in tagged.iter().filter(|t| t.2 == j) {
                if let Some((uv, _)) = view.project_point(&t.0.position) {
                    lo = [lo[0].min(uv.x), lo[1].min(uv.y)];
                    hi = [hi[0].max(uv.x), hi[1].max(uv.y)];
                }
            }
            if !lo[0].is_finite() {
                continue;
            }
            let x_min = lo[0].floor().max(0.0);
            let y_min = lo[1].floor().max(0.0);
            let x_max = (hi[0].floor() + 1.0).min(spec.image_width as f64);
            let y_max = (hi[1].floor() + 1.0).min(spec.image_height as f64);
            if x_min >= x_max || y_min >= y_max {
                continue;
            }
            let mut probs = vec![0.0; spec.palette.len()];
            probs[o.category as usize - 1] = spec.box_prob;
            view_boxes.push(DetectionBox {
                x_min,
                y_min,
                x_max,
                y_max,
                probs,
            });
        }
        cameras.push(view);
        boxes.push(view_boxes);
    }

    let category: Vec<u8> = tagged.iter().map(|t| t.1).collect();
    let labeled = LabeledScene {
        is_object: category.iter().map(|&c| c != 0).collect(),
        category,
        scene: GaussianScene {
            blobs: tagged.into_iter().map(|t| t.0).collect(),
            source_path: format!("synthetic:{seed}"),
        },
    };
    Ok(SyntheticScene {
        labeled,
        cameras,
        boxes: DetectionBoxSet { views: boxes },
        palette: spec.palette.clone(),
    })
}

/// Renders each camera and derives its label raster: a pixel takes the
/// category of its dominant blob when that blob is an object and the pixel's
/// accumulated weight is at least one half.
pub fn render_views(synthetic: &SyntheticScene, config: &RenderConfig) -> Result<Vec<(Image, LabelRaster)>> {
    let truth = &synthetic.labeled;
    synthetic
        .cameras
        .iter()
        .map(|view| {
            let r = render_view_full(&truth.scene, view, config)?;
            let labels = r
                .dominant
                .iter()
                .zip(&r.weight)
                .map(|(d, &w)| match d {
                    Some(i) if w >= 0.5 => truth.category[*i as usize],
                    _ => 0,
                })
                .collect();
            Ok((
                r.to_image(),
                LabelRaster {
                    width: r.width,
                    height: r.height,
                    labels,
                },
            ))
        })
        .collect()
}

/// A circle of small opaque blobs of one color, in the plane through `center`
/// normal to `normal`.
pub fn boundary_ring_scene(
    center: Vector3<f64>,
    normal: Vector3<f64>,
    radius: f64,
    blobs: usize,
    color: [f64; 3],
) -> GaussianScene {
    let n = normal.normalize();
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let a = n.cross(&helper).normalize();
    let b = n.cross(&a);
    let blobs = (0..blobs)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / blobs as f64;
            GaussianBlob {
                position: center + radius * (t.cos() * a + t.sin() * b),
                scale: Vector3::new(0.01, 0.01, 0.01),
                rotation: IDENTITY_ROTATION,
                color: Vector3::from(color),
                opacity: 0.95,
            }
        })
        .collect();
    GaussianScene {
        blobs,
        source_path: "ring".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub object_recall: f64,
    pub background_fraction: f64,
    pub kept_objects: usize,
    pub kept_background: usize,
    pub total_objects: usize,
    pub sample_size: usize,
}

/// `object_recall` = kept object blobs / all object blobs (1 when there are
/// none); `background_fraction` = kept background blobs / sample size (0 for
/// an empty sample).
pub fn retention_report(sample: &SampledScene, truth: &LabeledScene) -> Result<RetentionReport> {
    let n = truth.is_object.len();
    if let Some(&i) = sample.indices.iter().find(|&&i| i >= n) {
        return Err(Error::validation(format!("sample index {i} outside labeled scene of {n} blobs")));
    }
    let kept_objects = sample.indices.iter().filter(|&&i| truth.is_object[i]).count();
    let kept_background = sample.indices.len() - kept_objects;
    let total_objects = truth.object_count();
    Ok(RetentionReport {
        object_recall: if total_objects == 0 { 1.0 } else { kept_objects as f64 / total_objects as f64 },
        background_fraction: if sample.indices.is_empty() {
            0.0
        } else {
            kept_background as f64 / sample.indices.len() as f64
        },
        kept_objects,
        kept_background,
        total_objects,
        sample_size: sample.indices.len(),
    })
}
