//! Gaussian blobs, cameras and the closed-form splatting math.
//!
//! Conventions used throughout the crate:
//!
//! * Quaternions are scalar-first `(w, x, y, z)`.
//! * Cameras follow the pinhole convention with camera-space `+z` pointing
//!   forward, `+x` right and `+y` down, so `u = fx * x / z + cx`.
//! * Pixel `(px, py)` samples the image plane at `(px, py)`.

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector2, Vector3};

use crate::error::{Error, Result};

/// Scales are clamped to at least this value before the covariance is inverted.
pub const MIN_SCALE: f64 = 1e-7;

/// Added to both diagonal entries of every projected 2D covariance (pixels²).
pub const LOW_PASS_FLOOR: f64 = 0.3;

/// Camera-space depths at or below this are "behind the camera".
pub const Z_EPSILON: f64 = 1e-6;

/// Zeroth-order real spherical harmonic, `1 / (2 sqrt(pi))`.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

/// Tolerance on `|q| - 1` below which a quaternion is kept as given.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-6;

/// Unit quaternion `(w, x, y, z)`.
pub type Quaternion = [f64; 4];

pub const IDENTITY_ROTATION: Quaternion = [1.0, 0.0, 0.0, 0.0];

/// One anisotropic 3D Gaussian primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBlob {
    /// Center in world meters.
    pub position: Vector3<f64>,
    /// Standard deviation along each principal axis, meters.
    pub scale: Vector3<f64>,
    pub rotation: Quaternion,
    /// Linear RGB in [0, 1], from the DC spherical-harmonic band.
    pub color: Vector3<f64>,
    /// Opacity in (0, 1).
    pub opacity: f64,
}

impl GaussianBlob {
    /// Builds a blob, normalizing the quaternion when its norm is off by more
    /// than [`QUAT_NORM_TOLERANCE`].
    pub fn new(
        position: Vector3<f64>,
        scale: Vector3<f64>,
        rotation: Quaternion,
        color: Vector3<f64>,
        opacity: f64,
    ) -> Result<Self> {
        let blob = Self {
            position,
            scale,
            rotation: normalize_quaternion(rotation)?,
            color,
            opacity,
        };
        blob.validate()?;
        Ok(blob)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("position must be finite"));
        }
        if !self.scale.iter().all(|&s| s.is_finite() && s > 0.0) {
            return Err(Error::invalid(format!(
                "scale components must be positive and finite, got {:?}",
                self.scale.as_slice()
            )));
        }
        let norm = quaternion_norm(&self.rotation);
        if !((norm - 1.0).abs() <= QUAT_NORM_TOLERANCE) {
            return Err(Error::invalid(format!("quaternion norm {norm} is not 1")));
        }
        if !self.color.iter().all(|&c| (0.0..=1.0).contains(&c)) {
            return Err(Error::invalid("color components must lie in [0, 1]"));
        }
        if !(self.opacity > 0.0 && self.opacity < 1.0) {
            return Err(Error::invalid(format!(
                "opacity {} must lie strictly inside (0, 1)",
                self.opacity
            )));
        }
        Ok(())
    }

    pub fn covariance(&self) -> Result<Covariance3> {
        build_covariance(self.scale, self.rotation)
    }
}

/// Ordered blob collection. Blob order is the canonical index used by every
/// seeded sampler.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianScene {
    pub blobs: Vec<GaussianBlob>,
    pub source_path: String,
}

impl GaussianScene {
    pub fn new(blobs: Vec<GaussianBlob>, source_path: impl Into<String>) -> Result<Self> {
        for (i, b) in blobs.iter().enumerate() {
            b.validate()
                .map_err(|e| Error::validation(format!("blob {i}: {e}")))?;
        }
        Ok(Self {
            blobs,
            source_path: source_path.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    /// Evaluates blob `index` at `point`, attributing numerical failures to it.
    pub fn eval(&self, index: usize, point: &Vector3<f64>) -> Result<f64> {
        let blob = self
            .blobs
            .get(index)
            .ok_or_else(|| Error::invalid(format!("blob index {index} out of range")))?;
        mahalanobis_sq(blob, point)
            .map(|d2| (-0.5 * d2).exp())
            .ok_or_else(|| Error::Numerical {
                index,
                reason: "covariance is singular after scale clamping".into(),
            })
    }
}

/// Symmetric 3x3 covariance in meters².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance3(pub Matrix3<f64>);

impl Covariance3 {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

pub fn quaternion_norm(q: &Quaternion) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

/// Returns `q` unchanged when already unit to tolerance, otherwise `q / |q|`.
pub fn normalize_quaternion(q: Quaternion) -> Result<Quaternion> {
    let norm = quaternion_norm(&q);
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::invalid("quaternion has zero or non-finite norm"));
    }
    if (norm - 1.0).abs() <= QUAT_NORM_TOLERANCE {
        return Ok(q);
    }
    Ok([q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm])
}

/// Hamilton product `a * b`.
pub fn quaternion_mul(a: &Quaternion, b: &Quaternion) -> Quaternion {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Rotation matrix of a unit quaternion.
pub fn rotation_matrix(q: &Quaternion) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// `Σ = R S Sᵀ Rᵀ` with `S = diag(scale)`.
pub fn build_covariance(scale: Vector3<f64>, rotation: Quaternion) -> Result<Covariance3> {
    if !scale.iter().all(|&s| s.is_finite() && s > 0.0) {
        return Err(Error::invalid(format!(
            "scale components must be positive, got {:?}",
            scale.as_slice()
        )));
    }
    let q = normalize_quaternion(rotation)?;
    let m = rotation_matrix(&q) * Matrix3::from_diagonal(&scale);
    let sigma = m * m.transpose();
    Ok(Covariance3((sigma + sigma.transpose()) * 0.5))
}

/// `(x - μ)ᵀ Σ⁻¹ (x - μ)` evaluated as `|S⁻¹ Rᵀ (x - μ)|²` with clamped scales.
fn mahalanobis_sq(blob: &GaussianBlob, point: &Vector3<f64>) -> Option<f64> {
    let r = rotation_matrix(&blob.rotation);
    let local = r.transpose() * (point - blob.position);
    let d2: f64 = (0..3)
        .map(|k| {
            let s = blob.scale[k].max(MIN_SCALE);
            let t = local[k] / s;
            t * t
        })
        .sum();
    (!d2.is_nan()).then_some(d2)
}

/// Unnormalized Gaussian density `exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ))`; exactly 1 at `μ`.
pub fn eval_gaussian(blob: &GaussianBlob, point: &Vector3<f64>) -> Result<f64> {
    mahalanobis_sq(blob, point)
        .map(|d2| (-0.5 * d2).exp())
        .ok_or_else(|| Error::Numerical {
            index: 0,
            reason: "covariance is singular after scale clamping".into(),
        })
}

/// Default depth range for views that do not specify one.
pub const DEFAULT_Z_MIN: f64 = 0.2;
pub const DEFAULT_Z_MAX: f64 = 6.0;

/// A posed pinhole camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    /// Intrinsic matrix with bottom row `(0, 0, 1)`.
    pub intrinsics: Matrix3<f64>,
    /// Rigid world-to-camera transform.
    pub world_to_camera: Matrix4<f64>,
    pub width: u32,
    pub height: u32,
    pub z_min: f64,
    pub z_max: f64,
}

impl CameraView {
    pub fn new(
        intrinsics: Matrix3<f64>,
        world_to_camera: Matrix4<f64>,
        width: u32,
        height: u32,
        z_min: f64,
        z_max: f64,
    ) -> Result<Self> {
        let view = Self {
            intrinsics,
            world_to_camera,
            width,
            height,
            z_min,
            z_max,
        };
        view.validate(QUAT_NORM_TOLERANCE)?;
        Ok(view)
    }

    /// Checks every camera invariant, with `ortho_tol` as the allowed
    /// deviation of `RᵀR` from the identity.
    pub fn validate(&self, ortho_tol: f64) -> Result<()> {
        let k = &self.intrinsics;
        if !k.iter().all(|v| v.is_finite()) || !self.world_to_camera.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("camera matrices must be finite"));
        }
        if k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(Error::validation("intrinsics bottom row must be (0, 0, 1)"));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(Error::validation("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation("image size must be positive"));
        }
        if !(self.z_min > 0.0 && self.z_min < self.z_max && self.z_max.is_finite()) {
            return Err(Error::validation(format!(
                "depth range must satisfy 0 < z_min < z_max, got [{}, {}]",
                self.z_min, self.z_max
            )));
        }
        let w = &self.world_to_camera;
        if w[(3, 0)] != 0.0 || w[(3, 1)] != 0.0 || w[(3, 2)] != 0.0 || w[(3, 3)] != 1.0 {
            return Err(Error::validation("world_to_camera bottom row must be (0, 0, 0, 1)"));
        }
        let err = orthonormality_error(&self.rotation());
        if err > ortho_tol {
            return Err(Error::validation(format!(
                "world_to_camera rotation is not orthonormal (max |RᵀR - I| = {err:.3e})"
            )));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * world + self.translation()
    }

    /// Inverse rigid transform: `Rᵀ (p - t)`.
    pub fn to_world(&self, camera: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().transpose() * (camera - self.translation())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.to_world(&Vector3::zeros())
    }

    /// Pixel coordinates of a camera-space point with positive depth.
    #[inline]
    pub fn camera_to_pixel(&self, p: &Vector3<f64>) -> Vector2<f64> {
        let k = &self.intrinsics;
        let (x, y) = (p.x / p.z, p.y / p.z);
        Vector2::new(
            k[(0, 0)] * x + k[(0, 1)] * y + k[(0, 2)],
            k[(1, 0)] * x + k[(1, 1)] * y + k[(1, 2)],
        )
    }

    /// Camera-space point at depth `z` seen through pixel `(u, v)`.
    pub fn pixel_to_camera(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        let ray = self
            .intrinsics
            .try_inverse()
            .expect("validated intrinsics are invertible")
            * Vector3::new(u, v, 1.0);
        ray * z
    }

    /// Projects a world point; `None` when it is behind the camera.
    pub fn project_point(&self, world: &Vector3<f64>) -> Option<(Vector2<f64>, f64)> {
        let p = self.to_camera(world);
        (p.z > Z_EPSILON).then(|| (self.camera_to_pixel(&p), p.z))
    }
}

pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// A blob splatted onto the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedBlob {
    pub mean2d: Vector2<f64>,
    /// Screen-space covariance in pixels², including [`LOW_PASS_FLOOR`].
    pub cov2d: Matrix2<f64>,
    /// Camera-space depth in meters.
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Visible(ProjectedBlob),
    BehindCamera,
}

impl Projection {
    pub fn visible(self) -> Option<ProjectedBlob> {
        match self {
            Projection::Visible(p) => Some(p),
            Projection::BehindCamera => None,
        }
    }
}

/// Jacobian of the pixel projection at camera-space point `p`.
pub fn projection_jacobian(view: &CameraView, p: &Vector3<f64>) -> nalgebra::Matrix2x3<f64> {
    let k = &view.intrinsics;
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    nalgebra::Matrix2x3::new(
        k[(0, 0)] * iz,
        k[(0, 1)] * iz,
        -(k[(0, 0)] * p.x + k[(0, 1)] * p.y) * iz2,
        k[(1, 0)] * iz,
        k[(1, 1)] * iz,
        -(k[(1, 0)] * p.x + k[(1, 1)] * p.y) * iz2,
    )
}

/// EWA projection: `cov2d = J W Σ Wᵀ Jᵀ + floor·I`.
pub fn project_blob(blob: &GaussianBlob, view: &CameraView) -> Result<Projection> {
    let cov = blob.covariance()?;
    Ok(project_with_covariance(&blob.position, &cov, view))
}

pub fn project_with_covariance(
    position: &Vector3<f64>,
    cov: &Covariance3,
    view: &CameraView,
) -> Projection {
    let p = view.to_camera(position);
    if p.z <= Z_EPSILON {
        return Projection::BehindCamera;
    }
    let w = view.rotation();
    let j = projection_jacobian(view, &p);
    let t = j * w;
    let mut cov2d = t * cov.0 * t.transpose();
    cov2d = (cov2d + cov2d.transpose()) * 0.5;
    cov2d[(0, 0)] += LOW_PASS_FLOOR;
    cov2d[(1, 1)] += LOW_PASS_FLOOR;
    Projection::Visible(ProjectedBlob {
        mean2d: view.camera_to_pixel(&p),
        cov2d,
        depth: p.z,
    })
}

/// Front-to-back compositing weights `w_k = α_k Π_{j<k} (1 - α_j)`.
pub fn composite_weights(opacities: &[f64]) -> Result<Vec<f64>> {
    let mut transmittance = 1.0;
    opacities
        .iter()
        .map(|&a| {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::invalid(format!("opacity {a} outside [0, 1]")));
            }
            let w = a * transmittance;
            transmittance *= 1.0 - a;
            Ok(w)
        })
        .collect()
}

/// Front-to-back alpha composite of `(opacity, color)` samples.
pub fn composite(samples: &[(f64, [f64; 3])]) -> Result<[f64; 3]> {
    let alphas: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let weights = composite_weights(&alphas)?;
    let mut out = [0.0; 3];
    for (w, (_, c)) in weights.iter().zip(samples) {
        for ch in 0..3 {
            out[ch] += w * c[ch];
        }
    }
    Ok(out)
}

/// Maps an SH DC coefficient to a color channel in [0, 1].
#[inline]
pub fn dc_to_color(f_dc: f64) -> f64 {
    (0.5 + SH_C0 * f_dc).clamp(0.0, 1.0)
}

#[inline]
pub fn color_to_dc(c: f64) -> f64 {
    (c - 0.5) / SH_C0
}
