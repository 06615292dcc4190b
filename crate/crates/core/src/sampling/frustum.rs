use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::io::DetectionBox;
use crate::model::CameraView;

/// A detection box lifted to the 3D region it can see between the view's
/// depth limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Frustum {
    pub view: usize,
    /// `[x_min, y_min, x_max, y_max]` in pixels, inclusive-exclusive.
    pub bounds: [f64; 4],
    pub z_min: f64,
    pub z_max: f64,
    /// Highest category probability of the source box.
    pub p_max: f64,
    /// World-space corners: the near quad `(x_min, y_min), (x_max, y_min),
    /// (x_max, y_max), (x_min, y_max)` at `z_min`, then the same at `z_max`.
    pub corners: [Vector3<f64>; 8],
}

impl Frustum {
    pub fn from_box(view_index: usize, view: &CameraView, bx: &DetectionBox) -> Self {
        let quad = [
            (bx.x_min, bx.y_min),
            (bx.x_max, bx.y_min),
            (bx.x_max, bx.y_max),
            (bx.x_min, bx.y_max),
        ];
        let corners = std::array::from_fn(|i| {
            let (u, v) = quad[i % 4];
            let z = if i < 4 { view.z_min } else { view.z_max };
            view.to_world(&view.pixel_to_camera(u, v, z))
        });
        Self {
            view: view_index,
            bounds: [bx.x_min, bx.y_min, bx.x_max, bx.y_max],
            z_min: view.z_min,
            z_max: view.z_max,
            p_max: bx.p_max(),
            corners,
        }
    }

    /// Membership test for a point already expressed in the owning camera's frame.
    #[inline]
    pub fn contains_camera_point(&self, view: &CameraView, p: &Vector3<f64>) -> bool {
        if !(p.z >= self.z_min && p.z <= self.z_max) {
            return false;
        }
        let uv = view.camera_to_pixel(p);
        let [x0, y0, x1, y1] = self.bounds;
        uv.x >= x0 && uv.x < x1 && uv.y >= y0 && uv.y < y1
    }
}

/// True iff `position` lies at a depth in `[z_min, z_max]` and projects inside
/// the box. For a pinhole camera this is membership in the convex hull of the
/// eight corners, up to the box's open far edges.
pub fn blob_in_frustum(position: &Vector3<f64>, frustum: &Frustum, view: &CameraView) -> bool {
    frustum.contains_camera_point(view, &view.to_camera(position))
}

/// Builds all frustums of a box set, grouped by view.
pub fn frustums_for_views(
    views: &[CameraView],
    boxes: &crate::io::DetectionBoxSet,
) -> Result<Vec<Vec<Frustum>>> {
    if views.len() != boxes.views.len() {
        return Err(Error::validation(format!(
            "{} camera views but {} box views",
            views.len(),
            boxes.views.len()
        )));
    }
    Ok(views
        .iter()
        .zip(&boxes.views)
        .enumerate()
        .map(|(v, (view, bs))| bs.iter().map(|b| Frustum::from_box(v, view, b)).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Matrix4};

    fn view() -> CameraView {
        CameraView::new(
            Matrix3::new(500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0),
            Matrix4::identity(),
            640,
            480,
            0.5,
            4.0,
        )
        .unwrap()
    }

    fn centered_box() -> DetectionBox {
        DetectionBox {
            x_min: 300.0,
            y_min: 220.0,
            x_max: 340.0,
            y_max: 260.0,
            probs: vec![0.3, 0.7],
        }
    }

    #[test]
    fn corners_reproject_to_box() {
        let v = view();
        let f = Frustum::from_box(0, &v, &centered_box());
        assert_eq!(f.p_max, 0.7);
        for (i, c) in f.corners.iter().enumerate() {
            let (uv, z) = v.project_point(c).unwrap();
            let want_z = if i < 4 { 0.5 } else { 4.0 };
            assert!((z - want_z).abs() < 1e-9);
            let want_u = if i % 4 == 0 || i % 4 == 3 { 300.0 } else { 340.0 };
            assert!((uv.x - want_u).abs() < 1e-9);
        }
    }

    #[test]
    fn axis_point_inside_and_depth_limits() {
        let v = view();
        let f = Frustum::from_box(0, &v, &centered_box());
        let mid = (v.z_min + v.z_max) / 2.0;
        assert!(blob_in_frustum(&Vector3::new(0.0, 0.0, mid), &f, &v));
        assert!(!blob_in_frustum(&Vector3::new(0.0, 0.0, v.z_max + 0.1), &f, &v));
        assert!(!blob_in_frustum(&Vector3::new(0.0, 0.0, v.z_min - 0.1), &f, &v));
        assert!(!blob_in_frustum(&Vector3::new(0.0, 0.0, -mid), &f, &v));
        assert!(!blob_in_frustum(&Vector3::new(1.0, 0.0, mid), &f, &v));
    }

    #[test]
    fn box_edges_are_inclusive_exclusive() {
        let v = view();
        let f = Frustum::from_box(0, &v, &centered_box());
        let at = |u: f64, vv: f64| v.to_world(&v.pixel_to_camera(u, vv, 2.0));
        assert!(blob_in_frustum(&at(300.0 + 1e-6, 240.0), &f, &v));
        assert!(!blob_in_frustum(&at(300.0 - 1e-6, 240.0), &f, &v));
        assert!(blob_in_frustum(&at(340.0 - 1e-6, 259.9999), &f, &v));
        assert!(!blob_in_frustum(&at(340.0 + 1e-6, 240.0), &f, &v));
        assert!(!blob_in_frustum(&at(320.0, 260.0 + 1e-6), &f, &v));
    }
}
