use rayon::prelude::*;

use super::frustum::{frustums_for_views, Frustum};
use crate::error::{Error, Result};
use crate::io::DetectionBoxSet;
use crate::model::{CameraView, GaussianScene};

/// Probability assigned to blobs outside every frustum.
pub const DEFAULT_P_BG: f64 = 0.01;

/// Per-blob aggregated object probability, aligned with scene blob order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectProbabilityField {
    pub values: Vec<f64>,
    pub p_bg: f64,
}

impl ObjectProbabilityField {
    /// A field where every blob has the same probability.
    pub fn uniform(n: usize, p: f64) -> Self {
        Self {
            values: vec![p; n],
            p_bg: p,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of blobs lifted above the background floor.
    pub fn above_floor(&self) -> usize {
        self.values.iter().filter(|&&v| v > self.p_bg).count()
    }
}

/// `p_agr(g) = max(p_bg, max over frustums F containing g of p_max(F))`.
///
/// Blobs contained in no frustum get exactly `p_bg`.
pub fn build_probability_field(
    scene: &GaussianScene,
    views: &[CameraView],
    boxes: &DetectionBoxSet,
    p_bg: f64,
) -> Result<ObjectProbabilityField> {
    if !(p_bg > 0.0 && p_bg < 1.0) {
        return Err(Error::invalid(format!("p_bg {p_bg} must lie in (0, 1)")));
    }
    let frustums = frustums_for_views(views, boxes)?;
    // Views without boxes cannot raise any probability.
    let active: Vec<(&CameraView, &Vec<Frustum>)> = views
        .iter()
        .zip(&frustums)
        .filter(|(_, f)| !f.is_empty())
        .collect();
    let values = scene
        .blobs
        .par_iter()
        .with_min_len(1024)
        .map(|blob| {
            let mut p = p_bg;
            for (view, fs) in &active {
                let cam = view.to_camera(&blob.position);
                if cam.z < view.z_min || cam.z > view.z_max {
                    continue;
                }
                for f in fs.iter() {
                    if f.p_max > p && f.contains_camera_point(view, &cam) {
                        p = f.p_max;
                    }
                }
            }
            p
        })
        .collect();
    Ok(ObjectProbabilityField { values, p_bg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::DetectionBox;
    use crate::model::{GaussianBlob, IDENTITY_ROTATION};
    use nalgebra::{Matrix3, Matrix4, Vector3};

    fn view() -> CameraView {
        CameraView::new(
            Matrix3::new(500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0),
            Matrix4::identity(),
            640,
            480,
            0.2,
            6.0,
        )
        .unwrap()
    }

    fn scene(points: &[[f64; 3]]) -> GaussianScene {
        let blobs = points
            .iter()
            .map(|p| {
                GaussianBlob::new(
                    Vector3::from(*p),
                    Vector3::new(0.01, 0.01, 0.01),
                    IDENTITY_ROTATION,
                    Vector3::new(0.5, 0.5, 0.5),
                    0.5,
                )
                .unwrap()
            })
            .collect();
        GaussianScene::new(blobs, "mem").unwrap()
    }

    fn bx(x0: f64, x1: f64, p: f64) -> DetectionBox {
        DetectionBox {
            x_min: x0,
            y_min: 200.0,
            x_max: x1,
            y_max: 280.0,
            probs: vec![p],
        }
    }

    #[test]
    fn outside_every_frustum_gets_floor() {
        let s = scene(&[[5.0, 0.0, 2.0]]);
        let boxes = DetectionBoxSet {
            views: vec![vec![bx(300.0, 340.0, 0.8)]],
        };
        let f = build_probability_field(&s, &[view()], &boxes, DEFAULT_P_BG).unwrap();
        assert_eq!(f.values, vec![0.01]);
    }

    #[test]
    fn overlapping_frustums_take_max() {
        let s = scene(&[[0.0, 0.0, 2.0]]);
        let boxes = DetectionBoxSet {
            views: vec![vec![bx(300.0, 340.0, 0.7), bx(310.0, 330.0, 0.9)]],
        };
        let f = build_probability_field(&s, &[view()], &boxes, 0.01).unwrap();
        assert_eq!(f.values, vec![0.9]);

        let two_views = DetectionBoxSet {
            views: vec![vec![bx(300.0, 340.0, 0.9)], vec![bx(300.0, 340.0, 0.7)]],
        };
        let f = build_probability_field(&s, &[view(), view()], &two_views, 0.01).unwrap();
        assert_eq!(f.values, vec![0.9]);
    }

    #[test]
    fn single_frustum() {
        let s = scene(&[[0.0, 0.0, 2.0]]);
        let boxes = DetectionBoxSet {
            views: vec![vec![bx(300.0, 340.0, 0.5)]],
        };
        let f = build_probability_field(&s, &[view()], &boxes, 0.01).unwrap();
        assert_eq!(f.values, vec![0.5]);
    }

    #[test]
    fn weak_boxes_never_undercut_the_floor() {
        let s = scene(&[[0.0, 0.0, 2.0]]);
        let boxes = DetectionBoxSet {
            views: vec![vec![bx(300.0, 340.0, 0.001)]],
        };
        let f = build_probability_field(&s, &[view()], &boxes, 0.01).unwrap();
        assert_eq!(f.values, vec![0.01]);
    }

    #[test]
    fn view_count_mismatch() {
        let s = scene(&[[0.0, 0.0, 2.0]]);
        let boxes = DetectionBoxSet { views: vec![vec![], vec![]] };
        assert!(matches!(
            build_probability_field(&s, &[view()], &boxes, 0.01),
            Err(Error::Validation(_))
        ));
        assert!(build_probability_field(&s, &[view(), view()], &boxes, 0.0).is_err());
    }
}
