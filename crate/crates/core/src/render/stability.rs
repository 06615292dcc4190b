//! Multi-view stability of rendered boundary strokes.
//!
//! Matching rule:
//!
//! 1. Render every view. A pixel is a boundary pixel when its 8-bit color is
//!    within Euclidean distance `color_tolerance` of some palette color and
//!    its accumulated weight is at least `min_weight`.
//! 2. For each ordered view pair `(a, b)`, each boundary pixel of `a` is lifted
//!    to 3D at its rendered depth and projected into `b`. Pixels landing
//!    behind `b` or outside its image are not counted.
//! 3. A counted pixel matches when some boundary pixel of `b` lies within
//!    `max_reprojection_px` (Euclidean, pixel centers) of the projection.
//!
//! The score is matches over counted pixels, pooled over all ordered pairs.
//! With nothing counted the score is 1.

use rayon::prelude::*;

use super::{render_view_full, RenderConfig, RenderedImage};
use crate::error::{Error, Result};
use crate::model::{CameraView, GaussianScene};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConfig {
    /// Color distance in 8-bit units.
    pub color_tolerance: f64,
    pub min_weight: f64,
    pub max_reprojection_px: f64,
    pub render: RenderConfig,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            color_tolerance: 40.0,
            min_weight: 0.5,
            max_reprojection_px: 2.0,
            render: RenderConfig::default(),
        }
    }
}

struct Classified {
    render: RenderedImage,
    boundary: Vec<bool>,
}

fn classify(r: RenderedImage, colors: &[[u8; 3]], cfg: &StabilityConfig) -> Classified {
    let img = r.to_image();
    let tol2 = cfg.color_tolerance * cfg.color_tolerance;
    let boundary = (0..r.color.len())
        .map(|i| {
            let px = &img.pixels[i * 3..i * 3 + 3];
            r.weight[i] >= cfg.min_weight
                && colors.iter().any(|c| {
                    (0..3)
                        .map(|ch| {
                            let d = px[ch] as f64 - c[ch] as f64;
                            d * d
                        })
                        .sum::<f64>()
                        <= tol2
                })
        })
        .collect();
    Classified { render: r, boundary }
}

fn pair_counts(a: &Classified, va: &CameraView, b: &Classified, vb: &CameraView, radius: f64) -> (u64, u64) {
    let (mut counted, mut matched) = (0u64, 0u64);
    let reach = radius.ceil() as i64;
    for y in 0..a.render.height {
        for x in 0..a.render.width {
            let i = a.render.index(x, y);
            if !a.boundary[i] {
                continue;
            }
            let z = a.render.depth[i];
            let world = va.to_world(&va.pixel_to_camera(x as f64, y as f64, z));
            let Some((uv, _)) = vb.project_point(&world) else {
                continue;
            };
            if !(uv.x > -0.5 && uv.y > -0.5 && uv.x < vb.width as f64 - 0.5 && uv.y < vb.height as f64 - 0.5) {
                continue;
            }
            counted += 1;
            let (cx, cy) = (uv.x.round() as i64, uv.y.round() as i64);
            let hit = (cy - reach..=cy + reach).any(|qy| {
                (cx - reach..=cx + reach).any(|qx| {
                    if qx < 0 || qy < 0 || qx >= vb.width as i64 || qy >= vb.height as i64 {
                        return false;
                    }
                    let (dx, dy) = (qx as f64 - uv.x, qy as f64 - uv.y);
                    dx * dx + dy * dy <= radius * radius
                        && b.boundary[b.render.index(qx as u32, qy as u32)]
                })
            });
            matched += hit as u64;
        }
    }
    (counted, matched)
}

/// Fraction of boundary pixels that reproject onto boundary pixels in the
/// other views. See the module docs for the exact rule.
pub fn boundary_stability_score(
    scene: &GaussianScene,
    views: &[CameraView],
    boundary_colors: &[[u8; 3]],
    config: &StabilityConfig,
) -> Result<f64> {
    if views.len() < 2 {
        return Err(Error::validation(format!(
            "stability needs at least 2 views, got {}",
            views.len()
        )));
    }
    let classified: Vec<Classified> = views
        .iter()
        .map(|v| Ok(classify(render_view_full(scene, v, &config.render)?, boundary_colors, config)))
        .collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..views.len())
        .flat_map(|a| (0..views.len()).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let (counted, matched) = pairs
        .par_iter()
        .map(|&(a, b)| {
            pair_counts(&classified[a], &views[a], &classified[b], &views[b], config.max_reprojection_px)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    Ok(if counted == 0 { 1.0 } else { matched as f64 / counted as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GaussianBlob, IDENTITY_ROTATION};
    use crate::synth;
    use nalgebra::{Matrix3, Matrix4, Vector3};

    fn view() -> CameraView {
        CameraView::new(
            Matrix3::new(200.0, 0.0, 40.0, 0.0, 200.0, 30.0, 0.0, 0.0, 1.0),
            Matrix4::identity(),
            80,
            60,
            0.2,
            6.0,
        )
        .unwrap()
    }

    #[test]
    fn needs_two_views() {
        let s = GaussianScene { blobs: vec![], source_path: String::new() };
        assert!(boundary_stability_score(&s, &[view()], &[[255, 0, 0]], &Default::default()).is_err());
    }

    #[test]
    fn vacuous_without_boundary_colors() {
        let blob = GaussianBlob::new(
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.05, 0.05, 0.05),
            IDENTITY_ROTATION,
            Vector3::new(0.1, 0.6, 0.1),
            0.9,
        )
        .unwrap();
        let s = GaussianScene { blobs: vec![blob], source_path: String::new() };
        let score = boundary_stability_score(&s, &[view(), view()], &[[255, 0, 0]], &Default::default()).unwrap();
        assert_eq!(score, 1.0);
    }

    #[test]
    fn duplicated_views_are_perfectly_stable() {
        let ring = synth::boundary_ring_scene(Vector3::new(0.0, 0.0, 2.0), Vector3::z(), 0.2, 400, [1.0, 0.0, 0.0]);
        let score = boundary_stability_score(&ring, &[view(), view()], &[[255, 0, 0]], &Default::default()).unwrap();
        assert_eq!(score, 1.0);
    }

    #[test]
    fn ring_is_stable_across_nearby_views() {
        let center = Vector3::new(3.0, 3.0, 1.5);
        let ring = synth::boundary_ring_scene(center, Vector3::x(), 0.4, 600, [1.0, 0.0, 0.0]);
        let views: Vec<CameraView> = [0.0f64, 5.0]
            .iter()
            .map(|deg| {
                let a = deg.to_radians();
                let eye = center + Vector3::new(-2.0 * a.cos(), -2.0 * a.sin(), 0.0);
                synth::look_at(eye, center, 160, 120, 150.0, 0.2, 6.0).unwrap()
            })
            .collect();
        let score = boundary_stability_score(&ring, &views, &[[255, 0, 0]], &Default::default()).unwrap();
        assert!(score >= 0.9, "score {score}");
    }
}
