//! CPU reference splat renderer.
//!
//! Blobs are projected once, sorted front to back by mean depth, binned into
//! 16×16 pixel tiles and composited per pixel. Pixel `(px, py)` samples the
//! image plane at `(px, py)`.

mod metrics;
mod stability;

pub use metrics::{d_ssim, l1_loss, render_loss, ssim, RenderLoss, RenderLossConfig};
pub use stability::{boundary_stability_score, StabilityConfig};

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::Image;
use crate::model::{project_with_covariance, CameraView, GaussianBlob, GaussianScene, Projection};

const TILE: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    /// Contributions with `α` below this are skipped.
    pub alpha_cutoff: f64,
    /// Footprint truncation radius in standard deviations of the 2D Gaussian.
    pub gaussian_radius_sigmas: f64,
    /// Linear RGB in [0, 1] filling the remaining transmittance.
    pub background_color: [f64; 3],
    /// Blobs whose mean is closer than this camera depth are skipped.
    pub near_plane: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            alpha_cutoff: 1.0 / 255.0,
            gaussian_radius_sigmas: 3.0,
            background_color: [0.0; 3],
            near_plane: 0.2,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.1).contains(&self.alpha_cutoff) {
            return Err(Error::invalid(format!("alpha_cutoff {} outside [0, 0.1]", self.alpha_cutoff)));
        }
        if !(self.gaussian_radius_sigmas >= 1.0 && self.gaussian_radius_sigmas.is_finite()) {
            return Err(Error::invalid(format!(
                "gaussian_radius_sigmas {} must be finite and >= 1",
                self.gaussian_radius_sigmas
            )));
        }
        if !self.background_color.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::invalid("background color must lie in [0, 1]"));
        }
        if !(self.near_plane >= 0.0 && self.near_plane.is_finite()) {
            return Err(Error::invalid(format!("near plane {} must be finite and >= 0", self.near_plane)));
        }
        Ok(())
    }
}

/// Full-precision render output.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub width: u32,
    pub height: u32,
    /// Composited linear RGB including the background term.
    pub color: Vec<[f64; 3]>,
    /// `Σ_k w_k`, the opacity accumulated over all contributing blobs.
    pub weight: Vec<f64>,
    /// `Σ_k w_k z_k / Σ_k w_k`, or `NaN` where nothing contributed.
    pub depth: Vec<f64>,
    /// Scene index of the blob with the largest weight, if any.
    pub dominant: Vec<Option<u32>>,
}

impl RenderedImage {
    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    /// Quantizes to 8 bits with round-half-up after clamping to [0, 1].
    pub fn to_image(&self) -> Image {
        let pixels = self
            .color
            .iter()
            .flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8))
            .collect();
        Image {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Splat {
    index: u32,
    mean: Vector2<f64>,
    conic: Matrix2<f64>,
    depth: f64,
    opacity: f64,
    color: [f64; 3],
    /// Inclusive pixel rectangle `[x0, y0, x1, y1]`.
    rect: [u32; 4],
}

fn blob_bits(b: &GaussianBlob) -> [u64; 14] {
    let p = &b.position;
    let s = &b.scale;
    let q = &b.rotation;
    let c = &b.color;
    [p.x, p.y, p.z, s.x, s.y, s.z, q[0], q[1], q[2], q[3], c.x, c.y, c.z, b.opacity].map(f64::to_bits)
}

fn splat(index: usize, blob: &GaussianBlob, view: &CameraView, config: &RenderConfig) -> Result<Option<Splat>> {
    let sigmas = config.gaussian_radius_sigmas;
    let cov = blob.covariance().map_err(|e| match e {
        Error::Numerical { reason, .. } => Error::Numerical { index, reason },
        other => other,
    })?;
    let p = match project_with_covariance(&blob.position, &cov, view) {
        Projection::Visible(p) if p.depth >= config.near_plane => p,
        _ => return Ok(None),
    };
    let conic = match p.cov2d.try_inverse() {
        Some(c) if c.iter().all(|v| v.is_finite()) => c,
        _ => {
            return Err(Error::Numerical {
                index,
                reason: "singular screen-space covariance".into(),
            })
        }
    };
    let (a, b, d) = (p.cov2d[(0, 0)], p.cov2d[(0, 1)], p.cov2d[(1, 1)]);
    let mid = 0.5 * (a + d);
    let lambda_max = mid + (mid * mid - (a * d - b * b)).max(0.0).sqrt();
    let r = sigmas * lambda_max.sqrt();
    let (w, h) = (view.width as f64, view.height as f64);
    let x0 = (p.mean2d.x - r).ceil().max(0.0);
    let y0 = (p.mean2d.y - r).ceil().max(0.0);
    let x1 = (p.mean2d.x + r).floor().min(w - 1.0);
    let y1 = (p.mean2d.y + r).floor().min(h - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return Ok(None);
    }
    Ok(Some(Splat {
        index: index as u32,
        mean: p.mean2d,
        conic,
        depth: p.depth,
        opacity: blob.opacity,
        color: [blob.color.x, blob.color.y, blob.color.z],
        rect: [x0 as u32, y0 as u32, x1 as u32, y1 as u32],
    }))
}

/// Renders a view at full precision.
///
/// `α_k = opacity_k · exp(-½ dᵀ Σ₂⁻¹ d)` where `d` is the offset from the
/// projected mean, skipped beyond the truncation radius or below the cutoff.
/// Pixel color is `Σ_k w_k c_k + T · background` with `w_k = α_k T_k`.
pub fn render_view_full(
    scene: &GaussianScene,
    view: &CameraView,
    config: &RenderConfig,
) -> Result<RenderedImage> {
    config.validate()?;
    let sigmas = config.gaussian_radius_sigmas;
    let projected: Vec<Option<Splat>> = scene
        .blobs
        .par_iter()
        .enumerate()
        .with_min_len(1024)
        .map(|(i, b)| splat(i, b, view, config))
        .collect::<Result<_>>()?;
    let mut splats: Vec<(Splat, [u64; 14])> = projected
        .into_iter()
        .flatten()
        .map(|s| (s, blob_bits(&scene.blobs[s.index as usize])))
        .collect();
    // Ties on depth fall back to blob contents, never to input position.
    splats.par_sort_unstable_by(|a, b| a.0.depth.total_cmp(&b.0.depth).then(a.1.cmp(&b.1)));
    let splats: Vec<Splat> = splats.into_iter().map(|s| s.0).collect();

    let tiles_x = view.width.div_ceil(TILE);
    let tiles_y = view.height.div_ceil(TILE);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (k, s) in splats.iter().enumerate() {
        let [x0, y0, x1, y1] = s.rect;
        for ty in y0 / TILE..=y1 / TILE {
            for tx in x0 / TILE..=x1 / TILE {
                bins[(ty * tiles_x + tx) as usize].push(k as u32);
            }
        }
    }

    let tiles: Vec<Vec<(u32, u32, [f64; 3], f64, f64, Option<u32>)>> = bins
        .par_iter()
        .enumerate()
        .map(|(t, bin)| {
            let tx = t as u32 % tiles_x;
            let ty = t as u32 / tiles_x;
            let mut out = Vec::with_capacity((TILE * TILE) as usize);
            for py in ty * TILE..((ty + 1) * TILE).min(view.height) {
                for px in tx * TILE..((tx + 1) * TILE).min(view.width) {
                    let (c, wsum, depth, dom) = shade(&splats, bin, px, py, sigmas, config);
                    out.push((px, py, c, wsum, depth, dom));
                }
            }
            out
        })
        .collect();

    let n = view.width as usize * view.height as usize;
    let mut img = RenderedImage {
        width: view.width,
        height: view.height,
        color: vec![[0.0; 3]; n],
        weight: vec![0.0; n],
        depth: vec![f64::NAN; n],
        dominant: vec![None; n],
    };
    for (px, py, c, w, d, dom) in tiles.into_iter().flatten() {
        let i = img.index(px, py);
        img.color[i] = c;
        img.weight[i] = w;
        img.depth[i] = d;
        img.dominant[i] = dom;
    }
    Ok(img)
}

#[inline]
fn shade(
    splats: &[Splat],
    bin: &[u32],
    px: u32,
    py: u32,
    sigmas: f64,
    config: &RenderConfig,
) -> ([f64; 3], f64, f64, Option<u32>) {
    let cutoff_d2 = sigmas * sigmas;
    let (fx, fy) = (px as f64, py as f64);
    let mut t = 1.0;
    let mut color = [0.0; 3];
    let mut wsum = 0.0;
    let mut wdepth = 0.0;
    let mut best: Option<(f64, u32)> = None;
    for &k in bin {
        let s = &splats[k as usize];
        let [x0, y0, x1, y1] = s.rect;
        if px < x0 || px > x1 || py < y0 || py > y1 {
            continue;
        }
        let dx = fx - s.mean.x;
        let dy = fy - s.mean.y;
        let d2 = s.conic[(0, 0)] * dx * dx + 2.0 * s.conic[(0, 1)] * dx * dy + s.conic[(1, 1)] * dy * dy;
        if d2 > cutoff_d2 {
            continue;
        }
        let alpha = s.opacity * (-0.5 * d2).exp();
        if alpha < config.alpha_cutoff {
            continue;
        }
        let w = alpha * t;
        for ch in 0..3 {
            color[ch] += w * s.color[ch];
        }
        wsum += w;
        wdepth += w * s.depth;
        if best.map_or(true, |(bw, _)| w > bw) {
            best = Some((w, s.index));
        }
        t *= 1.0 - alpha;
    }
    for ch in 0..3 {
        color[ch] += t * config.background_color[ch];
    }
    let depth = if wsum > 0.0 { wdepth / wsum } else { f64::NAN };
    (color, wsum, depth, best.map(|b| b.1))
}

/// Renders a view to an 8-bit image.
pub fn render_view(scene: &GaussianScene, view: &CameraView, config: &RenderConfig) -> Result<Image> {
    Ok(render_view_full(scene, view, config)?.to_image())
}
