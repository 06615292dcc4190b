//! Image reconstruction losses on 8-bit RGB images normalized to [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderLossConfig {
    /// Weight of the D-SSIM term.
    pub lambda: f64,
    /// Side of the uniform SSIM window. Clamped to the largest odd size that
    /// fits the image.
    pub ssim_window: u32,
    pub c1: f64,
    pub c2: f64,
}

impl Default for RenderLossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            ssim_window: 11,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

impl RenderLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.ssim_window < 3 || self.ssim_window % 2 == 0 {
            return Err(Error::invalid(format!("ssim window {} must be odd and >= 3", self.ssim_window)));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::invalid("ssim constants must be positive"));
        }
        Ok(())
    }

    /// Window actually used for a `width × height` image.
    pub fn effective_window(&self, width: u32, height: u32) -> u32 {
        let fit = width.min(height).max(1);
        let fit = if fit % 2 == 0 { fit - 1 } else { fit };
        self.ssim_window.min(fit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderLoss {
    pub l1: f64,
    pub d_ssim: f64,
    pub total: f64,
}

fn same_size(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::validation(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.pixels.is_empty() {
        return Err(Error::validation("images are empty"));
    }
    Ok(())
}

/// Mean absolute per-channel difference.
pub fn l1_loss(a: &Image, b: &Image) -> Result<f64> {
    same_size(a, b)?;
    let total: u64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| x.abs_diff(y) as u64)
        .sum();
    Ok(total as f64 / (a.pixels.len() as f64 * 255.0))
}

/// Summed-area table over `(W+1) × (H+1)` with a zero first row and column.
fn integral(w: usize, h: usize, f: impl Fn(usize, usize) -> u64) -> Vec<u64> {
    let mut s = vec![0u64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += f(x, y);
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

#[inline]
fn window_sum(s: &[u64], w: usize, x: usize, y: usize, k: usize) -> u64 {
    let stride = w + 1;
    s[(y + k) * stride + x + k] + s[y * stride + x] - s[y * stride + x + k] - s[(y + k) * stride + x]
}

/// Mean SSIM over every fully contained window position and all channels.
///
/// Statistics are uniform-window means on `[0, 1]` values with population
/// (co)variances. `x·x` and `x·y` go through the same arithmetic, so `ssim(a, a)`
/// is exactly 1.
pub fn ssim(a: &Image, b: &Image, config: &RenderLossConfig) -> Result<f64> {
    same_size(a, b)?;
    config.validate()?;
    let (w, h) = (a.width as usize, a.height as usize);
    let k = config.effective_window(a.width, a.height) as usize;
    let n = (k * k) as f64;
    let scale = 255.0;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let px = |img: &Image, x: usize, y: usize| img.pixels[(y * w + x) * 3 + ch] as u64;
        let sa = integral(w, h, |x, y| px(a, x, y));
        let sb = integral(w, h, |x, y| px(b, x, y));
        let saa = integral(w, h, |x, y| px(a, x, y) * px(a, x, y));
        let sbb = integral(w, h, |x, y| px(b, x, y) * px(b, x, y));
        let sab = integral(w, h, |x, y| px(a, x, y) * px(b, x, y));
        for y in 0..=h - k {
            for x in 0..=w - k {
                let mx = window_sum(&sa, w, x, y, k) as f64 / (n * scale);
                let my = window_sum(&sb, w, x, y, k) as f64 / (n * scale);
                let exx = window_sum(&saa, w, x, y, k) as f64 / (n * scale * scale);
                let eyy = window_sum(&sbb, w, x, y, k) as f64 / (n * scale * scale);
                let exy = window_sum(&sab, w, x, y, k) as f64 / (n * scale * scale);
                let vx = exx - mx * mx;
                let vy = eyy - my * my;
                let cxy = exy - mx * my;
                let num = (2.0 * mx * my + config.c1) * (2.0 * cxy + config.c2);
                let den = (mx * mx + my * my + config.c1) * (vx + vy + config.c2);
                total += num / den;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// `(1 - SSIM) / 2`.
pub fn d_ssim(a: &Image, b: &Image, config: &RenderLossConfig) -> Result<f64> {
    Ok((1.0 - ssim(a, b, config)?) / 2.0)
}

/// `(1 - λ) · L1 + λ · D-SSIM`.
pub fn render_loss(a: &Image, b: &Image, config: &RenderLossConfig) -> Result<RenderLoss> {
    let l1 = l1_loss(a, b)?;
    let d = d_ssim(a, b, config)?;
    Ok(RenderLoss {
        l1,
        d_ssim: d,
        total: (1.0 - config.lambda) * l1 + config.lambda * d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::oracle;
    use rand::{Rng, SeedableRng};

    fn noise(w: u32, h: u32, seed: u64) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Image::new(w, h, (0..w * h * 3).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn identical_images_have_zero_loss() {
        let a = noise(23, 17, 1);
        let cfg = RenderLossConfig::default();
        assert_eq!(l1_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(d_ssim(&a, &a, &cfg).unwrap(), 0.0);
        let r = render_loss(&a, &a, &cfg).unwrap();
        assert_eq!((r.l1, r.d_ssim, r.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn black_vs_white() {
        let a = Image::filled(5, 4, [0; 3]);
        let b = Image::filled(5, 4, [255; 3]);
        assert_eq!(l1_loss(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn size_mismatch() {
        let cfg = RenderLossConfig::default();
        assert!(matches!(l1_loss(&noise(4, 4, 0), &noise(4, 5, 0)), Err(Error::Validation(_))));
        assert!(d_ssim(&noise(4, 4, 0), &noise(5, 4, 0), &cfg).is_err());
    }

    #[test]
    fn matches_direct_definition() {
        let cfg = RenderLossConfig::default();
        for seed in 0..5 {
            let (a, b) = (noise(30, 20, seed), noise(30, 20, seed + 100));
            let got = d_ssim(&a, &b, &cfg).unwrap();
            let want = (1.0 - oracle::ssim_direct(&a, &b, 11, cfg.c1, cfg.c2)) / 2.0;
            assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        }
        // Small images shrink the window.
        let (a, b) = (noise(6, 9, 3), noise(6, 9, 4));
        assert_eq!(cfg.effective_window(6, 9), 5);
        let want = (1.0 - oracle::ssim_direct(&a, &b, 5, cfg.c1, cfg.c2)) / 2.0;
        assert!((d_ssim(&a, &b, &cfg).unwrap() - want).abs() <= 1e-9);
    }

    #[test]
    fn symmetric() {
        let cfg = RenderLossConfig::default();
        let (a, b) = (noise(16, 16, 8), noise(16, 16, 9));
        assert_eq!(render_loss(&a, &b, &cfg).unwrap(), render_loss(&b, &a, &cfg).unwrap());
    }
}
