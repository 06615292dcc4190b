//! Brute-force references for tests.
//!
//! Nothing here calls into the geometry, sampling, boundary or render code it
//! is used to check. Inputs are plain arrays or the public fields of data
//! types.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::boundary::Mask;
use crate::io::Image;
use crate::model::{CameraView, GaussianBlob};
use crate::render::RenderConfig;

type P3 = [f64; 3];

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: P3, b: P3) -> P3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Signed distance from `p` to the boundary of the convex hull of `corners`,
/// positive inside.
///
/// Every triple of corners spanning a plane with all eight corners on one
/// side is a supporting plane; the hull is the intersection of their inner
/// half-spaces.
pub fn hull_signed_distance(corners: &[P3; 8], p: P3) -> f64 {
    let scale = corners
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let eps = 1e-12 * scale;
    let mut best = f64::INFINITY;
    for i in 0..8 {
        for j in i + 1..8 {
            for k in j + 1..8 {
                let n = cross(sub(corners[j], corners[i]), sub(corners[k], corners[i]));
                let len = dot(n, n).sqrt();
                if len <= 1e-12 * scale * scale {
                    continue;
                }
                let n = [n[0] / len, n[1] / len, n[2] / len];
                let off = dot(n, corners[i]);
                let sides: Vec<f64> = corners.iter().map(|c| dot(n, *c) - off).collect();
                let inner = if sides.iter().all(|&s| s <= eps) {
                    -1.0
                } else if sides.iter().all(|&s| s >= -eps) {
                    1.0
                } else {
                    continue;
                };
                best = best.min(inner * (dot(n, p) - off));
            }
        }
    }
    best
}

/// Closed convex-hull membership.
pub fn hull_contains(corners: &[P3; 8], p: P3) -> bool {
    hull_signed_distance(corners, p) >= 0.0
}

/// Farthest-point order recomputing every distance each round.
pub fn fps_bruteforce(points: &[P3], m: usize, start: usize) -> Vec<usize> {
    let mut chosen = vec![start];
    while chosen.len() < m {
        let mut best: Option<(f64, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen
                .iter()
                .map(|&c| {
                    let v = sub(*p, points[c]);
                    dot(v, v)
                })
                .fold(f64::INFINITY, f64::min);
            // Strictly greater keeps the lowest index on ties.
            if best.map_or(true, |(bd, _)| d > bd) {
                best = Some((d, i));
            }
        }
        chosen.push(best.expect("m <= points.len()").1);
    }
    chosen
}

/// Foreground pixels with a 4-neighbor that is background or off the raster.
pub fn border_pixels(mask: &Mask) -> BTreeSet<(u32, u32)> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let fg = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && mask.data[(y * w + x) as usize] != 0;
    let mut out = BTreeSet::new();
    for y in 0..h {
        for x in 0..w {
            if fg(x, y) && (!fg(x - 1, y) || !fg(x + 1, y) || !fg(x, y - 1) || !fg(x, y + 1)) {
                out.insert((x as u32, y as u32));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessiveSamplingEstimate {
    /// Expected share of object blobs among the `m` selected.
    pub object_fraction: f64,
    /// Expected share of object blobs that get selected.
    pub object_recall: f64,
}

/// Monte-Carlo estimate for weighted sampling without replacement.
///
/// Simulates `m` sequential draws, each picking a remaining blob with
/// probability proportional to its weight. Blobs sharing a weight and a label
/// are pooled so each draw only picks a pool.
pub fn successive_sampling(
    weights: &[f64],
    is_object: &[bool],
    m: usize,
    trials: usize,
    seed: u64,
) -> SuccessiveSamplingEstimate {
    let mut pools: Vec<(f64, bool, usize)> = Vec::new();
    for (&w, &o) in weights.iter().zip(is_object) {
        match pools.iter_mut().find(|p| p.0 == w && p.1 == o) {
            Some(p) => p.2 += 1,
            None => pools.push((w, o, 1)),
        }
    }
    let total_objects = is_object.iter().filter(|&&o| o).count();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut object_picks = 0u64;
    for _ in 0..trials {
        let mut left: Vec<usize> = pools.iter().map(|p| p.2).collect();
        for _ in 0..m {
            let mass: f64 = pools.iter().zip(&left).map(|(p, &n)| p.0 * n as f64).sum();
            let mut r = rng.gen::<f64>() * mass;
            let mut pick = pools.len() - 1;
            for (i, p) in pools.iter().enumerate() {
                let w = p.0 * left[i] as f64;
                if left[i] > 0 && r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            while left[pick] == 0 {
                pick -= 1;
            }
            left[pick] -= 1;
            if pools[pick].1 {
                object_picks += 1;
            }
        }
    }
    let picks = object_picks as f64 / trials as f64;
    SuccessiveSamplingEstimate {
        object_fraction: picks / m as f64,
        object_recall: if total_objects == 0 { 0.0 } else { picks / total_objects as f64 },
    }
}

/// One pixel rendered straight from the definitions, blob by blob.
pub fn render_pixel_scalar(blobs: &[GaussianBlob], view: &CameraView, px: u32, py: u32, cfg: &RenderConfig) -> [f64; 3] {
    let w = &view.world_to_camera;
    let k = &view.intrinsics;
    let mut hits: Vec<(f64, f64, [f64; 3])> = Vec::new();
    for b in blobs {
        let p = [b.position.x, b.position.y, b.position.z];
        let mut c = [0.0; 3];
        for r in 0..3 {
            c[r] = w[(r, 0)] * p[0] + w[(r, 1)] * p[1] + w[(r, 2)] * p[2] + w[(r, 3)];
        }
        if c[2] <= 1e-6 || c[2] < cfg.near_plane {
            continue;
        }
        // Σ = R diag(s²) Rᵀ from the unit quaternion (w, x, y, z).
        let [qw, qx, qy, qz] = b.rotation;
        let rot = [
            [1.0 - 2.0 * (qy * qy + qz * qz), 2.0 * (qx * qy - qw * qz), 2.0 * (qx * qz + qw * qy)],
            [2.0 * (qx * qy + qw * qz), 1.0 - 2.0 * (qx * qx + qz * qz), 2.0 * (qy * qz - qw * qx)],
            [2.0 * (qx * qz - qw * qy), 2.0 * (qy * qz + qw * qx), 1.0 - 2.0 * (qx * qx + qy * qy)],
        ];
        let s = [b.scale.x.max(1e-7), b.scale.y.max(1e-7), b.scale.z.max(1e-7)];
        let mut sigma = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                sigma[i][j] = (0..3).map(|a| rot[i][a] * s[a] * s[a] * rot[j][a]).sum();
            }
        }
        let (x, y, z) = (c[0], c[1], c[2]);
        let jac = [
            [k[(0, 0)] / z, k[(0, 1)] / z, -(k[(0, 0)] * x + k[(0, 1)] * y) / (z * z)],
            [k[(1, 0)] / z, k[(1, 1)] / z, -(k[(1, 0)] * x + k[(1, 1)] * y) / (z * z)],
        ];
        // T = J W with W the rotation block of world_to_camera.
        let mut t = [[0.0; 3]; 2];
        for i in 0..2 {
            for j in 0..3 {
                t[i][j] = (0..3).map(|a| jac[i][a] * w[(a, j)]).sum();
            }
        }
        let mut cov = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for a in 0..3 {
                    for bb in 0..3 {
                        acc += t[i][a] * sigma[a][bb] * t[j][bb];
                    }
                }
                cov[i][j] = acc;
            }
        }
        let off = 0.5 * (cov[0][1] + cov[1][0]);
        let (ca, cb, cd) = (cov[0][0] + 0.3, off, cov[1][1] + 0.3);
        let det = ca * cd - cb * cb;
        let u = k[(0, 0)] * x / z + k[(0, 1)] * y / z + k[(0, 2)];
        let v = k[(1, 0)] * x / z + k[(1, 1)] * y / z + k[(1, 2)];
        let (dx, dy) = (px as f64 - u, py as f64 - v);
        let d2 = (cd * dx * dx - 2.0 * cb * dx * dy + ca * dy * dy) / det;
        if d2 > cfg.gaussian_radius_sigmas * cfg.gaussian_radius_sigmas {
            continue;
        }
        let alpha = b.opacity * (-0.5 * d2).exp();
        if alpha < cfg.alpha_cutoff {
            continue;
        }
        hits.push((z, alpha, [b.color.x, b.color.y, b.color.z]));
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = [0.0; 3];
    let mut transmittance = 1.0;
    for (_, alpha, color) in hits {
        for ch in 0..3 {
            out[ch] += transmittance * alpha * color[ch];
        }
        transmittance *= 1.0 - alpha;
    }
    for ch in 0..3 {
        out[ch] += transmittance * cfg.background_color[ch];
    }
    out
}

/// Mean SSIM from the definition: every window position, every channel,
/// two-pass statistics.
pub fn ssim_direct(a: &Image, b: &Image, window: u32, c1: f64, c2: f64) -> f64 {
    let (w, h, k) = (a.width as usize, a.height as usize, window as usize);
    let val = |img: &Image, x: usize, y: usize, ch: usize| img.pixels[(y * w + x) * 3 + ch] as f64 / 255.0;
    let mut sum = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        for y0 in 0..=h - k {
            for x0 in 0..=w - k {
                let mut xs = Vec::with_capacity(k * k);
                let mut ys = Vec::with_capacity(k * k);
                for y in y0..y0 + k {
                    for x in x0..x0 + k {
                        xs.push(val(a, x, y, ch));
                        ys.push(val(b, x, y, ch));
                    }
                }
                let n = xs.len() as f64;
                let mx = xs.iter().sum::<f64>() / n;
                let my = ys.iter().sum::<f64>() / n;
                let vx = xs.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / n;
                let vy = ys.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / n;
                let cxy = xs.iter().zip(&ys).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / n;
                sum += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    sum / count as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> [P3; 8] {
        [
            [-1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0],
            [1.0, 1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
            [1.0, -1.0, 1.0],
            [1.0, 1.0, 1.0],
            [-1.0, 1.0, 1.0],
        ]
    }

    #[test]
    fn cube_membership() {
        assert!(hull_contains(&cube(), [0.0, 0.0, 0.0]));
        assert!(hull_contains(&cube(), [0.99, -0.99, 0.5]));
        assert!(!hull_contains(&cube(), [1.01, 0.0, 0.0]));
        assert!(!hull_contains(&cube(), [0.0, 0.0, -1.5]));
        assert!((hull_signed_distance(&cube(), [0.5, 0.0, 0.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fps_collinear() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]];
        assert_eq!(fps_bruteforce(&pts, 2, 0), vec![0, 3]);
        assert_eq!(fps_bruteforce(&pts, 3, 0), vec![0, 3, 1]);
    }

    #[test]
    fn square_border_has_eight_pixels() {
        let mask = Mask::from_fn(5, 5, |x, y| (1..=3).contains(&x) && (1..=3).contains(&y));
        let b = border_pixels(&mask);
        assert_eq!(b.len(), 8);
        assert!(!b.contains(&(2, 2)));
    }

    #[test]
    fn successive_sampling_limits() {
        let w = vec![0.5; 10];
        let o: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let e = successive_sampling(&w, &o, 10, 50, 1);
        assert_eq!(e.object_recall, 1.0);
        assert!((e.object_fraction - 0.3).abs() < 1e-12);
        let uniform = successive_sampling(&w, &o, 5, 20_000, 2);
        assert!((uniform.object_recall - 0.5).abs() < 0.01);
    }
}
