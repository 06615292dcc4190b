//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use gsdet::boundary::{build_boundary_maps, overlay_boundaries, trace_borders, BorderKind, Mask};
use gsdet::io::{
    decode_gaussian_ply, encode_gaussian_ply, Category, CategoryPalette, DetectionBox, DetectionBoxSet, Image,
    LabelRaster, PlyReadOptions,
};
use gsdet::model::{CameraView, GaussianBlob, GaussianScene, IDENTITY_ROTATION};
use gsdet::render::{d_ssim, l1_loss, render_loss, render_view_full, RenderConfig, RenderLossConfig};
use gsdet::sampling::{
    blob_in_frustum, box_focused_sample, build_probability_field, concat_features, decode_detector_input,
    encode_detector_input, farthest_point_order, parse_detector_header, random_sample, Frustum, SampledScene,
    SamplerKind, SamplingMode, DEFAULT_P_BG,
};
use gsdet::synth::{self, oracle, SyntheticSceneSpec};
use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("frustum membership vs hull oracle", frustum_correctness),
        ("box-focused sampling semantics", sampling_semantics),
        ("max aggregation and p_bg floor", aggregation_law),
        ("border extraction", boundary_extraction),
        ("overlay exactness", overlay_exactness),
        ("renderer", renderer),
        ("image metrics", metrics),
        ("farthest point sampling", fps),
        ("splat PLY and detector I/O", io_round_trips),
        ("determinism and performance", determinism_and_performance),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.2} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.2} s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- helpers

fn room_center() -> Vector3<f64> {
    Vector3::new(3.0, 3.0, 1.5)
}

fn random_view(rng: &mut impl Rng, w: u32, h: u32) -> CameraView {
    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let eye = room_center() + Vector3::new(2.2 * a.cos(), 2.2 * a.sin(), rng.gen_range(-0.5..0.5));
    let target = room_center() + Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 0.0);
    let z_min = rng.gen_range(0.3..1.0);
    let focal = rng.gen_range(0.5..1.2) * w as f64;
    synth::look_at(eye, target, w, h, focal, z_min, z_min + rng.gen_range(0.5..4.0)).unwrap()
}

fn random_box(rng: &mut impl Rng, w: u32, h: u32) -> DetectionBox {
    let (w, h) = (w as f64, h as f64);
    let x0 = rng.gen_range(0.0..0.8 * w);
    let y0 = rng.gen_range(0.0..0.8 * h);
    DetectionBox {
        x_min: x0,
        y_min: y0,
        x_max: (x0 + rng.gen_range(0.03..0.3) * w).min(w),
        y_max: (y0 + rng.gen_range(0.03..0.3) * h).min(h),
        probs: vec![rng.gen_range(0.02..1.0)],
    }
}

fn point_blob(p: Vector3<f64>) -> GaussianBlob {
    GaussianBlob::new(p, Vector3::new(0.02, 0.02, 0.02), IDENTITY_ROTATION, Vector3::new(0.5, 0.5, 0.5), 0.5).unwrap()
}

fn random_image(rng: &mut impl Rng, w: u32, h: u32) -> Image {
    Image::new(w, h, (0..w * h * 3).map(|_| rng.gen()).collect()).unwrap()
}

fn random_blobs(rng: &mut impl Rng, n: usize) -> Vec<GaussianBlob> {
    (0..n)
        .map(|_| {
            let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            GaussianBlob::new(
                Vector3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.5..0.5), rng.gen_range(0.5..3.0)),
                Vector3::new(rng.gen_range(0.01..0.2), rng.gen_range(0.01..0.2), rng.gen_range(0.01..0.2)),
                q,
                Vector3::new(rng.gen(), rng.gen(), rng.gen()),
                rng.gen_range(0.05..0.99),
            )
            .unwrap()
        })
        .collect()
}

fn front_view(w: u32, h: u32) -> CameraView {
    CameraView::new(
        Matrix3::new(100.0, 0.0, (w / 2) as f64, 0.0, 100.0, (h / 2) as f64, 0.0, 0.0, 1.0),
        Matrix4::identity(),
        w,
        h,
        0.2,
        6.0,
    )
    .unwrap()
}

fn scene(blobs: Vec<GaussianBlob>) -> GaussianScene {
    GaussianScene { blobs, source_path: "mem".into() }
}

// ---------------------------------------------------------------- 1

fn frustum_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut compared, mut inside, mut skipped) = (0usize, 0usize, 0usize);
    for _ in 0..20 {
        let view = random_view(&mut rng, 320, 240);
        let f = Frustum::from_box(0, &view, &random_box(&mut rng, 320, 240));
        let corners = f.corners.map(|c| [c.x, c.y, c.z]);
        let mut lo = [f64::MAX; 3];
        let mut hi = [f64::MIN; 3];
        for c in &corners {
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        for _ in 0..5000 {
            let p: [f64; 3] = std::array::from_fn(|a| {
                let pad = 0.1 * (hi[a] - lo[a]) + 0.05;
                rng.gen_range(lo[a] - pad..hi[a] + pad)
            });
            if oracle::hull_signed_distance(&corners, p).abs() <= 1e-9 {
                skipped += 1;
                continue;
            }
            let want = oracle::hull_contains(&corners, p);
            let got = blob_in_frustum(&Vector3::from(p), &f, &view);
            ensure!(got == want, "disagreement at {p:?}: got {got}, hull says {want}");
            compared += 1;
            inside += want as usize;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2} s");
    ensure!(inside > 1000 && inside < compared - 1000, "degenerate sampling: {inside} of {compared} inside");
    Ok(format!("{compared} points agree ({inside} inside, {skipped} on faces skipped) in {secs:.2} s"))
}

// ---------------------------------------------------------------- 2

fn sampling_semantics() -> Outcome {
    let start = Instant::now();
    let spec = SyntheticSceneSpec { box_prob: 0.9, ..SyntheticSceneSpec::canonical() };
    let s = synth::generate_scene(&spec, 0).map_err(|e| e.to_string())?;
    let truth = &s.labeled;
    let field = build_probability_field(&truth.scene, &s.cameras, &s.boxes, DEFAULT_P_BG).map_err(|e| e.to_string())?;
    let objects = truth.object_count();
    ensure!(objects == 1000 && truth.scene.len() == 10_000, "scene has {objects} objects of {}", truth.scene.len());
    for (i, &p) in field.values.iter().enumerate() {
        let want = if truth.is_object[i] { 0.9 } else { DEFAULT_P_BG };
        ensure!(p == want, "blob {i}: p_agr {p}, expected {want}");
    }
    let (m, seeds) = (500, 10_000u64);
    let (mut box_recall, mut random_recall) = (0.0, 0.0);
    for seed in 0..seeds {
        let b = box_focused_sample(&truth.scene, &field, m, seed, SamplingMode::Budgeted).map_err(|e| e.to_string())?;
        let r = random_sample(&truth.scene, m, seed).map_err(|e| e.to_string())?;
        box_recall += synth::retention_report(&b, truth).map_err(|e| e.to_string())?.object_recall;
        random_recall += synth::retention_report(&r, truth).map_err(|e| e.to_string())?.object_recall;
    }
    box_recall /= seeds as f64;
    random_recall /= seeds as f64;
    let predicted = oracle::successive_sampling(&field.values, &truth.is_object, m, 10_000, 2024).object_recall;
    let ratio = box_recall / random_recall;
    let rel = (box_recall - predicted).abs() / predicted;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "recall box {box_recall:.4} vs random {random_recall:.4} (ratio {ratio:.2}), oracle {predicted:.4} (rel err {:.3}%), {secs:.1} s",
        rel * 100.0
    );
    ensure!(ratio >= 5.0, "ratio below 5: {detail}");
    ensure!(rel <= 0.05, "oracle mismatch: {detail}");
    ensure!(secs < 60.0, "too slow: {detail}");
    Ok(detail)
}

// ---------------------------------------------------------------- 3

fn aggregation_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut raised = 0usize;
    for case in 0..1000 {
        let n = rng.gen_range(1..120);
        let blobs = (0..n)
            .map(|_| {
                point_blob(room_center() + Vector3::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-0.7..0.7)))
            })
            .collect();
        let sc = scene(blobs);
        let n_views = rng.gen_range(1..5);
        let views: Vec<CameraView> = (0..=n_views).map(|_| random_view(&mut rng, 160, 120)).collect();
        let boxes: Vec<Vec<DetectionBox>> = views
            .iter()
            .map(|_| (0..rng.gen_range(0..5)).map(|_| random_box(&mut rng, 160, 120)).collect())
            .collect();
        let p_bg = rng.gen_range(0.001..0.2);
        let fewer = build_probability_field(&sc, &views[..n_views], &DetectionBoxSet { views: boxes[..n_views].to_vec() }, p_bg)
            .map_err(|e| e.to_string())?;
        let more = build_probability_field(&sc, &views, &DetectionBoxSet { views: boxes.clone() }, p_bg)
            .map_err(|e| e.to_string())?;
        let ceiling = boxes.iter().flatten().map(|b| b.p_max()).fold(p_bg, f64::max);
        for (i, (a, b)) in fewer.values.iter().zip(&more.values).enumerate() {
            ensure!(b >= a, "case {case} blob {i}: adding a view lowered {a} to {b}");
            ensure!(*a >= p_bg && *b >= p_bg, "case {case} blob {i}: below floor {p_bg}");
            ensure!(*b <= ceiling, "case {case} blob {i}: {b} above largest p_max {ceiling}");
            raised += (*b > p_bg) as usize;
        }
        let no_boxes = build_probability_field(&sc, &views, &DetectionBoxSet { views: vec![vec![]; views.len()] }, p_bg)
            .map_err(|e| e.to_string())?;
        ensure!(no_boxes.values.iter().all(|&p| p == p_bg), "case {case}: box-free field not at the floor");
    }
    ensure!(raised > 0, "no blob was ever inside a frustum");
    Ok(format!("1000 scenes, {raised} blob probabilities raised above the floor"))
}

// ---------------------------------------------------------------- 4

fn boundary_extraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for case in 0..1000 {
        let (w, h) = (rng.gen_range(1..=64), rng.gen_range(1..=64));
        let density = rng.gen_range(0.05..0.95);
        let mask = Mask::new(w, h, (0..w * h).map(|_| rng.gen_bool(density) as u8).collect()).unwrap();
        let traced: BTreeSet<(u32, u32)> = trace_borders(&mask).iter().flat_map(|c| c.points.iter().copied()).collect();
        ensure!(traced == oracle::border_pixels(&mask), "case {case}: {w}x{h} border sets differ");
    }

    let filled = Mask::from_fn(5, 5, |x, y| (1..=3).contains(&x) && (1..=3).contains(&y));
    let c = trace_borders(&filled);
    ensure!(c.len() == 1 && c[0].kind == BorderKind::Outer, "filled 3x3: {} contours", c.len());
    let pts: BTreeSet<_> = c[0].points.iter().copied().collect();
    let perimeter: BTreeSet<_> = (1..=3).flat_map(|y| (1..=3).map(move |x| (x, y))).filter(|&p| p != (2, 2)).collect();
    ensure!(pts == perimeter, "filled 3x3 border {pts:?}");

    let ring = Mask::from_fn(7, 7, |x, y| {
        (1..=5).contains(&x) && (1..=5).contains(&y) && !((2..=4).contains(&x) && (2..=4).contains(&y))
    });
    let c = trace_borders(&ring);
    let outer = c.iter().filter(|c| c.kind == BorderKind::Outer).count();
    let holes = c.iter().filter(|c| c.kind == BorderKind::Hole).count();
    ensure!(outer == 1 && holes == 1, "ring: {outer} outer, {holes} hole contours");
    let pts: BTreeSet<_> = c.iter().flat_map(|c| c.points.iter().copied()).collect();
    ensure!(pts == oracle::border_pixels(&ring) && pts.len() == 16, "ring border set mismatch");
    Ok("1000 random masks up to 64x64 match; filled 3x3 and ring golden cases hold".into())
}

// ---------------------------------------------------------------- 5

fn overlay_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut checked, mut painted, mut copied) = (0usize, 0usize, 0usize);
    for case in 0..300 {
        let k = rng.gen_range(1..=5usize);
        let palette = CategoryPalette::new(
            (1..=k)
                .map(|i| Category { name: format!("c{i}"), rgb: [rng.gen(), rng.gen(), rng.gen()] })
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let (w, h) = (rng.gen_range(1..=48), rng.gen_range(1..=48));
        // Rectangles of random categories over a background.
        let mut labels = vec![0u8; (w * h) as usize];
        for _ in 0..rng.gen_range(0..6) {
            let id = rng.gen_range(1..=k as u8);
            let (x0, y0) = (rng.gen_range(0..w), rng.gen_range(0..h));
            let (x1, y1) = (rng.gen_range(x0..=w), rng.gen_range(y0..=h));
            for y in y0..y1 {
                for x in x0..x1 {
                    labels[(y * w + x) as usize] = id;
                }
            }
        }
        let raster = LabelRaster::new(w, h, labels).unwrap();
        let image = random_image(&mut rng, w, h);
        let maps = build_boundary_maps(&raster, &palette, rng.gen_range(0..3)).map_err(|e| e.to_string())?;
        let out = overlay_boundaries(&image, &maps, &palette).map_err(|e| e.to_string())?;
        for i in 0..(w * h) as usize {
            let active: Vec<u8> = (1..=k as u8).filter(|&c| maps.maps[c as usize - 1][i] != 0).collect();
            if active.len() > 1 {
                continue;
            }
            let b = active.len() as u32;
            let color = active.first().map(|&c| palette.color(c)).unwrap_or([0; 3]);
            for ch in 0..3 {
                let want = (image.pixels[3 * i + ch] as u32 * (1 - b) + b * color[ch] as u32) as u8;
                ensure!(out.pixels[3 * i + ch] == want, "case {case} pixel {i} channel {ch}");
            }
            checked += 1;
            if b == 0 {
                copied += 1;
            } else {
                painted += 1;
            }
        }
    }
    ensure!(painted > 0 && copied > 0, "degenerate cases");
    Ok(format!("{checked} pixels exact ({painted} painted, {copied} copied unchanged)"))
}

// ---------------------------------------------------------------- 6

fn renderer() -> Outcome {
    let c = [0.9, 0.3, 0.1];
    let opaque = GaussianBlob {
        position: Vector3::new(0.0, 0.0, 2.0),
        scale: Vector3::new(0.05, 0.05, 0.05),
        rotation: IDENTITY_ROTATION,
        color: Vector3::from(c),
        opacity: 1.0,
    };
    let cfg = RenderConfig { background_color: [0.5; 3], ..Default::default() };
    let r = render_view_full(&scene(vec![opaque]), &front_view(32, 32), &cfg).map_err(|e| e.to_string())?;
    let got = r.color[r.index(16, 16)];
    ensure!((0..3).all(|k| (got[k] - c[k]).abs() <= 1e-6), "opaque center {got:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let v = front_view(40, 30);
    let cfg = RenderConfig::default();
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let blobs = random_blobs(&mut rng, 2);
        let r = render_view_full(&scene(blobs.clone()), &v, &cfg).map_err(|e| e.to_string())?;
        for y in 0..30 {
            for x in 0..40 {
                let want = oracle::render_pixel_scalar(&blobs, &v, x, y, &cfg);
                let got = r.color[r.index(x, y)];
                for k in 0..3 {
                    let d = (got[k] - want[k]).abs();
                    worst = worst.max(d);
                    ensure!(d <= 1e-6, "case {case} pixel ({x},{y}): {got:?} vs {want:?}");
                }
            }
        }
    }

    let v = front_view(64, 48);
    for case in 0..30 {
        let n = rng.gen_range(1..150);
        let blobs = random_blobs(&mut rng, n);
        let a = render_view_full(&scene(blobs.clone()), &v, &cfg).map_err(|e| e.to_string())?;
        ensure!(a.weight.iter().all(|&w| w <= 1.0 + 1e-6), "case {case}: weight above 1");
        let mut shuffled = blobs;
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        let b = render_view_full(&scene(shuffled), &v, &cfg).map_err(|e| e.to_string())?;
        let same = a.color.iter().flatten().zip(b.color.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits())
            && a.weight.iter().zip(&b.weight).all(|(x, y)| x.to_bits() == y.to_bits());
        ensure!(same, "case {case}: permutation changed the render");
    }
    Ok(format!("opaque center exact; 100 two-blob scenes within {worst:.1e} of the scalar oracle; weights bounded; permutation invariant"))
}

// ---------------------------------------------------------------- 7

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let cfg = RenderLossConfig::default();
    let mut worst: f64 = 0.0;
    for case in 0..60 {
        let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let a = random_image(&mut rng, w, h);
        ensure!(l1_loss(&a, &a).map_err(|e| e.to_string())? == 0.0, "case {case}: l1(I,I) != 0");
        ensure!(d_ssim(&a, &a, &cfg).map_err(|e| e.to_string())? == 0.0, "case {case}: d_ssim(I,I) != 0");
        ensure!(render_loss(&a, &a, &cfg).map_err(|e| e.to_string())?.total == 0.0, "case {case}: loss(I,I) != 0");
        // Correlated pair: noisy copy of `a`.
        let b = Image::new(
            w,
            h,
            a.pixels.iter().map(|&p| (p as i32 + rng.gen_range(-40..=40)).clamp(0, 255) as u8).collect(),
        )
        .unwrap();
        let window = 2 * rng.gen_range(1..=5) + 1;
        let c = RenderLossConfig { ssim_window: window, ..cfg };
        let k = c.effective_window(w, h);
        for other in [&b, &random_image(&mut rng, w, h)] {
            let got = d_ssim(&a, other, &c).map_err(|e| e.to_string())?;
            let want = (1.0 - oracle::ssim_direct(&a, other, k, c.c1, c.c2)) / 2.0;
            worst = worst.max((got - want).abs());
            ensure!((got - want).abs() <= 1e-9, "case {case} {w}x{h} window {k}: {got} vs {want}");
        }
    }
    Ok(format!("self losses exactly 0; d_ssim within {worst:.1e} of the direct SSIM on 120 pairs"))
}

// ---------------------------------------------------------------- 8

fn fps() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for case in 0..100 {
        let n = rng.gen_range(1..=300);
        let grid = case % 2 == 0;
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                if grid {
                    [rng.gen_range(0..6) as f64, rng.gen_range(0..6) as f64, rng.gen_range(0..3) as f64]
                } else {
                    [rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..3.0)]
                }
            })
            .collect();
        let sc = scene(pts.iter().map(|p| point_blob(Vector3::from(*p))).collect());
        let m = rng.gen_range(1..=n.min(30));
        let got = farthest_point_order(&sc, m, rng.gen()).map_err(|e| e.to_string())?;
        let want = oracle::fps_bruteforce(&pts, m, got[0]);
        ensure!(got == want, "case {case} (n={n}, m={m}): {got:?} vs {want:?}");
    }
    Ok("100 instances (half on tie-heavy integer grids) match brute force exactly".into())
}

// ---------------------------------------------------------------- 9

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn io_round_trips() -> Outcome {
    let s = synth::generate_scene(&SyntheticSceneSpec { background_blobs: 2000, ..SyntheticSceneSpec::canonical() }, 9)
        .map_err(|e| e.to_string())?;
    let (bytes, _) = encode_gaussian_ply(&s.labeled.scene);
    let once = decode_gaussian_ply(&bytes, &PlyReadOptions::default(), "a").map_err(|e| e.to_string())?;
    let (again, _) = encode_gaussian_ply(&once);
    ensure!(bytes == again, "PLY encode(decode(bytes)) differs");
    let twice = decode_gaussian_ply(&again, &PlyReadOptions::default(), "a").map_err(|e| e.to_string())?;
    ensure!(once.blobs == twice.blobs, "PLY decode not idempotent");

    let sample = SampledScene {
        indices: (0..once.len()).collect(),
        blobs: once.blobs.clone(),
        sampler: SamplerKind::Random,
        mode: SamplingMode::Budgeted,
        seed: 0,
        budget: once.len(),
    };
    let m = concat_features(&sample);
    let (bin, header) = encode_detector_input(&m).map_err(|e| e.to_string())?;
    let back = decode_detector_input(&parse_detector_header(&header).map_err(|e| e.to_string())?, &bin)
        .map_err(|e| e.to_string())?;
    ensure!(m.bitwise_eq(&back), "detector round trip changed values");
    let (bin2, header2) = encode_detector_input(&back).map_err(|e| e.to_string())?;
    ensure!(bin == bin2 && header == header2, "detector re-encode differs");

    let blob = |p: [f64; 3], s: f64, c: f64, a: f64| {
        GaussianBlob::new(Vector3::from(p), Vector3::new(s, s, s), IDENTITY_ROTATION, Vector3::new(c, c, c), a).unwrap()
    };
    let rows = vec![
        blob([0.0, 0.0, 0.0], 1.0, 1.0, 0.5),
        blob([1.0, -2.0, 0.5], 0.25, 0.0, 0.875),
        blob([-1.0, 2.0, 4.0], 2.0, 0.75, 0.125),
    ];
    let golden = SampledScene { indices: vec![0, 1, 2], blobs: rows, ..sample };
    let (bin, header) = encode_detector_input(&concat_features(&golden)).map_err(|e| e.to_string())?;
    let want_bin = std::fs::read(data_dir().join("detector_golden.bin")).map_err(|e| e.to_string())?;
    let want_header = std::fs::read_to_string(data_dir().join("detector_golden.json")).map_err(|e| e.to_string())?;
    ensure!(bin == want_bin, "golden binary differs");
    ensure!(header == want_header, "golden header differs:\n{header}");
    // Row-major f32le: value (r, c) sits at byte 4 * (14 r + c).
    let at = |r: usize, c: usize| f32::from_le_bytes(want_bin[4 * (14 * r + c)..4 * (14 * r + c) + 4].try_into().unwrap());
    ensure!(at(1, 1) == -2.0 && at(1, 13) == 0.875 && at(2, 2) == 4.0 && at(0, 6) == 1.0, "byte layout");
    Ok(format!("PLY ({} blobs) and detector round trips bitwise; golden 3-row file matches", once.len()))
}

// ---------------------------------------------------------------- 10

fn gsdet(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gsdet")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("gsdet {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

/// Every non-manifest file under `dir`, relative path to bytes.
fn tree(dir: &Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with("manifest.json") {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn pipeline(root: &Path, threads: &str) -> Result<(), String> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let t = ["--threads", threads];
    let run = |args: &[&str]| gsdet(&[&t[..], args].concat());
    run(&["gen-synth", "--seed", "5", "--background", "3000", "--width", "160", "--height", "120", "--focal", "150", "--out", &p("synth")])?;
    let (scene, cams, boxes, pal) = (p("synth/scene.ply"), p("synth/cameras.json"), p("synth/boxes.json"), p("synth/palette.json"));
    let truth = p("synth/truth.json");
    for (name, method, mode) in [("box", "box", "budgeted"), ("bern", "box", "bernoulli"), ("rand", "random", "budgeted"), ("fps", "fps", "budgeted")] {
        run(&[
            "sample", "--scene", &scene, "--cameras", &cams, "--boxes", &boxes, "--palette", &pal, "--method", method,
            "--mode", mode, "--budget", "400", "--seed", "11", "--truth", &truth, "--out", &p(&format!("sample/{name}")),
        ])?;
    }
    run(&["render", "--scene", &scene, "--cameras", &cams, "--out", &p("render")])?;
    run(&["loss", &p("synth/images/view_000.ppm"), &p("render/view_000.ppm"), "--out", &p("loss/metrics.json")])?;
    run(&["overlay", "--images", &p("synth/images"), "--labels", &p("synth/labels"), "--palette", &pal, "--out", &p("overlay")])?;
    run(&["stats", "--scene", &scene, "--cameras", &cams, "--boxes", &boxes, "--palette", &pal, "--out", &p("stats/stats.json")])?;
    Ok(())
}

fn determinism_and_performance() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (one, eight) = (dir.path().join("t1"), dir.path().join("t8"));
    pipeline(&one, "1")?;
    pipeline(&eight, "8")?;
    let (a, b) = (tree(&one), tree(&eight));
    ensure!(a.len() > 30, "only {} outputs", a.len());
    ensure!(a.keys().eq(b.keys()), "output sets differ");
    for (k, v) in &a {
        ensure!(&b[k] == v, "{} differs between --threads 1 and --threads 8", k.display());
    }
    gsdet(&["replay", &one.join("sample/box.manifest.json").to_string_lossy()])?;

    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let blobs: Vec<GaussianBlob> = (0..1_000_000)
        .map(|_| GaussianBlob {
            position: Vector3::new(rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..3.0)),
            scale: Vector3::new(0.02, 0.02, 0.02),
            rotation: IDENTITY_ROTATION,
            color: Vector3::new(0.5, 0.5, 0.5),
            opacity: 0.5,
        })
        .collect();
    let big = scene(blobs);
    let views: Vec<CameraView> = (0..100).map(|_| random_view(&mut rng, 640, 480)).collect();
    let boxes = DetectionBoxSet { views: views.iter().map(|_| (0..5).map(|_| random_box(&mut rng, 640, 480)).collect()).collect() };
    let start = Instant::now();
    let field = build_probability_field(&big, &views, &boxes, DEFAULT_P_BG).map_err(|e| e.to_string())?;
    let sample = box_focused_sample(&big, &field, 100_000, 3, SamplingMode::Budgeted).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let detail = format!(
        "{} outputs identical across thread counts; replay reproduced; 10^6 blobs x 500 frustums sampled ({} kept, {} raised) in {secs:.2} s on {cores} core(s)",
        a.len(),
        sample.len(),
        field.above_floor()
    );
    ensure!(secs < 10.0, "too slow: {detail}");
    Ok(detail)
}
