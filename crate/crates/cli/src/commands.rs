use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use gsdet::boundary::{build_boundary_maps, overlay_ablation, overlay_boundaries, AblationPrior};
use gsdet::io::{
    read_boxes, read_cameras, read_gaussian_ply, read_image, read_label_raster, read_palette,
    write_boxes, write_cameras, write_gaussian_ply, write_image, write_label_raster, write_palette,
    DetectionBoxSet,
};
use gsdet::model::{CameraView, GaussianScene};
use gsdet::render::{render_loss, render_view, RenderConfig, RenderLossConfig};
use gsdet::sampling::{
    box_focused_sample, build_probability_field, concat_features, export_detector_input,
    farthest_point_sample, random_sample, SamplingMode,
};
use gsdet::synth::{self, LabeledScene, ObjectSpec, SyntheticSceneSpec};

use crate::manifest::{read_manifest, record_outputs, write_manifest, RunManifest};
use crate::{
    invalid, Cli, Command, GenSynthArgs, LossArgs, Method, Mode, OverlayArgs, OverlayMode,
    RenderArgs, ReplayArgs, SampleArgs, StatsArgs,
};

pub fn dispatch(cli: Cli, raw_args: Vec<String>) -> Result<()> {
    match cli.threads {
        Some(0) => Err(invalid("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building worker pool")?;
            pool.install(|| run(cli.command, raw_args, cli.threads))
        }
        None => run(cli.command, raw_args, None),
    }
}

fn run(command: Command, raw_args: Vec<String>, threads: Option<usize>) -> Result<()> {
    let mut rec = Recorder::new(raw_args, threads);
    match command {
        Command::Overlay(a) => overlay(a, &mut rec),
        Command::Sample(a) => sample(a, &mut rec),
        Command::Render(a) => render(a, &mut rec),
        Command::Loss(a) => loss(a, &mut rec),
        Command::GenSynth(a) => gen_synth(a, &mut rec),
        Command::Stats(a) => stats(a, &mut rec),
        Command::Replay(a) => replay(a),
    }
}

/// Collects what a run read and wrote, then writes the manifest.
struct Recorder {
    start: Instant,
    args: Vec<String>,
    threads: Option<usize>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    fn new(args: Vec<String>, threads: Option<usize>) -> Self {
        Self {
            start: Instant::now(),
            args,
            threads,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    fn output(&mut self, p: PathBuf) {
        self.outputs.push(p);
    }

    fn finish(&mut self, subcommand: &str, mut config: serde_json::Value, seed: Option<u64>, path: &Path) -> Result<()> {
        config["threads"] = json!(self.threads);
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            args: self.args.clone(),
            cwd: std::env::current_dir().context("reading working directory")?,
            config,
            inputs: self.inputs.clone(),
            outputs: record_outputs(&self.outputs)?,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: self.start.elapsed().as_secs_f64(),
        };
        write_manifest(&manifest, path)
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn stems(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- overlay

fn overlay(a: OverlayArgs, rec: &mut Recorder) -> Result<()> {
    let images = stems(&a.images, "ppm")?;
    let labels = stems(&a.labels, "pgm")?;
    if images.is_empty() {
        return Err(invalid(format!("no .ppm images in {}", a.images.display())));
    }
    for stem in images.keys().filter(|s| !labels.contains_key(*s)) {
        eprintln!("skipping {stem}: no label raster");
    }
    for stem in labels.keys().filter(|s| !images.contains_key(*s)) {
        eprintln!("skipping {stem}: no image");
    }
    let paired: Vec<(usize, &String)> = images
        .keys()
        .enumerate()
        .filter(|(_, s)| labels.contains_key(*s))
        .collect();
    if paired.is_empty() {
        return Err(invalid("no image has a matching label raster"));
    }
    let palette = read_palette(&a.palette)?;
    rec.input(&a.palette);
    let boxes = match (a.mode, &a.boxes) {
        (OverlayMode::Point, None) => return Err(invalid("--mode point needs --boxes")),
        (OverlayMode::Point, Some(p)) => {
            rec.input(p);
            Some(read_boxes(p, &palette)?)
        }
        _ => None,
    };
    create_dir(&a.out)?;
    let written: Vec<PathBuf> = paired
        .par_iter()
        .map(|&(view, stem)| -> Result<PathBuf> {
            let image = read_image(&images[stem])?;
            let raster = read_label_raster(&labels[stem])?;
            if (image.width, image.height) != (raster.width, raster.height) {
                return Err(invalid(format!(
                    "{stem}: image is {}x{} but labels are {}x{}",
                    image.width, image.height, raster.width, raster.height
                )));
            }
            let out = match a.mode {
                OverlayMode::Boundary => {
                    let maps = build_boundary_maps(&raster, &palette, a.dilation)?;
                    overlay_boundaries(&image, &maps, &palette)?
                }
                OverlayMode::Mask => overlay_ablation(&image, AblationPrior::FilledMask(&raster), &palette)?,
                OverlayMode::Point => {
                    let set = boxes.as_ref().expect("checked above");
                    let view_boxes = set.views.get(view).map(Vec::as_slice).unwrap_or(&[]);
                    overlay_ablation(&image, AblationPrior::CenterPoint(view_boxes), &palette)?
                }
            };
            let path = a.out.join(format!("{stem}.ppm"));
            write_image(&out, &path)?;
            Ok(path)
        })
        .collect::<Result<_>>()?;
    for &(_, stem) in &paired {
        rec.input(&images[stem]);
        rec.input(&labels[stem]);
    }
    for p in written {
        rec.output(p);
    }
    let config = json!({
        "images": a.images, "labels": a.labels, "palette": a.palette,
        "mode": format!("{:?}", a.mode).to_lowercase(), "dilation": a.dilation, "boxes": a.boxes, "out": a.out,
    });
    rec.finish("overlay", config, None, &a.out.join("manifest.json"))
}

// ---------------------------------------------------------------- sample

/// Per-blob ground truth: palette id per blob, 0 for background.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub category: Vec<u8>,
}

fn read_truth(path: &Path, scene: &GaussianScene) -> Result<LabeledScene> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let truth: TruthFile =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    if truth.category.len() != scene.len() {
        return Err(invalid(format!(
            "ground truth lists {} blobs, scene has {}",
            truth.category.len(),
            scene.len()
        )));
    }
    Ok(LabeledScene {
        scene: scene.clone(),
        is_object: truth.category.iter().map(|&c| c != 0).collect(),
        category: truth.category,
    })
}

struct Detections {
    views: Vec<CameraView>,
    boxes: DetectionBoxSet,
}

fn read_detections(
    cameras: &Option<PathBuf>,
    boxes: &Option<PathBuf>,
    palette: &Option<PathBuf>,
    rec: &mut Recorder,
) -> Result<Option<Detections>> {
    match (cameras, boxes, palette) {
        (Some(c), Some(b), Some(p)) => {
            let palette = read_palette(p)?;
            let views = read_cameras(c)?;
            let mut boxes = read_boxes(b, &palette)?;
            let clamped = boxes.clamp_to_views(&views)?;
            if clamped > 0 {
                eprintln!("clamped {clamped} boxes to their image bounds");
            }
            rec.input(c);
            rec.input(b);
            rec.input(p);
            Ok(Some(Detections { views, boxes }))
        }
        (None, None, None) => Ok(None),
        _ => Err(invalid("--cameras, --boxes and --palette must be given together")),
    }
}

fn sample(a: SampleArgs, rec: &mut Recorder) -> Result<()> {
    let scene = read_gaussian_ply(&a.scene)?;
    rec.input(&a.scene);
    let det = read_detections(&a.cameras, &a.boxes, &a.palette, rec)?;
    let mode = match a.mode {
        Mode::Budgeted => SamplingMode::Budgeted,
        Mode::Bernoulli => SamplingMode::Bernoulli,
    };
    if a.method != Method::Box && mode == SamplingMode::Bernoulli {
        return Err(invalid("--mode bernoulli applies only to --method box"));
    }
    let sampled = match a.method {
        Method::Box => {
            let det = det.ok_or_else(|| invalid("--method box needs --cameras, --boxes and --palette"))?;
            let field = build_probability_field(&scene, &det.views, &det.boxes, a.p_bg)?;
            box_focused_sample(&scene, &field, a.budget, a.seed, mode)?
        }
        Method::Random => random_sample(&scene, a.budget, a.seed)?,
        Method::Fps => farthest_point_sample(&scene, a.budget, a.seed)?,
    };
    if sampled.is_empty() {
        return Err(invalid("the sample is empty; nothing to export"));
    }
    create_parent(&a.out)?;
    let ply = with_suffix(&a.out, ".ply");
    write_gaussian_ply(&sampled.to_scene(&ply.display().to_string()), &ply)?;
    rec.output(ply);
    let (bin, header) = export_detector_input(&concat_features(&sampled), &a.out)?;
    rec.output(bin);
    rec.output(header);
    let indices = with_suffix(&a.out, ".indices.json");
    write_json(
        &json!({
            "sampler": sampled.sampler.to_string(), "mode": sampled.mode.to_string(),
            "seed": sampled.seed, "budget": sampled.budget, "indices": sampled.indices,
        }),
        &indices,
    )?;
    rec.output(indices);
    if let Some(t) = &a.truth {
        let truth = read_truth(t, &scene)?;
        rec.input(t);
        let report = synth::retention_report(&sampled, &truth)?;
        let path = with_suffix(&a.out, ".retention.json");
        write_json(&report, &path)?;
        rec.output(path);
    }
    let config = json!({
        "scene": a.scene, "cameras": a.cameras, "boxes": a.boxes, "palette": a.palette,
        "method": sampled.sampler.to_string(), "mode": sampled.mode.to_string(), "budget": a.budget,
        "p_bg": a.p_bg, "seed": a.seed, "truth": a.truth, "out": a.out, "selected": sampled.len(),
    });
    rec.finish("sample", config, Some(a.seed), &with_suffix(&a.out, ".manifest.json"))
}

// ---------------------------------------------------------------- render / loss

fn render(a: RenderArgs, rec: &mut Recorder) -> Result<()> {
    let &[r, g, b] = a.background.as_slice() else {
        return Err(invalid("--background takes exactly three values, r,g,b"));
    };
    let scene = read_gaussian_ply(&a.scene)?;
    let views = read_cameras(&a.cameras)?;
    rec.input(&a.scene);
    rec.input(&a.cameras);
    let config = RenderConfig {
        background_color: [r, g, b],
        ..RenderConfig::default()
    };
    create_dir(&a.out)?;
    for (i, view) in views.iter().enumerate() {
        let path = a.out.join(format!("view_{i:03}.ppm"));
        write_image(&render_view(&scene, view, &config)?, &path)?;
        rec.output(path);
    }
    let cfg = json!({
        "scene": a.scene, "cameras": a.cameras, "out": a.out,
        "background": a.background, "alpha_cutoff": config.alpha_cutoff,
        "gaussian_radius_sigmas": config.gaussian_radius_sigmas, "near_plane": config.near_plane,
    });
    rec.finish("render", cfg, None, &a.out.join("manifest.json"))
}

fn loss(a: LossArgs, rec: &mut Recorder) -> Result<()> {
    let ia = read_image(&a.a)?;
    let ib = read_image(&a.b)?;
    rec.input(&a.a);
    rec.input(&a.b);
    let config = RenderLossConfig {
        lambda: a.lambda,
        ssim_window: a.window,
        ..RenderLossConfig::default()
    };
    let l = render_loss(&ia, &ib, &config)?;
    create_parent(&a.out)?;
    write_json(
        &json!({
            "l1": l.l1, "d_ssim": l.d_ssim, "render_loss": l.total,
            "ssim_window": config.effective_window(ia.width, ia.height),
        }),
        &a.out,
    )?;
    rec.output(a.out.clone());
    let cfg = json!({
        "a": a.a, "b": a.b, "out": a.out, "lambda": config.lambda, "ssim_window": config.ssim_window,
        "c1": config.c1, "c2": config.c2,
    });
    rec.finish("loss", cfg, None, &a.out.with_extension("manifest.json"))
}

// ---------------------------------------------------------------- gen-synth

fn gen_synth(a: GenSynthArgs, rec: &mut Recorder) -> Result<()> {
    let base = SyntheticSceneSpec::canonical();
    let n_cat = base.palette.len();
    let spec = SyntheticSceneSpec {
        objects: (0..a.objects)
            .map(|i| ObjectSpec {
                blobs: a.blobs_per_object,
                extent: [0.5, 0.5, 0.5],
                category: (i % n_cat) as u8 + 1,
            })
            .collect(),
        background_blobs: a.background,
        camera_angles_deg: synth::ring_angles(a.cameras),
        image_width: a.width,
        image_height: a.height,
        focal: a.focal,
        box_prob: a.box_prob,
        ..base
    };
    let s = synth::generate_scene(&spec, a.seed)?;
    create_dir(&a.out)?;
    let path = |name: &str| a.out.join(name);
    write_gaussian_ply(&s.labeled.scene, path("scene.ply"))?;
    write_cameras(&s.cameras, path("cameras.json"))?;
    write_boxes(&s.boxes, &s.palette, path("boxes.json"))?;
    write_palette(&s.palette, path("palette.json"))?;
    write_json(&TruthFile { category: s.labeled.category.clone() }, &path("truth.json"))?;
    for name in ["scene.ply", "cameras.json", "boxes.json", "palette.json", "truth.json"] {
        rec.output(path(name));
    }
    if !a.no_views {
        create_dir(&path("images"))?;
        create_dir(&path("labels"))?;
        for (i, (image, labels)) in synth::render_views(&s, &RenderConfig::default())?.into_iter().enumerate() {
            let img = a.out.join("images").join(format!("view_{i:03}.ppm"));
            let lab = a.out.join("labels").join(format!("view_{i:03}.pgm"));
            write_image(&image, &img)?;
            write_label_raster(&labels, &lab)?;
            rec.output(img);
            rec.output(lab);
        }
    }
    let cfg = json!({ "spec": spec, "seed": a.seed, "views": !a.no_views, "out": a.out });
    rec.finish("gen-synth", cfg, Some(a.seed), &path("manifest.json"))
}

// ---------------------------------------------------------------- stats

fn stats(a: StatsArgs, rec: &mut Recorder) -> Result<()> {
    let scene = read_gaussian_ply(&a.scene)?;
    rec.input(&a.scene);
    let n = scene.len();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let (mut opacity, mut scale) = (0.0, 0.0);
    for b in &scene.blobs {
        for k in 0..3 {
            lo[k] = lo[k].min(b.position[k]);
            hi[k] = hi[k].max(b.position[k]);
        }
        opacity += b.opacity;
        scale += b.scale.mean();
    }
    let mean = |v: f64| if n == 0 { 0.0 } else { v / n as f64 };
    let mut out = json!({
        "blobs": n,
        "bounds": if n == 0 { serde_json::Value::Null } else { json!({ "min": lo, "max": hi }) },
        "mean_opacity": mean(opacity),
        "mean_scale": mean(scale),
    });
    if let Some(det) = read_detections(&a.cameras, &a.boxes, &a.palette, rec)? {
        let field = build_probability_field(&scene, &det.views, &det.boxes, a.p_bg)?;
        out["field"] = json!({
            "p_bg": a.p_bg,
            "views": det.views.len(),
            "boxes": det.boxes.box_count(),
            "above_floor": field.above_floor(),
            "max": field.values.iter().cloned().fold(a.p_bg, f64::max),
            "mean": mean(field.values.iter().sum()),
        });
    }
    create_parent(&a.out)?;
    write_json(&out, &a.out)?;
    rec.output(a.out.clone());
    let cfg = json!({
        "scene": a.scene, "cameras": a.cameras, "boxes": a.boxes, "palette": a.palette,
        "p_bg": a.p_bg, "out": a.out,
    });
    rec.finish("stats", cfg, None, &a.out.with_extension("manifest.json"))
}

// ---------------------------------------------------------------- replay

fn replay(a: ReplayArgs) -> Result<()> {
    let m = read_manifest(&a.manifest)?;
    std::env::set_current_dir(&m.cwd).with_context(|| format!("entering {}", m.cwd.display()))?;
    let argv = std::iter::once("gsdet".to_string()).chain(m.args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| invalid(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(invalid("refusing to replay a replay"));
    }
    dispatch(cli, m.args.clone())?;
    let mut mismatched = Vec::new();
    for out in &m.outputs {
        let now = crate::manifest::sha256_file(&out.path)?;
        if now != out.sha256 {
            mismatched.push(out.path.display().to_string());
        }
    }
    if !mismatched.is_empty() {
        return Err(invalid(format!("replay changed {}", mismatched.join(", "))));
    }
    eprintln!("replayed {}: {} outputs identical", m.subcommand, m.outputs.len());
    Ok(())
}
