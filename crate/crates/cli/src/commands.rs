use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use relit_core::datagen::{
    camera_grid, chrome_ball_light_dir, generate_dataset, light_rig_with_count, light_sphere_grid, load_dataset,
    save_dataset, sha256_hex, OlatDataset, Scene,
};
use relit_core::eval::{evaluate, Method, ReportContext};
use relit_core::lattice::fibonacci_sphere;
use relit_core::model::{write_history, LmTarget, NormalDecode};
use relit_core::relight::{
    envmap_weights, load_sweep, mask_back_hemisphere, olat_sweep, save_sweep, write_weights_csv,
    EnvironmentMap,
};
use relit_core::{
    CameraModel, CameraSpec, HdrImage, ModelConfig, ModelVariant, RelitModel, SplitSpec, TrainConfig, TwoPlaneConfig,
    Vec3,
};

use crate::{CalibArgs, ConvertArgs, EvalArgs, GenDataArgs, RelightArgs, RenderArgs, SynthEnvArgs, TrainArgs};

const DEFAULT_LIGHTS: usize = 16;
const SPLIT_FILE: &str = "split.json";

/// What a checkpoint needs to render views of the scene it was trained on.
#[derive(Debug, Serialize, Deserialize)]
struct TrainedOn {
    two_plane: TwoPlaneConfig,
    cameras: Vec<CameraSpec>,
    split: SplitSpec,
    train: TrainConfig,
    scene_hash: String,
    data_seed: u64,
}

fn load_model(path: &Path) -> Result<(RelitModel<f32>, TrainedOn)> {
    let (model, extra) =
        RelitModel::<f32>::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let trained: TrainedOn = serde_json::from_value(extra)
        .with_context(|| format!("{} lacks the training metadata written by `relit train`", path.display()))?;
    Ok((model, trained))
}

fn camera_by_id(trained: &TrainedOn, id: usize) -> Result<CameraModel> {
    let spec = trained
        .cameras
        .get(id)
        .with_context(|| format!("camera {id} does not exist ({} cameras)", trained.cameras.len()))?;
    Ok(spec.to_camera()?)
}

fn unit(v: &[f64], what: &str) -> Result<Vec3> {
    ensure!(v.len() == 3, "{what} needs three components");
    let d = Vec3::new(v[0], v[1], v[2]);
    ensure!(d.norm() > 1e-12 && d.iter().all(|x| x.is_finite()), "{what} must be a non-zero finite vector");
    Ok(d.normalize())
}

fn is_pfm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
}

fn write_image(path: &Path, img: &HdrImage, exposure: f32) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    if is_pfm(path) {
        img.write_pfm(path)?;
    } else {
        img.write_png(path, exposure)?;
    }
    Ok(())
}

fn split_for(data: &OlatDataset, file: Option<&Path>) -> Result<SplitSpec> {
    match file {
        Some(p) => Ok(SplitSpec::load(p)?),
        None => data.split.clone().context("dataset has no stored split; pass --split"),
    }
}

fn git_commit() -> Option<String> {
    let out = std::process::Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let (w, h) = (a.res[0], a.res[1]);
    let scene = Scene::by_name(&a.scene)?;
    let focal = a.focal.unwrap_or(1.5 * w as f64);
    let target = Vec3::new(0.0, 0.0, relit_core::datagen::REFERENCE_SPHERE_RADIUS);
    let cameras = camera_grid(a.views, a.view_spacing, a.radius, target, w, h, focal)?;
    let hemisphere = !a.full_sphere;
    let rig = match (a.lights, a.light_spacing) {
        (Some(n), spacing) => {
            if spacing.is_some() {
                warn!("--lights given; ignoring --light-spacing");
            }
            light_rig_with_count(n, hemisphere)?
        }
        (None, Some(s)) => light_sphere_grid(s, hemisphere)?,
        (None, None) => light_rig_with_count(DEFAULT_LIGHTS, hemisphere)?,
    };
    info!(
        "rendering {} cameras x {} lights at {w}x{h} ({})",
        cameras.len(),
        rig.len(),
        scene.name
    );
    let start = Instant::now();
    let mut data = generate_dataset(&scene, &cameras, &rig, a.seed)?;
    let split = SplitSpec::random(cameras.len(), rig.len(), a.holdout_views, a.holdout_lights, a.seed)?;
    data.split = Some(split.clone());
    save_dataset(&data, &a.out)?;
    split.save(&a.out.join(SPLIT_FILE))?;
    println!(
        "wrote {} images to {} in {:.1}s (held out views {:?}, lights {:?})",
        data.images.len(),
        a.out.display(),
        start.elapsed().as_secs_f64(),
        split.held_out_views,
        split.held_out_lights
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let split = split_for(&data, a.split.as_deref())?;
    let variant: ModelVariant = a.variant.parse()?;
    let mut config = match (a.width, a.depth) {
        (None, None) => ModelConfig::new(variant),
        (w, d) => {
            let base = ModelConfig::new(variant);
            ModelConfig::scaled(variant, w.unwrap_or(base.render_width), d.unwrap_or(base.decompose_depth))
        }
    };
    config.normal_decode = a.normal_decode.parse::<NormalDecode>()?;
    config.lm_target = a.lm_target.parse::<LmTarget>()?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        lr_decay: a.lr_decay,
        batch_size: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let set = data.training_set(&split)?;
    info!("training {variant} on {} rays for {} epochs", set.len(), cfg.epochs);
    let mut model = RelitModel::<f32>::new(config, a.seed)?;
    let start = Instant::now();
    let history = model.train(&set, &cfg, |_, _| Ok(()))?;
    let elapsed = start.elapsed().as_secs_f64();

    let trained = TrainedOn {
        two_plane: data.two_plane,
        cameras: data.cameras.iter().map(CameraSpec::from).collect(),
        split,
        train: cfg,
        scene_hash: data.meta.scene_hash.clone(),
        data_seed: data.meta.seed,
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    model.save(&a.out, a.save_adam, serde_json::to_value(&trained)?)?;
    let history_path = a.history.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".history.csv");
        PathBuf::from(p)
    });
    write_history(&history_path, &history)?;
    let last = history.last().expect("history has the initial row");
    println!(
        "trained {variant} in {elapsed:.1}s: final L = {:.6} (L_p {:.6}, L_m {:.6}, L_n {:.6}); checkpoint {}, history {}",
        last.terms.total,
        last.terms.photometric,
        last.terms.microfacet,
        last.terms.normal,
        a.out.display(),
        history_path.display()
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LookAtPose {
    eye: [f64; 3],
    target: [f64; 3],
    up: [f64; 3],
    focal_px: f64,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoseFile {
    Matrices(CameraSpec),
    LookAt(LookAtPose),
}

fn load_pose(path: &Path) -> Result<CameraModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let pose: PoseFile = serde_json::from_str(&text)
        .with_context(|| format!("{} is neither a matrix camera nor a look-at pose", path.display()))?;
    Ok(match pose {
        PoseFile::Matrices(spec) => spec.to_camera()?,
        PoseFile::LookAt(p) => CameraModel::look_at(
            Vec3::from(p.eye),
            Vec3::from(p.target),
            Vec3::from(p.up),
            p.focal_px,
            p.width,
            p.height,
        )?,
    })
}

pub fn render(a: RenderArgs) -> Result<()> {
    let (model, trained) = load_model(&a.ckpt)?;
    let camera = match (a.camera_id, &a.pose) {
        (Some(id), _) => camera_by_id(&trained, id)?,
        (None, Some(p)) => load_pose(p)?,
        (None, None) => bail!("pass --camera-id or --pose"),
    };
    let l = unit(&a.light, "--light")?;
    let start = Instant::now();
    let view = model.render_view(&camera, &trained.two_plane, &l)?;
    let seconds = start.elapsed().as_secs_f64();
    let flagged = view.mask.iter().filter(|m| !**m).count();
    if flagged > 0 {
        warn!("{flagged} pixels fall outside the light-field bounds and were left black");
    }
    write_image(&a.out, &view.image, a.exposure)?;
    if let Some(dir) = &a.dump_svbrdf {
        std::fs::create_dir_all(dir)?;
        match (&view.normal, &view.albedo, &view.roughness) {
            (Some(n), Some(al), Some(r)) => {
                n.write_pfm(&dir.join("normal.pfm"))?;
                al.write_pfm(&dir.join("albedo.pfm"))?;
                r.write_pfm(&dir.join("roughness.pfm"))?;
                let shown = HdrImage {
                    width: n.width,
                    height: n.height,
                    pixels: n.pixels.iter().map(|p| p.map(|v| 0.5 * v + 0.5)).collect(),
                };
                write_linear_png(&dir.join("normal.png"), &shown)?;
                write_linear_png(&dir.join("albedo.png"), al)?;
                write_linear_png(&dir.join("roughness.png"), r)?;
            }
            _ => warn!("the {} variant has no decomposition to dump", model.config.variant),
        }
    }
    println!("rendered {} in {:.3}s", a.out.display(), seconds);
    Ok(())
}

/// Maps stored as values in [0, 1], written without the sRGB curve.
fn write_linear_png(path: &Path, img: &HdrImage) -> Result<()> {
    let srgb = HdrImage {
        width: img.width,
        height: img.height,
        pixels: img
            .pixels
            .iter()
            .map(|p| p.map(|v| srgb_inverse(v.clamp(0.0, 1.0))))
            .collect(),
    };
    srgb.write_png(path, 1.0)?;
    Ok(())
}

fn srgb_inverse(v: f32) -> f32 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn relight_hdri(a: RelightArgs) -> Result<()> {
    let (model, trained) = load_model(&a.ckpt)?;
    let camera = camera_by_id(&trained, a.camera_id)?;
    let env = EnvironmentMap::load_pfm(&a.env, a.rotation)?;
    let all = fibonacci_sphere(a.sweep_n)?;
    let mut weights = envmap_weights(&env, &all);
    if !a.full_sphere {
        mask_back_hemisphere(&mut weights, &all);
    }
    if let Some(p) = &a.weights_out {
        write_weights_csv(p, &all, &weights)?;
    }
    // directions with no weight contribute nothing; skip rendering them
    let keep: Vec<usize> = (0..all.len()).filter(|&i| weights[i] != [0.0; 3]).collect();
    let dirs: Vec<Vec3> = keep.iter().map(|&i| all[i]).collect();
    let used: Vec<[f64; 3]> = keep.iter().map(|&i| weights[i]).collect();

    let key = format!(
        "{}:camera{}:n{}:keep{}",
        sha256_hex(&std::fs::read(&a.ckpt)?),
        a.camera_id,
        a.sweep_n,
        sha256_hex(format!("{keep:?}").as_bytes())
    );
    let start = Instant::now();
    let cached = match &a.sweep_cache {
        Some(dir) if dir.join("sweep.json").exists() => match load_sweep(dir) {
            Ok((sweep, k)) if k == key => Some(sweep),
            Ok(_) => {
                info!("sweep cache {} is stale; re-rendering", dir.display());
                None
            }
            Err(e) => {
                warn!("ignoring unreadable sweep cache: {e}");
                None
            }
        },
        _ => None,
    };
    let sweep = match cached {
        Some(s) => s,
        None => {
            info!("rendering {} OLAT images", dirs.len());
            let s = olat_sweep(&model, &camera, &trained.two_plane, &dirs)?;
            if let Some(dir) = &a.sweep_cache {
                save_sweep(&s, dir, &key)?;
            }
            s
        }
    };
    let image = relit_core::relight::relight_hdri(&sweep, &used)?;
    write_image(&a.out, &image, a.exposure)?;
    if !is_pfm(&a.out) {
        write_image(&a.out.with_extension("pfm"), &image, 1.0)?;
    }
    println!(
        "relit camera {} with {} of {} directions in {:.1}s -> {}",
        a.camera_id,
        dirs.len(),
        all.len(),
        start.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(())
}

pub fn calib_light(a: CalibArgs) -> Result<()> {
    ensure!(a.ball.len() == 3, "--ball needs CX CY R");
    let data = load_dataset(&a.data)?;
    let camera = data
        .cameras
        .get(a.camera_id)
        .with_context(|| format!("camera {} does not exist", a.camera_id))?;
    let image = HdrImage::read_pfm(&a.image)?;
    let est = chrome_ball_light_dir(&image, (a.ball[0], a.ball[1]), a.ball[2], camera)?;
    let d = est.direction;
    println!(
        "light direction {:.6} {:.6} {:.6} (spot at {:.2}, {:.2}){}",
        d.x,
        d.y,
        d.z,
        est.spot.0,
        est.spot.1,
        if est.low_confidence { " LOW CONFIDENCE: highlight near the rim" } else { "" }
    );
    if let Some(id) = a.light_id {
        ensure!(id < data.lights.len(), "light {id} does not exist");
        let truth = data.lights.direction(id);
        println!("angular error vs light {id}: {:.3} deg", d.angle(&truth).to_degrees());
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let split = split_for(&data, a.split.as_deref())?;
    let mut ctx = ReportContext {
        checkpoint_sha256: None,
        git_commit: git_commit(),
    };
    let loaded;
    let method = match (&a.ckpt, a.baseline.as_deref()) {
        (Some(p), _) => {
            loaded = load_model(p)?;
            ensure!(
                loaded.1.scene_hash == data.meta.scene_hash,
                "checkpoint was trained on a different scene"
            );
            ctx.checkpoint_sha256 = Some(sha256_hex(&std::fs::read(p)?));
            Method::Model(&loaded.0)
        }
        (None, Some("nearest")) => Method::NearestLight,
        (None, Some("barycentric")) => Method::Barycentric,
        (None, Some(other)) => bail!("unknown baseline {other:?}; expected nearest or barycentric"),
        (None, None) => bail!("pass --ckpt or --baseline"),
    };
    let report = evaluate(method, &data, &split)?;
    if let Some(dir) = a.report.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    report.write_csv(&a.report, &ctx)?;
    println!(
        "{}: mean PSNR {:.3} dB, mean SSIM {:.4} over {} images",
        report.method,
        report.mean_psnr,
        report.mean_ssim,
        report.rows.len()
    );
    println!(
        "rays/second: {:.1} ({:.4} s per frame)",
        report.rays_per_second,
        report.render_seconds / report.rows.len() as f64
    );
    if report.fallbacks > 0 {
        println!("{} queries fell outside the training-light hull", report.fallbacks);
    }
    Ok(())
}

pub fn convert_rgbe(a: ConvertArgs) -> Result<()> {
    let img = HdrImage::read_rgbe(&a.input)?;
    img.write_pfm(&a.output)?;
    println!("wrote {}x{} PFM to {}", img.width, img.height, a.output.display());
    Ok(())
}

pub fn synth_env(a: SynthEnvArgs) -> Result<()> {
    ensure!(a.height > 0, "--height must be positive");
    let sun = unit(&a.sun, "--sun")?;
    let cos_size = a.sun_size.to_radians().cos();
    let (w, h) = (2 * a.height, a.height);
    let img = HdrImage::from_fn(w, h, |x, y| {
        let theta = (y as f64 + 0.5) / h as f64 * std::f64::consts::PI;
        let phi = (x as f64 + 0.5) / w as f64 * std::f64::consts::TAU;
        let d = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
        let mut rgb = if d.z >= 0.0 {
            let t = d.z;
            [0.9 - 0.5 * t, 0.95 - 0.35 * t, 1.0]
        } else {
            [0.25, 0.22, 0.2]
        };
        if d.dot(&sun) >= cos_size {
            rgb = [a.sun_intensity, a.sun_intensity * 0.95, a.sun_intensity * 0.85];
        }
        rgb.map(|v| v as f32)
    });
    EnvironmentMap::new(img.clone(), 0.0)?;
    img.write_pfm(&a.out)?;
    println!("wrote {w}x{h} environment map to {}", a.out.display());
    Ok(())
}
