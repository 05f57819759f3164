//! End-to-end acceptance run on the reference desk-scale dataset: one scene,
//! 3x3 cameras at 10 degrees, 16 hemisphere lights, 64x64, seed 42, 30 epochs.
//!
//! Prints one PASS/FAIL line per criterion and fails if any criterion fails.
//! The full run trains three models and takes roughly 45 minutes on one core.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relit_core::brdf::{
    fresnel_schlick_approx, geometry_smith, microfacet_eval, ndf_ggx, SvbrdfSample, FRESNEL_F0, R_MIN,
};
use relit_core::datagen::{
    chrome_ball_light_dir, load_dataset, render_image, Scene, REFERENCE_SPHERE_RADIUS,
};
use relit_core::geometry::ray_from_pixel;
use relit_core::lattice::fibonacci_sphere;
use relit_core::model::{CompositeLoss, LmTarget, LossWeights, TrainingSet};
use relit_core::nn::{grad_check, half_squared_error, GradCheckOptions, MlpObjective};
use relit_core::relight::{envmap_weights, olat_sweep, relight_hdri, upper_hemisphere, EnvironmentMap};
use relit_core::{CameraModel, ModelConfig, ModelVariant, RelitModel, Vec3};

const SEED: &str = "42";
const EPOCHS: &str = "30";
/// Extra `train` flags for the decomposing variants.
const DECOMPOSE_FLAGS: &[&str] = &["--lm-target", "cosine"];
/// Epochs for the two repeated runs of the determinism check.
const DETERMINISM_EPOCHS: &str = "2";

struct Outcome {
    results: Vec<(usize, bool, String)>,
}

impl Outcome {
    fn record(&mut self, id: usize, pass: bool, detail: String) {
        println!("criterion {id}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((id, pass, detail));
    }
}

fn relit(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_relit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("relit binary runs");
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "relit {args:?} failed:\n{stdout}\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn gen_reference(dir: &Path) {
    relit(&[
        "gen-data", "--scene", "reference", "--views", "3", "--view-spacing", "10", "--lights", "16", "--res", "64",
        "64", "--seed", SEED, "--out", s(dir),
    ]);
}

fn train(data: &Path, variant: &str, epochs: &str, out: &Path) {
    let mut args = vec![
        "train", "--data", s(data), "--variant", variant, "--epochs", epochs, "--batch", "8192", "--lr", "3e-4",
        "--lr-decay", "0.995", "--seed", SEED, "--out", s(out),
    ];
    if variant != "vanilla" {
        args.extend_from_slice(DECOMPOSE_FLAGS);
    }
    relit(&args);
}

/// Runs `eval` and returns (mean PSNR, stdout).
fn eval(data: &Path, method: &[&str], report: &Path) -> (f64, String) {
    let mut args = vec!["eval", "--data", s(data), "--report", s(report)];
    args.extend_from_slice(method);
    let stdout = relit(&args);
    let psnr = stdout
        .split("mean PSNR ")
        .nth(1)
        .and_then(|r| r.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("no PSNR in {stdout}"));
    (psnr, stdout)
}

fn metric_columns(report: &Path) -> String {
    let text = std::fs::read_to_string(report).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').take(4).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

// criterion 1
fn gradient_correctness(o: &mut Outcome) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let opts = GradCheckOptions {
        max_per_tensor: 24,
        tolerance: 1e-4,
        ..Default::default()
    };
    let mut worst_net: f64 = 0.0;
    let (mut compared, mut kinks) = (0, 0);
    let reference: RelitModel<f64> = RelitModel::new(ModelConfig::new(ModelVariant::Full), 10).unwrap();
    for net in reference.networks() {
        let batch = 4;
        let input: Vec<f64> = (0..batch * net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..batch * net.output_dim()).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut obj = MlpObjective {
            net: net.clone(),
            input,
            batch,
            objective: half_squared_error(target),
        };
        let report = grad_check(&mut obj, &opts).unwrap();
        worst_net = worst_net.max(report.max_rel_error());
        compared += report.compared();
        kinks += report.kinks();
    }

    let mut worst_composite: f64 = 0.0;
    for variant in [ModelVariant::Full, ModelVariant::NoRoughness, ModelVariant::Vanilla] {
        let mut cfg = ModelConfig::new(variant);
        cfg.lm_target = LmTarget::Cosine;
        let model: RelitModel<f64> = RelitModel::new(cfg, 3).unwrap();
        let mut batch = TrainingSet::default();
        for _ in 0..4 {
            let uvst = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let v = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0).normalize();
            let l = Vec3::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), 1.0).normalize();
            let c = std::array::from_fn(|_| rng.random_range(0.0f32..0.8));
            batch.push(uvst, [v.x, v.y, v.z], [l.x, l.y, l.z], c);
        }
        let mut obj = CompositeLoss {
            model,
            batch,
            weights: LossWeights::default(),
        };
        let report = grad_check(
            &mut obj,
            &GradCheckOptions {
                max_per_tensor: 12,
                tolerance: 1e-3,
                ..Default::default()
            },
        )
        .unwrap();
        worst_composite = worst_composite.max(report.max_rel_error());
        compared += report.compared();
        kinks += report.kinks();
    }
    let secs = start.elapsed().as_secs_f64();
    o.record(
        1,
        worst_net < 1e-4 && worst_composite < 1e-3 && secs < 120.0,
        format!(
            "networks max rel err {worst_net:.2e} (< 1e-4), composite {worst_composite:.2e} (< 1e-3), {secs:.1}s (< 120s); \
             {compared} entries compared, {kinks} skipped at relu kinks"
        ),
    );
}

/// Independent scalar evaluation of the microfacet model.
fn oracle(n: [f64; 3], a: f64, r: f64, v: [f64; 3], l: [f64; 3]) -> (f64, f64, f64, f64) {
    let dot = |x: [f64; 3], y: [f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    let nn = dot(n, n).sqrt();
    let n = [n[0] / nn, n[1] / nn, n[2] / nn];
    let hs = [v[0] + l[0], v[1] + l[1], v[2] + l[2]];
    let hn = dot(hs, hs).sqrt();
    let h = [hs[0] / hn, hs[1] / hn, hs[2] / hn];
    let r = r.clamp(R_MIN, 1.0);
    let alpha = r * r;
    let nh = dot(n, h);
    let denom = nh * nh * (alpha * alpha - 1.0) + 1.0;
    let d = alpha * alpha / (PI * denom * denom);
    let vh = dot(v, h).clamp(0.0, 1.0);
    let f = FRESNEL_F0 + (1.0 - FRESNEL_F0) * 2f64.powf((-5.55473 * vh - 6.98316) * vh);
    let k = (r + 1.0).powi(2) / 8.0;
    let (nv, nl) = (dot(n, v), dot(n, l));
    let g = (nv / (nv * (1.0 - k) + k)) * (nl / (nl * (1.0 - k) + k));
    let m = a / PI + d * f * g / (4.0 * nl * nv);
    (d, f, g, m)
}

// criterion 2
fn microfacet_oracle(o: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let rand_dir = |rng: &mut ChaCha8Rng, zmin: f64| loop {
        let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(zmin..1.0));
        if d.norm() > 0.1 && d.norm() <= 1.0 {
            return d.normalize();
        }
    };
    let mut count = 0;
    while count < 10_000 {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let v = rand_dir(&mut rng, 0.05);
        let l = rand_dir(&mut rng, 0.05);
        if n.dot(&v) <= 1e-3 || n.dot(&l) <= 1e-3 {
            continue;
        }
        let r = rng.random_range(0.0..1.0);
        let a = rng.random_range(0.0..1.0);
        let h = (v + l).normalize();
        let (d, f, g, m) = oracle([n.x, n.y, n.z], a, r, [v.x, v.y, v.z], [l.x, l.y, l.z]);
        let got = microfacet_eval(&SvbrdfSample::new(n, [a; 3], r), &v, &l).unwrap()[0];
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1.0);
        worst = worst
            .max(rel(ndf_ggx(&h, &n, r), d))
            .max(rel(fresnel_schlick_approx(&v, &h), f))
            .max(rel(geometry_smith(&l, &v, &n, r), g))
            .max(rel(got, m));
        count += 1;
    }
    let up = Vec3::new(0.0, 0.0, 1.0);
    let worked = microfacet_eval(&SvbrdfSample::new(up, [1.0; 3], 1.0), &up, &up).unwrap()[0];
    let worked_ok = (worked - 0.32230).abs() < 5e-6;
    o.record(
        2,
        worst < 1e-9 && worked_ok,
        format!("max deviation {worst:.2e} over 10^4 configurations (< 1e-9); normal incidence A=1 R=1 -> {worked:.5} (0.32230)"),
    );
}

// criteria 3, 4, 8 and 9
fn trained_pipeline(o: &mut Outcome, root: &Path) {
    let start = Instant::now();
    let data = root.join("data");
    gen_reference(&data);
    let mut psnr = std::collections::BTreeMap::new();
    let mut model_stdout = String::new();
    for variant in ["full", "no_roughness", "vanilla"] {
        let ckpt = root.join(format!("{variant}.ckpt"));
        train(&data, variant, EPOCHS, &ckpt);
        let (p, out) = eval(&data, &["--ckpt", s(&ckpt)], &root.join(format!("{variant}.csv")));
        println!("  {variant}: {p:.3} dB");
        if variant == "full" {
            model_stdout = out;
        }
        psnr.insert(variant, p);
    }
    for (name, flag) in [("nearest", "nearest"), ("barycentric", "barycentric")] {
        let (p, _) = eval(&data, &["--baseline", flag], &root.join(format!("{name}.csv")));
        println!("  {name}: {p:.3} dB");
        psnr.insert(name, p);
    }
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let (full, nr, van) = (psnr["full"], psnr["no_roughness"], psnr["vanilla"]);
    let (near, bary) = (psnr["nearest"], psnr["barycentric"]);
    let pass = full > near && full > bary && full >= nr && nr >= van - 0.2 && minutes < 60.0;
    o.record(
        3,
        pass,
        format!(
            "PSNR full {full:.2} > nearest {near:.2} and barycentric {bary:.2}; full >= no_roughness {nr:.2} >= vanilla {van:.2} - 0.2; {minutes:.1} min (< 60)"
        ),
    );

    normal_sanity(o, &data, &root.join("full.ckpt"));

    // criterion 9: throughput line from the model evaluation
    let rays = model_stdout
        .split("rays/second: ")
        .nth(1)
        .and_then(|r| r.split_whitespace().next())
        .and_then(|v| v.parse::<f64>().ok());
    o.record(
        9,
        rays.is_some_and(|r| r > 0.0 && r.is_finite()),
        format!("eval printed rays/second = {}", rays.map_or("missing".into(), |r| format!("{r:.0}"))),
    );

    // criterion 8: two serial gen-data + train + eval runs
    let mut runs = Vec::new();
    for k in 0..2 {
        let dir = root.join(format!("det{k}"));
        let data = dir.join("data");
        gen_reference(&data);
        let ckpt = dir.join("full.ckpt");
        train(&data, "full", DETERMINISM_EPOCHS, &ckpt);
        let report = dir.join("report.csv");
        eval(&data, &["--ckpt", s(&ckpt)], &report);
        let history = std::fs::read_to_string(dir.join("full.ckpt.history.csv")).unwrap();
        runs.push((history, metric_columns(&report), std::fs::read(&ckpt).unwrap()));
    }
    let same_history = runs[0].0 == runs[1].0;
    let same_report = runs[0].1 == runs[1].1;
    let same_ckpt = runs[0].2 == runs[1].2;
    o.record(
        8,
        same_history && same_report,
        format!(
            "identical loss histories: {same_history}; identical metric reports: {same_report}; identical checkpoints: {same_ckpt} ({DETERMINISM_EPOCHS} epochs per run)"
        ),
    );
}

fn sphere_hit(cam: &CameraModel, x: u32, y: u32) -> Option<Vec3> {
    let ray = ray_from_pixel(cam, (x as f64 + 0.5, y as f64 + 0.5)).unwrap();
    let c = Vec3::new(0.0, 0.0, REFERENCE_SPHERE_RADIUS);
    let oc = ray.origin - c;
    let b = oc.dot(&ray.direction);
    let disc = b * b - (oc.norm_squared() - REFERENCE_SPHERE_RADIUS * REFERENCE_SPHERE_RADIUS);
    (disc > 0.0).then(|| {
        let t = -b - disc.sqrt();
        (ray.at(t) - c).normalize()
    })
}

// criterion 4
fn normal_sanity(o: &mut Outcome, data: &Path, ckpt: &Path) {
    let dataset = load_dataset(data).unwrap();
    let (model, _) = RelitModel::<f32>::load(ckpt).unwrap();
    let mut errors = Vec::new();
    let l = Vec3::new(0.0, 0.0, 1.0);
    for cam in &dataset.cameras {
        let view = model.render_view(cam, &dataset.two_plane, &l).unwrap();
        let normals = view.normal.expect("full model has normals");
        for y in 0..cam.height {
            for x in 0..cam.width {
                let i = (y * cam.width + x) as usize;
                if !view.mask[i] {
                    continue;
                }
                // sphere pixels lit by the overhead light
                if let Some(truth) = sphere_hit(cam, x, y).filter(|n| n.z > 0.0) {
                    let p = normals.pixels[i];
                    let pred = Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64);
                    if pred.norm() > 0.0 {
                        errors.push(pred.angle(&truth).to_degrees());
                    } else {
                        errors.push(180.0);
                    }
                }
            }
        }
    }
    errors.sort_by(f64::total_cmp);
    let median = errors[errors.len() / 2];
    o.record(
        4,
        median <= 35.0,
        format!(
            "median normal error {median:.2} deg over {} sphere pixels (gate <= 35, target <= 25: {})",
            errors.len(),
            if median <= 25.0 { "met" } else { "not met" }
        ),
    );
}

// criterion 5
fn hdri_linearity(o: &mut Outcome, root: &Path) {
    let data = root.join("data");
    let dataset = load_dataset(&data).unwrap();
    let (model, _) = RelitModel::<f32>::load(&root.join("full.ckpt")).unwrap();
    let dirs = upper_hemisphere(&fibonacci_sphere(64).unwrap());
    let sweep = olat_sweep(&model, &dataset.cameras[0], &dataset.two_plane, &dirs).unwrap();
    let n = sweep.len();
    let mut one_hot = true;
    for j in 0..n {
        let mut w = vec![[0.0; 3]; n];
        w[j] = [1.0; 3];
        one_hot &= relight_hdri(&sweep, &w).unwrap() == sweep.images[j];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let w1: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0.0..0.2))).collect();
        let w2: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0.0..0.2))).collect();
        let sum: Vec<[f64; 3]> = w1.iter().zip(&w2).map(|(a, b)| std::array::from_fn(|c| a[c] + b[c])).collect();
        let a = relight_hdri(&sweep, &w1).unwrap();
        let b = relight_hdri(&sweep, &w2).unwrap();
        let ab = relight_hdri(&sweep, &sum).unwrap();
        for i in 0..ab.pixels.len() {
            for c in 0..3 {
                worst = worst.max((ab.pixels[i][c] as f64 - a.pixels[i][c] as f64 - b.pixels[i][c] as f64).abs());
            }
        }
    }
    let env = EnvironmentMap::constant(32, [1.0; 3]).unwrap();
    let total: f64 = envmap_weights(&env, &fibonacci_sphere(2048).unwrap()).iter().map(|w| w[0]).sum();
    let rel = (total - 4.0 * PI).abs() / (4.0 * PI);
    o.record(
        5,
        one_hot && worst < 1e-6 && rel < 0.01,
        format!("one-hot bit-exact: {one_hot}; linearity error {worst:.2e} (< 1e-6); constant-white weight sum {total:.5} vs 4pi (rel {rel:.1e} < 1%)"),
    );
}

// criterion 6
fn chrome_ball(o: &mut Outcome) {
    let f = 300.0;
    let cam = CameraModel::look_at(
        Vec3::new(0.0, 0.0, 4.0),
        Vec3::zeros(),
        Vec3::new(0.0, 1.0, 0.0),
        f,
        200,
        200,
    )
    .unwrap();
    let radius_px = f * (0.25f64).asin().tan();
    let scene = Scene::chrome_ball();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut errs = Vec::new();
    while errs.len() < 20 {
        let l = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0));
        if l.norm() > 1.0 || l.norm() < 0.2 || l.z <= 0.0 {
            continue;
        }
        let l = l.normalize();
        let img = render_image(&scene, &cam, &l).unwrap();
        let est = chrome_ball_light_dir(&img, (100.0, 100.0), radius_px, &cam).unwrap();
        errs.push(est.direction.angle(&l).to_degrees());
    }
    errs.sort_by(f64::total_cmp);
    let median = 0.5 * (errs[9] + errs[10]);
    o.record(
        6,
        median < 2.0,
        format!("median recovery error {median:.3} deg over 20 lights (< 2)"),
    );
}

// criterion 7
fn shadow_geometry(o: &mut Outcome) {
    let scene = Scene::reference();
    let c = Vec3::new(0.0, 0.0, REFERENCE_SPHERE_RADIUS);
    let r = REFERENCE_SPHERE_RADIUS;
    let cam = CameraModel::look_at(
        Vec3::new(0.4, -0.6, 3.0),
        Vec3::new(0.3, 0.2, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        110.0,
        128,
        128,
    )
    .unwrap();
    let mut worst_miss = 0usize;
    let mut checked = 0usize;
    for l in [Vec3::new(0.5, 0.3, 1.0), Vec3::new(-0.4, 0.6, 0.8), Vec3::new(0.1, -0.2, 1.0)] {
        let l = l.normalize();
        let img = render_image(&scene, &cam, &l).unwrap();
        let (w, h) = (cam.width as usize, cam.height as usize);
        // analytic classification of every pixel: None = not the ground plane
        let mut class = vec![None; w * h];
        for y in 0..h {
            for x in 0..w {
                if sphere_hit(&cam, x as u32, y as u32).is_some() {
                    continue;
                }
                let ray = ray_from_pixel(&cam, (x as f64 + 0.5, y as f64 + 0.5)).unwrap();
                if ray.direction.z >= 0.0 {
                    continue;
                }
                let p = ray.at(-ray.origin.z / ray.direction.z);
                // inside the shadow cylinder of the sphere along l, on the lit side
                let q = p - c;
                let along = q.dot(&l);
                let dist = (q - l * along).norm();
                class[y * w + x] = Some(along < 0.0 && dist < r);
            }
        }
        for y in 0..h {
            for x in 0..w {
                let Some(analytic) = class[y * w + x] else { continue };
                checked += 1;
                let rendered = img.get(x, y).iter().all(|v| *v == 0.0);
                if rendered == analytic {
                    continue;
                }
                // a disagreement is allowed only next to the analytic boundary
                let mut near_boundary = false;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        if class[ny as usize * w + nx as usize] == Some(!analytic) {
                            near_boundary = true;
                        }
                    }
                }
                if !near_boundary {
                    worst_miss += 1;
                }
            }
        }
    }
    o.record(
        7,
        worst_miss == 0 && checked > 0,
        format!("{worst_miss} ground-plane pixels disagree with the analytic shadow ellipse by more than 1 px ({checked} checked, 128x128)"),
    );
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let root: PathBuf = tmp.path().to_path_buf();
    let mut o = Outcome { results: Vec::new() };
    gradient_correctness(&mut o);
    microfacet_oracle(&mut o);
    chrome_ball(&mut o);
    shadow_geometry(&mut o);
    trained_pipeline(&mut o, &root);
    hdri_linearity(&mut o, &root);

    o.results.sort_by_key(|r| r.0);
    println!("\nacceptance summary");
    for (id, pass, detail) in &o.results {
        println!("  criterion {id}: {} {detail}", if *pass { "PASS" } else { "FAIL" });
    }
    let failed: Vec<usize> = o.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
