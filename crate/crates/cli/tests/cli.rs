use std::path::Path;
use std::process::{Command, Output};

use relit_core::datagen::{image_file_name, load_dataset};
use relit_core::HdrImage;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("relit binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "relit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Tiny dataset and model shared by several tests.
fn tiny_setup(dir: &Path) {
    let data = dir.join("data");
    ok(&[
        "gen-data", "--views", "2", "--lights", "6", "--res", "16", "16", "--holdout-lights", "2", "--out", s(&data),
    ]);
    ok(&[
        "train", "--data", s(&data), "--epochs", "2", "--batch", "256", "--width", "8", "--depth", "2", "--out",
        s(&dir.join("m.ckpt")),
    ]);
}

#[test]
fn gen_data_writes_manifest_split_and_images() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = ok(&["gen-data", "--views", "2", "--lights", "5", "--res", "12", "10", "--out", s(&data)]);
    assert!(out.contains("wrote 20 images"), "{out}");
    assert!(data.join("manifest.json").exists());
    assert!(data.join("split.json").exists());
    let ds = load_dataset(&data).unwrap();
    assert_eq!((ds.cameras.len(), ds.lights.len(), ds.images.len()), (4, 5, 20));
    let img = HdrImage::read_pfm(&data.join("images").join(image_file_name(3, 4))).unwrap();
    assert_eq!((img.width, img.height), (12, 10));
}

#[test]
fn train_render_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    tiny_setup(tmp.path());
    let ckpt = tmp.path().join("m.ckpt");
    let history = std::fs::read_to_string(tmp.path().join("m.ckpt.history.csv")).unwrap();
    assert!(history.starts_with("epoch,L,L_p,L_m,L_n"));
    assert_eq!(history.lines().count(), 4);

    let png = tmp.path().join("r.png");
    let maps = tmp.path().join("maps");
    ok(&[
        "render", "--ckpt", s(&ckpt), "--camera-id", "1", "--light", "0", "0.3", "1", "--out", s(&png),
        "--dump-svbrdf", s(&maps),
    ]);
    assert!(png.exists());
    assert!(std::fs::read_dir(&maps).unwrap().count() >= 3);

    let pose = tmp.path().join("pose.json");
    std::fs::write(
        &pose,
        r#"{"eye": [0.2, 0.1, 3.4], "target": [0, 0, 0.45], "up": [0, 1, 0], "focal_px": 24, "width": 16, "height": 16}"#,
    )
    .unwrap();
    let pfm = tmp.path().join("pose.pfm");
    ok(&["render", "--ckpt", s(&ckpt), "--pose", s(&pose), "--light", "0", "0", "1", "--out", s(&pfm)]);
    assert_eq!(HdrImage::read_pfm(&pfm).unwrap().width, 16);

    let report = tmp.path().join("eval.csv");
    let out = ok(&["eval", "--ckpt", s(&ckpt), "--data", s(&tmp.path().join("data")), "--report", s(&report)]);
    assert!(out.contains("mean PSNR"), "{out}");
    assert!(out.contains("rays/second"), "{out}");
    let csv = std::fs::read_to_string(&report).unwrap();
    assert!(csv.contains("checkpoint_sha256="));
    // one held-out view by two held-out lights, plus the mean row
    let rows = csv.lines().filter(|l| !l.starts_with('#') && !l.starts_with("view")).count();
    assert_eq!(rows, 3);
}

#[test]
fn baselines_evaluate_without_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["gen-data", "--views", "2", "--lights", "8", "--res", "16", "16", "--out", s(&data)]);
    for b in ["nearest", "barycentric"] {
        let out = ok(&["eval", "--baseline", b, "--data", s(&data), "--report", s(&tmp.path().join(format!("{b}.csv")))]);
        assert!(out.starts_with(b), "{out}");
    }
    let bad = run(&["eval", "--baseline", "bilinear", "--data", s(&data), "--report", s(&tmp.path().join("x.csv"))]);
    assert!(!bad.status.success());
}

#[test]
fn relight_hdri_reuses_its_sweep_cache() {
    let tmp = tempfile::tempdir().unwrap();
    tiny_setup(tmp.path());
    let env = tmp.path().join("sky.pfm");
    ok(&["synth-env", "--height", "16", "--out", s(&env)]);
    let cache = tmp.path().join("cache");
    let args = |out: &Path| {
        vec![
            "relight-hdri".to_string(),
            "--ckpt".into(),
            s(&tmp.path().join("m.ckpt")).into(),
            "--env".into(),
            s(&env).into(),
            "--sweep-n".into(),
            "64".into(),
            "--camera-id".into(),
            "0".into(),
            "--sweep-cache".into(),
            s(&cache).into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let first = tmp.path().join("a.pfm");
    let second = tmp.path().join("b.pfm");
    ok(&args(&first).iter().map(String::as_str).collect::<Vec<_>>());
    assert!(cache.join("sweep.json").exists());
    ok(&args(&second).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn calib_light_recovers_a_chrome_ball_light() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&[
        "gen-data", "--scene", "chrome_ball", "--views", "1", "--lights", "4", "--res", "96", "96", "--holdout-views", "0",
        "--holdout-lights", "0", "--out", s(&data),
    ]);
    let ds = load_dataset(&data).unwrap();
    let cam = &ds.cameras[0];
    let dist = cam.center().norm();
    let radius = cam.fx() * (1.0 / dist).asin().tan();
    let (cx, cy) = cam.project(&relit_core::Vec3::zeros()).unwrap();
    let image = data.join("images").join(image_file_name(0, 0));
    let out = ok(&[
        "calib-light", "--image", s(&image), "--ball", &cx.to_string(), &cy.to_string(), &radius.to_string(),
        "--camera-id", "0", "--data", s(&data), "--light-id", "0",
    ]);
    let err: f64 = out
        .split("angular error vs light 0: ")
        .nth(1)
        .and_then(|r| r.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(err < 3.0, "{out}");
}

#[test]
fn convert_rgbe_decodes_a_flat_file() {
    let tmp = tempfile::tempdir().unwrap();
    let hdr = tmp.path().join("in.hdr");
    let mut bytes = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 2\n".to_vec();
    // (128, 64, 0, 129) decodes to (1, 0.5, 0); (128, 128, 128, 128) to 0.5 grey
    bytes.extend_from_slice(&[128, 64, 0, 129, 128, 128, 128, 128]);
    std::fs::write(&hdr, bytes).unwrap();
    let pfm = tmp.path().join("out.pfm");
    let out = ok(&["convert-rgbe", "--input", s(&hdr), "--output", s(&pfm)]);
    assert!(out.contains("2x1"), "{out}");
    let img = HdrImage::read_pfm(&pfm).unwrap();
    assert_eq!(img.get(0, 0), [1.0, 0.5, 0.0]);
    assert_eq!(img.get(1, 0), [0.5, 0.5, 0.5]);
}

#[test]
fn invalid_arguments_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    assert!(!run(&["gen-data", "--scene", "teapot", "--out", s(&out)]).status.success());
    assert!(!run(&["gen-data", "--views", "0", "--out", s(&out)]).status.success());
    assert!(!run(&["render", "--ckpt", "missing.ckpt", "--light", "0", "0", "1", "--out", "x.png"]).status.success());
    assert!(!run(&["synth-env", "--sun", "0", "0", "0", "--out", s(&out)]).status.success());
}
