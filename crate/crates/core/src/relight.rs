//! Environment relighting from dense one-light-at-a-time sweeps.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, CameraSpec, TwoPlaneConfig, Vec3};
use crate::hdr_image::HdrImage;
use crate::model::RelitModel;

/// Equirectangular radiance map. Row 0 looks straight up (+z); column 0
/// looks along +x once `rotation` (radians about +z) is undone.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentMap {
    pub image: HdrImage,
    pub rotation: f64,
}

impl EnvironmentMap {
    pub fn new(image: HdrImage, rotation: f64) -> Result<Self> {
        let env = Self { image, rotation };
        env.validate()?;
        Ok(env)
    }

    /// A map with the same radiance in every direction.
    pub fn constant(height: usize, rgb: [f32; 3]) -> Result<Self> {
        Self::new(HdrImage::from_fn(2 * height, height, |_, _| rgb), 0.0)
    }

    pub fn load_pfm(path: &Path, rotation: f64) -> Result<Self> {
        Self::new(HdrImage::read_pfm(path)?, rotation)
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.image.width, self.image.height);
        if h == 0 || w != 2 * h {
            return Err(Error::domain(format!(
                "environment map must be twice as wide as it is tall, got {w}x{h}"
            )));
        }
        if !self.rotation.is_finite() {
            return Err(Error::domain("environment rotation must be finite"));
        }
        if self.image.pixels.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("environment radiance must be finite and non-negative"));
        }
        Ok(())
    }

    /// Continuous texel coordinates of a direction: `(u, v)` with texel
    /// centres at half-integers.
    pub fn texel_coords(&self, dir: &Vec3) -> (f64, f64) {
        let d = dir.normalize();
        let theta = d.z.clamp(-1.0, 1.0).acos();
        let phi = (d.y.atan2(d.x) - self.rotation).rem_euclid(2.0 * PI);
        let u = phi / (2.0 * PI) * self.image.width as f64;
        let v = theta / PI * self.image.height as f64;
        (u, v)
    }

    /// Bilinear radiance lookup; wraps horizontally, clamps at the poles.
    pub fn sample(&self, dir: &Vec3) -> [f64; 3] {
        let (w, h) = (self.image.width as i64, self.image.height as i64);
        let (u, v) = self.texel_coords(dir);
        let (fx, fy) = (u - 0.5, (v - 0.5).clamp(0.0, (h - 1) as f64));
        let (x0, y0) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - x0, fy - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let mut out = [0.0; 3];
        for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
            for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
                let wt = wx * wy;
                if wt == 0.0 {
                    continue;
                }
                let x = (x0 + dx).rem_euclid(w) as usize;
                let y = (y0 + dy).min(h - 1) as usize;
                let p = self.image.get(x, y);
                for c in 0..3 {
                    out[c] += wt * p[c] as f64;
                }
            }
        }
        out
    }
}

/// Radiance at each direction times an equal share `4π / n` of the sphere.
pub fn envmap_weights(env: &EnvironmentMap, directions: &[Vec3]) -> Vec<[f64; 3]> {
    let share = 4.0 * PI / directions.len().max(1) as f64;
    directions
        .iter()
        .map(|d| env.sample(d).map(|r| r * share))
        .collect()
}

/// Zeroes the weights of directions below the horizon (`z < 0`), which the
/// model never saw during training. Returns how many were zeroed.
pub fn mask_back_hemisphere(weights: &mut [[f64; 3]], directions: &[Vec3]) -> usize {
    let mut zeroed = 0;
    for (w, d) in weights.iter_mut().zip(directions) {
        if d.z < 0.0 && w.iter().any(|x| *x != 0.0) {
            *w = [0.0; 3];
            zeroed += 1;
        }
    }
    if zeroed > 0 {
        log::warn!("zeroed {zeroed} environment weights below the horizon; the model has no lights there");
    }
    zeroed
}

/// Directions with `z >= 0`.
pub fn upper_hemisphere(directions: &[Vec3]) -> Vec<Vec3> {
    directions.iter().copied().filter(|d| d.z >= 0.0).collect()
}

/// One rendered image per light direction, all from the same camera.
#[derive(Debug, Clone, PartialEq)]
pub struct OlatSweep {
    pub directions: Vec<Vec3>,
    pub images: Vec<HdrImage>,
    pub camera: CameraModel,
}

impl OlatSweep {
    pub fn validate(&self) -> Result<()> {
        if self.directions.len() != self.images.len() {
            return Err(Error::domain("sweep needs exactly one image per direction"));
        }
        let (w, h) = (self.camera.width as usize, self.camera.height as usize);
        if self.images.iter().any(|i| i.width != w || i.height != h) {
            return Err(Error::domain("sweep images must all match the camera resolution"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// Renders `camera` under every direction with the model.
pub fn olat_sweep(
    model: &RelitModel<f32>,
    camera: &CameraModel,
    cfg: &TwoPlaneConfig,
    directions: &[Vec3],
) -> Result<OlatSweep> {
    let images = model.render_images(camera, cfg, directions)?;
    Ok(OlatSweep {
        directions: directions.to_vec(),
        images,
        camera: camera.clone(),
    })
}

/// `sum_i weight_i * image_i`, accumulated in index order, clamped at zero.
pub fn relight_hdri(sweep: &OlatSweep, weights: &[[f64; 3]]) -> Result<HdrImage> {
    sweep.validate()?;
    if weights.len() != sweep.images.len() {
        return Err(Error::domain(format!(
            "{} weights for a sweep of {} images",
            weights.len(),
            sweep.images.len()
        )));
    }
    let (w, h) = (sweep.camera.width as usize, sweep.camera.height as usize);
    let mut acc = vec![[0.0f64; 3]; w * h];
    for (img, wt) in sweep.images.iter().zip(weights) {
        if wt.iter().all(|x| *x == 0.0) {
            continue;
        }
        for (a, p) in acc.iter_mut().zip(&img.pixels) {
            for c in 0..3 {
                a[c] += wt[c] * p[c] as f64;
            }
        }
    }
    Ok(HdrImage {
        width: w,
        height: h,
        pixels: acc.into_iter().map(|a| a.map(|v| v.max(0.0) as f32)).collect(),
    })
}

/// Display copy: exposure multiply followed by the sRGB transfer curve.
pub fn tone_map(image: &HdrImage, exposure: f32) -> Vec<u8> {
    image.to_srgb8(exposure)
}

const SWEEP_INFO: &str = "sweep.json";
const DIRECTIONS_TABLE: &str = "directions.csv";

pub fn sweep_image_name(i: usize) -> String {
    format!("olat_{i:05}.pfm")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepInfo {
    key: String,
    count: usize,
    camera: CameraSpec,
}

/// Writes the stack as numbered PFMs plus a directions table. `key`
/// identifies what produced the sweep so a cache can be validated.
pub fn save_sweep(sweep: &OlatSweep, dir: &Path, key: &str) -> Result<()> {
    sweep.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, img) in sweep.images.iter().enumerate() {
        img.write_pfm(&dir.join(sweep_image_name(i)))?;
    }
    let mut table = String::from("index,x,y,z\n");
    for (i, d) in sweep.directions.iter().enumerate() {
        let _ = writeln!(table, "{i},{},{},{}", d.x, d.y, d.z);
    }
    let path = dir.join(DIRECTIONS_TABLE);
    std::fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    let info = SweepInfo {
        key: key.to_string(),
        count: sweep.len(),
        camera: CameraSpec::from(&sweep.camera),
    };
    let path = dir.join(SWEEP_INFO);
    let text = serde_json::to_string_pretty(&info).expect("sweep info serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads a sweep written by [`save_sweep`] and returns it with its key.
pub fn load_sweep(dir: &Path) -> Result<(OlatSweep, String)> {
    let path = dir.join(SWEEP_INFO);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let info: SweepInfo = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))?;

    let path = dir.join(DIRECTIONS_TABLE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut directions = Vec::with_capacity(info.count);
    for (line_no, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || Error::parse(&path, format!("line {}: expected index,x,y,z", line_no + 1));
        if fields.len() != 4 || fields[0].parse::<usize>().ok() != Some(directions.len()) {
            return Err(bad());
        }
        let v: Vec<f64> = fields[1..].iter().map(|f| f.parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        directions.push(Vec3::new(v[0], v[1], v[2]));
    }
    if directions.len() != info.count {
        return Err(Error::parse(
            &path,
            format!("{} directions listed, {} expected", directions.len(), info.count),
        ));
    }
    let images = (0..info.count)
        .map(|i| HdrImage::read_pfm(&dir.join(sweep_image_name(i))))
        .collect::<Result<Vec<_>>>()?;
    let camera = info.camera.to_camera()?;
    let sweep = OlatSweep {
        directions,
        images,
        camera,
    };
    sweep.validate()?;
    Ok((sweep, info.key))
}

/// Weight table for inspection: one row per direction.
pub fn write_weights_csv(path: &Path, directions: &[Vec3], weights: &[[f64; 3]]) -> Result<()> {
    if directions.len() != weights.len() {
        return Err(Error::domain("one weight per direction is required"));
    }
    let mut s = String::from("index,x,y,z,w_r,w_g,w_b\n");
    for (i, (d, w)) in directions.iter().zip(weights).enumerate() {
        let _ = writeln!(s, "{i},{},{},{},{},{},{}", d.x, d.y, d.z, w[0], w[1], w[2]);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::geometry::PlaneBounds;
    use crate::lattice::fibonacci_sphere;
    use crate::model::{ModelConfig, ModelVariant};

    fn camera() -> CameraModel {
        CameraModel::look_at(
            Vec3::new(0.0, 0.0, 3.0),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            10.0,
            6,
            5,
        )
        .unwrap()
    }

    fn two_plane() -> TwoPlaneConfig {
        let bounds = PlaneBounds {
            min: [-2.0; 4],
            max: [2.0; 4],
        };
        TwoPlaneConfig::new(-1.0, 0.0, bounds).unwrap()
    }

    fn model() -> RelitModel<f32> {
        RelitModel::new(ModelConfig::scaled(ModelVariant::Full, 8, 2), 5).unwrap()
    }

    #[test]
    fn constant_map_gives_equal_shares() {
        let env = EnvironmentMap::constant(16, [1.0; 3]).unwrap();
        let dirs = fibonacci_sphere(2048).unwrap();
        let w = envmap_weights(&env, &dirs);
        let share = 4.0 * PI / 2048.0;
        assert!(w.iter().flatten().all(|x| (x - share).abs() < 1e-12));
        let total: f64 = w.iter().map(|x| x[0]).sum();
        assert!((total - 4.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn single_texel_is_local() {
        let mut img = HdrImage::new(16, 8);
        img.set(5, 2, [1.0; 3]);
        let env = EnvironmentMap::new(img, 0.0).unwrap();
        for d in fibonacci_sphere(500).unwrap() {
            let (u, v) = env.texel_coords(&d);
            let near = (u - 5.5).abs() < 1.0 && (v - 2.5).abs() < 1.0;
            let s = env.sample(&d)[0];
            if !near {
                assert_eq!(s, 0.0, "{u} {v}");
            }
        }
        // the texel centre itself
        let theta = 2.5 / 8.0 * PI;
        let phi = 5.5 / 16.0 * 2.0 * PI;
        let d = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
        assert!((env.sample(&d)[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_equivariance() {
        let img = HdrImage::from_fn(64, 32, |x, y| [(x as f32 * 0.3).sin().abs(), y as f32 / 32.0, 0.5]);
        let delta = 0.7;
        let env = EnvironmentMap::new(img.clone(), 0.0).unwrap();
        let rotated = EnvironmentMap::new(img, delta).unwrap();
        let rz = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), delta);
        let dirs = fibonacci_sphere(4000).unwrap();
        let turned: Vec<Vec3> = dirs.iter().map(|d| rz * d).collect();
        let a = envmap_weights(&env, &dirs);
        let b = envmap_weights(&rotated, &turned);
        for (x, y) in a.iter().zip(&b) {
            for c in 0..3 {
                assert!((x[c] - y[c]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn invalid_maps_are_rejected() {
        assert!(EnvironmentMap::new(HdrImage::new(10, 10), 0.0).is_err());
        let mut img = HdrImage::new(4, 2);
        img.set(0, 0, [-1.0, 0.0, 0.0]);
        assert!(EnvironmentMap::new(img, 0.0).is_err());
    }

    #[test]
    fn back_hemisphere_is_masked() {
        let dirs = fibonacci_sphere(100).unwrap();
        let mut w = vec![[1.0; 3]; 100];
        let zeroed = mask_back_hemisphere(&mut w, &dirs);
        assert_eq!(zeroed, dirs.iter().filter(|d| d.z < 0.0).count());
        assert!(w.iter().zip(&dirs).all(|(w, d)| d.z >= 0.0 || *w == [0.0; 3]));
        assert!(upper_hemisphere(&dirs).iter().all(|d| d.z >= 0.0));
    }

    #[test]
    fn sweep_matches_render_view_and_is_deterministic() {
        let m = model();
        let dirs = upper_hemisphere(&fibonacci_sphere(12).unwrap());
        let sweep = olat_sweep(&m, &camera(), &two_plane(), &dirs).unwrap();
        assert_eq!(sweep.len(), dirs.len());
        for (d, img) in dirs.iter().zip(&sweep.images) {
            assert_eq!(*img, m.render_view(&camera(), &two_plane(), d).unwrap().image);
        }
        assert_eq!(sweep, olat_sweep(&m, &camera(), &two_plane(), &dirs).unwrap());
    }

    #[test]
    fn relight_identity_linearity_and_zero() {
        let m = model();
        let dirs = upper_hemisphere(&fibonacci_sphere(16).unwrap());
        let sweep = olat_sweep(&m, &camera(), &two_plane(), &dirs).unwrap();
        let n = sweep.len();
        for j in 0..n {
            let mut w = vec![[0.0; 3]; n];
            w[j] = [1.0; 3];
            assert_eq!(relight_hdri(&sweep, &w).unwrap(), sweep.images[j]);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let w1: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0))).collect();
        let w2: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0))).collect();
        let sum: Vec<[f64; 3]> = w1.iter().zip(&w2).map(|(a, b)| std::array::from_fn(|c| a[c] + b[c])).collect();
        let (a, b, ab) = (
            relight_hdri(&sweep, &w1).unwrap(),
            relight_hdri(&sweep, &w2).unwrap(),
            relight_hdri(&sweep, &sum).unwrap(),
        );
        for i in 0..ab.pixels.len() {
            for c in 0..3 {
                assert!((ab.pixels[i][c] - a.pixels[i][c] - b.pixels[i][c]).abs() < 1e-6);
            }
        }
        let zero = relight_hdri(&sweep, &vec![[0.0; 3]; n]).unwrap();
        assert!(zero.pixels.iter().flatten().all(|v| *v == 0.0));
        assert!(relight_hdri(&sweep, &w1[1..]).is_err());
    }

    #[test]
    fn sweep_cache_round_trip() {
        let m = model();
        let dirs = upper_hemisphere(&fibonacci_sphere(8).unwrap());
        let sweep = olat_sweep(&m, &camera(), &two_plane(), &dirs).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        save_sweep(&sweep, tmp.path(), "abc").unwrap();
        let (back, key) = load_sweep(tmp.path()).unwrap();
        assert_eq!(key, "abc");
        assert_eq!(back, sweep);
        write_weights_csv(&tmp.path().join("w.csv"), &dirs, &vec![[1.0; 3]; dirs.len()]).unwrap();
        std::fs::remove_file(tmp.path().join(sweep_image_name(0))).unwrap();
        assert!(matches!(load_sweep(tmp.path()), Err(Error::Io { .. })));
    }
}
