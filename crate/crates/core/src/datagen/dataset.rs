use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rig::LightRig;
use super::scene::Scene;
use crate::error::{Error, Result};
use crate::eval::SplitSpec;
use crate::geometry::{
    batch_rays_for_view, compute_bounds, ray_from_pixel, CameraModel, Mat3, TwoPlaneConfig, Vec3,
};
use crate::hdr_image::HdrImage;
use crate::model::TrainingSet;

pub const MANIFEST_FORMAT: &str = "relit-olat";
pub const MANIFEST_VERSION: u32 = 1;
/// Padding added to the ray-crossing extent when computing plane bounds.
pub const BOUNDS_PADDING: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub scene_name: String,
    pub scene_hash: String,
    /// Full description, when the dataset was synthesized.
    pub scene: Option<Scene>,
}

/// Multi-view one-light-at-a-time images: one per (camera, light) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct OlatDataset {
    pub cameras: Vec<CameraModel>,
    pub lights: LightRig,
    /// Camera-major: image of camera `c` under light `l` is at `c * lights + l`.
    pub images: Vec<HdrImage>,
    pub two_plane: TwoPlaneConfig,
    pub meta: DatasetMeta,
    pub split: Option<SplitSpec>,
}

impl OlatDataset {
    pub fn image(&self, camera: usize, light: usize) -> &HdrImage {
        &self.images[camera * self.lights.len() + light]
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() || self.lights.is_empty() {
            return Err(Error::domain("a dataset needs at least one camera and one light"));
        }
        self.lights.validate()?;
        self.two_plane.validate()?;
        if self.images.len() != self.cameras.len() * self.lights.len() {
            return Err(Error::domain("dataset must hold exactly one image per (camera, light) pair"));
        }
        for (c, cam) in self.cameras.iter().enumerate() {
            cam.validate()?;
            for l in 0..self.lights.len() {
                let img = self.image(c, l);
                if img.width != cam.width as usize || img.height != cam.height as usize {
                    return Err(Error::domain(format!(
                        "image for camera {c}, light {l} does not match the camera resolution"
                    )));
                }
            }
        }
        if let Some(s) = &self.split {
            s.validate(self.cameras.len(), self.lights.len())?;
        }
        Ok(())
    }

    /// Samples from every valid pixel of the training views under the
    /// training lights. Colours are clamped to [0, 1].
    pub fn training_set(&self, split: &SplitSpec) -> Result<TrainingSet> {
        split.validate(self.cameras.len(), self.lights.len())?;
        let lights = split.training_lights(self.lights.len());
        let mut set = TrainingSet::default();
        for c in split.training_views(self.cameras.len()) {
            let rays = batch_rays_for_view(&self.cameras[c], &self.two_plane)?;
            for &l in &lights {
                let img = self.image(c, l);
                let dir = self.lights.directions[l];
                for (i, pr) in rays.iter().enumerate() {
                    let Ok(coords) = pr.coords else { continue };
                    let v = -pr.ray.direction;
                    let rgb = img.pixels[i].map(|x| x.clamp(0.0, 1.0));
                    set.push(coords.to_array(), [v.x, v.y, v.z], dir, rgb);
                }
            }
        }
        if set.is_empty() {
            return Err(Error::domain("split leaves no training rays"));
        }
        Ok(set)
    }
}

/// Renders every camera under every light. The renderer is deterministic;
/// `seed` is recorded for the splits derived from the dataset.
pub fn generate_dataset(scene: &Scene, cameras: &[CameraModel], rig: &LightRig, seed: u64) -> Result<OlatDataset> {
    if cameras.is_empty() || rig.is_empty() {
        return Err(Error::domain("need at least one camera and one light"));
    }
    scene.validate()?;
    rig.validate()?;
    cameras.iter().try_for_each(CameraModel::validate)?;
    let bounds = compute_bounds(
        cameras,
        TwoPlaneConfig::DEFAULT_Z_UV,
        TwoPlaneConfig::DEFAULT_Z_ST,
        BOUNDS_PADDING,
    )?;
    let two_plane = TwoPlaneConfig::new(TwoPlaneConfig::DEFAULT_Z_UV, TwoPlaneConfig::DEFAULT_Z_ST, bounds)?;
    let pairs: Vec<(usize, usize)> = (0..cameras.len())
        .flat_map(|c| (0..rig.len()).map(move |l| (c, l)))
        .collect();
    let images = pairs
        .par_iter()
        .map(|&(c, l)| render_image(scene, &cameras[c], &rig.direction(l)))
        .collect::<Result<Vec<_>>>()?;
    Ok(OlatDataset {
        cameras: cameras.to_vec(),
        lights: rig.clone(),
        images,
        two_plane,
        meta: DatasetMeta {
            seed,
            scene_name: scene.name.clone(),
            scene_hash: scene.hash(),
            scene: Some(scene.clone()),
        },
        split: None,
    })
}

/// Ground-truth render of one camera under light `l`.
pub fn render_image(scene: &Scene, camera: &CameraModel, l: &Vec3) -> Result<HdrImage> {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let mut img = HdrImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let ray = ray_from_pixel(camera, (x as f64 + 0.5, y as f64 + 0.5))?;
            img.set(x, y, super::trace_pixel(scene, &ray, l).map(|v| v as f32));
        }
    }
    Ok(img)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRecord {
    id: usize,
    intrinsics: [[f64; 3]; 3],
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    width: u32,
    height: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LightRecord {
    id: usize,
    direction: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageRecord {
    camera: usize,
    light: usize,
    path: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    seed: u64,
    resolution: [u32; 2],
    scene: DatasetMeta,
    two_plane: TwoPlaneConfig,
    cameras: Vec<CameraRecord>,
    lights: Vec<LightRecord>,
    images: Vec<ImageRecord>,
    #[serde(default)]
    split: Option<SplitSpec>,
}

fn rows(m: &Mat3) -> [[f64; 3]; 3] {
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

fn from_rows(r: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| r[i][j])
}

pub fn image_file_name(camera: usize, light: usize) -> String {
    format!("c{camera:03}_l{light:03}.pfm")
}

/// Writes `manifest.json` and `images/cXXX_lYYY.pfm` under `dir`.
pub fn save_dataset(dataset: &OlatDataset, dir: &Path) -> Result<()> {
    dataset.validate()?;
    let img_dir = dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut images = Vec::with_capacity(dataset.images.len());
    for c in 0..dataset.cameras.len() {
        for l in 0..dataset.lights.len() {
            let name = format!("images/{}", image_file_name(c, l));
            dataset.image(c, l).write_pfm(&dir.join(&name))?;
            images.push(ImageRecord {
                camera: c,
                light: l,
                path: name,
            });
        }
    }
    let cam0 = &dataset.cameras[0];
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        seed: dataset.meta.seed,
        resolution: [cam0.width, cam0.height],
        scene: dataset.meta.clone(),
        two_plane: dataset.two_plane,
        cameras: dataset
            .cameras
            .iter()
            .enumerate()
            .map(|(id, c)| CameraRecord {
                id,
                intrinsics: rows(&c.intrinsics),
                rotation: rows(&c.rotation),
                translation: [c.translation.x, c.translation.y, c.translation.z],
                width: c.width,
                height: c.height,
            })
            .collect(),
        lights: dataset
            .lights
            .directions
            .iter()
            .enumerate()
            .map(|(id, d)| LightRecord { id, direction: *d })
            .collect(),
        images,
        split: dataset.split.clone(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads a dataset written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<OlatDataset> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::parse(&path, format!("line {} column {}: {e}", e.line(), e.column())))?;
    let bad = |msg: String| Error::parse(&path, msg);
    if m.format != MANIFEST_FORMAT {
        return Err(bad(format!("field `format`: expected {MANIFEST_FORMAT:?}, found {:?}", m.format)));
    }
    if m.version != MANIFEST_VERSION {
        return Err(bad(format!("field `version`: unsupported version {}", m.version)));
    }
    for (i, c) in m.cameras.iter().enumerate() {
        if c.id != i {
            return Err(bad(format!("field `cameras[{i}].id`: expected {i}, found {}", c.id)));
        }
    }
    for (i, l) in m.lights.iter().enumerate() {
        if l.id != i {
            return Err(bad(format!("field `lights[{i}].id`: expected {i}, found {}", l.id)));
        }
    }
    let cameras: Vec<CameraModel> = m
        .cameras
        .iter()
        .map(|c| CameraModel {
            intrinsics: from_rows(&c.intrinsics),
            rotation: from_rows(&c.rotation),
            translation: Vec3::from(c.translation),
            width: c.width,
            height: c.height,
        })
        .collect();
    let lights = LightRig {
        directions: m.lights.iter().map(|l| l.direction).collect(),
    };
    let (nc, nl) = (cameras.len(), lights.len());
    let mut by_pair: BTreeMap<(usize, usize), PathBuf> = BTreeMap::new();
    for (i, rec) in m.images.iter().enumerate() {
        if rec.camera >= nc || rec.light >= nl {
            return Err(bad(format!(
                "field `images[{i}]`: camera {} / light {} out of range",
                rec.camera, rec.light
            )));
        }
        if by_pair.insert((rec.camera, rec.light), dir.join(&rec.path)).is_some() {
            return Err(bad(format!(
                "field `images[{i}]`: duplicate entry for camera {}, light {}",
                rec.camera, rec.light
            )));
        }
    }
    if by_pair.len() != nc * nl {
        let missing = (0..nc)
            .flat_map(|c| (0..nl).map(move |l| (c, l)))
            .find(|p| !by_pair.contains_key(p))
            .expect("some pair is missing");
        return Err(bad(format!(
            "field `images`: no entry for camera {}, light {}",
            missing.0, missing.1
        )));
    }
    let mut images = Vec::with_capacity(nc * nl);
    for ((c, l), p) in &by_pair {
        let img = HdrImage::read_pfm(p).map_err(|e| match e {
            Error::Io { path, source } => Error::Io {
                path,
                source: std::io::Error::new(source.kind(), format!("image for camera {c}, light {l}: {source}")),
            },
            other => other,
        })?;
        images.push(img);
    }
    let ds = OlatDataset {
        cameras,
        lights,
        images,
        two_plane: m.two_plane,
        meta: m.scene,
        split: m.split,
    };
    ds.validate().map_err(|e| bad(e.to_string()))?;
    Ok(ds)
}
