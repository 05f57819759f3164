//! The relightable light-field model.
//!
//! `DecomposeNet` maps a ray to a surface description (normal, albedo,
//! roughness); `RenderNet` maps that description plus the ray and a light
//! direction to a colour. The vanilla variant skips the decomposition and
//! regresses colour from the ray and light directly.

mod loss;
mod train;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brdf::SvbrdfSample;
use crate::error::{Error, Result};
use crate::geometry::{batch_rays_for_view, CameraModel, Ray4D, TwoPlaneConfig, Vec3};
use crate::hdr_image::HdrImage;
use crate::nn::checkpoint::{self, Checkpoint};
use crate::nn::{init_params, Activation, Mlp, Scalar};

pub use loss::{CompositeLoss, LossTerms, LossWeights, ModelGrads, SampleBatch};
pub use train::{write_history, EpochLoss, TrainConfig, TrainingSet, HISTORY_HEADER};

/// Roughness used by the variant without a roughness head.
pub const FIXED_ROUGHNESS: f64 = 0.5;
/// Coordinates may exceed [-1, 1] by this much before being rejected.
pub const COORD_TOLERANCE: f64 = 1e-6;
/// Rays per inference chunk.
pub const RENDER_CHUNK: usize = 4096;
/// Initial normal-head bias per decode mode: close to +z, the side the
/// lights and cameras are on. A normal that starts facing away from every
/// light gets no gradient through the back-facing clamp and never recovers;
/// the small positive x and y keep those relu outputs off their kink.
pub const NORMAL_BIAS_INIT_RAW: [f64; 3] = [0.1, 0.1, 1.0];
pub const NORMAL_BIAS_INIT_DECODED: [f64; 3] = [0.5, 0.5, 1.0];
/// Initial albedo-head bias (mid grey).
pub const ALBEDO_BIAS_INIT: [f64; 3] = [0.5; 3];
/// Scale applied to the He-initialised head weights so the initial normals
/// and albedos stay close to the biases.
pub const HEAD_WEIGHT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Full,
    NoRoughness,
    Vanilla,
}

impl ModelVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::Full => "full",
            ModelVariant::NoRoughness => "no_roughness",
            ModelVariant::Vanilla => "vanilla",
        }
    }

    fn code(self) -> u32 {
        match self {
            ModelVariant::Full => 0,
            ModelVariant::NoRoughness => 1,
            ModelVariant::Vanilla => 2,
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ModelVariant::Full),
            "no_roughness" => Ok(ModelVariant::NoRoughness),
            "vanilla" => Ok(ModelVariant::Vanilla),
            other => Err(Error::domain(format!("unknown variant {other:?}"))),
        }
    }
}

/// How the normal head's output becomes the normal used for shading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalDecode {
    /// The head output is the normal (normalized before shading).
    #[default]
    Raw,
    /// The head output `n` encodes the normal as `2n - 1`.
    Decoded,
}

impl FromStr for NormalDecode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(NormalDecode::Raw),
            "decoded" => Ok(NormalDecode::Decoded),
            other => Err(Error::domain(format!("unknown normal decode {other:?}"))),
        }
    }
}

/// Target for the microfacet consistency term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmTarget {
    /// `M` as is, unit irradiance and no foreshortening.
    #[default]
    Exact,
    /// `M * max(N.l, 0)`, matching how the synthetic images are shaded.
    Cosine,
}

impl FromStr for LmTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(LmTarget::Exact),
            "cosine" => Ok(LmTarget::Cosine),
            other => Err(Error::domain(format!("unknown L_m target {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    pub decompose_width: usize,
    pub decompose_depth: usize,
    pub render_width: usize,
    pub render_depth: usize,
    pub tail_width: usize,
    #[serde(default)]
    pub normal_decode: NormalDecode,
    #[serde(default)]
    pub lm_target: LmTarget,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::new(ModelVariant::Full)
    }
}

impl ModelConfig {
    pub fn new(variant: ModelVariant) -> Self {
        Self {
            variant,
            decompose_width: 256,
            decompose_depth: 8,
            render_width: 128,
            render_depth: 8,
            tail_width: 64,
            normal_decode: NormalDecode::Raw,
            lm_target: LmTarget::Exact,
        }
    }

    /// Same topology with every width and depth replaced, for quick tests.
    pub fn scaled(variant: ModelVariant, width: usize, depth: usize) -> Self {
        Self {
            decompose_width: width,
            decompose_depth: depth,
            render_width: width,
            render_depth: depth,
            tail_width: width,
            ..Self::new(variant)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.decompose_width,
            self.decompose_depth,
            self.render_width,
            self.render_depth,
            self.tail_width,
        ];
        if dims.contains(&0) {
            return Err(Error::domain("model widths and depths must be non-zero"));
        }
        Ok(())
    }

    /// Packed identifier stored in checkpoint headers.
    pub fn kind_code(&self) -> u32 {
        let decode = match self.normal_decode {
            NormalDecode::Raw => 0,
            NormalDecode::Decoded => 1,
        };
        let lm = match self.lm_target {
            LmTarget::Exact => 0,
            LmTarget::Cosine => 1,
        };
        self.variant.code() | (decode << 8) | (lm << 16)
    }

    fn has_decomposition(&self) -> bool {
        self.variant != ModelVariant::Vanilla
    }

    fn has_roughness_head(&self) -> bool {
        self.variant == ModelVariant::Full
    }

    fn encoder_inputs(&self) -> usize {
        if self.has_decomposition() {
            11
        } else {
            4
        }
    }
}

/// Raw outputs of the decomposition heads for one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    /// Normal head output before decoding or normalization.
    pub normal: [f64; 3],
    /// Albedo head output (unclamped).
    pub albedo: [f64; 3],
    pub roughness: f64,
}

impl Decomposition {
    /// The (unnormalized) normal entering the shading model.
    pub fn shading_normal_raw(&self, decode: NormalDecode) -> Vec3 {
        let n = Vec3::from(self.normal);
        match decode {
            NormalDecode::Raw => n,
            NormalDecode::Decoded => n * 2.0 - Vec3::repeat(1.0),
        }
    }

    /// Unit normal used for shading and visualization.
    pub fn unit_normal(&self, decode: NormalDecode) -> Vec3 {
        let n = self.shading_normal_raw(decode);
        n / n.norm().max(crate::brdf::NORMAL_FLOOR)
    }

    /// The sample `M` is evaluated on: unit normal, albedo clamped to [0, 1].
    pub fn to_svbrdf(&self, decode: NormalDecode) -> SvbrdfSample {
        SvbrdfSample::new(
            self.unit_normal(decode),
            self.albedo.map(|a| a.clamp(0.0, 1.0)),
            self.roughness,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposeNet<T: Scalar> {
    pub trunk: Mlp<T>,
    pub normal: Mlp<T>,
    pub albedo: Mlp<T>,
    pub roughness: Option<Mlp<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderNet<T: Scalar> {
    pub encoder: Mlp<T>,
    pub tail: Mlp<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelitModel<T: Scalar> {
    pub config: ModelConfig,
    pub decompose: Option<DecomposeNet<T>>,
    pub render: RenderNet<T>,
}

/// Light-independent part of a forward pass over a set of rays.
#[derive(Debug, Clone)]
pub struct RayFeatures<T> {
    pub count: usize,
    /// `count x render_width` encoder outputs.
    pub encoded: Vec<T>,
    pub decomposition: Option<Vec<Decomposition>>,
}

/// A rendered view with per-pixel decomposition maps.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub image: HdrImage,
    /// Unit shading normals (xyz in the RGB channels); absent for vanilla.
    pub normal: Option<HdrImage>,
    pub albedo: Option<HdrImage>,
    pub roughness: Option<HdrImage>,
    /// `true` where the pixel's ray lies inside the normalization bounds.
    pub mask: Vec<bool>,
}

fn chain(sizes: &[usize]) -> Vec<usize> {
    sizes.to_vec()
}

impl<T: Scalar> RelitModel<T> {
    /// Freshly initialised model; each network gets its own derived seed.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let relu = |n| vec![Activation::Relu; n];
        let seed_of = |i: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);

        let decompose = if config.has_decomposition() {
            let w = config.decompose_width;
            let mut sizes = vec![4];
            sizes.extend(std::iter::repeat_n(w, config.decompose_depth));
            let trunk = init_params(&chain(&sizes), &relu(config.decompose_depth), seed_of(0))?;
            let mut normal = init_params(&[w, 3], &[Activation::Relu], seed_of(1))?;
            let mut albedo = init_params(&[w, 3], &[Activation::Relu], seed_of(2))?;
            let normal_bias = match config.normal_decode {
                NormalDecode::Raw => NORMAL_BIAS_INIT_RAW,
                NormalDecode::Decoded => NORMAL_BIAS_INIT_DECODED,
            };
            for (head, bias) in [(&mut normal, normal_bias), (&mut albedo, ALBEDO_BIAS_INIT)] {
                let p = &mut head.layers_mut()[0].params;
                p.weights.iter_mut().for_each(|x| *x = *x * T::from_f64(HEAD_WEIGHT_SCALE));
                p.bias = bias.iter().map(|&b| T::from_f64(b)).collect();
            }
            let roughness = if config.has_roughness_head() {
                Some(init_params(&[w, 1], &[Activation::Sigmoid], seed_of(3))?)
            } else {
                None
            };
            Some(DecomposeNet {
                trunk,
                normal,
                albedo,
                roughness,
            })
        } else {
            None
        };

        let w = config.render_width;
        let mut sizes = vec![config.encoder_inputs()];
        sizes.extend(std::iter::repeat_n(w, config.render_depth));
        let encoder = init_params(&sizes, &relu(config.render_depth), seed_of(4))?;
        let tail = init_params(
            &[w + 3, config.tail_width, 3],
            &[Activation::Sigmoid, Activation::Sigmoid],
            seed_of(5),
        )?;
        Ok(Self {
            config,
            decompose,
            render: RenderNet { encoder, tail },
        })
    }

    /// All networks in checkpoint order: trunk, normal, albedo, roughness
    /// (when present), encoder, tail.
    pub fn networks(&self) -> Vec<&Mlp<T>> {
        let mut v = Vec::with_capacity(6);
        if let Some(d) = &self.decompose {
            v.extend([&d.trunk, &d.normal, &d.albedo]);
            if let Some(r) = &d.roughness {
                v.push(r);
            }
        }
        v.push(&self.render.encoder);
        v.push(&self.render.tail);
        v
    }

    pub fn networks_mut(&mut self) -> Vec<&mut Mlp<T>> {
        let mut v = Vec::with_capacity(6);
        if let Some(d) = &mut self.decompose {
            v.push(&mut d.trunk);
            v.push(&mut d.normal);
            v.push(&mut d.albedo);
            if let Some(r) = &mut d.roughness {
                v.push(r);
            }
        }
        v.push(&mut self.render.encoder);
        v.push(&mut self.render.tail);
        v
    }

    pub fn param_count(&self) -> usize {
        self.networks().iter().map(|n| n.param_count()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> RelitModel<U> {
        RelitModel {
            config: self.config,
            decompose: self.decompose.as_ref().map(|d| DecomposeNet {
                trunk: d.trunk.cast(),
                normal: d.normal.cast(),
                albedo: d.albedo.cast(),
                roughness: d.roughness.as_ref().map(Mlp::cast),
            }),
            render: RenderNet {
                encoder: self.render.encoder.cast(),
                tail: self.render.tail.cast(),
            },
        }
    }

    /// Decomposition of a single ray. `None` for the vanilla variant.
    pub fn decompose(&self, ray: &Ray4D) -> Result<Option<Decomposition>> {
        check_ray(ray)?;
        let input = ray_input::<T>(std::slice::from_ref(ray));
        Ok(self.decompose_batch(&input, 1)?.map(|mut d| d.remove(0)))
    }

    /// Colour of `ray` under light `l` given its decomposition.
    pub fn render_ray(&self, svbrdf: Option<&Decomposition>, ray: &Ray4D, l: &Vec3) -> Result<[f64; 3]> {
        check_ray(ray)?;
        check_light(l)?;
        let uvst = ray_input::<T>(std::slice::from_ref(ray));
        let x = match (self.config.has_decomposition(), svbrdf) {
            (true, Some(d)) => encoder_input(&uvst, std::slice::from_ref(d)),
            (false, _) => uvst,
            (true, None) => return Err(Error::domain("this variant needs a decomposition to render")),
        };
        let encoded = self.render.encoder.infer(&x, 1)?;
        let rgb = self.tail_rgb(&encoded, 1, &[*l])?;
        Ok(rgb[0].map(|v| v as f64))
    }

    /// `render_ray(decompose(ray), ray, l)`, returning the decomposition too.
    pub fn predict(&self, ray: &Ray4D, l: &Vec3) -> Result<([f64; 3], Option<Decomposition>)> {
        let d = self.decompose(ray)?;
        let rgb = self.render_ray(d.as_ref(), ray, l)?;
        Ok((rgb, d))
    }

    /// Batched prediction: one light per ray.
    pub fn predict_batch(&self, rays: &[Ray4D], lights: &[Vec3]) -> Result<Vec<[f32; 3]>> {
        if rays.len() != lights.len() {
            return Err(Error::domain("one light direction per ray is required"));
        }
        lights.iter().try_for_each(check_light)?;
        let mut out = Vec::with_capacity(rays.len());
        for (rc, lc) in rays.chunks(RENDER_CHUNK).zip(lights.chunks(RENDER_CHUNK)) {
            let f = self.features(rc)?;
            out.extend(self.tail_rgb(&f.encoded, f.count, lc)?);
        }
        Ok(out)
    }

    /// Light-independent features for a set of rays.
    pub fn features(&self, rays: &[Ray4D]) -> Result<RayFeatures<T>> {
        rays.iter().try_for_each(check_ray)?;
        let n = rays.len();
        let uvst = ray_input::<T>(rays);
        let decomposition = self.decompose_batch(&uvst, n)?;
        let x = match &decomposition {
            Some(d) => encoder_input(&uvst, d),
            None => uvst,
        };
        let encoded = if n == 0 {
            Vec::new()
        } else {
            self.render.encoder.infer(&x, n)?
        };
        Ok(RayFeatures {
            count: n,
            encoded,
            decomposition,
        })
    }

    /// Colours for precomputed features under one light.
    pub fn shade_features(&self, features: &RayFeatures<T>, l: &Vec3) -> Result<Vec<[f32; 3]>> {
        check_light(l)?;
        let mut out = Vec::with_capacity(features.count);
        let w = self.config.render_width;
        for chunk in features.encoded.chunks(RENDER_CHUNK * w) {
            let n = chunk.len() / w;
            out.extend(self.tail_rgb(chunk, n, &vec![*l; n])?);
        }
        Ok(out)
    }

    /// Renders one view under light `l`.
    pub fn render_view(&self, camera: &CameraModel, cfg: &TwoPlaneConfig, l: &Vec3) -> Result<RenderedView> {
        Ok(self.render_view_lights(camera, cfg, std::slice::from_ref(l))?.remove(0))
    }

    /// Renders one view under each light in `lights`, sharing the
    /// light-independent part of the computation.
    pub fn render_view_lights(&self, camera: &CameraModel, cfg: &TwoPlaneConfig, lights: &[Vec3]) -> Result<Vec<RenderedView>> {
        lights.iter().try_for_each(check_light)?;
        let (w, h) = (camera.width as usize, camera.height as usize);
        let (idx, feats) = self.view_features(camera, cfg)?;
        let mut mask = vec![false; w * h];
        idx.iter().for_each(|&i| mask[i] = true);

        let decode = self.config.normal_decode;
        let maps = if self.decompose.is_some() {
            let mut nm = HdrImage::new(w, h);
            let mut am = HdrImage::new(w, h);
            let mut rm = HdrImage::new(w, h);
            let mut k = 0;
            for f in &feats {
                for d in f.decomposition.as_deref().unwrap_or(&[]) {
                    let i = idx[k];
                    let n = d.unit_normal(decode);
                    nm.pixels[i] = [n.x as f32, n.y as f32, n.z as f32];
                    am.pixels[i] = d.albedo.map(|a| a as f32);
                    rm.pixels[i] = [d.roughness as f32; 3];
                    k += 1;
                }
            }
            Some((nm, am, rm))
        } else {
            None
        };

        let mut views = Vec::with_capacity(lights.len());
        for l in lights {
            let mut image = HdrImage::new(w, h);
            let mut k = 0;
            for f in &feats {
                for rgb in self.shade_features(f, l)? {
                    image.pixels[idx[k]] = rgb;
                    k += 1;
                }
            }
            let (normal, albedo, roughness) = match &maps {
                Some((n, a, r)) => (Some(n.clone()), Some(a.clone()), Some(r.clone())),
                None => (None, None, None),
            };
            views.push(RenderedView {
                image,
                normal,
                albedo,
                roughness,
                mask: mask.clone(),
            });
        }
        Ok(views)
    }

    /// Images of one view under each light, shaded in parallel over lights.
    /// Pixel values are identical to [`Self::render_view_lights`].
    pub fn render_images(&self, camera: &CameraModel, cfg: &TwoPlaneConfig, lights: &[Vec3]) -> Result<Vec<HdrImage>> {
        lights.iter().try_for_each(check_light)?;
        let (w, h) = (camera.width as usize, camera.height as usize);
        let (idx, feats) = self.view_features(camera, cfg)?;
        lights
            .par_iter()
            .map(|l| {
                let mut image = HdrImage::new(w, h);
                let mut k = 0;
                for f in &feats {
                    for rgb in self.shade_features(f, l)? {
                        image.pixels[idx[k]] = rgb;
                        k += 1;
                    }
                }
                Ok(image)
            })
            .collect()
    }

    /// Pixel indices of the parameterizable rays of a view and their
    /// features, in chunks of [`RENDER_CHUNK`].
    fn view_features(&self, camera: &CameraModel, cfg: &TwoPlaneConfig) -> Result<(Vec<usize>, Vec<RayFeatures<T>>)> {
        let pixel_rays = batch_rays_for_view(camera, cfg)?;
        let mut idx = Vec::new();
        let mut rays = Vec::new();
        for (i, pr) in pixel_rays.iter().enumerate() {
            if let Ok(r) = pr.coords {
                idx.push(i);
                rays.push(r);
            }
        }
        let feats = rays.chunks(RENDER_CHUNK).map(|c| self.features(c)).collect::<Result<_>>()?;
        Ok((idx, feats))
    }

    fn decompose_batch(&self, uvst: &[T], n: usize) -> Result<Option<Vec<Decomposition>>> {
        let Some(d) = &self.decompose else {
            return Ok(None);
        };
        if n == 0 {
            return Ok(Some(Vec::new()));
        }
        let feat = d.trunk.infer(uvst, n)?;
        let normal = d.normal.infer(&feat, n)?;
        let albedo = d.albedo.infer(&feat, n)?;
        let rough = match &d.roughness {
            Some(r) => Some(r.infer(&feat, n)?),
            None => None,
        };
        Ok(Some(
            (0..n)
                .map(|i| Decomposition {
                    normal: std::array::from_fn(|c| normal[3 * i + c].as_f64()),
                    albedo: std::array::from_fn(|c| albedo[3 * i + c].as_f64()),
                    roughness: rough.as_ref().map_or(FIXED_ROUGHNESS, |r| r[i].as_f64()),
                })
                .collect(),
        ))
    }

    fn tail_rgb(&self, encoded: &[T], n: usize, lights: &[Vec3]) -> Result<Vec<[f32; 3]>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let x = tail_input(encoded, n, lights);
        let out = self.render.tail.infer(&x, n)?;
        Ok(out
            .chunks_exact(3)
            .map(|c| [c[0].as_f64() as f32, c[1].as_f64() as f32, c[2].as_f64() as f32])
            .collect())
    }

    /// Serializes the networks (optionally with optimizer state) plus a JSON
    /// metadata blob that also records the model configuration.
    pub fn to_checkpoint_bytes(&self, with_adam: bool, extra: serde_json::Value) -> Vec<u8> {
        let f32_model = self.cast::<f32>();
        let meta = serde_json::json!({ "model": self.config, "extra": extra });
        let nets = f32_model.networks();
        checkpoint::encode(self.config.kind_code(), &nets, with_adam, &meta.to_string())
    }
}

impl RelitModel<f32> {
    pub fn save(&self, path: &std::path::Path, with_adam: bool, extra: serde_json::Value) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_bytes(with_adam, extra)).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint and returns the model and the extra metadata.
    pub fn load(path: &std::path::Path) -> Result<(Self, serde_json::Value)> {
        Self::from_checkpoint(checkpoint::load(path)?, path)
    }

    pub fn from_checkpoint(ck: Checkpoint, path: &std::path::Path) -> Result<(Self, serde_json::Value)> {
        #[derive(Deserialize)]
        struct Meta {
            model: ModelConfig,
            #[serde(default)]
            extra: serde_json::Value,
        }
        let meta: Meta = serde_json::from_str(&ck.metadata)
            .map_err(|e| Error::parse(path, format!("checkpoint metadata: {e}")))?;
        let config = meta.model;
        if config.kind_code() != ck.kind {
            return Err(Error::parse(path, "checkpoint kind does not match its metadata"));
        }
        let template = RelitModel::<f32>::new(config, 0)?;
        let expected: Vec<Vec<(usize, usize, Activation)>> = template
            .networks()
            .iter()
            .map(|n| n.layers().iter().map(|l| (l.inputs(), l.outputs(), l.activation)).collect())
            .collect();
        let found: Vec<Vec<(usize, usize, Activation)>> = ck
            .networks
            .iter()
            .map(|n| n.layers().iter().map(|l| (l.inputs(), l.outputs(), l.activation)).collect())
            .collect();
        if expected != found {
            return Err(Error::parse(path, "network shapes do not match the model configuration"));
        }
        let mut nets = ck.networks.into_iter();
        let mut next = || nets.next().expect("network count checked above");
        let decompose = if config.has_decomposition() {
            Some(DecomposeNet {
                trunk: next(),
                normal: next(),
                albedo: next(),
                roughness: if config.has_roughness_head() { Some(next()) } else { None },
            })
        } else {
            None
        };
        let render = RenderNet {
            encoder: next(),
            tail: next(),
        };
        Ok((
            RelitModel {
                config,
                decompose,
                render,
            },
            meta.extra,
        ))
    }
}

fn check_ray(r: &Ray4D) -> Result<()> {
    if !r.is_normalized(COORD_TOLERANCE) {
        return Err(Error::domain(format!(
            "ray coordinates ({}, {}, {}, {}) are not normalized to [-1, 1]",
            r.u, r.v, r.s, r.t
        )));
    }
    Ok(())
}

fn check_light(l: &Vec3) -> Result<()> {
    if !l.iter().all(|c| c.is_finite()) || (l.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::domain("light direction must be a unit vector"));
    }
    Ok(())
}

fn ray_input<T: Scalar>(rays: &[Ray4D]) -> Vec<T> {
    rays.iter()
        .flat_map(|r| r.to_array().map(T::from_f64))
        .collect()
}

/// `concat(N, A, R, u, v, s, t)` per ray.
fn encoder_input<T: Scalar>(uvst: &[T], d: &[Decomposition]) -> Vec<T> {
    let mut x = Vec::with_capacity(d.len() * 11);
    for (i, di) in d.iter().enumerate() {
        x.extend(di.normal.map(T::from_f64));
        x.extend(di.albedo.map(T::from_f64));
        x.push(T::from_f64(di.roughness));
        x.extend_from_slice(&uvst[4 * i..4 * i + 4]);
    }
    x
}

/// `concat(feature, l)` per ray.
fn tail_input<T: Scalar>(encoded: &[T], n: usize, lights: &[Vec3]) -> Vec<T> {
    let w = encoded.len() / n;
    let mut x = Vec::with_capacity(n * (w + 3));
    for i in 0..n {
        x.extend_from_slice(&encoded[i * w..(i + 1) * w]);
        let l = &lights[i];
        x.extend([T::from_f64(l.x), T::from_f64(l.y), T::from_f64(l.z)]);
    }
    x
}
