//! Relightable neural 4D light fields.
//!
//! A ray is identified by its intersections with two parallel planes and fed
//! to a pair of networks: one decomposes the ray into surface normal, albedo
//! and roughness, the other renders a color for a given light direction. A
//! microfacet shading model self-supervises the decomposition.
//!
//! Besides the model this crate contains everything needed to run experiments
//! on a desk: a directional-light ray tracer that synthesizes multi-view
//! one-light-at-a-time datasets, HDRI relighting from dense light sweeps,
//! image-based baselines and image metrics.

pub mod brdf;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod hdr_image;
pub mod lattice;
pub mod model;
pub mod nn;
pub mod relight;

pub use brdf::SvbrdfSample;
pub use datagen::{LightRig, OlatDataset, Scene};
pub use error::{Error, Result};
pub use eval::{MetricReport, SplitSpec};
pub use geometry::{CameraModel, CameraSpec, PlaneBounds, Ray, Ray4D, TwoPlaneConfig, Vec3};
pub use hdr_image::HdrImage;
pub use model::{ModelConfig, ModelVariant, RelitModel, TrainConfig};
pub use nn::{Activation, DenseLayer, Mlp};
pub use relight::{EnvironmentMap, OlatSweep};
