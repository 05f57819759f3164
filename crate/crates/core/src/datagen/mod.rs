//! Synthetic one-light-at-a-time datasets: a single-bounce ray tracer with
//! hard shadows, camera and light rigs, chrome-ball light calibration and
//! the on-disk dataset format.

mod chrome;
mod dataset;
mod rig;
mod scene;

pub use chrome::{chrome_ball_light_dir, ChromeBallEstimate};
pub use dataset::{
    generate_dataset, image_file_name, load_dataset, render_image, save_dataset, DatasetMeta, OlatDataset,
    BOUNDS_PADDING,
};
pub use rig::{camera_grid, camera_net_directions, light_rig_with_count, light_sphere_grid, LightRig};
pub use scene::{sha256_hex, trace_pixel, Albedo, Hit, Material, Primitive, Scene, Shape, REFERENCE_SPHERE_RADIUS};
