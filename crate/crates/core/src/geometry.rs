//! Pinhole cameras and the two-plane light-field parameterization.
//!
//! World frame is right-handed with +z up. The scene sits around the origin
//! and cameras look down at it from the z > 0 hemisphere. A ray is identified
//! by where its supporting line crosses the planes `z = z_uv` and `z = z_st`;
//! the four raw coordinates are mapped affinely into `[-1, 1]` by per-axis
//! bounds stored with the dataset.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const PARALLEL_EPS: f64 = 1e-9;
const BOUNDS_SLACK: f64 = 1e-9;

/// Pinhole camera. `rotation`/`translation` map world to camera coordinates
/// (`x_cam = R x_world + t`); the camera looks down its +z axis with +x to
/// the right and +y down the image.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub intrinsics: Mat3,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    /// Builds a zero-skew camera at `eye` looking at `target`. `up` picks
    /// which world direction appears at the top of the image.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        focal_px: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("camera resolution must be non-zero"));
        }
        if !(focal_px > 0.0) {
            return Err(Error::domain("focal length must be positive"));
        }
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::domain("camera eye coincides with its target"));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(Error::domain("camera up vector is parallel to the viewing direction"));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        let intrinsics = Mat3::new(
            focal_px,
            0.0,
            width as f64 / 2.0,
            0.0,
            focal_px,
            height as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        );
        Ok(Self {
            intrinsics,
            rotation,
            translation,
            width,
            height,
        })
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Viewing axis in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    pub fn fx(&self) -> f64 {
        self.intrinsics[(0, 0)]
    }

    pub fn fy(&self) -> f64 {
        self.intrinsics[(1, 1)]
    }

    pub fn validate(&self) -> Result<()> {
        let rtr = self.rotation.transpose() * self.rotation;
        if (rtr - Mat3::identity()).abs().max() > 1e-9 {
            return Err(Error::domain("camera rotation is not orthonormal"));
        }
        if self.rotation.determinant() < 0.0 {
            return Err(Error::domain("camera rotation is a reflection"));
        }
        let k = &self.intrinsics;
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) || k[(0, 1)] != 0.0 {
            return Err(Error::domain("intrinsics must have positive focal lengths and zero skew"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::domain("camera resolution must be non-zero"));
        }
        Ok(())
    }

    /// Projects a world point to continuous pixel coordinates. Returns `None`
    /// for points at or behind the camera plane.
    pub fn project(&self, point: &Vec3) -> Option<(f64, f64)> {
        let pc = self.rotation * point + self.translation;
        if pc.z <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        Some((
            k[(0, 0)] * pc.x / pc.z + k[(0, 2)],
            k[(1, 1)] * pc.y / pc.z + k[(1, 2)],
        ))
    }
}

/// Plain-array form of a camera, used in manifests, checkpoints and pose files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    /// Row-major.
    pub intrinsics: [[f64; 3]; 3],
    /// Row-major, world to camera.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub width: u32,
    pub height: u32,
}

impl From<&CameraModel> for CameraSpec {
    fn from(c: &CameraModel) -> Self {
        let rows = |m: &Mat3| std::array::from_fn(|r| std::array::from_fn(|k| m[(r, k)]));
        Self {
            intrinsics: rows(&c.intrinsics),
            rotation: rows(&c.rotation),
            translation: [c.translation.x, c.translation.y, c.translation.z],
            width: c.width,
            height: c.height,
        }
    }
}

impl CameraSpec {
    pub fn to_camera(&self) -> Result<CameraModel> {
        let mat = |m: &[[f64; 3]; 3]| Mat3::from_fn(|r, k| m[r][k]);
        let cam = CameraModel {
            intrinsics: mat(&self.intrinsics),
            rotation: mat(&self.rotation),
            translation: Vec3::from(self.translation),
            width: self.width,
            height: self.height,
        };
        cam.validate()?;
        Ok(cam)
    }
}

/// A half-line with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; fails on a zero or non-finite direction.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() || !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::domain("ray needs a finite origin and non-zero direction"));
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Back-projects a continuous pixel position. Pixel `(i, j)` covers
/// `[i, i+1) x [j, j+1)`, so its center is `(i + 0.5, j + 0.5)`.
pub fn ray_from_pixel(camera: &CameraModel, pixel: (f64, f64)) -> Result<Ray> {
    let (px, py) = pixel;
    if !(px >= 0.0 && px < camera.width as f64 && py >= 0.0 && py < camera.height as f64) {
        return Err(Error::domain(format!(
            "pixel ({px}, {py}) outside image {}x{}",
            camera.width, camera.height
        )));
    }
    let k = &camera.intrinsics;
    let x = (px - k[(0, 2)]) / k[(0, 0)];
    let y = (py - k[(1, 2)]) / k[(1, 1)];
    let dir_cam = Vec3::new(x, y, 1.0);
    let dir_world = camera.rotation.transpose() * dir_cam;
    Ray::new(camera.center(), dir_world)
}

/// Per-axis normalization bounds for `(u, v, s, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneBounds {
    pub min: [f64; 4],
    pub max: [f64; 4],
}

impl PlaneBounds {
    pub fn identity() -> Self {
        Self {
            min: [-1.0; 4],
            max: [1.0; 4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for axis in 0..4 {
            if !(self.min[axis] < self.max[axis]) || !self.min[axis].is_finite() || !self.max[axis].is_finite() {
                return Err(Error::domain(format!("bounds axis {axis}: min must be < max")));
            }
        }
        Ok(())
    }

    pub fn normalize(&self, raw: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| 2.0 * (raw[i] - self.min[i]) / (self.max[i] - self.min[i]) - 1.0)
    }

    pub fn denormalize(&self, unit: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| self.min[i] + 0.5 * (unit[i] + 1.0) * (self.max[i] - self.min[i]))
    }

    /// Grows each axis by `fraction` of its extent on both sides.
    pub fn padded(&self, fraction: f64) -> Self {
        let mut out = *self;
        for i in 0..4 {
            let pad = (self.max[i] - self.min[i]) * fraction;
            out.min[i] -= pad;
            out.max[i] += pad;
        }
        out
    }
}

/// Placement of the two parameterization planes plus normalization bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPlaneConfig {
    pub z_uv: f64,
    pub z_st: f64,
    pub bounds: PlaneBounds,
}

impl TwoPlaneConfig {
    pub const DEFAULT_Z_UV: f64 = -1.0;
    pub const DEFAULT_Z_ST: f64 = 0.0;

    pub fn new(z_uv: f64, z_st: f64, bounds: PlaneBounds) -> Result<Self> {
        let cfg = Self { z_uv, z_st, bounds };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.z_uv == self.z_st || !self.z_uv.is_finite() || !self.z_st.is_finite() {
            return Err(Error::domain("uv and st planes must be distinct"));
        }
        self.bounds.validate()
    }
}

/// A ray in normalized two-plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray4D {
    pub u: f64,
    pub v: f64,
    pub s: f64,
    pub t: f64,
}

impl Ray4D {
    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            u: a[0],
            v: a[1],
            s: a[2],
            t: a[3],
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.u, self.v, self.s, self.t]
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.to_array().iter().all(|c| c.is_finite() && c.abs() <= 1.0 + tol)
    }
}

/// Why a pixel's ray has no usable light-field coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayReject {
    Degenerate,
    Behind,
    OutOfBounds,
}

impl From<RayReject> for Error {
    fn from(r: RayReject) -> Self {
        match r {
            RayReject::Degenerate => Error::DegenerateRay,
            RayReject::Behind => Error::BehindPlanes,
            RayReject::OutOfBounds => Error::OutOfBounds {
                axis: 0,
                value: f64::NAN,
            },
        }
    }
}

/// Unnormalized `(x, y)` crossings of the ray with the uv and st planes.
pub fn plane_intersections(ray: &Ray, z_uv: f64, z_st: f64) -> Result<[f64; 4]> {
    let dz = ray.direction.z;
    if dz.abs() < PARALLEL_EPS {
        return Err(Error::DegenerateRay);
    }
    let t_uv = (z_uv - ray.origin.z) / dz;
    let t_st = (z_st - ray.origin.z) / dz;
    if t_uv < -BOUNDS_SLACK || t_st < -BOUNDS_SLACK {
        return Err(Error::BehindPlanes);
    }
    let p_uv = ray.at(t_uv);
    let p_st = ray.at(t_st);
    Ok([p_uv.x, p_uv.y, p_st.x, p_st.y])
}

/// Maps a ray to normalized `(u, v, s, t)`.
pub fn two_plane_param(ray: &Ray, cfg: &TwoPlaneConfig) -> Result<Ray4D> {
    let raw = plane_intersections(ray, cfg.z_uv, cfg.z_st)?;
    let unit = cfg.bounds.normalize(raw);
    for (axis, &value) in unit.iter().enumerate() {
        if !(value.abs() <= 1.0 + BOUNDS_SLACK) {
            return Err(Error::OutOfBounds { axis, value });
        }
    }
    Ok(Ray4D::from_array(unit.map(|c| c.clamp(-1.0, 1.0))))
}

/// Rebuilds a world-space ray from normalized coordinates. The origin lies
/// on the uv plane and the direction points toward the st crossing.
pub fn ray_from_ray4d(coords: &Ray4D, cfg: &TwoPlaneConfig) -> Result<Ray> {
    let raw = cfg.bounds.denormalize(coords.to_array());
    let p_uv = Vec3::new(raw[0], raw[1], cfg.z_uv);
    let p_st = Vec3::new(raw[2], raw[3], cfg.z_st);
    Ray::new(p_uv, p_st - p_uv)
}

/// One pixel's ray and its light-field coordinate or rejection reason.
#[derive(Debug, Clone, Copy)]
pub struct PixelRay {
    pub x: u32,
    pub y: u32,
    pub ray: Ray,
    pub coords: std::result::Result<Ray4D, RayReject>,
}

impl PixelRay {
    pub fn is_flagged(&self) -> bool {
        self.coords.is_err()
    }
}

fn classify(ray: &Ray, cfg: &TwoPlaneConfig) -> std::result::Result<Ray4D, RayReject> {
    match two_plane_param(ray, cfg) {
        Ok(r) => Ok(r),
        Err(Error::DegenerateRay) => Err(RayReject::Degenerate),
        Err(Error::BehindPlanes) => Err(RayReject::Behind),
        Err(_) => Err(RayReject::OutOfBounds),
    }
}

/// Rays through every pixel center, row-major. Rays that cannot be
/// parameterized are kept and flagged.
pub fn batch_rays_for_view(camera: &CameraModel, cfg: &TwoPlaneConfig) -> Result<Vec<PixelRay>> {
    camera.validate()?;
    let mut out = Vec::with_capacity(camera.width as usize * camera.height as usize);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let ray = ray_from_pixel(camera, (x as f64 + 0.5, y as f64 + 0.5))?;
            out.push(PixelRay {
                x,
                y,
                ray,
                coords: classify(&ray, cfg),
            });
        }
    }
    Ok(out)
}

/// Axis-aligned extent of the plane crossings of every pixel ray of the
/// given cameras, padded by `pad_fraction` of the extent.
pub fn compute_bounds(cameras: &[CameraModel], z_uv: f64, z_st: f64, pad_fraction: f64) -> Result<PlaneBounds> {
    let mut min = [f64::INFINITY; 4];
    let mut max = [f64::NEG_INFINITY; 4];
    for cam in cameras {
        cam.validate()?;
        for y in 0..cam.height {
            for x in 0..cam.width {
                let ray = ray_from_pixel(cam, (x as f64 + 0.5, y as f64 + 0.5))?;
                if let Ok(raw) = plane_intersections(&ray, z_uv, z_st) {
                    for i in 0..4 {
                        min[i] = min[i].min(raw[i]);
                        max[i] = max[i].max(raw[i]);
                    }
                }
            }
        }
    }
    if min.iter().any(|m| !m.is_finite()) {
        return Err(Error::domain("no camera ray crosses both parameterization planes"));
    }
    let bounds = PlaneBounds { min, max }.padded(pad_fraction);
    bounds.validate()?;
    Ok(bounds)
}
