use crate::error::{Error, Result};
use crate::geometry::{ray_from_pixel, CameraModel, Vec3};
use crate::hdr_image::HdrImage;

/// Pixels brighter than this count as lit.
pub const LUMINANCE_FLOOR: f32 = 1e-6;
/// Fraction of the disc's brightest pixels averaged into the spot position.
pub const TOP_FRACTION: f64 = 0.001;
/// Spots farther than this fraction of the radius from the centre are grazing.
pub const RIM_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChromeBallEstimate {
    /// Unit direction from the scene toward the light, world coordinates.
    pub direction: Vec3,
    /// Sub-pixel centroid of the highlight.
    pub spot: (f64, f64),
    /// The highlight sits near the silhouette, where the normal is poorly
    /// conditioned.
    pub low_confidence: bool,
}

/// Recovers a light direction from the specular highlight on a mirror ball
/// whose silhouette is the disc `center`, `radius` (pixels) in `camera`.
///
/// The ball is reconstructed up to scale from its angular radius; the
/// highlight centroid is back-projected onto it and the view direction is
/// reflected about the surface normal there.
pub fn chrome_ball_light_dir(
    image: &HdrImage,
    center: (f64, f64),
    radius: f64,
    camera: &CameraModel,
) -> Result<ChromeBallEstimate> {
    let (cx, cy) = center;
    if !(radius > 0.0)
        || cx - radius < 0.0
        || cy - radius < 0.0
        || cx + radius > image.width as f64
        || cy + radius > image.height as f64
    {
        return Err(Error::Calibration("the ball disc must lie inside the image".into()));
    }
    if image.width != camera.width as usize || image.height != camera.height as usize {
        return Err(Error::Calibration("image size differs from the camera resolution".into()));
    }

    let lum = image.luminance();
    let mut disc: Vec<(f32, usize, usize)> = Vec::new();
    for y in 0..image.height {
        for x in 0..image.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            if (px - cx).hypot(py - cy) <= radius {
                disc.push((lum[y * image.width + x], x, y));
            }
        }
    }
    disc.sort_by(|a, b| b.0.total_cmp(&a.0));
    if disc.first().is_none_or(|p| !(p.0 > LUMINANCE_FLOOR)) {
        return Err(Error::Calibration("no pixel on the ball exceeds the luminance floor".into()));
    }
    let k = ((disc.len() as f64 * TOP_FRACTION).ceil() as usize).max(1);
    // everything tied with the k-th brightest pixel, so symmetric spots stay symmetric
    let threshold = disc[k.min(disc.len()) - 1].0.max(LUMINANCE_FLOOR * (1.0 + f32::EPSILON));
    let top: Vec<_> = disc.iter().take_while(|p| p.0 >= threshold).collect();
    let n = top.len() as f64;
    let sx = top.iter().map(|p| p.1 as f64 + 0.5).sum::<f64>() / n;
    let sy = top.iter().map(|p| p.2 as f64 + 0.5).sum::<f64>() / n;
    let mut low_confidence = (sx - cx).hypot(sy - cy) > RIM_FRACTION * radius;

    // the ball at unit distance along the centre ray, tangent to the silhouette cone
    let axis = ray_from_pixel(camera, (cx, cy))?.direction;
    let edge_x = (cx + radius).min(camera.width as f64 - 1e-9);
    let edge = ray_from_pixel(camera, (edge_x, cy))?.direction;
    let half_angle = axis.angle(&edge);
    let rho = half_angle.sin();
    let eye = camera.center();
    let ball = eye + axis;

    let d = ray_from_pixel(camera, (sx, sy))?.direction;
    let oc = eye - ball;
    let b = oc.dot(&d);
    let disc_val = b * b - (oc.norm_squared() - rho * rho);
    let hit = if disc_val >= 0.0 {
        eye + d * (-b - disc_val.sqrt())
    } else {
        // just outside the silhouette: use the closest point of the ray
        low_confidence = true;
        let closest = eye + d * (-b);
        ball + (closest - ball).normalize() * rho
    };
    let normal = (hit - ball) / rho;
    let v = -d;
    let l = normal * (2.0 * normal.dot(&v)) - v;
    Ok(ChromeBallEstimate {
        direction: l.normalize(),
        spot: (sx, sy),
        low_confidence,
    })
}
