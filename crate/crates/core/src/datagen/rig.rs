use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Vec3};
use crate::lattice::{fibonacci_hemisphere, fibonacci_sphere};

/// Directional lights, each a unit vector from the surface toward the light
/// with unit white irradiance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightRig {
    pub directions: Vec<[f64; 3]>,
}

impl LightRig {
    pub fn new(directions: Vec<Vec3>) -> Result<Self> {
        let rig = Self {
            directions: directions.iter().map(|d| [d.x, d.y, d.z]).collect(),
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn direction(&self, id: usize) -> Vec3 {
        Vec3::from(self.directions[id])
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.directions.iter().map(|d| Vec3::from(*d))
    }

    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.directions.iter().enumerate() {
            let v = Vec3::from(*d);
            if !v.iter().all(|c| c.is_finite()) || (v.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::domain(format!("light {i} is not a unit vector")));
            }
            for (j, e) in self.directions[..i].iter().enumerate() {
                if (v - Vec3::from(*e)).norm() < 1e-9 {
                    return Err(Error::domain(format!("lights {j} and {i} coincide")));
                }
            }
        }
        Ok(())
    }
}

/// Lights on a Fibonacci lattice whose size gives each light a cap of
/// angular radius `spacing / 2`: `n = 4 pi / (2 pi (1 - cos(spacing / 2)))`,
/// halved for the upper hemisphere.
pub fn light_sphere_grid(spacing_deg: f64, hemisphere: bool) -> Result<LightRig> {
    if !(spacing_deg > 0.0 && spacing_deg <= 90.0) {
        return Err(Error::domain("light spacing must lie in (0, 90] degrees"));
    }
    let half = (spacing_deg / 2.0).to_radians();
    let full = (2.0 / (1.0 - half.cos())).round().max(1.0) as usize;
    light_rig_with_count(if hemisphere { full.div_ceil(2) } else { full }, hemisphere)
}

/// Exactly `n` lattice lights on the sphere or the upper hemisphere.
pub fn light_rig_with_count(n: usize, hemisphere: bool) -> Result<LightRig> {
    let dirs = if hemisphere {
        fibonacci_hemisphere(n)?
    } else {
        fibonacci_sphere(n)?
    };
    LightRig::new(dirs)
}

/// Unit directions of an `n x n` camera net around `+z`, row-major (rows
/// advance along `+y`, columns along `+x`).
///
/// The centre row and column lie on great circles through the axis with
/// consecutive points `spacing` apart; every other point is placed at
/// distance `spacing` from both its row and column predecessor, so all
/// adjacent pairs are exactly `spacing` apart.
pub fn camera_net_directions(n: usize, spacing_deg: f64) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::domain("camera grid needs at least one camera per axis"));
    }
    if !(spacing_deg > 0.0 && spacing_deg < 90.0) {
        return Err(Error::domain("camera spacing must lie in (0, 90) degrees"));
    }
    let s = spacing_deg.to_radians();
    let c = ((n - 1) / 2) as i64;
    let lo = -c;
    let hi = n as i64 - 1 - c;
    let idx = |i: i64, j: i64| ((j - lo) * n as i64 + (i - lo)) as usize;
    let mut pts = vec![Vec3::zeros(); n * n];
    for i in lo..=hi {
        let a = i as f64 * s;
        pts[idx(i, 0)] = Vec3::new(a.sin(), 0.0, a.cos());
    }
    for j in lo..=hi {
        let b = j as f64 * s;
        pts[idx(0, j)] = Vec3::new(0.0, b.sin(), b.cos());
    }
    for (si, sj) in [(1i64, 1i64), (-1, 1), (1, -1), (-1, -1)] {
        let imax = if si > 0 { hi } else { -lo };
        let jmax = if sj > 0 { hi } else { -lo };
        for aj in 1..=jmax {
            for ai in 1..=imax {
                let (i, j) = (si * ai, sj * aj);
                let a = pts[idx(i - si, j)];
                let b = pts[idx(i, j - sj)];
                let prev = pts[idx(i - si, j - sj)];
                pts[idx(i, j)] = equidistant_point(&a, &b, &prev, s)?;
            }
        }
    }
    if pts.iter().any(|p| p.z <= 0.0) {
        return Err(Error::domain(format!(
            "a {n}x{n} grid at {spacing_deg} degrees leaves the front hemisphere"
        )));
    }
    Ok(pts)
}

/// The unit point at angular distance `s` from both `a` and `b` that lies
/// on the far side from `avoid`.
fn equidistant_point(a: &Vec3, b: &Vec3, avoid: &Vec3, s: f64) -> Result<Vec3> {
    let ab = a.dot(b);
    let alpha = s.cos() / (1.0 + ab);
    let base = (a + b) * alpha;
    let cross = a.cross(b);
    let rest = 1.0 - base.norm_squared();
    if rest < 0.0 || cross.norm() < 1e-12 {
        return Err(Error::domain("camera grid spacing too large to close the net"));
    }
    let off = cross * (rest.sqrt() / cross.norm());
    let (p, q) = (base + off, base - off);
    Ok(if p.dot(avoid) < q.dot(avoid) { p } else { q })
}

/// An `n x n` grid of cameras at distance `radius` from `target`, all
/// looking at it, with the focal length in pixels given by `focal_px`.
pub fn camera_grid(
    n: usize,
    spacing_deg: f64,
    radius: f64,
    target: Vec3,
    width: u32,
    height: u32,
    focal_px: f64,
) -> Result<Vec<CameraModel>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::domain("camera radius must be positive"));
    }
    camera_net_directions(n, spacing_deg)?
        .into_iter()
        .map(|d| CameraModel::look_at(target + d * radius, target, Vec3::new(0.0, 1.0, 0.0), focal_px, width, height))
        .collect()
}
