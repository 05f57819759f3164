use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::brdf::{shade_directional, SvbrdfSample};
use crate::error::{Error, Result};
use crate::geometry::{Ray, Vec3};

/// Offset along the normal for shadow-ray origins.
const SHADOW_BIAS: f64 = 1e-6;
const MIN_HIT_T: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Albedo {
    Constant { rgb: [f64; 3] },
    /// Solid 3D checkerboard with cells of edge `cell`.
    Checker { a: [f64; 3], b: [f64; 3], cell: f64 },
}

impl Albedo {
    pub fn at(&self, p: &Vec3) -> [f64; 3] {
        match *self {
            Albedo::Constant { rgb } => rgb,
            Albedo::Checker { a, b, cell } => {
                let k = (p.x / cell).floor() + (p.y / cell).floor() + (p.z / cell).floor();
                if (k as i64).rem_euclid(2) == 0 {
                    a
                } else {
                    b
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Albedo::Constant { rgb } => rgb.iter().all(|c| c.is_finite() && *c >= 0.0),
            Albedo::Checker { a, b, cell } => {
                a.iter().chain(b.iter()).all(|c| c.is_finite() && *c >= 0.0) && *cell > 0.0 && cell.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain("albedo must be finite and non-negative, checker cells positive"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub albedo: Albedo,
    pub roughness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    Plane { point: [f64; 3], normal: [f64; 3] },
    /// Axis-aligned box.
    Box { min: [f64; 3], max: [f64; 3] },
}

impl Shape {
    /// Nearest intersection with `t > MIN_HIT_T`, returning `(t, normal)`.
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, Vec3)> {
        let (o, d) = (ray.origin, ray.direction);
        match *self {
            Shape::Sphere { center, radius } => {
                let c = Vec3::from(center);
                let oc = o - c;
                let b = oc.dot(&d);
                let cc = oc.norm_squared() - radius * radius;
                let disc = b * b - cc;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = if -b - sq > MIN_HIT_T { -b - sq } else { -b + sq };
                (t > MIN_HIT_T).then(|| (t, (o + d * t - c) / radius))
            }
            Shape::Plane { point, normal } => {
                let n = Vec3::from(normal).normalize();
                let denom = n.dot(&d);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (Vec3::from(point) - o).dot(&n) / denom;
                (t > MIN_HIT_T).then_some((t, n))
            }
            Shape::Box { min, max } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                let (mut ax0, mut ax1) = (0, 0);
                for a in 0..3 {
                    let inv = 1.0 / d[a];
                    let (mut lo, mut hi) = ((min[a] - o[a]) * inv, (max[a] - o[a]) * inv);
                    if lo > hi {
                        std::mem::swap(&mut lo, &mut hi);
                    }
                    if lo > t0 {
                        t0 = lo;
                        ax0 = a;
                    }
                    if hi < t1 {
                        t1 = hi;
                        ax1 = a;
                    }
                }
                if t0 > t1 {
                    return None;
                }
                let (t, axis, entering) = if t0 > MIN_HIT_T {
                    (t0, ax0, true)
                } else if t1 > MIN_HIT_T {
                    (t1, ax1, false)
                } else {
                    return None;
                };
                let mut n = Vec3::zeros();
                // outward normal: opposite to the ray when entering
                n[axis] = if entering { -d[axis].signum() } else { d[axis].signum() };
                Some((t, n))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |a: &[f64; 3]| a.iter().all(|c| c.is_finite());
        let ok = match self {
            Shape::Sphere { center, radius } => finite(center) && radius.is_finite() && *radius > 0.0,
            Shape::Plane { point, normal } => finite(point) && finite(normal) && Vec3::from(*normal).norm() > 1e-12,
            Shape::Box { min, max } => finite(min) && finite(max) && (0..3).all(|a| min[a] < max[a]),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid primitive {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub material: Material,
}

/// A set of primitives on a black background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub name: String,
    pub primitives: Vec<Primitive>,
}

/// Surface point found by [`Scene::hit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub normal: Vec3,
    pub primitive: usize,
}

impl Scene {
    pub fn new(name: impl Into<String>, primitives: Vec<Primitive>) -> Result<Self> {
        let s = Self {
            name: name.into(),
            primitives,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.primitives {
            p.shape.validate()?;
            p.material.albedo.validate()?;
            if !(p.material.roughness.is_finite() && (0.0..=1.0).contains(&p.material.roughness)) {
                return Err(Error::domain("roughness must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Checker sphere (roughness 0.3) resting on a checker ground plane `z = 0`.
    pub fn reference() -> Self {
        Self {
            name: "reference".into(),
            primitives: vec![
                Primitive {
                    shape: Shape::Sphere {
                        center: [0.0, 0.0, REFERENCE_SPHERE_RADIUS],
                        radius: REFERENCE_SPHERE_RADIUS,
                    },
                    material: Material {
                        albedo: Albedo::Checker {
                            a: [0.85, 0.25, 0.2],
                            b: [0.9, 0.85, 0.75],
                            cell: 0.18,
                        },
                        roughness: 0.3,
                    },
                },
                Primitive {
                    shape: Shape::Plane {
                        point: [0.0; 3],
                        normal: [0.0, 0.0, 1.0],
                    },
                    material: Material {
                        albedo: Albedo::Checker {
                            a: [0.2, 0.35, 0.6],
                            b: [0.7, 0.7, 0.65],
                            cell: 0.25,
                        },
                        roughness: 0.7,
                    },
                },
            ],
        }
    }

    /// Two spheres and a box on a plane.
    pub fn tabletop() -> Self {
        let mut s = Self::reference();
        s.name = "tabletop".into();
        s.primitives[0].shape = Shape::Sphere {
            center: [-0.35, 0.1, 0.3],
            radius: 0.3,
        };
        s.primitives.push(Primitive {
            shape: Shape::Sphere {
                center: [0.4, 0.35, 0.2],
                radius: 0.2,
            },
            material: Material {
                albedo: Albedo::Constant { rgb: [0.3, 0.8, 0.35] },
                roughness: 0.15,
            },
        });
        s.primitives.push(Primitive {
            shape: Shape::Box {
                min: [0.1, -0.6, 0.0],
                max: [0.5, -0.2, 0.35],
            },
            material: Material {
                albedo: Albedo::Constant { rgb: [0.75, 0.6, 0.3] },
                roughness: 0.5,
            },
        });
        s
    }

    /// A mirror-like ball (minimum roughness, black albedo) of unit radius at the origin.
    pub fn chrome_ball() -> Self {
        Self {
            name: "chrome_ball".into(),
            primitives: vec![Primitive {
                shape: Shape::Sphere {
                    center: [0.0; 3],
                    radius: 1.0,
                },
                material: Material {
                    albedo: Albedo::Constant { rgb: [0.0; 3] },
                    roughness: crate::brdf::R_MIN,
                },
            }],
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "reference" | "sphere" => Ok(Self::reference()),
            "tabletop" => Ok(Self::tabletop()),
            "chrome_ball" => Ok(Self::chrome_ball()),
            other => Err(Error::domain(format!(
                "unknown scene {other:?} (expected reference, tabletop or chrome_ball)"
            ))),
        }
    }

    /// SHA-256 of the canonical JSON description.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scene serializes");
        hex(&Sha256::digest(json))
    }

    pub fn hit(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some((t, n)) = p.shape.intersect(ray) {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit {
                        t,
                        point: ray.at(t),
                        normal: n,
                        primitive: i,
                    });
                }
            }
        }
        best
    }

    fn occluded(&self, point: &Vec3, normal: &Vec3, l: &Vec3) -> bool {
        let origin = point + normal * SHADOW_BIAS;
        let ray = Ray {
            origin,
            direction: *l,
        };
        self.primitives.iter().any(|p| p.shape.intersect(&ray).is_some())
    }

    /// Surface description at a hit.
    pub fn svbrdf_at(&self, hit: &Hit) -> SvbrdfSample {
        let m = &self.primitives[hit.primitive].material;
        SvbrdfSample::new(hit.normal, m.albedo.at(&hit.point), m.roughness)
    }

    /// Single-bounce radiance along `ray` under a directional light `l`
    /// (surface to light) of the given irradiance, with hard shadows.
    pub fn trace_with(&self, ray: &Ray, l: &Vec3, irradiance: [f64; 3]) -> [f64; 3] {
        let Some(hit) = self.hit(ray) else {
            return [0.0; 3];
        };
        let mut n = hit.normal;
        let v = -ray.direction;
        // two-sided planes and boxes seen from behind
        if n.dot(&v) < 0.0 {
            n = -n;
        }
        if n.dot(l) <= 0.0 || self.occluded(&hit.point, &n, l) {
            return [0.0; 3];
        }
        let m = &self.primitives[hit.primitive].material;
        let sample = SvbrdfSample::new(n, m.albedo.at(&hit.point), m.roughness);
        shade_directional(&sample, &v, l, irradiance, true).unwrap_or([0.0; 3])
    }
}

pub const REFERENCE_SPHERE_RADIUS: f64 = 0.45;

/// Radiance along `ray` under unit white irradiance from `l`.
pub fn trace_pixel(scene: &Scene, ray: &Ray, l: &Vec3) -> [f64; 3] {
    scene.trace_with(ray, l, [1.0; 3])
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::microfacet_eval;
    use std::f64::consts::PI;

    fn down(x: f64, y: f64) -> Ray {
        Ray::new(Vec3::new(x, y, 5.0), Vec3::new(0.0, 0.0, -1.0)).unwrap()
    }

    #[test]
    fn miss_is_black() {
        let s = Scene::reference();
        let r = Ray::new(Vec3::new(0.0, 0.0, 5.0), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(trace_pixel(&s, &r, &Vec3::new(0.0, 0.0, 1.0)), [0.0; 3]);
    }

    #[test]
    fn shadowed_point_is_black() {
        let s = Scene::reference();
        // ground point under the sphere, light from straight above
        let l = Vec3::new(0.0, 0.0, 1.0);
        let target = Vec3::new(0.05, 0.0, 0.0);
        let eye = Vec3::new(3.0, 0.0, 0.2);
        let r = Ray::new(eye, target - eye).unwrap();
        let hit = s.hit(&r).unwrap();
        assert_eq!(hit.primitive, 1);
        assert_eq!(trace_pixel(&s, &r, &l), [0.0; 3]);
    }

    #[test]
    fn rough_sphere_matches_shading_oracle() {
        let mut s = Scene::reference();
        s.primitives.truncate(1);
        s.primitives[0].material.roughness = 1.0;
        let l = Vec3::new(0.3, -0.2, 1.0).normalize();
        for (x, y) in [(0.0, 0.0), (0.2, 0.1), (-0.25, 0.3)] {
            let r = down(x, y);
            let hit = s.hit(&r).unwrap();
            let a = s.primitives[0].material.albedo.at(&hit.point);
            let sample = SvbrdfSample::new(hit.normal, a, 1.0);
            let m = microfacet_eval(&sample, &-r.direction, &l).unwrap();
            let cos = hit.normal.dot(&l).max(0.0);
            let got = trace_pixel(&s, &r, &l);
            for c in 0..3 {
                let diffuse = a[c] / PI * cos;
                let specular = (m[c] - a[c] / PI) * cos;
                assert!((got[c] - (diffuse + specular)).abs() <= 0.05 * got[c]);
                assert!(specular >= 0.0 && specular < diffuse);
            }
        }
    }

    #[test]
    fn irradiance_scales_linearly() {
        let s = Scene::tabletop();
        let l = Vec3::new(-0.4, 0.3, 0.8).normalize();
        for i in 0..50 {
            let r = down(-0.9 + 0.036 * i as f64, 0.5 - 0.02 * i as f64);
            let one = s.trace_with(&r, &l, [1.0; 3]);
            let two = s.trace_with(&r, &l, [2.0; 3]);
            for c in 0..3 {
                assert_eq!(two[c], 2.0 * one[c]);
            }
        }
    }

    #[test]
    fn box_faces_have_outward_normals() {
        let b = Shape::Box {
            min: [-1.0; 3],
            max: [1.0; 3],
        };
        let (t, n) = b.intersect(&down(0.2, 0.3)).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        assert_eq!(n, Vec3::new(0.0, 0.0, 1.0));
        let side = Ray::new(Vec3::new(-5.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(b.intersect(&side).unwrap().1, Vec3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn checker_alternates() {
        let c = Albedo::Checker {
            a: [1.0; 3],
            b: [0.0; 3],
            cell: 1.0,
        };
        assert_eq!(c.at(&Vec3::new(0.5, 0.5, 0.5)), [1.0; 3]);
        assert_eq!(c.at(&Vec3::new(1.5, 0.5, 0.5)), [0.0; 3]);
        assert_eq!(c.at(&Vec3::new(-0.5, 0.5, 0.5)), [0.0; 3]);
    }

    #[test]
    fn invalid_scenes_are_rejected() {
        let mut p = Scene::reference().primitives;
        p[0].shape = Shape::Sphere {
            center: [0.0; 3],
            radius: -1.0,
        };
        assert!(Scene::new("bad", p).is_err());
        assert!(Scene::by_name("nope").is_err());
        assert_ne!(Scene::reference().hash(), Scene::tabletop().hash());
    }
}
