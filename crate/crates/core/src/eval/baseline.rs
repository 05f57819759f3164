use crate::datagen::OlatDataset;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::hdr_image::HdrImage;

/// Id in `lights` whose direction has the largest dot product with `query`;
/// ties go to the lowest id.
pub fn nearest_light(dataset: &OlatDataset, lights: &[usize], query: &Vec3) -> Result<usize> {
    let mut ids = lights.to_vec();
    ids.sort_unstable();
    let mut best: Option<(usize, f64)> = None;
    for id in ids {
        if id >= dataset.lights.len() {
            return Err(Error::domain(format!("light {id} does not exist")));
        }
        let d = dataset.lights.direction(id).dot(query);
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((id, d));
        }
    }
    best.map(|b| b.0).ok_or_else(|| Error::domain("no lights to choose from"))
}

fn check_camera(dataset: &OlatDataset, camera: usize) -> Result<()> {
    if camera >= dataset.cameras.len() {
        return Err(Error::domain(format!("camera {camera} does not exist")));
    }
    Ok(())
}

/// The image of `camera` under the available light closest to `query`.
pub fn nearest_light_baseline(dataset: &OlatDataset, camera: usize, lights: &[usize], query: &Vec3) -> Result<HdrImage> {
    check_camera(dataset, camera)?;
    let id = nearest_light(dataset, lights, query)?;
    Ok(dataset.image(camera, id).clone())
}

/// Triangles of the convex hull of a set of unit directions that face away
/// from the origin; together they tile the spherical region the lights span.
#[derive(Debug, Clone, PartialEq)]
pub struct LightTriangulation {
    pub ids: Vec<usize>,
    pub directions: Vec<Vec3>,
    /// Indices into `ids`.
    pub faces: Vec<[usize; 3]>,
}

impl LightTriangulation {
    pub fn new(dataset: &OlatDataset, lights: &[usize]) -> Result<Self> {
        let mut ids = lights.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let dirs: Vec<Vec3> = ids.iter().map(|&i| dataset.lights.direction(i)).collect();
        Self::from_directions(ids, dirs)
    }

    pub fn from_directions(ids: Vec<usize>, directions: Vec<Vec3>) -> Result<Self> {
        let n = directions.len();
        if n < 3 {
            return Err(Error::domain("barycentric blending needs at least three lights"));
        }
        let eps = 1e-12;
        let mut faces = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let (a, b, c) = (directions[i], directions[j], directions[k]);
                    let mut normal = (b - a).cross(&(c - a));
                    if normal.norm() < 1e-12 {
                        continue;
                    }
                    normal.normalize_mut();
                    let sides: Vec<f64> = (0..n)
                        .filter(|&m| m != i && m != j && m != k)
                        .map(|m| normal.dot(&(directions[m] - a)))
                        .collect();
                    let outward = if sides.iter().all(|s| *s <= eps) {
                        normal
                    } else if sides.iter().all(|s| *s >= -eps) {
                        -normal
                    } else {
                        continue;
                    };
                    if outward.dot(&a) > eps {
                        faces.push([i, j, k]);
                    }
                }
            }
        }
        if faces.is_empty() {
            return Err(Error::domain("lights are collinear; no triangle to blend over"));
        }
        Ok(Self { ids, directions, faces })
    }

    /// Normalized cone coordinates of `query` in the first triangle that
    /// contains it, as `(light id, weight)`.
    pub fn weights(&self, query: &Vec3) -> Option<[(usize, f64); 3]> {
        let tol = 1e-9;
        for f in &self.faces {
            let m = nalgebra::Matrix3::from_columns(&[
                self.directions[f[0]],
                self.directions[f[1]],
                self.directions[f[2]],
            ]);
            let Some(inv) = m.try_inverse() else { continue };
            let w = inv * query;
            if w.iter().all(|x| *x >= -tol) {
                let s = w.sum();
                if s <= 0.0 {
                    continue;
                }
                let w = w.map(|x| x.max(0.0) / s);
                return Some([
                    (self.ids[f[0]], w[0]),
                    (self.ids[f[1]], w[1]),
                    (self.ids[f[2]], w[2]),
                ]);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricResult {
    pub image: HdrImage,
    pub weights: Vec<(usize, f64)>,
    /// The query lay outside the lights' hull and the nearest image was used.
    pub fallback: bool,
}

/// Blends the three images of the light triangle containing `query`.
pub fn barycentric_baseline(
    dataset: &OlatDataset,
    camera: usize,
    triangulation: &LightTriangulation,
    query: &Vec3,
) -> Result<BarycentricResult> {
    check_camera(dataset, camera)?;
    match triangulation.weights(query) {
        Some(w) => {
            let mut image = HdrImage::new(dataset.cameras[camera].width as usize, dataset.cameras[camera].height as usize);
            for (id, wt) in w {
                let src = dataset.image(camera, id);
                for (p, s) in image.pixels.iter_mut().zip(&src.pixels) {
                    for c in 0..3 {
                        p[c] += (wt * s[c] as f64) as f32;
                    }
                }
            }
            Ok(BarycentricResult {
                image,
                weights: w.to_vec(),
                fallback: false,
            })
        }
        None => {
            log::warn!("query light outside the training-light hull; using the nearest light");
            let id = nearest_light(dataset, &triangulation.ids, query)?;
            Ok(BarycentricResult {
                image: dataset.image(camera, id).clone(),
                weights: vec![(id, 1.0)],
                fallback: true,
            })
        }
    }
}
