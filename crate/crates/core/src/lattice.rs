//! Quasi-uniform direction sets on the unit sphere.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Fibonacci lattice with `n` points: `z_k = 1 - (2k + 1) / n`, azimuth
/// advancing by the golden angle.
pub fn fibonacci_sphere(n: usize) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::domain("a lattice needs at least one point"));
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    Ok((0..n)
        .map(|k| {
            let z = 1.0 - (2 * k + 1) as f64 / n as f64;
            lattice_point(z, golden * k as f64)
        })
        .collect())
}

/// `n` points on the upper hemisphere (`z > 0`), `z_k = 1 - (k + 0.5) / n`.
pub fn fibonacci_hemisphere(n: usize) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::domain("a lattice needs at least one point"));
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    Ok((0..n)
        .map(|k| {
            let z = 1.0 - (k as f64 + 0.5) / n as f64;
            lattice_point(z, golden * k as f64)
        })
        .collect())
}

fn lattice_point(z: f64, phi: f64) -> Vec3 {
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z).normalize()
}
