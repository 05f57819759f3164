//! Microfacet reflectance: GGX-style normal distribution, Schlick-style
//! Fresnel with a base-2 exponential fit, and Smith geometry with the
//! `k = (R+1)^2 / 8` remapping.
//!
//! ```text
//! M(N, A, R, v, l) = A / pi + D(h, N, R) F(v, h) G(l, v, N, R) / (4 (N.l) (N.v))
//! ```
//!
//! The same kernel shades the synthetic datasets and provides the
//! self-supervision target for the decomposition network, so it also comes
//! with an analytic backward pass.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Lower roughness clamp; `D` diverges at `a = R^2 -> 0`.
pub const R_MIN: f64 = 0.01;
/// Reflectance at normal incidence.
pub const FRESNEL_F0: f64 = 0.05;
/// `N.l` or `N.v` at or below this counts as back-facing and shades to zero.
pub const GRAZING_EPS: f64 = 1e-4;
/// Predicted normals are divided by `max(|N|, NORMAL_FLOOR)`.
pub const NORMAL_FLOOR: f64 = 1e-6;

const FRESNEL_A: f64 = -5.55473;
const FRESNEL_B: f64 = -6.98316;

/// Per-point reflectance parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvbrdfSample {
    pub normal: Vec3,
    pub albedo: [f64; 3],
    pub roughness: f64,
}

impl SvbrdfSample {
    pub fn new(normal: Vec3, albedo: [f64; 3], roughness: f64) -> Self {
        Self {
            normal,
            albedo,
            roughness: clamp_roughness(roughness),
        }
    }

    fn is_finite(&self) -> bool {
        self.normal.iter().all(|c| c.is_finite())
            && self.albedo.iter().all(|c| c.is_finite())
            && self.roughness.is_finite()
    }
}

pub fn clamp_roughness(r: f64) -> f64 {
    r.clamp(R_MIN, 1.0)
}

/// `v + l` normalized; `None` when `v = -l`.
pub fn half_vector(v: &Vec3, l: &Vec3) -> Option<Vec3> {
    let s = v + l;
    let n = s.norm();
    (n > 1e-12).then(|| s / n)
}

fn safe_normalize(n: &Vec3) -> (Vec3, f64) {
    let len = n.norm().max(NORMAL_FLOOR);
    (n / len, len)
}

pub fn ndf_ggx(h: &Vec3, n: &Vec3, roughness: f64) -> f64 {
    let a = clamp_roughness(roughness).powi(2);
    let a2 = a * a;
    let nh = n.dot(h);
    let d = nh * nh * (a2 - 1.0) + 1.0;
    a2 / (PI * d * d)
}

pub fn fresnel_schlick_approx(v: &Vec3, h: &Vec3) -> f64 {
    let vh = v.dot(h).clamp(0.0, 1.0);
    FRESNEL_F0 + (1.0 - FRESNEL_F0) * ((FRESNEL_A * vh + FRESNEL_B) * vh).exp2()
}

pub fn smith_k(roughness: f64) -> f64 {
    let r = clamp_roughness(roughness);
    (r + 1.0) * (r + 1.0) / 8.0
}

pub fn geometry_smith(l: &Vec3, v: &Vec3, n: &Vec3, roughness: f64) -> f64 {
    let k = smith_k(roughness);
    let g1 = |x: f64| {
        let x = x.max(0.0);
        x / (x * (1.0 - k) + k)
    };
    g1(n.dot(v)) * g1(n.dot(l))
}

fn check_finite(sample: &SvbrdfSample, v: &Vec3, l: &Vec3) -> Result<()> {
    if !sample.is_finite() || !v.iter().chain(l.iter()).all(|c| c.is_finite()) {
        return Err(Error::domain("non-finite microfacet input"));
    }
    Ok(())
}

/// Evaluates `M`. The normal is re-normalized first; back-facing
/// configurations return black.
pub fn microfacet_eval(sample: &SvbrdfSample, v: &Vec3, l: &Vec3) -> Result<[f64; 3]> {
    check_finite(sample, v, l)?;
    let (n, _) = safe_normalize(&sample.normal);
    let (nl, nv) = (n.dot(l), n.dot(v));
    if nl <= GRAZING_EPS || nv <= GRAZING_EPS {
        return Ok([0.0; 3]);
    }
    let spec = match half_vector(v, l) {
        Some(h) => {
            ndf_ggx(&h, &n, sample.roughness) * fresnel_schlick_approx(v, &h) * geometry_smith(l, v, &n, sample.roughness)
                / (4.0 * nl * nv)
        }
        None => 0.0,
    };
    Ok(sample.albedo.map(|a| a / PI + spec))
}

/// Radiance leaving toward `v` under a directional light of the given
/// irradiance. With `include_cosine` the foreshortening `max(N.l, 0)` is
/// applied, as a physical renderer would.
pub fn shade_directional(
    sample: &SvbrdfSample,
    v: &Vec3,
    l: &Vec3,
    irradiance: [f64; 3],
    include_cosine: bool,
) -> Result<[f64; 3]> {
    let m = microfacet_eval(sample, v, l)?;
    let cos = if include_cosine {
        let (n, _) = safe_normalize(&sample.normal);
        n.dot(l).max(0.0)
    } else {
        1.0
    };
    Ok(std::array::from_fn(|c| (m[c] * cos * irradiance[c]).max(0.0)))
}

/// Gradient of `sum_c upstream_c * M_c` with respect to the raw inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicrofacetGrad {
    /// With respect to the unnormalized normal.
    pub normal: Vec3,
    pub albedo: [f64; 3],
    /// With respect to the unclamped roughness (zero where the clamp is active).
    pub roughness: f64,
}

impl MicrofacetGrad {
    fn zero() -> Self {
        Self {
            normal: Vec3::zeros(),
            albedo: [0.0; 3],
            roughness: 0.0,
        }
    }
}

/// `M` (optionally times `N.l`) together with its vector-Jacobian product
/// against `upstream`. Inputs are taken raw: the normal is normalized and
/// the roughness clamped inside, and both operations are differentiated.
pub fn microfacet_backward(
    normal: &Vec3,
    albedo: [f64; 3],
    roughness: f64,
    v: &Vec3,
    l: &Vec3,
    include_cosine: bool,
    upstream: [f64; 3],
) -> ([f64; 3], MicrofacetGrad) {
    let (n, len) = safe_normalize(normal);
    let (nl, nv) = (n.dot(l), n.dot(v));
    let h = match half_vector(v, l) {
        Some(h) if nl > GRAZING_EPS && nv > GRAZING_EPS => h,
        _ => return ([0.0; 3], MicrofacetGrad::zero()),
    };
    let r = clamp_roughness(roughness);
    let r_active = roughness > R_MIN && roughness < 1.0;

    let a2 = r.powi(4);
    let nh = n.dot(&h);
    let d = nh * nh * (a2 - 1.0) + 1.0;
    let ndf = a2 / (PI * d * d);
    let f = fresnel_schlick_approx(v, &h);
    let k = (r + 1.0) * (r + 1.0) / 8.0;
    let qv = nv * (1.0 - k) + k;
    let ql = nl * (1.0 - k) + k;
    // G / (4 nl nv) collapses to 1 / (4 qv ql)
    let vis = 1.0 / (4.0 * qv * ql);
    let spec = ndf * f * vis;

    let d_ndf_d_nh = -4.0 * a2 * (a2 - 1.0) * nh / (PI * d * d * d);
    let d_spec_d_nh = f * vis * d_ndf_d_nh;
    let d_spec_d_nv = -spec * (1.0 - k) / qv;
    let d_spec_d_nl = -spec * (1.0 - k) / ql;
    let d_spec_d_n: Vec3 = h * d_spec_d_nh + v * d_spec_d_nv + l * d_spec_d_nl;

    let d_ndf_d_a2 = (d - 2.0 * a2 * nh * nh) / (PI * d * d * d);
    let d_vis_d_k = -vis * ((1.0 - nv) / qv + (1.0 - nl) / ql);
    let d_spec_d_r = if r_active {
        f * (d_ndf_d_a2 * 4.0 * r.powi(3) * vis + ndf * d_vis_d_k * (r + 1.0) / 4.0)
    } else {
        0.0
    };

    let up_sum: f64 = upstream.iter().sum();
    let base: [f64; 3] = albedo.map(|a| a / PI + spec);
    let (value, g_unit, g_albedo, g_r) = if include_cosine {
        let value = base.map(|b| b * nl);
        let weighted_base: f64 = (0..3).map(|c| upstream[c] * base[c]).sum();
        let g_unit = d_spec_d_n * (nl * up_sum) + l * weighted_base;
        let g_albedo = upstream.map(|u| u * nl / PI);
        (value, g_unit, g_albedo, d_spec_d_r * nl * up_sum)
    } else {
        (base, d_spec_d_n * up_sum, upstream.map(|u| u / PI), d_spec_d_r * up_sum)
    };

    let g_normal = if normal.norm() >= NORMAL_FLOOR {
        (g_unit - n * n.dot(&g_unit)) / len
    } else {
        g_unit / NORMAL_FLOOR
    };
    (
        value,
        MicrofacetGrad {
            normal: g_normal,
            albedo: g_albedo,
            roughness: g_r,
        },
    )
}
