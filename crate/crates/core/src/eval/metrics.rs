use crate::error::{Error, Result};
use crate::hdr_image::{HdrImage, REC709};

/// PSNR returned for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_size(a: &HdrImage, b: &HdrImage) -> Result<()> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )))
    }
}

/// Mean squared error over all channels.
pub fn mse(a: &HdrImage, b: &HdrImage) -> Result<f64> {
    same_size(a, b)?;
    let n = (a.pixels.len() * 3).max(1) as f64;
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] as f64 - q[c] as f64).powi(2)))
        .sum();
    Ok(sum / n)
}

/// `10 log10(peak^2 / MSE)` in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &HdrImage, b: &HdrImage, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / m).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|x| x / s).collect()
}

/// Separable Gaussian filter keeping only fully covered positions.
fn filter_valid(img: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..k).map(|i| g[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of the Rec.709 luminance of two images with peak 1, using an
/// 11x11 Gaussian window (sigma 1.5) and K1 = 0.01, K2 = 0.03.
pub fn ssim(a: &HdrImage, b: &HdrImage) -> Result<f64> {
    same_size(a, b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::domain(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let luma = |img: &HdrImage| -> Vec<f64> {
        img.pixels
            .iter()
            .map(|p| (0..3).map(|c| REC709[c] as f64 * p[c] as f64).sum())
            .collect()
    };
    let (x, y) = (luma(a), luma(b));
    let g = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
    let mx = filter_valid(&x, w, h, &g);
    let my = filter_valid(&y, w, h, &g);
    let sxx = filter_valid(&prod(&x, &x), w, h, &g);
    let syy = filter_valid(&prod(&y, &y), w, h, &g);
    let sxy = filter_valid(&prod(&x, &y), w, h, &g);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mx.len() as f64;
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn constant(v: f32) -> HdrImage {
        HdrImage::from_fn(16, 16, |_, _| [v; 3])
    }

    #[test]
    fn psnr_closed_forms() {
        let a = constant(0.3);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), 99.0);
        let b = constant(0.4);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-5);
        assert!(psnr(&a, &HdrImage::new(3, 3), 1.0).is_err());
    }

    #[test]
    fn psnr_of_unit_std_noise_is_forty_db() {
        // uniform noise with standard deviation 0.01 has MSE 1e-4
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let half = 0.01 * 3f32.sqrt();
        let a = HdrImage::from_fn(128, 128, |x, y| [((x + y) % 7) as f32 / 10.0; 3]);
        let b = HdrImage::from_fn(128, 128, |x, y| {
            let base = a.get(x, y);
            std::array::from_fn(|c| base[c] + rng.random_range(-half..half))
        });
        let p = psnr(&a, &b, 1.0).unwrap();
        assert!((p - 40.0).abs() < 0.5, "{p}");
    }

    #[test]
    fn ssim_identity_and_constant_closed_form() {
        let a = HdrImage::from_fn(20, 14, |x, y| [(x * y % 5) as f32 / 5.0, 0.2, 0.1]);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let (ua, ub) = (0.3f64, 0.6f64);
        let expect = (2.0 * ua * ub + 1e-4) / (ua * ua + ub * ub + 1e-4);
        let got = ssim(&constant(0.3), &constant(0.6)).unwrap();
        assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");
        assert!(ssim(&HdrImage::new(10, 30), &HdrImage::new(10, 30)).is_err());
    }

    #[test]
    fn ssim_of_binary_negative_is_low() {
        let a = HdrImage::from_fn(32, 32, |x, y| if (x / 3 + y / 5) % 2 == 0 { [1.0; 3] } else { [0.0; 3] });
        let neg = HdrImage::from_fn(32, 32, |x, y| a.get(x, y).map(|v| 1.0 - v));
        assert!(ssim(&a, &neg).unwrap() < 0.2);
    }
}
