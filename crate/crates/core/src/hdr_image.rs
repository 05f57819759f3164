//! Linear floating-point RGB images and their file formats.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Rec.709 luminance weights.
pub const REC709: [f32; 3] = [0.2126, 0.7152, 0.0722];

/// A linear RGB image stored row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct HdrImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 3]>,
}

impl HdrImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[f32; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::domain(format!(
                "{} pixels do not fill a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    pub fn same_size(&self, other: &HdrImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn luminance(&self) -> Vec<f32> {
        self.pixels
            .iter()
            .map(|p| REC709[0] * p[0] + REC709[1] * p[1] + REC709[2] * p[2])
            .collect()
    }

    pub fn scaled(&self, k: f32) -> HdrImage {
        let pixels = self.pixels.iter().map(|p| [p[0] * k, p[1] * k, p[2] * k]).collect();
        HdrImage { pixels, ..*self }
    }

    pub fn is_finite(&self) -> bool {
        self.pixels.iter().flatten().all(|v| v.is_finite())
    }

    /// 8-bit sRGB bytes after multiplying by `exposure` and clamping to [0, 1].
    pub fn to_srgb8(&self, exposure: f32) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(|v| (linear_to_srgb((v * exposure).clamp(0.0, 1.0)) * 255.0).round() as u8))
            .collect()
    }

    pub fn write_png(&self, path: &Path, exposure: f32) -> Result<()> {
        let bytes = self.to_srgb8(exposure);
        image::save_buffer(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| image_error(path, e))
    }

    /// Writes a colour PFM: `PF`, dimensions, scale `-1.0` (little-endian),
    /// then rows from bottom to top.
    pub fn to_pfm_bytes(&self) -> Vec<u8> {
        let mut out = format!("PF\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 12);
        for y in (0..self.height).rev() {
            for p in &self.pixels[y * self.width..(y + 1) * self.width] {
                for c in p {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pfm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_pfm(path: &Path) -> Result<HdrImage> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pfm_bytes(&bytes, path)
    }

    /// Parses colour (`PF`) or greyscale (`Pf`) PFM in either byte order.
    pub fn from_pfm_bytes(bytes: &[u8], path: &Path) -> Result<HdrImage> {
        let mut pos = 0;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::parse(path, "truncated PFM header"));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let channels = match tokens[0].as_str() {
            "PF" => 3,
            "Pf" => 1,
            other => return Err(Error::parse(path, format!("unknown PFM magic {other:?}"))),
        };
        let dim = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(path, format!("bad PFM {what} {s:?}")))
        };
        let width = dim(&tokens[1], "width")?;
        let height = dim(&tokens[2], "height")?;
        let scale: f32 = tokens[3]
            .parse()
            .map_err(|_| Error::parse(path, format!("bad PFM scale {:?}", tokens[3])))?;
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::parse(path, "PFM scale must be non-zero"));
        }
        let little = scale < 0.0;
        let need = width * height * channels * 4;
        if bytes.len() < pos || bytes.len() - pos != need {
            return Err(Error::parse(
                path,
                format!("PFM raster has {} bytes, expected {need}", bytes.len().saturating_sub(pos)),
            ));
        }
        let vals: Vec<f32> = bytes[pos..]
            .chunks_exact(4)
            .map(|c| {
                let a: [u8; 4] = c.try_into().unwrap();
                if little {
                    f32::from_le_bytes(a)
                } else {
                    f32::from_be_bytes(a)
                }
            })
            .collect();
        let mut img = HdrImage::new(width, height);
        for (row_idx, row) in vals.chunks_exact(width.max(1) * channels).enumerate() {
            let y = height - 1 - row_idx;
            for x in 0..width {
                let px = if channels == 3 {
                    [row[3 * x], row[3 * x + 1], row[3 * x + 2]]
                } else {
                    [row[x]; 3]
                };
                img.set(x, y, px);
            }
        }
        Ok(img)
    }

    /// Reads a Radiance RGBE (`.hdr`) file.
    pub fn read_rgbe(path: &Path) -> Result<HdrImage> {
        let img = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|e| image_error(path, e))?
            .into_rgb32f();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        HdrImage::from_pixels(w as usize, h as usize, pixels)
    }
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::parse(path, other.to_string()),
    }
}

/// The sRGB transfer function on a value in [0, 1].
pub fn linear_to_srgb(v: f32) -> f32 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> HdrImage {
        HdrImage::from_fn(5, 3, |x, y| [x as f32 * 0.1, y as f32 * 1.5, -0.25 + x as f32 * y as f32])
    }

    #[test]
    fn pfm_round_trip_is_bit_exact() {
        let img = ramp();
        let back = HdrImage::from_pfm_bytes(&img.to_pfm_bytes(), Path::new("mem")).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pfm_layout_is_bottom_up_little_endian() {
        let img = ramp();
        let bytes = img.to_pfm_bytes();
        let header = b"PF\n5 3\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let first = f32::from_le_bytes(bytes[header.len() + 4..header.len() + 8].try_into().unwrap());
        // first stored pixel is the bottom-left one
        assert_eq!(first, img.get(0, 2)[1]);
    }

    #[test]
    fn big_endian_greyscale_is_accepted() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&0.5f32.to_be_bytes());
        bytes.extend_from_slice(&2.0f32.to_be_bytes());
        let img = HdrImage::from_pfm_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(img.pixels, vec![[0.5; 3], [2.0; 3]]);
    }

    #[test]
    fn malformed_pfm_is_a_parse_error() {
        let bytes = ramp().to_pfm_bytes();
        assert!(matches!(
            HdrImage::from_pfm_bytes(&bytes[..bytes.len() - 2], Path::new("m")),
            Err(Error::Parse { .. })
        ));
        assert!(HdrImage::from_pfm_bytes(b"P6\n1 1\n255\n", Path::new("m")).is_err());
    }

    #[test]
    fn srgb_endpoints() {
        assert_eq!(linear_to_srgb(0.0), 0.0);
        assert!((linear_to_srgb(1.0) - 1.0).abs() < 1e-6);
        assert!((linear_to_srgb(0.18) - 0.4613561).abs() < 1e-5);
    }

    #[test]
    fn rgbe_file_decodes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.hdr");
        // 2x1 image, flat scanlines: (1,0.5,0.25) and (2,2,2)
        let mut f = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 2\n".to_vec();
        f.extend_from_slice(&[128, 64, 32, 129, 128, 128, 128, 130]);
        std::fs::write(&path, f).unwrap();
        let img = HdrImage::read_rgbe(&path).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.pixels[0], [1.0, 0.5, 0.25]);
        assert_eq!(img.pixels[1], [2.0, 2.0, 2.0]);
    }
}
