mod baseline;
mod metrics;
mod split;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

pub use baseline::{
    barycentric_baseline, nearest_light, nearest_light_baseline, BarycentricResult, LightTriangulation,
};
pub use metrics::{mse, psnr, ssim, PSNR_CAP_DB, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use split::SplitSpec;

use crate::datagen::OlatDataset;
use crate::error::{Error, Result};
use crate::hdr_image::HdrImage;
use crate::model::RelitModel;

pub const REPORT_VERSION: u32 = 1;
pub const REPORT_HEADER: &str = "view,light,psnr_db,ssim,render_seconds";

/// What produces the held-out images.
#[derive(Debug, Clone, Copy)]
pub enum Method<'a> {
    Model(&'a RelitModel<f32>),
    NearestLight,
    Barycentric,
}

impl Method<'_> {
    pub fn name(&self) -> String {
        match self {
            Method::Model(m) => m.config.variant.to_string(),
            Method::NearestLight => "nearest_light".into(),
            Method::Barycentric => "barycentric".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub view: usize,
    pub light: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub render_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub rows: Vec<MetricRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub render_seconds: f64,
    pub rays_per_second: f64,
    /// Barycentric queries that fell outside the training-light hull.
    pub fallbacks: usize,
}

/// Provenance written into the report header.
#[derive(Debug, Clone, Default)]
pub struct ReportContext {
    pub checkpoint_sha256: Option<String>,
    pub git_commit: Option<String>,
}

fn clamp_unit(img: &HdrImage) -> HdrImage {
    HdrImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|p| p.map(|v| v.clamp(0.0, 1.0))).collect(),
    }
}

/// Scores `method` on every held-out view under every held-out light. Both
/// images are compared in linear color clamped to [0, 1].
pub fn evaluate(method: Method<'_>, dataset: &OlatDataset, split: &SplitSpec) -> Result<MetricReport> {
    dataset.validate()?;
    split.validate(dataset.cameras.len(), dataset.lights.len())?;
    if split.held_out_views.is_empty() || split.held_out_lights.is_empty() {
        return Err(Error::domain("split holds out no (view, light) pairs to evaluate"));
    }
    let train_lights = split.training_lights(dataset.lights.len());
    let triangulation = match method {
        Method::Barycentric => Some(LightTriangulation::new(dataset, &train_lights)?),
        _ => None,
    };
    let queries: Vec<_> = split.held_out_lights.iter().map(|&l| dataset.lights.direction(l)).collect();
    let mut rows = Vec::new();
    let mut total_seconds = 0.0;
    let mut total_rays = 0usize;
    let mut fallbacks = 0;
    for &v in &split.held_out_views {
        let cam = &dataset.cameras[v];
        let start = Instant::now();
        let predictions: Vec<HdrImage> = match method {
            Method::Model(model) => model
                .render_view_lights(cam, &dataset.two_plane, &queries)?
                .into_iter()
                .map(|r| r.image)
                .collect(),
            Method::NearestLight => queries
                .iter()
                .map(|q| nearest_light_baseline(dataset, v, &train_lights, q))
                .collect::<Result<_>>()?,
            Method::Barycentric => {
                let tri = triangulation.as_ref().expect("built above");
                let mut out = Vec::with_capacity(queries.len());
                for q in &queries {
                    let r = barycentric_baseline(dataset, v, tri, q)?;
                    fallbacks += r.fallback as usize;
                    out.push(r.image);
                }
                out
            }
        };
        let seconds = start.elapsed().as_secs_f64();
        total_seconds += seconds;
        total_rays += cam.width as usize * cam.height as usize * queries.len();
        let per_frame = seconds / queries.len() as f64;
        for (pred, &l) in predictions.iter().zip(&split.held_out_lights) {
            let gt = clamp_unit(dataset.image(v, l));
            let pred = clamp_unit(pred);
            rows.push(MetricRow {
                view: v,
                light: l,
                psnr: psnr(&pred, &gt, 1.0)?,
                ssim: ssim(&pred, &gt)?,
                render_seconds: per_frame,
            });
        }
    }
    let n = rows.len() as f64;
    Ok(MetricReport {
        method: method.name(),
        mean_psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / n,
        mean_ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        rows,
        render_seconds: total_seconds,
        rays_per_second: if total_seconds > 0.0 { total_rays as f64 / total_seconds } else { f64::INFINITY },
        fallbacks,
    })
}

impl MetricReport {
    /// Per-image rows and means without the timing columns, for comparing runs.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("view,light,psnr_db,ssim\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.6},{:.6}", r.view, r.light, r.psnr, r.ssim);
        }
        let _ = writeln!(s, "mean,,{:.6},{:.6}", self.mean_psnr, self.mean_ssim);
        s
    }

    pub fn to_csv(&self, ctx: &ReportContext) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# relit-eval report v{REPORT_VERSION}");
        let _ = writeln!(
            s,
            "# color_space=linear clamp=[0,1] peak=1 psnr_cap_db={PSNR_CAP_DB} ssim_luma=rec709 \
             ssim_window={SSIM_WINDOW} ssim_sigma={SSIM_SIGMA} ssim_k1={SSIM_K1} ssim_k2={SSIM_K2} lpips=omitted"
        );
        let _ = writeln!(
            s,
            "# method={} checkpoint_sha256={} git={}",
            self.method,
            ctx.checkpoint_sha256.as_deref().unwrap_or("none"),
            ctx.git_commit.as_deref().unwrap_or("unknown")
        );
        let _ = writeln!(s, "{REPORT_HEADER}");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6}",
                r.view, r.light, r.psnr, r.ssim, r.render_seconds
            );
        }
        let _ = writeln!(
            s,
            "mean,,{:.6},{:.6},{:.6}",
            self.mean_psnr,
            self.mean_ssim,
            self.render_seconds / self.rows.len().max(1) as f64
        );
        let _ = writeln!(
            s,
            "# rays_per_second={:.1} total_render_seconds={:.6} hull_fallbacks={}",
            self.rays_per_second, self.render_seconds, self.fallbacks
        );
        s
    }

    pub fn write_csv(&self, path: &Path, ctx: &ReportContext) -> Result<()> {
        std::fs::write(path, self.to_csv(ctx)).map_err(|e| Error::io(path, e))
    }
}
