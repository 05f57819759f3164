use serde::{Deserialize, Serialize};

use super::{LmTarget, NormalDecode, RelitModel, FIXED_ROUGHNESS};
use crate::brdf::microfacet_backward;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::nn::{ForwardCache, MlpGrads, Scalar};

/// Norms below this are treated as zero when differentiating `|x|`.
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub microfacet: f64,
    pub photometric: f64,
    pub normal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            microfacet: 0.1,
            photometric: 1.0,
            normal: 0.01,
        }
    }
}

/// Batch means of the loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub photometric: f64,
    pub microfacet: f64,
    pub normal: f64,
}

/// Training samples stored row-major: `uvst` is `n x 4` (normalized ray
/// coordinates), `view`, `light` and `color` are `n x 3`.
#[derive(Debug, Clone, Copy)]
pub struct SampleBatch<'a> {
    pub uvst: &'a [f32],
    pub view: &'a [f32],
    pub light: &'a [f32],
    pub color: &'a [f32],
}

impl SampleBatch<'_> {
    pub fn len(&self) -> usize {
        self.uvst.len() / 4
    }

    pub fn is_empty(&self) -> bool {
        self.uvst.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::domain("empty training batch"));
        }
        if self.uvst.len() != 4 * n || self.view.len() != 3 * n || self.light.len() != 3 * n || self.color.len() != 3 * n {
            return Err(Error::domain("training batch arrays have inconsistent lengths"));
        }
        Ok(())
    }
}

fn vec3(a: &[f32], i: usize) -> Vec3 {
    Vec3::new(a[3 * i] as f64, a[3 * i + 1] as f64, a[3 * i + 2] as f64)
}

/// Parameter gradients for every network, in [`RelitModel::networks`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T: Scalar> {
    pub networks: Vec<MlpGrads<T>>,
}

struct DecomposeCaches<T> {
    trunk: ForwardCache<T>,
    normal: ForwardCache<T>,
    albedo: ForwardCache<T>,
    rough: Option<ForwardCache<T>>,
}

/// Loss terms of one sample, with gradients towards its inputs.
struct SampleLoss {
    terms: LossTerms,
    d_color: [f64; 3],
    d_normal: [f64; 3],
    d_albedo: [f64; 3],
    d_rough: f64,
}

impl<T: Scalar> RelitModel<T> {
    /// Weighted loss over `batch` (mean over samples) and its gradient with
    /// respect to every parameter.
    pub fn loss_and_grads(&self, batch: &SampleBatch<'_>, weights: &LossWeights) -> Result<(LossTerms, ModelGrads<T>)> {
        let (terms, grads, _) = self.loss_impl(batch, weights, true)?;
        Ok((terms, grads.expect("gradients requested")))
    }

    /// Loss only (no backward pass).
    pub fn loss(&self, batch: &SampleBatch<'_>, weights: &LossWeights) -> Result<LossTerms> {
        Ok(self.loss_impl(batch, weights, false)?.0)
    }

    /// Loss plus the per-sample terms, in batch order.
    pub(crate) fn loss_impl(
        &self,
        batch: &SampleBatch<'_>,
        weights: &LossWeights,
        want_grads: bool,
    ) -> Result<(LossTerms, Option<ModelGrads<T>>, Vec<LossTerms>)> {
        batch.validate()?;
        let n = batch.len();
        let uvst: Vec<T> = batch.uvst.iter().map(|&x| T::from_f64(x as f64)).collect();
        if let Some(i) = batch.uvst.iter().position(|x| !x.is_finite() || x.abs() as f64 > 1.0 + super::COORD_TOLERANCE) {
            return Err(Error::domain(format!("sample {} has unnormalized ray coordinates", i / 4)));
        }

        // forward
        let dec = match &self.decompose {
            Some(d) => {
                let trunk = d.trunk.forward(&uvst, n)?;
                let normal = d.normal.forward(trunk.output(), n)?;
                let albedo = d.albedo.forward(trunk.output(), n)?;
                let rough = match &d.roughness {
                    Some(r) => Some(r.forward(trunk.output(), n)?),
                    None => None,
                };
                Some(DecomposeCaches {
                    trunk,
                    normal,
                    albedo,
                    rough,
                })
            }
            None => None,
        };
        let enc_in: Vec<T> = match &dec {
            Some(c) => {
                let mut x = Vec::with_capacity(n * 11);
                for i in 0..n {
                    x.extend_from_slice(&c.normal.output()[3 * i..3 * i + 3]);
                    x.extend_from_slice(&c.albedo.output()[3 * i..3 * i + 3]);
                    x.push(match &c.rough {
                        Some(r) => r.output()[i],
                        None => T::from_f64(FIXED_ROUGHNESS),
                    });
                    x.extend_from_slice(&uvst[4 * i..4 * i + 4]);
                }
                x
            }
            None => uvst.clone(),
        };
        let enc = self.render.encoder.forward(&enc_in, n)?;
        let w = self.config.render_width;
        let mut tail_in = Vec::with_capacity(n * (w + 3));
        for i in 0..n {
            tail_in.extend_from_slice(&enc.output()[i * w..(i + 1) * w]);
            tail_in.extend(batch.light[3 * i..3 * i + 3].iter().map(|&x| T::from_f64(x as f64)));
        }
        let tail = self.render.tail.forward(&tail_in, n)?;

        // per-sample loss in f64
        let mut sum = LossTerms::default();
        let mut per_sample = Vec::with_capacity(n);
        let mut d_color = vec![T::zero(); n * 3];
        let mut d_n = vec![T::zero(); n * 3];
        let mut d_a = vec![T::zero(); n * 3];
        let mut d_r = vec![T::zero(); n];
        let inv_n = 1.0 / n as f64;
        for i in 0..n {
            let pred: [f64; 3] = std::array::from_fn(|c| tail.output()[3 * i + c].as_f64());
            let target: [f64; 3] = std::array::from_fn(|c| batch.color[3 * i + c] as f64);
            let decomp = dec.as_ref().map(|c| {
                let normal: [f64; 3] = std::array::from_fn(|k| c.normal.output()[3 * i + k].as_f64());
                let albedo: [f64; 3] = std::array::from_fn(|k| c.albedo.output()[3 * i + k].as_f64());
                let rough = c.rough.as_ref().map(|r| r.output()[i].as_f64());
                (normal, albedo, rough)
            });
            let s = sample_loss(
                pred,
                target,
                decomp,
                &vec3(batch.view, i),
                &vec3(batch.light, i),
                weights,
                self.config.normal_decode,
                self.config.lm_target,
            );
            if !s.terms.total.is_finite() {
                return Err(Error::Training {
                    location: format!("sample {i}"),
                    message: "loss is not finite".into(),
                });
            }
            per_sample.push(s.terms);
            sum.total += s.terms.total;
            sum.photometric += s.terms.photometric;
            sum.microfacet += s.terms.microfacet;
            sum.normal += s.terms.normal;
            if want_grads {
                for c in 0..3 {
                    d_color[3 * i + c] = T::from_f64(s.d_color[c] * inv_n);
                    d_n[3 * i + c] = T::from_f64(s.d_normal[c] * inv_n);
                    d_a[3 * i + c] = T::from_f64(s.d_albedo[c] * inv_n);
                }
                d_r[i] = T::from_f64(s.d_rough * inv_n);
            }
        }
        let terms = LossTerms {
            total: sum.total * inv_n,
            photometric: sum.photometric * inv_n,
            microfacet: sum.microfacet * inv_n,
            normal: sum.normal * inv_n,
        };
        if !want_grads {
            return Ok((terms, None, per_sample));
        }

        // backward
        let (g_tail, d_tail_in) = self.render.tail.backward(&tail, &d_color)?;
        let mut d_enc = Vec::with_capacity(n * w);
        for i in 0..n {
            d_enc.extend_from_slice(&d_tail_in[i * (w + 3)..i * (w + 3) + w]);
        }
        let (g_enc, d_enc_in) = self.render.encoder.backward(&enc, &d_enc)?;

        let mut networks = Vec::with_capacity(6);
        if let (Some(d), Some(c)) = (&self.decompose, &dec) {
            for i in 0..n {
                let row = &d_enc_in[11 * i..11 * i + 11];
                for k in 0..3 {
                    d_n[3 * i + k] = d_n[3 * i + k] + row[k];
                    d_a[3 * i + k] = d_a[3 * i + k] + row[3 + k];
                }
                d_r[i] = d_r[i] + row[6];
            }
            let (g_normal, mut d_feat) = d.normal.backward(&c.normal, &d_n)?;
            let (g_albedo, d_feat_a) = d.albedo.backward(&c.albedo, &d_a)?;
            add_into(&mut d_feat, &d_feat_a);
            let g_rough = match (&d.roughness, &c.rough) {
                (Some(r), Some(rc)) => {
                    let (g, d_feat_r) = r.backward(rc, &d_r)?;
                    add_into(&mut d_feat, &d_feat_r);
                    Some(g)
                }
                _ => None,
            };
            let (g_trunk, _) = d.trunk.backward(&c.trunk, &d_feat)?;
            networks.extend([g_trunk, g_normal, g_albedo]);
            networks.extend(g_rough);
        }
        networks.push(g_enc);
        networks.push(g_tail);
        Ok((terms, Some(ModelGrads { networks }), per_sample))
    }
}

fn add_into<T: Scalar>(a: &mut [T], b: &[T]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x = *x + *y);
}

fn norm3(d: [f64; 3]) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// `|d|` and its gradient `d / |d|` (zero at the origin).
fn norm_and_grad(d: [f64; 3]) -> (f64, [f64; 3]) {
    let len = norm3(d);
    if len < NORM_EPS {
        (len, [0.0; 3])
    } else {
        (len, d.map(|x| x / len))
    }
}

#[allow(clippy::too_many_arguments)]
fn sample_loss(
    pred: [f64; 3],
    target: [f64; 3],
    decomp: Option<([f64; 3], [f64; 3], Option<f64>)>,
    view: &Vec3,
    light: &Vec3,
    w: &LossWeights,
    decode: NormalDecode,
    lm_target: LmTarget,
) -> SampleLoss {
    let (lp, gp) = norm_and_grad(std::array::from_fn(|c| pred[c] - target[c]));
    let mut out = SampleLoss {
        terms: LossTerms {
            photometric: lp,
            ..LossTerms::default()
        },
        d_color: gp.map(|g| w.photometric * g),
        d_normal: [0.0; 3],
        d_albedo: [0.0; 3],
        d_rough: 0.0,
    };
    let Some((n_raw, albedo_raw, rough)) = decomp else {
        out.terms.total = w.photometric * lp;
        return out;
    };

    let (n_shade, chain) = match decode {
        NormalDecode::Raw => (Vec3::from(n_raw), 1.0),
        NormalDecode::Decoded => (Vec3::from(n_raw) * 2.0 - Vec3::repeat(1.0), 2.0),
    };
    let albedo = albedo_raw.map(|a| a.clamp(0.0, 1.0));
    let roughness = rough.unwrap_or(FIXED_ROUGHNESS);
    let include_cosine = lm_target == LmTarget::Cosine;

    // value pass to get the residual, then the VJP with the real upstream
    let (m, _) = microfacet_backward(&n_shade, albedo, roughness, view, light, include_cosine, [0.0; 3]);
    let (lm, gm) = norm_and_grad(std::array::from_fn(|c| pred[c] - m[c]));
    let (_, mg) = microfacet_backward(
        &n_shade,
        albedo,
        roughness,
        view,
        light,
        include_cosine,
        gm.map(|g| -w.microfacet * g),
    );

    let nn = n_raw[0] * n_raw[0] + n_raw[1] * n_raw[1] + n_raw[2] * n_raw[2];
    let ln = (1.0 - nn).abs();
    let dln = if nn > 1.0 {
        1.0
    } else if nn < 1.0 {
        -1.0
    } else {
        0.0
    };

    out.terms.microfacet = lm;
    out.terms.normal = ln;
    out.terms.total = w.photometric * lp + w.microfacet * lm + w.normal * ln;
    for c in 0..3 {
        out.d_color[c] += w.microfacet * gm[c];
        out.d_normal[c] = mg.normal[c] * chain + w.normal * dln * 2.0 * n_raw[c];
        // straight-through outside [0, 1] when descent moves back toward the range
        let g = mg.albedo[c];
        let a = albedo_raw[c];
        out.d_albedo[c] = if (0.0..=1.0).contains(&a) || (a > 1.0 && g > 0.0) || (a < 0.0 && g < 0.0) {
            g
        } else {
            0.0
        };
    }
    out.d_rough = if rough.is_some() { mg.roughness } else { 0.0 };
    out
}

/// The full training objective of a 64-bit model on a fixed batch, exposed
/// to the finite-difference checker.
pub struct CompositeLoss {
    pub model: RelitModel<f64>,
    pub batch: super::TrainingSet,
    pub weights: LossWeights,
}

impl CompositeLoss {
    fn locate(&self, index: usize) -> (usize, usize, bool) {
        let mut k = index;
        for (ni, net) in self.model.networks().iter().enumerate() {
            let n = net.layers().len() * 2;
            if k < n {
                return (ni, k / 2, k % 2 == 1);
            }
            k -= n;
        }
        panic!("tensor index {index} out of range");
    }
}

impl crate::nn::GradCheckable for CompositeLoss {
    fn tensor_count(&self) -> usize {
        self.model.networks().iter().map(|n| n.layers().len() * 2).sum()
    }

    fn tensor_label(&self, index: usize) -> String {
        let (ni, li, bias) = self.locate(index);
        let names: &[&str] = match (self.model.decompose.as_ref(), self.model.config.variant) {
            (None, _) => &["encoder", "tail"],
            (Some(d), _) if d.roughness.is_some() => &["trunk", "normal", "albedo", "roughness", "encoder", "tail"],
            _ => &["trunk", "normal", "albedo", "encoder", "tail"],
        };
        format!("{} layer {li} {}", names[ni], if bias { "bias" } else { "weights" })
    }

    fn tensor_mut(&mut self, index: usize) -> &mut [f64] {
        let (ni, li, bias) = self.locate(index);
        let mut nets = self.model.networks_mut();
        let net = nets.swap_remove(ni);
        let p = &mut net.layers_mut()[li].params;
        if bias {
            &mut p.bias
        } else {
            &mut p.weights
        }
    }

    fn loss(&self) -> Result<f64> {
        Ok(self.model.loss(&self.batch.as_batch(), &self.weights)?.total)
    }

    fn gradients(&self) -> Result<Vec<Vec<f64>>> {
        let (_, g) = self.model.loss_and_grads(&self.batch.as_batch(), &self.weights)?;
        Ok(g.networks
            .into_iter()
            .flat_map(|n| n.layers.into_iter().flat_map(|l| [l.weights, l.bias]))
            .collect())
    }
}
