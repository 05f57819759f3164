use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{LossTerms, LossWeights, SampleBatch};
use super::RelitModel;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after every epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weights: LossWeights,
    #[serde(skip, default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            lr_decay: 0.995,
            batch_size: 8192,
            epochs: 30,
            seed: 42,
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning rate must be finite and non-negative"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::domain("learning-rate decay must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch size must be at least 1"));
        }
        let w = &self.weights;
        if [w.microfacet, w.photometric, w.normal].iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::domain("loss weights must be non-negative"));
        }
        Ok(())
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(epoch.saturating_sub(1) as i32)
    }
}

/// Flattened training samples; see [`SampleBatch`] for the layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub uvst: Vec<f32>,
    pub view: Vec<f32>,
    pub light: Vec<f32>,
    pub color: Vec<f32>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.uvst.len() / 4
    }

    pub fn is_empty(&self) -> bool {
        self.uvst.is_empty()
    }

    pub fn push(&mut self, uvst: [f64; 4], view: [f64; 3], light: [f64; 3], color: [f32; 3]) {
        self.uvst.extend(uvst.map(|x| x as f32));
        self.view.extend(view.map(|x| x as f32));
        self.light.extend(light.map(|x| x as f32));
        self.color.extend(color);
    }

    pub fn as_batch(&self) -> SampleBatch<'_> {
        SampleBatch {
            uvst: &self.uvst,
            view: &self.view,
            light: &self.light,
            color: &self.color,
        }
    }

    /// Copies the samples at `indices` into `out`, reusing its buffers.
    pub fn gather_into(&self, indices: &[usize], out: &mut TrainingSet) {
        out.uvst.clear();
        out.view.clear();
        out.light.clear();
        out.color.clear();
        for &i in indices {
            out.uvst.extend_from_slice(&self.uvst[4 * i..4 * i + 4]);
            out.view.extend_from_slice(&self.view[3 * i..3 * i + 3]);
            out.light.extend_from_slice(&self.light[3 * i..3 * i + 3]);
            out.color.extend_from_slice(&self.color[3 * i..3 * i + 3]);
        }
    }
}

/// Mean loss terms over one epoch. Epoch 0 is the untrained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub lr: f64,
    pub terms: LossTerms,
}

pub const HISTORY_HEADER: &str = "epoch,L,L_p,L_m,L_n";

pub fn write_history(path: &Path, history: &[EpochLoss]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for h in history {
        s.push_str(&format!(
            "{},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            h.epoch, h.terms.total, h.terms.photometric, h.terms.microfacet, h.terms.normal
        ));
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

impl<T: Scalar> RelitModel<T> {
    /// Mean loss over the whole set without updating anything.
    pub fn evaluate_loss(&self, set: &TrainingSet, weights: &LossWeights, chunk: usize) -> Result<LossTerms> {
        if set.is_empty() {
            return Err(Error::domain("empty training set"));
        }
        let mut buf = TrainingSet::default();
        let idx: Vec<usize> = (0..set.len()).collect();
        let mut all = Vec::with_capacity(set.len());
        for c in idx.chunks(chunk.max(1)) {
            set.gather_into(c, &mut buf);
            all.extend(self.loss_impl(&buf.as_batch(), weights, false)?.2);
        }
        Ok(mean_terms(&all))
    }

    /// Trains for `cfg.epochs` epochs of shuffled mini-batches and returns
    /// the loss history, starting with the untrained model as epoch 0.
    /// `on_epoch` runs after every epoch (for checkpoints or logging).
    pub fn train(
        &mut self,
        set: &TrainingSet,
        cfg: &TrainConfig,
        mut on_epoch: impl FnMut(&EpochLoss, &RelitModel<T>) -> Result<()>,
    ) -> Result<Vec<EpochLoss>> {
        cfg.validate()?;
        if set.is_empty() {
            return Err(Error::domain("cannot train on an empty dataset"));
        }
        let mut history = Vec::with_capacity(cfg.epochs + 1);
        history.push(EpochLoss {
            epoch: 0,
            lr: 0.0,
            terms: self.evaluate_loss(set, &cfg.weights, cfg.batch_size)?,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..set.len()).collect();
        let mut buf = TrainingSet::default();
        // per-sample terms, summed in sample order so epoch means do not depend on the shuffle
        let mut per_sample = vec![LossTerms::default(); set.len()];

        for epoch in 1..=cfg.epochs {
            let lr = cfg.lr_at_epoch(epoch);
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                set.gather_into(chunk, &mut buf);
                let (_, grads, terms) = self.loss_impl(&buf.as_batch(), &cfg.weights, true)?;
                let grads = grads.expect("gradients requested");
                for (net, g) in self.networks_mut().into_iter().zip(&grads.networks) {
                    net.adam_step(g, lr, &cfg.adam).map_err(|e| match e {
                        Error::Training { location, message } => Error::Training {
                            location: format!("epoch {epoch}, {location}"),
                            message,
                        },
                        other => other,
                    })?;
                }
                for (&i, t) in chunk.iter().zip(terms) {
                    per_sample[i] = t;
                }
            }
            let entry = EpochLoss {
                epoch,
                lr,
                terms: mean_terms(&per_sample),
            };
            if !entry.terms.total.is_finite() {
                return Err(Error::Training {
                    location: format!("epoch {epoch}"),
                    message: "epoch loss is not finite".into(),
                });
            }
            log::info!(
                "epoch {epoch}: L {:.6} L_p {:.6} L_m {:.6} L_n {:.6} (lr {lr:.3e})",
                entry.terms.total,
                entry.terms.photometric,
                entry.terms.microfacet,
                entry.terms.normal
            );
            on_epoch(&entry, self)?;
            history.push(entry);
        }
        Ok(history)
    }
}

/// Means accumulated in slice order.
fn mean_terms(terms: &[LossTerms]) -> LossTerms {
    let mut acc = LossTerms::default();
    for t in terms {
        acc.total += t.total;
        acc.photometric += t.photometric;
        acc.microfacet += t.microfacet;
        acc.normal += t.normal;
    }
    let n = terms.len().max(1) as f64;
    LossTerms {
        total: acc.total / n,
        photometric: acc.photometric / n,
        microfacet: acc.microfacet / n,
        normal: acc.normal / n,
    }
}
