use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::backbone::{Backbone, FeatureMap};
use super::head::{FusionHead, FusedVector, HeadSpec, MapSample};
use crate::detect::RegionCrop;
use crate::error::{Error, Result};
use crate::ingest::PainClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    /// Seeds initialization and shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            epochs: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the epoch's batches, weighted by batch size.
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
    pub warnings: Vec<String>,
}

impl History {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

pub(crate) fn single_class_warning<I: IntoIterator<Item = PainClass>>(labels: I) -> Option<String> {
    let mut seen = [false; 2];
    for l in labels {
        seen[l.index()] = true;
    }
    (seen != [true, true]).then(|| {
        let msg = "training set contains a single class".to_owned();
        warn!("{msg}");
        msg
    })
}

/// Mini-batch Adam loop shared by the trainable models. `step` receives the
/// batch indices, returns `(mean loss, gradient, correct)` for that batch.
pub(crate) fn run_epochs<F>(
    params: &mut [f64],
    n_samples: usize,
    cfg: &TrainConfig,
    history: &mut History,
    mut step: F,
) -> Result<()>
where
    F: FnMut(&[f64], &[usize]) -> Result<(f64, Vec<f64>, usize)>,
{
    cfg.adam.validate()?;
    if n_samples == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut opt = Adam::new(cfg.adam, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut order: Vec<usize> = (0..n_samples).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(cfg.adam.batch_size) {
            let (loss, grad, ok) = step(params, batch)?;
            opt.step(params, &grad);
            loss_sum += loss * batch.len() as f64;
            correct += ok;
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / n_samples as f64,
            accuracy: correct as f64 / n_samples as f64,
        };
        debug!("epoch {epoch}: loss {:.5} accuracy {:.4}", stats.loss, stats.accuracy);
        history.epochs.push(stats);
    }
    history.steps = opt.steps() as usize;
    Ok(())
}

/// Trains the head on precomputed backbone maps.
pub fn train_head_on_maps(head: &mut FusionHead, samples: &[MapSample<'_>], cfg: &TrainConfig) -> Result<History> {
    let mut history = History::default();
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    history.warnings.extend(single_class_warning(samples.iter().map(|s| s.label)));
    let spec = *head.spec();
    let mut params = head.params().to_vec();
    run_epochs(&mut params, samples.len(), cfg, &mut history, |p, idx| {
        let batch: Vec<_> = idx.iter().map(|&i| samples[i]).collect();
        FusionHead::from_params(spec, p.to_vec())?.loss_and_grad(&batch)
    })?;
    *head = FusionHead::from_params(spec, params)?;
    Ok(history)
}

/// Both frozen backbones and the trainable head.
#[derive(Debug, Clone)]
pub struct FusionModel {
    pub face_backbone: Backbone,
    pub body_backbone: Backbone,
    pub head: FusionHead,
}

/// One frame's face and body crops with its label.
#[derive(Debug, Clone)]
pub struct LabeledCrops {
    pub face: RegionCrop,
    pub body: RegionCrop,
    pub label: PainClass,
}

impl FusionModel {
    pub fn new(face_backbone: Backbone, body_backbone: Backbone, head_seed: u64) -> Result<Self> {
        if face_backbone.out_channels() != body_backbone.out_channels() {
            return Err(Error::IncompleteSpec(
                "face and body backbones emit different channel counts".into(),
            ));
        }
        let head = FusionHead::new(HeadSpec::for_backbone(face_backbone.out_channels()), head_seed)?;
        Ok(FusionModel {
            face_backbone,
            body_backbone,
            head,
        })
    }

    pub fn maps(&self, face: &RegionCrop, body: &RegionCrop) -> Result<(FeatureMap, FeatureMap)> {
        Ok((self.face_backbone.extract(face)?, self.body_backbone.extract(body)?))
    }

    pub fn fused(&self, face: &RegionCrop, body: &RegionCrop) -> Result<FusedVector> {
        let (f, b) = self.maps(face, body)?;
        self.head.fuse(&f, &b)
    }

    pub fn classify(&self, face: &RegionCrop, body: &RegionCrop) -> Result<[f64; 2]> {
        let v = self.fused(face, body)?;
        self.head.classify_frame(&v)
    }
}

/// Fine-tunes the head with both backbones frozen. Backbone maps are computed
/// once up front; the backbones are only borrowed immutably.
pub fn train_fusion_head(model: &mut FusionModel, data: &[LabeledCrops], cfg: &TrainConfig) -> Result<History> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let FusionModel {
        face_backbone,
        body_backbone,
        head,
    } = model;
    let maps = data
        .iter()
        .map(|d| Ok((face_backbone.extract(&d.face)?, body_backbone.extract(&d.body)?)))
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<_> = maps
        .iter()
        .zip(data)
        .map(|((f, b), d)| MapSample {
            face: f,
            body: b,
            label: d.label,
        })
        .collect();
    train_head_on_maps(head, &samples, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn separable_maps(n: usize, channels: usize, seed: u64) -> (Vec<FeatureMap>, Vec<PainClass>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut maps = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let pain = i % 2 == 0;
            for _ in 0..2 {
                let data = (0..49 * channels)
                    .map(|k| {
                        let base: f32 = rng.gen_range(0.0..1.0);
                        if pain && k % channels == 0 { base + 1.5 } else { base }
                    })
                    .collect();
                maps.push(FeatureMap::new(channels, data).unwrap());
            }
            labels.push(if pain { PainClass::Pain } else { PainClass::NoPain });
        }
        (maps, labels)
    }

    // Plain logistic regression on the flattened maps, trained by gradient descent.
    fn logistic_oracle_accuracy(maps: &[FeatureMap], labels: &[PainClass]) -> f64 {
        let dim = 2 * maps[0].data().len();
        let xs: Vec<Vec<f64>> = (0..labels.len())
            .map(|i| maps[2 * i].data().iter().chain(maps[2 * i + 1].data()).map(|&v| v as f64).collect())
            .collect();
        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        for _ in 0..300 {
            let mut gw = vec![0.0; dim];
            let mut gb = 0.0;
            for (x, l) in xs.iter().zip(labels) {
                let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
                let err = 1.0 / (1.0 + (-z).exp()) - l.as_target();
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += err * xi;
                }
                gb += err;
            }
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= 0.01 * g / xs.len() as f64;
            }
            b -= 0.01 * gb / xs.len() as f64;
        }
        let correct = xs
            .iter()
            .zip(labels)
            .filter(|(x, l)| {
                let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
                (z > 0.0) == l.is_pain()
            })
            .count();
        correct as f64 / xs.len() as f64
    }

    fn samples<'a>(maps: &'a [FeatureMap], labels: &[PainClass]) -> Vec<MapSample<'a>> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| MapSample {
                face: &maps[2 * i],
                body: &maps[2 * i + 1],
                label,
            })
            .collect()
    }

    #[test]
    fn separable_loss_decreases() {
        let (maps, labels) = separable_maps(64, 8, 1);
        assert_eq!(logistic_oracle_accuracy(&maps, &labels), 1.0);
        let mut head = FusionHead::new(HeadSpec::for_backbone(8), 2).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let h = train_head_on_maps(&mut head, &samples(&maps, &labels), &cfg).unwrap();
        let losses = h.losses();
        assert_eq!(losses.len(), 5);
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
        assert_eq!(h.steps, 5 * 4);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let (maps, labels) = separable_maps(10, 4, 3);
        let mut head = FusionHead::new(HeadSpec::for_backbone(4), 2).unwrap();
        let before = head.params().to_vec();
        let cfg = TrainConfig {
            adam: AdamConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            epochs: 3,
            seed: 0,
        };
        train_head_on_maps(&mut head, &samples(&maps, &labels), &cfg).unwrap();
        assert_eq!(head.params(), &before[..]);
    }

    #[test]
    fn empty_and_single_class() {
        let mut head = FusionHead::new(HeadSpec::for_backbone(4), 2).unwrap();
        assert!(matches!(
            train_head_on_maps(&mut head, &[], &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
        let (maps, _) = separable_maps(4, 4, 3);
        let labels = vec![PainClass::NoPain; 4];
        let cfg = TrainConfig {
            epochs: 1,
            ..Default::default()
        };
        let h = train_head_on_maps(&mut head, &samples(&maps, &labels), &cfg).unwrap();
        assert_eq!(h.warnings.len(), 1);
    }
}
