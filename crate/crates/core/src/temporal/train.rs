use super::lstm::{TemporalModel, TemporalSample};
use super::window::{SequenceWindow, VideoSequence};
use crate::error::{Error, Result};
use crate::model::{run_epochs, single_class_warning, History, TrainConfig};

pub fn window_samples<'a>(windows: &[SequenceWindow<'a>]) -> Vec<TemporalSample<'a>> {
    windows
        .iter()
        .map(|w| TemporalSample {
            frames: w.features,
            label: w.label,
        })
        .collect()
}

pub fn video_samples<'a, I>(videos: I) -> Vec<TemporalSample<'a>>
where
    I: IntoIterator<Item = &'a VideoSequence>,
{
    videos
        .into_iter()
        .map(|v| TemporalSample {
            frames: &v.features,
            label: v.label,
        })
        .collect()
}

/// Binary cross-entropy training with mini-batch Adam.
pub fn train_temporal(model: &mut TemporalModel, samples: &[TemporalSample<'_>], cfg: &TrainConfig) -> Result<History> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = model.spec().input_len;
    for s in samples {
        if let Some(bad) = s.frames.iter().find(|f| f.len() != dim) {
            return Err(Error::FeatureLengthMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        if s.frames.is_empty() {
            return Err(Error::EmptyVideo);
        }
    }
    let mut history = History::default();
    history.warnings.extend(single_class_warning(samples.iter().map(|s| s.label)));
    let spec = model.spec().clone();
    let mut params = model.params().to_vec();
    run_epochs(&mut params, samples.len(), cfg, &mut history, |p, idx| {
        let batch: Vec<_> = idx.iter().map(|&i| samples[i]).collect();
        TemporalModel::from_params(spec.clone(), p.to_vec())?.loss_and_grad(&batch)
    })?;
    *model = TemporalModel::from_params(spec, params)?;
    Ok(history)
}
