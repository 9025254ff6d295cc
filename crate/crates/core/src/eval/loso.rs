use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auc};
use crate::error::{Error, Result};
use crate::ingest::{PainClass, RecordingPeriod, SubjectId};
use crate::model::{train_head_on_maps, FusionHead, HeadSpec, TrainConfig};
use crate::pipeline::VideoMaps;
use crate::temporal::{
    make_windows, predict_frame_level, train_temporal, video_samples, window_samples, FeatureScaler, SequenceWindow,
    TemporalModel, TemporalSpec, VideoSequence, DEFAULT_WINDOW_LEN,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSpec {
    pub held_out: SubjectId,
    /// Sorted, never contains `held_out`.
    pub train_subjects: Vec<SubjectId>,
}

impl FoldSpec {
    pub fn trains_on(&self, s: &SubjectId) -> bool {
        self.train_subjects.binary_search(s).is_ok()
    }
}

/// One fold per distinct subject, in sorted subject order.
pub fn loso_split<I: IntoIterator<Item = SubjectId>>(subjects: I) -> Result<Vec<FoldSpec>> {
    let all: BTreeSet<SubjectId> = subjects.into_iter().collect();
    if all.len() < 2 {
        return Err(Error::TooFewSubjects(all.len()));
    }
    Ok(all
        .iter()
        .map(|held| FoldSpec {
            held_out: held.clone(),
            train_subjects: all.iter().filter(|s| *s != held).cloned().collect(),
        })
        .collect())
}

pub trait SubjectScoped {
    fn subject_id(&self) -> &SubjectId;
}

impl SubjectScoped for VideoMaps {
    fn subject_id(&self) -> &SubjectId {
        &self.subject_id
    }
}

impl SubjectScoped for VideoSequence {
    fn subject_id(&self) -> &SubjectId {
        &self.subject_id
    }
}

impl SubjectScoped for SequenceWindow<'_> {
    fn subject_id(&self) -> &SubjectId {
        self.subject_id
    }
}

/// Training items of one fold. Construction fails if any item belongs to the
/// held-out subject or to a subject outside the fold's training set, so
/// anything fitted from a view cannot see held-out data.
#[derive(Debug)]
pub struct TrainingView<'a, T> {
    fold: &'a FoldSpec,
    items: Vec<&'a T>,
}

impl<'a, T: SubjectScoped> TrainingView<'a, T> {
    pub fn new(fold: &'a FoldSpec, items: Vec<&'a T>) -> Result<Self> {
        for item in &items {
            let s = item.subject_id();
            if *s == fold.held_out {
                return Err(Error::Leakage(format!(
                    "held-out subject {s} present in training data"
                )));
            }
            if !fold.trains_on(s) {
                return Err(Error::Leakage(format!(
                    "subject {s} is not in the training set of fold {}",
                    fold.held_out
                )));
            }
        }
        Ok(TrainingView { fold, items })
    }

    pub fn fold(&self) -> &FoldSpec {
        self.fold
    }

    pub fn items(&self) -> &[&'a T] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Splits `items` into the fold's training view and its held-out items.
pub fn split_fold<'a, T: SubjectScoped>(fold: &'a FoldSpec, items: &'a [T]) -> Result<(TrainingView<'a, T>, Vec<&'a T>)> {
    let (test, train): (Vec<&T>, Vec<&T>) = items.iter().partition(|v| *v.subject_id() == fold.held_out);
    Ok((TrainingView::new(fold, train)?, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    FrameLevel,
    VideoLevel,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::FrameLevel => "frame_level",
            EvalMode::VideoLevel => "video_level",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame_level" | "frame" => Ok(EvalMode::FrameLevel),
            "video_level" | "video" => Ok(EvalMode::VideoLevel),
            other => Err(Error::BadConfig(format!("unknown evaluation mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LosoConfig {
    pub mode: EvalMode,
    /// Fusion-head fine-tuning, repeated inside every fold.
    pub head: TrainConfig,
    /// Use every n-th frame of the training videos for the head.
    pub head_frame_stride: usize,
    pub temporal: TrainConfig,
    pub temporal_spec: TemporalSpec,
    pub window_len: usize,
    pub window_stride: usize,
    /// Standardize fused features with training-fold statistics.
    pub standardize: bool,
    /// Folds evaluated concurrently; results do not depend on it.
    pub workers: usize,
}

impl Default for LosoConfig {
    fn default() -> Self {
        LosoConfig {
            mode: EvalMode::VideoLevel,
            head: TrainConfig::default(),
            head_frame_stride: 1,
            temporal: TrainConfig::default(),
            temporal_spec: TemporalSpec::default(),
            window_len: DEFAULT_WINDOW_LEN,
            window_stride: 1,
            standardize: true,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePrediction {
    pub subject_id: SubjectId,
    pub period: Option<RecordingPeriod>,
    /// Frame the prediction belongs to; `None` for whole-video predictions.
    pub frame_index: Option<usize>,
    pub truth: PainClass,
    pub confidence: f64,
}

impl SamplePrediction {
    pub fn predicted(&self) -> PainClass {
        PainClass::from_confidence(self.confidence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub held_out: SubjectId,
    pub n_train_videos: usize,
    pub n_train_samples: usize,
    pub accuracy: f64,
    /// `None` when the held-out subject shows only one class.
    pub auc: Option<f64>,
    pub single_class: bool,
    pub warnings: Vec<String>,
    pub predictions: Vec<SamplePrediction>,
}

impl FoldResult {
    pub fn n_samples(&self) -> usize {
        self.predictions.len()
    }

    pub fn n_correct(&self) -> usize {
        self.predictions.iter().filter(|p| p.predicted() == p.truth).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub mode: EvalMode,
    pub folds: Vec<FoldResult>,
    /// Unweighted mean over folds.
    pub mean_accuracy: f64,
    /// Unweighted mean over folds with both classes.
    pub mean_auc: Option<f64>,
    /// Correct predictions over all predictions.
    pub weighted_accuracy: f64,
    /// Fold AUCs weighted by their sample counts.
    pub weighted_auc: Option<f64>,
}

impl EvaluationReport {
    pub fn from_folds(mode: EvalMode, folds: Vec<FoldResult>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
        let with_auc: Vec<(f64, usize)> = folds.iter().filter_map(|f| f.auc.map(|a| (a, f.n_samples()))).collect();
        let mean_auc = (!with_auc.is_empty()).then(|| with_auc.iter().map(|a| a.0).sum::<f64>() / with_auc.len() as f64);
        let n_auc: usize = with_auc.iter().map(|a| a.1).sum();
        let weighted_auc = (n_auc > 0).then(|| with_auc.iter().map(|(a, n)| a * *n as f64).sum::<f64>() / n_auc as f64);
        let total: usize = folds.iter().map(|f| f.n_samples()).sum();
        let correct: usize = folds.iter().map(|f| f.n_correct()).sum();
        Ok(EvaluationReport {
            mode,
            weighted_accuracy: correct as f64 / total.max(1) as f64,
            folds,
            mean_accuracy,
            mean_auc,
            weighted_auc,
        })
    }

    pub fn single_class_folds(&self) -> usize {
        self.folds.iter().filter(|f| f.single_class).count()
    }
}

fn score_fold(held_out: &SubjectId, predictions: Vec<SamplePrediction>, n_train_videos: usize, n_train_samples: usize, warnings: Vec<String>) -> Result<FoldResult> {
    let truth: Vec<PainClass> = predictions.iter().map(|p| p.truth).collect();
    let predicted: Vec<PainClass> = predictions.iter().map(|p| p.predicted()).collect();
    let scores: Vec<f64> = predictions.iter().map(|p| p.confidence).collect();
    let acc = accuracy(&predicted, &truth)?;
    let (auc, single_class) = match auc(&scores, &truth) {
        Ok(a) => (Some(a), false),
        Err(Error::SingleClass) => (None, true),
        Err(e) => return Err(e),
    };
    Ok(FoldResult {
        held_out: held_out.clone(),
        n_train_videos,
        n_train_samples,
        accuracy: acc,
        auc,
        single_class,
        warnings,
        predictions,
    })
}

/// Trains the temporal model on the view and scores the held-out videos.
pub fn evaluate_fold_sequences(
    train: &TrainingView<'_, VideoSequence>,
    test: &[&VideoSequence],
    cfg: &LosoConfig,
) -> Result<FoldResult> {
    let fold = train.fold();
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if test.is_empty() {
        return Err(Error::EmptyInput);
    }
    let scaler = if cfg.standardize {
        Some(FeatureScaler::fit_sequences(train.items().iter().copied())?)
    } else {
        None
    };
    let scale = |v: &VideoSequence| match &scaler {
        Some(s) => s.transform_sequence(v),
        None => v.clone(),
    };
    let train_seqs: Vec<VideoSequence> = train.items().iter().map(|v| scale(v)).collect();
    let test_seqs: Vec<VideoSequence> = test.iter().map(|v| scale(v)).collect();

    let spec = TemporalSpec {
        input_len: train_seqs[0].feature_len(),
        ..cfg.temporal_spec.clone()
    };
    let mut model = TemporalModel::new(spec, cfg.temporal.seed)?;
    let (history, n_train_samples) = match cfg.mode {
        EvalMode::VideoLevel => {
            let samples = video_samples(&train_seqs);
            (train_temporal(&mut model, &samples, &cfg.temporal)?, samples.len())
        }
        EvalMode::FrameLevel => {
            let mut windows = Vec::new();
            for s in &train_seqs {
                windows.extend(make_windows(s, cfg.window_len, cfg.window_stride)?);
            }
            let view = TrainingView::new(fold, windows.iter().collect())?;
            let owned: Vec<SequenceWindow<'_>> = view.items().iter().map(|w| **w).collect();
            let samples = window_samples(&owned);
            (train_temporal(&mut model, &samples, &cfg.temporal)?, samples.len())
        }
    };

    let mut predictions = Vec::new();
    match cfg.mode {
        EvalMode::VideoLevel => {
            let seqs: Vec<_> = test_seqs.iter().map(|s| s.features.as_slice()).collect();
            for (s, c) in test_seqs.iter().zip(model.confidences(&seqs)?) {
                predictions.push(SamplePrediction {
                    subject_id: s.subject_id.clone(),
                    period: s.period,
                    frame_index: None,
                    truth: s.label,
                    confidence: c,
                });
            }
        }
        EvalMode::FrameLevel => {
            for s in &test_seqs {
                for p in predict_frame_level(&model, &s.features, cfg.window_len)? {
                    if let Some(c) = p.confidence {
                        predictions.push(SamplePrediction {
                            subject_id: s.subject_id.clone(),
                            period: s.period,
                            frame_index: Some(p.frame_index),
                            truth: s.frame_labels[p.frame_index],
                            confidence: c,
                        });
                    }
                }
            }
        }
    }
    score_fold(&fold.held_out, predictions, train.len(), n_train_samples, history.warnings)
}

/// Fine-tunes a fresh head on the view's frames, fuses every video with it,
/// then continues as [`evaluate_fold_sequences`].
pub fn evaluate_fold_maps(train: &TrainingView<'_, VideoMaps>, test: &[&VideoMaps], cfg: &LosoConfig) -> Result<FoldResult> {
    let fold = train.fold();
    let first = train.items().first().ok_or(Error::EmptyDataset)?;
    let channels = first.face.first().ok_or(Error::EmptyVideo)?.channels();
    let mut head = FusionHead::new(HeadSpec::for_backbone(channels), cfg.head.seed)?;
    let samples: Vec<_> = train
        .items()
        .iter()
        .flat_map(|v| v.frame_samples(cfg.head_frame_stride))
        .collect();
    let head_history = train_head_on_maps(&mut head, &samples, &cfg.head)?;
    let fused_train = train.items().iter().map(|v| v.fuse(&head)).collect::<Result<Vec<_>>>()?;
    let fused_test = test.iter().map(|v| v.fuse(&head)).collect::<Result<Vec<_>>>()?;
    let view = TrainingView::new(fold, fused_train.iter().collect())?;
    let tests: Vec<&VideoSequence> = fused_test.iter().collect();
    let mut result = evaluate_fold_sequences(&view, &tests, cfg)?;
    result.warnings.splice(0..0, head_history.warnings);
    Ok(result)
}

fn run_folds<T, F>(items: &[T], cfg: &LosoConfig, eval: F) -> Result<EvaluationReport>
where
    T: SubjectScoped + Sync,
    F: Fn(&TrainingView<'_, T>, &[&T]) -> Result<FoldResult> + Sync,
{
    let folds = loso_split(items.iter().map(|v| v.subject_id().clone()))?;
    let workers = cfg.workers.clamp(1, folds.len());
    let run = |i: usize| -> Result<FoldResult> {
        let (train, test) = split_fold(&folds[i], items)?;
        let r = eval(&train, &test)?;
        info!(
            "fold {}/{} ({}): accuracy {:.4} auc {}",
            i + 1,
            folds.len(),
            folds[i].held_out,
            r.accuracy,
            r.auc.map_or("n/a".to_owned(), |a| format!("{a:.4}"))
        );
        Ok(r)
    };
    let results: Vec<Result<FoldResult>> = if workers == 1 {
        (0..folds.len()).map(run).collect()
    } else {
        let mut slots: Vec<Option<Result<FoldResult>>> = (0..folds.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let run = &run;
                    let n = folds.len();
                    scope.spawn(move || (w..n).step_by(workers).map(|i| (i, run(i))).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("fold worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every fold evaluated")).collect()
    };
    EvaluationReport::from_folds(cfg.mode, results.into_iter().collect::<Result<Vec<_>>>()?)
}

/// LOSO over fixed per-frame features.
pub fn run_loso_sequences(videos: &[VideoSequence], cfg: &LosoConfig) -> Result<EvaluationReport> {
    run_folds(videos, cfg, |train, test| evaluate_fold_sequences(train, test, cfg))
}

/// LOSO over backbone maps; the fusion head is retrained inside every fold.
pub fn run_loso_maps(videos: &[VideoMaps], cfg: &LosoConfig) -> Result<EvaluationReport> {
    run_folds(videos, cfg, |train, test| evaluate_fold_maps(train, test, cfg))
}
