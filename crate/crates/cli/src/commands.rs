use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use painnet_core::config::PipelineConfig;
use painnet_core::detect::RegionKind;
use painnet_core::eval::{rater_agreement, render_table, run_loso_maps, run_loso_sequences, table_title, EvalMode, EvaluationReport};
use painnet_core::fsutil::write_atomic;
use painnet_core::ingest::{score_nips, LabelManifest, NipsAssessment, PainClass, SubjectId};
use painnet_core::model::{
    count_params, train_head_on_maps, Checkpoint, FusionHead, FusionModelSpec, HeadSpec, FUSION_TOTAL_PARAMS,
    FUSION_TRAINABLE_PARAMS,
};
use painnet_core::pipeline::{load_crops, read_maps_dir, write_maps, VideoMaps};
use painnet_core::synth::{SynthConfig, SynthDataset};
use painnet_core::temporal::{
    cache_stem, make_windows, predict_frame_level, predict_video_level, read_cache_dir, train_temporal, video_samples,
    window_samples, write_cached, FeatureScaler, TemporalModel, TemporalSpec, VideoSequence, TEMPORAL_TOTAL_PARAMS,
};
use painnet_core::Error;

use crate::{
    AssertionFailed, BackboneChoice, Cli, Command, EvalArgs, ExtractArgs, ModelKind, PredictArgs, PrepareArgs,
    ScoreArgs, SummaryArgs, SynthArgs, TrainCommand,
};

const CONFIG_COPY: &str = "config.toml";

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    info!("resolved config:\n{}", cfg.to_toml());
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Prepare(a) => prepare(&cfg, &a),
        Command::Summary(a) => summary(&a),
        Command::Train(TrainCommand::Fusion { maps, out }) => train_fusion(&cfg, maps, out),
        Command::Train(TrainCommand::Temporal { features, out, mode }) => {
            train_temporal_cmd(&cfg, features, out, mode.map(Into::into))
        }
        Command::Extract(a) => extract(&cfg, &a),
        Command::EvalLoso(a) => eval_loso(&cfg, &a),
        Command::Predict(a) => predict(&cfg, &a),
        Command::ScoreNips(a) => score(&cfg, &a),
    }
}

fn or_work(cfg: &PipelineConfig, p: Option<PathBuf>, name: &str) -> PathBuf {
    p.unwrap_or_else(|| cfg.work_path(name))
}

fn manifest_path(cfg: &PipelineConfig, arg: &Option<PathBuf>) -> Result<PathBuf> {
    arg.clone()
        .or_else(|| cfg.data.manifest.clone())
        .ok_or_else(|| Error::BadConfig("no manifest given (--manifest or data.manifest)".into()).into())
}

fn save_config(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    write_atomic(&dir.join(CONFIG_COPY), cfg.to_toml())?;
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_subjects: a.subjects.unwrap_or(d.n_subjects),
        videos_per_subject: a.videos_per_subject.unwrap_or(d.videos_per_subject),
        duration_s: a.seconds.unwrap_or(d.duration_s),
        signal_strength: a.strength.unwrap_or(d.signal_strength),
        seed: a.seed.unwrap_or(d.seed),
        detection_dropout: a.dropout.unwrap_or(d.detection_dropout),
        rater_disagreement: a.disagreement.unwrap_or(d.rater_disagreement),
        ..d
    };
    let data = SynthDataset::generate(&cfg)?;
    let manifest = data.write(&a.out)?;
    println!("{} videos, manifest {}", data.videos.len(), manifest.display());
    Ok(())
}

fn prepare(cfg: &PipelineConfig, a: &PrepareArgs) -> Result<()> {
    let manifest = LabelManifest::load(manifest_path(cfg, &a.manifest)?)?;
    manifest.check_videos()?;
    let out = or_work(cfg, a.out.clone(), "maps");
    let (face_bb, body_bb) = cfg.backbone.build(cfg.seed)?;
    let mut face_det = cfg.detection.detector(RegionKind::Face);
    let mut body_det = cfg.detection.detector(RegionKind::Body);
    let recordings = manifest.recordings()?;
    let mut degraded = 0;
    for (i, r) in recordings.iter().enumerate() {
        let crops = load_crops(
            &r.video,
            r.subject_id.clone(),
            Some(r.period),
            cfg.data.target_fps,
            face_det.as_mut(),
            body_det.as_mut(),
            cfg.detection.thresholds(),
        )
        .with_context(|| format!("manifest line {}: {}", r.line, r.video.display()))?;
        degraded += crops.degraded_frames();
        let label = r.label.value;
        let maps = VideoMaps::extract(
            r.subject_id.clone(),
            Some(r.period),
            label,
            vec![label; crops.len()],
            &crops,
            &face_bb,
            &body_bb,
        )?;
        write_maps(&out, &cache_stem(&r.subject_id, Some(r.period), i), &maps)?;
        info!("{}/{}: {} {} ({} frames)", i + 1, recordings.len(), r.subject_id, r.period, maps.len());
    }
    save_config(cfg, &out)?;
    println!(
        "prepared {} videos into {} ({degraded} frames fell back to a previous or whole-frame box)",
        recordings.len(),
        out.display()
    );
    Ok(())
}

fn summary(a: &SummaryArgs) -> Result<()> {
    match a.model {
        ModelKind::Fusion => {
            let mut spec = match a.backbone {
                BackboneChoice::Vgg16 => FusionModelSpec::full(),
                BackboneChoice::Reduced => FusionModelSpec::reduced(),
            };
            if let Some(w) = a.head_width {
                spec.head.branch_width = w;
            }
            let s = count_params(&spec)?;
            println!("{s}");
            if a.assert_paper && (s.total_params, s.trainable_params) != (FUSION_TOTAL_PARAMS, FUSION_TRAINABLE_PARAMS) {
                return Err(AssertionFailed(format!(
                    "fusion model has {} total / {} trainable parameters, expected {FUSION_TOTAL_PARAMS} / {FUSION_TRAINABLE_PARAMS}",
                    s.total_params, s.trainable_params
                ))
                .into());
            }
        }
        ModelKind::Temporal => {
            let spec = TemporalSpec {
                output_units: a.output_units.unwrap_or(1),
                ..TemporalSpec::default()
            };
            spec.validate()?;
            let s = spec.summary();
            println!("{s}");
            if a.assert_paper && s.total_params != TEMPORAL_TOTAL_PARAMS {
                return Err(AssertionFailed(format!(
                    "temporal model has {} parameters, expected {TEMPORAL_TOTAL_PARAMS}",
                    s.total_params
                ))
                .into());
            }
        }
    }
    Ok(())
}

fn train_fusion(cfg: &PipelineConfig, maps: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let videos = read_maps_dir(&or_work(cfg, maps, "maps"))?;
    let channels = videos.first().ok_or(Error::EmptyDataset)?.face[0].channels();
    let mut head = FusionHead::new(HeadSpec::for_backbone(channels), cfg.eval.head.seed)?;
    let samples: Vec<_> = videos.iter().flat_map(|v| v.frame_samples(cfg.eval.head_frame_stride)).collect();
    let history = train_head_on_maps(&mut head, &samples, &cfg.eval.head)?;
    for e in &history.epochs {
        println!("epoch {:>3}  loss {:.6}  accuracy {:.4}", e.epoch, e.loss, e.accuracy);
    }
    let out = or_work(cfg, out, "head");
    head.to_checkpoint().save(&out)?;
    save_config(cfg, &out)?;
    println!("saved fusion head to {}", out.display());
    Ok(())
}

fn extract(cfg: &PipelineConfig, a: &ExtractArgs) -> Result<()> {
    let videos = read_maps_dir(&or_work(cfg, a.maps.clone(), "maps"))?;
    let head = FusionHead::from_checkpoint(&Checkpoint::load(&or_work(cfg, a.head.clone(), "head"))?)?;
    let out = or_work(cfg, a.out.clone(), "features");
    for (i, v) in videos.iter().enumerate() {
        write_cached(&out, &cache_stem(&v.subject_id, v.period, i), &v.fuse(&head)?)?;
    }
    save_config(cfg, &out)?;
    println!("fused {} videos into {}", videos.len(), out.display());
    Ok(())
}

fn load_sequences(dir: &Path) -> Result<Vec<VideoSequence>> {
    let seqs = read_cache_dir(dir)?;
    if seqs.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    Ok(seqs)
}

fn train_temporal_cmd(cfg: &PipelineConfig, features: Option<PathBuf>, out: Option<PathBuf>, mode: Option<EvalMode>) -> Result<()> {
    let seqs = load_sequences(&or_work(cfg, features, "features"))?;
    let scaler = if cfg.eval.standardize { Some(FeatureScaler::fit_sequences(seqs.iter())?) } else { None };
    let seqs: Vec<VideoSequence> = match &scaler {
        Some(s) => seqs.iter().map(|v| s.transform_sequence(v)).collect(),
        None => seqs,
    };
    let spec = TemporalSpec {
        input_len: seqs[0].feature_len(),
        ..cfg.eval.temporal_spec.clone()
    };
    let mut model = TemporalModel::new(spec, cfg.eval.temporal.seed)?;
    let history = match mode.unwrap_or(cfg.eval.mode) {
        EvalMode::VideoLevel => train_temporal(&mut model, &video_samples(&seqs), &cfg.eval.temporal)?,
        EvalMode::FrameLevel => {
            let mut windows = Vec::new();
            for s in &seqs {
                windows.extend(make_windows(s, cfg.eval.window_len, cfg.eval.window_stride)?);
            }
            train_temporal(&mut model, &window_samples(&windows), &cfg.eval.temporal)?
        }
    };
    for w in &history.warnings {
        log::warn!("{w}");
    }
    for e in &history.epochs {
        println!("epoch {:>3}  loss {:.6}  accuracy {:.4}", e.epoch, e.loss, e.accuracy);
    }
    let out = or_work(cfg, out, "temporal");
    model.to_checkpoint(scaler.as_ref()).save(&out)?;
    save_config(cfg, &out)?;
    println!("saved temporal model to {}", out.display());
    Ok(())
}

fn eval_loso(cfg: &PipelineConfig, a: &EvalArgs) -> Result<()> {
    let mut loso = cfg.eval.clone();
    if let Some(m) = a.mode {
        loso.mode = m.into();
    }
    let report: EvaluationReport = match &a.features {
        Some(dir) => run_loso_sequences(&load_sequences(dir)?, &loso)?,
        None => run_loso_maps(&read_maps_dir(&or_work(cfg, a.maps.clone(), "maps"))?, &loso)?,
    };
    let table = render_table(table_title(loso.mode), &[report.table_row("Fusion + LSTM", "Face + Body")]);
    let out = or_work(cfg, a.out.clone(), "report");
    let resolved = PipelineConfig {
        eval: loso,
        ..cfg.clone()
    };
    write_atomic(&out.join("folds.csv"), report.to_csv())?;
    write_atomic(&out.join("predictions.csv"), report.predictions_csv())?;
    write_atomic(&out.join("table.txt"), &table)?;
    save_config(&resolved, &out)?;
    print!("{table}");
    println!(
        "weighted accuracy {:.4}, weighted auc {}, single-class folds {}",
        report.weighted_accuracy,
        report.weighted_auc.map_or("n/a".into(), |v| format!("{v:.4}")),
        report.single_class_folds()
    );
    Ok(())
}

fn predict(cfg: &PipelineConfig, a: &PredictArgs) -> Result<()> {
    let mode = a.mode.map_or(cfg.eval.mode, Into::into);
    let head = FusionHead::from_checkpoint(&Checkpoint::load(&or_work(cfg, a.head.clone(), "head"))?)?;
    let (model, scaler) = TemporalModel::from_checkpoint(&Checkpoint::load(&or_work(cfg, a.temporal.clone(), "temporal"))?)?;
    let mut face_det = cfg.detection.detector(RegionKind::Face);
    let mut body_det = cfg.detection.detector(RegionKind::Body);
    let crops = load_crops(
        &a.video,
        SubjectId::new("input"),
        None,
        cfg.data.target_fps,
        face_det.as_mut(),
        body_det.as_mut(),
        cfg.detection.thresholds(),
    )?;
    if mode == EvalMode::FrameLevel && crops.len() < cfg.eval.window_len {
        return Err(Error::TooFewFrames {
            needed: cfg.eval.window_len,
            actual: crops.len(),
        }
        .into());
    }
    let (face_bb, body_bb) = cfg.backbone.build(cfg.seed)?;
    let maps = VideoMaps::extract(
        SubjectId::new("input"),
        None,
        PainClass::NoPain,
        vec![PainClass::NoPain; crops.len()],
        &crops,
        &face_bb,
        &body_bb,
    )?;
    let mut seq = maps.fuse(&head)?;
    if let Some(s) = &scaler {
        seq = s.transform_sequence(&seq);
    }
    let mut out = String::new();
    match mode {
        EvalMode::FrameLevel => {
            out.push_str("frame,confidence,label\n");
            for p in predict_frame_level(&model, &seq.features, cfg.eval.window_len)? {
                match p.confidence {
                    Some(c) => writeln!(out, "{},{c:.6},{}", p.frame_index, PainClass::from_confidence(c))?,
                    None => writeln!(out, "{},,warm_up", p.frame_index)?,
                }
            }
        }
        EvalMode::VideoLevel => {
            let p = predict_video_level(&model, &seq.features)?;
            out.push_str("confidence,label\n");
            writeln!(out, "{:.6},{}", p.confidence, p.label)?;
        }
    }
    print!("{out}");
    Ok(())
}

fn score(cfg: &PipelineConfig, a: &ScoreArgs) -> Result<()> {
    let manifest = LabelManifest::load(manifest_path(cfg, &a.manifest)?)?;
    let mut out = String::from("subject,period,rater,total,category\n");
    for r in &manifest.rows {
        let (total, cat) = score_nips(&r.assessment)?;
        writeln!(out, "{},{},{},{total},{cat:?}", r.subject_id, r.period, r.assessment.rater_id)?;
    }
    out.push_str("\nsubject,period,consensus_total,label\n");
    for rec in manifest.recordings()? {
        writeln!(out, "{},{},{},{}", rec.subject_id, rec.period, rec.label.source_total, rec.label.value)?;
    }

    // agreement between every pair of raters over the recordings both scored
    let mut by_rater: BTreeMap<&str, BTreeMap<(&SubjectId, _), &NipsAssessment>> = BTreeMap::new();
    for r in &manifest.rows {
        by_rater
            .entry(r.assessment.rater_id.as_str())
            .or_default()
            .insert((&r.subject_id, r.period), &r.assessment);
    }
    let raters: Vec<&str> = by_rater.keys().copied().collect();
    if raters.len() >= 2 {
        out.push_str("\nrater_a,rater_b,recordings,kappa,pearson\n");
    }
    for (i, ra) in raters.iter().enumerate() {
        for rb in &raters[i + 1..] {
            let (mut a1, mut a2) = (Vec::new(), Vec::new());
            for (k, x) in &by_rater[ra] {
                if let Some(y) = by_rater[rb].get(k) {
                    a1.push((*x).clone());
                    a2.push((*y).clone());
                }
            }
            let cell = match rater_agreement(&a1, &a2) {
                Ok(g) => format!("{:.4},{:.4}", g.kappa, g.pearson),
                Err(e) => format!("n/a,n/a ({e})"),
            };
            writeln!(out, "{ra},{rb},{},{cell}", a1.len())?;
        }
    }
    print!("{out}");
    Ok(())
}
