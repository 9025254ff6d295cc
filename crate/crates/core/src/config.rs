//! Pipeline configuration, read from TOML. Every field has a default; relative
//! paths resolve against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::detect::{DetectorAdapter, PrecomputedDetector, RegionKind, SubprocessDetector};
use crate::error::{Error, Result};
use crate::eval::LosoConfig;
use crate::ingest::TARGET_FPS;
use crate::model::{Backbone, BackboneSpec, Checkpoint, PretrainTag};
use crate::pipeline::DetectionThresholds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds stand-in backbones; training seeds live under `eval`.
    pub seed: u64,
    pub data: DataConfig,
    pub detection: DetectionConfig,
    pub backbone: BackboneConfig,
    pub eval: LosoConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            data: DataConfig::default(),
            detection: DetectionConfig::default(),
            backbone: BackboneConfig::default(),
            eval: LosoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    /// Holds the map cache, feature cache, checkpoints and reports.
    pub work_dir: PathBuf,
    pub target_fps: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            manifest: None,
            work_dir: PathBuf::from("work"),
            target_fps: TARGET_FPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// External detector command for faces; empty reads precomputed
    /// detections stored next to each video.
    pub face_command: Vec<String>,
    pub body_command: Vec<String>,
    pub confidence: f64,
    pub iou: f64,
    pub timeout_s: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        let t = DetectionThresholds::default();
        DetectionConfig {
            face_command: Vec::new(),
            body_command: Vec::new(),
            confidence: t.confidence,
            iou: t.iou,
            timeout_s: 120,
        }
    }
}

impl DetectionConfig {
    pub fn thresholds(&self) -> DetectionThresholds {
        DetectionThresholds {
            confidence: self.confidence,
            iou: self.iou,
        }
    }

    pub fn detector(&self, kind: RegionKind) -> Box<dyn DetectorAdapter> {
        let cmd = match kind {
            RegionKind::Face => &self.face_command,
            RegionKind::Body => &self.body_command,
        };
        match cmd.split_first() {
            None => Box::new(PrecomputedDetector::new(kind)),
            Some((program, args)) => Box::new(SubprocessDetector {
                program: PathBuf::from(program),
                args: args.to_vec(),
                class_tag: kind,
                timeout: Duration::from_secs(self.timeout_s),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneVariant {
    Vgg16,
    /// Every width divided by sixteen.
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub variant: BackboneVariant,
    /// Checkpoint directories with converted pretrained weights. Without
    /// them both backbones are seeded random stand-ins.
    pub face_weights: Option<PathBuf>,
    pub body_weights: Option<PathBuf>,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            variant: BackboneVariant::Vgg16,
            face_weights: None,
            body_weights: None,
        }
    }
}

impl BackboneConfig {
    pub fn spec(&self) -> BackboneSpec {
        match self.variant {
            BackboneVariant::Vgg16 => BackboneSpec::vgg16(PretrainTag::StandIn),
            BackboneVariant::Reduced => BackboneSpec::reduced(),
        }
    }

    /// Face and body backbones, loaded or seeded.
    pub fn build(&self, seed: u64) -> Result<(Backbone, Backbone)> {
        let one = |weights: &Option<PathBuf>, seed: u64, kind: RegionKind| -> Result<Backbone> {
            match weights {
                Some(dir) => {
                    let bb = Backbone::from_checkpoint(&Checkpoint::load(dir)?)?;
                    if bb.spec().blocks != self.spec().blocks {
                        return Err(Error::BadConfig(format!(
                            "{kind} weights in {} do not match the {:?} variant",
                            dir.display(),
                            self.variant
                        )));
                    }
                    Ok(bb)
                }
                None => {
                    warn!("{kind} backbone: no weights given, using a random stand-in (seed {seed})");
                    Backbone::stand_in(self.spec(), seed)
                }
            }
        };
        Ok((
            one(&self.face_weights, seed, RegionKind::Face)?,
            one(&self.body_weights, seed.wrapping_add(1), RegionKind::Body)?,
        ))
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile {
                path: path.to_owned(),
                row: None,
            },
            _ => Error::io(format!("reading {}", path.display()), e),
        })?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::BadConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = &mut self.data.manifest {
            fix(m);
        }
        fix(&mut self.data.work_dir);
        for w in [&mut self.backbone.face_weights, &mut self.backbone.body_weights]
            .into_iter()
            .flatten()
        {
            fix(w);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        if !(self.data.target_fps > 0.0) {
            return bad(format!("target_fps must be positive, got {}", self.data.target_fps));
        }
        for (name, v) in [("confidence", self.detection.confidence), ("iou", self.detection.iou)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("detection {name} must lie in [0, 1], got {v}"));
            }
        }
        let e = &self.eval;
        e.head.adam.validate()?;
        e.temporal.adam.validate()?;
        e.temporal_spec.validate()?;
        if e.window_len == 0 || e.window_stride == 0 || e.head_frame_stride == 0 {
            return bad("window_len, window_stride and head_frame_stride must be at least 1".into());
        }
        if e.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn work_path(&self, name: &str) -> PathBuf {
        self.data.work_dir.join(name)
    }
}
