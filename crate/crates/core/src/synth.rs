//! Synthetic neonatal recordings with a controllable pain signal.
//!
//! Each subject has its own skin tone and texture. During the procedure
//! period a reddening blob grows on the face and the body at a shared onset,
//! scaled by `signal_strength`; every video also carries a neutral
//! distractor blob and pixel noise, so both classes see matched nuisance
//! variation. Two raters score each video; the second may disagree by one
//! point without flipping the consensus class.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use log::info;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::{format_detections, BoundingBox, DetectionResult, RegionCrop, RegionKind, CROP_SIZE, DETECTIONS_FILE};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::ingest::{
    consensus_label, write_frame_dir, LabelManifest, ManifestRow, NipsAssessment, PainClass, PainLabel,
    RecordingPeriod, SubjectId,
};
use crate::model::Backbone;
use crate::pipeline::{ClipCrops, VideoMaps};

/// Full synthetic frame size.
pub const FRAME_WIDTH: u32 = 480;
pub const FRAME_HEIGHT: u32 = 256;
/// Top-left corners of the face and body regions within a full frame.
pub const FACE_ORIGIN: (u32, u32) = (8, 16);
pub const BODY_ORIGIN: (u32, u32) = (248, 16);
pub const RATERS: [&str; 2] = ["rater_a", "rater_b"];

const PAIN_AMPLITUDE: f32 = 0.3;
const PAIN_TINT: [f32; 3] = [1.0, 0.35, 0.25];
const DISTRACTOR_MAX: f32 = 0.12;
const REGION_JITTER: f32 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_subjects: usize,
    /// At most eight; video `v` of subject `s` covers period `(s + v) mod 8`.
    pub videos_per_subject: usize,
    pub fps: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Scales the pain blob; 0 leaves no signal at all.
    pub signal_strength: f64,
    /// Frame at which the pain blob is half grown.
    pub onset_frame: usize,
    /// Logistic ramp width in frames.
    pub ramp_frames: f64,
    /// Half-width of the uniform per-pixel noise, in intensity units.
    pub noise: f64,
    /// Probability that the second rater's total is off by one.
    pub rater_disagreement: f64,
    /// Probability that a frame has no usable detection for a region.
    pub detection_dropout: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 31,
            videos_per_subject: 8,
            fps: 5.0,
            duration_s: 10.0,
            seed: 0,
            signal_strength: 0.8,
            onset_frame: 10,
            ramp_frames: 1.5,
            noise: 0.06,
            rater_disagreement: 0.1,
            detection_dropout: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn frames_per_video(&self) -> usize {
        (self.fps * self.duration_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        if self.n_subjects < 2 {
            return bad(format!("need at least 2 subjects, got {}", self.n_subjects));
        }
        if !(1..=RecordingPeriod::ALL.len()).contains(&self.videos_per_subject) {
            return bad(format!("videos_per_subject must be 1..=8, got {}", self.videos_per_subject));
        }
        if !(self.fps > 0.0 && self.duration_s > 0.0) || self.frames_per_video() == 0 {
            return bad("fps and duration must give at least one frame".into());
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return bad(format!("signal_strength must lie in [0, 1], got {}", self.signal_strength));
        }
        if !(self.ramp_frames > 0.0) || !(0.0..=0.5).contains(&self.noise) {
            return bad("ramp_frames must be positive and noise within [0, 0.5]".into());
        }
        for (name, p) in [
            ("rater_disagreement", self.rater_disagreement),
            ("detection_dropout", self.detection_dropout),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        Ok(())
    }
}

fn mix(parts: &[u64]) -> u64 {
    // splitmix64 folded over the parts
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(parts))
}

#[derive(Debug, Clone, PartialEq)]
struct Appearance {
    color: [f32; 3],
    texture: f32,
    freq: [f32; 2],
    phase: [f32; 2],
}

impl Appearance {
    // the 6.28 phase range is part of the seeded output; changing it re-renders every frame
    #[allow(clippy::approx_constant)]
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let tone = rng.gen_range(0.35..0.6);
        Appearance {
            color: [tone + 0.1, tone, tone - 0.05].map(|v: f32| v + rng.gen_range(-0.04..0.04)),
            texture: rng.gen_range(0.03..0.08),
            freq: [rng.gen_range(0.02..0.08), rng.gen_range(0.02..0.08)],
            phase: [rng.gen_range(0.0..6.28), rng.gen_range(0.0..6.28)],
        }
    }
}

/// Everything needed to render one video, drawn once from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub subject_id: SubjectId,
    pub subject_index: usize,
    pub video_index: usize,
    pub period: RecordingPeriod,
    pub assessments: [NipsAssessment; 2],
    pub label: PainLabel,
    pub n_frames: usize,
    appearance: Appearance,
    brightness: f32,
    gain: f32,
    distractor: [(f32, f32, f32); 2],
}

impl SynthVideo {
    pub fn class(&self) -> PainClass {
        self.label.value
    }

    pub fn frame_labels(&self) -> Vec<PainClass> {
        vec![self.class(); self.n_frames]
    }

    /// Relative path of the video's frame directory.
    pub fn rel_dir(&self) -> PathBuf {
        PathBuf::from("videos").join(self.subject_id.as_str()).join(self.period.to_string())
    }
}

fn indicators(total: u8, rng: &mut ChaCha8Rng, rater: &str) -> NipsAssessment {
    // slots: face, body, vital, cry, cry
    let mut slots = [0usize, 1, 2, 3, 3];
    for i in (1..slots.len()).rev() {
        slots.swap(i, rng.gen_range(0..=i));
    }
    let mut s = [0u8; 4];
    for &k in &slots[..total as usize] {
        s[k] += 1;
    }
    NipsAssessment::new(s[0], s[1], s[2], s[3], rater).expect("indicator scores within range")
}

fn rate(pain: bool, disagreement: f64, rng: &mut ChaCha8Rng) -> [NipsAssessment; 2] {
    let first: u8 = if pain { rng.gen_range(4..=5) } else { rng.gen_range(0..=1) };
    let mut second = first;
    if rng.gen_bool(disagreement) {
        second = match first {
            0 => 1,
            5 => 4,
            t if rng.gen_bool(0.5) => t + 1,
            t => t - 1,
        };
    }
    [indicators(first, rng, RATERS[0]), indicators(second, rng, RATERS[1])]
}

/// A generated dataset. Pixels are rendered on demand from the seed.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub videos: Vec<SynthVideo>,
}

impl SynthDataset {
    pub fn generate(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let width = config.n_subjects.to_string().len().max(2);
        let mut videos = Vec::with_capacity(config.n_subjects * config.videos_per_subject);
        for s in 0..config.n_subjects {
            let subject_id = SubjectId::new(format!("S{:0width$}", s + 1));
            let appearance = Appearance::draw(&mut rng_for(&[config.seed, s as u64, 1]));
            for v in 0..config.videos_per_subject {
                let period = RecordingPeriod::ALL[(s + v) % RecordingPeriod::ALL.len()];
                let mut rng = rng_for(&[config.seed, s as u64, v as u64, 2]);
                let assessments = rate(period.is_procedure(), config.rater_disagreement, &mut rng);
                let label = consensus_label(&assessments)?;
                let mut distractor = || {
                    (
                        rng.gen_range(30.0..194.0),
                        rng.gen_range(30.0..194.0),
                        rng.gen_range(0.0..DISTRACTOR_MAX),
                    )
                };
                let distractor = [distractor(), distractor()];
                videos.push(SynthVideo {
                    subject_id: subject_id.clone(),
                    subject_index: s,
                    video_index: v,
                    period,
                    assessments,
                    label,
                    n_frames: config.frames_per_video(),
                    appearance: appearance.clone(),
                    brightness: rng.gen_range(-0.04..0.04),
                    gain: rng.gen_range(0.8..1.0),
                    distractor,
                });
            }
        }
        Ok(SynthDataset {
            config: config.clone(),
            videos,
        })
    }

    pub fn subjects(&self) -> Vec<SubjectId> {
        let mut s: Vec<_> = self.videos.iter().map(|v| v.subject_id.clone()).collect();
        s.dedup();
        s
    }

    fn ramp(&self, frame: usize) -> f64 {
        let c = &self.config;
        1.0 / (1.0 + (-(frame as f64 - c.onset_frame as f64) / c.ramp_frames).exp())
    }

    /// Pain blob amplitudes `(face, body)` rendered into `frame`.
    pub fn pain_amplitudes(&self, video: &SynthVideo, frame: usize) -> (f32, f32) {
        if !video.class().is_pain() {
            return (0.0, 0.0);
        }
        let mut rng = rng_for(&[self.config.seed, video.subject_index as u64, video.video_index as u64, frame as u64, 3]);
        let base = (self.config.signal_strength * self.ramp(frame)) as f32 * PAIN_AMPLITUDE * video.gain;
        let mut jitter = || 1.0 + rng.gen_range(-REGION_JITTER..REGION_JITTER);
        (base * jitter(), base * jitter())
    }

    /// One 224x224 region crop of one frame.
    pub fn render_region(&self, video: &SynthVideo, frame: usize, kind: RegionKind) -> RgbImage {
        let (face_amp, body_amp) = self.pain_amplitudes(video, frame);
        let (amp, center, sigma, k) = match kind {
            RegionKind::Face => (face_amp, (112.0, 140.0), 30.0f32, 0),
            RegionKind::Body => (body_amp, (112.0, 100.0), 40.0f32, 1),
        };
        let n = CROP_SIZE;
        let gauss = |c: f32, s: f32| -> Vec<f32> {
            (0..n).map(|i| (-((i as f32 - c) / s).powi(2) / 2.0).exp()).collect()
        };
        let (bx, by) = (gauss(center.0, sigma), gauss(center.1, sigma));
        let (dx0, dy0, damp) = video.distractor[k];
        let (dx, dy) = (gauss(dx0, 20.0), gauss(dy0, 20.0));
        let a = &video.appearance;
        let tex_x: Vec<f32> = (0..n).map(|i| (a.freq[0] * i as f32 + a.phase[0]).sin()).collect();
        let tex_y: Vec<f32> = (0..n).map(|i| (a.freq[1] * i as f32 + a.phase[1]).cos()).collect();

        let mut noise = vec![0u8; n * n * 3];
        rng_for(&[
            self.config.seed,
            video.subject_index as u64,
            video.video_index as u64,
            frame as u64,
            4 + k as u64,
        ])
        .fill_bytes(&mut noise);
        let noise_scale = 2.0 * self.config.noise as f32 / 255.0;
        let noise_off = self.config.noise as f32;

        let mut out = Vec::with_capacity(n * n * 3);
        for y in 0..n {
            for x in 0..n {
                let shared = video.brightness + a.texture * tex_x[x] * tex_y[y] + damp * dx[x] * dy[y];
                let blob = amp * bx[x] * by[y];
                for c in 0..3 {
                    let r = noise[out.len()] as f32 * noise_scale - noise_off;
                    let v = a.color[c] + shared + blob * PAIN_TINT[c] + r;
                    out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        RgbImage::from_raw(n as u32, n as u32, out).expect("crop buffer size")
    }

    fn region_box(kind: RegionKind, confidence: f64) -> BoundingBox {
        let (x, y) = match kind {
            RegionKind::Face => FACE_ORIGIN,
            RegionKind::Body => BODY_ORIGIN,
        };
        BoundingBox::new(x as f64, y as f64, CROP_SIZE as f64, CROP_SIZE as f64, confidence, kind)
            .expect("fixed region box")
    }

    /// Both crops of every frame, as a detector-free pipeline would produce
    /// them from exact boxes.
    pub fn crops(&self, video: &SynthVideo) -> Result<ClipCrops> {
        let mut face = Vec::with_capacity(video.n_frames);
        let mut body = Vec::with_capacity(video.n_frames);
        for t in 0..video.n_frames {
            for (kind, dst) in [(RegionKind::Face, &mut face), (RegionKind::Body, &mut body)] {
                let img = self.render_region(video, t, kind);
                dst.push(RegionCrop::from_image(&img, Self::region_box(kind, 1.0), kind)?);
            }
        }
        Ok(ClipCrops {
            face,
            body,
            degraded_face: Vec::new(),
            degraded_body: Vec::new(),
        })
    }

    /// A full frame with both regions pasted onto a plain background.
    pub fn render_frame(&self, video: &SynthVideo, frame: usize) -> RgbImage {
        let mut img = RgbImage::from_pixel(FRAME_WIDTH, FRAME_HEIGHT, Rgb([70, 80, 90]));
        for (kind, (ox, oy)) in [(RegionKind::Face, FACE_ORIGIN), (RegionKind::Body, BODY_ORIGIN)] {
            let region = self.render_region(video, frame, kind);
            image::imageops::replace(&mut img, &region, ox as i64, oy as i64);
        }
        img
    }

    /// Per-frame detections: the true box plus an overlapping weaker decoy,
    /// both absent on dropout frames.
    pub fn detections(&self, video: &SynthVideo) -> Vec<DetectionResult> {
        let mut rng = rng_for(&[self.config.seed, video.subject_index as u64, video.video_index as u64, 6]);
        (0..video.n_frames)
            .map(|t| {
                let mut boxes = Vec::new();
                for kind in RegionKind::BOTH {
                    if rng.gen_bool(self.config.detection_dropout) {
                        continue;
                    }
                    let truth = Self::region_box(kind, rng.gen_range(0.85..0.99));
                    let decoy = BoundingBox {
                        x: truth.x + 20.0,
                        y: truth.y + 20.0,
                        confidence: rng.gen_range(0.55..0.8),
                        ..truth
                    };
                    boxes.push(truth);
                    boxes.push(decoy);
                }
                DetectionResult::new(t, boxes)
            })
            .collect()
    }

    pub fn manifest(&self, root: &Path) -> LabelManifest {
        let mut rows = Vec::new();
        for v in &self.videos {
            for a in &v.assessments {
                rows.push(ManifestRow {
                    subject_id: v.subject_id.clone(),
                    period: v.period,
                    video: v.rel_dir(),
                    assessment: a.clone(),
                    line: rows.len() + 2,
                });
            }
        }
        LabelManifest {
            root: root.to_owned(),
            rows,
        }
    }

    /// Writes frame directories with precomputed detections and a label
    /// manifest under `root`. Returns the manifest path.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        for (i, v) in self.videos.iter().enumerate() {
            let dir = root.join(v.rel_dir());
            let frames: Vec<RgbImage> = (0..v.n_frames).map(|t| self.render_frame(v, t)).collect();
            write_frame_dir(&dir, &frames, self.config.fps)?;
            write_atomic(&dir.join(DETECTIONS_FILE), format_detections(&self.detections(v)))?;
            if (i + 1) % 20 == 0 {
                info!("wrote {} of {} synthetic videos", i + 1, self.videos.len());
            }
        }
        let path = root.join("manifest.csv");
        write_atomic(&path, self.manifest(root).to_text())?;
        write_atomic(&root.join("synth.toml"), toml::to_string(&self.config).expect("config serializes"))?;
        Ok(path)
    }

    /// Backbone maps for every video, rendered and extracted one video at a
    /// time.
    pub fn maps(&self, face_backbone: &Backbone, body_backbone: &Backbone) -> Result<Vec<VideoMaps>> {
        let mut out = Vec::with_capacity(self.videos.len());
        for v in &self.videos {
            let crops = self.crops(v)?;
            out.push(VideoMaps::extract(
                v.subject_id.clone(),
                Some(v.period),
                v.class(),
                v.frame_labels(),
                &crops,
                face_backbone,
                body_backbone,
            )?);
            if out.len() % 40 == 0 {
                info!("extracted synthetic maps for {} of {} videos", out.len(), self.videos.len());
            }
        }
        Ok(out)
    }
}
