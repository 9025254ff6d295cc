//! Detector contract and the line-oriented wire format used by detectors
//! running outside this process.
//!
//! Each line is `frame_index class x y w h confidence`, space separated, one
//! line per detected box. Frames without a line have no detections.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use image::RgbImage;

use super::{BoundingBox, DetectionResult, RegionKind};
use crate::error::{Error, Result};
use crate::ingest::write_frame_dir;

/// Name of the per-video file holding precomputed detections.
pub const DETECTIONS_FILE: &str = "detections.txt";

/// A pretrained detector serving one region class. Implementations are not
/// assumed to be thread-safe; callers drive one adapter from one thread.
pub trait DetectorAdapter {
    fn class_tag(&self) -> RegionKind;

    fn detect(&mut self, frame_index: usize, frame: &RgbImage) -> Result<DetectionResult>;

    /// Runs over a whole clip. `clip_dir` is the on-disk video the frames came
    /// from, if any.
    fn detect_clip(&mut self, clip_dir: Option<&Path>, frames: &[RgbImage]) -> Result<Vec<DetectionResult>> {
        let _ = clip_dir;
        frames
            .iter()
            .enumerate()
            .map(|(i, f)| self.detect(i, f))
            .collect()
    }
}

pub fn format_detection_line(frame_index: usize, b: &BoundingBox) -> String {
    format!(
        "{} {} {} {} {} {} {}",
        frame_index, b.class_tag, b.x, b.y, b.w, b.h, b.confidence
    )
}

pub fn format_detections(results: &[DetectionResult]) -> String {
    let mut out = String::new();
    for r in results {
        for b in &r.boxes {
            let _ = writeln!(out, "{}", format_detection_line(r.frame_index, b));
        }
    }
    out
}

pub fn parse_detection_line(line: &str) -> std::result::Result<(usize, BoundingBox), String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 7 {
        return Err(format!("expected 7 fields, found {}", f.len()));
    }
    let frame: usize = f[0].parse().map_err(|_| format!("bad frame index {:?}", f[0]))?;
    let class: RegionKind = f[1].parse().map_err(|e: Error| e.to_string())?;
    let mut nums = [0f64; 5];
    for (k, s) in f[2..].iter().enumerate() {
        nums[k] = s.parse().map_err(|_| format!("bad number {s:?}"))?;
    }
    let b = BoundingBox::new(nums[0], nums[1], nums[2], nums[3], nums[4], class).map_err(|e| e.to_string())?;
    Ok((frame, b))
}

/// Groups wire lines into one result per frame for `n_frames` frames, keeping
/// only boxes of `class_tag` when given.
pub fn parse_detections(
    text: &str,
    source: &Path,
    n_frames: usize,
    class_tag: Option<RegionKind>,
) -> Result<Vec<DetectionResult>> {
    let mut by_frame: BTreeMap<usize, Vec<BoundingBox>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (frame, b) = parse_detection_line(line).map_err(|message| Error::Parse {
            path: source.to_owned(),
            line: i + 1,
            message,
        })?;
        if frame >= n_frames {
            return Err(Error::Parse {
                path: source.to_owned(),
                line: i + 1,
                message: format!("frame index {frame} beyond clip length {n_frames}"),
            });
        }
        if class_tag.map_or(true, |c| c == b.class_tag) {
            by_frame.entry(frame).or_default().push(b);
        }
    }
    Ok((0..n_frames)
        .map(|i| DetectionResult::new(i, by_frame.remove(&i).unwrap_or_default()))
        .collect())
}

/// Reads detections that were computed ahead of time and stored next to the
/// frames as [`DETECTIONS_FILE`].
#[derive(Debug, Clone)]
pub struct PrecomputedDetector {
    class_tag: RegionKind,
}

impl PrecomputedDetector {
    pub fn new(class_tag: RegionKind) -> Self {
        PrecomputedDetector { class_tag }
    }
}

impl DetectorAdapter for PrecomputedDetector {
    fn class_tag(&self) -> RegionKind {
        self.class_tag
    }

    fn detect(&mut self, _frame_index: usize, _frame: &RgbImage) -> Result<DetectionResult> {
        Err(Error::Detector(
            "precomputed detections need the clip directory".into(),
        ))
    }

    fn detect_clip(&mut self, clip_dir: Option<&Path>, frames: &[RgbImage]) -> Result<Vec<DetectionResult>> {
        let dir = clip_dir.ok_or_else(|| Error::Detector("no clip directory".into()))?;
        let path = dir.join(DETECTIONS_FILE);
        let text = fs::read_to_string(&path).map_err(|_| Error::MissingFile {
            path: path.clone(),
            row: None,
        })?;
        parse_detections(&text, &path, frames.len(), Some(self.class_tag))
    }
}

/// Runs an external program as `program [args..] <frame_dir>` where
/// `frame_dir` holds the clip's frames as numbered PNGs. The program prints
/// wire-format lines on stdout and must exit within `timeout`.
#[derive(Debug, Clone)]
pub struct SubprocessDetector {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub class_tag: RegionKind,
    pub timeout: Duration,
}

static SCRATCH_COUNTER: AtomicUsize = AtomicUsize::new(0);

struct ScratchDir(PathBuf);

impl ScratchDir {
    fn new() -> Result<Self> {
        let p = std::env::temp_dir().join(format!(
            "painnet-detect-{}-{}",
            std::process::id(),
            SCRATCH_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::create_dir_all(&p).map_err(|e| Error::io("creating detector scratch dir", e))?;
        Ok(ScratchDir(p))
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

impl SubprocessDetector {
    fn run(&self, frame_dir: &Path, n_frames: usize) -> Result<Vec<DetectionResult>> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(frame_dir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Detector(format!("spawning {}: {e}", self.program.display())))?;

        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            if let Some(status) = child.try_wait().map_err(|e| Error::io("waiting for detector", e))? {
                break status;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::DetectorTimeout(self.timeout));
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let text = reader
            .join()
            .map_err(|_| Error::Detector("stdout reader panicked".into()))?
            .map_err(|e| Error::io("reading detector output", e))?;
        if !status.success() {
            let mut err = String::new();
            if let Some(mut s) = child.stderr.take() {
                let _ = s.read_to_string(&mut err);
            }
            return Err(Error::Detector(format!(
                "{} exited with {status}: {}",
                self.program.display(),
                err.trim()
            )));
        }
        parse_detections(&text, &self.program, n_frames, Some(self.class_tag))
    }
}

impl DetectorAdapter for SubprocessDetector {
    fn class_tag(&self) -> RegionKind {
        self.class_tag
    }

    fn detect(&mut self, frame_index: usize, frame: &RgbImage) -> Result<DetectionResult> {
        let mut r = self.detect_clip(None, std::slice::from_ref(frame))?.remove(0);
        r.frame_index = frame_index;
        Ok(r)
    }

    fn detect_clip(&mut self, _clip_dir: Option<&Path>, frames: &[RgbImage]) -> Result<Vec<DetectionResult>> {
        // The clip on disk is at native rate; the detector sees the resampled frames.
        let scratch = ScratchDir::new()?;
        write_frame_dir(&scratch.0, frames, 0.0)?;
        self.run(&scratch.0, frames.len())
    }
}
