//! Frame-directory video layout: numbered PNG frames plus a text file with
//! the native frame rate.
//!
//! ```text
//! <video>/fps.txt          e.g. "30"
//! <video>/000000.png
//! <video>/000001.png
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;

use super::{RecordingPeriod, SubjectId, VideoClip};
use crate::error::{Error, Result};

pub const FRAME_RATE_FILE: &str = "fps.txt";

fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index:06}.png"))
}

pub fn read_frame_dir(
    dir: &Path,
    subject_id: SubjectId,
    period: Option<RecordingPeriod>,
) -> Result<VideoClip> {
    if !dir.is_dir() {
        return Err(Error::MissingFile {
            path: dir.to_owned(),
            row: None,
        });
    }
    let rate_path = dir.join(FRAME_RATE_FILE);
    let rate_text = fs::read_to_string(&rate_path)
        .map_err(|e| Error::io(format!("reading {}", rate_path.display()), e))?;
    let fps: f64 = rate_text.trim().parse().map_err(|_| Error::Parse {
        path: rate_path.clone(),
        line: 1,
        message: format!("bad frame rate {:?}", rate_text.trim()),
    })?;

    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    names.sort();
    let frames = names
        .iter()
        .map(|p| {
            image::open(p)
                .map(|img| img.to_rgb8())
                .map_err(|source| Error::Image {
                    path: p.clone(),
                    source,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    VideoClip::new(subject_id, period, frames, fps)
}

pub fn write_frame_dir(dir: &Path, frames: &[RgbImage], fps: f64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    fs::write(dir.join(FRAME_RATE_FILE), format!("{fps}\n"))
        .map_err(|e| Error::io(format!("writing {}", dir.display()), e))?;
    for (i, f) in frames.iter().enumerate() {
        let p = frame_path(dir, i);
        f.save(&p).map_err(|source| Error::Image { path: p, source })?;
    }
    Ok(())
}
