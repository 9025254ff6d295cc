//! Feature cache files and temporal checkpoints.
//!
//! A cached video is `<stem>.bin` (N x D little-endian f32, row-major) next to
//! `<stem>.txt`:
//!
//! ```text
//! subject S03
//! period T2
//! frames 50
//! dim 720
//! label pain
//! frame_labels 1111...
//! ```

use std::fs;
use std::path::Path;

use super::lstm::{TemporalModel, TemporalSpec};
use super::scale::FeatureScaler;
use super::window::VideoSequence;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::ingest::{PainClass, RecordingPeriod, SubjectId};
use crate::model::{Checkpoint, FusedVector, Tensor};

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// File stem for a cached video: `<subject>_<period>` or `<subject>_v<index>`.
pub fn cache_stem(subject: &SubjectId, period: Option<RecordingPeriod>, index: usize) -> String {
    match period {
        Some(p) => format!("{}_{p}", sanitize(subject.as_str())),
        None => format!("{}_v{index}", sanitize(subject.as_str())),
    }
}

pub fn write_cached(dir: &Path, stem: &str, seq: &VideoSequence) -> Result<()> {
    let mut bytes = Vec::with_capacity(4 * seq.len() * seq.feature_len());
    for f in &seq.features {
        for &v in f.as_slice() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let frame_labels: String = seq
        .frame_labels
        .iter()
        .map(|l| if l.is_pain() { '1' } else { '0' })
        .collect();
    let header = format!(
        "subject {}\nperiod {}\nframes {}\ndim {}\nlabel {}\nframe_labels {}\n",
        seq.subject_id,
        seq.period.map_or("-".to_owned(), |p| p.to_string()),
        seq.len(),
        seq.feature_len(),
        seq.label,
        frame_labels
    );
    write_atomic(&dir.join(format!("{stem}.bin")), bytes)?;
    write_atomic(&dir.join(format!("{stem}.txt")), header)
}

pub fn read_cached(dir: &Path, stem: &str) -> Result<VideoSequence> {
    let header_path = dir.join(format!("{stem}.txt"));
    let bin_path = dir.join(format!("{stem}.bin"));
    let text = fs::read_to_string(&header_path).map_err(|_| Error::MissingFile {
        path: header_path.clone(),
        row: None,
    })?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: header_path.clone(),
        line,
        message,
    };
    let mut subject = None;
    let mut period = None;
    let mut frames = None;
    let mut dim = None;
    let mut label = None;
    let mut frame_labels = None;
    for (i, line) in text.lines().enumerate() {
        let (key, value) = line.split_once(' ').unwrap_or((line, ""));
        let bad = |what: &str| parse_err(i + 1, format!("bad {what} {value:?}"));
        match key {
            "subject" => subject = Some(SubjectId::new(value)),
            "period" if value == "-" => period = None,
            "period" => period = Some(value.parse::<RecordingPeriod>().map_err(|_| bad("period"))?),
            "frames" => frames = Some(value.parse::<usize>().map_err(|_| bad("frame count"))?),
            "dim" => dim = Some(value.parse::<usize>().map_err(|_| bad("dimension"))?),
            "label" => label = Some(value.parse::<PainClass>().map_err(|_| bad("label"))?),
            "frame_labels" => {
                frame_labels = Some(
                    value
                        .chars()
                        .map(|c| match c {
                            '0' => Ok(PainClass::NoPain),
                            '1' => Ok(PainClass::Pain),
                            _ => Err(bad("frame labels")),
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "" => {}
            other => return Err(parse_err(i + 1, format!("unknown key {other:?}"))),
        }
    }
    let missing = |k: &str| parse_err(0, format!("missing {k}"));
    let subject = subject.ok_or_else(|| missing("subject"))?;
    let n = frames.ok_or_else(|| missing("frames"))?;
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let label = label.ok_or_else(|| missing("label"))?;
    let frame_labels = frame_labels.unwrap_or_else(|| vec![label; n]);

    let bytes = fs::read(&bin_path).map_err(|_| Error::MissingFile {
        path: bin_path.clone(),
        row: None,
    })?;
    if bytes.len() != 4 * n * dim {
        return Err(Error::shape("cached feature bytes", 4 * n * dim, bytes.len()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let features = if dim == 0 { Vec::new() } else { values.chunks_exact(dim).map(|r| FusedVector(r.to_vec())).collect() };
    VideoSequence::with_frame_labels(subject, period, label, frame_labels, features)
}

/// Loads every cached video in `dir`, ordered by file stem.
pub fn read_cache_dir(dir: &Path) -> Result<Vec<VideoSequence>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_owned());
            }
        }
    }
    stems.sort();
    stems.iter().map(|s| read_cached(dir, s)).collect()
}

fn join_widths(w: &[usize]) -> String {
    if w.is_empty() {
        "-".into()
    } else {
        w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

fn parse_widths(s: &str) -> Result<Vec<usize>> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| v.parse().map_err(|_| Error::Checkpoint(format!("bad layer widths {s:?}"))))
        .collect()
}

impl TemporalModel {
    /// Checkpoint of the weights plus, when given, the feature scaler they
    /// were trained behind.
    pub fn to_checkpoint(&self, scaler: Option<&FeatureScaler>) -> Checkpoint {
        let spec = self.spec();
        let mut ck = Checkpoint::new("temporal")
            .with_meta("input_len", spec.input_len)
            .with_meta("lstm_units", join_widths(&spec.lstm_units))
            .with_meta("dense_units", join_widths(&spec.dense_units))
            .with_meta("output_units", spec.output_units);
        for e in self.layout().entries() {
            let data = self.params()[e.range()].iter().map(|&v| v as f32).collect();
            ck.tensors.push(Tensor::new(e.name.clone(), e.shape.clone(), data));
        }
        if let Some(s) = scaler {
            let n = s.mean.len();
            ck.tensors.push(Tensor::new("scaler.mean", vec![n], s.mean.iter().map(|&v| v as f32).collect()));
            ck.tensors.push(Tensor::new("scaler.scale", vec![n], s.scale.iter().map(|&v| v as f32).collect()));
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, Option<FeatureScaler>)> {
        ck.expect_kind("temporal")?;
        let meta = |k: &str| ck.meta(k).ok_or_else(|| Error::Checkpoint(format!("missing {k}")));
        let num = |k: &str| -> Result<usize> {
            meta(k)?.parse().map_err(|_| Error::Checkpoint(format!("bad {k}")))
        };
        let spec = TemporalSpec {
            input_len: num("input_len")?,
            lstm_units: parse_widths(meta("lstm_units")?)?,
            dense_units: parse_widths(meta("dense_units")?)?,
            output_units: num("output_units")?,
        };
        spec.validate()?;
        let layout = spec.layout();
        let mut params = Vec::with_capacity(layout.len());
        for e in layout.entries() {
            let t = ck.tensor(&e.name)?;
            if t.shape != e.shape {
                return Err(Error::WeightShapeMismatch {
                    layer: e.name.clone(),
                    expected: e.shape.clone(),
                    actual: t.shape.clone(),
                });
            }
            params.extend(t.data.iter().map(|&v| v as f64));
        }
        let scaler = match (ck.tensor("scaler.mean"), ck.tensor("scaler.scale")) {
            (Ok(m), Ok(s)) if m.data.len() == spec.input_len && s.data.len() == spec.input_len => Some(FeatureScaler {
                mean: m.data.iter().map(|&v| v as f64).collect(),
                scale: s.data.iter().map(|&v| v as f64).collect(),
            }),
            (Err(_), Err(_)) => None,
            _ => return Err(Error::Checkpoint("incomplete or mis-sized feature scaler".into())),
        };
        Ok((TemporalModel::from_params(spec, params)?, scaler))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_seq() -> VideoSequence {
        let features = (0..5).map(|i| FusedVector(vec![i as f64 * 0.25, -1.5, 3.0])).collect();
        let labels = vec![PainClass::NoPain, PainClass::NoPain, PainClass::Pain, PainClass::Pain, PainClass::Pain];
        VideoSequence::with_frame_labels("S 01".into(), Some(RecordingPeriod::T2), PainClass::Pain, labels, features)
            .unwrap()
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let seq = sample_seq();
        let stem = cache_stem(&seq.subject_id, seq.period, 0);
        assert_eq!(stem, "S_01_T2");
        write_cached(dir.path(), &stem, &seq).unwrap();
        let back = read_cached(dir.path(), &stem).unwrap();
        assert_eq!(back, seq);
        let bin = fs::read(dir.path().join("S_01_T2.bin")).unwrap();
        assert_eq!(bin.len(), 5 * 3 * 4);
        assert_eq!(&bin[4..8], &(-1.5f32).to_le_bytes());
        let all = read_cache_dir(dir.path()).unwrap();
        assert_eq!(all.len(), 1);
    }

    #[test]
    fn cache_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_cached(dir.path(), "nope"), Err(Error::MissingFile { .. })));
        let seq = sample_seq();
        write_cached(dir.path(), "x", &seq).unwrap();
        fs::write(dir.path().join("x.bin"), [0u8; 7]).unwrap();
        assert!(matches!(read_cached(dir.path(), "x"), Err(Error::ShapeMismatch { .. })));
        fs::write(dir.path().join("x.txt"), "subject a\nframes x\n").unwrap();
        assert!(matches!(read_cached(dir.path(), "x"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn temporal_checkpoint_round_trip() {
        let m = TemporalModel::new(TemporalSpec::with_input_len(3), 4).unwrap();
        let scaler = FeatureScaler::fit(&sample_seq().features).unwrap();
        let ck = m.to_checkpoint(Some(&scaler));
        let parsed = Checkpoint::parse(&ck.manifest_text(), &ck.weights_bytes()).unwrap();
        let (back, s) = TemporalModel::from_checkpoint(&parsed).unwrap();
        assert_eq!(back.spec(), m.spec());
        assert_eq!(back.to_checkpoint(s.as_ref()).weights_bytes(), ck.weights_bytes());
        let s = s.unwrap();
        assert_eq!(s.mean[1], -1.5);

        let two = TemporalModel::new(
            TemporalSpec {
                output_units: 2,
                ..TemporalSpec::with_input_len(3)
            },
            4,
        )
        .unwrap();
        let (back, s) = TemporalModel::from_checkpoint(&two.to_checkpoint(None)).unwrap();
        assert_eq!(back.spec().output_units, 2);
        assert!(s.is_none());
    }
}
