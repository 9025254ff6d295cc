use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{consensus_label, NipsAssessment, PainLabel, RecordingPeriod, SubjectId};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "subject,period,video,rater,face,body,vital,cry";

/// One rater's assessment of one recording period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub subject_id: SubjectId,
    pub period: RecordingPeriod,
    /// As written in the file; relative paths resolve against the manifest directory.
    pub video: PathBuf,
    pub assessment: NipsAssessment,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LabelManifest {
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl LabelManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile {
                path: path.to_owned(),
                row: None,
            },
            _ => Error::io(format!("reading {}", path.display()), e),
        })?;
        let root = path.parent().map(Path::to_owned).unwrap_or_default();
        Self::parse(&text, path, root)
    }

    pub fn parse(text: &str, path: &Path, root: PathBuf) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.find(|(_, l)| !l.is_empty()) {
            Some((_, h)) if h == MANIFEST_HEADER => {}
            Some((n, h)) => {
                return Err(parse_err(n, format!("expected header {MANIFEST_HEADER:?}, found {h:?}")))
            }
            None => return Err(parse_err(1, "empty manifest".into())),
        }

        let mut seen = HashSet::new();
        let mut rows = Vec::new();
        for (line, l) in lines {
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            if fields.len() != 8 {
                return Err(parse_err(line, format!("expected 8 fields, found {}", fields.len())));
            }
            if fields[0].is_empty() {
                return Err(parse_err(line, "empty subject id".into()));
            }
            let period: RecordingPeriod = fields[1]
                .parse()
                .map_err(|_| parse_err(line, format!("bad period {:?}", fields[1])))?;
            let mut scores = [0u8; 4];
            for (k, s) in fields[4..].iter().enumerate() {
                scores[k] = s
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad score {s:?}")))?;
            }
            let assessment = NipsAssessment::new(scores[0], scores[1], scores[2], scores[3], fields[3])?;
            let key = (fields[0].to_owned(), period, fields[3].to_owned());
            if !seen.insert(key) {
                return Err(Error::DuplicateRow {
                    path: path.to_owned(),
                    line,
                    subject: fields[0].into(),
                    period: period.to_string(),
                    rater: fields[3].into(),
                });
            }
            rows.push(ManifestRow {
                subject_id: SubjectId::new(fields[0]),
                period,
                video: PathBuf::from(fields[2]),
                assessment,
                line,
            });
        }
        Ok(LabelManifest { root, rows })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.rows {
            let a = &r.assessment;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.subject_id,
                r.period,
                r.video.display(),
                a.rater_id,
                a.face,
                a.body,
                a.vital,
                a.cry
            );
        }
        out
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        if row.video.is_absolute() {
            row.video.clone()
        } else {
            self.root.join(&row.video)
        }
    }

    /// Fails on the first row whose video cannot be found.
    pub fn check_videos(&self) -> Result<()> {
        for row in &self.rows {
            let p = self.resolve(row);
            if !p.exists() {
                return Err(Error::MissingFile {
                    path: p,
                    row: Some(row.line),
                });
            }
        }
        Ok(())
    }

    pub fn subjects(&self) -> Vec<SubjectId> {
        let mut s: Vec<_> = self.rows.iter().map(|r| r.subject_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// One entry per (subject, period): the video row plus the rater-consensus label.
    pub fn recordings(&self) -> Result<Vec<Recording>> {
        let mut grouped: BTreeMap<(SubjectId, RecordingPeriod), Vec<&ManifestRow>> = BTreeMap::new();
        for r in &self.rows {
            grouped
                .entry((r.subject_id.clone(), r.period))
                .or_default()
                .push(r);
        }
        grouped
            .into_iter()
            .map(|((subject_id, period), rows)| {
                let assessments: Vec<_> = rows.iter().map(|r| r.assessment.clone()).collect();
                Ok(Recording {
                    subject_id,
                    period,
                    video: self.resolve(rows[0]),
                    label: consensus_label(&assessments)?,
                    line: rows[0].line,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Recording {
    pub subject_id: SubjectId,
    pub period: RecordingPeriod,
    pub video: PathBuf,
    pub label: PainLabel,
    pub line: usize,
}
