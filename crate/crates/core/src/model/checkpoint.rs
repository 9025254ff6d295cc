//! Checkpoint directories: a text `manifest` plus `weights.bin`.
//!
//! ```text
//! painnet-checkpoint 1
//! kind backbone
//! pretrain_tag face_weights
//! means 0.5 0.5 0.5
//! tensor block1_conv1.weight 3,3,3,64 0
//! tensor block1_conv1.bias 64 6912
//! ```
//!
//! `weights.bin` holds every tensor as little-endian f32, row-major, in
//! manifest order; the last column of a `tensor` line is its byte offset.
//! Extra `key value...` lines carry model-specific metadata.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::backbone::{Backbone, BackboneSpec, ConvWeights, PretrainTag};
use super::head::{FusionHead, HeadSpec};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest";
pub const WEIGHTS_FILE: &str = "weights.bin";
const MAGIC: &str = "painnet-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Tensor {
            name: name.into(),
            shape,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub kind: String,
    /// Ordered `key value...` metadata lines.
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<Tensor>,
}

fn ck_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Checkpoint {
            kind: kind.into(),
            ..Default::default()
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ck_err(format!("missing tensor {name}")))
    }

    pub fn manifest_text(&self) -> String {
        let mut out = format!("{MAGIC}\nkind {}\n", self.kind);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "{k} {v}");
        }
        let mut offset = 0usize;
        for t in &self.tensors {
            let shape: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(out, "tensor {} {} {}", t.name, shape.join(","), offset);
            offset += 4 * t.data.len();
        }
        out
    }

    pub fn weights_bytes(&self) -> Vec<u8> {
        let n: usize = self.tensors.iter().map(|t| t.data.len()).sum();
        let mut out = Vec::with_capacity(4 * n);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Writes into a sibling temp directory and renames it into place.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let tmp = tmp_sibling(dir);
        let _ = fs::remove_dir_all(&tmp);
        fs::create_dir_all(&tmp).map_err(|e| Error::io(format!("creating {}", tmp.display()), e))?;
        fs::write(tmp.join(MANIFEST_FILE), self.manifest_text())
            .map_err(|e| Error::io("writing checkpoint manifest", e))?;
        fs::write(tmp.join(WEIGHTS_FILE), self.weights_bytes())
            .map_err(|e| Error::io("writing checkpoint weights", e))?;
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| Error::io(format!("replacing {}", dir.display()), e))?;
        }
        fs::rename(&tmp, dir).map_err(|e| Error::io(format!("renaming into {}", dir.display()), e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|_| Error::MissingFile {
            path: manifest_path.clone(),
            row: None,
        })?;
        let bytes = fs::read(dir.join(WEIGHTS_FILE)).map_err(|_| Error::MissingFile {
            path: dir.join(WEIGHTS_FILE),
            row: None,
        })?;
        Self::parse(&text, &bytes)
    }

    pub fn parse(manifest: &str, bytes: &[u8]) -> Result<Self> {
        let mut lines = manifest.lines();
        if lines.next() != Some(MAGIC) {
            return Err(ck_err("not a painnet checkpoint manifest"));
        }
        let mut ck = Checkpoint::default();
        let mut expected_offset = 0usize;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "kind" => ck.kind = rest.to_owned(),
                "tensor" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 3 {
                        return Err(ck_err(format!("bad tensor line {line:?}")));
                    }
                    let shape = f[1]
                        .split(',')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| ck_err(format!("bad shape in {line:?}")))?;
                    let offset: usize = f[2].parse().map_err(|_| ck_err(format!("bad offset in {line:?}")))?;
                    if offset != expected_offset {
                        return Err(ck_err(format!("tensor {} at offset {offset}, expected {expected_offset}", f[0])));
                    }
                    let len: usize = shape.iter().product();
                    let end = offset + 4 * len;
                    let raw = bytes
                        .get(offset..end)
                        .ok_or_else(|| ck_err(format!("weights file too short for {}", f[0])))?;
                    let data = raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect();
                    ck.tensors.push(Tensor::new(f[0], shape, data));
                    expected_offset = end;
                }
                _ => ck.meta.push((key.to_owned(), rest.to_owned())),
            }
        }
        if expected_offset != bytes.len() {
            return Err(ck_err(format!(
                "weights file has {} bytes, manifest describes {expected_offset}",
                bytes.len()
            )));
        }
        Ok(ck)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(ck_err(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

fn expect_shape(t: &Tensor, expected: &[usize]) -> Result<()> {
    if t.shape != expected {
        return Err(Error::WeightShapeMismatch {
            layer: t.name.clone(),
            expected: expected.to_vec(),
            actual: t.shape.clone(),
        });
    }
    Ok(())
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|v| v.parse::<f64>().map_err(|_| ck_err(format!("bad number {v:?}"))))
        .collect()
}

impl Backbone {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let spec = self.spec();
        let blocks: Vec<String> = spec
            .blocks
            .iter()
            .map(|b| b.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        let mut ck = Checkpoint::new("backbone")
            .with_meta("pretrain_tag", spec.pretrain_tag)
            .with_meta("means", self.means.map(|m| m.to_string()).join(" "))
            .with_meta("blocks", blocks.join(" "));
        for (l, w) in spec.conv_layers().iter().zip(self.layers()) {
            ck.tensors.push(Tensor::new(format!("{}.weight", l.name), l.weight_shape(), w.weight.clone()));
            ck.tensors.push(Tensor::new(format!("{}.bias", l.name), vec![l.out_channels], w.bias.clone()));
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("backbone")?;
        let pretrain_tag: PretrainTag = ck.meta("pretrain_tag").ok_or_else(|| ck_err("missing pretrain_tag"))?.parse()?;
        let means = parse_floats(ck.meta("means").ok_or_else(|| ck_err("missing means"))?)?;
        let means: [f32; 3] = match means[..] {
            [r, g, b] => [r as f32, g as f32, b as f32],
            _ => return Err(ck_err("means needs three values")),
        };
        let blocks = ck
            .meta("blocks")
            .ok_or_else(|| ck_err("missing blocks"))?
            .split_whitespace()
            .map(|b| {
                b.split(',')
                    .map(|w| w.parse::<usize>().map_err(|_| ck_err(format!("bad block width {w:?}"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = BackboneSpec {
            blocks,
            frozen: true,
            pretrain_tag,
        };
        spec.validate()?;
        let layers = spec
            .conv_layers()
            .iter()
            .map(|l| {
                let w = ck.tensor(&format!("{}.weight", l.name))?;
                expect_shape(w, &l.weight_shape())?;
                let b = ck.tensor(&format!("{}.bias", l.name))?;
                expect_shape(b, &[l.out_channels])?;
                Ok(ConvWeights {
                    weight: w.data.clone(),
                    bias: b.data.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Backbone::from_weights(spec, layers, means)
    }
}

impl FusionHead {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("fusion_head");
        for e in self.layout().entries() {
            let data = self.params()[e.range()].iter().map(|&v| v as f32).collect();
            ck.tensors.push(Tensor::new(e.name.clone(), e.shape.clone(), data));
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("fusion_head")?;
        let reduce = ck.tensor("face_reduce.weight")?;
        let shared = ck.tensor("shared.weight")?;
        let hidden = ck.tensor("hidden.weight")?;
        let output = ck.tensor("output.weight")?;
        let (Some(&in_channels), Some(&branch_width)) = (reduce.shape.first(), reduce.shape.get(1)) else {
            return Err(ck_err("face_reduce.weight must be 2-D"));
        };
        let spec = HeadSpec {
            in_channels,
            branch_width,
            shared_width: shared.shape.get(1).copied().unwrap_or(0),
            hidden_width: hidden.shape.get(1).copied().unwrap_or(0),
            classes: output.shape.get(1).copied().unwrap_or(0),
        };
        spec.validate()?;
        let layout = spec.layout();
        let mut params = Vec::with_capacity(layout.len());
        for e in layout.entries() {
            let t = ck.tensor(&e.name)?;
            expect_shape(t, &e.shape)?;
            params.extend(t.data.iter().map(|&v| v as f64));
        }
        FusionHead::from_params(spec, params)
    }
}
