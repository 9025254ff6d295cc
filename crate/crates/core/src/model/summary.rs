//! Analytic parameter accounting, no weights instantiated.

use std::fmt;

use super::backbone::BackboneSpec;
use super::head::HeadSpec;
use crate::error::{Error, Result};

/// Total parameters of the full two-backbone fusion model.
pub const FUSION_TOTAL_PARAMS: usize = 29_474_818;
/// Trainable parameters once both backbones are frozen.
pub const FUSION_TRAINABLE_PARAMS: usize = 45_442;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSummary {
    pub name: String,
    pub output_shape: String,
    pub params: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSummary {
    pub layers: Vec<LayerSummary>,
    pub total_params: usize,
    pub trainable_params: usize,
}

impl ModelSummary {
    pub fn from_layers(layers: Vec<LayerSummary>) -> Self {
        let total_params = layers.iter().map(|l| l.params).sum();
        let trainable_params = layers.iter().filter(|l| l.trainable).map(|l| l.params).sum();
        ModelSummary {
            layers,
            total_params,
            trainable_params,
        }
    }

    pub fn non_trainable_params(&self) -> usize {
        self.total_params - self.trainable_params
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSummary> {
        self.layers.iter().find(|l| l.name == name)
    }
}

impl fmt::Display for ModelSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.layers.iter().map(|l| l.name.len()).max().unwrap_or(5).max(5);
        writeln!(f, "{:<width$}  {:<14}  {:>12}  trainable", "layer", "output", "params")?;
        writeln!(f, "{}", "-".repeat(width + 41))?;
        for l in &self.layers {
            writeln!(
                f,
                "{:<width$}  {:<14}  {:>12}  {}",
                l.name,
                l.output_shape,
                group_thousands(l.params),
                if l.trainable { "yes" } else { "no" }
            )?;
        }
        writeln!(f, "{}", "-".repeat(width + 41))?;
        writeln!(f, "total params:         {:>12}", group_thousands(self.total_params))?;
        writeln!(f, "trainable params:     {:>12}", group_thousands(self.trainable_params))?;
        write!(f, "non-trainable params: {:>12}", group_thousands(self.non_trainable_params()))
    }
}

pub fn group_thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionModelSpec {
    pub face_backbone: BackboneSpec,
    pub body_backbone: BackboneSpec,
    pub head: HeadSpec,
}

impl FusionModelSpec {
    /// Two full VGG16 extractors (face and generic weights) with the default head.
    pub fn full() -> Self {
        use super::backbone::PretrainTag;
        FusionModelSpec {
            face_backbone: BackboneSpec::vgg16(PretrainTag::FaceWeights),
            body_backbone: BackboneSpec::vgg16(PretrainTag::GenericWeights),
            head: HeadSpec::for_backbone(512),
        }
    }

    /// Both extractors replaced by the reduced stand-in.
    pub fn reduced() -> Self {
        let backbone = BackboneSpec::reduced();
        FusionModelSpec {
            head: HeadSpec::for_backbone(backbone.out_channels()),
            face_backbone: backbone.clone(),
            body_backbone: backbone,
        }
    }
}

fn backbone_layers(prefix: &str, spec: &BackboneSpec, out: &mut Vec<LayerSummary>) {
    let mut side = 224;
    let mut layers = spec.conv_layers().into_iter();
    for (b, block) in spec.blocks.iter().enumerate() {
        for _ in block {
            let l = layers.next().expect("one spec per conv");
            out.push(LayerSummary {
                name: format!("{prefix}/{}", l.name),
                output_shape: format!("{side}x{side}x{}", l.out_channels),
                params: l.param_count(),
                trainable: !spec.frozen,
            });
        }
        side /= 2;
        out.push(LayerSummary {
            name: format!("{prefix}/block{}_pool", b + 1),
            output_shape: format!("{side}x{side}x{}", block.last().copied().unwrap_or(0)),
            params: 0,
            trainable: !spec.frozen,
        });
    }
}

/// Per-layer parameter table for the fusion model. Frozen backbones count
/// toward the total but not the trainable total.
pub fn count_params(spec: &FusionModelSpec) -> Result<ModelSummary> {
    spec.face_backbone.validate()?;
    spec.body_backbone.validate()?;
    spec.head.validate()?;
    for (what, bb) in [("face", &spec.face_backbone), ("body", &spec.body_backbone)] {
        if bb.out_channels() != spec.head.in_channels {
            return Err(Error::IncompleteSpec(format!(
                "{what} backbone emits {} channels, head expects {}",
                bb.out_channels(),
                spec.head.in_channels
            )));
        }
    }

    let mut layers = Vec::new();
    backbone_layers("face_backbone", &spec.face_backbone, &mut layers);
    backbone_layers("body_backbone", &spec.body_backbone, &mut layers);

    let h = &spec.head;
    let dense = |name: &str, shape: String, i: usize, o: usize| LayerSummary {
        name: name.to_owned(),
        output_shape: shape,
        params: i * o + o,
        trainable: true,
    };
    let structural = |name: &str, shape: String| LayerSummary {
        name: name.to_owned(),
        output_shape: shape,
        params: 0,
        trainable: true,
    };
    let bw = h.branch_width;
    layers.push(dense("face_reduce", format!("7x7x{bw}"), h.in_channels, bw));
    layers.push(structural("face_pool", format!("3x3x{bw}")));
    layers.push(dense("body_reduce", format!("7x7x{bw}"), h.in_channels, bw));
    layers.push(structural("body_pool", format!("3x3x{bw}")));
    layers.push(structural("concat", format!("3x3x{}", 2 * bw)));
    layers.push(dense("shared", format!("3x3x{}", h.shared_width), 2 * bw, h.shared_width));
    layers.push(structural("merge", h.fused_len().to_string()));
    layers.push(dense("hidden", h.hidden_width.to_string(), h.fused_len(), h.hidden_width));
    layers.push(dense("output", h.classes.to_string(), h.hidden_width, h.classes));
    Ok(ModelSummary::from_layers(layers))
}
