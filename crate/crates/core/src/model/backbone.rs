//! VGG16 convolutional feature extractor (the 13 conv layers and 5 max-pools,
//! no classifier), run frozen.

use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detect::{RegionCrop, CROP_SIZE};
use crate::error::{Error, Result};

/// Spatial side of the last convolutional feature map for a 224 input.
pub const FEATURE_GRID: usize = 7;

/// Conv widths of VGG16, grouped by pooling block.
pub const VGG16_BLOCKS: [&[usize]; 5] = [
    &[64, 64],
    &[128, 128],
    &[256, 256, 256],
    &[512, 512, 512],
    &[512, 512, 512],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainTag {
    /// Weights trained for faces (VGGFace2-style).
    FaceWeights,
    /// Generic object weights (ImageNet-style).
    GenericWeights,
    /// Seeded random weights.
    StandIn,
}

impl fmt::Display for PretrainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PretrainTag::FaceWeights => "face_weights",
            PretrainTag::GenericWeights => "generic_weights",
            PretrainTag::StandIn => "stand_in",
        })
    }
}

impl FromStr for PretrainTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "face_weights" => Ok(PretrainTag::FaceWeights),
            "generic_weights" => Ok(PretrainTag::GenericWeights),
            "stand_in" => Ok(PretrainTag::StandIn),
            other => Err(Error::Checkpoint(format!("unknown pretrain tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvLayerSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        vec![3, 3, self.in_channels, self.out_channels]
    }

    pub fn param_count(&self) -> usize {
        9 * self.in_channels * self.out_channels + self.out_channels
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneSpec {
    /// Output widths of the 3x3 convolutions, one group per max-pool block.
    pub blocks: Vec<Vec<usize>>,
    pub frozen: bool,
    pub pretrain_tag: PretrainTag,
}

impl BackboneSpec {
    pub fn vgg16(pretrain_tag: PretrainTag) -> Self {
        BackboneSpec {
            blocks: VGG16_BLOCKS.iter().map(|b| b.to_vec()).collect(),
            frozen: true,
            pretrain_tag,
        }
    }

    /// VGG16 with every width divided by sixteen, for desk-scale runs.
    pub fn reduced() -> Self {
        Self::reduced_by(16)
    }

    /// VGG16 with every width divided by `divisor` (at least 1 channel).
    pub fn reduced_by(divisor: usize) -> Self {
        BackboneSpec {
            blocks: VGG16_BLOCKS
                .iter()
                .map(|b| b.iter().map(|w| (w / divisor.max(1)).max(1)).collect())
                .collect(),
            frozen: true,
            pretrain_tag: PretrainTag::StandIn,
        }
    }

    pub fn conv_layers(&self) -> Vec<ConvLayerSpec> {
        let mut out = Vec::new();
        let mut in_channels = 3;
        for (b, block) in self.blocks.iter().enumerate() {
            for (c, &width) in block.iter().enumerate() {
                out.push(ConvLayerSpec {
                    name: format!("block{}_conv{}", b + 1, c + 1),
                    in_channels,
                    out_channels: width,
                });
                in_channels = width;
            }
        }
        out
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().and_then(|b| b.last()).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.len() != 5 {
            return Err(Error::IncompleteSpec(format!(
                "backbone needs 5 pooling blocks to reach a 7x7 map, has {}",
                self.blocks.len()
            )));
        }
        if self.blocks.iter().any(|b| b.is_empty() || b.contains(&0)) {
            return Err(Error::IncompleteSpec("empty block or zero-width conv".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.conv_layers().iter().map(ConvLayerSpec::param_count).sum()
    }
}

/// Last conv map: 7x7 positions, row-major, `channels` values per position.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(channels: usize, data: Vec<f32>) -> Result<Self> {
        let expected = FEATURE_GRID * FEATURE_GRID * channels;
        if data.len() != expected || channels == 0 {
            return Err(Error::shape(
                "feature map",
                format!("7x7x{channels}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(FeatureMap { channels, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * FEATURE_GRID + col) * self.channels + channel]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    /// `[3, 3, in, out]`, row-major.
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    spec: BackboneSpec,
    layers: Vec<ConvWeights>,
    /// Per-channel means subtracted from `[0, 1]` pixels.
    pub means: [f32; 3],
}

impl Backbone {
    pub fn from_weights(spec: BackboneSpec, layers: Vec<ConvWeights>, means: [f32; 3]) -> Result<Self> {
        spec.validate()?;
        let specs = spec.conv_layers();
        if specs.len() != layers.len() {
            return Err(Error::IncompleteSpec(format!(
                "{} conv layers in spec, {} weight sets",
                specs.len(),
                layers.len()
            )));
        }
        for (s, w) in specs.iter().zip(&layers) {
            let shape = s.weight_shape();
            if w.weight.len() != shape.iter().product::<usize>() {
                return Err(Error::WeightShapeMismatch {
                    layer: format!("{}.weight", s.name),
                    expected: shape,
                    actual: vec![w.weight.len()],
                });
            }
            if w.bias.len() != s.out_channels {
                return Err(Error::WeightShapeMismatch {
                    layer: format!("{}.bias", s.name),
                    expected: vec![s.out_channels],
                    actual: vec![w.bias.len()],
                });
            }
        }
        Ok(Backbone { spec, layers, means })
    }

    /// He-normal random weights, zero biases, zero means.
    pub fn stand_in(spec: BackboneSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .conv_layers()
            .iter()
            .map(|s| {
                let fan_in = 9 * s.in_channels;
                let normal = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("valid std");
                ConvWeights {
                    weight: (0..fan_in * s.out_channels).map(|_| normal.sample(&mut rng)).collect(),
                    bias: vec![0.0; s.out_channels],
                }
            })
            .collect();
        let spec = BackboneSpec {
            pretrain_tag: PretrainTag::StandIn,
            ..spec
        };
        Self::from_weights(spec, layers, [0.0; 3])
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[ConvWeights] {
        &self.layers
    }

    pub fn out_channels(&self) -> usize {
        self.spec.out_channels()
    }

    /// Hash over every parameter bit, for checking that weights did not move.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for l in &self.layers {
            for v in l.weight.iter().chain(&l.bias) {
                h.write_u32(v.to_bits());
            }
        }
        for m in &self.means {
            h.write_u32(m.to_bits());
        }
        h.finish()
    }

    pub fn extract(&self, crop: &RegionCrop) -> Result<FeatureMap> {
        let px = crop.pixels();
        if let Some(&bad) = px.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::UnnormalizedInput(bad));
        }
        // Narrow early layers run planar (CHW) so the inner loops vectorize
        // along image rows; the rest use im2col and a matrix product.
        let mut planar = true;
        let mut act: Vec<f32> = (0..3)
            .flat_map(|c| px.iter().skip(c).step_by(3).map(move |&v| v - self.means[c]))
            .collect();
        let mut side = CROP_SIZE;
        let mut channels = 3;
        let mut scratch = Vec::new();
        let mut layer = 0;
        for block in &self.spec.blocks {
            if planar && block.iter().any(|&w| w > PLANAR_MAX_WIDTH) {
                act = chw_to_hwc(&act, side * side, channels);
                planar = false;
            }
            for &width in block {
                let w = &self.layers[layer];
                act = if planar {
                    conv3x3_relu_planar(&act, side, channels, width, &w.weight, &w.bias)
                } else {
                    conv3x3_relu(&act, side, channels, width, &w.weight, &w.bias, &mut scratch)
                };
                channels = width;
                layer += 1;
            }
            act = if planar {
                max_pool2_planar(&act, side, channels)
            } else {
                max_pool2(&act, side, channels)
            };
            side /= 2;
        }
        if planar {
            act = chw_to_hwc(&act, side * side, channels);
        }
        debug_assert_eq!(side, FEATURE_GRID);
        FeatureMap::new(channels, act)
    }
}

const PLANAR_MAX_WIDTH: usize = 8;

fn chw_to_hwc(input: &[f32], positions: usize, channels: usize) -> Vec<f32> {
    let mut out = vec![0.0; input.len()];
    for c in 0..channels {
        for (p, &v) in input[c * positions..(c + 1) * positions].iter().enumerate() {
            out[p * channels + c] = v;
        }
    }
    out
}

/// Same as [`conv3x3_relu`] on CHW planes. Weights keep the HWIO layout.
fn conv3x3_relu_planar(input: &[f32], side: usize, cin: usize, cout: usize, weight: &[f32], bias: &[f32]) -> Vec<f32> {
    let plane = side * side;
    let mut out = vec![0.0f32; cout * plane];
    for co in 0..cout {
        let dst = &mut out[co * plane..(co + 1) * plane];
        dst.fill(bias[co]);
        for y in 0..side {
            let row = &mut dst[y * side..(y + 1) * side];
            for ky in 0..3 {
                let Some(sy) = (y + ky).checked_sub(1).filter(|&sy| sy < side) else {
                    continue;
                };
                for ci in 0..cin {
                    let src = &input[ci * plane + sy * side..ci * plane + (sy + 1) * side];
                    let w = |kx: usize| weight[((ky * 3 + kx) * cin + ci) * cout + co];
                    let (w0, w1, w2) = (w(0), w(1), w(2));
                    // x - 1, x, x + 1 in one pass
                    row[0] += w1 * src[0] + w2 * src[1];
                    row[side - 1] += w0 * src[side - 2] + w1 * src[side - 1];
                    let taps = src[..side - 2].iter().zip(&src[1..side - 1]).zip(&src[2..]);
                    for (o, ((&a, &b), &c)) in row[1..side - 1].iter_mut().zip(taps) {
                        *o += w0 * a + w1 * b + w2 * c;
                    }
                }
            }
            for v in row.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }
    out
}

fn max_pool2_planar(input: &[f32], side: usize, channels: usize) -> Vec<f32> {
    let half = side / 2;
    let mut out = vec![0.0f32; half * half * channels];
    for c in 0..channels {
        let src = &input[c * side * side..(c + 1) * side * side];
        let dst = &mut out[c * half * half..(c + 1) * half * half];
        for y in 0..half {
            let r0 = &src[2 * y * side..(2 * y + 1) * side];
            let r1 = &src[(2 * y + 1) * side..(2 * y + 2) * side];
            for x in 0..half {
                dst[y * half + x] = r0[2 * x].max(r0[2 * x + 1]).max(r1[2 * x]).max(r1[2 * x + 1]);
            }
        }
    }
    out
}

/// 3x3 convolution, stride 1, zero padding 1, followed by ReLU. HWC layout.
fn conv3x3_relu(
    input: &[f32],
    side: usize,
    cin: usize,
    cout: usize,
    weight: &[f32],
    bias: &[f32],
    cols: &mut Vec<f32>,
) -> Vec<f32> {
    let k = 9 * cin;
    let m = side * side;
    cols.clear();
    cols.resize(m * k, 0.0);
    for y in 0..side {
        for x in 0..side {
            let row = &mut cols[(y * side + x) * k..(y * side + x + 1) * k];
            for ky in 0..3 {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= side as isize {
                    continue;
                }
                for kx in 0..3 {
                    let sx = x as isize + kx as isize - 1;
                    if sx < 0 || sx >= side as isize {
                        continue;
                    }
                    let src = (sy as usize * side + sx as usize) * cin;
                    let dst = (ky * 3 + kx) * cin;
                    row[dst..dst + cin].copy_from_slice(&input[src..src + cin]);
                }
            }
        }
    }
    let mut out = Vec::with_capacity(m * cout);
    for _ in 0..m {
        out.extend_from_slice(bias);
    }
    // SAFETY: cols is m x k, weight is k x cout, out is m x cout, all row-major
    // and sized accordingly.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            cout,
            1.0,
            cols.as_ptr(),
            k as isize,
            1,
            weight.as_ptr(),
            cout as isize,
            1,
            1.0,
            out.as_mut_ptr(),
            cout as isize,
            1,
        );
    }
    for v in &mut out {
        *v = v.max(0.0);
    }
    out
}

fn max_pool2(input: &[f32], side: usize, channels: usize) -> Vec<f32> {
    let half = side / 2;
    let mut out = vec![f32::NEG_INFINITY; half * half * channels];
    for y in 0..half * 2 {
        for x in 0..half * 2 {
            let src = &input[(y * side + x) * channels..][..channels];
            let dst = &mut out[((y / 2) * half + x / 2) * channels..][..channels];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = d.max(*s);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{BoundingBox, RegionKind, CROP_LEN};

    fn crop(pixels: Vec<f32>) -> RegionCrop {
        let b = BoundingBox::whole_frame(224, 224, RegionKind::Face);
        RegionCrop::new(pixels, b, RegionKind::Face).unwrap()
    }

    #[test]
    fn vgg16_counts() {
        let spec = BackboneSpec::vgg16(PretrainTag::FaceWeights);
        assert_eq!(spec.conv_layers().len(), 13);
        assert_eq!(spec.out_channels(), 512);
        assert_eq!(spec.param_count(), 14_714_688);
        let reduced = BackboneSpec::reduced();
        assert_eq!(reduced.out_channels(), 32);
        assert_eq!(reduced.conv_layers()[0].out_channels, 4);
        assert_eq!(BackboneSpec::reduced_by(8).out_channels(), 64);
        assert_eq!(BackboneSpec::reduced_by(1000).conv_layers()[12].out_channels, 1);
    }

    // Direct 3x3 convolution, independent of the im2col path.
    fn conv_direct(input: &[f32], side: usize, cin: usize, cout: usize, w: &[f32], b: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; side * side * cout];
        for y in 0..side {
            for x in 0..side {
                for o in 0..cout {
                    let mut acc = b[o] as f64;
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (sy, sx) = (y as isize + ky - 1, x as isize + kx - 1);
                            if sy < 0 || sx < 0 || sy >= side as isize || sx >= side as isize {
                                continue;
                            }
                            for c in 0..cin {
                                let v = input[(sy as usize * side + sx as usize) * cin + c] as f64;
                                acc += v * w[(((ky * 3 + kx) as usize) * cin + c) * cout + o] as f64;
                            }
                        }
                    }
                    out[(y * side + x) * cout + o] = acc.max(0.0) as f32;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct() {
        let (side, cin, cout) = (6, 3, 5);
        let input: Vec<f32> = (0..side * side * cin).map(|i| ((i * 37) % 11) as f32 / 7.0 - 0.6).collect();
        let w: Vec<f32> = (0..9 * cin * cout).map(|i| ((i * 13) % 17) as f32 / 9.0 - 0.9).collect();
        let b: Vec<f32> = (0..cout).map(|i| i as f32 * 0.1 - 0.2).collect();
        let fast = conv3x3_relu(&input, side, cin, cout, &w, &b, &mut Vec::new());
        let slow = conv_direct(&input, side, cin, cout, &w, &b);
        for (a, e) in fast.iter().zip(&slow) {
            assert!((a - e).abs() < 1e-4, "{a} vs {e}");
        }
    }

    fn hwc_to_chw(input: &[f32], positions: usize, channels: usize) -> Vec<f32> {
        (0..channels)
            .flat_map(|c| (0..positions).map(move |p| input[p * channels + c]))
            .collect()
    }

    #[test]
    fn planar_conv_matches_direct() {
        for (side, cin, cout) in [(6, 3, 5), (2, 1, 1), (9, 4, 8)] {
            let input: Vec<f32> = (0..side * side * cin).map(|i| ((i * 37) % 11) as f32 / 7.0 - 0.6).collect();
            let w: Vec<f32> = (0..9 * cin * cout).map(|i| ((i * 13) % 17) as f32 / 9.0 - 0.9).collect();
            let b: Vec<f32> = (0..cout).map(|i| i as f32 * 0.1 - 0.2).collect();
            let planar = conv3x3_relu_planar(&hwc_to_chw(&input, side * side, cin), side, cin, cout, &w, &b);
            let fast = chw_to_hwc(&planar, side * side, cout);
            let slow = conv_direct(&input, side, cin, cout, &w, &b);
            for (a, e) in fast.iter().zip(&slow) {
                assert!((a - e).abs() < 1e-4, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn planar_pool_matches() {
        let input: Vec<f32> = (0..6 * 6 * 3).map(|i| ((i * 29) % 23) as f32).collect();
        let hwc = max_pool2(&input, 6, 3);
        let chw = max_pool2_planar(&hwc_to_chw(&input, 36, 3), 6, 3);
        assert_eq!(chw_to_hwc(&chw, 9, 3), hwc);
    }

    #[test]
    fn pool_takes_block_max() {
        let input: Vec<f32> = (0..4 * 4 * 2).map(|i| i as f32).collect();
        let out = max_pool2(&input, 4, 2);
        assert_eq!(out, vec![10.0, 11.0, 14.0, 15.0, 26.0, 27.0, 30.0, 31.0]);
    }

    #[test]
    fn zero_crop_gives_zero_map() {
        let bb = Backbone::stand_in(BackboneSpec::reduced(), 1).unwrap();
        let map = bb.extract(&crop(vec![0.0; CROP_LEN])).unwrap();
        assert_eq!(map.channels(), 32);
        assert!(map.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shape_and_determinism() {
        let bb = Backbone::stand_in(BackboneSpec::reduced(), 7).unwrap();
        let c = crop((0..CROP_LEN).map(|i| (i % 251) as f32 / 250.0).collect());
        let a = bb.extract(&c).unwrap();
        let b = bb.extract(&c).unwrap();
        assert_eq!(a.data().len(), 7 * 7 * 32);
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.data().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn bad_weights_rejected() {
        let spec = BackboneSpec::reduced();
        let mut layers = Backbone::stand_in(spec.clone(), 0).unwrap().layers().to_vec();
        layers[3].bias.pop();
        assert!(matches!(
            Backbone::from_weights(spec, layers, [0.0; 3]),
            Err(Error::WeightShapeMismatch { .. })
        ));
    }
}
