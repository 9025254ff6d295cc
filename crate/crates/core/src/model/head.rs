//! Trainable fusion head on top of the two frozen backbones.
//!
//! ```text
//! face map 7x7xC -> dense C->32 (per position, ReLU) -> maxpool 3x3/2 -> 3x3x32 --+-------------+
//!                                                                                   | concat 3x3x64 -> dense 64->16 (ReLU) -> 3x3x16
//! body map 7x7xC -> dense C->32 (per position, ReLU) -> maxpool 3x3/2 -> 3x3x32 --+-------------+
//! merge = [face 288 | body 288 | shared 144] = 720 -> dense 16 (ReLU) -> dense 2 -> softmax
//! ```

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backbone::{FeatureMap, FEATURE_GRID};
use super::linalg::gemm;
use super::params::ParamLayout;
use crate::detect::RegionKind;
use crate::error::{Error, Result};
use crate::ingest::PainClass;

/// Side of the pooled branch grid (7 -> 3 with a 3x3 window, stride 2).
pub const POOL_GRID: usize = 3;
const POOL_WINDOW: usize = 3;
const POOL_STRIDE: usize = 2;
const POSITIONS: usize = FEATURE_GRID * FEATURE_GRID;
const POOLED: usize = POOL_GRID * POOL_GRID;

/// Length of the merge-layer vector with the default head widths.
pub const FUSED_LEN: usize = 720;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadSpec {
    /// Channels of the backbone feature maps.
    pub in_channels: usize,
    pub branch_width: usize,
    pub shared_width: usize,
    pub hidden_width: usize,
    pub classes: usize,
}

impl HeadSpec {
    pub fn for_backbone(in_channels: usize) -> Self {
        HeadSpec {
            in_channels,
            branch_width: 32,
            shared_width: 16,
            hidden_width: 16,
            classes: 2,
        }
    }

    pub fn branch_len(&self) -> usize {
        POOLED * self.branch_width
    }

    pub fn shared_len(&self) -> usize {
        POOLED * self.shared_width
    }

    pub fn fused_len(&self) -> usize {
        2 * self.branch_len() + self.shared_len()
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("in_channels", self.in_channels),
            ("branch_width", self.branch_width),
            ("shared_width", self.shared_width),
            ("hidden_width", self.hidden_width),
        ];
        if let Some((name, _)) = widths.iter().find(|(_, w)| *w == 0) {
            return Err(Error::IncompleteSpec(format!("head {name} is zero")));
        }
        if self.classes != 2 {
            return Err(Error::IncompleteSpec(format!("head must have 2 classes, has {}", self.classes)));
        }
        Ok(())
    }

    /// `(name, input width, output width)` of each dense layer, in parameter order.
    pub fn dense_layers(&self) -> [(&'static str, usize, usize); 5] {
        [
            ("face_reduce", self.in_channels, self.branch_width),
            ("body_reduce", self.in_channels, self.branch_width),
            ("shared", 2 * self.branch_width, self.shared_width),
            ("hidden", self.fused_len(), self.hidden_width),
            ("output", self.hidden_width, self.classes),
        ]
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::default();
        for (name, i, o) in self.dense_layers() {
            layout.push(format!("{name}.weight"), &[i, o]);
            layout.push(format!("{name}.bias"), &[o]);
        }
        layout
    }
}

/// Pooled branch output, 3x3 positions x width, position-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchFeature {
    pub width: usize,
    pub data: Vec<f64>,
}

/// Shared-branch output, 3x3 positions x width, position-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedFeature {
    pub width: usize,
    pub data: Vec<f64>,
}

/// Merge-layer vector: flattened face, body, shared.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedVector(pub Vec<f64>);

impl FusedVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: (usize, usize),
    b: (usize, usize),
    inputs: usize,
    outputs: usize,
}

impl Dense {
    fn weight<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w.0..self.w.1]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b.0..self.b.1]
    }

    fn weight_range(&self) -> Range<usize> {
        self.w.0..self.w.1
    }

    fn bias_range(&self) -> Range<usize> {
        self.b.0..self.b.1
    }

    /// `y = x W + b` for one row.
    fn apply(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        let w = self.weight(p);
        y.copy_from_slice(self.bias(p));
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &w[i * self.outputs..(i + 1) * self.outputs];
            for (yo, wo) in y.iter_mut().zip(row) {
                *yo += xi * wo;
            }
        }
    }

    /// `out = x W + b` for `rows` rows at once.
    fn apply_batch(&self, p: &[f64], x: &[f64], rows: usize, out: &mut Vec<f64>) {
        out.clear();
        for _ in 0..rows {
            out.extend_from_slice(self.bias(p));
        }
        gemm(rows, self.inputs, self.outputs, x, false, self.weight(p), false, 1.0, out);
    }

    /// Accumulates weight/bias gradients and optionally returns `dx = dy W^T`.
    fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], rows: usize, grad: &mut [f64], want_dx: bool) -> Vec<f64> {
        gemm(
            self.inputs,
            rows,
            self.outputs,
            x,
            true,
            dy,
            false,
            1.0,
            &mut grad[self.weight_range()],
        );
        let gb = &mut grad[self.bias_range()];
        for r in dy.chunks_exact(self.outputs) {
            for (g, d) in gb.iter_mut().zip(r) {
                *g += d;
            }
        }
        if !want_dx {
            return Vec::new();
        }
        let mut dx = vec![0.0; rows * self.inputs];
        gemm(rows, self.outputs, self.inputs, dy, false, self.weight(p), true, 0.0, &mut dx);
        dx
    }
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Max over each 3x3 window (stride 2) of a 7x7 grid; also returns, per pooled
/// value, the grid position it came from (first maximum in scan order).
fn pool(act: &[f64], width: usize, out: &mut [f64], argmax: &mut [u8]) {
    for pi in 0..POOL_GRID {
        for pj in 0..POOL_GRID {
            let o = (pi * POOL_GRID + pj) * width;
            for c in 0..width {
                let mut best = f64::NEG_INFINITY;
                let mut at = 0u8;
                for di in 0..POOL_WINDOW {
                    for dj in 0..POOL_WINDOW {
                        let pos = (pi * POOL_STRIDE + di) * FEATURE_GRID + pj * POOL_STRIDE + dj;
                        let v = act[pos * width + c];
                        if v > best {
                            best = v;
                            at = pos as u8;
                        }
                    }
                }
                out[o + c] = best;
                argmax[o + c] = at;
            }
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One labeled frame as seen by the head.
#[derive(Debug, Clone, Copy)]
pub struct MapSample<'a> {
    pub face: &'a FeatureMap,
    pub body: &'a FeatureMap,
    pub label: PainClass,
}

#[derive(Debug, Clone)]
pub struct FusionHead {
    spec: HeadSpec,
    layout: ParamLayout,
    params: Vec<f64>,
}

impl FusionHead {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: HeadSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        let mut params = vec![0.0; layout.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for e in layout.entries() {
            if let [fan_in, fan_out] = e.shape[..] {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for p in &mut params[e.range()] {
                    *p = rng.gen_range(-limit..limit);
                }
            }
        }
        Ok(FusionHead { spec, layout, params })
    }

    pub fn from_params(spec: HeadSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        if params.len() != layout.len() {
            return Err(Error::shape("head parameters", layout.len(), params.len()));
        }
        Ok(FusionHead { spec, layout, params })
    }

    pub fn spec(&self) -> &HeadSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn dense(&self, index: usize) -> Dense {
        let (_, inputs, outputs) = self.spec.dense_layers()[index];
        let w = self.layout.entries()[2 * index].range();
        let b = self.layout.entries()[2 * index + 1].range();
        Dense {
            w: (w.start, w.end),
            b: (b.start, b.end),
            inputs,
            outputs,
        }
    }

    fn check_map(&self, m: &FeatureMap) -> Result<()> {
        if m.channels() != self.spec.in_channels {
            return Err(Error::shape(
                "feature map channels",
                self.spec.in_channels,
                m.channels(),
            ));
        }
        Ok(())
    }

    /// Per-position dense + ReLU, then 3x3/2 max-pool.
    pub fn branch_reduce(&self, kind: RegionKind, m: &FeatureMap) -> Result<BranchFeature> {
        self.check_map(m)?;
        let dense = self.dense(match kind {
            RegionKind::Face => 0,
            RegionKind::Body => 1,
        });
        let width = self.spec.branch_width;
        let mut act = vec![0.0; POSITIONS * width];
        let mut x = vec![0.0; m.channels()];
        for pos in 0..POSITIONS {
            for (xi, &v) in x.iter_mut().zip(&m.data()[pos * m.channels()..]) {
                *xi = v as f64;
            }
            dense.apply(&self.params, &x, &mut act[pos * width..(pos + 1) * width]);
        }
        relu_in_place(&mut act);
        let mut data = vec![0.0; POOLED * width];
        let mut argmax = vec![0u8; POOLED * width];
        pool(&act, width, &mut data, &mut argmax);
        Ok(BranchFeature { width, data })
    }

    /// Channel concat of the two branches, then per-position dense + ReLU.
    pub fn shared_fuse(&self, face: &BranchFeature, body: &BranchFeature) -> Result<SharedFeature> {
        let bw = self.spec.branch_width;
        for (what, f) in [("face branch", face), ("body branch", body)] {
            if f.width != bw || f.data.len() != POOLED * bw {
                return Err(Error::shape(what, format!("3x3x{bw}"), format!("{} values", f.data.len())));
            }
        }
        let dense = self.dense(2);
        let sw = self.spec.shared_width;
        let mut data = vec![0.0; POOLED * sw];
        let mut cat = vec![0.0; 2 * bw];
        for pos in 0..POOLED {
            cat[..bw].copy_from_slice(&face.data[pos * bw..(pos + 1) * bw]);
            cat[bw..].copy_from_slice(&body.data[pos * bw..(pos + 1) * bw]);
            dense.apply(&self.params, &cat, &mut data[pos * sw..(pos + 1) * sw]);
        }
        relu_in_place(&mut data);
        Ok(SharedFeature { width: sw, data })
    }

    /// Flattened face, body and shared features, in that order.
    pub fn merge(&self, face: &BranchFeature, body: &BranchFeature, shared: &SharedFeature) -> Result<FusedVector> {
        if face.data.len() != self.spec.branch_len() || body.data.len() != self.spec.branch_len() {
            return Err(Error::shape("merge branches", self.spec.branch_len(), face.data.len().max(body.data.len())));
        }
        if shared.data.len() != self.spec.shared_len() {
            return Err(Error::shape("merge shared", self.spec.shared_len(), shared.data.len()));
        }
        Ok(merge(face, body, shared))
    }

    /// `(p_no_pain, p_pain)`.
    pub fn classify_frame(&self, v: &FusedVector) -> Result<[f64; 2]> {
        if v.len() != self.spec.fused_len() {
            return Err(Error::FeatureLengthMismatch {
                expected: self.spec.fused_len(),
                actual: v.len(),
            });
        }
        let hidden = self.dense(3);
        let out = self.dense(4);
        let mut h = vec![0.0; self.spec.hidden_width];
        hidden.apply(&self.params, v.as_slice(), &mut h);
        relu_in_place(&mut h);
        let mut logits = vec![0.0; 2];
        out.apply(&self.params, &h, &mut logits);
        let p = softmax(&logits);
        Ok([p[0], p[1]])
    }

    pub fn fuse(&self, face: &FeatureMap, body: &FeatureMap) -> Result<FusedVector> {
        let f = self.branch_reduce(RegionKind::Face, face)?;
        let b = self.branch_reduce(RegionKind::Body, body)?;
        let s = self.shared_fuse(&f, &b)?;
        self.merge(&f, &b, &s)
    }

    /// Mean cross-entropy over `batch`, its gradient with respect to every head
    /// parameter, and the number of correctly classified samples.
    pub fn loss_and_grad(&self, batch: &[MapSample<'_>]) -> Result<(f64, Vec<f64>, usize)> {
        let mut grad = vec![0.0; self.params.len()];
        let (loss, correct) = self.batch_pass(batch, Some(&mut grad))?;
        Ok((loss, grad, correct))
    }

    pub fn loss(&self, batch: &[MapSample<'_>]) -> Result<f64> {
        Ok(self.batch_pass(batch, None)?.0)
    }

    /// Fused vectors for many frames at once (same values as [`FusionHead::fuse`]).
    pub fn fuse_batch(&self, pairs: &[(&FeatureMap, &FeatureMap)]) -> Result<Vec<FusedVector>> {
        let fwd = self.forward_batch(pairs)?;
        let len = self.spec.fused_len();
        Ok(fwd.fused.chunks_exact(len).map(|c| FusedVector(c.to_vec())).collect())
    }

    fn forward_batch(&self, pairs: &[(&FeatureMap, &FeatureMap)]) -> Result<BatchForward> {
        let n = pairs.len();
        let c = self.spec.in_channels;
        let bw = self.spec.branch_width;
        let sw = self.spec.shared_width;
        let mut x = [Vec::with_capacity(n * POSITIONS * c), Vec::with_capacity(n * POSITIONS * c)];
        for (f, b) in pairs {
            self.check_map(f)?;
            self.check_map(b)?;
            x[0].extend(f.data().iter().map(|&v| v as f64));
            x[1].extend(b.data().iter().map(|&v| v as f64));
        }

        let mut act = [Vec::new(), Vec::new()];
        let mut pooled = [vec![0.0; n * POOLED * bw], vec![0.0; n * POOLED * bw]];
        let mut argmax = [vec![0u8; n * POOLED * bw], vec![0u8; n * POOLED * bw]];
        for k in 0..2 {
            self.dense(k).apply_batch(&self.params, &x[k], n * POSITIONS, &mut act[k]);
            relu_in_place(&mut act[k]);
            for s in 0..n {
                pool(
                    &act[k][s * POSITIONS * bw..(s + 1) * POSITIONS * bw],
                    bw,
                    &mut pooled[k][s * POOLED * bw..(s + 1) * POOLED * bw],
                    &mut argmax[k][s * POOLED * bw..(s + 1) * POOLED * bw],
                );
            }
        }

        let mut cat = Vec::with_capacity(n * POOLED * 2 * bw);
        for row in 0..n * POOLED {
            cat.extend_from_slice(&pooled[0][row * bw..(row + 1) * bw]);
            cat.extend_from_slice(&pooled[1][row * bw..(row + 1) * bw]);
        }
        let mut shared = Vec::new();
        self.dense(2).apply_batch(&self.params, &cat, n * POOLED, &mut shared);
        relu_in_place(&mut shared);

        let bl = POOLED * bw;
        let sl = POOLED * sw;
        let mut fused = Vec::with_capacity(n * self.spec.fused_len());
        for s in 0..n {
            fused.extend_from_slice(&pooled[0][s * bl..(s + 1) * bl]);
            fused.extend_from_slice(&pooled[1][s * bl..(s + 1) * bl]);
            fused.extend_from_slice(&shared[s * sl..(s + 1) * sl]);
        }
        let [x_face, x_body] = x;
        let [act_face, act_body] = act;
        let [argmax_face, argmax_body] = argmax;
        Ok(BatchForward {
            n,
            x: [x_face, x_body],
            act: [act_face, act_body],
            argmax: [argmax_face, argmax_body],
            cat,
            shared,
            fused,
        })
    }

    fn batch_pass(&self, batch: &[MapSample<'_>], grad: Option<&mut Vec<f64>>) -> Result<(f64, usize)> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let pairs: Vec<_> = batch.iter().map(|s| (s.face, s.body)).collect();
        let fwd = self.forward_batch(&pairs)?;
        let n = fwd.n;
        let classes = self.spec.classes;

        let hidden = self.dense(3);
        let output = self.dense(4);
        let mut h = Vec::new();
        hidden.apply_batch(&self.params, &fwd.fused, n, &mut h);
        relu_in_place(&mut h);
        let mut logits = Vec::new();
        output.apply_batch(&self.params, &h, n, &mut logits);

        let mut loss = 0.0;
        let mut correct = 0;
        let mut dlogits = vec![0.0; n * classes];
        for (s, sample) in batch.iter().enumerate() {
            let p = softmax(&logits[s * classes..(s + 1) * classes]);
            let target = sample.label.index();
            loss -= p[target].max(f64::MIN_POSITIVE).ln();
            if PainClass::from_confidence(p[1]) == sample.label {
                correct += 1;
            }
            for k in 0..classes {
                let t = if k == target { 1.0 } else { 0.0 };
                dlogits[s * classes + k] = (p[k] - t) / n as f64;
            }
        }
        loss /= n as f64;

        let Some(grad) = grad else {
            return Ok((loss, correct));
        };
        let p = &self.params;
        let mut dh = output.backward(p, &h, &dlogits, n, grad, true);
        mask_relu(&mut dh, &h);
        let dfused = hidden.backward(p, &fwd.fused, &dh, n, grad, true);

        let bw = self.spec.branch_width;
        let sw = self.spec.shared_width;
        let bl = POOLED * bw;
        let sl = POOLED * sw;
        let fl = self.spec.fused_len();
        let mut dpool = [vec![0.0; n * bl], vec![0.0; n * bl]];
        let mut dshared = vec![0.0; n * sl];
        for s in 0..n {
            let row = &dfused[s * fl..(s + 1) * fl];
            dpool[0][s * bl..(s + 1) * bl].copy_from_slice(&row[..bl]);
            dpool[1][s * bl..(s + 1) * bl].copy_from_slice(&row[bl..2 * bl]);
            dshared[s * sl..(s + 1) * sl].copy_from_slice(&row[2 * bl..]);
        }
        mask_relu(&mut dshared, &fwd.shared);
        let dcat = self.dense(2).backward(p, &fwd.cat, &dshared, n * POOLED, grad, true);
        for row in 0..n * POOLED {
            let src = &dcat[row * 2 * bw..(row + 1) * 2 * bw];
            for (k, dp) in dpool.iter_mut().enumerate() {
                for (d, v) in dp[row * bw..(row + 1) * bw].iter_mut().zip(&src[k * bw..(k + 1) * bw]) {
                    *d += v;
                }
            }
        }

        for k in 0..2 {
            let mut dact = vec![0.0; n * POSITIONS * bw];
            for s in 0..n {
                for o in 0..POOLED {
                    for c in 0..bw {
                        let idx = s * bl + o * bw + c;
                        let pos = fwd.argmax[k][idx] as usize;
                        dact[(s * POSITIONS + pos) * bw + c] += dpool[k][idx];
                    }
                }
            }
            mask_relu(&mut dact, &fwd.act[k]);
            self.dense(k).backward(p, &fwd.x[k], &dact, n * POSITIONS, grad, false);
        }
        Ok((loss, correct))
    }
}

struct BatchForward {
    n: usize,
    x: [Vec<f64>; 2],
    act: [Vec<f64>; 2],
    argmax: [Vec<u8>; 2],
    cat: Vec<f64>,
    shared: Vec<f64>,
    fused: Vec<f64>,
}

/// Zeroes gradient entries where the ReLU output was not positive.
fn mask_relu(grad: &mut [f64], out: &[f64]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

pub(crate) fn merge(face: &BranchFeature, body: &BranchFeature, shared: &SharedFeature) -> FusedVector {
    let mut v = Vec::with_capacity(face.data.len() + body.data.len() + shared.data.len());
    v.extend_from_slice(&face.data);
    v.extend_from_slice(&body.data);
    v.extend_from_slice(&shared.data);
    FusedVector(v)
}
