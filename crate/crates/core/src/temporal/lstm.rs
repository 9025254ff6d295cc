//! Stacked LSTM classifier over per-frame fused vectors.
//!
//! Gate columns are ordered `[input | forget | cell | output]`. Gates use the
//! hard sigmoid `clip(0.2 x + 0.5, 0, 1)`; cell candidate and cell output use
//! tanh. The last layer's final hidden state feeds the dense stack.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PainClass;
use crate::model::linalg::gemm;
use crate::model::{FusedVector, LayerSummary, ModelSummary, ParamLayout, FUSED_LEN};

/// Parameter total of the default temporal classifier.
pub const TEMPORAL_TOTAL_PARAMS: usize = 49_841;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalSpec {
    pub input_len: usize,
    pub lstm_units: Vec<usize>,
    pub dense_units: Vec<usize>,
    /// 1 for a single pain confidence; 2 keeps one sigmoid per class and
    /// reads the confidence from the pain unit.
    pub output_units: usize,
}

impl Default for TemporalSpec {
    fn default() -> Self {
        TemporalSpec {
            input_len: FUSED_LEN,
            lstm_units: vec![16, 16],
            dense_units: vec![16, 16],
            output_units: 1,
        }
    }
}

pub fn lstm_param_count(inputs: usize, units: usize) -> usize {
    4 * ((inputs + units) * units + units)
}

impl TemporalSpec {
    pub fn with_input_len(input_len: usize) -> Self {
        TemporalSpec {
            input_len,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 {
            return Err(Error::IncompleteSpec("temporal input length is zero".into()));
        }
        if self.lstm_units.is_empty() || self.lstm_units.contains(&0) || self.dense_units.contains(&0) {
            return Err(Error::IncompleteSpec(format!(
                "temporal layers need positive widths (lstm {:?}, dense {:?})",
                self.lstm_units, self.dense_units
            )));
        }
        if !(1..=2).contains(&self.output_units) {
            return Err(Error::IncompleteSpec(format!(
                "temporal output must have 1 or 2 units, got {}",
                self.output_units
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::default();
        let mut inputs = self.input_len;
        for (l, &u) in self.lstm_units.iter().enumerate() {
            layout.push(format!("lstm{}.kernel", l + 1), &[inputs, 4 * u]);
            layout.push(format!("lstm{}.recurrent", l + 1), &[u, 4 * u]);
            layout.push(format!("lstm{}.bias", l + 1), &[4 * u]);
            inputs = u;
        }
        for (l, &u) in self.dense_units.iter().enumerate() {
            layout.push(format!("dense{}.weight", l + 1), &[inputs, u]);
            layout.push(format!("dense{}.bias", l + 1), &[u]);
            inputs = u;
        }
        layout.push("output.weight", &[inputs, self.output_units]);
        layout.push("output.bias", &[self.output_units]);
        layout
    }

    pub fn param_count(&self) -> usize {
        self.summary().total_params
    }

    pub fn summary(&self) -> ModelSummary {
        let mut layers = Vec::new();
        let mut inputs = self.input_len;
        let last = self.lstm_units.len().saturating_sub(1);
        for (l, &u) in self.lstm_units.iter().enumerate() {
            layers.push(LayerSummary {
                name: format!("lstm{}", l + 1),
                output_shape: if l == last { u.to_string() } else { format!("T x {u}") },
                params: lstm_param_count(inputs, u),
                trainable: true,
            });
            inputs = u;
        }
        for (l, &u) in self.dense_units.iter().enumerate() {
            layers.push(LayerSummary {
                name: format!("dense{}", l + 1),
                output_shape: u.to_string(),
                params: inputs * u + u,
                trainable: true,
            });
            inputs = u;
        }
        layers.push(LayerSummary {
            name: "output".into(),
            output_shape: self.output_units.to_string(),
            params: inputs * self.output_units + self.output_units,
            trainable: true,
        });
        ModelSummary::from_layers(layers)
    }
}

fn hard_sigmoid(x: f64) -> f64 {
    (0.2 * x + 0.5).clamp(0.0, 1.0)
}

fn hard_sigmoid_grad(x: f64) -> f64 {
    if x > -2.5 && x < 2.5 {
        0.2
    } else {
        0.0
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone)]
struct LstmLayer {
    kernel: Range<usize>,
    recurrent: Range<usize>,
    bias: Range<usize>,
    inputs: usize,
    units: usize,
}

#[derive(Debug, Clone)]
struct DenseLayer {
    weight: Range<usize>,
    bias: Range<usize>,
    inputs: usize,
    outputs: usize,
}

/// One training example: a frame sequence and its target.
#[derive(Debug, Clone, Copy)]
pub struct TemporalSample<'a> {
    pub frames: &'a [FusedVector],
    pub label: PainClass,
}

struct LayerTrace {
    /// Input rows fed to the layer.
    x: Vec<f64>,
    /// Gate pre-activations, `rows x 4u`.
    z: Vec<f64>,
    /// Cell states, `rows x u`.
    c: Vec<f64>,
    /// Hidden states, `rows x u`.
    h: Vec<f64>,
}

struct Trace {
    offsets: Vec<Range<usize>>,
    layers: Vec<LayerTrace>,
    /// Inputs to each dense layer and the output layer, `S x width`.
    dense_in: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalModel {
    spec: TemporalSpec,
    layout: ParamLayout,
    params: Vec<f64>,
}

impl TemporalModel {
    /// Glorot-uniform kernels and dense weights, orthogonal recurrent
    /// matrices, zero biases except a forget-gate bias of one.
    pub fn new(spec: TemporalSpec, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = model.layout.entries().to_vec();
        for e in &entries {
            let p = &mut model.params[e.range()];
            if e.name.ends_with(".recurrent") {
                orthogonal_rows(e.shape[0], e.shape[1], &mut rng, p);
            } else if let [fan_in, fan_out] = e.shape[..] {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                p.iter_mut().for_each(|v| *v = rng.gen_range(-limit..limit));
            } else if e.name.starts_with("lstm") {
                let u = e.shape[0] / 4;
                p[u..2 * u].fill(1.0);
            }
        }
        Ok(model)
    }

    pub fn zeros(spec: TemporalSpec) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        let params = vec![0.0; layout.len()];
        Ok(TemporalModel { spec, layout, params })
    }

    pub fn from_params(spec: TemporalSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        if params.len() != layout.len() {
            return Err(Error::shape("temporal parameters", layout.len(), params.len()));
        }
        Ok(TemporalModel { spec, layout, params })
    }

    pub fn spec(&self) -> &TemporalSpec {
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

    fn range(&self, name: &str) -> Range<usize> {
        self.layout.get(name).expect("layout built from spec").range()
    }

    fn lstm_layers(&self) -> Vec<LstmLayer> {
        let mut inputs = self.spec.input_len;
        self.spec
            .lstm_units
            .iter()
            .enumerate()
            .map(|(l, &units)| {
                let layer = LstmLayer {
                    kernel: self.range(&format!("lstm{}.kernel", l + 1)),
                    recurrent: self.range(&format!("lstm{}.recurrent", l + 1)),
                    bias: self.range(&format!("lstm{}.bias", l + 1)),
                    inputs,
                    units,
                };
                inputs = units;
                layer
            })
            .collect()
    }

    fn dense_layers(&self) -> Vec<DenseLayer> {
        let mut inputs = *self.spec.lstm_units.last().expect("validated");
        let mut out = Vec::new();
        for (l, &u) in self.spec.dense_units.iter().enumerate() {
            out.push(DenseLayer {
                weight: self.range(&format!("dense{}.weight", l + 1)),
                bias: self.range(&format!("dense{}.bias", l + 1)),
                inputs,
                outputs: u,
            });
            inputs = u;
        }
        out.push(DenseLayer {
            weight: self.range("output.weight"),
            bias: self.range("output.bias"),
            inputs,
            outputs: self.spec.output_units,
        });
        out
    }

    fn check_frames(&self, frames: &[FusedVector]) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::EmptyVideo);
        }
        match frames.iter().find(|f| f.len() != self.spec.input_len) {
            Some(bad) => Err(Error::FeatureLengthMismatch {
                expected: self.spec.input_len,
                actual: bad.len(),
            }),
            None => Ok(()),
        }
    }

    fn forward(&self, seqs: &[&[FusedVector]]) -> Result<Trace> {
        let mut offsets = Vec::with_capacity(seqs.len());
        let mut x = Vec::new();
        for s in seqs {
            self.check_frames(s)?;
            let start = offsets.last().map_or(0, |r: &Range<usize>| r.end);
            offsets.push(start..start + s.len());
            for f in s.iter() {
                x.extend_from_slice(f.as_slice());
            }
        }
        let rows = offsets.last().map_or(0, |r| r.end);
        let p = &self.params;

        let mut layers = Vec::new();
        for layer in self.lstm_layers() {
            let u = layer.units;
            let mut z = Vec::with_capacity(rows * 4 * u);
            for _ in 0..rows {
                z.extend_from_slice(&p[layer.bias.clone()]);
            }
            gemm(rows, layer.inputs, 4 * u, &x, false, &p[layer.kernel.clone()], false, 1.0, &mut z);
            let rec = &p[layer.recurrent.clone()];
            let mut c = vec![0.0; rows * u];
            let mut h = vec![0.0; rows * u];
            for r in &offsets {
                for t in r.clone() {
                    if t > r.start {
                        let zt = &mut z[t * 4 * u..(t + 1) * 4 * u];
                        let hp = &h[(t - 1) * u..t * u];
                        for (j, &hj) in hp.iter().enumerate() {
                            for (zk, rk) in zt.iter_mut().zip(&rec[j * 4 * u..(j + 1) * 4 * u]) {
                                *zk += hj * rk;
                            }
                        }
                    }
                    for k in 0..u {
                        let zt = &z[t * 4 * u..(t + 1) * 4 * u];
                        let i = hard_sigmoid(zt[k]);
                        let f = hard_sigmoid(zt[u + k]);
                        let g = zt[2 * u + k].tanh();
                        let o = hard_sigmoid(zt[3 * u + k]);
                        let c_prev = if t > r.start { c[(t - 1) * u + k] } else { 0.0 };
                        let ct = f * c_prev + i * g;
                        c[t * u + k] = ct;
                        h[t * u + k] = o * ct.tanh();
                    }
                }
            }
            let next = h.clone();
            layers.push(LayerTrace { x, z, c, h });
            x = next;
        }

        let u_last = layers.last().expect("at least one layer").h.len() / rows.max(1);
        let mut a: Vec<f64> = Vec::with_capacity(seqs.len() * u_last);
        let top = &layers.last().expect("at least one layer").h;
        for r in &offsets {
            let t = r.end - 1;
            a.extend_from_slice(&top[t * u_last..(t + 1) * u_last]);
        }
        let dense = self.dense_layers();
        let n = seqs.len();
        let mut dense_in = Vec::with_capacity(dense.len());
        for (d, layer) in dense.iter().enumerate() {
            let mut y = Vec::with_capacity(n * layer.outputs);
            for _ in 0..n {
                y.extend_from_slice(&p[layer.bias.clone()]);
            }
            gemm(n, layer.inputs, layer.outputs, &a, false, &p[layer.weight.clone()], false, 1.0, &mut y);
            if d + 1 < dense.len() {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            dense_in.push(std::mem::replace(&mut a, y));
        }
        Ok(Trace {
            offsets,
            layers,
            dense_in,
            logits: a,
        })
    }

    fn confidence_from_logits(&self, logits: &[f64]) -> Vec<f64> {
        let k = self.spec.output_units;
        logits.chunks_exact(k).map(|z| sigmoid(z[k - 1])).collect()
    }

    /// Pain confidence for one frame sequence (a window or a whole video).
    pub fn confidence(&self, frames: &[FusedVector]) -> Result<f64> {
        let trace = self.forward(&[frames])?;
        Ok(self.confidence_from_logits(&trace.logits)[0])
    }

    pub fn confidences(&self, seqs: &[&[FusedVector]]) -> Result<Vec<f64>> {
        if seqs.is_empty() {
            return Ok(Vec::new());
        }
        let trace = self.forward(seqs)?;
        Ok(self.confidence_from_logits(&trace.logits))
    }

    /// Mean binary cross-entropy over the batch, its gradient, and the number
    /// of samples classified correctly at the 0.5 threshold.
    pub fn loss_and_grad(&self, batch: &[TemporalSample<'_>]) -> Result<(f64, Vec<f64>, usize)> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let seqs: Vec<&[FusedVector]> = batch.iter().map(|s| s.frames).collect();
        let trace = self.forward(&seqs)?;
        let n = batch.len();
        let k = self.spec.output_units;
        let p = &self.params;
        let mut grad = vec![0.0; p.len()];

        let mut loss = 0.0;
        let mut correct = 0;
        let mut dy = vec![0.0; n * k];
        for (s, sample) in batch.iter().enumerate() {
            let y = sample.label.as_target();
            let z = &trace.logits[s * k..(s + 1) * k];
            for (j, &zj) in z.iter().enumerate() {
                let target = if k == 1 || j == 1 { y } else { 1.0 - y };
                loss += softplus(zj) - target * zj;
                dy[s * k + j] = (sigmoid(zj) - target) / n as f64;
            }
            if PainClass::from_confidence(sigmoid(z[k - 1])) == sample.label {
                correct += 1;
            }
        }
        loss /= n as f64;

        let dense = self.dense_layers();
        for (d, layer) in dense.iter().enumerate().rev() {
            let x = &trace.dense_in[d];
            gemm(layer.inputs, n, layer.outputs, x, true, &dy, false, 1.0, &mut grad[layer.weight.clone()]);
            let gb = &mut grad[layer.bias.clone()];
            for row in dy.chunks_exact(layer.outputs) {
                gb.iter_mut().zip(row).for_each(|(g, v)| *g += v);
            }
            let mut dx = vec![0.0; n * layer.inputs];
            gemm(n, layer.outputs, layer.inputs, &dy, false, &p[layer.weight.clone()], true, 0.0, &mut dx);
            if d > 0 {
                // input was a ReLU output
                dx.iter_mut().zip(x).for_each(|(g, &v)| {
                    if v <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            dy = dx;
        }

        let lstm = self.lstm_layers();
        let rows = trace.offsets.last().map_or(0, |r| r.end);
        let top_u = lstm.last().expect("validated").units;
        let mut dh_out = vec![0.0; rows * top_u];
        for (s, r) in trace.offsets.iter().enumerate() {
            let t = r.end - 1;
            dh_out[t * top_u..(t + 1) * top_u].copy_from_slice(&dy[s * top_u..(s + 1) * top_u]);
        }
        for (l, layer) in lstm.iter().enumerate().rev() {
            let tr = &trace.layers[l];
            let u = layer.units;
            let rec = &p[layer.recurrent.clone()];
            let mut dz = vec![0.0; rows * 4 * u];
            let mut g_rec = vec![0.0; u * 4 * u];
            for r in &trace.offsets {
                let mut dh_next = vec![0.0; u];
                let mut dc_next = vec![0.0; u];
                for t in r.clone().rev() {
                    let zt = &tr.z[t * 4 * u..(t + 1) * 4 * u];
                    let dzt = &mut dz[t * 4 * u..(t + 1) * 4 * u];
                    for k in 0..u {
                        let (zi, zf, zg, zo) = (zt[k], zt[u + k], zt[2 * u + k], zt[3 * u + k]);
                        let (i, f, g, o) = (hard_sigmoid(zi), hard_sigmoid(zf), zg.tanh(), hard_sigmoid(zo));
                        let ct = tr.c[t * u + k];
                        let tc = ct.tanh();
                        let c_prev = if t > r.start { tr.c[(t - 1) * u + k] } else { 0.0 };
                        let dh = dh_out[t * u + k] + dh_next[k];
                        let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                        dzt[k] = dc * g * hard_sigmoid_grad(zi);
                        dzt[u + k] = dc * c_prev * hard_sigmoid_grad(zf);
                        dzt[2 * u + k] = dc * i * (1.0 - g * g);
                        dzt[3 * u + k] = dh * tc * hard_sigmoid_grad(zo);
                        dc_next[k] = dc * f;
                    }
                    dh_next.fill(0.0);
                    if t > r.start {
                        let hp = &tr.h[(t - 1) * u..t * u];
                        for j in 0..u {
                            let rrow = &rec[j * 4 * u..(j + 1) * 4 * u];
                            let grow = &mut g_rec[j * 4 * u..(j + 1) * 4 * u];
                            let mut acc = 0.0;
                            for m in 0..4 * u {
                                acc += dzt[m] * rrow[m];
                                grow[m] += hp[j] * dzt[m];
                            }
                            dh_next[j] = acc;
                        }
                    }
                }
            }
            grad[layer.recurrent.clone()].iter_mut().zip(&g_rec).for_each(|(g, v)| *g += v);
            gemm(layer.inputs, rows, 4 * u, &tr.x, true, &dz, false, 1.0, &mut grad[layer.kernel.clone()]);
            let gb = &mut grad[layer.bias.clone()];
            for row in dz.chunks_exact(4 * u) {
                gb.iter_mut().zip(row).for_each(|(g, v)| *g += v);
            }
            if l > 0 {
                let mut dx = vec![0.0; rows * layer.inputs];
                gemm(rows, 4 * u, layer.inputs, &dz, false, &p[layer.kernel.clone()], true, 0.0, &mut dx);
                dh_out = dx;
            }
        }
        Ok((loss, grad, correct))
    }

    pub fn loss(&self, batch: &[TemporalSample<'_>]) -> Result<f64> {
        Ok(self.loss_and_grad(batch)?.0)
    }
}

/// Fills `out` (`rows x cols`, rows <= cols) with orthonormal rows.
fn orthogonal_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    debug_assert!(rows <= cols);
    for r in 0..rows {
        loop {
            let mut v: Vec<f64> = (0..cols).map(|_| rng.sample(StandardNormal)).collect();
            for q in 0..r {
                let prev = &out[q * cols..(q + 1) * cols];
                let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(prev).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-6 {
                out[r * cols..(r + 1) * cols]
                    .iter_mut()
                    .zip(&v)
                    .for_each(|(o, a)| *o = a / norm);
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

    fn frames(n: usize, dim: usize, seed: u64) -> Vec<FusedVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| FusedVector((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect()
    }

    fn small_spec(output_units: usize) -> TemporalSpec {
        TemporalSpec {
            input_len: 8,
            output_units,
            ..Default::default()
        }
    }

    #[test]
    fn default_counts() {
        let s = TemporalSpec::default().summary();
        let per: Vec<usize> = s.layers.iter().map(|l| l.params).collect();
        assert_eq!(per, vec![47_168, 2_112, 272, 272, 17]);
        assert_eq!(s.total_params, TEMPORAL_TOTAL_PARAMS);
        assert_eq!(TemporalSpec::default().layout().len(), 49_841);
        let two = TemporalSpec {
            output_units: 2,
            ..Default::default()
        };
        assert_eq!(two.param_count(), 49_858);
        assert_eq!(two.layout().len(), 49_858);
    }

    #[test]
    fn count_formula_for_any_width() {
        for f in [1, 8, 100, 720, 2048] {
            let spec = TemporalSpec::with_input_len(f);
            assert_eq!(spec.summary().layers[0].params, 4 * ((f + 16) * 16 + 16));
            assert_eq!(spec.param_count(), spec.layout().len());
        }
    }

    #[test]
    fn zero_weights_give_half() {
        let m = TemporalModel::zeros(TemporalSpec::default()).unwrap();
        let c = m.confidence(&frames(16, FUSED_LEN, 1)).unwrap();
        assert_eq!(c, 0.5);
        assert_eq!(PainClass::from_confidence(c), PainClass::NoPain);
    }

    #[test]
    fn deterministic_and_batch_consistent() {
        let m = TemporalModel::new(small_spec(1), 3).unwrap();
        let a = frames(5, 8, 1);
        let b = frames(3, 8, 2);
        let ca = m.confidence(&a).unwrap();
        assert_eq!(ca, m.confidence(&a).unwrap());
        let both = m.confidences(&[&a, &b]).unwrap();
        assert!((both[0] - ca).abs() < 1e-14);
        assert!((both[1] - m.confidence(&b).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn init_shapes() {
        let m = TemporalModel::new(TemporalSpec::default(), 7).unwrap();
        let bias = m.layout().get("lstm1.bias").unwrap().range();
        let b = &m.params()[bias];
        assert!(b[16..32].iter().all(|&v| v == 1.0));
        assert!(b[..16].iter().chain(&b[32..]).all(|&v| v == 0.0));
        let rec = m.layout().get("lstm2.recurrent").unwrap().range();
        let r = &m.params()[rec];
        for i in 0..16 {
            for j in 0..16 {
                let dot: f64 = (0..64).map(|k| r[i * 64 + k] * r[j * 64 + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn feature_length_checked() {
        let m = TemporalModel::zeros(small_spec(1)).unwrap();
        assert!(matches!(
            m.confidence(&frames(3, 9, 1)),
            Err(Error::FeatureLengthMismatch { expected: 8, actual: 9 })
        ));
        assert!(matches!(m.confidence(&[]), Err(Error::EmptyVideo)));
    }

    fn check_gradients(output_units: usize) {
        let spec = small_spec(output_units);
        let mut m = TemporalModel::new(spec.clone(), 11).unwrap();
        // spread the biases so no coordinate sits at zero
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for v in m.params_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
        let a = frames(3, 8, 21);
        let b = frames(3, 8, 22);
        let batch = [
            TemporalSample {
                frames: &a,
                label: PainClass::Pain,
            },
            TemporalSample {
                frames: &b,
                label: PainClass::NoPain,
            },
        ];
        let (_, grad, _) = m.loss_and_grad(&batch).unwrap();
        let eps = 1e-6;
        let mut checked = 0;
        for idx in 0..m.params().len() {
            let orig = m.params()[idx];
            m.params_mut()[idx] = orig + eps;
            let lp = m.loss(&batch).unwrap();
            m.params_mut()[idx] = orig - eps;
            let lm = m.loss(&batch).unwrap();
            m.params_mut()[idx] = orig;
            let numeric = (lp - lm) / (2.0 * eps);
            let scale = numeric.abs().max(grad[idx].abs());
            assert!(
                (numeric - grad[idx]).abs() <= 1e-3 * scale + 1e-9,
                "param {idx}: numeric {numeric} analytic {}",
                grad[idx]
            );
            if scale > 1e-6 {
                checked += 1;
            }
        }
        assert!(checked > spec.param_count() / 2, "only {checked} nonzero coordinates");
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients(1);
    }

    #[test]
    fn gradients_match_finite_differences_two_outputs() {
        check_gradients(2);
    }

    #[test]
    fn hard_sigmoid_shape() {
        assert_eq!(hard_sigmoid(0.0), 0.5);
        assert_eq!(hard_sigmoid(2.5), 1.0);
        assert_eq!(hard_sigmoid(-3.0), 0.0);
        assert_eq!(hard_sigmoid(1.0), 0.7);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn confidence_strictly_inside_unit_interval(seed in any::<u64>(), n in 1usize..20) {
            let m = TemporalModel::new(small_spec(1), seed).unwrap();
            let c = m.confidence(&frames(n, 8, seed ^ 1)).unwrap();
            prop_assert!(c > 0.0 && c < 1.0);
        }
    }
}
