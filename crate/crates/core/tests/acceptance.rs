//! Acceptance checks, one line of PASS/FAIL per criterion.
//!
//! Runs without the libtest harness so every line is printed even when
//! output capture is on. Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use painnet_core::detect::{BoundingBox, RegionCrop, RegionKind, CROP_LEN, CROP_SIZE};
use painnet_core::eval::{
    accuracy, auc, cohen_kappa, loso_split, pearson, render_table, run_loso_maps, table_title, EvalMode, LosoConfig,
    TrainingView,
};
use painnet_core::ingest::{score_nips, to_binary_label, NipsAssessment, NipsCategory, PainClass, SubjectId};
use painnet_core::model::{
    count_params, train_fusion_head, AdamConfig, Backbone, BackboneSpec, FeatureMap, FusionHead, FusionModel,
    FusionModelSpec, HeadSpec, LabeledCrops, MapSample, PretrainTag, TrainConfig, FEATURE_GRID,
};
use painnet_core::synth::{SynthConfig, SynthDataset};
use painnet_core::temporal::{make_windows, window_count, TemporalModel, TemporalSpec, VideoSequence};
use painnet_core::model::FusedVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Independent per-layer oracles.

fn conv3x3(i: usize, o: usize) -> usize {
    3 * 3 * i * o + o
}

fn dense(i: usize, o: usize) -> usize {
    i * o + o
}

fn lstm(i: usize, u: usize) -> usize {
    4 * (u * (i + u) + u)
}

fn vgg16_oracle() -> usize {
    let widths = [64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512];
    let mut inputs = 3;
    let mut total = 0;
    for w in widths {
        total += conv3x3(inputs, w);
        inputs = w;
    }
    total
}

/// `[face_reduce, body_reduce, shared, hidden, output]` for a 512-channel backbone.
fn head_layers_oracle() -> [usize; 5] {
    let fused = 3 * 3 * 32 * 2 + 3 * 3 * 16;
    [dense(512, 32), dense(512, 32), dense(64, 16), dense(fused, 16), dense(16, 2)]
}

/// `[lstm1, lstm2, dense1, dense2, output]`.
fn temporal_layers_oracle() -> [usize; 5] {
    [lstm(720, 16), lstm(16, 16), dense(16, 16), dense(16, 16), dense(16, 1)]
}

fn grouped(entries: impl Iterator<Item = (String, usize)>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for (name, n) in entries {
        let layer = name.split('.').next().unwrap_or(&name).to_owned();
        *m.entry(layer).or_insert(0) += n;
    }
    m
}

// ---------------------------------------------------------------------------

fn c1_parameter_identity() -> Result<String, String> {
    let s = count_params(&FusionModelSpec::full()).map_err(|e| e.to_string())?;
    ensure(s.total_params == 29_474_818, || format!("fusion total {}", s.total_params))?;
    ensure(s.trainable_params == 45_442, || format!("fusion trainable {}", s.trainable_params))?;

    // instantiated models agree with the analytic table
    let head = FusionHead::new(HeadSpec::for_backbone(512), 0).map_err(|e| e.to_string())?;
    ensure(head.params().len() == 45_442, || format!("instantiated head {}", head.params().len()))?;
    let bb = Backbone::stand_in(BackboneSpec::vgg16(PretrainTag::FaceWeights), 0).map_err(|e| e.to_string())?;
    let bb_params: usize = bb.layers().iter().map(|l| l.weight.len() + l.bias.len()).sum();
    ensure(2 * bb_params + head.params().len() == 29_474_818, || format!("instantiated backbone {bb_params}"))?;

    let t = TemporalSpec::default().summary();
    ensure(t.total_params == 49_841, || format!("temporal total {}", t.total_params))?;
    let tm = TemporalModel::new(TemporalSpec::default(), 0).map_err(|e| e.to_string())?;
    ensure(tm.params().len() == 49_841, || format!("instantiated temporal {}", tm.params().len()))?;
    Ok(format!(
        "fusion {} total / {} trainable, temporal {}",
        s.total_params, s.trainable_params, t.total_params
    ))
}

fn c2_head_breakdown() -> Result<String, String> {
    let h = head_layers_oracle();
    ensure(h == [16_416, 16_416, 1_040, 11_536, 34], || format!("head oracle {h:?}"))?;
    ensure(h.iter().sum::<usize>() == 45_442, || "head oracle sum".into())?;
    ensure(2 * vgg16_oracle() + 45_442 == 29_474_818, || "backbone oracle".into())?;

    let s = count_params(&FusionModelSpec::full()).map_err(|e| e.to_string())?;
    let names = ["face_reduce", "body_reduce", "shared", "hidden", "output"];
    for (name, want) in names.iter().zip(h) {
        let got = s.layer(name).map(|l| l.params);
        ensure(got == Some(want), || format!("summary {name}: {got:?} vs {want}"))?;
    }
    let head = FusionHead::new(HeadSpec::for_backbone(512), 0).map_err(|e| e.to_string())?;
    let by_layer = grouped(head.layout().entries().iter().map(|e| (e.name.clone(), e.len())));
    for (name, want) in names.iter().zip(h) {
        ensure(by_layer.get(*name) == Some(&want), || format!("head layout {name}: {:?}", by_layer.get(*name)))?;
    }

    let t = temporal_layers_oracle();
    ensure(t == [47_168, 2_112, 272, 272, 17], || format!("temporal oracle {t:?}"))?;
    ensure(t.iter().sum::<usize>() == 49_841, || "temporal oracle sum".into())?;
    let ts = TemporalSpec::default().summary();
    let tnames = ["lstm1", "lstm2", "dense1", "dense2", "output"];
    for (name, want) in tnames.iter().zip(t) {
        let got = ts.layer(name).map(|l| l.params);
        ensure(got == Some(want), || format!("temporal summary {name}: {got:?} vs {want}"))?;
    }
    let tm = TemporalModel::new(TemporalSpec::default(), 0).map_err(|e| e.to_string())?;
    let by_layer = grouped(tm.layout().entries().iter().map(|e| (e.name.clone(), e.len())));
    for (name, want) in tnames.iter().zip(t) {
        ensure(by_layer.get(*name) == Some(&want), || format!("temporal layout {name}: {:?}", by_layer.get(*name)))?;
    }
    Ok("2x16,416 + 1,040 + 11,536 + 34 = 45,442; 47,168 + 2,112 + 272 + 272 + 17 = 49,841".into())
}

// Index-enumeration oracle for the merge layer.
fn fused_oracle(head: &FusionHead, face: &FeatureMap, body: &FeatureMap) -> Vec<f64> {
    let spec = head.spec();
    let p = head.params();
    let get = |name: &str| &p[head.layout().get(name).expect("layer").range()];
    let branch = |m: &FeatureMap, layer: &str| -> Vec<Vec<Vec<f64>>> {
        let (w, b) = (get(&format!("{layer}.weight")), get(&format!("{layer}.bias")));
        let width = spec.branch_width;
        // act[r][c][k]
        let mut act = vec![vec![vec![0.0; width]; FEATURE_GRID]; FEATURE_GRID];
        for (r, row) in act.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                for (k, out) in cell.iter_mut().enumerate() {
                    let mut z = b[k];
                    for ch in 0..spec.in_channels {
                        z += m.get(r, c, ch) as f64 * w[ch * width + k];
                    }
                    *out = z.max(0.0);
                }
            }
        }
        let mut pooled = vec![vec![vec![f64::NEG_INFINITY; width]; 3]; 3];
        for (r, row) in pooled.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                for (k, out) in cell.iter_mut().enumerate() {
                    for dr in 0..3 {
                        for dc in 0..3 {
                            *out = out.max(act[2 * r + dr][2 * c + dc][k]);
                        }
                    }
                }
            }
        }
        pooled
    };
    let f = branch(face, "face_reduce");
    let bd = branch(body, "body_reduce");
    let (w, b) = (get("shared.weight"), get("shared.bias"));
    let (bw, sw) = (spec.branch_width, spec.shared_width);
    let mut out = vec![0.0; spec.fused_len()];
    for r in 0..3 {
        for c in 0..3 {
            for k in 0..bw {
                out[(r * 3 + c) * bw + k] = f[r][c][k];
                out[9 * bw + (r * 3 + c) * bw + k] = bd[r][c][k];
            }
            for k in 0..sw {
                let mut z = b[k];
                for i in 0..bw {
                    z += f[r][c][i] * w[i * sw + k] + bd[r][c][i] * w[(bw + i) * sw + k];
                }
                out[18 * bw + (r * 3 + c) * sw + k] = z.max(0.0);
            }
        }
    }
    out
}

fn random_map(rng: &mut ChaCha8Rng, channels: usize) -> FeatureMap {
    let data = (0..FEATURE_GRID * FEATURE_GRID * channels)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..4.0) })
        .collect();
    FeatureMap::new(channels, data).expect("valid map")
}

fn c3_merge_contract() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let channels = [32, 512];
    let heads: Vec<FusionHead> = channels
        .iter()
        .enumerate()
        .map(|(i, &c)| FusionHead::new(HeadSpec::for_backbone(c), i as u64).expect("head"))
        .collect();
    let mut worst: f64 = 0.0;
    for n in 0..10_000 {
        // every tenth input uses the full-width head
        let k = usize::from(n % 10 == 0);
        let (face, body) = (random_map(&mut rng, channels[k]), random_map(&mut rng, channels[k]));
        let v = heads[k].fuse(&face, &body).map_err(|e| e.to_string())?;
        ensure(v.len() == 720, || format!("input {n}: length {}", v.len()))?;
        let oracle = fused_oracle(&heads[k], &face, &body);
        for (i, (a, b)) in v.as_slice().iter().zip(&oracle).enumerate() {
            let err = (a - b).abs() / b.abs().max(1.0);
            worst = worst.max(err);
            ensure(err < 1e-9, || format!("input {n} index {i}: {a} vs {b}"))?;
        }
    }
    Ok(format!("10,000 inputs, length 720, max deviation from oracle {worst:.1e}"))
}

fn crop(rng: &mut ChaCha8Rng, kind: RegionKind) -> RegionCrop {
    let pixels = (0..CROP_LEN).map(|_| rng.gen_range(0.0..1.0f32)).collect();
    RegionCrop::new(pixels, BoundingBox::whole_frame(CROP_SIZE as u32, CROP_SIZE as u32, kind), kind).expect("crop")
}

fn c4_frozen_backbone() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let face_bb = Backbone::stand_in(BackboneSpec::reduced(), 1).map_err(|e| e.to_string())?;
    let body_bb = Backbone::stand_in(BackboneSpec::reduced(), 2).map_err(|e| e.to_string())?;
    let before = (face_bb.clone(), body_bb.clone());
    let mut model = FusionModel::new(face_bb, body_bb, 0).map_err(|e| e.to_string())?;
    let data: Vec<LabeledCrops> = (0..16)
        .map(|i| LabeledCrops {
            face: crop(&mut rng, RegionKind::Face),
            body: crop(&mut rng, RegionKind::Body),
            label: if i % 2 == 0 { PainClass::Pain } else { PainClass::NoPain },
        })
        .collect();
    let head_before = model.head.params().to_vec();
    let cfg = TrainConfig {
        adam: AdamConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            ..AdamConfig::default()
        },
        epochs: 100,
        seed: 0,
    };
    let history = train_fusion_head(&mut model, &data, &cfg).map_err(|e| e.to_string())?;
    ensure(history.steps == 100, || format!("{} steps", history.steps))?;
    ensure(model.head.params() != head_before.as_slice(), || "head did not move".into())?;
    let bits = |b: &Backbone| -> Vec<u32> {
        b.layers()
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).map(|v| v.to_bits()))
            .collect()
    };
    ensure(bits(&model.face_backbone) == bits(&before.0), || "face backbone changed".into())?;
    ensure(bits(&model.body_backbone) == bits(&before.1), || "body backbone changed".into())?;
    ensure(model.face_backbone.means == before.0.means, || "face means changed".into())?;

    // head gradients against central differences, on real stand-in maps
    let maps: Vec<_> = data.iter().take(6).map(|d| model.maps(&d.face, &d.body).expect("maps")).collect();
    let batch: Vec<MapSample> = maps
        .iter()
        .zip(&data)
        .map(|((f, b), d)| MapSample {
            face: f,
            body: b,
            label: d.label,
        })
        .collect();
    let (_, grad, _) = model.head.loss_and_grad(&batch).map_err(|e| e.to_string())?;
    let spec = *model.head.spec();
    let base = model.head.params().to_vec();
    let loss_at = |p: &[f64]| FusionHead::from_params(spec, p.to_vec()).unwrap().loss(&batch).unwrap();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 20 {
        attempts += 1;
        ensure(attempts < 2000, || "could not find 20 coordinates away from kinks".into())?;
        let i = rng.gen_range(0..base.len());
        let h = 1e-5 * base[i].abs().max(1.0);
        let (mut up, mut down) = (base.clone(), base.clone());
        up[i] += h;
        down[i] -= h;
        let (lu, ld, l0) = (loss_at(&up), loss_at(&down), loss_at(&base));
        // a ReLU or max-pool switch inside the interval makes the one-sided
        // slopes disagree; such coordinates are not differentiable at this step
        let (right, left) = ((lu - l0) / h, (l0 - ld) / h);
        if (right - left).abs() > 1e-4 * right.abs().max(left.abs()).max(1e-6) {
            continue;
        }
        let fd = (lu - ld) / (2.0 * h);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
        ensure(rel < 1e-3, || format!("coordinate {i}: analytic {} vs numeric {fd}", grad[i]))?;
        checked += 1;
    }
    Ok(format!(
        "100 steps, both backbones bit-identical; 20 head coordinates, max relative error {worst:.1e}"
    ))
}

fn c5_window_semantics() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = Vec::new();
    for (n, want) in [(15, 0), (16, 1), (50, 35), (137, 122)] {
        let labels: Vec<PainClass> = (0..n)
            .map(|_| if rng.gen_bool(0.5) { PainClass::Pain } else { PainClass::NoPain })
            .collect();
        let features = (0..n).map(|i| FusedVector(vec![i as f64])).collect();
        let seq = VideoSequence::with_frame_labels("s".into(), None, PainClass::Pain, labels.clone(), features)
            .map_err(|e| e.to_string())?;
        let windows = make_windows(&seq, 16, 1).map_err(|e| e.to_string())?;
        ensure(window_count(n, 16, 1) == want && windows.len() == want, || {
            format!("N={n}: {} windows, expected {want}", windows.len())
        })?;
        for w in &windows {
            ensure(w.features.len() == 16, || "window length".into())?;
            ensure(w.label == labels[w.start_index + 15], || format!("N={n}: window at {} mislabeled", w.start_index))?;
            ensure(w.features[15].as_slice()[0] == (w.start_index + 15) as f64, || "window contents".into())?;
        }
        counts.push(windows.len());
    }
    Ok(format!("N = 15, 16, 50, 137 give {counts:?} windows, each labeled by its last frame"))
}

fn auc_oracle(scores: &[f64], truth: &[PainClass]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (si, ti) in scores.iter().zip(truth) {
        for (sj, tj) in scores.iter().zip(truth) {
            if ti.is_pain() && !tj.is_pain() {
                den += 1.0;
                num += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    num / den
}

fn c6_metric_oracles() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=500);
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..50) as f64) / 50.0).collect();
        let mut truth: Vec<PainClass> = (0..n).map(|_| if rng.gen_bool(0.4) { PainClass::Pain } else { PainClass::NoPain }).collect();
        truth[0] = PainClass::Pain;
        truth[n - 1] = PainClass::NoPain;
        let d = (auc(&scores, &truth).map_err(|e| e.to_string())? - auc_oracle(&scores, &truth)).abs();
        worst = worst.max(d);
        ensure(d < 1e-9, || format!("auc off by {d}"))?;
    }

    let p: Vec<PainClass> = (0..200).map(|_| if rng.gen_bool(0.5) { PainClass::Pain } else { PainClass::NoPain }).collect();
    let t: Vec<PainClass> = (0..200).map(|_| if rng.gen_bool(0.5) { PainClass::Pain } else { PainClass::NoPain }).collect();
    let hand = p.iter().zip(&t).filter(|(a, b)| a == b).count() as f64 / 200.0;
    ensure(accuracy(&p, &t).unwrap() == hand, || "accuracy".into())?;

    let k = cohen_kappa(&[1, 1, 0, 0], &[1, 0, 0, 0]).map_err(|e| e.to_string())?;
    ensure((k - 0.5).abs() < 1e-12, || format!("kappa worked example {k}"))?;

    let x: Vec<f64> = (0..300).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 0.7 * v + rng.gen_range(-3.0..3.0)).collect();
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let r_hand = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    let r = pearson(&x, &y).map_err(|e| e.to_string())?;
    ensure((r - r_hand).abs() < 1e-9, || format!("pearson {r} vs {r_hand}"))?;

    // all 24 indicator combinations
    let mut cases = 0;
    for face in 0..=1u8 {
        for body in 0..=1u8 {
            for vital in 0..=1u8 {
                for cry in 0..=2u8 {
                    let a = NipsAssessment::new(face, body, vital, cry, "r").map_err(|e| e.to_string())?;
                    let (total, cat) = score_nips(&a).map_err(|e| e.to_string())?;
                    let want_total = face + body + vital + cry;
                    let want_cat = match want_total {
                        0 | 1 | 2 => NipsCategory::NoPain,
                        3 | 4 => NipsCategory::Moderate,
                        _ => NipsCategory::Severe,
                    };
                    let want_label = if want_total >= 3 { PainClass::Pain } else { PainClass::NoPain };
                    ensure(total == want_total && cat == want_cat, || format!("NIPS {face}{body}{vital}{cry}"))?;
                    ensure(to_binary_label(total).unwrap().value == want_label, || "binary label".into())?;
                    cases += 1;
                }
            }
        }
    }
    ensure(cases == 24, || format!("{cases} NIPS cases"))?;
    Ok(format!("auc within {worst:.1e} of the pairwise oracle; accuracy, kappa 0.5, pearson, 24 NIPS cases"))
}

fn c7_loso_integrity() -> Result<String, String> {
    let subjects: Vec<SubjectId> = (1..=31).map(|i| SubjectId::new(format!("S{i:02}"))).collect();
    let folds = loso_split(subjects.iter().cloned()).map_err(|e| e.to_string())?;
    ensure(folds.len() == 31, || format!("{} folds", folds.len()))?;
    let mut held: Vec<&SubjectId> = folds.iter().map(|f| &f.held_out).collect();
    held.sort();
    held.dedup();
    ensure(held.len() == 31, || "a subject was held out twice".into())?;
    for f in &folds {
        ensure(!f.train_subjects.contains(&f.held_out), || format!("{} trains on itself", f.held_out))?;
        let mut all: Vec<&SubjectId> = f.train_subjects.iter().chain(std::iter::once(&f.held_out)).collect();
        all.sort();
        ensure(all == subjects.iter().collect::<Vec<_>>(), || format!("fold {} is not a partition", f.held_out))?;
    }

    let videos: Vec<VideoSequence> = subjects
        .iter()
        .map(|s| VideoSequence::new(s.clone(), None, PainClass::NoPain, vec![FusedVector(vec![0.0])]).unwrap())
        .collect();
    let fold = &folds[7];
    let clean: Vec<&VideoSequence> = videos.iter().filter(|v| v.subject_id != fold.held_out).collect();
    ensure(TrainingView::new(fold, clean.clone()).is_ok(), || "clean fold rejected".into())?;
    let mut leaky = clean;
    leaky.push(videos.iter().find(|v| v.subject_id == fold.held_out).unwrap());
    match TrainingView::new(fold, leaky) {
        Err(painnet_core::Error::Leakage(s)) if s.contains(fold.held_out.as_str()) => {}
        other => return Err(format!("leakage not caught: {:?}", other.map(|v| v.len()))),
    }
    Ok("31 folds partition the subjects; injected held-out video rejected".into())
}

fn synthetic_loso(strength: f64) -> Result<(f64, Option<f64>, Duration, String), String> {
    let start = Instant::now();
    let data = SynthDataset::generate(&SynthConfig {
        signal_strength: strength,
        seed: 7,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let face = Backbone::stand_in(BackboneSpec::reduced(), 1).map_err(|e| e.to_string())?;
    let body = Backbone::stand_in(BackboneSpec::reduced(), 2).map_err(|e| e.to_string())?;
    let maps = data.maps(&face, &body).map_err(|e| e.to_string())?;
    let mut cfg = LosoConfig {
        mode: EvalMode::VideoLevel,
        head_frame_stride: 5,
        ..LosoConfig::default()
    };
    cfg.head.adam.learning_rate = 1e-3;
    cfg.head.epochs = 3;
    cfg.temporal.adam.learning_rate = 3e-3;
    cfg.temporal.epochs = 20;
    let report = run_loso_maps(&maps, &cfg).map_err(|e| e.to_string())?;
    let table = render_table(
        table_title(report.mode),
        &[report.table_row("Fusion + LSTM (synthetic)", "Face + Body")],
    );
    Ok((report.mean_accuracy, report.mean_auc, start.elapsed(), table))
}

static REPORT_TABLE: std::sync::Mutex<String> = std::sync::Mutex::new(String::new());

fn c8_synthetic_performance() -> Result<String, String> {
    let limit = Duration::from_secs(15 * 60);
    let (acc, auc, t1, table) = synthetic_loso(0.8)?;
    *REPORT_TABLE.lock().unwrap() = table;
    let auc = auc.ok_or("no fold had both classes")?;
    ensure(acc >= 0.90 && auc >= 0.90, || format!("signal 0.8: accuracy {acc:.4}, auc {auc:.4}"))?;
    ensure(t1 < limit, || format!("signal 0.8 took {t1:?}"))?;
    let (_, null_auc, t0, _) = synthetic_loso(0.0)?;
    let null_auc = null_auc.ok_or("no fold had both classes")?;
    ensure((0.4..=0.6).contains(&null_auc), || format!("signal 0: auc {null_auc:.4}"))?;
    ensure(t0 < limit, || format!("signal 0 took {t0:?}"))?;
    Ok(format!(
        "signal 0.8: accuracy {acc:.4}, auc {auc:.4} in {:.0}s; signal 0: auc {null_auc:.4} in {:.0}s",
        t1.as_secs_f64(),
        t0.as_secs_f64()
    ))
}

fn c9_report_format() -> Result<String, String> {
    let table = REPORT_TABLE.lock().unwrap().clone();
    let table = if table.is_empty() {
        render_table(table_title(EvalMode::VideoLevel), &[])
    } else {
        table
    };
    let header = table.lines().nth(1).unwrap_or_default();
    let cols: Vec<&str> = header.split('|').map(str::trim).filter(|c| !c.is_empty()).collect();
    ensure(cols == ["Approach", "Channel", "Accuracy (%)", "AUC"], || format!("columns {cols:?}"))?;
    ensure(
        render_table(table_title(EvalMode::FrameLevel), &[]).starts_with("Frame Level Performance"),
        || "frame-level title".into(),
    )?;
    for line in table.lines() {
        println!("    {line}");
    }
    Ok("columns Approach / Channel / Accuracy (%) / AUC; reference figures need the private clinical data".into())
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("1 parameter identity", c1_parameter_identity),
        ("2 per-layer breakdown", c2_head_breakdown),
        ("3 merge contract", c3_merge_contract),
        ("4 frozen backbone and head gradients", c4_frozen_backbone),
        ("5 window semantics", c5_window_semantics),
        ("6 metric oracles", c6_metric_oracles),
        ("7 LOSO integrity", c7_loso_integrity),
        ("8 synthetic end-to-end performance", c8_synthetic_performance),
        ("9 report format", c9_report_format),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  criterion {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
