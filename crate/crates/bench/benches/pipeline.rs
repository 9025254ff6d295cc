use criterion::{black_box, criterion_group, criterion_main, Criterion};
use painnet_core::detect::{BoundingBox, RegionCrop, RegionKind, CROP_LEN, CROP_SIZE};
use painnet_core::eval::auc;
use painnet_core::ingest::PainClass;
use painnet_core::model::{Backbone, BackboneSpec, FeatureMap, FusedVector, FusionHead, HeadSpec, FEATURE_GRID};
use painnet_core::temporal::{TemporalModel, TemporalSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn crop(rng: &mut ChaCha8Rng) -> RegionCrop {
    let pixels = (0..CROP_LEN).map(|_| rng.gen_range(0.0..1.0f32)).collect();
    let bbox = BoundingBox::whole_frame(CROP_SIZE as u32, CROP_SIZE as u32, RegionKind::Face);
    RegionCrop::new(pixels, bbox, RegionKind::Face).unwrap()
}

fn map(rng: &mut ChaCha8Rng, channels: usize) -> FeatureMap {
    let data = (0..FEATURE_GRID * FEATURE_GRID * channels).map(|_| rng.gen_range(0.0..2.0f32)).collect();
    FeatureMap::new(channels, data).unwrap()
}

fn backbone(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let input = crop(&mut rng);
    let reduced = Backbone::stand_in(BackboneSpec::reduced(), 0).unwrap();
    c.bench_function("backbone_extract_reduced", |b| b.iter(|| reduced.extract(black_box(&input)).unwrap()));
}

fn head(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let head = FusionHead::new(HeadSpec::for_backbone(512), 0).unwrap();
    let (face, body) = (map(&mut rng, 512), map(&mut rng, 512));
    c.bench_function("head_fuse_512", |b| b.iter(|| head.fuse(black_box(&face), black_box(&body)).unwrap()));
}

fn temporal(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = TemporalModel::new(TemporalSpec::default(), 0).unwrap();
    let frames: Vec<FusedVector> =
        (0..16).map(|_| FusedVector((0..720).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect();
    c.bench_function("lstm_window_16", |b| b.iter(|| model.confidence(black_box(&frames)).unwrap()));
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scores: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
    let truth: Vec<PainClass> =
        (0..10_000).map(|_| if rng.gen_bool(0.5) { PainClass::Pain } else { PainClass::NoPain }).collect();
    c.bench_function("auc_10k", |b| b.iter(|| auc(black_box(&scores), black_box(&truth)).unwrap()));
}

criterion_group!(benches, backbone, head, temporal, metrics);
criterion_main!(benches);
