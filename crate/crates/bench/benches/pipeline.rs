use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rangeview::metrics::{panoptic_quality, PanopticLabels};
use rangeview::model::weights::init_weights;
use rangeview::post::{knn_smooth, range_post};
use rangeview::{rasterize, ClassTaxonomy, KnnParams, ModelConfig, SensorSpec};
use rangeview_bench::synthetic_scan;

fn rasterization(c: &mut Criterion) {
    let spec = SensorSpec::semantic_kitti();
    let cloud = synthetic_scan(120_000, 1);
    c.bench_function("rasterize 120k points 64x2048", |b| {
        b.iter(|| rasterize(black_box(&cloud), &spec).unwrap())
    });
    c.bench_function("range_post 3 subclouds, label oracle", |b| {
        b.iter(|| {
            range_post(black_box(&cloud), &spec, 3, |img| Ok(img.labels().unwrap().to_vec()), None).unwrap()
        })
    });
}

fn knn(c: &mut Criterion) {
    let spec = SensorSpec::semantic_kitti();
    let cloud = synthetic_scan(120_000, 2);
    let img = rasterize(&cloud, &spec).unwrap();
    let grid = img.labels().unwrap().to_vec();
    let params = KnnParams {
        k: 5,
        window: 5,
        range_cutoff: 1.0,
    };
    c.bench_function("knn_smooth 120k points", |b| {
        b.iter(|| knn_smooth(&img, black_box(&grid), &cloud, &params).unwrap())
    });
}

fn panoptic(c: &mut Criterion) {
    let t = ClassTaxonomy::new((0..20).map(|i| format!("c{i}")).collect(), 1..9, 9..20, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 120_000;
    let gs: Vec<u32> = (0..n).map(|i| (i / 2_000 % 20) as u32).collect();
    let gi: Vec<u32> = gs.iter().enumerate().map(|(i, &s)| if (1..9).contains(&s) { 1 + (i / 500 % 10) as u32 } else { 0 }).collect();
    let ps: Vec<u32> = gs.iter().map(|&s| if rng.random::<f64>() < 0.1 { rng.random_range(0..20) } else { s }).collect();
    let pi = gi.clone();
    c.bench_function("panoptic quality 120k points", |b| {
        b.iter(|| {
            panoptic_quality(
                PanopticLabels { semantic: black_box(&ps), instance: &pi },
                PanopticLabels { semantic: &gs, instance: &gi },
                &t,
            )
            .unwrap()
        })
    });
}

fn forward(c: &mut Criterion) {
    let spec = SensorSpec::new(3.0, 25.0, 64, 256).unwrap();
    let grid = rasterize(&synthetic_scan(60_000, 4), &spec).unwrap().into_grid();
    let model = init_weights(&ModelConfig::tiny(20), 1).unwrap();
    let mut group = c.benchmark_group("segmenter");
    group.sample_size(10);
    group.bench_function("tiny forward 64x256", |b| b.iter(|| model.forward(black_box(&grid)).unwrap()));
    group.finish();
}

criterion_group!(benches, rasterization, knn, panoptic, forward);
criterion_main!(benches);
