use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use depthstack::color::rgb_to_lab;
use depthstack::eval::{mean_average_precision, EvalParams};
use depthstack::features::{compute_descriptors, detect_features, match_features, FeatureParams};
use depthstack::fusion::DepthNormalization;
use depthstack::pipeline::{depth_from_frames, panning_sequence, PipelineConfig};
use depthstack::stereo::{compute_disparity, DisparityRange, StereoParams};
use depthstack_bench::{eval_dataset, random_frame, shifted_pair, textured_gray};

fn sgm(c: &mut Criterion) {
    let mut g = c.benchmark_group("sgm");
    g.sample_size(10);
    for side in [256u32, 512] {
        let (l, r) = shifted_pair(side, side, 12, 1);
        let params = StereoParams {
            range: DisparityRange::new(0, 63),
            ..Default::default()
        };
        g.bench_with_input(BenchmarkId::new("64_disparities", side), &side, |b, _| {
            b.iter(|| compute_disparity(black_box(&l), black_box(&r), &params).unwrap())
        });
    }
    g.finish();
}

fn features(c: &mut Criterion) {
    let mut g = c.benchmark_group("surf");
    g.sample_size(10);
    let img = textured_gray(512, 384, 2);
    let params = FeatureParams::default();
    g.bench_function("detect_512x384", |b| b.iter(|| detect_features(black_box(&img), &params).unwrap()));
    let pts = detect_features(&img, &params).unwrap();
    g.bench_function("describe_512x384", |b| b.iter(|| compute_descriptors(black_box(&img), &pts, false)));
    let a = compute_descriptors(&img, &pts, false);
    let shifted = shifted_pair(512, 384, 7, 2).1;
    let b_desc = compute_descriptors(&shifted, &detect_features(&shifted, &params).unwrap(), false);
    g.bench_function("match", |b| {
        b.iter(|| match_features(black_box(&a.descriptors), black_box(&b_desc.descriptors), 0.7))
    });
    g.finish();
}

fn colour(c: &mut Criterion) {
    let frame = random_frame(1024, 1024, 3);
    c.bench_function("rgb_to_lab_1mp", |b| b.iter(|| rgb_to_lab(black_box(&frame)).unwrap()));
}

fn eval(c: &mut Criterion) {
    let (gt, preds) = eval_dataset(50, 8, 96, 4);
    c.bench_function("map_50_images", |b| {
        b.iter(|| mean_average_precision(black_box(&preds), &gt, &EvalParams::default()).unwrap())
    });
}

fn triple(c: &mut Criterion) {
    let frames = panning_sequence(320, 240, 3, 5, 5);
    let mut config = PipelineConfig::default();
    config.frames.dir = PathBuf::from(".");
    config.sgm.range = DisparityRange::new(0, 16);
    config.fusion.normalization = DepthNormalization::fixed(config.sgm.range);
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.bench_function("depth_triple_320x240", |b| {
        b.iter(|| depth_from_frames(&frames[0], &frames[1], &frames[2], &config, 1).unwrap())
    });
    g.finish();
}

criterion_group!(benches, sgm, features, colour, eval, triple);
criterion_main!(benches);
