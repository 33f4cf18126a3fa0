use std::hint::black_box;

use boxfuse_core::simulation::{simulate_run, SimulatedRun};
use boxfuse_core::{
    evaluate, hard_nms, iou, pool, soft_nms, suppress_set, topk_voting_nms, BBox, Detection, MatchParams,
    SimulationConfig, SoftNmsParams, Suppressor, VotingParams,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn run(images: usize) -> SimulatedRun {
    let cfg = SimulationConfig { num_images: images, rng_seed: 1, ..Default::default() };
    simulate_run(&cfg, &SoftNmsParams::default()).unwrap()
}

/// The largest (image, label) group of the pooled raw detections.
fn crowded_group(run: &SimulatedRun) -> Vec<Detection> {
    let pooled = pool(&run.raw);
    let mut best: Vec<Detection> = Vec::new();
    for (_, dets) in pooled.iter() {
        let mut labels: Vec<&str> = dets.iter().map(|d| d.label.as_str()).collect();
        labels.dedup();
        for label in labels {
            let group: Vec<Detection> = dets.iter().filter(|d| d.label == label).cloned().collect();
            if group.len() > best.len() {
                best = group;
            }
        }
    }
    best
}

fn geometry(c: &mut Criterion) {
    let a = BBox::new(0.1, 0.1, 0.4, 0.5).unwrap();
    let b = BBox::new(0.2, 0.15, 0.45, 0.6).unwrap();
    c.bench_function("iou", |bench| bench.iter(|| iou(black_box(&a), black_box(&b))));
}

fn suppression(c: &mut Criterion) {
    let run = run(200);
    let group = crowded_group(&run);
    let mut g = c.benchmark_group("suppression");
    g.bench_with_input(BenchmarkId::new("hard_nms", group.len()), &group, |b, grp| b.iter(|| hard_nms(grp, 0.5)));
    let params = SoftNmsParams::default();
    g.bench_with_input(BenchmarkId::new("soft_nms", group.len()), &group, |b, grp| b.iter(|| soft_nms(grp, &params)));
    let pooled = pool(&run.raw);
    g.bench_function("soft_nms_set_200_images", |b| b.iter(|| suppress_set(&pooled, &Suppressor::Soft(params))));
    g.finish();
}

fn voting(c: &mut Criterion) {
    let run = run(200);
    let pooled = pool(&run.suppressed);
    let params = VotingParams::default();
    c.bench_function("topk_voting_nms_200_images", |b| b.iter(|| topk_voting_nms(&pooled, &params)));
}

fn evaluation(c: &mut Criterion) {
    let run = run(500);
    let fused = topk_voting_nms(&pool(&run.suppressed), &VotingParams::default());
    let params = MatchParams::default();
    c.bench_function("evaluate_500_images", |b| b.iter(|| evaluate(&fused, &run.ground_truth, &params)));
}

criterion_group!(benches, geometry, suppression, voting, evaluation);
criterion_main!(benches);
