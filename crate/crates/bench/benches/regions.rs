use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pwl_regions::boundary::{distances_at, DistanceOptions};
use pwl_regions::netgen::{std_normal, stream_rng};
use pwl_regions::train::{loss_and_gradient, Gradients, LossKind};
use pwl_regions::{
    count_regions_on_line, enumerate_plane, he_init, render_svg, synth_blobs, InitSpec, Network, SliceFrame,
    SvgStyle,
};

fn net(input_dim: usize, hidden: &[usize], output_dim: usize) -> Network {
    he_init(&InitSpec::he(input_dim, hidden, output_dim, 1)).unwrap()
}

fn gaussian_points(n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(7, 0);
    (0..n).map(|_| (0..dim).map(|_| std_normal(&mut rng)).collect()).collect()
}

fn line_counting(c: &mut Criterion) {
    let mut group = c.benchmark_group("count_regions_on_line");
    for hidden in [vec![16, 16, 16], vec![32, 32, 32], vec![64, 64]] {
        let n = net(784, &hidden, 10);
        let point = gaussian_points(1, 784).remove(0);
        let origin = vec![0.0; 784];
        group.bench_with_input(BenchmarkId::from_parameter(format!("{hidden:?}")), &n, |b, n| {
            b.iter(|| count_regions_on_line(n, black_box(&origin), black_box(&point)).unwrap())
        });
    }
    group.finish();
}

fn plane_enumeration(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate_plane");
    group.sample_size(10);
    let frame = SliceFrame::axis_aligned(vec![0.0; 2], 0, 1, 2.0).unwrap();
    for width in [8, 16, 32] {
        let n = net(2, &[width; 3], 1);
        group.bench_with_input(BenchmarkId::from_parameter(width), &n, |b, n| {
            b.iter(|| enumerate_plane(n, black_box(&frame)).unwrap())
        });
    }
    group.finish();
}

fn distances(c: &mut Criterion) {
    let n = net(784, &[32, 32, 32], 10);
    let points = gaussian_points(100, 784);
    c.bench_function("distances_at/100x[32,32,32]", |b| {
        b.iter(|| distances_at(&n, black_box(&points), DistanceOptions::default(), 20).unwrap())
    });
}

fn training_step(c: &mut Criterion) {
    let n = net(784, &[32, 32, 32], 10);
    let data = synth_blobs(10, 4, 784, 1.0, 3).unwrap();
    let x: Vec<f64> = data.inputs()[..32 * 784].iter().map(|&v| v as f64).collect();
    let labels = &data.labels()[..32];
    let mut grads = Gradients::zeros_like(&n);
    c.bench_function("loss_and_gradient/batch32", |b| {
        b.iter(|| loss_and_gradient(&n, black_box(&x), labels, LossKind::SoftmaxCrossEntropy, &mut grads).unwrap())
    });
}

fn svg(c: &mut Criterion) {
    let frame = SliceFrame::axis_aligned(vec![0.0; 2], 0, 1, 2.0).unwrap();
    let arena = enumerate_plane(&net(2, &[16; 3], 1), &frame).unwrap();
    c.bench_function("render_svg/[16,16,16]", |b| {
        b.iter(|| render_svg(black_box(&arena), &SvgStyle::default()))
    });
}

criterion_group!(benches, line_counting, plane_enumeration, distances, training_step, svg);
criterion_main!(benches);
