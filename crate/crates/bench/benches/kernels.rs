use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use gg_core::grasp::simulate_grasp;
use gg_core::nn::ops::conv3d;
use gg_core::nn::Tensor;
use gg_core::rl::power_update;
use gg_core::voxel::{canonical_pregrasp, generate_gripper, generate_target, FingertipKind, ShapeFamily};

fn bench_conv3d(c: &mut Criterion) {
    let input = Tensor::new(vec![8, 16, 16, 16], (0..8 * 4096).map(|i| (i % 7) as f64 * 0.1).collect()).unwrap();
    let kernels = Tensor::new(vec![16, 8, 3, 3, 3], (0..16 * 8 * 27).map(|i| (i % 5) as f64 * 0.01).collect()).unwrap();
    let bias = Tensor::zeros(&[16]);
    c.bench_function("conv3d 8→16 @16³", |b| {
        b.iter(|| conv3d(black_box(&input), black_box(&kernels), &bias, 1).unwrap())
    });
}

fn bench_oracle(c: &mut Criterion) {
    let target = generate_target(ShapeFamily::Box, &[4.0, 8.0, 8.0], 1).unwrap();
    let pose = canonical_pregrasp(&target.grid).unwrap();
    let gripper = generate_gripper(FingertipKind::Curved, 1.0, 2).unwrap().with_pose(pose);
    c.bench_function("simulate_grasp box", |b| {
        b.iter(|| simulate_grasp(black_box(&target), &gripper, &pose, 10.0).unwrap())
    });
}

fn bench_power(c: &mut Criterion) {
    let theta_old = vec![0.0; 48];
    let rollouts: Vec<(Vec<f64>, f64)> = (0..30)
        .map(|i| ((0..48).map(|j| ((i * 48 + j) % 11) as f64 * 0.1).collect(), (i % 7) as f64 * 0.1))
        .collect();
    let refs: Vec<(&[f64], f64)> = rollouts.iter().map(|(t, r)| (t.as_slice(), *r)).collect();
    c.bench_function("power_update 30×48", |b| {
        b.iter(|| power_update(black_box(&theta_old), black_box(&refs), 0.5).unwrap())
    });
}

criterion_group!(benches, bench_conv3d, bench_oracle, bench_power);
criterion_main!(benches);
