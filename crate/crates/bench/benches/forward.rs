use contextloc::heads::{assign_targets, total_loss_on_tape, LossWeights, TargetThresholds};
use contextloc::model::{ContextLoc, ModelConfig};
use contextloc::numerics::Tape;
use contextloc::pnet::PNetKind;
use contextloc_bench::synthetic;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    for d in [16, 64] {
        let ds = synthetic(d, 1);
        let v = &ds.videos[0];
        for kind in [PNetKind::Graph, PNetKind::NonLocal] {
            let mut cfg = ModelConfig::new(d, ds.num_classes);
            cfg.pnet = kind;
            let model = ContextLoc::random(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            group.bench_with_input(BenchmarkId::new(format!("{kind:?}"), d), &d, |b, _| {
                b.iter(|| model.forward(black_box(&v.rgb), black_box(&v.proposals)).unwrap())
            });
        }
    }
    group.finish();
}

fn train_step(c: &mut Criterion) {
    let ds = synthetic(16, 1);
    let v = &ds.videos[0];
    let model = ContextLoc::random(ModelConfig::new(16, ds.num_classes), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let targets = assign_targets(&v.proposals, &v.ground_truth, ds.num_classes, TargetThresholds::default());
    c.bench_function("forward_backward_d16", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let outs = model.forward_on_tape(&mut tape, [(&v.rgb, v.proposals.as_slice())]).unwrap();
            let loss = total_loss_on_tape(&mut tape, &outs, &targets, LossWeights::default()).unwrap();
            black_box(tape.backward(loss.total).unwrap())
        })
    });
}

criterion_group!(benches, forward, train_step);
criterion_main!(benches);
