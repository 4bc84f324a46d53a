use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use ergodic::cltlab::{run_replicate, SchemeMode};
use ergodic::heston::{price_stationary_heston, HestonConfig};
use ergodic::pathfun::{bridge_sup_sample, MarginalPoint, PathFunctional, ScalarMap};
use ergodic::{DiffusionModel, GaussianStream, StepSchedule};

const STEPS: usize = 10_000;

fn euler(c: &mut Criterion) {
    let model = DiffusionModel::ou(1.0, 2f64.sqrt()).unwrap();
    let sched = StepSchedule::default();
    let marginal = PathFunctional::marginal(MarginalPoint::Start, ScalarMap::Identity, 0.0).unwrap();
    let running_max = PathFunctional::running_max(1.0).unwrap();
    let mut g = c.benchmark_group("ou_replicate");
    g.throughput(Throughput::Elements(STEPS as u64));
    for (name, f, mode) in [
        ("marginal", &marginal, SchemeMode::Genuine),
        ("running_max_genuine", &running_max, SchemeMode::Genuine),
        ("running_max_stepwise", &running_max, SchemeMode::Stepwise),
    ] {
        g.bench_function(name, |b| {
            b.iter_batched(
                || GaussianStream::new(1, 0),
                |mut s| run_replicate(&model, f, &sched, mode, STEPS, None, &mut s).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn bridge(c: &mut Criterion) {
    let mut g = c.benchmark_group("bridge");
    g.throughput(Throughput::Elements(1));
    let mut s = GaussianStream::new(2, 0);
    g.bench_function("sup_sample", |b| {
        b.iter(|| bridge_sup_sample(black_box(0.1), black_box(-0.2), 0.3, 1e-3, s.uniform()).unwrap())
    });
    g.finish();
}

fn heston(c: &mut Criterion) {
    let cfg = HestonConfig::default();
    let sched = StepSchedule::default();
    let mut g = c.benchmark_group("heston");
    g.throughput(Throughput::Elements(STEPS as u64));
    g.bench_function("price_with_control_variate", |b| {
        b.iter_batched(
            || GaussianStream::new(3, 0),
            |mut s| price_stationary_heston(&cfg, &sched, STEPS, &mut s, true).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, euler, bridge, heston);
criterion_main!(benches);
