use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tdfsa::harness::{run_replications, ProtocolKind, ScenarioConfig};
use tdfsa::par::Execution;
use tdfsa::sim::Protocol;

fn replications(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::new(ProtocolKind::Tdfsa, 100, 0.3);
    cfg.total_slots = 50_000;
    cfg.replications = 8;
    let protocol = Protocol::Tdfsa { w_min: 3 };
    let mut group = c.benchmark_group("replications");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        group.bench_with_input(
            BenchmarkId::new(name, cfg.replications),
            &exec,
            |b, &exec| b.iter(|| run_replications(&cfg, &protocol, exec).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, replications);
criterion_main!(benches);
