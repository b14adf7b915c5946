use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use anomaly_verify::bounds::{convolve_n, l_distribution, DEFAULT_MERGE_TOL};
use anomaly_verify::channels::{ComponentChannel, DiscreteDistribution, SystemModel};
use anomaly_verify::divergence::max_min_divergence;
use anomaly_verify::exec::Backend;
use anomaly_verify::sim::MonteCarlo;
use anomaly_verify::strategies::{InferenceRule, StrategyKind};

fn model(m: usize) -> SystemModel {
    let ch = ComponentChannel::new(
        DiscreteDistribution::new(vec![0.8, 0.2]).unwrap(),
        DiscreteDistribution::new(vec![0.2, 0.8]).unwrap(),
    )
    .unwrap();
    SystemModel::homogeneous(ch, m, SystemModel::uniform_prior(m, 0.5)).unwrap()
}

fn estimate(c: &mut Criterion) {
    let m = model(4);
    let s = max_min_divergence(&m).unwrap();
    let rule = InferenceRule::Threshold(2.0);
    let mut group = c.benchmark_group("estimate");
    group.sample_size(10);
    for kind in [StrategyKind::Ors, StrategyKind::Das] {
        let strategy = kind.build(&s).unwrap();
        for (label, backend) in [
            ("sequential", Backend::Sequential),
            ("rayon", Backend::Rayon),
        ] {
            let mc = MonteCarlo::new(20_000, 7).with_backend(backend);
            group.bench_with_input(BenchmarkId::new(label, kind.name()), &mc, |b, mc| {
                b.iter(|| mc.estimate(&m, &s, &strategy, &rule, 50).unwrap())
            });
        }
    }
    group.finish();
}

fn law(c: &mut Criterion) {
    let m = model(2);
    let s = max_min_divergence(&m).unwrap();
    let step = l_distribution(&m, &s).unwrap();
    c.bench_function("convolve_n/200", |b| {
        b.iter(|| convolve_n(&step, 200, DEFAULT_MERGE_TOL).unwrap())
    });
}

criterion_group!(benches, estimate, law);
criterion_main!(benches);
