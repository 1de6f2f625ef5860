use criterion::{criterion_group, criterion_main, Criterion};
use survey_impute::draw_sample;
use survey_impute_bench::{Fixture, SEED};

fn sampling(c: &mut Criterion) {
    let fx = Fixture::new();
    c.bench_function("draw_sample default design", |b| {
        b.iter(|| draw_sample(&fx.frame, &fx.design, SEED).unwrap())
    });
}

fn gibbs(c: &mut Criterion) {
    let fx = Fixture::new();
    let mut sampler = fx.sampler();
    c.bench_function("gibbs sweep default study", |b| b.iter(|| sampler.sweep().unwrap()));
}

criterion_group!(benches, sampling, gibbs);
criterion_main!(benches);
