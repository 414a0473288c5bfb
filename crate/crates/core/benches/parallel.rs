use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use detline::corpus;
use detline::etainv::EtaOptions;
use detline::glue;
use detline::par;

fn gluing_corpus(c: &mut Criterion) {
    let scenarios = corpus::gluing_corpus(11, 24);
    let opts = EtaOptions::default();
    let run = |s: &glue::GluingScenario| glue::verify_gluing(s, &opts).map(|r| r.residual).unwrap_or(f64::NAN);
    let mut group = c.benchmark_group("gluing_corpus");
    group.bench_function("parallel", |b| b.iter(|| black_box(par::map(&scenarios, run))));
    group.bench_function("sequential", |b| b.iter(|| black_box(par::map_sequential(&scenarios, run))));
    group.finish();
}

fn spectral_samples(c: &mut Criterion) {
    use detline::model::{diag, BundleData, MatrixSeries, OperatorSpec, Spin, SpinCircle};
    use detline::spectral::{IntegratorOptions, TransmissionProblem};
    let bundle = BundleData {
        rank: 1,
        potential: MatrixSeries::trig(3.0, &diag(&[0.4]), &[diag(&[0.3])], &[]),
        endomorphism: Some(MatrixSeries::constant(&diag(&[1.0]))),
    };
    let op = OperatorSpec::circle(SpinCircle { circumference: 3.0, spin: Spin::Nonbounding }, &bundle);
    let opts = IntegratorOptions::default();
    let lambdas: Vec<f64> = (0..32).map(|k| -8.0 + 0.5 * k as f64 + 0.013).collect();
    let eval = |l: &f64| {
        let p = TransmissionProblem::new(&op, opts).expect("valid operator");
        p.unitary(*l).map(|u| u[(0, 0)].re).unwrap_or(f64::NAN)
    };
    let mut group = c.benchmark_group("scattering_samples");
    group.sample_size(10);
    group.bench_function("parallel", |b| b.iter(|| black_box(par::map(&lambdas, eval))));
    group.bench_function("sequential", |b| b.iter(|| black_box(par::map_sequential(&lambdas, eval))));
    group.finish();
}

criterion_group!(benches, gluing_corpus, spectral_samples);
criterion_main!(benches);
