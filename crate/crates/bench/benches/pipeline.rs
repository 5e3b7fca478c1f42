use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stance_bench::{label_pairs, quality_rows, records, OUTPUTS};
use stance_core::corpus::{builtin_exemplars, DatasetConfig};
use stance_core::evaluator::macro_f1;
use stance_core::parser::{parse, StanceVocab};
use stance_core::prompting::{build_plan, record_bindings, render_stage, PromptScheme};
use stance_core::quality::{correlate, train_tree, TreeParams};

fn bench_parse(c: &mut Criterion) {
    let vocab = StanceVocab::default();
    c.bench_function("parse/mixed_outputs", |b| {
        b.iter(|| {
            for text in OUTPUTS {
                black_box(parse(black_box(text), &vocab));
            }
        })
    });
}

fn bench_macro_f1(c: &mut Criterion) {
    let mut group = c.benchmark_group("macro_f1");
    for n in [100, 10_000] {
        let pairs = label_pairs(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &pairs, |b, p| {
            b.iter(|| macro_f1(black_box(p)).unwrap())
        });
    }
    group.finish();
}

fn bench_quality(c: &mut Criterion) {
    let (x, y) = quality_rows(2_000, 7);
    c.bench_function("tree/fit_2000", |b| {
        b.iter(|| train_tree(black_box(&x), black_box(&y), TreeParams::default()).unwrap())
    });
    let lengths: Vec<f64> = x.iter().map(|f| f.raw_output_length as f64).collect();
    let correct: Vec<f64> = y.iter().map(|&c| c as u8 as f64).collect();
    c.bench_function("correlate/2000", |b| {
        b.iter(|| correlate(black_box(&lengths), black_box(&correct)))
    });
}

fn bench_render(c: &mut Criterion) {
    let config = DatasetConfig::builtin("SemEval2016").unwrap();
    let exemplars = builtin_exemplars("SemEval2016").unwrap();
    let recs = records(100);
    let mut group = c.benchmark_group("render_first_stage");
    for scheme in [
        PromptScheme::TaskOnly,
        PromptScheme::FewShot,
        PromptScheme::CoDA,
    ] {
        let plan = build_plan(scheme, &config, Some(&exemplars)).unwrap();
        group.bench_function(scheme.as_str(), |b| {
            b.iter(|| {
                for r in &recs {
                    let bindings = record_bindings(&r.statement, &r.target);
                    black_box(render_stage(&plan, 0, &bindings, &r.id).unwrap());
                }
            })
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_parse,
    bench_macro_f1,
    bench_quality,
    bench_render
);
criterion_main!(benches);
