use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use edutag::config::PipelineConfig;
use edutag::parallel::Exec;
use edutag::preprocess::{self, CategoryMapping};
use edutag::synth::{self, CohortSpec, LabelSource, NoiseRates};
use edutag::tagger;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn cohort(students: usize) -> Vec<edutag::AttemptRecord> {
    let spec = CohortSpec { students, ..Default::default() };
    synth::generate_cohort_with(Exec::Parallel, &spec.profiles(1), 1, &LabelSource::default(), NoiseRates::default())
        .unwrap()
}

fn tagging(c: &mut Criterion) {
    let cfg = PipelineConfig::default();
    let mapping = CategoryMapping::illustrative_default();
    let mut group = c.benchmark_group("tag_cohort");
    group.sample_size(20);
    for students in [200usize, 2000] {
        let (clean, _) = preprocess::preprocess(&cohort(students), &mapping).unwrap();
        group.throughput(Throughput::Elements(clean.len() as u64));
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, students), &clean, |b, clean| {
                b.iter(|| tagger::tag_cohort_with(exec, black_box(clean), &cfg))
            });
        }
    }
    group.finish();
}

fn generation(c: &mut Criterion) {
    let labels = LabelSource::default();
    let mut group = c.benchmark_group("synth_generate");
    group.sample_size(20);
    for students in [200usize, 2000] {
        let profiles = CohortSpec { students, ..Default::default() }.profiles(2);
        group.throughput(Throughput::Elements(students as u64));
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, students), &profiles, |b, profiles| {
                b.iter(|| synth::generate_cohort_with(exec, black_box(profiles), 9, &labels, NoiseRates::default()))
            });
        }
    }
    group.finish();
}

fn cleaning(c: &mut Criterion) {
    let records = cohort(2000);
    c.bench_function("dedup_attempts/2000", |b| b.iter(|| preprocess::dedup_attempts(black_box(&records))));
}

criterion_group!(benches, tagging, generation, cleaning);
criterion_main!(benches);
