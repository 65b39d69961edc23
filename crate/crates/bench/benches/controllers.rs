use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gdro_bench::{adversary_inputs, bin_counts, short_run_config, warmed_budgeter};
use gdro_core::{run, Mode};
use std::hint::black_box;

fn allocation_dp(c: &mut Criterion) {
    let mut group = c.benchmark_group("select_allocation");
    for (bins, batch) in [(10, 64), (10, 256), (20, 256)] {
        let state = warmed_budgeter(bins, 2, 8, 1);
        let counts = bin_counts(bins, batch, 2);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{bins}x{batch}")), &counts, |b, counts| {
            b.iter(|| state.select_allocation(black_box(counts), batch).unwrap())
        });
    }
    group.finish();
}

fn adversary_update(c: &mut Criterion) {
    let (state, losses, shares) = adversary_inputs(10, 3);
    c.bench_function("prompt_adversary_update", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| {
                s.update_scores(black_box(&losses), black_box(&shares)).unwrap();
                s.multipliers()
            },
            criterion::BatchSize::SmallInput,
        )
    });
}

fn short_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_10_steps");
    group.sample_size(10);
    for mode in [Mode::BaselineGrpo, Mode::PromptGdro, Mode::RolloutGdro] {
        let cfg = short_run_config(mode, 10);
        group.bench_function(mode.as_str(), |b| b.iter(|| run(black_box(&cfg)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, allocation_dp, adversary_update, short_runs);
criterion_main!(benches);
