use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use obsolib::fit::{compare_models, fit_negbin};
use obsolib::report::{build_study_from_models, default_ages, default_probabilities, render};
use obsolib::specfun::{gauss_2f1, ln_gamma, reg_inc_beta};
use obsolib::tails::{survival, survival_by_sum, tvar_p, var_p};
use obsolib::{RenderFormat, StudyOptions};
use obsolib_bench::{category_models, simulated_sample};

fn specfun(c: &mut Criterion) {
    let mut g = c.benchmark_group("specfun");
    g.bench_function("ln_gamma", |b| b.iter(|| ln_gamma(black_box(12.345))));
    for &(z, a, bb) in &[(0.15, 1.71, 21.0), (0.85, 1.11, 101.0), (0.5, 40.0, 40.0)] {
        g.bench_with_input(
            BenchmarkId::new("reg_inc_beta", format!("{z}/{a}/{bb}")),
            &(z, a, bb),
            |b, &(z, a, bb)| b.iter(|| reg_inc_beta(black_box(z), a, bb)),
        );
    }
    g.bench_function("gauss_2f1/tvar", |b| {
        b.iter(|| gauss_2f1(1.0, black_box(38.71), 37.0, 0.1525))
    });
    g.finish();
}

fn tails(c: &mut Criterion) {
    let models = category_models();
    let (_, cb) = &models[0];
    let (_, h) = &models[6];
    let mut g = c.benchmark_group("tails");
    g.bench_function("survival/closed_form", |b| b.iter(|| survival(cb, black_box(60))));
    g.bench_function("survival/summation", |b| b.iter(|| survival_by_sum(cb, black_box(60))));
    g.bench_function("var_p/H", |b| b.iter(|| var_p(h, black_box(0.01))));
    g.bench_function("tvar_p/H", |b| b.iter(|| tvar_p(h, black_box(0.01))));
    g.finish();
}

fn fit(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit");
    for n in [1_000usize, 50_000] {
        let sample = simulated_sample(n, 1);
        g.bench_with_input(BenchmarkId::new("negbin", n), &sample, |b, s| {
            b.iter(|| fit_negbin(black_box(s)))
        });
        g.bench_with_input(BenchmarkId::new("compare", n), &sample, |b, s| {
            b.iter(|| compare_models(black_box(s), "sim"))
        });
    }
    g.finish();
}

fn study(c: &mut Criterion) {
    let models = category_models();
    let (ages, probs) = (default_ages(), default_probabilities());
    c.bench_function("study/eight_categories", |b| {
        b.iter(|| {
            let s = build_study_from_models(&models, &ages, &probs, &StudyOptions { verify: false })
                .unwrap();
            render(&s, RenderFormat::Csv)
        })
    });
}

criterion_group!(benches, specfun, tails, fit, study);
criterion_main!(benches);
