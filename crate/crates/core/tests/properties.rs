//! Randomized invariants over the special functions, the distributions, and
//! ingestion.

use proptest::prelude::*;

use obsolib::dist::{mixture_pmf_oracle, negbin_pmf, poisson_pmf};
use obsolib::fit::{compare_models, fit_negbin, fit_poisson, loglik};
use obsolib::ingest::{parse_ages, write_histogram_csv};
use obsolib::simulate::write_records_csv;
use obsolib::specfun::reg_inc_beta;
use obsolib::{AgeSample, IngestOptions, InputFormat, NegBinModel, PoissonModel};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn beta_complement(z in 0.0f64..=1.0, a in 0.05f64..50.0, b in 0.05f64..50.0) {
        let lhs = reg_inc_beta(z, a, b).unwrap() + reg_inc_beta(1.0 - z, b, a).unwrap();
        prop_assert!((lhs - 1.0).abs() <= 1e-10, "I + I' = {lhs}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mixture_identity(alpha in 0.3f64..8.0, beta in 0.03f64..2.0) {
        let model = NegBinModel::new(alpha, beta).unwrap();
        let mix = model.mixing();
        for x in 0..=60u64 {
            let closed = negbin_pmf(&model, x);
            let quad = mixture_pmf_oracle(&mix, x).unwrap();
            prop_assert!((closed - quad).abs() <= 1e-8, "x = {x}: {closed} vs {quad}");
        }
    }

    #[test]
    fn pmf_normalizes(alpha in 0.2f64..10.0, beta in 0.02f64..5.0) {
        let model = NegBinModel::new(alpha, beta).unwrap();
        let tail_from = 20_000u64;
        let mass: f64 = (0..tail_from).map(|x| negbin_pmf(&model, x)).sum();
        let tail = obsolib::tails::survival(&model, tail_from).unwrap();
        prop_assert!((mass + tail - 1.0).abs() <= 1e-10, "mass {mass}, tail {tail}");
    }

    #[test]
    fn overdispersion(alpha in 0.1f64..50.0, beta in 0.01f64..20.0) {
        let m = NegBinModel::new(alpha, beta).unwrap();
        prop_assert!(m.variance() > m.mean());
        let id = m.variance() / m.mean();
        prop_assert!((id - (1.0 + beta) / beta).abs() <= 1e-12 * id);
    }

    #[test]
    fn cdf_routes_agree(alpha in 0.2f64..10.0, beta in 0.02f64..3.0, x in 0u64..200) {
        let m = NegBinModel::new(alpha, beta).unwrap();
        let closed = m.cdf(x).unwrap();
        let summed = m.cdf_by_sum(x);
        prop_assert!((closed - summed).abs() <= 1e-10);
    }

    #[test]
    fn poisson_pmf_normalizes(theta in 0.01f64..200.0) {
        let p = PoissonModel::new(theta).unwrap();
        let mass: f64 = (0..2_000u64).map(|x| poisson_pmf(&p, x)).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-10);
    }
}

fn overdispersed_sample() -> impl Strategy<Value = Vec<(u64, u64)>> {
    prop::collection::btree_map(0u64..120, 1u64..40, 4..30)
        .prop_map(|m| m.into_iter().collect::<Vec<_>>())
        .prop_filter("needs index of dispersion > 1", |counts| {
            let s = AgeSample::from_counts("s", counts.iter().copied()).unwrap();
            let (m, v) = (s.mean().unwrap(), s.variance().unwrap());
            m > 0.0 && v / m > 1.05
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// The Poisson is the α → ∞ limit of the NB, so the NB optimum can never
    /// be worse.
    #[test]
    fn likelihood_dominance(counts in overdispersed_sample()) {
        let s = AgeSample::from_counts("s", counts).unwrap();
        let p = fit_poisson(&s).unwrap();
        let nb = fit_negbin(&s).unwrap();
        let (lp, lnb) = (loglik(&p, &s), loglik(&nb, &s));
        prop_assert!(lnb >= lp - 1e-8 * lp.abs(), "NB {lnb} < Poisson {lp}");
        // Profile condition: the NB mean equals the sample mean.
        prop_assert!((nb.mean() - s.mean().unwrap()).abs() <= 1e-9 * nb.mean());
    }

    #[test]
    fn fit_is_idempotent_on_the_same_sample(counts in overdispersed_sample()) {
        let s = AgeSample::from_counts("s", counts).unwrap();
        let a = compare_models(&s, "s").unwrap();
        let b = compare_models(&s, "s").unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn records_round_trip(ages in prop::collection::vec(0u64..150, 1..300)) {
        let mut buf = Vec::new();
        write_records_csv(&mut buf, "J1", "CAT", &ages).unwrap();
        let parsed = parse_ages(buf.as_slice(), &IngestOptions::default()).unwrap();
        let want = AgeSample::from_ages("CAT", ages.iter().copied());
        prop_assert_eq!(parsed.categories.len(), 1);
        prop_assert_eq!(parsed.categories[0].counts(), want.counts());
        prop_assert_eq!(parsed.journals[0].dataset_id(), "J1");
    }

    #[test]
    fn histogram_round_trip(ages in prop::collection::vec(0u64..150, 1..300)) {
        let sample = AgeSample::from_ages("J1", ages.iter().copied());
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, "J1", "CAT", &sample).unwrap();
        let opts = IngestOptions { format: InputFormat::Histogram, ..IngestOptions::default() };
        let parsed = parse_ages(buf.as_slice(), &opts).unwrap();
        prop_assert_eq!(parsed.journals[0].counts(), sample.counts());
        prop_assert_eq!(parsed.journals[0].n_obs(), ages.len() as u64);
    }

    /// A category is the sum of its journals.
    #[test]
    fn aggregation_is_linear(
        a in prop::collection::vec(0u64..150, 1..100),
        b in prop::collection::vec(0u64..150, 1..100),
    ) {
        let mut buf = Vec::new();
        write_records_csv(&mut buf, "A", "CAT", &a).unwrap();
        let mut more = Vec::new();
        write_records_csv(&mut more, "B", "CAT", &b).unwrap();
        // Drop the second header.
        let body = more.splitn(2, |&c| c == b'\n').nth(1).unwrap();
        buf.extend_from_slice(body);

        let parsed = parse_ages(buf.as_slice(), &IngestOptions::default()).unwrap();
        let mut merged = parsed.find("A").unwrap().clone();
        merged.merge(parsed.find("B").unwrap());
        let cat = parsed.find("CAT").unwrap();
        prop_assert_eq!(cat.counts(), merged.counts());
        prop_assert_eq!(cat.n_obs(), (a.len() + b.len()) as u64);
        prop_assert!((cat.sum() - (a.iter().sum::<u64>() + b.iter().sum::<u64>()) as f64).abs() < 0.5);
    }
}
