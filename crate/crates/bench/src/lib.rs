//! Shared fixtures for the criterion benchmarks.

use obsolib::{simulate, AgeSample, NegBinModel};

/// The eight subject-category models used throughout the benchmarks
/// (shape α, mean age).
pub const CATEGORY_MODELS: [(&str, f64, f64); 8] = [
    ("CB", 1.71, 9.63),
    ("E&E", 1.48, 12.72),
    ("E&EE", 1.21, 7.92),
    ("GC", 1.13, 8.98),
    ("GM", 1.44, 8.57),
    ("GP&A", 1.16, 14.10),
    ("H", 1.11, 21.73),
    ("L&IS", 1.33, 11.50),
];

pub fn category_models() -> Vec<(String, NegBinModel)> {
    CATEGORY_MODELS
        .iter()
        .map(|&(id, alpha, mean)| {
            (id.to_string(), NegBinModel::with_mean(alpha, mean).expect("valid"))
        })
        .collect()
}

pub fn simulated_sample(n: usize, seed: u64) -> AgeSample {
    let ages = simulate::simulate_negbin(1.5, 0.12, n, seed).expect("valid parameters");
    AgeSample::from_ages("sim", ages)
}
