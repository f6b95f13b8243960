//! Seeded simulation of negative binomial ages by composition: a gamma
//! rate is drawn first, then a Poisson count at that rate.
//!
//! The bit source is ChaCha8, whose output stream is fixed for a given seed
//! on every platform. The variate algorithms live here so the stream of
//! ages depends only on this crate.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::specfun::ln_gamma_unchecked;

/// Rate below which Poisson variates are drawn by sequential inversion.
const POISSON_INVERSION_LIMIT: f64 = 10.0;

pub struct AgeSimulator {
    rng: ChaCha8Rng,
}

impl AgeSimulator {
    pub fn new(seed: u64) -> Self {
        AgeSimulator {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on the open interval (0, 1).
    fn uniform_open(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Standard normal by the Marsaglia polar method.
    pub fn standard_normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.rng.random::<f64>() - 1.0;
            let v = 2.0 * self.rng.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    /// Gamma(shape, rate) by Marsaglia–Tsang squeeze/rejection. Shapes below
    /// one are boosted: draw at shape + 1 and scale by U^{1/shape}.
    pub fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        if shape < 1.0 {
            let boost = self.uniform_open().powf(1.0 / shape);
            return self.gamma(shape + 1.0, rate) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.standard_normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform_open();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 {
                return d * v / rate;
            }
            if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d * v / rate;
            }
        }
    }

    /// Poisson(mean): inversion for small means, Hörmann's PTRS
    /// transformed rejection otherwise.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        if mean < POISSON_INVERSION_LIMIT {
            let u = self.rng.random::<f64>();
            let mut k = 0u64;
            let mut p = (-mean).exp();
            let mut cdf = p;
            while u > cdf {
                k += 1;
                p *= mean / k as f64;
                cdf += p;
                if p == 0.0 {
                    break;
                }
            }
            return k;
        }
        let smu = mean.sqrt();
        let b = 0.931 + 2.53 * smu;
        let a = -0.059 + 0.024_83 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let vr = 0.9277 - 3.6224 / (b - 2.0);
        let ln_mean = mean.ln();
        loop {
            let u = self.rng.random::<f64>() - 0.5;
            let v = self.uniform_open();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
            if us >= 0.07 && v <= vr {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln()
                <= -mean + k * ln_mean - ln_gamma_unchecked(k + 1.0)
            {
                return k as u64;
            }
        }
    }

    /// One negative binomial age: θ ~ gamma(α, β), then Poisson(θ).
    pub fn negbin(&mut self, alpha: f64, beta: f64) -> u64 {
        let theta = self.gamma(alpha, beta);
        self.poisson(theta)
    }
}

/// `n` ages drawn from the negative binomial mixture with the given seed.
pub fn simulate_negbin(alpha: f64, beta: f64, n: usize, seed: u64) -> Result<Vec<u64>> {
    if !(alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha}, beta = {beta} must be finite and > 0"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut sim = AgeSimulator::new(seed);
    Ok((0..n).map(|_| sim.negbin(alpha, beta)).collect())
}

/// `n` Poisson(theta) ages.
pub fn simulate_poisson(theta: f64, n: usize, seed: u64) -> Result<Vec<u64>> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::InvalidParameter(format!("theta = {theta} must be > 0")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut sim = AgeSimulator::new(seed);
    Ok((0..n).map(|_| sim.poisson(theta)).collect())
}

/// Writes ages as a records CSV under one journal/category label.
pub fn write_records_csv<W: Write>(
    out: W,
    journal: &str,
    category: &str,
    ages: &[u64],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["journal", "subject_category", "age"])?;
    for age in ages {
        w.write_record([journal, category, &age.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
