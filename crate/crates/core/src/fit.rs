//! Maximum-likelihood fitting and AIC model selection.
//!
//! The negative binomial is fitted by profile likelihood. For fixed α the
//! likelihood in β is maximized at β = α / x̄, which leaves a one-dimensional
//! score in α:
//!
//! ```text
//! S(α) = (1/n) Σ_j G_j / (α + j) − ln(1 + x̄/α)
//! ```
//!
//! where `G_j` counts observations with age greater than j. The root is
//! found by Newton's method on ln α, kept inside a sign bracket and falling
//! back to bisection when a step leaves it.

use serde::{Deserialize, Serialize};

use crate::dist::{CountModel, NegBinModel, PoissonModel};
use crate::error::{Error, Result};
use crate::ingest::AgeSample;

pub const NEGBIN_MAX_ITERATIONS: usize = 200;
const SCORE_TOLERANCE: f64 = 1e-13;
const STEP_TOLERANCE: f64 = 1e-10;
const MAX_BRACKET_EXPANSIONS: usize = 200;

/// MLE of the Poisson rate: the sample mean.
pub fn fit_poisson(sample: &AgeSample) -> Result<PoissonModel> {
    let mean = sample
        .mean()
        .ok_or_else(|| Error::EmptySample(sample.dataset_id().to_string()))?;
    if mean <= 0.0 {
        return Err(Error::DegenerateSample(
            sample.dataset_id().to_string(),
            "all ages are 0; the Poisson rate must be positive".into(),
        ));
    }
    PoissonModel::new(mean)
}

/// Σ count(x) · ln pmf(x) over the histogram. May be −∞ when the model puts
/// no representable mass on an observed age.
pub fn loglik<M: CountModel>(model: &M, sample: &AgeSample) -> f64 {
    sample
        .counts()
        .iter()
        .map(|(&age, &count)| count as f64 * model.ln_pmf(age))
        .sum()
}

/// Akaike information criterion, 2k − 2·loglik.
pub fn aic(loglik: f64, k: u32) -> Result<f64> {
    if !loglik.is_finite() {
        return Err(Error::NonFinite(format!("log-likelihood {loglik}")));
    }
    Ok(2.0 * k as f64 - 2.0 * loglik)
}

/// Converged negative binomial fit with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegBinFit {
    pub model: NegBinModel,
    /// Per-observation profile score at the returned α.
    pub score: f64,
    pub iterations: usize,
    pub alpha_start: f64,
    pub beta_start: f64,
}

struct ProfileScore {
    exceed: Vec<f64>,
    mean: f64,
}

impl ProfileScore {
    fn new(sample: &AgeSample, mean: f64) -> Self {
        let n = sample.n_obs() as f64;
        ProfileScore {
            exceed: sample
                .exceedance_counts()
                .into_iter()
                .map(|g| g as f64 / n)
                .collect(),
            mean,
        }
    }

    fn value(&self, alpha: f64) -> f64 {
        let harmonic: f64 = self
            .exceed
            .iter()
            .enumerate()
            .map(|(j, &g)| g / (alpha + j as f64))
            .sum();
        harmonic - (self.mean / alpha).ln_1p()
    }

    /// dS/dα.
    fn slope(&self, alpha: f64) -> f64 {
        let curvature: f64 = self
            .exceed
            .iter()
            .enumerate()
            .map(|(j, &g)| g / (alpha + j as f64).powi(2))
            .sum();
        self.mean / (alpha * (alpha + self.mean)) - curvature
    }
}

/// Moment starting values: β₀ = 1/(ID − 1), α₀ = x̄·β₀.
pub fn moment_start(mean: f64, dispersion_index: f64) -> Option<(f64, f64)> {
    (dispersion_index > 1.0 && mean > 0.0).then(|| {
        let beta = 1.0 / (dispersion_index - 1.0);
        (mean * beta, beta)
    })
}

pub fn fit_negbin(sample: &AgeSample) -> Result<NegBinModel> {
    fit_negbin_detailed(sample).map(|f| f.model)
}

pub fn fit_negbin_detailed(sample: &AgeSample) -> Result<NegBinFit> {
    let id = sample.dataset_id().to_string();
    let (Some(mean), Some(var)) = (sample.mean(), sample.variance()) else {
        return Err(Error::EmptySample(id));
    };
    if mean <= 0.0 {
        return Err(Error::DegenerateSample(id, "all ages are 0".into()));
    }
    if sample.counts().len() < 2 {
        return Err(Error::DegenerateSample(
            id,
            "a single distinct age leaves the likelihood flat".into(),
        ));
    }
    let dispersion_index = var / mean;
    let Some((alpha0, beta0)) = moment_start(mean, dispersion_index) else {
        return Err(Error::Underdispersed {
            dataset: id,
            dispersion_index,
        });
    };

    let score = ProfileScore::new(sample, mean);

    // Bracket the root: S > 0 at `lo`, S < 0 at `hi`.
    let s0 = score.value(alpha0);
    let (mut lo, mut hi) = (alpha0, alpha0);
    let mut expansions = 0;
    if s0 > 0.0 {
        while score.value(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if expansions > MAX_BRACKET_EXPANSIONS {
                return Err(no_root(&id, "score stays positive as alpha grows", hi));
            }
        }
    } else if s0 < 0.0 {
        while score.value(lo) < 0.0 {
            hi = lo;
            lo *= 0.5;
            expansions += 1;
            if expansions > MAX_BRACKET_EXPANSIONS {
                return Err(no_root(&id, "score stays negative as alpha shrinks", lo));
            }
        }
    }

    let mut u = alpha0.ln().clamp(lo.ln(), hi.ln());
    for iteration in 1..=NEGBIN_MAX_ITERATIONS {
        let alpha = u.exp();
        let s = score.value(alpha);
        if s == 0.0 || s.abs() <= SCORE_TOLERANCE {
            return finish(alpha, mean, s, iteration, alpha0, beta0);
        }
        if s > 0.0 {
            lo = lo.max(alpha);
        } else {
            hi = hi.min(alpha);
        }
        let du = alpha * score.slope(alpha);
        let mut next = u - s / du;
        if !(next.is_finite() && next > lo.ln() && next < hi.ln()) {
            next = 0.5 * (lo.ln() + hi.ln());
        }
        if (next - u).abs() <= STEP_TOLERANCE {
            let alpha = next.exp();
            return finish(alpha, mean, score.value(alpha), iteration, alpha0, beta0);
        }
        u = next;
    }
    Err(Error::Convergence {
        what: "negative binomial profile likelihood",
        iterations: NEGBIN_MAX_ITERATIONS,
        detail: format!(
            "dataset `{id}`: bracket [{lo:e}, {hi:e}], start alpha {alpha0:.6}, last score {:e}",
            score.value(u.exp())
        ),
    })
}

fn finish(
    alpha: f64,
    mean: f64,
    score: f64,
    iterations: usize,
    alpha_start: f64,
    beta_start: f64,
) -> Result<NegBinFit> {
    Ok(NegBinFit {
        model: NegBinModel::new(alpha, alpha / mean)?,
        score,
        iterations,
        alpha_start,
        beta_start,
    })
}

fn no_root(id: &str, why: &str, at: f64) -> Error {
    Error::Convergence {
        what: "negative binomial score bracketing",
        iterations: MAX_BRACKET_EXPANSIONS,
        detail: format!("dataset `{id}`: {why} (alpha = {at:e})"),
    }
}

/// A fitted model with its likelihood and AIC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFit<M> {
    pub model: M,
    pub loglik: f64,
    pub aic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preferred {
    Poisson,
    NegBin,
}

/// Both fits for one dataset and the AIC verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub dataset_id: String,
    pub n_obs: u64,
    pub poisson: ModelFit<PoissonModel>,
    pub negbin: Option<ModelFit<NegBinModel>>,
    pub negbin_skip_reason: Option<String>,
    pub preferred: Preferred,
    /// 100·(AIC_Poisson − AIC_NB)/AIC_Poisson, when the NB was fitted.
    pub aic_reduction_pct: Option<f64>,
    pub negbin_iterations: Option<usize>,
}

fn model_fit<M: CountModel + Copy>(model: M, sample: &AgeSample) -> Result<ModelFit<M>> {
    let ll = loglik(&model, sample);
    Ok(ModelFit {
        model,
        loglik: ll,
        aic: aic(ll, M::N_PARAMS)?,
    })
}

/// Fits both models. The NB is skipped, with the reason recorded, when the
/// sample is underdispersed or degenerate; other NB failures propagate.
pub fn compare_models(sample: &AgeSample, dataset_id: &str) -> Result<FitReport> {
    let poisson = model_fit(fit_poisson(sample)?, sample)?;
    let (negbin, skip, iterations) = match fit_negbin_detailed(sample) {
        Ok(fit) => (Some(model_fit(fit.model, sample)?), None, Some(fit.iterations)),
        Err(e @ (Error::Underdispersed { .. } | Error::DegenerateSample(..))) => {
            (None, Some(e.to_string()), None)
        }
        Err(e) => return Err(e),
    };
    Ok(assemble(dataset_id, sample.n_obs(), poisson, negbin, skip, iterations))
}

pub(crate) fn assemble(
    dataset_id: &str,
    n_obs: u64,
    poisson: ModelFit<PoissonModel>,
    negbin: Option<ModelFit<NegBinModel>>,
    negbin_skip_reason: Option<String>,
    negbin_iterations: Option<usize>,
) -> FitReport {
    let preferred = match &negbin {
        Some(nb) if nb.aic < poisson.aic => Preferred::NegBin,
        _ => Preferred::Poisson,
    };
    let aic_reduction_pct = negbin
        .as_ref()
        .map(|nb| 100.0 * (poisson.aic - nb.aic) / poisson.aic);
    FitReport {
        dataset_id: dataset_id.to_string(),
        n_obs,
        poisson,
        negbin,
        negbin_skip_reason,
        preferred,
        aic_reduction_pct,
        negbin_iterations,
    }
}
