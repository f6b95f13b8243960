//! Obsolescence measures on a fitted negative binomial: survival and
//! mortality (hazard) rates, VaR and TVaR percentiles, aging factors and the
//! synchronic half-life.
//!
//! Closed forms go through the special functions; each has a direct
//! summation counterpart in this module used as its oracle.

use serde::{Deserialize, Serialize};

use crate::dist::{CountModel, NegBinModel};
use crate::error::{Error, Result};
use crate::ingest::AgeSample;
use crate::specfun;

/// Relative size of the dropped tail at which pmf summations stop.
const SUM_TAIL_TOLERANCE: f64 = 1e-13;
const MAX_SUM_TERMS: u64 = 5_000_000;

/// Pr(X >= x) = I_{1/(1+β)}(x, α); exactly 1 at x = 0.
pub fn survival(model: &NegBinModel, x: u64) -> Result<f64> {
    if x == 0 {
        return Ok(1.0);
    }
    specfun::reg_inc_beta(model.ratio(), x as f64, model.alpha())
}

/// The survival closed form with the incomplete-beta arguments in the order
/// they are usually printed, I_{β/(β+1)}(α, x). This is Pr(X < x), the
/// complement of [`survival`]; kept for the verification report.
pub fn survival_printed_order(model: &NegBinModel, x: u64) -> Result<f64> {
    if x == 0 {
        return Ok(0.0);
    }
    specfun::reg_inc_beta(model.q0(), model.alpha(), x as f64)
}

/// Upper bound on pmf(k+1)/pmf(k) for every k >= `from`, or `None` while the
/// pmf may still be increasing.
fn pmf_ratio_bound(model: &NegBinModel, from: u64) -> Option<f64> {
    let k = from as f64;
    let r = model.ratio() * ((model.alpha() + k) / (k + 1.0)).max(1.0);
    (r < 1.0).then_some(r)
}

/// A tail sum Σ_{k >= start} w(k)·pmf(k) with a certified bound on what the
/// truncation dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSum {
    pub value: f64,
    pub truncation_bound: f64,
    pub terms: u64,
}

/// Σ_{k >= start} pmf(k), the survival oracle.
pub fn survival_by_sum(model: &NegBinModel, start: u64) -> TailSum {
    tail_sum(model, start, |_| 1.0, |_| 1.0)
}

/// Σ_{k >= start} (k − start)·pmf(k).
pub fn excess_by_sum(model: &NegBinModel, start: u64) -> TailSum {
    let s = start as f64;
    tail_sum(
        model,
        start,
        |k| k as f64 - s,
        // weight growth (k+1−s)/(k−s) is largest at the first k > start
        |k| if k > start { (k as f64 + 1.0 - s) / (k as f64 - s) } else { f64::INFINITY },
    )
}

fn tail_sum(
    model: &NegBinModel,
    start: u64,
    weight: impl Fn(u64) -> f64,
    weight_growth: impl Fn(u64) -> f64,
) -> TailSum {
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut k = start;
    let mut pmf = model.pmf(k);
    let q = model.ratio();
    let alpha = model.alpha();
    loop {
        let term = weight(k) * pmf;
        crate::dist::neumaier_add(&mut sum, &mut comp, term);
        let total = sum + comp;

        if let Some(r) = pmf_ratio_bound(model, k) {
            let rho = r * weight_growth(k);
            if rho < 1.0 {
                // remaining terms shrink at least geometrically by rho
                let next_term = weight(k + 1) * pmf * r;
                let bound = next_term / (1.0 - rho);
                if bound <= SUM_TAIL_TOLERANCE * total.abs() || bound == 0.0 {
                    return TailSum {
                        value: total,
                        truncation_bound: bound,
                        terms: k - start + 1,
                    };
                }
            }
        }
        if k - start >= MAX_SUM_TERMS {
            return TailSum {
                value: total,
                truncation_bound: f64::INFINITY,
                terms: k - start + 1,
            };
        }
        pmf *= q * (alpha + k as f64) / (k as f64 + 1.0);
        k += 1;
        if pmf == 0.0 {
            return TailSum {
                value: total,
                truncation_bound: 0.0,
                terms: k - start,
            };
        }
    }
}

/// Largest age whose survival is a positive normal f64.
pub fn largest_representable_age(model: &NegBinModel) -> u64 {
    let ok = |x: u64| survival(model, x).is_ok_and(|s| s >= f64::MIN_POSITIVE);
    let mut lo = 0u64;
    let mut hi = 1u64;
    while ok(hi) {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi == u64::MAX {
            return lo;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Hazard λ(x) = Pr(X = x) / Pr(X >= x).
pub fn mortality(model: &NegBinModel, x: u64) -> Result<f64> {
    let r = survival(model, x)?;
    if r.is_nan() || r < f64::MIN_POSITIVE {
        return Err(Error::TailUnderflow {
            age: x,
            largest_valid: largest_representable_age(model),
        });
    }
    Ok((model.ln_pmf(x) - r.ln()).exp().min(1.0))
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain("percentile", format!("p = {p} must lie in (0, 1)")))
    }
}

/// Smallest age x with Pr(X > x) <= p.
pub fn var_p(model: &NegBinModel, p: f64) -> Result<u64> {
    check_probability(p)?;
    let exceeds = |x: u64| -> Result<bool> { Ok(survival(model, x + 1)? > p) };
    if !exceeds(0)? {
        return Ok(0);
    }
    let mut lo = 0u64; // exceeds(lo) holds
    let mut hi = model.mean().ceil().max(1.0) as u64;
    while exceeds(hi)? {
        lo = hi;
        hi = hi.checked_mul(2).ok_or_else(|| {
            Error::domain("var_p", format!("percentile for p = {p} overflows"))
        })?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if exceeds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// TVaR at level p, with every route computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvarEstimate {
    pub p: f64,
    pub var: u64,
    /// (x_p+1)·₂F₁(1, x_p+1+α; 1+x_p; β/(β+1)) / ₂F₁(1, x_p+1+α; 2+x_p; β/(β+1)).
    /// This is the reported TVaR; absent if a series failed.
    pub hypergeometric: Option<f64>,
    /// E[X | X > x_p] by summation.
    pub conditional_mean: f64,
    /// E[X | X > x_p] in closed form, the same ratio at z = 1/(β+1).
    pub conditional_mean_closed_form: Option<f64>,
    /// x_p + Σ_{x >= x_p} (x − x_p)·Pr(X = x) / Pr(X >= x_p), i.e. E[X | X >= x_p].
    pub summation_at_or_above: f64,
    /// Bound on the truncation error of the summations, in years.
    pub truncation_bound: f64,
}

impl TvarEstimate {
    pub fn reported(&self) -> f64 {
        self.hypergeometric.unwrap_or(self.conditional_mean)
    }

    /// |closed form − summation| for the conditional mean.
    pub fn conditional_mean_discrepancy(&self) -> Option<f64> {
        self.conditional_mean_closed_form
            .map(|c| (c - self.conditional_mean).abs())
    }
}

fn hypergeometric_ratio(model: &NegBinModel, var: u64, z: f64) -> Result<f64> {
    let x = var as f64;
    let b = x + 1.0 + model.alpha();
    let num = specfun::gauss_2f1(1.0, b, 1.0 + x, z)?;
    let den = specfun::gauss_2f1(1.0, b, 2.0 + x, z)?;
    Ok((x + 1.0) * num / den)
}

/// Conditional expectation from `start`: start + Σ_{k >= start}(k − start)pmf / Pr(X >= start).
fn conditional_from(model: &NegBinModel, start: u64) -> Result<(f64, f64)> {
    let mass = survival(model, start)?;
    if mass.is_nan() || mass < f64::MIN_POSITIVE {
        return Err(Error::TailUnderflow {
            age: start,
            largest_valid: largest_representable_age(model),
        });
    }
    let excess = excess_by_sum(model, start);
    Ok((
        start as f64 + excess.value / mass,
        excess.truncation_bound / mass,
    ))
}

pub fn tvar_p(model: &NegBinModel, p: f64) -> Result<TvarEstimate> {
    let var = var_p(model, p)?;
    let (summation_at_or_above, bound_at) = conditional_from(model, var)?;
    let (conditional_mean, bound_above) = conditional_from(model, var + 1)?;
    Ok(TvarEstimate {
        p,
        var,
        hypergeometric: hypergeometric_ratio(model, var, model.q0()).ok(),
        conditional_mean,
        conditional_mean_closed_form: hypergeometric_ratio(model, var, model.ratio()).ok(),
        summation_at_or_above,
        truncation_bound: bound_at.max(bound_above),
    })
}

/// a(t) = β/(β+1) · (1 + (α−1)/(t+1)).
pub fn obsolescence_factor(model: &NegBinModel, t: u64) -> f64 {
    model.q0() * (1.0 + (model.alpha() - 1.0) / (t as f64 + 1.0))
}

/// c(t) = θ·exp(−θt), citations received at time t under exponential aging.
pub fn citation_intensity(theta: f64, t: f64) -> f64 {
    theta * (-theta * t).exp()
}

/// Constant aging factor exp(−θ) of the exponential model.
pub fn exp_aging_factor(theta: f64) -> Result<f64> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::domain("exp_aging_factor", format!("theta = {theta} must be > 0")));
    }
    Ok((-theta).exp())
}

/// c(t+1)/c(t) evaluated directly.
pub fn aging_ratio(theta: f64, t: f64) -> f64 {
    citation_intensity(theta, t + 1.0) / citation_intensity(theta, t)
}

/// Median cited-reference age.
pub fn half_life(sample: &AgeSample) -> Result<f64> {
    sample
        .median()
        .ok_or_else(|| Error::EmptySample(sample.dataset_id().to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub dataset_id: String,
    pub ages: Vec<u64>,
    pub survival: Vec<f64>,
    pub mortality: Vec<f64>,
}

pub fn tail_report(dataset_id: &str, model: &NegBinModel, ages: &[u64]) -> Result<TailReport> {
    let survival = ages
        .iter()
        .map(|&x| survival(model, x))
        .collect::<Result<Vec<_>>>()?;
    let mortality = ages
        .iter()
        .map(|&x| mortality(model, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(TailReport {
        dataset_id: dataset_id.to_string(),
        ages: ages.to_vec(),
        survival,
        mortality,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub dataset_id: String,
    pub probabilities: Vec<f64>,
    pub var: Vec<u64>,
    /// Reported TVaR (hypergeometric ratio form).
    pub tvar: Vec<f64>,
    /// E[X | X > VaR] by summation.
    pub tvar_conditional: Vec<f64>,
}

pub fn risk_report(dataset_id: &str, model: &NegBinModel, probabilities: &[f64]) -> Result<RiskReport> {
    let estimates = probabilities
        .iter()
        .map(|&p| tvar_p(model, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(RiskReport {
        dataset_id: dataset_id.to_string(),
        probabilities: probabilities.to_vec(),
        var: estimates.iter().map(|e| e.var).collect(),
        tvar: estimates.iter().map(TvarEstimate::reported).collect(),
        tvar_conditional: estimates.iter().map(|e| e.conditional_mean).collect(),
    })
}
